//! Dataset schema, CSV persistence, stratified folds and feature views.

mod csvio;
mod features;
mod folds;

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csvio::{read_csv, read_csv_from, write_csv, write_csv_to};
pub use features::{feature_view, project, FeatureSet, FeatureView, Value};

#[cfg(test)]
pub(crate) use csvio::tests::sample_record;
pub use folds::{stratified_holdout, stratified_kfold, FoldPlan};

/// Ordered credential levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Education {
    HighSchool,
    University,
    MSc,
    PhD,
}

impl Education {
    pub const ALL: [Education; 4] = [
        Education::HighSchool,
        Education::University,
        Education::MSc,
        Education::PhD,
    ];

    pub fn level(self) -> usize {
        self as usize
    }

    /// One level up, capped at PhD.
    pub fn upgraded(self) -> Education {
        Education::ALL[(self.level() + 1).min(3)]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Education::HighSchool => "HighSchool",
            Education::University => "University",
            Education::MSc => "MSc",
            Education::PhD => "PhD",
        }
    }
}

impl fmt::Display for Education {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Education {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Education::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown education level `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmploymentStatus {
    Employed,
    Unemployed,
    #[serde(rename = "Self-Employed")]
    SelfEmployed,
}

impl EmploymentStatus {
    pub const ALL: [EmploymentStatus; 3] = [
        EmploymentStatus::Employed,
        EmploymentStatus::Unemployed,
        EmploymentStatus::SelfEmployed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmploymentStatus::Employed => "Employed",
            EmploymentStatus::Unemployed => "Unemployed",
            EmploymentStatus::SelfEmployed => "Self-Employed",
        }
    }
}

impl fmt::Display for EmploymentStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmploymentStatus {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        EmploymentStatus::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown employment status `{s}`"))
    }
}

/// Storage kind of a column, which drives encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Boolean,
    Date,
}

/// The published columns, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Id,
    Age,
    Education,
    EmploymentStatus,
    Job,
    MonthlyIncome,
    PhoneModel,
    PhonePurchaseDate,
    OwnsCar,
    CarBrand,
    CarPurchaseDate,
    HomeDistrict,
    OwnsHome,
    MonthlyRent,
    OwnsCreditCard,
    MonthlySubscriptions,
    OnlineShoppingFrequency,
    SocialMediaActive,
    #[serde(rename = "delinquency_FL")]
    DelinquencyFl,
}

impl Column {
    pub const ALL: [Column; 19] = [
        Column::Id,
        Column::Age,
        Column::Education,
        Column::EmploymentStatus,
        Column::Job,
        Column::MonthlyIncome,
        Column::PhoneModel,
        Column::PhonePurchaseDate,
        Column::OwnsCar,
        Column::CarBrand,
        Column::CarPurchaseDate,
        Column::HomeDistrict,
        Column::OwnsHome,
        Column::MonthlyRent,
        Column::OwnsCreditCard,
        Column::MonthlySubscriptions,
        Column::OnlineShoppingFrequency,
        Column::SocialMediaActive,
        Column::DelinquencyFl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Id => "id",
            Column::Age => "age",
            Column::Education => "education",
            Column::EmploymentStatus => "employment_status",
            Column::Job => "job",
            Column::MonthlyIncome => "monthly_income",
            Column::PhoneModel => "phone_model",
            Column::PhonePurchaseDate => "phone_purchase_date",
            Column::OwnsCar => "owns_car",
            Column::CarBrand => "car_brand",
            Column::CarPurchaseDate => "car_purchase_date",
            Column::HomeDistrict => "home_district",
            Column::OwnsHome => "owns_home",
            Column::MonthlyRent => "monthly_rent",
            Column::OwnsCreditCard => "owns_credit_card",
            Column::MonthlySubscriptions => "monthly_subscriptions",
            Column::OnlineShoppingFrequency => "online_shopping_frequency",
            Column::SocialMediaActive => "social_media_active",
            Column::DelinquencyFl => "delinquency_FL",
        }
    }

    pub fn from_name(name: &str) -> Option<Column> {
        Column::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn kind(self) -> ColumnKind {
        match self {
            Column::Id
            | Column::Age
            | Column::MonthlyIncome
            | Column::MonthlyRent
            | Column::MonthlySubscriptions
            | Column::OnlineShoppingFrequency
            | Column::DelinquencyFl => ColumnKind::Numeric,
            Column::Education
            | Column::EmploymentStatus
            | Column::Job
            | Column::PhoneModel
            | Column::CarBrand
            | Column::HomeDistrict => ColumnKind::Categorical,
            Column::OwnsCar
            | Column::OwnsHome
            | Column::OwnsCreditCard
            | Column::SocialMediaActive => ColumnKind::Boolean,
            Column::PhonePurchaseDate | Column::CarPurchaseDate => ColumnKind::Date,
        }
    }

    pub fn is_feature(self) -> bool {
        !matches!(self, Column::Id | Column::DelinquencyFl)
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One published row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub age: u32,
    pub education: Education,
    pub employment_status: EmploymentStatus,
    pub job: String,
    pub monthly_income: f64,
    pub phone_model: String,
    pub phone_purchase_date: NaiveDate,
    pub owns_car: bool,
    pub car_brand: Option<String>,
    pub car_purchase_date: Option<NaiveDate>,
    pub home_district: String,
    pub owns_home: bool,
    pub monthly_rent: f64,
    pub owns_credit_card: bool,
    pub monthly_subscriptions: f64,
    pub online_shopping_frequency: u32,
    pub social_media_active: bool,
    #[serde(rename = "delinquency_FL")]
    pub delinquency_fl: u8,
}

impl Record {
    pub fn label(&self) -> u8 {
        self.delinquency_fl
    }

    /// Violations of the per-row schema invariants.
    pub fn schema_violations(&self, reference_date: NaiveDate) -> Vec<String> {
        let mut out = Vec::new();
        if !(18..=75).contains(&self.age) {
            out.push(format!("age {} outside 18..=75", self.age));
        }
        if self.owns_home && self.monthly_rent != 0.0 {
            out.push(format!(
                "owns_home is true but monthly_rent is {}",
                self.monthly_rent
            ));
        }
        if !self.owns_car && (self.car_brand.is_some() || self.car_purchase_date.is_some()) {
            out.push("owns_car is false but car fields are present".to_string());
        }
        if self.owns_car && (self.car_brand.is_none() || self.car_purchase_date.is_none()) {
            out.push("owns_car is true but car fields are missing".to_string());
        }
        if self.phone_purchase_date > reference_date {
            out.push("phone_purchase_date after reference date".to_string());
        }
        if matches!(self.car_purchase_date, Some(d) if d > reference_date) {
            out.push("car_purchase_date after reference date".to_string());
        }
        for (name, v) in [
            ("monthly_income", self.monthly_income),
            ("monthly_rent", self.monthly_rent),
            ("monthly_subscriptions", self.monthly_subscriptions),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                out.push(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.delinquency_fl > 1 {
            out.push(format!("delinquency_FL must be 0/1, got {}", self.delinquency_fl));
        }
        out
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Record>,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new(rows: Vec<Record>, provenance: Option<Provenance>) -> Result<Self> {
        let ds = Dataset { rows, provenance };
        ds.check_ids()?;
        Ok(ds)
    }

    /// The column order of the published table.
    pub fn schema() -> &'static [Column; 19] {
        &Column::ALL
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(Record::label).collect()
    }

    pub fn without_provenance(&self) -> Dataset {
        Dataset {
            rows: self.rows.clone(),
            provenance: None,
        }
    }

    /// Ids must be unique and contiguous from 1.
    pub fn check_ids(&self) -> Result<()> {
        let mut seen = vec![false; self.rows.len()];
        for r in &self.rows {
            let idx = r.id as usize;
            if r.id == 0 || idx > self.rows.len() {
                return Err(Error::Schema(format!(
                    "id {} outside contiguous range 1..={}",
                    r.id,
                    self.rows.len()
                )));
            }
            if seen[idx - 1] {
                return Err(Error::DuplicateId(r.id));
            }
            seen[idx - 1] = true;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_order_matches_published_table() {
        let names: Vec<_> = Column::ALL.iter().map(|c| c.name()).collect();
        assert_eq!(names[0], "id");
        assert_eq!(names[13], "monthly_rent");
        assert_eq!(names[18], "delinquency_FL");
        assert_eq!(Column::ALL.iter().filter(|c| c.is_feature()).count(), 17);
    }

    #[test]
    fn education_upgrade_caps_at_phd() {
        assert_eq!(Education::HighSchool.upgraded(), Education::University);
        assert_eq!(Education::PhD.upgraded(), Education::PhD);
        assert!(Education::MSc > Education::University);
    }
}

/// Whole calendar months from `from` to `to` (negative when `from` is later).
pub fn whole_months_between(from: NaiveDate, to: NaiveDate) -> i64 {
    let mut m = (i64::from(to.year()) - i64::from(from.year())) * 12
        + (i64::from(to.month()) - i64::from(from.month()));
    if m > 0 && to.day() < from.day() && !is_clamped_month_end(from, to) {
        m -= 1;
    } else if m < 0 && to.day() > from.day() {
        m += 1;
    }
    m
}

// `to` is the last day of its month and `from` falls on a later day number,
// e.g. 2024-01-31 -> 2024-02-29 counts as one full month.
fn is_clamped_month_end(_from: NaiveDate, to: NaiveDate) -> bool {
    to.succ_opt().is_none_or(|next| next.month0() != to.month0())
}

#[cfg(test)]
mod month_tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn whole_months() {
        assert_eq!(whole_months_between(d(2025, 3, 31), d(2025, 3, 31)), 0);
        assert_eq!(whole_months_between(d(2023, 9, 30), d(2025, 3, 31)), 18);
        assert_eq!(whole_months_between(d(2025, 2, 28), d(2025, 3, 31)), 1);
        assert_eq!(whole_months_between(d(2025, 3, 15), d(2025, 4, 14)), 0);
        assert_eq!(whole_months_between(d(2025, 3, 15), d(2025, 4, 15)), 1);
        assert_eq!(whole_months_between(d(2024, 1, 31), d(2024, 2, 29)), 1);
    }
}
