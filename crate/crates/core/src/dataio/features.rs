use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Column, ColumnKind, Dataset, Record};
use crate::error::{Error, Result};

/// A named subset of feature columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub name: String,
    pub columns: Vec<Column>,
}

impl FeatureSet {
    pub const DEMOGRAPHIC: [Column; 7] = [
        Column::Age,
        Column::Education,
        Column::EmploymentStatus,
        Column::Job,
        Column::MonthlyIncome,
        Column::HomeDistrict,
        Column::OwnsHome,
    ];

    pub const ALTERNATIVE: [Column; 10] = [
        Column::PhoneModel,
        Column::PhonePurchaseDate,
        Column::OwnsCar,
        Column::CarBrand,
        Column::CarPurchaseDate,
        Column::OwnsCreditCard,
        Column::MonthlySubscriptions,
        Column::OnlineShoppingFrequency,
        Column::SocialMediaActive,
        Column::MonthlyRent,
    ];

    pub fn demo() -> Self {
        FeatureSet {
            name: "Demo".into(),
            columns: Self::DEMOGRAPHIC.to_vec(),
        }
    }

    pub fn full() -> Self {
        let mut columns = Self::DEMOGRAPHIC.to_vec();
        columns.extend_from_slice(&Self::ALTERNATIVE);
        FeatureSet {
            name: "Full".into(),
            columns,
        }
    }

    /// A custom set from column names. Rejects unknown names, id/label and
    /// the empty set.
    pub fn custom(name: &str, columns: &[&str]) -> Result<Self> {
        let cols = columns
            .iter()
            .map(|c| {
                Column::from_name(c).ok_or_else(|| Error::Schema(format!("unknown column `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let fs = FeatureSet {
            name: name.to_string(),
            columns: cols,
        };
        fs.validate()?;
        Ok(fs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::invalid(format!("feature set `{}` is empty", self.name)));
        }
        if let Some(c) = self.columns.iter().find(|c| !c.is_feature()) {
            return Err(Error::invalid(format!(
                "column `{c}` cannot be used as a feature"
            )));
        }
        let mut sorted = self.columns.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.columns.len() {
            return Err(Error::invalid(format!(
                "feature set `{}` repeats a column",
                self.name
            )));
        }
        Ok(())
    }

    pub fn contains(&self, c: Column) -> bool {
        self.columns.contains(&c)
    }
}

/// A single typed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Date(Option<NaiveDate>),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl Record {
    pub fn get(&self, c: Column) -> Value {
        match c {
            Column::Id => Value::Num(self.id as f64),
            Column::Age => Value::Num(f64::from(self.age)),
            Column::Education => Value::Cat(self.education.to_string()),
            Column::EmploymentStatus => Value::Cat(self.employment_status.to_string()),
            Column::Job => Value::Cat(self.job.clone()),
            Column::MonthlyIncome => Value::Num(self.monthly_income),
            Column::PhoneModel => Value::Cat(self.phone_model.clone()),
            Column::PhonePurchaseDate => Value::Date(Some(self.phone_purchase_date)),
            Column::OwnsCar => Value::Bool(self.owns_car),
            Column::CarBrand => Value::Cat(self.car_brand.clone().unwrap_or_default()),
            Column::CarPurchaseDate => Value::Date(self.car_purchase_date),
            Column::HomeDistrict => Value::Cat(self.home_district.clone()),
            Column::OwnsHome => Value::Bool(self.owns_home),
            Column::MonthlyRent => Value::Num(self.monthly_rent),
            Column::OwnsCreditCard => Value::Bool(self.owns_credit_card),
            Column::MonthlySubscriptions => Value::Num(self.monthly_subscriptions),
            Column::OnlineShoppingFrequency => {
                Value::Num(f64::from(self.online_shopping_frequency))
            }
            Column::SocialMediaActive => Value::Bool(self.social_media_active),
            Column::DelinquencyFl => Value::Num(f64::from(self.delinquency_fl)),
        }
    }

    /// Overwrites one feature cell. Type mismatches are rejected.
    pub fn set(&mut self, c: Column, v: Value) -> Result<()> {
        let bad = || Error::invalid(format!("value {v:?} does not fit column `{c}`"));
        match (c, &v) {
            (Column::Age, Value::Num(x)) => self.age = *x as u32,
            (Column::Education, Value::Cat(s)) => self.education = s.parse().map_err(|_| bad())?,
            (Column::EmploymentStatus, Value::Cat(s)) => {
                self.employment_status = s.parse().map_err(|_| bad())?
            }
            (Column::Job, Value::Cat(s)) => self.job = s.clone(),
            (Column::MonthlyIncome, Value::Num(x)) => self.monthly_income = *x,
            (Column::PhoneModel, Value::Cat(s)) => self.phone_model = s.clone(),
            (Column::PhonePurchaseDate, Value::Date(Some(d))) => self.phone_purchase_date = *d,
            (Column::OwnsCar, Value::Bool(b)) => self.owns_car = *b,
            (Column::CarBrand, Value::Cat(s)) => {
                self.car_brand = (!s.is_empty()).then(|| s.clone())
            }
            (Column::CarPurchaseDate, Value::Date(d)) => self.car_purchase_date = *d,
            (Column::HomeDistrict, Value::Cat(s)) => self.home_district = s.clone(),
            (Column::OwnsHome, Value::Bool(b)) => self.owns_home = *b,
            (Column::MonthlyRent, Value::Num(x)) => self.monthly_rent = *x,
            (Column::OwnsCreditCard, Value::Bool(b)) => self.owns_credit_card = *b,
            (Column::MonthlySubscriptions, Value::Num(x)) => self.monthly_subscriptions = *x,
            (Column::OnlineShoppingFrequency, Value::Num(x)) => {
                self.online_shopping_frequency = x.round().max(0.0) as u32
            }
            (Column::SocialMediaActive, Value::Bool(b)) => self.social_media_active = *b,
            _ => return Err(bad()),
        }
        Ok(())
    }
}

/// Rows projected onto a feature set, labels kept aside.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureView {
    pub feature_set: FeatureSet,
    pub rows: Vec<Vec<Value>>,
    pub labels: Vec<u8>,
}

impl FeatureView {
    pub fn n_features(&self) -> usize {
        self.feature_set.columns.len()
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.feature_set.columns.iter().map(|c| c.kind()).collect()
    }

    /// Sub-view over the given row positions, in that order.
    pub fn select(&self, idx: &[usize]) -> FeatureView {
        FeatureView {
            feature_set: self.feature_set.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

pub fn project(record: &Record, fs: &FeatureSet) -> Vec<Value> {
    fs.columns.iter().map(|&c| record.get(c)).collect()
}

pub fn feature_view(dataset: &Dataset, fs: &FeatureSet) -> Result<FeatureView> {
    fs.validate()?;
    Ok(FeatureView {
        feature_set: fs.clone(),
        rows: dataset.rows.iter().map(|r| project(r, fs)).collect(),
        labels: dataset.labels(),
    })
}
