use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{Education, EmploymentStatus};
use crate::error::{Error, Result};

/// The marginal configuration shipped with the crate.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../config/default.toml");

/// Distribution of an age in whole months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MonthsDist {
    Fixed { months: u32 },
    Uniform { min: u32, max: u32 },
}

impl MonthsDist {
    pub fn mean(&self) -> f64 {
        match *self {
            MonthsDist::Fixed { months } => f64::from(months),
            MonthsDist::Uniform { min, max } => (f64::from(min) + f64::from(max)) / 2.0,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if let MonthsDist::Uniform { min, max } = *self {
            if min > max {
                return Err(Error::Config(format!("{what}: month range min > max")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusWeights {
    pub employed: f64,
    pub unemployed: f64,
    pub self_employed: f64,
}

impl StatusWeights {
    pub fn as_array(&self) -> [(EmploymentStatus, f64); 3] {
        [
            (EmploymentStatus::Employed, self.employed),
            (EmploymentStatus::Unemployed, self.unemployed),
            (EmploymentStatus::SelfEmployed, self.self_employed),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupationSpec {
    pub title: String,
    pub weight: f64,
    /// Monthly income band `[min, max]` in TRY.
    pub income: [f64; 2],
    pub min_education: Education,
    #[serde(default = "default_min_age")]
    pub min_age: u32,
    pub status_weights: StatusWeights,
}

fn default_tier_weight() -> f64 {
    1.0
}

fn default_min_age() -> u32 {
    18
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeBand {
    pub min: u32,
    pub max: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceTier {
    pub name: String,
    /// Eligible incomes are `income_min <= x < income_max`; no max means open-ended.
    pub income_min: f64,
    #[serde(default)]
    pub income_max: Option<f64>,
    /// Relative weight when several tiers admit the same income.
    #[serde(default = "default_tier_weight")]
    pub weight: f64,
    pub models: Vec<String>,
    pub phone_age: MonthsDist,
}

impl DeviceTier {
    pub fn admits(&self, income: f64) -> bool {
        income >= self.income_min && self.income_max.is_none_or(|m| income < m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarTierPool {
    pub tier: String,
    pub weight: f64,
    pub brands: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarRule {
    pub income_threshold: f64,
    pub ownership_prob: f64,
    pub tiers: Vec<CarTierPool>,
    pub car_age: MonthsDist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct District {
    pub name: String,
    pub rent_per_m2: f64,
    /// 1 = lowest-income district, D = highest.
    pub income_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncomeStep {
    pub income_from: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorBand {
    pub income_from: f64,
    pub subscriptions_mean: f64,
    pub subscriptions_cv: f64,
    pub shopping_mean: f64,
    pub shopping_cv: f64,
    pub ride_hailing_mean: f64,
    pub social_media_prob: f64,
    pub credit_card_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanityRules {
    pub low_income_multiplier: f64,
    pub luxury_car_tier: String,
    pub flagship_device_tier: String,
    pub new_phone_months: u32,
    pub max_rent_ratio: f64,
    pub max_subscription_ratio: f64,
}

impl Default for SanityRules {
    fn default() -> Self {
        SanityRules {
            low_income_multiplier: 1.2,
            luxury_car_tier: "luxury".into(),
            flagship_device_tier: "flagship".into(),
            new_phone_months: 12,
            max_rent_ratio: 0.9,
            max_subscription_ratio: 0.3,
        }
    }
}

/// R1: employment volatility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmploymentRule {
    pub unemployed_points: u32,
    pub self_employed_points: u32,
}

/// R2: recent flagship upgrade on a below-median income.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceRule {
    pub max_phone_age_months: u32,
    pub min_device_tier: String,
    pub points: u32,
}

/// R3: rent burden, with an extra step for severe burden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RentRule {
    pub ratio: f64,
    pub points: u32,
    pub severe_ratio: f64,
    pub severe_points: u32,
}

/// R4: heavy online shopping on a below-median income.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShoppingRule {
    pub frequency_p90: f64,
    pub points: u32,
}

/// R5 (subscription burden), R6 (no assets), R7 (young self-employed) share
/// simple shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioRule {
    pub ratio: f64,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsRule {
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YoungSelfEmployedRule {
    pub max_age: u32,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRuleSet {
    pub r1_employment: EmploymentRule,
    pub r2_device: DeviceRule,
    pub r3_rent: RentRule,
    pub r4_shopping: ShoppingRule,
    pub r5_subscriptions: RatioRule,
    pub r6_no_assets: PointsRule,
    pub r7_young_self_employed: YoungSelfEmployedRule,
    pub noise_flip_prob: f64,
    /// Overwritten by calibration during generation.
    #[serde(default = "default_threshold")]
    pub calibrated_threshold: u32,
}

fn default_threshold() -> u32 {
    1
}

impl LabelRuleSet {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.1).contains(&self.noise_flip_prob) {
            return Err(Error::Config("noise_flip_prob must lie in [0, 0.1]".into()));
        }
        if self.calibrated_threshold < 1 {
            return Err(Error::Config("calibrated_threshold must be >= 1".into()));
        }
        let r3 = &self.r3_rent;
        if !(r3.ratio >= 0.0 && r3.severe_ratio >= r3.ratio) {
            return Err(Error::Config("rent rule ratios must satisfy 0 <= ratio <= severe_ratio".into()));
        }
        if self.r5_subscriptions.ratio < 0.0 || self.r4_shopping.frequency_p90 < 0.0 {
            return Err(Error::Config("rule thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalConfig {
    pub reference_date: NaiveDate,
    pub min_wage: f64,
    pub education_upgrade_prob: f64,
    pub target_prevalence: f64,
    #[serde(default = "default_rank_jitter")]
    pub district_rank_jitter: usize,
    #[serde(default = "default_rent_jitter")]
    pub rent_jitter: f64,
    /// Dwelling area in m² for household sizes 1..=5.
    #[serde(default = "default_dwelling_area")]
    pub dwelling_area_m2: [f64; 5],
    #[serde(default = "default_calibration_sample")]
    pub calibration_sample: usize,
    pub age_bands: Vec<AgeBand>,
    pub occupations: Vec<OccupationSpec>,
    pub device_tiers: Vec<DeviceTier>,
    pub car_rules: Vec<CarRule>,
    pub districts: Vec<District>,
    pub home_ownership: Vec<IncomeStep>,
    pub behavior_bands: Vec<BehaviorBand>,
    #[serde(default)]
    pub sanity: SanityRules,
    pub label_rules: LabelRuleSet,
}

fn default_rank_jitter() -> usize {
    2
}
fn default_rent_jitter() -> f64 {
    0.1
}
fn default_dwelling_area() -> [f64; 5] {
    [40.0, 60.0, 75.0, 90.0, 110.0]
}
fn default_calibration_sample() -> usize {
    20_000
}

fn check_name(what: &str, name: &str) -> Result<()> {
    if name.is_empty() || name.contains(',') || name.contains('"') || name.contains('\n') {
        return Err(Error::Config(format!(
            "{what} name `{name}` must be non-empty and free of commas, quotes and newlines"
        )));
    }
    Ok(())
}

fn check_weights(what: &str, weights: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut any_positive = false;
    for w in weights {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::Config(format!("{what}: weight {w} must be finite and >= 0")));
        }
        any_positive |= w > 0.0;
    }
    if !any_positive {
        return Err(Error::Config(format!("{what}: at least one weight must be > 0")));
    }
    Ok(())
}

fn check_prob(what: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{what}: probability {p} outside [0, 1]")));
    }
    Ok(())
}

impl MarginalConfig {
    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG_TOML).expect("shipped default config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: MarginalConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 over the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes to JSON");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn occupation(&self, title: &str) -> Result<&OccupationSpec> {
        self.occupations
            .iter()
            .find(|o| o.title == title)
            .ok_or_else(|| Error::Config(format!("unknown occupation `{title}`")))
    }

    pub fn device_tier_index(&self, name: &str) -> Result<usize> {
        self.device_tiers
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Config(format!("unknown device tier `{name}`")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_wage.is_finite() && self.min_wage > 0.0) {
            return Err(Error::Config("min_wage must be positive".into()));
        }
        check_prob("education_upgrade_prob", self.education_upgrade_prob)?;
        if !(self.target_prevalence > 0.0 && self.target_prevalence <= 0.5) {
            return Err(Error::Config("target_prevalence must lie in (0, 0.5]".into()));
        }
        if !(0.0..1.0).contains(&self.rent_jitter) {
            return Err(Error::Config("rent_jitter must lie in [0, 1)".into()));
        }
        if self.dwelling_area_m2.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Config("dwelling areas must be positive".into()));
        }
        if self.calibration_sample < 1000 {
            return Err(Error::Config("calibration_sample must be >= 1000".into()));
        }

        if self.age_bands.is_empty() {
            return Err(Error::Config("age_bands must not be empty".into()));
        }
        check_weights("age_bands", self.age_bands.iter().map(|b| b.weight))?;
        for b in &self.age_bands {
            if b.min > b.max || b.min < 18 || b.max > 75 {
                return Err(Error::Config(format!(
                    "age band [{}, {}] must lie within 18..=75",
                    b.min, b.max
                )));
            }
        }

        if self.occupations.is_empty() {
            return Err(Error::Config("occupations must not be empty".into()));
        }
        check_weights("occupations", self.occupations.iter().map(|o| o.weight))?;
        let mut titles = HashSet::new();
        for o in &self.occupations {
            check_name("occupation", &o.title)?;
            if !titles.insert(o.title.as_str()) {
                return Err(Error::Config(format!("duplicate occupation `{}`", o.title)));
            }
            let [lo, hi] = o.income;
            if !(lo <= hi) {
                return Err(Error::Config(format!("occupation `{}`: income min > max", o.title)));
            }
            if lo < self.min_wage * 0.5 {
                return Err(Error::Config(format!(
                    "occupation `{}`: income min {lo} below half the minimum wage",
                    o.title
                )));
            }
            check_weights(
                &format!("occupation `{}` status weights", o.title),
                o.status_weights.as_array().map(|(_, w)| w),
            )?;
            if !(18..=75).contains(&o.min_age) {
                return Err(Error::Config(format!("occupation `{}`: min_age outside 18..=75", o.title)));
            }
            if !self.age_bands.iter().any(|b| b.max >= o.min_age && b.weight > 0.0) {
                return Err(Error::Config(format!(
                    "occupation `{}`: no age band reaches min_age {}",
                    o.title, o.min_age
                )));
            }
        }

        self.validate_devices()?;
        self.validate_cars()?;

        if self.districts.is_empty() {
            return Err(Error::Config("districts must not be empty".into()));
        }
        let mut ranks: Vec<usize> = self.districts.iter().map(|d| d.income_rank).collect();
        ranks.sort_unstable();
        if ranks != (1..=self.districts.len()).collect::<Vec<_>>() {
            return Err(Error::Config(
                "district income ranks must be a permutation of 1..=D".into(),
            ));
        }
        for d in &self.districts {
            check_name("district", &d.name)?;
            if !(d.rent_per_m2.is_finite() && d.rent_per_m2 >= 0.0) {
                return Err(Error::Config(format!("district `{}`: bad rent", d.name)));
            }
        }

        check_steps("home_ownership", self.home_ownership.iter().map(|s| s.income_from))?;
        for s in &self.home_ownership {
            check_prob("home_ownership", s.prob)?;
        }
        check_steps("behavior_bands", self.behavior_bands.iter().map(|b| b.income_from))?;
        for b in &self.behavior_bands {
            for (what, v) in [
                ("subscriptions_mean", b.subscriptions_mean),
                ("subscriptions_cv", b.subscriptions_cv),
                ("shopping_mean", b.shopping_mean),
                ("shopping_cv", b.shopping_cv),
                ("ride_hailing_mean", b.ride_hailing_mean),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Config(format!("behavior band: {what} must be >= 0")));
                }
            }
            check_prob("social_media_prob", b.social_media_prob)?;
            check_prob("credit_card_prob", b.credit_card_prob)?;
        }

        let s = &self.sanity;
        self.device_tier_index(&s.flagship_device_tier)?;
        if !self.car_tier_names().contains(&s.luxury_car_tier.as_str()) {
            return Err(Error::Config(format!("unknown car tier `{}`", s.luxury_car_tier)));
        }
        self.device_tier_index(&self.label_rules.r2_device.min_device_tier)?;
        self.label_rules.validate()
    }

    fn validate_devices(&self) -> Result<()> {
        if self.device_tiers.is_empty() {
            return Err(Error::Config("device_tiers must not be empty".into()));
        }
        let mut names = HashSet::new();
        for t in &self.device_tiers {
            check_name("device tier", &t.name)?;
            if !names.insert(t.name.as_str()) {
                return Err(Error::Config(format!("duplicate device tier `{}`", t.name)));
            }
            if !(t.weight.is_finite() && t.weight > 0.0) {
                return Err(Error::Config(format!("device tier `{}`: weight must be > 0", t.name)));
            }
            if t.models.is_empty() {
                return Err(Error::Config(format!("device tier `{}` has no models", t.name)));
            }
            for m in &t.models {
                check_name("phone model", m)?;
            }
            if matches!(t.income_max, Some(m) if m <= t.income_min) {
                return Err(Error::Config(format!("device tier `{}`: empty income band", t.name)));
            }
            t.phone_age.validate(&t.name)?;
        }
        // Every income at or above the lowest boundary must be admitted by some tier.
        let mut points: Vec<f64> = self.device_tiers.iter().map(|t| t.income_min).collect();
        points.extend(self.device_tiers.iter().filter_map(|t| t.income_max));
        for p in points {
            let floor = self
                .device_tiers
                .iter()
                .map(|t| t.income_min)
                .fold(f64::INFINITY, f64::min);
            if p >= floor && !self.device_tiers.iter().any(|t| t.admits(p)) {
                return Err(Error::Config(format!("device tiers leave income {p} uncovered")));
            }
        }
        Ok(())
    }

    fn validate_cars(&self) -> Result<()> {
        check_steps("car_rules", self.car_rules.iter().map(|r| r.income_threshold))?;
        for r in &self.car_rules {
            check_prob("car ownership_prob", r.ownership_prob)?;
            r.car_age.validate("car_age")?;
            if r.ownership_prob > 0.0 {
                check_weights("car tier pool", r.tiers.iter().map(|t| t.weight))?;
            }
            for t in &r.tiers {
                check_name("car tier", &t.tier)?;
                if t.brands.is_empty() {
                    return Err(Error::Config(format!("car tier `{}` has no brands", t.tier)));
                }
                for b in &t.brands {
                    check_name("car brand", b)?;
                }
            }
        }
        Ok(())
    }

    pub fn car_tier_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self
            .car_rules
            .iter()
            .flat_map(|r| r.tiers.iter().map(|t| t.tier.as_str()))
            .collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    /// Car tier of a brand, looked up across all rule pools.
    pub fn car_tier_of_brand(&self, brand: &str) -> Option<&str> {
        self.car_rules
            .iter()
            .flat_map(|r| r.tiers.iter())
            .find(|t| t.brands.iter().any(|b| b == brand))
            .map(|t| t.tier.as_str())
    }

    /// Device tier index of a phone model (first tier listing it).
    pub fn device_tier_of_model(&self, model: &str) -> Option<usize> {
        self.device_tiers
            .iter()
            .position(|t| t.models.iter().any(|m| m == model))
    }

    /// CDF of the occupation-mixture income distribution.
    pub fn income_cdf(&self, income: f64) -> f64 {
        let total: f64 = self.occupations.iter().map(|o| o.weight).sum();
        self.occupations
            .iter()
            .map(|o| {
                let [lo, hi] = o.income;
                let f = if income >= hi {
                    1.0
                } else if income < lo {
                    0.0
                } else {
                    // Integer incomes are drawn uniformly from lo..=hi.
                    ((income.floor() - lo + 1.0) / (hi - lo + 1.0)).clamp(0.0, 1.0)
                };
                o.weight * f
            })
            .sum::<f64>()
            / total
    }

    /// Median of the occupation-mixture income distribution.
    pub fn income_median(&self) -> f64 {
        let mut lo = self
            .occupations
            .iter()
            .map(|o| o.income[0])
            .fold(f64::INFINITY, f64::min);
        let mut hi = self
            .occupations
            .iter()
            .map(|o| o.income[1])
            .fold(f64::NEG_INFINITY, f64::max);
        while hi - lo > 0.5 {
            let mid = 0.5 * (lo + hi);
            if self.income_cdf(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi.floor()
    }
}

fn check_steps(what: &str, froms: impl Iterator<Item = f64>) -> Result<()> {
    let v: Vec<f64> = froms.collect();
    if v.is_empty() {
        return Err(Error::Config(format!("{what} must not be empty")));
    }
    if v.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(format!("{what} thresholds must be strictly increasing")));
    }
    Ok(())
}

/// Highest step whose threshold is at or below `income`.
pub(crate) fn step_index(froms: impl Iterator<Item = f64>, income: f64) -> Option<usize> {
    let mut found = None;
    for (i, f) in froms.enumerate() {
        if f <= income {
            found = Some(i);
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = MarginalConfig::default_config();
        assert_eq!(cfg.reference_date, NaiveDate::from_ymd_opt(2025, 3, 31).unwrap());
        assert_eq!(cfg.target_prevalence, 0.20);
        assert_eq!(cfg.label_rules.noise_flip_prob, 0.03);
        let median = cfg.income_median();
        assert!((cfg.income_cdf(median) - 0.5).abs() < 0.01);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = MarginalConfig::default_config();
        let back = MarginalConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.content_hash(), cfg.content_hash());
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = MarginalConfig::default_config();

        let mut c = base.clone();
        c.districts[0].income_rank = 999;
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.target_prevalence = 0.6;
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.occupations[0].income = [c.min_wage * 0.4, c.min_wage];
        assert!(c.validate().is_err());

        let mut c = base.clone();
        for o in &mut c.occupations {
            o.weight = 0.0;
        }
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.districts[0].name = "Kadikoy, Moda".into();
        assert!(c.validate().is_err());

        let mut c = base;
        c.label_rules.noise_flip_prob = 0.2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn malformed_toml_reports_location() {
        let err = MarginalConfig::from_toml_str("min_wage = \n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "{msg}");
    }
}
