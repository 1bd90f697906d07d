//! Synthetic resident generation.
//!
//! A profile is drawn stage by stage (job and income, education, phone, car,
//! district and rent, behaviour), screened by the sanity filter, and labelled
//! by seven additive risk rules whose cut-off is calibrated to a target
//! prevalence. Record `i` uses only the random sub-stream `(seed, i)`, so the
//! output does not depend on thread count.

mod config;
mod labels;
mod stages;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    AgeBand, BehaviorBand, CarRule, CarTierPool, DeviceRule, DeviceTier, District, EmploymentRule,
    IncomeStep, LabelRuleSet, MarginalConfig, MonthsDist, OccupationSpec, PointsRule, RatioRule,
    RentRule, SanityRules, ShoppingRule, StatusWeights, YoungSelfEmployedRule, DEFAULT_CONFIG_TOML,
};
pub use labels::{
    apply_label_rules, calibrate_threshold, calibrate_threshold_from_points, risk_points,
    rule_points, sanity_filter, sanity_violations, LabelContext,
};
pub use stages::{
    assign_car, assign_district_rent, assign_education, assign_phone, behavior_band,
    sample_age, sample_job_income, synth_behavior, Behavior, CarAssignment, PhoneAssignment,
    Residence,
};

use crate::dataio::{Dataset, Provenance, Record};
use crate::error::{Error, Result};
use crate::rng::{self, tag, RandomStream};

pub const GENERATOR_VERSION: &str = concat!("ubsb-synthgen/", env!("CARGO_PKG_VERSION"));

/// Regeneration attempts per record before giving up.
pub const MAX_ATTEMPTS: usize = 100;

/// Generation state that is never published.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub household_size: u8,
    pub device_tier: usize,
    pub car_tier: Option<String>,
    pub risk_points: u32,
    pub ride_hailing_trips: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub record: Record,
    pub latent: Latent,
}

impl Profile {
    /// Checks the per-profile invariants against the configuration.
    pub fn invariant_violations(&self, config: &MarginalConfig) -> Vec<String> {
        let r = &self.record;
        let mut out = r.schema_violations(config.reference_date);
        match config.occupation(&r.job) {
            Ok(occ) => {
                let [lo, hi] = occ.income;
                if r.monthly_income < lo || r.monthly_income > hi {
                    out.push(format!(
                        "income {} outside band [{lo}, {hi}] of `{}`",
                        r.monthly_income, r.job
                    ));
                }
                if r.education < occ.min_education {
                    out.push(format!(
                        "education {} below minimum {} of `{}`",
                        r.education, occ.min_education, r.job
                    ));
                }
            }
            Err(e) => out.push(e.to_string()),
        }
        if !(1..=5).contains(&self.latent.household_size) {
            out.push("household size outside 1..=5".into());
        }
        out
    }
}

/// Draws one unlabelled candidate through every stage.
pub fn draw_profile(config: &MarginalConfig, id: u64, rng: &mut RandomStream) -> Result<Profile> {
    let (occ, employment_status, monthly_income) = sample_job_income(config, rng);
    let age = sample_age(occ, config, rng);
    let education = assign_education(&occ.title, monthly_income, config, rng)?;
    let household_size: u8 = rng.random_range(1..=5);
    let phone = assign_phone(monthly_income, config, rng);
    let car = assign_car(monthly_income, config, rng);
    let home = assign_district_rent(monthly_income, household_size, config, rng);
    let behavior = synth_behavior(monthly_income, config, rng);
    Ok(Profile {
        record: Record {
            id,
            age,
            education,
            employment_status,
            job: occ.title.clone(),
            monthly_income,
            phone_model: phone.model,
            phone_purchase_date: phone.purchase_date,
            owns_car: car.owns_car,
            car_brand: car.brand,
            car_purchase_date: car.purchase_date,
            home_district: home.district,
            owns_home: home.owns_home,
            monthly_rent: home.monthly_rent,
            owns_credit_card: behavior.owns_credit_card,
            monthly_subscriptions: behavior.monthly_subscriptions,
            online_shopping_frequency: behavior.online_shopping_frequency,
            social_media_active: behavior.social_media_active,
            delinquency_fl: 0,
        },
        latent: Latent {
            household_size,
            device_tier: phone.tier,
            car_tier: car.tier,
            risk_points: 0,
            ride_hailing_trips: behavior.ride_hailing_trips,
        },
    })
}

/// Draws candidates on fresh sub-streams until one passes the sanity filter.
fn draw_accepted(
    config: &MarginalConfig,
    seed: u64,
    stream: u64,
    index: usize,
    id: u64,
) -> Result<Profile> {
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng::substream(seed, &[stream, index as u64, attempt as u64]);
        let p = draw_profile(config, id, &mut rng)?;
        if sanity_filter(&p, config) {
            return Ok(p);
        }
    }
    Err(Error::Generation {
        index,
        attempts: MAX_ATTEMPTS,
    })
}

/// Prevalence the noise-free labels must hit so that symmetric label flips
/// with probability `flip` land on `target` on average.
pub fn noise_adjusted_target(target: f64, flip: f64) -> f64 {
    if flip <= 0.0 {
        return target;
    }
    ((target - flip) / (1.0 - 2.0 * flip)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct Population {
    pub profiles: Vec<Profile>,
    pub calibrated_threshold: u32,
    /// Noise-free prevalence of the threshold on the calibration sample.
    pub calibration_prevalence: f64,
    pub seed: u64,
    pub config_hash: String,
}

impl Population {
    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            rows: self.profiles.iter().map(|p| p.record.clone()).collect(),
            provenance: Some(Provenance {
                config_hash: self.config_hash.clone(),
                seed: self.seed,
                generator_version: GENERATOR_VERSION.to_string(),
            }),
        }
    }

    pub fn prevalence(&self) -> f64 {
        let pos = self.profiles.iter().filter(|p| p.record.delinquency_fl == 1).count();
        pos as f64 / self.profiles.len().max(1) as f64
    }
}

/// Calibrates the label threshold on a dedicated sample of accepted profiles.
pub fn calibrate(config: &MarginalConfig, seed: u64) -> Result<(u32, f64)> {
    let ctx = LabelContext::from_config(config)?;
    let points: Vec<u32> = (0..config.calibration_sample)
        .into_par_iter()
        .map(|j| {
            draw_accepted(config, seed, tag::CALIBRATION, j, 0)
                .map(|p| risk_points(&p, &config.label_rules, &ctx))
        })
        .collect::<Result<_>>()?;
    let target = noise_adjusted_target(config.target_prevalence, config.label_rules.noise_flip_prob);
    calibrate_threshold_from_points(&points, target)
}

/// Generates exactly `n` labelled profiles with ids `1..=n`.
pub fn generate(config: &MarginalConfig, n: usize, seed: u64) -> Result<Population> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    config.validate()?;
    let (threshold, calibration_prevalence) = calibrate(config, seed)?;
    let mut rules = config.label_rules.clone();
    rules.calibrated_threshold = threshold;
    let ctx = LabelContext::from_config(config)?;

    let profiles = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut p = draw_accepted(config, seed, tag::PROFILE, i, i as u64 + 1)?;
            let mut noise = rng::substream(seed, &[tag::LABEL_NOISE, i as u64]);
            let (label, points) = apply_label_rules(&p, &rules, &ctx, &mut noise);
            p.record.delinquency_fl = label;
            p.latent.risk_points = points;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Population {
        profiles,
        calibrated_threshold: threshold,
        calibration_prevalence,
        seed,
        config_hash: config.content_hash(),
    })
}

/// One failed check on one row of a published dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub id: u64,
    pub rule: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_rows: usize,
    pub prevalence: f64,
    pub violations: Vec<Violation>,
}

/// Schema, occupation and sanity checks on published rows. Latent tiers are
/// recovered from the configuration's brand and model lists.
pub fn validate_dataset(dataset: &Dataset, config: &MarginalConfig) -> ValidationReport {
    let per_row: Vec<Vec<Violation>> = dataset
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let v = |rule: &str, message: String| Violation { row: i + 1, id: r.id, rule: rule.to_string(), message };
            let mut out: Vec<Violation> =
                r.schema_violations(config.reference_date).into_iter().map(|m| v("schema", m)).collect();
            match config.occupation(&r.job) {
                Ok(occ) => {
                    let [lo, hi] = occ.income;
                    if r.monthly_income < lo || r.monthly_income > hi {
                        out.push(v("occupation_income_band", format!("income {} outside [{lo}, {hi}] of `{}`", r.monthly_income, r.job)));
                    }
                    if r.education < occ.min_education {
                        out.push(v("occupation_min_education", format!("education {} below {} for `{}`", r.education, occ.min_education, r.job)));
                    }
                }
                Err(e) => out.push(v("unknown_job", e.to_string())),
            }
            let profile = Profile {
                record: r.clone(),
                latent: Latent {
                    household_size: 1,
                    device_tier: config.device_tier_of_model(&r.phone_model).unwrap_or(usize::MAX),
                    car_tier: r.car_brand.as_deref().and_then(|b| config.car_tier_of_brand(b)).map(str::to_string),
                    risk_points: 0,
                    ride_hailing_trips: 0,
                },
            };
            for name in sanity_violations(&profile, config) {
                out.push(v(name, format!("sanity rule `{name}` failed")));
            }
            out
        })
        .collect();
    let n = dataset.len();
    let pos = dataset.rows.iter().filter(|r| r.delinquency_fl == 1).count();
    ValidationReport {
        n_rows: n,
        prevalence: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
        violations: per_row.into_iter().flatten().collect(),
    }
}
