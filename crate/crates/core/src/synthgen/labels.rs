//! Rule-based delinquency labels, threshold calibration and the sanity filter.

use chrono::NaiveDate;
use rand::Rng;

use super::config::{LabelRuleSet, MarginalConfig};
use super::Profile;
use crate::dataio::{whole_months_between, EmploymentStatus};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Population-level quantities the rules compare against.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelContext {
    pub income_median: f64,
    pub min_device_tier: usize,
    pub reference_date: NaiveDate,
}

impl LabelContext {
    pub fn from_config(config: &MarginalConfig) -> Result<Self> {
        Ok(LabelContext {
            income_median: config.income_median(),
            min_device_tier: config.device_tier_index(&config.label_rules.r2_device.min_device_tier)?,
            reference_date: config.reference_date,
        })
    }
}

fn ratio(num: f64, income: f64) -> f64 {
    if income > 0.0 {
        num / income
    } else {
        f64::INFINITY
    }
}

/// Which rules fire and how many points each contributes, R1..R7 in order.
pub fn rule_points(profile: &Profile, rules: &LabelRuleSet, ctx: &LabelContext) -> [u32; 7] {
    let r = &profile.record;
    let income = r.monthly_income;
    let below_median = income < ctx.income_median;
    let mut pts = [0u32; 7];

    pts[0] = match r.employment_status {
        EmploymentStatus::Unemployed => rules.r1_employment.unemployed_points,
        EmploymentStatus::SelfEmployed => rules.r1_employment.self_employed_points,
        EmploymentStatus::Employed => 0,
    };

    let phone_age = whole_months_between(r.phone_purchase_date, ctx.reference_date);
    if phone_age < i64::from(rules.r2_device.max_phone_age_months)
        && profile.latent.device_tier >= ctx.min_device_tier
        && below_median
    {
        pts[1] = rules.r2_device.points;
    }

    let rent_ratio = ratio(r.monthly_rent, income);
    if rent_ratio > rules.r3_rent.ratio {
        pts[2] += rules.r3_rent.points;
    }
    if rent_ratio > rules.r3_rent.severe_ratio {
        pts[2] += rules.r3_rent.severe_points;
    }

    if f64::from(r.online_shopping_frequency) > rules.r4_shopping.frequency_p90 && below_median {
        pts[3] = rules.r4_shopping.points;
    }

    let subs_ratio = ratio(r.monthly_subscriptions, income);
    if subs_ratio > rules.r5_subscriptions.ratio {
        pts[4] = rules.r5_subscriptions.points;
    }

    if !r.owns_credit_card && !r.owns_car && !r.owns_home {
        pts[5] = rules.r6_no_assets.points;
    }

    if r.age < rules.r7_young_self_employed.max_age
        && r.employment_status == EmploymentStatus::SelfEmployed
    {
        pts[6] = rules.r7_young_self_employed.points;
    }
    pts
}

pub fn risk_points(profile: &Profile, rules: &LabelRuleSet, ctx: &LabelContext) -> u32 {
    rule_points(profile, rules, ctx).iter().sum()
}

/// Returns `(delinquency flag, risk points)`: the flag is set when the points
/// reach the calibrated threshold, then flipped with the noise probability.
pub fn apply_label_rules(
    profile: &Profile,
    rules: &LabelRuleSet,
    ctx: &LabelContext,
    rng: &mut RandomStream,
) -> (u8, u32) {
    let points = risk_points(profile, rules, ctx);
    let mut label = u8::from(points >= rules.calibrated_threshold);
    if rules.noise_flip_prob > 0.0 && rng.random_bool(rules.noise_flip_prob) {
        label ^= 1;
    }
    (label, points)
}

/// Integer threshold (>= 1) whose noise-free prevalence over `points` is
/// closest to `target`; ties go to the higher threshold. Returns the
/// threshold and its prevalence.
pub fn calibrate_threshold_from_points(points: &[u32], target: f64) -> Result<(u32, f64)> {
    if points.is_empty() {
        return Err(Error::invalid("cannot calibrate on an empty sample"));
    }
    let max = points.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max as usize + 2];
    for &p in points {
        counts[p as usize] += 1;
    }
    let n = points.len() as f64;
    // at_least[t] = #points >= t
    let mut at_least = vec![0usize; counts.len() + 1];
    for t in (0..counts.len()).rev() {
        at_least[t] = at_least[t + 1] + counts[t];
    }
    let mut best = (1u32, at_least[1] as f64 / n);
    for t in 2..=(max + 1) {
        let prev = at_least[t as usize] as f64 / n;
        if (prev - target).abs() <= (best.1 - target).abs() {
            best = (t, prev);
        }
    }
    Ok(best)
}

pub fn calibrate_threshold(
    profiles: &[Profile],
    rules: &LabelRuleSet,
    ctx: &LabelContext,
    target_prevalence: f64,
) -> Result<u32> {
    let points: Vec<u32> = profiles.iter().map(|p| risk_points(p, rules, ctx)).collect();
    calibrate_threshold_from_points(&points, target_prevalence).map(|(t, _)| t)
}

/// Names of the hard economic constraints a profile violates.
pub fn sanity_violations(profile: &Profile, config: &MarginalConfig) -> Vec<&'static str> {
    let s = &config.sanity;
    let r = &profile.record;
    let low_income = r.monthly_income <= s.low_income_multiplier * config.min_wage;
    let mut out = Vec::new();
    if low_income && profile.latent.car_tier.as_deref() == Some(s.luxury_car_tier.as_str()) {
        out.push("low_income_luxury_car");
    }
    let flagship = config
        .device_tier_index(&s.flagship_device_tier)
        .is_ok_and(|i| profile.latent.device_tier == i);
    let phone_age = whole_months_between(r.phone_purchase_date, config.reference_date);
    if low_income && flagship && phone_age < i64::from(s.new_phone_months) {
        out.push("low_income_new_flagship");
    }
    if r.monthly_rent > s.max_rent_ratio * r.monthly_income {
        out.push("rent_exceeds_income_share");
    }
    if r.monthly_subscriptions > s.max_subscription_ratio * r.monthly_income {
        out.push("subscriptions_exceed_income_share");
    }
    out
}

/// `true` when the profile passes every hard constraint.
pub fn sanity_filter(profile: &Profile, config: &MarginalConfig) -> bool {
    sanity_violations(profile, config).is_empty()
}
