//! The individual generation stages, in pipeline order.

use chrono::{Months, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Gamma, Poisson};

use super::config::{step_index, BehaviorBand, MarginalConfig, MonthsDist, OccupationSpec};
use crate::dataio::{Education, EmploymentStatus};
use crate::error::Result;
use crate::rng::RandomStream;

fn weighted_pick<R: Rng + ?Sized>(weights: impl IntoIterator<Item = f64>, rng: &mut R) -> usize {
    let w: Vec<f64> = weights.into_iter().collect();
    if w.len() == 1 {
        return 0;
    }
    WeightedIndex::new(&w)
        .expect("weights validated at load")
        .sample(rng)
}

fn draw_months<R: Rng + ?Sized>(dist: &MonthsDist, rng: &mut R) -> u32 {
    match *dist {
        MonthsDist::Fixed { months } => months,
        MonthsDist::Uniform { min, max } => rng.random_range(min..=max),
    }
}

pub(crate) fn months_before(date: NaiveDate, months: u32) -> NaiveDate {
    date.checked_sub_months(Months::new(months))
        .expect("date arithmetic stays in range")
}

/// Gamma draw with the given mean and coefficient of variation; a zero cv or
/// zero mean gives the mean itself.
fn gamma_mean_cv<R: Rng + ?Sized>(mean: f64, cv: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if cv <= 0.0 {
        return mean;
    }
    let shape = 1.0 / (cv * cv);
    let scale = mean / shape;
    Gamma::new(shape, scale).expect("positive gamma parameters").sample(rng)
}

fn poisson_gamma<R: Rng + ?Sized>(mean: f64, cv: f64, rng: &mut R) -> u32 {
    let lambda = gamma_mean_cv(mean, cv, rng);
    if lambda <= 0.0 {
        return 0;
    }
    let x: f64 = Poisson::new(lambda).expect("positive rate").sample(rng);
    x as u32
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Weighted occupation draw, uniform integer income inside its band, then an
/// employment status from the occupation's weights.
pub fn sample_job_income<'c>(
    config: &'c MarginalConfig,
    rng: &mut RandomStream,
) -> (&'c OccupationSpec, EmploymentStatus, f64) {
    let idx = weighted_pick(config.occupations.iter().map(|o| o.weight), rng);
    let occ = &config.occupations[idx];
    let [lo, hi] = occ.income;
    let income = if hi > lo {
        rng.random_range(lo.ceil() as i64..=hi.floor() as i64) as f64
    } else {
        lo
    };
    let statuses = occ.status_weights.as_array();
    let s = weighted_pick(statuses.iter().map(|(_, w)| *w), rng);
    (occ, statuses[s].0, income)
}

/// Age drawn from the age bands truncated below at the occupation's minimum age.
pub fn sample_age(occ: &OccupationSpec, config: &MarginalConfig, rng: &mut RandomStream) -> u32 {
    let spans: Vec<(u32, u32, f64)> = config
        .age_bands
        .iter()
        .filter_map(|b| {
            let lo = b.min.max(occ.min_age);
            (lo <= b.max).then(|| {
                let frac = f64::from(b.max - lo + 1) / f64::from(b.max - b.min + 1);
                (lo, b.max, b.weight * frac)
            })
        })
        .collect();
    let i = weighted_pick(spans.iter().map(|s| s.2), rng);
    rng.random_range(spans[i].0..=spans[i].1)
}

/// Minimum credential of the occupation, upgraded one level with the
/// configured probability.
pub fn assign_education(
    job: &str,
    _monthly_income: f64,
    config: &MarginalConfig,
    rng: &mut RandomStream,
) -> Result<Education> {
    let base = config.occupation(job)?.min_education;
    if rng.random_bool(config.education_upgrade_prob) {
        Ok(base.upgraded())
    } else {
        Ok(base)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneAssignment {
    pub model: String,
    pub purchase_date: NaiveDate,
    pub age_months: u32,
    pub tier: usize,
}

/// Tier chosen by weight among the tiers admitting the income (the lowest
/// tier when none does), model uniform from its pool, purchase date a tier
/// age draw before the reference date.
pub fn assign_phone(monthly_income: f64, config: &MarginalConfig, rng: &mut RandomStream) -> PhoneAssignment {
    let eligible: Vec<usize> = (0..config.device_tiers.len())
        .filter(|&i| config.device_tiers[i].admits(monthly_income))
        .collect();
    let tier = if eligible.is_empty() {
        0
    } else {
        eligible[weighted_pick(eligible.iter().map(|&i| config.device_tiers[i].weight), rng)]
    };
    let t = &config.device_tiers[tier];
    let model = t.models[rng.random_range(0..t.models.len())].clone();
    let age_months = draw_months(&t.phone_age, rng);
    PhoneAssignment {
        model,
        purchase_date: months_before(config.reference_date, age_months),
        age_months,
        tier,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarAssignment {
    pub owns_car: bool,
    pub brand: Option<String>,
    pub purchase_date: Option<NaiveDate>,
    pub tier: Option<String>,
}

impl CarAssignment {
    fn none() -> Self {
        CarAssignment {
            owns_car: false,
            brand: None,
            purchase_date: None,
            tier: None,
        }
    }
}

/// Ownership by the highest income threshold reached; brand tier weighted
/// from that rule's pool.
pub fn assign_car(monthly_income: f64, config: &MarginalConfig, rng: &mut RandomStream) -> CarAssignment {
    let Some(ri) = step_index(config.car_rules.iter().map(|r| r.income_threshold), monthly_income) else {
        return CarAssignment::none();
    };
    let rule = &config.car_rules[ri];
    if !rng.random_bool(rule.ownership_prob) {
        return CarAssignment::none();
    }
    let pool = &rule.tiers[weighted_pick(rule.tiers.iter().map(|t| t.weight), rng)];
    let brand = pool.brands[rng.random_range(0..pool.brands.len())].clone();
    let age = draw_months(&rule.car_age, rng);
    CarAssignment {
        owns_car: true,
        brand: Some(brand),
        purchase_date: Some(months_before(config.reference_date, age)),
        tier: Some(pool.tier.clone()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residence {
    pub district: String,
    pub owns_home: bool,
    pub monthly_rent: f64,
}

/// District whose income rank tracks the income percentile (with rank
/// jitter); rent is the district rate times the household's dwelling area.
pub fn assign_district_rent(
    monthly_income: f64,
    household_size: u8,
    config: &MarginalConfig,
    rng: &mut RandomStream,
) -> Residence {
    let d = config.districts.len();
    let pct = config.income_cdf(monthly_income);
    let target = ((pct * d as f64).floor() as usize + 1).clamp(1, d) as i64;
    let j = config.district_rank_jitter as i64;
    let jitter = if j > 0 { rng.random_range(-j..=j) } else { 0 };
    let rank = (target + jitter).clamp(1, d as i64) as usize;
    let district = config
        .districts
        .iter()
        .find(|x| x.income_rank == rank)
        .expect("ranks validated as a permutation");

    let p_own = step_index(config.home_ownership.iter().map(|s| s.income_from), monthly_income)
        .map_or(0.0, |i| config.home_ownership[i].prob);
    let owns_home = rng.random_bool(p_own);
    let area = config.dwelling_area_m2[usize::from(household_size.clamp(1, 5)) - 1];
    let factor = if config.rent_jitter > 0.0 {
        rng.random_range(1.0 - config.rent_jitter..=1.0 + config.rent_jitter)
    } else {
        1.0
    };
    let monthly_rent = if owns_home {
        0.0
    } else {
        round_cents(district.rent_per_m2 * area * factor)
    };
    Residence {
        district: district.name.clone(),
        owns_home,
        monthly_rent,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    pub monthly_subscriptions: f64,
    pub online_shopping_frequency: u32,
    pub social_media_active: bool,
    pub owns_credit_card: bool,
    pub ride_hailing_trips: u32,
}

pub fn behavior_band(config: &MarginalConfig, monthly_income: f64) -> &BehaviorBand {
    let i = step_index(config.behavior_bands.iter().map(|b| b.income_from), monthly_income).unwrap_or(0);
    &config.behavior_bands[i]
}

/// Behavioural draws conditioned on the income band.
pub fn synth_behavior(monthly_income: f64, config: &MarginalConfig, rng: &mut RandomStream) -> Behavior {
    let b = behavior_band(config, monthly_income);
    Behavior {
        monthly_subscriptions: round_cents(gamma_mean_cv(b.subscriptions_mean, b.subscriptions_cv, rng)),
        online_shopping_frequency: poisson_gamma(b.shopping_mean, b.shopping_cv, rng),
        social_media_active: rng.random_bool(b.social_media_prob),
        owns_credit_card: rng.random_bool(b.credit_card_prob),
        ride_hailing_trips: poisson_gamma(b.ride_hailing_mean, 0.8, rng),
    }
}
