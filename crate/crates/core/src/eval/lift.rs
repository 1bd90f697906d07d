//! Policy lift: how many more good applicants are approved and bad ones
//! rejected, per 100 screened, when the Full model replaces the Demo model.
//!
//! Scores are probabilities of delinquency, so a lower score is a better
//! credit. Cut-offs are always learned on a fold's training portion and then
//! applied to its held-out rows.

use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci, BootstrapCi};
use super::oof::OofPredictions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiftPolicy {
    /// Approve the best `percent` of applicants.
    ApprovalRate { percent: f64 },
    /// Approve the largest set whose default rate is at most `percent`.
    DefaultRate { percent: f64 },
}

impl LiftPolicy {
    fn validate(&self) -> Result<()> {
        match *self {
            LiftPolicy::ApprovalRate { percent } if percent > 0.0 && percent <= 100.0 => Ok(()),
            LiftPolicy::DefaultRate { percent } if (0.0..100.0).contains(&percent) => Ok(()),
            other => Err(Error::invalid(format!("policy percentage out of range: {other:?}"))),
        }
    }
}

/// Approval cut-off: approve iff `score <= cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub cutoff: f64,
    /// The policy could not be met on the training portion; nobody is approved.
    pub unachievable: bool,
}

/// Nearest-rank cut-off approving the best `percent` of `train_scores`.
pub fn approval_rate_cutoff(train_scores: &[f64], percent: f64) -> Cutoff {
    if percent >= 100.0 || train_scores.is_empty() {
        return Cutoff { cutoff: f64::INFINITY, unachievable: false };
    }
    let mut sorted = train_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percent / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Cutoff { cutoff: sorted[rank - 1], unachievable: false }
}

/// Cut-off approving the largest training set whose default rate is at most
/// `percent`. Cuts are only placed between distinct scores.
pub fn default_rate_cutoff(train_scores: &[f64], train_labels: &[u8], percent: f64) -> Cutoff {
    let mut order: Vec<usize> = (0..train_scores.len()).collect();
    order.sort_by(|&a, &b| train_scores[a].total_cmp(&train_scores[b]));
    let limit = percent / 100.0;
    let mut best = None;
    let (mut approved, mut bad) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = train_scores[order[i]];
        while i < order.len() && train_scores[order[i]] == s {
            bad += usize::from(train_labels[order[i]] == 1);
            approved += 1;
            i += 1;
        }
        if bad as f64 <= limit * approved as f64 + 1e-12 {
            best = Some(s);
        }
    }
    match best {
        Some(s) if i > 0 && s == train_scores[order[order.len() - 1]] => {
            Cutoff { cutoff: f64::INFINITY, unachievable: false }
        }
        Some(s) => Cutoff { cutoff: s, unachievable: false },
        None => Cutoff { cutoff: f64::NEG_INFINITY, unachievable: true },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldLift {
    pub fold: usize,
    pub screened: usize,
    pub demo_cutoff: Cutoff,
    pub full_cutoff: Cutoff,
    /// Held-out applicants approved by each model.
    pub demo_approved: usize,
    pub full_approved: usize,
    pub demo_good_approvals: usize,
    pub full_good_approvals: usize,
    pub demo_bad_rejections: usize,
    pub full_bad_rejections: usize,
    /// Full minus Demo, per 100 screened.
    pub good_approval_delta: f64,
    pub bad_rejection_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub family: String,
    pub policy: LiftPolicy,
    pub folds: Vec<FoldLift>,
    /// Unweighted means of the per-fold deltas.
    pub mean_good_approval_delta: f64,
    pub mean_bad_rejection_delta: f64,
    /// Deltas over all held-out rows pooled.
    pub pooled_good_approval_delta: f64,
    pub pooled_bad_rejection_delta: f64,
    pub good_approval_ci: Option<BootstrapCi>,
    pub bad_rejection_ci: Option<BootstrapCi>,
}

fn cutoff_for(policy: LiftPolicy, scores: &[f64], labels: &[u8]) -> Cutoff {
    match policy {
        LiftPolicy::ApprovalRate { percent } => approval_rate_cutoff(scores, percent),
        LiftPolicy::DefaultRate { percent } => default_rate_cutoff(scores, labels, percent),
    }
}

/// Per-record contributions to the deltas: (good approval, bad rejection),
/// each in {-1, 0, 1}.
fn contributions(oof: &OofPredictions, policy: LiftPolicy) -> Result<(Vec<FoldLift>, Vec<(f64, f64)>)> {
    policy.validate()?;
    oof.validate()?;
    let mut contrib = vec![(0.0, 0.0); oof.records.len()];
    let mut folds = Vec::with_capacity(oof.k);
    for fold in 0..oof.k {
        let test = oof.test_positions(fold);
        if test.is_empty() {
            continue;
        }
        let train = oof.train_positions(fold);
        let train_labels: Vec<u8> = train.iter().map(|&i| oof.records[i].label).collect();
        let ts = oof.train_scores_for(fold)?;
        let demo_cut = cutoff_for(policy, &ts.demo, &train_labels);
        let full_cut = cutoff_for(policy, &ts.full, &train_labels);
        let mut fl = FoldLift {
            fold,
            screened: test.len(),
            demo_cutoff: demo_cut,
            full_cutoff: full_cut,
            demo_approved: 0,
            full_approved: 0,
            demo_good_approvals: 0,
            full_good_approvals: 0,
            demo_bad_rejections: 0,
            full_bad_rejections: 0,
            good_approval_delta: 0.0,
            bad_rejection_delta: 0.0,
        };
        for &i in &test {
            let r = &oof.records[i];
            let demo_ok = r.demo_score <= demo_cut.cutoff;
            let full_ok = r.full_score <= full_cut.cutoff;
            let good = r.label == 0;
            fl.demo_approved += usize::from(demo_ok);
            fl.full_approved += usize::from(full_ok);
            let dg = usize::from(good && demo_ok);
            let fg = usize::from(good && full_ok);
            let db = usize::from(!good && !demo_ok);
            let fb = usize::from(!good && !full_ok);
            fl.demo_good_approvals += dg;
            fl.full_good_approvals += fg;
            fl.demo_bad_rejections += db;
            fl.full_bad_rejections += fb;
            contrib[i] = (fg as f64 - dg as f64, fb as f64 - db as f64);
        }
        let per100 = 100.0 / test.len() as f64;
        fl.good_approval_delta =
            (fl.full_good_approvals as f64 - fl.demo_good_approvals as f64) * per100;
        fl.bad_rejection_delta =
            (fl.full_bad_rejections as f64 - fl.demo_bad_rejections as f64) * per100;
        folds.push(fl);
    }
    Ok((folds, contrib))
}

fn pooled(contrib: &[(f64, f64)], idx: &[usize], pick: fn(&(f64, f64)) -> f64) -> f64 {
    100.0 * idx.iter().map(|&i| pick(&contrib[i])).sum::<f64>() / idx.len() as f64
}

/// Lift report under `policy`, with a stratified bootstrap interval of the
/// pooled deltas when `bootstrap` is `Some((resamples, seed))`.
pub fn policy_lift(
    oof: &OofPredictions,
    policy: LiftPolicy,
    bootstrap: Option<(usize, u64)>,
) -> Result<LiftReport> {
    let (folds, contrib) = contributions(oof, policy)?;
    let nf = folds.len().max(1) as f64;
    let all: Vec<usize> = (0..contrib.len()).collect();
    let good = |c: &(f64, f64)| c.0;
    let bad = |c: &(f64, f64)| c.1;
    let (good_approval_ci, bad_rejection_ci) = match bootstrap {
        Some((b, seed)) => {
            let labels = oof.labels();
            (
                Some(bootstrap_ci(&labels, b, seed, |idx| Some(pooled(&contrib, idx, good)))?),
                Some(bootstrap_ci(&labels, b, seed, |idx| Some(pooled(&contrib, idx, bad)))?),
            )
        }
        None => (None, None),
    };
    Ok(LiftReport {
        family: oof.family.clone(),
        policy,
        mean_good_approval_delta: folds.iter().map(|f| f.good_approval_delta).sum::<f64>() / nf,
        mean_bad_rejection_delta: folds.iter().map(|f| f.bad_rejection_delta).sum::<f64>() / nf,
        pooled_good_approval_delta: if all.is_empty() { 0.0 } else { pooled(&contrib, &all, good) },
        pooled_bad_rejection_delta: if all.is_empty() { 0.0 } else { pooled(&contrib, &all, bad) },
        folds,
        good_approval_ci,
        bad_rejection_ci,
    })
}

pub fn lift_fixed_approval(
    oof: &OofPredictions,
    r_percent: f64,
    bootstrap: Option<(usize, u64)>,
) -> Result<LiftReport> {
    policy_lift(oof, LiftPolicy::ApprovalRate { percent: r_percent }, bootstrap)
}

pub fn lift_fixed_default(
    oof: &OofPredictions,
    t_percent: f64,
    bootstrap: Option<(usize, u64)>,
) -> Result<LiftReport> {
    policy_lift(oof, LiftPolicy::DefaultRate { percent: t_percent }, bootstrap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{FoldTrainScores, OofRecord};

    /// Two folds; the training scores of each fold are the other fold's
    /// held-out scores, which keeps hand-built cases readable.
    fn oof(labels: &[u8], demo: &[f64], full: &[f64]) -> OofPredictions {
        let n = labels.len();
        let records: Vec<OofRecord> = (0..n)
            .map(|i| OofRecord {
                id: i as u64 + 1,
                label: labels[i],
                fold: i % 2,
                demo_score: demo[i],
                full_score: full[i],
            })
            .collect();
        let train_scores = (0..2)
            .map(|f| FoldTrainScores {
                fold: f,
                demo: (0..n).filter(|i| i % 2 != f).map(|i| demo[i]).collect(),
                full: (0..n).filter(|i| i % 2 != f).map(|i| full[i]).collect(),
            })
            .collect();
        OofPredictions { family: "t".into(), k: 2, records, train_scores }
    }

    #[test]
    fn identical_scores_give_zero_deltas() {
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 5 == 0)).collect();
        let s: Vec<f64> = (0..40).map(|i| f64::from((i * 7) % 13) / 13.0).collect();
        let o = oof(&labels, &s, &s);
        for policy in [
            LiftPolicy::ApprovalRate { percent: 10.0 },
            LiftPolicy::ApprovalRate { percent: 100.0 },
            LiftPolicy::DefaultRate { percent: 5.0 },
        ] {
            let r = policy_lift(&o, policy, Some((200, 3))).unwrap();
            assert_eq!(r.mean_good_approval_delta, 0.0);
            assert_eq!(r.mean_bad_rejection_delta, 0.0);
            let ci = r.good_approval_ci.unwrap();
            assert_eq!((ci.lo, ci.hi), (0.0, 0.0));
        }
    }

    #[test]
    fn full_approval_rate_approves_everyone() {
        let labels = [0, 1, 0, 1, 0, 0];
        let o = oof(&labels, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], &[0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        let r = lift_fixed_approval(&o, 100.0, None).unwrap();
        assert_eq!(r.mean_good_approval_delta, 0.0);
        assert_eq!(r.mean_bad_rejection_delta, 0.0);
    }

    #[test]
    fn five_more_goods_in_top_decile() {
        // 200 rows per fold, 100 goods and 100 bads, approval rate 10%.
        // Demo puts 15 goods in its top 20; Full puts 20.
        let n = 400;
        let labels: Vec<u8> = (0..n).map(|i| u8::from((i / 2) % 2 == 1)).collect();
        let rank_scores = |goods_on_top: usize| {
            let mut scores = vec![0.0; n];
            for f in 0..2 {
                let rows: Vec<usize> = (0..n).filter(|i| i % 2 == f).collect();
                let goods: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == 0).collect();
                let bads: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == 1).collect();
                let mut order: Vec<usize> = Vec::new();
                order.extend(&goods[..goods_on_top]);
                order.extend(&bads[..20 - goods_on_top]);
                order.extend(&goods[goods_on_top..]);
                order.extend(&bads[20 - goods_on_top..]);
                for (rank, &i) in order.iter().enumerate() {
                    scores[i] = rank as f64 / n as f64;
                }
            }
            scores
        };
        let o = oof(&labels, &rank_scores(15), &rank_scores(20));
        let r = lift_fixed_approval(&o, 10.0, None).unwrap();
        // 5 more goods among 200 screened is 2.5 per 100.
        assert!((r.mean_good_approval_delta - 2.5).abs() < 1e-12);
        for f in &r.folds {
            assert_eq!(f.full_good_approvals - f.demo_good_approvals, 5);
        }
    }

    #[test]
    fn default_rate_policy_cases() {
        let labels = [0, 1, 0, 0, 1, 0, 0, 0];
        let base = 0.25;
        let c = default_rate_cutoff(&[0.1, 0.9, 0.2, 0.3, 0.8, 0.4, 0.5, 0.6], &labels, base * 100.0 + 1.0);
        assert_eq!(c.cutoff, f64::INFINITY);
        let c = default_rate_cutoff(&[0.5; 4], &[1, 1, 1, 1], 10.0);
        assert!(c.unachievable);
        assert_eq!(c.cutoff, f64::NEG_INFINITY);

        // Perfect model at t = 0 approves exactly the goods.
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i % 8 < 2)).collect();
        let perfect: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
        let random: Vec<f64> = (0..40).map(|i| f64::from((i * 17) % 23) / 23.0).collect();
        let o = oof(&labels, &random, &perfect);
        let r = lift_fixed_default(&o, 0.0, None).unwrap();
        for f in &r.folds {
            let rows = o.test_positions(f.fold);
            let goods = rows.iter().filter(|&&i| labels[i] == 0).count();
            assert_eq!(f.full_good_approvals, goods);
            assert_eq!(f.full_bad_rejections, rows.len() - goods);
        }
        assert!(r.mean_good_approval_delta > 0.0);
    }

    #[test]
    fn nearest_rank_cutoff() {
        let s = [0.5, 0.1, 0.4, 0.2, 0.3, 0.9, 0.8, 0.7, 0.6, 1.0];
        assert_eq!(approval_rate_cutoff(&s, 10.0).cutoff, 0.1);
        assert_eq!(approval_rate_cutoff(&s, 25.0).cutoff, 0.3);
        assert_eq!(approval_rate_cutoff(&s, 100.0).cutoff, f64::INFINITY);
    }
}
