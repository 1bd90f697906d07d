//! `ubsb`: generate, validate, train, ablate, lift, explain and replay.
//!
//! Exit codes: 0 success, 1 runtime failure (including validation
//! violations and replay mismatches), 2 usage or configuration error.

mod manifest;
mod plots;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use serde_json::json;

use manifest::{sha256_file, sidecar, RunManifest};
use ubsb_core::dataio::{feature_view, read_csv, stratified_kfold, write_csv, Dataset, FeatureSet};
use ubsb_core::eval::{policy_lift, run_ablation, AblationSettings, LiftPolicy, OofPredictions};
use ubsb_core::explain::{
    explain_records, flip_frequency, render_text, single_edit_flip_rate, CfConfig, FeatureDomains, Scorer,
};
use ubsb_core::models::{Family, TrainedModel};
use ubsb_core::rng::{substream, tag};
use ubsb_core::synthgen::{generate, validate_dataset, MarginalConfig};
use ubsb_core::tune::{tune_and_refit, TuneSettings};

#[derive(Parser, Debug)]
#[command(name = "ubsb", version, about = "Bureau-free credit scoring benchmark")]
struct Cli {
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true, env = "UBSB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Check a dataset against the schema and sanity rules.
    Validate(ValidateArgs),
    /// Tune and fit one model on a whole dataset.
    Train(TrainArgs),
    /// Demo versus Full ablation with nested tuning.
    Ablate(AblateArgs),
    /// Policy lift from out-of-fold predictions.
    Lift(LiftArgs),
    /// Counterfactual audit of a trained model.
    Explain(ExplainArgs),
    /// Re-run a command from its manifest and compare outputs.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Marginal configuration (TOML); the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    family: String,
    /// Feature set: demo or full.
    #[arg(long, default_value = "full")]
    features: String,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// Dataset CSV; with --smoke and no data, 10000 rows are generated.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated families; all when omitted.
    #[arg(long)]
    families: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Write ROC curves as SVG.
    #[arg(long)]
    plots: bool,
    /// Small profile: 10000 rows, 10 trials, 3 folds.
    #[arg(long)]
    smoke: bool,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("policy").required(true).args(["approval_rate", "default_rate"]))]
struct LiftArgs {
    #[arg(long)]
    oof: PathBuf,
    /// Approve the best R percent.
    #[arg(long)]
    approval_rate: Option<f64>,
    /// Approve the largest set with default rate at most T percent.
    #[arg(long)]
    default_rate: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plots: bool,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Data the feature ranges are taken from and records are sampled from.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    records: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Failure that already printed its report; exit 1 without another message.
#[derive(Debug)]
struct Reported;

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("reported")
    }
}

impl std::error::Error for Reported {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || matches!(cause.downcast_ref(), Some(ubsb_core::Error::Config(_))) {
            return 2;
        }
    }
    1
}

fn load_config(path: Option<&Path>) -> Result<MarginalConfig> {
    Ok(match path {
        Some(p) => MarginalConfig::load(p)?,
        None => MarginalConfig::default_config(),
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_generate(a: &GenerateArgs, m: &mut RunManifest) -> Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be >= 1"));
    }
    let config = load_config(a.config.as_deref())?;
    if let Some(p) = &a.config {
        m.input(p)?;
    }
    let pop = generate(&config, a.n, a.seed)?;
    // Write beside the target and rename so failures leave no partial file.
    let tmp = a.out.with_extension("csv.partial");
    write_csv(&pop.to_dataset(), &tmp)?;
    fs::rename(&tmp, &a.out).with_context(|| format!("moving output to {}", a.out.display()))?;
    m.config = json!({
        "n": a.n,
        "config_hash": config.content_hash(),
        "calibrated_threshold": pop.calibrated_threshold,
        "prevalence": pop.prevalence(),
    });
    m.seeds.insert("seed".into(), a.seed);
    m.output(&a.out)?;
    eprintln!("wrote {} rows to {} (prevalence {:.4})", a.n, a.out.display(), pop.prevalence());
    m.write(&sidecar(&a.out))
}

fn cmd_validate(a: &ValidateArgs, m: &mut RunManifest) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let ds = read_csv(&a.data)?;
    m.input(&a.data)?;
    let report = validate_dataset(&ds, &config);
    println!("rows: {}", report.n_rows);
    println!("prevalence: {:.4}", report.prevalence);
    println!("violations: {}", report.violations.len());
    for v in report.violations.iter().take(50) {
        println!("  row {} (id {}): {}: {}", v.row, v.id, v.rule, v.message);
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        m.output(out)?;
        m.write(&sidecar(out))?;
    }
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(Reported.into())
    }
}

fn parse_families(list: Option<&str>) -> Result<Vec<Family>> {
    match list {
        None => Ok(Family::ALL.to_vec()),
        Some(s) => s.split(',').map(|f| f.trim().parse::<Family>().map_err(Into::into)).collect(),
    }
}

fn feature_set(name: &str) -> Result<FeatureSet> {
    match name.to_ascii_lowercase().as_str() {
        "demo" => Ok(FeatureSet::demo()),
        "full" => Ok(FeatureSet::full()),
        other => Err(usage(format!("unknown feature set `{other}` (expected demo or full)"))),
    }
}

fn cmd_train(a: &TrainArgs, m: &mut RunManifest) -> Result<()> {
    let family: Family = a.family.parse()?;
    let fs = feature_set(&a.features)?;
    if a.trials == 0 {
        return Err(usage("--trials must be >= 1"));
    }
    let config = load_config(a.config.as_deref())?;
    let ds = read_csv(&a.data)?;
    m.input(&a.data)?;
    let view = feature_view(&ds, &fs)?;
    let settings = TuneSettings { n_trials: a.trials, inner_valid_fraction: 0.2, seed: a.seed };
    let (model, tuning, _) = tune_and_refit(&view, family, config.reference_date, &settings)?;
    fs::write(&a.out, model.to_json()? + "\n").with_context(|| format!("writing {}", a.out.display()))?;
    m.config = json!({
        "family": family.name(),
        "features": fs.name,
        "trials": a.trials,
        "best": tuning.best,
        "threshold": model.threshold,
    });
    m.seeds.insert("seed".into(), a.seed);
    m.output(&a.out)?;
    eprintln!("trained {family} on {} rows; threshold {:.4}", view.rows.len(), model.threshold.unwrap_or(0.5));
    m.write(&sidecar(&a.out))
}

fn cmd_ablate(a: &AblateArgs, m: &mut RunManifest) -> Result<()> {
    let families = parse_families(a.families.as_deref())?;
    let folds = a.folds.unwrap_or(if a.smoke { 3 } else { 5 });
    let trials = a.trials.unwrap_or(if a.smoke { 10 } else { 50 });
    if folds < 2 {
        return Err(usage(format!("--folds must be >= 2, got {folds}")));
    }
    if trials == 0 {
        return Err(usage("--trials must be >= 1"));
    }
    let config = load_config(a.config.as_deref())?;
    let ds: Dataset = match (&a.data, a.smoke) {
        (Some(p), _) => {
            m.input(p)?;
            read_csv(p)?
        }
        (None, true) => generate(&config, 10_000, a.seed)?.to_dataset(),
        (None, false) => return Err(usage("--data is required unless --smoke is given")),
    };
    let plan = stratified_kfold(&ds.labels(), folds, a.seed)?;
    let settings = AblationSettings { trials, inner_valid_fraction: 0.2, reference_date: config.reference_date, seed: a.seed };
    let report = run_ablation(&ds, &families, &plan, &settings)?;

    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    let metrics = a.out.join("metrics.csv");
    fs::write(&metrics, report.metrics_csv())?;
    outputs.push(metrics);
    let delong: BTreeMap<&str, _> = report.families.iter().map(|f| (f.family.name(), &f.delong)).collect();
    let delong_path = a.out.join("delong.json");
    write_json(&delong_path, &delong)?;
    outputs.push(delong_path);
    let summary = json!({
        "n_records": report.n_records,
        "k": report.k,
        "settings": report.settings,
        "rows": report.rows,
        "delong": delong,
    });
    let report_path = a.out.join("report.json");
    write_json(&report_path, &summary)?;
    outputs.push(report_path);
    for f in &report.families {
        let p = a.out.join(format!("oof_{}.json", f.family));
        write_json(&p, &f.oof)?;
        outputs.push(p);
        if a.plots {
            let labels = f.oof.labels();
            let curves = vec![
                (format!("Demo (AUC {:.4})", f.delong.auc_a), plots::roc_points(&f.oof.demo_scores(), &labels)),
                (format!("Full (AUC {:.4})", f.delong.auc_b), plots::roc_points(&f.oof.full_scores(), &labels)),
            ];
            let p = a.out.join(format!("roc_{}.svg", f.family));
            fs::write(&p, plots::roc_svg(&format!("{} out-of-fold ROC", f.family), &curves))?;
            outputs.push(p);
        }
    }
    for p in &outputs {
        m.output(p)?;
    }
    m.config = json!({
        "families": families.iter().map(|f| f.name()).collect::<Vec<_>>(),
        "folds": folds,
        "trials": trials,
        "smoke": a.smoke,
        "n_records": ds.len(),
        "reference_date": config.reference_date,
    });
    m.seeds.insert("seed".into(), a.seed);
    print!("{}", report.metrics_csv());
    for f in &report.families {
        println!("{}: delta AUC {:+.4}, z {:.3}, p {:.3e}", f.family, f.delong.delta, f.delong.z, f.delong.p_value);
    }
    m.write(&a.out.join("manifest.json"))
}

fn cmd_lift(a: &LiftArgs, m: &mut RunManifest) -> Result<()> {
    let policy = match (a.approval_rate, a.default_rate) {
        (Some(r), None) => LiftPolicy::ApprovalRate { percent: r },
        (None, Some(t)) => LiftPolicy::DefaultRate { percent: t },
        _ => return Err(usage("give exactly one of --approval-rate and --default-rate")),
    };
    match policy {
        LiftPolicy::ApprovalRate { percent } if !(percent > 0.0 && percent <= 100.0) => {
            return Err(usage("--approval-rate must lie in (0, 100]"))
        }
        LiftPolicy::DefaultRate { percent } if !(0.0..100.0).contains(&percent) => {
            return Err(usage("--default-rate must lie in [0, 100)"))
        }
        _ => {}
    }
    let text = fs::read_to_string(&a.oof).with_context(|| format!("reading {}", a.oof.display()))?;
    let oof: OofPredictions = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.oof.display()))?;
    oof.validate()?;
    m.input(&a.oof)?;
    let boot = (a.bootstrap > 0).then_some((a.bootstrap, a.seed));
    let report = policy_lift(&oof, policy, boot)?;
    write_json(&a.out, &report)?;
    m.output(&a.out)?;
    if a.plots {
        let bars: Vec<(String, f64, f64)> = report
            .folds
            .iter()
            .map(|f| (format!("fold {}", f.fold), f.good_approval_delta, f.bad_rejection_delta))
            .collect();
        let p = a.out.with_extension("svg");
        fs::write(&p, plots::lift_svg(&format!("{} lift, Full minus Demo", report.family), &bars))?;
        m.output(&p)?;
    }
    println!(
        "{}: good approvals {:+.3} / 100, bad rejections {:+.3} / 100 (fold means)",
        report.family, report.mean_good_approval_delta, report.mean_bad_rejection_delta
    );
    let screened: usize = report.folds.iter().map(|f| f.screened).sum();
    let per100 = |n: usize| 100.0 * n as f64 / screened.max(1) as f64;
    println!(
        "  approved / 100: demo {:.2}, full {:.2}",
        per100(report.folds.iter().map(|f| f.demo_approved).sum()),
        per100(report.folds.iter().map(|f| f.full_approved).sum())
    );
    if let Some(ci) = &report.good_approval_ci {
        println!("  good-approval 95% CI [{:.3}, {:.3}]", ci.lo, ci.hi);
    }
    if let Some(ci) = &report.bad_rejection_ci {
        println!("  bad-rejection 95% CI [{:.3}, {:.3}]", ci.lo, ci.hi);
    }
    m.config = json!({ "policy": policy, "bootstrap": a.bootstrap });
    m.seeds.insert("seed".into(), a.seed);
    m.write(&sidecar(&a.out))
}

fn cmd_explain(a: &ExplainArgs, m: &mut RunManifest) -> Result<()> {
    if a.k == 0 {
        return Err(usage("--k must be >= 1"));
    }
    let text = fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model = TrainedModel::from_json(&text).with_context(|| format!("parsing {}", a.model.display()))?;
    if model.encoder.is_none() {
        bail!("model {} has no embedded encoder", a.model.display());
    }
    m.input(&a.model)?;
    let ds = read_csv(&a.data)?;
    m.input(&a.data)?;
    let view = feature_view(&ds, model.feature_set())?;
    let domains = FeatureDomains::fit(&view)?;
    let scores = model.score(&view.rows)?;
    let threshold = model.threshold();
    let mut rejected: Vec<usize> = (0..view.rows.len()).filter(|&i| scores[i] > threshold).collect();
    rejected.shuffle(&mut substream(a.seed, &[tag::EXPLAIN]));
    rejected.truncate(a.records);
    rejected.sort_unstable();
    let records: Vec<_> = rejected.iter().map(|&i| (ds.rows[i].id, view.rows[i].clone())).collect();
    let cfg = CfConfig { k: a.k, seed: a.seed, ..CfConfig::default() };
    let sets = explain_records(&model, &domains, &records, &cfg)?;
    let rows: Vec<_> = records.iter().map(|r| r.1.clone()).collect();
    let single = single_edit_flip_rate(&model, &domains, &rows, &cfg)?;
    let profile = flip_frequency(&sets).ok();

    ensure_dir(&a.out)?;
    let cf = a.out.join("counterfactuals.json");
    write_json(&cf, &sets)?;
    let txt = a.out.join("counterfactuals.txt");
    fs::write(&txt, sets.iter().map(render_text).collect::<String>())?;
    let prof = a.out.join("flip_frequency.json");
    write_json(&prof, &profile)?;
    let se = a.out.join("single_edit.json");
    write_json(&se, &single)?;
    for p in [&cf, &txt, &prof, &se] {
        m.output(p)?;
    }
    let valid: usize = sets.iter().map(|s| s.valid_candidates().count()).sum();
    println!("records: {} (of {} rejected)", records.len(), (0..scores.len()).filter(|&i| scores[i] > threshold).count());
    println!("valid candidates: {valid}");
    println!("single-edit flip rate: {:.4}", single.rate);
    if let Some(p) = &profile {
        let mut shares: Vec<_> = p.shares.iter().filter(|(_, &v)| v > 0.0).collect();
        shares.sort_by(|a, b| b.1.total_cmp(a.1));
        for (k, v) in shares {
            println!("  {k}: {v:.3}");
        }
    }
    m.config = json!({ "records": a.records, "k": a.k, "cf": cfg, "threshold": threshold });
    m.seeds.insert("seed".into(), a.seed);
    m.write(&a.out.join("manifest.json"))
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    let old = RunManifest::load(&a.manifest)?;
    for input in &old.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            bail!("input {} changed since the recorded run", input.path.display());
        }
    }
    let cli = Cli::try_parse_from(std::iter::once("ubsb".to_string()).chain(old.args.iter().cloned()))
        .map_err(|e| usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(usage("a replay manifest cannot point at another replay"));
    }
    run(&cli.command, &old.args)?;
    let mut mismatched = 0;
    for out in &old.outputs {
        let now = sha256_file(&out.path)?;
        let same = now == out.sha256;
        println!("{} {}", if same { "same   " } else { "CHANGED" }, out.path.display());
        mismatched += usize::from(!same);
    }
    if mismatched > 0 {
        bail!("{mismatched} output(s) differ from the manifest");
    }
    println!("replay reproduced {} output(s)", old.outputs.len());
    Ok(())
}

fn run(command: &Command, args: &[String]) -> Result<()> {
    let name = match command {
        Command::Generate(_) => "generate",
        Command::Validate(_) => "validate",
        Command::Train(_) => "train",
        Command::Ablate(_) => "ablate",
        Command::Lift(_) => "lift",
        Command::Explain(_) => "explain",
        Command::Replay(a) => return cmd_replay(a),
    };
    let m = &mut RunManifest::new(name, args);
    match command {
        Command::Generate(a) => cmd_generate(a, m),
        Command::Validate(a) => cmd_validate(a, m),
        Command::Train(a) => cmd_train(a, m),
        Command::Ablate(a) => cmd_ablate(a, m),
        Command::Lift(a) => cmd_lift(a, m),
        Command::Explain(a) => cmd_explain(a, m),
        Command::Replay(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let args = strip_threads(&argv[1..]);
    match run(&cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.is::<Reported>() {
                let _ = writeln!(std::io::stderr(), "error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Arguments recorded in manifests, without the thread count.
fn strip_threads(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--threads" {
            skip = true;
            continue;
        }
        if a.starts_with("--threads=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}
