//! `repro`: candidate search, model confidence sets, coefficient sets and
//! simulations from the command line.

mod expr;
mod input;
mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{json, Value};

use repro_core::baselines::SelectionCriterion;
use repro_core::coef_cs::{
    functional_conf_set, joint_conf_set, modified_conf_set, single_coef_ci, subset_conf_region, Functional,
};
use repro_core::model_cs::model_confidence_set;
use repro_core::sim::{run_replications, Scale, ScenarioConfig};
use repro_core::{search_candidates, CandidateSet, Dataset, ModelSupport, ReproError, SearchConfig, SearchMode, Stream};

use manifest::ManifestBuilder;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<ReproError> for CliError {
    fn from(e: ReproError) -> Self {
        CliError { code: if e.is_usage() { 2 } else { 3 }, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "repro", version, about = "Repro-samples inference for high-dimensional linear regression")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "REPRO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect candidate models from repro copies of the error.
    Search(SearchArgs),
    /// Confidence set for the true model within a candidate set.
    ModelCs(ModelCsArgs),
    /// Confidence sets for coefficients, subsets, the full vector or a linear functional.
    Coef(CoefArgs),
    /// Run a simulation scenario and write CSV and JSON reports.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Design matrix CSV (n rows, p columns, optional header).
    #[arg(long)]
    x: PathBuf,
    /// Response CSV (n rows, one column, optional header).
    #[arg(long)]
    y: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Number of repro copies.
    #[arg(long, default_value_t = 1000)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the size-constrained objective for every size up to this bound.
    #[arg(long)]
    k_max: Option<usize>,
    /// Extended-BIC window as `lo,hi` (default: consistency bound to 1).
    #[arg(long, value_parser = parse_pair)]
    zeta: Option<(f64, f64)>,
    /// Largest support kept (default: min(n - 5, n / 2)).
    #[arg(long)]
    max_support: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelCsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Candidate set JSON written by `search`.
    #[arg(long)]
    candidates: PathBuf,
    /// Coverage level of the set.
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    /// Conditional draws per candidate.
    #[arg(long = "J", default_value_t = 200)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["index", "subset", "joint", "functional"])))]
struct CoefArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Candidate set JSON written by `search`.
    #[arg(long)]
    candidates: PathBuf,
    /// Single coefficient (1-based).
    #[arg(long)]
    index: Option<usize>,
    /// Comma-separated 1-based coefficient indices.
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<usize>>,
    /// The full coefficient vector.
    #[arg(long)]
    joint: bool,
    /// Linear functional such as `b1 - 2*b3`.
    #[arg(long)]
    functional: Option<String>,
    /// Coverage level (default 0.95).
    #[arg(long, conflicts_with_all = ["alpha1", "alpha2"])]
    alpha: Option<f64>,
    /// Level of the model confidence set restricting the union.
    #[arg(long, requires = "alpha2")]
    alpha1: Option<f64>,
    /// Level of the per-model regions; the reported level is alpha1 + alpha2 - 1.
    #[arg(long, requires = "alpha1")]
    alpha2: Option<f64>,
    /// Conditional draws for the model confidence set (with --alpha1).
    #[arg(long = "J", default_value_t = 200)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// M1, M2, M3 or a scenario JSON file.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "desk")]
    scale: String,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "J")]
    draws: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    bootstrap_b: Option<usize>,
    /// Bootstrap criteria, comma-separated (aic, bic, cv).
    #[arg(long, value_delimiter = ',')]
    bootstrap: Option<Vec<String>>,
    #[arg(long)]
    no_model_cs: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated numbers")?;
    Ok((a.trim().parse().map_err(|_| format!("bad number '{a}'"))?, b.trim().parse().map_err(|_| format!("bad number '{b}'"))?))
}

fn write_output(out: Option<&Path>, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize") + "\n";
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError { code: 3, message: format!("{}: {e}", p.display()) }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError { code: 3, message: e.to_string() }),
    }
}

fn load_data(args: &DataArgs, m: &mut ManifestBuilder) -> Result<Dataset, CliError> {
    m.input(&args.x)?;
    m.input(&args.y)?;
    let (data, names) = input::load_dataset(&args.x, &args.y)?;
    m.columns = names;
    Ok(data)
}

/// Reads a candidate set, either bare or wrapped in a `search` output.
fn load_candidates(path: &Path, data: &Dataset, m: &mut ManifestBuilder) -> Result<CandidateSet, CliError> {
    m.input(path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut v: Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if let Some(inner) = v.get_mut("candidates") {
        v = inner.take();
    }
    let set: CandidateSet =
        serde_json::from_value(v).map_err(|e| CliError::usage(format!("{}: not a candidate set: {e}", path.display())))?;
    if set.is_empty() {
        return Err(CliError::usage(format!("{}: candidate set is empty", path.display())));
    }
    for model in &set.models {
        model.validate(data.n(), data.p())?;
    }
    Ok(set)
}

fn cmd_search(a: &SearchArgs) -> Result<(), CliError> {
    let mut m = ManifestBuilder::start("search");
    let data = load_data(&a.data, &mut m)?;
    let mut config = SearchConfig::new(a.d, a.seed);
    config.zeta = a.zeta;
    config.max_support = a.max_support;
    if let Some(k) = a.k_max {
        config.mode = SearchMode::Constrained { k_max: k };
    }
    let set = search_candidates(&data, &config)?;
    let (z0, z1) = config.zeta_for(data.n(), data.p());
    let snapshot = json!({
        "d": a.d, "mode": config.mode, "zeta": [z0, z1],
        "max_support": config.max_support_for(data.n()), "n": data.n(), "p": data.p(),
    });
    let manifest = m.finish(Some(a.seed), snapshot);
    write_output(a.out.as_deref(), &json!({ "manifest": manifest, "candidates": set }))
}

fn cmd_model_cs(a: &ModelCsArgs) -> Result<(), CliError> {
    let mut m = ManifestBuilder::start("model-cs");
    let data = load_data(&a.data, &mut m)?;
    let set = load_candidates(&a.candidates, &data, &mut m)?;
    if a.draws == 1 {
        eprintln!("warning: --J 1 gives a degenerate pmf; every tail probability is 0 or 1");
    }
    let cs = model_confidence_set(&data, &set, a.alpha, a.draws, a.seed)?;
    let manifest = m.finish(Some(a.seed), json!({ "alpha": a.alpha, "J": a.draws }));
    write_output(a.out.as_deref(), &json!({ "manifest": manifest, "model_cs": cs }))
}

fn to_zero_based(indices: &[usize], p: usize) -> Result<ModelSupport, CliError> {
    if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > p) {
        return Err(CliError::usage(format!("coefficient index {bad} outside 1..={p}")));
    }
    Ok(ModelSupport::from_one_based(indices)?)
}

fn cmd_coef(a: &CoefArgs) -> Result<(), CliError> {
    let mut m = ManifestBuilder::start("coef");
    let data = load_data(&a.data, &mut m)?;
    let set = load_candidates(&a.candidates, &data, &mut m)?;
    let p = data.p();
    let all = ModelSupport::new((0..p).collect());
    let lambda = if let Some(i) = a.index {
        to_zero_based(&[i], p)?
    } else if let Some(s) = &a.subset {
        to_zero_based(s, p)?
    } else {
        all.clone()
    };
    let target = if let Some(i) = a.index {
        json!({ "index": i })
    } else if let Some(s) = &a.subset {
        json!({ "subset": lambda.one_based(), "requested": s })
    } else if a.joint {
        json!({ "joint": true })
    } else {
        json!({ "functional": a.functional })
    };
    let weights = match &a.functional {
        Some(e) => Some(expr::parse_linear(e, p).map_err(CliError::usage)?),
        None => None,
    };

    let mut body = serde_json::Map::new();
    let (level, seed) = if let (Some(a1), Some(a2)) = (a.alpha1, a.alpha2) {
        let (region, mcs) = modified_conf_set(&data, &set, a1, a2, a.draws, a.seed, &lambda)?;
        body.insert("model_cs".into(), serde_json::to_value(&mcs).expect("serializable"));
        if let Some(w) = &weights {
            let f = functional_conf_set(&Functional::Linear(DVector::from_vec(w.clone())), &region, 1, Stream::new(a.seed))?;
            body.insert("functional".into(), serde_json::to_value(&f).expect("serializable"));
        }
        body.insert("region".into(), serde_json::to_value(&region).expect("serializable"));
        (a1 + a2 - 1.0, Some(a.seed))
    } else {
        let alpha = a.alpha.unwrap_or(0.95);
        if let Some(i) = a.index {
            let ci = single_coef_ci(&data.y, &data.x, i - 1, &set, alpha)?;
            body.insert("width".into(), json!(ci.width()));
            body.insert("interval".into(), serde_json::to_value(&ci).expect("serializable"));
        } else if a.subset.is_some() {
            let r = subset_conf_region(&data.y, &data.x, &lambda, &set, alpha)?;
            body.insert("region".into(), serde_json::to_value(&r).expect("serializable"));
        } else {
            let r = joint_conf_set(&data.y, &data.x, &set, alpha)?;
            if let Some(w) = &weights {
                let f = functional_conf_set(&Functional::Linear(DVector::from_vec(w.clone())), &r, 1, Stream::new(0))?;
                body.insert("functional".into(), serde_json::to_value(&f).expect("serializable"));
            } else {
                body.insert("shrunk_proportion".into(), json!(r.shrunk_proportion));
                body.insert("region".into(), serde_json::to_value(&r).expect("serializable"));
            }
        }
        (alpha, None)
    };
    body.insert("level".into(), json!(level));
    body.insert("target".into(), target);
    let manifest = m.finish(seed, json!({ "alpha": a.alpha, "alpha1": a.alpha1, "alpha2": a.alpha2, "J": a.draws }));
    body.insert("manifest".into(), serde_json::to_value(&manifest).expect("serializable"));
    write_output(a.out.as_deref(), &Value::Object(body))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut m = ManifestBuilder::start("simulate");
    let scale: Scale = a.scale.parse()?;
    let path = Path::new(&a.scenario);
    let mut cfg = if path.is_file() {
        m.input(path)?;
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str::<ScenarioConfig>(&text)
            .map_err(|e| CliError::usage(format!("{}: not a scenario: {e}", path.display())))?
    } else {
        ScenarioConfig::preset(&a.scenario, scale)?
    };
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.d {
        cfg.d = d;
    }
    if let Some(j) = a.draws {
        cfg.draws = j;
    }
    if let Some(b) = a.bootstrap_b {
        cfg.bootstrap_b = b;
    }
    if let Some(list) = &a.bootstrap {
        cfg.stages.bootstrap = list
            .iter()
            .filter(|s| !s.is_empty() && s.as_str() != "none")
            .map(|s| s.parse::<SelectionCriterion>())
            .collect::<Result<_, _>>()?;
    }
    if a.no_model_cs {
        cfg.stages.model_cs = false;
    }
    if scale == Scale::Full {
        eprintln!(
            "warning: full scale runs {} replications with d = {} on n = {}, p = {}; expect hours of compute",
            cfg.reps, cfg.d, cfg.n, cfg.p
        );
    }
    cfg.validate()?;
    let report = run_replications(&cfg)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError { code: 3, message: format!("{}: {e}", a.out_dir.display()) })?;
    let json_path = a.out_dir.join("report.json");
    let csv_path = a.out_dir.join("report.csv");
    let manifest = m.finish(Some(cfg.seed), json!({ "scale": a.scale, "outputs": ["report.json", "report.csv"] }));
    write_output(Some(&json_path), &json!({ "manifest": manifest, "report": report }))?;
    let csv = format!("# manifest: report.json\n{}", report.to_csv());
    fs::write(&csv_path, csv).map_err(|e| CliError { code: 3, message: format!("{}: {e}", csv_path.display()) })?;
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Search(a) => cmd_search(a),
        Command::ModelCs(a) => cmd_model_cs(a),
        Command::Coef(a) => cmd_coef(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
