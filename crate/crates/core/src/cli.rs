//! Command-line interface. Reports go to `--out` (default `report.json`) or stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::bounds::{base_bounds_weighted, stratified_bounds};
use crate::causal::{
    ate_bounds, ate_bounds_lp, ate_bounds_shared_response, ate_set_expansion, sign_test_single_crossing,
    sign_test_worst_case, ArmTables,
};
use crate::diagnostics::{completeness_report, hoffman_constant, joint_from_labeled, labeled_pairs};
use crate::error::{contract, Error, Result};
use crate::expansion::{estimate, ExpansionConfig, KappaRule};
use crate::io::{self, Dataset, Inputs, Report};
use crate::shadow::{aggregate_shadow_bounds, aggregation_gap_lower_bounds, ShadowOptions};
use crate::simlab::rng::{STREAM_GENERATE, STREAM_MASK, STREAM_MECHANISM};
use crate::simlab::{mask, run_benchmark, DgpConfig, MechanismPreset, MechanismSpec, ScenarioConfig, SourceSpec};
use crate::tables::{estimate_tables, identity_weights, PopulationTables};

#[derive(Debug, Parser)]
#[command(name = "mnar-bounds", version, about = "Bounds on outcome means when missingness depends on the outcome")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for simulate, mask and benchmark; overrides the config's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path for the report or CSV.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the report or CSV to stdout instead of writing a file.
    #[arg(long, global = true)]
    pub stdout: bool,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Record wall-clock time in the report (makes it non-reproducible byte-for-byte).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct Support {
    /// Number of outcome levels; defaults to the largest outcome seen.
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of prediction levels; defaults to the largest prediction seen, or 1.
    #[arg(long = "m-f")]
    pub m_f: Option<usize>,
    /// Comma-separated outcome weights g(1),...,g(M); the mean by default.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct Tube {
    /// Tube inflation: a nonnegative constant, `log` or `loglog`.
    #[arg(long, default_value = "0.5", value_parser = parse_kappa)]
    pub kappa: KappaRule,
    /// Box bound on the weights.
    #[arg(long = "C", visible_alias = "c", default_value_t = 50.0)]
    pub c: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Base, stratified and shadow bounds with gap guarantees.
    Bounds {
        data: PathBuf,
        #[command(flatten)]
        support: Support,
        /// Solve the shadow LP on sampled tables anyway.
        #[arg(long)]
        force_shadow: bool,
    },
    /// Set-expansion estimate from sampled data.
    Estimate {
        data: PathBuf,
        #[command(flatten)]
        support: Support,
        #[command(flatten)]
        tube: Tube,
    },
    /// Samples records from a DGP config and writes them as CSV.
    Simulate {
        config: PathBuf,
        /// Append the hidden outcome as `y_true`.
        #[arg(long)]
        with_truth: bool,
    },
    /// Masks a fully labeled CSV and writes the result as CSV.
    Mask {
        data: PathBuf,
        /// A preset name, comma-separated probabilities, or `uniform:LO,HI`.
        #[arg(long)]
        mechanism: String,
        /// Number of outcome levels; defaults to the largest outcome seen.
        #[arg(long)]
        m: Option<usize>,
        /// Append the hidden outcome as `y_true`.
        #[arg(long)]
        with_truth: bool,
    },
    /// Replicated benchmark from a scenario config; also writes per-replication plot data.
    Benchmark {
        config: PathBuf,
        /// Plot CSV path; defaults to the report path with `.plot.csv`.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Completeness diagnostics per stratum.
    Diagnose {
        data: PathBuf,
        #[command(flatten)]
        support: Support,
        /// Fully labeled calibration CSV used to build the joint of prediction and outcome.
        #[arg(long)]
        labeled: Option<PathBuf>,
    },
    /// Treatment-effect bounds and sign tests; needs a `d` column.
    Ate {
        data: PathBuf,
        #[command(flatten)]
        support: Support,
        #[command(flatten)]
        tube: Tube,
        /// Assert that both arms share one response mechanism.
        #[arg(long)]
        assert_equal_response: bool,
    },
}

pub fn parse_kappa(s: &str) -> std::result::Result<KappaRule, String> {
    match s {
        "log" => Ok(KappaRule::Log),
        "loglog" => Ok(KappaRule::LogLog),
        _ => match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(KappaRule::Constant(v)),
            _ => Err(format!("kappa must be a nonnegative number, `log` or `loglog`, got '{s}'")),
        },
    }
}

/// Parses `--mechanism`.
pub fn parse_mechanism(s: &str) -> Result<MechanismSpec> {
    if let Some(rest) = s.strip_prefix("uniform:") {
        let v = parse_floats(rest)?;
        return match v[..] {
            [lo, hi] => Ok(MechanismSpec::UniformRandom { lo, hi }),
            _ => contract("uniform mechanism needs two bounds: uniform:LO,HI"),
        };
    }
    if let Ok(p) = serde_json::from_value::<MechanismPreset>(Value::String(s.to_string())) {
        return Ok(MechanismSpec::Preset(p));
    }
    Ok(MechanismSpec::Explicit(parse_floats(s)?))
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Contract(format!("'{t}' is not a number"))))
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let start = Instant::now();
    let report = match &cli.command {
        Command::Bounds { data, support, force_shadow } => cmd_bounds(data, support, *force_shadow)?,
        Command::Estimate { data, support, tube } => cmd_estimate(data, support, tube)?,
        Command::Simulate { config, with_truth } => return cmd_simulate(config, *with_truth, common),
        Command::Mask { data, mechanism, m, with_truth } => return cmd_mask(data, mechanism, *m, *with_truth, common),
        Command::Benchmark { config, plot } => cmd_benchmark(config, plot.as_deref(), common)?,
        Command::Diagnose { data, support, labeled } => cmd_diagnose(data, support, labeled.as_deref())?,
        Command::Ate { data, support, tube, assert_equal_response } => {
            cmd_ate(data, support, tube, *assert_equal_response)?
        }
    };
    let mut report = report;
    if common.timing {
        report.timing = Some(start.elapsed().as_secs_f64());
    }
    emit(&report.to_json()?, common, "report.json")
}

/// Writes `body` to stdout or a file; in the file case stdout gets the path.
fn emit(body: &str, common: &Common, default: &str) -> Result<()> {
    if common.stdout {
        print!("{body}");
    } else {
        let path = common.out.clone().unwrap_or_else(|| PathBuf::from(default));
        fs::write(&path, body)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn data_inputs(path: &Path, settings: Value) -> Result<Inputs> {
    let mut inputs = Inputs { settings, ..Inputs::default() };
    inputs.files.insert(file_name(path), io::file_digest(path)?);
    Ok(inputs)
}

struct Loaded {
    data: Dataset,
    pop: PopulationTables,
    m: usize,
    m_f: usize,
    g: Vec<f64>,
}

fn load(path: &Path, support: &Support) -> Result<Loaded> {
    let data = io::read_records(path)?;
    if data.y_true.is_some() {
        return contract("the y_true column is only accepted by `benchmark`");
    }
    let max_y = data.records.iter().filter_map(|r| r.y).max().unwrap_or(0) as usize;
    let max_f = data.records.iter().filter_map(|r| r.f).max().unwrap_or(1) as usize;
    let m = support.m.unwrap_or(max_y);
    let m_f = support.m_f.unwrap_or(max_f);
    let pop = estimate_tables(&data.records, m, m_f)?;
    let g = support.weights.clone().unwrap_or_else(|| identity_weights(m));
    Ok(Loaded { data, pop, m, m_f, g })
}

fn support_json(l: &Loaded) -> Value {
    json!({ "m": l.m, "m_f": l.m_f, "n": l.data.records.len(), "weights": l.g })
}

fn cmd_bounds(path: &Path, support: &Support, force_shadow: bool) -> Result<Report> {
    let l = load(path, support)?;
    let mut warnings = l.pop.warnings().to_vec();
    let base = base_bounds_weighted(&l.pop.pooled(), &l.g)?;
    let stratified = stratified_bounds(&l.pop, &l.g)?;
    let shadow = if l.m_f < 2 {
        Value::Null
    } else if force_shadow {
        let opts = ShadowOptions { weights: Some(l.g.clone()), force: true };
        match aggregate_shadow_bounds(&l.pop, &opts) {
            Ok(r) => serde_json::to_value(r)?,
            Err(e) => {
                warnings.push(format!("shadow LP failed: {e}"));
                Value::Null
            }
        }
    } else {
        warnings.push("shadow LP skipped on sampled tables; pass --force-shadow or use `estimate`".into());
        Value::Null
    };
    let gaps = if support.weights.is_none() && l.m_f >= 2 {
        serde_json::to_value(aggregation_gap_lower_bounds(&l.pop))?
    } else {
        Value::Null
    };
    let diagnostics = l
        .pop
        .strata()
        .iter()
        .map(|s| {
            let c = completeness_report(&s.table, None, None)?;
            Ok(json!({
                "stratum": s.id,
                "rank": c.b_spectrum.rank,
                "sigma_min": c.b_spectrum.sigma_min,
                "kappa": c.b_spectrum.kappa,
                "complete": c.complete,
                "dropped_rows": c.dropped_rows,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let results = json!({
        "support": support_json(&l),
        "strata": l.pop.strata().iter().map(|s| json!({"id": s.id, "weight": s.weight})).collect::<Vec<_>>(),
        "base": base,
        "stratified": stratified,
        "shadow": shadow,
        "gap_lower_bounds": gaps,
        "diagnostics": diagnostics,
    });
    let mut report =
        Report::new("bounds", data_inputs(path, json!({ "force_shadow": force_shadow }))?, results);
    report.warnings = warnings;
    Ok(report)
}

fn cmd_estimate(path: &Path, support: &Support, tube: &Tube) -> Result<Report> {
    let l = load(path, support)?;
    let cfg = ExpansionConfig { c: tube.c, kappa: tube.kappa, weights: support.weights.clone() };
    let est = estimate(&l.pop, &cfg)?;
    let mut warnings = l.pop.warnings().to_vec();
    if est.binds_at_c {
        warnings.push(format!("a weight reached the box bound C = {}; coverage may fail", tube.c));
    }
    let results = json!({ "support": support_json(&l), "estimate": est });
    let mut report = Report::new("estimate", data_inputs(path, json!({ "config": cfg }))?, results);
    report.warnings = warnings;
    Ok(report)
}

fn cmd_diagnose(path: &Path, support: &Support, labeled: Option<&Path>) -> Result<Report> {
    let l = load(path, support)?;
    let h = match labeled {
        Some(p) => {
            let lab = io::read_records(p)?;
            Some(joint_from_labeled(&labeled_pairs(&lab.records)?, l.m, l.m_f)?)
        }
        None => None,
    };
    let strata = l
        .pop
        .strata()
        .iter()
        .map(|s| {
            let report = completeness_report(&s.table, h.as_ref(), None)?;
            let hoffman = hoffman_constant(s.table.alpha()).ok();
            Ok(json!({ "stratum": s.id, "report": report, "hoffman": hoffman }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut inputs = data_inputs(path, json!({}))?;
    if let Some(p) = labeled {
        inputs.files.insert(file_name(p), io::file_digest(p)?);
    }
    Ok(Report::new("diagnose", inputs, json!({ "support": support_json(&l), "strata": strata })))
}

fn cmd_ate(path: &Path, support: &Support, tube: &Tube, asserted: bool) -> Result<Report> {
    if support.weights.is_some() {
        return contract("effect bounds use the mean; --weights is not supported");
    }
    let l = load(path, support)?;
    let arms = ArmTables::from_records(&l.data.records, l.m, l.m_f)?;
    let cfg = ExpansionConfig { c: tube.c, kappa: tube.kappa, weights: None };
    let set_expansion = if l.m_f >= 2 { serde_json::to_value(ate_set_expansion(&arms, &cfg)?)? } else { Value::Null };
    let results = json!({
        "support": support_json(&l),
        "n_arm": [arms.n0(), arms.n1()],
        "base": ate_bounds(&arms),
        "lp": ate_bounds_lp(&arms)?,
        "shared_response": ate_bounds_shared_response(&arms)?,
        "set_expansion": set_expansion,
        "sign_test_worst_case": sign_test_worst_case(&arms),
        "sign_test_single_crossing": sign_test_single_crossing(&arms, asserted),
    });
    let settings = json!({ "config": cfg, "assert_equal_response": asserted });
    Ok(Report::new("ate", data_inputs(path, settings)?, results))
}

fn cmd_simulate(path: &Path, with_truth: bool, common: &Common) -> Result<()> {
    let mut cfg: DgpConfig = io::read_config(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let dgp = cfg.resolve()?;
    let records = dgp.generate(cfg.n, cfg.seed, STREAM_GENERATE);
    let truth: Option<Vec<u32>> =
        with_truth.then(|| dgp.generate_labeled(cfg.n, cfg.seed, STREAM_GENERATE).iter().map(|l| l.y).collect());
    let mut buf = Vec::new();
    io::write_records(&records, truth.as_deref(), &mut buf)?;
    emit(&String::from_utf8_lossy(&buf), common, "simulated.csv")
}

fn cmd_mask(path: &Path, mechanism: &str, m: Option<usize>, with_truth: bool, common: &Common) -> Result<()> {
    let data = io::read_labeled(path)?;
    let m = m.unwrap_or_else(|| data.iter().map(|r| r.y).max().unwrap_or(0) as usize);
    let seed = common.seed.unwrap_or(0);
    let pi = parse_mechanism(mechanism)?.resolve(m, seed, STREAM_MECHANISM)?;
    let masked = mask(&data, &pi, seed, STREAM_MASK)?;
    let mut buf = Vec::new();
    let truth = with_truth.then(|| masked.truth().outcomes());
    io::write_records(&masked.records, truth, &mut buf)?;
    emit(&String::from_utf8_lossy(&buf), common, "masked.csv")
}

fn cmd_benchmark(path: &Path, plot: Option<&Path>, common: &Common) -> Result<Report> {
    let mut cfg: ScenarioConfig = io::read_config(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let mut inputs = Inputs {
        config_hash: Some(io::config_hash(&cfg)?),
        settings: json!({}),
        seed: Some(cfg.seed),
        ..Inputs::default()
    };
    inputs.files.insert(file_name(path), io::file_digest(path)?);
    if let SourceSpec::Dataset { path: data, .. } = &mut cfg.source {
        if data.is_relative() {
            *data = path.parent().unwrap_or(Path::new("")).join(&*data);
        }
        inputs.files.insert(file_name(data), io::file_digest(&*data)?);
    }
    let report = run_benchmark(&cfg)?;

    let plot_path = match (plot, &common.out) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(out)) => out.with_extension("plot.csv"),
        (None, None) => PathBuf::from("benchmark.plot.csv"),
    };
    let mut w = csv::Writer::from_path(&plot_path)?;
    w.write_record(["rep", "estimator", "truth", "lo", "hi", "value", "covered", "failure"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &report.rows {
        w.write_record([
            r.rep.to_string(),
            r.estimator.clone(),
            r.truth.to_string(),
            fmt(r.lo),
            fmt(r.hi),
            fmt(r.value),
            r.covered.map(|c| (c as u8).to_string()).unwrap_or_default(),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    inputs.settings = json!({ "plot": file_name(&plot_path) });

    let results = json!({
        "reps": report.reps,
        "seed": report.seed,
        "response_rate": report.response_rate,
        "estimators": report.estimators,
        "presets": report.presets,
        "plot_rows": report.rows.len(),
    });
    Ok(Report::new("benchmark", inputs, results))
}
