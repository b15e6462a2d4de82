//! Command-line front end. Thread count comes from `DLCR_THREADS`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use dlcr::experiments::gcheck::{check_g_generic, check_g_strict, BlockWitness};
use dlcr::experiments::mixture::mixture_curse_demo;
use dlcr::experiments::oracle::{oracle_convergence_study, OracleDesign};
use dlcr::gibbs::{run_chain, UpdateMode};
use dlcr::io::archive::{read_archive, write_archive, write_latents, write_params};
use dlcr::io::config::{read_config_table, set_value};
use dlcr::io::summary::{write_fit_summary, write_json, write_manifest, FitReport, Manifest};
use dlcr::io::tables::{load_dataset, read_f64_matrix, read_outcomes, write_dataset, write_matrix, write_rows};
use dlcr::io::RunConfig;
use dlcr::metrics::{auc, auc_per_column, cooccurrence_confusion, posterior_predictive_new, rmse};
use dlcr::model::{simulate_study, EntryKind, Hyperparams, ModelConfig, PriorConstraints};
use dlcr::postproc::{refine_g, relabel, summarize, waic};
use dlcr::{Error, Result};

#[derive(Parser)]
#[command(name = "dlcr", version, about = "Bayesian deep latent class regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and its true parameters.
    Simulate(SimulateArgs),
    /// Fit one (q, d) model and write the archive, summaries and WAIC.
    Fit(RunArgs),
    /// Fit every (q, d) in the selection grid and tabulate WAIC.
    Select(RunArgs),
    /// Posterior predictive probabilities and metrics from a fitted archive.
    Predict(PredictArgs),
    /// Singleton-versus-one-cluster log marginal ratio over growing p.
    DiagnoseMixture(MixtureArgs),
    /// Distance between the posterior and the Bayes oracle over growing p.
    DiagnoseOracle(OracleArgs),
    /// Check a loading matrix against the identifiability conditions.
    CheckG(CheckGArgs),
}

/// Every flag overrides the matching field of the configuration file.
#[derive(Args, Serialize)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    t: Option<PathBuf>,
    /// Comma-separated entry kinds: binary, count, categorical:D.
    #[arg(long, value_delimiter = ',')]
    entries: Option<Vec<String>>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    beta_var: Option<f64>,
    #[arg(long)]
    gamma_var: Option<f64>,
    #[arg(long)]
    n_iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    w_mode: Option<UpdateMode>,
    #[arg(long)]
    g_mode: Option<UpdateMode>,
    #[arg(long)]
    step_scale: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    coreset: Option<Vec<usize>>,
    #[arg(long)]
    subsample_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    select_q: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    select_d: Option<Vec<usize>>,
    #[arg(long)]
    refine_threshold: Option<f64>,
    #[arg(long)]
    cooccurrence_threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    q: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    px: usize,
    #[arg(long, default_value_t = 0)]
    pt: usize,
    #[arg(long, value_delimiter = ',')]
    entries: Option<Vec<String>>,
    /// Draw the truth from the plain prior instead of the constrained
    /// simulation prior (identity blocks in G, |β| bounded below).
    #[arg(long)]
    unconstrained: bool,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory written by `fit` (its `archive/` subdirectory).
    #[arg(long)]
    archive: PathBuf,
    /// Covariates of the observations to predict; zero-width when absent.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Observed outcomes for the metrics.
    #[arg(long)]
    y: Option<PathBuf>,
    /// Number of rows to predict when `--x` is absent and `--y` is not given.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    cooccurrence_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MixtureArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [16, 64, 256, 1024, 4096])]
    p: Vec<usize>,
    /// Number of replicate datasets, seeded `seed, seed + 1, …`.
    #[arg(long, default_value_t = 100)]
    replicates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [4, 16, 64, 128])]
    p: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 2000)]
    n_iters: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckGArgs {
    /// p × q table of 0/1 loadings with a header row.
    #[arg(long)]
    g: PathBuf,
    /// Also write `gcheck.json` and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Select(a) => select(a),
        Command::Predict(a) => predict(a),
        Command::DiagnoseMixture(a) => diagnose_mixture(a),
        Command::DiagnoseOracle(a) => diagnose_oracle(a),
        Command::CheckG(a) => check_g(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("DLCR_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("DLCR_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))
}

fn parse_entries(list: &[String]) -> Result<Vec<EntryKind>> {
    list.iter().map(|s| EntryKind::parse(s)).collect()
}

fn path_value(p: &Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

fn int_value(v: usize) -> toml::Value {
    toml::Value::Integer(v as i64)
}

fn int_list(v: &[usize]) -> toml::Value {
    toml::Value::Array(v.iter().map(|&k| int_value(k)).collect())
}

impl RunArgs {
    /// Merges flags over the configuration file. For `select` the single-model
    /// `[model]` section may be omitted; the first grid cell fills it.
    fn resolve(&self, for_select: bool) -> Result<RunConfig> {
        let mut t = match &self.config {
            Some(path) => read_config_table(path)?,
            None => toml::Table::new(),
        };
        let mut set = |key: &[&str], v: Option<toml::Value>| match v {
            Some(v) => set_value(&mut t, key, v),
            None => Ok(()),
        };
        set(&["output"], self.out.as_deref().map(path_value))?;
        set(&["data", "y"], self.y.as_deref().map(path_value))?;
        set(&["data", "x"], self.x.as_deref().map(path_value))?;
        set(&["data", "t"], self.t.as_deref().map(path_value))?;
        set(
            &["data", "entries"],
            self.entries.as_ref().map(|e| toml::Value::Array(e.iter().cloned().map(toml::Value::String).collect())),
        )?;
        set(&["model", "q"], self.q.map(int_value))?;
        set(&["model", "d"], self.d.map(int_value))?;
        set(&["prior", "b"], self.b.map(toml::Value::Float))?;
        set(&["prior", "beta_var"], self.beta_var.map(toml::Value::Float))?;
        set(&["prior", "gamma_var"], self.gamma_var.map(toml::Value::Float))?;
        set(&["sampler", "n_iters"], self.n_iters.map(int_value))?;
        set(&["sampler", "burn_in"], self.burn_in.map(int_value))?;
        set(&["sampler", "thin"], self.thin.map(int_value))?;
        if let Some(seed) = self.seed {
            let seed = i64::try_from(seed).map_err(|_| Error::Config(format!("seed {seed} exceeds {}", i64::MAX)))?;
            set(&["sampler", "seed"], Some(toml::Value::Integer(seed)))?;
        }
        let mode =
            |m: UpdateMode| toml::Value::String(if m == UpdateMode::Block { "block" } else { "entrywise" }.into());
        set(&["sampler", "w_mode"], self.w_mode.map(mode))?;
        set(&["sampler", "g_mode"], self.g_mode.map(mode))?;
        set(&["sampler", "step_scale"], self.step_scale.map(toml::Value::Float))?;
        set(&["sampler", "coreset"], self.coreset.as_deref().map(int_list))?;
        set(&["sampler", "subsample_size"], self.subsample_size.map(int_value))?;
        set(&["select", "q"], self.select_q.as_deref().map(int_list))?;
        set(&["select", "d"], self.select_d.as_deref().map(int_list))?;
        set(&["postproc", "refine_threshold"], self.refine_threshold.map(toml::Value::Float))?;
        set(&["metrics", "cooccurrence_threshold"], self.cooccurrence_threshold.map(toml::Value::Float))?;
        if for_select && !t.contains_key("model") {
            let first = |key: &str| {
                t.get("select")
                    .and_then(|s| s.get(key))
                    .and_then(|v| v.as_array())
                    .and_then(|a| a.first().cloned())
                    .unwrap_or(toml::Value::Integer(1))
            };
            let (q, d) = (first("q"), first("d"));
            set_value(&mut t, &["model", "q"], q)?;
            set_value(&mut t, &["model", "d"], d)?;
        }
        RunConfig::from_table(t)
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let entries = match &a.entries {
        Some(e) => parse_entries(e)?,
        None => vec![EntryKind::Binary; a.p],
    };
    let config = ModelConfig { p: a.p, q: a.q, d: a.d, px: a.px, pt: a.pt, entries };
    config.validate()?;
    let hyper = Hyperparams::default_for(&config);
    let constraints = if a.unconstrained {
        PriorConstraints::default()
    } else {
        PriorConstraints { identity_blocks: a.p >= 3 * a.q, ..PriorConstraints::simulation_truth() }
    };
    let study = simulate_study(&config, &hyper, a.n, a.seed, &constraints)?;
    write_dataset(&a.out, &study.sim.data)?;
    let truth = a.out.join("truth");
    write_params(&truth, &[(0, 0, &study.truth)])?;
    write_latents(&truth, &[(0, 0, study.sim.z.as_slice(), &study.sim.w)])?;
    write_json(&truth.join("config.json"), &config)?;

    #[derive(Serialize)]
    struct Settings<'a> {
        config: &'a ModelConfig,
        n: usize,
        identity_blocks: bool,
        min_abs_beta: Option<f64>,
    }
    let settings = Settings {
        config: &config,
        n: a.n,
        identity_blocks: constraints.identity_blocks,
        min_abs_beta: constraints.min_abs_beta,
    };
    write_manifest(&a.out, Manifest::new("simulate", Some(a.seed), settings)?)
}

fn load(cfg: &RunConfig) -> Result<dlcr::model::Dataset> {
    load_dataset(&cfg.paths(), cfg.entries()?.as_deref())
}

fn fit(a: RunArgs) -> Result<()> {
    let cfg = a.resolve(false)?;
    let data = load(&cfg)?;
    let config = cfg.model_config(data.p(), data.x.ncols(), data.t.ncols(), cfg.model.q, cfg.model.d)?;
    let hyper = cfg.prior_for(&config)?;
    let schedule = cfg.schedule();
    let samples = run_chain(&data, &config, &hyper, &schedule, None)?;
    let (samples, relabeling) = relabel(&samples)?;
    let out = &cfg.output;
    write_archive(&out.join("archive"), &samples)?;
    let refined = refine_g(&samples, cfg.postproc.refine_threshold)?;
    let summary = summarize(&refined)?;
    let report = FitReport {
        q: config.q,
        d: config.d,
        n_samples: samples.len(),
        waic: waic(&samples.loglik)?,
        relabeling,
        refine_threshold: cfg.postproc.refine_threshold,
        mh_acceptance: samples.mh_acceptance.clone(),
        warnings: summary.warnings.clone(),
    };
    write_fit_summary(out, &summary, &report)?;
    write_manifest(out, Manifest::new("fit", Some(cfg.sampler.seed), &cfg)?)
}

#[derive(Serialize)]
struct GridCell {
    q: usize,
    d: usize,
    waic: f64,
    lppd: f64,
    p_waic: f64,
}

fn select(a: RunArgs) -> Result<()> {
    let cfg = a.resolve(true)?;
    let data = load(&cfg)?;
    let schedule = cfg.schedule();
    let cells: Vec<(usize, usize)> =
        cfg.select.q.iter().flat_map(|&q| cfg.select.d.iter().map(move |&d| (q, d))).collect();
    let grid: Vec<GridCell> = cells
        .par_iter()
        .map(|&(q, d)| {
            let config = cfg.model_config(data.p(), data.x.ncols(), data.t.ncols(), q, d)?;
            let hyper = cfg.prior_for(&config)?;
            let samples = run_chain(&data, &config, &hyper, &schedule, None)?;
            let w = waic(&samples.loglik)?;
            Ok(GridCell { q, d, waic: w.waic, lppd: w.lppd, p_waic: w.p_waic })
        })
        .collect::<Result<_>>()?;
    let out = &cfg.output;
    std::fs::create_dir_all(out)?;
    write_rows(
        &out.join("waic_grid.csv"),
        &["q", "d", "waic", "lppd", "p_waic"],
        grid.iter().map(|c| {
            vec![c.q.to_string(), c.d.to_string(), c.waic.to_string(), c.lppd.to_string(), c.p_waic.to_string()]
        }),
    )?;
    let best = grid.iter().min_by(|a, b| a.waic.total_cmp(&b.waic)).expect("nonempty grid");
    println!("minimum WAIC {} at q = {}, d = {}", best.waic, best.q, best.d);
    write_manifest(out, Manifest::new("select", Some(cfg.sampler.seed), &cfg)?)
}

#[derive(Serialize)]
struct PredictMetrics {
    /// Columns with binary entries, over which all metrics are computed.
    binary_columns: Vec<usize>,
    rmse: Option<f64>,
    auc: Option<f64>,
    auc_per_column: Vec<Option<f64>>,
    cooccurrence_threshold: f64,
    cooccurrence_tp: u64,
    cooccurrence_fp: u64,
    cooccurrence_fn: u64,
    cooccurrence_f1: Option<f64>,
}

fn select_columns<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

fn predict(a: PredictArgs) -> Result<()> {
    let samples = read_archive(&a.archive)?;
    let config = samples.config.clone();
    let y = a.y.as_deref().map(|p| read_outcomes(p, Some(&config.entries))).transpose()?.map(|(_, y)| y);
    let x = match (&a.x, &y, a.n) {
        (Some(p), _, _) => read_f64_matrix(p)?.1,
        (None, Some(y), _) => DMatrix::zeros(y.nrows(), 0),
        (None, None, Some(n)) => DMatrix::zeros(n, 0),
        (None, None, None) => return Err(Error::Config("predict needs --x, --y or --n".into())),
    };
    let phat = posterior_predictive_new(&samples, &x)?;
    std::fs::create_dir_all(&a.out)?;
    let header: Vec<String> = (1..=config.p).map(|k| format!("y{k}")).collect();
    write_matrix(&a.out.join("phat.csv"), &header, &phat)?;
    if let Some(y) = &y {
        if y.nrows() != phat.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} outcome rows but {} covariate rows",
                y.nrows(),
                phat.nrows()
            )));
        }
        let cols: Vec<usize> = (0..config.p).filter(|&i| config.entries[i] == EntryKind::Binary).collect();
        let (pb, yb) = (select_columns(&phat, &cols), select_columns(y, &cols));
        let any = !cols.is_empty();
        let conf = cooccurrence_confusion(&pb, &yb, a.cooccurrence_threshold)?;
        let metrics = PredictMetrics {
            binary_columns: cols.clone(),
            rmse: if any { Some(rmse(&pb, &yb)?) } else { None },
            auc: if any { auc(&pb, &yb)? } else { None },
            auc_per_column: auc_per_column(&pb, &yb)?,
            cooccurrence_threshold: a.cooccurrence_threshold,
            cooccurrence_tp: conf.tp,
            cooccurrence_fp: conf.fp,
            cooccurrence_fn: conf.fn_,
            cooccurrence_f1: conf.f1(),
        };
        write_json(&a.out.join("metrics.json"), &metrics)?;
    }

    #[derive(Serialize)]
    struct Settings<'a> {
        archive: &'a Path,
        x: &'a Option<PathBuf>,
        y: &'a Option<PathBuf>,
        cooccurrence_threshold: f64,
    }
    let settings = Settings { archive: &a.archive, x: &a.x, y: &a.y, cooccurrence_threshold: a.cooccurrence_threshold };
    write_manifest(&a.out, Manifest::new("predict", Some(samples.schedule.seed), settings)?)
}

fn diagnose_mixture(a: MixtureArgs) -> Result<()> {
    let seeds: Vec<u64> = (0..a.replicates).map(|k| a.seed + k).collect();
    let runs: Vec<Vec<_>> = seeds.par_iter().map(|&s| mixture_curse_demo(a.n, &a.p, s)).collect::<Result<_>>()?;
    std::fs::create_dir_all(&a.out)?;
    write_rows(
        &a.out.join("mixture.csv"),
        &["p", "seed", "log_ratio"],
        seeds.iter().zip(&runs).flat_map(|(s, rows)| {
            rows.iter().map(move |r| vec![r.p.to_string(), s.to_string(), r.log_ratio.to_string()])
        }),
    )?;

    #[derive(Serialize)]
    struct Settings<'a> {
        n: usize,
        p: &'a [usize],
        replicates: u64,
    }
    let settings = Settings { n: a.n, p: &a.p, replicates: a.replicates };
    write_manifest(&a.out, Manifest::new("diagnose-mixture", Some(a.seed), settings)?)
}

fn diagnose_oracle(a: OracleArgs) -> Result<()> {
    let mut design = OracleDesign::new(a.p, a.seed);
    design.n = a.n;
    design.n_iters = a.n_iters;
    design.burn_in = a.burn_in;
    design.thin = a.thin;
    let report = oracle_convergence_study(&design)?;
    std::fs::create_dir_all(&a.out)?;
    write_rows(
        &a.out.join("oracle.csv"),
        &["p", "distance", "class_perm"],
        report.rows.iter().map(|r| {
            let perm: Vec<String> = r.class_perm.iter().map(usize::to_string).collect();
            vec![r.p.to_string(), r.distance.to_string(), perm.join(" ")]
        }),
    )?;
    let mut header = vec!["obs".to_string()];
    header.extend((0..report.oracle.ncols()).map(|h| format!("prob_{h}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(
        &a.out.join("oracle_probs.csv"),
        &header,
        (0..report.oracle.nrows()).map(|n| {
            let mut row = vec![n.to_string()];
            row.extend(report.oracle.row(n).iter().map(f64::to_string));
            row
        }),
    )?;
    write_manifest(&a.out, Manifest::new("diagnose-oracle", Some(design.seed), &design)?)
}

fn verdict(w: &Option<BlockWitness>) -> String {
    match w {
        Some(w) => format!("satisfied, blocks {:?}", w.blocks),
        None => "not satisfied".into(),
    }
}

fn check_g(a: CheckGArgs) -> Result<()> {
    let (_, m) = read_f64_matrix(&a.g)?;
    let g = m.map(|v| v as u8);
    if m.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data(format!("{}: loadings must be 0 or 1", a.g.display())));
    }
    let strict = check_g_strict(&g);
    let generic = check_g_generic(&g);
    println!("strict: {}", verdict(&strict));
    println!("generic: {}", verdict(&generic));
    if let Some(out) = &a.out {
        #[derive(Serialize)]
        struct Verdicts {
            p: usize,
            q: usize,
            strict: Option<BlockWitness>,
            generic: Option<BlockWitness>,
        }
        std::fs::create_dir_all(out)?;
        write_json(&out.join("gcheck.json"), &Verdicts { p: g.nrows(), q: g.ncols(), strict, generic })?;
        #[derive(Serialize)]
        struct Settings<'a> {
            g: &'a Path,
        }
        write_manifest(out, Manifest::new("check-g", None, Settings { g: &a.g })?)?;
    }
    Ok(())
}
