//! Subcommand bodies. Each takes a parsed config plus the run-time settings
//! and writes its CSV files under the output directory.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use srrw::asymptotics::{covariance_v, loewner_gap, reduction_bound, sampling_variance};
use srrw::estimators::tvd;
use srrw::graph::{complete, path};
use srrw::ode::{integrate, OdeOptions};
use srrw::process::{
    geometric_checkpoints, run_ensemble, AlphaSchedule, EmpiricalMeasure, EnsembleRecord, RunConfig, StartNode,
    Truncation,
};
use srrw::validation::{run_check, Scale, ValidationOptions, CHECK_IDS};
use srrw::{
    build_mhrw, build_srw, compute_spectrum, erdos_renyi, largest_connected_component, load_edge_list, slem, Graph,
    Repellence, ReversibleKernel,
};

use crate::config::{CheckpointSpec, ExperimentConfig, GraphSource, KernelSpec, VectorSpec};
use crate::error::CliError;
use crate::output::{label_slug, CsvFile};

/// Settings that come from the command line rather than the config file.
#[derive(Debug, Clone)]
pub struct Runtime {
    /// Directory holding the config file; relative paths in it resolve here.
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    /// `None` means one worker per available core, capped by the ensemble size.
    pub workers: Option<usize>,
}

impl Runtime {
    fn workers_for(&self, runs: usize) -> usize {
        let available = std::thread::available_parallelism().map_or(1, |n| n.get());
        self.workers.unwrap_or(available).clamp(1, runs.max(1))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Graph (when the kernel comes from one) and the base chain.
pub struct Model {
    pub graph: Option<Graph>,
    pub kernel: Arc<ReversibleKernel>,
}

pub fn build_model(cfg: &ExperimentConfig, rt: &Runtime) -> Result<Model, CliError> {
    let graph = match &cfg.graph {
        None => None,
        Some(src) => {
            let g = match src {
                GraphSource::File(p) => {
                    let p = rt.resolve(p);
                    let file = fs::File::open(&p).map_err(|e| CliError::io(&p, e))?;
                    load_edge_list(BufReader::new(file))?
                }
                GraphSource::ErdosRenyi { n, m, seed } => erdos_renyi(*n, *m, *seed)?,
                GraphSource::Complete(n) => complete(*n)?,
                GraphSource::Path(n) => path(*n)?,
            };
            Some(if cfg.lcc { largest_connected_component(&g) } else { g })
        }
    };
    let kernel = match (&cfg.kernel, &graph) {
        (KernelSpec::Srw, Some(g)) => build_srw(g)?,
        (KernelSpec::Mhrw, Some(g)) => {
            let target = resolve_distribution(&cfg.target, "target", graph.as_ref(), g.node_count(), rt)?;
            build_mhrw(g, &target)?
        }
        (KernelSpec::Matrix(rows), _) => {
            let n = rows.len();
            let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            let target = resolve_distribution(&cfg.target, "target", graph.as_ref(), n, rt)?;
            ReversibleKernel::from_dense(&dense, &target)?
        }
        (_, None) => return Err(CliError::Usage("srw and mhrw kernels need a graph".into())),
    };
    Ok(Model { graph, kernel: Arc::new(kernel) })
}

/// Raw per-node values of a vector key.
fn resolve_vector(
    spec: &VectorSpec,
    key: &str,
    graph: Option<&Graph>,
    n: usize,
    rt: &Runtime,
) -> Result<Vec<f64>, CliError> {
    let v = match spec {
        VectorSpec::Uniform => vec![1.0; n],
        VectorSpec::Degree => match graph {
            Some(g) => g.degrees(),
            None => return Err(CliError::Usage(format!("{key} = degree needs a graph"))),
        },
        VectorSpec::Index => (0..n).map(|i| i as f64).collect(),
        VectorSpec::Values(v) => v.clone(),
        VectorSpec::File(p) => {
            let p = rt.resolve(p);
            let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            text.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| CliError::Usage(format!("{}: invalid number {t:?}", p.display()))))
                .collect::<Result<_, _>>()?
        }
    };
    if v.len() != n {
        return Err(CliError::Usage(format!("{key} has {} entries for {n} nodes", v.len())));
    }
    Ok(v)
}

/// Like [`resolve_vector`], rescaled to unit mass; entries must be positive.
fn resolve_distribution(
    spec: &VectorSpec,
    key: &str,
    graph: Option<&Graph>,
    n: usize,
    rt: &Runtime,
) -> Result<Vec<f64>, CliError> {
    let v = resolve_vector(spec, key, graph, n, rt)?;
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(CliError::Usage(format!("{key} entries must be positive")));
    }
    let s: f64 = v.iter().sum();
    Ok(v.iter().map(|x| x / s).collect())
}

/// Spectrum, kernel and target dumps; returns the SLEM.
pub fn spectrum(cfg: &ExperimentConfig, rt: &Runtime) -> Result<f64, CliError> {
    let model = build_model(cfg, rt)?;
    let k = model.kernel.as_ref();
    let spec = compute_spectrum(k)?;
    let n = k.n();
    let mut f = CsvFile::create(&rt.out_dir, "spectrum.csv")?;
    f.header(&["index", "lambda"])?;
    for (i, l) in spec.eigenvalues().iter().enumerate() {
        f.row([i.to_string(), l.to_string()])?;
    }
    f.finish()?;
    CsvFile::write_matrix(&rt.out_dir, "left_eigenvectors.csv", spec.left())?;
    CsvFile::write_matrix(&rt.out_dir, "right_eigenvectors.csv", spec.right())?;
    let mut f = CsvFile::create(&rt.out_dir, "kernel.csv")?;
    f.header(&["i", "j", "p"])?;
    for (i, j, p) in k.triplets() {
        f.row([i.to_string(), j.to_string(), p.to_string()])?;
    }
    f.finish()?;
    let mut f = CsvFile::create(&rt.out_dir, "mu.csv")?;
    f.header(&["i", "mu"])?;
    for (i, m) in k.mu().iter().enumerate() {
        f.row([i.to_string(), m.to_string()])?;
    }
    f.finish()?;
    let s = slem(&spec)?;
    eprintln!("{n} states; spectrum written to {}", rt.out_dir.display());
    Ok(s)
}

fn checkpoints_for(cfg: &ExperimentConfig) -> Vec<u64> {
    match &cfg.checkpoints {
        CheckpointSpec::Geometric(r) => geometric_checkpoints(cfg.n_max, *r),
        CheckpointSpec::List(v) => v.clone(),
    }
}

fn initial_measure(cfg: &ExperimentConfig, model: &Model, rt: &Runtime) -> Result<EmpiricalMeasure, CliError> {
    let n = model.kernel.n();
    let counts = match &cfg.init_mode {
        // Fake visits keep their integer counts; explicit vectors carry unit mass.
        VectorSpec::Uniform | VectorSpec::Degree => {
            resolve_vector(&cfg.init_mode, "init_mode", model.graph.as_ref(), n, rt)?
        }
        other => resolve_distribution(other, "init_mode", model.graph.as_ref(), n, rt)?,
    };
    Ok(EmpiricalMeasure::from_counts(counts)?)
}

/// One ensemble per alpha entry; per-entry and combined metrics files.
pub fn simulate(cfg: &ExperimentConfig, rt: &Runtime) -> Result<Vec<EnsembleRecord>, CliError> {
    let model = build_model(cfg, rt)?;
    let n = model.kernel.n();
    let observable: Arc<[f64]> = resolve_vector(&cfg.observable, "observable", model.graph.as_ref(), n, rt)?.into();
    let initial = initial_measure(cfg, &model, rt)?;
    if let StartNode::Fixed(i) = cfg.start {
        if i >= n {
            return Err(CliError::Usage(format!("start node {i} out of range for {n} nodes")));
        }
    }
    let truncation = cfg.truncation.map(|m| Truncation::new(m, cfg.restart)).transpose()?;
    let workers = rt.workers_for(cfg.runs);
    let mut records = Vec::with_capacity(cfg.alphas.len());
    for schedule in &cfg.alphas {
        let mut run_cfg =
            RunConfig::new(model.kernel.clone(), observable.clone(), initial.clone(), schedule.clone(), cfg.n_max);
        run_cfg.checkpoints = checkpoints_for(cfg);
        run_cfg.start = cfg.start;
        run_cfg.truncation = truncation;
        records.push(run_ensemble(&run_cfg, cfg.runs, cfg.seed, workers)?);
    }

    let header = [
        "n",
        "alpha_label",
        "mean_tvd",
        "mse",
        "psi_mean",
        "psi_hat_mean",
        "tvd_se",
        "mse_se",
        "mean_tvd_visits",
    ];
    let mut combined = CsvFile::create(&rt.out_dir, "metrics.csv")?;
    combined.header(&header)?;
    for (idx, rec) in records.iter().enumerate() {
        let mut own = CsvFile::create(&rt.out_dir, &format!("metrics_{idx:02}_{}.csv", label_slug(&rec.alpha_label)))?;
        own.header(&header)?;
        for r in &rec.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            let cells = [
                r.n.to_string(),
                rec.alpha_label.clone(),
                r.mean_tvd.to_string(),
                opt(r.mse),
                opt(r.psi_mean),
                opt(r.psi_hat_mean),
                r.tvd_se.to_string(),
                opt(r.mse_se),
                opt(r.mean_tvd_visits),
            ];
            own.row(cells.clone())?;
            combined.row(cells)?;
        }
        own.finish()?;
    }
    combined.finish()?;
    for rec in &records {
        let last = rec.rows.last().expect("the horizon is always a checkpoint");
        let mse = last.mse.map_or("-".into(), |m| format!("{m:.4e}"));
        print!("alpha {:<24} n={:<9} mean_tvd {:.4e}  mse {mse}", rec.alpha_label, last.n, last.mean_tvd);
        if truncation.is_some() {
            let t = rec.truncation;
            print!(
                "  truncations {} in {}/{} runs (max {} per run)",
                t.total, t.runs_with_truncation, rec.runs, t.max_per_run
            );
        }
        println!();
    }
    Ok(records)
}

/// Constant entries of the alpha list; schedules are skipped with a note.
fn constant_alphas(cfg: &ExperimentConfig, what: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for a in &cfg.alphas {
        match a {
            AlphaSchedule::Constant(v) => out.push(*v),
            other => eprintln!("{what}: skipping schedule {}", other.label()),
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("{what} needs at least one constant alpha value")));
    }
    Ok(out)
}

/// Mean-field trajectory per alpha: `t, x_0..x_{N-1}, w`.
pub fn ode(cfg: &ExperimentConfig, rt: &Runtime) -> Result<(), CliError> {
    let model = build_model(cfg, rt)?;
    let k = model.kernel.as_ref();
    let n = k.n();
    let x0 = resolve_distribution(&cfg.ode_x0, "ode.x0", model.graph.as_ref(), n, rt)?;
    let opts = OdeOptions { horizon: cfg.ode_horizon, dt: cfg.ode_dt, stride: cfg.ode_stride };
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.push("w".into());
    for (idx, alpha) in constant_alphas(cfg, "ode")?.into_iter().enumerate() {
        let traj = integrate(k, &x0, Repellence::new(alpha)?, opts)?;
        let label = AlphaSchedule::Constant(alpha).label();
        let mut f = CsvFile::create(&rt.out_dir, &format!("trajectory_{idx:02}_{}.csv", label_slug(&label)))?;
        f.row(&header)?;
        for ((t, x), w) in traj.times.iter().zip(&traj.states).zip(&traj.lyapunov) {
            let mut cells = vec![t.to_string()];
            cells.extend(x.iter().map(f64::to_string));
            cells.push(w.to_string());
            f.row(cells)?;
        }
        f.finish()?;
        let end = traj.final_state();
        println!(
            "alpha {label:<8} t={} TVD(x, mu) {:.3e}  min entry {:.3e}",
            cfg.ode_horizon,
            tvd(end, k.mu())?,
            traj.min_entry
        );
    }
    Ok(())
}

/// Default grid when the config lists a single alpha.
const ANALYZE_GRID: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0];

/// Asymptotic variance, reduction bound and Loewner gaps over the alpha grid.
pub fn analyze(cfg: &ExperimentConfig, rt: &Runtime) -> Result<(), CliError> {
    let model = build_model(cfg, rt)?;
    let k = model.kernel.as_ref();
    let spec = compute_spectrum(k)?;
    let g = resolve_vector(&cfg.observable, "observable", model.graph.as_ref(), k.n(), rt)?;
    let g_id = match &cfg.observable {
        VectorSpec::Uniform => "uniform".to_string(),
        VectorSpec::Degree => "degree".into(),
        VectorSpec::Index => "index".into(),
        VectorSpec::Values(_) => "values".into(),
        VectorSpec::File(p) => p.display().to_string(),
    };
    let mut grid = constant_alphas(cfg, "analyze")?;
    if grid.len() < 2 {
        grid = ANALYZE_GRID.to_vec();
    }
    let mut covs = Vec::with_capacity(grid.len());
    let mut f = CsvFile::create(&rt.out_dir, "analysis.csv")?;
    f.header(&["alpha", "g_id", "variance", "bound", "ratio"])?;
    println!("{:>8} {:>14} {:>12} {:>12}", "alpha", "variance", "bound", "ratio");
    for (idx, &alpha) in grid.iter().enumerate() {
        let v = covariance_v(&spec, alpha)?;
        let red = reduction_bound(&g, &spec, alpha)?;
        let var = sampling_variance(&g, &v.matrix);
        f.row([alpha.to_string(), g_id.clone(), var.to_string(), red.bound.to_string(), red.ratio.to_string()])?;
        println!("{alpha:>8} {var:>14.6e} {:>12.6} {:>12.6}", red.bound, red.ratio);
        if cfg.dump_matrices {
            let label = AlphaSchedule::Constant(alpha).label();
            CsvFile::write_matrix(&rt.out_dir, &format!("v_{idx:02}_{}.csv", label_slug(&label)), &v.matrix)?;
        }
        covs.push(v.matrix);
    }
    f.finish()?;
    let mut f = CsvFile::create(&rt.out_dir, "loewner.csv")?;
    f.header(&["alpha_a", "alpha_b", "gap"])?;
    for (i, pair) in covs.windows(2).enumerate() {
        // Gap of V(alpha_a) - V(alpha_b); positive when the later alpha is strictly better.
        let gap = loewner_gap(&pair[1], &pair[0]);
        f.row([grid[i].to_string(), grid[i + 1].to_string(), gap.to_string()])?;
    }
    f.finish()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ValidateArgs {
    pub quick: bool,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub only: Vec<String>,
    pub inject_dbe_fault: bool,
}

/// Runs the checks in order, printing each line as soon as it finishes.
pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let mut opts = ValidationOptions {
        scale: if args.quick { Scale::Quick } else { Scale::Full },
        inject_dbe_fault: args.inject_dbe_fault,
        ..ValidationOptions::default()
    };
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    if let Some(w) = args.workers {
        opts.workers = w.max(1);
    }
    let ids: Vec<&str> = if args.only.is_empty() {
        CHECK_IDS.to_vec()
    } else {
        args.only
            .iter()
            .map(|id| {
                CHECK_IDS
                    .iter()
                    .copied()
                    .find(|c| c.eq_ignore_ascii_case(id))
                    .ok_or_else(|| CliError::Usage(format!("unknown check {id:?}; known: {}", CHECK_IDS.join(" "))))
            })
            .collect::<Result<_, _>>()?
    };
    let mut failed = 0;
    for id in &ids {
        let report = run_check(id, &opts)?;
        println!("{report}");
        failed += usize::from(!report.passed);
    }
    println!("{} of {} checks passed", ids.len() - failed, ids.len());
    if failed > 0 {
        return Err(CliError::ValidationFailed { failed, total: ids.len() });
    }
    Ok(())
}
