//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment. [`ExperimentConfig::to_text`]
//! writes every key in a fixed order, and parsing that text gives back the
//! same value.

use std::fmt::Write as _;
use std::path::PathBuf;

use srrw::process::{AlphaSchedule, RestartPolicy, StartNode};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    /// Edge-list file, resolved against the config file's directory.
    File(PathBuf),
    /// `er:N:M:SEED`, a uniform graph with exactly `M` edges.
    ErdosRenyi { n: usize, m: usize, seed: u64 },
    /// `complete:N`.
    Complete(usize),
    /// `path:N`.
    Path(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Srw,
    Mhrw,
    /// Explicit row-stochastic matrix; `target` must then give its stationary law.
    Matrix(Vec<Vec<f64>>),
}

/// A per-node vector: target law, initial counts, observable or ODE start.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorSpec {
    Uniform,
    Degree,
    /// `g_i = i`.
    Index,
    Values(Vec<f64>),
    /// Whitespace-separated numbers, one per node.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointSpec {
    /// Powers of the ratio, rounded and deduplicated.
    Geometric(f64),
    List(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: Option<GraphSource>,
    /// Restrict the graph to its largest connected component.
    pub lcc: bool,
    pub kernel: KernelSpec,
    pub target: VectorSpec,
    /// One ensemble (or ODE run, or grid point) per entry.
    pub alphas: Vec<AlphaSchedule>,
    pub n_max: u64,
    pub checkpoints: CheckpointSpec,
    /// Ensemble size.
    pub runs: usize,
    pub seed: u64,
    /// Truncation constant `M`; `None` runs the plain recursion.
    pub truncation: Option<f64>,
    pub restart: RestartPolicy,
    pub init_mode: VectorSpec,
    pub start: StartNode,
    pub observable: VectorSpec,
    pub ode_horizon: f64,
    pub ode_dt: f64,
    pub ode_stride: usize,
    pub ode_x0: VectorSpec,
    pub dump_matrices: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: None,
            lcc: true,
            kernel: KernelSpec::Srw,
            target: VectorSpec::Uniform,
            alphas: vec![AlphaSchedule::Constant(0.0)],
            n_max: 10_000,
            checkpoints: CheckpointSpec::Geometric(1.2),
            runs: 100,
            seed: 1,
            truncation: None,
            restart: RestartPolicy::ReuseInitial,
            init_mode: VectorSpec::Uniform,
            start: StartNode::Random,
            observable: VectorSpec::Degree,
            ode_horizon: 200.0,
            ode_dt: 0.01,
            ode_stride: 100,
            ode_x0: VectorSpec::Uniform,
            dump_matrices: false,
            output_dir: None,
        }
    }
}

const KEYS: &[&str] = &[
    "graph",
    "graph_path",
    "lcc",
    "kernel",
    "matrix",
    "target",
    "alpha",
    "n_max",
    "checkpoints",
    "K",
    "seed",
    "truncation.M",
    "truncation.restart",
    "init_mode",
    "start",
    "observable",
    "ode.horizon",
    "ode.dt",
    "ode.stride",
    "ode.x0",
    "analyze.dump_matrices",
    "output_dir",
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut alphas: Vec<AlphaSchedule> = Vec::new();
        let mut matrix: Option<Vec<Vec<f64>>> = None;
        let mut matrix_kernel = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| CliError::Config { line: line_no, message };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let key = KEYS.iter().copied().find(|k| *k == key).ok_or_else(|| err(format!("unknown key {key:?}")))?;
            // Alpha lines accumulate into a sweep; everything else is set once.
            if key != "alpha" {
                if seen.contains(&key) {
                    return Err(err(format!("key {key:?} given twice")));
                }
                if (key == "graph" && seen.contains(&"graph_path")) || (key == "graph_path" && seen.contains(&"graph")) {
                    return Err(err("give either graph or graph_path, not both".into()));
                }
                seen.push(key);
            }
            match key {
                "graph" => cfg.graph = Some(parse_generator(value).map_err(err)?),
                "graph_path" => cfg.graph = Some(GraphSource::File(PathBuf::from(value))),
                "lcc" => cfg.lcc = parse_bool(value).map_err(err)?,
                "kernel" => match value {
                    "srw" => cfg.kernel = KernelSpec::Srw,
                    "mhrw" => cfg.kernel = KernelSpec::Mhrw,
                    "matrix" => matrix_kernel = true,
                    _ => return Err(err(format!("kernel must be srw, mhrw or matrix, got {value:?}"))),
                },
                "matrix" => matrix = Some(parse_matrix(value).map_err(err)?),
                "target" => cfg.target = parse_vector(value).map_err(err)?,
                "alpha" => {
                    for entry in value.split(',') {
                        alphas.push(parse_schedule(entry.trim()).map_err(err)?);
                    }
                }
                "n_max" => cfg.n_max = parse_num(value).map_err(err)?,
                "checkpoints" => cfg.checkpoints = parse_checkpoints(value).map_err(err)?,
                "K" => cfg.runs = parse_num(value).map_err(err)?,
                "seed" => cfg.seed = parse_num(value).map_err(err)?,
                "truncation.M" => {
                    cfg.truncation = if value == "off" { None } else { Some(parse_num(value).map_err(err)?) }
                }
                "truncation.restart" => {
                    cfg.restart = match value {
                        "initial" => RestartPolicy::ReuseInitial,
                        "dirichlet" => RestartPolicy::Dirichlet,
                        _ => return Err(err(format!("truncation.restart must be initial or dirichlet, got {value:?}"))),
                    }
                }
                "init_mode" => cfg.init_mode = parse_vector(value).map_err(err)?,
                "start" => {
                    cfg.start = if value == "random" {
                        StartNode::Random
                    } else {
                        StartNode::Fixed(parse_num(value).map_err(err)?)
                    }
                }
                "observable" => cfg.observable = parse_vector(value).map_err(err)?,
                "ode.horizon" => cfg.ode_horizon = parse_num(value).map_err(err)?,
                "ode.dt" => cfg.ode_dt = parse_num(value).map_err(err)?,
                "ode.stride" => cfg.ode_stride = parse_num(value).map_err(err)?,
                "ode.x0" => cfg.ode_x0 = parse_vector(value).map_err(err)?,
                "analyze.dump_matrices" => cfg.dump_matrices = parse_bool(value).map_err(err)?,
                "output_dir" => cfg.output_dir = Some(PathBuf::from(value)),
                _ => unreachable!("key list and match arms differ"),
            }
        }
        let whole = |message: String| CliError::Config { line: 0, message };
        match (matrix_kernel, matrix) {
            (true, Some(m)) => cfg.kernel = KernelSpec::Matrix(m),
            (true, None) => return Err(whole("kernel = matrix needs a matrix line".into())),
            (false, Some(_)) => return Err(whole("matrix given but kernel is not matrix".into())),
            (false, None) => {}
        }
        if !alphas.is_empty() {
            cfg.alphas = alphas;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Numeric ranges that do not depend on the graph.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |message: String| Err(CliError::Config { line: 0, message });
        if self.alphas.is_empty() {
            return bad("need at least one alpha".into());
        }
        for a in &self.alphas {
            a.validate().map_err(|e| CliError::Config { line: 0, message: e.to_string() })?;
        }
        if self.n_max == 0 {
            return bad("n_max must be positive".into());
        }
        if self.runs == 0 {
            return bad("K must be positive".into());
        }
        match &self.checkpoints {
            CheckpointSpec::Geometric(r) if !(r.is_finite() && *r > 1.0) => {
                return bad(format!("geometric checkpoint ratio must exceed 1, got {r}"));
            }
            CheckpointSpec::List(v) if v.iter().any(|&n| n > self.n_max) => {
                return bad(format!("checkpoint beyond n_max = {}", self.n_max));
            }
            _ => {}
        }
        if let Some(m) = self.truncation {
            if !(m.is_finite() && m > 0.0) {
                return bad(format!("truncation.M must be positive, got {m}"));
            }
        }
        if !(self.ode_horizon.is_finite() && self.ode_horizon > 0.0) {
            return bad(format!("ode.horizon must be positive, got {}", self.ode_horizon));
        }
        if !(self.ode_dt.is_finite() && self.ode_dt > 0.0) {
            return bad(format!("ode.dt must be positive, got {}", self.ode_dt));
        }
        if self.ode_stride == 0 {
            return bad("ode.stride must be positive".into());
        }
        if let KernelSpec::Matrix(rows) = &self.kernel {
            if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
                return bad("matrix must be square and non-empty".into());
            }
        } else if self.graph.is_none() {
            return bad("srw and mhrw kernels need graph or graph_path".into());
        }
        for (key, spec) in [("target", &self.target), ("init_mode", &self.init_mode), ("ode.x0", &self.ode_x0)] {
            if let VectorSpec::Values(v) = spec {
                if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return bad(format!("{key} entries must be positive"));
                }
            }
            if *spec == VectorSpec::Index {
                return bad(format!("{key} cannot be index"));
            }
        }
        Ok(())
    }

    /// Canonical text form; [`ExperimentConfig::parse`] inverts it.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.graph {
            Some(GraphSource::File(p)) => put("graph_path", p.display().to_string()),
            Some(GraphSource::ErdosRenyi { n, m, seed }) => put("graph", format!("er:{n}:{m}:{seed}")),
            Some(GraphSource::Complete(n)) => put("graph", format!("complete:{n}")),
            Some(GraphSource::Path(n)) => put("graph", format!("path:{n}")),
            None => {}
        }
        put("lcc", self.lcc.to_string());
        match &self.kernel {
            KernelSpec::Srw => put("kernel", "srw".into()),
            KernelSpec::Mhrw => put("kernel", "mhrw".into()),
            KernelSpec::Matrix(rows) => {
                put("kernel", "matrix".into());
                let rows: Vec<String> = rows.iter().map(|r| join(r)).collect();
                put("matrix", rows.join("; "));
            }
        }
        put("target", vector_text(&self.target));
        let alphas: Vec<String> = self.alphas.iter().map(schedule_text).collect();
        put("alpha", alphas.join(", "));
        put("n_max", self.n_max.to_string());
        put(
            "checkpoints",
            match &self.checkpoints {
                CheckpointSpec::Geometric(r) => format!("geometric:{r}"),
                CheckpointSpec::List(v) => join(v),
            },
        );
        put("K", self.runs.to_string());
        put("seed", self.seed.to_string());
        put("truncation.M", self.truncation.map_or("off".into(), |m| m.to_string()));
        put(
            "truncation.restart",
            match self.restart {
                RestartPolicy::ReuseInitial => "initial".into(),
                RestartPolicy::Dirichlet => "dirichlet".into(),
            },
        );
        put("init_mode", vector_text(&self.init_mode));
        put(
            "start",
            match self.start {
                StartNode::Random => "random".into(),
                StartNode::Fixed(i) => i.to_string(),
            },
        );
        put("observable", vector_text(&self.observable));
        put("ode.horizon", self.ode_horizon.to_string());
        put("ode.dt", self.ode_dt.to_string());
        put("ode.stride", self.ode_stride.to_string());
        put("ode.x0", vector_text(&self.ode_x0));
        put("analyze.dump_matrices", self.dump_matrices.to_string());
        if let Some(dir) = &self.output_dir {
            put("output_dir", dir.display().to_string());
        }
        out
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("invalid number {s:?}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',').map(|t| parse_num(t.trim())).collect()
}

fn parse_generator(s: &str) -> Result<GraphSource, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        ["er", n, m, seed] => Ok(GraphSource::ErdosRenyi { n: parse_num(n)?, m: parse_num(m)?, seed: parse_num(seed)? }),
        ["complete", n] => Ok(GraphSource::Complete(parse_num(n)?)),
        ["path", n] => Ok(GraphSource::Path(parse_num(n)?)),
        _ => Err(format!("graph must be er:N:M:SEED, complete:N or path:N, got {s:?}")),
    }
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';').map(|row| parse_list(row.trim())).collect()
}

fn parse_vector(s: &str) -> Result<VectorSpec, String> {
    Ok(match s {
        "uniform" => VectorSpec::Uniform,
        "degree" => VectorSpec::Degree,
        "index" => VectorSpec::Index,
        _ => match s.strip_prefix("file:") {
            Some(path) => VectorSpec::File(PathBuf::from(path.trim())),
            None => VectorSpec::Values(parse_list(s)?),
        },
    })
}

fn vector_text(v: &VectorSpec) -> String {
    match v {
        VectorSpec::Uniform => "uniform".into(),
        VectorSpec::Degree => "degree".into(),
        VectorSpec::Index => "index".into(),
        VectorSpec::Values(x) => join(x),
        VectorSpec::File(p) => format!("file:{}", p.display()),
    }
}

fn parse_checkpoints(s: &str) -> Result<CheckpointSpec, String> {
    match s.strip_prefix("geometric:") {
        Some(r) => Ok(CheckpointSpec::Geometric(parse_num(r.trim())?)),
        None => {
            let v: Vec<u64> = parse_list(s)?;
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err("checkpoint list must be strictly increasing".into());
            }
            Ok(CheckpointSpec::List(v))
        }
    }
}

/// `0.5`, `sigmoid1` (default shape), `sigmoid1:A:B:CAP`, `sigmoid2:A:B` or
/// `table:N=ALPHA;N=ALPHA...`.
fn parse_schedule(s: &str) -> Result<AlphaSchedule, String> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        ["sigmoid1"] => Ok(AlphaSchedule::sigmoid1_default()),
        ["sigmoid1", a, b, cap] => Ok(AlphaSchedule::Sigmoid1 { a: parse_num(a)?, b: parse_num(b)?, cap: parse_num(cap)? }),
        ["sigmoid2", a, b] => Ok(AlphaSchedule::Sigmoid2 { a: parse_num(a)?, b: parse_num(b)? }),
        ["table", body] => {
            let points = body
                .split(';')
                .map(|p| {
                    let (n, a) = p.split_once('=').ok_or_else(|| format!("table entry {p:?} is not N=ALPHA"))?;
                    Ok((parse_num(n.trim())?, parse_num(a.trim())?))
                })
                .collect::<Result<Vec<_>, String>>()?;
            Ok(AlphaSchedule::Table(points))
        }
        [a] => Ok(AlphaSchedule::Constant(parse_num(a)?)),
        _ => Err(format!("unrecognised alpha entry {s:?}")),
    }
}

fn schedule_text(s: &AlphaSchedule) -> String {
    match s {
        AlphaSchedule::Constant(a) => a.to_string(),
        AlphaSchedule::Sigmoid1 { a, b, cap } => format!("sigmoid1:{a}:{b}:{cap}"),
        AlphaSchedule::Sigmoid2 { a, b } => format!("sigmoid2:{a}:{b}"),
        AlphaSchedule::Table(points) => {
            let body: Vec<String> = points.iter().map(|(n, a)| format!("{n}={a}")).collect();
            format!("table:{}", body.join(";"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg = ExperimentConfig::parse("graph = complete:4\n").unwrap();
        assert_eq!(cfg.graph, Some(GraphSource::Complete(4)));
        assert_eq!(cfg.alphas, vec![AlphaSchedule::Constant(0.0)]);
        assert_eq!(cfg.runs, 100);
    }

    #[test]
    fn alpha_lines_accumulate() {
        let text = "graph = path:5\nalpha = 0, 0.5\nalpha = sigmoid2:100:0.5\nalpha = table:0=0;1000=2\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(
            cfg.alphas,
            vec![
                AlphaSchedule::Constant(0.0),
                AlphaSchedule::Constant(0.5),
                AlphaSchedule::Sigmoid2 { a: 100.0, b: 0.5 },
                AlphaSchedule::Table(vec![(0, 0.0), (1000, 2.0)]),
            ]
        );
    }

    #[test]
    fn matrix_kernel() {
        let cfg = ExperimentConfig::parse("kernel = matrix\nmatrix = 0.5,0.5; 0.5,0.5\ntarget = 0.5,0.5\n").unwrap();
        assert_eq!(cfg.kernel, KernelSpec::Matrix(vec![vec![0.5, 0.5], vec![0.5, 0.5]]));
        assert!(ExperimentConfig::parse("kernel = matrix\n").is_err());
        assert!(ExperimentConfig::parse("matrix = 1\n").is_err());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ExperimentConfig::parse("graph = path:5\n\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, CliError::Config { line: 3, .. }));
        let err = ExperimentConfig::parse("graph = path:5\nK = 1\nK = 2\n").unwrap_err();
        assert!(matches!(err, CliError::Config { line: 3, .. }));
        assert!(ExperimentConfig::parse("graph = path:5\nalpha = -0.5\n").is_err());
        assert!(ExperimentConfig::parse("graph = path:5\nK = 0\n").is_err());
        assert!(ExperimentConfig::parse("graph = path:5\ngraph_path = x.txt\n").is_err());
        assert!(ExperimentConfig::parse("kernel = srw\n").is_err());
    }

    #[test]
    fn text_form_round_trips() {
        let cfg = ExperimentConfig {
            graph: Some(GraphSource::ErdosRenyi { n: 50, m: 221, seed: 9 }),
            kernel: KernelSpec::Mhrw,
            target: VectorSpec::Degree,
            alphas: vec![AlphaSchedule::Constant(0.1), AlphaSchedule::sigmoid1_default()],
            checkpoints: CheckpointSpec::List(vec![10, 100]),
            truncation: Some(20.0),
            start: StartNode::Fixed(3),
            observable: VectorSpec::File("g.txt".into()),
            output_dir: Some("out".into()),
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
