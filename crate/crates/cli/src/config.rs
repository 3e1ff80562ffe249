//! Experiment configuration: a JSON document checked field by field so that
//! every schema error carries the path of the offending value.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use markov_gap::algebra::{Block, CMatrix, Element, TracialAlgebra, C64};
use markov_gap::channels::{build_channel, compose, ChannelSpec, MarkovMap};
use markov_gap::structure::{fixed_point_algebra, Subalgebra};
use nalgebra::DMatrix;
use serde_json::{Map, Value};

pub const DEFAULT_P_GRID: [f64; 4] = [1.5, 2.0, 3.0, 4.0];
pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_MAX_ITERS: usize = 5000;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_LEMMA_SAMPLES: usize = 200;

/// Suite run when no configuration file is given.
pub const DEFAULT_SUITE: &str = r#"{
  "seed": 2024,
  "restarts": 8,
  "p_grid": [1.5, 2, 3, 4],
  "channels": [
    {"id": "depolarizing-m2", "kind": "depolarizing", "n": 2, "lambda": 0.5},
    {"id": "depolarizing-m3", "kind": "depolarizing", "n": 3, "lambda": 0.3},
    {"id": "schur-m3", "kind": "schur",
     "mask": [[1, 0.5, 0.2], [0.5, 1, 0.5], [0.2, 0.5, 1]]},
    {"id": "circulant-5", "kind": "circulant", "probabilities": [0.5, 0.25, 0, 0, 0.25]},
    {"id": "pauli-mix", "kind": "random-unitary", "weights": [0.6, 0.3, 0.1],
     "unitaries": [[[1, 0], [0, 1]],
                   [[0, 1], [1, 0]],
                   [[[0, 0], [0, -1]], [[0, 1], [0, 0]]]]},
    {"id": "rotated-pair", "kind": "compose", "factors": [
      {"kind": "conditional-expectation", "n": 2, "subalgebra": "diagonal"},
      {"kind": "conditional-expectation", "n": 2, "subalgebra": "rotated-diagonal(30deg)"}]}
  ],
  "sigma": [
    {"id": "rotated-45", "n": 2, "a": "diagonal", "b": "rotated-diagonal(45deg)"},
    {"id": "rotated-30", "n": 3, "a": "diagonal", "b": "rotated-diagonal(30deg)"}
  ]
}"#;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Task {
    Validate,
    Gap,
    Bounds,
    Lemmas,
    Sigma,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Validate, Task::Gap, Task::Bounds, Task::Lemmas, Task::Sigma];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Gap => "gap",
            Task::Bounds => "bounds",
            Task::Lemmas => "lemmas",
            Task::Sigma => "sigma",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    fn stochastic(self) -> bool {
        matches!(self, Task::Gap | Task::Lemmas | Task::Sigma)
    }
}

/// An algebra element as written in the config: one matrix per block.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementLit(pub Vec<CMatrix>);

impl ElementLit {
    fn shape(&self) -> Vec<usize> {
        self.0.iter().map(|m| m.nrows()).collect()
    }

    pub fn build(&self, algebra: &Arc<TracialAlgebra>) -> markov_gap::Result<Element> {
        Element::from_blocks(algebra, self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    Scalars,
    Full,
    Diagonal,
    /// Angle in radians.
    RotatedDiagonal(f64),
    Generators(Vec<ElementLit>),
}

impl Preset {
    pub fn build(&self, algebra: &Arc<TracialAlgebra>) -> markov_gap::Result<Subalgebra> {
        match self {
            Preset::Scalars => Ok(Subalgebra::scalars(algebra)),
            Preset::Full => Ok(Subalgebra::full(algebra)),
            Preset::Diagonal => Subalgebra::diagonal(algebra),
            Preset::RotatedDiagonal(angle) => Subalgebra::rotated_diagonal(algebra, *angle),
            Preset::Generators(gens) => {
                let els = gens.iter().map(|g| g.build(algebra)).collect::<markov_gap::Result<Vec<_>>>()?;
                markov_gap::structure::generate_subalgebra(algebra, &els)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgebraLit {
    Blocks(Vec<Block>),
    Matrix(usize),
}

impl AlgebraLit {
    pub fn build(&self) -> markov_gap::Result<Arc<TracialAlgebra>> {
        Ok(Arc::new(match self {
            AlgebraLit::Blocks(b) => TracialAlgebra::new(b.clone())?,
            AlgebraLit::Matrix(n) => TracialAlgebra::matrix(*n)?,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelConfig {
    Identity(AlgebraLit),
    Depolarizing { n: usize, lambda: f64 },
    Kraus { algebra: AlgebraLit, operators: Vec<ElementLit> },
    RandomUnitary { algebra: AlgebraLit, weights: Vec<f64>, unitaries: Vec<ElementLit> },
    Schur { mask: CMatrix },
    Stochastic { weights: Option<Vec<f64>>, kernel: DMatrix<f64> },
    Circulant { probabilities: Vec<f64> },
    ConditionalExpectation { algebra: AlgebraLit, subalgebra: Preset },
    Transpose { n: usize },
    Transfer { algebra: AlgebraLit, matrix: CMatrix },
    Compose(Vec<ChannelConfig>),
}

impl ChannelConfig {
    /// Builds the map; validity is recorded on the map, not enforced.
    pub fn build(&self) -> markov_gap::Result<MarkovMap> {
        let spec = match self {
            ChannelConfig::Identity(a) => ChannelSpec::Identity(a.build()?),
            ChannelConfig::Depolarizing { n, lambda } => ChannelSpec::Depolarizing { n: *n, lambda: *lambda },
            ChannelConfig::Kraus { algebra, operators } => {
                let algebra = algebra.build()?;
                let operators = operators.iter().map(|o| o.build(&algebra)).collect::<markov_gap::Result<_>>()?;
                ChannelSpec::Kraus { algebra, operators }
            }
            ChannelConfig::RandomUnitary { algebra, weights, unitaries } => {
                let algebra = algebra.build()?;
                let unitaries = unitaries.iter().map(|o| o.build(&algebra)).collect::<markov_gap::Result<_>>()?;
                ChannelSpec::RandomUnitary { weights: weights.clone(), unitaries }
            }
            ChannelConfig::Schur { mask } => ChannelSpec::Schur { mask: mask.clone() },
            ChannelConfig::Stochastic { weights, kernel } => {
                let weights = weights.clone().unwrap_or_else(|| vec![1.0 / kernel.nrows() as f64; kernel.nrows()]);
                ChannelSpec::Stochastic { weights, kernel: kernel.clone() }
            }
            ChannelConfig::Circulant { probabilities } => ChannelSpec::Circulant { probabilities: probabilities.clone() },
            ChannelConfig::ConditionalExpectation { algebra, subalgebra } => {
                ChannelSpec::ConditionalExpectation(subalgebra.build(&algebra.build()?)?)
            }
            ChannelConfig::Transpose { n } => ChannelSpec::Transpose { n: *n },
            ChannelConfig::Transfer { algebra, matrix } => ChannelSpec::Transfer { algebra: algebra.build()?, matrix: matrix.clone() },
            ChannelConfig::Compose(factors) => {
                let mut maps = factors.iter().map(|f| f.build());
                let first = maps.next().expect("compose has factors")?;
                return maps.try_fold(first, |acc, m| compose(&acc, &m?));
            }
        };
        build_channel(spec)
    }
}

/// Subalgebra `N` a gap is measured against.
#[derive(Debug, Clone, PartialEq)]
pub enum FixedAlgebra {
    /// The fixed-point algebra of the channel.
    FixedPoints,
    Preset(Preset),
}

impl FixedAlgebra {
    pub fn build(&self, t: &MarkovMap) -> markov_gap::Result<Subalgebra> {
        match self {
            FixedAlgebra::FixedPoints => fixed_point_algebra(t),
            FixedAlgebra::Preset(p) => p.build(t.algebra()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEntry {
    pub id: String,
    pub channel: ChannelConfig,
    pub fixed: FixedAlgebra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaEntry {
    pub id: String,
    pub algebra: AlgebraLit,
    pub a: Preset,
    pub b: Preset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub channels: Vec<ChannelEntry>,
    pub sigma: Vec<SigmaEntry>,
    pub p_grid: Vec<f64>,
    pub tasks: Vec<Task>,
    pub seed: u64,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub lemma_samples: usize,
    pub output: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, Vec<SchemaError>> {
    let value: Value = serde_json::from_str(text).map_err(|e| vec![SchemaError { path: "$".into(), message: format!("invalid JSON: {e}") }])?;
    parse_config_value(&value)
}

pub fn parse_config_value(value: &Value) -> Result<ExperimentConfig, Vec<SchemaError>> {
    let mut cx = Cx::default();
    let cfg = cx.config(value);
    match cfg {
        Some(cfg) if cx.errors.is_empty() => Ok(cfg),
        _ => Err(cx.errors),
    }
}

#[derive(Default)]
struct Cx {
    errors: Vec<SchemaError>,
}

const TOP_KEYS: [&str; 12] =
    ["channel", "channels", "sigma", "p_grid", "tasks", "seed", "restarts", "max_iters", "tol", "lemma_samples", "output", "fixed_algebra"];

impl Cx {
    fn err<T>(&mut self, path: &str, message: impl Into<String>) -> Option<T> {
        self.errors.push(SchemaError { path: path.to_string(), message: message.into() });
        None
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        match v.as_object() {
            Some(m) => Some(m),
            None => self.err(path, "expected an object"),
        }
    }

    fn unknown_keys(&mut self, m: &Map<String, Value>, allowed: &[&str], path: &str) {
        for k in m.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err::<()>(&format!("{path}.{k}"), "unknown field");
            }
        }
    }

    fn required<'v>(&mut self, m: &'v Map<String, Value>, key: &str, path: &str) -> Option<&'v Value> {
        match m.get(key) {
            Some(v) => Some(v),
            None => self.err(&format!("{path}.{key}"), "missing field"),
        }
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => self.err(path, "expected a finite number"),
        }
    }

    fn count(&mut self, v: &Value, path: &str) -> Option<usize> {
        match v.as_u64() {
            Some(x) if x > 0 && x <= u32::MAX as u64 => Some(x as usize),
            _ => self.err(path, "expected a positive integer"),
        }
    }

    fn string<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v str> {
        match v.as_str() {
            Some(s) => Some(s),
            None => self.err(path, "expected a string"),
        }
    }

    fn array<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v [Value]> {
        match v.as_array() {
            Some(a) => Some(a),
            None => self.err(path, "expected an array"),
        }
    }

    fn numbers(&mut self, v: &Value, path: &str) -> Option<Vec<f64>> {
        let a = self.array(v, path)?;
        let out: Vec<Option<f64>> = a.iter().enumerate().map(|(i, x)| self.number(x, &format!("{path}[{i}]"))).collect();
        out.into_iter().collect()
    }

    fn complex(&mut self, v: &Value, path: &str) -> Option<C64> {
        if let Some(x) = v.as_f64() {
            return if x.is_finite() { Some(C64::new(x, 0.0)) } else { self.err(path, "non-finite entry") };
        }
        match v.as_array().map(|a| a.as_slice()) {
            Some([re, im]) => {
                let re = self.number(re, &format!("{path}[0]"));
                let im = self.number(im, &format!("{path}[1]"));
                Some(C64::new(re?, im?))
            }
            _ => self.err(path, "expected a number or an [re, im] pair"),
        }
    }

    fn matrix(&mut self, v: &Value, path: &str) -> Option<CMatrix> {
        let rows = self.array(v, path)?;
        if rows.is_empty() {
            return self.err(path, "matrix has no rows");
        }
        let mut entries = Vec::new();
        let mut width = None;
        for (i, row) in rows.iter().enumerate() {
            let rp = format!("{path}[{i}]");
            let row = self.array(row, &rp)?;
            if *width.get_or_insert(row.len()) != row.len() || row.is_empty() {
                return self.err(&rp, "rows must be nonempty and of equal length");
            }
            for (j, x) in row.iter().enumerate() {
                entries.push(self.complex(x, &format!("{rp}[{j}]"))?);
            }
        }
        Some(CMatrix::from_row_slice(rows.len(), width.unwrap_or(0), &entries))
    }

    fn square(&mut self, v: &Value, path: &str) -> Option<CMatrix> {
        let m = self.matrix(v, path)?;
        if !m.is_square() {
            return self.err(path, format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols()));
        }
        Some(m)
    }

    fn element(&mut self, v: &Value, path: &str) -> Option<ElementLit> {
        if let Some(m) = v.as_object() {
            self.unknown_keys(m, &["blocks"], path);
            let bp = format!("{path}.blocks");
            let blocks = self.required(m, "blocks", path)?;
            let blocks = self.array(blocks, &bp)?;
            let out: Vec<Option<CMatrix>> = blocks.iter().enumerate().map(|(i, b)| self.square(b, &format!("{bp}[{i}]"))).collect();
            return out.into_iter().collect::<Option<Vec<_>>>().map(ElementLit);
        }
        self.square(v, path).map(|m| ElementLit(vec![m]))
    }

    fn elements(&mut self, v: &Value, path: &str) -> Option<Vec<ElementLit>> {
        let a = self.array(v, path)?;
        if a.is_empty() {
            return self.err(path, "expected at least one element");
        }
        let out: Vec<Option<ElementLit>> = a.iter().enumerate().map(|(i, x)| self.element(x, &format!("{path}[{i}]"))).collect();
        out.into_iter().collect()
    }

    fn algebra(&mut self, v: &Value, path: &str) -> Option<AlgebraLit> {
        if v.is_u64() {
            return self.count(v, path).map(AlgebraLit::Matrix);
        }
        let m = self.object(v, path)?;
        self.unknown_keys(m, &["blocks"], path);
        let bp = format!("{path}.blocks");
        let blocks = self.required(m, "blocks", path)?;
        let blocks = self.array(blocks, &bp)?;
        if blocks.is_empty() {
            return self.err(&bp, "an algebra needs at least one block");
        }
        let mut dims = Vec::new();
        let mut weights = Vec::new();
        for (i, b) in blocks.iter().enumerate() {
            let p = format!("{bp}[{i}]");
            let Some(bm) = self.object(b, &p) else { continue };
            self.unknown_keys(bm, &["dim", "weight"], &p);
            dims.push(self.required(bm, "dim", &p).and_then(|d| self.count(d, &format!("{p}.dim"))));
            weights.push(bm.get("weight").map(|w| self.number(w, &format!("{p}.weight"))));
        }
        let dims: Vec<usize> = dims.into_iter().collect::<Option<_>>()?;
        let total: usize = dims.iter().sum();
        let blocks = dims
            .iter()
            .zip(weights)
            .map(|(&dim, w)| match w {
                None => Some(Block { dim, weight: dim as f64 / total as f64 }),
                Some(w) => w.map(|weight| Block { dim, weight }),
            })
            .collect::<Option<Vec<_>>>()?;
        Some(AlgebraLit::Blocks(blocks))
    }

    /// Algebra from an explicit `algebra`/`n` field, else `M_d` from the
    /// first element literal.
    fn algebra_for(&mut self, m: &Map<String, Value>, path: &str, elements: Option<&[ElementLit]>) -> Option<AlgebraLit> {
        if let Some(a) = m.get("algebra") {
            return self.algebra(a, &format!("{path}.algebra"));
        }
        if let Some(n) = m.get("n") {
            return self.count(n, &format!("{path}.n")).map(AlgebraLit::Matrix);
        }
        match elements.and_then(|e| e.first()).map(|e| e.shape()) {
            Some(shape) if shape.len() == 1 => Some(AlgebraLit::Matrix(shape[0])),
            Some(_) => self.err(&format!("{path}.algebra"), "block elements need an explicit algebra"),
            None => self.err(&format!("{path}.algebra"), "missing field"),
        }
    }

    fn preset(&mut self, v: &Value, path: &str) -> Option<Preset> {
        if let Some(m) = v.as_object() {
            self.unknown_keys(m, &["generators"], path);
            let g = self.required(m, "generators", path)?;
            return self.elements(g, &format!("{path}.generators")).map(Preset::Generators);
        }
        let s = self.string(v, path)?.trim();
        match s {
            "scalars" => return Some(Preset::Scalars),
            "full" => return Some(Preset::Full),
            "diagonal" => return Some(Preset::Diagonal),
            _ => {}
        }
        let Some(arg) = s.strip_prefix("rotated-diagonal(").and_then(|r| r.strip_suffix(')')) else {
            return self.err(path, format!("unknown subalgebra preset {s:?}"));
        };
        match parse_angle(arg) {
            Some(a) => Some(Preset::RotatedDiagonal(a)),
            None => self.err(path, format!("cannot read angle {arg:?}")),
        }
    }

    fn channel(&mut self, v: &Value, path: &str) -> Option<ChannelConfig> {
        let m = self.object(v, path)?;
        let kind = self.required(m, "kind", path).and_then(|k| self.string(k, &format!("{path}.kind")))?;
        let field = |k: &str| format!("{path}.{k}");
        let common = ["kind", "id", "fixed_algebra"];
        let allow = |extra: &[&'static str]| -> Vec<&'static str> { common.iter().copied().chain(extra.iter().copied()).collect() };
        match kind {
            "identity" => {
                self.unknown_keys(m, &allow(&["algebra", "n"]), path);
                self.algebra_for(m, path, None).map(ChannelConfig::Identity)
            }
            "depolarizing" => {
                self.unknown_keys(m, &allow(&["n", "lambda"]), path);
                let n = self.required(m, "n", path).and_then(|x| self.count(x, &field("n")));
                let lambda = self.required(m, "lambda", path).and_then(|x| self.number(x, &field("lambda")));
                Some(ChannelConfig::Depolarizing { n: n?, lambda: lambda? })
            }
            "kraus" => {
                self.unknown_keys(m, &allow(&["algebra", "n", "operators"]), path);
                let ops = self.required(m, "operators", path).and_then(|x| self.elements(x, &field("operators")))?;
                let algebra = self.algebra_for(m, path, Some(&ops))?;
                Some(ChannelConfig::Kraus { algebra, operators: ops })
            }
            "random-unitary" => {
                self.unknown_keys(m, &allow(&["algebra", "n", "weights", "unitaries"]), path);
                let weights = self.required(m, "weights", path).and_then(|x| self.numbers(x, &field("weights")));
                let us = self.required(m, "unitaries", path).and_then(|x| self.elements(x, &field("unitaries")))?;
                let algebra = self.algebra_for(m, path, Some(&us))?;
                Some(ChannelConfig::RandomUnitary { algebra, weights: weights?, unitaries: us })
            }
            "schur" => {
                self.unknown_keys(m, &allow(&["mask"]), path);
                let mask = self.required(m, "mask", path).and_then(|x| self.square(x, &field("mask")))?;
                Some(ChannelConfig::Schur { mask })
            }
            "stochastic" => {
                self.unknown_keys(m, &allow(&["weights", "kernel"]), path);
                let weights = m.get("weights").map(|w| self.numbers(w, &field("weights")));
                let kernel = self.required(m, "kernel", path).and_then(|x| self.square(x, &field("kernel")))?;
                if kernel.iter().any(|z| z.im != 0.0) {
                    return self.err(&field("kernel"), "kernel entries must be real");
                }
                let kernel = kernel.map(|z| z.re);
                let weights = match weights {
                    None => None,
                    Some(w) => Some(w?),
                };
                Some(ChannelConfig::Stochastic { weights, kernel })
            }
            "circulant" => {
                self.unknown_keys(m, &allow(&["probabilities"]), path);
                let probabilities = self.required(m, "probabilities", path).and_then(|x| self.numbers(x, &field("probabilities")))?;
                Some(ChannelConfig::Circulant { probabilities })
            }
            "conditional-expectation" => {
                self.unknown_keys(m, &allow(&["algebra", "n", "subalgebra"]), path);
                let sub = self.required(m, "subalgebra", path).and_then(|x| self.preset(x, &field("subalgebra")));
                let gens = match &sub {
                    Some(Preset::Generators(g)) => Some(g.as_slice()),
                    _ => None,
                };
                let algebra = self.algebra_for(m, path, gens)?;
                Some(ChannelConfig::ConditionalExpectation { algebra, subalgebra: sub? })
            }
            "transpose" => {
                self.unknown_keys(m, &allow(&["n"]), path);
                let n = self.required(m, "n", path).and_then(|x| self.count(x, &field("n")))?;
                Some(ChannelConfig::Transpose { n })
            }
            "transfer" => {
                self.unknown_keys(m, &allow(&["algebra", "n", "matrix"]), path);
                let matrix = self.required(m, "matrix", path).and_then(|x| self.square(x, &field("matrix")));
                let algebra = match (m.get("algebra"), m.get("n"), &matrix) {
                    (None, None, Some(t)) => match (1..=64).find(|d| d * d == t.nrows()) {
                        Some(d) => Some(AlgebraLit::Matrix(d)),
                        None => self.err(&field("matrix"), "size is not a square; give the algebra explicitly"),
                    },
                    _ => self.algebra_for(m, path, None),
                };
                Some(ChannelConfig::Transfer { algebra: algebra?, matrix: matrix? })
            }
            "compose" => {
                self.unknown_keys(m, &allow(&["factors"]), path);
                let fp = field("factors");
                let factors = self.required(m, "factors", path).and_then(|x| self.array(x, &fp))?;
                if factors.is_empty() {
                    return self.err(&fp, "compose needs at least one factor");
                }
                let out: Vec<Option<ChannelConfig>> =
                    factors.iter().enumerate().map(|(i, f)| self.channel(f, &format!("{fp}[{i}]"))).collect();
                out.into_iter().collect::<Option<Vec<_>>>().map(ChannelConfig::Compose)
            }
            other => self.err(&field("kind"), format!("unknown channel kind {other:?}")),
        }
    }

    fn fixed_algebra(&mut self, v: Option<&Value>, path: &str) -> Option<FixedAlgebra> {
        match v {
            None => Some(FixedAlgebra::FixedPoints),
            Some(Value::String(s)) if s == "fixed-points" => Some(FixedAlgebra::FixedPoints),
            Some(v) => self.preset(v, path).map(FixedAlgebra::Preset),
        }
    }

    fn channel_entry(&mut self, v: &Value, path: &str, index: usize, default_fixed: &Option<Value>) -> Option<ChannelEntry> {
        let channel = self.channel(v, path);
        let m = v.as_object()?;
        let id = match m.get("id") {
            Some(id) => self.string(id, &format!("{path}.id"))?.to_string(),
            None => format!("channel-{index}"),
        };
        let fixed_v = m.get("fixed_algebra").or(default_fixed.as_ref());
        let fixed = self.fixed_algebra(fixed_v, &format!("{path}.fixed_algebra"))?;
        Some(ChannelEntry { id, channel: channel?, fixed })
    }

    fn sigma_entry(&mut self, v: &Value, path: &str, index: usize) -> Option<SigmaEntry> {
        let m = self.object(v, path)?;
        self.unknown_keys(m, &["id", "algebra", "n", "a", "b"], path);
        let id = match m.get("id") {
            Some(id) => self.string(id, &format!("{path}.id")).map(str::to_string),
            None => Some(format!("sigma-{index}")),
        };
        let a = self.required(m, "a", path).and_then(|x| self.preset(x, &format!("{path}.a")));
        let b = self.required(m, "b", path).and_then(|x| self.preset(x, &format!("{path}.b")));
        let gens = match &a {
            Some(Preset::Generators(g)) => Some(g.as_slice()),
            _ => None,
        };
        let algebra = self.algebra_for(m, path, gens);
        Some(SigmaEntry { id: id?, algebra: algebra?, a: a?, b: b? })
    }

    fn config(&mut self, v: &Value) -> Option<ExperimentConfig> {
        let m = self.object(v, "$")?;
        self.unknown_keys(m, &TOP_KEYS, "$");
        let default_fixed = m.get("fixed_algebra").cloned();
        if let Some(f) = &default_fixed {
            self.fixed_algebra(Some(f), "$.fixed_algebra");
        }
        let mut channels = Vec::new();
        if let Some(c) = m.get("channel") {
            if let Some(e) = self.channel_entry(c, "$.channel", 0, &default_fixed) {
                channels.push(e);
            }
        }
        if let Some(cs) = m.get("channels") {
            if let Some(a) = self.array(cs, "$.channels") {
                for (i, c) in a.iter().enumerate() {
                    if let Some(e) = self.channel_entry(c, &format!("$.channels[{i}]"), channels.len(), &default_fixed) {
                        channels.push(e);
                    }
                }
            }
        }
        let mut sigma = Vec::new();
        if let Some(ss) = m.get("sigma") {
            let list: Vec<Value> = match ss {
                Value::Array(a) => a.clone(),
                other => vec![other.clone()],
            };
            let single = !ss.is_array();
            for (i, s) in list.iter().enumerate() {
                let p = if single { "$.sigma".to_string() } else { format!("$.sigma[{i}]") };
                if let Some(e) = self.sigma_entry(s, &p, i) {
                    sigma.push(e);
                }
            }
        }
        let mut ids: Vec<&str> = channels.iter().map(|c| c.id.as_str()).chain(sigma.iter().map(|s| s.id.as_str())).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            self.err::<()>("$", format!("duplicate id {:?}", w[0]));
        }

        let tasks = match m.get("tasks") {
            None => {
                let mut t = vec![Task::Validate, Task::Gap, Task::Bounds, Task::Lemmas];
                if !sigma.is_empty() {
                    t.push(Task::Sigma);
                }
                t
            }
            Some(v) => {
                let a = self.array(v, "$.tasks").unwrap_or(&[]);
                let mut t = Vec::new();
                for (i, x) in a.iter().enumerate() {
                    let p = format!("$.tasks[{i}]");
                    if let Some(s) = self.string(x, &p) {
                        match Task::parse(s) {
                            Some(task) if !t.contains(&task) => t.push(task),
                            Some(_) => {}
                            None => {
                                self.err::<()>(&p, format!("unknown task {s:?}"));
                            }
                        }
                    }
                }
                t
            }
        };

        let p_grid = match m.get("p_grid") {
            None => DEFAULT_P_GRID.to_vec(),
            Some(v) => self.numbers(v, "$.p_grid").unwrap_or_default(),
        };
        if p_grid.is_empty() {
            self.err::<()>("$.p_grid", "p_grid is empty");
        }
        let open_needed = tasks.iter().any(|t| matches!(t, Task::Gap | Task::Sigma | Task::Bounds | Task::Lemmas));
        for (i, &p) in p_grid.iter().enumerate() {
            if open_needed && !(p > 1.0) {
                self.err::<()>(&format!("$.p_grid[{i}]"), format!("p = {p} is outside the open interval (1, ∞); the endpoints p=1,∞ are excluded"));
            }
        }
        let no_channel_keys = !m.contains_key("channel") && !m.contains_key("channels");
        if no_channel_keys && tasks.iter().any(|t| *t != Task::Sigma) {
            self.err::<()>("$.channels", "no channel given");
        }
        if tasks.contains(&Task::Sigma) && sigma.is_empty() {
            self.err::<()>("$.sigma", "task sigma needs a sigma entry");
        }

        let seed = match m.get("seed") {
            Some(v) => match v.as_u64() {
                Some(s) => Some(s),
                None => self.err("$.seed", "expected a nonnegative 64-bit integer"),
            },
            None if tasks.iter().any(|t| t.stochastic()) => self.err("$.seed", "seed is required for gap, lemmas and sigma tasks"),
            None => Some(0),
        };
        let restarts = m.get("restarts").map_or(Some(DEFAULT_RESTARTS), |v| self.count(v, "$.restarts"));
        let max_iters = m.get("max_iters").map_or(Some(DEFAULT_MAX_ITERS), |v| self.count(v, "$.max_iters"));
        let lemma_samples = m.get("lemma_samples").map_or(Some(DEFAULT_LEMMA_SAMPLES), |v| self.count(v, "$.lemma_samples"));
        let tol = match m.get("tol") {
            None => Some(DEFAULT_TOL),
            Some(v) => match self.number(v, "$.tol") {
                Some(t) if t > 0.0 => Some(t),
                Some(_) => self.err("$.tol", "tol must be positive"),
                None => None,
            },
        };
        let output = match m.get("output") {
            None => Some(None),
            Some(v) => self.string(v, "$.output").map(|s| Some(PathBuf::from(s))),
        };
        Some(ExperimentConfig {
            channels,
            sigma,
            p_grid,
            tasks,
            seed: seed?,
            restarts: restarts?,
            max_iters: max_iters?,
            tol: tol?,
            lemma_samples: lemma_samples?,
            output: output?,
        })
    }
}

/// `"0.3"`, `"0.3rad"`, `"45deg"`, `"45°"`; bare numbers are radians.
pub fn parse_angle(s: &str) -> Option<f64> {
    let s = s.trim();
    let (num, scale) = if let Some(x) = s.strip_suffix("deg").or_else(|| s.strip_suffix('°')) {
        (x, std::f64::consts::PI / 180.0)
    } else if let Some(x) = s.strip_suffix("rad") {
        (x, 1.0)
    } else {
        (s, 1.0)
    };
    let v: f64 = num.trim().parse().ok()?;
    v.is_finite().then_some(v * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(r#"{"seed": 1, "channel": {"kind": "depolarizing", "n": 2, "lambda": 0.5}}"#).unwrap();
        assert_eq!(cfg.restarts, 20);
        assert_eq!(cfg.tol, 1e-10);
        assert_eq!(cfg.p_grid, DEFAULT_P_GRID.to_vec());
        assert_eq!(cfg.channels[0].id, "channel-0");
        assert_eq!(cfg.channels[0].fixed, FixedAlgebra::FixedPoints);
    }

    #[test]
    fn endpoint_p_is_rejected() {
        let errs = parse_config(r#"{"seed": 1, "tasks": ["gap"], "p_grid": [1.0, 2],
            "channel": {"kind": "depolarizing", "n": 2, "lambda": 0.5}}"#)
        .unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].path, "$.p_grid[0]");
        assert!(errs[0].message.contains("p=1,∞"));
    }

    #[test]
    fn seed_required_for_stochastic_tasks() {
        let errs = parse_config(r#"{"tasks": ["gap"], "channel": {"kind": "transpose", "n": 2}}"#).unwrap_err();
        assert_eq!(errs[0].path, "$.seed");
        assert!(parse_config(r#"{"tasks": ["validate"], "channel": {"kind": "transpose", "n": 2}}"#).is_ok());
    }

    #[test]
    fn errors_carry_paths() {
        let errs = parse_config(
            r#"{"seed": 1, "channels": [
                {"kind": "depolarizing", "n": 2, "lambda": 0.5},
                {"kind": "schur", "mask": [[1, [0, "x"]], [1, 1]]},
                {"kind": "warp"}]}"#,
        )
        .unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, ["$.channels[1].mask[0][1][1]", "$.channels[2].kind"]);
    }

    #[test]
    fn non_psd_mask_parses_but_fails_validation() {
        let cfg = parse_config(r#"{"tasks": ["validate"], "channel": {"kind": "schur", "mask": [[1, 1.5], [1.5, 1]]}}"#).unwrap();
        let t = cfg.channels[0].channel.build().unwrap();
        assert!(!t.is_valid());
    }

    #[test]
    fn presets_and_angles() {
        assert_eq!(parse_angle("45deg"), Some(std::f64::consts::FRAC_PI_4));
        assert_eq!(parse_angle("45°"), Some(std::f64::consts::FRAC_PI_4));
        assert_eq!(parse_angle("0.5"), Some(0.5));
        assert_eq!(parse_angle("x"), None);
        let cfg = parse_config(r#"{"seed": 3, "sigma": {"n": 2, "a": "diagonal", "b": "rotated-diagonal(45°)"}, "tasks": ["sigma"]}"#).unwrap();
        assert_eq!(cfg.sigma[0].b, Preset::RotatedDiagonal(std::f64::consts::FRAC_PI_4));
    }

    #[test]
    fn default_suite_parses() {
        let cfg = parse_config(DEFAULT_SUITE).unwrap();
        assert_eq!(cfg.channels.len(), 6);
        for c in &cfg.channels {
            assert!(c.channel.build().unwrap().is_valid(), "{}", c.id);
        }
    }
}
