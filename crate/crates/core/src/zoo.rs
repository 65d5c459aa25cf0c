//! Shipped model constructors, rate expressions and the scenario schema.
//!
//! Rate expressions are arithmetic over the state index `k`: numbers, `k`,
//! `+ - * / ^`, unary minus and parentheses. `^` is right-associative and
//! binds tighter than unary minus (`-k^2 = -(k^2)`).

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Thresholds, Verdict};
use crate::error::{KatoError, Result};
use crate::operators::{BirthDeath, Boundary, GeneratorPair, Potential};
use crate::quantum::{discretize_ssqds, LindbladModel, SigmaChoice, SsqdsModel};
use crate::state_space::{Mode, C64};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    K,
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Parsed rate expression `k ↦ f(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateExpr {
    source: String,
    root: Node,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> KatoError {
        KatoError::Expression(format!("{msg} at position {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { Op::Add } else { Op::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { Op::Mul } else { Op::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b'k') => {
                self.pos += 1;
                Ok(Node::K)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
                    self.pos += 1;
                }
                // optional exponent: 1e-3, 2.5E4
                if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
                    let save = self.pos;
                    self.pos += 1;
                    if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                        self.pos += 1;
                    }
                    let digits = self.pos;
                    while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    if self.pos == digits {
                        self.pos = save;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                text.parse::<f64>().map(Node::Num).map_err(|_| {
                    self.pos = start;
                    self.err(&format!("invalid number '{text}'"))
                })
            }
            Some(c) => Err(self.err(&format!("unexpected '{}'", c as char))),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

fn eval_node(n: &Node, k: f64) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::K => k,
        Node::Neg(a) => -eval_node(a, k),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval_node(a, k), eval_node(b, k));
            match op {
                Op::Add => x + y,
                Op::Sub => x - y,
                Op::Mul => x * y,
                Op::Div => x / y,
                Op::Pow => {
                    if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
                        x.powi(y as i32)
                    } else {
                        x.powf(y)
                    }
                }
            }
        }
    }
}

impl RateExpr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        let root = p.expr()?;
        if p.peek().is_some() {
            return Err(p.err("trailing input"));
        }
        Ok(Self {
            source: src.to_string(),
            root,
        })
    }

    pub fn eval(&self, k: usize) -> f64 {
        eval_node(&self.root, k as f64)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for RateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// A rate given as an expression in `k`, a constant or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Constant(f64),
    Expr(String),
    List(Vec<f64>),
}

impl RateSpec {
    /// Rates on `0..n`, checked finite and nonnegative.
    pub fn evaluate(&self, n: usize) -> Result<Vec<f64>> {
        let rates: Vec<f64> = match self {
            RateSpec::Constant(c) => vec![*c; n],
            RateSpec::Expr(s) => {
                let e = RateExpr::parse(s)?;
                (0..n).map(|k| e.eval(k)).collect()
            }
            RateSpec::List(v) => {
                if v.len() < n {
                    return Err(KatoError::Validation(format!("rate list has {} entries, truncation needs {n}", v.len())));
                }
                v[..n].to_vec()
            }
        };
        for (k, &r) in rates.iter().enumerate() {
            if !r.is_finite() {
                return Err(KatoError::Validation(format!("rate at k = {k} is not finite")));
            }
            if r < 0.0 {
                return Err(KatoError::NegativeRate { index: k, value: r });
            }
        }
        Ok(rates)
    }
}

impl fmt::Display for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateSpec::Constant(c) => write!(f, "{c}"),
            RateSpec::Expr(s) => f.write_str(s),
            RateSpec::List(v) => write!(f, "list[{}]", v.len()),
        }
    }
}

/// Pure birth with rates `a_k`: `A = diag(−a_k)`, `B e_k = a_k e_{k+1}`.
pub fn make_pure_birth(rate: &RateSpec, n: usize, boundary: Boundary) -> Result<GeneratorPair> {
    Ok(BirthDeath::pure_birth(rate.evaluate(n)?, boundary)?.into())
}

/// Birth–death with loss: `A = diag(−(a_k+b_k+c_k))`, `B` = sub- plus
/// superdiagonal.
pub fn make_birth_death(birth: &RateSpec, death: &RateSpec, loss: &RateSpec, n: usize, boundary: Boundary) -> Result<GeneratorPair> {
    Ok(BirthDeath::new(birth.evaluate(n)?, death.evaluate(n)?, loss.evaluate(n)?, boundary)?.into())
}

/// `Y = −½|1⟩⟨1|`, `L = |0⟩⟨1|`.
pub fn amplitude_damping() -> Result<LindbladModel> {
    let mut y = DMatrix::zeros(2, 2);
    y[(1, 1)] = C64::new(-0.5, 0.0);
    let mut l = DMatrix::zeros(2, 2);
    l[(0, 1)] = C64::new(1.0, 0.0);
    LindbladModel::new(y, vec![l])
}

/// Quantum twin of pure birth: `L e_k = √a_k e_{k+1}` for `k < N−1`,
/// `Y = −½ diag(a_0, …, a_{N−1})`. The jump out of `e_{N−1}` is an escape
/// term, as the absorbing classical truncation drops its last transition.
pub fn cascade(rate: &RateSpec, n: usize) -> Result<LindbladModel> {
    let a = rate.evaluate(n)?;
    let y = DMatrix::from_fn(n, n, |i, j| if i == j { C64::new(-0.5 * a[i], 0.0) } else { C64::new(0.0, 0.0) });
    let l = DMatrix::from_fn(n, n, |i, j| if i == j + 1 { C64::new(a[j].sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
    let mut escape = DMatrix::zeros(n, n);
    if n > 0 {
        escape[(n - 1, n - 1)] = C64::new(a[n - 1], 0.0);
    }
    LindbladModel::with_escape(y, vec![l], escape)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantumSpec {
    AmplitudeDamping,
    Cascade { rate: RateSpec, n: usize },
    Ssqds { m: usize, sigma: SigmaChoice },
}

pub fn make_quantum(spec: &QuantumSpec) -> Result<LindbladModel> {
    match spec {
        QuantumSpec::AmplitudeDamping => amplitude_damping(),
        QuantumSpec::Cascade { rate, n } => cascade(rate, *n),
        QuantumSpec::Ssqds { m, sigma } => Ok(make_ssqds(*m, *sigma)?.model),
    }
}

/// SsQDS on `[0, 2π)` with `M` grid points.
pub fn make_ssqds(m: usize, sigma: SigmaChoice) -> Result<SsqdsModel> {
    discretize_ssqds(m, sigma, 2.0 * std::f64::consts::PI / m.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PureBirth,
    BirthDeath,
    AmplitudeDamping,
    Cascade,
    Ssqds,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::PureBirth,
        ModelKind::BirthDeath,
        ModelKind::AmplitudeDamping,
        ModelKind::Cascade,
        ModelKind::Ssqds,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ModelKind::PureBirth => "pure_birth",
            ModelKind::BirthDeath => "birth_death",
            ModelKind::AmplitudeDamping => "amplitude_damping",
            ModelKind::Cascade => "cascade",
            ModelKind::Ssqds => "ssqds",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            ModelKind::PureBirth | ModelKind::BirthDeath => Mode::Sequence,
            _ => Mode::Matrix,
        }
    }

    pub fn parameters(self) -> &'static str {
        match self {
            ModelKind::PureBirth => "rate, boundary, potential",
            ModelKind::BirthDeath => "birth, death, loss, boundary, potential",
            ModelKind::AmplitudeDamping => "(none; fixed dimension 2)",
            ModelKind::Cascade => "rate, potential",
            ModelKind::Ssqds => "sigma (one | phase); ladder lists grid sizes M",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ModelKind::PureBirth => "pure birth chain on {0..N-1}",
            ModelKind::BirthDeath => "birth-death chain with extra loss c_k",
            ModelKind::AmplitudeDamping => "two-level amplitude damping Lindblad model",
            ModelKind::Cascade => "quantum twin of the pure birth chain",
            ModelKind::Ssqds => "periodic finite-difference diffusion Y = sigma^2/2 d^2, L = sigma d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    Honest,
    Dishonest,
    /// Reported, not gated.
    Qualitative,
}

impl Expected {
    pub fn verdict(self) -> Option<Verdict> {
        match self {
            Expected::Honest => Some(Verdict::Honest),
            Expected::Dishonest => Some(Verdict::Dishonest),
            Expected::Qualitative => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    /// Power series, defect, verdict.
    Diagnostics,
    SpectralMargin,
    TimeDefect,
    Extension,
    /// Conservativity iterates `Q_λⁿ(𝟙)` for quantum models.
    Conservativity,
    /// Gaussian-probe indicator `⟨ψ, Q_λ^M(𝟙) ψ⟩` for SsQDS grids.
    Indicator,
}

fn default_lambda() -> Vec<f64> {
    vec![1.0]
}
fn default_n_max() -> usize {
    10_000
}
fn default_tol() -> f64 {
    1e-12
}
fn default_n_steps() -> usize {
    200
}
fn default_detail_max_dim() -> usize {
    2000
}
fn default_extension_samples() -> usize {
    4
}
fn default_outputs() -> Vec<Output> {
    vec![Output::Diagnostics]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub death: Option<RateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<RateSpec>,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaChoice>,
    /// Scalar potential `K = κ·I`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<f64>,
    /// Injection index for the non-minimal family (`e_j` or `|j⟩⟨j|`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<usize>,
    /// Index of the initial vector `u` for all diagnostics.
    #[serde(default)]
    pub initial: usize,
    #[serde(default)]
    pub ladder: Vec<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    /// Time defects and extension checks run only on ladder points up to
    /// this size.
    #[serde(default = "default_detail_max_dim")]
    pub detail_max_dim: usize,
    #[serde(default = "default_extension_samples")]
    pub extension_samples: usize,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<Output>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| KatoError::Validation(format!("field `{name}`: {e}")))
}

fn require<'a, T>(name: &str, v: &'a Option<T>, model: ModelKind) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| KatoError::Validation(format!("field `{name}`: required for model `{}`", model.id())))
}

/// A model instance for one ladder point.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub pair: GeneratorPair,
    /// The model is exactly finite-dimensional (no truncation edge).
    pub exact_dimension: bool,
    pub lindblad: Option<LindbladModel>,
    pub ssqds: Option<SsqdsModel>,
}

impl ScenarioConfig {
    pub fn mode(&self) -> Mode {
        self.model.mode()
    }

    /// Ladder with model defaults applied.
    pub fn effective_ladder(&self) -> Vec<usize> {
        if self.ladder.is_empty() && self.model == ModelKind::AmplitudeDamping {
            vec![2]
        } else {
            self.ladder.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ladder = self.effective_ladder();
        if ladder.is_empty() {
            return Err(KatoError::Validation("field `ladder`: must list at least one truncation size".into()));
        }
        if ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KatoError::Validation("field `ladder`: must be strictly increasing".into()));
        }
        let min_n = match self.model {
            ModelKind::Ssqds => 8,
            ModelKind::AmplitudeDamping => 2,
            _ => 2,
        };
        if ladder[0] < min_n {
            return Err(KatoError::Validation(format!("field `ladder`: sizes must be at least {min_n}")));
        }
        if self.model == ModelKind::AmplitudeDamping && ladder != [2] {
            return Err(KatoError::Validation("field `ladder`: amplitude_damping has fixed dimension 2".into()));
        }
        if self.lambda.is_empty() {
            return Err(KatoError::Validation("field `lambda`: must not be empty".into()));
        }
        for (i, &l) in self.lambda.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(KatoError::Validation(format!("field `lambda[{i}]`: must be positive and finite, got {l}")));
            }
        }
        if self.n_max == 0 {
            return Err(KatoError::Validation("field `n_max`: must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(KatoError::Validation(format!("field `tol`: must be positive, got {}", self.tol)));
        }
        if self.n_steps == 0 {
            return Err(KatoError::Validation("field `n_steps`: must be at least 1".into()));
        }
        for (i, &t) in self.times.iter().enumerate() {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(KatoError::Validation(format!("field `times[{i}]`: must be finite and nonnegative, got {t}")));
            }
        }
        if let Some(k) = self.potential {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(KatoError::Validation(format!("field `potential`: must be nonnegative, got {k}")));
            }
        }
        let smallest = ladder[0];
        if self.initial >= smallest {
            return Err(KatoError::Validation(format!("field `initial`: index {} outside truncation {smallest}", self.initial)));
        }
        if let Some(j) = self.u0 {
            if j >= smallest {
                return Err(KatoError::Validation(format!("field `u0`: index {j} outside truncation {smallest}")));
            }
        }
        field("thresholds", self.thresholds.validate())?;
        let largest = *ladder.last().unwrap();
        match self.model {
            ModelKind::PureBirth | ModelKind::Cascade => {
                field("rate", require("rate", &self.rate, self.model)?.evaluate(largest).map(|_| ()))?;
            }
            ModelKind::BirthDeath => {
                for (name, spec) in [("birth", &self.birth), ("death", &self.death), ("loss", &self.loss)] {
                    if let Some(s) = spec {
                        field(name, s.evaluate(largest).map(|_| ()))?;
                    }
                }
                require("birth", &self.birth, self.model)?;
            }
            ModelKind::Ssqds => {
                require("sigma", &self.sigma, self.model)?;
            }
            ModelKind::AmplitudeDamping => {}
        }
        let stray = |name: &str, present: bool| -> Result<()> {
            if present {
                Err(KatoError::Validation(format!("field `{name}`: not used by model `{}`", self.model.id())))
            } else {
                Ok(())
            }
        };
        match self.model {
            ModelKind::PureBirth | ModelKind::Cascade => {
                stray("birth", self.birth.is_some())?;
                stray("death", self.death.is_some())?;
                stray("loss", self.loss.is_some())?;
                stray("sigma", self.sigma.is_some())?;
            }
            ModelKind::BirthDeath => {
                stray("rate", self.rate.is_some())?;
                stray("sigma", self.sigma.is_some())?;
            }
            ModelKind::AmplitudeDamping | ModelKind::Ssqds => {
                stray("rate", self.rate.is_some())?;
                stray("birth", self.birth.is_some())?;
                stray("death", self.death.is_some())?;
                stray("loss", self.loss.is_some())?;
                if self.model == ModelKind::AmplitudeDamping {
                    stray("sigma", self.sigma.is_some())?;
                }
            }
        }
        Ok(())
    }

    /// Builds the model at truncation (or grid size) `n`.
    pub fn build(&self, n: usize) -> Result<BuiltModel> {
        let zero = RateSpec::Constant(0.0);
        let (pair, lindblad, ssqds) = match self.model {
            ModelKind::PureBirth => (field("rate", make_pure_birth(require("rate", &self.rate, self.model)?, n, self.boundary))?, None, None),
            ModelKind::BirthDeath => {
                let birth = require("birth", &self.birth, self.model)?;
                let death = self.death.as_ref().unwrap_or(&zero);
                let loss = self.loss.as_ref().unwrap_or(&zero);
                (make_birth_death(birth, death, loss, n, self.boundary)?, None, None)
            }
            ModelKind::AmplitudeDamping => {
                let m = amplitude_damping()?;
                (m.pair().clone(), Some(m), None)
            }
            ModelKind::Cascade => {
                let m = field("rate", cascade(require("rate", &self.rate, self.model)?, n))?;
                (m.pair().clone(), Some(m), None)
            }
            ModelKind::Ssqds => {
                let ss = make_ssqds(n, *require("sigma", &self.sigma, self.model)?)?;
                (ss.model.pair().clone(), Some(ss.model.clone()), Some(ss))
            }
        };
        let pair = match self.potential {
            Some(k) if k > 0.0 => GeneratorPair::wrap_potential(pair, Potential::scalar(self.mode(), n, k))?,
            _ => pair,
        };
        Ok(BuiltModel {
            pair,
            exact_dimension: self.model == ModelKind::AmplitudeDamping,
            lindblad,
            ssqds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_expressions() {
        let e = RateExpr::parse("(k+1)^2").unwrap();
        assert_eq!(e.eval(0), 1.0);
        assert_eq!(e.eval(3), 16.0);
        let e = RateExpr::parse("2*k + 0.5/2 - 1e-1").unwrap();
        assert!((e.eval(2) - (4.0 + 0.25 - 0.1)).abs() < 1e-15);
        assert_eq!(RateExpr::parse("-k^2").unwrap().eval(3), -9.0);
        assert_eq!(RateExpr::parse("2^3^2").unwrap().eval(0), 512.0);
        assert_eq!(RateExpr::parse(" k ").unwrap().eval(7), 7.0);
        for bad in ["", "k+", "(k", "k)", "x", "1..2", "k k"] {
            assert!(RateExpr::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rate_specs() {
        assert!(matches!(RateSpec::Expr("-k".into()).evaluate(3), Err(KatoError::NegativeRate { index: 1, .. })));
        assert_eq!(RateSpec::Constant(2.0).evaluate(2).unwrap(), vec![2.0, 2.0]);
        assert!(RateSpec::List(vec![1.0]).evaluate(2).is_err());
        assert_eq!(RateSpec::List(vec![1.0, 2.0, 3.0]).evaluate(2).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn birth_death_loss_balance() {
        let g = make_birth_death(
            &RateSpec::Expr("k+1".into()),
            &RateSpec::Expr("k".into()),
            &RateSpec::Constant(0.3),
            10,
            Boundary::Absorb,
        )
        .unwrap();
        // ⟨Ψ,(A+B)e_k⟩ = −c_k away from the edge
        for k in 0..9 {
            let e = crate::state_space::StateVector::basis(Mode::Sequence, 10, k);
            let s = (&g.apply_a(&e).unwrap() + &g.apply_b(&e).unwrap()).psi_norm();
            assert!((s + 0.3).abs() < 1e-14);
        }
    }

    #[test]
    fn quantum_constructors() {
        assert!(make_quantum(&QuantumSpec::AmplitudeDamping).unwrap().equality_case());
        let c = make_quantum(&QuantumSpec::Cascade {
            rate: RateSpec::Expr("(k+1)^2".into()),
            n: 20,
        })
        .unwrap();
        assert_eq!(c.dim(), 20);
        assert!(c.equality_case());
        // the truncated twin loses exactly the classical defect ∏ a_k/(1+a_k)
        let u = crate::state_space::StateVector::basis(Mode::Matrix, 20, 0);
        let f = crate::kato::functionals_at(&c.pair().at(1.0).unwrap(), &u, &crate::kato::SeriesOptions::for_mode(Mode::Matrix)).unwrap();
        let prod: f64 = (0..20).map(|k| ((k + 1) * (k + 1)) as f64 / (1.0 + ((k + 1) * (k + 1)) as f64)).product();
        assert!((f.defect - prod).abs() < 1e-10, "{} vs {prod}", f.defect);
        assert!(make_quantum(&QuantumSpec::Ssqds { m: 16, sigma: SigmaChoice::One }).unwrap().equality_case());
    }

    #[test]
    fn scenario_validation() {
        let base = ScenarioConfig {
            name: None,
            description: None,
            model: ModelKind::PureBirth,
            rate: Some(RateSpec::Expr("(k+1)^2".into())),
            birth: None,
            death: None,
            loss: None,
            boundary: Boundary::Absorb,
            sigma: None,
            potential: None,
            u0: None,
            initial: 0,
            ladder: vec![1000],
            lambda: default_lambda(),
            n_max: default_n_max(),
            tol: default_tol(),
            times: vec![],
            n_steps: default_n_steps(),
            detail_max_dim: default_detail_max_dim(),
            extension_samples: default_extension_samples(),
            outputs: default_outputs(),
            expected: None,
            thresholds: Thresholds::default(),
        };
        assert!(base.validate().is_ok());
        let mut bad = base.clone();
        bad.rate = Some(RateSpec::Expr("-k".into()));
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("`rate`"), "{msg}");
        let mut bad = base.clone();
        bad.ladder = vec![100, 100];
        assert!(bad.validate().is_err());
        let mut bad = base.clone();
        bad.lambda = vec![0.0];
        assert!(bad.validate().is_err());
        let mut bad = base.clone();
        bad.sigma = Some(SigmaChoice::One);
        assert!(bad.validate().is_err());
        let mut ad = base;
        ad.model = ModelKind::AmplitudeDamping;
        ad.rate = None;
        ad.ladder = vec![];
        assert!(ad.validate().is_ok());
        assert!(ad.build(2).unwrap().exact_dimension);
    }
}
