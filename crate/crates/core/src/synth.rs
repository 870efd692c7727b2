//! Synthetic score models and 2PL response generators.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with `seed_from_u64`, so
//! output is identical across platforms and thread counts. Abilities and
//! items of a [`TwoPLWorld`] are drawn from stream 0; responses from stream 1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::DifficultyBinning;
use crate::irt::icc;
use crate::normalize::BinaryResponseMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid score model: {0}")]
    InvalidModel(String),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
}

/// A distribution of scores in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreModel {
    Constant {
        value: f64,
    },
    Categorical {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Mix {
        a: Box<ScoreModel>,
        b: Box<ScoreModel>,
        weight_a: f64,
    },
    /// Same as `Uniform { lo: 0, hi: 1 }`.
    Random,
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl ScoreModel {
    pub fn categorical(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, SynthError> {
        let m = ScoreModel::Categorical { values, probs };
        m.validate()?;
        Ok(m)
    }

    pub fn mix(a: ScoreModel, b: ScoreModel, weight_a: f64) -> Result<Self, SynthError> {
        let m = ScoreModel::Mix {
            a: Box::new(a),
            b: Box::new(b),
            weight_a,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |s: String| Err(SynthError::InvalidModel(s));
        match self {
            ScoreModel::Constant { value } if !in_unit(*value) => {
                bad(format!("constant {value} outside [0,1]"))
            }
            ScoreModel::Categorical { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad(format!(
                        "{} values but {} probabilities",
                        values.len(),
                        probs.len()
                    ));
                }
                if let Some(v) = values.iter().find(|v| !in_unit(**v)) {
                    return bad(format!("categorical value {v} outside [0,1]"));
                }
                if let Some(p) = probs.iter().find(|p| !in_unit(**p)) {
                    return bad(format!("probability {p} outside [0,1]"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("probabilities sum to {total}, not 1"));
                }
                Ok(())
            }
            ScoreModel::Uniform { lo, hi } if !(0.0 <= *lo && lo < hi && *hi <= 1.0) => bad(
                format!("uniform bounds need 0 <= lo < hi <= 1, got [{lo}, {hi}]"),
            ),
            ScoreModel::Mix { a, b, weight_a } => {
                if !in_unit(*weight_a) {
                    return bad(format!("mix weight {weight_a} outside [0,1]"));
                }
                a.validate()?;
                b.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn analytic_mean(&self) -> f64 {
        match self {
            ScoreModel::Constant { value } => *value,
            ScoreModel::Categorical { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
            ScoreModel::Uniform { lo, hi } => (lo + hi) / 2.0,
            ScoreModel::Mix { a, b, weight_a } => {
                weight_a * a.analytic_mean() + (1.0 - weight_a) * b.analytic_mean()
            }
            ScoreModel::Random => 0.5,
        }
    }

    pub fn analytic_variance(&self) -> f64 {
        match self {
            ScoreModel::Constant { .. } => 0.0,
            ScoreModel::Categorical { values, probs } => {
                let m = self.analytic_mean();
                values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| p * (v - m) * (v - m))
                    .sum()
            }
            ScoreModel::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
            ScoreModel::Mix { a, b, weight_a } => {
                let (ma, mb) = (a.analytic_mean(), b.analytic_mean());
                let m = self.analytic_mean();
                weight_a * (a.analytic_variance() + ma * ma)
                    + (1.0 - weight_a) * (b.analytic_variance() + mb * mb)
                    - m * m
            }
            ScoreModel::Random => 1.0 / 12.0,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ScoreModel::Constant { value } => *value,
            ScoreModel::Categorical { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                // rounding left u above the cumulative total
                let last = probs
                    .iter()
                    .rposition(|&p| p > 0.0)
                    .unwrap_or(values.len() - 1);
                values[last]
            }
            ScoreModel::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            ScoreModel::Mix { a, b, weight_a } => {
                if rng.random::<f64>() < *weight_a {
                    a.draw(rng)
                } else {
                    b.draw(rng)
                }
            }
            ScoreModel::Random => rng.random(),
        }
    }
}

impl fmt::Display for ScoreModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreModel::Constant { value } => write!(f, "constant:{value}"),
            ScoreModel::Categorical { values, probs } => {
                f.write_str("categorical:")?;
                for (k, (v, p)) in values.iter().zip(probs).enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}:{p}")?;
                }
                Ok(())
            }
            ScoreModel::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            ScoreModel::Mix { a, b, weight_a } => write!(f, "mix:{weight_a}:({a}):({b})"),
            ScoreModel::Random => f.write_str("random"),
        }
    }
}

/// `n` independent draws from `model`.
pub fn sample_scores(model: &ScoreModel, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    model.validate()?;
    if n == 0 {
        return Err(SynthError::InvalidModel(
            "sample size must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| model.draw(&mut rng)).collect())
}

/// One Bernoulli(p) draw.
pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// Known 2PL abilities and items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPLWorld {
    pub agent_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub true_abilities: Vec<f64>,
    /// `(a, b)` per item.
    pub true_items: Vec<(f64, f64)>,
    pub seed: u64,
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (0..n).map(|k| format!("{prefix}{k:0width$}")).collect()
}

impl TwoPLWorld {
    /// θ ~ N(0,1), b ~ N(0,1), a ~ U(0.5, 2.5).
    pub fn generate(agents: usize, items: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let true_abilities = (0..agents)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let true_items = (0..items)
            .map(|_| {
                let a = rng.random_range(0.5..2.5);
                let b: f64 = StandardNormal.sample(&mut rng);
                (a, b)
            })
            .collect();
        TwoPLWorld {
            agent_ids: ids("agent", agents),
            item_ids: ids("item", items),
            true_abilities,
            true_items,
            seed,
        }
    }

    /// A world with given parameters and generated ids.
    pub fn new(
        true_abilities: Vec<f64>,
        true_items: Vec<(f64, f64)>,
        seed: u64,
    ) -> Result<Self, SynthError> {
        let w = TwoPLWorld {
            agent_ids: ids("agent", true_abilities.len()),
            item_ids: ids("item", true_items.len()),
            true_abilities,
            true_items,
            seed,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.agent_ids.len() != self.true_abilities.len()
            || self.item_ids.len() != self.true_items.len()
        {
            return Err(SynthError::InvalidWorld(
                "id and parameter counts differ".into(),
            ));
        }
        if self.true_abilities.iter().any(|t| !t.is_finite())
            || self
                .true_items
                .iter()
                .any(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(SynthError::InvalidWorld("parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn prob(&self, agent: usize, item: usize) -> f64 {
        let (a, b) = self.true_items[item];
        icc(self.true_abilities[agent], a, b, 0.0)
    }
}

/// Bernoulli responses with `p = σ(a(θ - b))`, row-major, one draw per cell.
pub fn sample_2pl_matrix(world: &TwoPLWorld) -> Result<BinaryResponseMatrix, SynthError> {
    world.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
    rng.set_stream(1);
    let rows = (0..world.true_abilities.len())
        .map(|j| {
            (0..world.true_items.len())
                .map(|i| Some(bernoulli(&mut rng, world.prob(j, i))))
                .collect()
        })
        .collect();
    BinaryResponseMatrix::new(world.agent_ids.clone(), world.item_ids.clone(), rows, None)
        .map_err(|e| SynthError::InvalidWorld(e.to_string()))
}

/// Scores 1 on every item in bins `1..=cutoff_bin` (1-based, easiest first)
/// and 0 elsewhere.
pub fn perfectly_general_agent(
    binning: &DifficultyBinning,
    cutoff_bin: usize,
) -> Result<BTreeMap<String, f64>, SynthError> {
    if cutoff_bin == 0 || cutoff_bin > binning.n_bins() {
        return Err(SynthError::InvalidModel(format!(
            "cutoff bin {cutoff_bin} outside 1..={}",
            binning.n_bins()
        )));
    }
    Ok(binning
        .bin_assignment
        .iter()
        .map(|(id, &h)| (id.clone(), if h < cutoff_bin { 1.0 } else { 0.0 }))
        .collect())
}

/// A parsed `simulate` specification.
#[derive(Debug, Clone, PartialEq)]
pub enum SimSpec {
    Scores {
        model: ScoreModel,
        n: Option<usize>,
    },
    TwoPL {
        agents: usize,
        items: usize,
        seed: Option<u64>,
    },
}

impl FromStr for SimSpec {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, SynthError> {
        parse_sim_spec(s)
    }
}

impl FromStr for ScoreModel {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, SynthError> {
        let mut p = Parser { src: s, pos: 0 };
        let m = p.model()?;
        p.end()?;
        Ok(m)
    }
}

/// Parses `constant:0.75`, `categorical:0:0.3,1:0.7`, `uniform:0.3,1`,
/// `random`, `mix:<w>:<m1>:<m2>` (operands may be parenthesised) or
/// `2pl:agents=500,items=60,seed=7`. A score model may be followed by
/// whitespace and `n=<count>`.
pub fn parse_sim_spec(s: &str) -> Result<SimSpec, SynthError> {
    let mut p = Parser { src: s, pos: 0 };
    p.skip_ws();
    if p.peek_word().eq_ignore_ascii_case("2pl") {
        p.word()?;
        p.expect(':')?;
        let (mut agents, mut items, mut seed) = (None, None, None);
        loop {
            let at = p.pos;
            let key = p.word()?;
            p.expect('=')?;
            let v = p.integer()?;
            match key.as_str() {
                "agents" => agents = Some(v as usize),
                "items" => items = Some(v as usize),
                "seed" => seed = Some(v),
                _ => return Err(p.error_at(at, format!("unknown 2pl key `{key}`"))),
            }
            if !p.eat(',') {
                break;
            }
        }
        p.end()?;
        let agents = agents.ok_or_else(|| p.error("2pl needs agents=<n>"))?;
        let items = items.ok_or_else(|| p.error("2pl needs items=<n>"))?;
        if agents == 0 || items == 0 {
            return Err(p.error("2pl needs at least one agent and one item"));
        }
        return Ok(SimSpec::TwoPL {
            agents,
            items,
            seed,
        });
    }
    let model = p.model()?;
    p.skip_ws();
    let mut n = None;
    if p.pos < p.src.len() {
        let at = p.pos;
        let key = p.word()?;
        if key != "n" {
            return Err(p.error_at(at, format!("expected `n=<count>`, found `{key}`")));
        }
        p.expect('=')?;
        n = Some(p.integer()? as usize);
    }
    p.end()?;
    Ok(SimSpec::Scores { model, n })
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn error_at(&self, position: usize, message: impl Into<String>) -> SynthError {
        SynthError::Parse {
            position,
            message: message.into(),
        }
    }

    fn error(&self, message: impl Into<String>) -> SynthError {
        self.error_at(self.pos, message)
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, c: char) -> bool {
        if self.rest().starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), SynthError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn end(&mut self) -> Result<(), SynthError> {
        self.skip_ws();
        if self.pos == self.src.len() {
            Ok(())
        } else {
            Err(self.error(format!("unexpected trailing input `{}`", self.rest())))
        }
    }

    fn peek_word(&self) -> &str {
        let r = self.rest();
        let end = r
            .find(|c: char| !c.is_ascii_alphanumeric())
            .unwrap_or(r.len());
        &r[..end]
    }

    fn word(&mut self) -> Result<String, SynthError> {
        let w = self.peek_word().to_string();
        if w.is_empty() {
            return Err(self.error("expected a keyword"));
        }
        self.pos += w.len();
        Ok(w)
    }

    fn number(&mut self) -> Result<f64, SynthError> {
        let r = self.rest();
        let end = r
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(r.len());
        let tok = &r[..end];
        let v: f64 = tok.parse().map_err(|_| {
            self.error(format!(
                "expected a number, found `{}`",
                if tok.is_empty() { r } else { tok }
            ))
        })?;
        self.pos += end;
        Ok(v)
    }

    fn integer(&mut self) -> Result<u64, SynthError> {
        let r = self.rest();
        let end = r.find(|c: char| !c.is_ascii_digit()).unwrap_or(r.len());
        let v = r[..end]
            .parse()
            .map_err(|_| self.error("expected a non-negative integer"))?;
        self.pos += end;
        Ok(v)
    }

    fn model(&mut self) -> Result<ScoreModel, SynthError> {
        if self.eat('(') {
            let m = self.model()?;
            self.expect(')')?;
            return Ok(m);
        }
        let start = self.pos;
        let kw = self.word()?.to_ascii_lowercase();
        let m = match kw.as_str() {
            "random" => ScoreModel::Random,
            "constant" => {
                self.expect(':')?;
                ScoreModel::Constant {
                    value: self.number()?,
                }
            }
            "uniform" => {
                self.expect(':')?;
                let lo = self.number()?;
                self.expect(',')?;
                ScoreModel::Uniform {
                    lo,
                    hi: self.number()?,
                }
            }
            "categorical" => {
                self.expect(':')?;
                let (mut values, mut probs) = (Vec::new(), Vec::new());
                loop {
                    values.push(self.number()?);
                    self.expect(':')?;
                    probs.push(self.number()?);
                    if !self.eat(',') {
                        break;
                    }
                }
                ScoreModel::Categorical { values, probs }
            }
            "mix" => {
                self.expect(':')?;
                let weight_a = self.number()?;
                self.expect(':')?;
                let a = self.model()?;
                self.expect(':')?;
                let b = self.model()?;
                ScoreModel::Mix {
                    a: Box::new(a),
                    b: Box::new(b),
                    weight_a,
                }
            }
            _ => return Err(self.error_at(start, format!("unknown model `{kw}`"))),
        };
        m.validate()
            .map_err(|e| self.error_at(start, e.to_string()))?;
        Ok(m)
    }
}
