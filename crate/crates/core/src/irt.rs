//! Dichotomous Rasch model: response probability, item information and
//! ability estimation.
//!
//! Everything here is pure and stateless. Abilities and difficulties share the
//! logit scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs are taken.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrtError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Person location on the logit scale with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ability {
    pub theta: f64,
    pub se: f64,
}

/// Normal prior over ability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: f64,
    pub sd: f64,
}

impl Prior {
    pub fn new(mean: f64, sd: f64) -> Result<Self, IrtError> {
        let prior = Prior { mean, sd };
        prior.validate()?;
        Ok(prior)
    }

    pub fn standard_normal() -> Self {
        Prior { mean: 0.0, sd: 1.0 }
    }

    pub fn validate(&self) -> Result<(), IrtError> {
        if !self.mean.is_finite() || !self.sd.is_finite() || self.sd <= 0.0 {
            return Err(IrtError::InvalidArgument(format!(
                "prior needs finite mean and sd > 0, got N({}, {})",
                self.mean, self.sd
            )));
        }
        Ok(())
    }

    fn log_density(&self, theta: f64) -> f64 {
        let z = (theta - self.mean) / self.sd;
        -0.5 * z * z
    }
}

impl Default for Prior {
    /// N(0, 3²): weakly informative relative to the observed spread of test takers.
    fn default() -> Self {
        Prior { mean: 0.0, sd: 3.0 }
    }
}

/// One dichotomously scored response to an item of known difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub difficulty: f64,
    pub correct: bool,
}

impl ScoredResponse {
    pub fn new(difficulty: f64, correct: bool) -> Self {
        ScoredResponse { difficulty, correct }
    }
}

fn check_finite(theta: f64, b: f64) -> Result<(), IrtError> {
    if theta.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(IrtError::InvalidArgument(format!(
            "theta and difficulty must be finite, got theta={theta}, b={b}"
        )))
    }
}

/// Logistic function evaluated without overflow for large |x|.
#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Unchecked Rasch probability; callers guarantee finite inputs.
#[inline]
pub(crate) fn prob(theta: f64, b: f64) -> f64 {
    logistic(theta - b)
}

/// Probability that a person at `theta` answers an item of difficulty `b` correctly.
pub fn rasch_prob(theta: f64, b: f64) -> Result<f64, IrtError> {
    check_finite(theta, b)?;
    Ok(prob(theta, b))
}

/// Fisher information of a Rasch item at `theta`: `P(1 - P)`.
pub fn item_information(theta: f64, b: f64) -> Result<f64, IrtError> {
    check_finite(theta, b)?;
    Ok(info(theta, b))
}

#[inline]
pub(crate) fn info(theta: f64, b: f64) -> f64 {
    // e / (1 + e)^2 with e = exp(-|theta - b|) is exactly symmetric in (theta, b).
    let e = (-(theta - b).abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

#[inline]
pub(crate) fn log_prob_clamped(theta: f64, b: f64, correct: bool) -> f64 {
    let p = prob(theta, b).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    if correct {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// Fixed, equally spaced quadrature grid with Simpson weights (trapezoid when
/// the interval count is odd).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub const DEFAULT_POINTS: usize = 121;
    pub const DEFAULT_EXTENT: f64 = 10.0;

    pub fn uniform(lo: f64, hi: f64, points: usize) -> Result<Self, IrtError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 3 {
            return Err(IrtError::InvalidArgument(format!(
                "quadrature grid needs lo < hi and at least 3 points, got [{lo}, {hi}] x {points}"
            )));
        }
        let intervals = points - 1;
        let step = (hi - lo) / intervals as f64;
        let nodes = (0..points).map(|i| lo + step * i as f64).collect();
        let weights = if intervals % 2 == 0 {
            (0..points)
                .map(|i| {
                    if i == 0 || i == intervals {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    }
                })
                .collect()
        } else {
            (0..points)
                .map(|i| if i == 0 || i == intervals { 0.5 } else { 1.0 })
                .collect()
        };
        Ok(QuadratureGrid { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Relative integration weights (not normalised).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Normalised weights of a normal density over the grid nodes.
    pub fn normal_weights(&self, prior: &Prior) -> Vec<f64> {
        let raw: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * prior.log_density(t).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid::uniform(
            -Self::DEFAULT_EXTENT,
            Self::DEFAULT_EXTENT,
            Self::DEFAULT_POINTS,
        )
        .expect("default grid is valid")
    }
}

/// Expected-a-posteriori ability on the default grid.
///
/// With no responses the posterior is the prior itself and is returned as is.
pub fn estimate_ability(responses: &[ScoredResponse], prior: &Prior) -> Ability {
    thread_local! {
        static GRID: QuadratureGrid = QuadratureGrid::default();
    }
    GRID.with(|grid| estimate_ability_on(responses, prior, grid))
}

/// Expected-a-posteriori ability: posterior mean and sd under the Rasch
/// likelihood times a normal prior, integrated over `grid`.
pub fn estimate_ability_on(
    responses: &[ScoredResponse],
    prior: &Prior,
    grid: &QuadratureGrid,
) -> Ability {
    if responses.is_empty() {
        return Ability {
            theta: prior.mean,
            se: prior.sd,
        };
    }
    let log_post: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&t| {
            prior.log_density(t)
                + responses
                    .iter()
                    .map(|r| log_prob_clamped(t, r.difficulty, r.correct))
                    .sum::<f64>()
        })
        .collect();
    posterior_moments(&grid.nodes, &grid.weights, &log_post)
}

pub(crate) fn posterior_moments(nodes: &[f64], weights: &[f64], log_post: &[f64]) -> Ability {
    let peak = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut mass = 0.0;
    let mut first = 0.0;
    let post: Vec<f64> = log_post
        .iter()
        .zip(weights)
        .map(|(&lp, &w)| w * (lp - peak).exp())
        .collect();
    for (&t, &p) in nodes.iter().zip(&post) {
        mass += p;
        first += p * t;
    }
    let mean = first / mass;
    let var = nodes
        .iter()
        .zip(&post)
        .map(|(&t, &p)| p * (t - mean) * (t - mean))
        .sum::<f64>()
        / mass;
    Ability {
        theta: mean,
        se: var.max(0.0).sqrt(),
    }
}

/// Outcome of maximum-likelihood scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MleEstimate {
    Finite(Ability),
    /// All-correct or all-incorrect pattern: the likelihood is monotone.
    NoFiniteMaximum,
}

/// Maximum-likelihood ability by Newton iteration.
pub fn mle_ability(responses: &[ScoredResponse]) -> Result<MleEstimate, IrtError> {
    if responses.is_empty() {
        return Err(IrtError::InvalidArgument(
            "maximum likelihood needs at least one response".into(),
        ));
    }
    if let Some(r) = responses.iter().find(|r| !r.difficulty.is_finite()) {
        return Err(IrtError::InvalidArgument(format!(
            "non-finite difficulty {}",
            r.difficulty
        )));
    }
    let n_correct = responses.iter().filter(|r| r.correct).count();
    if n_correct == 0 || n_correct == responses.len() {
        return Ok(MleEstimate::NoFiniteMaximum);
    }

    let mean_b = responses.iter().map(|r| r.difficulty).sum::<f64>() / responses.len() as f64;
    let frac = n_correct as f64 / responses.len() as f64;
    let mut theta = mean_b + (frac / (1.0 - frac)).ln();
    for _ in 0..200 {
        let (grad, curv) = responses.iter().fold((0.0, 0.0), |(g, c), r| {
            let p = prob(theta, r.difficulty);
            let x = if r.correct { 1.0 } else { 0.0 };
            (g + x - p, c + p * (1.0 - p))
        });
        let step = (grad / curv).clamp(-2.0, 2.0);
        theta += step;
        if step.abs() < 1e-12 {
            break;
        }
    }
    let curv: f64 = responses.iter().map(|r| info(theta, r.difficulty)).sum();
    Ok(MleEstimate::Finite(Ability {
        theta,
        se: 1.0 / curv.sqrt(),
    }))
}
