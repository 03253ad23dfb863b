//! The three synthetic multi-view model families with exact sampling and
//! exact (or quadrature-grade) probabilistic oracles.
//!
//! Every model exposes the same oracle surface:
//!
//! | oracle                 | meaning                                      |
//! |------------------------|----------------------------------------------|
//! | `p_x`, `p_z`           | view marginals (pmf, or pdf for the Gaussian)|
//! | `joint_xz`             | joint view density p(x, z)                   |
//! | `odds` / `log_odds`    | g*(x,z) = p(x,z) / (p_X(x) p_Z(z)) and its ln|
//! | `cond_mean_y_given_z`  | E[Y | Z=z]                                   |
//! | `cond_mean_y_given_xz` | E[Y | X=x, Z=z]                              |
//! | `mu`                   | mu(x) = E[ E[Y|Z] | X=x ]                    |
//! | `redundancy`           | (eps_x, eps_z, eps_mu)                       |
//!
//! Models are immutable after construction and all oracles are pure, so they
//! are safe to share across threads. Invalid parameters are rejected at
//! construction; oracle calls only fail on out-of-support views.

mod discrete;
mod file;
mod gaussian;
mod topic;

pub use discrete::DiscreteHiddenModel;
pub use file::{load_model, parse_model, validate_model_str};
pub use gaussian::GaussianModel;
pub use topic::TopicModel;

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, splitmix64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Probability-vector / row-stochastic tolerances used by every validator.
pub const PROB_TOL: f64 = 1e-12;

/// A single observed view: an index into a finite view space, or a real for
/// the Gaussian family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum View {
    Idx(usize),
    Real(f64),
}

impl View {
    pub fn idx(&self) -> Result<usize> {
        match self {
            View::Idx(i) => Ok(*i),
            View::Real(_) => Err(Error::OutOfSupport {
                view: "index",
                value: format!("{self}"),
            }),
        }
    }

    pub fn real(&self) -> Result<f64> {
        match self {
            View::Real(r) => Ok(*r),
            View::Idx(_) => Err(Error::OutOfSupport {
                view: "real",
                value: format!("{self}"),
            }),
        }
    }
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            View::Idx(i) => write!(f, "#{i}"),
            View::Real(r) => write!(f, "{r}"),
        }
    }
}

/// A realization of the hidden variable H: a state index (discrete), a point
/// on the simplex (topic), or a real (Gaussian).
#[derive(Debug, Clone, PartialEq)]
pub enum Hidden {
    Idx(usize),
    Simplex(Vec<f64>),
    Real(f64),
}

/// i.i.d. labeled rows (x, z, y) from one model.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<(View, View, f64)>,
    pub seed: u64,
    pub model_id: String,
}

/// The redundancy quantities: eps_x = E[(E[Y|X] - E[Y|X,Z])^2], eps_z its
/// mirror, and eps_mu = eps_x + 2 sqrt(eps_x eps_z) + eps_z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Redundancy {
    pub eps_x: f64,
    pub eps_z: f64,
    pub eps_mu: f64,
}

pub(crate) fn compose_eps_mu(eps_x: f64, eps_z: f64) -> f64 {
    eps_x + 2.0 * (eps_x * eps_z).sqrt() + eps_z
}

/// Stream tags keeping the per-purpose RNG streams of one seed disjoint.
pub(crate) mod stream {
    pub const SAMPLE: u64 = 0x01;
    pub const SAMPLE_X: u64 = 0x02;
    pub const SAMPLE_Z: u64 = 0x03;
    pub const HIDDEN: u64 = 0x04;
    pub const CONTRAST: u64 = 0x05;
    pub const TRAIN: u64 = 0x06;
    pub const LANDMARK: u64 = 0x07;
    pub const VALIDATION: u64 = 0x08;
    pub const PERTURB: u64 = 0x09;
    pub const EVAL: u64 = 0x0a;
}

/// Per-draw RNG: one independent ChaCha8 stream per (seed, purpose, index).
/// Sampling draw i never touches draw j's stream, so parallel replication is
/// deterministic regardless of scheduling, as is changing n.
pub(crate) fn draw_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[purpose, splitmix64(index)]))
}

/// Inverse-CDF categorical draw; `probs` must sum to 1.
pub(crate) fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A generative model over (X, Z, Y); the uniform entry point used by the
/// contrastive, embedding, and bound layers.
#[derive(Debug, Clone)]
pub enum MultiViewModel {
    Discrete(DiscreteHiddenModel),
    Topic(TopicModel),
    Gaussian(GaussianModel),
}

impl From<DiscreteHiddenModel> for MultiViewModel {
    fn from(m: DiscreteHiddenModel) -> Self {
        MultiViewModel::Discrete(m)
    }
}
impl From<TopicModel> for MultiViewModel {
    fn from(m: TopicModel) -> Self {
        MultiViewModel::Topic(m)
    }
}
impl From<GaussianModel> for MultiViewModel {
    fn from(m: GaussianModel) -> Self {
        MultiViewModel::Gaussian(m)
    }
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            MultiViewModel::Discrete($m) => $body,
            MultiViewModel::Topic($m) => $body,
            MultiViewModel::Gaussian($m) => $body,
        }
    };
}

impl MultiViewModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MultiViewModel::Discrete(_) => "discrete",
            MultiViewModel::Topic(_) => "topic",
            MultiViewModel::Gaussian(_) => "gaussian",
        }
    }

    pub fn id(&self) -> &str {
        dispatch!(self, m => m.id())
    }

    /// Size of the finite x view space; `None` for the Gaussian family.
    pub fn support_x(&self) -> Option<usize> {
        match self {
            MultiViewModel::Discrete(m) => Some(m.num_x()),
            MultiViewModel::Topic(m) => Some(m.vocab_size()),
            MultiViewModel::Gaussian(_) => None,
        }
    }

    pub fn support_z(&self) -> Option<usize> {
        match self {
            MultiViewModel::Discrete(m) => Some(m.num_z()),
            MultiViewModel::Topic(m) => Some(m.vocab_size()),
            MultiViewModel::Gaussian(_) => None,
        }
    }

    pub fn p_x(&self, x: &View) -> Result<f64> {
        dispatch!(self, m => m.p_x(x))
    }

    pub fn p_z(&self, z: &View) -> Result<f64> {
        dispatch!(self, m => m.p_z(z))
    }

    pub fn joint_xz(&self, x: &View, z: &View) -> Result<f64> {
        dispatch!(self, m => m.joint_xz(x, z))
    }

    /// g*(x, z) = p(x,z) / (p_X(x) p_Z(z)); exact for every family.
    pub fn odds(&self, x: &View, z: &View) -> Result<f64> {
        dispatch!(self, m => m.odds(x, z))
    }

    pub fn log_odds(&self, x: &View, z: &View) -> Result<f64> {
        dispatch!(self, m => m.log_odds(x, z))
    }

    pub fn cond_mean_y_given_z(&self, z: &View) -> Result<f64> {
        dispatch!(self, m => m.cond_mean_y_given_z(z))
    }

    pub fn cond_mean_y_given_xz(&self, x: &View, z: &View) -> Result<f64> {
        dispatch!(self, m => m.cond_mean_y_given_xz(x, z))
    }

    /// mu(x) = E[ E[Y|Z] | X=x ].
    pub fn mu(&self, x: &View) -> Result<f64> {
        dispatch!(self, m => m.mu(x))
    }

    pub fn redundancy(&self) -> Redundancy {
        dispatch!(self, m => m.redundancy())
    }

    /// E[Y^2], exact (enumeration, Dirichlet moments, or quadrature).
    pub fn e_y2(&self) -> f64 {
        dispatch!(self, m => m.e_y2())
    }

    /// Exact (I(Y;Z|X), I(Y;X|Z)) in nats. Only the finite hidden-state
    /// family has an enumerable label distribution.
    pub fn conditional_mi(&self) -> Result<(f64, f64)> {
        match self {
            MultiViewModel::Discrete(m) => Ok(m.conditional_mi()),
            _ => Err(Error::Unsupported {
                op: "conditional_mi",
                model: self.kind_name(),
                why: "the label is a continuous random variable here; exact \
                      enumeration needs the finite hidden-state family",
            }),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        assert!(n >= 1, "sample count must be positive");
        let rows = (0..n)
            .map(|i| {
                let mut rng = draw_rng(seed, stream::SAMPLE, i as u64);
                dispatch!(self, m => m.draw(&mut rng))
            })
            .collect();
        Dataset {
            rows,
            seed,
            model_id: self.id().to_string(),
        }
    }

    /// One joint draw from a caller-managed stream (used by the contrastive
    /// sampler so positives and negatives interleave deterministically).
    pub(crate) fn draw_with(&self, rng: &mut ChaCha8Rng) -> (View, View, f64) {
        dispatch!(self, m => m.draw(rng))
    }

    pub(crate) fn draw_x_with(&self, rng: &mut ChaCha8Rng) -> View {
        dispatch!(self, m => m.draw_x(rng))
    }

    pub(crate) fn draw_z_with(&self, rng: &mut ChaCha8Rng) -> View {
        dispatch!(self, m => m.draw_z(rng))
    }

    /// i.i.d. draws from the x marginal.
    pub fn sample_x(&self, n: usize, seed: u64) -> Vec<View> {
        (0..n)
            .map(|i| {
                let mut rng = draw_rng(seed, stream::SAMPLE_X, i as u64);
                dispatch!(self, m => m.draw_x(&mut rng))
            })
            .collect()
    }

    /// i.i.d. draws from the z marginal.
    pub fn sample_z(&self, n: usize, seed: u64) -> Vec<View> {
        (0..n)
            .map(|i| {
                let mut rng = draw_rng(seed, stream::SAMPLE_Z, i as u64);
                dispatch!(self, m => m.draw_z(&mut rng))
            })
            .collect()
    }

    /// i.i.d. draws of the hidden variable, for the probabilistic embedding.
    pub fn sample_hidden(&self, n: usize, seed: u64) -> Vec<Hidden> {
        (0..n)
            .map(|i| {
                let mut rng = draw_rng(seed, stream::HIDDEN, i as u64);
                dispatch!(self, m => m.draw_hidden(&mut rng))
            })
            .collect()
    }

    /// Conditional view density p_{X|H}(x | h).
    pub fn lik_x_given_hidden(&self, x: &View, h: &Hidden) -> Result<f64> {
        dispatch!(self, m => m.lik_x_given_hidden(x, h))
    }

    pub fn lik_z_given_hidden(&self, z: &View, h: &Hidden) -> Result<f64> {
        dispatch!(self, m => m.lik_z_given_hidden(z, h))
    }

    /// Re-runs every construction invariant, returning all violations with
    /// their numerical slack (empty for a valid model).
    pub fn validate_report(&self) -> Vec<crate::error::InvariantViolation> {
        dispatch!(self, m => m.validate_report())
    }
}
