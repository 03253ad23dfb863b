//! View embeddings and the weight vectors that ride on them.
//!
//! Three constructions, all targeting the two-stage predictor mu:
//!
//! * landmark embeddings phi(x) = (g(x, z_1), ..., g(x, z_m)) over a random
//!   sample of z-views, with block-built weights validated on fresh draws;
//! * the exact posterior factorization for discrete hidden states, where
//!   eta(x) is the posterior over H and psi(z) the likelihood ratio vector,
//!   so that eta(x) . psi(z) recovers the density ratio identically;
//! * the hidden-sample construction eta(x)_i = p(x|H_i) / (p_X(x) sqrt(m))
//!   over i.i.d. hidden draws H_i, an unbiased low-rank sketch of the ratio.
//!
//! Text dumps (`to_text`) follow the scorer format: a header line per object,
//! then any tables as `name rows=R cols=C` plus row-major lines.

pub mod transfer;

use crate::contrastive::PairScorer;
use crate::error::{Error, Result};
use crate::models::{stream, Hidden, MultiViewModel, View};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// A map from views to m-dimensional vectors.
pub trait Embedding {
    fn dim(&self) -> usize;
    fn embed(&self, v: &View) -> Result<DVector<f64>>;
}

/// Which view's marginal and conditional likelihood a component uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewSide {
    X,
    Z,
}

/// One factor of a factorized embedding: dense rows over a finite support,
/// or the hidden-sample construction evaluated on demand.
#[derive(Debug, Clone)]
pub enum EmbedMap {
    /// Row per view index, column per component.
    Table(DMatrix<f64>),
    /// Component i is lik(view | hiddens[i]) / (marginal(view) sqrt(m)).
    HiddenSample {
        model: Arc<MultiViewModel>,
        hiddens: Arc<Vec<Hidden>>,
        side: ViewSide,
    },
}

impl Embedding for EmbedMap {
    fn dim(&self) -> usize {
        match self {
            EmbedMap::Table(t) => t.ncols(),
            EmbedMap::HiddenSample { hiddens, .. } => hiddens.len(),
        }
    }

    fn embed(&self, v: &View) -> Result<DVector<f64>> {
        match self {
            EmbedMap::Table(t) => {
                let i = v.idx()?;
                if i >= t.nrows() {
                    return Err(Error::OutOfSupport { view: "embedding", value: v.to_string() });
                }
                Ok(t.row(i).transpose())
            }
            EmbedMap::HiddenSample { model, hiddens, side } => {
                let marginal = match side {
                    ViewSide::X => model.p_x(v)?,
                    ViewSide::Z => model.p_z(v)?,
                };
                let scale = 1.0 / (marginal * (hiddens.len() as f64).sqrt());
                let mut out = DVector::zeros(hiddens.len());
                for (i, h) in hiddens.iter().enumerate() {
                    let lik = match side {
                        ViewSide::X => model.lik_x_given_hidden(v, h)?,
                        ViewSide::Z => model.lik_z_given_hidden(v, h)?,
                    };
                    out[i] = lik * scale;
                }
                Ok(out)
            }
        }
    }
}

fn hidden_text(h: &Hidden) -> String {
    match h {
        Hidden::Idx(i) => i.to_string(),
        Hidden::Real(r) => r.to_string(),
        Hidden::Simplex(v) => v.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
    }
}

impl EmbedMap {
    fn to_text(&self, name: &str) -> String {
        match self {
            EmbedMap::Table(t) => {
                let mut s = String::new();
                s.push_str(&format!("{name} table\n"));
                crate::contrastive::matrix_rows_text(&mut s, name, t);
                s
            }
            EmbedMap::HiddenSample { model, hiddens, side } => {
                let side = match side {
                    ViewSide::X => "x",
                    ViewSide::Z => "z",
                };
                let hs: Vec<String> = hiddens.iter().map(hidden_text).collect();
                format!(
                    "{name} hidden_sample model={} side={side} m={}\nhiddens {}\n",
                    model.id(),
                    hiddens.len(),
                    hs.join(" ")
                )
            }
        }
    }
}

/// phi(x)_i = scorer odds at (x, landmarks[i]).
#[derive(Debug, Clone)]
pub struct LandmarkEmbedding {
    pub landmarks: Vec<View>,
    /// Evaluated on the odds scale.
    pub scorer: PairScorer,
    /// Identifier of the distribution the landmarks were drawn from.
    pub source: String,
}

impl LandmarkEmbedding {
    pub fn new(landmarks: Vec<View>, scorer: PairScorer, source: impl Into<String>) -> Self {
        assert!(!landmarks.is_empty(), "a landmark embedding needs at least one landmark");
        LandmarkEmbedding { landmarks, scorer, source: source.into() }
    }

    /// Header plus the landmark list and the scorer dump.
    pub fn to_text(&self) -> String {
        let lm: Vec<String> = self.landmarks.iter().map(|v| v.to_string()).collect();
        format!(
            "landmark_embedding m={} source={}\nlandmarks {}\n{}",
            self.landmarks.len(),
            self.source,
            lm.join(" "),
            self.scorer.to_text()
        )
    }
}

impl Embedding for LandmarkEmbedding {
    fn dim(&self) -> usize {
        self.landmarks.len()
    }

    fn embed(&self, x: &View) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.landmarks.len());
        for (i, z) in self.landmarks.iter().enumerate() {
            out[i] = self.scorer.score_odds(x, z)?;
        }
        Ok(out)
    }
}

/// Paired factor maps whose inner product approximates the density ratio.
#[derive(Debug, Clone)]
pub struct FactorizedEmbedding {
    pub eta: EmbedMap,
    pub psi: EmbedMap,
    pub m: usize,
}

impl FactorizedEmbedding {
    pub fn new(eta: EmbedMap, psi: EmbedMap) -> Self {
        let m = eta.dim();
        assert_eq!(m, psi.dim(), "factor dimensions disagree");
        FactorizedEmbedding { eta, psi, m }
    }

    /// eta(x) . psi(z).
    pub fn product(&self, x: &View, z: &View) -> Result<f64> {
        Ok(self.eta.embed(x)?.dot(&self.psi.embed(z)?))
    }

    pub fn to_text(&self) -> String {
        format!(
            "factorized_embedding m={}\n{}{}",
            self.m,
            self.eta.to_text("eta"),
            self.psi.to_text("psi")
        )
    }
}

/// Where a weight vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightProvenance {
    /// Block construction with validation-selected block.
    BlockValidated,
    /// Exact expectation against the factorized psi.
    ExactFactorization,
    /// Least-squares fit.
    RidgeFit,
    /// Importance-weighted block construction for a shifted target marginal.
    ImportanceWeighted,
}

#[derive(Debug, Clone)]
pub struct WeightVector {
    pub w: DVector<f64>,
    pub provenance: WeightProvenance,
}

/// m i.i.d. draws from the model's z-marginal, one stream per index so
/// prefixes are stable in m.
pub fn draw_landmarks(model: &MultiViewModel, m: usize, seed: u64) -> Vec<View> {
    assert!(m >= 1, "need at least one landmark");
    (0..m)
        .map(|i| {
            let mut rng = crate::models::draw_rng(seed, stream::LANDMARK, i as u64);
            model.draw_z_with(&mut rng)
        })
        .collect()
}

/// m i.i.d. index draws from an explicit distribution over a finite z-space.
pub fn draw_landmarks_from_pmf(pmf: &[f64], m: usize, seed: u64) -> Vec<View> {
    assert!(m >= 1, "need at least one landmark");
    (0..m)
        .map(|i| {
            let mut rng = crate::models::draw_rng(seed, stream::LANDMARK, i as u64);
            View::Idx(crate::models::sample_categorical(&mut rng, pmf))
        })
        .collect()
}

/// Split m coordinates into ceil(log2(1/delta)) equal blocks. Returns
/// (block count, block size); errors when the reported-bound denominator
/// floor(m / log2(1/delta)) vanishes.
pub(crate) fn block_layout(m: usize, delta: f64) -> Result<(usize, usize)> {
    assert!(delta > 0.0 && delta < 1.0, "failure probability must be in (0, 1)");
    let need = (1.0 / delta).log2();
    if (m as f64 / need).floor() < 1.0 {
        return Err(Error::BlockArithmetic { m, delta });
    }
    let blocks = need.ceil().max(1.0) as usize;
    Ok((blocks, m / blocks))
}

/// Weighted mean squared error of w against mu over an empirical view
/// distribution, using a precomputed embedding table (row per entry of xs).
fn candidate_risk(
    phi_rows: &DMatrix<f64>,
    xs: &[(View, f64)],
    mu: &[f64],
    w: &DVector<f64>,
) -> f64 {
    let preds = phi_rows * w;
    xs.iter()
        .enumerate()
        .map(|(r, (_, freq))| {
            let d = preds[r] - mu[r];
            freq * d * d
        })
        .sum()
}

/// Shared core of the block-weight constructions: one candidate per block
/// with in-block weights coef_i / block_size and zeros elsewhere, scored on
/// the supplied validation distribution, lowest estimated risk wins (ties
/// to the lowest block index).
pub(crate) fn select_block_weights(
    emb: &LandmarkEmbedding,
    coef: &[f64],
    mu: &[f64],
    validation_xs: &[(View, f64)],
    delta: f64,
    provenance: WeightProvenance,
) -> Result<WeightVector> {
    let m = emb.dim();
    assert_eq!(coef.len(), m, "one coefficient per landmark");
    let (blocks, block_size) = block_layout(m, delta)?;

    let mut phi_rows = DMatrix::zeros(validation_xs.len(), m);
    for (r, (x, _)) in validation_xs.iter().enumerate() {
        phi_rows.row_mut(r).copy_from(&emb.embed(x)?.transpose());
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    for b in 0..blocks {
        let mut w = DVector::zeros(m);
        for i in b * block_size..(b + 1) * block_size {
            w[i] = coef[i] / block_size as f64;
        }
        let risk = candidate_risk(&phi_rows, validation_xs, mu, &w);
        if best.as_ref().is_none_or(|(r, _)| risk < *r) {
            best = Some((risk, w));
        }
    }
    let (_, w) = best.expect("at least one block");
    Ok(WeightVector { w, provenance })
}

/// Validation draws from the model's x-marginal, collapsed to (view, freq)
/// pairs. Finite supports aggregate to counts; continuous views stay raw.
pub(crate) fn validation_distribution(
    model: &MultiViewModel,
    n: usize,
    seed: u64,
) -> Vec<(View, f64)> {
    assert!(n >= 1, "validation sample must be non-empty");
    if let Some(nx) = model.support_x() {
        let pmf: Vec<f64> = (0..nx)
            .map(|x| model.p_x(&View::Idx(x)).expect("index enumerates the support"))
            .collect();
        counted_draws(&pmf, n, seed)
    } else {
        let unit = 1.0 / n as f64;
        (0..n)
            .map(|i| {
                let mut rng = crate::models::draw_rng(seed, stream::VALIDATION, i as u64);
                (model.draw_x_with(&mut rng), unit)
            })
            .collect()
    }
}

/// n categorical draws from pmf on the validation stream, returned as
/// (index view, empirical frequency) for the indices actually hit.
pub(crate) fn counted_draws(pmf: &[f64], n: usize, seed: u64) -> Vec<(View, f64)> {
    let mut counts = vec![0usize; pmf.len()];
    for i in 0..n {
        let mut rng = crate::models::draw_rng(seed, stream::VALIDATION, i as u64);
        counts[crate::models::sample_categorical(&mut rng, pmf)] += 1;
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(x, &c)| (View::Idx(x), c as f64 / n as f64))
        .collect()
}

/// Block-built weights for a landmark embedding: candidate b carries
/// E[Y|Z=z_i] / block_size on its coordinates, and the candidate with the
/// lowest validation-estimated risk against mu is returned.
pub fn oracle_landmark_weights(
    model: &MultiViewModel,
    emb: &LandmarkEmbedding,
    delta: f64,
    validation: usize,
    seed: u64,
) -> Result<WeightVector> {
    let coef: Result<Vec<f64>> =
        emb.landmarks.iter().map(|z| model.cond_mean_y_given_z(z)).collect();
    let xs = validation_distribution(model, validation, seed);
    let mu: Result<Vec<f64>> = xs.iter().map(|(x, _)| model.mu(x)).collect();
    select_block_weights(emb, &coef?, &mu?, &xs, delta, WeightProvenance::BlockValidated)
}

/// The exact posterior factorization of a discrete hidden-state model:
/// eta(x)_h = Pr(H=h | X=x), psi(z)_h = p(z|h) / p_Z(z), whose inner
/// product reproduces the density ratio identically.
pub fn exact_factorization(model: &MultiViewModel) -> Result<FactorizedEmbedding> {
    let d = match model {
        MultiViewModel::Discrete(d) => d,
        _ => {
            return Err(Error::Unsupported {
                op: "exact_factorization",
                model: model.kind_name(),
                why: "posterior enumeration needs a finite hidden-state family",
            })
        }
    };
    let (s, nx, nz) = (d.num_hidden(), d.num_x(), d.num_z());
    let eta = DMatrix::from_fn(nx, s, |x, h| {
        d.prior()[h] * d.x_given_h()[(h, x)] / d.p_x_table()[x]
    });
    let psi = DMatrix::from_fn(nz, s, |z, h| d.z_given_h()[(h, z)] / d.p_z_table()[z]);
    Ok(FactorizedEmbedding::new(EmbedMap::Table(eta), EmbedMap::Table(psi)))
}

/// w = E[psi(Z) E[Y|Z]]: the exact linear weights that turn eta into a
/// predictor of mu whenever eta . psi matches the density ratio.
pub fn exact_linear_weights(model: &MultiViewModel, psi: &EmbedMap) -> Result<WeightVector> {
    let m = psi.dim();
    let mut w = DVector::zeros(m);
    if let Some(nz) = model.support_z() {
        for z in 0..nz {
            let zv = View::Idx(z);
            let p = model.p_z(&zv)?;
            if p == 0.0 {
                continue;
            }
            let ybar = model.cond_mean_y_given_z(&zv)?;
            w += psi.embed(&zv)? * (p * ybar);
        }
    } else {
        let var = match model {
            MultiViewModel::Gaussian(g) => 1.0 + g.sigma2(),
            _ => unreachable!("finite z-support covers the other families"),
        };
        let rule = crate::numerics::gh_rule(128);
        for (wk, zk) in rule.scaled(0.0, var) {
            let zv = View::Real(zk);
            let ybar = model.cond_mean_y_given_z(&zv)?;
            w += psi.embed(&zv)? * (wk * ybar);
        }
    }
    Ok(WeightVector { w, provenance: WeightProvenance::ExactFactorization })
}

/// The hidden-sample factorization: draw H_1..H_m i.i.d. from the hidden
/// distribution and set component i to lik(view|H_i) / (marginal sqrt(m)).
/// Unbiased for the density ratio at every (x, z), deterministic under seed.
pub fn probabilistic_embed(
    model: &Arc<MultiViewModel>,
    m: usize,
    seed: u64,
) -> FactorizedEmbedding {
    assert!(m >= 1, "need at least one hidden draw");
    let hiddens = Arc::new(model.sample_hidden(m, seed));
    FactorizedEmbedding::new(
        EmbedMap::HiddenSample { model: model.clone(), hiddens: hiddens.clone(), side: ViewSide::X },
        EmbedMap::HiddenSample { model: model.clone(), hiddens, side: ViewSide::Z },
    )
}
