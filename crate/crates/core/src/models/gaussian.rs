//! Gaussian single-factor model: H ~ N(0, sigma2), X = H + noise,
//! Z = H + noise with independent unit noises, Y = 2 Phi(H) - 1 in [-1, 1].
//!
//! (X, Z) is bivariate normal with variance 1 + sigma2 and covariance
//! sigma2, so the density ratio is log-quadratic:
//!
//!   ln g*(x, z) = c0 - q (x^2 + z^2) + r x z
//!
//! and every conditional label mean is a probit of a linear statistic,
//! because E[Phi(aW + b)] = Phi((a mu + b) / sqrt(1 + a^2 var)) for normal W.
//! Each closed form below has a Gauss-Hermite twin used by the tests to
//! cross-check the algebra; the quadrature paths are also the fallback
//! oracles for anything without a closed form.

use super::{Hidden, Redundancy, View};
use crate::error::{Error, InvariantViolation, Result};
use crate::numerics::{gh_rule, normal_cdf, normal_logpdf};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Nodes for the construction-time caches and expectation helpers.
const GH_DEFAULT: usize = 96;
/// Nodes for the re-centered conditional quadratures.
const GH_MU: usize = 128;

#[derive(Debug, Clone)]
pub struct GaussianModel {
    id: String,
    sigma2: f64,
    redundancy: Redundancy,
    e_y2: f64,
}

pub(super) fn check_gaussian(sigma2: f64) -> Vec<InvariantViolation> {
    let mut v = Vec::new();
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        v.push(InvariantViolation {
            invariant: "hidden variance sigma2 must be positive and finite".into(),
            slack: -sigma2,
        });
    }
    v
}

impl GaussianModel {
    pub fn new(id: impl Into<String>, sigma2: f64) -> Result<Self> {
        let violations = check_gaussian(sigma2);
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        let mut m = GaussianModel {
            id: id.into(),
            sigma2,
            redundancy: Redundancy { eps_x: 0.0, eps_z: 0.0, eps_mu: 0.0 },
            e_y2: 0.0,
        };
        m.redundancy = m.compute_redundancy();
        m.e_y2 = gh_rule(GH_DEFAULT).expect(0.0, sigma2, |h| {
            let y = 2.0 * normal_cdf(h) - 1.0;
            y * y
        });
        Ok(m)
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    /// Marginal view variance 1 + sigma2.
    pub fn view_var(&self) -> f64 {
        1.0 + self.sigma2
    }

    fn check(&self, v: &View, which: &'static str) -> Result<f64> {
        let r = v.real()?;
        if !r.is_finite() {
            return Err(Error::OutOfSupport { view: which, value: v.to_string() });
        }
        Ok(r)
    }

    // probit slopes of the conditional label means
    fn coef_y_given_z(&self) -> f64 {
        let s = self.sigma2;
        s / ((1.0 + s) * (1.0 + 2.0 * s)).sqrt()
    }

    fn coef_y_given_xz(&self) -> f64 {
        let s = self.sigma2;
        s / ((1.0 + 2.0 * s) * (1.0 + 3.0 * s)).sqrt()
    }

    fn coef_mu(&self) -> f64 {
        let s = self.sigma2;
        let v = 1.0 + s;
        s * s / (v * (1.0 + 2.0 * s) * (v * v + s * s)).sqrt()
    }

    pub fn p_x(&self, x: &View) -> Result<f64> {
        let xr = self.check(x, "x")?;
        Ok(normal_logpdf(xr, 0.0, self.view_var()).exp())
    }

    pub fn p_z(&self, z: &View) -> Result<f64> {
        let zr = self.check(z, "z")?;
        Ok(normal_logpdf(zr, 0.0, self.view_var()).exp())
    }

    pub fn joint_xz(&self, x: &View, z: &View) -> Result<f64> {
        Ok((self.log_odds(x, z)?
            + normal_logpdf(x.real()?, 0.0, self.view_var())
            + normal_logpdf(z.real()?, 0.0, self.view_var()))
        .exp())
    }

    pub fn log_odds(&self, x: &View, z: &View) -> Result<f64> {
        let (xr, zr) = (self.check(x, "x")?, self.check(z, "z")?);
        let s = self.sigma2;
        let v = 1.0 + s;
        let det = 1.0 + 2.0 * s; // det Sigma / v
        let c0 = 0.5 * (v * v / det).ln();
        let q = s * s / (2.0 * det * v);
        let r = s / det;
        Ok(c0 - q * (xr * xr + zr * zr) + r * xr * zr)
    }

    pub fn odds(&self, x: &View, z: &View) -> Result<f64> {
        Ok(self.log_odds(x, z)?.exp())
    }

    pub fn cond_mean_y_given_z(&self, z: &View) -> Result<f64> {
        let zr = self.check(z, "z")?;
        Ok(2.0 * normal_cdf(self.coef_y_given_z() * zr) - 1.0)
    }

    /// Same probit slope as the z side; the views are exchangeable.
    pub fn cond_mean_y_given_x(&self, x: &View) -> Result<f64> {
        let xr = self.check(x, "x")?;
        Ok(2.0 * normal_cdf(self.coef_y_given_z() * xr) - 1.0)
    }

    pub fn cond_mean_y_given_xz(&self, x: &View, z: &View) -> Result<f64> {
        let (xr, zr) = (self.check(x, "x")?, self.check(z, "z")?);
        Ok(2.0 * normal_cdf(self.coef_y_given_xz() * (xr + zr)) - 1.0)
    }

    pub fn mu(&self, x: &View) -> Result<f64> {
        let xr = self.check(x, "x")?;
        Ok(2.0 * normal_cdf(self.coef_mu() * xr) - 1.0)
    }

    pub fn redundancy(&self) -> Redundancy {
        self.redundancy
    }

    pub fn e_y2(&self) -> f64 {
        self.e_y2
    }

    // ------------------------------------------------------------------
    // quadrature twins of the closed forms

    /// p_X(x) as E_H[phi(x - H)] by Gauss-Hermite over H.
    pub fn p_x_quadrature(&self, x: f64) -> f64 {
        gh_rule(GH_DEFAULT).expect(0.0, self.sigma2, |h| normal_logpdf(x, h, 1.0).exp())
    }

    /// p(x, z) as E_H[phi(x - H) phi(z - H)].
    pub fn joint_xz_quadrature(&self, x: f64, z: f64) -> f64 {
        gh_rule(GH_DEFAULT).expect(0.0, self.sigma2, |h| {
            (normal_logpdf(x, h, 1.0) + normal_logpdf(z, h, 1.0)).exp()
        })
    }

    /// E[Y | Z=z] by quadrature over the posterior H | Z=z.
    pub fn cond_mean_y_given_z_quadrature(&self, z: f64) -> f64 {
        let s = self.sigma2;
        let mean = s * z / (1.0 + s);
        let var = s / (1.0 + s);
        gh_rule(GH_MU).expect(mean, var, |h| 2.0 * normal_cdf(h) - 1.0)
    }

    /// E[Y | X=x, Z=z] by quadrature over H | (X, Z).
    pub fn cond_mean_y_given_xz_quadrature(&self, x: f64, z: f64) -> f64 {
        let s = self.sigma2;
        let mean = s * (x + z) / (1.0 + 2.0 * s);
        let var = s / (1.0 + 2.0 * s);
        gh_rule(GH_MU).expect(mean, var, |h| 2.0 * normal_cdf(h) - 1.0)
    }

    /// mu(x) by quadrature over Z | X=x, re-centered on the conditional law.
    pub fn mu_quadrature(&self, x: f64) -> f64 {
        let s = self.sigma2;
        let mean = s * x / (1.0 + s);
        let var = (1.0 + 2.0 * s) / (1.0 + s);
        let slope = self.coef_y_given_z();
        gh_rule(GH_MU).expect(mean, var, |z| 2.0 * normal_cdf(slope * z) - 1.0)
    }

    /// E_{X ~ p_X independent of Z ~ p_Z}[f(X, Z)] by tensor quadrature.
    pub fn product_expectation(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let rule = gh_rule(GH_DEFAULT);
        let pts = rule.scaled(0.0, self.view_var());
        let mut total = 0.0;
        for &(wx, x) in &pts {
            for &(wz, z) in &pts {
                total += wx * wz * f(x, z);
            }
        }
        total
    }

    /// E_{(X, Z) ~ joint}[f(X, Z)] by tensor quadrature after whitening:
    /// X = a U, Z = b U + c W with U, W independent standard normals.
    pub fn joint_expectation(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let s = self.sigma2;
        let a = (1.0 + s).sqrt();
        let b = s / a;
        let c = ((1.0 + 2.0 * s) / (1.0 + s)).sqrt();
        let rule = gh_rule(GH_DEFAULT);
        let pts = rule.scaled(0.0, 1.0);
        let mut total = 0.0;
        for &(wu, u) in &pts {
            for &(ww, w) in &pts {
                total += wu * ww * f(a * u, b * u + c * w);
            }
        }
        total
    }

    fn compute_redundancy(&self) -> Redundancy {
        let slope_x = self.coef_y_given_z();
        let slope_full = self.coef_y_given_xz();
        let eps = self.joint_expectation(|x, z| {
            let d = 2.0 * normal_cdf(slope_x * x) - 2.0 * normal_cdf(slope_full * (x + z));
            d * d
        });
        Redundancy { eps_x: eps, eps_z: eps, eps_mu: super::compose_eps_mu(eps, eps) }
    }

    pub(super) fn draw(&self, rng: &mut ChaCha8Rng) -> (View, View, f64) {
        let mut gauss = || -> f64 { StandardNormal.sample(rng) };
        let h = self.sigma2.sqrt() * gauss();
        let x = h + gauss();
        let z = h + gauss();
        (View::Real(x), View::Real(z), 2.0 * normal_cdf(h) - 1.0)
    }

    pub(super) fn draw_x(&self, rng: &mut ChaCha8Rng) -> View {
        let n: f64 = StandardNormal.sample(rng);
        View::Real(self.view_var().sqrt() * n)
    }

    pub(super) fn draw_z(&self, rng: &mut ChaCha8Rng) -> View {
        self.draw_x(rng)
    }

    pub(super) fn draw_hidden(&self, rng: &mut ChaCha8Rng) -> Hidden {
        let n: f64 = StandardNormal.sample(rng);
        Hidden::Real(self.sigma2.sqrt() * n)
    }

    pub fn lik_x_given_hidden(&self, x: &View, h: &Hidden) -> Result<f64> {
        let xr = self.check(x, "x")?;
        match h {
            Hidden::Real(hr) => Ok(normal_logpdf(xr, *hr, 1.0).exp()),
            _ => Err(Error::Dimension("hidden kind mismatch".into())),
        }
    }

    pub fn lik_z_given_hidden(&self, z: &View, h: &Hidden) -> Result<f64> {
        let zr = self.check(z, "z")?;
        match h {
            Hidden::Real(hr) => Ok(normal_logpdf(zr, *hr, 1.0).exp()),
            _ => Err(Error::Dimension("hidden kind mismatch".into())),
        }
    }

    pub fn validate_report(&self) -> Vec<InvariantViolation> {
        check_gaussian(self.sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MultiViewModel;
    use approx::assert_relative_eq;

    const GRID: [f64; 7] = [-3.0, -1.1, -0.4, 0.0, 0.7, 1.5, 2.9];

    fn model(s: f64) -> GaussianModel {
        GaussianModel::new(format!("gaussian-{s}"), s).unwrap()
    }

    #[test]
    fn closed_forms_match_quadrature_on_grid() {
        for s in [0.25, 0.5, 1.0] {
            let m = model(s);
            for &x in &GRID {
                let xv = View::Real(x);
                assert_relative_eq!(m.p_x(&xv).unwrap(), m.p_x_quadrature(x), epsilon = 1e-8);
                assert_relative_eq!(
                    m.mu(&xv).unwrap(),
                    m.mu_quadrature(x),
                    epsilon = 1e-8,
                    max_relative = 1e-8
                );
                assert_relative_eq!(
                    m.cond_mean_y_given_z(&View::Real(x)).unwrap(),
                    m.cond_mean_y_given_z_quadrature(x),
                    epsilon = 1e-8
                );
                for &z in &GRID {
                    let zv = View::Real(z);
                    assert_relative_eq!(
                        m.joint_xz(&xv, &zv).unwrap(),
                        m.joint_xz_quadrature(x, z),
                        epsilon = 1e-10,
                        max_relative = 1e-8
                    );
                    assert_relative_eq!(
                        m.cond_mean_y_given_xz(&xv, &zv).unwrap(),
                        m.cond_mean_y_given_xz_quadrature(x, z),
                        epsilon = 1e-8
                    );
                    // density-ratio identity ties the three quadrature pieces
                    let lq = (m.joint_xz_quadrature(x, z)
                        / (m.p_x_quadrature(x) * m.p_x_quadrature(z)))
                    .ln();
                    assert_relative_eq!(m.log_odds(&xv, &zv).unwrap(), lq, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn normalization_in_both_senses() {
        for s in [0.25, 1.0] {
            let m = model(s);
            // integral of p_Z(z) g*(x, z) dz = 1 at fixed x
            for &x in &[-2.0, 0.3, 1.8] {
                let rule = gh_rule(GH_DEFAULT);
                let total = rule.expect(0.0, m.view_var(), |z| {
                    m.odds(&View::Real(x), &View::Real(z)).unwrap()
                });
                assert_relative_eq!(total, 1.0, epsilon = 1e-10);
            }
            // E over the product measure of g* is 1
            let mean = m.product_expectation(|x, z| {
                m.odds(&View::Real(x), &View::Real(z)).unwrap()
            });
            assert_relative_eq!(mean, 1.0, epsilon = 1e-10);
            // E over the product measure of g*^2 has the closed form
            let m2 = m.product_expectation(|x, z| {
                m.odds(&View::Real(x), &View::Real(z)).unwrap().powi(2)
            });
            assert_relative_eq!(m2, (1.0 + s) * (1.0 + s) / (1.0 + 2.0 * s), epsilon = 1e-9);
        }
    }

    #[test]
    fn frozen_redundancy_constants() {
        let m = model(0.25);
        assert_relative_eq!(m.redundancy().eps_x, 0.0170012328, epsilon = 1e-9);
        assert_relative_eq!(m.redundancy().eps_mu, 0.0680049313, epsilon = 1e-9);
        assert_relative_eq!(m.e_y2(), 0.1281884337, epsilon = 1e-9);

        let m = model(1.0);
        assert_relative_eq!(m.redundancy().eps_x, 0.0554856494, epsilon = 1e-9);
        assert_relative_eq!(m.redundancy().eps_mu, 0.2219425977, epsilon = 1e-9);
        // at sigma2 = 1 the label is uniform on [-1, 1], so E[Y^2] = 1/3
        assert_relative_eq!(m.e_y2(), 1.0 / 3.0, epsilon = 1e-10);
        assert_relative_eq!(
            m.odds(&View::Real(0.0), &View::Real(0.0)).unwrap(),
            2.0 / 3.0f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn bayes_residual_matches_frozen_values() {
        // E[(Y - E[Y|X,Z])^2] = E[Y^2] - E[E[Y|X,Z]^2]
        for (s, bayes) in [(0.25, 0.0857156145), (1.0, 0.1169864374)] {
            let m = model(s);
            let slope = m.coef_y_given_xz();
            let post2 = m.joint_expectation(|x, z| {
                let e = 2.0 * normal_cdf(slope * (x + z)) - 1.0;
                e * e
            });
            assert_relative_eq!(m.e_y2() - post2, bayes, epsilon = 1e-9);
        }
    }

    #[test]
    fn mu_route_equivalence_by_quadrature() {
        // mu(x) = E_{Z ~ p_Z}[E[Y|Z] g*(x, Z)], the change-of-measure route
        for s in [0.25, 1.0] {
            let m = model(s);
            for &x in &[-1.5, 0.0, 0.9] {
                let rule = gh_rule(GH_DEFAULT);
                let via_g = rule.expect(0.0, m.view_var(), |z| {
                    let zv = View::Real(z);
                    m.cond_mean_y_given_z(&zv).unwrap()
                        * m.odds(&View::Real(x), &zv).unwrap()
                });
                assert_relative_eq!(via_g, m.mu(&View::Real(x)).unwrap(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn sample_moments_match_covariance_structure() {
        let m = MultiViewModel::from(model(0.25));
        let n = 200_000;
        let data = m.sample(n, 77);
        let mut sx2 = 0.0;
        let mut sxz = 0.0;
        let mut sy = 0.0;
        for (x, z, y) in &data.rows {
            let (xr, zr) = (x.real().unwrap(), z.real().unwrap());
            sx2 += xr * xr;
            sxz += xr * zr;
            sy += y;
            assert!(y.abs() <= 1.0);
        }
        let nf = n as f64;
        // var X = 1.25, cov = 0.25; 4 sigma MC bands
        assert!((sx2 / nf - 1.25).abs() < 4.0 * 1.25 * (2.0 / nf).sqrt());
        assert!((sxz / nf - 0.25).abs() < 4.0 * 0.02);
        assert!((sy / nf).abs() < 0.01);
    }

    #[test]
    fn hidden_likelihood_consistent_with_marginal() {
        let m = model(1.0);
        let mv = MultiViewModel::from(m.clone());
        let hs = mv.sample_hidden(100_000, 5);
        let x = View::Real(0.8);
        let mean_lik: f64 = hs
            .iter()
            .map(|h| m.lik_x_given_hidden(&x, h).unwrap())
            .sum::<f64>()
            / hs.len() as f64;
        let truth = m.p_x(&x).unwrap();
        assert!((mean_lik - truth).abs() < 0.003, "mean likelihood {mean_lik} vs {truth}");
    }

    #[test]
    fn invalid_or_out_of_support_inputs_error() {
        assert!(GaussianModel::new("bad", 0.0).is_err());
        assert!(GaussianModel::new("bad", -1.0).is_err());
        assert!(GaussianModel::new("bad", f64::NAN).is_err());
        let m = model(0.25);
        assert!(m.p_x(&View::Idx(0)).is_err());
        assert!(m.odds(&View::Real(f64::INFINITY), &View::Real(0.0)).is_err());
    }
}
