//! Finite hidden-state model: H ~ prior on {0..|S|-1} renders the two views
//! conditionally independent, X | H and Z | H are arbitrary row-stochastic
//! channels, and Y = label_of_h(H) is deterministic given H.
//!
//! Everything is enumerable, so every oracle here is exact: the constructor
//! precomputes the joint view table, posteriors, conditional label means, mu,
//! and the redundancy constants.

use super::{compose_eps_mu, sample_categorical, Hidden, Redundancy, View, PROB_TOL};
use crate::error::{Error, InvariantViolation, Result};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct DiscreteHiddenModel {
    id: String,
    prior: Vec<f64>,
    x_given_h: DMatrix<f64>, // S x |X|
    z_given_h: DMatrix<f64>, // S x |Z|
    label_of_h: Vec<f64>,

    // caches, all exact enumeration
    p_x: Vec<f64>,
    p_z: Vec<f64>,
    joint: DMatrix<f64>,      // |X| x |Z|
    e_y_given_x: Vec<f64>,
    e_y_given_z: Vec<f64>,
    e_y_given_xz: DMatrix<f64>, // 0 on zero-probability cells
    mu_x: Vec<f64>,
    redundancy: Redundancy,
    e_y2: f64,
}

/// Construction-time invariant checks, shared with the file validator.
pub(super) fn check_discrete(
    prior: &[f64],
    x_given_h: &DMatrix<f64>,
    z_given_h: &DMatrix<f64>,
    label_of_h: &[f64],
) -> Vec<InvariantViolation> {
    let mut v = Vec::new();
    let s = prior.len();
    let mut push = |inv: String, slack: f64| v.push(InvariantViolation { invariant: inv, slack });

    if s == 0 {
        push("prior must be non-empty".into(), f64::NAN);
        return v;
    }
    if x_given_h.nrows() != s || z_given_h.nrows() != s || label_of_h.len() != s {
        push(
            format!(
                "table row counts must equal |S|={s} (x_given_h {}, z_given_h {}, labels {})",
                x_given_h.nrows(),
                z_given_h.nrows(),
                label_of_h.len()
            ),
            f64::NAN,
        );
        return v;
    }

    let sum: f64 = prior.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        push("prior sums to 1".into(), (sum - 1.0).abs() - PROB_TOL);
    }
    if let Some(&p) = prior.iter().find(|&&p| p < 0.0) {
        push("prior entries nonnegative".into(), -p);
    }
    for (name, table) in [("x_given_h", x_given_h), ("z_given_h", z_given_h)] {
        for h in 0..s {
            let row_sum: f64 = table.row(h).iter().sum();
            if (row_sum - 1.0).abs() > PROB_TOL {
                push(
                    format!("{name} row {h} sums to 1"),
                    (row_sum - 1.0).abs() - PROB_TOL,
                );
            }
            if let Some(&p) = table.row(h).iter().find(|&&p| p < 0.0) {
                push(format!("{name} row {h} entries nonnegative"), -p);
            }
        }
    }
    for (h, &l) in label_of_h.iter().enumerate() {
        if !(l.abs() <= 1.0) {
            push(format!("label_of_h[{h}] in [-1,1]"), l.abs() - 1.0);
        }
    }

    // induced marginals strictly positive, so g* is finite on the support
    for x in 0..x_given_h.ncols() {
        let px: f64 = (0..s).map(|h| prior[h] * x_given_h[(h, x)]).sum();
        if px <= 0.0 {
            push(format!("p_X({x}) > 0"), -px);
        }
    }
    for z in 0..z_given_h.ncols() {
        let pz: f64 = (0..s).map(|h| prior[h] * z_given_h[(h, z)]).sum();
        if pz <= 0.0 {
            push(format!("p_Z({z}) > 0"), -pz);
        }
    }
    v
}

impl DiscreteHiddenModel {
    pub fn new(
        id: impl Into<String>,
        prior: Vec<f64>,
        x_given_h: DMatrix<f64>,
        z_given_h: DMatrix<f64>,
        label_of_h: Vec<f64>,
    ) -> Result<Self> {
        let violations = check_discrete(&prior, &x_given_h, &z_given_h, &label_of_h);
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }

        let s = prior.len();
        let (nx, nz) = (x_given_h.ncols(), z_given_h.ncols());
        let p_x: Vec<f64> = (0..nx)
            .map(|x| (0..s).map(|h| prior[h] * x_given_h[(h, x)]).sum())
            .collect();
        let p_z: Vec<f64> = (0..nz)
            .map(|z| (0..s).map(|h| prior[h] * z_given_h[(h, z)]).sum())
            .collect();
        let mut joint = DMatrix::zeros(nx, nz);
        for x in 0..nx {
            for z in 0..nz {
                joint[(x, z)] = (0..s)
                    .map(|h| prior[h] * x_given_h[(h, x)] * z_given_h[(h, z)])
                    .sum();
            }
        }

        let e_y_given_x: Vec<f64> = (0..nx)
            .map(|x| {
                (0..s)
                    .map(|h| prior[h] * x_given_h[(h, x)] * label_of_h[h])
                    .sum::<f64>()
                    / p_x[x]
            })
            .collect();
        let e_y_given_z: Vec<f64> = (0..nz)
            .map(|z| {
                (0..s)
                    .map(|h| prior[h] * z_given_h[(h, z)] * label_of_h[h])
                    .sum::<f64>()
                    / p_z[z]
            })
            .collect();
        let mut e_y_given_xz = DMatrix::zeros(nx, nz);
        for x in 0..nx {
            for z in 0..nz {
                if joint[(x, z)] > 0.0 {
                    let num: f64 = (0..s)
                        .map(|h| prior[h] * x_given_h[(h, x)] * z_given_h[(h, z)] * label_of_h[h])
                        .sum();
                    e_y_given_xz[(x, z)] = num / joint[(x, z)];
                }
            }
        }

        // mu(x) = sum_z p(z|x) E[Y|z]
        let mu_x: Vec<f64> = (0..nx)
            .map(|x| {
                (0..nz)
                    .map(|z| joint[(x, z)] / p_x[x] * e_y_given_z[z])
                    .sum()
            })
            .collect();

        let mut eps_x = 0.0;
        let mut eps_z = 0.0;
        for x in 0..nx {
            for z in 0..nz {
                let w = joint[(x, z)];
                if w > 0.0 {
                    let full = e_y_given_xz[(x, z)];
                    eps_x += w * (e_y_given_x[x] - full) * (e_y_given_x[x] - full);
                    eps_z += w * (e_y_given_z[z] - full) * (e_y_given_z[z] - full);
                }
            }
        }
        let redundancy = Redundancy {
            eps_x,
            eps_z,
            eps_mu: compose_eps_mu(eps_x, eps_z),
        };
        let e_y2 = (0..s).map(|h| prior[h] * label_of_h[h] * label_of_h[h]).sum();

        Ok(DiscreteHiddenModel {
            id: id.into(),
            prior,
            x_given_h,
            z_given_h,
            label_of_h,
            p_x,
            p_z,
            joint,
            e_y_given_x,
            e_y_given_z,
            e_y_given_xz,
            mu_x,
            redundancy,
            e_y2,
        })
    }

    /// Two hidden states with uniform prior, both channels binary symmetric
    /// with the given flip probability, labels (+1, -1).
    pub fn flip(p: f64) -> Self {
        assert!((0.0..0.5).contains(&p), "flip probability in [0, 0.5)");
        let ch = DMatrix::from_row_slice(2, 2, &[1.0 - p, p, p, 1.0 - p]);
        DiscreteHiddenModel::new(
            format!("flip-{p}"),
            vec![0.5, 0.5],
            ch.clone(),
            ch,
            vec![1.0, -1.0],
        )
        .expect("flip model is valid")
    }

    /// Seeded random model used by the property checks: |S| <= 5 states,
    /// view spaces up to 12, channel rows drawn from Dirichlet(1) (so all
    /// entries are almost surely positive), labels uniform in [-1, 1].
    pub fn random(seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(crate::numerics::derive_seed(seed, &[0x5d]));
        let s = rng.random_range(1..=5usize);
        let nx = rng.random_range(2..=12usize);
        let nz = rng.random_range(2..=12usize);
        let dirichlet_row = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            // Dirichlet(1) via normalized Exp(1) draws
            let draws: Vec<f64> = (0..n)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = draws.iter().sum();
            draws.into_iter().map(|g| g / total).collect()
        };
        let prior = dirichlet_row(&mut rng, s);
        let xg = DMatrix::from_row_iterator(
            s,
            nx,
            (0..s).flat_map(|_| dirichlet_row(&mut rng, nx)).collect::<Vec<_>>(),
        );
        let zg = DMatrix::from_row_iterator(
            s,
            nz,
            (0..s).flat_map(|_| dirichlet_row(&mut rng, nz)).collect::<Vec<_>>(),
        );
        let labels: Vec<f64> = (0..s).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        DiscreteHiddenModel::new(format!("random-{seed}"), prior, xg, zg, labels)
            .expect("random construction keeps all invariants")
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn num_hidden(&self) -> usize {
        self.prior.len()
    }
    pub fn num_x(&self) -> usize {
        self.x_given_h.ncols()
    }
    pub fn num_z(&self) -> usize {
        self.z_given_h.ncols()
    }
    pub fn prior(&self) -> &[f64] {
        &self.prior
    }
    pub fn label_of_h(&self) -> &[f64] {
        &self.label_of_h
    }
    pub fn x_given_h(&self) -> &DMatrix<f64> {
        &self.x_given_h
    }
    pub fn z_given_h(&self) -> &DMatrix<f64> {
        &self.z_given_h
    }
    /// p_{Z|X}(z | x), exact.
    pub fn z_given_x(&self, x: usize, z: usize) -> f64 {
        self.joint[(x, z)] / self.p_x[x]
    }
    pub fn p_x_table(&self) -> &[f64] {
        &self.p_x
    }
    pub fn p_z_table(&self) -> &[f64] {
        &self.p_z
    }

    fn check_x(&self, x: &View) -> Result<usize> {
        let i = x.idx()?;
        if i >= self.num_x() {
            return Err(Error::OutOfSupport {
                view: "x",
                value: x.to_string(),
            });
        }
        Ok(i)
    }

    fn check_z(&self, z: &View) -> Result<usize> {
        let i = z.idx()?;
        if i >= self.num_z() {
            return Err(Error::OutOfSupport {
                view: "z",
                value: z.to_string(),
            });
        }
        Ok(i)
    }

    pub fn p_x(&self, x: &View) -> Result<f64> {
        Ok(self.p_x[self.check_x(x)?])
    }

    pub fn p_z(&self, z: &View) -> Result<f64> {
        Ok(self.p_z[self.check_z(z)?])
    }

    pub fn joint_xz(&self, x: &View, z: &View) -> Result<f64> {
        Ok(self.joint[(self.check_x(x)?, self.check_z(z)?)])
    }

    pub fn odds(&self, x: &View, z: &View) -> Result<f64> {
        let (i, j) = (self.check_x(x)?, self.check_z(z)?);
        Ok(self.joint[(i, j)] / (self.p_x[i] * self.p_z[j]))
    }

    pub fn log_odds(&self, x: &View, z: &View) -> Result<f64> {
        Ok(self.odds(x, z)?.ln())
    }

    pub fn cond_mean_y_given_z(&self, z: &View) -> Result<f64> {
        Ok(self.e_y_given_z[self.check_z(z)?])
    }

    pub fn cond_mean_y_given_x(&self, x: &View) -> Result<f64> {
        Ok(self.e_y_given_x[self.check_x(x)?])
    }

    pub fn cond_mean_y_given_xz(&self, x: &View, z: &View) -> Result<f64> {
        Ok(self.e_y_given_xz[(self.check_x(x)?, self.check_z(z)?)])
    }

    pub fn mu(&self, x: &View) -> Result<f64> {
        Ok(self.mu_x[self.check_x(x)?])
    }

    pub fn redundancy(&self) -> Redundancy {
        self.redundancy
    }

    pub fn e_y2(&self) -> f64 {
        self.e_y2
    }

    /// Exact conditional mutual informations (I(Y;Z|X), I(Y;X|Z)) in nats,
    /// by enumeration over (x, z) and the distinct label values.
    pub fn conditional_mi(&self) -> (f64, f64) {
        // group hidden states by exact label value so Y's support is correct
        let mut y_vals: Vec<f64> = Vec::new();
        let mut y_of_h: Vec<usize> = Vec::with_capacity(self.prior.len());
        for &l in &self.label_of_h {
            match y_vals.iter().position(|&v| v == l) {
                Some(k) => y_of_h.push(k),
                None => {
                    y_vals.push(l);
                    y_of_h.push(y_vals.len() - 1);
                }
            }
        }
        let (nx, nz, ny) = (self.num_x(), self.num_z(), y_vals.len());

        // p(x, z, y)
        let mut pxzy = vec![0.0; nx * nz * ny];
        for h in 0..self.prior.len() {
            for x in 0..nx {
                let w = self.prior[h] * self.x_given_h[(h, x)];
                if w == 0.0 {
                    continue;
                }
                for z in 0..nz {
                    pxzy[(x * nz + z) * ny + y_of_h[h]] += w * self.z_given_h[(h, z)];
                }
            }
        }

        let mi = |first_given: bool| -> f64 {
            // first_given=true: I(Y;Z|X); false: I(Y;X|Z)
            let mut total = 0.0;
            let outer = if first_given { nx } else { nz };
            let inner = if first_given { nz } else { nx };
            for a in 0..outer {
                let cell = |b: usize, y: usize| {
                    if first_given {
                        pxzy[(a * nz + b) * ny + y]
                    } else {
                        pxzy[(b * nz + a) * ny + y]
                    }
                };
                let pa: f64 = (0..inner)
                    .map(|b| (0..ny).map(|y| cell(b, y)).sum::<f64>())
                    .sum();
                if pa == 0.0 {
                    continue;
                }
                for b in 0..inner {
                    for y in 0..ny {
                        let pby = cell(b, y);
                        if pby == 0.0 {
                            continue;
                        }
                        let pb: f64 = (0..ny).map(|yy| cell(b, yy)).sum();
                        let py: f64 = (0..inner).map(|bb| cell(bb, y)).sum();
                        total += pby * ((pby * pa) / (pb * py)).ln();
                    }
                }
            }
            total.max(0.0)
        };
        (mi(true), mi(false))
    }

    pub(super) fn draw(&self, rng: &mut ChaCha8Rng) -> (View, View, f64) {
        let h = sample_categorical(rng, &self.prior);
        let x = sample_categorical(rng, self.x_given_h.row(h).transpose().as_slice());
        let z = sample_categorical(rng, self.z_given_h.row(h).transpose().as_slice());
        (View::Idx(x), View::Idx(z), self.label_of_h[h])
    }

    pub(super) fn draw_x(&self, rng: &mut ChaCha8Rng) -> View {
        View::Idx(sample_categorical(rng, &self.p_x))
    }

    pub(super) fn draw_z(&self, rng: &mut ChaCha8Rng) -> View {
        View::Idx(sample_categorical(rng, &self.p_z))
    }

    pub(super) fn draw_hidden(&self, rng: &mut ChaCha8Rng) -> Hidden {
        Hidden::Idx(sample_categorical(rng, &self.prior))
    }

    pub fn lik_x_given_hidden(&self, x: &View, h: &Hidden) -> Result<f64> {
        let i = self.check_x(x)?;
        match h {
            Hidden::Idx(k) => Ok(self.x_given_h[(*k, i)]),
            _ => Err(Error::Dimension("hidden kind mismatch".into())),
        }
    }

    pub fn lik_z_given_hidden(&self, z: &View, h: &Hidden) -> Result<f64> {
        let j = self.check_z(z)?;
        match h {
            Hidden::Idx(k) => Ok(self.z_given_h[(*k, j)]),
            _ => Err(Error::Dimension("hidden kind mismatch".into())),
        }
    }

    pub fn validate_report(&self) -> Vec<InvariantViolation> {
        check_discrete(&self.prior, &self.x_given_h, &self.z_given_h, &self.label_of_h)
    }
}
