//! Two-token topic model: a document draws topic weights Theta from a
//! symmetric Dirichlet(alpha) over K topics, then each of the two observed
//! tokens independently picks a topic from Theta and a word from that topic's
//! distribution. Topics own disjoint word blocks, so a word identifies its
//! topic. The label is the topic-score average Y = v' Theta.
//!
//! Dirichlet conjugacy makes every oracle a ratio of rising factorials:
//! observing one or two tokens updates the posterior to Dirichlet(alpha + e),
//! so conditional label means are posterior means of v' Theta.

use super::{sample_categorical, Hidden, Redundancy, View, PROB_TOL};
use crate::error::{Error, InvariantViolation, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

#[derive(Debug, Clone)]
pub struct TopicModel {
    id: String,
    alpha: f64,
    scores: Vec<f64>,               // v, one per topic
    topic_word_probs: Vec<Vec<f64>>, // per topic, sums to 1
    // flattened vocab: global word id -> (topic, in-topic probability)
    word_topic: Vec<usize>,
    word_prob: Vec<f64>,
    redundancy: Redundancy,
    e_y2: f64,
}

pub(super) fn check_topic(
    alpha: f64,
    scores: &[f64],
    topic_word_probs: &[Vec<f64>],
) -> Vec<InvariantViolation> {
    let mut v = Vec::new();
    let mut push = |inv: String, slack: f64| v.push(InvariantViolation { invariant: inv, slack });

    if !(alpha > 0.0 && alpha.is_finite()) {
        push("alpha must be positive and finite".into(), -alpha);
    }
    let k = scores.len();
    if k == 0 {
        push("at least one topic".into(), f64::NAN);
        return v;
    }
    if topic_word_probs.len() != k {
        push(
            format!(
                "one word table per topic (got {} tables for {k} topics)",
                topic_word_probs.len()
            ),
            f64::NAN,
        );
        return v;
    }
    for (t, &s) in scores.iter().enumerate() {
        if !(s.abs() <= 1.0) {
            push(format!("topic score {t} in [-1,1]"), s.abs() - 1.0);
        }
    }
    for (t, probs) in topic_word_probs.iter().enumerate() {
        if probs.is_empty() {
            push(format!("topic {t} has at least one word"), f64::NAN);
            continue;
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            push(format!("topic {t} word probabilities sum to 1"), (sum - 1.0).abs() - PROB_TOL);
        }
        // a zero-probability word would put a support point with zero marginal
        for (w, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                push(format!("topic {t} word {w} probability > 0"), -p);
            }
        }
    }
    v
}

impl TopicModel {
    pub fn new(
        id: impl Into<String>,
        alpha: f64,
        scores: Vec<f64>,
        topic_word_probs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let violations = check_topic(alpha, &scores, &topic_word_probs);
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        let mut word_topic = Vec::new();
        let mut word_prob = Vec::new();
        for (t, probs) in topic_word_probs.iter().enumerate() {
            for &p in probs {
                word_topic.push(t);
                word_prob.push(p);
            }
        }
        let mut m = TopicModel {
            id: id.into(),
            alpha,
            scores,
            topic_word_probs,
            word_topic,
            word_prob,
            redundancy: Redundancy { eps_x: 0.0, eps_z: 0.0, eps_mu: 0.0 },
            e_y2: 0.0,
        };
        m.redundancy = m.compute_redundancy();
        m.e_y2 = m.compute_e_y2();
        Ok(m)
    }

    /// Minimal vocabulary variant: each topic emits a single dedicated word.
    pub fn one_word_per_topic(id: impl Into<String>, k: usize, alpha: f64, scores: Vec<f64>) -> Result<Self> {
        TopicModel::new(id, alpha, scores, vec![vec![1.0]; k])
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn num_topics(&self) -> usize {
        self.scores.len()
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
    pub fn vocab_size(&self) -> usize {
        self.word_topic.len()
    }
    pub fn topic_of_word(&self, w: usize) -> usize {
        self.word_topic[w]
    }

    fn check_word(&self, view: &View, which: &'static str) -> Result<usize> {
        let w = view.idx()?;
        if w >= self.vocab_size() {
            return Err(Error::OutOfSupport { view: which, value: view.to_string() });
        }
        Ok(w)
    }

    /// E[Theta_a Theta_b] under the symmetric Dirichlet prior.
    pub fn dirichlet_second_moment(&self, a: usize, b: usize) -> f64 {
        let k = self.num_topics() as f64;
        let al = self.alpha;
        if a == b {
            (al + 1.0) / (k * (k * al + 1.0))
        } else {
            al / (k * (k * al + 1.0))
        }
    }

    /// Density ratio at the topic level: g*(a, b) = K^2 E[Theta_a Theta_b].
    pub fn odds_topics(&self, a: usize, b: usize) -> f64 {
        let k = self.num_topics() as f64;
        k * k * self.dirichlet_second_moment(a, b)
    }

    /// Posterior label mean after observing one token of topic `t`.
    fn ybar_topic(&self, t: usize) -> f64 {
        let k = self.num_topics() as f64;
        let sv: f64 = self.scores.iter().sum();
        (self.alpha * sv + self.scores[t]) / (k * self.alpha + 1.0)
    }

    /// Posterior label mean after observing tokens of topics `a` and `b`.
    fn yfull_topics(&self, a: usize, b: usize) -> f64 {
        let k = self.num_topics() as f64;
        let sv: f64 = self.scores.iter().sum();
        (self.alpha * sv + self.scores[a] + self.scores[b]) / (k * self.alpha + 2.0)
    }

    fn mu_topic(&self, a: usize) -> f64 {
        let k = self.num_topics() as f64;
        (0..self.num_topics())
            .map(|b| k * self.dirichlet_second_moment(a, b) * self.ybar_topic(b))
            .sum()
    }

    fn compute_redundancy(&self) -> Redundancy {
        // conditional means depend on views only through their topics, so the
        // expectation collapses to the K x K topic pair distribution
        let kk = self.num_topics();
        let mut eps = 0.0;
        for a in 0..kk {
            let ybar = self.ybar_topic(a);
            for b in 0..kk {
                let w = self.dirichlet_second_moment(a, b);
                let d = ybar - self.yfull_topics(a, b);
                eps += w * d * d;
            }
        }
        // the construction is exchangeable in the two views
        Redundancy { eps_x: eps, eps_z: eps, eps_mu: super::compose_eps_mu(eps, eps) }
    }

    fn compute_e_y2(&self) -> f64 {
        let kk = self.num_topics();
        let mut s = 0.0;
        for a in 0..kk {
            for b in 0..kk {
                s += self.scores[a] * self.scores[b] * self.dirichlet_second_moment(a, b);
            }
        }
        s
    }

    pub fn p_x(&self, x: &View) -> Result<f64> {
        let w = self.check_word(x, "x")?;
        Ok(self.word_prob[w] / self.num_topics() as f64)
    }

    pub fn p_z(&self, z: &View) -> Result<f64> {
        let w = self.check_word(z, "z")?;
        Ok(self.word_prob[w] / self.num_topics() as f64)
    }

    pub fn joint_xz(&self, x: &View, z: &View) -> Result<f64> {
        let (wx, wz) = (self.check_word(x, "x")?, self.check_word(z, "z")?);
        Ok(self.dirichlet_second_moment(self.word_topic[wx], self.word_topic[wz])
            * self.word_prob[wx]
            * self.word_prob[wz])
    }

    pub fn odds(&self, x: &View, z: &View) -> Result<f64> {
        let (wx, wz) = (self.check_word(x, "x")?, self.check_word(z, "z")?);
        Ok(self.odds_topics(self.word_topic[wx], self.word_topic[wz]))
    }

    pub fn log_odds(&self, x: &View, z: &View) -> Result<f64> {
        Ok(self.odds(x, z)?.ln())
    }

    pub fn cond_mean_y_given_z(&self, z: &View) -> Result<f64> {
        let w = self.check_word(z, "z")?;
        Ok(self.ybar_topic(self.word_topic[w]))
    }

    pub fn cond_mean_y_given_xz(&self, x: &View, z: &View) -> Result<f64> {
        let (wx, wz) = (self.check_word(x, "x")?, self.check_word(z, "z")?);
        Ok(self.yfull_topics(self.word_topic[wx], self.word_topic[wz]))
    }

    pub fn mu(&self, x: &View) -> Result<f64> {
        let w = self.check_word(x, "x")?;
        Ok(self.mu_topic(self.word_topic[w]))
    }

    pub fn redundancy(&self) -> Redundancy {
        self.redundancy
    }

    pub fn e_y2(&self) -> f64 {
        self.e_y2
    }

    fn draw_theta(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let gamma = Gamma::new(self.alpha, 1.0).expect("alpha validated positive");
        let mut th: Vec<f64> = (0..self.num_topics()).map(|_| gamma.sample(rng)).collect();
        let total: f64 = th.iter().sum();
        debug_assert!(total > 0.0, "degenerate Dirichlet draw");
        for t in th.iter_mut() {
            *t /= total;
        }
        th
    }

    fn draw_token(&self, rng: &mut ChaCha8Rng, theta: &[f64]) -> View {
        let t = sample_categorical(rng, theta);
        let w = sample_categorical(rng, &self.topic_word_probs[t]);
        View::Idx(self.global_word(t, w))
    }

    fn global_word(&self, topic: usize, local: usize) -> usize {
        let offset: usize = self.topic_word_probs[..topic].iter().map(|p| p.len()).sum();
        offset + local
    }

    pub(super) fn draw(&self, rng: &mut ChaCha8Rng) -> (View, View, f64) {
        let theta = self.draw_theta(rng);
        let x = self.draw_token(rng, &theta);
        let z = self.draw_token(rng, &theta);
        let y: f64 = theta.iter().zip(&self.scores).map(|(t, v)| t * v).sum();
        (x, z, y)
    }

    pub(super) fn draw_x(&self, rng: &mut ChaCha8Rng) -> View {
        // marginally the topic is uniform, by Dirichlet symmetry
        let t = rng.random_range(0..self.num_topics());
        let w = sample_categorical(rng, &self.topic_word_probs[t]);
        View::Idx(self.global_word(t, w))
    }

    pub(super) fn draw_z(&self, rng: &mut ChaCha8Rng) -> View {
        self.draw_x(rng)
    }

    pub(super) fn draw_hidden(&self, rng: &mut ChaCha8Rng) -> Hidden {
        Hidden::Simplex(self.draw_theta(rng))
    }

    pub fn lik_x_given_hidden(&self, x: &View, h: &Hidden) -> Result<f64> {
        let w = self.check_word(x, "x")?;
        match h {
            Hidden::Simplex(theta) => {
                if theta.len() != self.num_topics() {
                    return Err(Error::Dimension(format!(
                        "hidden simplex has {} entries, model has {} topics",
                        theta.len(),
                        self.num_topics()
                    )));
                }
                Ok(theta[self.word_topic[w]] * self.word_prob[w])
            }
            _ => Err(Error::Dimension("hidden kind mismatch".into())),
        }
    }

    pub fn lik_z_given_hidden(&self, z: &View, h: &Hidden) -> Result<f64> {
        // token mechanism is identical for the two views
        let w = self.check_word(z, "z")?;
        match h {
            Hidden::Simplex(theta) => {
                if theta.len() != self.num_topics() {
                    return Err(Error::Dimension(format!(
                        "hidden simplex has {} entries, model has {} topics",
                        theta.len(),
                        self.num_topics()
                    )));
                }
                Ok(theta[self.word_topic[w]] * self.word_prob[w])
            }
            _ => Err(Error::Dimension("hidden kind mismatch".into())),
        }
    }

    pub fn validate_report(&self) -> Vec<InvariantViolation> {
        check_topic(self.alpha, &self.scores, &self.topic_word_probs)
    }
}
