//! TOML model files. The `kind` key picks the family; the remaining keys are
//! the family's natural parameters:
//!
//! ```toml
//! kind = "discrete"               # | "topic" | "gaussian"
//! id = "flip-0.1"
//! prior = [0.5, 0.5]              # discrete: hidden-state distribution
//! labels = [1.0, -1.0]            #   label value per hidden state
//! x_given_h = [[0.9, 0.1], [0.1, 0.9]]
//! z_given_h = [[0.9, 0.1], [0.1, 0.9]]
//!
//! # topic:    alpha = 1.0, scores = [...], topic_words = [[...], ...]
//! # gaussian: sigma2 = 0.25
//! ```
//!
//! `parse_model` / `load_model` reject invalid parameters; `validate_model_str`
//! instead reports every violation with its slack, for the `validate` command.

use super::{DiscreteHiddenModel, GaussianModel, MultiViewModel, TopicModel};
use crate::error::{Error, InvariantViolation, Result};
use nalgebra::DMatrix;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ModelSpec {
    Discrete {
        id: String,
        prior: Vec<f64>,
        labels: Vec<f64>,
        x_given_h: Vec<Vec<f64>>,
        z_given_h: Vec<Vec<f64>>,
    },
    Topic {
        id: String,
        alpha: f64,
        scores: Vec<f64>,
        topic_words: Vec<Vec<f64>>,
    },
    Gaussian { id: String, sigma2: f64 },
}

fn to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::ModelFile(format!("{name} must have at least one row")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ModelFile(format!(
            "{name} must be rectangular with at least one column"
        )));
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flatten().copied(),
    ))
}

fn parse_spec(text: &str) -> Result<ModelSpec> {
    toml::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))
}

/// Parse and fully validate a model from TOML text.
pub fn parse_model(text: &str) -> Result<MultiViewModel> {
    match parse_spec(text)? {
        ModelSpec::Discrete { id, prior, labels, x_given_h, z_given_h } => {
            let xg = to_matrix("x_given_h", &x_given_h)?;
            let zg = to_matrix("z_given_h", &z_given_h)?;
            Ok(DiscreteHiddenModel::new(id, prior, xg, zg, labels)?.into())
        }
        ModelSpec::Topic { id, alpha, scores, topic_words } => {
            Ok(TopicModel::new(id, alpha, scores, topic_words)?.into())
        }
        ModelSpec::Gaussian { id, sigma2 } => Ok(GaussianModel::new(id, sigma2)?.into()),
    }
}

/// Parse and fully validate a model from a TOML file on disk.
pub fn load_model(path: impl AsRef<Path>) -> Result<MultiViewModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ModelFile(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// Check a model description without constructing it, reporting every
/// violated invariant together with how far past tolerance it lies.
/// An empty list means the description is valid.
pub fn validate_model_str(text: &str) -> Result<Vec<InvariantViolation>> {
    match parse_spec(text)? {
        ModelSpec::Discrete { prior, labels, x_given_h, z_given_h, .. } => {
            let xg = to_matrix("x_given_h", &x_given_h)?;
            let zg = to_matrix("z_given_h", &z_given_h)?;
            Ok(super::discrete::check_discrete(&prior, &xg, &zg, &labels))
        }
        ModelSpec::Topic { alpha, scores, topic_words, .. } => {
            Ok(super::topic::check_topic(alpha, &scores, &topic_words))
        }
        ModelSpec::Gaussian { sigma2, .. } => Ok(super::gaussian::check_gaussian(sigma2)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const FLIP: &str = r#"
kind = "discrete"
id = "flip-0.1"
prior = [0.5, 0.5]
labels = [1.0, -1.0]
x_given_h = [[0.9, 0.1], [0.1, 0.9]]
z_given_h = [[0.9, 0.1], [0.1, 0.9]]
"#;

    #[test]
    fn discrete_round_trip() {
        let m = parse_model(FLIP).unwrap();
        assert_eq!(m.id(), "flip-0.1");
        assert_eq!(m.kind_name(), "discrete");
        assert_relative_eq!(
            m.odds(&crate::models::View::Idx(0), &crate::models::View::Idx(0)).unwrap(),
            1.64,
            epsilon = 1e-12
        );
        assert!(validate_model_str(FLIP).unwrap().is_empty());
    }

    #[test]
    fn topic_and_gaussian_parse() {
        let t = r#"
kind = "topic"
id = "topic-k2"
alpha = 1.0
scores = [1.0, -1.0]
topic_words = [[0.5, 0.3, 0.2], [0.5, 0.3, 0.2]]
"#;
        let m = parse_model(t).unwrap();
        assert_eq!(m.kind_name(), "topic");
        assert_eq!(m.support_x(), Some(6));

        let g = r#"
kind = "gaussian"
id = "gaussian-0.25"
sigma2 = 0.25
"#;
        let m = parse_model(g).unwrap();
        assert_eq!(m.kind_name(), "gaussian");
        assert_eq!(m.support_x(), None);
    }

    #[test]
    fn syntax_and_shape_errors_are_model_file_errors() {
        assert!(matches!(parse_model("kind = "), Err(Error::ModelFile(_))));
        assert!(matches!(
            parse_model("kind = \"scramble\"\nid = \"x\""),
            Err(Error::ModelFile(_))
        ));
        // ragged channel table
        let ragged = r#"
kind = "discrete"
id = "bad"
prior = [0.5, 0.5]
labels = [1.0, -1.0]
x_given_h = [[0.5, 0.5], [0.5, 0.5]]
z_given_h = [[0.5, 0.5], [1.0]]
"#;
        assert!(matches!(parse_model(ragged), Err(Error::ModelFile(_))));
        // unknown fields are rejected rather than silently ignored
        let extra = r#"
kind = "gaussian"
id = "g"
sigma2 = 1.0
sigma = 2.0
"#;
        assert!(matches!(parse_model(extra), Err(Error::ModelFile(_))));
    }

    #[test]
    fn validator_reports_violations_with_slack() {
        let bad = r#"
kind = "discrete"
id = "bad"
prior = [0.6, 0.5]
labels = [1.0, -1.5]
x_given_h = [[0.9, 0.1], [0.1, 0.9]]
z_given_h = [[0.9, 0.1], [0.1, 0.9]]
"#;
        let report = validate_model_str(bad).unwrap();
        assert!(report.iter().any(|v| v.invariant.contains("prior sums to 1")));
        assert!(report.iter().any(|v| v.invariant.contains("label_of_h[1]")));
        let prior_v = report.iter().find(|v| v.invariant.contains("prior")).unwrap();
        assert_relative_eq!(prior_v.slack, 0.1, epsilon = 1e-9);
        // parse_model refuses the same text
        assert!(matches!(parse_model(bad), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn load_model_reads_from_disk() {
        let dir = std::env::temp_dir().join("redlab-file-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("flip.toml");
        std::fs::write(&path, FLIP).unwrap();
        let m = load_model(&path).unwrap();
        assert_eq!(m.id(), "flip-0.1");
        assert!(matches!(
            load_model(dir.join("missing.toml")),
            Err(Error::ModelFile(_))
        ));
    }
}
