//! Experiment configuration: one JSON document with a section per command.

use std::path::PathBuf;

use morrey_ns::lab::{EmbeddingCase, EmbeddingItem};
use morrey_ns::norms::{Flavor, SpaceParams};
use morrey_ns::solver::DataVariant;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompose: Option<DecomposeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "two_pi")]
    pub length: f64,
}

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

/// Which quantity `norm` reports for each field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// Besov-type norm of the space.
    #[default]
    Space,
    /// Mixed-Morrey norm of the sampled values, no decomposition.
    Morrey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub fields: Vec<PathBuf>,
    pub space: SpaceParams,
    #[serde(default)]
    pub kind: NormKind,
    /// One length per field; with two or more the growth exponent of the
    /// norm in that length is fitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeSpec {
    pub field: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Zero,
    TaylorGreen {
        amplitude: f64,
    },
    Anisotropic {
        eps: f64,
        variant: DataVariant,
    },
    /// One field file per velocity component.
    Files {
        components: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub nu: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    pub max_picard: usize,
    pub tol: f64,
    pub params: SpaceParams,
    /// Bilinear constant; fitted by the lab when absent.
    #[serde(rename = "K_estimate", default, skip_serializing_if = "Option::is_none")]
    pub k_estimate: Option<f64>,
    #[serde(default = "default_k_samples")]
    pub k_samples: usize,
    pub data: DataSpec,
}

fn default_k_samples() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Check names; the default suite when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_ceiling")]
    pub spread_ceiling: f64,
    /// Run only the negative controls, which must all fail.
    #[serde(default)]
    pub controls_only: bool,
    #[serde(default = "default_q")]
    pub q: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_r")]
    pub r: Vec<f64>,
    #[serde(default = "default_mu")]
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<EmbeddingCase>>,
    #[serde(default = "default_flavors")]
    pub flavors: Vec<Flavor>,
    /// Samples per scale for the time-dependent checks.
    #[serde(default = "default_time_samples")]
    pub time_samples: usize,
    #[serde(default = "default_nus")]
    pub nus: Vec<f64>,
}

fn default_samples() -> usize {
    30
}
fn default_ceiling() -> f64 {
    10.0
}
fn default_q() -> Vec<f64> {
    vec![2.0, 3.0]
}
fn default_lambda() -> Vec<f64> {
    vec![0.5, 0.25]
}
fn default_r() -> Vec<f64> {
    vec![4.0, 4.0]
}
fn default_mu() -> Vec<f64> {
    vec![0.5, 0.5]
}
fn default_flavors() -> Vec<Flavor> {
    vec![Flavor::PhysicalBesov, Flavor::FourierBesov]
}
fn default_time_samples() -> usize {
    2
}
fn default_nus() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

impl Default for VerifySpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl VerifySpec {
    /// The two-dimensional embedding tuples used when none are configured.
    pub fn default_embeddings(&self) -> Vec<EmbeddingCase> {
        use EmbeddingItem::*;
        let (q, l) = (self.q.clone(), self.lambda.clone());
        vec![
            EmbeddingCase::new(MorreyIndices, vec![2.0, 2.0], vec![0.75, 0.75], 2.0, 0.0)
                .with_source(vec![4.0, 4.0], vec![0.5, 0.5]),
            EmbeddingCase::new(BesovSup, q.clone(), l.clone(), 2.0, 0.0),
            EmbeddingCase::new(MorreyInterpolation, q.clone(), l.clone(), 2.0, 0.0).with_theta(0.5),
            EmbeddingCase::new(FourierMorreyIndices, vec![2.0, 2.0], vec![0.75, 0.75], 2.0, 0.0)
                .with_source(vec![4.0, 4.0], vec![0.5, 0.5]),
            EmbeddingCase::new(FourierIndexLowering, vec![2.0, 2.0], vec![0.5, 0.5], 2.0, 0.0)
                .with_source(vec![4.0, 4.0], vec![0.5, 0.5]),
            EmbeddingCase::new(FourierToL1, q.clone(), l.clone(), 2.0, 0.0),
            EmbeddingCase::new(FourierL1ToSup, q.clone(), l.clone(), 2.0, 0.0),
            EmbeddingCase::new(FourierInterpolation, q, l, 2.0, 0.0).with_theta(0.5),
        ]
    }
}
