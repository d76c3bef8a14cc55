//! Seeded synthetic transects with known anomaly locations, for validating
//! the detection pipeline end to end.
//!
//! Anomalies follow the rational peak family `u ↦ 1/(1 + u²)`: element `j`
//! at position `x` takes the value
//!
//! ```text
//!   baseline_j · (1 + Σ a/(1 + ((x − x₀)/σ)²)) · exp(noise_sd · z)
//! ```
//!
//! with one term per anomaly assigned to the element and `z` standard normal.
//! The multiplicative log-normal noise keeps concentrations strictly positive,
//! matching the positivity the log link requires. The peak's half-width at
//! half-maximum equals σ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{compute_outlier_weights, IngestError, TransectDataset};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("need at least 2 elements, got {0}")]
    TooFewElements(usize),
    #[error("anomaly {0}: element index {1} out of range for {2} elements")]
    BadElementIndex(usize, usize, usize),
    #[error("anomaly {0}: center {1} outside [0, 1]")]
    BadCenter(usize, f64),
    #[error("anomaly {0}: width and amplitude must be positive")]
    BadShape(usize),
    #[error("baselines must be positive")]
    BadBaseline,
    #[error("noise standard deviation must be nonnegative, got {0}")]
    BadNoise(f64),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// One localized anomaly attached to an element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Anomaly {
    /// Index of the carrying element.
    pub element: usize,
    /// Center position in [0, 1].
    pub center: f64,
    /// Width σ (half-width at half-maximum).
    pub width: f64,
    /// Peak amplitude relative to the baseline.
    pub amplitude: f64,
}

/// Full description of a synthetic transect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub elements: usize,
    pub anomalies: Vec<Anomaly>,
    /// Baseline level per element; a single entry is broadcast.
    pub baselines: Vec<f64>,
    /// Standard deviation of the multiplicative log-normal noise.
    pub noise_sd: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.samples < 4 {
            return Err(SynthError::TooFewSamples(self.samples));
        }
        if self.elements < 2 {
            return Err(SynthError::TooFewElements(self.elements));
        }
        for (i, a) in self.anomalies.iter().enumerate() {
            if a.element >= self.elements {
                return Err(SynthError::BadElementIndex(i, a.element, self.elements));
            }
            if !(0.0..=1.0).contains(&a.center) {
                return Err(SynthError::BadCenter(i, a.center));
            }
            if !(a.width > 0.0) || !(a.amplitude > 0.0) {
                return Err(SynthError::BadShape(i));
            }
        }
        if self.baselines.is_empty() || self.baselines.iter().any(|b| !(*b > 0.0)) {
            return Err(SynthError::BadBaseline);
        }
        if !(self.noise_sd >= 0.0) {
            return Err(SynthError::BadNoise(self.noise_sd));
        }
        Ok(())
    }

    fn baseline(&self, element: usize) -> f64 {
        if self.baselines.len() == 1 {
            self.baselines[0]
        } else {
            self.baselines[element % self.baselines.len()]
        }
    }
}

/// Known anomaly locations, written alongside generated data so detection
/// output can be checked against the truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub anomalies: Vec<GroundTruthAnomaly>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthAnomaly {
    pub element: String,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

/// Element symbol used for the `i`-th synthetic element (0-based index).
pub fn element_name(i: usize) -> String {
    format!("E{}", i + 1)
}

/// The rational peak `1/(1 + u²)`.
fn peak(u: f64) -> f64 {
    1.0 / (1.0 + u * u)
}

/// Noiseless signal of one element at one position.
pub fn signal(spec: &SyntheticSpec, element: usize, x: f64) -> f64 {
    let mut bump = 0.0;
    for a in &spec.anomalies {
        if a.element == element {
            bump += a.amplitude * peak((x - a.center) / a.width);
        }
    }
    spec.baseline(element) * (1.0 + bump)
}

/// Generates the dataset with equispaced positions on [0, 1]. The same seed
/// always produces the same dataset; noise draws are ordered element-major.
pub fn generate(spec: &SyntheticSpec) -> Result<(TransectDataset, GroundTruth), SynthError> {
    spec.validate()?;
    let n = spec.samples;
    let positions: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut values = Vec::with_capacity(spec.elements);
    for e in 0..spec.elements {
        let mut col = Vec::with_capacity(n);
        for &x in &positions {
            let z: f64 = rng.sample(StandardNormal);
            col.push(signal(spec, e, x) * (spec.noise_sd * z).exp());
        }
        values.push(col);
    }
    let weights = values
        .iter()
        .map(|col| compute_outlier_weights(col))
        .collect::<Result<Vec<_>, _>>()?;

    let dataset = TransectDataset {
        sample_ids: (0..n).map(|i| format!("s{}", i + 1)).collect(),
        positions,
        elements: (0..spec.elements).map(element_name).collect(),
        values,
        weights,
        distance_range: (0.0, 1.0),
    };
    let truth = GroundTruth {
        anomalies: spec
            .anomalies
            .iter()
            .map(|a| GroundTruthAnomaly {
                element: element_name(a.element),
                center: a.center,
                width: a.width,
                amplitude: a.amplitude,
            })
            .collect(),
    };
    Ok((dataset, truth))
}
