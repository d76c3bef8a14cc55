//! Assembly of the symmetric c-value matrix over all element pairs, scaling,
//! ranked hitlists, element-frequency tables, cross-material accumulation and
//! top-k score curves.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::curvature::{curvature_profile, CurvatureError, CurveSamples, EvaluationGrid, LogRatioCurve};
use crate::gam::SmoothFit;

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("at least 2 fits are required to build a pair matrix, got {0}")]
    TooFewFits(usize),
    #[error("pair {el1}/{el2}: {source}")]
    PairFailure {
        el1: String,
        el2: String,
        source: CurvatureError,
    },
    #[error("accumulation needs at least 2 matrices, got {0}")]
    TooFewMatrices(usize),
    #[error("accumulation expects scaled matrices; `{0}` is unscaled")]
    UnscaledInput(String),
}

/// Whether matrix entries are raw c-values, scaled to [0, 1] by the maximum,
/// or means of scaled matrices across materials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Raw,
    Scaled,
    Accumulated,
}

/// Symmetric matrix of c-values with zero diagonal.
#[derive(Debug, Clone, Serialize)]
pub struct CValueMatrix {
    pub material: String,
    pub elements: Vec<String>,
    /// Row-major m×m values.
    values: Vec<f64>,
    pub kind: MatrixKind,
    /// For accumulated matrices: how many materials contributed to each cell.
    /// Cells with zero coverage are absent, not zero.
    coverage: Option<Vec<u32>>,
}

impl CValueMatrix {
    /// Builds a raw matrix from explicit pair values (upper triangle in
    /// row-major order, `i < j`). Useful for tools working with precomputed
    /// scores.
    pub fn from_upper_triangle(
        material: &str,
        elements: &[String],
        upper: &[f64],
    ) -> Result<Self, RankingError> {
        let m = elements.len();
        if m < 2 {
            return Err(RankingError::TooFewFits(m));
        }
        assert_eq!(
            upper.len(),
            m * (m - 1) / 2,
            "upper triangle of an {m}x{m} matrix has m(m-1)/2 entries"
        );
        let mut values = vec![0.0; m * m];
        let mut it = upper.iter();
        for i in 0..m {
            for j in (i + 1)..m {
                let v = *it.next().unwrap();
                values[i * m + j] = v;
                values[j * m + i] = v;
            }
        }
        Ok(Self {
            material: material.to_string(),
            elements: elements.to_vec(),
            values,
            kind: MatrixKind::Raw,
            coverage: None,
        })
    }

    pub fn size(&self) -> usize {
        self.elements.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    /// Coverage count of a cell; 1 for single-material matrices.
    pub fn coverage(&self, i: usize, j: usize) -> u32 {
        match &self.coverage {
            Some(c) => c[i * self.size() + j],
            None => 1,
        }
    }

    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.coverage(i, j) > 0
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// All unordered off-diagonal pairs `(i, j, value)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.size();
        (0..m).flat_map(move |i| ((i + 1)..m).map(move |j| (i, j, self.get(i, j))))
    }
}

/// Computes c-values for all element pairs of one material. Each unordered
/// pair is evaluated once and mirrored, so the matrix is exactly symmetric.
pub fn build_matrix(
    material: &str,
    fits: &[SmoothFit],
    grid: &EvaluationGrid,
) -> Result<CValueMatrix, RankingError> {
    let m = fits.len();
    if m < 2 {
        return Err(RankingError::TooFewFits(m));
    }
    // Sample each fitted curve once; pair computations reuse the samples.
    let samples: Vec<CurveSamples> = fits
        .par_iter()
        .map(|fit| CurveSamples::from_fit(fit, grid))
        .collect();

    let index_pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let computed: Vec<Result<f64, RankingError>> = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            // Evaluate in canonical element order so the value is identical
            // however the fit list is arranged (the c-value is symmetric, but
            // canonical order removes even last-bit asymmetry).
            let (a, b) = if fits[i].element <= fits[j].element {
                (i, j)
            } else {
                (j, i)
            };
            let curve = LogRatioCurve::from_samples(
                (fits[a].element.clone(), fits[b].element.clone()),
                &samples[a],
                &samples[b],
                grid,
            );
            curvature_profile(&curve, grid)
                .map(|p| p.c_value)
                .map_err(|source| RankingError::PairFailure {
                    el1: fits[i].element.clone(),
                    el2: fits[j].element.clone(),
                    source,
                })
        })
        .collect();

    let mut values = vec![0.0; m * m];
    for (&(i, j), result) in index_pairs.iter().zip(computed) {
        let v = result?;
        values[i * m + j] = v;
        values[j * m + i] = v;
    }
    Ok(CValueMatrix {
        material: material.to_string(),
        elements: fits.iter().map(|f| f.element.clone()).collect(),
        values,
        kind: MatrixKind::Raw,
        coverage: None,
    })
}

/// Divides every entry by the maximum entry, mapping the matrix onto [0, 1];
/// an all-zero matrix is returned unchanged apart from the kind flag.
pub fn scale_matrix(matrix: &CValueMatrix) -> CValueMatrix {
    let max = matrix.max_value();
    let values = if max > 0.0 {
        matrix.values.iter().map(|v| v / max).collect()
    } else {
        matrix.values.clone()
    };
    CValueMatrix {
        material: matrix.material.clone(),
        elements: matrix.elements.clone(),
        values,
        kind: MatrixKind::Scaled,
        coverage: matrix.coverage.clone(),
    }
}

/// One row of a ranked hitlist.
#[derive(Debug, Clone, Serialize)]
pub struct RankedPair {
    pub rank: usize,
    /// Pair in canonical (lexicographic) order.
    pub elements: (String, String),
    pub c_value: f64,
    pub scaled_c_value: f64,
}

/// The `k` highest-value unordered pairs. Ties are broken lexicographically
/// by the canonical pair label so output order is deterministic.
pub fn top_k(matrix: &CValueMatrix, k: usize) -> Vec<RankedPair> {
    let max = matrix.max_value();
    let mut rows: Vec<(String, String, f64)> = matrix
        .pairs()
        .map(|(i, j, v)| {
            let (a, b) = canonical_pair(&matrix.elements[i], &matrix.elements[j]);
            (a, b, v)
        })
        .collect();
    rows.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (&a.0, &a.1).cmp(&(&b.0, &b.1)))
    });
    rows.truncate(k);
    rows.into_iter()
        .enumerate()
        .map(|(idx, (a, b, v))| RankedPair {
            rank: idx + 1,
            elements: (a, b),
            c_value: v,
            scaled_c_value: if max > 0.0 { v / max } else { 0.0 },
        })
        .collect()
}

fn canonical_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Element-frequency table entry.
#[derive(Debug, Clone, Serialize)]
pub struct ElementCount {
    pub element: String,
    pub count: usize,
    /// Best (smallest) rank at which the element first appears.
    pub first_rank: usize,
}

/// Counts how often each element occurs among the top-`k` ranked pairs;
/// ordered by count descending, ties by earliest appearance.
pub fn element_frequency(ranked: &[RankedPair], k: usize) -> Vec<ElementCount> {
    let mut counts: Vec<ElementCount> = Vec::new();
    for row in ranked.iter().take(k) {
        for el in [&row.elements.0, &row.elements.1] {
            match counts.iter_mut().find(|c| &c.element == el) {
                Some(c) => c.count += 1,
                None => counts.push(ElementCount {
                    element: el.clone(),
                    count: 1,
                    first_rank: row.rank,
                }),
            }
        }
    }
    counts.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.first_rank.cmp(&b.first_rank))
            .then(a.element.cmp(&b.element))
    });
    counts
}

/// Elementwise mean of scaled matrices over the materials in which both
/// elements appear, on the lexicographically ordered union of element sets.
/// Cells no material covers carry coverage 0 and are reported absent.
pub fn accumulate(matrices: &[CValueMatrix]) -> Result<CValueMatrix, RankingError> {
    if matrices.len() < 2 {
        return Err(RankingError::TooFewMatrices(matrices.len()));
    }
    for m in matrices {
        if m.kind == MatrixKind::Raw {
            return Err(RankingError::UnscaledInput(m.material.clone()));
        }
    }
    let mut union: Vec<String> = matrices
        .iter()
        .flat_map(|m| m.elements.iter().cloned())
        .collect();
    union.sort();
    union.dedup();
    let m = union.len();
    let mut sums = vec![0.0f64; m * m];
    let mut coverage = vec![0u32; m * m];
    for matrix in matrices {
        let index: Vec<Option<usize>> = union
            .iter()
            .map(|el| matrix.elements.iter().position(|e| e == el))
            .collect();
        for i in 0..m {
            for j in 0..m {
                if let (Some(a), Some(b)) = (index[i], index[j]) {
                    sums[i * m + j] += matrix.get(a, b);
                    coverage[i * m + j] += 1;
                }
            }
        }
    }
    let values: Vec<f64> = sums
        .iter()
        .zip(&coverage)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok(CValueMatrix {
        material: "accumulated".to_string(),
        elements: union,
        values,
        kind: MatrixKind::Accumulated,
        coverage: Some(coverage),
    })
}

/// Per-material sequences of the `k` largest c-values, sorted descending.
pub fn top_curves(matrices: &[CValueMatrix], k: usize) -> Vec<(String, Vec<f64>)> {
    matrices
        .iter()
        .map(|m| {
            let mut vals: Vec<f64> = m.pairs().map(|(_, _, v)| v).collect();
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            vals.truncate(k);
            (m.material.clone(), vals)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gam::{select_lambda_gcv, Family, LambdaGrid};

    fn make_matrix(material: &str, elements: &[&str], upper: &[f64]) -> CValueMatrix {
        let names: Vec<String> = elements.iter().map(|s| s.to_string()).collect();
        CValueMatrix::from_upper_triangle(material, &names, upper).unwrap()
    }

    fn fitted_elements(names: &[&str], seedy: u64) -> Vec<crate::gam::SmoothFit> {
        let x: Vec<f64> = (0..15).map(|i| i as f64 / 14.0).collect();
        let grid = LambdaGrid::default().values();
        names
            .iter()
            .enumerate()
            .map(|(idx, name)| {
                let y: Vec<f64> = x
                    .iter()
                    .map(|&xi| {
                        let phase = (seedy as f64 + idx as f64) * 0.7;
                        2.0 + ((4.0 + idx as f64) * xi + phase).sin().powi(2)
                    })
                    .collect();
                let w = vec![1.0; x.len()];
                let mut fit =
                    select_lambda_gcv(&x, &y, &w, &Family::tweedie(1.5).unwrap(), &grid).unwrap();
                fit.element = name.to_string();
                fit
            })
            .collect()
    }

    #[test]
    fn matrix_is_symmetric_with_zero_diagonal() {
        let fits = fitted_elements(&["Co", "Al", "Fe"], 3);
        let grid = EvaluationGrid::new(400, 1e-3).unwrap();
        let matrix = build_matrix("test", &fits, &grid).unwrap();
        for i in 0..3 {
            assert_eq!(matrix.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(matrix.get(i, j), matrix.get(j, i));
            }
        }
    }

    #[test]
    fn pair_count_for_27_elements() {
        let elements: Vec<String> = (0..27).map(|i| format!("E{i}")).collect();
        let refs: Vec<&str> = elements.iter().map(|s| s.as_str()).collect();
        let upper = vec![0.5; 27 * 26 / 2];
        let matrix = make_matrix("m", &refs, &upper);
        assert_eq!(matrix.pairs().count(), 351);
    }

    #[test]
    fn permuting_fits_permutes_the_matrix_consistently() {
        let fits = fitted_elements(&["Co", "Al", "Fe", "Ni"], 9);
        let grid = EvaluationGrid::new(400, 1e-3).unwrap();
        let m1 = build_matrix("m", &fits, &grid).unwrap();
        let permuted: Vec<_> = [2usize, 0, 3, 1].iter().map(|&i| fits[i].clone()).collect();
        let m2 = build_matrix("m", &permuted, &grid).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let a = m2.elements[i].clone();
                let b = m2.elements[j].clone();
                let oi = m1.elements.iter().position(|e| *e == a).unwrap();
                let oj = m1.elements.iter().position(|e| *e == b).unwrap();
                assert_eq!(m2.get(i, j), m1.get(oi, oj), "pair {a}/{b}");
            }
        }
    }

    #[test]
    fn scaling_maps_max_to_one_and_preserves_order() {
        let m = make_matrix("m", &["A", "B", "C"], &[2.0, 8.0, 4.0]);
        let s = scale_matrix(&m);
        assert_eq!(s.kind, MatrixKind::Scaled);
        assert_eq!(s.max_value(), 1.0);
        let ranked_raw = top_k(&m, 3);
        let ranked_scaled = top_k(&s, 3);
        for (a, b) in ranked_raw.iter().zip(&ranked_scaled) {
            assert_eq!(a.elements, b.elements);
        }
        assert_eq!(ranked_scaled[0].c_value, 1.0);
    }

    #[test]
    fn all_zero_matrix_survives_scaling() {
        let m = make_matrix("m", &["A", "B"], &[0.0]);
        let s = scale_matrix(&m);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.kind, MatrixKind::Scaled);
    }

    #[test]
    fn top_k_truncates_and_orders() {
        let m = make_matrix("m", &["A", "B", "C", "D"], &[1.0, 5.0, 3.0, 2.0, 4.0, 6.0]);
        let top = top_k(&m, 2);
        assert_eq!(top.len(), 2);
        assert_eq!(top[0].elements, ("C".to_string(), "D".to_string()));
        assert_eq!(top[0].c_value, 6.0);
        assert_eq!(top[0].scaled_c_value, 1.0);
        assert_eq!(top[1].elements, ("A".to_string(), "C".to_string()));
        let full = top_k(&m, 100);
        assert_eq!(full.len(), 6);
        assert!(full.windows(2).all(|w| w[0].c_value >= w[1].c_value));
    }

    #[test]
    fn frequency_counts_and_orders_elements() {
        let m = make_matrix("m", &["Co", "Al", "Fe"], &[5.0, 4.0, 1.0]);
        // Pairs by value: Co/Al 5, Co/Fe 4, Al/Fe 1.
        let ranked = top_k(&m, 2);
        let freq = element_frequency(&ranked, 2);
        assert_eq!(freq[0].element, "Co");
        assert_eq!(freq[0].count, 2);
        assert_eq!(freq.len(), 3);
        let one = element_frequency(&ranked, 1);
        assert_eq!(one.len(), 2);
        assert!(one.iter().all(|c| c.count == 1));
    }

    #[test]
    fn accumulate_means_over_covering_materials() {
        let a = scale_matrix(&make_matrix("a", &["A", "B", "C"], &[2.0, 4.0, 1.0]));
        let b = scale_matrix(&make_matrix("b", &["B", "C", "D"], &[2.0, 1.0, 4.0]));
        let acc = accumulate(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(acc.elements, vec!["A", "B", "C", "D"]);
        let idx = |el: &str| acc.elements.iter().position(|e| e == el).unwrap();
        // B/C present in both: mean of the two scaled entries
        // (B, C sit at indices 1, 2 in `a` and 0, 1 in `b`).
        let expected = (a.get(1, 2) + b.get(0, 1)) / 2.0;
        assert!((acc.get(idx("B"), idx("C")) - expected).abs() < 1e-15);
        assert_eq!(acc.coverage(idx("B"), idx("C")), 2);
        // A/B only in material a.
        assert_eq!(acc.coverage(idx("A"), idx("B")), 1);
        // A/D in neither: absent.
        assert_eq!(acc.coverage(idx("A"), idx("D")), 0);
        assert!(!acc.is_present(idx("A"), idx("D")));
        // Values stay within [0, 1].
        for (_, _, v) in acc.pairs() {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn accumulate_of_identical_matrices_is_identity() {
        let a = scale_matrix(&make_matrix("a", &["A", "B", "C"], &[2.0, 4.0, 1.0]));
        let acc = accumulate(&[a.clone(), a.clone()]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(acc.get(i, j), a.get(i, j));
            }
        }
    }

    #[test]
    fn accumulate_is_permutation_invariant() {
        let a = scale_matrix(&make_matrix("a", &["A", "B", "C"], &[2.0, 4.0, 1.0]));
        let b = scale_matrix(&make_matrix("b", &["B", "C", "D"], &[3.0, 6.0, 2.0]));
        let ab = accumulate(&[a.clone(), b.clone()]).unwrap();
        let ba = accumulate(&[b, a]).unwrap();
        assert_eq!(ab.elements, ba.elements);
        for i in 0..ab.size() {
            for j in 0..ab.size() {
                assert_eq!(ab.get(i, j), ba.get(i, j));
                assert_eq!(ab.coverage(i, j), ba.coverage(i, j));
            }
        }
    }

    #[test]
    fn accumulate_rejects_raw_matrices() {
        let a = make_matrix("a", &["A", "B"], &[1.0]);
        let b = scale_matrix(&a);
        assert!(matches!(
            accumulate(&[a, b]),
            Err(RankingError::UnscaledInput(_))
        ));
    }

    #[test]
    fn top_curves_are_sorted_and_truncated() {
        let a = make_matrix("a", &["A", "B", "C"], &[2.0, 4.0, 1.0]);
        let b = make_matrix("b", &["A", "B", "C"], &[9.0, 3.0, 5.0]);
        let curves = top_curves(&[a, b], 2);
        assert_eq!(curves.len(), 2);
        assert_eq!(curves[0].0, "a");
        assert_eq!(curves[0].1, vec![4.0, 2.0]);
        assert_eq!(curves[1].1, vec![9.0, 5.0]);
        for (_, c) in &curves {
            assert!(c.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
