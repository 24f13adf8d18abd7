//! Per-layer separability ("graph") space.
//!
//! Every component of a layer becomes one row: the Jeffries–Matusita distance
//! between the class-conditional distributions of its activation, for every
//! class pair and, for convolutional layers, every pixel of the activation map.
//!
//! Column layout: pairs `(c, c')` with `c < c'` in lexicographic order, and
//! within a pair the `p x p` map flattened row-major, so column
//! `pair_index * p * p + row * p + col`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensio::ActivationTensor;

/// Floor applied to every variance before the Bhattacharyya distance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Largest f64 below 2. JM saturates here instead of rounding up to 2.
pub const JM_SUPREMUM: f64 = 2.0 - f64::EPSILON;

/// Mean and population variance of one class's activation values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub mean: f64,
    pub var: f64,
}

impl ClassStats {
    pub fn new(mean: f64, var: f64) -> Self {
        ClassStats { mean, var }
    }

    /// Population statistics of `values`. The slice is sorted first so the
    /// result does not depend on sample order.
    pub fn from_values(values: &mut [f64]) -> Self {
        values.sort_unstable_by(f64::total_cmp);
        let n = values.len() as f64;
        if values.first() == values.last() {
            return ClassStats {
                mean: values.first().copied().unwrap_or(0.0),
                var: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        ClassStats { mean, var }
    }
}

/// `B = (mu_a - mu_b)^2 / (8 (var_a + var_b)) + ln((var_a + var_b) / (2 sd_a sd_b)) / 2`
/// with both variances floored at [`VARIANCE_FLOOR`]. Symmetric and `>= 0`.
pub fn bhattacharyya(a: ClassStats, b: ClassStats) -> f64 {
    let va = a.var.max(VARIANCE_FLOOR);
    let vb = b.var.max(VARIANCE_FLOOR);
    let sum = va + vb;
    let gap = a.mean - b.mean;
    let mean_term = gap * gap / (8.0 * sum);
    // ln((va + vb) / (2 sa sb)) = ln(1 + (sa - sb)^2 / (2 sa sb)), never negative
    let (sa, sb) = (va.sqrt(), vb.sqrt());
    let spread_term = 0.5 * ((sa - sb) * (sa - sb) / (2.0 * sa * sb)).ln_1p();
    mean_term + spread_term
}

/// `2 (1 - exp(-B))`, in `[0, 2)`.
pub fn jm_from_bhattacharyya(b: f64) -> f64 {
    (-2.0 * (-b).exp_m1()).min(JM_SUPREMUM)
}

pub fn jm_distance(a: ClassStats, b: ClassStats) -> f64 {
    jm_from_bhattacharyya(bhattacharyya(a, b))
}

/// `(c, c')` with `c < c'`, lexicographic.
pub fn class_pairs(num_classes: usize) -> Vec<(usize, usize)> {
    (0..num_classes)
        .flat_map(|a| (a + 1..num_classes).map(move |b| (a, b)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparabilityMatrix {
    pub layer_id: usize,
    pub rows: usize,
    pub cols: usize,
    pub p: usize,
    pub num_classes: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Row-major `[rows, cols]`.
    pub values: Vec<f64>,
}

impl SeparabilityMatrix {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.cols..(j + 1) * self.cols]
    }

    pub fn get(&self, j: usize, col: usize) -> f64 {
        self.values[j * self.cols + col]
    }

    pub fn column(&self, pair_index: usize, pixel_row: usize, pixel_col: usize) -> usize {
        (pair_index * self.p + pixel_row) * self.p + pixel_col
    }

    /// Matrix built directly from rows, e.g. for clustering tests.
    pub fn from_rows(layer_id: usize, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(SeparabilityMatrix {
            layer_id,
            rows,
            cols,
            p: 1,
            num_classes: 0,
            pairs: Vec::new(),
            values,
        })
    }
}

/// Builds the `[N, p*p*C(C,2)]` separability matrix of a layer.
pub fn build_space(act: &ActivationTensor) -> Result<SeparabilityMatrix> {
    act.validate()?;
    let num_classes = act.num_classes();
    let mut counts = vec![0usize; num_classes];
    for &l in &act.labels {
        counts[l as usize] += 1;
    }
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(Error::ClassTooSmall { class, count });
    }
    if num_classes < 2 {
        return Err(Error::InvalidDataset(
            "separability needs at least two classes".into(),
        ));
    }
    let pairs = class_pairs(num_classes);
    let pp = act.p * act.p;
    let cols = pairs.len() * pp;
    let mut values = vec![0.0; act.n_components * cols];

    values
        .par_chunks_mut(cols.max(1))
        .enumerate()
        .for_each(|(j, row)| {
            let mut buckets: Vec<Vec<f64>> = counts.iter().map(|&c| Vec::with_capacity(c)).collect();
            for q in 0..pp {
                buckets.iter_mut().for_each(Vec::clear);
                for t in 0..act.n_samples {
                    buckets[act.labels[t] as usize].push(act.map(t, j)[q] as f64);
                }
                let stats: Vec<ClassStats> = buckets.iter_mut().map(|b| ClassStats::from_values(b)).collect();
                for (pi, &(a, b)) in pairs.iter().enumerate() {
                    row[pi * pp + q] = jm_distance(stats[a], stats[b]);
                }
            }
        });

    Ok(SeparabilityMatrix {
        layer_id: act.layer_id,
        rows: act.n_components,
        cols,
        p: act.p,
        num_classes,
        pairs,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensio::ComponentKind;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn st(mean: f64, var: f64) -> ClassStats {
        ClassStats::new(mean, var)
    }

    #[test]
    fn identical_distributions_are_inseparable() {
        assert_eq!(bhattacharyya(st(1.5, 0.3), st(1.5, 0.3)), 0.0);
        assert_eq!(jm_distance(st(1.5, 0.3), st(1.5, 0.3)), 0.0);
        assert_eq!(jm_from_bhattacharyya(0.0), 0.0);
    }

    #[test]
    fn mean_gap_of_two_unit_variances() {
        assert_relative_eq!(
            bhattacharyya(st(0.0, 1.0), st(2.0, 1.0)),
            0.25,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            jm_distance(st(0.0, 1.0), st(2.0, 1.0)),
            0.442_398_433_857_190_24,
            max_relative = 1e-14
        );
    }

    #[test]
    fn variance_mismatch_only() {
        assert_relative_eq!(
            bhattacharyya(st(0.0, 1.0), st(0.0, 4.0)),
            0.111_571_775_657_104_9,
            max_relative = 1e-14
        );
    }

    #[test]
    fn wide_gap_approaches_the_bound() {
        let b = bhattacharyya(st(0.0, 1.0), st(10.0, 1.0));
        assert_relative_eq!(b, 6.25, max_relative = 1e-15);
        assert_relative_eq!(
            jm_distance(st(0.0, 1.0), st(10.0, 1.0)),
            1.996_139_091_727_544_6,
            max_relative = 1e-14
        );
    }

    #[test]
    fn saturation_stays_below_two() {
        let jm = jm_distance(st(0.0, 0.0), st(1.0, 0.0));
        assert!(jm < 2.0);
        assert_eq!(jm, JM_SUPREMUM);
    }

    #[test]
    fn jm_is_monotone_in_b() {
        let mut prev = 0.0;
        for i in 1..400 {
            let jm = jm_from_bhattacharyya(i as f64 * 0.1);
            assert!(jm >= prev);
            prev = jm;
        }
    }

    #[test]
    fn pair_order_is_lexicographic() {
        assert_eq!(class_pairs(3), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(class_pairs(4).len(), 6);
    }

    fn linear_act(values: Vec<f32>, n_components: usize, labels: Vec<u32>) -> ActivationTensor {
        ActivationTensor::new(0, ComponentKind::Linear, n_components, 1, values, labels).unwrap()
    }

    #[test]
    fn two_class_linear_layer_has_one_column() {
        // component 0 separates, component 1 is dead
        let act = linear_act(vec![0.0, 0.0, 1.0, 0.0, 4.0, 0.0, 5.0, 0.0], 2, vec![0, 0, 1, 1]);
        let m = build_space(&act).unwrap();
        assert_eq!((m.rows, m.cols), (2, 1));
        let a = ClassStats::from_values(&mut [0.0, 1.0]);
        let b = ClassStats::from_values(&mut [4.0, 5.0]);
        assert_eq!(m.get(0, 0), jm_distance(a, b));
        assert_eq!(m.row(1), &[0.0]);
    }

    #[test]
    fn conv_layout_and_shape() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (n, comps, p) = (9, 4, 2);
        let values: Vec<f32> = (0..n * comps * p * p)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let labels = vec![0, 1, 2, 0, 1, 2, 0, 1, 2];
        let act = ActivationTensor::new(2, ComponentKind::Conv, comps, p, values, labels).unwrap();
        let m = build_space(&act).unwrap();
        assert_eq!((m.rows, m.cols), (4, 12));
        // pair (1, 2), pixel (1, 0) of component 3
        let col = m.column(2, 1, 0);
        let pick = |class: u32| -> Vec<f64> {
            (0..n)
                .filter(|&t| act.labels[t] == class)
                .map(|t| act.map(t, 3)[2] as f64)
                .collect()
        };
        let expect = jm_distance(
            ClassStats::from_values(&mut pick(1)),
            ClassStats::from_values(&mut pick(2)),
        );
        assert_eq!(m.get(3, col), expect);
    }

    #[test]
    fn small_class_is_reported() {
        let act = linear_act(vec![0.0, 1.0, 2.0], 1, vec![0, 0, 1]);
        assert!(matches!(
            build_space(&act),
            Err(Error::ClassTooSmall { class: 1, count: 1 })
        ));
    }

    #[test]
    fn shift_and_scale_leave_rows_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let n = 40;
        let base: Vec<f64> = (0..n)
            .map(|i| (i % 4) as f64 * 0.7 + rng.random_range(0.0..1.0))
            .collect();
        let labels: Vec<u32> = (0..n).map(|i| (i % 4) as u32).collect();
        let build = |f: &dyn Fn(f64) -> f64| {
            let values = base.iter().map(|&v| f(v) as f32).collect();
            build_space(&linear_act(values, 1, labels.clone())).unwrap()
        };
        let plain = build(&|v| v);
        let shifted = build(&|v| v + 3.0);
        let scaled = build(&|v| v * 2.5);
        for c in 0..plain.cols {
            assert_relative_eq!(plain.get(0, c), shifted.get(0, c), max_relative = 1e-5);
            assert_relative_eq!(plain.get(0, c), scaled.get(0, c), max_relative = 1e-5);
        }
    }
}
