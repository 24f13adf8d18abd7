//! Knee detection on MSS curves: least-squares polynomial smoothing followed
//! by the Kneedle normalized-difference rule.

use nalgebra::{DMatrix, DVector};

use crate::cluster::MssCurve;
use crate::error::{Error, Result};
use crate::tensio::KneeProvenance;

pub const DEFAULT_DEGREE: usize = 2;

/// Kneedle sensitivity.
pub const SENSITIVITY: f64 = 1.0;
/// Difference values this close to the maximum count as tied.
pub const KNEE_TIE_TOL: f64 = 1e-12;

/// Least-squares polynomial, stored in a centered and scaled variable
/// `t = (x - center) / scale` for conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    center: f64,
    scale: f64,
    centered: Vec<f64>,
}

impl Polynomial {
    pub fn degree(&self) -> usize {
        self.centered.len() - 1
    }

    fn horner(coeffs: &[f64], t: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn eval(&self, x: f64) -> f64 {
        Self::horner(&self.centered, (x - self.center) / self.scale)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let d: Vec<f64> = self
            .centered
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| i as f64 * c)
            .collect();
        Self::horner(&d, (x - self.center) / self.scale) / self.scale
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let d: Vec<f64> = self
            .centered
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, &c)| (i * (i - 1)) as f64 * c)
            .collect();
        Self::horner(&d, (x - self.center) / self.scale) / (self.scale * self.scale)
    }

    /// Coefficients in the raw variable, lowest power first.
    pub fn coefficients(&self) -> Vec<f64> {
        let n = self.centered.len();
        let mut out = vec![0.0; n];
        let shift = -self.center;
        for (j, &a) in self.centered.iter().enumerate() {
            // a * ((x + shift) / scale)^j, expanded binomially
            let lead = a / self.scale.powi(j as i32);
            let mut binom = 1.0;
            for i in 0..=j {
                out[i] += lead * binom * shift.powi((j - i) as i32);
                binom = binom * (j - i) as f64 / (i + 1) as f64;
            }
        }
        out
    }
}

/// Least-squares fit of a degree-`degree` polynomial, solved by SVD.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Polynomial> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} x values, {} y values",
            xs.len(),
            ys.len()
        )));
    }
    let mut distinct = xs.to_vec();
    distinct.sort_unstable_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::Underdetermined {
            points: distinct.len(),
            degree,
        });
    }
    let m = xs.len();
    let center = xs.iter().sum::<f64>() / m as f64;
    let spread = xs.iter().map(|x| (x - center).abs()).fold(0.0, f64::max);
    let scale = if spread > 0.0 { spread } else { 1.0 };
    let a = DMatrix::from_fn(m, degree + 1, |r, c| ((xs[r] - center) / scale).powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let centered = a
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| Error::BadParams(format!("least-squares solve failed: {e}")))?;
    Ok(Polynomial {
        center,
        scale,
        centered: centered.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KneeResult {
    /// `None` when no knee clears the threshold; the caller keeps every component.
    pub k_prime: Option<usize>,
    pub degree: usize,
    pub fitted_coeffs: Vec<f64>,
    pub ks: Vec<usize>,
    /// Fitted polynomial evaluated at `ks`.
    pub fitted: Vec<f64>,
    /// `y_norm - x_norm` at `ks`.
    pub difference_curve: Vec<f64>,
    pub max_difference: f64,
    pub threshold: f64,
    /// True when the fitted curve decreased overall and was mirrored.
    pub flipped: bool,
    /// Curvature of the normalized fitted curve at `k_prime`.
    pub curvature: Option<f64>,
}

impl KneeResult {
    pub fn provenance(&self) -> KneeProvenance {
        KneeProvenance {
            k_prime: self.k_prime,
            degree: self.degree,
            fitted_coeffs: self.fitted_coeffs.clone(),
            max_difference: self.max_difference,
            threshold: self.threshold,
            curvature_at_knee: self.curvature,
        }
    }

    pub fn difference_csv(&self) -> String {
        let mut s = String::from("k,fitted,difference\n");
        for ((k, f), d) in self.ks.iter().zip(&self.fitted).zip(&self.difference_curve) {
            s.push_str(&format!("{k},{f},{d}\n"));
        }
        s
    }
}

/// Kneedle on raw `(k, y)` samples. `ks` must be strictly increasing.
pub fn find_knee_points(ks: &[usize], ys: &[f64], degree: usize) -> Result<KneeResult> {
    let needed = degree + 2;
    if ks.len() < needed {
        return Err(Error::TooFewPoints {
            needed,
            got: ks.len(),
        });
    }
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let poly = polyfit(&xs, ys, degree)?;
    let fitted: Vec<f64> = xs.iter().map(|&x| poly.eval(x)).collect();
    let m = ks.len();
    let threshold = SENSITIVITY / (m - 1) as f64;

    let lo = fitted.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = fitted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let flipped = fitted[m - 1] < fitted[0];
    let mut result = KneeResult {
        k_prime: None,
        degree,
        fitted_coeffs: poly.coefficients(),
        ks: ks.to_vec(),
        fitted: fitted.clone(),
        difference_curve: vec![0.0; m],
        max_difference: 0.0,
        threshold,
        flipped,
        curvature: None,
    };
    if !range.is_finite() || range <= 1e-9 * (1.0 + hi.abs().max(lo.abs())) {
        return Ok(result);
    }

    let (x0, xr) = (xs[0], xs[m - 1] - xs[0]);
    let difference: Vec<f64> = xs
        .iter()
        .zip(&fitted)
        .map(|(&x, &y)| {
            let yn = if flipped {
                (hi - y) / range
            } else {
                (y - lo) / range
            };
            yn - (x - x0) / xr
        })
        .collect();
    // near-ties (a vertex halfway between two ks) go to the smaller k
    let top = difference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = difference.iter().position(|&d| d >= top - KNEE_TIE_TOL).unwrap();
    result.max_difference = difference[best];
    result.difference_curve = difference;
    if result.max_difference > threshold {
        let x = xs[best];
        let d1 = poly.derivative(x) * xr / range;
        let d2 = poly.second_derivative(x) * xr * xr / range;
        result.k_prime = Some(ks[best]);
        result.curvature = Some(d2.abs() / (1.0 + d1 * d1).powf(1.5));
    }
    Ok(result)
}

pub fn find_knee(curve: &MssCurve, degree: usize) -> Result<KneeResult> {
    find_knee_points(&curve.ks(), &curve.scores(), degree)
}

/// The knee, or the largest swept `k` when there is none or the curve is too
/// short to fit. Returns 0 for an empty curve.
pub fn select_k(curve: &MssCurve, degree: usize) -> usize {
    match find_knee(curve, degree) {
        Ok(KneeResult { k_prime: Some(k), .. }) => k,
        _ => curve.k_max().unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn curve(ks: &[usize], f: impl Fn(f64) -> f64) -> MssCurve {
        MssCurve::new(
            0,
            ks.iter().map(|&k| (k, f(k as f64))).collect::<BTreeMap<_, _>>(),
        )
    }

    fn range(a: usize, b: usize, step: usize) -> Vec<usize> {
        (a..=b).step_by(step).collect()
    }

    #[test]
    fn exact_quadratic_is_recovered() {
        let xs = [-1.0, 0.0, 0.5, 2.0, 3.0, 7.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x * x - 3.0 * x + 1.0).collect();
        let c = polyfit(&xs, &ys, 2).unwrap().coefficients();
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c[1], -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c[2], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_data_fits_its_mean() {
        let xs = [2.0, 3.0, 4.0, 5.0, 6.0];
        for degree in 0..4 {
            let c = polyfit(&xs, &[0.9; 5], degree).unwrap().coefficients();
            assert_abs_diff_eq!(c[0], 0.9, epsilon = 1e-9);
            for &v in &c[1..] {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn three_points_are_interpolated() {
        let xs = [1.0, 2.0, 4.0];
        let ys = [0.3, -1.7, 2.2];
        let p = polyfit(&xs, &ys, 2).unwrap();
        for (x, y) in xs.iter().zip(ys) {
            assert_abs_diff_eq!(p.eval(*x), y, epsilon = 1e-12);
        }
    }

    #[test]
    fn too_few_distinct_points() {
        assert!(matches!(
            polyfit(&[1.0, 2.0], &[0.0, 1.0], 2),
            Err(Error::Underdetermined { points: 2, degree: 2 })
        ));
        assert!(matches!(
            polyfit(&[1.0, 1.0, 2.0], &[0.0, 1.0, 2.0], 2),
            Err(Error::Underdetermined { points: 2, .. })
        ));
        assert!(matches!(
            find_knee(&curve(&[2, 3, 4], |x| x), 2),
            Err(Error::TooFewPoints { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn derivatives_of_a_known_cubic() {
        let xs: Vec<f64> = (0..8).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x).collect();
        let p = polyfit(&xs, &ys, 3).unwrap();
        assert_abs_diff_eq!(p.derivative(2.0), 10.0, epsilon = 1e-8);
        assert_abs_diff_eq!(p.second_derivative(2.0), 12.0, epsilon = 1e-8);
    }

    #[test]
    fn flat_and_linear_curves_have_no_knee() {
        let ks = range(2, 40, 1);
        assert_eq!(find_knee(&curve(&ks, |_| 0.9), 2).unwrap().k_prime, None);
        assert_eq!(
            find_knee(&curve(&ks, |x| 0.02 * x + 0.1), 2).unwrap().k_prime,
            None
        );
        assert_eq!(
            find_knee(&curve(&ks, |x| 1.0 - 0.02 * x), 3).unwrap().k_prime,
            None
        );
        assert_eq!(select_k(&curve(&ks, |_| 0.9), 2), 40);
    }

    #[test]
    fn convex_curve_has_no_knee() {
        let ks = range(2, 40, 1);
        assert_eq!(find_knee(&curve(&ks, |x| x * x), 2).unwrap().k_prime, None);
    }

    #[test]
    fn saturating_curve_matches_dense_scan() {
        let ks = range(2, 50, 1);
        let r = find_knee(&curve(&ks, |x| x / (x + 1.0)), 2).unwrap();
        let k = r.k_prime.unwrap();

        // brute force: evaluate the same polynomial on a fine grid
        let coeffs = &r.fitted_coeffs;
        let eval = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let grid: Vec<f64> = (0..=48_000).map(|i| 2.0 + i as f64 * 1e-3).collect();
        let ys: Vec<f64> = grid.iter().map(|&x| eval(x)).collect();
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut best_x, mut best_d) = (0.0, f64::NEG_INFINITY);
        for (&x, &y) in grid.iter().zip(&ys) {
            let d = (y - lo) / (hi - lo) - (x - 2.0) / 48.0;
            if d > best_d {
                best_d = d;
                best_x = x;
            }
        }
        assert_eq!(k, best_x.round() as usize);
        assert_eq!(select_k(&curve(&ks, |x| x / (x + 1.0)), 2), k);
        assert!(r.curvature.unwrap() > 0.0);
    }

    #[test]
    fn decreasing_curve_is_mirrored() {
        let ks = range(2, 50, 1);
        let up = find_knee(&curve(&ks, |x| 1.0 - (-x / 8.0).exp()), 2).unwrap();
        let down = find_knee(&curve(&ks, |x| (-x / 8.0).exp()), 2).unwrap();
        assert!(down.flipped && !up.flipped);
        assert_eq!(up.k_prime, down.k_prime);
    }

    #[test]
    fn affine_rescaling_keeps_the_knee() {
        let ks = range(2, 64, 1);
        let f = |x: f64| 1.0 - (-x / 9.0).exp();
        for degree in 2..=5 {
            let base = find_knee(&curve(&ks, f), degree).unwrap().k_prime;
            let moved = find_knee(&curve(&ks, |x| 3.5 * f(x) - 7.0), degree)
                .unwrap()
                .k_prime;
            assert!(base.is_some());
            assert_eq!(base, moved, "degree {degree}");
        }
    }

    #[test]
    fn denser_sampling_moves_the_knee_at_most_one_step() {
        let f = |x: f64| 1.0 - (-x / 6.0).exp();
        for degree in 2..=4 {
            let coarse = find_knee(&curve(&range(2, 62, 2), f), degree)
                .unwrap()
                .k_prime
                .unwrap();
            let fine = find_knee(&curve(&range(2, 62, 1), f), degree)
                .unwrap()
                .k_prime
                .unwrap();
            assert!(coarse.abs_diff(fine) <= 2, "degree {degree}: {coarse} vs {fine}");
        }
    }

    #[test]
    fn higher_degree_does_not_move_the_knee_right() {
        let ks = range(2, 64, 1);
        for tau in [3.0, 5.0, 8.0, 12.0] {
            let f = |x: f64| 1.0 - (-x / tau).exp();
            let k2 = select_k(&curve(&ks, f), 2);
            let k5 = select_k(&curve(&ks, f), 5);
            assert!(k5 <= k2, "tau {tau}: {k5} > {k2}");
        }
        for a in [1.0, 4.0, 10.0] {
            let f = |x: f64| x / (x + a);
            assert!(
                select_k(&curve(&ks, f), 5) <= select_k(&curve(&ks, f), 2),
                "a {a}"
            );
        }
    }

    #[test]
    fn identical_curves_give_identical_results() {
        let c = curve(&range(2, 30, 1), |x| (x / 3.0).ln());
        assert_eq!(find_knee(&c, 3).unwrap(), find_knee(&c, 3).unwrap());
    }

    #[test]
    fn difference_csv_rows() {
        let r = find_knee(&curve(&range(2, 10, 1), |x| x.sqrt()), 2).unwrap();
        let csv = r.difference_csv();
        assert!(csv.starts_with("k,fitted,difference\n2,"));
        assert_eq!(csv.lines().count(), 10);
    }

    #[test]
    fn tied_difference_goes_to_the_smaller_k() {
        // difference (9k - k^2) / 81 peaks halfway between 4 and 5
        let ks: Vec<usize> = (0..=9).collect();
        let ys: Vec<f64> = ks.iter().map(|&k| 18.0 * k as f64 - (k * k) as f64).collect();
        let r = find_knee_points(&ks, &ys, 2).unwrap();
        assert_abs_diff_eq!(r.difference_curve[4], r.difference_curve[5], epsilon = 1e-12);
        assert_eq!(r.k_prime, Some(4));
    }
}
