//! Brute-force numerical oracles for test suites.
//!
//! Everything here is deliberately naive: explicit Gauss-Jordan inverses,
//! cofactor determinants, power iteration, quadrature-based quantile
//! inversion. None of it shares code with the main library, so agreement
//! between the two is meaningful evidence rather than a tautology.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Explicit matrix inverse by Gauss-Jordan elimination with partial pivoting.
///
/// Panics on singular input; oracle inputs are expected to be well-conditioned.
pub fn naive_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "naive_inverse: square matrix required");
    let mut a = m.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        assert!(a[(pivot_row, col)].abs() > 1e-300, "naive_inverse: singular matrix");
        if pivot_row != col {
            a.swap_rows(pivot_row, col);
            inv.swap_rows(pivot_row, col);
        }
        let pivot = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= pivot;
            inv[(col, j)] /= pivot;
        }
        for i in 0..n {
            if i != col {
                let factor = a[(i, col)];
                for j in 0..n {
                    a[(i, j)] -= factor * a[(col, j)];
                    inv[(i, j)] -= factor * inv[(col, j)];
                }
            }
        }
    }
    inv
}

/// Determinant by cofactor expansion along the first row. O(n!) on purpose;
/// only sane for the small matrices tests use.
pub fn naive_det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "naive_det: square matrix required");
    if n == 1 {
        return m[(0, 0)];
    }
    let mut det = 0.0;
    for j in 0..n {
        let minor = minor_matrix(m, 0, j);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        det += sign * m[(0, j)] * naive_det(&minor);
    }
    det
}

fn minor_matrix(m: &DMatrix<f64>, drop_row: usize, drop_col: usize) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n - 1, n - 1, |i, j| {
        let si = if i < drop_row { i } else { i + 1 };
        let sj = if j < drop_col { j } else { j + 1 };
        m[(si, sj)]
    })
}

/// Top eigenvector/eigenvalue of a symmetric positive semidefinite matrix by
/// power iteration. Returns (eigenvalue, unit eigenvector).
pub fn power_iteration_top(m: &DMatrix<f64>, max_iter: usize, tol: f64) -> (f64, DVector<f64>) {
    let n = m.nrows();
    // Deterministic start with all-positive, slightly uneven components so it
    // is never orthogonal to the top eigenvector by accident.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * (i as f64 + 1.0));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let norm = w.norm();
        assert!(norm > 0.0, "power_iteration_top: zero vector encountered");
        let v_next = w / norm;
        let lambda_next = (m * &v_next).dot(&v_next);
        let delta = (&v_next - &v).norm().min((&v_next + &v).norm());
        v = v_next;
        lambda = lambda_next;
        if delta < tol {
            break;
        }
    }
    (lambda, v)
}

/// Quadratic form x' M^{-1} x evaluated through the explicit naive inverse.
pub fn naive_quadratic_form(x: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    let inv = naive_inverse(m);
    (&inv * x).dot(x)
}

// ---------------------------------------------------------------------------
// Quantile oracles: bisection over a quadrature-evaluated CDF.
// ---------------------------------------------------------------------------

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n_half: usize) -> f64 {
    let n = 2 * n_half;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// ln Gamma via the Lanczos approximation (g = 7, n = 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn student_t_pdf(x: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln();
    (ln_c - (nu + 1.0) / 2.0 * (1.0 + x * x / nu).ln()).exp()
}

/// CDF of a standard symmetric density by integrating the pdf from 0.
fn symmetric_cdf<F: Fn(f64) -> f64>(pdf: &F, x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let steps = ((x.abs() * 400.0).ceil() as usize).clamp(400, 40_000);
    let tail = simpson(pdf, 0.0, x.abs(), steps);
    if x > 0.0 {
        0.5 + tail
    } else {
        0.5 - tail
    }
}

fn bisect_quantile<F: Fn(f64) -> f64>(cdf: &F, q: f64) -> f64 {
    assert!(q > 0.0 && q < 1.0);
    let (mut lo, mut hi) = (-1.0, 1.0);
    while cdf(lo) > q {
        lo *= 2.0;
        assert!(lo > -1e6);
    }
    while cdf(hi) < q {
        hi *= 2.0;
        assert!(hi < 1e6);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal quantile via quadrature + bisection.
pub fn normal_quantile_oracle(q: f64) -> f64 {
    bisect_quantile(&|x| symmetric_cdf(&std_normal_pdf, x), q)
}

/// Standard Student-t quantile via quadrature + bisection.
pub fn student_t_quantile_oracle(q: f64, nu: f64) -> f64 {
    assert!(nu > 0.0);
    let pdf = move |x: f64| student_t_pdf(x, nu);
    bisect_quantile(&|x| symmetric_cdf(&pdf, x), q)
}

// ---------------------------------------------------------------------------
// Random test-model generation.
// ---------------------------------------------------------------------------

/// A randomly generated location vector plus SPD shape matrix for tests.
pub struct RandomSpdModel {
    pub mu: DVector<f64>,
    pub omega: DMatrix<f64>,
}

/// Draws a random SPD matrix as A Aᵀ + diagonal shift, with entries scaled so
/// variances sit in a finance-plausible range. Deterministic per seed.
pub fn random_spd_model(dim: usize, seed: u64) -> RandomSpdModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    let mut omega = &a * a.transpose();
    for i in 0..dim {
        omega[(i, i)] += 0.5 + rng.gen_range(0.0..0.5);
    }
    let mu = DVector::from_fn(dim, |_, _| rng.gen_range(-0.5..0.5));
    RandomSpdModel { mu, omega }
}

/// Splits 0..dim into two disjoint non-empty index sets, deterministic per seed.
pub fn random_split(dim: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!(dim >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1F7_5EED);
    let n_x = rng.gen_range(1..dim);
    let mut indices: Vec<usize> = (0..dim).collect();
    // Fisher-Yates
    for i in (1..dim).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let idx_x = indices[..n_x].to_vec();
    let idx_y = indices[n_x..].to_vec();
    (idx_x, idx_y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_recovers_identity() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let inv = naive_inverse(&m);
        let id = &m * &inv;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn det_matches_hand_value() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((naive_det(&m) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn power_iteration_finds_dominant_axis() {
        let m = DMatrix::from_row_slice(2, 2, &[5.0, 0.0, 0.0, 1.0]);
        let (lambda, v) = power_iteration_top(&m, 10_000, 1e-14);
        assert!((lambda - 5.0).abs() < 1e-10);
        assert!(v[0].abs() > 0.999999);
    }

    #[test]
    fn normal_quantile_oracle_median_and_tail() {
        assert!((normal_quantile_oracle(0.5)).abs() < 1e-10);
        // Classic tail value: Phi(1.959964) ~ 0.975.
        assert!((normal_quantile_oracle(0.975) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn student_t_quantile_oracle_matches_known_value() {
        // t(1) is Cauchy: 0.75 quantile is exactly 1.
        assert!((student_t_quantile_oracle(0.75, 1.0) - 1.0).abs() < 1e-8);
    }
}
