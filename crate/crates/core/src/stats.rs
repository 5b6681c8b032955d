//! Statistical primitives: Student-t and χ² tails, McNemar's test,
//! percentiles and the power-iteration PCA used by the semantic level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 500;

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - inc_beta(1.0 - x, b, a);
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp() / a;

    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut f = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        f *= d * c;
        // odd step
        let num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    front * f
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let log_front = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // series for P
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..CF_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * CF_EPS {
                break;
            }
        }
        1.0 - sum * log_front.exp()
    } else {
        // continued fraction for Q
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / CF_TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=CF_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < CF_TINY {
                d = CF_TINY;
            }
            c = b + an / c;
            if c.abs() < CF_TINY {
                c = CF_TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < CF_EPS {
                break;
            }
        }
        log_front.exp() * h
    }
}

/// One-sided upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: u64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    if df < 1 {
        return Err(Error::invalid("student_t_sf: df must be >= 1"));
    }
    let v = df as f64;
    let tail = 0.5 * inc_beta(v / (v + t * t), v / 2.0, 0.5);
    Ok(if t >= 0.0 { tail } else { 1.0 - tail })
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    let half = 0.5 * gamma_q(0.5, z * z / 2.0);
    if z >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// Upper tail of χ² with one degree of freedom, `2·Φ̄(√x)`.
pub fn chi2_sf_df1(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::invalid(format!("chi2_sf_df1: x must be >= 0, got {x}")));
    }
    Ok(2.0 * normal_sf(x.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Method A correct, B wrong.
    pub b: u64,
    /// Method A wrong, B correct.
    pub c: u64,
    pub chi2: f64,
    pub p: f64,
}

/// Continuity-corrected McNemar test. The corrected numerator is clamped at
/// zero, so `b == c` gives χ² = 0 and p = 1.
pub fn mcnemar(b: u64, c: u64) -> McNemarResult {
    let n = b + c;
    if n == 0 {
        return McNemarResult { b, c, chi2: 0.0, p: 1.0 };
    }
    let diff = (b.abs_diff(c) as f64 - 1.0).max(0.0);
    let chi2 = diff * diff / n as f64;
    let p = chi2_sf_df1(chi2).expect("chi2 is non-negative").min(1.0);
    McNemarResult { b, c, chi2, p }
}

/// Linear-interpolation percentile with rank `h = (n − 1)·p/100`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty list"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::invalid(format!("percentile must be in [0, 100], got {p}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn mean_vector(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    let n = points.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Sample covariance (divisor `n − 1`) as a dense row-major `d × d` matrix.
pub fn covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = points.first().map_or(0, Vec::len);
    let mean = mean_vector(points);
    let mut cov = vec![vec![0.0; dim]; dim];
    let mut centered = vec![0.0; dim];
    for p in points {
        for ((c, x), m) in centered.iter_mut().zip(p).zip(&mean) {
            *c = x - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut cov[i];
            for j in i..dim {
                row[j] += ci * centered[j];
            }
        }
    }
    let denom = (points.len().saturating_sub(1)).max(1) as f64;
    for row in &mut cov {
        row.iter_mut().for_each(|v| *v /= denom);
    }
    // only the upper triangle was accumulated
    for i in 1..dim {
        let (upper, lower) = cov.split_at_mut(i);
        for (j, above) in upper.iter().enumerate() {
            lower[0][j] = above[i];
        }
    }
    cov
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let proj = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
    }
}

fn unit(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

pub const POWER_ITERATIONS: usize = 200;
const POWER_TOLERANCE: f64 = 1e-10;

/// Top-`k` principal axes of the sample covariance, by power iteration with
/// deflation. Once the remaining spectrum is numerically zero the basis is
/// completed with an arbitrary orthonormal set. An axis whose eigenvalue
/// estimate has not settled after [`POWER_ITERATIONS`] is an error.
pub fn principal_components(points: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    power_components(points, k, true)
}

/// Like [`principal_components`], but an unsettled axis is kept as it stands
/// after [`POWER_ITERATIONS`]. Close eigenvalues make individual axes slow to
/// settle while the subspace they span is already good, which is all a
/// projection needs.
pub fn principal_components_capped(points: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    power_components(points, k, false)
}

fn power_components(points: &[Vec<f64>], k: usize, strict: bool) -> Result<Vec<Vec<f64>>> {
    if points.len() < 2 {
        return Err(Error::invalid("principal_components needs at least 2 points"));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
    }
    if k > dim.min(points.len() - 1) {
        return Err(Error::invalid(format!(
            "k = {k} exceeds min(dim = {dim}, n - 1 = {})",
            points.len() - 1
        )));
    }
    let mut work = covariance(points);
    let total: f64 = (0..dim).map(|i| work[i][i]).sum();
    let floor = total.abs() * 1e-12;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let component = basis.len();
        // Start from the column with the largest remaining variance.
        let (start, diag) = (0..dim)
            .map(|i| (i, work[i][i]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("dim >= 1");
        if diag <= floor {
            complete_basis(&mut basis, dim, k);
            break;
        }
        let mut v: Vec<f64> = work.iter().map(|row| row[start]).collect();
        orthogonalize(&mut v, &basis);
        if unit(&mut v) <= floor {
            complete_basis(&mut basis, dim, k);
            break;
        }

        let mut lambda = f64::NAN;
        let mut converged = false;
        for _ in 0..POWER_ITERATIONS {
            let mut w = mat_vec(&work, &v);
            orthogonalize(&mut w, &basis);
            let next_lambda = dot(&v, &w);
            let norm = unit(&mut w);
            if norm <= floor {
                break;
            }
            let settled = (next_lambda - lambda).abs() <= POWER_TOLERANCE * next_lambda.abs();
            v = w;
            lambda = next_lambda;
            if settled {
                converged = true;
                break;
            }
        }
        if !converged {
            if lambda.is_nan() || lambda <= floor {
                complete_basis(&mut basis, dim, k);
                break;
            }
            if strict {
                return Err(Error::NonConvergence { component, iterations: POWER_ITERATIONS });
            }
        }
        // deflate
        for i in 0..dim {
            let vi = lambda * v[i];
            for j in 0..dim {
                work[i][j] -= vi * v[j];
            }
        }
        basis.push(v);
    }
    Ok(basis)
}

fn complete_basis(basis: &mut Vec<Vec<f64>>, dim: usize, k: usize) {
    for axis in 0..dim {
        if basis.len() >= k {
            return;
        }
        let mut e = vec![0.0; dim];
        e[axis] = 1.0;
        orthogonalize(&mut e, basis);
        orthogonalize(&mut e, basis);
        if unit(&mut e) > 1e-6 {
            basis.push(e);
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = m[i][j] - dot(&l[i][..j], &l[j][..j]);
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::invalid("matrix is not positive definite"));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; b.len()];
    for i in 0..b.len() {
        y[i] = (b[i] - dot(&l[i][..i], &y[..i])) / l[i][i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values frozen from scipy.stats.
    #[test]
    fn t_tail_matches_reference() {
        let cases = [
            (2.776, 4, 0.0250113891599882),
            (1.833, 9, 0.0500089700252915),
            (-1.5, 7, 0.911350756505015),
            (0.7, 1, 0.305599887785785),
            (3.2, 30, 0.00161930085597657),
            (6.324555320336759, 4, 0.0015991010761676528),
        ];
        for (t, df, want) in cases {
            let got = student_t_sf(t, df).unwrap();
            assert!((got - want).abs() < 1e-10, "t={t} df={df}: {got} vs {want}");
        }
        assert_eq!(student_t_sf(0.0, 3).unwrap(), 0.5);
        assert!(student_t_sf(f64::INFINITY, 3).is_err());
    }

    #[test]
    fn chi2_tail_matches_reference() {
        let cases = [
            (3.841, 0.0500136837639568),
            (6.635, 0.00999941957404254),
            (4.05, 0.0441713449084427),
            (0.5, 0.479500122186953),
        ];
        for (x, want) in cases {
            let got = chi2_sf_df1(x).unwrap();
            assert!((got - want).abs() < 1e-10, "x={x}: {got} vs {want}");
        }
        let far = chi2_sf_df1(40.0).unwrap();
        assert!((far / 2.53962858947086e-10 - 1.0).abs() < 1e-8);
        assert_eq!(chi2_sf_df1(0.0).unwrap(), 1.0);
        assert!(chi2_sf_df1(-1.0).is_err());
    }

    #[test]
    fn mcnemar_examples() {
        let r = mcnemar(15, 5);
        assert!((r.chi2 - 4.05).abs() < 1e-12);
        assert!((r.p - 0.0441713449084427).abs() < 1e-9);
        let tie = mcnemar(7, 7);
        assert_eq!((tie.chi2, tie.p), (0.0, 1.0));
        let none = mcnemar(0, 0);
        assert_eq!((none.chi2, none.p), (0.0, 1.0));
        let one = mcnemar(1, 0);
        assert_eq!((one.chi2, one.p), (0.0, 1.0));
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 50.0).unwrap(), 2.5);
        let xs = [4.0, -2.0, 9.5, 3.0];
        assert_eq!(percentile(&xs, 0.0).unwrap(), -2.0);
        assert_eq!(percentile(&xs, 100.0).unwrap(), 9.5);
        assert!(percentile(&[], 50.0).is_err());
        assert!(percentile(&xs, 101.0).is_err());
    }

    #[test]
    fn pca_recovers_line_direction() {
        let dir = [0.6, 0.8];
        let pts: Vec<Vec<f64>> =
            [-2.0, -0.5, 0.0, 1.0, 3.0].iter().map(|t| vec![1.0 + t * dir[0], -2.0 + t * dir[1]]).collect();
        let basis = principal_components(&pts, 1).unwrap();
        let align = dot(&basis[0], &dir).abs();
        assert!((align - 1.0).abs() < 1e-6, "{align}");
    }

    #[test]
    fn pca_isotropic_and_empty() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let basis = principal_components(&pts, 2).unwrap();
        assert_eq!(basis.len(), 2);
        // A full orthonormal basis reconstructs every point exactly.
        for p in &pts {
            let recon: Vec<f64> = (0..2)
                .map(|i| basis.iter().map(|b| dot(p, b) * b[i]).sum())
                .collect();
            assert!(recon.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-9));
        }
        assert!(dot(&basis[0], &basis[1]).abs() < 1e-8);
        assert!(principal_components(&pts, 0).unwrap().is_empty());
        assert!(principal_components(&pts[..1], 0).is_err());
        assert!(principal_components(&pts, 3).is_err());
    }

    #[test]
    fn pca_identical_points_completes_basis() {
        let pts = vec![vec![0.3, 0.4, 0.5]; 6];
        let basis = principal_components(&pts, 3).unwrap();
        assert_eq!(basis.len(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&basis[i], &basis[j]) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cholesky_solves() {
        let m = vec![vec![4.0, 2.0], vec![2.0, 3.0]];
        let l = cholesky(&m).unwrap();
        let y = forward_substitute(&l, &[2.0, 1.0]);
        // y·y = bᵀ M⁻¹ b with M⁻¹ = [[3, −2], [−2, 4]] / 8, which is 1 here
        assert!((dot(&y, &y) - 1.0).abs() < 1e-12);
        assert!(cholesky(&[vec![0.0]]).is_err());
    }
}
