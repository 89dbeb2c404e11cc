//! Reference implementations used as test oracles. Written from the
//! textbook definitions and deliberately independent of the library's
//! solver, standardization and explainer code paths.
#![allow(dead_code)]

use martlens::discretize::Discretization;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Gaussian elimination with full pivoting. `None` when a pivot vanishes.
pub fn solve_full_pivot(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pi, mut pj, mut best) = (k, k, 0.0);
        for (i, row) in a.iter().enumerate().skip(k) {
            for (j, v) in row.iter().enumerate().skip(k) {
                if v.abs() > best {
                    best = v.abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        if best < 1e-300 {
            return None;
        }
        a.swap(k, pi);
        b.swap(k, pi);
        for row in a.iter_mut() {
            row.swap(k, pj);
        }
        perm.swap(k, pj);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut y = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * y[j]).sum();
        y[k] = (b[k] - s) / a[k][k];
    }
    let mut x = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = y[k];
    }
    Some(x)
}

pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        cols.push(solve_full_pivot(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// Weighted ridge through the normal equations on `[1 | x]`, intercept
/// unpenalized. Returns `(intercept, coefficients)`.
pub fn ridge_normal_equations(x: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Option<(f64, Vec<f64>)> {
    let d = x[0].len();
    let p = d + 1;
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for (r, (&yi, &wi)) in x.iter().zip(y.iter().zip(w)) {
        let row: Vec<f64> = std::iter::once(1.0).chain(r.iter().copied()).collect();
        for i in 0..p {
            b[i] += wi * row[i] * yi;
            for j in 0..p {
                a[i][j] += wi * row[i] * row[j];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate().skip(1) {
        row[i] += lambda;
    }
    let beta = solve_full_pivot(a, b)?;
    Some((beta[0], beta[1..].to_vec()))
}

/// Column means and sample (n − 1) standard deviations.
pub fn column_moments(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| compensated_sum(x.iter().map(|r| r[j])) / n).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| (compensated_sum(x.iter().map(|r| (r[j] - mean[j]).powi(2))) / (n - 1.0)).sqrt())
        .collect();
    (mean, sd)
}

/// Ridge with the penalty on standardized coefficients, mapped back to
/// original units.
pub fn standardized_ridge(x: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Option<(f64, Vec<f64>)> {
    let (mean, sd) = column_moments(x);
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]).collect())
        .collect();
    let (b0, bz) = ridge_normal_equations(&z, y, w, lambda)?;
    let coefs: Vec<f64> = bz.iter().zip(&sd).map(|(b, s)| b / s).collect();
    let intercept = b0 - coefs.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
    Some((intercept, coefs))
}

/// OLS estimates (intercept first) and their classical standard errors
/// `sqrt(σ̂² · diag((XᵀX)⁻¹))` with `σ̂² = RSS / (n − p)`.
pub fn ols_with_standard_errors(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let p = x[0].len() + 1;
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, &yi) in rows.iter().zip(y) {
        for i in 0..p {
            xty[i] += r[i] * yi;
            for j in 0..p {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    let beta = solve_full_pivot(xtx.clone(), xty).expect("full-rank design");
    let rss = compensated_sum(
        rows.iter()
            .zip(y)
            .map(|(r, &yi)| (yi - r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).powi(2)),
    );
    let sigma2 = rss / (n - p) as f64;
    let inv = invert(&xtx).expect("invertible");
    let se = (0..p).map(|i| (sigma2 * inv[i][i]).sqrt()).collect();
    (beta, se)
}

/// rmse, mae and r² from their definitions.
pub fn reference_metrics(pred: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let mean = compensated_sum(y.iter().copied()) / n;
    let ss_res = compensated_sum(pred.iter().zip(y).map(|(p, t)| (t - p).powi(2)));
    let ss_tot = compensated_sum(y.iter().map(|t| (t - mean).powi(2)));
    let mae = compensated_sum(pred.iter().zip(y).map(|(p, t)| (t - p).abs())) / n;
    ((ss_res / n).sqrt(), mae, 1.0 - ss_res / ss_tot)
}

/// Population version of the local surrogate for a linear black box
/// `f(x) = b + Σ c_j x_j` under independent per-feature bin sampling.
///
/// Feature j matches the instance's bin with probability `p_j` (the bin's
/// training frequency); given a match its value is uniform on the bin's
/// range, otherwise uniform on a frequency-weighted other bin. Hence
/// `E[f | z]` is affine in `z`, and the kernel-weighted least-squares
/// surrogate is obtained exactly by enumerating all `2^d` patterns with
/// weight `P(z) · exp(−zeros(z) / width²)`. A ridge penalty `λ` over `N`
/// samples corresponds to `λ / N` here. Returns per-feature coefficients.
pub fn exact_lime_surrogate(
    disc: &Discretization,
    instance_bins: &[usize],
    coefs: &[f64],
    kernel_width: f64,
    lambda_per_sample: f64,
) -> Vec<f64> {
    let d = coefs.len();
    let mut p_match = vec![0.0; d];
    let mut mean_match = vec![0.0; d];
    let mut mean_other = vec![0.0; d];
    for (j, fb) in disc.features.iter().enumerate() {
        let total: usize = fb.frequencies.iter().sum();
        let mid = |b: usize| 0.5 * (fb.ranges[b].min + fb.ranges[b].max);
        let own = instance_bins[j];
        p_match[j] = fb.frequencies[own] as f64 / total as f64;
        mean_match[j] = mid(own);
        let other: usize = total - fb.frequencies[own];
        mean_other[j] = (0..fb.frequencies.len())
            .filter(|&b| b != own)
            .map(|b| fb.frequencies[b] as f64 * mid(b))
            .sum::<f64>()
            / other as f64;
    }

    let p = d + 1;
    let mut a = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    for mask in 0u32..(1 << d) {
        let z: Vec<f64> = (0..d).map(|j| f64::from((mask >> j) & 1)).collect();
        let zeros = z.iter().filter(|&&v| v == 0.0).count() as f64;
        let prob: f64 = (0..d)
            .map(|j| if z[j] == 1.0 { p_match[j] } else { 1.0 - p_match[j] })
            .product();
        let w = prob * (-zeros / (kernel_width * kernel_width)).exp();
        let target: f64 = (0..d)
            .map(|j| coefs[j] * if z[j] == 1.0 { mean_match[j] } else { mean_other[j] })
            .sum();
        let row: Vec<f64> = std::iter::once(1.0).chain(z.iter().copied()).collect();
        for i in 0..p {
            rhs[i] += w * row[i] * target;
            for k in 0..p {
                a[i][k] += w * row[i] * row[k];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate().skip(1) {
        row[i] += lambda_per_sample;
    }
    solve_full_pivot(a, rhs).expect("non-degenerate bins")[1..].to_vec()
}

/// Seeded weighted-ridge problem: `(x, y, w)` with n rows and d columns.
pub fn random_problem(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-1.0..2.0))).collect();
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| scales.iter().map(|s| s * rng.random_range(-1.0..1.0) + s).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| 3.0 + r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-1.0..1.0))
        .collect();
    let w = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    (x, y, w)
}
