//! Reference computations for the test suites.
//!
//! Everything here is deliberately slow and direct: numerical quadrature of
//! densities, bisection, brute-force sums over every cell, Jacobi rotations.
//! Nothing in this crate calls into `rmpower-core`.

pub mod fixtures;

use std::f64::consts::PI;

/// Lanczos approximation (g = 7, n = 9). Only used for density normalisers.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
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
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

// Gauss-Kronrod 7/15 nodes and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (val, err) = gk15(f, a, b);
        if err <= tol || depth > 60 || (b - a).abs() < 1e-300 {
            return val;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(&f, a, b, tol, 0)
}

/// Beta(a, b) density.
pub fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp()
}

/// I_x(a, b) by quadrature. Substitutes u^k = x to tame the endpoint
/// singularity when a < 1.
pub fn inc_beta_quad(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = if a < 1.0 { (1.0 / a).ceil() } else { 1.0 };
    let upper = x.powf(1.0 / k);
    integrate(
        |u| {
            let y = u.powf(k);
            beta_pdf(y, a, b) * k * u.powf(k - 1.0)
        },
        0.0,
        upper,
        1e-14,
    )
}

/// Central F density.
pub fn f_pdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln = 0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln()
        - 0.5 * (d1 + d2) * (1.0 + d1 * x / d2).ln()
        - ln_beta(0.5 * d1, 0.5 * d2);
    ln.exp()
}

/// Noncentral F density as a Poisson mixture of scaled central F densities,
/// summed from j = 0 far past the Poisson bulk.
pub fn noncentral_f_pdf(x: f64, d1: f64, d2: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return f_pdf(x, d1, d2);
    }
    let mu = 0.5 * lambda;
    let jmax = (mu + 40.0 * mu.sqrt() + 60.0) as usize;
    let mut total = 0.0;
    for j in 0..=jmax {
        let jf = j as f64;
        let w = (-mu + jf * mu.ln() - ln_gamma(jf + 1.0)).exp();
        let dj = d1 + 2.0 * jf;
        let scale = d1 / dj;
        total += w * scale * f_pdf(x * scale, dj, d2);
    }
    total
}

/// P(F <= x) for the (noncentral) F distribution by integrating its density.
/// Uses the substitution x = s^2 to remove the origin singularity for d1 < 2.
pub fn noncentral_f_cdf_quad(x: f64, d1: f64, d2: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let body = |s: f64| 2.0 * s * noncentral_f_pdf(s * s, d1, d2, lambda);
    // Split at the bulk so the adaptive rule sees the peak.
    let s_max = x.sqrt();
    let mid = s_max.min(1.0);
    let mut total = integrate(body, 0.0, mid, 1e-13);
    if s_max > mid {
        total += integrate(body, mid, s_max, 1e-13);
    }
    total
}

/// Chi-square CDF by integrating the density (with x = s^2 substitution).
pub fn chisq_cdf_quad(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * df;
    let lnorm = k * 2f64.ln() + ln_gamma(k);
    integrate(
        |s: f64| {
            let y = s * s;
            if y == 0.0 {
                return 0.0;
            }
            2.0 * s * ((k - 1.0) * y.ln() - 0.5 * y - lnorm).exp()
        },
        0.0,
        x.sqrt(),
        1e-14,
    )
}

/// Bisection inverse of a nondecreasing CDF on [lo, hi].
pub fn bisect_quantile<F: Fn(f64) -> f64>(cdf: F, prob: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sums of squares of a (possibly unbalanced) repeated-measures layout
/// computed by summing over every (group, subject, time) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteSs {
    pub total: f64,
    pub group: f64,
    pub subject: f64,
    pub time: f64,
    pub interaction: f64,
    pub error: f64,
}

/// `groups[k][i][j]` is the measurement of subject i of group k at time j.
pub fn brute_force_ss(groups: &[Vec<Vec<f64>>]) -> BruteSs {
    struct Cell {
        k: usize,
        i: usize,
        j: usize,
        y: f64,
    }
    let mut cells = Vec::new();
    for (k, g) in groups.iter().enumerate() {
        for (i, row) in g.iter().enumerate() {
            for (j, &y) in row.iter().enumerate() {
                cells.push(Cell { k, i, j, y });
            }
        }
    }
    let mean_where = |pred: &dyn Fn(&Cell) -> bool| {
        let (s, c) = cells
            .iter()
            .filter(|c| pred(c))
            .fold((0.0, 0usize), |(s, n), c| (s + c.y, n + 1));
        s / c as f64
    };
    let grand = mean_where(&|_| true);
    let mut out = BruteSs {
        total: 0.0,
        group: 0.0,
        subject: 0.0,
        time: 0.0,
        interaction: 0.0,
        error: 0.0,
    };
    for c in &cells {
        let (k, i, j) = (c.k, c.i, c.j);
        let yk = mean_where(&|d| d.k == k);
        let yki = mean_where(&|d| d.k == k && d.i == i);
        let ykj = mean_where(&|d| d.k == k && d.j == j);
        let yj = mean_where(&|d| d.j == j);
        out.total += (c.y - grand).powi(2);
        out.group += (yk - grand).powi(2);
        out.subject += (yki - yk).powi(2);
        out.time += (yj - grand).powi(2);
        out.interaction += (ykj - yk - yj + grand).powi(2);
        out.error += (c.y - ykj - yki + yk).powi(2);
    }
    out
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Orthonormal basis of the sum-to-zero subspace of R^t, built by
/// Gram-Schmidt on successive differences e_{j+1} - e_j. Columns are
/// returned as rows of the result.
pub fn difference_contrasts(t: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..t - 1 {
        let mut v = vec![0.0; t];
        v[j] = -1.0;
        v[j + 1] = 1.0;
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.into_iter().map(|x| x / norm).collect());
    }
    basis
}

/// Pooled within-group covariance projected onto the difference contrasts.
pub fn contrast_covariance(groups: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    let t = groups[0][0].len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let dof = (n - groups.len()) as f64;
    let mut s = vec![vec![0.0; t]; t];
    for g in groups {
        let means: Vec<f64> = (0..t)
            .map(|j| g.iter().map(|r| r[j]).sum::<f64>() / g.len() as f64)
            .collect();
        for r in g {
            for a in 0..t {
                for b in 0..t {
                    s[a][b] += (r[a] - means[a]) * (r[b] - means[b]) / dof;
                }
            }
        }
    }
    let c = difference_contrasts(t);
    let p = t - 1;
    let mut m = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..p {
            let mut acc = 0.0;
            for x in 0..t {
                for y in 0..t {
                    acc += c[a][x] * s[x][y] * c[b][y];
                }
            }
            m[a][b] = acc;
        }
    }
    m
}

/// Mauchly's W and the Greenhouse-Geisser epsilon from Jacobi eigenvalues.
pub fn mauchly_w_and_gg(groups: &[Vec<Vec<f64>>]) -> (f64, f64) {
    let ev = jacobi_eigenvalues(&contrast_covariance(groups));
    let p = ev.len() as f64;
    let sum: f64 = ev.iter().sum();
    let prod: f64 = ev.iter().product();
    let sum_sq: f64 = ev.iter().map(|x| x * x).sum();
    (prod / (sum / p).powf(p), sum * sum / (p * sum_sq))
}

/// Tie-corrected Friedman statistic via the rank-variance form
/// Q = (t-1) * sum_j (R_j - n(t+1)/2)^2 / (sum r^2 - n t (t+1)^2 / 4),
/// with mid-ranks obtained by pairwise comparison counts.
pub fn friedman_statistic(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let t = rows[0].len();
    let tf = t as f64;
    let mut col = vec![0.0; t];
    let mut sum_sq = 0.0;
    for r in rows {
        for j in 0..t {
            let less = r.iter().filter(|&&v| v < r[j]).count() as f64;
            let equal = r.iter().filter(|&&v| v == r[j]).count() as f64;
            let rank = less + (equal + 1.0) / 2.0;
            col[j] += rank;
            sum_sq += rank * rank;
        }
    }
    let centre = n * (tf + 1.0) / 2.0;
    let num: f64 = col.iter().map(|c| (c - centre).powi(2)).sum();
    (tf - 1.0) * num / (sum_sq - n * tf * (tf + 1.0).powi(2) / 4.0)
}
