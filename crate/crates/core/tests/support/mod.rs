//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Solution of the SVM dual from the interior-point oracle.
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

pub fn gaussian_kernel(rows: &[Vec<f64>], gamma: f64) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d: f64 = rows[i]
            .iter()
            .zip(&rows[j])
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        (-gamma * d).exp()
    })
}

/// Dense primal-dual interior-point solve of
/// `min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a <= C`.
pub fn svm_dual_ipm(kernel: &DMatrix<f64>, y: &[f64], c: f64) -> QpSolution {
    let n = y.len();
    let yv = DVector::from_column_slice(y);
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * kernel[(i, j)]);
    let e = DVector::from_element(n, 1.0);

    let mut a = DVector::from_element(n, c / 2.0);
    let mut z = DVector::from_element(n, 1.0);
    let mut w = DVector::from_element(n, 1.0);
    let mut nu = 0.0;

    for _ in 0..200 {
        let slack = a.map(|v| c - v);
        let gap = a.dot(&z) + slack.dot(&w);
        let rd = &q * &a - &e - &z + &w + &yv * nu;
        let rp = yv.dot(&a);
        if gap < 1e-13 * n as f64 && rd.norm() < 1e-12 && rp.abs() < 1e-12 {
            break;
        }
        let mu = 0.1 * gap / (2 * n) as f64;

        let mut m = DMatrix::zeros(n + 1, n + 1);
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = q[(i, j)];
            }
            m[(i, i)] += z[i] / a[i] + w[i] / slack[i];
            m[(i, n)] = y[i];
            m[(n, i)] = y[i];
            rhs[i] = -rd[i] + (mu - a[i] * z[i]) / a[i] - (mu - slack[i] * w[i]) / slack[i];
        }
        rhs[n] = -rp;
        let sol = m.lu().solve(&rhs).expect("KKT system is nonsingular");
        let da = sol.rows(0, n).into_owned();
        let dnu = sol[n];
        let dz = DVector::from_fn(n, |i, _| (mu - a[i] * z[i] - z[i] * da[i]) / a[i]);
        let dw = DVector::from_fn(n, |i, _| (mu - slack[i] * w[i] + w[i] * da[i]) / slack[i]);

        // fraction to the boundary
        let mut step: f64 = 1.0;
        for i in 0..n {
            if da[i] < 0.0 {
                step = step.min(-0.99 * a[i] / da[i]);
            }
            if da[i] > 0.0 {
                step = step.min(0.99 * slack[i] / da[i]);
            }
            if dz[i] < 0.0 {
                step = step.min(-0.99 * z[i] / dz[i]);
            }
            if dw[i] < 0.0 {
                step = step.min(-0.99 * w[i] / dw[i]);
            }
        }
        a += &da * step;
        z += &dz * step;
        w += &dw * step;
        nu += dnu * step;
    }

    let objective = 0.5 * a.dot(&(&q * &a)) - a.sum();
    // offset from margin support vectors; without any, the middle of the
    // interval the KKT conditions leave for it
    let f_no_bias = |i: usize| (0..n).map(|j| a[j] * y[j] * kernel[(j, i)]).sum::<f64>();
    let eps = 1e-6 * c;
    let free: Vec<usize> = (0..n).filter(|&i| a[i] > eps && a[i] < c - eps).collect();
    let bias = if free.is_empty() {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..n {
            // y_i (g_i + b) >= 1 at the lower bound, <= 1 at the upper bound
            let target = y[i] - f_no_bias(i);
            let at_lower = a[i] <= eps;
            if (y[i] > 0.0) == at_lower {
                lo = lo.max(target);
            } else {
                hi = hi.min(target);
            }
        }
        if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            -nu
        }
    } else {
        free.iter().map(|&i| y[i] - f_no_bias(i)).sum::<f64>() / free.len() as f64
    };
    QpSolution {
        alpha: a.iter().copied().collect(),
        bias,
        objective,
    }
}

pub fn oracle_decision(
    rows: &[Vec<f64>],
    y: &[f64],
    sol: &QpSolution,
    gamma: f64,
    x: &[f64],
) -> f64 {
    rows.iter()
        .zip(y)
        .zip(&sol.alpha)
        .map(|((r, yi), a)| {
            let d: f64 = r.iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
            a * yi * (-gamma * d).exp()
        })
        .sum::<f64>()
        + sol.bias
}

/// Textbook one-way ANOVA with two passes: grand and group means first,
/// then the between and within sums of squares.
pub fn anova_two_pass(values: &[f64], group: &[bool]) -> f64 {
    let n = values.len() as f64;
    let grand = values.iter().sum::<f64>() / n;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in [false, true] {
        let members: Vec<f64> = values
            .iter()
            .zip(group)
            .filter(|(_, &m)| m == g)
            .map(|(&v, _)| v)
            .collect();
        let k = members.len() as f64;
        let mean = members.iter().sum::<f64>() / k;
        ssb += k * (mean - grand).powi(2);
        ssw += members.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    (ssb / 1.0) / (ssw / (n - 2.0))
}
