//! One-way ANOVA F scores for two groups and top-k selection.

use crate::error::{Error, Result};

#[derive(Default, Clone, Copy)]
struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    #[inline]
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }
}

/// Per-feature F statistic with `g = 2` groups. `group` marks membership in
/// the second group.
///
/// Zero within-group variance gives `+inf` when the group means differ and 0
/// when they coincide.
pub fn anova_f(rows: &[&[f64]], group: &[bool]) -> Result<Vec<f64>> {
    if rows.len() != group.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: group.len(),
        });
    }
    let n1 = group.iter().filter(|&&g| g).count();
    let n0 = group.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass);
    }
    let d = rows[0].len();
    let mut stats = vec![[Running::default(); 2]; d];
    for (row, &g) in rows.iter().zip(group) {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        for (s, &x) in stats.iter_mut().zip(row.iter()) {
            s[g as usize].push(x);
        }
    }
    let n = (n0 + n1) as f64;
    let df_within = n - 2.0;
    Ok(stats
        .iter()
        .map(|[a, b]| {
            let gap = a.mean - b.mean;
            let ssb = a.n * b.n / n * gap * gap;
            let ssw = a.m2 + b.m2;
            if ssw <= 0.0 || df_within <= 0.0 {
                if ssb > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                ssb / (ssw / df_within)
            }
        })
        .collect())
}

/// Indices of the `k` highest scores in increasing index order; ties prefer
/// the lower index and NaN ranks last.
pub fn select_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let key = |i: usize| {
        let s = scores[i];
        if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            s
        }
    };
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order.truncate(k.min(scores.len()));
    order.sort_unstable();
    order
}
