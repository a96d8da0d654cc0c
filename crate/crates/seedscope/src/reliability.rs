//! Single-seed self-estimation diagnostics and the statistics linking
//! local metric variance to single-seed error.
//!
//! The rel-RMSE and P(+-10%) of a single draw from R repeated runs are
//! computed in closed form over the empirical distribution, which is the
//! infinite-resample limit of drawing one run with replacement.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// One (method, dataset, n) cell of the joined reliability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub method: String,
    pub dataset: String,
    pub n: usize,
    /// Across-run metric variance at this cell (unbiased form, matching
    /// the trajectory module).
    pub local_variance: f64,
    /// Root-mean-square relative deviation of one run from the run mean
    /// (population variance inside, forced by the resampling definition).
    pub rel_rmse: f64,
    /// Probability a single run lands within 10% of the run mean,
    /// boundary inclusive.
    pub p_within_10: f64,
    pub mean_metric: f64,
}

/// Closed-form single-seed summary of R metric values.
///
/// `rel_rmse = sqrt((1/R) sum (c_r - mean)^2) / mean` and
/// `p_within_10 = #{r : |c_r - mean| / mean <= 0.1} / R`. Rows with a
/// non-positive mean are excluded upstream (relative measures undefined).
pub fn single_seed_summary(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Analysis(format!(
            "single-seed summary needs >= 2 values, got {}",
            values.len()
        )));
    }
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if mean <= 0.0 {
        return Err(Error::Analysis(format!(
            "single-seed summary needs a positive mean, got {mean}"
        )));
    }
    let pop_var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r;
    let rel_rmse = pop_var.sqrt() / mean;
    let within = values
        .iter()
        .filter(|&&v| ((v - mean) / mean).abs() <= 0.1)
        .count();
    Ok((rel_rmse, within as f64 / r))
}

/// Average ranks with ties sharing the mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN in rank input"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0; // 1-based average rank
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with a two-sided p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: f64,
    /// Two-sided p from the t approximation with k-2 degrees of freedom;
    /// reported as 1e-15 when |rho| = 1 (the statistic diverges).
    pub p_value: f64,
    pub pair_count: usize,
}

/// Spearman correlation: Pearson correlation of average ranks, p-value via
/// `t = rho sqrt((k-2)/(1-rho^2))` on k-2 degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationReport> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Analysis(format!(
            "spearman needs two equal-length inputs of >= 3 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::Analysis("spearman undefined for constant input".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let k = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / k;
    let my = ry.iter().sum::<f64>() / k;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let rho = sxy / (sxx * syy).sqrt();

    let p_value = if rho.abs() >= 1.0 - 1e-13 {
        1e-15
    } else {
        let t = rho * ((k - 2.0) / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, k - 2.0).expect("valid dof");
        (2.0 * (1.0 - dist.cdf(t.abs()))).max(1e-15)
    };
    Ok(CorrelationReport {
        rho,
        p_value,
        pair_count: x.len(),
    })
}

/// One-sided Mann-Whitney p-value for the alternative "a stochastically
/// greater than b". Normal approximation with tie-corrected variance and
/// continuity correction.
pub fn mann_whitney_one_sided(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "both samples must be non-empty");
    let n1 = a.len() as f64;
    let n2 = b.len() as f64;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;

    let n = n1 + n2;
    // Tie correction: subtract sum(t^3 - t) over tie groups.
    let mut sorted = pooled.clone();
    sorted.sort_by(|p, q| p.partial_cmp(q).expect("NaN in test input"));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let mean = n1 * n2 / 2.0;
    if var <= 0.0 {
        // All observations tied: no evidence either way.
        return 0.5;
    }
    let z = (u - mean - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    1.0 - normal.cdf(z)
}

/// Quartile comparison of single-seed error by local variance rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileReport {
    /// Mean rel-RMSE per local-variance quartile, Q1 (lowest) to Q4.
    pub quartile_means: [f64; 4],
    pub high_var_mean: f64,
    pub rest_mean: f64,
    pub ratio: f64,
    /// One-sided Mann-Whitney p for Q4 rel-RMSE > rest.
    pub mw_p: f64,
    pub row_count: usize,
}

impl QuartileReport {
    /// Whether mean rel-RMSE increases (weakly) across quartiles.
    pub fn quartiles_non_decreasing(&self) -> bool {
        self.quartile_means.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Rank rows by local variance, split into four rank quartiles (Q4 is the
/// top `ceil(count/4)` rows), and compare Q4 rel-RMSE against the rest.
pub fn quartile_analysis(rows: &[ReliabilityRow]) -> Result<QuartileReport> {
    if rows.len() < 8 {
        return Err(Error::Analysis(format!(
            "quartile analysis needs >= 8 rows, got {}",
            rows.len()
        )));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .local_variance
            .partial_cmp(&rows[b].local_variance)
            .expect("NaN local variance")
            .then(a.cmp(&b)) // ties by stable rank order
    });
    let k = rows.len();
    let boundary = |q: usize| q * k / 4; // Q4 size = k - floor(3k/4) = ceil(k/4)
    let mut quartile_means = [0.0; 4];
    for q in 0..4 {
        let slice = &order[boundary(q)..boundary(q + 1)];
        quartile_means[q] =
            slice.iter().map(|&i| rows[i].rel_rmse).sum::<f64>() / slice.len() as f64;
    }
    let top: Vec<f64> = order[boundary(3)..].iter().map(|&i| rows[i].rel_rmse).collect();
    let rest: Vec<f64> = order[..boundary(3)].iter().map(|&i| rows[i].rel_rmse).collect();
    let high_var_mean = top.iter().sum::<f64>() / top.len() as f64;
    let rest_mean = rest.iter().sum::<f64>() / rest.len() as f64;
    Ok(QuartileReport {
        quartile_means,
        high_var_mean,
        rest_mean,
        ratio: high_var_mean / rest_mean,
        mw_p: mann_whitney_one_sided(&top, &rest),
        row_count: k,
    })
}

/// Fixed-effects regression of log rel-RMSE on log local variance with
/// dataset and method dummies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEffectsFit {
    pub slope: f64,
    pub std_error: f64,
    /// `slope +- 1.96 * SE`.
    pub ci95: (f64, f64),
    /// Dummy coefficients, keyed by `dataset:<name>` / `method:<name>`
    /// (one reference level per factor dropped).
    pub dummies: Vec<(String, f64)>,
    pub row_count: usize,
}

/// Least squares of `log(rel_rmse) ~ log(local_variance) + dataset dummies
/// + method dummies`, SE from `sigma_hat^2 (X^T X)^{-1}`.
pub fn fixed_effects_fit(rows: &[ReliabilityRow]) -> Result<FixedEffectsFit> {
    if rows.iter().any(|r| r.rel_rmse <= 0.0 || r.local_variance <= 0.0) {
        return Err(Error::Analysis(
            "fixed-effects fit requires positive rel_rmse and local_variance".into(),
        ));
    }
    let mut datasets: Vec<&str> = rows.iter().map(|r| r.dataset.as_str()).collect();
    datasets.sort_unstable();
    datasets.dedup();
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    if datasets.len() < 2 && methods.len() < 2 && rows.len() < 3 {
        return Err(Error::Analysis(
            "fixed-effects fit needs at least 2 datasets or methods represented, or 3 rows".into(),
        ));
    }

    // Columns: intercept, log local variance, then dummies with the first
    // level of each factor as reference.
    let mut names: Vec<String> = vec!["intercept".into(), "log_local_variance".into()];
    names.extend(datasets.iter().skip(1).map(|d| format!("dataset:{d}")));
    names.extend(methods.iter().skip(1).map(|m| format!("method:{m}")));
    let p = names.len();
    let k = rows.len();
    if k <= p {
        return Err(Error::Analysis(format!(
            "fixed-effects fit needs more rows ({k}) than parameters ({p})"
        )));
    }

    let mut design = vec![0.0; k * p];
    let mut response = vec![0.0; k];
    for (i, row) in rows.iter().enumerate() {
        let x = &mut design[i * p..(i + 1) * p];
        x[0] = 1.0;
        x[1] = row.local_variance.ln();
        if let Some(j) = datasets.iter().position(|d| *d == row.dataset).filter(|&j| j > 0) {
            x[1 + j] = 1.0;
        }
        if let Some(j) = methods.iter().position(|m| *m == row.method).filter(|&j| j > 0) {
            x[1 + datasets.len() - 1 + j] = 1.0;
        }
        response[i] = row.rel_rmse.ln();
    }

    // Normal equations with Gauss-Jordan inverse of X^T X.
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for i in 0..k {
        let x = &design[i * p..(i + 1) * p];
        for a in 0..p {
            xty[a] += x[a] * response[i];
            for b in 0..p {
                xtx[a * p + b] += x[a] * x[b];
            }
        }
    }
    let inverse = invert(&xtx, p).map_err(|col| {
        Error::RankDeficient(vec![names.get(col).cloned().unwrap_or_else(|| format!("col{col}"))])
    })?;

    let mut beta = vec![0.0; p];
    for a in 0..p {
        for b in 0..p {
            beta[a] += inverse[a * p + b] * xty[b];
        }
    }
    let mut ss_res = 0.0;
    for i in 0..k {
        let x = &design[i * p..(i + 1) * p];
        let fitted: f64 = x.iter().zip(&beta).map(|(xi, bi)| xi * bi).sum();
        ss_res += (response[i] - fitted) * (response[i] - fitted);
    }
    let sigma2 = ss_res / (k - p) as f64;
    let se = (sigma2 * inverse[p + 1]).sqrt(); // diagonal entry of the slope column

    let slope = beta[1];
    let dummies = names
        .iter()
        .zip(&beta)
        .skip(2)
        .map(|(n, &b)| (n.clone(), b))
        .collect();
    Ok(FixedEffectsFit {
        slope,
        std_error: se,
        ci95: (slope - 1.96 * se, slope + 1.96 * se),
        dummies,
        row_count: k,
    })
}

/// Gauss-Jordan inverse; `Err(column)` on a vanishing pivot.
fn invert(matrix: &[f64], p: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut a = matrix.to_vec();
    let mut inv = vec![0.0; p * p];
    for i in 0..p {
        inv[i * p + i] = 1.0;
    }
    for col in 0..p {
        // Partial pivot.
        let mut pivot = col;
        for row in (col + 1)..p {
            if a[row * p + col].abs() > a[pivot * p + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * p + col].abs() < 1e-10 {
            return Err(col);
        }
        if pivot != col {
            for j in 0..p {
                a.swap(col * p + j, pivot * p + j);
                inv.swap(col * p + j, pivot * p + j);
            }
        }
        let diag = a[col * p + col];
        for j in 0..p {
            a[col * p + j] /= diag;
            inv[col * p + j] /= diag;
        }
        for row in 0..p {
            if row != col {
                let factor = a[row * p + col];
                if factor != 0.0 {
                    for j in 0..p {
                        a[row * p + j] -= factor * a[col * p + j];
                        inv[row * p + j] -= factor * inv[col * p + j];
                    }
                }
            }
        }
    }
    Ok(inv)
}
