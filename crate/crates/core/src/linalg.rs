//! Truncated SVD splitting, the single numerical kernel behind every rewrite.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::Matrix;

/// How many singular values an SVD split keeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruncationPolicy {
    /// Keep the full numerical rank: σᵢ > m·n·ε_mach·σ₁.
    Exact,
    /// Keep the fewest values whose discarded tail satisfies
    /// `sqrt(Σ_{i>k} σᵢ²) ≤ eps·‖A‖_F`.
    RelCutoff { eps: f64 },
    /// Keep at most `max_rank` values (and never beyond the numerical rank).
    MaxRank { max_rank: usize },
    /// Relative cutoff, then capped at `max_rank`.
    Capped { eps: f64, max_rank: usize },
}

impl TruncationPolicy {
    pub fn rel_cutoff(eps: f64) -> Result<Self> {
        TruncationPolicy::RelCutoff { eps }.validated()
    }

    pub fn max_rank(max_rank: usize) -> Result<Self> {
        TruncationPolicy::MaxRank { max_rank }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let eps_ok = |e: f64| e.is_finite() && e >= 0.0;
        match self {
            TruncationPolicy::Exact => Ok(self),
            TruncationPolicy::RelCutoff { eps } if eps_ok(eps) => Ok(self),
            TruncationPolicy::MaxRank { max_rank } if max_rank >= 1 => Ok(self),
            TruncationPolicy::Capped { eps, max_rank } if eps_ok(eps) && max_rank >= 1 => Ok(self),
            other => Err(invalid(format!("invalid truncation policy {other}: need eps >= 0 and rank >= 1"))),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, TruncationPolicy::Exact)
    }
}

impl fmt::Display for TruncationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TruncationPolicy::Exact => write!(f, "exact"),
            TruncationPolicy::RelCutoff { eps } => write!(f, "eps:{eps:e}"),
            TruncationPolicy::MaxRank { max_rank } => write!(f, "maxrank:{max_rank}"),
            TruncationPolicy::Capped { eps, max_rank } => write!(f, "eps:{eps:e},maxrank:{max_rank}"),
        }
    }
}

/// Parses `exact`, `eps:<float>`, `maxrank:<int>` or `eps:<float>,maxrank:<int>`.
impl FromStr for TruncationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("exact") {
            return Ok(TruncationPolicy::Exact);
        }
        let mut eps = None;
        let mut max_rank = None;
        for part in s.split(',') {
            let (key, value) = part
                .split_once(':')
                .ok_or_else(|| invalid(format!("cannot parse policy component `{part}`")))?;
            match key.trim() {
                "eps" => {
                    eps = Some(value.trim().parse::<f64>().map_err(|e| invalid(format!("bad eps `{value}`: {e}")))?)
                }
                "maxrank" => {
                    max_rank = Some(
                        value
                            .trim()
                            .parse::<usize>()
                            .map_err(|e| invalid(format!("bad maxrank `{value}`: {e}")))?,
                    )
                }
                other => return Err(invalid(format!("unknown policy key `{other}`"))),
            }
        }
        let policy = match (eps, max_rank) {
            (Some(eps), None) => TruncationPolicy::RelCutoff { eps },
            (None, Some(max_rank)) => TruncationPolicy::MaxRank { max_rank },
            (Some(eps), Some(max_rank)) => TruncationPolicy::Capped { eps, max_rank },
            (None, None) => return Err(invalid(format!("empty policy `{s}`"))),
        };
        policy.validated()
    }
}

/// `A ≈ left · right` with orthonormal `left` columns and the singular values
/// folded into the rows of `right`.
#[derive(Clone, Debug)]
pub struct SvdSplit {
    pub left: Matrix,
    pub right: Matrix,
    pub kept_rank: usize,
    /// `sqrt(Σ discarded σᵢ²)`, i.e. `‖A - left·right‖_F`.
    pub discarded_mass: f64,
    /// Kept singular values, non-increasing.
    pub singular_values: Vec<f64>,
    /// Every singular value of `A`, non-increasing.
    pub all_singular_values: Vec<f64>,
}

/// Numerical rank: count of σᵢ strictly above `m·n·ε_mach·σ₁`, at least 1.
fn numerical_rank(singular_values: &[f64], dims: (usize, usize)) -> usize {
    let floor = (dims.0 * dims.1) as f64 * f64::EPSILON * singular_values[0];
    singular_values.iter().take_while(|&&s| s > floor).count().max(1)
}

/// Applies `policy` to a non-increasing list of singular values of an
/// `dims.0 × dims.1` matrix and returns how many to keep.
pub fn stable_rank_decision(singular_values: &[f64], dims: (usize, usize), policy: &TruncationPolicy) -> Result<usize> {
    if singular_values.is_empty() {
        return Err(invalid("no singular values"));
    }
    if singular_values.windows(2).any(|w| w[1] > w[0]) || singular_values.iter().any(|s| s.is_nan() || *s < 0.0) {
        return Err(invalid("singular values must be non-negative and non-increasing"));
    }
    let numerical = numerical_rank(singular_values, dims);
    let cutoff_rank = |eps: f64| {
        // tails[k] = Σ_{i>=k} σᵢ², summed smallest first.
        let mut tails = vec![0.0; singular_values.len() + 1];
        for i in (0..singular_values.len()).rev() {
            tails[i] = tails[i + 1] + singular_values[i] * singular_values[i];
        }
        let budget = eps * tails[0].sqrt();
        (1..=singular_values.len())
            .find(|&k| tails[k].sqrt() <= budget)
            .unwrap_or(singular_values.len())
    };
    Ok(match *policy {
        TruncationPolicy::Exact => numerical,
        TruncationPolicy::RelCutoff { eps } => cutoff_rank(eps),
        TruncationPolicy::MaxRank { max_rank } => max_rank.min(numerical),
        TruncationPolicy::Capped { eps, max_rank } => cutoff_rank(eps).min(max_rank),
    })
}

/// Full thin SVD `A = U·diag(σ)·Vᵀ`, σ sorted non-increasing.
fn thin_svd(a: &Matrix) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    let (m, n) = (a.rows(), a.cols());
    let fa = Mat::from_fn(m, n, |i, j| a.get(i, j));
    let svd = fa
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD of a {m}x{n} matrix did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let p = m.min(n);
    let mut order: Vec<usize> = (0..p).collect();
    // Stable sort keeps equal singular values in solver order.
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let sorted: Vec<f64> = order.iter().map(|&i| s[i].max(0.0)).collect();
    let (u, v) = (svd.U(), svd.V());
    let u = Mat::from_fn(m, p, |i, c| u[(i, order[c])]);
    let v = Mat::from_fn(n, p, |j, c| v[(j, order[c])]);
    Ok((u, sorted, v))
}

/// Splits `a` into an orthonormal left factor and a right factor carrying the
/// singular values, truncated according to `policy`.
///
/// Each kept singular pair is sign-normalised so that the largest-magnitude
/// entry of its left vector is positive. A zero matrix yields rank 1 with a
/// unit left vector and a zero right factor.
pub fn svd_split(a: &Matrix, policy: &TruncationPolicy) -> Result<SvdSplit> {
    let policy = policy.validated()?;
    if let Some(pos) = a.data().iter().position(|x| !x.is_finite()) {
        return Err(invalid(format!("non-finite matrix entry at flat offset {pos}")));
    }
    let (m, n) = (a.rows(), a.cols());
    if a.data().iter().all(|&x| x == 0.0) {
        let mut left = Matrix::zeros(m, 1);
        left.set(0, 0, 1.0);
        return Ok(SvdSplit {
            left,
            right: Matrix::zeros(1, n),
            kept_rank: 1,
            discarded_mass: 0.0,
            singular_values: vec![0.0],
            all_singular_values: vec![0.0; m.min(n)],
        });
    }

    let (u, s, v) = thin_svd(a)?;
    let k = stable_rank_decision(&s, (m, n), &policy)?;
    let discarded_mass = s[k..].iter().rev().map(|x| x * x).sum::<f64>().sqrt();

    let mut left = Matrix::zeros(m, k);
    let mut right = Matrix::zeros(k, n);
    for c in 0..k {
        let mut pivot = 0;
        for i in 1..m {
            if u[(i, c)].abs() > u[(pivot, c)].abs() {
                pivot = i;
            }
        }
        let sign = if u[(pivot, c)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..m {
            left.set(i, c, sign * u[(i, c)]);
        }
        let scale = sign * s[c];
        for j in 0..n {
            right.set(c, j, scale * v[(j, c)]);
        }
    }
    Ok(SvdSplit {
        left,
        right,
        kept_rank: k,
        discarded_mass,
        singular_values: s[..k].to_vec(),
        all_singular_values: s,
    })
}
