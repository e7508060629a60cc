//! Interval estimates and trend verdicts for replica statistics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided standard normal quantile for confidence `level`.
pub fn z_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci: Interval,
}

/// Wilson score interval.
pub fn wilson(successes: u64, trials: u64, level: f64) -> Proportion {
    assert!(successes <= trials, "more successes than trials");
    if trials == 0 {
        return Proportion {
            successes,
            trials,
            estimate: f64::NAN,
            ci: Interval { lo: 0.0, hi: 1.0 },
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = z_quantile(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        estimate: p,
        ci: Interval {
            lo: (center - half).max(0.0),
            hi: (center + half).min(1.0),
        },
    }
}

/// Two-sample z statistic for proportions with the pooled standard error;
/// `0` when both samples are all-or-nothing alike.
pub fn two_proportion_z(a: u64, na: u64, b: u64, nb: u64) -> f64 {
    let (pa, pb) = (a as f64 / na as f64, b as f64 / nb as f64);
    let pool = (a + b) as f64 / (na + nb) as f64;
    let se = (pool * (1.0 - pool) * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (pa - pb) / se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

pub fn mean_se(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            count: 0,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        count: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Homogeneity test of two count vectors over the same categories.
/// Categories empty in both samples are dropped.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> ChiSquareTest {
    assert_eq!(a.len(), b.len(), "category counts differ");
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let total = (na + nb) as f64;
    let mut stat = 0.0;
    let mut cats = 0;
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col == 0.0 {
            continue;
        }
        cats += 1;
        for (obs, row) in [(x, na), (y, nb)] {
            let exp = col * row as f64 / total;
            if exp > 0.0 {
                stat += (obs as f64 - exp).powi(2) / exp;
            }
        }
    }
    let dof = cats.max(2) - 1;
    let p_value = ChiSquared::new(dof as f64).map(|d| 1.0 - d.cdf(stat)).unwrap_or(f64::NAN);
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
    /// Fisher-z interval; `[-1, 1]` when undefined.
    pub ci: Interval,
}

/// Pearson correlation; `NaN` when either sample is constant.
pub fn pearson(xs: &[f64], ys: &[f64], level: f64) -> Correlation {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let r = if sxx == 0.0 || syy == 0.0 {
        f64::NAN
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    };
    let ci = if r.is_finite() && n > 3 && r.abs() < 1.0 {
        let z = r.atanh();
        let half = z_quantile(level) / ((n - 3) as f64).sqrt();
        Interval {
            lo: (z - half).tanh(),
            hi: (z + half).tanh(),
        }
    } else {
        Interval { lo: -1.0, hi: 1.0 }
    };
    Correlation { r, n, ci }
}

/// Outcome of a trend assertion under the confidence-interval policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fail => "fail",
        }
    }

    /// Worst of the two.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

/// Non-increasing trend over ordered intervals: fails when a later interval
/// lies wholly above an earlier one; passes when the last lies wholly below
/// the first; otherwise inconclusive.
pub fn non_increasing(cis: &[Interval]) -> Verdict {
    for (i, a) in cis.iter().enumerate() {
        if cis[i + 1..].iter().any(|b| b.lo > a.hi) {
            return Verdict::Fail;
        }
    }
    match (cis.first(), cis.last()) {
        (Some(a), Some(b)) if cis.len() > 1 && b.hi < a.lo => Verdict::Pass,
        _ => Verdict::Inconclusive,
    }
}

/// Least-squares slope of `ln y` against `ln x`, over points with `y > 0`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
