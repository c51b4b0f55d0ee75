//! Automatic thresholds on 256-bin histograms.
//!
//! A threshold is reported as a level `T ∈ 1..=255`: levels `≥ T` are
//! foreground. For real-valued data the values are min-max normalized into
//! 256 bins first and `T` maps back to `min + T · (max − min) / 256`, so
//! `v ≥ threshold` selects the foreground.
//!
//! Li's criterion is minimized exactly over all 255 splits with prefix sums;
//! the classic fixed-point iteration is available as [`li_iterative_level`].

use crate::error::{Error, Result};

pub type Histogram = [u64; 256];

/// 256-bin histogram of min-max normalized values, with `(min, max)`.
pub fn histogram(values: &[f64]) -> Result<(Histogram, f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::validation("cannot threshold non-finite values"));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if values.is_empty() || hi <= lo {
        return Err(Error::validation(
            "thresholding needs at least two distinct values",
        ));
    }
    let mut h = [0u64; 256];
    for &v in values {
        h[bin_of(v, lo, hi)] += 1;
    }
    Ok((h, lo, hi))
}

fn bin_of(v: f64, lo: f64, hi: f64) -> usize {
    (((v - lo) / (hi - lo)) * 256.0).floor().clamp(0.0, 255.0) as usize
}

/// Value-space threshold corresponding to level `t`.
pub fn level_to_value(t: usize, lo: f64, hi: f64) -> f64 {
    lo + t as f64 * (hi - lo) / 256.0
}

struct Prefix {
    count: [u64; 257],
    moment: [u64; 257],
}

impl Prefix {
    fn new(h: &Histogram) -> Prefix {
        let mut count = [0u64; 257];
        let mut moment = [0u64; 257];
        for i in 0..256 {
            count[i + 1] = count[i] + h[i];
            moment[i + 1] = moment[i] + h[i] * i as u64;
        }
        Prefix { count, moment }
    }

    /// Counts and first moments of the classes `< t` and `≥ t`.
    fn split(&self, t: usize) -> (u64, u64, u64, u64) {
        let (na, sa) = (self.count[t], self.moment[t]);
        (na, sa, self.count[256] - na, self.moment[256] - sa)
    }
}

fn distinct_levels(h: &Histogram) -> usize {
    h.iter().filter(|&&c| c > 0).count()
}

/// `−S_a ln μ_a − S_b ln μ_b`, the data-dependent part of Li's cross entropy.
fn cross_entropy(na: u64, sa: u64, nb: u64, sb: u64) -> f64 {
    let term = |n: u64, s: u64| {
        if s == 0 {
            0.0
        } else {
            -(s as f64) * (s as f64 / n as f64).ln()
        }
    };
    term(na, sa) + term(nb, sb)
}

/// Minimum cross-entropy level (smallest on ties).
pub fn li_level(h: &Histogram) -> Result<usize> {
    if distinct_levels(h) < 2 {
        return Err(Error::validation("Li threshold needs at least two distinct levels"));
    }
    let pre = Prefix::new(h);
    let mut best = (f64::INFINITY, 0);
    for t in 1..256 {
        let (na, sa, nb, sb) = pre.split(t);
        if na == 0 || nb == 0 {
            continue;
        }
        let e = cross_entropy(na, sa, nb, sb);
        if e < best.0 {
            best = (e, t);
        }
    }
    Ok(best.1)
}

/// Li–Tam fixed-point iteration `t ← (μ_b − μ_a) / (ln μ_b − ln μ_a)`,
/// started from the mean level and stopped when `|Δt| < 0.5`.
pub fn li_iterative_level(h: &Histogram) -> Result<usize> {
    if distinct_levels(h) < 2 {
        return Err(Error::validation("Li threshold needs at least two distinct levels"));
    }
    let pre = Prefix::new(h);
    let (first, last) = (
        h.iter().position(|&c| c > 0).unwrap(),
        h.iter().rposition(|&c| c > 0).unwrap(),
    );
    let level_of = |t: f64| (t.floor() as i64 + 1).clamp(first as i64 + 1, last as i64) as usize;
    let mut t = pre.moment[256] as f64 / pre.count[256] as f64;
    for _ in 0..1000 {
        let (na, sa, nb, sb) = pre.split(level_of(t));
        let mu_a = (sa as f64 / na as f64).max(1e-12);
        let mu_b = (sb as f64 / nb as f64).max(1e-12);
        let next = if (mu_b - mu_a).abs() < 1e-12 {
            mu_a
        } else {
            (mu_b - mu_a) / (mu_b.ln() - mu_a.ln())
        };
        let done = (next - t).abs() < 0.5;
        t = next;
        if done {
            break;
        }
    }
    Ok(level_of(t))
}

/// Maximum between-class variance level (smallest on ties).
pub fn otsu_level(h: &Histogram) -> Result<usize> {
    if distinct_levels(h) < 2 {
        return Err(Error::validation("Otsu threshold needs at least two distinct levels"));
    }
    let pre = Prefix::new(h);
    let mut best = (f64::NEG_INFINITY, 0);
    for t in 1..256 {
        let (na, sa, nb, sb) = pre.split(t);
        if na == 0 || nb == 0 {
            continue;
        }
        let d = sa as f64 / na as f64 - sb as f64 / nb as f64;
        let v = na as f64 * nb as f64 * d * d;
        if v > best.0 {
            best = (v, t);
        }
    }
    Ok(best.1)
}

/// Li threshold of real values; `v ≥ result` is foreground.
pub fn threshold_li(values: &[f64]) -> Result<f64> {
    let (h, lo, hi) = histogram(values)?;
    Ok(level_to_value(li_level(&h)?, lo, hi))
}

/// Otsu threshold of real values; `v ≥ result` is foreground.
pub fn threshold_otsu(values: &[f64]) -> Result<f64> {
    let (h, lo, hi) = histogram(values)?;
    Ok(level_to_value(otsu_level(&h)?, lo, hi))
}
