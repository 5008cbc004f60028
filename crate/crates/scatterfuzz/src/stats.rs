//! Two-sided Mann-Whitney U test.

use statrs::function::erf::erfc;
use thiserror::Error;

/// Samples at or below this size (both) use exact enumeration.
pub const EXACT_MAX: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitney {
    /// U of the first sample: the number of pairs `(a, b)` with `a > b`,
    /// ties counting one half.
    pub u: f64,
    pub p: f64,
    pub exact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum MwuError {
    #[error("empty sample")]
    EmptySample,
    /// Every value in both samples is the same; by convention p = 1.
    #[error("all values identical")]
    DegenerateSamples,
}

/// Midranks (1-based) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Count subsets of each size and doubled-rank sum.
/// `table[k][s]` = number of `k`-subsets of `doubled` summing to `s`.
fn subset_sums(doubled: &[usize], k_max: usize) -> Vec<Vec<u64>> {
    let total: usize = doubled.iter().sum();
    let mut table = vec![vec![0u64; total + 1]; k_max + 1];
    table[0][0] = 1;
    for &r in doubled {
        for k in (1..=k_max).rev() {
            for s in (r..=total).rev() {
                table[k][s] += table[k - 1][s - r];
            }
        }
    }
    table
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MwuError> {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return Err(MwuError::EmptySample);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Err(MwuError::DegenerateSamples);
    }
    let ranks = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;
    let (naf, nbf) = (na as f64, nb as f64);
    let mean = naf * nbf / 2.0;

    if na <= EXACT_MAX && nb <= EXACT_MAX {
        // Doubled midranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|&r| (2.0 * r).round() as usize).collect();
        let table = subset_sums(&doubled, na);
        let observed = (2.0 * ra).round() as i64;
        let centre = (na * (na + nb + 1)) as i64; // 2 * E[R_a]
        let dev = (observed - centre).abs();
        let mut extreme = 0u64;
        let mut all = 0u64;
        for (s, &count) in table[na].iter().enumerate() {
            all += count;
            if (s as i64 - centre).abs() >= dev {
                extreme += count;
            }
        }
        return Ok(MannWhitney {
            u,
            p: (extreme as f64 / all as f64).min(1.0),
            exact: true,
        });
    }

    let n = naf + nbf;
    let mut counts: Vec<f64> = Vec::new();
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        counts.push(j as f64);
        i += j;
    }
    let ties: f64 = counts.iter().map(|t| t * t * t - t).sum();
    let var = naf * nbf / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let sd = var.sqrt();
    let z = ((u - mean).abs() - 0.5).max(0.0) / sd;
    let p = erfc(z / std::f64::consts::SQRT_2).min(1.0);
    Ok(MannWhitney { u, p, exact: false })
}

/// p-value with degenerate samples mapped to 1.
pub fn p_value(a: &[f64], b: &[f64]) -> Result<f64, MwuError> {
    match mann_whitney_u(a, b) {
        Ok(r) => Ok(r.p),
        Err(MwuError::DegenerateSamples) => Ok(1.0),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_triples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!(r.exact);
        assert!((r.p - 0.1).abs() < 1e-12);
    }

    #[test]
    fn tied_blocks() {
        let r = mann_whitney_u(&[5.0; 5], &[10.0; 5]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p - 2.0 / 252.0).abs() < 1e-12);
        assert!(r.p < 0.05);
    }

    #[test]
    fn degenerate_and_empty() {
        assert_eq!(mann_whitney_u(&[3.0, 3.0], &[3.0]), Err(MwuError::DegenerateSamples));
        assert_eq!(p_value(&[3.0, 3.0], &[3.0]), Ok(1.0));
        assert_eq!(mann_whitney_u(&[], &[1.0]), Err(MwuError::EmptySample));
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn normal_approximation_large_samples() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (10..30).map(|x| f64::from(x) + 0.5).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(!r.exact);
        // a beats b only for a in 11..20: 1 + 2 + ... + 9.
        assert_eq!(r.u, 45.0);
        // Reference value from the tie-free normal approximation with
        // continuity correction: z = (200 - 45 - 0.5) / sqrt(400 * 41 / 12).
        let z: f64 = 154.5 / (400.0f64 * 41.0 / 12.0).sqrt();
        let expect = erfc(z / std::f64::consts::SQRT_2);
        assert!((r.p - expect).abs() < 1e-12);
        let s = mann_whitney_u(&b, &a).unwrap();
        assert_eq!(s.u, 400.0 - 45.0);
        assert!((s.p - r.p).abs() < 1e-15);
    }
}
