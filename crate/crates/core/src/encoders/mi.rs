//! Plug-in mutual information between a bucketed categorical variable and a
//! binary label, in nats.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BucketCount {
    pub rows: u64,
    pub positives: u64,
}

impl BucketCount {
    pub fn new(rows: u64, positives: u64) -> Self {
        debug_assert!(positives <= rows);
        Self { rows, positives }
    }

    fn negatives(&self) -> u64 {
        self.rows - self.positives
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `Σ_y n_y ln(n_y / rows)` for one bucket: the label-dependent part of its
/// MI contribution, scaled by the total row count. Always ≤ 0.
pub(crate) fn bucket_entropy_term(rows: u64, positives: u64) -> f64 {
    if rows == 0 {
        return 0.0;
    }
    let r = rows as f64;
    let p = positives as f64;
    let q = (rows - positives) as f64;
    xlogy(p, p / r) + xlogy(q, q / r)
}

/// `I(Z;Y) = Σ_z p(z) Σ_y p(y|z) ln(p(y|z)/p(y))`, with the ⊥ rows forming
/// one more bucket. Returns 0 when there are no rows.
pub fn mutual_information(buckets: &[BucketCount], absent: BucketCount) -> f64 {
    let all = buckets.iter().chain(std::iter::once(&absent));
    let (n, pos) = all
        .clone()
        .fold((0u64, 0u64), |(n, p), b| (n + b.rows, p + b.positives));
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let p1 = pos as f64 / nf;
    let p0 = 1.0 - p1;
    let mut mi = 0.0;
    for b in all {
        if b.rows == 0 {
            continue;
        }
        let r = b.rows as f64;
        let (pp, pn) = (b.positives as f64, b.negatives() as f64);
        if pp > 0.0 {
            mi += pp / nf * (pp / r / p1).ln();
        }
        if pn > 0.0 {
            mi += pn / nf * (pn / r / p0).ln();
        }
    }
    mi.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_buckets_give_ln2() {
        let mi = mutual_information(&[BucketCount::new(4, 4), BucketCount::new(4, 0)], BucketCount::default());
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_bucket_is_independent() {
        assert_eq!(mutual_information(&[BucketCount::new(10, 3)], BucketCount::default()), 0.0);
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(mutual_information(&[], BucketCount::default()), 0.0);
    }

    #[test]
    fn absent_bucket_participates() {
        let mi = mutual_information(&[BucketCount::new(4, 4)], BucketCount::new(4, 0));
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn split_gain_matches_entropy_terms() {
        let whole = [BucketCount::new(10, 3)];
        let split = [BucketCount::new(6, 1), BucketCount::new(4, 2)];
        let absent = BucketCount::new(5, 4);
        let gain = mutual_information(&split, absent) - mutual_information(&whole, absent);
        let n = 15.0;
        let via_terms = (bucket_entropy_term(6, 1) + bucket_entropy_term(4, 2) - bucket_entropy_term(10, 3)) / n;
        assert!((gain - via_terms).abs() < 1e-12);
    }
}
