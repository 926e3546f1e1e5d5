//! Low-discrepancy point generation: Sobol' sequences with random linear
//! scrambling and digital shifts.

mod direction;
mod scramble;
mod sobol;

pub use direction::{DirectionNumbers, DirectionRecord};
pub use scramble::{fresh_scramble, ScrambleState};
pub use sobol::{RandomizedPointSet, SobolGenerator, SobolWalker, COORD_MIN, DIGITS};

/// Direction-number table shipped with the crate (first 128 dimensions of
/// the published Joe–Kuo layout).
pub const BUNDLED_DIRECTION_FILE: &str =
    concat!(env!("CARGO_MANIFEST_DIR"), "/data/joe-kuo-128.txt");

#[cfg(test)]
pub(crate) fn test_table() -> DirectionNumbers {
    DirectionNumbers::from_path(BUNDLED_DIRECTION_FILE).unwrap()
}

#[cfg(test)]
mod net_tests {
    use super::*;

    /// Count points per elementary interval for every base-2 partition with
    /// sum of resolutions `m - t` and check each interval holds exactly 2^t
    /// points. Returns the smallest `t` that balances all partitions.
    fn measured_t(raws: &[Vec<u32>], m: u32, s: usize) -> u32 {
        'outer: for t in 0..=m {
            let budget = m - t;
            let mut partition = vec![0u32; s];
            if !balanced_for_all(raws, &mut partition, 0, budget, t) {
                continue 'outer;
            }
            return t;
        }
        m
    }

    fn balanced_for_all(
        raws: &[Vec<u32>],
        partition: &mut [u32],
        dim: usize,
        remaining: u32,
        t: u32,
    ) -> bool {
        if dim + 1 == partition.len() {
            partition[dim] = remaining;
            return balanced(raws, partition, t);
        }
        for d in 0..=remaining {
            partition[dim] = d;
            if !balanced_for_all(raws, partition, dim + 1, remaining - d, t) {
                return false;
            }
        }
        true
    }

    fn balanced(raws: &[Vec<u32>], partition: &[u32], t: u32) -> bool {
        let mut counts = std::collections::HashMap::new();
        for raw in raws {
            let mut key = 0u64;
            for (j, &d) in partition.iter().enumerate() {
                let bin = if d == 0 { 0 } else { raw[j] >> (32 - d) };
                key = (key << 9) | u64::from(bin) | (u64::from(d) << 40);
                key = key.rotate_left(13);
            }
            *counts.entry(key).or_insert(0u64) += 1;
        }
        counts.values().all(|&c| c == 1u64 << t)
    }

    fn collect_raws(gen: &SobolGenerator, n: u64, state: Option<&ScrambleState>) -> Vec<Vec<u32>> {
        let mut walker = gen.walker();
        let mut out = Vec::with_capacity(n as usize);
        for i in 0..n {
            let raw = walker.raw().to_vec();
            out.push(match state {
                None => raw,
                Some(st) => raw
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| st.apply(j, x))
                    .collect(),
            });
            if i + 1 < n {
                walker.advance().unwrap();
            }
        }
        out
    }

    #[test]
    fn net_balance_within_published_quality() {
        // Published t-values for the Joe-Kuo direction numbers in low
        // dimension: t = 0 for s <= 2, t = 1 for s = 3.
        let table = test_table();
        for (s, published) in [(1usize, 0u32), (2, 0), (3, 1)] {
            let gen = SobolGenerator::new(&table, s).unwrap();
            for m in 1..=8u32 {
                let raws = collect_raws(&gen, 1 << m, None);
                let t = measured_t(&raws, m, s);
                assert!(
                    t <= published.min(m),
                    "s={s} m={m}: measured t={t} > published {published}"
                );
            }
        }
    }

    #[test]
    fn linear_scramble_preserves_net_balance() {
        let table = test_table();
        for (s, published) in [(2usize, 0u32), (3, 1)] {
            let gen = SobolGenerator::new(&table, s).unwrap();
            let st = fresh_scramble(2024, 5, s);
            for m in [4u32, 6, 8] {
                let raws = collect_raws(&gen, 1 << m, Some(&st));
                let t = measured_t(&raws, m, s);
                assert!(
                    t <= published.min(m),
                    "scrambled s={s} m={m}: measured t={t}"
                );
            }
        }
    }

    #[test]
    fn randomized_average_is_unbiased_for_smooth_integrand() {
        // Smooth test function with known integral 1 on the cube.
        let table = test_table();
        let s = 3;
        let gen = SobolGenerator::new(&table, s).unwrap();
        let g = |t: &[f64]| -> f64 {
            t.iter()
                .map(|&x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin())
                .product()
        };
        let replicates = 200u64;
        let n = 256u64;
        let mut means = Vec::with_capacity(replicates as usize);
        for r in 0..replicates {
            let st = fresh_scramble(77, r, s);
            let set = RandomizedPointSet::new(&gen, Some(&st), n).unwrap();
            let mut acc = 0.0;
            set.for_each_point(|_, t| {
                acc += g(t);
                Ok::<(), std::convert::Infallible>(())
            })
            .unwrap();
            means.push(acc / n as f64);
        }
        let pooled: f64 = means.iter().sum::<f64>() / replicates as f64;
        let var: f64 = means.iter().map(|m| (m - pooled).powi(2)).sum::<f64>()
            / ((replicates - 1) as f64 * replicates as f64);
        let se = var.sqrt();
        assert!(
            (pooled - 1.0).abs() <= 4.0 * se.max(1e-12),
            "pooled mean {pooled}, se {se}"
        );
    }
}
