//! Property tests: random (cdf, sequence) pairs always round-trip.

use proptest::prelude::*;

use ugic_coder::{range_decode, range_encode, CdfSet, TOTAL};

/// Quantize random positive weights into a valid cdf row (every symbol
/// frequency >= 1, total 2^16), mirroring the primary package's table
/// construction closely enough for coverage.
fn to_cdf_row(weights: &[u32]) -> Vec<u32> {
    let n = weights.len() as u64;
    let sum: u64 = weights.iter().map(|&w| w as u64 + 1).sum();
    let budget = TOTAL as u64 - n; // reserve the +1 floor per symbol
    let mut freqs: Vec<u64> = weights
        .iter()
        .map(|&w| 1 + (w as u64 + 1) * budget / sum)
        .collect();
    let spent: u64 = freqs.iter().sum();
    let top = (0..freqs.len())
        .max_by_key(|&i| freqs[i])
        .unwrap();
    freqs[top] = freqs[top] + TOTAL as u64 - spent;
    let mut row = vec![0u32];
    let mut acc = 0u64;
    for f in freqs {
        acc += f;
        row.push(acc as u32);
    }
    row
}

proptest! {
    #[test]
    fn roundtrip_random_trials(
        weight_rows in prop::collection::vec(
            prop::collection::vec(0u32..1000, 2..64), 1..4),
        picks in prop::collection::vec((0usize..usize::MAX, 0usize..usize::MAX), 0..300),
    ) {
        let rows: Vec<Vec<u32>> = weight_rows.iter().map(|w| to_cdf_row(w)).collect();
        let alphabet = rows.iter().map(|r| r.len() - 1).min().unwrap();
        let n_tables = rows.len();
        // clip every row to the shared alphabet so indices stay valid
        let rows: Vec<Vec<u32>> = rows
            .into_iter()
            .map(|mut r| {
                r.truncate(alphabet + 1);
                let last = r.len() - 1;
                r[last] = TOTAL;
                if r[last] <= r[last - 1] {
                    r[last - 1] = r[last] - 1;
                }
                for i in (1..last).rev() {
                    if r[i] >= r[i + 1] {
                        r[i] = r[i + 1] - 1;
                    }
                }
                r
            })
            .collect();
        let cdfs = CdfSet::new(rows).unwrap();
        let index: Vec<i32> = picks.iter().map(|&(t, _)| (t % n_tables) as i32).collect();
        let symbols: Vec<i32> = picks.iter().map(|&(_, s)| (s % alphabet) as i32).collect();
        let blob = range_encode(&symbols, &cdfs, &index).unwrap();
        let back = range_decode(&blob, &cdfs, &index, symbols.len()).unwrap();
        prop_assert_eq!(back, symbols);
    }
}
