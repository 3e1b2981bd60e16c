//! The 8x8 zigzag scan order used to index DCT coefficients.
//!
//! Frequency index `m` in 0..64 walks the block from DC through the
//! anti-diagonals; `ZIGZAG_TO_RASTER[m]` is the corresponding raster position
//! `row * 8 + col`.

/// Raster position (`row * 8 + col`) of the m-th coefficient in zigzag order.
pub const ZIGZAG_TO_RASTER: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, //
    17, 24, 32, 25, 18, 11, 4, 5, //
    12, 19, 26, 33, 40, 48, 41, 34, //
    27, 20, 13, 6, 7, 14, 21, 28, //
    35, 42, 49, 56, 57, 50, 43, 36, //
    29, 22, 15, 23, 30, 37, 44, 51, //
    58, 59, 52, 45, 38, 31, 39, 46, //
    53, 60, 61, 54, 47, 55, 62, 63,
];

/// Zigzag index of each raster position; the inverse of [`ZIGZAG_TO_RASTER`].
pub const RASTER_TO_ZIGZAG: [usize; 64] = invert(ZIGZAG_TO_RASTER);

const fn invert(table: [usize; 64]) -> [usize; 64] {
    let mut out = [0usize; 64];
    let mut m = 0;
    while m < 64 {
        out[table[m]] = m;
        m += 1;
    }
    out
}

/// Zigzag index of the coefficient at `(row, col)` of an 8x8 block.
#[inline]
pub fn zigzag_index(row: usize, col: usize) -> usize {
    RASTER_TO_ZIGZAG[row * 8 + col]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Generates the zigzag order by walking the anti-diagonals, alternating
    /// direction, exactly as the scan is defined.
    fn generated_order() -> Vec<usize> {
        let mut order = Vec::with_capacity(64);
        for diag in 0..15usize {
            let cells: Vec<(usize, usize)> = (0..8)
                .filter_map(|r| {
                    let c = diag.checked_sub(r)?;
                    (c < 8).then_some((r, c))
                })
                .collect();
            if diag % 2 == 0 {
                // Even anti-diagonals run bottom-left to top-right.
                order.extend(cells.iter().rev().map(|&(r, c)| r * 8 + c));
            } else {
                order.extend(cells.iter().map(|&(r, c)| r * 8 + c));
            }
        }
        order
    }

    #[test]
    fn table_matches_generated_walk() {
        assert_eq!(ZIGZAG_TO_RASTER.to_vec(), generated_order());
    }

    #[test]
    fn table_is_a_permutation() {
        let mut seen = [false; 64];
        for &r in &ZIGZAG_TO_RASTER {
            assert!(!seen[r], "raster position {r} appears twice");
            seen[r] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn inverse_round_trips() {
        for m in 0..64 {
            assert_eq!(RASTER_TO_ZIGZAG[ZIGZAG_TO_RASTER[m]], m);
        }
        assert_eq!(zigzag_index(0, 0), 0);
        assert_eq!(zigzag_index(0, 1), 1);
        assert_eq!(zigzag_index(1, 0), 2);
        assert_eq!(zigzag_index(2, 0), 3);
        assert_eq!(zigzag_index(7, 7), 63);
    }
}
