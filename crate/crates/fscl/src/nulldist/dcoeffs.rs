//! Coefficients `d_{r,s}` of the ordered-gamma density series.
//!
//! Recursion: `d_{0,s} = 1`, `d_{r,1} = p' / (p' + 2r)` and
//! `d_{r+1,s} = (p' s / 2) * sum_{j=0}^{r} C(r,j) (p'/2 + 1 + r - j)^{-1} d_{j,s-1}`
//! for `s > 1`. The `s = 0` column is the convention `d_{0,0} = 1`,
//! `d_{r,0} = 0` for `r > 0`, which reproduces the chi-square collapse when
//! every component is selected.

use crate::error::{Error, Result};

/// Column `d_{r,s}` for `0 <= r <= r_max` at the given `s`.
///
/// Values grow like `s^r`, so the f64 table is meant for moderate orders;
/// the density evaluator keeps its own arbitrary-precision table.
pub fn d_coeffs(r_max: usize, s: usize, p_prime: u32) -> Result<Vec<f64>> {
    if p_prime == 0 {
        return Err(Error::invalid("p_prime must be positive"));
    }
    let pp = p_prime as f64;
    let nu = pp / 2.0;
    if s == 0 {
        let mut col = vec![0.0; r_max + 1];
        col[0] = 1.0;
        return Ok(col);
    }
    // prev holds d_{., s-1}; start from the s = 1 column
    let mut prev: Vec<f64> = (0..=r_max).map(|r| pp / (pp + 2.0 * r as f64)).collect();
    let mut level = 1usize;
    while level < s {
        level += 1;
        let mut next = vec![0.0; r_max + 1];
        next[0] = 1.0;
        for r in 0..r_max {
            // d_{r+1, level} = (p' * level / 2) * sum_j C(r,j)/(nu+1+r-j) * prev[j]
            let mut binom = 1.0f64; // C(r, 0)
            let mut acc = 0.0;
            for j in 0..=r {
                acc += binom / (nu + 1.0 + (r - j) as f64) * prev[j];
                binom *= (r - j) as f64 / (j + 1) as f64;
            }
            next[r + 1] = pp * level as f64 / 2.0 * acc;
        }
        prev = next;
    }
    Ok(prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_row_is_one() {
        for s in 0..6 {
            let col = d_coeffs(4, s, 3).unwrap();
            assert_eq!(col[0], 1.0);
        }
    }

    #[test]
    fn s1_matches_closed_form() {
        let col = d_coeffs(5, 1, 2).unwrap();
        for (r, &v) in col.iter().enumerate() {
            assert!((v - 1.0 / (1.0 + r as f64)).abs() < 1e-15);
        }
        assert!((col[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn d12_hand_value() {
        // p' = 2: d_{1,2} = (p'*2/2) * (p'/2 + 1)^{-1} * d_{0,1} = 2 * 1/2 * 1 = 1
        let col = d_coeffs(2, 2, 2).unwrap();
        assert!((col[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn d22_matches_direct_recursion() {
        // exact symbolic evaluation for p' = 2, s = 2:
        // d_{r+1,2} = 2 * sum_j C(r,j)/(2+r-j) * d_{j,1}, d_{j,1} = 1/(1+j)
        // r = 1: d_{2,2} = 2 * [C(1,0)/3 * 1 + C(1,1)/2 * 1/2] = 2*(1/3+1/4) = 7/6
        let col = d_coeffs(2, 2, 2).unwrap();
        assert!((col[2] - 7.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn s0_convention() {
        let col = d_coeffs(3, 0, 5).unwrap();
        assert_eq!(col, vec![1.0, 0.0, 0.0, 0.0]);
    }
}
