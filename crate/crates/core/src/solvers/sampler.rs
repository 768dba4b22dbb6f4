use std::collections::HashMap;

use rand::Rng;

use crate::error::{invalid, Result};

/// Uniform `b`-subset of `0..n` (without replacement), sorted ascending.
///
/// Partial Fisher-Yates over a virtual identity permutation; only displaced
/// entries are stored, so memory is `O(b)` rather than `O(n)`.
pub fn sample_minibatch<R: Rng + ?Sized>(rng: &mut R, n: usize, b: usize) -> Result<Vec<usize>> {
    if b == 0 || b > n {
        return Err(invalid("batch_size", format!("{b} not in 1..={n}")));
    }
    if b == n {
        return Ok((0..n).collect());
    }
    let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * b);
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let j = rng.random_range(i..n);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out.sort_unstable();
    Ok(out)
}
