use rand::seq::SliceRandom;
use rand::Rng;

/// Splits this iteration's severe cases into ICU admissions and overflow.
///
/// Admits a uniform random subset of size `min(candidates, b - occupancy)`;
/// everyone else overflows to `F`.
pub fn admit_icu<R: Rng + ?Sized>(
    candidates: &[u32],
    occupancy: usize,
    b: usize,
    rng: &mut R,
) -> (Vec<u32>, Vec<u32>) {
    let free = b.saturating_sub(occupancy).min(candidates.len());
    let mut order = candidates.to_vec();
    if free < order.len() {
        order.shuffle(rng);
    }
    let overflow = order.split_off(free);
    (order, overflow)
}
