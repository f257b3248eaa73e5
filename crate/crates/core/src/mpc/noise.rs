//! Seeded Laplace noise applied to released aggregates at the gate.

use rand::RngCore;

use crate::schema::catalog::AggSlot;
use crate::value::{DType, Scalar};

/// Inverse-CDF Laplace sample: u uniform in (-0.5, 0.5),
/// sample = -scale * sgn(u) * ln(1 - 2|u|).
pub fn laplace(scale: f64, rng: &mut impl RngCore) -> f64 {
    // 53-bit uniform offset to the bin center keeps u strictly inside the
    // open interval, so ln never sees zero.
    let v = ((rng.next_u64() >> 11) as f64 + 0.5) * 2f64.powi(-53);
    let u = 0.5 - v;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Adds noise per released aggregate slot. COUNT slots (and total counts
/// from AVG decomposition) are rounded to the nearest nonnegative
/// integer; integer sums round to the nearest integer to keep their
/// column type.
pub fn apply_noise(
    values: &mut [Scalar],
    slots: &[AggSlot],
    scale: f64,
    rng: &mut impl RngCore,
) {
    for (value, slot) in values.iter_mut().zip(slots) {
        let lap = laplace(scale, rng);
        *value = match (slot, &*value) {
            (AggSlot::Count, Scalar::Int(n)) => {
                Scalar::Int((*n as f64 + lap).round().max(0.0) as i64)
            }
            (
                AggSlot::Sum {
                    dtype: DType::Int64,
                    ..
                },
                Scalar::Int(n),
            ) => Scalar::Int((*n as f64 + lap).round() as i64),
            (AggSlot::Sum { .. }, Scalar::Float(x)) => Scalar::Float(x + lap),
            (_, other) => other.clone(),
        };
    }
}
