//! Min-max rescaling of each variable onto `[0, 1]`.

use alloc::vec::Vec;

use crate::error::{CarError, Result};
use crate::linalg::Mat;
use crate::panel::LongitudinalPanel;

/// Maps every value to `(x - min_j) / (max_j - min_j)` with extrema taken per
/// variable over all units and times. Each variable attains both endpoints.
pub fn minmax_normalize(panel: &LongitudinalPanel) -> Result<LongitudinalPanel> {
    let j = panel.n_vars();
    let mut lo = Vec::with_capacity(j);
    let mut hi = Vec::with_capacity(j);
    for v in 0..j {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for t in 0..panel.n_times() {
            for i in 0..panel.n_units() {
                let x = panel.value(i, v, t);
                min = min.min(x);
                max = max.max(x);
            }
        }
        if max <= min {
            return Err(CarError::ConstantVariable { variable: v });
        }
        lo.push(min);
        hi.push(max);
    }
    let slices = (0..panel.n_times())
        .map(|t| {
            Mat::from_fn(panel.n_units(), j, |i, v| {
                (panel.value(i, v, t) - lo[v]) / (hi[v] - lo[v])
            })
        })
        .collect();
    LongitudinalPanel::new(
        slices,
        panel.unit_ids().to_vec(),
        panel.var_names().to_vec(),
        panel.time_points().to_vec(),
    )
}
