/// Tick layout for a quantitative axis: `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NiceAxis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl NiceAxis {
    pub fn ticks(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as i64;
        (0..=n).map(|i| self.lo + self.step * i as f64).collect()
    }
}

/// Smallest integer of the form {1, 2, 5} x 10^k that is >= `x`.
fn nice_step(x: f64) -> f64 {
    let mut base = 1.0;
    loop {
        for m in [1.0, 2.0, 5.0] {
            if m * base >= x {
                return m * base;
            }
        }
        base *= 10.0;
    }
}

/// Axis covering `[min, max]` with about four integer steps. The top tick is
/// strictly above `max`; a non-zero-based axis also starts strictly below `min`.
pub fn nice_axis(min: f64, max: f64, zero_based: bool) -> NiceAxis {
    let base = if zero_based { 0.0 } else { min };
    let step = nice_step(((max - base) / 4.0).max(1.0));
    let lo = if zero_based { 0.0 } else { ((min / step).ceil() - 1.0) * step };
    let hi = ((max / step).floor() + 1.0) * step;
    NiceAxis { lo, hi, step }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_bars_get_zero_to_forty() {
        let a = nice_axis(0.0, 30.0, true);
        assert_eq!(a.ticks(), vec![0.0, 10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn offset_axis_brackets_data() {
        let a = nice_axis(150.0, 186.0, false);
        assert_eq!((a.lo, a.hi, a.step), (140.0, 190.0, 10.0));
        let b = nice_axis(0.0, 65.0, true);
        assert_eq!((b.lo, b.hi, b.step), (0.0, 80.0, 20.0));
    }
}
