//! Learning-rate schedule: flat, then linear decay to zero.

/// Learning rate at a 0-based `epoch`: `base` through epoch `flat`, then a
/// straight line reaching zero at epoch `flat + decay`.
pub fn lr_at(base: f64, flat: usize, decay: usize, epoch: usize) -> f64 {
    if epoch < flat {
        base
    } else if epoch >= flat + decay {
        0.0
    } else {
        base * ((flat + decay - epoch) as f64) / (decay as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schedule_hits_the_reference_points() {
        assert_eq!(lr_at(0.002, 100, 50, 0), 0.002);
        assert_eq!(lr_at(0.002, 100, 50, 99), 0.002);
        assert!((lr_at(0.002, 100, 50, 125) - 0.001).abs() < 1e-15);
        assert_eq!(lr_at(0.002, 100, 50, 150), 0.0);
        assert_eq!(lr_at(0.002, 100, 50, 200), 0.0);
    }

    #[test]
    fn schedule_never_increases() {
        let mut prev = f64::INFINITY;
        for epoch in 0..200 {
            let lr = lr_at(0.002, 100, 50, epoch);
            assert!(lr <= prev, "lr must be non-increasing, rose at epoch {epoch}");
            assert!(lr >= 0.0);
            prev = lr;
        }
    }

    #[test]
    fn zero_decay_drops_straight_to_zero() {
        assert_eq!(lr_at(0.01, 3, 0, 2), 0.01);
        assert_eq!(lr_at(0.01, 3, 0, 3), 0.0);
    }
}
