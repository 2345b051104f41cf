//! Decibel conversions. Everything past config parsing is linear.

/// Power ratio in dB to linear.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// dBm to milliwatts. The geometric scenario keeps all powers in mW.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(db_to_linear(20.0), 100.0);
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((dbm_to_mw(-80.0) / 1e-8 - 1.0).abs() < 1e-12);
        assert!((linear_to_db(1e3) - 30.0).abs() < 1e-12);
    }
}
