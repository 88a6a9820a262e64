//! dB / linear conversions.

#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(23.0) - 0.199_526_231_496_888).abs() < 1e-12);
        assert!((watts_to_dbm(dbm_to_watts(-17.5)) + 17.5).abs() < 1e-12);
        assert!((linear_to_db(db_to_linear(3.0)) - 3.0).abs() < 1e-12);
    }
}
