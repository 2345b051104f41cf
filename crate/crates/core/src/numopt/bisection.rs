use crate::{Error, Result};

/// Bracket and stopping rule for scalar bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionSetup {
    pub lo: f64,
    pub hi: f64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl BisectionSetup {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            tol_abs: 1e-12,
            tol_rel: 1e-10,
            max_iter: 200,
        }
    }

    pub fn tol_abs(mut self, tol: f64) -> Self {
        self.tol_abs = tol;
        self
    }

    pub fn tol_rel(mut self, tol: f64) -> Self {
        self.tol_rel = tol;
        self
    }

    pub fn max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Contract(format!(
                "bisection needs finite lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::Contract("bisection tolerances must be positive".into()));
        }
        Ok(())
    }

    fn done(&self, lo: f64, hi: f64) -> bool {
        let mid = 0.5 * (lo + hi);
        hi - lo <= self.tol_abs.max(self.tol_rel * mid.abs())
    }
}

/// Returned point together with the final bracket, which always contains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionResult {
    pub x: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Root of a monotone residual `f` over `[lo, hi]`.
///
/// `f(lo)` and `f(hi)` must differ in sign (a zero at either end is
/// returned immediately).
pub fn bisect_monotone<F: FnMut(f64) -> f64>(mut f: F, setup: BisectionSetup) -> Result<BisectionResult> {
    setup.validate()?;
    let (mut lo, mut hi) = (setup.lo, setup.hi);
    let f_lo = f(lo);
    if f_lo == 0.0 {
        return Ok(BisectionResult { x: lo, lo, hi: lo, iterations: 0 });
    }
    let f_hi = f(hi);
    if f_hi == 0.0 {
        return Ok(BisectionResult { x: hi, lo: hi, hi, iterations: 0 });
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { lo, hi });
    }
    let lo_negative = f_lo < 0.0;
    for it in 1..=setup.max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(BisectionResult { x: mid, lo: mid, hi: mid, iterations: it });
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
        if setup.done(lo, hi) {
            return Ok(BisectionResult { x: 0.5 * (lo + hi), lo, hi, iterations: it });
        }
    }
    Err(Error::Convergence {
        what: format!("residual bisection, bracket [{lo}, {hi}]"),
        iterations: setup.max_iter,
    })
}

/// Smallest `x` in `[lo, hi]` at which the monotone predicate turns true.
///
/// Requires `pred(hi)` true. If `pred(lo)` already holds, `lo` is returned.
/// Otherwise the result is the upper end of the final bracket, so `pred(x)`
/// holds at the returned point.
pub fn bisect_threshold<F: FnMut(f64) -> bool>(mut pred: F, setup: BisectionSetup) -> Result<BisectionResult> {
    setup.validate()?;
    let (mut lo, mut hi) = (setup.lo, setup.hi);
    if pred(lo) {
        return Ok(BisectionResult { x: lo, lo, hi: lo, iterations: 0 });
    }
    if !pred(hi) {
        return Err(Error::Bracket { lo, hi });
    }
    for it in 1..=setup.max_iter {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if setup.done(lo, hi) {
            return Ok(BisectionResult { x: hi, lo, hi, iterations: it });
        }
    }
    Err(Error::Convergence {
        what: format!("predicate bisection, bracket [{lo}, {hi}]"),
        iterations: setup.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_root() {
        let r = bisect_monotone(|x| x - 2.0, BisectionSetup::new(0.0, 10.0).tol_abs(1e-9)).unwrap();
        assert!((r.x - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sqrt_two() {
        let r = bisect_monotone(|x| x * x - 2.0, BisectionSetup::new(0.0, 2.0)).unwrap();
        assert!((r.x - std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn decreasing_residual() {
        let r = bisect_monotone(|x| 3.0 - x, BisectionSetup::new(0.0, 10.0)).unwrap();
        assert!((r.x - 3.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_at_pi() {
        let pi = std::f64::consts::PI;
        let r = bisect_threshold(|x| x >= pi, BisectionSetup::new(0.0, 4.0)).unwrap();
        assert!(r.x >= pi && r.x - pi < 1e-9);
    }

    #[test]
    fn no_sign_change_is_an_error() {
        let e = bisect_monotone(|x| x + 1.0, BisectionSetup::new(0.0, 1.0)).unwrap_err();
        assert!(matches!(e, Error::Bracket { .. }));
        let e = bisect_threshold(|_| false, BisectionSetup::new(0.0, 1.0)).unwrap_err();
        assert!(matches!(e, Error::Bracket { .. }));
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let setup = BisectionSetup::new(0.0, 1.0).tol_abs(1e-300).tol_rel(1e-300).max_iter(5);
        let e = bisect_monotone(|x| x - 0.3, setup).unwrap_err();
        assert!(matches!(e, Error::Convergence { iterations: 5, .. }));
    }

    #[test]
    fn bad_bracket_rejected() {
        assert!(bisect_monotone(|x| x, BisectionSetup::new(1.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn bracket_contains_result(root in -50.0f64..50.0, width in 1.0f64..100.0) {
            let setup = BisectionSetup::new(root - width * 0.3, root + width);
            let r = bisect_monotone(|x| x - root, setup).unwrap();
            prop_assert!(r.lo <= r.x && r.x <= r.hi);
            prop_assert!(r.lo <= root + 1e-9 && root - 1e-9 <= r.hi);
        }

        #[test]
        fn threshold_result_satisfies_predicate(cut in 0.001f64..0.999) {
            let r = bisect_threshold(|x| x >= cut, BisectionSetup::new(0.0, 1.0)).unwrap();
            prop_assert!(r.x >= cut);
            prop_assert!(r.lo <= r.x && r.x <= r.hi);
        }
    }
}
