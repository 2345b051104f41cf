//! Central-cut ellipsoid method for low-dimensional convex dual searches.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// `{x : (x - c)^T P^{-1} (x - c) <= 1}` with `P` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        let n = center.len();
        if n == 0 || shape.nrows() != n || shape.ncols() != n {
            return Err(Error::Contract("ellipsoid center and shape dimensions differ".into()));
        }
        let scale = shape.amax().max(f64::MIN_POSITIVE);
        if (&shape - shape.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Contract("ellipsoid shape is not symmetric".into()));
        }
        if shape.clone().cholesky().is_none() {
            return Err(Error::Numerical("ellipsoid shape is not positive definite".into()));
        }
        Ok(Self { center, shape })
    }

    /// Ball of the given radius.
    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        let n = center.len();
        Self {
            center,
            shape: DMatrix::identity(n, n) * (radius * radius),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    /// Normalized squared distance `(x - c)^T P^{-1} (x - c)`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        match self.shape.clone().cholesky() {
            Some(ch) => d.dot(&ch.solve(&d)),
            None => f64::INFINITY,
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.quadratic_form(x) <= 1.0
    }

    /// `sqrt(g^T P g)`, the largest decrease of the linear model over the ellipsoid.
    pub fn width_along(&self, g: &DVector<f64>) -> f64 {
        g.dot(&(&self.shape * g)).max(0.0).sqrt()
    }

    /// Keeps the half `{x : g^T (x - c) <= 0}` and replaces the ellipsoid by
    /// the minimum-volume ellipsoid containing it.
    pub fn cut(&mut self, g: &DVector<f64>) -> Result<()> {
        let n = self.dim() as f64;
        let pg = &self.shape * g;
        let gpg = g.dot(&pg);
        if !(gpg.is_finite() && gpg > 0.0) {
            return Err(Error::Numerical(format!("degenerate cut, g^T P g = {gpg}")));
        }
        let b = pg / gpg.sqrt();
        if n == 1.0 {
            self.center -= &b * 0.5;
            self.shape *= 0.25;
            return Ok(());
        }
        self.center -= &b / (n + 1.0);
        let bbt = &b * b.transpose();
        self.shape = (&self.shape - bbt * (2.0 / (n + 1.0))) * (n * n / (n * n - 1.0));
        let sym = (&self.shape + self.shape.transpose()) * 0.5;
        self.shape = sym;
        if (0..self.dim()).any(|i| !(self.shape[(i, i)] > 0.0)) {
            return Err(Error::Numerical("ellipsoid shape lost positive definiteness".into()));
        }
        Ok(())
    }
}

/// Sign constraint on one coordinate of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Free,
    NonNegative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidOptions {
    /// Stop when `sqrt(g^T P g)` falls to this value.
    pub size_tol: f64,
    pub max_iter: usize,
    /// Stop as soon as an oracle value drops below this.
    pub early_exit: Option<f64>,
    /// Restarts with a grown initial ellipsoid when the best point lies
    /// near the boundary of the initial one.
    pub max_restarts: usize,
    pub restart_growth: f64,
    pub boundary_fraction: f64,
}

impl Default for EllipsoidOptions {
    fn default() -> Self {
        Self {
            size_tol: 1e-7,
            max_iter: 2000,
            early_exit: None,
            max_restarts: 3,
            restart_growth: 10.0,
            boundary_fraction: 0.9,
        }
    }
}

/// What the oracle reports at a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnswer {
    pub value: f64,
    pub subgradient: DVector<f64>,
    /// The oracle has found what the caller needs; stop immediately.
    pub stop: bool,
}

impl OracleAnswer {
    pub fn new(value: f64, subgradient: DVector<f64>) -> Self {
        Self { value, subgradient, stop: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllipsoidStatus {
    Converged,
    /// An oracle value fell below the early-exit threshold.
    EarlyExit,
    IterationCap,
    /// The oracle asked to stop.
    OracleStop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidOutcome {
    /// Best point found, or the point that triggered an early stop.
    pub point: DVector<f64>,
    pub value: f64,
    pub status: EllipsoidStatus,
    pub iterations: usize,
    pub restarts: usize,
}

fn project(x: &DVector<f64>, bounds: &[Bound]) -> DVector<f64> {
    let mut p = x.clone();
    for (v, b) in p.iter_mut().zip(bounds) {
        if *b == Bound::NonNegative && *v < 0.0 {
            *v = 0.0;
        }
    }
    p
}

/// Most violated sign constraint at `x`, if any.
fn violated(x: &DVector<f64>, bounds: &[Bound]) -> Option<usize> {
    x.iter()
        .zip(bounds)
        .enumerate()
        .filter(|(_, (v, b))| **b == Bound::NonNegative && **v < 0.0)
        .min_by(|a, b| a.1 .0.total_cmp(b.1 .0))
        .map(|(i, _)| i)
}

/// Minimizes a convex function given through a value/subgradient oracle.
///
/// The oracle is always queried at points satisfying `bounds`: a center
/// outside the orthant is projected for the query and then cut away with
/// the violated constraint's gradient.
pub fn ellipsoid_minimize<F>(
    mut oracle: F,
    init: Ellipsoid,
    bounds: &[Bound],
    opts: &EllipsoidOptions,
) -> Result<EllipsoidOutcome>
where
    F: FnMut(&DVector<f64>) -> Result<OracleAnswer>,
{
    if bounds.len() != init.dim() {
        return Err(Error::Contract("one bound per ellipsoid coordinate required".into()));
    }
    let mut total_iter = 0;
    let mut start = init.clone();
    let mut restarts = 0;
    loop {
        let mut e = start.clone();
        let mut best: Option<(DVector<f64>, f64)> = None;
        let mut status = EllipsoidStatus::IterationCap;
        for _ in 0..opts.max_iter {
            total_iter += 1;
            let x = project(e.center(), bounds);
            let ans = oracle(&x)?;
            if ans.value.is_nan() || ans.subgradient.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("oracle returned a non-finite answer at {x:?}")));
            }
            if ans.subgradient.len() != e.dim() {
                return Err(Error::Contract("subgradient dimension mismatch".into()));
            }
            if best.as_ref().is_none_or(|(_, v)| ans.value < *v) {
                best = Some((x.clone(), ans.value));
            }
            if let Some(thr) = opts.early_exit {
                if ans.value < thr {
                    return Ok(EllipsoidOutcome {
                        point: x,
                        value: ans.value,
                        status: EllipsoidStatus::EarlyExit,
                        iterations: total_iter,
                        restarts,
                    });
                }
            }
            if ans.stop {
                return Ok(EllipsoidOutcome {
                    point: x,
                    value: ans.value,
                    status: EllipsoidStatus::OracleStop,
                    iterations: total_iter,
                    restarts,
                });
            }
            match violated(e.center(), bounds) {
                Some(i) => {
                    let mut g = DVector::zeros(e.dim());
                    g[i] = -1.0;
                    e.cut(&g)?;
                }
                None => {
                    if e.width_along(&ans.subgradient) <= opts.size_tol {
                        status = EllipsoidStatus::Converged;
                        break;
                    }
                    e.cut(&ans.subgradient)?;
                }
            }
        }
        let (point, value) = best.expect("at least one oracle call");
        let near_edge = start.quadratic_form(&point) >= opts.boundary_fraction.powi(2);
        if near_edge && restarts < opts.max_restarts {
            restarts += 1;
            log::warn!(
                "ellipsoid optimum {point:?} near the initial boundary, restart {restarts} with a larger ellipsoid"
            );
            let g2 = opts.restart_growth * opts.restart_growth;
            start = Ellipsoid::new(init.center().clone(), start.shape() * g2)?;
            continue;
        }
        return Ok(EllipsoidOutcome {
            point,
            value,
            status,
            iterations: total_iter,
            restarts,
        });
    }
}
