//! Tatonnement price adjustment `dp_-l/dt = z_-l(p)` and spectral stability
//! classification of equilibria.

use nalgebra::{Complex, DVector};

use crate::config::Tolerances;
use crate::economy::{Allocation, Economy, Price};
use crate::equilibrium::{excess_demand_truncated, EquilibriumRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Stable,
    Unstable,
    Marginal,
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StabilityClass::Stable => write!(f, "stable"),
            StabilityClass::Unstable => write!(f, "unstable"),
            StabilityClass::Marginal => write!(f, "marginal"),
        }
    }
}

/// Spectrum of the equilibrium Jacobian and the resulting classification.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub classification: StabilityClass,
    pub max_real_part: f64,
}

/// Classify a regular equilibrium: local tatonnement stability needs every
/// eigenvalue of J strictly in the left half plane.
pub fn stability(rec: &EquilibriumRecord, tol: &Tolerances) -> Result<StabilityReport> {
    if !rec.regular {
        return Err(Error::NotRegular {
            det_abs: rec.det_j.abs(),
            threshold: rec.regularity_threshold,
        });
    }
    let eigenvalues: Vec<Complex<f64>> = rec
        .jacobian
        .clone()
        .complex_eigenvalues()
        .iter()
        .cloned()
        .collect();
    let max_real_part = eigenvalues
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = (0..rec.jacobian.nrows())
        .map(|i| rec.jacobian.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let margin = tol.stability_margin * scale.max(1e-300);
    let classification = if max_real_part < -margin {
        StabilityClass::Stable
    } else if max_real_part > margin {
        StabilityClass::Unstable
    } else {
        StabilityClass::Marginal
    };
    Ok(StabilityReport {
        eigenvalues,
        classification,
        max_real_part,
    })
}

/// A simulated price path. `converged` means the excess-demand residual fell
/// under the Newton tolerance; `hit_guard` means some price coordinate
/// reached the positivity guard (an operational divergence signal).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, Price)>,
    pub converged: bool,
    pub hit_guard: bool,
}

impl Trajectory {
    pub fn end(&self) -> &(f64, Price) {
        self.samples.last().expect("trajectory has a start sample")
    }
}

fn rhs(
    eco: &Economy,
    omega: &Allocation,
    p: &DVector<f64>,
    floor: f64,
) -> Option<DVector<f64>> {
    if p.iter().any(|&v| v < floor) {
        return None;
    }
    let price = Price::from_truncated(p).ok()?;
    excess_demand_truncated(eco, omega, &price).ok()
}

/// Classical fourth-order explicit integration of the tatonnement flow with
/// the numeraire held fixed. The step halves (up to 20 times) whenever an
/// intermediate stage leaves the orthant guard.
pub fn tatonnement(
    eco: &Economy,
    omega: &Allocation,
    p0: &Price,
    dt: f64,
    t_max: f64,
    tol: &Tolerances,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_max >= 0.0) {
        return Err(Error::Validation("dt and t_max must be positive".into()));
    }
    let floor = tol.tatonnement_floor;
    let mut p = p0.truncated();
    let mut t = 0.0;
    let mut samples = vec![(t, Price::from_truncated(&p)?)];
    let mut converged = false;
    let mut hit_guard = false;

    while t < t_max {
        let z = rhs(eco, omega, &p, floor)
            .ok_or(Error::Domain("price left the guarded orthant".into()))?;
        if z.amax() < tol.newton_residual {
            converged = true;
            break;
        }
        let mut h = dt.min(t_max - t);
        let mut next = None;
        for _ in 0..=20 {
            let k1 = z.clone();
            let stage = |q: &DVector<f64>| rhs(eco, omega, q, floor);
            let s2 = &p + &k1 * (0.5 * h);
            let Some(k2) = stage(&s2) else {
                h *= 0.5;
                continue;
            };
            let s3 = &p + &k2 * (0.5 * h);
            let Some(k3) = stage(&s3) else {
                h *= 0.5;
                continue;
            };
            let s4 = &p + &k3 * h;
            let Some(k4) = stage(&s4) else {
                h *= 0.5;
                continue;
            };
            let candidate = &p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if candidate.iter().all(|&v| v >= floor) {
                next = Some(candidate);
                break;
            }
            h *= 0.5;
        }
        let Some(candidate) = next else {
            return Err(Error::StepTooLarge { time: t });
        };
        p = candidate;
        t += h;
        samples.push((t, Price::from_truncated(&p)?));
        if p.iter().any(|&v| v <= floor * 2.0) {
            hit_guard = true;
            break;
        }
    }
    Ok(Trajectory {
        samples,
        converged,
        hit_guard,
    })
}
