//! Excess demand, its Jacobian, damped-Newton equilibrium solving and the
//! index of a regular equilibrium.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::Tolerances;
use crate::economy::{Allocation, Economy, Price};
use crate::error::{Error, Result};

/// A solved (or evaluated) equilibrium candidate with its local data.
#[derive(Debug, Clone)]
pub struct EquilibriumRecord {
    pub price: Price,
    /// `max|z_-l|` at the price.
    pub residual_norm: f64,
    /// Jacobian of truncated excess demand in truncated prices, analytic.
    pub jacobian: DMatrix<f64>,
    pub det_j: f64,
    /// `|det J|` must clear this scale-aware threshold for regularity.
    pub regularity_threshold: f64,
    pub regular: bool,
    /// `sign((-1)^(l-1) det J)`, populated only when regular.
    pub index: Option<i8>,
    /// Newton iterations spent (0 when the start was already an equilibrium).
    pub iterations: usize,
}

/// Social excess demand `z(p, omega) = sum_i f_i(p, p.omega_i) - r`.
pub fn excess_demand(eco: &Economy, omega: &Allocation, p: &Price) -> Result<DVector<f64>> {
    if omega.traders() != eco.traders() {
        return Err(Error::Validation(
            "allocation and economy disagree on trader count".into(),
        ));
    }
    if p.len() != eco.goods() {
        return Err(Error::Validation(
            "price and economy disagree on good count".into(),
        ));
    }
    let mut total = DVector::zeros(eco.goods());
    for i in 0..eco.traders() {
        let income = omega.income(i, p);
        if income <= 0.0 {
            return Err(Error::Domain(format!(
                "trader {i} has non-positive income {income} at this price"
            )));
        }
        total += eco.utility_spec(i).demand(p, income)?;
    }
    Ok(total - eco.resources())
}

/// First `l-1` components of the excess demand. By Walras's law this
/// vanishes exactly when the full excess demand does.
pub fn excess_demand_truncated(
    eco: &Economy,
    omega: &Allocation,
    p: &Price,
) -> Result<DVector<f64>> {
    let z = excess_demand(eco, omega, p)?;
    Ok(z.rows(0, z.len() - 1).into())
}

/// How to evaluate the Jacobian of truncated excess demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianMethod {
    Analytic,
    /// Central differences with a relative step.
    FiniteDifference { step: f64 },
}

/// Jacobian `J = D z_-l / D p_-l`, an `(l-1) x (l-1)` matrix.
pub fn jacobian(
    eco: &Economy,
    omega: &Allocation,
    p: &Price,
    method: JacobianMethod,
) -> Result<DMatrix<f64>> {
    match method {
        JacobianMethod::Analytic => jacobian_analytic(eco, omega, p),
        JacobianMethod::FiniteDifference { step } => jacobian_fd(eco, omega, p, step),
    }
}

fn jacobian_analytic(eco: &Economy, omega: &Allocation, p: &Price) -> Result<DMatrix<f64>> {
    let l = eco.goods();
    let mut jac = DMatrix::zeros(l - 1, l - 1);
    for i in 0..eco.traders() {
        let income = omega.income(i, p);
        if income <= 0.0 {
            return Err(Error::Domain(format!(
                "trader {i} has non-positive income {income} at this price"
            )));
        }
        let spec = eco.utility_spec(i);
        let dp = spec.demand_price_jacobian(p, income); // l x (l-1)
        let dw = spec.demand_income_derivative(p, income); // l
        let row = omega.row(i);
        for j in 0..l - 1 {
            for k in 0..l - 1 {
                jac[(j, k)] += dp[(j, k)] + dw[j] * row[k];
            }
        }
    }
    Ok(jac)
}

fn jacobian_fd(eco: &Economy, omega: &Allocation, p: &Price, step: f64) -> Result<DMatrix<f64>> {
    let l = eco.goods();
    let truncated = p.truncated();
    let mut jac = DMatrix::zeros(l - 1, l - 1);
    for k in 0..l - 1 {
        let h = step * truncated[k];
        let mut plus = truncated.clone();
        let mut minus = truncated.clone();
        plus[k] += h;
        minus[k] -= h;
        let zp = excess_demand_truncated(eco, omega, &Price::from_truncated(&plus)?)?;
        let zm = excess_demand_truncated(eco, omega, &Price::from_truncated(&minus)?)?;
        let col = (zp - zm) / (2.0 * h);
        jac.set_column(k, &col);
    }
    Ok(jac)
}

fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn index_from_det(det: f64, goods: usize) -> i8 {
    let signed = if (goods - 1) % 2 == 0 { det } else { -det };
    if signed > 0.0 {
        1
    } else {
        -1
    }
}

/// Evaluate the equilibrium data (residual, Jacobian, regularity, index) at a
/// given price without solving.
pub fn record_at(
    eco: &Economy,
    omega: &Allocation,
    p: &Price,
    tol: &Tolerances,
) -> Result<EquilibriumRecord> {
    record_with_iterations(eco, omega, p.clone(), 0, tol)
}

fn record_with_iterations(
    eco: &Economy,
    omega: &Allocation,
    p: Price,
    iterations: usize,
    tol: &Tolerances,
) -> Result<EquilibriumRecord> {
    let z = excess_demand_truncated(eco, omega, &p)?;
    let jac = jacobian_analytic(eco, omega, &p)?;
    let det = jac.clone().determinant();
    let threshold =
        tol.regularity_scale * (1.0 + max_row_sum(&jac)).powi(eco.goods() as i32 - 1);
    let regular = det.is_finite() && det.abs() > threshold;
    Ok(EquilibriumRecord {
        residual_norm: z.amax(),
        index: regular.then(|| index_from_det(det, eco.goods())),
        det_j: det,
        regularity_threshold: threshold,
        regular,
        jacobian: jac,
        price: p,
        iterations,
    })
}

/// Damped Newton on `z_-l(p) = 0` with a positivity guard, starting at `p0`.
pub fn find_equilibrium(
    eco: &Economy,
    omega: &Allocation,
    p0: &Price,
    tol: &Tolerances,
) -> Result<EquilibriumRecord> {
    let mut p = p0.truncated();
    let mut z = excess_demand_truncated(eco, omega, &Price::from_truncated(&p)?)?;
    for iteration in 0..tol.newton_max_iter {
        if z.amax() < tol.newton_residual {
            return record_with_iterations(
                eco,
                omega,
                Price::from_truncated(&p)?,
                iteration,
                tol,
            );
        }
        let jac = jacobian_analytic(eco, omega, &Price::from_truncated(&p)?)?;
        let direction = jac.lu().solve(&z).ok_or(Error::NoConvergence {
            iterations: iteration,
            residual: z.amax(),
        })?;

        // Backtracking line search on the residual norm, halving until the
        // iterate stays in the orthant and the residual drops.
        let mut t = 1.0_f64;
        let mut hit_boundary = false;
        let mut accepted = None;
        while t >= 1e-12 {
            let candidate = &p - &direction * t;
            if candidate.iter().any(|&v| v < tol.price_floor) {
                hit_boundary = true;
                t *= tol.newton_backtrack;
                continue;
            }
            match excess_demand_truncated(eco, omega, &Price::from_truncated(&candidate)?) {
                Ok(z_new) if z_new.amax() <= (1.0 - 1e-4 * t) * z.amax() => {
                    accepted = Some((candidate, z_new));
                    break;
                }
                _ => t *= tol.newton_backtrack,
            }
        }
        match accepted {
            Some((candidate, z_new)) => {
                p = candidate;
                z = z_new;
            }
            None if hit_boundary => return Err(Error::LeftDomain { iteration }),
            None => {
                return Err(Error::NoConvergence {
                    iterations: iteration,
                    residual: z.amax(),
                })
            }
        }
    }
    if z.amax() < tol.newton_residual {
        return record_with_iterations(
            eco,
            omega,
            Price::from_truncated(&p)?,
            tol.newton_max_iter,
            tol,
        );
    }
    Err(Error::NoConvergence {
        iterations: tol.newton_max_iter,
        residual: z.amax(),
    })
}

/// Per-coordinate logarithmic seed grid for the multi-start scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    /// `(log10 lo, log10 hi)` per truncated price coordinate.
    pub log10_ranges: Vec<(f64, f64)>,
    pub points_per_axis: usize,
}

impl ScanGrid {
    /// Default grid: `[1e-3, 1e3]` per axis, 15 points per axis up to three
    /// goods, 7 beyond (seed count grows geometrically with `l`).
    pub fn default_for_goods(goods: usize) -> Self {
        Self {
            log10_ranges: vec![(-3.0, 3.0); goods - 1],
            points_per_axis: if goods <= 3 { 15 } else { 7 },
        }
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points_per_axis = points.max(2);
        self
    }

    fn seeds(&self) -> Vec<DVector<f64>> {
        let axes: Vec<Vec<f64>> = self
            .log10_ranges
            .iter()
            .map(|&(lo, hi)| {
                (0..self.points_per_axis)
                    .map(|i| {
                        let s = i as f64 / (self.points_per_axis - 1) as f64;
                        10f64.powf(lo + s * (hi - lo))
                    })
                    .collect()
            })
            .collect();
        let mut seeds = vec![DVector::zeros(axes.len())];
        for (axis_idx, axis) in axes.iter().enumerate() {
            let mut next = Vec::with_capacity(seeds.len() * axis.len());
            for seed in &seeds {
                for &v in axis {
                    let mut s = seed.clone();
                    s[axis_idx] = v;
                    next.push(s);
                }
            }
            seeds = next;
        }
        seeds
    }
}

fn relative_price_distance(a: &Price, b: &Price) -> f64 {
    a.components()
        .iter()
        .zip(b.components().iter())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}

fn lex_less(a: &Price, b: &Price) -> std::cmp::Ordering {
    for (x, y) in a.components().iter().zip(b.components().iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    std::cmp::Ordering::Equal
}

/// Multi-start Newton over a log grid of seeds, deduplicated by relative
/// price distance and sorted lexicographically. Starts that fail (leave the
/// domain, stall, or hit zero incomes) are dropped; the result may be empty
/// when the grid misses every root.
pub fn find_all_equilibria(
    eco: &Economy,
    omega: &Allocation,
    scan: &ScanGrid,
    tol: &Tolerances,
) -> Vec<EquilibriumRecord> {
    let seeds = scan.seeds();
    let mut found: Vec<EquilibriumRecord> = seeds
        .par_iter()
        .filter_map(|seed| {
            let p0 = Price::from_truncated(seed).ok()?;
            find_equilibrium(eco, omega, &p0, tol).ok()
        })
        .collect();
    found.sort_by(|a, b| lex_less(&a.price, &b.price));
    let mut deduped: Vec<EquilibriumRecord> = Vec::new();
    for rec in found {
        match deduped
            .iter_mut()
            .find(|kept| relative_price_distance(&kept.price, &rec.price) <= tol.dedup_relative)
        {
            Some(kept) => {
                if rec.residual_norm < kept.residual_norm {
                    *kept = rec;
                }
            }
            None => deduped.push(rec),
        }
    }
    deduped.sort_by(|a, b| lex_less(&a.price, &b.price));
    deduped
}

/// The index of a regular equilibrium: `sign((-1)^(l-1) det J)`.
pub fn index_of(rec: &EquilibriumRecord) -> Result<i8> {
    rec.index.ok_or(Error::NotRegular {
        det_abs: rec.det_j.abs(),
        threshold: rec.regularity_threshold,
    })
}
