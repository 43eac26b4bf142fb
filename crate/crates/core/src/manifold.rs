//! Price-income space geometry: the Pareto parametrization of the section
//! manifold, the budget-space basis and the intersection determinant whose
//! sign equals the index at a regular equilibrium.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Tolerances;
use crate::economy::{Allocation, Economy, Price};
use crate::equilibrium::excess_demand_truncated;
use crate::error::{Error, Result};

/// Fixed seed for the Pareto solver's randomized fallback starts; part of the
/// determinism contract.
const FALLBACK_SEED: u64 = 0x9d5c_7a11_22b4_e01f;
const FALLBACK_STARTS: usize = 10;
const PARETO_MAX_ITER: usize = 80;

/// Target utility levels for the first `n-1` traders; membership in the
/// feasible set is certified by the solver succeeding.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityLevels {
    values: Vec<f64>,
}

impl UtilityLevels {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn perturbed(&self, coordinate: usize, delta: f64) -> Self {
        let mut values = self.values.clone();
        values[coordinate] += delta;
        Self { values }
    }
}

/// A point of the price-income space in its `(p_1..p_{l-1}, w_1..w_{n-1})`
/// coordinates. The numeraire price and the last trader's income are implied.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceIncomePoint {
    coords: DVector<f64>,
    goods: usize,
    traders: usize,
}

impl PriceIncomePoint {
    pub fn new(coords: DVector<f64>, eco: &Economy) -> Result<Self> {
        let goods = eco.goods();
        let traders = eco.traders();
        if coords.len() != goods + traders - 2 {
            return Err(Error::Validation(format!(
                "price-income point needs {} coordinates, got {}",
                goods + traders - 2,
                coords.len()
            )));
        }
        let point = Self {
            coords,
            goods,
            traders,
        };
        let price = point.price()?;
        if point.last_income(eco, &price) < 0.0 {
            return Err(Error::Validation(
                "implied income of the last trader is negative".into(),
            ));
        }
        Ok(point)
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn price(&self) -> Result<Price> {
        Price::from_truncated(&self.coords.rows(0, self.goods - 1).into())
    }

    /// Incomes of the first `n-1` traders.
    pub fn incomes(&self) -> DVector<f64> {
        self.coords.rows(self.goods - 1, self.traders - 1).into()
    }

    /// The implied income of trader `n`: `p.r - sum of the others`.
    pub fn last_income(&self, eco: &Economy, price: &Price) -> f64 {
        price.dot(eco.resources()) - self.incomes().sum()
    }
}

/// A Pareto-optimal allocation with its (unique) supporting price.
#[derive(Debug, Clone)]
pub struct ParetoPoint {
    pub allocation: Vec<DVector<f64>>,
    pub price: Price,
}

struct ParetoSystem<'a> {
    eco: &'a Economy,
    targets: &'a [f64],
}

impl<'a> ParetoSystem<'a> {
    fn traders(&self) -> usize {
        self.eco.traders()
    }

    fn goods(&self) -> usize {
        self.eco.goods()
    }

    fn dim(&self) -> usize {
        (self.traders() - 1) * (self.goods() + 1)
    }

    fn bundle(&self, v: &DVector<f64>, trader: usize) -> DVector<f64> {
        v.rows(trader * self.goods(), self.goods()).into()
    }

    fn multiplier(&self, v: &DVector<f64>, trader: usize) -> f64 {
        v[(self.traders() - 1) * self.goods() + trader]
    }

    fn last_bundle(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut x = self.eco.resources().clone();
        for i in 0..self.traders() - 1 {
            x -= self.bundle(v, i);
        }
        x
    }

    fn in_domain(&self, v: &DVector<f64>) -> bool {
        let floor: Vec<f64> = self.eco.resources().iter().map(|&r| 1e-13 * r).collect();
        for i in 0..self.traders() - 1 {
            let x = self.bundle(v, i);
            if x.iter().zip(&floor).any(|(&xv, &f)| xv < f) {
                return false;
            }
            if self.multiplier(v, i) < 1e-12 {
                return false;
            }
        }
        self.last_bundle(v)
            .iter()
            .zip(&floor)
            .all(|(&xv, &f)| xv >= f)
    }

    fn residual(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.traders();
        let l = self.goods();
        let x_n = self.last_bundle(v);
        let g_n = self.eco.utility_spec(n - 1).gradient(&x_n)?;
        let mut r = DVector::zeros(self.dim());
        for i in 0..n - 1 {
            let x_i = self.bundle(v, i);
            let g_i = self.eco.utility_spec(i).gradient(&x_i)?;
            let mu = self.multiplier(v, i);
            for j in 0..l {
                r[i * l + j] = g_i[j] - mu * g_n[j];
            }
            r[(n - 1) * l + i] = self.eco.utility_spec(i).utility(&x_i)? - self.targets[i];
        }
        Ok(r)
    }

    fn jacobian(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.traders();
        let l = self.goods();
        let x_n = self.last_bundle(v);
        let g_n = self.eco.utility_spec(n - 1).gradient(&x_n)?;
        let h_n = self.eco.utility_spec(n - 1).hessian(&x_n)?;
        let mut jac = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..n - 1 {
            let x_i = self.bundle(v, i);
            let g_i = self.eco.utility_spec(i).gradient(&x_i)?;
            let h_i = self.eco.utility_spec(i).hessian(&x_i)?;
            let mu = self.multiplier(v, i);
            for j in 0..l {
                let row = i * l + j;
                // d/d x_b: delta_ib H_i + mu_i H_n (x_n loses what x_b gains)
                for b in 0..n - 1 {
                    for c in 0..l {
                        let mut val = mu * h_n[(j, c)];
                        if b == i {
                            val += h_i[(j, c)];
                        }
                        jac[(row, b * l + c)] = val;
                    }
                }
                jac[(row, (n - 1) * l + i)] = -g_n[j];
            }
            let urow = (n - 1) * l + i;
            for c in 0..l {
                jac[(urow, i * l + c)] = g_i[c];
            }
        }
        Ok(jac)
    }

    /// sin of the angle between each trader's gradient and the supporting
    /// direction, plus the worst utility-target mismatch.
    fn optimality_gap(&self, v: &DVector<f64>) -> Result<(f64, f64)> {
        let n = self.traders();
        let x_n = self.last_bundle(v);
        let g_n = self.eco.utility_spec(n - 1).gradient(&x_n)?;
        let g_n_hat = &g_n / g_n.norm();
        let mut worst_angle = 0.0_f64;
        let mut worst_target = 0.0_f64;
        for i in 0..n - 1 {
            let x_i = self.bundle(v, i);
            let g_i = self.eco.utility_spec(i).gradient(&x_i)?;
            let g_i_hat = &g_i / g_i.norm();
            let sine = (&g_i_hat - &g_n_hat * g_i_hat.dot(&g_n_hat)).norm();
            worst_angle = worst_angle.max(sine);
            let miss = (self.eco.utility_spec(i).utility(&x_i)? - self.targets[i]).abs()
                / (1.0 + self.targets[i].abs());
            worst_target = worst_target.max(miss);
        }
        Ok((worst_angle, worst_target))
    }
}

fn initial_multipliers(sys: &ParetoSystem, v: &mut DVector<f64>) -> Result<()> {
    let n = sys.traders();
    let l = sys.goods();
    let x_n = sys.last_bundle(v);
    let g_n = sys.eco.utility_spec(n - 1).gradient(&x_n)?;
    for i in 0..n - 1 {
        let g_i = sys.eco.utility_spec(i).gradient(&sys.bundle(v, i))?;
        v[(n - 1) * l + i] = g_i[l - 1] / g_n[l - 1];
    }
    Ok(())
}

fn equal_split_start(sys: &ParetoSystem) -> Result<DVector<f64>> {
    let n = sys.traders();
    let l = sys.goods();
    let mut v = DVector::zeros(sys.dim());
    for i in 0..n - 1 {
        for j in 0..l {
            v[i * l + j] = sys.eco.resources()[j] / n as f64;
        }
    }
    initial_multipliers(sys, &mut v)?;
    Ok(v)
}

fn randomized_start(sys: &ParetoSystem, attempt: usize) -> Result<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(FALLBACK_SEED.wrapping_add(attempt as u64));
    let n = sys.traders();
    let l = sys.goods();
    let mut v = DVector::zeros(sys.dim());
    for j in 0..l {
        // random positive fractions of good j across all n traders
        let gammas: Vec<f64> = (0..n)
            .map(|_| -(rng.gen_range(1e-6..1.0_f64)).ln())
            .collect();
        let total: f64 = gammas.iter().sum();
        for (i, g) in gammas.iter().take(n - 1).enumerate() {
            v[i * l + j] = sys.eco.resources()[j] * g / total;
        }
    }
    initial_multipliers(sys, &mut v)?;
    Ok(v)
}

fn solve_pareto_from(sys: &ParetoSystem, mut v: DVector<f64>) -> Result<DVector<f64>> {
    if !sys.in_domain(&v) {
        return Err(Error::Infeasible("start point out of domain".into()));
    }
    let mut res = sys.residual(&v)?;
    for _ in 0..PARETO_MAX_ITER {
        let (angle, target_miss) = sys.optimality_gap(&v)?;
        if angle <= 1e-9 && target_miss <= 1e-10 {
            return Ok(v);
        }
        let jac = sys.jacobian(&v)?;
        let direction = jac
            .lu()
            .solve(&res)
            .ok_or_else(|| Error::Infeasible("singular first-order-condition system".into()))?;
        let mut t = 1.0_f64;
        let mut accepted = false;
        while t >= 1e-12 {
            let candidate = &v - &direction * t;
            if sys.in_domain(&candidate) {
                if let Ok(new_res) = sys.residual(&candidate) {
                    if new_res.norm() <= (1.0 - 1e-4 * t) * res.norm() {
                        v = candidate;
                        res = new_res;
                        accepted = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Infeasible("newton stalled on the FOC system".into()));
        }
    }
    let (angle, target_miss) = sys.optimality_gap(&v)?;
    if angle <= 1e-9 && target_miss <= 1e-10 {
        Ok(v)
    } else {
        Err(Error::Infeasible(format!(
            "FOC iteration cap reached (angle {angle:.3e}, target miss {target_miss:.3e})"
        )))
    }
}

/// Solve for the Pareto-optimal allocation at the requested utility levels of
/// the first `n-1` traders, maximizing the last trader, together with the
/// unique supporting price.
pub fn pareto_point(eco: &Economy, u: &UtilityLevels) -> Result<ParetoPoint> {
    if u.len() != eco.traders() - 1 {
        return Err(Error::Validation(format!(
            "expected {} utility levels, got {}",
            eco.traders() - 1,
            u.len()
        )));
    }
    let sys = ParetoSystem {
        eco,
        targets: u.values(),
    };
    let mut last_err = None;
    for attempt in 0..=FALLBACK_STARTS {
        let start = if attempt == 0 {
            equal_split_start(&sys)
        } else {
            randomized_start(&sys, attempt)
        };
        let solved = start.and_then(|v| solve_pareto_from(&sys, v));
        match solved {
            Ok(v) => {
                let n = eco.traders();
                let l = eco.goods();
                let mut allocation: Vec<DVector<f64>> =
                    (0..n - 1).map(|i| sys.bundle(&v, i)).collect();
                allocation.push(sys.last_bundle(&v));
                let g_n = eco.utility_spec(n - 1).gradient(&allocation[n - 1])?;
                let mut p_full = &g_n / g_n[l - 1];
                p_full[l - 1] = 1.0;
                return Ok(ParetoPoint {
                    allocation,
                    price: Price::new(p_full)?,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(Error::Infeasible(format!(
        "all starts failed; requested levels may be infeasible ({})",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// The parametrization map `M` of the section manifold: utility levels to
/// the price-income point of the supporting Pareto optimum.
pub fn section_point(eco: &Economy, u: &UtilityLevels) -> Result<PriceIncomePoint> {
    let pareto = pareto_point(eco, u)?;
    let l = eco.goods();
    let n = eco.traders();
    let mut coords = DVector::zeros(l + n - 2);
    for j in 0..l - 1 {
        coords[j] = pareto.price.components()[j];
    }
    for i in 0..n - 1 {
        coords[l - 1 + i] = pareto.price.dot(&pareto.allocation[i]);
    }
    PriceIncomePoint::new(coords, eco)
}

/// Aggregate-demand residual of a price-income point against the total
/// resources; zero (to tolerance) certifies membership in the section
/// manifold.
pub fn section_residual(eco: &Economy, point: &PriceIncomePoint) -> Result<f64> {
    let price = point.price()?;
    let incomes = point.incomes();
    let mut total = DVector::zeros(eco.goods());
    for i in 0..eco.traders() - 1 {
        total += eco.utility_spec(i).demand(&price, incomes[i])?;
    }
    let w_n = point.last_income(eco, &price);
    total += eco.utility_spec(eco.traders() - 1).demand(&price, w_n)?;
    Ok((total - eco.resources()).amax())
}

/// Central-difference columns `dM/du_i`, an `(l+n-2) x (n-1)` matrix.
/// The step for column `i` is `step * (1 + |u_i|)`.
pub fn m_jacobian_columns(eco: &Economy, u: &UtilityLevels, step: f64) -> Result<DMatrix<f64>> {
    let rows = eco.goods() + eco.traders() - 2;
    let cols = eco.traders() - 1;
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..cols {
        let h = step * (1.0 + u.values()[i].abs());
        let plus = section_point(eco, &u.perturbed(i, h))?;
        let minus = section_point(eco, &u.perturbed(i, -h))?;
        let col = (plus.coords() - minus.coords()) / (2.0 * h);
        m.set_column(i, &col);
    }
    Ok(m)
}

/// The basis of the budget space `A(omega)` in price-income coordinates:
/// vector `k` has a unit in price slot `k` and trader `i`'s endowment of good
/// `k` in income slot `i`.
pub fn budget_basis(omega: &Allocation) -> Vec<DVector<f64>> {
    let n = omega.traders();
    let l = omega.row(0).len();
    (0..l - 1)
        .map(|k| {
            let mut a = DVector::zeros(l + n - 2);
            a[k] = 1.0;
            for i in 0..n - 1 {
                a[l - 1 + i] = omega.row(i)[k];
            }
            a
        })
        .collect()
}

/// Utility levels realized by the first `n-1` traders' demands at `p`.
pub fn utility_levels_at(eco: &Economy, omega: &Allocation, p: &Price) -> Result<UtilityLevels> {
    let mut values = Vec::with_capacity(eco.traders() - 1);
    for i in 0..eco.traders() - 1 {
        let income = omega.income(i, p);
        if income <= 0.0 {
            return Err(Error::Domain(format!(
                "trader {i} has non-positive income {income}"
            )));
        }
        let bundle = eco.utility_spec(i).demand(p, income)?;
        values.push(eco.utility_spec(i).utility(&bundle)?);
    }
    Ok(UtilityLevels::new(values))
}

/// The intersection determinant
/// `det(a_1, .., a_{l-1}, dM/du_1, .., dM/du_{n-1})` at an equilibrium.
/// Column order follows the budget basis first; reordering flips signs.
pub fn delta(eco: &Economy, omega: &Allocation, p: &Price, tol: &Tolerances) -> Result<f64> {
    let residual = excess_demand_truncated(eco, omega, p)?.amax();
    if residual > tol.delta_equilibrium_residual {
        return Err(Error::Validation(format!(
            "delta requires an equilibrium price (residual {residual:.3e} exceeds {:.3e})",
            tol.delta_equilibrium_residual
        )));
    }
    let u = utility_levels_at(eco, omega, p)?;
    let m_cols = m_jacobian_columns(eco, &u, tol.m_step)?;
    let basis = budget_basis(omega);
    let dim = eco.goods() + eco.traders() - 2;
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut norm_product = 1.0_f64;
    for (k, a) in basis.iter().enumerate() {
        matrix.set_column(k, a);
        norm_product *= a.norm();
    }
    for i in 0..eco.traders() - 1 {
        let col: DVector<f64> = m_cols.column(i).into();
        norm_product *= col.norm();
        matrix.set_column(eco.goods() - 1 + i, &col);
    }
    let det = matrix.determinant();
    let threshold = tol.near_singular_scale * norm_product;
    if det.abs() <= threshold {
        return Err(Error::NearSingular {
            delta_abs: det.abs(),
            threshold,
        });
    }
    Ok(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::UtilitySpec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    fn e1() -> (Economy, Allocation) {
        let eco = Economy::new(
            vec![
                UtilitySpec::CobbDouglas {
                    weights: vec![0.5, 0.5],
                },
                UtilitySpec::CobbDouglas {
                    weights: vec![0.5, 0.5],
                },
            ],
            vec2(1.0, 1.0),
        )
        .unwrap();
        let omega =
            Allocation::new(vec![vec2(1.0, 0.0), vec2(0.0, 1.0)], eco.resources()).unwrap();
        (eco, omega)
    }

    #[test]
    fn symmetric_pareto_point() {
        let (eco, _) = e1();
        let target = eco
            .utility_spec(0)
            .utility(&vec2(0.5, 0.5))
            .unwrap();
        let pareto = pareto_point(&eco, &UtilityLevels::new(vec![target])).unwrap();
        for i in 0..2 {
            assert_relative_eq!(pareto.allocation[i][0], 0.5, max_relative = 1e-9);
            assert_relative_eq!(pareto.allocation[i][1], 0.5, max_relative = 1e-9);
        }
        assert_relative_eq!(pareto.price.components()[0], 1.0, max_relative = 1e-9);
    }

    /// Closed-form contract curve for two Cobb-Douglas traders with two
    /// goods: equalizing marginal rates of substitution pins `x_2` given
    /// `x_1`, and utility is monotone along the curve, so the oracle can
    /// bisect on the first coordinate.
    fn contract_curve_oracle(
        alpha: &[f64],
        beta: &[f64],
        r: &DVector<f64>,
        target_u1: f64,
    ) -> (DVector<f64>, DVector<f64>) {
        let x2_of = |x1: f64| -> f64 {
            alpha[1] * x1 * beta[0] * r[1]
                / (beta[1] * (r[0] - x1) * alpha[0] + alpha[1] * x1 * beta[0])
        };
        let u1 = |x1: f64| -> f64 { x1.powf(alpha[0]) * x2_of(x1).powf(alpha[1]) };
        let (mut lo, mut hi) = (1e-12, r[0] - 1e-12);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if u1(mid) < target_u1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x1 = 0.5 * (lo + hi);
        let first = vec2(x1, x2_of(x1));
        let second = r - &first;
        (first, second)
    }

    #[test]
    fn pareto_matches_contract_curve_oracle() {
        let alpha = [0.3, 0.7];
        let beta = [0.6, 0.4];
        let eco = Economy::new(
            vec![
                UtilitySpec::CobbDouglas {
                    weights: alpha.to_vec(),
                },
                UtilitySpec::CobbDouglas {
                    weights: beta.to_vec(),
                },
            ],
            vec2(2.0, 1.5),
        )
        .unwrap();
        for target in [0.3, 0.7, 1.1] {
            let pareto = pareto_point(&eco, &UtilityLevels::new(vec![target])).unwrap();
            let (x1, x2) = contract_curve_oracle(&alpha, &beta, eco.resources(), target);
            for j in 0..2 {
                assert_relative_eq!(pareto.allocation[0][j], x1[j], max_relative = 1e-7);
                assert_relative_eq!(pareto.allocation[1][j], x2[j], max_relative = 1e-7);
            }
            // supporting price parallel to both gradients
            let g1 = eco
                .utility_spec(0)
                .gradient(&pareto.allocation[0])
                .unwrap();
            let ratio = g1[0] / g1[1];
            assert_relative_eq!(
                pareto.price.components()[0],
                ratio,
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn pareto_low_boundary_sends_first_trader_to_zero() {
        let (eco, _) = e1();
        let eps = 1e-4;
        let target = eco
            .utility_spec(0)
            .utility(&vec2(eps, eps))
            .unwrap();
        let pareto = pareto_point(&eco, &UtilityLevels::new(vec![target])).unwrap();
        assert!(pareto.allocation[0].amax() < 10.0 * eps);
        for j in 0..2 {
            assert_relative_eq!(
                pareto.allocation[1][j],
                eco.resources()[j],
                epsilon = 10.0 * eps
            );
        }
    }

    #[test]
    fn infeasible_levels_error() {
        let (eco, _) = e1();
        // more utility than the total resources can deliver
        let res = pareto_point(&eco, &UtilityLevels::new(vec![50.0]));
        assert!(matches!(res, Err(Error::Infeasible(_))));
    }

    #[test]
    fn section_point_symmetric_coordinates() {
        let (eco, _) = e1();
        let target = eco
            .utility_spec(0)
            .utility(&vec2(0.5, 0.5))
            .unwrap();
        let point = section_point(&eco, &UtilityLevels::new(vec![target])).unwrap();
        assert_relative_eq!(point.coords()[0], 1.0, max_relative = 1e-9);
        assert_relative_eq!(point.coords()[1], 1.0, max_relative = 1e-9);
        let residual = section_residual(&eco, &point).unwrap();
        assert!(residual < 1e-8, "membership residual {residual}");
    }

    #[test]
    fn round_trip_between_levels_and_section() {
        let (eco, omega) = e1();
        let p = Price::from_slice(&[1.0, 1.0]).unwrap();
        let u = utility_levels_at(&eco, &omega, &p).unwrap();
        let point = section_point(&eco, &u).unwrap();
        // the equilibrium point of H(r) is fixed by the composition
        assert_relative_eq!(point.coords()[0], 1.0, max_relative = 1e-7);
        assert_relative_eq!(point.coords()[1], 1.0, max_relative = 1e-7);
        let back = utility_levels_at(
            &eco,
            &omega,
            &point.price().unwrap(),
        )
        .unwrap();
        assert_relative_eq!(back.values()[0], u.values()[0], max_relative = 1e-7);
    }

    #[test]
    fn utility_levels_scale_with_income() {
        let (eco, _) = e1();
        let p = Price::from_slice(&[1.0, 1.0]).unwrap();
        let poor = Allocation::new(vec![vec2(0.4, 0.4), vec2(0.6, 0.6)], eco.resources()).unwrap();
        let rich = Allocation::new(vec![vec2(0.7, 0.7), vec2(0.3, 0.3)], eco.resources()).unwrap();
        let u_poor = utility_levels_at(&eco, &poor, &p).unwrap();
        let u_rich = utility_levels_at(&eco, &rich, &p).unwrap();
        assert!(u_rich.values()[0] > u_poor.values()[0]);
    }

    #[test]
    fn m_column_is_mirror_symmetric_for_e1() {
        let (eco, _) = e1();
        let u = UtilityLevels::new(vec![0.5]);
        let cols = m_jacobian_columns(&eco, &u, 1e-5).unwrap();
        assert_eq!(cols.nrows(), 2);
        assert_eq!(cols.ncols(), 1);
        // price does not move along the symmetric contract curve
        assert_abs_diff_eq!(cols[(0, 0)], 0.0, epsilon = 1e-6);
        // income differential: w_1 = 2 u_1 along the diagonal
        assert_relative_eq!(cols[(1, 0)], 2.0, max_relative = 1e-6);
    }

    #[test]
    fn m_columns_pass_step_halving() {
        let eco = Economy::new(
            vec![
                UtilitySpec::CobbDouglas {
                    weights: vec![0.4, 0.6],
                },
                UtilitySpec::Ces {
                    shares: vec![1.0, 1.5],
                    elasticity: 0.7,
                },
            ],
            vec2(1.5, 2.0),
        )
        .unwrap();
        let u = UtilityLevels::new(vec![0.8]);
        let coarse = m_jacobian_columns(&eco, &u, 1e-5).unwrap();
        let fine = m_jacobian_columns(&eco, &u, 5e-6).unwrap();
        for j in 0..coarse.nrows() {
            assert_relative_eq!(
                coarse[(j, 0)],
                fine[(j, 0)],
                max_relative = 1e-5,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn budget_basis_matches_displayed_formula() {
        let (_, omega) = e1();
        let basis = budget_basis(&omega);
        assert_eq!(basis.len(), 1);
        assert_eq!(basis[0].as_slice(), &[1.0, 1.0]);

        let r3 = vec2(1.0, 1.0);
        let omega3 = Allocation::new(
            vec![vec2(0.25, 0.0), vec2(0.25, 0.0), vec2(0.5, 1.0)],
            &r3,
        )
        .unwrap();
        let basis3 = budget_basis(&omega3);
        assert_eq!(basis3.len(), 1);
        assert_eq!(basis3[0].as_slice(), &[1.0, 0.25, 0.25]);
    }

    #[test]
    fn budget_basis_has_full_rank() {
        let r = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let omega = Allocation::new(
            vec![
                DVector::from_vec(vec![0.5, 1.5, 0.25]),
                DVector::from_vec(vec![0.5, 0.5, 2.75]),
            ],
            &r,
        )
        .unwrap();
        let basis = budget_basis(&omega);
        let mut m = DMatrix::zeros(3, 2);
        m.set_column(0, &basis[0]);
        m.set_column(1, &basis[1]);
        assert_eq!(m.rank(1e-12), 2);
    }

    #[test]
    fn delta_positive_at_the_symmetric_equilibrium() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p = Price::from_slice(&[1.0, 1.0]).unwrap();
        let d = delta(&eco, &omega, &p, &tol).unwrap();
        assert!(d > 0.0, "delta = {d}");
        // hand computation: columns (1,1) and (0,2)
        assert_relative_eq!(d, 2.0, max_relative = 1e-5);
    }

    #[test]
    fn delta_rejects_non_equilibrium_prices() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p = Price::from_slice(&[2.0, 1.0]).unwrap();
        assert!(delta(&eco, &omega, &p, &tol).is_err());
    }

    /// At the all-to-the-last-trader boundary fixture the basis columns
    /// reduce to price unit vectors and the M columns to positive entries in
    /// their own income rows, so the determinant is the product of a unit
    /// block and a positive diagonal.
    #[test]
    fn no_trade_zero_fixture_block_structure() {
        let n = 4;
        let l = 3;
        let r = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let mut rows = vec![DVector::zeros(l); n - 1];
        rows.push(r.clone());
        let omega = Allocation::new(rows, &r).unwrap();
        let basis = budget_basis(&omega);
        for (k, a) in basis.iter().enumerate() {
            for j in 0..l + n - 2 {
                let expected = if j == k { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(a[j], expected);
            }
        }
        // M columns at the boundary: zero price rows, positive own-income row
        let dim = l + n - 2;
        let mut matrix = DMatrix::zeros(dim, dim);
        for (k, a) in basis.iter().enumerate() {
            matrix.set_column(k, a);
        }
        for i in 0..n - 1 {
            let mut col = DVector::zeros(dim);
            col[l - 1 + i] = 0.25 + i as f64; // any positive income velocity
            matrix.set_column(l - 1 + i, &col);
        }
        assert!(matrix.determinant() > 0.0);
    }
}
