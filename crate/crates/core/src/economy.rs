//! Traders, utility families, closed-form demand and the JSON economy format.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the Cobb-Douglas weight-sum invariant.
const WEIGHT_SUM_TOL: f64 = 1e-12;
/// CES elasticity must stay away from 1 (the Cobb-Douglas limit).
const CES_UNIT_GAP: f64 = 1e-9;
/// Endowment rows must sum to the total resources within this bound.
const ALLOCATION_SUM_TOL: f64 = 1e-10;

/// A strictly positive price vector with the last good as numeraire
/// (`p[l-1] == 1` exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct Price {
    components: DVector<f64>,
}

impl Price {
    pub fn new(components: DVector<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::Validation("price needs at least 2 goods".into()));
        }
        if components.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(Error::Validation(
                "price components must be finite and strictly positive".into(),
            ));
        }
        if components[components.len() - 1] != 1.0 {
            return Err(Error::Validation(
                "numeraire violated: last price component must be exactly 1".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn from_slice(components: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(components))
    }

    /// Build a price from its first `l-1` coordinates, appending the numeraire.
    pub fn from_truncated(truncated: &DVector<f64>) -> Result<Self> {
        let mut full = DVector::zeros(truncated.len() + 1);
        full.rows_mut(0, truncated.len()).copy_from(truncated);
        full[truncated.len()] = 1.0;
        Self::new(full)
    }

    pub fn components(&self) -> &DVector<f64> {
        &self.components
    }

    /// The first `l-1` coordinates (the numeraire is implied).
    pub fn truncated(&self) -> DVector<f64> {
        self.components.rows(0, self.components.len() - 1).into()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dot(&self, bundle: &DVector<f64>) -> f64 {
        self.components.dot(bundle)
    }
}

/// Smooth utility families. Both satisfy monotonicity and strict
/// quasi-concavity on the open orthant and admit closed-form demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UtilitySpec {
    CobbDouglas { weights: Vec<f64> },
    Ces { shares: Vec<f64>, elasticity: f64 },
}

impl UtilitySpec {
    pub fn validate(&self, goods: usize) -> Result<()> {
        match self {
            UtilitySpec::CobbDouglas { weights } => {
                if weights.len() != goods {
                    return Err(Error::Validation(format!(
                        "cobb_douglas weights: expected {goods} entries, got {}",
                        weights.len()
                    )));
                }
                if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
                    return Err(Error::Validation(
                        "cobb_douglas weights must be strictly positive".into(),
                    ));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::Validation(format!(
                        "cobb_douglas weights must sum to 1 (got {sum})"
                    )));
                }
            }
            UtilitySpec::Ces { shares, elasticity } => {
                if shares.len() != goods {
                    return Err(Error::Validation(format!(
                        "ces shares: expected {goods} entries, got {}",
                        shares.len()
                    )));
                }
                if shares.iter().any(|&s| !s.is_finite() || s <= 0.0) {
                    return Err(Error::Validation(
                        "ces shares must be strictly positive".into(),
                    ));
                }
                if !elasticity.is_finite() || *elasticity <= 0.0 {
                    return Err(Error::Validation(
                        "ces elasticity must be strictly positive".into(),
                    ));
                }
                if (elasticity - 1.0).abs() <= CES_UNIT_GAP {
                    return Err(Error::Validation(
                        "ces elasticity must differ from 1; use cobb_douglas for the limit".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_interior(x: &DVector<f64>) -> Result<()> {
        if x.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::Domain(
                "bundle must lie in the open positive orthant".into(),
            ));
        }
        Ok(())
    }

    /// Utility level at an interior bundle. Cobb-Douglas is evaluated in
    /// log domain; CES uses a log-sum-exp so extreme bundles do not overflow.
    pub fn utility(&self, x: &DVector<f64>) -> Result<f64> {
        Self::check_interior(x)?;
        match self {
            UtilitySpec::CobbDouglas { weights } => {
                let log_u: f64 = weights
                    .iter()
                    .zip(x.iter())
                    .map(|(&w, &xi)| w * xi.ln())
                    .sum();
                Ok(log_u.exp())
            }
            UtilitySpec::Ces { shares, elasticity } => {
                let rho = 1.0 - 1.0 / elasticity;
                // ln u = (1/rho) * ln sum_j s_j x_j^rho, stabilized.
                let terms: Vec<f64> = shares
                    .iter()
                    .zip(x.iter())
                    .map(|(&s, &xi)| s.ln() + rho * xi.ln())
                    .collect();
                let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
                Ok((lse / rho).exp())
            }
        }
    }

    /// Gradient of the utility at an interior bundle; strictly positive.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Self::check_interior(x)?;
        match self {
            UtilitySpec::CobbDouglas { weights } => {
                let u = self.utility(x)?;
                Ok(DVector::from_iterator(
                    x.len(),
                    weights.iter().zip(x.iter()).map(|(&w, &xi)| w * u / xi),
                ))
            }
            UtilitySpec::Ces { shares, elasticity } => {
                let rho = 1.0 - 1.0 / elasticity;
                let u = self.utility(x)?;
                // du/dx_j = u^(1-rho) s_j x_j^(rho-1), assembled in logs.
                let log_u = u.ln();
                Ok(DVector::from_iterator(
                    x.len(),
                    shares.iter().zip(x.iter()).map(|(&s, &xi)| {
                        ((1.0 - rho) * log_u + s.ln() + (rho - 1.0) * xi.ln()).exp()
                    }),
                ))
            }
        }
    }

    /// Hessian of the utility; used by the Pareto first-order-condition solver.
    pub(crate) fn hessian(&self, x: &DVector<f64>) -> Result<nalgebra::DMatrix<f64>> {
        Self::check_interior(x)?;
        let l = x.len();
        let u = self.utility(x)?;
        match self {
            UtilitySpec::CobbDouglas { weights } => {
                let mut h = nalgebra::DMatrix::zeros(l, l);
                for j in 0..l {
                    for k in 0..l {
                        let mut v = weights[j] * weights[k] * u / (x[j] * x[k]);
                        if j == k {
                            v -= weights[j] * u / (x[j] * x[j]);
                        }
                        h[(j, k)] = v;
                    }
                }
                Ok(h)
            }
            UtilitySpec::Ces { shares, elasticity } => {
                let rho = 1.0 - 1.0 / elasticity;
                let log_u = u.ln();
                let mut h = nalgebra::DMatrix::zeros(l, l);
                for j in 0..l {
                    for k in 0..l {
                        // (1-rho) u^(1-2rho) s_j s_k (x_j x_k)^(rho-1)
                        let cross = (1.0 - rho).ln()
                            + (1.0 - 2.0 * rho) * log_u
                            + shares[j].ln()
                            + shares[k].ln()
                            + (rho - 1.0) * (x[j].ln() + x[k].ln());
                        let mut v = cross.exp();
                        if j == k {
                            // (rho-1) u^(1-rho) s_j x_j^(rho-2), rho < 1 so negative
                            let diag = (1.0 - rho).ln()
                                + (1.0 - rho) * log_u
                                + shares[j].ln()
                                + (rho - 2.0) * x[j].ln();
                            v -= diag.exp();
                        }
                        h[(j, k)] = v;
                    }
                }
                Ok(h)
            }
        }
    }

    /// Marshallian demand at price `p` and income `w`.
    pub fn demand(&self, p: &Price, w: f64) -> Result<DVector<f64>> {
        self.demand_raw(p.components(), w)
    }

    /// Demand from the raw formula, without requiring the numeraire
    /// normalization. Degree-zero homogeneous in (p, w).
    pub(crate) fn demand_raw(&self, p: &DVector<f64>, w: f64) -> Result<DVector<f64>> {
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::Domain(format!("income must be positive, got {w}")));
        }
        if p.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::Domain("prices must be strictly positive".into()));
        }
        match self {
            UtilitySpec::CobbDouglas { weights } => Ok(DVector::from_iterator(
                p.len(),
                weights.iter().zip(p.iter()).map(|(&a, &pj)| a * w / pj),
            )),
            UtilitySpec::Ces { shares, elasticity } => {
                let sigma = *elasticity;
                let denom: f64 = shares
                    .iter()
                    .zip(p.iter())
                    .map(|(&s, &pk)| s.powf(sigma) * pk.powf(1.0 - sigma))
                    .sum();
                Ok(DVector::from_iterator(
                    p.len(),
                    shares
                        .iter()
                        .zip(p.iter())
                        .map(|(&s, &pj)| (s / pj).powf(sigma) * w / denom),
                ))
            }
        }
    }

    /// Partial derivatives of demand with respect to the first `l-1` price
    /// coordinates, as an `l x (l-1)` matrix.
    pub(crate) fn demand_price_jacobian(&self, p: &Price, w: f64) -> nalgebra::DMatrix<f64> {
        let pv = p.components();
        let l = pv.len();
        let mut jac = nalgebra::DMatrix::zeros(l, l - 1);
        match self {
            UtilitySpec::CobbDouglas { weights } => {
                for k in 0..l - 1 {
                    jac[(k, k)] = -weights[k] * w / (pv[k] * pv[k]);
                }
            }
            UtilitySpec::Ces { shares, elasticity } => {
                let sigma = *elasticity;
                let denom: f64 = shares
                    .iter()
                    .zip(pv.iter())
                    .map(|(&s, &pk)| s.powf(sigma) * pk.powf(1.0 - sigma))
                    .sum();
                let f: Vec<f64> = shares
                    .iter()
                    .zip(pv.iter())
                    .map(|(&s, &pj)| (s / pj).powf(sigma) * w / denom)
                    .collect();
                for j in 0..l {
                    for k in 0..l - 1 {
                        let mut v =
                            -f[j] * (1.0 - sigma) * shares[k].powf(sigma) * pv[k].powf(-sigma)
                                / denom;
                        if j == k {
                            v -= sigma * f[j] / pv[j];
                        }
                        jac[(j, k)] = v;
                    }
                }
            }
        }
        jac
    }

    /// Income derivative of demand, length `l`.
    pub(crate) fn demand_income_derivative(&self, p: &Price, _w: f64) -> DVector<f64> {
        let pv = p.components();
        match self {
            UtilitySpec::CobbDouglas { weights } => DVector::from_iterator(
                pv.len(),
                weights.iter().zip(pv.iter()).map(|(&a, &pj)| a / pj),
            ),
            UtilitySpec::Ces { shares, elasticity } => {
                let sigma = *elasticity;
                let denom: f64 = shares
                    .iter()
                    .zip(pv.iter())
                    .map(|(&s, &pk)| s.powf(sigma) * pk.powf(1.0 - sigma))
                    .sum();
                DVector::from_iterator(
                    pv.len(),
                    shares
                        .iter()
                        .zip(pv.iter())
                        .map(|(&s, &pj)| (s / pj).powf(sigma) / denom),
                )
            }
        }
    }
}

/// An exchange economy: traders, their utility specs and the fixed total
/// resources. Endowments vary separately (see [`Allocation`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    traders: usize,
    goods: usize,
    utilities: Vec<UtilitySpec>,
    resources: DVector<f64>,
}

impl Economy {
    pub fn new(utilities: Vec<UtilitySpec>, resources: DVector<f64>) -> Result<Self> {
        let traders = utilities.len();
        let goods = resources.len();
        if traders < 2 {
            return Err(Error::Validation("need at least 2 traders".into()));
        }
        if goods < 2 {
            return Err(Error::Validation("need at least 2 goods".into()));
        }
        if resources.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::Validation(
                "total resources must be strictly positive".into(),
            ));
        }
        for spec in &utilities {
            spec.validate(goods)?;
        }
        Ok(Self {
            traders,
            goods,
            utilities,
            resources,
        })
    }

    pub fn traders(&self) -> usize {
        self.traders
    }

    pub fn goods(&self) -> usize {
        self.goods
    }

    pub fn utility_spec(&self, trader: usize) -> &UtilitySpec {
        &self.utilities[trader]
    }

    pub fn utility_specs(&self) -> &[UtilitySpec] {
        &self.utilities
    }

    pub fn resources(&self) -> &DVector<f64> {
        &self.resources
    }
}

/// An endowment matrix: one row per trader, rows summing to the economy's
/// total resources. Zero entries are permitted (boundary fixtures); demand
/// evaluation additionally needs positive income.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    rows: Vec<DVector<f64>>,
}

impl Allocation {
    pub fn new(rows: Vec<DVector<f64>>, resources: &DVector<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("allocation has no rows".into()));
        }
        let goods = resources.len();
        let mut sum = DVector::zeros(goods);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != goods {
                return Err(Error::Validation(format!(
                    "allocation row {i}: expected {goods} entries, got {}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| !v.is_finite() || v < 0.0) {
                return Err(Error::Validation(format!(
                    "allocation row {i} has a negative or non-finite entry"
                )));
            }
            sum += row;
        }
        let worst = (&sum - resources).amax();
        if worst > ALLOCATION_SUM_TOL {
            return Err(Error::Validation(format!(
                "allocation rows must sum to the total resources (max deviation {worst:.3e})"
            )));
        }
        Ok(Self { rows })
    }

    pub fn traders(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, trader: usize) -> &DVector<f64> {
        &self.rows[trader]
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    /// Income of `trader` at price `p`.
    pub fn income(&self, trader: usize, p: &Price) -> f64 {
        p.dot(&self.rows[trader])
    }
}

#[derive(Serialize, Deserialize)]
struct EconomyDocRaw {
    n: usize,
    l: usize,
    r: Vec<f64>,
    utilities: Vec<UtilitySpec>,
    endowments: Vec<Vec<f64>>,
}

/// Parse the JSON economy document. Field names are part of the file format:
/// `{"n", "l", "r", "utilities", "endowments"}` with utility entries tagged
/// `{"type": "cobb_douglas", "weights": [...]}` or
/// `{"type": "ces", "shares": [...], "elasticity": ...}`.
pub fn economy_from_json(text: &str) -> Result<(Economy, Allocation)> {
    let raw: EconomyDocRaw = serde_json::from_str(text)?;
    if raw.utilities.len() != raw.n {
        return Err(Error::Validation(format!(
            "document declares n={} but lists {} utilities",
            raw.n,
            raw.utilities.len()
        )));
    }
    if raw.r.len() != raw.l {
        return Err(Error::Validation(format!(
            "document declares l={} but r has {} entries",
            raw.l,
            raw.r.len()
        )));
    }
    if raw.endowments.len() != raw.n {
        return Err(Error::Validation(format!(
            "document declares n={} but lists {} endowment rows",
            raw.n,
            raw.endowments.len()
        )));
    }
    let economy = Economy::new(raw.utilities, DVector::from_vec(raw.r))?;
    let rows = raw
        .endowments
        .into_iter()
        .map(DVector::from_vec)
        .collect::<Vec<_>>();
    let allocation = Allocation::new(rows, economy.resources())?;
    Ok((economy, allocation))
}

/// Serialize an economy and its endowments back to the JSON document format.
pub fn economy_to_json(economy: &Economy, endowments: &Allocation) -> String {
    let raw = EconomyDocRaw {
        n: economy.traders(),
        l: economy.goods(),
        r: economy.resources().iter().cloned().collect(),
        utilities: economy.utility_specs().to_vec(),
        endowments: endowments
            .rows()
            .iter()
            .map(|row| row.iter().cloned().collect())
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("economy document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn cobb_douglas_identity_case() {
        let spec = UtilitySpec::CobbDouglas {
            weights: vec![0.5, 0.5],
        };
        assert_abs_diff_eq!(spec.utility(&vec2(1.0, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn cobb_douglas_direct_evaluation() {
        let spec = UtilitySpec::CobbDouglas {
            weights: vec![0.3, 0.7],
        };
        // Log-domain value against the plain product form.
        let x = vec2(2.0, 1.0);
        let direct = 2.0_f64.powf(0.3) * 1.0_f64.powf(0.7);
        assert_relative_eq!(spec.utility(&x).unwrap(), direct, max_relative = 1e-14);
        assert_relative_eq!(
            spec.utility(&x).unwrap(),
            2.0_f64.powf(0.3),
            max_relative = 1e-14
        );
    }

    #[test]
    fn ces_symmetry() {
        let spec = UtilitySpec::Ces {
            shares: vec![1.0, 1.0],
            elasticity: 0.5,
        };
        let u_ab = spec.utility(&vec2(1.5, 0.25)).unwrap();
        let u_ba = spec.utility(&vec2(0.25, 1.5)).unwrap();
        assert_relative_eq!(u_ab, u_ba, max_relative = 1e-14);
    }

    #[test]
    fn utility_rejects_boundary() {
        let spec = UtilitySpec::CobbDouglas {
            weights: vec![0.5, 0.5],
        };
        assert!(matches!(
            spec.utility(&vec2(0.0, 1.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            spec.gradient(&vec2(1.0, -0.5)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gradient_symmetric_point() {
        let spec = UtilitySpec::CobbDouglas {
            weights: vec![0.5, 0.5],
        };
        let g = spec.gradient(&vec2(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(g[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], 0.5, epsilon = 1e-14);
    }

    fn finite_difference_gradient(spec: &UtilitySpec, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for j in 0..x.len() {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            g[j] = (spec.utility(&xp).unwrap() - spec.utility(&xm).unwrap()) / (2.0 * h);
        }
        g
    }

    #[test]
    fn ces_gradient_matches_finite_differences() {
        let spec = UtilitySpec::Ces {
            shares: vec![1.0, 1.0],
            elasticity: 2.0,
        };
        let x = vec2(1.0, 4.0);
        let g = spec.gradient(&x).unwrap();
        let fd = finite_difference_gradient(&spec, &x);
        for j in 0..2 {
            assert_relative_eq!(g[j], fd[j], max_relative = 1e-6);
            assert!(g[j] > 0.0);
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let specs = [
            UtilitySpec::CobbDouglas {
                weights: vec![0.3, 0.7],
            },
            UtilitySpec::Ces {
                shares: vec![0.9, 1.3],
                elasticity: 0.4,
            },
            UtilitySpec::Ces {
                shares: vec![1.0, 2.0],
                elasticity: 3.0,
            },
        ];
        let x = vec2(0.8, 2.5);
        for spec in &specs {
            let h = spec.hessian(&x).unwrap();
            for k in 0..2 {
                let step = 1e-6 * x[k].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += step;
                xm[k] -= step;
                let col =
                    (spec.gradient(&xp).unwrap() - spec.gradient(&xm).unwrap()) / (2.0 * step);
                for j in 0..2 {
                    assert_relative_eq!(h[(j, k)], col[j], max_relative = 1e-5, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn symmetric_cobb_douglas_splits_income() {
        let spec = UtilitySpec::CobbDouglas {
            weights: vec![0.5, 0.5],
        };
        let p = Price::from_slice(&[1.0, 1.0]).unwrap();
        let d = spec.demand(&p, 1.0).unwrap();
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn cobb_douglas_closed_form_demand() {
        let spec = UtilitySpec::CobbDouglas {
            weights: vec![0.5, 0.5],
        };
        let p = Price::from_slice(&[2.0, 1.0]).unwrap();
        let d = spec.demand(&p, 4.0).unwrap();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(d[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn ces_demand_maximizes_on_budget_line() {
        let spec = UtilitySpec::Ces {
            shares: vec![1.0, 1.0],
            elasticity: 0.5,
        };
        let p = Price::from_slice(&[2.0, 1.0]).unwrap();
        let w = 3.0;
        let d = spec.demand(&p, w).unwrap();
        assert_relative_eq!(p.dot(&d), w, max_relative = 1e-12);
        let u_star = spec.utility(&d).unwrap();
        // Dense search over the budget segment: no feasible bundle beats the
        // closed form beyond tolerance.
        let samples = 10_000;
        for i in 1..samples {
            let x1 = (i as f64 / samples as f64) * (w / p.components()[0]);
            let x2 = (w - p.components()[0] * x1) / p.components()[1];
            if x1 <= 0.0 || x2 <= 0.0 {
                continue;
            }
            let u = spec.utility(&vec2(x1, x2)).unwrap();
            assert!(
                u_star >= u - 1e-8,
                "budget bundle ({x1}, {x2}) beats demand: {u} > {u_star}"
            );
        }
    }

    #[test]
    fn demand_rejects_nonpositive_income() {
        let spec = UtilitySpec::CobbDouglas {
            weights: vec![0.5, 0.5],
        };
        let p = Price::from_slice(&[1.0, 1.0]).unwrap();
        assert!(matches!(spec.demand(&p, 0.0), Err(Error::Domain(_))));
        assert!(matches!(spec.demand(&p, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn demand_raw_is_homogeneous_of_degree_zero() {
        // Exercises the internal formula before any numeraire normalization.
        let mut rng_state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 11) as f64) / ((1_u64 << 53) as f64)
        };
        for _ in 0..200 {
            let spec = if next() < 0.5 {
                let a = 0.2 + 0.6 * next();
                UtilitySpec::CobbDouglas {
                    weights: vec![a, 1.0 - a],
                }
            } else {
                UtilitySpec::Ces {
                    shares: vec![0.5 + next(), 0.5 + next()],
                    elasticity: if next() < 0.5 {
                        0.3 + 0.5 * next()
                    } else {
                        1.5 + 2.0 * next()
                    },
                }
            };
            let p = DVector::from_vec(vec![0.2 + 3.0 * next(), 0.2 + 3.0 * next()]);
            let w = 0.5 + 4.0 * next();
            let lambda = 0.1 + 9.9 * next();
            let base = spec.demand_raw(&p, w).unwrap();
            let scaled = spec.demand_raw(&(&p * lambda), lambda * w).unwrap();
            for j in 0..2 {
                assert_relative_eq!(base[j], scaled[j], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn price_invariants() {
        assert!(Price::from_slice(&[1.0, 0.0]).is_err());
        assert!(Price::from_slice(&[1.0, 2.0]).is_err());
        assert!(Price::from_slice(&[-1.0, 1.0]).is_err());
        let p = Price::from_truncated(&DVector::from_vec(vec![3.0])).unwrap();
        assert_eq!(p.components()[1], 1.0);
        assert_eq!(p.truncated()[0], 3.0);
    }

    #[test]
    fn allocation_rows_must_sum_to_resources() {
        let r = vec2(1.0, 1.0);
        let ok = Allocation::new(vec![vec2(1.0, 0.0), vec2(0.0, 1.0)], &r);
        assert!(ok.is_ok());
        let bad = Allocation::new(vec![vec2(1.0, 0.0), vec2(0.1, 1.0)], &r);
        assert!(bad.is_err());
        let negative = Allocation::new(vec![vec2(1.5, 0.0), vec2(-0.5, 1.0)], &r);
        assert!(negative.is_err());
    }

    #[test]
    fn json_round_trip_uses_normative_field_names() {
        let text = r#"{
            "n": 2, "l": 2, "r": [1.0, 1.0],
            "utilities": [
                {"type": "cobb_douglas", "weights": [0.5, 0.5]},
                {"type": "ces", "shares": [0.95, 0.05], "elasticity": 0.15}
            ],
            "endowments": [[1.0, 0.0], [0.0, 1.0]]
        }"#;
        let (eco, alloc) = economy_from_json(text).unwrap();
        assert_eq!(eco.traders(), 2);
        assert_eq!(eco.goods(), 2);
        let back = economy_to_json(&eco, &alloc);
        assert!(back.contains("\"cobb_douglas\""));
        assert!(back.contains("\"ces\""));
        assert!(back.contains("\"elasticity\""));
        let (eco2, alloc2) = economy_from_json(&back).unwrap();
        assert_eq!(eco, eco2);
        assert_eq!(alloc, alloc2);
    }

    #[test]
    fn json_rejects_inconsistent_shapes() {
        let text = r#"{
            "n": 3, "l": 2, "r": [1.0, 1.0],
            "utilities": [
                {"type": "cobb_douglas", "weights": [0.5, 0.5]},
                {"type": "cobb_douglas", "weights": [0.5, 0.5]}
            ],
            "endowments": [[1.0, 0.0], [0.0, 1.0]]
        }"#;
        assert!(economy_from_json(text).is_err());
    }
}
