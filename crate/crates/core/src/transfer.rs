//! The local equilibrium price selection map (by continuation in the
//! endowments) and the transfer-problem experiment built on it.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Tolerances;
use crate::economy::{Allocation, Economy, Price};
use crate::equilibrium::{excess_demand_truncated, find_equilibrium, jacobian, JacobianMethod};
use crate::error::{Error, Result};

/// Outcome of a single transfer experiment at a regular equilibrium.
#[derive(Debug, Clone)]
pub struct TransferReport {
    pub donor: usize,
    /// Goods the donor gives away (non-negative, non-zero).
    pub transfer: DVector<f64>,
    /// Per-trader share of the transfer received (donor share is zero).
    pub recipients: Vec<f64>,
    pub p_before: Price,
    pub p_after: Price,
    pub u_donor_before: f64,
    pub u_donor_after: f64,
    /// Donor utility rose by more than the strictness margin.
    pub paradox: bool,
}

impl TransferReport {
    pub fn utility_gain(&self) -> f64 {
        self.u_donor_after - self.u_donor_before
    }
}

/// Track the equilibrium price from `(p_star, omega)` to the endowment
/// `omega_prime` along the linear homotopy in omega, warm-starting Newton at
/// each of `steps` sub-steps. Errors with `BranchLost` when a sub-step
/// leaves the selection neighborhood (Newton fails or the corrected price
/// jumps beyond the trust radius).
pub fn equilibrium_selection(
    eco: &Economy,
    omega: &Allocation,
    p_star: &Price,
    omega_prime: &Allocation,
    steps: usize,
    tol: &Tolerances,
) -> Result<Price> {
    let start_residual = excess_demand_truncated(eco, omega, p_star)?.amax();
    if start_residual > tol.delta_equilibrium_residual {
        return Err(Error::Validation(format!(
            "selection must start from an equilibrium (residual {start_residual:.3e})"
        )));
    }
    let steps = steps.max(1);
    let mut current = p_star.clone();
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let rows: Vec<DVector<f64>> = omega
            .rows()
            .iter()
            .zip(omega_prime.rows())
            .map(|(a, b)| a * (1.0 - t) + b * t)
            .collect();
        let omega_t = Allocation::new(rows, eco.resources()).map_err(|e| Error::BranchLost {
            step: k,
            reason: e.to_string(),
        })?;

        // Predictor displacement: the first Newton correction at the warm
        // start. The accepted root must stay within a multiple of it.
        let z = excess_demand_truncated(eco, &omega_t, &current).map_err(|e| {
            Error::BranchLost {
                step: k,
                reason: e.to_string(),
            }
        })?;
        let jac = jacobian(eco, &omega_t, &current, JacobianMethod::Analytic).map_err(|e| {
            Error::BranchLost {
                step: k,
                reason: e.to_string(),
            }
        })?;
        let predictor = jac.lu().solve(&z).ok_or(Error::BranchLost {
            step: k,
            reason: "singular Jacobian at warm start".into(),
        })?;
        let radius = tol.trust_radius_factor * predictor.norm()
            + 1e-9 * (1.0 + current.truncated().norm());

        let solved =
            find_equilibrium(eco, &omega_t, &current, tol).map_err(|e| Error::BranchLost {
                step: k,
                reason: e.to_string(),
            })?;
        let displacement = (solved.price.truncated() - current.truncated()).norm();
        if displacement > radius {
            return Err(Error::BranchLost {
                step: k,
                reason: format!(
                    "correction {displacement:.3e} exceeded trust radius {radius:.3e}"
                ),
            });
        }
        current = solved.price;
    }
    Ok(current)
}

fn donor_utility(eco: &Economy, donor: usize, p: &Price, endowment: &DVector<f64>) -> Result<f64> {
    let income = p.dot(endowment);
    if income <= 0.0 {
        return Err(Error::Domain(format!(
            "donor {donor} has non-positive income {income}"
        )));
    }
    let bundle = eco.utility_spec(donor).demand(p, income)?;
    eco.utility_spec(donor).utility(&bundle)
}

/// Redistribute `transfer` from the donor to the other traders according to
/// `recipient_weights` (indexed by trader, donor entry zero, summing to one)
/// and evaluate the donor's utility through the local selection map.
pub fn transfer_experiment(
    eco: &Economy,
    omega: &Allocation,
    p_star: &Price,
    donor: usize,
    transfer: &DVector<f64>,
    recipient_weights: &[f64],
    tol: &Tolerances,
) -> Result<TransferReport> {
    let n = eco.traders();
    if donor >= n {
        return Err(Error::Validation(format!("no trader {donor}")));
    }
    if transfer.len() != eco.goods() {
        return Err(Error::Validation("transfer has wrong length".into()));
    }
    if transfer.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidTransfer(
            "transfer must be non-negative".into(),
        ));
    }
    if transfer.sum() <= 0.0 {
        return Err(Error::InvalidTransfer("transfer must be non-zero".into()));
    }
    if recipient_weights.len() != n {
        return Err(Error::Validation(
            "recipient weights must list every trader".into(),
        ));
    }
    if recipient_weights[donor] != 0.0 {
        return Err(Error::Validation("donor cannot receive".into()));
    }
    if recipient_weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::Validation(
            "recipient weights must be non-negative".into(),
        ));
    }
    let weight_sum: f64 = recipient_weights.iter().sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!(
            "recipient weights must sum to 1 (got {weight_sum})"
        )));
    }

    let donor_row = omega.row(donor) - transfer;
    if donor_row.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidTransfer(
            "transfer exceeds the donor's endowment".into(),
        ));
    }
    if donor_row.amax() <= 0.0 {
        return Err(Error::InvalidTransfer(
            "donor would be left with nothing".into(),
        ));
    }
    let rows: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            if i == donor {
                donor_row.clone()
            } else {
                omega.row(i) + transfer * recipient_weights[i]
            }
        })
        .collect();
    let omega_prime = Allocation::new(rows, eco.resources())?;

    let u_before = donor_utility(eco, donor, p_star, omega.row(donor))?;
    let p_after = equilibrium_selection(
        eco,
        omega,
        p_star,
        &omega_prime,
        tol.continuation_steps,
        tol,
    )?;
    let u_after = donor_utility(eco, donor, &p_after, omega_prime.row(donor))?;
    let paradox = u_after > u_before + tol.paradox_margin * (1.0 + u_before.abs());
    Ok(TransferReport {
        donor,
        transfer: transfer.clone(),
        recipients: recipient_weights.to_vec(),
        p_before: p_star.clone(),
        p_after,
        u_donor_before: u_before,
        u_donor_after: u_after,
        paradox,
    })
}

/// One pre-generated randomized trial: donor, giving direction and
/// recipient split.
#[derive(Debug, Clone)]
struct Trial {
    donor: usize,
    direction: DVector<f64>,
    weights: Vec<f64>,
}

fn draw_trials(eco: &Economy, omega: &Allocation, trials: usize, seed: u64) -> Vec<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = eco.traders();
    let l = eco.goods();
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let donor = rng.gen_range(0..n);
        // Raw direction, masked to the goods the donor actually holds; with
        // some probability concentrate on a single held good.
        let raw: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..1.0)).collect();
        let single = rng.gen_range(0.0..1.0) < 0.25;
        let pick = rng.gen_range(0..l);
        let held: Vec<usize> = (0..l).filter(|&j| omega.row(donor)[j] > 0.0).collect();
        let mut direction = DVector::zeros(l);
        if !held.is_empty() {
            if single {
                direction[held[pick % held.len()]] = 1.0;
            } else {
                for &j in &held {
                    direction[j] = raw[j].max(1e-3);
                }
            }
        }
        // Recipient split from the simplex, occasionally a vertex.
        let vertex = rng.gen_range(0.0..1.0) < 0.3;
        let target = rng.gen_range(0..n.saturating_sub(1));
        let exps: Vec<f64> = (0..n).map(|_| -(rng.gen_range(1e-9..1.0_f64)).ln()).collect();
        let mut weights = vec![0.0; n];
        let others: Vec<usize> = (0..n).filter(|&i| i != donor).collect();
        if vertex {
            weights[others[target % others.len()]] = 1.0;
        } else {
            let total: f64 = others.iter().map(|&i| exps[i]).sum();
            for &i in &others {
                weights[i] = exps[i] / total;
            }
        }
        out.push(Trial {
            donor,
            direction,
            weights,
        });
    }
    out
}

/// Result of the randomized paradox search.
#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    /// A paradox was observed at some sampled transfer.
    pub found: bool,
    /// The report with the largest donor-utility gain, when any trial ran.
    pub best: Option<TransferReport>,
    /// Per-magnitude verdicts, in the order the magnitudes were given.
    pub found_by_magnitude: Vec<(f64, bool)>,
    /// Every evaluated report with its requested magnitude, in trial order.
    pub reports: Vec<(f64, TransferReport)>,
    /// Trials skipped because the continuation lost the branch.
    pub branch_lost: usize,
    /// Trials skipped because the sampled transfer was invalid.
    pub invalid: usize,
    pub trials: usize,
}

/// Randomized search for the transfer problem at a regular equilibrium:
/// `trials` draws of (donor, direction, recipient split), each evaluated at
/// every requested magnitude (relative to the donor's endowment norm).
/// Deterministic for a fixed seed; branch-lost trials are counted, not fatal.
pub fn detect_transfer_problem(
    eco: &Economy,
    omega: &Allocation,
    p_star: &Price,
    trials: usize,
    magnitudes: &[f64],
    seed: u64,
    tol: &Tolerances,
) -> DetectionOutcome {
    let trial_list = draw_trials(eco, omega, trials, seed);
    let mut jobs = Vec::with_capacity(trial_list.len() * magnitudes.len());
    for (t_idx, trial) in trial_list.iter().enumerate() {
        for (m_idx, &magnitude) in magnitudes.iter().enumerate() {
            jobs.push((t_idx, m_idx, magnitude, trial.clone()));
        }
    }
    let results: Vec<(usize, std::result::Result<TransferReport, Error>)> = jobs
        .par_iter()
        .map(|(_, m_idx, magnitude, trial)| {
            let donor_row = omega.row(trial.donor);
            let dir_norm = trial.direction.norm();
            if dir_norm <= 0.0 {
                return (
                    *m_idx,
                    Err(Error::InvalidTransfer("donor holds nothing".into())),
                );
            }
            let mut transfer = &trial.direction * (magnitude * donor_row.norm() / dir_norm);
            // Cap so the donor keeps a sliver of every good involved.
            let mut scale = 1.0_f64;
            for j in 0..transfer.len() {
                if transfer[j] > 0.0 {
                    scale = scale.min(0.9 * donor_row[j] / transfer[j]);
                }
            }
            if scale < 1.0 {
                transfer *= scale;
            }
            if transfer.sum() <= 0.0 {
                return (
                    *m_idx,
                    Err(Error::InvalidTransfer("empty transfer after capping".into())),
                );
            }
            (
                *m_idx,
                transfer_experiment(
                    eco,
                    omega,
                    p_star,
                    trial.donor,
                    &transfer,
                    &trial.weights,
                    tol,
                ),
            )
        })
        .collect();

    let mut found_by_magnitude: Vec<(f64, bool)> =
        magnitudes.iter().map(|&m| (m, false)).collect();
    let mut best: Option<TransferReport> = None;
    let mut branch_lost = 0;
    let mut invalid = 0;
    for (m_idx, result) in results {
        match result {
            Ok(report) => {
                if report.paradox {
                    found_by_magnitude[m_idx].1 = true;
                }
                let better = best
                    .as_ref()
                    .map(|b| report.utility_gain() > b.utility_gain())
                    .unwrap_or(true);
                if better {
                    best = Some(report);
                }
            }
            Err(Error::BranchLost { .. }) => branch_lost += 1,
            Err(_) => invalid += 1,
        }
    }
    DetectionOutcome {
        found: found_by_magnitude.iter().any(|&(_, f)| f),
        best,
        found_by_magnitude,
        branch_lost,
        invalid,
        trials,
    }
}

/// `A(omega)` lies below `A(omega_prime)` for `trader` exactly when the
/// trader's endowment weakly grows in every good and strictly in one.
pub fn lies_below(omega: &Allocation, omega_prime: &Allocation, trader: usize) -> bool {
    let a = omega.row(trader);
    let b = omega_prime.row(trader);
    let dominated = a.iter().zip(b.iter()).all(|(&x, &y)| x <= y);
    let strict = a.iter().zip(b.iter()).any(|(&x, &y)| x < y);
    dominated && strict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::UtilitySpec;
    use approx::assert_relative_eq;

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

    fn transferred(omega: &Allocation, eps: f64, r: &DVector<f64>) -> Allocation {
        Allocation::new(
            vec![
                omega.row(0) - vec2(eps, 0.0),
                omega.row(1) + vec2(eps, 0.0),
            ],
            r,
        )
        .unwrap()
    }

    #[test]
    fn selection_is_identity_at_the_same_endowment() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        let p = equilibrium_selection(&eco, &omega, &p_star, &omega, 16, &tol).unwrap();
        assert_relative_eq!(p.components()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn selection_matches_direct_newton_for_small_perturbations() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        let eps = 0.01;
        let omega_prime = transferred(&omega, eps, eco.resources());
        let tracked =
            equilibrium_selection(&eco, &omega, &p_star, &omega_prime, 16, &tol).unwrap();
        let direct = find_equilibrium(&eco, &omega_prime, &p_star, &tol).unwrap();
        assert_relative_eq!(
            tracked.components()[0],
            direct.price.components()[0],
            epsilon = 1e-9
        );
        // O(eps) displacement
        let displacement = (tracked.components()[0] - 1.0).abs();
        assert!(displacement > 0.0 && displacement < 10.0 * eps);
    }

    #[test]
    fn selection_displacement_is_locally_lipschitz() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        let mut previous = None;
        for eps in [4e-3, 2e-3, 1e-3] {
            let omega_prime = transferred(&omega, eps, eco.resources());
            let p = equilibrium_selection(&eco, &omega, &p_star, &omega_prime, 8, &tol).unwrap();
            let d = (p.components()[0] - 1.0).abs();
            if let Some(prev) = previous {
                // halving the endowment move roughly halves the price move
                assert!(d < 0.65 * prev, "d={d}, prev={prev}");
            }
            previous = Some(d);
        }
    }

    #[test]
    fn experiment_reports_no_paradox_at_the_stable_symmetric_equilibrium() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        let report = transfer_experiment(
            &eco,
            &omega,
            &p_star,
            0,
            &vec2(0.01, 0.0),
            &[0.0, 1.0],
            &tol,
        )
        .unwrap();
        assert!(!report.paradox);
        assert!(report.u_donor_after < report.u_donor_before);
        // redistribution preserved the total resources
        assert_relative_eq!(report.p_before.components()[0], 1.0);
    }

    #[test]
    fn donor_utility_change_vanishes_with_the_transfer() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let report = transfer_experiment(
                &eco,
                &omega,
                &p_star,
                0,
                &vec2(eps, 0.0),
                &[0.0, 1.0],
                &tol,
            )
            .unwrap();
            let gain = report.utility_gain().abs();
            assert!(gain < last);
            last = gain;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn invalid_transfers_are_rejected() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        // negative component
        assert!(matches!(
            transfer_experiment(&eco, &omega, &p_star, 0, &vec2(-0.1, 0.0), &[0.0, 1.0], &tol),
            Err(Error::InvalidTransfer(_))
        ));
        // zero transfer
        assert!(matches!(
            transfer_experiment(&eco, &omega, &p_star, 0, &vec2(0.0, 0.0), &[0.0, 1.0], &tol),
            Err(Error::InvalidTransfer(_))
        ));
        // exceeds endowment
        assert!(matches!(
            transfer_experiment(&eco, &omega, &p_star, 0, &vec2(1.5, 0.0), &[0.0, 1.0], &tol),
            Err(Error::InvalidTransfer(_))
        ));
        // donor cannot be a recipient
        assert!(transfer_experiment(
            &eco,
            &omega,
            &p_star,
            0,
            &vec2(0.01, 0.0),
            &[0.5, 0.5],
            &tol
        )
        .is_err());
    }

    #[test]
    fn detection_finds_nothing_at_the_symmetric_equilibrium() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        let outcome =
            detect_transfer_problem(&eco, &omega, &p_star, 120, &[1e-2], 42, &tol);
        assert!(!outcome.found);
        assert!(outcome.best.is_some());
        assert_eq!(outcome.branch_lost, 0);
    }

    #[test]
    fn detection_with_zero_trials_is_empty() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        let outcome = detect_transfer_problem(&eco, &omega, &p_star, 0, &[1e-2], 7, &tol);
        assert!(!outcome.found);
        assert!(outcome.best.is_none());
    }

    #[test]
    fn detection_is_deterministic_for_a_seed() {
        let (eco, omega) = e1();
        let tol = Tolerances::default();
        let p_star = Price::from_slice(&[1.0, 1.0]).unwrap();
        let a = detect_transfer_problem(&eco, &omega, &p_star, 60, &[1e-2, 1e-3], 99, &tol);
        let b = detect_transfer_problem(&eco, &omega, &p_star, 60, &[1e-2, 1e-3], 99, &tol);
        assert_eq!(a.found, b.found);
        let (ra, rb) = (a.best.unwrap(), b.best.unwrap());
        assert_eq!(ra.donor, rb.donor);
        assert_eq!(ra.utility_gain(), rb.utility_gain());
        assert_eq!(
            ra.p_after.components().as_slice(),
            rb.p_after.components().as_slice()
        );
    }

    #[test]
    fn lies_below_orders_by_componentwise_dominance() {
        let r = vec2(2.0, 2.0);
        let base = Allocation::new(vec![vec2(1.0, 0.0), vec2(1.0, 2.0)], &r).unwrap();
        let grown = Allocation::new(vec![vec2(1.0, 0.1), vec2(1.0, 1.9)], &r).unwrap();
        let moved = Allocation::new(vec![vec2(0.5, 0.5), vec2(1.5, 1.5)], &r).unwrap();
        assert!(lies_below(&base, &grown, 0));
        assert!(!lies_below(&base, &base, 0));
        assert!(!lies_below(&base, &moved, 0)); // incomparable
        assert!(!lies_below(&grown, &base, 0)); // reversed
    }
}
