//! The cross-module property suite. Each check reproduces one acceptance
//! criterion at its stated tolerance and reports a pass/fail verdict with
//! a deterministic detail line.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Tolerances;
use crate::corpus::{
    self, CorpusEconomy, CORPUS_SEED, NO_TRADE_COUNT, RANDOM_ECONOMY_COUNT,
};
use crate::dynamics::{stability, tatonnement, StabilityClass};
use crate::economy::{Allocation, Economy, Price, UtilitySpec};
use crate::equilibrium::{
    find_all_equilibria, jacobian, record_at, EquilibriumRecord, JacobianMethod, ScanGrid,
};
use crate::error::Error;
use crate::manifold::{delta, m_jacobian_columns, utility_levels_at};
use crate::transfer::{detect_transfer_problem, equilibrium_selection};

/// Knobs for the property suite; defaults reproduce the acceptance run.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    pub trials: usize,
    pub magnitudes: Vec<f64>,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: CORPUS_SEED,
            trials: 500,
            magnitudes: vec![1e-3, 1e-4],
            tolerances: Tolerances::default(),
        }
    }
}

/// Verdict of one suite check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
    pub seconds: f64,
}

fn check(name: &'static str, body: impl FnOnce() -> (bool, String)) -> CheckResult {
    let started = std::time::Instant::now();
    let (passed, details) = body();
    CheckResult {
        name,
        passed,
        details,
        seconds: started.elapsed().as_secs_f64(),
    }
}

fn random_spec(rng: &mut ChaCha8Rng, goods: usize) -> UtilitySpec {
    if rng.gen_bool(0.5) {
        let raw: Vec<f64> = (0..goods).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = raw.iter().sum();
        UtilitySpec::CobbDouglas {
            weights: raw.iter().map(|w| w / total).collect(),
        }
    } else {
        UtilitySpec::Ces {
            shares: (0..goods).map(|_| rng.gen_range(0.5..1.5)).collect(),
            elasticity: if rng.gen_bool(0.5) {
                rng.gen_range(0.4..0.8)
            } else {
                rng.gen_range(1.4..3.0)
            },
        }
    }
}

/// 1. Walras's law and degree-zero homogeneity on randomized demand draws.
pub fn walras_law_and_homogeneity(cfg: &VerifyConfig) -> CheckResult {
    check("walras-law-and-homogeneity", || {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x01);
        let mut worst_walras = 0.0_f64;
        let mut worst_homog = 0.0_f64;
        for _ in 0..1000 {
            let goods = rng.gen_range(2..=4usize);
            let spec = random_spec(&mut rng, goods);
            let p_raw = DVector::from_iterator(
                goods,
                (0..goods).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))),
            );
            let w = rng.gen_range(0.1..10.0);
            let lambda = rng.gen_range(0.1..10.0);
            let d = spec.demand_raw(&p_raw, w).expect("interior demand");
            worst_walras = worst_walras.max((p_raw.dot(&d) - w).abs() / w);
            let scaled = spec
                .demand_raw(&(&p_raw * lambda), lambda * w)
                .expect("interior demand");
            for j in 0..goods {
                let rel = (d[j] - scaled[j]).abs() / d[j].abs().max(1.0);
                worst_homog = worst_homog.max(rel);
            }
        }
        (
            worst_walras < 1e-10 && worst_homog < 1e-10,
            format!(
                "1000 draws: worst |p.f-w|/w = {worst_walras:.2e}, worst homogeneity gap = {worst_homog:.2e}"
            ),
        )
    })
}

/// 2. The symmetric anchor: unique equilibrium at unit prices, det J = -0.5,
/// index +1, positive intersection determinant, tatonnement convergence from
/// both sides.
pub fn symmetric_anchor(cfg: &VerifyConfig) -> CheckResult {
    check("symmetric-anchor", || {
        let tol = &cfg.tolerances;
        let fixture = corpus::e1();
        let found = find_all_equilibria(
            &fixture.economy,
            &fixture.endowments,
            &ScanGrid::default_for_goods(2),
            tol,
        );
        if found.len() != 1 {
            return (false, format!("expected 1 equilibrium, found {}", found.len()));
        }
        let rec = &found[0];
        let price_gap = (rec.price.components()[0] - 1.0).abs();
        let det_gap = (rec.det_j + 0.5).abs();
        let delta_value = match delta(&fixture.economy, &fixture.endowments, &rec.price, tol) {
            Ok(v) => v,
            Err(e) => return (false, format!("delta failed: {e}")),
        };
        let mut converged_both = true;
        for start in [0.1, 10.0] {
            let p0 = Price::from_slice(&[start, 1.0]).expect("valid start");
            match tatonnement(&fixture.economy, &fixture.endowments, &p0, tol.tatonnement_dt, 500.0, tol)
            {
                Ok(traj) => {
                    let end_gap = (traj.end().1.components()[0] - 1.0).abs();
                    converged_both &= traj.converged && end_gap < 1e-6;
                }
                Err(_) => converged_both = false,
            }
        }
        let passed = price_gap < 1e-8
            && det_gap < 1e-6
            && rec.index == Some(1)
            && delta_value > 0.0
            && converged_both;
        (
            passed,
            format!(
                "price gap {price_gap:.2e}, det gap {det_gap:.2e}, index {:?}, delta {delta_value:.4}, tatonnement from 0.1 and 10 converged: {converged_both}",
                rec.index
            ),
        )
    })
}

/// 3. The mirrored-CES multiplicity family: three equilibria each, indices
/// (+1, -1, +1).
pub fn multiplicity_family(cfg: &VerifyConfig) -> CheckResult {
    check("multiplicity-family", || {
        let tol = &cfg.tolerances;
        let mut lines = Vec::new();
        let mut passed = true;
        for member in corpus::e2_family() {
            let found = find_all_equilibria(
                &member.economy,
                &member.endowments,
                &ScanGrid::default_for_goods(member.economy.goods()),
                tol,
            );
            let indices: Vec<i8> = found.iter().filter_map(|r| r.index).collect();
            let ok = found.len() == 3
                && indices == vec![1, -1, 1]
                && indices.iter().map(|&i| i as i32).sum::<i32>() == 1;
            passed &= ok;
            lines.push(format!(
                "{}: {} roots, indices {:?}",
                member.name,
                found.len(),
                indices
            ));
        }
        (passed, lines.join("; "))
    })
}

fn scan_economy(
    item: &CorpusEconomy,
    tol: &Tolerances,
) -> Vec<EquilibriumRecord> {
    find_all_equilibria(
        &item.economy,
        &item.endowments,
        &ScanGrid::default_for_goods(item.economy.goods()),
        tol,
    )
}

/// Corpus equilibria: every root the scan finds across the standard corpus.
pub fn corpus_equilibria(cfg: &VerifyConfig) -> Vec<(CorpusEconomy, EquilibriumRecord)> {
    let mut out = Vec::new();
    for item in corpus::full_corpus() {
        for rec in scan_economy(&item, &cfg.tolerances) {
            out.push((item.clone(), rec));
        }
    }
    out
}

/// 4. The sign of the intersection determinant equals the index on at least
/// 100 regular equilibria, zero mismatches tolerated.
pub fn delta_sign_matches_index(cfg: &VerifyConfig) -> CheckResult {
    check("delta-sign-matches-index", || {
        let tol = &cfg.tolerances;
        let mut pool = corpus_equilibria(cfg);
        // Extend with extra randomized batches until the pool is large enough.
        let mut batch = 0;
        while pool.len() < 110 && batch < 8 {
            for item in corpus::random_economies(cfg.seed ^ (0xba7c4 + batch), 20) {
                for rec in scan_economy(&item, tol) {
                    pool.push((item.clone(), rec));
                }
            }
            batch += 1;
        }
        let mut checked = 0usize;
        let mut mismatches = 0usize;
        let mut near_singular = 0usize;
        let mut failures = 0usize;
        for (item, rec) in &pool {
            if !rec.regular {
                continue;
            }
            match delta(&item.economy, &item.endowments, &rec.price, tol) {
                Ok(value) => {
                    checked += 1;
                    let sign = if value > 0.0 { 1 } else { -1 };
                    if Some(sign) != rec.index {
                        mismatches += 1;
                    }
                }
                Err(Error::NearSingular { .. }) => near_singular += 1,
                Err(_) => failures += 1,
            }
        }
        (
            checked >= 100 && mismatches == 0 && failures == 0,
            format!(
                "{checked} regular equilibria checked, {mismatches} sign mismatches, {near_singular} near-singular skips, {failures} evaluation failures"
            ),
        )
    })
}

/// 5. The transfer problem is found exactly at index -1, at every requested
/// magnitude, across the whole corpus.
pub fn transfer_iff_index_minus_one(cfg: &VerifyConfig) -> CheckResult {
    check("transfer-iff-index-minus-one", || {
        let tol = &cfg.tolerances;
        let mut mismatches = Vec::new();
        let mut equilibria = 0usize;
        let mut paradox_sites = 0usize;
        let mut branch_lost = 0usize;
        for (item, rec) in corpus_equilibria(cfg) {
            if !rec.regular {
                continue;
            }
            equilibria += 1;
            let expected = rec.index == Some(-1);
            if expected {
                paradox_sites += 1;
            }
            let outcome = detect_transfer_problem(
                &item.economy,
                &item.endowments,
                &rec.price,
                cfg.trials,
                &cfg.magnitudes,
                cfg.seed,
                tol,
            );
            branch_lost += outcome.branch_lost;
            for &(magnitude, found) in &outcome.found_by_magnitude {
                if found != expected {
                    mismatches.push(format!(
                        "{} at p1={:.6} magnitude {magnitude:.0e}: found={found}, index={:?}",
                        item.name,
                        rec.price.components()[0],
                        rec.index
                    ));
                }
            }
        }
        let passed = mismatches.is_empty() && equilibria > 0 && paradox_sites > 0;
        let head = format!(
            "{equilibria} regular equilibria, {paradox_sites} with index -1, {} mismatches, {branch_lost} branch-lost trials",
            mismatches.len()
        );
        let details = if mismatches.is_empty() {
            head
        } else {
            format!("{head}; first: {}", mismatches[0])
        };
        (passed, details)
    })
}

/// 6. Constructed no-trade equilibria are regular with index +1 and positive
/// intersection determinant.
pub fn no_trade_family(cfg: &VerifyConfig) -> CheckResult {
    check("no-trade-family", || {
        let tol = &cfg.tolerances;
        let fixtures = corpus::no_trade_fixtures(cfg.seed, NO_TRADE_COUNT);
        let mut bad = Vec::new();
        for fixture in &fixtures {
            match record_at(&fixture.economy, &fixture.endowments, &fixture.price, tol) {
                Ok(rec) => {
                    if !(rec.regular && rec.index == Some(1)) {
                        bad.push(format!("{}: index {:?}", fixture.name, rec.index));
                        continue;
                    }
                    match delta(&fixture.economy, &fixture.endowments, &fixture.price, tol) {
                        Ok(v) if v > 0.0 => {}
                        Ok(v) => bad.push(format!("{}: delta {v:.3e}", fixture.name)),
                        Err(e) => bad.push(format!("{}: {e}", fixture.name)),
                    }
                }
                Err(e) => bad.push(format!("{}: {e}", fixture.name)),
            }
        }
        (
            bad.is_empty(),
            if bad.is_empty() {
                format!("{} no-trade equilibria, all regular with index +1 and delta > 0", fixtures.len())
            } else {
                format!("{} failures; first: {}", bad.len(), bad[0])
            },
        )
    })
}

/// 7. Spectral stability implies index +1 (the converse is not asserted).
pub fn stable_implies_index_plus_one(cfg: &VerifyConfig) -> CheckResult {
    check("stable-implies-index-plus-one", || {
        let tol = &cfg.tolerances;
        let mut stable_count = 0usize;
        let mut plus_one_seen = false;
        let mut violations = 0usize;
        let mut total = 0usize;
        for (_, rec) in corpus_equilibria(cfg) {
            if !rec.regular {
                continue;
            }
            total += 1;
            if rec.index == Some(1) {
                plus_one_seen = true;
            }
            if let Ok(report) = stability(&rec, tol) {
                if report.classification == StabilityClass::Stable {
                    stable_count += 1;
                    if rec.index != Some(1) {
                        violations += 1;
                    }
                }
            }
        }
        (
            violations == 0 && plus_one_seen && total > 0,
            format!(
                "{total} equilibria, {stable_count} spectrally stable, {violations} stability/index violations"
            ),
        )
    })
}

/// 8. Numerical hygiene: analytic vs finite-difference Jacobians, step-halving
/// of the parametrization derivative, and step-count independence of the
/// selection map.
pub fn numerical_hygiene(cfg: &VerifyConfig) -> CheckResult {
    check("numerical-hygiene", || {
        let tol = &cfg.tolerances;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x08);

        // (a) Jacobian agreement on 200 random Cobb-Douglas economies.
        let mut worst_jacobian = 0.0_f64;
        for _ in 0..200 {
            let traders = rng.gen_range(2..=4usize);
            let goods = rng.gen_range(2..=4usize);
            let utilities: Vec<UtilitySpec> = (0..traders)
                .map(|_| {
                    let raw: Vec<f64> = (0..goods).map(|_| rng.gen_range(0.5..1.5)).collect();
                    let total: f64 = raw.iter().sum();
                    UtilitySpec::CobbDouglas {
                        weights: raw.iter().map(|w| w / total).collect(),
                    }
                })
                .collect();
            let rows: Vec<DVector<f64>> = (0..traders)
                .map(|_| DVector::from_iterator(goods, (0..goods).map(|_| rng.gen_range(0.2..1.2))))
                .collect();
            let mut resources = DVector::zeros(goods);
            for row in &rows {
                resources += row;
            }
            let eco = Economy::new(utilities, resources).expect("valid random economy");
            let omega = Allocation::new(rows, eco.resources()).expect("valid endowments");
            let truncated = DVector::from_iterator(
                goods - 1,
                (0..goods - 1).map(|_| 10f64.powf(rng.gen_range(-1.0..1.0))),
            );
            let p = Price::from_truncated(&truncated).expect("valid price");
            let analytic = jacobian(&eco, &omega, &p, JacobianMethod::Analytic).expect("analytic");
            let fd = jacobian(
                &eco,
                &omega,
                &p,
                JacobianMethod::FiniteDifference {
                    step: tol.jacobian_fd_step,
                },
            )
            .expect("finite differences");
            let rel = (&analytic - &fd).norm() / analytic.norm().max(1e-300);
            worst_jacobian = worst_jacobian.max(rel);
        }

        // (b) Step-halving of dM/du on the anchor plus random two-trader
        // economies.
        let mut worst_halving = 0.0_f64;
        let mut halving_cases = vec![corpus::e1()];
        halving_cases.extend(corpus::random_economies(cfg.seed ^ 0x8b, 4).into_iter().filter(
            |c| c.economy.traders() == 2 || c.economy.traders() == 3,
        ));
        for item in &halving_cases {
            let found = scan_economy(item, tol);
            let Some(rec) = found.first() else { continue };
            let Ok(u) = utility_levels_at(&item.economy, &item.endowments, &rec.price) else {
                continue;
            };
            let Ok(coarse) = m_jacobian_columns(&item.economy, &u, tol.m_step) else {
                continue;
            };
            let Ok(fine) = m_jacobian_columns(&item.economy, &u, tol.m_step / 2.0) else {
                continue;
            };
            for j in 0..coarse.nrows() {
                for k in 0..coarse.ncols() {
                    let scale = coarse[(j, k)].abs().max(1.0);
                    worst_halving = worst_halving.max((coarse[(j, k)] - fine[(j, k)]).abs() / scale);
                }
            }
        }

        // (c) Selection-map step-count independence at every corpus
        // equilibrium, for endowment moves no larger than 1e-3.
        let mut worst_selection = 0.0_f64;
        for (item, rec) in corpus_equilibria(cfg) {
            if !rec.regular {
                continue;
            }
            let omega = &item.endowments;
            let donor_row = omega.row(0);
            let recipient = 1usize;
            let mut shift = DVector::zeros(item.economy.goods());
            for j in 0..item.economy.goods() {
                if donor_row[j] > 0.0 {
                    shift[j] = (1e-3 / item.economy.goods() as f64).min(0.4 * donor_row[j]);
                }
            }
            if shift.sum() <= 0.0 {
                continue;
            }
            let rows: Vec<DVector<f64>> = (0..item.economy.traders())
                .map(|i| {
                    if i == 0 {
                        omega.row(i) - &shift
                    } else if i == recipient {
                        omega.row(i) + &shift
                    } else {
                        omega.row(i).clone()
                    }
                })
                .collect();
            let Ok(omega_prime) = Allocation::new(rows, item.economy.resources()) else {
                continue;
            };
            let one = equilibrium_selection(&item.economy, omega, &rec.price, &omega_prime, 1, tol);
            let many =
                equilibrium_selection(&item.economy, omega, &rec.price, &omega_prime, 32, tol);
            match (one, many) {
                (Ok(a), Ok(b)) => {
                    let gap = (a.truncated() - b.truncated()).amax();
                    worst_selection = worst_selection.max(gap);
                }
                _ => worst_selection = f64::INFINITY,
            }
        }

        let passed = worst_jacobian < tol.jacobian_fd_agreement
            && worst_halving < 1e-5
            && worst_selection < 1e-9;
        (
            passed,
            format!(
                "jacobian rel err {worst_jacobian:.2e} (limit 1e-6), dM/du halving gap {worst_halving:.2e} (limit 1e-5), selection 1-vs-32-step gap {worst_selection:.2e} (limit 1e-9)"
            ),
        )
    })
}

/// Run the full suite in acceptance order.
pub fn run_all(cfg: &VerifyConfig) -> Vec<CheckResult> {
    vec![
        walras_law_and_homogeneity(cfg),
        symmetric_anchor(cfg),
        multiplicity_family(cfg),
        delta_sign_matches_index(cfg),
        transfer_iff_index_minus_one(cfg),
        no_trade_family(cfg),
        stable_implies_index_plus_one(cfg),
        numerical_hygiene(cfg),
    ]
}
