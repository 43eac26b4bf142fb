//! Central tolerance record shared by the library, the test suites and the CLI.
//!
//! Every threshold used anywhere in the crate lives here so that the CLI can
//! override one knob and every downstream check sees the same value.

/// Numerical tolerances and solver limits, one field per knob.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Residual bound `max|z_-l|` for an accepted equilibrium.
    pub newton_residual: f64,
    /// Newton iteration cap.
    pub newton_max_iter: usize,
    /// Backtracking contraction factor for the damped Newton line search.
    pub newton_backtrack: f64,
    /// Positivity guard: price coordinates never go below this.
    pub price_floor: f64,
    /// Regularity scale: an equilibrium is regular when
    /// `|det J| > regularity_scale * (1 + max_row_sum(J))^(l-1)`.
    pub regularity_scale: f64,
    /// Relative price distance under which two equilibria are the same root.
    pub dedup_relative: f64,
    /// Walras's law residual bound `|p.z|` and `|p.f - w|/w`.
    pub walras_law: f64,
    /// Relative Frobenius agreement required between analytic and
    /// finite-difference Jacobians.
    pub jacobian_fd_agreement: f64,
    /// Default step for finite-difference Jacobians of excess demand.
    pub jacobian_fd_step: f64,
    /// Resource balance bound for Pareto allocations.
    pub pareto_resource: f64,
    /// Utility target bound for Pareto allocations (scaled by 1 + |target|).
    pub pareto_utility: f64,
    /// Maximum angle (radians) between a trader's utility gradient and the
    /// supporting price at a Pareto optimum.
    pub foc_angle: f64,
    /// Section-manifold membership residual for points produced by
    /// `section_point`.
    pub section_residual: f64,
    /// Base step for central differences of the parametrization map M;
    /// the per-column step is `m_step * (1 + |u_i|)`.
    pub m_step: f64,
    /// Scale for the near-singular guard on the intersection determinant:
    /// `|delta| <= near_singular_scale * prod(column norms)` is flagged.
    pub near_singular_scale: f64,
    /// Residual bound for a price to qualify as an equilibrium when
    /// evaluating the intersection determinant.
    pub delta_equilibrium_residual: f64,
    /// Continuation sub-steps for the local equilibrium price selection.
    pub continuation_steps: usize,
    /// Trust radius multiplier: a corrected price farther than
    /// `trust_radius_factor * |predictor step|` from the warm start loses
    /// the branch.
    pub trust_radius_factor: f64,
    /// Paradox strictness: donor utility must rise by more than
    /// `paradox_margin * (1 + |u_before|)`.
    pub paradox_margin: f64,
    /// Spectral margin for the stability classification, scaled by the
    /// max row sum of J.
    pub stability_margin: f64,
    /// Default tatonnement time step.
    pub tatonnement_dt: f64,
    /// Orthant guard for tatonnement trajectories.
    pub tatonnement_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_residual: 1e-10,
            newton_max_iter: 100,
            newton_backtrack: 0.5,
            price_floor: 1e-9,
            regularity_scale: 1e-8,
            dedup_relative: 1e-6,
            walras_law: 1e-10,
            jacobian_fd_agreement: 1e-6,
            jacobian_fd_step: 1e-6,
            pareto_resource: 1e-9,
            pareto_utility: 1e-8,
            foc_angle: 1e-7,
            section_residual: 1e-8,
            m_step: 1e-5,
            near_singular_scale: 1e-8,
            delta_equilibrium_residual: 1e-8,
            continuation_steps: 16,
            trust_radius_factor: 10.0,
            paradox_margin: 1e-10,
            stability_margin: 1e-9,
            tatonnement_dt: 1e-2,
            tatonnement_floor: 1e-6,
        }
    }
}

impl Tolerances {
    /// Override the Newton residual tolerance, keeping everything else.
    pub fn with_newton_residual(mut self, tol: f64) -> Self {
        self.newton_residual = tol;
        self
    }
}
