//! Numerical toolkit for smooth pure-exchange economies: Walrasian
//! equilibria, their indices, the intersection determinant of the budget
//! space against the section manifold, tatonnement dynamics and
//! transfer-paradox experiments.
//!
//! The headline connection checked throughout the test suites: at a regular
//! equilibrium, giving endowment away can raise the donor's utility exactly
//! when the equilibrium has index -1, which also makes it tatonnement
//! unstable.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod dynamics;
pub mod economy;
pub mod equilibrium;
pub mod error;
pub mod manifold;
pub mod transfer;
pub mod verify;

pub use config::Tolerances;
pub use economy::{economy_from_json, economy_to_json, Allocation, Economy, Price, UtilitySpec};
pub use equilibrium::{
    excess_demand, excess_demand_truncated, find_all_equilibria, find_equilibrium, index_of,
    jacobian, EquilibriumRecord, JacobianMethod, ScanGrid,
};
pub use error::{Error, Result};
