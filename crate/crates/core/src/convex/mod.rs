//! ℓ1 machinery: basis pursuit through a linear program, and BPDN / elastic
//! net through coordinate descent.

pub mod bp;
pub mod lasso;
pub mod lp;

pub use bp::{basis_pursuit, bp_formulate, solve_program, bp_formulate_split, BasisPursuitLp, VariableLayout};
pub use lasso::{bpdn_lasso, elastic_net, kkt_residual, lambda_max, LassoConfig};
pub use lp::{lp_solve, LpSolution, StandardFormLp};
