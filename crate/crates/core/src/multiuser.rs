//! Several interference constraints: per-user budgets through the cyclic
//! IBA, and the sum-interference reduction to a single IPC.

use crate::error::{Error, Result};
use crate::iba::{check_ipc_redundant, iba_solve_pinned, solve_with_zero_budgets, SolverConfig};
use crate::problem::{IpcConstraint, ProblemInstance};
use crate::solver::Solution;

/// Per-user IPCs `tr(W2k R) ≤ P_Ik`.
///
/// Constraints already met by water-filling start with their dual pinned at
/// zero; if any of them is violated at termination the solve is repeated
/// with every dual free.
pub fn solve_multiuser(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    if inst.constraints.iter().any(|c| c.p_i == 0.0) {
        return solve_with_zero_budgets(inst, cfg, solve_multiuser);
    }
    let free = vec![false; inst.num_ipc()];
    let pinned = check_ipc_redundant(inst)?;
    if pinned.iter().any(|&p| p) {
        match iba_solve_pinned(inst, cfg, &pinned) {
            Ok(s) if pins_hold(inst, &s, &pinned, cfg.epsilon) => return Ok(s),
            Ok(_) | Err(Error::NotConverged(_)) => {}
            Err(e) => return Err(e),
        }
    }
    iba_solve_pinned(inst, cfg, &free)
}

fn pins_hold(inst: &ProblemInstance, sol: &Solution, pinned: &[bool], eps: f64) -> bool {
    pinned
        .iter()
        .zip(&sol.interference_powers)
        .zip(&inst.constraints)
        .all(|((&p, &power), c)| !p || power <= c.p_i + eps)
}

/// Total interference `Σk tr(W2k R) ≤ P_I_total`, i.e. one IPC with
/// `W2 = Σk W2k`.
pub fn solve_sum_ipc(inst: &ProblemInstance, p_i_total: f64, cfg: &SolverConfig) -> Result<Solution> {
    if inst.num_ipc() == 0 {
        return Err(Error::InvalidInstance("sum-interference solve needs at least one IPC".into()));
    }
    let reduced = ProblemInstance::new(
        inst.w1.clone(),
        vec![IpcConstraint {
            w2: inst.combined_ipc_gram(),
            p_i: p_i_total,
        }],
        inst.p_t,
    )?;
    crate::solve::solve_with(&reduced, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::HermitianMatrix;
    use crate::solve::solve;

    fn diag(d: &[f64]) -> HermitianMatrix {
        HermitianMatrix::from_real_diagonal(d).unwrap()
    }

    fn two_axis() -> ProblemInstance {
        ProblemInstance::new(
            HermitianMatrix::identity(2),
            vec![
                IpcConstraint { w2: diag(&[1.0, 0.0]), p_i: 0.3 },
                IpcConstraint { w2: diag(&[0.0, 1.0]), p_i: 0.3 },
            ],
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn per_axis_caps() {
        let s = solve_multiuser(&two_axis(), &SolverConfig::default()).unwrap();
        assert!(s.covariance.sub(&HermitianMatrix::identity(2).scale(0.3)).max_abs() < 1e-8);
        assert!((s.capacity_nats - 2.0 * 1.3f64.ln()).abs() < 1e-8);
        assert!(s.duals.mu1 < 1e-9);
    }

    #[test]
    fn sum_ipc_matches_symmetric_case() {
        let s = solve_sum_ipc(&two_axis(), 0.6, &SolverConfig::default()).unwrap();
        assert!((s.capacity_nats - 2.0 * 1.3f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn duplicate_constraint_matches_single() {
        let w1 = diag(&[1.0, 0.5]);
        let w2 = HermitianMatrix::from_real_rows(&[vec![1.0, -0.5], vec![-0.5, 1.0]]).unwrap();
        let one = ProblemInstance::single(w1.clone(), w2.clone(), 1.5, 1.0).unwrap();
        let two = ProblemInstance::new(
            w1,
            vec![IpcConstraint { w2: w2.clone(), p_i: 1.0 }, IpcConstraint { w2, p_i: 1.0 }],
            1.5,
        )
        .unwrap();
        let a = solve(&one).unwrap();
        let b = solve_multiuser(&two, &SolverConfig::default()).unwrap();
        assert!((a.capacity_nats - b.capacity_nats).abs() < 1e-8);
    }

    #[test]
    fn needs_a_constraint() {
        let inst = ProblemInstance::tpc_only(HermitianMatrix::identity(2), 1.0).unwrap();
        assert!(solve_sum_ipc(&inst, 1.0, &SolverConfig::default()).is_err());
    }
}
