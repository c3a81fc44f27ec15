//! Problem data: main-channel Gram, interference constraints, power budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{eig, HermitianMatrix};

/// Relative tolerance used to accept a Gram matrix as PSD.
pub const PSD_TOL: f64 = 1e-9;

/// One interference power constraint `tr(W2 R) ≤ P_I`.
#[derive(Clone, Debug)]
pub struct IpcConstraint {
    pub w2: HermitianMatrix,
    pub p_i: f64,
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub w1: HermitianMatrix,
    pub constraints: Vec<IpcConstraint>,
    pub p_t: f64,
}

fn check_psd(name: &str, a: &HermitianMatrix) -> Result<()> {
    let e = eig(a)?;
    let floor = -PSD_TOL * e.max_abs_eigenvalue().max(1.0);
    if e.min_eigenvalue() < floor {
        return Err(Error::InvalidMatrix {
            matrix: name.to_string(),
            reason: format!(
                "not positive semi-definite (min eigenvalue {:.6e})",
                e.min_eigenvalue()
            ),
        });
    }
    Ok(())
}

impl ProblemInstance {
    /// Validates dims, PSD-ness and budgets.
    pub fn new(w1: HermitianMatrix, constraints: Vec<IpcConstraint>, p_t: f64) -> Result<Self> {
        let m = w1.dim();
        check_psd("W1", &w1)?;
        if !(p_t > 0.0) || !p_t.is_finite() {
            return Err(Error::InvalidInstance(format!("P_T must be positive and finite, got {p_t}")));
        }
        for (k, c) in constraints.iter().enumerate() {
            let name = if constraints.len() == 1 {
                "W2".to_string()
            } else {
                format!("W2[{k}]")
            };
            if c.w2.dim() != m {
                return Err(Error::InvalidMatrix {
                    matrix: name,
                    reason: format!("dimension {} does not match W1 dimension {m}", c.w2.dim()),
                });
            }
            check_psd(&name, &c.w2)?;
            if !(c.p_i >= 0.0) || !c.p_i.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "P_I for constraint {k} must be non-negative and finite, got {}",
                    c.p_i
                )));
            }
        }
        Ok(Self { w1, constraints, p_t })
    }

    /// Single-IPC convenience constructor.
    pub fn single(w1: HermitianMatrix, w2: HermitianMatrix, p_t: f64, p_i: f64) -> Result<Self> {
        Self::new(w1, vec![IpcConstraint { w2, p_i }], p_t)
    }

    pub fn tpc_only(w1: HermitianMatrix, p_t: f64) -> Result<Self> {
        Self::new(w1, Vec::new(), p_t)
    }

    pub fn dim(&self) -> usize {
        self.w1.dim()
    }

    pub fn num_ipc(&self) -> usize {
        self.constraints.len()
    }

    pub fn with_p_t(&self, p_t: f64) -> Result<Self> {
        Self::new(self.w1.clone(), self.constraints.clone(), p_t)
    }

    /// Every `P_Ik` replaced by `p_i`.
    pub fn with_p_i(&self, p_i: f64) -> Result<Self> {
        let cs = self
            .constraints
            .iter()
            .map(|c| IpcConstraint { w2: c.w2.clone(), p_i })
            .collect();
        Self::new(self.w1.clone(), cs, self.p_t)
    }

    /// `Σ_k W2k`.
    pub fn combined_ipc_gram(&self) -> HermitianMatrix {
        self.constraints
            .iter()
            .fold(HermitianMatrix::zeros(self.dim()), |acc, c| acc.add(&c.w2))
    }

    /// `μ1 I + Σ_k μ2k W2k`.
    pub fn dual_gram(&self, d: &DualPoint) -> HermitianMatrix {
        let m = self.dim();
        let mut g = HermitianMatrix::identity(m).scale(d.mu1);
        for (c, &mu) in self.constraints.iter().zip(&d.mu2) {
            if mu != 0.0 {
                g = g.add(&c.w2.scale(mu));
            }
        }
        g
    }
}

/// Lagrange multipliers: `mu1` for the TPC, one `mu2` entry per IPC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub mu1: f64,
    pub mu2: Vec<f64>,
}

impl DualPoint {
    pub fn new(mu1: f64, mu2: Vec<f64>) -> Result<Self> {
        if !(mu1 >= 0.0) || mu2.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Domain("dual variables must be non-negative".into()));
        }
        Ok(Self { mu1, mu2 })
    }

    pub fn zeros(k: usize) -> Self {
        Self { mu1: 0.0, mu2: vec![0.0; k] }
    }

    pub fn single(mu1: f64, mu2: f64) -> Self {
        Self { mu1, mu2: vec![mu2] }
    }

    pub(crate) fn with_mu1(&self, mu1: f64) -> Self {
        Self { mu1, mu2: self.mu2.clone() }
    }

    pub(crate) fn with_mu2(&self, k: usize, v: f64) -> Self {
        let mut mu2 = self.mu2.clone();
        mu2[k] = v;
        Self { mu1: self.mu1, mu2 }
    }
}
