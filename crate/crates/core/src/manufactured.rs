//! Manufactured smooth states `(u, pi)` for a constant tensor, with the
//! load, divergence and classical traction they induce.

use crate::expr::{Expr, ExprError};
use crate::tensor::Entries;

#[derive(Clone, Debug)]
pub struct Manufactured {
    pub dim: usize,
    pub tensor: Entries,
    u: Vec<Expr>,
    p: Expr,
    du: Vec<Vec<Expr>>,
    ddu: Vec<Vec<Vec<Expr>>>,
    dp: Vec<Expr>,
}

impl Manufactured {
    pub fn new(tensor: Entries, u: Vec<Expr>, p: Expr) -> Self {
        let dim = tensor.dim();
        assert_eq!(u.len(), dim, "one velocity component per dimension");
        let du: Vec<Vec<Expr>> = u.iter().map(|ui| (0..dim).map(|d| ui.diff(d)).collect()).collect();
        let ddu = du.iter().map(|row| row.iter().map(|g| (0..dim).map(|d| g.diff(d)).collect()).collect()).collect();
        let dp = (0..dim).map(|d| p.diff(d)).collect();
        Manufactured { dim, tensor, u, p, du, ddu, dp }
    }

    pub fn parse(tensor: Entries, u: &[&str], p: &str) -> Result<Self, ExprError> {
        let u = u.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(tensor, u, Expr::parse(p)?))
    }

    pub fn velocity(&self, x: &[f64]) -> Vec<f64> {
        self.u.iter().map(|e| e.eval(x)).collect()
    }

    /// Row-major `d_j u_i`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.du.iter().flat_map(|row| row.iter().map(|e| e.eval(x))).collect()
    }

    pub fn pressure(&self, x: &[f64]) -> f64 {
        self.p.eval(x)
    }

    pub fn divergence(&self, x: &[f64]) -> f64 {
        (0..self.dim).map(|i| self.du[i][i].eval(x)).sum()
    }

    /// `L(u, pi)_i = d_alpha (a_ij^{alpha beta} d_beta u_j) - d_i pi`.
    pub fn load(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| {
                let mut s = -self.dp[i].eval(x);
                for j in 0..n {
                    for a in 0..n {
                        for b in 0..n {
                            let c = self.tensor.get(i, j, a, b);
                            if c != 0.0 {
                                s += c * self.ddu[j][b][a].eval(x);
                            }
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Classical traction `a_ij^{alpha beta} d_beta u_j n_alpha - pi n_i`.
    pub fn traction(&self, x: &[f64], normal: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let g = self.gradient(x);
        let p = self.pressure(x);
        (0..n)
            .map(|i| {
                let mut s = -p * normal[i];
                for j in 0..n {
                    for a in 0..n {
                        for b in 0..n {
                            s += self.tensor.get(i, j, a, b) * g[j * n + b] * normal[a];
                        }
                    }
                }
                s
            })
            .collect()
    }
}
