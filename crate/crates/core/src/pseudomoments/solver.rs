use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::system::{solver_bytes, ConstraintSystem, SparseRow, DEFAULT_MEMORY_BUDGET};
use super::PseudoDistribution;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    pub check_every: usize,
    pub balance_every: usize,
    pub memory_budget: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 50_000,
            rho: 1.0,
            alpha: 1.6,
            check_every: 10,
            balance_every: 50,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub primal: f64,
    pub dual: f64,
    pub objective: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub converged: bool,
    /// `‖L y − S‖_∞` between the moment image and its PSD copy.
    pub primal_residual: f64,
    /// `max(0, −λ_min)` over all blocks at the returned moments.
    pub psd_residual: f64,
    pub dual_residual: f64,
    /// `‖A y − b‖_∞`.
    pub affine_residual: f64,
    pub objective: f64,
    pub objective_change: f64,
    pub rho: f64,
    pub history: Vec<HistoryEntry>,
}

/// Stacked `svec` images of all blocks; off-diagonal entries carry `√2`.
struct LinearMap {
    rows: Vec<SparseRow>,
    /// `(offset, dim)` per block.
    blocks: Vec<(usize, usize)>,
}

impl LinearMap {
    fn new(sys: &ConstraintSystem) -> Self {
        let mut rows = Vec::new();
        let mut blocks = Vec::new();
        for b in &sys.blocks {
            blocks.push((rows.len(), b.dim));
            let mut e = 0;
            for k in 0..b.dim {
                for l in k..b.dim {
                    let s = if k == l { 1.0 } else { std::f64::consts::SQRT_2 };
                    rows.push(b.entries[e].iter().map(|&(i, c)| (i, c * s)).collect());
                    e += 1;
                }
            }
        }
        Self { rows, blocks }
    }

    fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.iter().map(|&(i, c)| c * y[i]).sum()))
    }

    fn apply_t(&self, s: &DVector<f64>, n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (r, v) in self.rows.iter().zip(s.iter()) {
            if *v != 0.0 {
                for &(i, c) in r {
                    out[i] += c * v;
                }
            }
        }
        out
    }
}

fn unsvec(s: &[f64], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    let mut e = 0;
    for k in 0..dim {
        for l in k..dim {
            let v = if k == l { s[e] } else { s[e] / std::f64::consts::SQRT_2 };
            m[(k, l)] = v;
            m[(l, k)] = v;
            e += 1;
        }
    }
    m
}

fn svec_into(m: &DMatrix<f64>, out: &mut [f64]) {
    let dim = m.nrows();
    let mut e = 0;
    for k in 0..dim {
        for l in k..dim {
            out[e] = if k == l { m[(k, l)] } else { m[(k, l)] * std::f64::consts::SQRT_2 };
            e += 1;
        }
    }
}

/// Frobenius projection of each block onto the PSD cone.
fn project(map: &LinearMap, z: &DVector<f64>) -> DVector<f64> {
    let mut out = z.clone();
    for &(off, dim) in &map.blocks {
        let len = dim * (dim + 1) / 2;
        if dim == 1 {
            out[off] = z[off].max(0.0);
            continue;
        }
        let m = unsvec(&z.as_slice()[off..off + len], dim);
        let eig = SymmetricEigen::new(m);
        if eig.eigenvalues.min() >= 0.0 {
            continue;
        }
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let p = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        svec_into(&p, &mut out.as_mut_slice()[off..off + len]);
    }
    out
}

fn min_block_eigen(map: &LinearMap, s: &DVector<f64>) -> f64 {
    let mut lo = f64::INFINITY;
    for &(off, dim) in &map.blocks {
        let len = dim * (dim + 1) / 2;
        let v = if dim == 1 {
            s[off]
        } else {
            unsvec(&s.as_slice()[off..off + len], dim).symmetric_eigenvalues().min()
        };
        lo = lo.min(v);
    }
    lo
}

fn sparse_dot(row: &SparseRow, y: &DVector<f64>) -> f64 {
    row.iter().map(|&(i, c)| c * y[i]).sum()
}

/// Cached affine projection: `y = P r + q` minimizes `½yᵀHy − rᵀy` over `{A y = b}`.
struct AffineSolve {
    p: DMatrix<f64>,
    q: DVector<f64>,
}

fn affine_solve(sys: &ConstraintSystem, map: &LinearMap) -> Result<AffineSolve> {
    let n = sys.n_vars;
    let e = sys.eq_rows.len();
    let mut h = DMatrix::zeros(n, n);
    // H = LᵀL + AᵀA: the second term is constant on the affine set and keeps H definite.
    for r in map.rows.iter().chain(sys.eq_rows.iter()) {
        for &(i, ci) in r {
            for &(j, cj) in r {
                h[(i, j)] += ci * cj;
            }
        }
    }
    let scale = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1.0);
    for i in 0..n {
        if h[(i, i)] <= 1e-12 * scale {
            h[(i, i)] += 1e-12 * scale;
        }
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::Numerical("moment map is not injective".into()))?;
    let hinv = chol.inverse();
    if e == 0 {
        return Ok(AffineSolve {
            p: hinv,
            q: DVector::zeros(n),
        });
    }
    let mut at = DMatrix::zeros(n, e);
    for (k, r) in sys.eq_rows.iter().enumerate() {
        for &(i, c) in r {
            at[(i, k)] += c;
        }
    }
    let w = &hinv * &at;
    let g = at.transpose() * &w;
    let eig = SymmetricEigen::new(g);
    let top = eig.eigenvalues.amax();
    let inv = eig.eigenvalues.map(|v| if v > 1e-10 * top { 1.0 / v } else { 0.0 });
    let gpinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    let b = DVector::from_column_slice(&sys.eq_rhs);
    let wg = &w * &gpinv;
    let q = &wg * &b;
    let resid = (at.transpose() * &q - &b).amax();
    if resid > 1e-8 * (1.0 + b.amax()) {
        return Err(Error::Infeasible(format!(
            "equality constraints are inconsistent (least-squares residual {resid:e})"
        )));
    }
    let p = hinv - &wg * w.transpose();
    Ok(AffineSolve { p, q })
}

/// Operator-splitting solve of `min cᵀy` over `{A y = b, blocks(y) ⪰ 0}`.
pub fn solve_sdp(sys: &ConstraintSystem, opts: &SolverOptions) -> Result<PseudoDistribution> {
    let n = sys.n_vars;
    let bytes = solver_bytes(n as f64);
    if bytes > opts.memory_budget {
        return Err(Error::MemoryBudget {
            bytes,
            budget: opts.memory_budget,
        });
    }
    if !(opts.alpha > 0.0 && opts.alpha < 2.0) || !(opts.rho > 0.0) || opts.tol <= 0.0 {
        return Err(Error::InvalidSpec("solver options out of range".into()));
    }
    let map = LinearMap::new(sys);
    let aff = affine_solve(sys, &map)?;
    let mut c = DVector::zeros(n);
    for &(i, v) in &sys.objective {
        c[i] += v;
    }
    let b = DVector::from_column_slice(&sys.eq_rhs);
    let affine_res = |y: &DVector<f64>| {
        sys.eq_rows
            .iter()
            .zip(b.iter())
            .map(|(r, bi)| (sparse_dot(r, y) - bi).abs())
            .fold(0.0, f64::max)
    };

    let mut rho = opts.rho;
    let mut y = aff.q.clone();
    let mut s = project(&map, &map.apply(&y));
    let mut u = DVector::zeros(s.len());
    let mut stats = SolverStats::default();
    let mut last_obj = f64::NAN;
    let check = opts.check_every.max(1);
    for it in 1..=opts.max_iter {
        let r = map.apply_t(&(&s - &u), n) - &c / rho;
        y = &aff.p * r + &aff.q;
        let ly = map.apply(&y);
        let zhat = &ly * opts.alpha + &s * (1.0 - opts.alpha);
        let s_old = std::mem::replace(&mut s, project(&map, &(&zhat + &u)));
        u += &zhat - &s;

        if it % check == 0 || it == opts.max_iter {
            let primal = (&ly - &s).amax();
            let dual = rho * map.apply_t(&(&s - &s_old), n).amax();
            let obj = c.dot(&y);
            if !obj.is_finite() || !primal.is_finite() {
                return Err(Error::Numerical(format!("non-finite iterate at step {it}")));
            }
            let change = if last_obj.is_nan() {
                f64::INFINITY
            } else {
                (obj - last_obj).abs() / obj.abs().max(1.0)
            };
            last_obj = obj;
            stats.history.push(HistoryEntry {
                iteration: it,
                primal,
                dual,
                objective: obj,
            });
            stats.iterations = it;
            stats.primal_residual = primal;
            stats.dual_residual = dual;
            stats.objective = obj;
            stats.objective_change = change;
            stats.rho = rho;
            if primal <= opts.tol && dual <= opts.tol && change <= opts.tol {
                let psd = (-min_block_eigen(&map, &ly)).max(0.0);
                stats.psd_residual = psd;
                if psd <= opts.tol {
                    stats.converged = true;
                    stats.affine_residual = affine_res(&y);
                    return Ok(PseudoDistribution::new(y.iter().cloned().collect(), stats, sys));
                }
            }
        }
        if it % opts.balance_every.max(1) == 0 {
            let primal = (&ly - &s).amax();
            let dual = rho * map.apply_t(&(&s - &s_old), n).amax();
            if primal > 10.0 * dual {
                rho *= 2.0;
                u /= 2.0;
            } else if dual > 10.0 * primal {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    let ly = map.apply(&y);
    stats.psd_residual = (-min_block_eigen(&map, &ly)).max(0.0);
    stats.affine_residual = affine_res(&y);
    Err(Error::SolverStalled {
        iterations: stats.iterations,
        primal: stats.primal_residual,
        psd: stats.psd_residual,
        dual: stats.dual_residual,
    })
}
