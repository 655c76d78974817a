use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::{count_monomials, Monomial, MonomialBasis};
use super::poly::Poly;
use crate::diagnostics::{hc_from_data, probe_directions};
use crate::error::{Error, Result};
use crate::model::Dataset;

/// Sparse linear functional on the moment vector.
pub type SparseRow = Vec<(usize, f64)>;

/// A symmetric matrix whose entries are linear in the moment vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdBlock {
    pub label: String,
    pub dim: usize,
    /// Upper-triangular entries `(k, l)`, `k ≤ l`, row-major.
    pub entries: Vec<SparseRow>,
}

impl PsdBlock {
    pub fn new(label: impl Into<String>, dim: usize, entries: Vec<SparseRow>) -> Result<Self> {
        if entries.len() != dim * (dim + 1) / 2 {
            return Err(Error::Assembly(format!(
                "block needs {} upper entries, got {}",
                dim * (dim + 1) / 2,
                entries.len()
            )));
        }
        Ok(Self {
            label: label.into(),
            dim,
            entries,
        })
    }

    pub fn matrix(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        let mut e = 0;
        for k in 0..self.dim {
            for l in k..self.dim {
                let v: f64 = self.entries[e].iter().map(|&(i, c)| c * y[i]).sum();
                m[(k, l)] = v;
                m[(l, k)] = v;
                e += 1;
            }
        }
        m
    }
}

/// Linear objective, equalities `A·y = b` and PSD blocks over a moment vector.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub n_vars: usize,
    pub eq_rows: Vec<SparseRow>,
    pub eq_rhs: Vec<f64>,
    pub eq_labels: Vec<String>,
    pub blocks: Vec<PsdBlock>,
    pub objective: SparseRow,
    pub relaxation: Option<Relaxation>,
}

impl ConstraintSystem {
    pub fn new(n_vars: usize, objective: SparseRow) -> Self {
        Self {
            n_vars,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            eq_labels: Vec::new(),
            blocks: Vec::new(),
            objective,
            relaxation: None,
        }
    }

    pub fn add_equality(&mut self, label: impl Into<String>, row: SparseRow, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self.eq_labels.push(label.into());
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * y[i]).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SosMode {
    #[default]
    WithNcm,
    NoNcm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SosConfig {
    pub eps: f64,
    /// Budget on `E⟨v,x⟩⁴ / (E⟨v,x⟩²)²`; defaults to 1.5 × the observed data's constant.
    pub lambda: Option<f64>,
    pub mode: SosMode,
    pub probes: usize,
    /// Basis degree `D`; the pseudo-distribution has degree `2D`.
    pub degree: usize,
    pub c_ncm: f64,
    pub m_theta: Option<f64>,
    pub m_r: Option<f64>,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub memory_budget: f64,
    /// Fail instead of skipping constraints whose degree exceeds `2D`.
    pub strict_degree: bool,
}

impl Default for SosConfig {
    fn default() -> Self {
        Self {
            eps: 0.0,
            lambda: None,
            mode: SosMode::WithNcm,
            probes: 4,
            degree: 2,
            c_ncm: 4.0,
            m_theta: None,
            m_r: None,
            seed: 0,
            tol: 1e-5,
            max_iter: 50_000,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            strict_degree: false,
        }
    }
}

pub const DEFAULT_MEMORY_BUDGET: f64 = 1024.0 * 1024.0 * 1024.0;

/// Bytes held by the solver's dense factorizations for `n_vars` moments.
pub fn solver_bytes(n_vars: f64) -> f64 {
    3.0 * n_vars * n_vars * 8.0
}

/// Moment-relaxation bookkeeping kept alongside the conic data.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub moments: Arc<MonomialBasis>,
    pub degree: usize,
    pub n: usize,
    pub d: usize,
    pub keep: usize,
    pub lambda: f64,
    pub c_ncm: f64,
    pub mode: SosMode,
    pub m_theta: f64,
    pub m_r: f64,
    pub x_scale: f64,
    pub y_scale: f64,
    /// Probe directions (unit vectors in the scaled coordinates).
    pub probes: Vec<Vec<f64>>,
    pub equalities: Vec<(String, Poly)>,
    pub inequalities: Vec<(String, Poly)>,
    pub objective: Poly,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentCheck {
    /// `g(w, Θ)` for every inequality `g ≥ 0`.
    pub slacks: Vec<(String, f64)>,
    pub min_slack: f64,
    /// Largest `|p(w, Θ)|` over the base equalities.
    pub eq_residual: f64,
    /// Objective in data units.
    pub objective: f64,
}

impl Relaxation {
    pub fn scaled_theta(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| t * self.x_scale / self.y_scale).collect()
    }

    /// Evaluates every constraint at the point `(w, Θ)`, `Θ` in data units.
    pub fn evaluate_assignment(&self, w: &[f64], theta: &[f64]) -> AssignmentCheck {
        let t = self.scaled_theta(theta);
        let slacks: Vec<(String, f64)> = self.inequalities.iter().map(|(l, g)| (l.clone(), g.eval(w, &t))).collect();
        let min_slack = slacks.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let eq_residual = self
            .equalities
            .iter()
            .map(|(_, p)| p.eval(w, &t).abs())
            .fold(0.0, f64::max);
        AssignmentCheck {
            slacks,
            min_slack,
            eq_residual,
            objective: self.objective.eval(w, &t) * self.y_scale * self.y_scale,
        }
    }

    pub fn objective_at(&self, w: &[f64], theta: &[f64]) -> f64 {
        self.objective.eval(w, &self.scaled_theta(theta)) * self.y_scale * self.y_scale
    }

    /// Moment-vector row of a polynomial.
    pub fn row_of(&self, p: &Poly) -> Result<SparseRow> {
        row_of(&self.moments, p, "query")
    }
}

fn row_of(moments: &MonomialBasis, p: &Poly, label: &str) -> Result<SparseRow> {
    let mut row: SparseRow = p
        .terms
        .iter()
        .filter(|(_, c)| **c != 0.0)
        .map(|(m, c)| {
            moments
                .get(m)
                .map(|i| (i, *c))
                .ok_or_else(|| Error::Assembly(format!("{label}: monomial {m} exceeds degree {}", moments.degree)))
        })
        .collect::<Result<_>>()?;
    row.sort_by_key(|e| e.0);
    Ok(row)
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x * x, c + 1));
    if c == 0 {
        return 1.0;
    }
    let r = (s / c as f64).sqrt();
    if r > 0.0 && r.is_finite() {
        r
    } else {
        1.0
    }
}

/// Largest uncentered ratio `mean⟨x,v⟩⁴ / (mean⟨x,v⟩²)²` over the probes.
fn uncentered_ratio(x: &DMatrix<f64>, probes: &[DVector<f64>]) -> f64 {
    probes
        .iter()
        .map(|v| {
            let p = x * v;
            let n = p.len() as f64;
            let m2 = p.iter().map(|t| t * t).sum::<f64>() / n;
            let m4 = p.iter().map(|t| t.powi(4)).sum::<f64>() / n;
            if m2 > 0.0 {
                m4 / (m2 * m2)
            } else {
                1.0
            }
        })
        .fold(1.0, f64::max)
}

/// Builds the degree-`2D` relaxation over `(w, Θ)` with `x′, y′` fixed to the data.
pub fn assemble_system(ds: &Dataset, cfg: &SosConfig) -> Result<ConstraintSystem> {
    let (n, d) = (ds.n(), ds.d());
    if !(0.0..0.5).contains(&cfg.eps) {
        return Err(Error::InvalidSpec(format!("eps = {} must lie in [0, 1/2)", cfg.eps)));
    }
    if cfg.degree < 1 {
        return Err(Error::InvalidSpec("relaxation degree must be at least 1".into()));
    }
    let two_d = 2 * cfg.degree;
    let n_vars = count_monomials(n, d, two_d);
    let bytes = solver_bytes(n_vars);
    if bytes > cfg.memory_budget {
        return Err(Error::MemoryBudget {
            bytes,
            budget: cfg.memory_budget,
        });
    }
    if cfg.probes < d {
        return Err(Error::InvalidSpec(format!("probe count {} below dimension {d}", cfg.probes)));
    }
    let moments = Arc::new(MonomialBasis::build(n, d, two_d, f64::INFINITY)?);
    let basis_len = moments.prefix_len(cfg.degree);

    let sx = rms(ds.x.iter().cloned());
    let sy = rms(ds.y.iter().cloned());
    let x = &ds.x / sx;
    let y = &ds.y / sy;
    let keep = n - (cfg.eps * n as f64).floor() as usize;
    let (nf, mf) = (n as f64, keep as f64);

    let probe_vecs = probe_directions(&x, cfg.probes, cfg.seed);
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => {
            let upper = hc_from_data(&x, cfg.probes, cfg.seed).map(|h| h.upper).unwrap_or(1.0);
            1.5 * upper.max(uncentered_ratio(&x, &probe_vecs))
        }
    };
    let m_theta = cfg.m_theta.unwrap_or(1e4);
    let m_r = cfg.m_r.unwrap_or(1e4);

    let residual: Vec<Poly> = (0..n)
        .map(|i| {
            let coef: Vec<f64> = x.row(i).iter().map(|v| -v).collect();
            Poly::affine_theta(y[i], &coef)
        })
        .collect();
    let res_sq: Vec<Poly> = residual.iter().map(|r| r * r).collect();
    let weighted = |vals: &dyn Fn(usize) -> Poly, scale: f64| -> Poly {
        let mut acc = Poly::zero(d);
        for i in 0..n {
            acc = &acc + &(&vals(i) * &Poly::w(i, d)).scale(scale);
        }
        acc
    };
    let objective = weighted(&|i| res_sq[i].clone(), 1.0 / mf);

    let mut notes = Vec::new();
    let mut equalities: Vec<(String, Poly)> = Vec::new();
    let mut sum_w = Poly::constant(-mf, d);
    for i in 0..n {
        sum_w = &sum_w + &Poly::w(i, d);
    }
    equalities.push(("weights_sum".into(), sum_w));
    for j in 0..d {
        let g = weighted(&|i| residual[i].scale(-x[(i, j)]), 1.0 / nf);
        equalities.push((format!("gradient_{}", j + 1), g));
    }

    let mut inequalities: Vec<(String, Poly)> = Vec::new();
    let mut include = |label: String, p: Poly, notes: &mut Vec<String>| -> Result<()> {
        let deg = p.degree();
        if deg > two_d {
            if cfg.strict_degree {
                return Err(Error::Assembly(format!(
                    "constraint {label} has degree {deg} > {two_d}"
                )));
            }
            notes.push(format!("skipped {label}: degree {deg} exceeds relaxation degree {two_d}"));
            return Ok(());
        }
        inequalities.push((label, p));
        Ok(())
    };
    let r2 = weighted(&|i| res_sq[i].clone(), 1.0 / mf);
    for (pi, v) in probe_vecs.iter().enumerate() {
        let a: Vec<f64> = (0..n).map(|i| x.row(i).dot(&v.transpose())).collect();
        let s2 = weighted(&|i| Poly::constant(a[i] * a[i], d), 1.0 / mf);
        let s4 = weighted(&|i| Poly::constant(a[i].powi(4), d), 1.0 / mf);
        include(format!("hypercontractivity_p{pi}"), &(&s2 * &s2).scale(lambda) - &s4, &mut notes)?;
        if cfg.mode == SosMode::WithNcm {
            let joint = weighted(&|i| res_sq[i].scale(a[i] * a[i]), 1.0 / mf);
            include(format!("ncm_r1_p{pi}"), &(&s2 * &r2).scale(cfg.c_ncm) - &joint, &mut notes)?;
        }
    }
    let r4 = weighted(&|i| &res_sq[i] * &res_sq[i], 1.0 / mf);
    include("noise_hypercontractivity".into(), &(&r2 * &r2).scale(lambda) - &r4, &mut notes)?;
    let mut theta_norm = Poly::constant(m_theta, d);
    for j in 0..d {
        theta_norm = &theta_norm - &(&Poly::theta(j, d) * &Poly::theta(j, d));
    }
    include("theta_bound".into(), theta_norm, &mut notes)?;
    include("residual_bound".into(), &Poly::constant(m_r, d) - &objective, &mut notes)?;
    if cfg.mode == SosMode::WithNcm {
        notes.push("NCM enforced at r = 1 only".into());
    }

    let mut sys = ConstraintSystem::new(moments.len(), row_of(&moments, &objective, "objective")?);
    sys.add_equality("normalization", vec![(0, 1.0)], 1.0);
    for (label, p) in &equalities {
        let deg = p.degree();
        if deg > two_d {
            return Err(Error::Assembly(format!("equality {label} has degree {deg} > {two_d}")));
        }
        for q in moments.monomials.iter().take_while(|q| q.degree() + deg <= two_d) {
            let prod = p.mul_monomial(q);
            let constant = prod.terms.get(&Monomial::one(d)).copied().unwrap_or(0.0);
            let mut lin = prod.clone();
            lin.terms.remove(&Monomial::one(d));
            let mut row = row_of(&moments, &lin, label)?;
            let mut rhs = -constant;
            let norm = (row.iter().map(|e| e.1 * e.1).sum::<f64>() + rhs * rhs).sqrt();
            if norm == 0.0 || row.is_empty() {
                continue;
            }
            for e in row.iter_mut() {
                e.1 /= norm;
            }
            rhs /= norm;
            sys.add_equality(format!("{label}*{q}"), row, rhs);
        }
    }

    let moment_block = localizing(&moments, &Poly::constant(1.0, d), basis_len, "moment")?;
    sys.blocks.push(moment_block);
    for (label, g) in &inequalities {
        let s = (two_d - g.degree()) / 2;
        let len = moments.prefix_len(s);
        let norm = g.coef_norm();
        let g = if norm > 0.0 { g.scale(1.0 / norm) } else { g.clone() };
        sys.blocks.push(localizing(&moments, &g, len, label)?);
    }

    sys.relaxation = Some(Relaxation {
        moments,
        degree: cfg.degree,
        n,
        d,
        keep,
        lambda,
        c_ncm: cfg.c_ncm,
        mode: cfg.mode,
        m_theta,
        m_r,
        x_scale: sx,
        y_scale: sy,
        probes: probe_vecs.iter().map(|v| v.iter().cloned().collect()).collect(),
        equalities,
        inequalities,
        objective,
        notes,
    });
    Ok(sys)
}

/// `[pE[g·bₖ·bₗ]]` over the first `len` basis monomials.
fn localizing(moments: &MonomialBasis, g: &Poly, len: usize, label: &str) -> Result<PsdBlock> {
    let b = &moments.monomials[..len];
    let mut entries = Vec::with_capacity(len * (len + 1) / 2);
    for k in 0..len {
        for l in k..len {
            let m = b[k].mul(&b[l]);
            entries.push(row_of(moments, &g.mul_monomial(&m), label)?);
        }
    }
    PsdBlock::new(label, len, entries)
}
