//! Homogeneous self-dual primal-dual interior-point method for problems over
//! products of the nonnegative orthant and second-order cones, with
//! Nesterov-Todd scaling and a Mehrotra predictor-corrector.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::problem::{ConicProblem, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpmSettings {
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    pub max_iter: usize,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self { feastol: 1e-8, abstol: 1e-8, reltol: 1e-8, max_iter: 200 }
    }
}

const FEASTOL_INACC: f64 = 1e-4;
const GAPTOL_INACC: f64 = 5e-5;
const STEP_FRACTION: f64 = 0.99;
const MIN_STEP: f64 = 1e-10;
const FIX_TOL: f64 = 1e-12;
const CONST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RelaxStatus {
    Optimal,
    /// Converged to the reduced tolerances only.
    Inaccurate,
    Infeasible,
    Unbounded,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Presolve {
    BoundConflict(usize),
    ConstantRow(usize),
    ConstantCone(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Relaxation {
    pub status: RelaxStatus,
    /// Full-length primal point (meaningful for optimal statuses).
    pub x: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    /// Set when presolve alone proved infeasibility.
    pub presolve: Option<Presolve>,
    /// Normalized Farkas residual when infeasibility came from the iterations.
    pub certificate_residual: Option<f64>,
}

impl Relaxation {
    fn trivial(status: RelaxStatus, x: Vec<f64>, value: f64) -> Self {
        Self { status, x, primal: value, dual: value, iterations: 0, presolve: None, certificate_residual: None }
    }
}

struct Soc {
    off: usize,
    dim: usize,
    vars: Vec<usize>,
    /// Sparse rows of the cone's block of `G`, as (position in `vars`, value).
    g: Vec<Vec<(usize, f64)>>,
    /// Upper triangle of `GᵀJG`, `J = diag(1, −1, …, −1)`, row-major `nc × nc`.
    gjg: Vec<f64>,
}

/// `min cᵀx  s.t.  Ax = b,  Gx + s = h,  s ∈ K` over the free variables.
struct Standard {
    n: usize,
    free: Vec<usize>,
    x_fixed: Vec<f64>,
    c: Vec<f64>,
    c_const: f64,
    a: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    lin: Vec<Vec<(usize, f64)>>,
    socs: Vec<Soc>,
    h: Vec<f64>,
    m: usize,
}

fn merge_terms(terms: &mut Vec<(usize, f64)>) {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for &(j, a) in terms.iter() {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    *terms = out;
}

fn max_abs_terms(t: &[(usize, f64)]) -> f64 {
    t.iter().fold(0.0, |m, x| m.max(x.1.abs()))
}

enum Built {
    Ready(Standard),
    Infeasible(Presolve),
    /// Every variable fixed; the point is the fixed vector.
    AllFixed(Vec<f64>),
}

fn standardize(p: &ConicProblem, lower: &[f64], upper: &[f64]) -> Built {
    let nv = p.n_vars;
    let mut pos = vec![usize::MAX; nv];
    let mut free = Vec::new();
    let mut x_fixed = vec![0.0; nv];
    for j in 0..nv {
        let (lo, hi) = (lower[j], upper[j]);
        let tol = if lo.is_finite() { FIX_TOL * (1.0 + lo.abs()) } else { 0.0 };
        if lo > hi + tol {
            return Built::Infeasible(Presolve::BoundConflict(j));
        }
        if lo.is_finite() && hi - lo <= tol {
            x_fixed[j] = lo;
        } else {
            pos[j] = free.len();
            free.push(j);
        }
    }
    if free.is_empty() {
        return Built::AllFixed(x_fixed);
    }
    let n = free.len();
    let split = |terms: &[(usize, f64)]| -> (Vec<(usize, f64)>, f64) {
        let mut out = Vec::with_capacity(terms.len());
        let mut constant = 0.0;
        for &(j, a) in terms {
            if pos[j] == usize::MAX {
                constant += a * x_fixed[j];
            } else {
                out.push((pos[j], a));
            }
        }
        merge_terms(&mut out);
        (out, constant)
    };

    let mut a_rows = Vec::new();
    let mut b = Vec::new();
    let mut lin = Vec::new();
    let mut h = Vec::new();
    for (i, row) in p.linear.iter().enumerate() {
        let (terms, constant) = split(&row.terms);
        let rhs = row.rhs - constant;
        let scale = max_abs_terms(&terms);
        if scale == 0.0 {
            let tol = CONST_TOL * (1.0 + row.rhs.abs());
            let ok = match row.relation {
                Relation::Le => rhs >= -tol,
                Relation::Ge => rhs <= tol,
                Relation::Eq => rhs.abs() <= tol,
            };
            if !ok {
                return Built::Infeasible(Presolve::ConstantRow(i));
            }
            continue;
        }
        let sign = if row.relation == Relation::Ge { -1.0 } else { 1.0 };
        let f = sign / scale;
        let scaled: Vec<(usize, f64)> = terms.iter().map(|&(j, a)| (j, a * f)).collect();
        if row.relation == Relation::Eq {
            a_rows.push(scaled);
            b.push(rhs * f);
        } else {
            lin.push(scaled);
            h.push(rhs * f);
        }
    }
    for (k, &j) in free.iter().enumerate() {
        if lower[j].is_finite() {
            lin.push(vec![(k, -1.0)]);
            h.push(-lower[j]);
        }
        if upper[j].is_finite() {
            lin.push(vec![(k, 1.0)]);
            h.push(upper[j]);
        }
    }

    let mut socs = Vec::new();
    let mut soc_h = Vec::new();
    for (ci, cone) in p.cones.iter().enumerate() {
        let dim = cone.entries.len() + 1;
        let mut rows = Vec::with_capacity(dim);
        for expr in core::iter::once(&cone.bound).chain(&cone.entries) {
            let (terms, constant) = split(&expr.terms);
            rows.push((terms, expr.constant + constant));
        }
        let mut vars: Vec<usize> = rows.iter().flat_map(|r| r.0.iter().map(|t| t.0)).collect();
        vars.sort_unstable();
        vars.dedup();
        let scale = rows.iter().fold(0.0f64, |m, r| m.max(max_abs_terms(&r.0)));
        if vars.is_empty() || scale == 0.0 {
            let hn: f64 = libm::sqrt(rows[1..].iter().map(|r| r.1 * r.1).sum());
            if rows[0].1 < hn - CONST_TOL * (1.0 + hn) {
                return Built::Infeasible(Presolve::ConstantCone(ci));
            }
            continue;
        }
        if dim == 1 {
            // ‖∅‖ ≤ bound is a plain nonnegativity row.
            let (terms, constant) = &rows[0];
            lin.push(terms.iter().map(|&(j, a)| (j, -a / scale)).collect());
            h.push(constant / scale);
            continue;
        }
        let nc = vars.len();
        let mut g = Vec::with_capacity(dim);
        for (terms, constant) in &rows {
            let mut row: Vec<(usize, f64)> =
                terms.iter().map(|&(j, a)| (vars.binary_search(&j).unwrap_or(0), -a / scale)).collect();
            row.sort_unstable_by_key(|t| t.0);
            g.push(row);
            soc_h.push(constant / scale);
        }
        let mut gjg = vec![0.0; nc * nc];
        for (r, nz) in g.iter().enumerate() {
            let sign = if r == 0 { 1.0 } else { -1.0 };
            for (p1, &(k1, a1)) in nz.iter().enumerate() {
                for &(k2, a2) in &nz[p1..] {
                    gjg[k1 * nc + k2] += sign * a1 * a2;
                }
            }
        }
        socs.push(Soc { off: 0, dim, vars, g, gjg });
    }
    let m_lin = lin.len();
    let mut o = m_lin;
    for s in &mut socs {
        s.off = o;
        o += s.dim;
    }
    h.extend(soc_h);
    let mut c = vec![0.0; n];
    let mut c_const = p.objective_constant;
    for j in 0..nv {
        if pos[j] == usize::MAX {
            c_const += p.objective[j] * x_fixed[j];
        } else {
            c[pos[j]] = p.objective[j];
        }
    }
    Built::Ready(Standard { n, free, x_fixed, c, c_const, a: a_rows, b, lin, socs, h, m: o })
}

impl Standard {
    fn m_lin(&self) -> usize {
        self.lin.len()
    }

    fn degree(&self) -> f64 {
        (self.m_lin() + self.socs.len()) as f64
    }

    fn g_mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, row) in self.lin.iter().enumerate() {
            out[i] = row.iter().map(|&(j, a)| a * x[j]).sum();
        }
        for s in &self.socs {
            for (r, row) in s.g.iter().enumerate() {
                out[s.off + r] = row.iter().map(|&(k, a)| a * x[s.vars[k]]).sum();
            }
        }
    }

    fn gt_mul_add(&self, z: &[f64], out: &mut [f64]) {
        for (i, row) in self.lin.iter().enumerate() {
            let zi = z[i];
            if zi != 0.0 {
                for &(j, a) in row {
                    out[j] += a * zi;
                }
            }
        }
        for s in &self.socs {
            for (r, row) in s.g.iter().enumerate() {
                let zr = z[s.off + r];
                if zr == 0.0 {
                    continue;
                }
                for &(k, a) in row {
                    out[s.vars[k]] += a * zr;
                }
            }
        }
    }

    fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|row| row.iter().map(|&(j, a)| a * x[j]).sum()).collect()
    }

    fn at_mul_add(&self, y: &[f64], out: &mut [f64]) {
        for (row, &yi) in self.a.iter().zip(y) {
            for &(j, a) in row {
                out[j] += a * yi;
            }
        }
    }

    /// Smallest "eigenvalue" of `v` with respect to the cone.
    fn min_eig(&self, v: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &vi in &v[..self.m_lin()] {
            m = m.min(vi);
        }
        for s in &self.socs {
            let u = &v[s.off..s.off + s.dim];
            m = m.min(u[0] - norm(&u[1..]));
        }
        m
    }

    fn add_e(&self, v: &mut [f64], alpha: f64) {
        for vi in &mut v[..self.m_lin()] {
            *vi += alpha;
        }
        for s in &self.socs {
            v[s.off] += alpha;
        }
    }

    fn jordan(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        let ml = self.m_lin();
        for i in 0..ml {
            out[i] = u[i] * v[i];
        }
        for s in &self.socs {
            let (a, b) = (&u[s.off..s.off + s.dim], &v[s.off..s.off + s.dim]);
            let o = &mut out[s.off..s.off + s.dim];
            o[0] = dot(a, b);
            for r in 1..s.dim {
                o[r] = a[0] * b[r] + b[0] * a[r];
            }
        }
    }

    /// `x` with `λ ∘ x = d`.
    fn jordan_div(&self, l: &[f64], d: &[f64], out: &mut [f64]) {
        let ml = self.m_lin();
        for i in 0..ml {
            out[i] = d[i] / l[i];
        }
        for s in &self.socs {
            let (lv, dv) = (&l[s.off..s.off + s.dim], &d[s.off..s.off + s.dim]);
            let det = soc_det(lv);
            let x0 = (lv[0] * dv[0] - dot(&lv[1..], &dv[1..])) / det;
            let o = &mut out[s.off..s.off + s.dim];
            o[0] = x0;
            for r in 1..s.dim {
                o[r] = (dv[r] - x0 * lv[r]) / lv[0];
            }
        }
    }

    /// Largest `α` keeping `u + α du` in the cone.
    fn max_step(&self, u: &[f64], du: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for i in 0..self.m_lin() {
            if du[i] < 0.0 {
                alpha = alpha.min(-u[i] / du[i]);
            }
        }
        for s in &self.socs {
            let (a, d) = (&u[s.off..s.off + s.dim], &du[s.off..s.off + s.dim]);
            alpha = alpha.min(soc_step(a, d));
        }
        alpha
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `u₀² − ‖u₁‖²` computed as a product of sum and difference.
fn soc_det(u: &[f64]) -> f64 {
    let n1 = norm(&u[1..]);
    (u[0] - n1) * (u[0] + n1)
}

fn soc_step(u: &[f64], d: &[f64]) -> f64 {
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = u[0] * d[0] - dot(&u[1..], &d[1..]);
    let c = soc_det(u).max(0.0);
    let mut best = f64::INFINITY;
    if d[0] < 0.0 {
        best = -u[0] / d[0];
    }
    if a.abs() <= 1e-300 {
        if b < 0.0 {
            best = best.min(-c / (2.0 * b));
        }
        return best;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return best;
    }
    let sq = libm::sqrt(disc);
    let t = -(b + if b >= 0.0 { sq } else { -sq });
    let roots = [t / a, if t != 0.0 { c / t } else { f64::INFINITY }];
    for r in roots {
        if r > 0.0 {
            best = best.min(r);
        }
    }
    best
}

struct SocScaling {
    eta: f64,
    w: Vec<f64>,
}

/// Nesterov-Todd scaling `W` with `W z = W⁻¹ s`.
struct Scaling {
    lin: Vec<f64>,
    soc: Vec<SocScaling>,
}

impl Scaling {
    fn identity(st: &Standard) -> Self {
        let soc = st
            .socs
            .iter()
            .map(|s| {
                let mut w = vec![0.0; s.dim];
                w[0] = 1.0;
                SocScaling { eta: 1.0, w }
            })
            .collect();
        Self { lin: vec![1.0; st.m_lin()], soc }
    }

    fn nt(st: &Standard, s: &[f64], z: &[f64]) -> Option<Self> {
        let ml = st.m_lin();
        let mut lin = Vec::with_capacity(ml);
        for i in 0..ml {
            if s[i] <= 0.0 || z[i] <= 0.0 {
                return None;
            }
            lin.push(libm::sqrt(s[i] / z[i]));
        }
        let mut soc = Vec::with_capacity(st.socs.len());
        for c in &st.socs {
            let (sv, zv) = (&s[c.off..c.off + c.dim], &z[c.off..c.off + c.dim]);
            let (sr, zr) = (soc_det(sv), soc_det(zv));
            if !(sr > 0.0 && zr > 0.0 && sv[0] > 0.0 && zv[0] > 0.0) {
                return None;
            }
            let (ss, zs) = (libm::sqrt(sr), libm::sqrt(zr));
            let sb: Vec<f64> = sv.iter().map(|v| v / ss).collect();
            let zb: Vec<f64> = zv.iter().map(|v| v / zs).collect();
            let gamma = libm::sqrt((1.0 + dot(&sb, &zb)) / 2.0);
            let mut w = vec![0.0; c.dim];
            w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
            for r in 1..c.dim {
                w[r] = (sb[r] - zb[r]) / (2.0 * gamma);
            }
            let eta = libm::sqrt(libm::sqrt(sr / zr));
            soc.push(SocScaling { eta, w });
        }
        Some(Self { lin, soc })
    }

    fn soc_apply(sc: &SocScaling, v: &[f64], out: &mut [f64], inverse: bool) {
        let w = &sc.w;
        let w1v1 = dot(&w[1..], &v[1..]);
        let (f, sign) = if inverse { (1.0 / sc.eta, -1.0) } else { (sc.eta, 1.0) };
        out[0] = f * (w[0] * v[0] + sign * w1v1);
        let coef = w1v1 / (1.0 + w[0]) + sign * v[0];
        for r in 1..w.len() {
            out[r] = f * (v[r] + coef * w[r]);
        }
    }

    fn apply(&self, st: &Standard, v: &[f64], out: &mut [f64], inverse: bool) {
        for (i, &w) in self.lin.iter().enumerate() {
            out[i] = if inverse { v[i] / w } else { v[i] * w };
        }
        for (c, sc) in st.socs.iter().zip(&self.soc) {
            let r = c.off..c.off + c.dim;
            Self::soc_apply(sc, &v[r.clone()], &mut out[r], inverse);
        }
    }

    fn w(&self, st: &Standard, v: &[f64]) -> Vec<f64> {
        let mut o = vec![0.0; v.len()];
        self.apply(st, v, &mut o, false);
        o
    }

    fn winv(&self, st: &Standard, v: &[f64]) -> Vec<f64> {
        let mut o = vec![0.0; v.len()];
        self.apply(st, v, &mut o, true);
        o
    }
}

/// In-place lower Cholesky factor of a row-major `n×n` matrix.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    true
}

fn chol_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

fn factor_regularized(mut mat: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(mat[i * n + i].abs()));
    let mut delta = 1e-13 * (1.0 + max_diag);
    let base = mat.clone();
    for _ in 0..8 {
        for i in 0..n {
            mat[i * n + i] = base[i * n + i] + delta;
        }
        if cholesky(&mut mat, n) {
            return Some(mat);
        }
        mat.copy_from_slice(&base);
        delta *= 100.0;
    }
    None
}

/// Factored reduced KKT system
/// `[0 Aᵀ Gᵀ; A 0 0; G 0 −W²] (x, y, z) = (bx, by, bz)`.
struct Kkt {
    l: Vec<f64>,
    hinv_at: Vec<Vec<f64>>,
    s_chol: Vec<f64>,
}

impl Kkt {
    fn factor(st: &Standard, sc: &Scaling) -> Option<Self> {
        let n = st.n;
        let mut h = vec![0.0; n * n];
        for (row, &w) in st.lin.iter().zip(&sc.lin) {
            let wt = 1.0 / (w * w);
            for (p, &(j1, a1)) in row.iter().enumerate() {
                let f = wt * a1;
                for &(j2, a2) in &row[p..] {
                    let (lo, hi) = if j1 <= j2 { (j1, j2) } else { (j2, j1) };
                    h[lo * n + hi] += f * a2;
                }
            }
        }
        // W⁻² = η⁻²(2 (Jw)(Jw)ᵀ − J) for each second-order cone
        for (c, ss) in st.socs.iter().zip(&sc.soc) {
            let nc = c.vars.len();
            let mut u = vec![0.0; nc];
            for r in 0..c.dim {
                let jw = if r == 0 { ss.w[0] } else { -ss.w[r] };
                if jw == 0.0 {
                    continue;
                }
                for &(k, g) in &c.g[r] {
                    u[k] += g * jw;
                }
            }
            let f = 1.0 / (ss.eta * ss.eta);
            for k1 in 0..nc {
                let j1 = c.vars[k1];
                let a = 2.0 * u[k1];
                for k2 in k1..nc {
                    h[j1 * n + c.vars[k2]] += f * (a * u[k2] - c.gjg[k1 * nc + k2]);
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                h[i * n + j] = h[j * n + i];
            }
        }
        let l = factor_regularized(h, n)?;
        let p = st.a.len();
        let mut hinv_at = Vec::with_capacity(p);
        for row in &st.a {
            let mut v = vec![0.0; n];
            for &(j, a) in row {
                v[j] = a;
            }
            chol_solve(&l, n, &mut v);
            hinv_at.push(v);
        }
        let mut s = vec![0.0; p * p];
        for i in 0..p {
            let ai = st.a[i].iter().map(|&(j, a)| a * hinv_at[i][j]).sum::<f64>();
            s[i * p + i] = ai;
            for k in i + 1..p {
                let v: f64 = st.a[i].iter().map(|&(j, a)| a * hinv_at[k][j]).sum();
                s[i * p + k] = v;
                s[k * p + i] = v;
            }
        }
        let s_chol = if p > 0 { factor_regularized(s, p)? } else { Vec::new() };
        Some(Self { l, hinv_at, s_chol })
    }

    fn solve_once(&self, st: &Standard, sc: &Scaling, bx: &[f64], by: &[f64], bz: &[f64]) -> [Vec<f64>; 3] {
        let n = st.n;
        let p = st.a.len();
        let w2bz = sc.winv(st, &sc.winv(st, bz));
        let mut r = bx.to_vec();
        st.gt_mul_add(&w2bz, &mut r);
        chol_solve(&self.l, n, &mut r);
        let mut y = vec![0.0; p];
        if p > 0 {
            let at = st.a_mul(&r);
            for i in 0..p {
                y[i] = at[i] - by[i];
            }
            chol_solve(&self.s_chol, p, &mut y);
            for (yi, col) in y.iter().zip(&self.hinv_at) {
                for j in 0..n {
                    r[j] -= yi * col[j];
                }
            }
        }
        let x = r;
        let mut gx = vec![0.0; st.m];
        st.g_mul(&x, &mut gx);
        for (g, b) in gx.iter_mut().zip(bz) {
            *g -= b;
        }
        let z = sc.winv(st, &sc.winv(st, &gx));
        [x, y, z]
    }

    fn solve(&self, st: &Standard, sc: &Scaling, bx: &[f64], by: &[f64], bz: &[f64]) -> [Vec<f64>; 3] {
        let mut sol = self.solve_once(st, sc, bx, by, bz);
        let scale = 1.0 + bx.iter().chain(by).chain(bz).fold(0.0f64, |m, v| m.max(v.abs()));
        let mut last = f64::INFINITY;
        for _ in 0..3 {
            let [x, y, z] = &sol;
            let mut ex = bx.to_vec();
            let mut atgt = vec![0.0; st.n];
            st.at_mul_add(y, &mut atgt);
            st.gt_mul_add(z, &mut atgt);
            for (e, v) in ex.iter_mut().zip(&atgt) {
                *e -= v;
            }
            let ax = st.a_mul(x);
            let ey: Vec<f64> = by.iter().zip(&ax).map(|(b, v)| b - v).collect();
            let mut gx = vec![0.0; st.m];
            st.g_mul(x, &mut gx);
            let w2z = sc.w(st, &sc.w(st, z));
            let ez: Vec<f64> = (0..st.m).map(|i| bz[i] - gx[i] + w2z[i]).collect();
            let err = ex.iter().chain(&ey).chain(&ez).fold(0.0f64, |m, v| m.max(v.abs()));
            if err <= 1e-14 * scale || err >= last {
                break;
            }
            last = err;
            let d = self.solve_once(st, sc, &ex, &ey, &ez);
            for (s, dd) in sol.iter_mut().zip(&d) {
                for (a, b) in s.iter_mut().zip(dd) {
                    *a += b;
                }
            }
        }
        sol
    }
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Metrics {
    pres: f64,
    dres: f64,
    gap: f64,
    relgap: f64,
    pcost: f64,
    dcost: f64,
    pinf: Option<f64>,
    dinf: Option<f64>,
}

fn metrics(st: &Standard, it: &Iterate, r: &Residuals) -> Metrics {
    let nb = norm(&st.b).max(norm(&st.h)).max(1.0);
    let nc = norm(&st.c).max(1.0);
    let pres = norm(&r.y).max(norm(&r.z)) / nb / it.tau;
    let dres = norm(&r.x) / nc / it.tau;
    let cx = dot(&st.c, &it.x);
    let by_hz = dot(&st.b, &it.y) + dot(&st.h, &it.z);
    let pcost = cx / it.tau;
    let dcost = -by_hz / it.tau;
    let gap = dot(&it.s, &it.z) / (it.tau * it.tau);
    let relgap = if pcost < 0.0 {
        gap / -pcost
    } else if dcost > 0.0 {
        gap / dcost
    } else {
        f64::INFINITY
    };
    let pinf = (by_hz < 0.0).then(|| {
        let mut v = vec![0.0; st.n];
        st.at_mul_add(&it.y, &mut v);
        st.gt_mul_add(&it.z, &mut v);
        norm(&v) / -by_hz
    });
    let dinf = (cx < 0.0).then(|| {
        let ax = st.a_mul(&it.x);
        let mut gs = vec![0.0; st.m];
        st.g_mul(&it.x, &mut gs);
        for (g, s) in gs.iter_mut().zip(&it.s) {
            *g += s;
        }
        norm(&ax).max(norm(&gs)) / -cx
    });
    Metrics { pres, dres, gap, relgap, pcost, dcost, pinf, dinf }
}

struct Residuals {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
}

fn residuals(st: &Standard, it: &Iterate) -> Residuals {
    let mut rx = vec![0.0; st.n];
    st.at_mul_add(&it.y, &mut rx);
    st.gt_mul_add(&it.z, &mut rx);
    for (r, c) in rx.iter_mut().zip(&st.c) {
        *r = -*r - c * it.tau;
    }
    let ax = st.a_mul(&it.x);
    let ry: Vec<f64> = ax.iter().zip(&st.b).map(|(a, b)| a - b * it.tau).collect();
    let mut rz = vec![0.0; st.m];
    st.g_mul(&it.x, &mut rz);
    for i in 0..st.m {
        rz[i] += it.s[i] - st.h[i] * it.tau;
    }
    let rt = it.kappa + dot(&st.c, &it.x) + dot(&st.b, &it.y) + dot(&st.h, &it.z);
    Residuals { x: rx, y: ry, z: rz, tau: rt }
}

enum Exit {
    Optimal,
    Inaccurate,
    Infeasible(f64),
    Unbounded,
    Failed,
}

fn classify(m: &Metrics, set: &IpmSettings, reduced: bool) -> Option<Exit> {
    let (ft, at, rt) = if reduced {
        (FEASTOL_INACC, GAPTOL_INACC, GAPTOL_INACC)
    } else {
        (set.feastol, set.abstol, set.reltol)
    };
    if m.pres < ft && m.dres < ft && (m.gap < at || m.relgap < rt) {
        return Some(if reduced { Exit::Inaccurate } else { Exit::Optimal });
    }
    if let Some(p) = m.pinf.filter(|p| *p < ft) {
        return Some(Exit::Infeasible(p));
    }
    if m.dinf.is_some_and(|d| d < ft) {
        return Some(Exit::Unbounded);
    }
    None
}

fn combine(base: &[Vec<f64>; 3], dir: &[Vec<f64>; 3], t: f64) -> [Vec<f64>; 3] {
    let f = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(u, v)| u + t * v).collect::<Vec<f64>>();
    [f(&base[0], &dir[0]), f(&base[1], &dir[1]), f(&base[2], &dir[2])]
}

fn run(st: &Standard, set: &IpmSettings) -> (Exit, Iterate, usize, Metrics) {
    let (n, p, m) = (st.n, st.a.len(), st.m);
    let ident = Scaling::identity(st);
    let init = Kkt::factor(st, &ident);
    let mut it = Iterate { x: vec![0.0; n], y: vec![0.0; p], z: vec![0.0; m], s: vec![0.0; m], tau: 1.0, kappa: 1.0 };
    let Some(kkt) = init else {
        let r = residuals(st, &it);
        let mt = metrics(st, &it, &r);
        return (Exit::Failed, it, 0, mt);
    };
    let [x0, _, zp] = kkt.solve(st, &ident, &vec![0.0; n], &st.b, &st.h);
    let mut s0: Vec<f64> = zp.iter().map(|v| -v).collect();
    let shift = -st.min_eig(&s0);
    if shift >= 0.0 {
        st.add_e(&mut s0, 1.0 + shift);
    }
    let negc: Vec<f64> = st.c.iter().map(|v| -v).collect();
    let [_, y0, mut z0] = kkt.solve(st, &ident, &negc, &vec![0.0; p], &vec![0.0; m]);
    let shift = -st.min_eig(&z0);
    if shift >= 0.0 {
        st.add_e(&mut z0, 1.0 + shift);
    }
    it.x = x0;
    it.y = y0;
    it.z = z0;
    it.s = s0;
    let nu = st.degree();
    let last_metrics;
    let mut iter = 0;
    loop {
        let r = residuals(st, &it);
        let mt = metrics(st, &it, &r);
        if !(mt.pres.is_finite() && mt.dres.is_finite() && it.tau.is_finite() && it.kappa.is_finite()) {
            return (Exit::Failed, it, iter, mt);
        }
        if let Some(exit) = classify(&mt, set, false) {
            return (exit, it, iter, mt);
        }
        if iter >= set.max_iter {
            last_metrics = mt;
            break;
        }
        let Some(sc) = Scaling::nt(st, &it.s, &it.z) else {
            last_metrics = mt;
            break;
        };
        let Some(kkt) = Kkt::factor(st, &sc) else {
            last_metrics = mt;
            break;
        };
        let lambda = sc.w(st, &it.z);
        let hv = st.h.clone();
        let sol1 = kkt.solve(st, &sc, &negc, &st.b, &hv);
        let den = it.kappa / it.tau - dot(&st.c, &sol1[0]) - dot(&st.b, &sol1[1]) - dot(&st.h, &sol1[2]);
        let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / (nu + 1.0);

        let mut ll = vec![0.0; m];
        st.jordan(&lambda, &lambda, &mut ll);
        let step = |sigma: f64, ds: &[f64], dk: f64| -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64, f64, Vec<f64>)> {
            let mut tds = vec![0.0; m];
            st.jordan_div(&lambda, ds, &mut tds);
            let wtds = sc.w(st, &tds);
            let f = 1.0 - sigma;
            let bx: Vec<f64> = r.x.iter().map(|v| f * v).collect();
            let by: Vec<f64> = r.y.iter().map(|v| -f * v).collect();
            let bz: Vec<f64> = (0..m).map(|i| -f * r.z[i] - wtds[i]).collect();
            let sol2 = kkt.solve(st, &sc, &bx, &by, &bz);
            let num = f * r.tau + dk / it.tau + dot(&st.c, &sol2[0]) + dot(&st.b, &sol2[1]) + dot(&st.h, &sol2[2]);
            let dtau = num / den;
            if !dtau.is_finite() {
                return None;
            }
            let [dx, dy, dz] = combine(&sol2, &sol1, dtau);
            let wdz = sc.w(st, &dz);
            let ws: Vec<f64> = tds.iter().zip(&wdz).map(|(a, b)| a - b).collect();
            let ds_full = sc.w(st, &ws);
            let dkappa = (dk - it.kappa * dtau) / it.tau;
            Some((dx, dy, dz, ds_full, dtau, dkappa, ws))
        };
        let max_alpha = |ds: &[f64], dz: &[f64], dtau: f64, dkappa: f64| -> f64 {
            let mut a = st.max_step(&it.s, ds).min(st.max_step(&it.z, dz));
            if dtau < 0.0 {
                a = a.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-it.kappa / dkappa);
            }
            a
        };

        let ds_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
        let Some((_, _, dz_a, ds_a, dtau_a, dkappa_a, ws_a)) = step(0.0, &ds_aff, -it.tau * it.kappa) else {
            last_metrics = mt;
            break;
        };
        let alpha_aff = max_alpha(&ds_a, &dz_a, dtau_a, dkappa_a).min(1.0);
        let sigma = libm::pow(1.0 - alpha_aff, 3.0).clamp(0.0, 1.0);

        let wdz_a = sc.w(st, &dz_a);
        let mut corr = vec![0.0; m];
        st.jordan(&ws_a, &wdz_a, &mut corr);
        let mut ds_c: Vec<f64> = (0..m).map(|i| -ll[i] - corr[i]).collect();
        st.add_e(&mut ds_c, sigma * mu);
        let dk_c = -it.tau * it.kappa - dtau_a * dkappa_a + sigma * mu;
        let Some((dx, dy, dz, ds, dtau, dkappa, _)) = step(sigma, &ds_c, dk_c) else {
            last_metrics = mt;
            break;
        };
        let alpha = (STEP_FRACTION * max_alpha(&ds, &dz, dtau, dkappa)).min(1.0);
        iter += 1;
        if !(alpha > MIN_STEP) {
            last_metrics = mt;
            break;
        }
        for (a, b) in it.x.iter_mut().zip(&dx) {
            *a += alpha * b;
        }
        for (a, b) in it.y.iter_mut().zip(&dy) {
            *a += alpha * b;
        }
        for (a, b) in it.z.iter_mut().zip(&dz) {
            *a += alpha * b;
        }
        for (a, b) in it.s.iter_mut().zip(&ds) {
            *a += alpha * b;
        }
        it.tau += alpha * dtau;
        it.kappa += alpha * dkappa;
    }
    let exit = classify(&last_metrics, set, true).unwrap_or(Exit::Failed);
    (exit, it, iter, last_metrics)
}

/// Solves the continuous relaxation of `p` with the given box (which
/// replaces `p.lower` / `p.upper`).
pub(crate) fn solve_relaxation(p: &ConicProblem, lower: &[f64], upper: &[f64], set: &IpmSettings) -> Relaxation {
    let st = match standardize(p, lower, upper) {
        Built::Ready(st) => st,
        Built::AllFixed(x) => {
            let mut q = p.clone();
            q.lower = lower.to_vec();
            q.upper = upper.to_vec();
            let v = q.max_violation(&x);
            let status = if v.worst <= CONST_TOL { RelaxStatus::Optimal } else { RelaxStatus::Infeasible };
            let value = p.objective_value(&x);
            return Relaxation::trivial(status, x, value);
        }
        Built::Infeasible(reason) => {
            let mut r = Relaxation::trivial(RelaxStatus::Infeasible, Vec::new(), f64::INFINITY);
            r.presolve = Some(reason);
            return r;
        }
    };
    let (exit, it, iterations, mt) = run(&st, set);
    let mut x = st.x_fixed.clone();
    if it.tau > 0.0 {
        for (k, &j) in st.free.iter().enumerate() {
            x[j] = it.x[k] / it.tau;
        }
    }
    let (status, primal, dual, cert) = match exit {
        Exit::Optimal => (RelaxStatus::Optimal, p.objective_value(&x), mt.dcost + st.c_const, None),
        Exit::Inaccurate => (RelaxStatus::Inaccurate, p.objective_value(&x), mt.dcost + st.c_const, None),
        Exit::Infeasible(res) => (RelaxStatus::Infeasible, f64::INFINITY, f64::INFINITY, Some(res)),
        Exit::Unbounded => (RelaxStatus::Unbounded, f64::NEG_INFINITY, f64::NEG_INFINITY, None),
        Exit::Failed => (RelaxStatus::Failed, f64::NAN, f64::NEG_INFINITY, None),
    };
    let _ = mt.pcost;
    Relaxation { status, x, primal, dual, iterations, presolve: None, certificate_residual: cert }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_std() -> Standard {
        let p = ConicProblem::new(3);
        let mut q = p.clone();
        q.cones.push(super::super::problem::SocConstraint {
            entries: vec![
                super::super::problem::AffineExpr::var(0, 1.0),
                super::super::problem::AffineExpr::var(1, 1.0),
            ],
            bound: super::super::problem::AffineExpr::var(2, 1.0),
        });
        match standardize(&q, &q.lower, &q.upper) {
            Built::Ready(s) => s,
            _ => panic!(),
        }
    }

    #[test]
    fn nt_scaling_maps_z_and_s_to_same_point() {
        let st = toy_std();
        let s = vec![3.0, 1.0, -0.5];
        let z = vec![2.0, -0.3, 0.8];
        let sc = Scaling::nt(&st, &s, &z).unwrap();
        let wz = sc.w(&st, &z);
        let winv_s = sc.winv(&st, &s);
        for (a, b) in wz.iter().zip(&winv_s) {
            assert!((a - b).abs() < 1e-12, "{wz:?} vs {winv_s:?}");
        }
        let back = sc.winv(&st, &sc.w(&st, &z));
        for (a, b) in back.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jordan_division_inverts_product() {
        let st = toy_std();
        let l = vec![2.0, 0.5, -0.7];
        let d = vec![0.3, 1.0, 2.0];
        let mut x = vec![0.0; 3];
        st.jordan_div(&l, &d, &mut x);
        let mut back = vec![0.0; 3];
        st.jordan(&l, &x, &mut back);
        for (a, b) in back.iter().zip(&d) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let u = [2.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        assert!((soc_step(&u, &d) - 2.0).abs() < 1e-12);
        let d = [1.0, 0.5, 0.0];
        assert_eq!(soc_step(&u, &d), f64::INFINITY);
        let d = [-1.0, 0.0, 0.0];
        assert!((soc_step(&u, &d) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        assert!(cholesky(&mut a, 2));
        let mut b = vec![2.0, 1.0];
        chol_solve(&a, 2, &mut b);
        assert!((4.0 * b[0] + 2.0 * b[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * b[0] + 3.0 * b[1] - 1.0).abs() < 1e-12);
    }
}
