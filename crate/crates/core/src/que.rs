//! Identification operators between a weighted graph and a discretised
//! metric graph, measured quasi-unitarity defects and closed-form error
//! bounds.
//!
//! The graph side is `ℓ²(V, μ)` with the operator `Δ = M⁻¹L`; the metric
//! side is the P1 space with mass `B` and the rescaled form `τ·uᵀAu`. Every
//! defect is an operator norm between weighted spaces and is computed as
//! the largest eigenvalue of a generalised symmetric problem:
//! `‖X R^{1/2}‖² = sup ‖Xg‖² / ‖g‖₁²` with `‖g‖₁² = ‖g‖² + ε(g)`.

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{rational, rational_from_f64, rational_to_f64};
use crate::fem::{ChainMatrix, CondensedSolver, FemDiscretization, HarmonicPartition};
use crate::graph::{GraphStats, WeightedGraph};
use crate::linalg::{self, block_krylov, KrylovOptions, Pencil, Which};

/// Largest admissible relative spread of `ν(v)/μ(v)` over the vertices.
pub const WEIGHT_SPREAD_TOL: f64 = 1e-10;

/// FEM problems up to this size have their `(I − JJ′)` defect computed
/// densely.
const DENSE_DEFECT_LIMIT: usize = 500;

/// `J`, `J′`, `J¹`, `J′¹` between `ℓ²(V, μ)` and a P1 space on a compatible
/// metric graph.
#[derive(Clone, Debug)]
pub struct IdentificationPair {
    pub c: f64,
    pub tau: f64,
    pub mu: Vec<f64>,
    /// Graph energy matrix `L`.
    pub laplacian: DMatrix<f64>,
    pub fem: FemDiscretization,
    pub psi: HarmonicPartition,
    /// `⟨ψ_v, ψ_w⟩`, exact on any mesh.
    pub hat_mass: DMatrix<f64>,
    /// Relative spread of `ν/μ` over the vertices.
    pub weight_spread: f64,
}

pub fn build_identification(
    g: &WeightedGraph,
    fem: &FemDiscretization,
    c: f64,
    tau: f64,
) -> Result<IdentificationPair> {
    if fem.mg.ids() != g.ids() || fem.mg.edges() != g.edges() {
        return Err(Error::Malformed(
            "metric graph and weighted graph have different combinatorics".into(),
        ));
    }
    if !(c > 0.0) || !(tau > 0.0) {
        return Err(Error::Malformed(format!(
            "c = {c} and tau = {tau} must be positive"
        )));
    }
    let psi = HarmonicPartition::new(fem);
    let ratios: Vec<f64> = psi.nu.iter().zip(g.mu()).map(|(n, m)| n / m).collect();
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let weight_spread = (hi - lo) / hi;
    if weight_spread > WEIGHT_SPREAD_TOL {
        return Err(Error::IncompatibleWeights {
            spread: weight_spread,
        });
    }
    let nv = g.num_vertices();
    let bpsi: Vec<DVector<f64>> = (0..nv).map(|v| fem.mass.apply(&psi.column(v))).collect();
    let mut hat_mass = DMatrix::from_fn(nv, nv, |i, j| psi.project(&bpsi[j])[i]);
    hat_mass = (&hat_mass + hat_mass.transpose()) * 0.5;
    let (laplacian, mu) = g.laplacian();
    Ok(IdentificationPair {
        c,
        tau,
        mu,
        laplacian,
        fem: fem.clone(),
        psi,
        hat_mass,
        weight_spread,
    })
}

impl IdentificationPair {
    pub fn nv(&self) -> usize {
        self.mu.len()
    }

    pub fn nu(&self) -> &[f64] {
        &self.psi.nu
    }

    /// `Jf = c Σ f(v) ψ_v`.
    pub fn j(&self, f: &[f64]) -> DVector<f64> {
        self.psi.combine(f) * self.c
    }

    /// `(J′u)(v) = (1/c) ⨍ u ψ_v`.
    pub fn j_prime(&self, u: &DVector<f64>) -> Vec<f64> {
        let bu = self.fem.mass.apply(u);
        self.psi
            .project(&bu)
            .iter()
            .zip(self.nu())
            .map(|(p, n)| p / (n * self.c))
            .collect()
    }

    /// `(J′¹u)(v) = u(v)/c`.
    pub fn j_prime1(&self, u: &DVector<f64>) -> Vec<f64> {
        (0..self.nv()).map(|v| u[v] / self.c).collect()
    }

    /// Adjoint of `J` between the weighted inner products.
    pub fn j_adjoint(&self, u: &DVector<f64>) -> Vec<f64> {
        let bu = self.fem.mass.apply(u);
        self.psi
            .project(&bu)
            .iter()
            .zip(&self.mu)
            .map(|(p, m)| self.c * p / m)
            .collect()
    }

    /// Matrix of `J′J = N⁻¹ ΨᵀBΨ`.
    pub fn j_prime_j(&self) -> DMatrix<f64> {
        let nu = self.nu();
        DMatrix::from_fn(self.nv(), self.nv(), |i, j| self.hat_mass[(i, j)] / nu[i])
    }

    /// `(L + M)`, the Gram matrix of the graph form norm.
    fn form_gram(&self) -> DMatrix<f64> {
        let mut e = self.laplacian.clone();
        for (i, m) in self.mu.iter().enumerate() {
            e[(i, i)] += m;
        }
        e
    }

    /// `τA + B`, the Gram matrix of the metric form norm.
    fn metric_gram(&self) -> ChainMatrix {
        self.fem.stiffness.combine(self.tau, &self.fem.mass, 1.0)
    }
}

/// Every defect of quasi-unitary equivalence for one mesh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Defects {
    pub norm_j: f64,
    /// `‖J* − J′‖`.
    pub adjoint_defect: f64,
    /// `‖(I − J′J)R^{1/2}‖`.
    pub jpj: f64,
    /// `‖(I − JJ′)R̃^{1/2}‖`.
    pub jjp: f64,
    /// `‖(J¹ − J)R^{1/2}‖`.
    pub compat1: f64,
    /// `‖(J′¹ − J′)R̃^{1/2}‖`.
    pub compat2: f64,
    /// Mixed form defect on the form-norm unit balls.
    pub form_closeness: f64,
    /// `‖R̃J − JR‖`.
    pub op_defect: f64,
}

impl Defects {
    fn fields(&self) -> [f64; 8] {
        [
            self.norm_j,
            self.adjoint_defect,
            self.jpj,
            self.jjp,
            self.compat1,
            self.compat2,
            self.form_closeness,
            self.op_defect,
        ]
    }

    fn from_fields(f: [f64; 8]) -> Self {
        Self {
            norm_j: f[0],
            adjoint_defect: f[1],
            jpj: f[2],
            jjp: f[3],
            compat1: f[4],
            compat2: f[5],
            form_closeness: f[6],
            op_defect: f[7],
        }
    }

    /// Entrywise `|self − other|`.
    pub fn abs_diff(&self, other: &Defects) -> Defects {
        let (a, b) = (self.fields(), other.fields());
        Defects::from_fields(std::array::from_fn(|i| (a[i] - b[i]).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.fields().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

fn sym(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

fn norm_from_sq(v: f64) -> f64 {
    v.max(0.0).sqrt()
}

/// Largest eigenvalue of `a x = λ diag(d) x`.
fn diag_max(a: DMatrix<f64>, d: &[f64]) -> f64 {
    linalg::gen_eigh_diag(&sym(a), d)
        .0
        .last()
        .copied()
        .unwrap_or(0.0)
}

/// Largest eigenvalue of `m^{1/2} s m^{1/2}` for diagonal `m`.
fn scaled_max(s: DMatrix<f64>, m: &[f64]) -> f64 {
    let r: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
    let t = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| r[i] * s[(i, j)] * r[j]);
    linalg::eigh(sym(t)).0.last().copied().unwrap_or(0.0)
}

/// `G = B − BΨ W ΨᵀB` against `K`, the pencil of `‖(I − JJ′)R̃^{1/2}‖²`.
struct CoprojectionPencil<'a> {
    pair: &'a IdentificationPair,
    w: DMatrix<f64>,
    k: ChainMatrix,
    solver: CondensedSolver,
}

impl CoprojectionPencil<'_> {
    fn apply_g(&self, x: &DVector<f64>) -> DVector<f64> {
        let bx = self.pair.fem.mass.apply(x);
        let p = DVector::from_vec(self.pair.psi.project(&bx));
        let wp = &self.w * p;
        let back = self.pair.psi.combine(wp.as_slice());
        bx - self.pair.fem.mass.apply(&back)
    }
}

impl Pencil for CoprojectionPencil<'_> {
    fn dim(&self) -> usize {
        self.k.n
    }
    fn apply_a(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_g(x)
    }
    fn apply_w(&self, x: &DVector<f64>) -> DVector<f64> {
        self.k.apply(x)
    }
    fn generate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.solver.solve(&self.apply_g(x)))
    }
}

/// Computes every defect of the pair on its mesh.
pub fn measure_quasi_unitarity(pair: &IdentificationPair, seed: u64) -> Result<Defects> {
    let nv = pair.nv();
    let c = pair.c;
    let mu = &pair.mu;
    let nu = pair.nu();
    let h = &pair.hat_mass;
    let e_gram = pair.form_gram();
    let k = pair.metric_gram();
    let solver = k.factor()?;
    let b = &pair.fem.mass;
    let n = pair.fem.n;

    let norm_j = norm_from_sq(diag_max(h * (c * c), mu));

    let dg: Vec<f64> = (0..nv).map(|v| c - mu[v] / (c * nu[v])).collect();
    let adjoint = DMatrix::from_fn(nv, nv, |i, j| dg[i] * h[(i, j)] * dg[j]);
    let adjoint_defect = norm_from_sq(diag_max(adjoint, mu));

    let t = DMatrix::identity(nv, nv) - pair.j_prime_j();
    let tmt = t.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(mu)) * &t;
    let jpj = norm_from_sq(linalg::gen_max(&sym(tmt), &e_gram)?);

    let mut w = DMatrix::from_fn(nv, nv, |i, j| -h[(i, j)] / (nu[i] * nu[j]));
    for i in 0..nv {
        w[(i, i)] += 2.0 / nu[i];
    }
    let pencil = CoprojectionPencil {
        pair,
        w,
        k: k.clone(),
        solver: k.factor()?,
    };
    let jjp_sq = if n <= DENSE_DEFECT_LIMIT {
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            g.set_column(i, &pencil.apply_g(&e));
        }
        linalg::gen_max(&sym(g), &k.to_dense())?
    } else {
        let opts = KrylovOptions {
            block: 8,
            max_dim: 600,
            tol: 1e-9,
            seed,
        };
        block_krylov(&pencil, 1, Which::Largest, &opts)?.values[0]
    };
    let jjp = norm_from_sq(jjp_sq);

    let compat1 = 0.0;

    // T = (1/c)(P_V − N⁻¹ΨᵀB); columns of Tᵀ are (1/c)(e_v − Bψ_v/ν_v).
    let tt: Vec<DVector<f64>> = (0..nv)
        .map(|v| {
            let mut col = b.apply(&pair.psi.column(v)) / (-nu[v] * c);
            col[v] += 1.0 / c;
            col
        })
        .collect();
    let apply_t = |y: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(nv, tt.iter().map(|col| col.dot(y)))
    };
    let mut s = DMatrix::zeros(nv, nv);
    for (j, col) in tt.iter().enumerate() {
        s.set_column(j, &apply_t(&solver.solve(col)));
    }
    let compat2 = norm_from_sq(scaled_max(s, mu));

    // D = (1/c) L P_V − τc ΨᵀA; rows of D are the columns below.
    let dt: Vec<DVector<f64>> = (0..nv)
        .map(|v| {
            let mut col = pair.fem.stiffness.apply(&pair.psi.column(v)) * (-pair.tau * c);
            for u in 0..nv {
                col[u] += pair.laplacian[(u, v)] / c;
            }
            col
        })
        .collect();
    let mut s = DMatrix::zeros(nv, nv);
    for (j, col) in dt.iter().enumerate() {
        let y = solver.solve(col);
        for (i, row) in dt.iter().enumerate() {
            s[(i, j)] = row.dot(&y);
        }
    }
    let form_closeness = norm_from_sq(linalg::gen_max(&sym(s), &e_gram)?);

    // T = K⁻¹BJ − J E⁻¹M, column by column.
    let chol = linalg::cholesky(&e_gram, "graph form norm")?;
    let mut tcols = Vec::with_capacity(nv);
    for v in 0..nv {
        let jv = pair.psi.column(v) * c;
        let mut ev = DVector::zeros(nv);
        ev[v] = mu[v];
        let r = chol.solve(&ev);
        tcols.push(solver.solve(&b.apply(&jv)) - pair.j(r.as_slice()));
    }
    let btcols: Vec<DVector<f64>> = tcols.iter().map(|t| b.apply(t)).collect();
    let tbt = DMatrix::from_fn(nv, nv, |i, j| tcols[i].dot(&btcols[j]));
    let op_defect = norm_from_sq(diag_max(tbt, mu));

    Ok(Defects {
        norm_j,
        adjoint_defect,
        jpj,
        jjp,
        compat1,
        compat2,
        form_closeness,
        op_defect,
    })
}

/// Defects on a mesh and on its halving.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasuredDefects {
    pub dof_coarse: usize,
    pub dof_fine: usize,
    /// Values on the finer mesh.
    pub measured: Defects,
    /// `|fine − coarse|`.
    pub fem_error: Defects,
}

pub fn measure_with_error(
    g: &WeightedGraph,
    fem: &FemDiscretization,
    c: f64,
    tau: f64,
    seed: u64,
) -> Result<MeasuredDefects> {
    let fine = fem.halved()?;
    let coarse_pair = build_identification(g, fem, c, tau)?;
    let fine_pair = build_identification(g, &fine, c, tau)?;
    let coarse = measure_quasi_unitarity(&coarse_pair, seed)?;
    let measured = measure_quasi_unitarity(&fine_pair, seed)?;
    Ok(MeasuredDefects {
        dof_coarse: fem.n,
        dof_fine: fine.n,
        measured,
        fem_error: measured.abs_diff(&coarse),
    })
}

/// `δ² = 2(γ∞/γ0)(μ∞/γ0)` for a graph with a compatible metric graph.
pub fn delta_metric_graph(stats: &GraphStats) -> f64 {
    (2.0 * (stats.gamma_inf / stats.gamma0) * (stats.mu_inf / stats.gamma0)).sqrt()
}

/// `δ² = 2 c_γ² d∞ c_μ / ρ0` for a uniform weighted graph.
pub fn delta_uniform(d_inf: f64, c_gamma: f64, c_mu: f64, rho0: f64) -> f64 {
    (2.0 * c_gamma * c_gamma * d_inf * c_mu / rho0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GeneralDeltaInput {
    pub alpha_inf: f64,
    /// `μ∞/γ0`.
    pub mu_over_gamma: f64,
    pub tau: f64,
    pub lambda2: f64,
    pub delta_c_sq: f64,
    pub delta_d_sq: f64,
}

impl GeneralDeltaInput {
    /// The values for a compatible metric graph with longest edge `ℓ∞`.
    pub fn metric_graph(stats: &GraphStats, tau: f64, ell_inf: f64) -> Self {
        Self {
            alpha_inf: 0.0,
            mu_over_gamma: stats.mu_inf / stats.gamma0,
            tau,
            lambda2: 2.0 / (ell_inf * ell_inf),
            delta_c_sq: ell_inf * ell_inf / 2.0,
            delta_d_sq: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneralDelta {
    pub delta: f64,
    /// `[2α∞, 2μ∞/γ0, 2/(τλ2), (2/τ)δ_c², (4/τ)δ_d²]`.
    pub terms: [f64; 5],
}

pub fn delta_general(input: &GeneralDeltaInput) -> Result<GeneralDelta> {
    let GeneralDeltaInput {
        alpha_inf,
        mu_over_gamma,
        tau,
        lambda2,
        delta_c_sq,
        delta_d_sq,
    } = *input;
    if [alpha_inf, mu_over_gamma, delta_c_sq, delta_d_sq]
        .iter()
        .any(|v| !(*v >= 0.0))
    {
        return Err(Error::DomainError(
            "error terms must be non-negative".into(),
        ));
    }
    if alpha_inf > 0.5 {
        return Err(Error::DomainError(format!(
            "alpha_inf = {alpha_inf} exceeds 1/2"
        )));
    }
    if !(lambda2 > 0.0) || !(tau > 0.0) {
        return Err(Error::DomainError(
            "lambda2 and tau must be positive".into(),
        ));
    }
    let terms = [
        2.0 * alpha_inf,
        2.0 * mu_over_gamma,
        2.0 / (tau * lambda2),
        2.0 / tau * delta_c_sq,
        4.0 / tau * delta_d_sq,
    ];
    let delta = terms.iter().cloned().fold(0.0, f64::max).sqrt();
    Ok(GeneralDelta { delta, terms })
}

/// `22δ + 43δ̃` in exact arithmetic.
pub fn compose_delta_exact(d: &BigRational, dt: &BigRational) -> Result<BigRational> {
    let zero = rational(0, 1);
    let one = rational(1, 1);
    for x in [d, dt] {
        if *x < zero || *x > one {
            return Err(Error::OutOfRange(format!("{x} is outside [0, 1]")));
        }
    }
    Ok(rational(22, 1) * d + rational(43, 1) * dt)
}

/// `22δ + 43δ̃`, reading both inputs as their shortest decimal expansions.
pub fn compose_delta(d: f64, dt: f64) -> Result<f64> {
    for x in [d, dt] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfRange(format!("{x} is outside [0, 1]")));
        }
    }
    let exact = compose_delta_exact(&rational_from_f64(d)?, &rational_from_f64(dt)?)?;
    Ok(rational_to_f64(&exact))
}

/// A form defect `δ` gives an operator defect `4δ`.
pub fn form_to_op(delta: f64) -> f64 {
    4.0 * delta
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenRow {
    pub k: usize,
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralComparison {
    pub rows: Vec<EigenRow>,
    /// Hausdorff distance of `{1/(1+λ)}` over the compared eigenvalues.
    pub hausdorff: f64,
    /// Number of eigenvalues the comparison was truncated to.
    pub truncated_at: usize,
}

pub fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let one_sided = |x: &[f64], y: &[f64]| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| (p - q).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() {
            0.0
        } else {
            f64::INFINITY
        };
    }
    one_sided(a, b).max(one_sided(b, a))
}

/// Compares the first `k` eigenvalues of two ascending spectra.
pub fn spectral_compare(a: &[f64], b: &[f64], k: usize) -> SpectralComparison {
    let k = k.min(a.len()).min(b.len());
    let rows = (0..k)
        .map(|i| EigenRow {
            k: i + 1,
            lambda: a[i],
            lambda_tilde: b[i],
            diff: (a[i] - b[i]).abs(),
        })
        .collect();
    let res = |s: &[f64]| s[..k].iter().map(|l| 1.0 / (1.0 + l)).collect::<Vec<_>>();
    SpectralComparison {
        rows,
        hausdorff: hausdorff(&res(a), &res(b)),
        truncated_at: k,
    }
}
