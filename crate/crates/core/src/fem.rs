//! Piecewise-linear finite elements on metric graphs.
//!
//! Degrees of freedom are numbered with the graph vertices first, followed by
//! the interior nodes of every edge from its tail to its head. All matrices
//! share the resulting "graph chain" sparsity: a tridiagonal block per edge
//! coupled to the two end vertices. [`CondensedSolver`] eliminates the edge
//! interiors exactly and factors the Schur complement on the vertices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, block_krylov, KrylovOptions, Pencil, Which};
use crate::metric::MetricGraph;

/// Problems with at most this many unknowns are solved densely.
pub const DENSE_FEM_LIMIT: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainEdge {
    pub tail: usize,
    pub head: usize,
    pub offset: usize,
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    /// Entry between the tail and the first interior node, or between tail
    /// and head when the edge has no interior nodes.
    pub tail_coupling: f64,
    pub head_coupling: f64,
}

impl ChainEdge {
    fn len(&self) -> usize {
        self.diag.len()
    }
}

/// Symmetric matrix with graph-chain sparsity.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainMatrix {
    pub n: usize,
    pub vertex_diag: Vec<f64>,
    pub edges: Vec<ChainEdge>,
}

impl ChainMatrix {
    pub fn nv(&self) -> usize {
        self.vertex_diag.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for (i, d) in self.vertex_diag.iter().enumerate() {
            y[i] = d * x[i];
        }
        for e in &self.edges {
            let k = e.len();
            if k == 0 {
                y[e.tail] += e.tail_coupling * x[e.head];
                y[e.head] += e.tail_coupling * x[e.tail];
                continue;
            }
            let o = e.offset;
            for i in 0..k {
                let mut acc = e.diag[i] * x[o + i];
                if i > 0 {
                    acc += e.off[i - 1] * x[o + i - 1];
                }
                if i + 1 < k {
                    acc += e.off[i] * x[o + i + 1];
                }
                y[o + i] = acc;
            }
            y[o] += e.tail_coupling * x[e.tail];
            y[e.tail] += e.tail_coupling * x[o];
            y[o + k - 1] += e.head_coupling * x[e.head];
            y[e.head] += e.head_coupling * x[o + k - 1];
        }
        y
    }

    /// `a * self + b * other` for matrices of identical structure.
    pub fn combine(&self, a: f64, other: &ChainMatrix, b: f64) -> ChainMatrix {
        let lin = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()
        };
        ChainMatrix {
            n: self.n,
            vertex_diag: lin(&self.vertex_diag, &other.vertex_diag),
            edges: self
                .edges
                .iter()
                .zip(&other.edges)
                .map(|(e, f)| ChainEdge {
                    tail: e.tail,
                    head: e.head,
                    offset: e.offset,
                    diag: lin(&e.diag, &f.diag),
                    off: lin(&e.off, &f.off),
                    tail_coupling: a * e.tail_coupling + b * f.tail_coupling,
                    head_coupling: a * e.head_coupling + b * f.head_coupling,
                })
                .collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let mut e = DVector::zeros(self.n);
            e[i] = 1.0;
            m.set_column(i, &self.apply(&e));
        }
        m
    }

    pub fn factor(&self) -> Result<CondensedSolver> {
        CondensedSolver::new(self)
    }
}

/// Root-free `LDLᵀ` factorisation of a symmetric tridiagonal matrix.
#[derive(Clone, Debug)]
struct Tridiagonal {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl Tridiagonal {
    fn new(diag: &[f64], off: &[f64]) -> Result<Self> {
        let k = diag.len();
        let mut d = vec![0.0; k];
        let mut l = vec![0.0; k.saturating_sub(1)];
        for i in 0..k {
            d[i] = diag[i] - if i > 0 { l[i - 1] * off[i - 1] } else { 0.0 };
            if !(d[i] > 0.0) {
                return Err(Error::SolverFailure(
                    "edge block is not positive definite".into(),
                ));
            }
            if i + 1 < k {
                l[i] = off[i] / d[i];
            }
        }
        Ok(Self { d, l })
    }

    fn solve(&self, x: &mut [f64]) {
        let k = self.d.len();
        for i in 1..k {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for (xi, d) in x.iter_mut().zip(&self.d) {
            *xi /= d;
        }
        for i in (0..k.saturating_sub(1)).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }
}

struct EdgeFactor {
    tail: usize,
    head: usize,
    offset: usize,
    tail_coupling: f64,
    head_coupling: f64,
    tri: Tridiagonal,
    /// `T⁻¹ e_first` and `T⁻¹ e_last`.
    first: Vec<f64>,
    last: Vec<f64>,
}

/// Direct solver for SPD graph-chain matrices by static condensation.
pub struct CondensedSolver {
    n: usize,
    nv: usize,
    edges: Vec<EdgeFactor>,
    schur: Cholesky<f64, Dyn>,
}

impl CondensedSolver {
    pub fn new(a: &ChainMatrix) -> Result<Self> {
        let nv = a.nv();
        let mut s = DMatrix::from_diagonal(&DVector::from_column_slice(&a.vertex_diag));
        let mut edges = Vec::with_capacity(a.edges.len());
        for e in &a.edges {
            let k = e.len();
            if k == 0 {
                s[(e.tail, e.head)] += e.tail_coupling;
                s[(e.head, e.tail)] += e.tail_coupling;
                continue;
            }
            let tri = Tridiagonal::new(&e.diag, &e.off)?;
            let mut first = vec![0.0; k];
            first[0] = 1.0;
            tri.solve(&mut first);
            let mut last = vec![0.0; k];
            last[k - 1] = 1.0;
            tri.solve(&mut last);
            let (a_t, a_h) = (e.tail_coupling, e.head_coupling);
            s[(e.tail, e.tail)] -= a_t * a_t * first[0];
            s[(e.head, e.head)] -= a_h * a_h * last[k - 1];
            let cross = a_t * a_h * first[k - 1];
            s[(e.tail, e.head)] -= cross;
            s[(e.head, e.tail)] -= cross;
            edges.push(EdgeFactor {
                tail: e.tail,
                head: e.head,
                offset: e.offset,
                tail_coupling: a_t,
                head_coupling: a_h,
                tri,
                first,
                last,
            });
        }
        let schur = Cholesky::new(s).ok_or_else(|| {
            Error::SolverFailure("vertex Schur complement is not positive definite".into())
        })?;
        Ok(Self {
            n: a.n,
            nv,
            edges,
            schur,
        })
    }

    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut x = y.clone();
        let mut r = DVector::from_iterator(self.nv, y.iter().take(self.nv).copied());
        for e in &self.edges {
            let k = e.first.len();
            let seg = &mut x.as_mut_slice()[e.offset..e.offset + k];
            e.tri.solve(seg);
            r[e.tail] -= e.tail_coupling * seg[0];
            r[e.head] -= e.head_coupling * seg[k - 1];
        }
        let xv = self.schur.solve(&r);
        for e in &self.edges {
            let (xt, xh) = (xv[e.tail], xv[e.head]);
            let k = e.first.len();
            for i in 0..k {
                x[e.offset + i] -=
                    e.tail_coupling * xt * e.first[i] + e.head_coupling * xh * e.last[i];
            }
        }
        x.rows_mut(0, self.nv).copy_from(&xv);
        x
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

/// Conforming P1 discretisation of a metric graph.
#[derive(Clone, Debug)]
pub struct FemDiscretization {
    pub mg: MetricGraph,
    pub elements: Vec<usize>,
    pub offsets: Vec<usize>,
    pub n: usize,
    /// Assembles `∫ |u'|²`.
    pub stiffness: ChainMatrix,
    /// Assembles `∫ |u|²`.
    pub mass: ChainMatrix,
}

/// Element matrices `[[p, q], [q, s]]` per element of one edge.
fn assemble_chain(
    mg: &MetricGraph,
    elements: &[usize],
    offsets: &[usize],
    n: usize,
    element: impl Fn(usize, usize, f64) -> (f64, f64, f64),
) -> ChainMatrix {
    let mut vertex_diag = vec![0.0; mg.num_vertices()];
    let mut edges = Vec::with_capacity(mg.num_edges());
    for (k, (&(tail, head), &len)) in mg.edges().iter().zip(mg.lengths()).enumerate() {
        let ne = elements[k];
        let h = len / ne as f64;
        let mut d = vec![0.0; ne + 1];
        let mut o = vec![0.0; ne];
        for i in 0..ne {
            let (p, q, s) = element(k, i, h);
            d[i] += p;
            d[i + 1] += s;
            o[i] += q;
        }
        vertex_diag[tail] += d[0];
        vertex_diag[head] += d[ne];
        let (diag, off, tail_coupling, head_coupling) = if ne == 1 {
            (vec![], vec![], o[0], 0.0)
        } else {
            (d[1..ne].to_vec(), o[1..ne - 1].to_vec(), o[0], o[ne - 1])
        };
        edges.push(ChainEdge {
            tail,
            head,
            offset: offsets[k],
            diag,
            off,
            tail_coupling,
            head_coupling,
        });
    }
    ChainMatrix {
        n,
        vertex_diag,
        edges,
    }
}

impl FemDiscretization {
    /// Discretisation with `elements[e]` equal elements on edge `e`.
    pub fn with_elements(mg: &MetricGraph, elements: Vec<usize>) -> Result<Self> {
        if elements.len() != mg.num_edges() || elements.contains(&0) {
            return Err(Error::Malformed(
                "every edge needs at least one element".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(elements.len());
        let mut n = mg.num_vertices();
        for &ne in &elements {
            offsets.push(n);
            n += ne - 1;
        }
        let stiffness = assemble_chain(mg, &elements, &offsets, n, |_, _, h| {
            (1.0 / h, -1.0 / h, 1.0 / h)
        });
        let mass = assemble_chain(mg, &elements, &offsets, n, |_, _, h| {
            (h / 3.0, h / 6.0, h / 3.0)
        });
        Ok(Self {
            mg: mg.clone(),
            elements,
            offsets,
            n,
            stiffness,
            mass,
        })
    }

    /// Uniform mesh with `max(min_elements, ceil(ℓ_e/h))` elements per edge.
    pub fn with_mesh(mg: &MetricGraph, h: f64, min_elements: usize) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Malformed(format!("mesh size {h} must be positive")));
        }
        let elements = mg
            .lengths()
            .iter()
            .map(|l| ((l / h).ceil() as usize).max(min_elements).max(1))
            .collect();
        Self::with_elements(mg, elements)
    }

    /// Same mesh with every element split in two.
    pub fn halved(&self) -> Result<Self> {
        Self::with_elements(&self.mg, self.elements.iter().map(|n| 2 * n).collect())
    }

    pub fn nv(&self) -> usize {
        self.mg.num_vertices()
    }

    pub fn max_h(&self) -> f64 {
        self.mg
            .lengths()
            .iter()
            .zip(&self.elements)
            .map(|(l, &n)| l / n as f64)
            .fold(0.0, f64::max)
    }

    /// Global index of node `i` (0 = tail, `elements[e]` = head) on edge `e`.
    pub fn node(&self, e: usize, i: usize) -> usize {
        let (tail, head) = self.mg.edges()[e];
        if i == 0 {
            tail
        } else if i == self.elements[e] {
            head
        } else {
            self.offsets[e] + i - 1
        }
    }

    /// Mass matrix for the density `w`, affine on every edge with end values
    /// `(w_tail, w_head)`; exact for the piecewise-linear products.
    pub fn weighted_mass(&self, ends: &[(f64, f64)]) -> ChainMatrix {
        let elements = &self.elements;
        assemble_chain(&self.mg, elements, &self.offsets, self.n, |k, i, h| {
            let (wt, wh) = ends[k];
            let ne = elements[k] as f64;
            let wa = wt + (wh - wt) * i as f64 / ne;
            let wb = wt + (wh - wt) * (i + 1) as f64 / ne;
            (
                h / 12.0 * (3.0 * wa + wb),
                h / 12.0 * (wa + wb),
                h / 12.0 * (wa + 3.0 * wb),
            )
        })
    }

    /// Nodal values of a function given by its vertex values, interpolated
    /// affinely along the edges.
    pub fn extend_affine(&self, vertex_values: &[f64]) -> DVector<f64> {
        let mut u = DVector::zeros(self.n);
        for (i, v) in vertex_values.iter().enumerate() {
            u[i] = *v;
        }
        for (k, &(tail, head)) in self.mg.edges().iter().enumerate() {
            let ne = self.elements[k];
            for i in 1..ne {
                let t = i as f64 / ne as f64;
                u[self.offsets[k] + i - 1] =
                    (1.0 - t) * vertex_values[tail] + t * vertex_values[head];
            }
        }
        u
    }

    /// Nodal coordinates `(edge, position from tail)` of interior nodes, and
    /// `None` for vertex nodes.
    pub fn interior_position(&self, node: usize) -> Option<(usize, f64)> {
        if node < self.nv() {
            return None;
        }
        let e = self.offsets.partition_point(|&o| o <= node) - 1;
        let i = node - self.offsets[e] + 1;
        Some((e, self.mg.lengths()[e] * i as f64 / self.elements[e] as f64))
    }
}

/// The hat functions `ψ_v`: affine on edges, 1 at `v`, 0 at other vertices.
#[derive(Clone, Debug)]
pub struct HarmonicPartition {
    n: usize,
    /// Sparse columns: `(node, value)` pairs of `ψ_v`.
    columns: Vec<Vec<(usize, f64)>>,
    /// `ν(v) = ∫ ψ_v`.
    pub nu: Vec<f64>,
}

impl HarmonicPartition {
    pub fn new(fem: &FemDiscretization) -> Self {
        let nv = fem.nv();
        let mut columns: Vec<Vec<(usize, f64)>> = (0..nv).map(|v| vec![(v, 1.0)]).collect();
        for (k, &(tail, head)) in fem.mg.edges().iter().enumerate() {
            let ne = fem.elements[k];
            for i in 1..ne {
                let t = i as f64 / ne as f64;
                let node = fem.offsets[k] + i - 1;
                columns[tail].push((node, 1.0 - t));
                columns[head].push((node, t));
            }
        }
        let ones = DVector::from_element(fem.n, 1.0);
        let b1 = fem.mass.apply(&ones);
        let nu = columns
            .iter()
            .map(|col| col.iter().map(|&(i, v)| v * b1[i]).sum())
            .collect();
        Self {
            n: fem.n,
            columns,
            nu,
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Nodal vector of `ψ_v`.
    pub fn column(&self, v: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for &(i, val) in &self.columns[v] {
            out[i] = val;
        }
        out
    }

    /// `Σ_v f(v) ψ_v`.
    pub fn combine(&self, f: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (col, &fv) in self.columns.iter().zip(f) {
            for &(i, val) in col {
                out[i] += fv * val;
            }
        }
        out
    }

    /// `(u_i ψ_v(i))` summed per vertex, i.e. `Ψᵀ u`.
    pub fn project(&self, u: &DVector<f64>) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(i, val)| val * u[i]).sum())
            .collect()
    }

    /// Largest nodal deviation of `Σ_v ψ_v` from 1.
    pub fn partition_defect(&self) -> f64 {
        let sum = self.combine(&vec![1.0; self.len()]);
        sum.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `A x = λ B x` with shift-invert generator `(A + sB)⁻¹ B`.
pub struct ShiftInvertPencil<'a> {
    pub a: &'a ChainMatrix,
    pub b: &'a ChainMatrix,
    solver: CondensedSolver,
}

impl<'a> ShiftInvertPencil<'a> {
    pub fn new(a: &'a ChainMatrix, b: &'a ChainMatrix, shift: f64) -> Result<Self> {
        let solver = a.combine(1.0, b, shift).factor()?;
        Ok(Self { a, b, solver })
    }
}

impl Pencil for ShiftInvertPencil<'_> {
    fn dim(&self) -> usize {
        self.a.n
    }
    fn apply_a(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.apply(x)
    }
    fn apply_w(&self, x: &DVector<f64>) -> DVector<f64> {
        self.b.apply(x)
    }
    fn generate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.solver.solve(&self.b.apply(x)))
    }
}

/// The `k` smallest eigenvalues of `A x = λ B x`.
pub fn smallest_eigenvalues(
    a: &ChainMatrix,
    b: &ChainMatrix,
    k: usize,
    shift: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let k = k.min(a.n);
    let mut values = if a.n <= DENSE_FEM_LIMIT {
        let (vals, _) = linalg::gen_eigh(&a.to_dense(), &b.to_dense())?;
        vals.into_iter().take(k).collect::<Vec<_>>()
    } else {
        let pencil = ShiftInvertPencil::new(a, b, shift)?;
        let opts = KrylovOptions {
            block: (k + 4).max(8),
            seed,
            tol: 1e-11,
            ..KrylovOptions::default()
        };
        block_krylov(&pencil, k, Which::Smallest, &opts)?.values
    };
    let top = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in values.iter_mut() {
        if v.abs() < crate::graph::KERNEL_SNAP * top {
            *v = 0.0;
        }
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Shift used for the Kirchhoff problem: of the order of the spectral gap
/// of a graph with the given total length.
fn default_shift(mg: &MetricGraph) -> f64 {
    let l = mg.total_length();
    0.5 * std::f64::consts::PI.powi(2) / (l * l)
}

/// First `k` eigenvalues of the Kirchhoff Laplacian on the mesh of `fem`.
pub fn kirchhoff_spectrum(fem: &FemDiscretization, k: usize, seed: u64) -> Result<Vec<f64>> {
    smallest_eigenvalues(&fem.stiffness, &fem.mass, k, default_shift(&fem.mg), seed)
}

/// Eigenvalues on a mesh and its halving, with Richardson extrapolation.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEstimate {
    pub coarse_h: f64,
    pub fine_h: f64,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    /// `(4 λ_fine − λ_coarse)/3`.
    pub extrapolated: Vec<f64>,
    /// `|λ_fine − λ_extrapolated|`, the estimated error of the fine values.
    pub error: Vec<f64>,
}

pub fn richardson(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    coarse
        .iter()
        .zip(fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect()
}

/// Kirchhoff spectrum on `fem` and on its halving.
pub fn kirchhoff_spectrum_extrapolated(
    fem: &FemDiscretization,
    k: usize,
    seed: u64,
) -> Result<SpectrumEstimate> {
    let fine_fem = fem.halved()?;
    let coarse = kirchhoff_spectrum(fem, k, seed)?;
    let fine = kirchhoff_spectrum(&fine_fem, k, seed)?;
    let extrapolated = richardson(&coarse, &fine);
    let error = fine
        .iter()
        .zip(&extrapolated)
        .map(|(f, x)| (f - x).abs())
        .collect();
    Ok(SpectrumEstimate {
        coarse_h: fem.max_h(),
        fine_h: fine_fem.max_h(),
        coarse,
        fine,
        extrapolated,
        error,
    })
}

/// Second eigenvalues of the star of a vertex: `(weighted, unweighted)`.
///
/// The weighted problem uses the density `ψ_v`, growing linearly from 0 at
/// the leaves to 1 at the centre. Both values are Richardson-extrapolated
/// from meshes with `elements` and `2 * elements` elements per edge.
pub fn weighted_star_lambda2_with(lengths: &[f64], elements: usize) -> Result<(f64, f64)> {
    if lengths.is_empty() {
        return Err(Error::Malformed("a star needs at least one edge".into()));
    }
    let d = lengths.len();
    let mut ids = vec!["centre".to_string()];
    ids.extend((0..d).map(|i| format!("leaf{i}")));
    let edges = (0..d).map(|i| (i + 1, 0)).collect();
    let mg = MetricGraph::new(ids, edges, lengths.to_vec())?;
    let ends = vec![(0.0, 1.0); d];
    let shift = 0.5 / mg.max_length().powi(2);
    let mut weighted = [0.0; 2];
    let mut plain = [0.0; 2];
    for (slot, ne) in [elements, 2 * elements].into_iter().enumerate() {
        let fem = FemDiscretization::with_elements(&mg, vec![ne; d])?;
        let bw = fem.weighted_mass(&ends);
        weighted[slot] = smallest_eigenvalues(&fem.stiffness, &bw, 2, shift, 1)?[1];
        plain[slot] = smallest_eigenvalues(&fem.stiffness, &fem.mass, 2, shift, 1)?[1];
    }
    Ok((
        richardson(&weighted[..1], &weighted[1..])[0],
        richardson(&plain[..1], &plain[1..])[0],
    ))
}

pub fn weighted_star_lambda2(lengths: &[f64]) -> Result<(f64, f64)> {
    weighted_star_lambda2_with(lengths, 256)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn interval(l: f64) -> MetricGraph {
        MetricGraph::new(vec!["a".into(), "b".into()], vec![(0, 1)], vec![l]).unwrap()
    }

    fn star(lengths: &[f64]) -> MetricGraph {
        let mut ids = vec!["c".to_string()];
        ids.extend((0..lengths.len()).map(|i| format!("l{i}")));
        MetricGraph::new(
            ids,
            (0..lengths.len()).map(|i| (i + 1, 0)).collect(),
            lengths.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn single_edge_matrices() {
        let fem = FemDiscretization::with_elements(&interval(1.0), vec![3]).unwrap();
        assert_eq!(fem.n, 4);
        let a = fem.stiffness.to_dense();
        for i in 0..4 {
            assert!(a.row(i).sum().abs() < 1e-12);
        }
        let b = fem.mass.to_dense();
        assert_relative_eq!(b.sum(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(a.clone(), a.transpose());
        assert!(linalg::cholesky(&b, "mass").is_ok());
    }

    #[test]
    fn condensed_solver_matches_dense() {
        let mg = star(&[1.0, 0.7, 1.3, 0.4]);
        let fem = FemDiscretization::with_elements(&mg, vec![5, 1, 3, 2]).unwrap();
        let k = fem.stiffness.combine(1.0, &fem.mass, 0.8);
        let solver = k.factor().unwrap();
        let y = DVector::from_fn(fem.n, |i, _| (i as f64 * 0.37).cos());
        let x = solver.solve(&y);
        assert!((k.apply(&x) - &y).norm() < 1e-12 * y.norm());
        let dense = k.to_dense().lu().solve(&y).unwrap();
        assert!((x - dense).norm() < 1e-10);
    }

    #[test]
    fn neumann_interval_spectrum_converges_quadratically() {
        let mg = interval(1.0);
        let errs: Vec<Vec<f64>> = [32, 64]
            .iter()
            .map(|&ne| {
                let fem = FemDiscretization::with_elements(&mg, vec![ne]).unwrap();
                let s = kirchhoff_spectrum(&fem, 4, 1).unwrap();
                assert_eq!(s[0], 0.0);
                (1..4).map(|k| s[k] - (k as f64 * PI).powi(2)).collect()
            })
            .collect();
        for (coarse, fine) in errs[0].iter().zip(&errs[1]) {
            assert!(*coarse > 0.0);
            let ratio = coarse / fine;
            assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn dense_and_krylov_paths_agree() {
        let mg = star(&[1.0, 0.8, 1.1]);
        let fem = FemDiscretization::with_elements(&mg, vec![600; 3]).unwrap();
        assert!(fem.n > DENSE_FEM_LIMIT);
        let krylov = kirchhoff_spectrum(&fem, 6, 3).unwrap();
        let small = FemDiscretization::with_elements(&mg, vec![300; 3]).unwrap();
        let dense = kirchhoff_spectrum(&small, 6, 3).unwrap();
        for (a, b) in krylov.iter().zip(&dense) {
            // same limit, different meshes: agree to discretisation accuracy
            assert!((a - b).abs() < 1e-3 * (1.0 + b), "{a} vs {b}");
        }
    }

    #[test]
    fn equilateral_star_second_eigenvalue() {
        let fem = FemDiscretization::with_elements(&star(&[1.0; 3]), vec![200; 3]).unwrap();
        let s = kirchhoff_spectrum(&fem, 3, 1).unwrap();
        assert!((s[1] - PI * PI / 4.0).abs() < 1e-4);
        let (w, u) = weighted_star_lambda2(&[1.0; 3]).unwrap();
        assert!((u - PI * PI / 4.0).abs() < 1e-6, "{u}");
        assert!(w >= u);
    }

    #[test]
    fn hat_functions_partition_unity() {
        let mg = star(&[1.0, 2.0, 0.5]);
        let fem = FemDiscretization::with_elements(&mg, vec![4, 7, 3]).unwrap();
        let psi = HarmonicPartition::new(&fem);
        assert!(psi.partition_defect() < 1e-15);
        assert_relative_eq!(psi.nu[0], 1.75, epsilon = 1e-14);
        assert_relative_eq!(psi.nu[2], 1.0, epsilon = 1e-14);
        assert_relative_eq!(
            psi.nu.iter().sum::<f64>(),
            mg.total_length(),
            epsilon = 1e-13
        );
        let eq = FemDiscretization::with_elements(&star(&[1.0; 3]), vec![5; 3]).unwrap();
        assert_relative_eq!(HarmonicPartition::new(&eq).nu[0], 1.5, epsilon = 1e-14);
        let one = FemDiscretization::with_elements(&interval(0.3), vec![6]).unwrap();
        let nu = HarmonicPartition::new(&one).nu;
        assert_relative_eq!(nu[0], 0.15, epsilon = 1e-15);
        assert_relative_eq!(nu[1], 0.15, epsilon = 1e-15);
    }

    #[test]
    fn weighted_mass_integrates_linear_weight() {
        let fem = FemDiscretization::with_elements(&interval(2.0), vec![5]).unwrap();
        let bw = fem.weighted_mass(&[(0.0, 1.0)]);
        let ones = DVector::from_element(fem.n, 1.0);
        // ∫_0^2 x/2 dx = 1
        assert_relative_eq!(ones.dot(&bw.apply(&ones)), 1.0, epsilon = 1e-14);
        // ∫_0^2 (x/2)(x/2)^2... with u = x/2: ∫ (x/2)^3 dx = 0.5
        let u = fem.extend_affine(&[0.0, 1.0]);
        assert_relative_eq!(u.dot(&bw.apply(&u)), 0.5, epsilon = 1e-14);
    }
}
