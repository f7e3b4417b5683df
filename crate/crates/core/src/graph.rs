//! Weighted discrete graphs: energy form, Laplacian, spectrum and the
//! uniformity statistics.

use std::collections::{HashMap, HashSet};

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::linalg::{self, block_krylov, CsrMatrix, KrylovOptions, Pencil, Which};

/// Above this many vertices the dense eigensolver is not used by default.
pub const DENSE_LIMIT: usize = 2000;

/// Relative threshold below which eigenvalues are reported as zero.
pub const KERNEL_SNAP: f64 = 1e-10;

/// A finite simple graph with vertex weights `mu` and edge weights `gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    edges: Vec<(usize, usize)>,
    mu: Vec<f64>,
    gamma: Vec<f64>,
}

fn check_weight(what: impl FnOnce() -> String, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveWeight {
            what: what(),
            value,
        })
    }
}

impl WeightedGraph {
    /// Builds a graph from index-based edges.
    pub fn new(
        ids: Vec<String>,
        edges: Vec<(usize, usize)>,
        mu: Vec<f64>,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        let n = ids.len();
        if mu.len() != n {
            return Err(Error::Malformed(format!(
                "{} vertex weights for {n} vertices",
                mu.len()
            )));
        }
        if gamma.len() != edges.len() {
            return Err(Error::Malformed(format!(
                "{} edge weights for {} edges",
                gamma.len(),
                edges.len()
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Malformed(format!("vertex id {id:?} repeated")));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::UnknownVertex(format!("index {}", u.max(v))));
            }
            if u == v {
                return Err(Error::LoopEdge(k, ids[u].clone()));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::DuplicateEdge(ids[u].clone(), ids[v].clone()));
            }
        }
        for (i, &m) in mu.iter().enumerate() {
            check_weight(|| format!("vertex {:?}", ids[i]), m)?;
        }
        for (k, &g) in gamma.iter().enumerate() {
            let (u, v) = edges[k];
            check_weight(|| format!("edge {:?}-{:?}", ids[u], ids[v]), g)?;
        }
        Ok(Self {
            ids,
            index,
            edges,
            mu,
            gamma,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_vertices()];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// `sum_{e in E_v} gamma_e` for every vertex.
    pub fn conductance(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vertices()];
        for (&(u, v), &g) in self.edges.iter().zip(&self.gamma) {
            out[u] += g;
            out[v] += g;
        }
        out
    }

    /// Relative weight `rho(v) = sum gamma / mu(v)`.
    pub fn relative_weight(&self) -> Vec<f64> {
        self.conductance()
            .iter()
            .zip(&self.mu)
            .map(|(g, m)| g / m)
            .collect()
    }

    /// Multiplies both weight functions by `s`.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        Self::new(
            self.ids.clone(),
            self.edges.clone(),
            self.mu.iter().map(|m| m * s).collect(),
            self.gamma.iter().map(|g| g * s).collect(),
        )
    }

    pub fn energy(&self, f: &[Complex<f64>]) -> f64 {
        self.edges
            .iter()
            .zip(&self.gamma)
            .map(|(&(u, v), g)| g * (f[v] - f[u]).norm_sqr())
            .sum()
    }

    pub fn energy_real(&self, f: &[f64]) -> f64 {
        self.edges
            .iter()
            .zip(&self.gamma)
            .map(|(&(u, v), g)| g * (f[v] - f[u]).powi(2))
            .sum()
    }

    /// `(Δf)(v) = (1/mu(v)) sum_{e in E_v} gamma_e (f(v) - f(v_e))`.
    pub fn apply_laplacian(&self, f: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let mut out = vec![Complex::new(0.0, 0.0); self.num_vertices()];
        for (&(u, v), &g) in self.edges.iter().zip(&self.gamma) {
            let d = f[u] - f[v];
            out[u] += d * g;
            out[v] -= d * g;
        }
        for (o, m) in out.iter_mut().zip(&self.mu) {
            *o /= *m;
        }
        out
    }

    /// `(L, mu)` with `L` the conductance Laplacian, so that `Δ = diag(mu)⁻¹ L`.
    pub fn laplacian(&self) -> (DMatrix<f64>, Vec<f64>) {
        let n = self.num_vertices();
        let mut l = DMatrix::zeros(n, n);
        for (&(u, v), &g) in self.edges.iter().zip(&self.gamma) {
            l[(u, u)] += g;
            l[(v, v)] += g;
            l[(u, v)] -= g;
            l[(v, u)] -= g;
        }
        (l, self.mu.clone())
    }

    pub fn laplacian_sparse(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(4 * self.num_edges());
        for (&(u, v), &g) in self.edges.iter().zip(&self.gamma) {
            triplets.extend([(u, u, g), (v, v, g), (u, v, -g), (v, u, -g)]);
        }
        CsrMatrix::from_triplets(self.num_vertices(), triplets)
    }

    /// Full spectrum of `Δ` by the dense solver, ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        let (l, mu) = self.laplacian();
        let (values, _) = linalg::gen_eigh_diag(&l, &mu);
        self.snap(values)
    }

    /// Dense eigen-decomposition; eigenvectors are `mu`-orthonormal columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let (l, mu) = self.laplacian();
        let (values, vectors) = linalg::gen_eigh_diag(&l, &mu);
        (self.snap(values), vectors)
    }

    /// The `k` smallest eigenvalues by shift-invert block Krylov with
    /// conjugate-gradient inner solves.
    pub fn spectrum_sparse(&self, k: usize, seed: u64) -> Result<Vec<f64>> {
        let pencil = GraphPencil::new(self);
        let opts = KrylovOptions {
            block: (k + 2).max(6),
            seed,
            ..KrylovOptions::default()
        };
        let ritz = block_krylov(&pencil, k, Which::Smallest, &opts)?;
        Ok(self.snap(ritz.values))
    }

    /// The `k` smallest eigenvalues, dense up to [`DENSE_LIMIT`] vertices.
    pub fn smallest_eigenvalues(&self, k: usize, seed: u64) -> Result<Vec<f64>> {
        if self.num_vertices() <= DENSE_LIMIT {
            let mut s = self.spectrum();
            s.truncate(k);
            Ok(s)
        } else {
            self.spectrum_sparse(k, seed)
        }
    }

    fn snap(&self, mut values: Vec<f64>) -> Vec<f64> {
        let rho_inf = self.relative_weight().into_iter().fold(0.0, f64::max);
        let cut = KERNEL_SNAP * rho_inf.max(f64::MIN_POSITIVE);
        for v in values.iter_mut() {
            if v.abs() < cut {
                *v = 0.0;
            }
        }
        values.sort_by(f64::total_cmp);
        values
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats::of(self)
    }

    pub fn to_json(&self) -> Value {
        let edges: Vec<Value> = self
            .edges
            .iter()
            .zip(&self.gamma)
            .map(|(&(u, v), g)| json!([self.ids[u], self.ids[v], g]))
            .collect();
        let mut mu = Map::new();
        for (id, m) in self.ids.iter().zip(&self.mu) {
            mu.insert(id.clone(), json!(m));
        }
        json!({ "vertices": self.ids, "edges": edges, "mu": mu })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |what: &str| Error::Malformed(format!("graph JSON: {what}"));
        let vertices = value
            .get("vertices")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing \"vertices\" array"))?
            .iter()
            .map(id_string)
            .collect::<Result<Vec<_>>>()?;
        let mu_map = value
            .get("mu")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing \"mu\" object"))?;
        let mut mu = HashMap::with_capacity(mu_map.len());
        for (id, m) in mu_map {
            if !vertices.contains(id) {
                return Err(Error::UnknownVertex(id.clone()));
            }
            let m = m
                .as_f64()
                .ok_or_else(|| bad(&format!("weight of {id:?} is not a number")))?;
            mu.insert(id.clone(), m);
        }
        let mut edges = Vec::new();
        for e in value
            .get("edges")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing \"edges\" array"))?
        {
            let triple = e
                .as_array()
                .filter(|t| t.len() == 3)
                .ok_or_else(|| bad("edges must be [u, v, gamma]"))?;
            let g = triple[2]
                .as_f64()
                .ok_or_else(|| bad("edge weight is not a number"))?;
            edges.push((id_string(&triple[0])?, id_string(&triple[1])?, g));
        }
        build_graph(vertices, edges, &mu)
    }
}

fn id_string(v: &Value) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(Error::Malformed(format!(
            "vertex id {v} must be a string or number"
        ))),
    }
}

/// Builds and validates a graph from vertex ids, `(u, v, gamma)` edges and
/// vertex weights keyed by id.
pub fn build_graph(
    vertices: Vec<String>,
    edges: Vec<(String, String, f64)>,
    mu: &HashMap<String, f64>,
) -> Result<WeightedGraph> {
    let index: HashMap<&str, usize> = vertices
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    };
    let mut pairs = Vec::with_capacity(edges.len());
    let mut gamma = Vec::with_capacity(edges.len());
    for (u, v, g) in &edges {
        pairs.push((lookup(u)?, lookup(v)?));
        gamma.push(*g);
    }
    let weights = vertices
        .iter()
        .map(|id| {
            mu.get(id)
                .copied()
                .ok_or_else(|| Error::Malformed(format!("no weight for vertex {id:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    WeightedGraph::new(vertices, pairs, weights, gamma)
}

/// Uniformity statistics of a weighted graph.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub mu0: f64,
    pub mu_inf: f64,
    pub gamma0: f64,
    pub gamma_inf: f64,
    pub d_inf: usize,
    pub rho0: f64,
    pub rho_inf: f64,
    pub c_mu: f64,
    pub c_gamma: f64,
    pub max_inv_rel_weight: f64,
    /// Whether both relative-weight sandwich bounds hold at every vertex.
    pub bounds_hold: bool,
}

impl GraphStats {
    pub fn of(g: &WeightedGraph) -> Self {
        let fold = |xs: &[f64]| {
            xs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
        };
        let (mu0, mu_inf) = fold(g.mu());
        let (gamma0, gamma_inf) = if g.num_edges() == 0 {
            (0.0, 0.0)
        } else {
            fold(g.gamma())
        };
        let rho = g.relative_weight();
        let (rho0, rho_inf) = fold(&rho);
        let d_inf = g.degrees().into_iter().max().unwrap_or(0);
        let c_mu = mu_inf / mu0;
        let c_gamma = if gamma0 > 0.0 {
            gamma_inf / gamma0
        } else {
            f64::NAN
        };
        let max_inv_rel_weight = mu_inf / gamma0;

        let slack = 1e-12;
        let lower = gamma0 / mu_inf;
        let upper = d_inf as f64 * gamma_inf / mu0;
        let inv_lower = max_inv_rel_weight / (c_gamma * d_inf as f64 * c_mu);
        let degrees = g.degrees();
        let bounds_hold = rho.iter().zip(&degrees).all(|(&r, &d)| {
            d == 0
                || (r >= lower * (1.0 - slack)
                    && r <= upper * (1.0 + slack)
                    && 1.0 / r >= inv_lower * (1.0 - slack)
                    && 1.0 / r <= max_inv_rel_weight * (1.0 + slack))
        });
        Self {
            mu0,
            mu_inf,
            gamma0,
            gamma_inf,
            d_inf,
            rho0,
            rho_inf,
            c_mu,
            c_gamma,
            max_inv_rel_weight,
            bounds_hold,
        }
    }
}

/// `L x = λ M x` with generator `(L + sM)⁻¹ M`, inner solves by CG.
struct GraphPencil {
    l: CsrMatrix,
    mu: Vec<f64>,
    shifted: CsrMatrix,
    shifted_diag: Vec<f64>,
}

impl GraphPencil {
    fn new(g: &WeightedGraph) -> Self {
        let l = g.laplacian_sparse();
        let rho_mean = g.relative_weight().iter().sum::<f64>() / g.num_vertices().max(1) as f64;
        // A small shift keeps L + sM definite while leaving the low end
        // of the spectrum well separated after inversion.
        let s = 1e-3 * rho_mean.max(f64::MIN_POSITIVE);
        let mut triplets = Vec::new();
        for i in 0..l.n {
            for p in l.row_ptr[i]..l.row_ptr[i + 1] {
                triplets.push((i, l.cols[p], l.vals[p]));
            }
            triplets.push((i, i, s * g.mu()[i]));
        }
        let shifted = CsrMatrix::from_triplets(l.n, triplets);
        let shifted_diag = shifted.diagonal();
        Self {
            l,
            mu: g.mu().to_vec(),
            shifted,
            shifted_diag,
        }
    }
}

impl Pencil for GraphPencil {
    fn dim(&self) -> usize {
        self.l.n
    }
    fn apply_a(&self, x: &DVector<f64>) -> DVector<f64> {
        self.l.mul_vec(x)
    }
    fn apply_w(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| self.mu[i] * x[i])
    }
    fn generate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let rhs = self.apply_w(x);
        linalg::pcg(
            |v| self.shifted.mul_vec(v),
            &self.shifted_diag,
            &rhs,
            1e-13,
            20 * self.l.n + 100,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn k3() -> WeightedGraph {
        WeightedGraph::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![(0, 1), (0, 2), (1, 2)],
            vec![1.0 / 3.0; 3],
            vec![1.0; 3],
        )
        .unwrap()
    }

    fn path(n_edges: usize, mu: Vec<f64>, gamma: f64) -> WeightedGraph {
        WeightedGraph::new(
            (0..=n_edges).map(|i| i.to_string()).collect(),
            (0..n_edges).map(|i| (i, i + 1)).collect(),
            mu,
            vec![gamma; n_edges],
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_graphs() {
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let e = WeightedGraph::new(ids.clone(), vec![(0, 0)], vec![1.0; 3], vec![1.0]);
        assert_eq!(e, Err(Error::LoopEdge(0, "a".into())));
        let e = WeightedGraph::new(
            ids.clone(),
            vec![(0, 1), (1, 0)],
            vec![1.0; 3],
            vec![1.0; 2],
        );
        assert!(matches!(e, Err(Error::DuplicateEdge(..))));
        let e = WeightedGraph::new(ids, vec![(0, 1), (1, 2)], vec![1.0; 3], vec![1.0, 0.0]);
        assert!(matches!(e, Err(Error::NonPositiveWeight { value, .. }) if value == 0.0));
        let mu: HashMap<String, f64> = [("a".to_string(), 1.0)].into_iter().collect();
        let e = build_graph(vec!["a".into()], vec![("a".into(), "z".into(), 1.0)], &mu);
        assert_eq!(e, Err(Error::UnknownVertex("z".into())));
    }

    #[test]
    fn energy_examples() {
        let g = k3();
        let one = vec![Complex::new(1.0, 0.0); 3];
        assert_eq!(g.energy(&one), 0.0);
        let delta = [1.0, 0.0, 0.0].map(|x| Complex::new(x, 0.0));
        assert_relative_eq!(g.energy(&delta), 2.0);
        let p = path(2, vec![1.0; 3], 4.0);
        assert_relative_eq!(p.energy_real(&[0.0, 1.0, 2.0]), 8.0);
        // phase rotation leaves the energy invariant
        let f = [
            Complex::new(0.0, 1.0),
            Complex::new(2.0, -1.0),
            Complex::new(0.5, 0.5),
        ];
        let rotated: Vec<_> = f.iter().map(|z| z * Complex::new(0.6, 0.8)).collect();
        assert_relative_eq!(g.energy(&f), g.energy(&rotated), epsilon = 1e-12);
    }

    #[test]
    fn k3_spectrum_and_stats() {
        let g = k3();
        let s = g.spectrum();
        assert_eq!(s[0], 0.0);
        assert_relative_eq!(s[1], 9.0, epsilon = 1e-12);
        assert_relative_eq!(s[2], 9.0, epsilon = 1e-12);
        let st = g.stats();
        assert_relative_eq!(st.rho0, 6.0, epsilon = 1e-12);
        assert_relative_eq!(st.rho_inf, 6.0, epsilon = 1e-12);
        assert_eq!(st.d_inf, 2);
        assert_eq!((st.c_mu, st.c_gamma), (1.0, 1.0));
        assert!(st.bounds_hold);
    }

    #[test]
    fn path_spectrum_matches_cosine_formula() {
        let g = path(2, vec![0.25, 0.5, 0.25], 2.0);
        let s = g.spectrum();
        for (k, want) in [0.0, 8.0, 16.0].iter().enumerate() {
            assert!((s[k] - want).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn disconnected_graph_has_double_kernel() {
        let g = WeightedGraph::new(
            (0..4).map(|i| i.to_string()).collect(),
            vec![(0, 1), (2, 3)],
            vec![1.0; 4],
            vec![1.0; 2],
        )
        .unwrap();
        let s = g.spectrum();
        assert_eq!(&s[..2], &[0.0, 0.0]);
        assert!(s[2] > 0.0);
    }

    #[test]
    fn single_edge_inverse_relative_weight() {
        let g = path(1, vec![1.0, 1.0], 1.0);
        assert_eq!(g.stats().max_inv_rel_weight, 1.0);
    }

    #[test]
    fn sparse_path_agrees_with_dense() {
        let n = 80;
        let mu: Vec<f64> = (0..=n).map(|i| 1.0 + 0.01 * i as f64).collect();
        let g = path(n, mu, 3.0);
        let dense = g.spectrum();
        let sparse = g.spectrum_sparse(5, 7).unwrap();
        for (a, b) in sparse.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b), "{a} vs {b}");
        }
    }

    #[test]
    fn json_round_trip() {
        let g = k3();
        let text = g.to_json().to_string();
        let back = WeightedGraph::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, g);
        let bad = json!({"vertices": ["a"], "edges": [["a", "a", 1.0]], "mu": {"a": 1.0}});
        assert!(matches!(
            WeightedGraph::from_json(&bad),
            Err(Error::LoopEdge(..))
        ));
    }
}
