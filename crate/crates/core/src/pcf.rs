//! Symmetric pcf systems given combinatorially and the sequence of
//! approximating weighted graphs they generate.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exact::{parse_rational, rational, rational_from_f64, rational_to_f64};
use crate::graph::WeightedGraph;

/// A vertex address `(word, boundary index)`, i.e. the point `F_word(q_a)`.
pub type Address = (Vec<u16>, u16);

/// Combinatorial description of a symmetric pcf self-similar set.
#[derive(Clone, Debug, PartialEq)]
pub struct PcfSystem {
    /// Number of similitudes.
    pub n: usize,
    /// Number of boundary points; `q_a` is the fixed point of map `a`.
    pub n0: usize,
    pub theta: BigRational,
    /// Energy renormalisation factor.
    pub r: BigRational,
    /// Generation-0 conductances on the complete graph over the boundary,
    /// edges in lexicographic pair order.
    pub gamma0: Vec<BigRational>,
    /// `(j, a, j2, b)`: `F_j(q_a) = F_j2(q_b)`.
    pub gluing: Vec<(usize, usize, usize, usize)>,
}

/// Edges of the complete graph on `n0` vertices in lexicographic order.
pub fn complete_edges(n0: usize) -> Vec<(usize, usize)> {
    (0..n0)
        .flat_map(|a| (a + 1..n0).map(move |b| (a, b)))
        .collect()
}

fn open_unit(name: &str, q: &BigRational) -> Result<()> {
    if q.is_positive() && q < &BigRational::one() {
        Ok(())
    } else {
        Err(Error::InvalidSystem(format!(
            "{name} = {q} must lie in (0, 1)"
        )))
    }
}

impl PcfSystem {
    pub fn new(
        n: usize,
        n0: usize,
        theta: BigRational,
        r: BigRational,
        gamma0: Vec<BigRational>,
        gluing: Vec<(usize, usize, usize, usize)>,
    ) -> Result<Self> {
        let sys = Self {
            n,
            n0,
            theta,
            r,
            gamma0,
            gluing,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "interval" => Self::new(
                2,
                2,
                rational(1, 2),
                rational(1, 2),
                vec![rational(1, 1)],
                vec![(0, 1, 1, 0)],
            ),
            "sierpinski" => Self::new(
                3,
                3,
                rational(1, 2),
                rational(3, 5),
                vec![rational(1, 1); 3],
                vec![(0, 1, 1, 0), (0, 2, 2, 0), (1, 2, 2, 1)],
            ),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    fn validate(&self) -> Result<()> {
        open_unit("theta", &self.theta)?;
        open_unit("r", &self.r)?;
        if self.n0 < 2 || self.n0 > self.n {
            return Err(Error::InvalidSystem(format!(
                "need 2 <= N0 <= N, got N0 = {}, N = {}",
                self.n0, self.n
            )));
        }
        if self.n > u16::MAX as usize {
            return Err(Error::InvalidSystem("too many maps".into()));
        }
        let expected = self.n0 * (self.n0 - 1) / 2;
        if self.gamma0.len() != expected {
            return Err(Error::InvalidSystem(format!(
                "gamma0 needs {expected} entries, got {}",
                self.gamma0.len()
            )));
        }
        if let Some(g) = self.gamma0.iter().find(|g| !g.is_positive()) {
            return Err(Error::InvalidSystem(format!(
                "gamma0 entry {g} is not positive"
            )));
        }
        let sums = self.boundary_resistance_sums();
        if sums.iter().any(|s| s != &sums[0]) {
            return Err(Error::InvalidSystem(format!(
                "boundary symmetry fails: resistance sums {}",
                sums.iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        for &(j, a, j2, b) in &self.gluing {
            if j >= self.n || j2 >= self.n || a >= self.n0 || b >= self.n0 {
                return Err(Error::InvalidSystem(format!(
                    "gluing rule ({j}, {a}, {j2}, {b}) out of range"
                )));
            }
            if j == j2 {
                return Err(Error::InvalidSystem(format!(
                    "gluing rule ({j}, {a}, {j2}, {b}) identifies points of one cell"
                )));
            }
        }
        let g1 = LevelGraph::root(self).refine(self)?;
        if !is_connected(&g1.graph) {
            return Err(Error::InvalidSystem("level-1 graph is disconnected".into()));
        }
        Ok(())
    }

    fn boundary_resistance_sums(&self) -> Vec<BigRational> {
        let mut sums = vec![BigRational::zero(); self.n0];
        for ((a, b), g) in complete_edges(self.n0).into_iter().zip(&self.gamma0) {
            sums[a] += g.recip();
            sums[b] += g.recip();
        }
        sums
    }

    /// `C0 = sum_{e0 in E_v0} 1/gamma_{0,e0}`, equal for every boundary point.
    pub fn c0(&self) -> BigRational {
        self.boundary_resistance_sums().swap_remove(0)
    }

    pub fn c1(&self) -> BigRational {
        self.gamma0
            .iter()
            .min()
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn c2(&self) -> BigRational {
        self.gamma0
            .iter()
            .max()
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn theta_f64(&self) -> f64 {
        rational_to_f64(&self.theta)
    }

    pub fn r_f64(&self) -> f64 {
        rational_to_f64(&self.r)
    }

    /// Copy of the system with a different renormalisation factor, skipping
    /// validation of the (unchanged) combinatorics.
    pub fn with_r(&self, r: BigRational) -> Result<Self> {
        open_unit("r", &r)?;
        Ok(Self { r, ..self.clone() })
    }

    pub fn level_graph(&self, m: u32) -> Result<LevelGraph> {
        let mut level = LevelGraph::root(self);
        for _ in 0..m {
            level = level.refine(self)?;
        }
        Ok(level)
    }

    /// Levels `0..=m_max`.
    pub fn levels(&self, m_max: u32) -> Result<Vec<LevelGraph>> {
        let mut out = vec![LevelGraph::root(self)];
        for _ in 0..m_max {
            let next = out.last().unwrap().refine(self)?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "N": self.n,
            "N0": self.n0,
            "theta": self.theta.to_string(),
            "r": self.r.to_string(),
            "gamma0": self.gamma0.iter().map(|g| g.to_string()).collect::<Vec<_>>(),
            "gluing": self.gluing.iter().map(|&(j, a, j2, b)| json!([j, a, j2, b])).collect::<Vec<_>>(),
        })
    }

    /// Reads a system from the config format; numbers may be JSON numbers or
    /// strings such as `"3/5"`.
    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |what: &str| Error::Malformed(format!("system config: {what}"));
        let uint = |key: &str| {
            value
                .get(key)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| bad(&format!("missing integer {key:?}")))
        };
        let number = |v: &Value| -> Result<BigRational> {
            match v {
                Value::String(s) => parse_rational(s),
                Value::Number(n) => parse_rational(&n.to_string())
                    .or_else(|_| rational_from_f64(n.as_f64().unwrap_or(f64::NAN))),
                _ => Err(bad("expected a number")),
            }
        };
        let field = |key: &str| {
            value
                .get(key)
                .ok_or_else(|| bad(&format!("missing {key:?}")))
                .and_then(number)
        };
        let gamma0 = value
            .get("gamma0")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing \"gamma0\" array"))?
            .iter()
            .map(number)
            .collect::<Result<Vec<_>>>()?;
        let mut gluing = Vec::new();
        for rule in value
            .get("gluing")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing \"gluing\" array"))?
        {
            let idx: Vec<usize> = rule
                .as_array()
                .filter(|r| r.len() == 4)
                .ok_or_else(|| bad("gluing rules are [j, a, j2, b]"))?
                .iter()
                .map(|x| x.as_u64().map(|v| v as usize))
                .collect::<Option<_>>()
                .ok_or_else(|| bad("gluing entries must be non-negative integers"))?;
            gluing.push((idx[0], idx[1], idx[2], idx[3]));
        }
        Self::new(
            uint("N")?,
            uint("N0")?,
            field("theta")?,
            field("r")?,
            gamma0,
            gluing,
        )
    }
}

fn is_connected(g: &WeightedGraph) -> bool {
    let n = g.num_vertices();
    if n == 0 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in g.edges() {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

pub fn address_id((word, a): &Address) -> String {
    let w: Vec<String> = word.iter().map(|d| d.to_string()).collect();
    let sep = if word.iter().any(|&d| d > 9) { "." } else { "" };
    format!("w{}_{a}", w.join(sep))
}

/// The generation-`m` approximating graph of a pcf system.
#[derive(Clone, Debug)]
pub struct LevelGraph {
    pub m: u32,
    pub graph: WeightedGraph,
    /// Canonical (lexicographically smallest) address per vertex.
    pub addresses: Vec<Address>,
    /// All addresses identified with each vertex.
    pub members: Vec<Vec<Address>>,
    /// Number of `m`-cells containing each vertex.
    pub card: Vec<usize>,
    /// Generation-0 ancestor edge of every edge.
    pub ancestor: Vec<usize>,
    /// Vertex index of each boundary point `q_a`.
    pub boundary: Vec<usize>,
    /// `cell_maps[j][x]` is the image under `F_j` of vertex `x` of the
    /// previous level (empty at `m = 0`).
    pub cell_maps: Vec<Vec<usize>>,
    lookup: HashMap<Address, usize>,
    edges: Vec<(usize, usize)>,
}

impl LevelGraph {
    fn root(sys: &PcfSystem) -> Self {
        let members: Vec<Vec<Address>> = (0..sys.n0).map(|a| vec![(vec![], a as u16)]).collect();
        let edges = complete_edges(sys.n0);
        let ancestor = (0..edges.len()).collect();
        Self::assemble(
            sys,
            0,
            members,
            edges,
            ancestor,
            (0..sys.n0).collect(),
            vec![],
        )
        .expect("generation 0 is always valid")
    }

    fn assemble(
        sys: &PcfSystem,
        m: u32,
        members: Vec<Vec<Address>>,
        edges: Vec<(usize, usize)>,
        ancestor: Vec<usize>,
        boundary: Vec<usize>,
        cell_maps: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let addresses: Vec<Address> = members.iter().map(|ms| ms[0].clone()).collect();
        let card: Vec<usize> = members.iter().map(Vec::len).collect();
        let mut lookup = HashMap::new();
        for (i, ms) in members.iter().enumerate() {
            for a in ms {
                lookup.insert(a.clone(), i);
            }
        }
        let cells = (sys.n0 as f64) * (sys.n as f64).powi(m as i32);
        let mu: Vec<f64> = card.iter().map(|&c| c as f64 / cells).collect();
        let r_pow = num_traits::pow(sys.r.recip(), m as usize);
        let gamma: Vec<f64> = ancestor
            .iter()
            .map(|&e0| rational_to_f64(&(&r_pow * &sys.gamma0[e0])))
            .collect();
        let ids = addresses.iter().map(address_id).collect();
        let graph = WeightedGraph::new(ids, edges.clone(), mu, gamma).map_err(|e| match e {
            Error::LoopEdge(..) | Error::DuplicateEdge(..) => {
                Error::InconsistentGluing(format!("generation {m}: {e}"))
            }
            other => other,
        })?;
        Ok(Self {
            m,
            graph,
            addresses,
            members,
            card,
            ancestor,
            boundary,
            cell_maps,
            lookup,
            edges,
        })
    }

    /// Builds generation `m + 1` from `N` copies of this one.
    pub fn refine(&self, sys: &PcfSystem) -> Result<LevelGraph> {
        let nv = self.graph.num_vertices();
        let node = |j: usize, x: usize| j * nv + x;
        let mut uf = UnionFind((0..sys.n * nv).collect());
        for &(j, a, j2, b) in &sys.gluing {
            uf.union(node(j, self.boundary[a]), node(j2, self.boundary[b]));
        }

        let mut classes: HashMap<usize, Vec<Address>> = HashMap::new();
        for j in 0..sys.n {
            for x in 0..nv {
                let root = uf.find(node(j, x));
                let entry = classes.entry(root).or_default();
                for (word, a) in &self.members[x] {
                    let mut w = Vec::with_capacity(word.len() + 1);
                    w.push(j as u16);
                    w.extend_from_slice(word);
                    entry.push((w, *a));
                }
            }
        }
        let mut groups: Vec<(usize, Vec<Address>)> = classes
            .into_iter()
            .map(|(root, mut ms)| {
                ms.sort();
                (root, ms)
            })
            .collect();
        groups.sort_by(|a, b| a.1[0].cmp(&b.1[0]));
        let mut new_index = HashMap::with_capacity(groups.len());
        for (i, (root, _)) in groups.iter().enumerate() {
            new_index.insert(*root, i);
        }

        let mut cell_maps = vec![vec![0; nv]; sys.n];
        for (j, map) in cell_maps.iter_mut().enumerate() {
            for (x, slot) in map.iter_mut().enumerate() {
                *slot = new_index[&uf.find(node(j, x))];
            }
        }
        let mut edges = Vec::with_capacity(sys.n * self.edges.len());
        let mut ancestor = Vec::with_capacity(sys.n * self.edges.len());
        for map in &cell_maps {
            for (k, &(u, v)) in self.edges.iter().enumerate() {
                edges.push((map[u], map[v]));
                ancestor.push(self.ancestor[k]);
            }
        }
        let boundary = (0..sys.n0)
            .map(|a| cell_maps[a][self.boundary[a]])
            .collect();
        let members = groups.into_iter().map(|(_, ms)| ms).collect();
        Self::assemble(
            sys,
            self.m + 1,
            members,
            edges,
            ancestor,
            boundary,
            cell_maps,
        )
    }

    pub fn vertex_of(&self, address: &Address) -> Option<usize> {
        self.lookup.get(address).copied()
    }

    /// Image of every vertex of this level in the next one, using
    /// `F_w(q_a) = F_{wa}(q_a)`.
    pub fn embedding_into(&self, finer: &LevelGraph) -> Result<Vec<usize>> {
        self.addresses
            .iter()
            .map(|(w, a)| {
                let mut word = w.clone();
                word.push(*a);
                finer.vertex_of(&(word, *a)).ok_or_else(|| {
                    Error::InconsistentGluing(format!(
                        "vertex {} has no image at generation {}",
                        address_id(&(w.clone(), *a)),
                        finer.m
                    ))
                })
            })
            .collect()
    }

    /// Largest number of cells meeting at a vertex.
    pub fn max_card(&self) -> usize {
        self.card.iter().copied().max().unwrap_or(0)
    }
}

/// Energy minimiser on `fine` with prescribed values `phi` on the embedded
/// coarse vertices.
pub fn harmonic_extension(coarse: &LevelGraph, fine: &LevelGraph, phi: &[f64]) -> Result<Vec<f64>> {
    let embed = coarse.embedding_into(fine)?;
    let n = fine.graph.num_vertices();
    let mut fixed = vec![None; n];
    for (x, &y) in embed.iter().enumerate() {
        fixed[y] = Some(phi[x]);
    }
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }
    let nf = free.len();
    let mut l_ii = DMatrix::<f64>::zeros(nf, nf);
    let mut rhs = DVector::<f64>::zeros(nf);
    for (&(u, v), &g) in fine.graph.edges().iter().zip(fine.graph.gamma()) {
        for (a, b) in [(u, v), (v, u)] {
            if slot[a] == usize::MAX {
                continue;
            }
            l_ii[(slot[a], slot[a])] += g;
            match fixed[b] {
                Some(val) => rhs[slot[a]] += g * val,
                None => l_ii[(slot[a], slot[b])] -= g,
            }
        }
    }
    let mut out: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    if nf > 0 {
        let chol = l_ii.cholesky().ok_or_else(|| {
            Error::SingularSystem(format!("harmonic extension to generation {}", fine.m))
        })?;
        let x = chol.solve(&rhs);
        for (k, &i) in free.iter().enumerate() {
            out[i] = x[k];
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CompatibilityReport {
    pub m: u32,
    pub trials: usize,
    /// Worst `|ε_m(φ) - ε_{m+1}(Hφ)| / ε_m(φ)`.
    pub extension_defect: f64,
    /// Worst `|ε_{m+1}(f) - (1/r) Σ_j ε_m(f∘F_j)| / ε_{m+1}(f)`.
    pub self_similarity_defect: f64,
}

pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Randomised check of compatibility and self-similarity of the energies at
/// generations `m` and `m + 1`.
pub fn verify_compatibility(
    sys: &PcfSystem,
    m: u32,
    trials: usize,
    seed: u64,
) -> Result<CompatibilityReport> {
    let coarse = sys.level_graph(m)?;
    let fine = coarse.refine(sys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = sys.r_f64();
    let mut ext = 0.0f64;
    let mut sim = 0.0f64;
    for _ in 0..trials {
        let phi: Vec<f64> = (0..coarse.graph.num_vertices())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let e_coarse = coarse.graph.energy_real(&phi);
        let h = harmonic_extension(&coarse, &fine, &phi)?;
        let e_fine = fine.graph.energy_real(&h);
        ext = ext.max((e_coarse - e_fine).abs() / e_coarse);

        let f: Vec<f64> = (0..fine.graph.num_vertices())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let whole = fine.graph.energy_real(&f);
        let parts: f64 = fine
            .cell_maps
            .iter()
            .map(|map| {
                let pulled: Vec<f64> = map.iter().map(|&y| f[y]).collect();
                coarse.graph.energy_real(&pulled) / r
            })
            .sum();
        sim = sim.max((whole - parts).abs() / whole);
    }
    let worst = ext.max(sim);
    if worst > COMPATIBILITY_TOL {
        return Err(Error::CompatibilityViolation { worst });
    }
    Ok(CompatibilityReport {
        m,
        trials,
        extension_defect: ext,
        self_similarity_defect: sim,
    })
}
