//! Metric graphs, compatible edge lengths for pcf level graphs, and
//! subdivision graphs.

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::exact::{rational, GeometricSeq, Surd};
use crate::graph::WeightedGraph;
use crate::pcf::{LevelGraph, PcfSystem};

/// A finite metric graph: combinatorial graph plus edge lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricGraph {
    ids: Vec<String>,
    edges: Vec<(usize, usize)>,
    lengths: Vec<f64>,
}

impl MetricGraph {
    pub fn new(ids: Vec<String>, edges: Vec<(usize, usize)>, lengths: Vec<f64>) -> Result<Self> {
        if edges.len() != lengths.len() {
            return Err(Error::Malformed(format!(
                "{} lengths for {} edges",
                lengths.len(),
                edges.len()
            )));
        }
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u >= ids.len() || v >= ids.len() {
                return Err(Error::UnknownVertex(format!("index {}", u.max(v))));
            }
            if u == v {
                return Err(Error::LoopEdge(k, ids[u].clone()));
            }
        }
        if let Some((k, &l)) = lengths
            .iter()
            .enumerate()
            .find(|(_, l)| !(**l > 0.0 && l.is_finite()))
        {
            return Err(Error::NonPositiveWeight {
                what: format!("length of edge {k}"),
                value: l,
            });
        }
        Ok(Self {
            ids,
            edges,
            lengths,
        })
    }

    /// Metric graph on the combinatorics of `g`.
    pub fn on_graph(g: &WeightedGraph, lengths: Vec<f64>) -> Result<Self> {
        Self::new(g.ids().to_vec(), g.edges().to_vec(), lengths)
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

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn min_length(&self) -> f64 {
        self.lengths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_length(&self) -> f64 {
        self.lengths.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_vertices()];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Vertex measure `nu(v) = (1/2) sum_{e in E_v} l_e`.
    pub fn vertex_measure(&self) -> Vec<f64> {
        let mut nu = vec![0.0; self.num_vertices()];
        for (&(u, v), &l) in self.edges.iter().zip(&self.lengths) {
            nu[u] += 0.5 * l;
            nu[v] += 0.5 * l;
        }
        nu
    }

    /// Metric-graph JSON: the combinatorial graph plus `"lengths"` keyed by
    /// edge position.
    pub fn to_json(&self) -> Value {
        let mut lengths = Map::new();
        for (k, l) in self.lengths.iter().enumerate() {
            lengths.insert(k.to_string(), json!(l));
        }
        json!({
            "vertices": self.ids,
            "edges": self.edges.iter().map(|&(u, v)| json!([self.ids[u], self.ids[v]])).collect::<Vec<_>>(),
            "lengths": lengths,
        })
    }

    /// Accepts either `[u, v]` or `[u, v, gamma]` edges; weights are ignored.
    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |what: &str| Error::Malformed(format!("metric graph JSON: {what}"));
        let ids: Vec<String> = value
            .get("vertices")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing \"vertices\""))?
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                _ => Err(bad("vertex ids must be strings or numbers")),
            })
            .collect::<Result<_>>()?;
        let position = |v: &Value| -> Result<usize> {
            let key = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                _ => return Err(bad("bad vertex reference")),
            };
            ids.iter()
                .position(|id| *id == key)
                .ok_or(Error::UnknownVertex(key))
        };
        let raw_edges = value
            .get("edges")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing \"edges\""))?;
        let mut edges = Vec::with_capacity(raw_edges.len());
        for e in raw_edges {
            let pair = e
                .as_array()
                .filter(|p| p.len() == 2 || p.len() == 3)
                .ok_or_else(|| bad("edges must be [u, v] or [u, v, gamma]"))?;
            edges.push((position(&pair[0])?, position(&pair[1])?));
        }
        let map = value
            .get("lengths")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing \"lengths\""))?;
        let lengths = (0..edges.len())
            .map(|k| {
                map.get(&k.to_string())
                    .and_then(Value::as_f64)
                    .ok_or_else(|| bad(&format!("no length for edge {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids, edges, lengths)
    }
}

/// How edge lengths of the level graphs are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthCase {
    /// `Λ = θ`.
    Geometric,
    /// `Λ = r`, `ℓ00 = 1`, so that `ℓ = 1/γ`.
    InverseWeight,
    /// `Λ = sqrt(r/N)` with `ℓ00` chosen so that `τ_m = 1`.
    UnitTau,
    Custom,
}

impl fmt::Display for LengthCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            LengthCase::Geometric => "geometric",
            LengthCase::InverseWeight => "inverse-weight",
            LengthCase::UnitTau => "unit-tau",
            LengthCase::Custom => "custom",
        })
    }
}

impl FromStr for LengthCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(LengthCase::Geometric),
            "inverse-weight" => Ok(LengthCase::InverseWeight),
            "unit-tau" => Ok(LengthCase::UnitTau),
            "custom" => Ok(LengthCase::Custom),
            other => Err(Error::Malformed(format!("unknown length case {other:?}"))),
        }
    }
}

/// Requested length scaling; unset values are filled in by the case.
#[derive(Clone, Debug)]
pub struct PlanInput {
    pub case: LengthCase,
    pub lambda: Option<Surd>,
    pub ell00: Option<Surd>,
}

impl PlanInput {
    pub fn case(case: LengthCase) -> Self {
        Self {
            case,
            lambda: None,
            ell00: None,
        }
    }

    pub fn custom(lambda: Surd, ell00: Surd) -> Self {
        Self {
            case: LengthCase::Custom,
            lambda: Some(lambda),
            ell00: Some(ell00),
        }
    }
}

/// Exact length, isometric and energy rescaling sequences of a pcf system.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingPlan {
    pub case: LengthCase,
    /// Length decay ratio per generation.
    pub lambda: Surd,
    /// Base length.
    pub ell00: Surd,
    /// `c_m^2 = 2 / (ℓ00 C0 N0 (NΛ)^m)`.
    pub c_sq: GeometricSeq,
    /// `τ_m = ℓ00^2 (C0 N0 / 2) (NΛ^2 / r)^m`.
    pub tau: GeometricSeq,
    /// `ℓ_{m,e} = (ℓ00/γ_{0,e0}) Λ^m` per generation-0 edge.
    pub lengths: Vec<GeometricSeq>,
}

impl ScalingPlan {
    pub fn new(sys: &PcfSystem, input: &PlanInput) -> Result<Self> {
        let one = Surd::one();
        let (lambda, ell00) = match input.case {
            LengthCase::Geometric => (
                Surd::from_rational(sys.theta.clone()),
                input.ell00.clone().unwrap_or(one),
            ),
            LengthCase::InverseWeight => (Surd::from_rational(sys.r.clone()), one),
            LengthCase::UnitTau => {
                let n = BigRational::from_integer(sys.n.into());
                let n0 = BigRational::from_integer(sys.n0.into());
                (
                    Surd::sqrt_of(&(&sys.r / n))?,
                    Surd::sqrt_of(&(rational(2, 1) / (sys.c0() * n0)))?,
                )
            }
            LengthCase::Custom => (
                input.lambda.clone().ok_or_else(|| {
                    Error::Malformed("custom scaling needs a length ratio".into())
                })?,
                input.ell00.clone().unwrap_or(one),
            ),
        };
        if !(lambda.is_positive() && lambda < Surd::one()) {
            return Err(Error::InvalidRatio(lambda.to_string()));
        }
        if !ell00.is_positive() {
            return Err(Error::Malformed(format!(
                "base length {ell00} must be positive"
            )));
        }
        let n = Surd::from_rational(BigRational::from_integer(sys.n.into()));
        let c0n0 = Surd::from_rational(sys.c0() * BigRational::from_integer(sys.n0.into()));
        let half = Surd::from_ratio(1, 2);

        let c_sq = GeometricSeq::new(
            ell00.mul(&c0n0).mul(&half).recip()?,
            n.mul(&lambda).recip()?,
        );
        let tau = GeometricSeq::new(
            ell00.mul(&ell00).mul(&c0n0).mul(&half),
            n.mul(&lambda)
                .mul(&lambda)
                .div(&Surd::from_rational(sys.r.clone()))?,
        );
        let lengths = sys
            .gamma0
            .iter()
            .map(|g| GeometricSeq::new(ell00.scale(&g.recip()), lambda.clone()))
            .collect::<Vec<_>>();
        Ok(Self {
            case: input.case,
            lambda,
            ell00,
            c_sq,
            tau,
            lengths,
        })
    }

    pub fn c(&self, m: u32) -> f64 {
        self.c_sq.value(m).sqrt()
    }

    pub fn tau_value(&self, m: u32) -> f64 {
        self.tau.value(m)
    }

    /// Exact `τ_m` (always rational for rational `r`).
    pub fn tau_exact(&self, m: u32) -> Surd {
        self.tau.at(m)
    }

    pub fn summary(&self, m: u32) -> Value {
        json!({
            "case": self.case.to_string(),
            "lambda": self.lambda.to_string(),
            "ell00": self.ell00.to_string(),
            "c_sq_scale": self.c_sq.scale.to_string(),
            "c_sq_ratio": self.c_sq.ratio.to_string(),
            "tau_scale": self.tau.scale.to_string(),
            "tau_ratio": self.tau.ratio.to_string(),
            "m": m,
            "c": self.c(m),
            "tau": self.tau_value(m),
            "tau_exact": self.tau_exact(m).to_string(),
        })
    }
}

/// Compatible metric graph of a level graph.
pub fn assign_lengths(
    sys: &PcfSystem,
    level: &LevelGraph,
    input: &PlanInput,
) -> Result<(MetricGraph, ScalingPlan)> {
    let plan = ScalingPlan::new(sys, input)?;
    let per_ancestor: Vec<f64> = plan.lengths.iter().map(|l| l.value(level.m)).collect();
    let lengths = level.ancestor.iter().map(|&e0| per_ancestor[e0]).collect();
    let mg = MetricGraph::on_graph(&level.graph, lengths)?;
    Ok((mg, plan))
}

#[derive(Clone, Debug, Serialize)]
pub struct CompatibilityCheck {
    /// `1/c^2` from the plan.
    pub inv_c_sq: f64,
    /// Largest relative deviation of `nu(v)/mu(v)` from `1/c^2`.
    pub measure_defect: f64,
    /// Largest relative deviation of `ℓ_e γ_e` from `c^2 τ`.
    pub length_defect: f64,
}

/// Relative defects of the two compatibility identities.
pub fn compatibility(
    g: &WeightedGraph,
    mg: &MetricGraph,
    c_sq: f64,
    tau: f64,
) -> CompatibilityCheck {
    let nu = mg.vertex_measure();
    let inv = 1.0 / c_sq;
    let measure_defect = nu
        .iter()
        .zip(g.mu())
        .map(|(n, m)| (n / m - inv).abs() / inv)
        .fold(0.0, f64::max);
    let target = c_sq * tau;
    let length_defect = mg
        .lengths()
        .iter()
        .zip(g.gamma())
        .map(|(l, gm)| (l * gm - target).abs() / target)
        .fold(0.0, f64::max);
    CompatibilityCheck {
        inv_c_sq: inv,
        measure_defect,
        length_defect,
    }
}

/// Refines each edge into pieces with the given length fractions.
///
/// Returns the refined metric graph and the discrete graph with
/// `mu(v) = (1/2) sum l_e` and `gamma_e = 1/l_e`.
pub fn subdivide_with(
    mg: &MetricGraph,
    fractions: &[Vec<f64>],
) -> Result<(MetricGraph, WeightedGraph)> {
    if fractions.len() != mg.num_edges() {
        return Err(Error::BadPartition(format!(
            "{} partitions for {} edges",
            fractions.len(),
            mg.num_edges()
        )));
    }
    let mut ids = mg.ids().to_vec();
    let mut edges = Vec::new();
    let mut lengths = Vec::new();
    for (k, (&(u, v), parts)) in mg.edges().iter().zip(fractions).enumerate() {
        if parts.is_empty() || parts.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::BadPartition(format!(
                "edge {k}: fractions must be positive"
            )));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::BadPartition(format!(
                "edge {k}: fractions sum to {total}"
            )));
        }
        let mut prev = u;
        for (i, p) in parts.iter().enumerate() {
            let next = if i + 1 == parts.len() {
                v
            } else {
                ids.push(format!("s{k}_{}", i + 1));
                ids.len() - 1
            };
            edges.push((prev, next));
            lengths.push(p * mg.lengths()[k]);
            prev = next;
        }
    }
    let sm = MetricGraph::new(ids.clone(), edges.clone(), lengths.clone())?;
    let mu = sm.vertex_measure();
    let gamma = lengths.iter().map(|l| 1.0 / l).collect();
    let sg = WeightedGraph::new(ids, edges, mu, gamma)?;
    Ok((sm, sg))
}

/// Equal subdivision with `parts[e]` pieces on edge `e`.
pub fn subdivide(mg: &MetricGraph, parts: &[usize]) -> Result<(MetricGraph, WeightedGraph)> {
    if parts.contains(&0) {
        return Err(Error::BadPartition(
            "every edge needs at least one part".into(),
        ));
    }
    let fractions: Vec<Vec<f64>> = parts.iter().map(|&p| vec![1.0 / p as f64; p]).collect();
    subdivide_with(mg, &fractions)
}

/// Upper bound `d∞ ℓ∞³/ℓ0` on the squared error for a subdivision graph.
pub fn subdivision_delta_sq(sm: &MetricGraph) -> f64 {
    let d = sm.degrees().into_iter().max().unwrap_or(0) as f64;
    d * sm.max_length().powi(3) / sm.min_length()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sierpinski_geometric_tau_is_three_five_quarters() {
        let s = PcfSystem::preset("sierpinski").unwrap();
        let plan = ScalingPlan::new(&s, &PlanInput::case(LengthCase::Geometric)).unwrap();
        for m in 0..=12 {
            let want = rational(3, 1) * num_traits::pow(rational(5, 4), m);
            assert_eq!(plan.tau_exact(m as u32), Surd::from_rational(want));
        }
    }

    #[test]
    fn interval_geometric_is_isometric() {
        let s = PcfSystem::preset("interval").unwrap();
        let lv = s.level_graph(3).unwrap();
        let (mg, plan) = assign_lengths(&s, &lv, &PlanInput::case(LengthCase::Geometric)).unwrap();
        assert_eq!(plan.tau_exact(3), Surd::one());
        assert_eq!(plan.c_sq.at(3), Surd::one());
        assert!(mg.lengths().iter().all(|&l| l == 0.125));
    }

    #[test]
    fn sierpinski_inverse_weight_case() {
        let s = PcfSystem::preset("sierpinski").unwrap();
        let lv = s.level_graph(2).unwrap();
        let (mg, plan) =
            assign_lengths(&s, &lv, &PlanInput::case(LengthCase::InverseWeight)).unwrap();
        assert_eq!(plan.tau.ratio, Surd::from_ratio(9, 5));
        for (l, g) in mg.lengths().iter().zip(lv.graph.gamma()) {
            assert_relative_eq!(*l, 0.36, epsilon = 1e-15);
            assert_relative_eq!(l * g, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn unit_tau_case_keeps_tau_one() {
        let s = PcfSystem::preset("sierpinski").unwrap();
        let plan = ScalingPlan::new(&s, &PlanInput::case(LengthCase::UnitTau)).unwrap();
        assert_eq!(plan.lambda.square(), rational(1, 5));
        for m in 0..6 {
            assert_eq!(plan.tau_exact(m), Surd::one());
        }
    }

    #[test]
    fn compatibility_identities_hold() {
        for preset in ["interval", "sierpinski"] {
            let s = PcfSystem::preset(preset).unwrap();
            for case in [
                LengthCase::Geometric,
                LengthCase::InverseWeight,
                LengthCase::UnitTau,
            ] {
                for lv in s.levels(4).unwrap() {
                    let (mg, plan) = assign_lengths(&s, &lv, &PlanInput::case(case)).unwrap();
                    let check =
                        compatibility(&lv.graph, &mg, plan.c_sq.value(lv.m), plan.tau_value(lv.m));
                    assert!(check.measure_defect < 1e-12, "{preset} {case} {check:?}");
                    assert!(check.length_defect < 1e-12, "{preset} {case} {check:?}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_ratio() {
        let s = PcfSystem::preset("sierpinski").unwrap();
        let input = PlanInput::custom(Surd::one(), Surd::one());
        assert!(matches!(
            ScalingPlan::new(&s, &input),
            Err(Error::InvalidRatio(_))
        ));
        let input = PlanInput::custom(Surd::from_ratio(3, 2), Surd::one());
        assert!(matches!(
            ScalingPlan::new(&s, &input),
            Err(Error::InvalidRatio(_))
        ));
    }

    #[test]
    fn subdivision_measures() {
        let mg = MetricGraph::new(vec!["a".into(), "b".into()], vec![(0, 1)], vec![1.0]).unwrap();
        let (sm, sg) = subdivide(&mg, &[4]).unwrap();
        assert_eq!(sm.num_vertices(), 5);
        assert_relative_eq!(sg.mu()[0], 0.125);
        assert_relative_eq!(sg.mu()[2], 0.25);
        assert!(sg.gamma().iter().all(|&g| g == 4.0));
        assert_relative_eq!(subdivision_delta_sq(&sm), 2.0 / 16.0, epsilon = 1e-15);
        assert!(matches!(subdivide(&mg, &[0]), Err(Error::BadPartition(_))));
        assert!(matches!(
            subdivide_with(&mg, &[vec![0.5, 0.4]]),
            Err(Error::BadPartition(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = PcfSystem::preset("sierpinski").unwrap();
        let lv = s.level_graph(1).unwrap();
        let (mg, _) = assign_lengths(&s, &lv, &PlanInput::case(LengthCase::Geometric)).unwrap();
        let back = MetricGraph::from_json(&mg.to_json()).unwrap();
        assert_eq!(back, mg);
    }
}
