//! Parameter and error calculators for graph-like manifolds built over the
//! approximating graphs of a pcf fractal. Nothing here solves a PDE.

use std::fmt;

use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exact::{GeometricSeq, Surd};
use crate::graph::{GraphStats, WeightedGraph};
use crate::metric::{LengthCase, MetricGraph, PlanInput, ScalingPlan};
use crate::pcf::PcfSystem;

/// Geometry of a graph-like manifold family, generation-independent part.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPlan {
    /// Dimension, at least 2.
    pub d: u32,
    /// Unscaled transversal volume of every edge neighbourhood.
    pub vol_y: f64,
    pub eps0: f64,
    /// Transversal decay ratio `Ε`.
    pub eps_ratio: Surd,
    /// Longitudinal decay ratio `Λ`.
    pub lambda: Surd,
    pub ell00: Surd,
    /// Collar fraction in `(0, 1]`.
    pub kappa: f64,
    /// Bounds on the core vertex volumes.
    pub core_vol: (f64, f64),
    /// Lower bound on `λ2` of the core vertex neighbourhoods.
    pub core_lambda2: f64,
    /// Star constant in `(0, 2]`.
    pub lambda20: f64,
    pub alpha0: f64,
    pub alpha_inf: f64,
}

impl ManifoldPlan {
    pub fn new(d: u32, lambda: Surd, eps_ratio: Surd) -> Self {
        Self {
            d,
            vol_y: 1.0,
            eps0: 1.0,
            eps_ratio,
            lambda,
            ell00: Surd::one(),
            kappa: 1.0,
            core_vol: (1.0, 1.0),
            core_lambda2: 1.0,
            lambda20: 1.0,
            alpha0: 0.25,
            alpha_inf: 0.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::DomainError(format!(
                "dimension {} must be at least 2",
                self.d
            )));
        }
        if !(self.vol_y > 0.0) || !(self.eps0 > 0.0) {
            return Err(Error::DomainError(
                "volumes and eps0 must be positive".into(),
            ));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::DomainError(format!(
                "kappa = {} outside (0, 1]",
                self.kappa
            )));
        }
        if !(self.lambda20 > 0.0 && self.lambda20 <= 2.0) {
            return Err(Error::DomainError(format!(
                "lambda_2,0 = {} outside (0, 2]",
                self.lambda20
            )));
        }
        if !(self.core_vol.0 > 0.0 && self.core_vol.0 <= self.core_vol.1) {
            return Err(Error::DomainError(
                "core volume bounds must satisfy 0 < vol0 <= vol_inf".into(),
            ));
        }
        if !(self.core_lambda2 > 0.0) {
            return Err(Error::DomainError("core lambda_2 must be positive".into()));
        }
        if !(self.alpha0 > 0.0) || self.alpha_inf > 0.5 || self.alpha0 > self.alpha_inf {
            return Err(Error::DomainError(format!(
                "need 0 < alpha0 <= alpha_inf <= 1/2, got {} and {}",
                self.alpha0, self.alpha_inf
            )));
        }
        check_ratios(&self.lambda, &self.eps_ratio)
    }
}

fn check_ratios(lambda: &Surd, eps_ratio: &Surd) -> Result<()> {
    if !(eps_ratio.is_positive() && eps_ratio < lambda && *lambda < Surd::one()) {
        return Err(Error::InvalidRatio(format!(
            "need 0 < E < Lambda < 1, got E = {eps_ratio}, Lambda = {lambda}"
        )));
    }
    Ok(())
}

/// Generation-`m` parameters of the manifold family.
#[derive(Clone, Debug, Serialize)]
pub struct MfdScaling {
    pub m: u32,
    pub c: f64,
    pub ln_c_sq: f64,
    pub tau: f64,
    pub tau_exact: String,
    /// `ℓ_{m,e}` per generation-0 edge.
    pub lengths: Vec<f64>,
    pub eps: f64,
}

/// `c_m² = ε_m^{-(d-1)} · 2/(ℓ00 C0 N0 (NΛ)^m)`, `ε_m = ε0 Ε^m`, and `τ_m`
/// as for metric graphs.
pub fn mfd_scaling(
    sys: &PcfSystem,
    d: u32,
    lambda: &Surd,
    eps_ratio: &Surd,
    eps0: f64,
    ell00: &Surd,
    m: u32,
) -> Result<MfdScaling> {
    check_ratios(lambda, eps_ratio)?;
    if d < 2 || !(eps0 > 0.0) {
        return Err(Error::DomainError("need d >= 2 and eps0 > 0".into()));
    }
    let plan = ScalingPlan::new(sys, &PlanInput::custom(lambda.clone(), ell00.clone()))?;
    let mf = m as f64;
    let ln_eps = eps0.ln() + mf * eps_ratio.ln();
    let ln_c_sq = plan.c_sq.scale.ln() + mf * plan.c_sq.ratio.ln() - (d - 1) as f64 * ln_eps;
    Ok(MfdScaling {
        m,
        c: (0.5 * ln_c_sq).exp(),
        ln_c_sq,
        tau: plan.tau_value(m),
        tau_exact: plan.tau_exact(m).to_string(),
        lengths: plan.lengths.iter().map(|l| l.value(m)).collect(),
        eps: ln_eps.exp(),
    })
}

/// Worst relative deviations from
/// `(1/2μ(v)) Σ ℓ_e vol Y_e = 1/c²` and `γ_e ℓ_e / vol Y_e = c²τ` with
/// `vol Y_e = ε^{d-1} vol_y`.
pub fn mfd_compatibility(
    g: &WeightedGraph,
    mg: &MetricGraph,
    scaling: &MfdScaling,
    d: u32,
    vol_y: f64,
) -> (f64, f64) {
    let vol = scaling.eps.powi(d as i32 - 1) * vol_y;
    let c_sq = scaling.ln_c_sq.exp();
    let mut sums = vec![0.0; g.num_vertices()];
    for (&(u, v), l) in mg.edges().iter().zip(mg.lengths()) {
        sums[u] += l * vol;
        sums[v] += l * vol;
    }
    let measure = sums
        .iter()
        .zip(g.mu())
        .map(|(s, m)| (s * c_sq / (2.0 * m) - 1.0).abs())
        .fold(0.0, f64::max);
    let length = g
        .gamma()
        .iter()
        .zip(mg.lengths())
        .map(|(gm, l)| (gm * l / vol / (c_sq * scaling.tau) - 1.0).abs())
        .fold(0.0, f64::max);
    (measure, length)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MfdDelta {
    pub delta_sq: f64,
    /// `[2α∞, (18/(λ_{2,0}α0))(γ∞/γ0)(vol∞/vol0)²(μ∞/γ0), κ + 2/(κℓ0²λ̌2)]`.
    pub terms: [f64; 3],
}

/// Squared error for a graph-like manifold uniformly compatible with a
/// weighted graph with statistics `stats` and shortest edge `ell0`.
pub fn mfd_delta(
    stats: &GraphStats,
    plan: &ManifoldPlan,
    ell0: f64,
    vol0: f64,
    vol_inf: f64,
) -> Result<MfdDelta> {
    if plan.alpha_inf > 0.5 {
        return Err(Error::DomainError(format!(
            "alpha_inf = {} exceeds 1/2",
            plan.alpha_inf
        )));
    }
    if !(plan.alpha0 > 0.0) {
        return Err(Error::DomainError("alpha0 must be positive".into()));
    }
    if !(plan.core_lambda2 > 0.0) {
        return Err(Error::DomainError("core lambda_2 must be positive".into()));
    }
    if !(ell0 > 0.0) || !(vol0 > 0.0) || !(vol_inf >= vol0) || !(plan.kappa > 0.0) {
        return Err(Error::DomainError(
            "need ell0 > 0, 0 < vol0 <= vol_inf and kappa > 0".into(),
        ));
    }
    let terms = [
        2.0 * plan.alpha_inf,
        18.0 / (plan.lambda20 * plan.alpha0)
            * (stats.gamma_inf / stats.gamma0)
            * (vol_inf / vol0).powi(2)
            * (stats.mu_inf / stats.gamma0),
        plan.kappa + 2.0 / (plan.kappa * ell0 * ell0 * plan.core_lambda2),
    ];
    Ok(MfdDelta {
        delta_sq: terms.iter().cloned().fold(0.0, f64::max),
        terms,
    })
}

/// Rates of the two competing error terms for the fractal family.
#[derive(Clone, Debug)]
pub struct FracRates {
    /// Open window `((r/N)Λ, Λ)` of admissible `Ε`.
    pub window: (Surd, Surd),
    /// Per-generation ratio of the squared first term, `Ε/Λ`.
    pub rate1_sq: Surd,
    /// Per-generation ratio of the squared second term, `(Λ/Ε)(r/N)`.
    pub rate2_sq: Surd,
    /// `Ε* = (r/N)^{1/2} Λ`, balancing both terms.
    pub optimal: Surd,
    /// `(r/N)^{1/2}`, the squared rate at `Ε*`.
    pub optimal_rate_sq: Surd,
    /// Per-generation ratio of `δ_m`, up to unconstrained constants.
    pub delta_rate: f64,
    /// `delta_rate^m`.
    pub delta_m: f64,
}

fn r_over_n(sys: &PcfSystem) -> BigRational {
    &sys.r / BigRational::from_integer(sys.n.into())
}

/// Admissible window for `Ε` at length ratio `Λ`.
pub fn eps_window(sys: &PcfSystem, lambda: &Surd) -> (Surd, Surd) {
    (lambda.scale(&r_over_n(sys)), lambda.clone())
}

pub fn optimal_eps(sys: &PcfSystem, lambda: &Surd) -> Result<Surd> {
    Ok(Surd::sqrt_of(&r_over_n(sys))?.mul(lambda))
}

pub fn mfd_frac_delta(
    sys: &PcfSystem,
    lambda: &Surd,
    eps_ratio: &Surd,
    m: u32,
) -> Result<FracRates> {
    let window = eps_window(sys, lambda);
    if !(*eps_ratio > window.0 && *eps_ratio < window.1) {
        return Err(Error::OutOfWindow(format!(
            "E = {eps_ratio} outside ({}, {})",
            window.0, window.1
        )));
    }
    let rn = r_over_n(sys);
    let rate1_sq = eps_ratio.div(lambda)?;
    let rate2_sq = lambda.div(eps_ratio)?.scale(&rn);
    let delta_rate = rate1_sq.clone().max(rate2_sq.clone()).to_f64().sqrt();
    Ok(FracRates {
        optimal: optimal_eps(sys, lambda)?,
        optimal_rate_sq: Surd::sqrt_of(&rn)?,
        window,
        rate1_sq,
        rate2_sq,
        delta_rate,
        delta_m: delta_rate.powi(m as i32),
    })
}

/// Largest admissible transversal scale `ℓ0/C_v²`.
pub fn eps_threshold(ell0: f64, c_v: f64) -> Result<f64> {
    if !(c_v > 0.0) || !(ell0 > 0.0) {
        return Err(Error::DomainError("need ell0 > 0 and C_v > 0".into()));
    }
    Ok(ell0 / (c_v * c_v))
}

/// One row of the parameter table for a length-scaling case.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub case: LengthCase,
    pub lambda: Surd,
    pub window: (Surd, Surd),
    /// `1/(NΛ)`: `c_m = O((Ε^{-(d-1)} · c_ratio)^{m/2})`.
    pub c_ratio: Surd,
    pub tau: GeometricSeq,
    pub optimal: Surd,
}

/// The three standard length scalings `Λ = θ, r, (r/N)^{1/2}`.
pub fn parameter_table(sys: &PcfSystem) -> Result<Vec<TableRow>> {
    let n = Surd::from_rational(BigRational::from_integer(sys.n.into()));
    [
        LengthCase::Geometric,
        LengthCase::InverseWeight,
        LengthCase::UnitTau,
    ]
    .into_iter()
    .map(|case| {
        let plan = ScalingPlan::new(sys, &PlanInput::case(case))?;
        Ok(TableRow {
            case,
            window: eps_window(sys, &plan.lambda),
            c_ratio: n.mul(&plan.lambda).recip()?,
            tau: plan.tau.clone(),
            optimal: optimal_eps(sys, &plan.lambda)?,
            lambda: plan.lambda,
        })
    })
    .collect()
}

impl TableRow {
    pub fn to_json(&self) -> Value {
        json!({
            "case": self.case.to_string(),
            "lambda": self.lambda.to_string(),
            "eps_window": [self.window.0.to_string(), self.window.1.to_string()],
            "c_ratio": self.c_ratio.to_string(),
            "tau_scale": self.tau.scale.to_string(),
            "tau_ratio": self.tau.ratio.to_string(),
            "optimal_eps": self.optimal.to_string(),
        })
    }
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tau = if self.tau.ratio == Surd::one() {
            "1".to_string()
        } else {
            format!("O(({})^m)", self.tau.ratio)
        };
        write!(
            f,
            "| {:<14} | O(({})^m) | O(E^m) | ({}, {}) | O((E^-(d-1) * {})^(m/2)) | {} | E* = {} |",
            self.case, self.lambda, self.window.0, self.window.1, self.c_ratio, tau, self.optimal
        )
    }
}

pub fn format_table(rows: &[TableRow]) -> String {
    let mut out =
        String::from("| case           | l_m,e | eps_m | E in | c_m | tau_m | optimal |\n");
    for row in rows {
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rational;
    use crate::metric::assign_lengths;
    use approx::assert_relative_eq;

    fn sierpinski() -> PcfSystem {
        PcfSystem::preset("sierpinski").unwrap()
    }

    #[test]
    fn scaling_keeps_metric_tau_and_adds_eps_factor() {
        let sys = sierpinski();
        let half = Surd::from_ratio(1, 2);
        for m in 0..8 {
            let s = mfd_scaling(
                &sys,
                2,
                &half,
                &Surd::from_ratio(1, 5),
                0.1,
                &Surd::one(),
                m,
            )
            .unwrap();
            assert_relative_eq!(s.tau, 3.0 * 1.25f64.powi(m as i32), max_relative = 1e-12);
            let level = sys.level_graph(m).unwrap();
            let (mg, plan) =
                assign_lengths(&sys, &level, &PlanInput::case(LengthCase::Geometric)).unwrap();
            assert_relative_eq!(s.tau, plan.tau_value(m), max_relative = 1e-12);
            let expected = plan.c(m).powi(2) / (0.1 * 0.2f64.powi(m as i32));
            assert_relative_eq!(s.c * s.c, expected, max_relative = 1e-12);
            let (a, b) = mfd_compatibility(&level.graph, &mg, &s, 2, 1.0);
            assert!(a < 1e-12 && b < 1e-12, "{a} {b}");
        }
        let interval = PcfSystem::preset("interval").unwrap();
        let s = mfd_scaling(
            &interval,
            2,
            &half,
            &Surd::from_ratio(1, 4),
            0.3,
            &Surd::one(),
            3,
        )
        .unwrap();
        let metric = ScalingPlan::new(&interval, &PlanInput::case(LengthCase::Geometric)).unwrap();
        assert_relative_eq!(
            s.c * s.c,
            metric.c(3).powi(2) / (0.3 / 64.0),
            max_relative = 1e-12
        );
        assert!(matches!(
            mfd_scaling(&sys, 2, &half, &half, 1.0, &Surd::one(), 1),
            Err(Error::InvalidRatio(_))
        ));
    }

    #[test]
    fn delta_takes_the_largest_term() {
        let stats = sierpinski().level_graph(2).unwrap().graph.stats();
        let mut plan = ManifoldPlan::new(2, Surd::from_ratio(1, 2), Surd::from_ratio(1, 5));
        plan.alpha_inf = 0.1;
        plan.alpha0 = 0.1;
        plan.kappa = 0.5;
        plan.core_lambda2 = 40.0 / 3.0;
        let d = mfd_delta(&stats, &plan, 0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(d.terms[0], 0.2);
        assert_relative_eq!(d.terms[2], 0.5 + 2.0 / (0.5 * 0.25 * 40.0 / 3.0));
        assert_eq!(d.delta_sq, d.terms.iter().cloned().fold(0.0, f64::max));
        let simplified = 18.0 * stats.mu_inf / (plan.lambda20 * plan.alpha0 * stats.gamma0);
        assert_relative_eq!(d.terms[1], simplified, max_relative = 1e-14);
        plan.kappa = 1e-9;
        assert!(mfd_delta(&stats, &plan, 0.5, 1.0, 1.0).unwrap().delta_sq > 1e8);
        plan.alpha_inf = 0.6;
        assert!(matches!(
            mfd_delta(&stats, &plan, 0.5, 1.0, 1.0),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn optimal_eps_balances_rates() {
        let sys = sierpinski();
        let half = Surd::from_ratio(1, 2);
        let opt = optimal_eps(&sys, &half).unwrap();
        assert_eq!(opt, Surd::sqrt_of(&rational(1, 20)).unwrap());
        assert!((opt.to_f64() - 1.0 / (2.0 * 5f64.sqrt())).abs() < 1e-15);
        let rates = mfd_frac_delta(&sys, &half, &opt, 4).unwrap();
        assert_eq!(rates.rate1_sq, rates.rate2_sq);
        assert_eq!(rates.rate1_sq, rates.optimal_rate_sq);
        assert_relative_eq!(rates.delta_m, 0.2, max_relative = 1e-12);
        assert_eq!(rates.window, (Surd::from_ratio(1, 10), half.clone()));
        assert!(matches!(
            mfd_frac_delta(&sys, &half, &Surd::from_ratio(1, 10), 1),
            Err(Error::OutOfWindow(_))
        ));
    }

    #[test]
    fn eps_threshold_values() {
        assert_eq!(eps_threshold(1.0, 2.0).unwrap(), 0.25);
        assert_eq!(eps_threshold(0.5, 1.0).unwrap(), 0.5);
        assert!(eps_threshold(1.0, 0.0).is_err());
    }
}
