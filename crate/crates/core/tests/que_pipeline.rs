//! Measured quasi-unitarity defects across generations.

use fracspec::metric::{LengthCase, PlanInput};
use fracspec::pcf::PcfSystem;
use fracspec::pipeline::{
    converge_level, convergence_csv, eigen_decay_ratios, ConvergeOptions, QueReport,
};
use fracspec::que::form_to_op;

fn reports(preset: &str, opts: &ConvergeOptions) -> Vec<QueReport> {
    let sys = PcfSystem::preset(preset).unwrap();
    (1..=4)
        .map(|m| converge_level(&sys, m, &PlanInput::case(LengthCase::Geometric), opts).unwrap())
        .collect()
}

#[test]
fn defects_do_not_grow_with_the_generation() {
    for preset in ["interval", "sierpinski"] {
        let rs = reports(preset, &ConvergeOptions::default());
        for w in rs.windows(2) {
            let (a, b) = (&w[0].measured, &w[1].measured);
            for (name, x, y) in [
                ("jpj", a.jpj, b.jpj),
                ("jjp", a.jjp, b.jjp),
                ("formCloseness", a.form_closeness, b.form_closeness),
                ("opDefect", a.op_defect, b.op_defect),
            ] {
                assert!(
                    y <= 1.05 * x + 1e-12,
                    "{preset} m={}: {name} grew from {x:e} to {y:e}",
                    w[1].m
                );
            }
        }
        for r in &rs {
            assert!(r.measured.all_finite());
            assert!(r.measured.adjoint_defect <= 1e-10);
            assert!(r.measured.norm_j <= 1.0 + 1e-10);
        }
    }
}

#[test]
fn interval_projection_defect_is_below_the_bound() {
    let sys = PcfSystem::preset("interval").unwrap();
    let opts = ConvergeOptions {
        mesh: Some(1.0 / 256.0),
        ..ConvergeOptions::default()
    };
    let r = converge_level(&sys, 2, &PlanInput::case(LengthCase::Geometric), &opts).unwrap();
    assert!(r.measured.jpj <= 1.1 * r.delta_theoretical);
    assert!(r.violations().is_empty());
}

#[test]
fn sierpinski_operator_defect_is_within_four_delta() {
    let sys = PcfSystem::preset("sierpinski").unwrap();
    let r = converge_level(
        &sys,
        1,
        &PlanInput::case(LengthCase::Geometric),
        &ConvergeOptions::default(),
    )
    .unwrap();
    assert!(r.measured.op_defect <= form_to_op(r.delta_theoretical));
    assert_eq!(r.op_delta_bound, 4.0 * r.delta_theoretical);
}

#[test]
fn interval_eigenvalue_gap_shrinks_by_a_quarter() {
    let rs = reports(
        "interval",
        &ConvergeOptions {
            k: 2,
            ..ConvergeOptions::default()
        },
    );
    let ratio = eigen_decay_ratios(&rs)[1].unwrap();
    assert!((ratio - 0.25).abs() < 0.02, "{ratio}");
}

#[test]
fn reports_are_deterministic() {
    let opts = ConvergeOptions {
        k: 4,
        seed: 9,
        ..ConvergeOptions::default()
    };
    let a = convergence_csv(&reports("sierpinski", &opts)[..2]);
    let b = convergence_csv(&reports("sierpinski", &opts)[..2]);
    assert_eq!(a, b);
    let tau: Vec<String> = reports("sierpinski", &opts)
        .iter()
        .map(|r| r.tau_exact.clone())
        .collect();
    assert_eq!(tau, ["15/4", "75/16", "375/64", "1875/256"]);
}
