//! Closed-form spectra checked against the graph and FEM solvers.

use std::f64::consts::PI;

use approx::assert_relative_eq;
use fracspec::fem::{kirchhoff_spectrum, weighted_star_lambda2, FemDiscretization};
use fracspec::metric::{subdivide, MetricGraph};
use fracspec::pcf::PcfSystem;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

#[test]
fn interval_levels_match_cosine_law() {
    let sys = PcfSystem::preset("interval").unwrap();
    for m in 1..=6u32 {
        let spec = sys.level_graph(m).unwrap().graph.spectrum();
        let n = (1u32 << m) as f64;
        for (k, got) in spec.iter().enumerate() {
            let want = 2.0 * n * n * (1.0 - (k as f64 * PI / n).cos());
            assert!(
                (got - want).abs() <= 1e-9 * want.max(n * n),
                "m={m} k={k}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn odd_subdivisions_of_the_unit_interval() {
    let unit = MetricGraph::new(ids(2), vec![(0, 1)], vec![1.0]).unwrap();
    for n in [3usize, 5, 7, 11] {
        let (_, sg) = subdivide(&unit, &[n]).unwrap();
        let spec = sg.spectrum();
        for (k, got) in spec.iter().enumerate() {
            let want = 2.0 * (n * n) as f64 * (1.0 - (k as f64 * PI / n as f64).cos());
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "n={n} k={k}");
        }
    }
}

#[test]
fn triangle_mesh_is_a_uniform_circle() {
    let mg = MetricGraph::new(ids(3), vec![(0, 1), (1, 2), (2, 0)], vec![1.0; 3]).unwrap();
    for ne in [10usize, 40, 150] {
        let fem = FemDiscretization::with_elements(&mg, vec![ne; 3]).unwrap();
        let s = kirchhoff_spectrum(&fem, 9, 2).unwrap();
        let total = 3 * ne;
        let h = 3.0 / total as f64;
        let mut want: Vec<f64> = (0..total)
            .map(|j| {
                let c = (2.0 * PI * j as f64 / total as f64).cos();
                6.0 / (h * h) * (1.0 - c) / (2.0 + c)
            })
            .collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in s.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "ne={ne}: {a} vs {b}");
        }
    }
}

#[test]
fn subdividing_the_metric_graph_leaves_its_spectrum_unchanged() {
    let mg = MetricGraph::new(
        ids(4),
        vec![(0, 1), (1, 2), (2, 0), (2, 3)],
        vec![1.0, 0.5, 0.75, 1.25],
    )
    .unwrap();
    let (sm, _) = subdivide(&mg, &[2, 1, 3, 5]).unwrap();
    let a = FemDiscretization::with_elements(&mg, vec![60, 30, 45, 75]).unwrap();
    let b = FemDiscretization::with_elements(
        &sm,
        vec![30; 2]
            .into_iter()
            .chain([30])
            .chain([15; 3])
            .chain([15; 5])
            .collect(),
    )
    .unwrap();
    let sa = kirchhoff_spectrum(&a, 6, 1).unwrap();
    let sb = kirchhoff_spectrum(&b, 6, 1).unwrap();
    for (x, y) in sa.iter().zip(&sb) {
        assert_relative_eq!(*x, *y, epsilon = 1e-9, max_relative = 1e-9);
    }
}

#[test]
fn equilateral_star_and_scaling() {
    let (w, u) = weighted_star_lambda2(&[1.0; 4]).unwrap();
    assert!((u - PI * PI / 4.0).abs() < 1e-6);
    assert!(w > u);
    let (w2, u2) = weighted_star_lambda2(&[2.0; 4]).unwrap();
    assert_relative_eq!(u2, u / 4.0, max_relative = 1e-7);
    assert_relative_eq!(w2, w / 4.0, max_relative = 1e-7);
}
