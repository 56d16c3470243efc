mod common;

use common::{unrolled_discrepancy, unrolled_gradients, Graph};
use dtfilter::DtParams;
use proptest::prelude::*;

#[test]
fn graph_differentiates_elementary_ops() {
    let mut g = Graph::default();
    let a = g.leaf(2.0);
    let b = g.leaf(3.0);
    let p = g.mul(a, b);
    let e = g.exp(a);
    let s = g.sub(p, e);
    let out = g.add(s, a);
    let adj = g.gradient(&[(out, 1.0)]);
    assert_eq!(Graph::adjoint(&adj, a), 3.0 - 2f64.exp() + 1.0);
    assert_eq!(Graph::adjoint(&adj, b), 2.0);
}

#[test]
fn single_sample_passes_through() {
    let r = unrolled_gradients(&[0.7], &[1.3], &[2.0], 3.0, 1.0, 2);
    assert_eq!(r.y, vec![0.7]);
    assert_eq!(r.grad_x, vec![2.0]);
    assert_eq!(r.grad_g, vec![0.0]);
}

#[test]
fn two_samples_by_hand() {
    // K=1, one forward then one backward pass over [a, b] with weight w:
    // forward gives [a, (1−w)b + wa], backward gives [(1−w)a + w·y1, y1].
    let (a, b, g1) = (0.3, -1.1, 0.4);
    let (ss, sr) = (2.0, 0.5);
    let w = (-std::f64::consts::SQRT_2 * (1.0 + g1 * ss / sr) / ss).exp();
    let y1 = (1.0 - w) * b + w * a;
    let y0 = (1.0 - w) * a + w * y1;
    let r = unrolled_gradients(&[a, b], &[0.0, g1], &[1.0, 0.0], ss, sr, 1);
    assert!((r.y[0] - y0).abs() < 1e-15 && (r.y[1] - y1).abs() < 1e-15);
    // dy0/da = (1−w) + w², dy0/db = w(1−w)
    assert!((r.grad_x[0] - ((1.0 - w) + w * w)).abs() < 1e-15);
    assert!((r.grad_x[1] - w * (1.0 - w)).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn library_matches_unrolled_graph(
        data in (1usize..=8).prop_flat_map(|n| (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(0.0f64..2.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
        )),
        sigma_s in prop::sample::select(vec![1.0, 3.0, 10.0, 100.0]),
        sigma_r in prop::sample::select(vec![0.5, 1.0, 4.0]),
        k in 1usize..=4,
    ) {
        let (x, g, u) = data;
        let params = DtParams::new(sigma_s, sigma_r, k).unwrap();
        let err = unrolled_discrepancy(&x, &g, &u, &params);
        prop_assert!(err <= 1e-10, "error {err}");
    }
}
