use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::strategy::ValueTree;

use rezo_core::graph::{generate_schedule, products_from, transition_product, EdgeLabel, ScheduleParams};
use rezo_core::linalg::Matrix;

fn stochastic(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, n), n).prop_map(|rows| {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Matrix::from_rows(&rows).unwrap()
    })
}

fn sequence() -> impl Strategy<Value = Vec<Matrix>> {
    (1usize..=6, 1usize..=25).prop_flat_map(|(n, len)| prop::collection::vec(stochastic(n), len))
}

fn dense(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.dim(), m.dim(), |i, j| m.get(i, j))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn products_of_stochastic_factors_are_stochastic(mats in sequence()) {
        let p = transition_product(&mats, 0, mats.len() - 1).unwrap();
        prop_assert!(p.matrix.max_row_sum_error() <= 1e-12);
        let reference = mats.iter().fold(DMatrix::identity(mats[0].dim(), mats[0].dim()), |acc, m| dense(m) * acc);
        prop_assert!((dense(&p.matrix) - reference).amax() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn row_spread_never_grows(mats in sequence()) {
        let products = products_from(&mats, 0, mats.len()).unwrap();
        for w in products.windows(2) {
            prop_assert!(w[1].matrix.max_row_spread() <= w[0].matrix.max_row_spread() + 1e-12);
        }
    }

    #[test]
    fn generated_snapshots_have_trusted_self_loops(n in 1usize..=6, period in 1usize..=3, seed in any::<u64>()) {
        let params = ScheduleParams::new(n, period, 0.6, 0.2, seed);
        let schedule = generate_schedule(&params).unwrap();
        for g in schedule.snapshots() {
            for i in 0..n {
                prop_assert_eq!(g.label(i, i), Some(EdgeLabel::Trusted));
            }
        }
        prop_assert!(schedule.check_window_connectivity(period, true));
        prop_assert!(schedule.check_window_connectivity(period, false));
    }
}

#[test]
fn rows_of_long_products_agree() {
    // Positive entries bound every factor below, so rows of the product merge.
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let mats = prop::collection::vec(stochastic(5), 200).new_tree(&mut runner).unwrap().current();
    let p = transition_product(&mats, 0, 199).unwrap().matrix;
    for j in 0..5 {
        let col: Vec<f64> = (0..5).map(|i| p.get(i, j)).collect();
        let spread = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - col.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-12, "column {j} spread {spread}");
    }
}
