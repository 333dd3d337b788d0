use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use si_core::engine::{combine, fit_weights, run_si};
use si_core::svt::{svt, DenoisedBlock, SvtConfig};
use si_testkit::factor::FactorModel;
use si_testkit::{oracle, rng};

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1.0f64..1.0, r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
    })
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn svt_is_idempotent(m in matrix(8, 8), k in 1usize..8) {
        let once = svt(&m, &SvtConfig::fixed(k)).unwrap().matrix;
        let twice = svt(&once, &SvtConfig::fixed(k)).unwrap().matrix;
        prop_assert!(frob(&once, &twice) < 1e-10);
    }

    #[test]
    fn svt_matches_jacobi_oracle(m in matrix(4, 4), k in 1usize..4) {
        let got = svt(&m, &SvtConfig::fixed(k)).unwrap().matrix;
        let expected = oracle::truncated_svd(&oracle::to_rows(&m), k);
        prop_assert!(oracle::frobenius_diff(&expected, &got) < 1e-8);
    }

    #[test]
    fn reconstruction_error_nonincreasing_in_rank(m in matrix(6, 6)) {
        let full = m.nrows().min(m.ncols());
        let errors: Vec<f64> = (1..=full)
            .map(|k| frob(&m, &svt(&m, &SvtConfig::fixed(k)).unwrap().matrix))
            .collect();
        for pair in errors.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12);
        }
        prop_assert!(errors[full - 1] < 1e-12);
    }

    #[test]
    fn exact_representation_has_zero_residual(
        m in matrix(6, 10),
        coeffs in prop::collection::vec(-2.0f64..2.0, 6),
        k in 1usize..6,
    ) {
        let block = svt(&m, &SvtConfig::fixed(k)).unwrap();
        let target = combine(&coeffs[..block.nrows()], &block.matrix).unwrap();
        let fit = fit_weights(&target, &block).unwrap();
        prop_assert!(fit.pre_fit_rmse < 1e-8, "rmse {}", fit.pre_fit_rmse);
    }

    #[test]
    fn weights_are_scale_invariant(m in matrix(6, 10), seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let y: Vec<f64> = (0..m.ncols()).map(|_| r.random_range(-1.0..1.0)).collect();
        let w = fit_weights(&y, &DenoisedBlock::identity(m.clone()).unwrap()).unwrap().weights;
        let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
        let ws = fit_weights(&ys, &DenoisedBlock::identity(&m * c).unwrap()).unwrap().weights;
        let scale = oracle::norm(&w).max(1.0);
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn prediction_is_linear_in_weights(
        post in matrix(6, 8),
        seed in any::<u64>(),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let mut r = rng(seed);
        let n = post.nrows();
        let l: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mu: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let mixed: Vec<f64> = l.iter().zip(&mu).map(|(a, b)| alpha * a + beta * b).collect();
        let pl = combine(&l, &post).unwrap();
        let pm = combine(&mu, &post).unwrap();
        let got = combine(&mixed, &post).unwrap();
        for t in 0..got.len() {
            prop_assert!((got[t] - (alpha * pl[t] + beta * pm[t])).abs() < 1e-8);
        }
    }
}

/// Random rank-r candidates never beat the truncated SVD.
#[test]
fn svt_beats_random_low_rank_candidates() {
    let mut r = rng(5);
    for _ in 0..20 {
        let (rows, cols) = (r.random_range(2..=4), r.random_range(2..=4));
        let m = DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0));
        let k = r.random_range(1..rows.min(cols));
        let best = frob(&m, &svt(&m, &SvtConfig::fixed(k)).unwrap().matrix);
        for _ in 0..1000 {
            let a = DMatrix::from_fn(rows, k, |_, _| r.random_range(-1.5..1.5));
            let b = DMatrix::from_fn(k, cols, |_, _| r.random_range(-1.5..1.5));
            assert!(best <= frob(&m, &(a * b)) + 1e-12);
        }
    }
}

#[test]
fn donor_permutation_permutes_weights() {
    use rand::seq::SliceRandom;
    let mut r = rng(9);
    for _ in 0..100 {
        let n = r.random_range(2..=7);
        let t0 = r.random_range(2..=9);
        let pre = DMatrix::from_fn(n, t0, |_, _| r.random_range(-1.0..1.0));
        let post = DMatrix::from_fn(n, 4, |_, _| r.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..t0).map(|_| r.random_range(-1.0..1.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let w = fit_weights(&y, &DenoisedBlock::identity(pre.clone()).unwrap()).unwrap().weights;
        let wp = fit_weights(&y, &DenoisedBlock::identity(pre.select_rows(perm.iter())).unwrap())
            .unwrap()
            .weights;
        for (i, &p) in perm.iter().enumerate() {
            assert!((wp[i] - w[p]).abs() < 1e-8);
        }
        let a = combine(&w, &post).unwrap();
        let b = combine(&wp, &post.select_rows(perm.iter())).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8));
    }
}

#[test]
fn full_engine_is_scale_equivariant() {
    let mut r = rng(21);
    for _ in 0..25 {
        let model = FactorModel::uniform(&mut r, 12, 16, 10, 2, 2);
        let panel = model.panel(0.05, &mut r);
        let c = r.random_range(0.1..10.0);
        let scaled = si_core::panel::AlignedPanel::from_rows(
            (0..panel.n_units())
                .map(|i| si_core::panel::AlignedRow {
                    unit_id: panel.unit_ids()[i].clone(),
                    day0_index: panel.t0_index(),
                    day0_date: panel.day0_dates()[i],
                    values: panel.matrix().row(i).iter().map(|v| v * c).collect(),
                    observed: vec![true; panel.n_days()],
                })
                .collect(),
            &model.spec(),
        )
        .unwrap();
        let a = run_si(&panel, &model.partition(), &SvtConfig::default()).unwrap();
        let b = run_si(&scaled, &model.partition(), &SvtConfig::default()).unwrap();
        assert_eq!(a.entries.len(), b.entries.len());
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!((&x.unit_id, &x.label), (&y.unit_id, &y.label));
            let scale = x.model.weights.iter().fold(1.0f64, |m, w| m.max(w.abs()));
            for (wx, wy) in x.model.weights.iter().zip(&y.model.weights) {
                assert!((wx - wy).abs() <= 1e-8 * scale);
            }
            for (px, py) in x.trajectory.iter().zip(&y.trajectory) {
                assert!((px * c - py).abs() <= 1e-8 * py.abs().max(1.0));
            }
        }
    }
}

#[test]
fn noiseless_factor_model_is_recovered() {
    let model = FactorModel::uniform(&mut rng(3), 24, 40, 25, 3, 3);
    let panel = model.panel(0.0, &mut rng(0));
    let cf = run_si(&panel, &model.partition(), &SvtConfig::fixed(3)).unwrap();
    assert!(cf.failures.is_empty());
    for n in 0..model.n_units() {
        for d in 0..model.n_interventions() {
            let entry = cf.entry(&FactorModel::unit(n), &FactorModel::label(d)).unwrap();
            for (p, t) in entry.trajectory.iter().zip(model.truth(d, n)) {
                assert!((p - t).abs() / t < 1e-6);
            }
        }
    }
}

#[test]
fn run_is_deterministic() {
    let model = FactorModel::uniform(&mut rng(4), 15, 20, 12, 3, 2);
    let panel = model.panel(0.02, &mut rng(1));
    let a = run_si(&panel, &model.partition(), &SvtConfig::default()).unwrap();
    let b = run_si(&panel, &model.partition(), &SvtConfig::default()).unwrap();
    assert_eq!(a, b);
}
