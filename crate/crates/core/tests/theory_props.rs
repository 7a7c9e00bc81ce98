use layerlock::numcore::{Matrix, Rng};
use layerlock::theory::*;

/// Attention matrix evaluated entry by entry with plain loops.
fn naive_attention(x: &Matrix, p: &AttnParams) -> Vec<Vec<f64>> {
    let (n, d) = x.shape();
    let dq = p.dq();
    let proj = |w: &Matrix, i: usize, k: usize| (0..d).map(|c| x.get(i, c) * w.get(c, k)).sum::<f64>();
    let fro: f64 = x.data().iter().map(|v| v * v).sum();
    let scale = (dq as f64).sqrt() * fro;
    (0..n)
        .map(|i| {
            let s: Vec<f64> = (0..n)
                .map(|j| (0..dq).map(|k| proj(p.query(), i, k) * proj(p.key(), j, k)).sum::<f64>() / scale)
                .collect();
            let top = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|v| (v - top).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        })
        .collect()
}

#[test]
fn two_token_layer_matches_hand_evaluation() {
    let x = Matrix::identity(2);
    let k = Matrix::column_vector(&[1.0, 0.0]).unwrap();
    let q = Matrix::column_vector(&[0.0, 1.0]).unwrap();
    let p = AttnParams::new(k, q).unwrap();
    // XQ = (0, 1)ᵀ, XK = (1, 0)ᵀ, scores = [[0, 0], [1, 0]], ‖X‖_F² = 2, √d_Q = 1.
    // Row 0 sees equal scores; row 1 sees (1/2, 0).
    let e = 0.5f64.exp();
    let m = [[0.5, 0.5], [e / (e + 1.0), 1.0 / (e + 1.0)]];
    let want = [[1.0 + m[0][0], m[0][1]], [m[1][0], 1.0 + m[1][1]]];
    let got = phi_layer(&x, &p).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!((got.get(i, j) - want[i][j]).abs() < 1e-15, "({i},{j}) {} vs {}", got.get(i, j), want[i][j]);
        }
    }
}

#[test]
fn layer_is_positively_homogeneous() {
    let mut rng = Rng::new(17, 0);
    for _ in 0..10 {
        let x = rng.normal_matrix(6, 5);
        let p = AttnParams::random_bounded(5, 3, 1.5, &mut rng);
        let base = phi_layer(&x, &p).unwrap();
        for c in [1e-3, 1.0, 3.7, 1e3] {
            let scaled = phi_layer(&x.scale(c), &p).unwrap();
            let err = scaled.sub(&base.scale(c)).unwrap().frobenius_norm() / (c * base.frobenius_norm());
            assert!(err < 1e-12, "c = {c}: relative error {err}");
        }
    }
}

#[test]
fn ones_direction_survives_a_thousand_layers() {
    let mut rng = Rng::new(23, 0);
    let stack = TheoryStack::random(8, 6, 3, 2.0, 13, &mut rng).unwrap();
    let w: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
    let mut x = Matrix::outer(&[1.0; 8], &w);
    for depth in 1..=1000 {
        let y = phi_layer(&x, &stack.layer_at(depth)).unwrap();
        x = y.scale(1.0 / y.frobenius_norm());
        let worst = column_deviations(&x).into_iter().fold(0.0, f64::max);
        assert!(worst < 1e-12, "depth {depth}: {worst}");
    }
}

#[test]
fn complement_contraction_stays_below_one() {
    let mut rng = Rng::new(31, 0);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let n = 2 + i % 7;
        let budget = [0.1, 0.5, 1.0, 2.0][i % 4];
        let x = rng.normal_matrix(n, 6);
        let p = AttnParams::random_bounded(6, 3, budget, &mut rng);
        let c = complement_contraction(&x, &p).unwrap();
        assert!((0.0..1.0).contains(&c), "instance {i}: {c}");
        worst = worst.max(c);
    }
    assert!(worst > 0.0);
}

#[test]
fn generic_doubling_ratio_matches_direct_evaluation() {
    let mut rng = Rng::new(41, 0);
    for _ in 0..20 {
        let x = rng.normal_matrix(5, 4);
        let p = AttnParams::random_bounded(4, 2, 3.0, &mut rng);
        let m = naive_attention(&x, &p);
        let probe = doubling_ratio_probe(&x, &p).unwrap();
        for col in 0..4 {
            let ones_x: f64 = (0..5).map(|i| x.get(i, col)).sum();
            let ones_mx: f64 = (0..5).map(|i| (0..5).map(|j| m[i][j] * x.get(j, col)).sum::<f64>()).sum();
            let want = (1.0 + ones_mx / ones_x).abs();
            let got = probe.ratios[col].unwrap();
            assert!((got - want).abs() < 1e-10 * want.max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn doubling_probe_flags_centered_columns() {
    let x = Matrix::from_rows(&[&[1.0, 2.0], &[-1.0, 3.0]]).unwrap();
    let p = AttnParams::xavier(2, 1, &mut Rng::new(3, 0));
    let probe = doubling_ratio_probe(&x, &p).unwrap();
    assert_eq!(probe.skipped, vec![0]);
    assert!(probe.ratios[0].is_none() && probe.ratios[1].is_some());
}

#[test]
fn securing_the_first_layer_collapses_small_budget_stacks() {
    for seed in 0..20 {
        let mut rng = Rng::new(seed, 1);
        let stack = TheoryStack::random(8, 16, 4, 0.1, 8, &mut rng).unwrap();
        let x0 = rng.normal_matrix(8, 16);
        let securing = Securing { index: 1, replacement: AttnParams::xavier(16, 4, &mut Rng::new(seed, 2)) };
        let opts = DeepOptions { tol: 1e-10, max_layers: 512 };
        let rep = deep_normalized_output(&x0, &stack, Some(&securing), &opts).unwrap();
        assert!(rep.max_deviation() < 1e-6, "seed {seed}: {}", rep.max_deviation());
        assert!(rep.deviation_per_column.iter().all(|d| (0.0..=2.0).contains(d)));
        assert!((0.0..=1.0).contains(&rep.sigma_ratio));
    }
}

#[test]
fn adversarial_input_never_aligns_under_its_own_layers() {
    let inst = adversarial_construction(8, 16, 4, 2.0).unwrap();
    let stack = TheoryStack::repeated(inst.params.clone(), 8, 2.0, 256).unwrap();
    let opts = DeepOptions { tol: 1e-10, max_layers: 256 };
    let rep = deep_normalized_output(&inst.x, &stack, None, &opts).unwrap();
    assert!(rep.min_deviation() >= 1.0, "{}", rep.min_deviation());
    assert!(rep.sigma_ratio >= 0.1);
}

#[test]
fn sweep_early_securing_collapses_every_seed() {
    let mut rng = Rng::new(5, 0);
    let stack = TheoryStack::random(8, 16, 4, 0.1, 128, &mut rng).unwrap();
    let x0 = rng.normal_matrix(8, 16);
    let seeds: Vec<u64> = (0..10).collect();
    let table = transition_sweep(&stack, &x0, &[0.05], &seeds, &SweepOptions::for_depth(128)).unwrap();
    assert_eq!(table.rows.len(), 10);
    assert_eq!(table.summary[0].secured_index, 7);
    assert!(table.summary[0].all_collapsed, "{:?}", table.summary[0]);
}

#[test]
fn sweep_with_original_layer_matches_unsecured_run() {
    let mut rng = Rng::new(6, 0);
    let stack = TheoryStack::random(6, 8, 2, 0.5, 32, &mut rng).unwrap();
    let x0 = rng.normal_matrix(6, 8);
    let mut opts = SweepOptions::for_depth(32);
    opts.deep.tol = 1e-300;
    opts.replacement = ReplacementKind::Original;
    let table = transition_sweep(&stack, &x0, &[0.25, 0.5, 1.0], &[1, 2], &opts).unwrap();
    let plain = deep_normalized_output(&x0, &stack, None, &opts.deep).unwrap();
    for row in &table.rows {
        assert_eq!(row.max_deviation, plain.max_deviation());
        assert_eq!(row.sigma_ratio, plain.sigma_ratio);
        assert_eq!(row.collapsed, plain.collapsed(COLLAPSE_TOL));
    }
}

#[test]
fn sweep_late_securing_of_adversarial_stack_does_not_collapse() {
    let inst = adversarial_construction(8, 16, 4, 2.0).unwrap();
    let stack = TheoryStack::repeated(inst.params.clone(), 8, 2.0, 64).unwrap();
    let seeds: Vec<u64> = (0..5).collect();
    let table = transition_sweep(&stack, &inst.x, &[0.95], &seeds, &SweepOptions::for_depth(64)).unwrap();
    assert_eq!(table.summary[0].collapse_fraction, 0.0);
}

#[test]
fn sweep_is_independent_of_worker_count() {
    let mut rng = Rng::new(8, 0);
    let stack = TheoryStack::random(4, 6, 2, 0.3, 16, &mut rng).unwrap();
    let x0 = rng.normal_matrix(4, 6);
    let mut opts = SweepOptions::for_depth(16);
    let a = transition_sweep(&stack, &x0, &[0.1, 0.6], &[3, 4, 5], &opts).unwrap();
    opts.jobs = 4;
    let b = transition_sweep(&stack, &x0, &[0.1, 0.6], &[3, 4, 5], &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn beta_estimate_grows_with_budget_and_repeats() {
    let opts = BetaOptions::default();
    let mut last = -1.0;
    for budget in [0.0, 0.5, 1.0, 2.0] {
        let est = estimate_beta(4, 8, 2, budget, &mut Rng::new(99, 0), &opts).unwrap();
        if budget == 0.0 {
            assert_eq!(est.beta, 0.0);
        }
        assert!((0.0..1.0).contains(&est.beta));
        assert!(est.beta >= last, "D = {budget}: {} < {last}", est.beta);
        assert!(est.params.max_operator_norm() <= budget * (1.0 + 1e-9) + 1e-15);
        last = est.beta;
    }
    let a = estimate_beta(4, 8, 2, 1.0, &mut Rng::new(7, 0), &opts).unwrap();
    let b = estimate_beta(4, 8, 2, 1.0, &mut Rng::new(7, 0), &opts).unwrap();
    assert!((a.beta - b.beta).abs() <= 1e-3);
}

#[test]
fn beta_certificate_is_a_realized_contraction() {
    let opts = BetaOptions { restarts: 4, ascent_steps: 30, fd_step: 1e-5 };
    let est = estimate_beta(5, 4, 2, 1.0, &mut Rng::new(2, 0), &opts).unwrap();
    let m = naive_attention(&est.x, &est.params);
    let v = &est.v;
    assert!(v.iter().sum::<f64>().abs() < 1e-10);
    assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-10);
    let mv: f64 = m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum::<f64>().sqrt();
    assert!(mv <= est.beta + 1e-9, "{mv} > {}", est.beta);
    assert!(est.beta - mv < 1e-6, "certified {} but vector only reaches {mv}", est.beta);
}

#[test]
fn alpha_star_formula() {
    assert_eq!(alpha_star(0.0).unwrap(), 1.0);
    assert!((alpha_star(0.5).unwrap() - (4.0f64 / 3.0).log2()).abs() < 1e-15);
    let near_one = alpha_star(1.0 - 1e-12).unwrap();
    assert!(near_one > 0.0 && near_one < 1e-11);
    assert!(alpha_star(1.0).is_err());
    assert!(alpha_star(-0.1).is_err());
    assert!(alpha_star(f64::NAN).is_err());
}
