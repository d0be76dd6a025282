use idxtrack::exposure::bs_slippage_rate;
use idxtrack::*;
use proptest::prelude::*;

fn heston() -> impl Strategy<Value = Model> {
    (0.0..0.1, 0.5..5.0, 0.01..0.1, 0.1..0.6, -0.9..0.9)
        .prop_map(|(r, k, th, nu, rho)| Model::heston(r, k, th, nu, rho).unwrap())
}

fn csqr() -> impl Strategy<Value = Model> {
    (0.0..0.1, 0.5..10.0, 0.5..10.0, any::<bool>(), 0.1..0.4, 0.1..0.6, 0.1..0.6, -0.9..0.9).prop_map(
        |(r, g, k, equal, th, s, nu, rho)| Model::csqr(r, g, if equal { g } else { k }, th, s, nu, rho).unwrap(),
    )
}

fn cir() -> impl Strategy<Value = Model> {
    (0.0..0.1, 1.0..25.0, 0.1..0.4, 0.1..0.6).prop_map(|(r, k, th, s)| Model::cir(r, k, th, s).unwrap())
}

fn bs() -> impl Strategy<Value = Model> {
    (0.0..0.1, 0.05..0.5).prop_map(|(r, s)| Model::bs(r, s).unwrap())
}

fn any_model_state() -> impl Strategy<Value = (Model, Vec<f64>)> {
    prop_oneof![
        (bs(), 10.0..100.0).prop_map(|(m, s)| (m, vec![s])),
        (cir(), 0.05..0.8).prop_map(|(m, s)| (m, vec![s])),
        (heston(), 20.0..200.0, 0.005..0.2).prop_map(|(m, s, y)| (m, vec![s, y])),
        (csqr(), 0.05..0.6, 0.05..0.6).prop_map(|(m, s, y)| (m, vec![s, y])),
    ]
}

fn contracts(model: &Model, tau: f64) -> Vec<Derivative> {
    match model.kind() {
        ModelKind::Bs => vec![Derivative::index_futures(tau), Derivative::call(50.0, tau + 0.1)],
        ModelKind::Cir => vec![Derivative::index_futures(tau)],
        _ => vec![Derivative::index_futures(tau), Derivative::factor_futures(1, tau)],
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn vol_matrix_triangular_and_scaling((model, m) in any_model_state(), c in 0.25..4.0_f64) {
        let base = drift_vol(&model, &m);
        for (i, row) in base.vol.iter().enumerate() {
            for &upper in &row[i + 1..] {
                prop_assert_eq!(upper, 0.0);
            }
        }
        let mut scaled_s = m.clone();
        scaled_s[0] *= c;
        let vs = drift_vol(&model, &scaled_s).vol;
        let index_power = match model.kind() {
            ModelKind::Bs | ModelKind::Heston => 1.0,
            ModelKind::Cir | ModelKind::Csqr => 0.5,
        };
        prop_assert!(close(vs[0][0], base.vol[0][0] * c.powf(index_power), 1e-13));
        if model.factors() == 1 {
            for (a, b) in vs[1].iter().zip(&base.vol[1]) {
                prop_assert!(close(*a, *b, 1e-13));
            }
            let mut scaled_y = m.clone();
            scaled_y[1] *= c;
            let vy = drift_vol(&model, &scaled_y).vol;
            for (a, b) in vy[1].iter().zip(&base.vol[1]) {
                prop_assert!(close(*a, b * c.sqrt(), 1e-13));
            }
        }
    }

    #[test]
    fn drift_vol_is_pure((model, m) in any_model_state()) {
        let a = drift_vol(&model, &m);
        let b = drift_vol(&model, &m);
        for (x, y) in a.drift.iter().zip(&b.drift) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.vol.iter().flatten().zip(b.vol.iter().flatten()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn null_relation_holds((model, m) in any_model_state(), tau in 0.02..1.0) {
        for spec in contracts(&model, tau) {
            let row = elasticities(&model, 0.0, &m, &spec).unwrap();
            prop_assert!(null_relation_residual(&model, &m, &row) <= 1e-10);
        }
    }

    #[test]
    fn specialized_slippage_matches_generic(
        (model, m) in any_model_state(),
        beta in -3.0..3.0,
        eta in -2.0..2.0,
    ) {
        let etas = vec![eta; model.factors()];
        let a = slippage_generic(&model, &m, beta, &etas);
        let b = slippage_rate(&model, &m, beta, &etas);
        prop_assert!(close(a, b, 1e-12), "{} vs {}", a, b);
    }

    #[test]
    fn solved_weights_deliver_targets(
        (model, m) in any_model_state(),
        beta in -3.0..3.0,
        eta in -2.0..2.0,
        t1 in 0.05..0.5,
        gap in 0.05..0.5,
    ) {
        let specs: Vec<Derivative> = match model.kind() {
            ModelKind::Csqr => vec![Derivative::index_futures(t1), Derivative::index_futures(t1 + gap)],
            _ => contracts(&model, t1),
        };
        let rows: Vec<_> = specs.iter().map(|s| elasticities(&model, 0.0, &m, s).unwrap()).collect();
        let etas = vec![eta; model.factors()];
        let target = Target::at(&model, &m, beta, etas.clone()).unwrap();
        let sol = solve_weights(&rows, &target).unwrap();
        let mut achieved = vec![0.0; 1 + etas.len()];
        for (row, w) in rows.iter().zip(&sol.weights) {
            for (a, e) in achieved.iter_mut().zip(row.exposures()) {
                *a += w * e;
            }
        }
        for (a, want) in achieved.iter().zip(target.exposures()) {
            prop_assert!(close(*a, want, 1e-10));
        }
    }

    #[test]
    fn heston_closed_form_equals_solve(
        model in heston(),
        s in 20.0..200.0,
        y in 0.005..0.2,
        beta in -3.0..3.0,
        eta in -2.0..2.0,
        tf in 0.05..1.0,
        ty in 0.05..1.0,
    ) {
        let m = [s, y];
        let closed = strategy_heston_futures(&model, 0.0, &m, tf, ty, beta, eta).unwrap();
        let rows: Vec<_> = [Derivative::index_futures(tf), Derivative::factor_futures(1, ty)]
            .iter()
            .map(|d| elasticities(&model, 0.0, &m, d).unwrap())
            .collect();
        let sol = solve_weights(&rows, &Target::at(&model, &m, beta, vec![eta]).unwrap()).unwrap();
        for (a, b) in closed.iter().zip(&sol.weights) {
            prop_assert!(close(*a, *b, 1e-10));
        }
    }

    #[test]
    fn csqr_closed_form_equals_solve(
        model in csqr(),
        s in 0.05..0.6,
        y in 0.05..0.6,
        beta in -3.0..3.0,
        eta in -2.0..2.0,
        t1 in 0.05..0.5,
        gap in 0.05..0.5,
    ) {
        let m = [s, y];
        let t2 = t1 + gap;
        let closed = strategy_csqr_two_futures(&model, 0.0, &m, t1, t2, beta, eta).unwrap();
        let rows: Vec<_> = [t1, t2]
            .iter()
            .map(|&t| elasticities(&model, 0.0, &m, &Derivative::index_futures(t)).unwrap())
            .collect();
        let sol = solve_weights(&rows, &Target::at(&model, &m, beta, vec![eta]).unwrap()).unwrap();
        for (a, b) in closed.iter().zip(&sol.weights) {
            prop_assert!(close(*a, *b, 1e-10));
        }
    }

    #[test]
    fn bs_slippage_sign_law(r in 0.005..0.1, sigma in 0.05..0.5, beta in -10.0..10.0) {
        let low = -2.0 * r / (sigma * sigma);
        let z = bs_slippage_rate(r, sigma, beta);
        let margin = 1e-9;
        if beta < low - margin || beta > 1.0 + margin {
            prop_assert!(z < 0.0);
        } else if beta > low + margin && beta < 1.0 - margin {
            prop_assert!(z > 0.0);
        }
    }

    #[test]
    fn cir_slippage_nonpositive_for_beta_above_one(model in cir(), s in 0.05..0.8, beta in 1.0..4.0) {
        let ModelParams::Cir { kappa, theta, .. } = model.params else { unreachable!() };
        let z = slippage_rate(&model, &[s], beta, &[]);
        let decay = z - (model.r - beta * kappa * (theta / s - 1.0));
        prop_assert!(decay <= 1e-15);
    }

    #[test]
    fn wealth_scale_invariance(seed in 0u64..1000, c in 0.1..10.0, beta in -2.0..3.0) {
        let model = Model::bs(0.05, 0.2).unwrap();
        let grid = make_grid(0.0, 0.25, 50).unwrap();
        let path = simulate_path(&model, &[50.0], grid, seed, 0, SimOptions::default()).unwrap();
        let call = [Derivative::call(50.0, 0.5)];
        let a = evolve_portfolio(&path, &model, &call, beta, &[], 100.0).unwrap();
        let b = evolve_portfolio(&path, &model, &call, beta, &[], 100.0 * c).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!(close(x * c, *y, 1e-12));
        }
        for (w, v) in a.weights.iter().zip(&b.weights) {
            prop_assert!(close(w[0], v[0], 1e-12));
        }
    }

    #[test]
    fn futures_price_positive_and_terminal((model, m) in any_model_state(), tau in 0.0..2.0) {
        for spec in contracts(&model, tau) {
            if spec.is_futures() {
                let f = price(&model, 0.0, &m, &spec).unwrap();
                prop_assert!(f > 0.0);
                let at_expiry = price(&model, spec.maturity, &m, &spec).unwrap();
                let underlying = match spec.kind {
                    ContractKind::FuturesOnFactor(i) => m[i],
                    _ => m[0],
                };
                prop_assert!(close(at_expiry, underlying, 1e-14));
            }
        }
    }
}

#[test]
fn heston_two_index_futures_singular_for_nonzero_eta() {
    let model = Model::heston(0.03, 2.0, 0.04, 0.3, -0.7).unwrap();
    let m = [100.0, 0.05];
    let rows: Vec<_> = [0.5, 1.0]
        .iter()
        .map(|&t| elasticities(&model, 0.0, &m, &Derivative::index_futures(t)).unwrap())
        .collect();
    let err = solve_weights(&rows, &Target::at(&model, &m, 1.0, vec![0.5]).unwrap()).unwrap_err();
    assert!(matches!(err, Error::SingularSystem { .. }));
    let ok = solve_weights(&rows, &Target::at(&model, &m, 1.0, vec![0.0]).unwrap()).unwrap();
    assert!(ok.warning.is_some());
}

#[test]
fn f32_smoke() {
    let model = ModelSpec::<f32>::bs(0.05, 0.2).unwrap();
    let call = DerivativeSpec::<f32>::call(50.0, 0.5);
    let p32 = price(&model, 0.0, &[50.0], &call).unwrap();
    let p64 = price(&Model::bs(0.05, 0.2).unwrap(), 0.0, &[50.0], &Derivative::call(50.0, 0.5)).unwrap();
    assert!((p32 as f64 - p64).abs() < 1e-4);

    let cir = ModelSpec::<f32>::cir(0.0, 20.0, 0.2, 0.4).unwrap();
    let grid = make_grid::<f32>(0.0, 1.0 / 12.0, 210).unwrap();
    let path = simulate_path(&cir, &[0.2], grid, 5, 0, SimOptions::default()).unwrap();
    let futures = [DerivativeSpec::<f32>::index_futures(1.0 / 12.0)];
    let x = evolve_portfolio(&path, &cir, &futures, 1.0, &[], 100.0).unwrap();
    assert!(verify_prop2(&x, &path, 1.0, &[]) < 0.02);
    assert!(x.values.iter().all(|v| v.is_finite() && *v > 0.0));
}
