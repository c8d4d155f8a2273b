use modecool::cooling::*;
use modecool::exchange::MomentState;
use modecool::presets;
use nalgebra::Matrix4;
use proptest::prelude::*;

fn eigen_rates(g_khz: f64, kappa_per_s: f64) -> Vec<f64> {
    let wcm = ModeRates::heating_only(0.0);
    let scm = ModeRates::cooled(0.0, 0.0, 0.0);
    let params = ContinuousCoolingParams {
        kappa0_per_s: kappa_per_s,
        linewidth_khz: None,
        bessel: None,
    };
    let (a, _) = continuous_dynamics(g_khz, &wcm, &scm, &params).linear_system();
    let a = Matrix4::from_fn(|i, j| a[i][j]);
    let mut rates: Vec<f64> = a.complex_eigenvalues().iter().map(|z| -z.re * 1e6).collect();
    rates.sort_by(|x, y| x.partial_cmp(y).unwrap());
    rates
}

#[test]
fn weak_coupling_rate_is_impedance_limited() {
    let kappa = 2.0e4;
    let g = 0.05;
    let g_ang = std::f64::consts::TAU * g * 1e3;
    let slowest = eigen_rates(g, kappa)[0];
    let expect = 4.0 * g_ang * g_ang / kappa;
    assert!((slowest / expect - 1.0).abs() < 0.02, "{slowest} vs {expect}");
}

#[test]
fn strong_coupling_rate_is_half_kappa() {
    let kappa = 1.0e3;
    let rates = eigen_rates(5.0, kappa);
    // All modes of the dressed system decay at κ/2 (population) or κ/2 (coherence).
    assert!((rates[0] / (kappa / 2.0) - 1.0).abs() < 1e-3, "{rates:?}");
    let traj = continuous_cool(
        &MomentState::thermal(4.0, 4.0),
        5.0,
        &ModeRates::heating_only(0.0),
        &ModeRates::cooled(0.0, 0.0, 0.0),
        &ContinuousCoolingParams {
            kappa0_per_s: kappa,
            linewidth_khz: None,
            bessel: None,
        },
        4000.0,
        1,
    )
    .unwrap();
    let end = traj.last().unwrap().1;
    let expect = 8.0 * (-kappa / 2.0 * 4e-3f64).exp();
    assert!((end.total() / expect - 1.0).abs() < 0.01);
}

#[test]
fn uncoupled_modes_heat_and_relax() {
    let wcm = ModeRates::heating_only(40.0);
    let scm = ModeRates::cooled(30.0, 0.0, 0.05);
    let params = ContinuousCoolingParams {
        kappa0_per_s: 2000.0,
        linewidth_khz: Some(3.0),
        bessel: None,
    };
    let traj = continuous_cool(&MomentState::thermal(1.0, 3.0), 0.0, &wcm, &scm, &params, 10_000.0, 4)
        .unwrap();
    let end = traj.last().unwrap().1;
    assert!((end.nbar_w - 1.4).abs() < 1e-9);
    let ss = 0.05 + 30.0 / 2000.0;
    let expect = ss + (3.0 - ss) * (-20.0f64).exp();
    assert!((end.nbar_s - expect).abs() < 1e-9);
    assert!(continuous_steady_state(0.0, &wcm, &scm, &params).is_err());
}

#[test]
fn continuous_steady_state_is_long_time_limit() {
    let wcm = ModeRates::heating_only(5.0);
    let scm = ModeRates::cooled(20.0, 0.0, 0.02);
    let params = ContinuousCoolingParams {
        kappa0_per_s: 5e3,
        linewidth_khz: Some(1.0),
        bessel: None,
    };
    let ss = continuous_steady_state(0.3, &wcm, &scm, &params).unwrap();
    let traj = continuous_cool(&MomentState::thermal(2.0, 2.0), 0.3, &wcm, &scm, &params, 200_000.0, 1)
        .unwrap();
    let end = traj.last().unwrap().1;
    assert!((end.nbar_w - ss.nbar_w).abs() < 1e-8);
    assert!((end.nbar_s - ss.nbar_s).abs() < 1e-8);
}

#[test]
fn pulsed_fixed_point_is_long_run_limit() {
    let modes = presets::be_mg_modes();
    let cycle = presets::be_mg_cycle();
    let ss = pulsed_steady_state(&cycle, &modes).unwrap();
    let run = run_schedule(&cycle.repeated(200), &[8.0, 8.0, 8.0], &modes).unwrap();
    for (a, b) in run.final_nbar().iter().zip(&ss) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn be_mg_steady_state_ordering() {
    let ss = pulsed_steady_state(&presets::be_mg_cycle(), &presets::be_mg_modes()).unwrap();
    let (xo, yo, zo) = (ss[0], ss[1], ss[2]);
    assert!(yo > zo && zo > xo, "{ss:?}");
    // zo sits above its own sideband-cooling steady state.
    assert!(zo > csbc_steady_state(&presets::be_mg_modes().rates[2]).unwrap());
}

#[test]
fn floors_reached_without_heating() {
    let modes = ModeSet::new(vec![
        ("xo", ModeRates::heating_only(0.0)),
        ("yo", ModeRates::heating_only(0.0)),
        ("zo", ModeRates::cooled(0.0, 1.1e4, 0.02)),
    ]);
    let mut cycle = presets::be_mg_cycle();
    for e in &mut cycle.elements {
        if let ScheduleElement::Swap { fidelity, .. } = e {
            *fidelity = 1.0;
        }
    }
    let ss = pulsed_steady_state(&cycle, &modes).unwrap();
    for v in &ss {
        assert!((v - 0.02).abs() < 1e-9, "{ss:?}");
    }
    let run = run_schedule(&cycle.repeated(60), &[5.0, 5.0, 5.0], &modes).unwrap();
    for v in run.final_nbar() {
        assert!((v - 0.02).abs() < 1e-9);
    }
}

#[test]
fn undamped_cycle_has_no_steady_state() {
    let modes = ModeSet::new(vec![
        ("a", ModeRates::heating_only(10.0)),
        ("b", ModeRates::cooled(10.0, 1e4, 0.0)),
    ]);
    let cycle = Schedule::new(vec![ScheduleElement::Csbc {
        mode: "b".into(),
        duration_us: 100.0,
        order: 1,
    }]);
    assert!(matches!(
        pulsed_steady_state(&cycle, &modes),
        Err(CoolingError::NoSteadyState(_))
    ));
}

#[test]
fn second_order_pulse_uses_its_own_rate() {
    let mut r = ModeRates::cooled(0.0, 1e3, 0.0);
    r.second_order_rate_per_s = Some(1e4);
    r.second_order_floor = Some(0.5);
    let modes = ModeSet { labels: vec!["ip".into()], rates: vec![r] };
    let pulse = |order| Schedule::new(vec![ScheduleElement::Csbc { mode: "ip".into(), duration_us: 100.0, order }]);
    let first = run_schedule(&pulse(1), &[3.0], &modes).unwrap().final_nbar()[0];
    let second = run_schedule(&pulse(2), &[3.0], &modes).unwrap().final_nbar()[0];
    assert!((first - 3.0 * (-0.1f64).exp()).abs() < 1e-12);
    assert!((second - (0.5 + 2.5 * (-1.0f64).exp())).abs() < 1e-12);
}

#[test]
fn trap_ramp_adds_nothing() {
    let modes = presets::be_mg_modes();
    let s = Schedule::new(vec![ScheduleElement::TrapRamp { label: "low rf".into() }]);
    let t = run_schedule(&s, &[0.1, 0.2, 0.3], &modes).unwrap();
    assert_eq!(t.final_nbar(), &[0.1, 0.2, 0.3]);
}

/// Final WCM occupation after 20 ms of simultaneous cooling.
fn final_wcm(r0_khz: f64, beta: f64) -> f64 {
    let params = ContinuousCoolingParams {
        kappa0_per_s: 5e3,
        linewidth_khz: Some(1.0),
        bessel: Some(BesselParams {
            dk_per_m: BesselParams::MG_RAMAN_DK_PER_M,
            beta_nm_per_khz: beta,
        }),
    };
    let traj = continuous_cool(
        &MomentState::thermal(5.0, 5.0),
        r0_khz / 2.0,
        &ModeRates::heating_only(5.0),
        &ModeRates::cooled(20.0, 0.0, 0.02),
        &params,
        20_000.0,
        1,
    )
    .unwrap();
    traj.last().unwrap().1.nbar_w
}

#[test]
fn coupling_rate_sweep_has_interior_optimum() {
    let grid: Vec<f64> = (1..=30).map(|i| 0.05 * i as f64).collect();
    let mut optima = vec![];
    for beta in [101.0, 12.6] {
        let vals: Vec<f64> = grid.iter().map(|&r| final_wcm(r, beta)).collect();
        let (k, _) = vals
            .iter()
            .enumerate()
            .fold((0, f64::MAX), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
        assert!(k > 0 && k + 1 < grid.len(), "optimum at the edge for β = {beta}");
        optima.push(grid[k]);
    }
    assert!(optima[1] > optima[0], "{optima:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cycle_converges_monotonically_from_above(offset in 0.01f64..5.0, cycles in 1u32..14) {
        let modes = presets::be_mg_modes();
        let cycle = presets::be_mg_cycle();
        let ss = pulsed_steady_state(&cycle, &modes).unwrap();
        let start: Vec<f64> = ss.iter().map(|v| v + offset).collect();
        let a = run_schedule(&cycle.clone().repeated(cycles), &start, &modes).unwrap();
        let b = run_schedule(&cycle.repeated(cycles + 1), &start, &modes).unwrap();
        for i in 0..3 {
            prop_assert!(b.final_nbar()[i] <= a.final_nbar()[i] + 1e-12);
            prop_assert!(b.final_nbar()[i] >= ss[i] - 1e-12);
        }
    }

    #[test]
    fn csbc_never_below_floor(n0 in 0.02f64..10.0, heat in 0.0f64..500.0, t in 1.0f64..1000.0) {
        let modes = ModeSet::new(vec![("zo", ModeRates::cooled(heat, 1.1e4, 0.02))]);
        let s = Schedule::new(vec![ScheduleElement::Csbc { mode: "zo".into(), duration_us: t, order: 1 }]);
        let n = run_schedule(&s, &[n0], &modes).unwrap().final_nbar()[0];
        prop_assert!(n >= 0.02);
    }

    #[test]
    fn delay_heats_linearly(n0 in 0.0f64..3.0, heat in 0.0f64..500.0, t in 1.0f64..1e5) {
        let modes = ModeSet::new(vec![("m", ModeRates::heating_only(heat))]);
        let s = Schedule::new(vec![ScheduleElement::Delay { duration_us: t }]);
        let n = run_schedule(&s, &[n0], &modes).unwrap().final_nbar()[0];
        prop_assert!((n - (n0 + heat * t * 1e-6)).abs() <= 1e-12 * (1.0 + n));
    }
}
