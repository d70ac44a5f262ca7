use std::f64::consts::PI;

use nmlz::analytic::{self, LzPairParams, SolvableN4Params, SolvableN6Params};
use nmlz::bdg::{self, DissociationSystem};
use nmlz::integrability::{Deformation, TwoTimeFamily};
use nmlz::propagator::{self, PropagationSettings, TransitionTable};
use nmlz::semiclassic::{self, Hs4Params, Regime};
use nmlz::{adiabatic, eigen, ComplexMatrix, Hermiticity, NmlzModel, C64};
use proptest::prelude::*;

fn quick() -> PropagationSettings {
    PropagationSettings {
        estimate_convergence: false,
        ..Default::default()
    }
}

fn p_tilde_log(model: &NmlzModel, from: usize, s: &PropagationSettings) -> Vec<f64> {
    let c = propagator::propagate_column(model, from, s).unwrap();
    c.amplitudes.iter().map(|a| 2.0 * (a.norm().ln() + c.log_offset)).collect()
}

/// Random model: distinct slopes, complex couplings on every pair.
fn model_strategy(flag: Hermiticity, max_n: usize) -> impl Strategy<Value = NmlzModel> {
    (2..=max_n)
        .prop_flat_map(move |n| {
            (
                prop::collection::vec(-2.0..2.0f64, n),
                prop::collection::vec(-1.0..1.0f64, n),
                prop::collection::vec((0.0..0.6f64, 0.0..2.0 * PI), n * (n - 1) / 2),
            )
        })
        .prop_filter("slopes must be distinct", |(b, _, _)| {
            let mut s = b.clone();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|w| w[1] - w[0] > 0.1)
        })
        .prop_map(move |(b, e, g)| {
            let n = b.len();
            let mut upper = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    upper.push((i, j, C64::from_polar(g[k].0, g[k].1)));
                    k += 1;
                }
            }
            NmlzModel::from_upper(b, e, &upper, flag).unwrap()
        })
}

/// Largest change of the scaled column-1 probabilities under a static shift.
/// The shift is exact at any horizon, so a shorter one with a tighter
/// tolerance keeps the integrator's global error well below the bound.
fn static_shift_gap(m: &NmlzModel, c: f64) -> f64 {
    let s = PropagationSettings {
        rel_tol: 1e-12,
        abs_tol: 1e-12,
        ..quick()
    }
    .with_horizon(0.25 * propagator::default_horizon(m));
    let a = p_tilde_log(m, 0, &s);
    let b = p_tilde_log(&m.with_static_shift(c), 0, &s);
    let top = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    a.iter()
        .zip(&b)
        .map(|(x, y)| ((x - top).exp() - (y - top).exp()).abs())
        .fold(0.0, f64::max)
}

#[test]
fn static_shift_with_a_narrow_crossing_pair() {
    let m = NmlzModel::from_upper(
        vec![0.0, -0.8568850771526649, -0.1366336715152475, -0.2370875076725367],
        vec![0.0, 0.0, 0.945291620190619, 0.0],
        &[(0, 3, C64::new(0.331786, 0.0)), (2, 3, C64::new(0.491219, 0.0))],
        Hermiticity::AntiHermitian,
    )
    .unwrap();
    for c in [-0.18943179461123205, 1e-14, 2.5] {
        let gap = static_shift_gap(&m, c);
        assert!(gap < 1e-10, "c = {c}: {gap:e}");
    }
}

fn hs4_strategy() -> impl Strategy<Value = Hs4Params> {
    (0.3..3.0f64, 0.2..3.0f64, 0.2..3.0f64, 0.2..3.0f64)
        .prop_map(|(b, e1, e2, g)| Hs4Params { b, e1, e2, g })
        .prop_filter("stay off the critical point", |p| (p.r() - 1.0).abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn anti_hermitian_trace_is_real(m in model_strategy(Hermiticity::AntiHermitian, 6), t in -20.0..20.0f64) {
        let tr = m.hamiltonian_at(t).trace();
        prop_assert!(tr.im.abs() < 1e-14);
    }

    #[test]
    fn hermitian_spectra_are_real(m in model_strategy(Hermiticity::Hermitian, 6), t in -20.0..20.0f64) {
        for z in eigen::eigenvalues(&m.hamiltonian_at(t)).unwrap() {
            prop_assert!(z.im.abs() < 1e-9, "{z}");
        }
    }

    #[test]
    fn two_level_spectrum_closed_form(g in 0.0..2.0f64, phase in 0.0..2.0 * PI, v in 0.1..4.0f64, t in -10.0..10.0f64) {
        let m = analytic::two_level_model(C64::from_polar(g, phase), v, Hermiticity::AntiHermitian).unwrap();
        let ev = eigen::eigenvalues(&m.hamiltonian_at(t)).unwrap();
        // diagonal -+ v t / 2
        let exact = C64::new(0.25 * v * v * t * t - g * g, 0.0).sqrt();
        prop_assert!((ev[0] + ev[1]).norm() < 1e-10 * (1.0 + exact.norm()));
        let hit = ev.iter().map(|z| (z - exact).norm().min((z + exact).norm())).fold(0.0, f64::max);
        prop_assert!(hit < 1e-10 * (1.0 + exact.norm()), "{ev:?} vs {exact}");
    }

    #[test]
    fn companion_matrix_eigenvalues_are_the_roots(roots in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 2..=8)) {
        let roots: Vec<C64> = roots.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        let n = roots.len();
        // coefficients of prod (x - r_k), highest first
        let mut c = vec![C64::new(1.0, 0.0)];
        for r in &roots {
            let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
            for (k, a) in c.iter().enumerate() {
                next[k] += a;
                next[k + 1] -= a * r;
            }
            c = next;
        }
        let mut m = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            m[(0, k)] = -c[k + 1];
            if k + 1 < n {
                m[(k + 1, k)] = C64::new(1.0, 0.0);
            }
        }
        let ev = eigen::eigenvalues(&m).unwrap();
        // clustered roots split like eps^(1/k); compare via the polynomial instead
        for z in &ev {
            let val: C64 = roots.iter().map(|r| z - r).product();
            let scale: f64 = roots.iter().map(|r| z.norm() + r.norm()).product();
            prop_assert!(val.norm() < 1e-9 * scale.max(1.0), "{z}");
        }
        let sum_ev: C64 = ev.iter().sum();
        let sum_roots: C64 = roots.iter().sum();
        prop_assert!((sum_ev - sum_roots).norm() < 1e-9 * (1.0 + sum_roots.norm()));
    }

    #[test]
    fn normalized_columns_sum_to_one(logs in prop::collection::vec(prop::collection::vec(-50.0..900.0f64, 4), 4)) {
        let t = TransitionTable::from_log(logs).unwrap();
        for from in 0..4 {
            let s: f64 = (0..4).map(|to| t.normalized()[to][from]).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!((0..4).all(|to| t.normalized()[to][from] >= 0.0));
        }
    }

    #[test]
    fn crossing_parameter_identities(x in 0.0..40.0f64) {
        let p = LzPairParams::from_exponent(x);
        prop_assert!((p.p_tilde * p.p - 1.0).abs() < 1e-14);
        prop_assert!((p.p_tilde - p.q_tilde - 1.0).abs() < 1e-14 * p.p_tilde);
        prop_assert!((p.p + p.q - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hermitian_be_is_the_product_of_survival_factors(m in model_strategy(Hermiticity::Hermitian, 6)) {
        let b = m.slopes();
        let top = (0..m.dim()).max_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap();
        let ln_s = analytic::modified_be_diagonal(&m, top).unwrap();
        let half_log_p: f64 = (0..m.dim())
            .filter(|&k| k != top)
            .map(|k| 0.5 * LzPairParams::for_pair(&m, top, k).unwrap().log_hermitian().0)
            .sum();
        prop_assert!((ln_s - half_log_p).abs() < 1e-12 * (1.0 + ln_s.abs()));
    }

    #[test]
    fn half_circle_equals_be_formula(m in model_strategy(Hermiticity::AntiHermitian, 6)) {
        let b = m.slopes();
        for n in [
            (0..m.dim()).max_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap(),
            (0..m.dim()).min_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap(),
        ] {
            let contour = adiabatic::semicircle_phase(&m, n, 1e4).unwrap().re;
            let formula = analytic::modified_be_diagonal(&m, n).unwrap();
            prop_assert!((contour - formula).abs() < 1e-12 * (1.0 + formula.abs()));
        }
    }

    #[test]
    fn signature_residual_is_below_tolerance(col in prop::collection::vec(0.0..5.0f64, 2..6), tol in 1e-9..1e-1f64) {
        if let Some(sig) = analytic::conservation_signature(&col, 0, tol) {
            let sum: f64 = col.iter().zip(&sig.signs).map(|(p, &s)| f64::from(s) * p).sum();
            prop_assert!((sum - 1.0).abs() < tol);
            prop_assert_eq!(sig.signs[0], 1);
        }
    }

    #[test]
    fn model_json_round_trip(m in model_strategy(Hermiticity::AntiHermitian, 8)) {
        let back = NmlzModel::from_json(&m.to_json()).unwrap();
        prop_assert_eq!(back.slopes(), m.slopes());
        prop_assert_eq!(back.statics(), m.statics());
        prop_assert_eq!(back.coupling().as_slice(), m.coupling().as_slice());
        prop_assert_eq!(back.hermiticity(), m.hermiticity());
    }

    #[test]
    fn branch_point_regimes(p in hs4_strategy()) {
        let (t1, t2) = semiclassic::branch_points(&p).unwrap();
        prop_assert!(t1.im > 0.0 && t2.im > 0.0);
        match p.regime() {
            Regime::SubCritical => prop_assert!(t1.re.abs() < 1e-8 && t2.re.abs() < 1e-8),
            Regime::SuperCritical => {
                prop_assert!(t1.re.abs() > 1e-8);
                prop_assert!((t1.im - t2.im).abs() < 1e-8);
            }
            Regime::Critical => unreachable!(),
        }
    }

    #[test]
    fn gap_integral_is_path_independent(p in hs4_strategy(), kink in 0.2..0.8f64, lift in 0.05..0.3f64) {
        let (t1, _) = semiclassic::branch_points(&p).unwrap();
        let straight = semiclassic::gap_integral(&p, &[t1]).unwrap();
        // a kinked path staying on the same side of the poles at s = +-1
        let mid = t1 * kink + C64::new(0.0, lift * t1.im);
        let bent = semiclassic::gap_integral(&p, &[mid, t1]).unwrap();
        prop_assert!((straight - bent).norm() < 1e-10 * (1.0 + straight.norm()), "{straight} vs {bent}");
    }

    #[test]
    fn hs4_family_keeps_the_static_product(p in hs4_strategy(), tau in 0.1..10.0f64) {
        let f = TwoTimeFamily::hs4(&p).unwrap().with_mode(Deformation::Combined);
        let m = f.family_at(tau).unwrap();
        let e = m.statics();
        prop_assert!((e[0] * e[2] - p.e1 * p.e2).abs() < 1e-12 * (p.e1 * p.e2).abs());
        prop_assert_eq!(m.hermiticity(), Hermiticity::AntiHermitian);
        let at_one = TwoTimeFamily::hs4(&p).unwrap().family_at(1.0).unwrap();
        prop_assert_eq!(at_one.slopes(), f.base().slopes());
        prop_assert_eq!(at_one.statics(), f.base().statics());
        prop_assert_eq!(at_one.coupling().as_slice(), f.base().coupling().as_slice());
    }

    #[test]
    fn solvable_tables_share_their_zero_pattern(
        b1 in 0.3..2.0f64, b2 in 2.1..4.0f64, e in -1.0..1.0f64, g in 0.05..1.0f64, c in 0.05..1.0f64,
    ) {
        let n4 = SolvableN4Params { b1, b2, e1: e, e2: -e, g: C64::new(g, 0.0), gamma: C64::new(c, 0.0) };
        let n6 = SolvableN6Params { b1, b2, e, g: C64::new(g, 0.0), gamma: C64::new(c, 0.0) };
        for (tilde, herm) in [
            (analytic::solvable_n4(&n4).unwrap(), analytic::solvable_n4_hermitian(&n4).unwrap()),
            (analytic::solvable_n6(&n6).unwrap(), analytic::solvable_n6_hermitian(&n6).unwrap()),
        ] {
            let (a, h) = (tilde.unnormalized().unwrap(), herm.unnormalized().unwrap());
            let n = a.len();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(a[i][j] == 0.0, h[i][j] == 0.0);
                }
            }
            for from in 0..n {
                let s: f64 = (0..n).map(|to| h[to][from]).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn static_shift_is_a_global_phase(m in model_strategy(Hermiticity::AntiHermitian, 4), c in -3.0..3.0f64) {
        let gap = static_shift_gap(&m, c);
        prop_assert!(gap < 1e-10, "{gap:e}");
    }

    #[test]
    fn raw_and_interaction_pictures_agree(m in model_strategy(Hermiticity::AntiHermitian, 3)) {
        let s = PropagationSettings { rel_tol: 1e-12, abs_tol: 1e-12, ..quick() }.with_horizon(4.0);
        let a = propagator::propagate_column(&m, 0, &s).unwrap();
        let b = propagator::propagate_column_raw(&m, 0, &s).unwrap();
        let scale = (a.log_offset - b.log_offset).exp();
        let top = a.amplitudes.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
            prop_assert!((x.norm() * scale - y.norm()).abs() < 1e-8 * top * scale);
        }
    }

    #[test]
    fn hermitian_propagation_conserves_probability(m in model_strategy(Hermiticity::Hermitian, 4)) {
        let l = p_tilde_log(&m, 0, &quick());
        let s: f64 = l.iter().map(|x| x.exp()).sum();
        prop_assert!((s - 1.0).abs() < 1e-8, "{s}");
    }

    #[test]
    fn dissociation_growth_follows_the_area(g in 0.05..0.2f64, v in 0.5..3.0f64) {
        let sys = DissociationSystem::symmetric(v, C64::new(g, 0.0));
        let model = bdg::dissociation_to_nlz(&sys).unwrap();
        let l11 = p_tilde_log(&model, 0, &quick())[0];
        let area = bdg::growth_area(&sys).unwrap();
        prop_assert!((area / l11 - 1.0).abs() < 0.05, "{area} vs {l11}");
    }
}

#[test]
fn doubling_the_horizon_leaves_figure_scale_tables_alone() {
    let m = analytic::n6_model(&nmlz::recipes::FIG3B, Hermiticity::AntiHermitian).unwrap();
    let t = propagator::default_horizon(&m);
    let a = propagator::transition_table(&propagator::scattering_matrix(&m, &quick().with_horizon(t)).unwrap()).unwrap();
    let b = propagator::transition_table(&propagator::scattering_matrix(&m, &quick().with_horizon(2.0 * t)).unwrap()).unwrap();
    let (la, lb) = (a.log_unnormalized(), b.log_unnormalized());
    for to in 0..6 {
        for from in 0..6 {
            if la[to][from].is_finite() && la[to][from] > la[from][from] - 20.0 {
                assert!(((la[to][from] - lb[to][from]).exp() - 1.0).abs() < 1e-3, "{to} {from}");
            }
        }
    }
}

#[test]
fn hs4_diagonal_law_and_symmetry() {
    let p = Hs4Params {
        b: 1.0,
        e1: 0.5,
        e2: 1.5,
        g: 0.3,
    };
    let m = semiclassic::hs4_model(&p).unwrap();
    // the small off-diagonal entries need twice the default window
    let s = quick().with_horizon(2.0 * propagator::default_horizon(&m));
    let t = propagator::transition_table(&propagator::scattering_matrix(&m, &s).unwrap())
        .unwrap()
        .unnormalized()
        .unwrap();
    let pnn = (4.0 * PI * 0.09).exp();
    for n in 0..4 {
        assert!((t[n][n] / pnn - 1.0).abs() < 0.01);
    }
    assert!((t[0][1] / t[3][2] - 1.0).abs() < 1e-3);
}
