//! Property tests for the module invariants.

use std::collections::BTreeMap;

use approx::assert_relative_eq;
use proptest::prelude::*;

use flowkernel::deconv::{build_design, solve_regularized, Regularizer};
use flowkernel::econometrics::{self, CovType};
use flowkernel::epr;
use flowkernel::hawkes::{self, Direction, EventSeries};
use flowkernel::memory;
use flowkernel::panel::{self, FlowPanel, Investor, PanelRow, Scheme, Schema};

fn finite(scale: f64) -> impl Strategy<Value = f64> {
    (-1.0f64..1.0).prop_map(move |x| x * scale)
}

/// Panels of 1..4 stocks with 1..30 consecutive dates each.
fn arb_panel() -> impl Strategy<Value = FlowPanel> {
    prop::collection::vec(
        (1usize..30, -5i64..5).prop_flat_map(|(n, start)| {
            prop::collection::vec(
                (finite(0.2), 1e6f64..1e13, 0.0f64..1e10, finite(1e9), finite(1e9), finite(1e9), prop::option::of(1.0f64..1e5)),
                n,
            )
            .prop_map(move |v| (start, v))
        }),
        1..4,
    )
    .prop_map(|stocks| {
        let mut rows = Vec::new();
        for (s, (start, vals)) in stocks.into_iter().enumerate() {
            for (d, (ret, cap, vol, f0, f1, f2, price)) in vals.into_iter().enumerate() {
                rows.push(PanelRow {
                    date: start + d as i64,
                    stock_id: format!("S{s:02}"),
                    close_return: ret,
                    market_cap: cap,
                    total_volume: vol,
                    net_flow: [f0, f1, f2],
                    close_price: price,
                });
            }
        }
        FlowPanel::new(rows).expect("valid panel")
    })
}

fn brute_loglik(t: &[f64], origin: f64, end: f64, mu: f64, alpha: f64, beta: f64) -> f64 {
    let mut ll = 0.0;
    for i in 0..t.len() {
        let lam = mu + (0..i).map(|j| alpha * (-beta * (t[i] - t[j])).exp()).sum::<f64>();
        ll += lam.ln();
    }
    ll - mu * (end - origin) - (alpha / beta) * t.iter().map(|ti| 1.0 - (-beta * (end - ti)).exp()).sum::<f64>()
}

fn events(mut times: Vec<f64>, span: f64) -> EventSeries {
    times.sort_by(f64::total_cmp);
    let n = times.len();
    EventSeries::new(times, vec![Direction::Buy; n], 0.0, span).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn panel_csv_round_trip(p in arb_panel()) {
        let mut buf = Vec::new();
        panel::write_panel(&p, &mut buf).unwrap();
        let (back, report) = panel::load_panel(buf.as_slice(), &Schema::default()).unwrap();
        prop_assert_eq!(report.rejected, 0);
        prop_assert_eq!(back, p);
    }

    #[test]
    fn winsorization_is_idempotent(p in arb_panel(), tail in 0.0f64..0.3, floor in 0.0f64..100.0) {
        if let Ok((once, _)) = panel::apply_filters(&p, floor, tail) {
            let (twice, _) = panel::apply_filters(&once, floor, tail).unwrap();
            prop_assert_eq!(twice, once);
        }
    }

    #[test]
    fn normalize_is_homogeneous(p in arb_panel(), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let scaled = FlowPanel::new(
            p.rows()
                .iter()
                .map(|r| PanelRow {
                    net_flow: r.net_flow.map(|f| f * a),
                    market_cap: r.market_cap * b,
                    total_volume: r.total_volume * b,
                    ..r.clone()
                })
                .collect(),
        )
        .unwrap();
        for inv in Investor::ALL {
            for scheme in [Scheme::Mc, Scheme::Tv] {
                let s0 = panel::normalize(&p, inv, scheme);
                let s1 = panel::normalize(&scaled, inv, scheme);
                prop_assert_eq!(s0.rows.len(), s1.rows.len());
                for (x, y) in s0.rows.iter().zip(&s1.rows) {
                    prop_assert!((y.signal - x.signal * a / b).abs() <= 1e-12 * (x.signal * a / b).abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn cross_sectional_z_has_unit_moments(p in arb_panel()) {
        let s = panel::cross_sectional_standardize(&panel::normalize(&p, Investor::Foreign, Scheme::Mc));
        let mut days: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for r in &s.rows {
            if let Some(z) = r.z {
                days.entry(r.date).or_default().push(z);
            }
        }
        for zs in days.values() {
            let n = zs.len() as f64;
            let m = zs.iter().sum::<f64>() / n;
            let var = zs.iter().map(|z| (z - m).powi(2)).sum::<f64>() / n;
            prop_assert!(m.abs() <= 1e-10);
            prop_assert!((var.sqrt() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn tikhonov_satisfies_normal_equations(
        x in prop::collection::vec(finite(3.0), 30..120),
        seed in any::<u64>(),
        lags in 0usize..8,
        lambda in 1e-4f64..1e3,
    ) {
        let r: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v * 0.7 + ((i as u64 ^ seed) % 97) as f64 / 97.0 - 0.5).sin()).collect();
        let sys = build_design(&x, &r, lags).unwrap();
        let k = solve_regularized(&sys, Regularizer::Tikhonov { lambda }).unwrap();
        let psi = nalgebra::DVector::from_vec(k.coefficients.clone());
        let ne = sys.normal_equations();
        let lhs = &ne.gram * &psi + &psi * lambda;
        let resid = (lhs - &ne.xty).norm();
        prop_assert!(resid <= 1e-8 * ne.xty.norm().max(1e-12));
    }

    #[test]
    fn shrinkage_is_monotone(
        x in prop::collection::vec(finite(3.0), 30..120),
        r in prop::collection::vec(finite(1.0), 120),
        lags in 0usize..6,
        l1 in 1e-3f64..10.0,
        factor in 1.01f64..100.0,
    ) {
        let sys = build_design(&x, &r[..x.len()], lags).unwrap();
        for reg in [|l| Regularizer::Tikhonov { lambda: l }, |l| Regularizer::Ridge { lambda: l }] {
            let small = solve_regularized(&sys, reg(l1)).unwrap().coefficients;
            let large = solve_regularized(&sys, reg(l1 * factor)).unwrap().coefficients;
            let norm = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
            prop_assert!(norm(&large) <= norm(&small) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn lasso_limits(
        x in prop::collection::vec(finite(1.0), 80..150),
        r in prop::collection::vec(finite(1.0), 150),
        lags in 0usize..4,
    ) {
        let sys = build_design(&x, &r[..x.len()], lags).unwrap();
        let xtr = sys.design.tr_mul(&sys.response);
        let big = 2.0 * xtr.amax() * 1.01 + 1e-12;
        let zero = solve_regularized(&sys, Regularizer::Lasso { lambda: big }).unwrap();
        prop_assert!(zero.coefficients.iter().all(|c| *c == 0.0));

        let gram = sys.design.tr_mul(&sys.design);
        let eig = gram.clone().symmetric_eigen().eigenvalues;
        prop_assume!(eig.min() > 1e-2 * eig.max());
        let ls = gram.cholesky().unwrap().solve(&xtr);
        let cd = solve_regularized(&sys, Regularizer::Lasso { lambda: 0.0 }).unwrap();
        for (a, b) in cd.coefficients.iter().zip(ls.iter()) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn loglik_recursion_matches_double_sum(
        times in prop::collection::vec(0.0f64..20.0, 0..50),
        mu in 0.01f64..5.0,
        alpha in 0.0f64..3.0,
        beta in 0.05f64..5.0,
    ) {
        let ev = events(times, 20.0);
        let fast = hawkes::log_likelihood(&ev, mu, alpha, beta).unwrap();
        let slow = brute_loglik(ev.times(), 0.0, 20.0, mu, alpha, beta);
        prop_assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0));
    }

    #[test]
    fn loglik_is_translation_invariant(
        times in prop::collection::vec(0.0f64..20.0, 1..60),
        shift in -1e3f64..1e3,
        mu in 0.01f64..5.0,
        alpha in 0.0f64..3.0,
        beta in 0.05f64..5.0,
    ) {
        let ev = events(times, 20.0);
        let a = hawkes::log_likelihood(&ev, mu, alpha, beta).unwrap();
        let b = hawkes::log_likelihood(&ev.shifted(shift), mu, alpha, beta).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn regime_count_is_a_tenth(d in 10usize..2000, seed in any::<u64>()) {
        // distinct values in a scrambled order
        let step = (seed % 1000) as usize * 2 + 1;
        let vals: Vec<f64> = (0..d).map(|i| ((i * step) % d) as f64 + (i * step / d) as f64 * 1e-3).collect();
        let mut uniq = vals.clone();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        prop_assume!(uniq.len() == d);
        let grid: Vec<f64> = (0..d).map(|i| i as f64).collect();
        let r = hawkes::classify_regimes(grid, vals, 90.0).unwrap();
        prop_assert!(r.n_high() == d / 10 || r.n_high() == d.div_ceil(10));
    }

    #[test]
    fn epr_is_label_and_reversal_invariant(
        symbols in prop::collection::vec(0usize..4, 2..300),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let est = |s: &[usize]| {
            let t = epr::transition_matrix(s, 4).unwrap();
            epr::entropy_production(&t.p, &t.pi).unwrap()
        };
        let base = est(&symbols);
        prop_assert!(base >= -1e-12);
        let relabelled: Vec<usize> = symbols.iter().map(|s| perm[*s]).collect();
        prop_assert!((est(&relabelled) - base).abs() <= 1e-12);
        let reversed: Vec<usize> = symbols.iter().rev().copied().collect();
        prop_assert!((est(&reversed) - base).abs() <= 1e-10);
    }

    #[test]
    fn clusters_partition_events(times in prop::collection::vec(0.0f64..100.0, 1..200), ts in 0.0f64..10.0) {
        let ev = events(times, 100.0);
        let c = memory::cluster_events(&ev, ts).unwrap();
        prop_assert_eq!(c.sizes.iter().sum::<usize>(), ev.len());
        let mut next = 0;
        for ((s, e), size) in c.ranges.iter().zip(&c.sizes) {
            prop_assert_eq!(*s, next);
            prop_assert_eq!(e - s, *size);
            next = *e;
        }
    }

    #[test]
    fn conditional_probabilities_are_probabilities(ind in prop::collection::vec(any::<bool>(), 30..300), horizon in 1usize..20) {
        prop_assume!(ind.iter().any(|b| *b));
        if let Ok(p) = memory::profile_from_indicator(&ind, horizon, 1.5) {
            prop_assert!(p.conditional_prob.iter().all(|q| (0.0..=1.0).contains(q)));
            prop_assert!((0.0..=1.0).contains(&p.baseline));
        }
    }

    #[test]
    fn hac_zero_is_hc0_and_coefficients_ignore_hac(
        y in prop::collection::vec(finite(1.0), 40),
        x in prop::collection::vec(finite(1.0), 40),
        lags in 1usize..8,
    ) {
        let cols = [("x", x.as_slice())];
        let nw0 = econometrics::nw_ols(&y, &cols, Some(0)).unwrap();
        let hc0 = econometrics::ols(&y, &cols, true, CovType::Hc0).unwrap();
        let nwl = econometrics::nw_ols(&y, &cols, Some(lags)).unwrap();
        for i in 0..2 {
            assert_relative_eq!(nw0.se[i], hc0.se[i], max_relative = 1e-12);
            prop_assert_eq!(nw0.coefficients[i], nwl.coefficients[i]);
        }
    }

    #[test]
    fn auc_survives_monotone_transforms(
        pairs in prop::collection::vec((finite(3.0), any::<bool>()), 20..200),
        lead in 0usize..3,
    ) {
        let score: Vec<Option<f64>> = pairs.iter().map(|p| Some(p.0)).collect();
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        if let Ok(a) = econometrics::roc_auc(&score, &labels, lead) {
            let warped: Vec<Option<f64>> = score.iter().map(|s| s.map(|v| v.exp() * 3.0 + 1.0)).collect();
            let b = econometrics::roc_auc(&warped, &labels, lead).unwrap();
            prop_assert!((a.auc - b.auc).abs() <= 1e-12);
        }
    }

    #[test]
    fn lp_horizon_zero_is_one_regression(
        y in prop::collection::vec(finite(1.0), 60),
        x in prop::collection::vec(finite(1.0), 60),
        c in prop::collection::vec(finite(1.0), 60),
    ) {
        let controls = [("c", c.as_slice())];
        let lp = econometrics::local_projections(&y, &x, &controls, &[0]).unwrap();
        let direct = econometrics::nw_ols(&y, &[("x", x.as_slice()), ("c", c.as_slice())], None).unwrap();
        let h0 = &lp.horizons[0];
        assert_relative_eq!(h0.beta, direct.coef("x").unwrap(), max_relative = 1e-12);
        assert_relative_eq!(h0.se, direct.se_of("x").unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn granger_f_ignores_affine_rescaling(
        a in prop::collection::vec(finite(1.0), 80),
        b in prop::collection::vec(finite(1.0), 80),
        s1 in 0.1f64..10.0, o1 in -5.0f64..5.0,
        s2 in -10.0f64..-0.1, o2 in -5.0f64..5.0,
    ) {
        let g0 = econometrics::granger_test(&a, &b, 3).unwrap();
        let a2: Vec<f64> = a.iter().map(|v| v * s1 + o1).collect();
        let b2: Vec<f64> = b.iter().map(|v| v * s2 + o2).collect();
        let g1 = econometrics::granger_test(&a2, &b2, 3).unwrap();
        for (p, q) in g0.per_lag.iter().zip(&g1.per_lag) {
            assert_relative_eq!(p.f_stat, q.f_stat, max_relative = 1e-8);
        }
    }

    #[test]
    fn mediation_identity(
        x in prop::collection::vec(finite(1.0), 30..100),
        noise in prop::collection::vec(finite(1.0), 200),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let n = x.len();
        let m: Vec<f64> = (0..n).map(|i| a * x[i] + noise[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| b * m[i] + 0.3 * x[i] + noise[100 + i % 100]).collect();
        if let Ok(med) = econometrics::mediation(&x, &m, &y) {
            prop_assert!((med.total - med.direct - med.a * med.b).abs() <= 1e-10 * med.total.abs().max(1.0));
        }
    }
}
