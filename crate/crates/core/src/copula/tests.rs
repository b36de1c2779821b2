use super::*;
use crate::rng::{from_seed, substream};
use crate::sample::KnockoffSampler;
use crate::stats::{correlation, kendall_tau};
use crate::swap::enumerate_swaps;
use proptest::prelude::*;

fn clayton(theta: f64) -> Copula {
    Copula::Archimedean(ArchimedeanGenerator::clayton(theta).unwrap())
}

fn ww_model() -> CopulaModel {
    CopulaModel::uniform(Copula::Countermonotone, vec![Copula::Countermonotone, Copula::Independence]).unwrap()
}

fn clayton_model(p: usize, theta: f64) -> CopulaModel {
    CopulaModel::uniform(clayton(theta), vec![clayton(theta); p]).unwrap()
}

#[test]
fn ww_counterexample_value() {
    let h = ww_model().evaluate_h(&[0.9, 0.9, 0.9, f64::INFINITY]).unwrap();
    // (0.9 + 0.9 + 0.9 − 2)^+
    assert!((h - 0.7).abs() < 1e-15, "{h}");
}

#[test]
fn grounded_and_pinned() {
    let margs = vec![Marginal::Normal { mean: 0.0, sd: 1.0 }, Marginal::Exponential { rate: 2.0 }];
    let model = CopulaModel::new(Copula::Gaussian(0.4), vec![clayton(1.5), Copula::Gaussian(-0.3)], margs.clone())
        .unwrap();
    let inf = f64::INFINITY;
    assert_eq!(model.evaluate_h(&[f64::NEG_INFINITY, 0.3, 0.2, 0.1]).unwrap(), 0.0);
    assert_eq!(model.evaluate_h(&[0.5, 0.3, 0.2, -1.0]).unwrap(), 0.0);
    let x = [0.25, 0.7];
    let want = Copula::Gaussian(0.4).eval(&[margs[0].cdf(x[0]), margs[1].cdf(x[1])]);
    let first = model.evaluate_h(&[x[0], x[1], inf, inf]).unwrap();
    let second = model.evaluate_h(&[inf, inf, x[0], x[1]]).unwrap();
    assert!((first - want).abs() < 1e-12);
    assert!((second - want).abs() < 1e-12);
    assert!(matches!(model.evaluate_h(&[f64::NAN, 0.0, 0.0, 0.0]), Err(Error::NumericIntegrity(_))));
}

#[test]
fn gaussian_copula_reduces_to_sheppard_at_the_median() {
    let c = Copula::Gaussian(0.5);
    let want = 0.25 + 0.5f64.asin() / (2.0 * std::f64::consts::PI);
    assert!((c.eval(&[0.5, 0.5]) - want).abs() < 1e-15);
}

#[test]
fn asymmetric_d_breaks_symmetry_but_symmetrized_h_restores_it() {
    // Khoudraji-type asymmetric 2-copula: u^{1-a} v^{1-b} M(u^a, v^b)
    let asym = Copula::explicit("khoudraji", 2, |u: &[f64]| {
        let (a, b) = (0.3, 0.8);
        u[0].powf(1.0 - a) * u[1].powf(1.0 - b) * u[0].powf(a).min(u[1].powf(b))
    });
    let model = CopulaModel::uniform(Copula::Independence, vec![asym, Copula::Independence]).unwrap();
    let x = [0.3, 0.6, 0.8, 0.4];
    let s = crate::swap::SwapSet::singleton(2, 1).unwrap();
    let fx = s.apply(&x).unwrap();
    assert!((model.evaluate_h(&x).unwrap() - model.evaluate_h(&fx).unwrap()).abs() > 1e-3);
    let g = model.evaluate_symmetrized_h(&x).unwrap();
    for s in enumerate_swaps(2).unwrap() {
        let gs = model.evaluate_symmetrized_h(&s.apply(&x).unwrap()).unwrap();
        assert!((g - gs).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn h_is_swap_invariant_for_symmetric_d(
        u in prop::collection::vec(0.001f64..0.999, 4),
        which in 0usize..4,
    ) {
        let ds = [
            vec![clayton(2.0), clayton(2.0)],
            vec![Copula::Gaussian(0.6), Copula::Independence],
            vec![Copula::Countermonotone, Copula::Comonotone],
            vec![Copula::Archimedean(ArchimedeanGenerator::frank(3.0).unwrap()), clayton(0.5)],
        ];
        let model = CopulaModel::uniform(Copula::Gaussian(-0.2), ds[which].clone()).unwrap();
        let h = model.evaluate_h(&u).unwrap();
        for s in enumerate_swaps(2).unwrap() {
            let hs = model.evaluate_h(&s.apply(&u).unwrap()).unwrap();
            prop_assert!((h - hs).abs() <= 1e-14);
        }
    }
}

#[test]
fn ww_rectangle_volume_is_negative_with_witness() {
    let rep = rectangle_volume_check(&ww_model(), 8, 1e-10).unwrap();
    assert!(rep.min_volume < 0.0 && !rep.pass);
    assert!(rep.negative_cells > 0);
    assert_eq!(rep.witness.len(), 4);
    // recompute the witness volume independently by inclusion–exclusion
    let m = ww_model();
    let mut vol = 0.0;
    for bits in 0..16u32 {
        let u: Vec<f64> = (0..4).map(|k| rep.witness[k][(bits >> k & 1) as usize]).collect();
        let sign = if (4 - bits.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        vol += sign * m.c_star(&u);
    }
    assert!((vol - rep.min_volume).abs() < 1e-15);
}

#[test]
fn independence_volumes_are_products_of_increments() {
    let m = CopulaModel::uniform(Copula::Independence, vec![Copula::Independence; 2]).unwrap();
    let rep = rectangle_volume_check(&m, 8, 1e-10).unwrap();
    assert!(rep.pass);
    assert!((rep.min_volume - 8f64.powi(-4)).abs() < 1e-15);
}

#[test]
fn gaussian_copula_construction_has_no_negative_volume() {
    let m = CopulaModel::uniform(Copula::Gaussian(0.2), vec![Copula::Gaussian(0.8); 2]).unwrap();
    for res in [8, 12, 16] {
        let rep = rectangle_volume_check(&m, res, 1e-10).unwrap();
        assert!(rep.min_volume >= -1e-10, "{rep:?}");
    }
}

#[test]
fn gaussian_inside_gaussian_is_not_always_a_distribution_function() {
    // H is not a Gaussian CDF in general: weak D_i correlation breaks it
    let m = CopulaModel::uniform(Copula::Gaussian(0.5), vec![Copula::Gaussian(0.3); 2]).unwrap();
    let rep = rectangle_volume_check(&m, 8, 1e-10).unwrap();
    assert!(rep.min_volume < -1e-4, "{rep:?}");
}

#[test]
fn rectangle_guard() {
    let m = clayton_model(4, 1.0);
    assert!(matches!(rectangle_volume_check(&m, 8, 0.0), Err(Error::ResourceLimit(_))));
    assert!(rectangle_volume_check(&ww_model(), 0, 0.0).is_err());
}

#[test]
fn generator_conditions_to_order_eight() {
    let grid = default_t_grid();
    let rep = check_generator_conditions(&ArchimedeanGenerator::clayton(2.0).unwrap(), 8, &grid).unwrap();
    assert_eq!(rep.status, CheckStatus::Pass);
    assert!(rep.orders.iter().all(|o| o.method == "closed-form"));
    for theta in [1.0, 1.5, 3.0] {
        let rep = check_generator_conditions(&ArchimedeanGenerator::gumbel(theta).unwrap(), 8, &grid).unwrap();
        assert_eq!(rep.status, CheckStatus::Pass, "{rep:?}");
        // the numeric verdict must rest on resolved signs, not on noise
        let zeros: usize = rep.orders.iter().map(|o| o.zero_within_noise).sum();
        assert_eq!(zeros, 0, "{rep:?}");
    }
}

#[test]
fn numeric_check_detects_sign_violation() {
    // ψ(t) = exp(−t²) is a valid decreasing generator but concave near 0
    let g = ArchimedeanGenerator::custom("gauss-tail", |t: f64| (-t * t).exp(), |u: f64| (-u.ln()).sqrt())
        .unwrap();
    let rep = check_generator_conditions(&g, 2, &default_t_grid()).unwrap();
    assert_eq!(rep.orders[0].status, CheckStatus::Pass);
    assert_eq!(rep.orders[1].status, CheckStatus::Fail, "{rep:?}");
    assert!(rep.orders[1].worst_t.unwrap() < 1.0 / 2f64.sqrt());
    // e^{-t} through the numeric path: every order resolved and passing
    let e = ArchimedeanGenerator::custom("exp", |t: f64| (-t).exp(), |u: f64| -u.ln()).unwrap();
    let rep = check_generator_conditions(&e, 8, &default_t_grid()).unwrap();
    assert_eq!(rep.status, CheckStatus::Pass, "{rep:?}");
    assert!(rep.orders.iter().all(|o| o.zero_within_noise == 0), "{rep:?}");
}

#[test]
fn nested_clayton_conditions() {
    let grid = default_t_grid();
    let c = |t| ArchimedeanGenerator::clayton(t).unwrap();
    let ok = check_nested_condition(&c(1.0), &c(2.0), 8, &grid).unwrap();
    assert_eq!(ok.status, CheckStatus::Pass, "{ok:?}");
    assert!(ok.parameter_restriction.as_ref().unwrap().holds);
    let bad = check_nested_condition(&c(2.0), &c(1.0), 8, &grid).unwrap();
    assert_eq!(bad.status, CheckStatus::Fail);
    assert!(!bad.parameter_restriction.as_ref().unwrap().holds);
    // (1+t)^2 − 1 has a positive second derivative: order 2 is the culprit
    assert_eq!(bad.composition[1].status, CheckStatus::Fail);
    assert_eq!(bad.composition[0].status, CheckStatus::Pass);
    let same = check_nested_condition(&c(1.3), &c(1.3), 8, &grid).unwrap();
    assert_eq!(same.status, CheckStatus::Pass);
    let g = ArchimedeanGenerator::gumbel(2.0).unwrap();
    assert_eq!(check_nested_condition(&g, &g, 6, &grid).unwrap().status, CheckStatus::Pass);
}

#[test]
fn kendall_oracle_matches_known_families() {
    for theta in [0.5, 2.0, 7.0] {
        let tau = kendall_tau_oracle(&ArchimedeanGenerator::clayton(theta).unwrap()).unwrap();
        assert!((tau - theta / (theta + 2.0)).abs() < 1e-9, "{theta}: {tau}");
        let tau = kendall_tau_oracle(&ArchimedeanGenerator::gumbel(theta.max(1.0)).unwrap()).unwrap();
        assert!((tau - (1.0 - 1.0 / theta.max(1.0))).abs() < 1e-9);
    }
    let tau = kendall_tau_oracle(&ArchimedeanGenerator::independence()).unwrap();
    assert!(tau.abs() < 1e-12);
}

#[test]
fn clayton_knockoff_pairwise_tau() {
    let model = clayton_model(3, 2.0);
    let sampler = FrailtyKnockoffs::new(&model, PosteriorMethod::Exact).unwrap();
    let draws = sampler.sample_joint(100_000, 7).unwrap();
    let want = kendall_tau_oracle(model.c().generator().unwrap()).unwrap();
    for i in 0..6 {
        for j in i + 1..6 {
            let tau = kendall_tau(&draws.column(i), &draws.column(j));
            assert!((tau - want).abs() < 0.02, "({i},{j}): {tau} vs {want}");
        }
    }
}

#[test]
fn frank_knockoff_pairwise_tau() {
    // exercises the logarithmic-series posterior
    let g = ArchimedeanGenerator::frank(6.0).unwrap();
    let model = CopulaModel::uniform(Copula::Archimedean(g.clone()), vec![Copula::Archimedean(g.clone()); 2]).unwrap();
    let sampler = FrailtyKnockoffs::new(&model, PosteriorMethod::Exact).unwrap();
    let draws = sampler.sample_joint(60_000, 3).unwrap();
    let want = kendall_tau_oracle(&g).unwrap();
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)] {
        let tau = kendall_tau(&draws.column(i), &draws.column(j));
        assert!((tau - want).abs() < 0.02, "({i},{j}): {tau} vs {want}");
    }
}

#[test]
fn small_theta_is_nearly_independent() {
    let sampler = FrailtyKnockoffs::new(&clayton_model(2, 1e-3), PosteriorMethod::Exact).unwrap();
    let draws = sampler.sample_joint(100_000, 11).unwrap();
    for i in 0..2 {
        assert!(correlation(&draws.column(i), &draws.column(i + 2)).abs() < 0.02);
    }
}

#[test]
fn grid_posterior_matches_exact_gamma_posterior() {
    let fr = Frailty::Gamma { shape: 0.5, rate: 1.0 };
    let n = 40_000;
    let mut r1 = from_seed(1);
    let mut r2 = from_seed(2);
    for s in [0.05, 1.0, 12.0] {
        let a: Vec<f64> = (0..n).map(|_| frailty::tests_support::posterior(&fr, 3, s, PosteriorMethod::Exact, &mut r1)).collect();
        let b: Vec<f64> = (0..n).map(|_| frailty::tests_support::posterior(&fr, 3, s, PosteriorMethod::Grid, &mut r2)).collect();
        let d = crate::stats::ks_two_sample(&a, &b);
        let crit = 1.63 * (2.0 / n as f64).sqrt();
        assert!(d < crit, "s={s}: KS {d} ≥ {crit}");
    }
}

#[test]
fn unsupported_and_boundary_cases() {
    let g = ArchimedeanGenerator::gumbel(2.0).unwrap();
    let gm = CopulaModel::uniform(Copula::Archimedean(g.clone()), vec![Copula::Archimedean(g); 2]).unwrap();
    assert!(matches!(sample_knockoff_frailty(&gm, &[0.3, 0.4], 1), Err(Error::UnsupportedGenerator(_))));
    let mixed = CopulaModel::uniform(clayton(2.0), vec![clayton(2.0), clayton(3.0)]).unwrap();
    assert!(matches!(sample_knockoff_frailty(&mixed, &[0.3, 0.4], 1), Err(Error::UnsupportedGenerator(_))));
    let m = clayton_model(2, 2.0);
    assert!(matches!(sample_knockoff_frailty(&m, &[0.0, 0.4], 1), Err(Error::Boundary(_))));
    assert!(matches!(sample_knockoff_frailty(&m, &[0.3, 1.0], 1), Err(Error::Boundary(_))));
    assert_eq!(sample_knockoff_frailty(&m, &[0.3, 0.4], 5).unwrap(), sample_knockoff_frailty(&m, &[0.3, 0.4], 5).unwrap());
}

#[test]
fn cell_pmf_is_swap_symmetric() {
    let sampler = FrailtyKnockoffs::new(&clayton_model(2, 2.0), PosteriorMethod::Exact).unwrap();
    let n = 400_000;
    let draws = sampler.sample_joint(n, 21).unwrap();
    let cell = |r: &[f64]| r.iter().fold(0usize, |acc, &v| acc * 4 + ((v * 4.0) as usize).min(3));
    let mut counts = vec![0u64; 256];
    for r in draws.rows() {
        counts[cell(r)] += 1;
    }
    let nf = n as f64;
    for s in enumerate_swaps(2).unwrap() {
        for idx in 0..256usize {
            let digits: Vec<f64> = (0..4).map(|k| ((idx >> (2 * (3 - k))) & 3) as f64 / 4.0 + 0.125).collect();
            let j = cell(&s.apply(&digits).unwrap());
            let (pa, pb) = (counts[idx] as f64 / nf, counts[j] as f64 / nf);
            let se = ((pa + pb - (pa - pb).powi(2)) / nf).sqrt();
            assert!((pa - pb).abs() <= 4.0 * se + 1e-15, "swap {s}, cell {idx}: {pa} vs {pb}");
        }
    }
}

#[test]
fn empirical_cdf_converges_to_c_star() {
    let model = clayton_model(2, 2.0);
    let sampler = FrailtyKnockoffs::new(&model, PosteriorMethod::Exact).unwrap();
    let n = 100_000;
    let draws = sampler.sample_joint(n, 99).unwrap();
    // counts on the 8^4 grid, then 4-d prefix sums give the empirical CDF at every grid point
    let r = 8usize;
    let mut cum = vec![0u64; (r + 1).pow(4)];
    let stride = [1, r + 1, (r + 1).pow(2), (r + 1).pow(3)];
    for row in draws.rows() {
        // smallest grid index k with row ≤ k/r
        let idx: usize = (0..4).map(|k| ((row[k] * r as f64).ceil() as usize).min(r) * stride[k]).sum();
        cum[idx] += 1;
    }
    for axis in 0..4 {
        for idx in 0..cum.len() {
            if (idx / stride[axis]) % (r + 1) > 0 {
                cum[idx] += cum[idx - stride[axis]];
            }
        }
    }
    let mut sup: f64 = 0.0;
    for (idx, &c) in cum.iter().enumerate() {
        let u: Vec<f64> = (0..4).map(|k| ((idx / stride[k]) % (r + 1)) as f64 / r as f64).collect();
        sup = sup.max((c as f64 / n as f64 - model.c_star(&u)).abs());
    }
    let dkw = ((2.0f64 / 0.05).ln() / (2.0 * n as f64)).sqrt();
    assert!(sup <= 3.0 * dkw, "sup {sup} vs 3·DKW {}", 3.0 * dkw);
}

#[test]
fn conditional_oracle_independence_p1() {
    let m = CopulaModel::uniform(Copula::Independence, vec![Copula::Independence]).unwrap();
    for &(a, b) in &[(0.2, 0.7), (0.5, 0.1), (0.9, 1.3), (0.4, -0.2)] {
        let v = conditional_cdf_oracle(&m, &[a, b]).unwrap();
        assert!((v - f64::clamp(b, 0.0, 1.0)).abs() < 1e-9, "{a},{b}: {v}");
    }
    assert!(matches!(conditional_cdf_oracle(&m, &[0.0, 0.5]), Err(Error::DegeneratePoint(_))));
}

#[test]
fn conditional_oracle_matches_frailty_sampler() {
    let model = clayton_model(2, 2.0);
    let sampler = FrailtyKnockoffs::new(&model, PosteriorMethod::Exact).unwrap();
    let x = [0.3, 0.6];
    let n = 100_000;
    let mut rng = substream(5, 0);
    let xt: Vec<Vec<f64>> = (0..n).map(|_| sampler.knockoff(&x, &mut rng).unwrap()).collect();
    for &(b1, b2) in &[(0.2, 0.5), (0.5, 0.5), (0.8, 0.3), (0.6, 0.9)] {
        let emp = xt.iter().filter(|v| v[0] <= b1 && v[1] <= b2).count() as f64 / n as f64;
        let oracle = conditional_cdf_oracle(&model, &[x[0], x[1], b1, b2]).unwrap();
        assert!((emp - oracle).abs() < 0.01, "({b1},{b2}): {emp} vs {oracle}");
    }
    // monotone in the knockoff block
    let mut prev = 0.0;
    for k in 1..=10 {
        let v = conditional_cdf_oracle(&model, &[x[0], x[1], k as f64 / 10.0, 0.7]).unwrap();
        assert!(v >= prev - 1e-9);
        prev = v;
    }
}

#[test]
fn smoothness_condition_gate() {
    let ind = CopulaModel::uniform(Copula::Independence, vec![Copula::Independence; 2]).unwrap();
    let rep = smoothness_condition_check(&ind, 6).unwrap();
    assert!(rep.covered && rep.pass, "{rep:?}");
    let cl = clayton_model(2, 2.0);
    let rep = smoothness_condition_check(&cl, 6).unwrap();
    assert!(rep.covered && rep.pass, "{rep:?}");
    let rep = smoothness_condition_check(&ww_model(), 6).unwrap();
    assert!(!rep.covered && !rep.pass);
}

#[test]
fn spec_round_trip() {
    let json = r#"{"p":2,"C":{"type":"archimedean","generator":{"family":"clayton","theta":2}},
        "D":[{"type":"archimedean","generator":{"family":"clayton","theta":2}}]}"#;
    let spec: CopulaModelSpec = serde_json::from_str(json).unwrap();
    let m = CopulaModel::from_spec(&spec).unwrap();
    assert!(m.common_generator().is_some());
    assert_eq!(m.marginals().len(), 2);
    let bad = r#"{"p":3,"C":{"type":"countermonotone"},"D":[{"type":"independence"}]}"#;
    let spec: CopulaModelSpec = serde_json::from_str(bad).unwrap();
    assert!(CopulaModel::from_spec(&spec).is_err());
}
