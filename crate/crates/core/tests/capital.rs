use gaprisk_core::capital::{
    maturity_sweep, min_haircut_for_charge, regulatory_capital, sensitivities, solve_haircut, total_charge_curve, Bump,
    BumpParam, ChargeBasis, RatingTarget, RegulatoryInputs, Scenario, TailSpec, TargetKind, BP,
};
use gaprisk_core::credit::LogOuParams;
use gaprisk_core::dejd::DejdParams;
use gaprisk_core::error::GapRiskError;
use gaprisk_core::loss::{CreditSpec, RepoTerms};
use gaprisk_core::mc::McConfig;

fn scenario(lambda_0: f64, correlation: f64, n_paths: usize) -> Scenario {
    Scenario {
        terms: RepoTerms {
            correlation,
            ..RepoTerms::default()
        },
        dejd: DejdParams::spx_2008_2013(),
        credit: CreditSpec::LogOu(LogOuParams::anchored(0.5, 1.5, lambda_0).unwrap()),
        mc: McConfig {
            n_paths,
            seed: 41,
            ..McConfig::default()
        },
    }
}

#[test]
fn vacuous_target_needs_no_haircut() {
    let s = solve_haircut(&RatingTarget::expected_loss(1.0, "none"), &scenario(0.009, 0.0, 500), &TailSpec::default()).unwrap();
    assert_eq!(s.haircut, 0.0);
}

#[test]
fn unreachable_target_is_reported() {
    let mut s = scenario(0.009, 0.0, 200);
    s.credit = CreditSpec::AssetOnly;
    s.dejd = DejdParams::gaussian(0.0, 5.0);
    let err = solve_haircut(&RatingTarget::expected_loss(1e-30, "tiny"), &s, &TailSpec::default()).unwrap_err();
    assert!(matches!(err, GapRiskError::Unattainable(_)), "{err}");
}

#[test]
fn haircuts_rise_down_the_credit_ladder() {
    let target = RatingTarget::aa2();
    let mut prev = 0.0;
    for lambda_0 in [0.009, 0.02, 0.0488] {
        let s = solve_haircut(&target, &scenario(lambda_0, 0.0, 2000), &TailSpec::default()).unwrap();
        assert!(s.haircut > prev, "lambda_0={lambda_0}: {}", s.haircut);
        assert!(s.metric <= s.level);
        prev = s.haircut;
    }
}

#[test]
fn counterparty_support_lowers_haircut() {
    let target = RatingTarget::aa2();
    let tail = TailSpec::default();
    let with_credit = scenario(0.0488, -0.9, 500);
    let h_cpty = solve_haircut(&target, &with_credit, &tail).unwrap().haircut;
    let mut asset_only = with_credit.clone();
    asset_only.credit = CreditSpec::AssetOnly;
    let h_asset = solve_haircut(&target, &asset_only, &tail).unwrap().haircut;
    assert!(h_cpty <= h_asset, "{h_cpty} > {h_asset}");
    asset_only.terms.recovery = 0.0;
    assert!(solve_haircut(&target, &asset_only, &tail).unwrap().haircut >= h_asset);
}

#[test]
fn first_dollar_target_is_met() {
    let target = RatingTarget::new(TargetKind::FirstDollarPd, 1e-4, "pd").unwrap();
    let s = solve_haircut(&target, &scenario(0.02, -0.9, 500), &TailSpec::default()).unwrap();
    assert!(s.haircut > 0.0 && s.metric <= 1e-4);
}

#[test]
fn single_tenor_sweep_equals_direct_solve() {
    let sc = scenario(0.02, -0.9, 400);
    let target = RatingTarget::aa2();
    let tail = TailSpec::default();
    let (points, used) = maturity_sweep(&sc, &[0.5], &target, &tail, None).unwrap();
    let direct = solve_haircut(&target, &sc.with_tenor(0.5), &tail).unwrap();
    assert_eq!(used, target);
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].haircut, direct.haircut);
    assert_eq!(points[0].metric, direct.metric);
}

#[test]
fn zero_bump_changes_nothing() {
    let sc = scenario(0.02, -0.9, 400);
    let engine = sc.engine().unwrap();
    let bumps: Vec<Bump> = [BumpParam::Sigma, BumpParam::EtaDown, BumpParam::Correlation]
        .iter()
        .map(|&param| Bump {
            param,
            shift: 0.0,
            central: false,
        })
        .collect();
    for row in sensitivities(&engine, 0.05, 0.999, &bumps, &sc.mc).unwrap() {
        assert_eq!(row.delta_es, 0.0);
        assert_eq!(row.bumped_es, row.base_es);
    }
}

#[test]
fn charge_curve_decreases_and_vanishes() {
    let sc = scenario(0.02, -0.9, 400);
    let engine = sc.engine().unwrap();
    let tail = TailSpec::default();
    let rows = total_charge_curve(&engine, &[0.0, 0.05, 0.1, 0.2, 0.5, 0.9], &tail, 0.15).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].el <= w[0].el);
        assert!(w[1].total_charge <= w[0].total_charge * (1.0 + 1e-9) + 1e-15);
    }
    for r in &rows {
        assert!(r.total_charge >= r.el && r.es_q >= r.var_q && r.ec >= 0.0);
    }
    assert!(rows.last().unwrap().total_charge < 1e-3 * BP);
}

#[test]
fn min_haircut_charges_are_ordered() {
    let mut sc = scenario(0.009, 0.0, 2);
    sc.credit = CreditSpec::AssetOnly;
    sc.terms.recovery = 0.0;
    let engine = sc.engine().unwrap();
    let solve = |b| min_haircut_for_charge(&engine, b, 0.999, 0.1, BP).unwrap().haircut;
    let (el, cvar, es) = (solve(ChargeBasis::ElOnly), solve(ChargeBasis::CvarPlusEl), solve(ChargeBasis::EsPlusEl));
    assert!(el < cvar && cvar <= es, "{el} {cvar} {es}");
}

#[test]
fn regulatory_capital_is_piecewise_linear() {
    let r = RegulatoryInputs::default();
    let rw = r.risk_weight().unwrap();
    for i in 0..=40 {
        let h = i as f64 * 0.01;
        let want = if h < r.hvol { (r.hvol - h) / (1.0 - h) * 0.08 * rw } else { 0.0 };
        assert_eq!(regulatory_capital(h, &r).unwrap(), want, "h={h}");
    }
    assert!(regulatory_capital(1.0, &r).is_err());
}
