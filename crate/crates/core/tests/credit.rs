use gaprisk_core::credit::{
    bootstrap_hazard, calibrate_lambda0, default_distribution, price_cds, simulate_path, IntensityPath, LogOuParams,
};
use gaprisk_core::mc::{map_paths, mean_stderr, uniform_grid, McConfig};

fn mc(n_paths: usize, seed: u64) -> McConfig {
    McConfig {
        n_paths,
        seed,
        ..McConfig::default()
    }
}

fn terminal_y(params: &LogOuParams, n: usize, seed: u64) -> Vec<f64> {
    let grid = uniform_grid(1.0, 1.0 / 52.0);
    map_paths(seed, n, |_, rng| *simulate_path(params, &grid, rng).unwrap().y_values.last().unwrap())
}

#[test]
fn driftless_variance() {
    let p = LogOuParams::new(0.0, 0.0, 1.5, 0.01).unwrap();
    let y = terminal_y(&p, 100_000, 1);
    let y0 = p.y_0();
    let sq: Vec<f64> = y.iter().map(|v| (v - y0).powi(2)).collect();
    let (var, se) = mean_stderr(&sq);
    assert!((var - 2.25).abs() <= 3.0 * se, "{var} +- {se}");
}

#[test]
fn ou_mean_reversion() {
    for lambda_0 in [0.009, 0.05] {
        let p = LogOuParams::new(0.5, 0.009f64.ln(), 1.5, lambda_0).unwrap();
        let (m, se) = mean_stderr(&terminal_y(&p, 100_000, 2));
        let want = p.y_bar + (p.y_0() - p.y_bar) * (-0.5f64).exp();
        assert!((m - want).abs() <= 3.0 * se, "lambda_0={lambda_0}: {m} vs {want}");
    }
}

#[test]
fn constant_intensity_survival_is_exact() {
    let p = LogOuParams::anchored(0.5, 0.0, 0.009).unwrap();
    let grid = uniform_grid(1.0, 1.0 / 52.0);
    let surv = map_paths(3, 10_000, |_, rng| 1.0 - default_distribution(&simulate_path(&p, &grid, rng).unwrap())[52]);
    let (m, _) = mean_stderr(&surv);
    assert!((m - (-0.009f64).exp()).abs() < 1e-12);
}

/// Refines a path tenfold with `y` linear between nodes.
fn refine(path: &IntensityPath) -> IntensityPath {
    let mut grid = vec![0.0];
    let mut y = vec![path.y_values[0]];
    for i in 1..path.grid.len() {
        let (t0, t1) = (path.grid[i - 1], path.grid[i]);
        let (y0, y1) = (path.y_values[i - 1], path.y_values[i]);
        for j in 1..=10 {
            let w = j as f64 / 10.0;
            grid.push(t0 + w * (t1 - t0));
            y.push(y0 + w * (y1 - y0));
        }
    }
    let n = grid.len() - 1;
    IntensityPath {
        grid,
        y_values: y,
        credit_brownian: vec![0.0; n],
    }
}

#[test]
fn trapezoid_refinement_within_second_order_bound() {
    // Trapezoid error on e^y with y linear over a step is dt e^y dy^2 / 12 to
    // leading order; check the tenfold refinement against that bound.
    let p = LogOuParams::anchored(0.5, 1.5, 0.009).unwrap();
    let grid = uniform_grid(1.0, 1.0 / 252.0);
    let mut rng = gaprisk_core::mc::path_rng(4, 0);
    let path = simulate_path(&p, &grid, &mut rng).unwrap();
    let fine = refine(&path);
    let coarse_p = *default_distribution(&path).last().unwrap();
    let fine_p = *default_distribution(&fine).last().unwrap();
    let bound: f64 = (1..grid.len())
        .map(|i| {
            let dy = path.y_values[i] - path.y_values[i - 1];
            let lam = path.y_values[i].max(path.y_values[i - 1]).exp();
            (grid[i] - grid[i - 1]) * lam * dy * dy / 12.0
        })
        .sum();
    assert!(coarse_p >= fine_p, "trapezoid over-integrates a convex hazard");
    assert!(coarse_p - fine_p <= 1.01 * bound, "{coarse_p} vs {fine_p}, bound {bound}");
}

#[test]
#[ignore = "trapezoid error at sigma_c = 1.5 is of order lambda sigma^2 dt / 12, above 1e-6; see trapezoid_refinement_within_second_order_bound"]
fn trapezoid_refinement_within_1e6() {
    let p = LogOuParams::anchored(0.5, 1.5, 0.009).unwrap();
    let grid = uniform_grid(1.0, 1.0 / 52.0);
    let mut rng = gaprisk_core::mc::path_rng(4, 0);
    let path = simulate_path(&p, &grid, &mut rng).unwrap();
    let a = *default_distribution(&path).last().unwrap();
    let b = *default_distribution(&refine(&path)).last().unwrap();
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn ladder_cds_spreads() {
    let cfg = mc(10_000, 5);
    for (lambda_0, target) in [(0.009, 0.0125), (0.02, 0.025)] {
        let p = LogOuParams::anchored(0.5, 1.5, lambda_0).unwrap();
        let s = price_cds(&p, 5.0, 0.4, &cfg).unwrap();
        assert!(
            (s.spread - target).abs() <= 3.0 * s.stderr + 0.0015,
            "lambda_0={lambda_0}: {} +- {}",
            s.spread,
            s.stderr
        );
    }
}

#[test]
fn cds_spread_rises_with_level_and_volatility() {
    let cfg = mc(4000, 6);
    let mut prev = 0.0;
    for l in [0.005, 0.01, 0.02, 0.04] {
        let s = price_cds(&LogOuParams::anchored(0.5, 1.5, l).unwrap(), 5.0, 0.4, &cfg).unwrap().spread;
        assert!(s > prev);
        prev = s;
    }
    let mut prev = 0.0;
    for sc in [0.0, 0.5, 1.0, 1.5] {
        let s = price_cds(&LogOuParams::anchored(0.5, sc, 0.009).unwrap(), 5.0, 0.4, &cfg).unwrap().spread;
        assert!(s > prev, "sigma_c={sc}");
        prev = s;
    }
}

#[test]
fn calibration_recovers_ladder_levels() {
    let cfg = mc(10_000, 7);
    for (target, want) in [(0.0125, 0.009), (0.05, 0.0488)] {
        let p = calibrate_lambda0(0.5, 1.5, 5.0, target, 0.4, &cfg).unwrap();
        assert!((p.lambda_0 / want - 1.0).abs() < 0.2, "{target}: {}", p.lambda_0);
        assert_eq!(p.y_bar, p.lambda_0.ln());
        let s = price_cds(&p, 5.0, 0.4, &cfg).unwrap();
        assert!((s.spread - target).abs() <= 2.0 * s.stderr.max(1e-9) + 1e-7);
    }
}

#[test]
fn lehman_bootstrap_round_trip() {
    let quotes = [(0.5, 0.1413), (1.0, 0.1369), (2.0, 0.1009)];
    let curve = bootstrap_hazard(&quotes, 0.4).unwrap();
    for (t, s) in quotes {
        assert!((curve.par_spread(t, 0.4) - s).abs() < 1e-8);
    }
    let h = curve.hazards.clone();
    assert!(h.iter().all(|v| *v >= 0.0));
    assert!(h[2] < h[1]);
}
