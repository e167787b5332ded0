//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p spca-core --test acceptance`.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use spca_core::harness::{
    fit_replicates, linear_grid, run_sim1, run_sim2, scaled_deviation_cov, write_sim1_csv, write_sim2_csv,
    Sim1Config, Sim1Variant, Sim1Row, Sim2Config, Sim2Method,
};
use spca_core::linalg::{jacobi_eigen, minus_plus_norms, norm};
use spca_core::objective::rank_two_nuclear_norm;
use spca_core::sampling::Stream;
use spca_core::theory::{tau_quadrature, threshold_constant};
use spca_core::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    jacobi_eigen(m).values.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn within_budget(elapsed: Duration, secs: f64) -> bool {
    elapsed.as_secs_f64() < secs
}

fn c1_thresholds() -> Outcome {
    let t0 = Instant::now();
    let l2 = lambda_star(2).unwrap();
    let l3 = lambda_star(3).unwrap();
    let l4 = lambda_star(4).unwrap();
    let el = t0.elapsed();
    let pass = (l2 - 1.0).abs() <= 1e-6
        && (l3 - 1.815).abs() <= 0.005
        && (l4 - 2.414_214).abs() <= 1e-6
        && within_budget(el, 1.0);
    outcome(pass, format!("λ*2={l2:.9} λ*3={l3:.9} λ*4={l4:.9} in {el:.2?}"))
}

fn c2_constant() -> Outcome {
    let t0 = Instant::now();
    let c = threshold_constant();
    let p = 10_000;
    let t = tau(c * (p as f64).sqrt(), p).unwrap().tau;
    let el = t0.elapsed();
    let pass = (c - 1.633_978).abs() <= 1e-4 && (t - 0.5).abs() < 0.005 && within_budget(el, 5.0);
    outcome(pass, format!("C={c:.9} τ(C√p,p)={t:.6} at p=1e4 in {el:.2?}"))
}

fn c3_closed_vs_quadrature() -> Outcome {
    let t0 = Instant::now();
    let mut worst = 0.0_f64;
    for &lambda in &[1.01, 1.1, 1.5, 2.0, 5.0, 20.0, 100.0] {
        for p in 2..=4 {
            let a = tau_closed(lambda, p).unwrap().tau;
            let b = tau_quadrature(lambda, p).unwrap().tau;
            worst = worst.max((a - b).abs());
        }
    }
    let el = t0.elapsed();
    outcome(
        worst <= 1e-8 && within_budget(el, 5.0),
        format!("max |closed - quad| = {worst:.2e} in {el:.2?}"),
    )
}

fn c4_scaling() -> Outcome {
    let t0 = Instant::now();
    let p = 10_000;
    let t = tau(2.0, p).unwrap();
    let pt = p as f64 * t.tau;
    let pt0 = p as f64 * t.tau0;
    let el = t0.elapsed();
    let pass = (pt - 4.0).abs() < 0.02 && (pt0 - 1.0).abs() < 0.01 && within_budget(el, 5.0);
    outcome(pass, format!("p·τ={pt:.6} p·τ0={pt0:.6} at p=1e4 in {el:.2?}"))
}

fn c5_descent_suite() -> Outcome {
    let t0 = Instant::now();
    let mut rng = Stream::new(2024);
    let cfg = SolverConfig::default();

    let mut descent_failures = 0;
    let mut iterations = 0;
    for _ in 0..500 {
        let p = 1 + (rng.uniform() * 5.0) as usize;
        let n = 1 + (rng.uniform() * 50.0) as usize;
        let values: Vec<f64> = (0..n * p).map(|_| rng.normal() * (0.2 + 3.0 * rng.uniform())).collect();
        let data = DataSet::new(n, p, values).unwrap();
        let fit = solve(&data, &cfg, None).unwrap();
        iterations += fit.iterations;
        if fit.trace.windows(2).any(|w| w[1] > w[0]) {
            descent_failures += 1;
        }
    }

    let mut grad_worst = 0.0_f64;
    let mut checked = 0;
    while checked < 1000 {
        let p = 1 + (rng.uniform() * 5.0) as usize;
        let n = 1 + (rng.uniform() * 20.0) as usize;
        let data = DataSet::new(n, p, (0..n * p).map(|_| rng.normal()).collect()).unwrap();
        let v: Vec<f64> = (0..p).map(|_| 1.5 * rng.normal()).collect();
        // keep the finite-difference stencil well away from the kinks at ±X_i
        let clearance = data
            .rows()
            .map(|x| {
                let (a, b) = minus_plus_norms(&v, x);
                a.min(b)
            })
            .fold(f64::INFINITY, f64::min);
        if clearance < 0.05 {
            continue;
        }
        checked += 1;
        let g = gradient(&v, &data).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..p)
            .map(|j| {
                let mut up = v.clone();
                let mut dn = v.clone();
                up[j] += h;
                dn[j] -= h;
                (objective_value(&up, &data).unwrap() - objective_value(&dn, &data).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        grad_worst = grad_worst.max(norm(&diff) / norm(&g).max(1.0));
    }

    let mut nuclear_worst = 0.0_f64;
    for _ in 0..1000 {
        let p = 1 + (rng.uniform() * 6.0) as usize;
        let a: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let (dm, dp) = minus_plus_norms(&a, &b);
        let direct = dm * dp;
        let nuc = rank_two_nuclear_norm(&a, &b);
        nuclear_worst = nuclear_worst.max((nuc - direct).abs() / direct.max(1e-300));
    }
    let el = t0.elapsed();
    let pass = descent_failures == 0 && grad_worst <= 1e-6 && nuclear_worst <= 1e-10 && within_budget(el, 30.0);
    outcome(
        pass,
        format!(
            "ascents={descent_failures} over {iterations} iterations, grad rel err {grad_worst:.2e}, nuclear rel err {nuclear_worst:.2e} in {el:.2?}"
        ),
    )
}

fn sim1_c6_config() -> Sim1Config {
    Sim1Config {
        models: vec![MarginModel::Normal],
        n_list: vec![800],
        theta_grid: linear_grid(1.0, 3.0, 21),
        replicates: 200,
        seed: 42,
        variant: Sim1Variant::Equal,
    }
}

/// θ at which the mean `|v_{n1}|` first rises through 0.1, interpolating
/// linearly between grid points.
fn crossover(rows: &[Sim1Row]) -> Option<f64> {
    rows.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.mean_abs_v1 < 0.1 && b.mean_abs_v1 >= 0.1)
            .then(|| a.theta + (0.1 - a.mean_abs_v1) / (b.mean_abs_v1 - a.mean_abs_v1) * (b.theta - a.theta))
    })
}

fn c6_dichotomy(csv: &mut Vec<u8>) -> Outcome {
    let t0 = Instant::now();
    let rows = run_sim1(&sim1_c6_config()).unwrap();
    write_sim1_csv(&rows, &mut *csv).unwrap();
    let at = |theta: f64| rows.iter().find(|r| (r.theta - theta).abs() < 1e-9).unwrap();
    let lo = at(1.2);
    let hi = at(2.8);
    let cross = crossover(&rows);
    let el = t0.elapsed();
    let pass = lo.mean_abs_v1 < 0.1
        && hi.mean_abs_v1 > 1.0
        && lo.mean_tail_norm < 0.2
        && hi.mean_tail_norm < 0.2
        && cross.is_some_and(|c| (1.6..=2.0).contains(&c))
        && within_budget(el, 300.0);
    outcome(
        pass,
        format!(
            "θ=1.2: |v1|={:.4} tail={:.4}; θ=2.8: |v1|={:.4} tail={:.4}; crossover {:?} in {el:.2?}",
            lo.mean_abs_v1, lo.mean_tail_norm, hi.mean_abs_v1, hi.mean_tail_norm, cross
        ),
    )
}

fn c7_mad() -> Outcome {
    let t0 = Instant::now();
    let mut rng = Stream::new(7);
    let n = 100_000;
    let data = DataSet::new(n, 1, (0..n).map(|_| rng.normal()).collect()).unwrap();
    let fit = solve(&data, &SolverConfig::default(), None).unwrap();
    let el = t0.elapsed();
    let pass = (fit.norm - 0.67449).abs() < 0.02 && within_budget(el, 10.0);
    outcome(pass, format!("norm={:.5} ({} iterations) in {el:.2?}", fit.norm, fit.iterations))
}

fn c8_consistency() -> Outcome {
    let t0 = Instant::now();
    let spec = EllipticalSpec::axis_aligned(2, 3.0, 1.0, Radial::Gaussian).unwrap();
    let psi = population_norm(3.0, 2, 1.0).unwrap().psi;
    let target = [psi, 0.0];
    let mut medians = Vec::new();
    for (k, &n) in [500usize, 2000, 8000].iter().enumerate() {
        let fits = fit_replicates(&spec, n, 100, 800 + k as u64).unwrap();
        let errs: Vec<f64> = fits
            .iter()
            .map(|f| (f.v[0] - target[0]).hypot(f.v[1] - target[1]))
            .collect();
        medians.push(median(errs));
    }
    let el = t0.elapsed();
    let pass = medians.windows(2).all(|w| w[1] < w[0]) && medians[2] < 0.05 && within_budget(el, 180.0);
    outcome(
        pass,
        format!(
            "ψ={psi:.6}; median errors {:.4} / {:.4} / {:.4} at n=500/2000/8000 in {el:.2?}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn c9_clt() -> Outcome {
    let t0 = Instant::now();
    let spec = EllipticalSpec::axis_aligned(2, 3.0, 1.0, Radial::Gaussian).unwrap();
    let psi = population_norm(3.0, 2, 1.0).unwrap().psi;
    let n = 4000;
    let reps = 1000;
    let fits = fit_replicates(&spec, n, reps, 9).unwrap();
    let sqrt_n = (n as f64).sqrt();
    let vs: Vec<Vec<f64>> = fits.iter().map(|f| f.v.clone()).collect();
    let empirical = scaled_deviation_cov(&vs, &[psi, 0.0], sqrt_n);
    let plugin = ascov_spca(&spec, psi, 200_000, 99).unwrap();
    let rel = spectral_norm(&(&empirical - &plugin.sigma_matrix)) / spectral_norm(&plugin.sigma_matrix);

    // covariance between √n(‖v‖ - ψ) and each direction coordinate, with
    // batch-means standard errors over 20 batches of replicates
    let norms: Vec<f64> = fits.iter().map(|f| sqrt_n * (f.norm - psi)).collect();
    let dirs: Vec<Vec<f64>> = fits
        .iter()
        .map(|f| {
            let d = f.direction.as_ref().unwrap();
            vec![sqrt_n * (d[0] - 1.0), sqrt_n * d[1]]
        })
        .collect();
    let cov = |idx: &[usize], j: usize| {
        let k = idx.len() as f64;
        let mn = idx.iter().map(|&i| norms[i]).sum::<f64>() / k;
        let md = idx.iter().map(|&i| dirs[i][j]).sum::<f64>() / k;
        idx.iter().map(|&i| (norms[i] - mn) * (dirs[i][j] - md)).sum::<f64>() / (k - 1.0)
    };
    let all: Vec<usize> = (0..reps).collect();
    let mut cross_ok = true;
    let mut cross_report = Vec::new();
    for j in 0..2 {
        let whole = cov(&all, j);
        let per: Vec<f64> = all.chunks(reps / 20).map(|b| cov(b, j)).collect();
        let m = per.iter().sum::<f64>() / per.len() as f64;
        let sd = (per.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (per.len() - 1) as f64).sqrt();
        let se = sd / (per.len() as f64).sqrt();
        cross_ok &= whole.abs() < 3.0 * se;
        cross_report.push(format!("{whole:.4}(SE {se:.4})"));
    }
    let el = t0.elapsed();
    let pass = rel <= 0.15 && cross_ok && within_budget(el, 600.0);
    outcome(
        pass,
        format!(
            "spectral rel diff {rel:.4} (q1={:.4}, q2={:.4}; empirical diag {:.4}, {:.4}); cross-cov {} in {el:.2?}",
            plugin.q1,
            plugin.q2,
            empirical[(0, 0)],
            empirical[(1, 1)],
            cross_report.join(", ")
        ),
    )
}

fn sim2_c10_config() -> Sim2Config {
    Sim2Config {
        p_list: vec![5],
        radials: vec![Radial::StudentT(3)],
        lambda_grid: vec![10.0],
        seed: 42,
        method: Sim2Method::Plugin,
        ..Sim2Config::default()
    }
}

fn c10_efficiency(csv: &mut Vec<u8>) -> Outcome {
    let t0 = Instant::now();
    let rows = run_sim2(&sim2_c10_config()).unwrap();
    write_sim2_csv(&rows, &mut *csv).unwrap();
    let row = &rows[0];
    let gauss = EllipticalSpec::axis_aligned(2, 3.0, 1.0, Radial::Gaussian).unwrap();
    let pca = ascov_pca(&gauss, 200_000, 10).unwrap();
    let want = 9.0 / 64.0;
    let el = t0.elapsed();
    let pass = row.log_spca < row.log_pca && (pca.q2 - want).abs() <= 3.0 * pca.q2_se && within_budget(el, 300.0);
    outcome(
        pass,
        format!(
            "t3 p=5 λ=10: log SPCA {:.4} vs log PCA {:.4}; Gaussian coefficient {:.6} ± {:.6} vs 9/64 in {el:.2?}",
            row.log_spca, row.log_pca, pca.q2, pca.q2_se
        ),
    )
}

fn c11_determinism(sim1_first: &[u8], sim2_first: &[u8]) -> Outcome {
    let t0 = Instant::now();
    let mut a = Vec::new();
    write_sim1_csv(&run_sim1(&sim1_c6_config()).unwrap(), &mut a).unwrap();
    let mut b = Vec::new();
    write_sim2_csv(&run_sim2(&sim2_c10_config()).unwrap(), &mut b).unwrap();
    let el = t0.elapsed();
    let pass = a == sim1_first && b == sim2_first && !a.is_empty() && !b.is_empty();
    outcome(
        pass,
        format!("sim1 {} bytes, sim2 {} bytes identical on rerun in {el:.2?}", a.len(), b.len()),
    )
}

fn main() {
    let mut sim1_csv = Vec::new();
    let mut sim2_csv = Vec::new();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 threshold values", c1_thresholds()),
        ("2 constant C", c2_constant()),
        ("3 closed form vs quadrature", c3_closed_vs_quadrature()),
        ("4 scaling laws", c4_scaling()),
        ("5 descent property suite", c5_descent_suite()),
        ("6 identifiability dichotomy", c6_dichotomy(&mut sim1_csv)),
        ("7 MAD recovery", c7_mad()),
        ("8 consistency", c8_consistency()),
        ("9 CLT covariance", c9_clt()),
        ("10 efficiency ordering", c10_efficiency(&mut sim2_csv)),
    ];
    results.push(("11 determinism", c11_determinism(&sim1_csv, &sim2_csv)));

    let mut failed = 0;
    for (name, o) in &results {
        println!("[{}] criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
