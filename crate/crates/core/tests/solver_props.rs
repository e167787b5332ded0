use nalgebra::DMatrix;
use proptest::prelude::*;
use spca_core::linalg::{dot, norm};
use spca_core::sampling::{random_orthogonal, sample_elliptical, EllipticalSpec, Radial, Stream};
use spca_core::solver::{default_init, escape_from};
use spca_core::*;

fn dataset(max_n: usize, p: usize) -> impl Strategy<Value = DataSet> {
    prop::collection::vec(prop::collection::vec(-4.0f64..4.0, p), 1..max_n)
        .prop_map(|rows| DataSet::from_rows(&rows).unwrap())
}

// odd n keeps the one-dimensional minimizer (a median of x²) unique
fn odd_dataset(max_n: usize, p: usize) -> impl Strategy<Value = DataSet> {
    prop::collection::vec(prop::collection::vec(-4.0f64..4.0, p), 1..max_n).prop_map(|mut rows| {
        if rows.len() % 2 == 0 {
            rows.pop();
        }
        DataSet::from_rows(&rows).unwrap()
    })
}

fn any_dataset() -> impl Strategy<Value = DataSet> {
    (1usize..=5).prop_flat_map(|p| dataset(40, p))
}

fn nonzero(data: &DataSet) -> bool {
    data.rows().any(|x| norm(x) > 0.0)
}

fn align(a: &[f64], b: &[f64]) -> f64 {
    let d1: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum::<f64>().sqrt();
    d1.min(d2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn trajectory_never_ascends(data in any_dataset()) {
        prop_assume!(nonzero(&data));
        let fit = solve(&data, &SolverConfig::default(), None).unwrap();
        for w in fit.trace.windows(2) {
            prop_assert!(w[1] <= w[0], "trace {:?}", fit.trace);
        }
        prop_assert!((fit.objective - objective_value(&fit.v, &data).unwrap()).abs() <= 1e-12 * fit.objective.abs().max(1.0));
        prop_assert!(fit.escape_steps_taken <= data.n());
        prop_assert!(fit.within_radius(), "norm {} bound {}", fit.norm, fit.radius.h + 0.5);
        if let Some(d) = &fit.direction {
            prop_assert!((norm(d) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn weiszfeld_is_scaled_gradient_descent(data in any_dataset(), seed in any::<u64>()) {
        let mut s = Stream::new(seed);
        let v: Vec<f64> = (0..data.p()).map(|_| 2.0 * s.normal()).collect();
        prop_assume!(data.rows().all(|x| {
            let (a, b) = spca_core::linalg::minus_plus_norms(&v, x);
            a.min(b) > 1e-3
        }));
        let t = weiszfeld_step(&v, &data).unwrap();
        let g = gradient(&v, &data).unwrap();
        let l = step_scale(&v, &data).unwrap();
        prop_assert!(l >= 2.0 - 1e-12);
        let scale = norm(&v).max(1.0);
        for j in 0..v.len() {
            prop_assert!((t[j] - (v[j] - g[j] / l)).abs() <= 1e-10 * scale);
        }
        let ft = objective_value(&t, &data).unwrap();
        let fv = objective_value(&v, &data).unwrap();
        prop_assert!(ft <= fv + 1e-12 * fv.abs().max(1.0));
        // the update never lands on -v
        if norm(&v) > 0.0 {
            let flipped: f64 = t.iter().zip(&v).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
            prop_assert!(flipped > 0.0);
        }
    }

    #[test]
    fn escape_moves_strictly_descend(data in (1usize..=4).prop_flat_map(|p| dataset(15, p)), k_frac in 0.0f64..1.0) {
        prop_assume!(nonzero(&data));
        let k = ((data.n() as f64 * k_frac) as usize).min(data.n() - 1);
        let cfg = SolverConfig::default();
        let start = data.row(k).to_vec();
        let f0 = objective_value(&start, &data).unwrap();
        match escape_from(k, Sign::Plus, &data, &cfg) {
            Ok(out) => {
                if let Some(eps) = out.epsilon {
                    prop_assert!(out.objective < f0);
                    let m = data.rows().map(|x| 2.0 * norm(x)).fold(0.0, f64::max);
                    prop_assert!(eps < m);
                    let back: Vec<f64> = start.iter().map(|x| -x).collect();
                    prop_assert!(out.point != back || norm(&start) == 0.0);
                } else {
                    prop_assert_eq!(out.point, start);
                }
            }
            Err(e) => {
                let exhausted = matches!(e, SpcaError::BacktrackExhausted { .. });
                prop_assert!(exhausted, "unexpected error {}", e);
            }
        }
    }

    #[test]
    fn radius_bound_scales_with_data(data in any_dataset(), b in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
        prop_assume!(nonzero(&data));
        let r = radius_bound(&data).unwrap();
        let rb = radius_bound(&data.scaled(b)).unwrap();
        prop_assert!(r.coefficient >= 0.5);
        prop_assert!((rb.r0 - b.abs() * r.r0).abs() <= 1e-12 * rb.r0.max(1.0));
        prop_assert!(((rb.h - 1.0) - b.abs() * (r.h - 1.0)).abs() <= 1e-10 * rb.h);
    }

    #[test]
    fn ray_search_brackets_the_minimum(data in (2usize..=4).prop_flat_map(|p| dataset(30, p)), seed in any::<u64>()) {
        prop_assume!(nonzero(&data));
        let mut s = Stream::new(seed);
        let u: Vec<f64> = (0..data.p()).map(|_| s.normal()).collect();
        let un = norm(&u);
        let u: Vec<f64> = u.iter().map(|x| x / un).collect();
        let lam = match ray_line_search(&u, &data) {
            Ok(l) => l,
            Err(SpcaError::DirectionAtSamplePoint { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let g = |t: f64| objective_value(&u.iter().map(|x| t.max(0.0).sqrt() * x).collect::<Vec<_>>(), &data).unwrap();
        let t = lam * lam;
        let h = 1e-4 * t.max(1e-2);
        let tol = 1e-11 * g(t).abs().max(1.0);
        prop_assert!(g(t + h) >= g(t) - tol);
        if t > h {
            prop_assert!(g(t - h) >= g(t) - tol);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solve_is_rotation_equivariant(data in (2usize..=4).prop_flat_map(|p| odd_dataset(40, p)), seed in any::<u64>()) {
        prop_assume!(nonzero(&data));
        let o = random_orthogonal(data.p(), seed);
        let init = default_init(&data).unwrap();
        let fit = solve(&data, &SolverConfig::default(), Some(&init)).unwrap();
        let rotated = data.transformed(&o).unwrap();
        let rinit: Vec<f64> = (&o * DMatrix::from_column_slice(init.len(), 1, &init)).iter().copied().collect();
        let rfit = solve(&rotated, &SolverConfig::default(), Some(&rinit)).unwrap();
        let expect: Vec<f64> = (&o * DMatrix::from_column_slice(fit.v.len(), 1, &fit.v)).iter().copied().collect();
        let scale = fit.radius.h;
        prop_assert!(align(&rfit.v, &expect) <= 1e-6 * scale, "{:?} vs {:?}", rfit.v, expect);
    }

    #[test]
    fn solve_is_scale_equivariant(data in (1usize..=4).prop_flat_map(|p| odd_dataset(40, p)), b in 0.05f64..20.0) {
        prop_assume!(nonzero(&data));
        let fit = solve(&data, &SolverConfig::default(), None).unwrap();
        let sfit = solve(&data.scaled(b), &SolverConfig::default(), None).unwrap();
        prop_assert!((sfit.norm - b * fit.norm).abs() <= 1e-6 * (b * fit.radius.h));
        match (&fit.direction, &sfit.direction) {
            (Some(d), Some(e)) => prop_assert!(align(d, e) <= 1e-6),
            (None, None) => {}
            _ => prop_assert!(fit.norm * b <= 1e-6 && sfit.norm <= 1e-6 * b * fit.radius.h),
        }
    }
}

#[test]
fn gaussian_spike_direction_is_recovered() {
    let spec = EllipticalSpec::axis_aligned(2, 3.0, 1.0, Radial::Gaussian).unwrap();
    let data = sample_elliptical(&spec, 2000, 5).unwrap();
    let fit = solve(&data, &SolverConfig::default(), None).unwrap();
    let d = fit.direction.unwrap();
    assert!(d[0].abs() > 0.98, "{d:?}");
}

#[test]
fn below_threshold_the_fit_collapses() {
    let spec = EllipticalSpec::axis_aligned(3, 3f64.sqrt(), 1.0, Radial::Gaussian).unwrap();
    let data = sample_elliptical(&spec, 2000, 6).unwrap();
    let fit = solve(&data, &SolverConfig::default(), None).unwrap();
    assert!(fit.norm < 0.15, "norm {}", fit.norm);
}

#[test]
fn mirrored_pairs_fit_their_axis() {
    let x = [1.0, 2.0, -2.0];
    let nx = norm(&x);
    let data = DataSet::from_rows(&[x, [-1.0, -2.0, 2.0]]).unwrap();
    assert_eq!(weiszfeld_step(&[0.0; 3], &data).unwrap(), vec![0.0; 3]);
    let fit = solve(&data, &SolverConfig::default(), None).unwrap();
    let d = fit.direction.unwrap();
    assert!((dot(&d, &x).abs() / nx - 1.0).abs() < 1e-9);
    assert!((fit.norm - nx).abs() < 1e-8);
}

#[test]
fn mad_in_one_dimension() {
    let mut s = Stream::new(31);
    let n = 100_000;
    let data = DataSet::new(n, 1, (0..n).map(|_| s.normal()).collect()).unwrap();
    let lam = ray_line_search(&[1.0], &data).unwrap();
    assert!((lam - 0.674_489_750_196_081_7).abs() < 0.02, "{lam}");
}

#[test]
fn pca_examples() {
    let spec = EllipticalSpec::axis_aligned(2, 3.0, 1.0, Radial::Gaussian).unwrap();
    let data = sample_elliptical(&spec, 5000, 8).unwrap();
    let (v, e) = pca_leading(&data).unwrap();
    assert!((e - 9.0).abs() < 0.9, "{e}");
    assert!(v[0] > 0.99);

    let o = random_orthogonal(2, 4);
    let (w, _) = pca_leading(&data.transformed(&o).unwrap()).unwrap();
    let ov: Vec<f64> = (&o * DMatrix::from_column_slice(2, 1, &v)).iter().copied().collect();
    assert!(align(&w, &ov) < 1e-8);
}
