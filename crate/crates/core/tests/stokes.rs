use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlab::analysis::fit_ladder;
use stlab::blprofiles::SmoothCutoff;
use stlab::domain::*;
use stlab::stokes::*;

fn quartic(z: f64) -> f64 {
    z * z * (1.0 - z) * (1.0 - z)
}

/// θ with ∂ₓθ = Δ²(P(z) sin x) for P = z²(1−z)².
fn quartic_theta(g: &Grid) -> RealField {
    let p2 = |z: f64| 2.0 - 12.0 * z + 12.0 * z * z;
    RealField::from_fn(g.clone(), |x, z| -x.cos() * (24.0 - 2.0 * p2(z) + quartic(z)))
}

/// n-th derivative of q(z) = sin²(πz) eᶻ.
fn q_deriv(z: f64, n: i32) -> f64 {
    let w = 2.0 * PI;
    let c = Complex64::new(1.0, w).powi(n) * Complex64::new(0.0, w * z).exp() * z.exp();
    0.5 * z.exp() - 0.5 * c.re
}

/// Fluctuation vanishing with its normal derivative at both walls.
fn random_clamped(g: &Grid, seed: u64) -> RealField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<(f64, f64, f64)> = (0..9)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..4.0)))
        .collect();
    RealField::from_fn(g.clone(), |x, z| {
        let env = quartic(z);
        coef.iter()
            .enumerate()
            .map(|(i, &(a, b, c))| {
                let k = (1 + i % 3) as f64;
                env * (a * (k * x).cos() + b * (k * x).sin()) * (c * z).cos()
            })
            .sum()
    })
}

#[test]
fn zero_and_stratified_data_give_no_flow() {
    let g = Grid::new(16, 33, 1.0).unwrap();
    let s = StokesSolver::new(&g).unwrap();
    let psi = s.solve_stream(&RealField::zeros(g.clone())).unwrap();
    assert_eq!(psi.max_abs(), 0.0);
    let th = RealField::from_fn(g.clone(), |_, z| (3.0 * z).sin() + z * z);
    assert!(s.solve_stream(&th).unwrap().max_abs() < 1e-15);
}

#[test]
fn quartic_stream_function_recovered_to_round_off() {
    for nz in [65, 129, 257] {
        let g = Grid::new(16, nz, 1.0).unwrap();
        let s = StokesSolver::new(&g).unwrap();
        let exact = RealField::from_fn(g.clone(), |x, z| quartic(z) * x.sin());
        let err = s.solve_stream(&quartic_theta(&g)).unwrap().axpy(-1.0, &exact).l2_norm();
        assert!(err < 1e-9, "nz {nz}: {err}");
    }
}

#[test]
fn non_polynomial_stream_function_converges_at_fourth_order() {
    let mut errs = Vec::new();
    for nz in [65, 129, 257] {
        let g = Grid::new(16, nz, 1.0).unwrap();
        let s = StokesSolver::new(&g).unwrap();
        let exact = RealField::from_fn(g.clone(), |x, z| q_deriv(z, 0) * x.sin());
        let th = RealField::from_fn(g.clone(), |x, z| {
            -x.cos() * (q_deriv(z, 4) - 2.0 * q_deriv(z, 2) + q_deriv(z, 0))
        });
        errs.push(s.solve_stream(&th).unwrap().axpy(-1.0, &exact).l2_norm());
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order} from {errs:?}");
    }
}

#[test]
fn velocity_of_manufactured_stream_function() {
    let g = Grid::new(16, 129, 1.0).unwrap();
    let psi = RealField::from_fn(g.clone(), |x, z| quartic(z) * x.sin());
    let (u1, u2) = velocity(&psi).unwrap();
    let e1 = RealField::from_fn(g.clone(), |x, z| {
        -(2.0 * z * (1.0 - z).powi(2) - 2.0 * z * z * (1.0 - z)) * x.sin()
    });
    let e2 = RealField::from_fn(g.clone(), |x, z| quartic(z) * x.cos());
    assert!(u1.axpy(-1.0, &e1).max_abs() < 1e-10);
    assert!(u2.axpy(-1.0, &e2).max_abs() < 1e-12);
    let (a, b) = velocity(&RealField::zeros(g)).unwrap();
    assert_eq!(a.max_abs() + b.max_abs(), 0.0);
}

#[test]
fn solved_velocity_vanishes_on_walls() {
    let g = Grid::new(32, 129, 1.0).unwrap();
    let s = StokesSolver::new(&g).unwrap();
    let th = RealField::from_fn(g.clone(), |x, z| (2.0 * x).cos() * z + x.sin() * (1.0 - z * z));
    let psi = s.solve_stream(&th).unwrap();
    let (u1, u2) = velocity(&psi).unwrap();
    for ix in 0..g.nx {
        for iz in [0, g.nz - 1] {
            assert!(u1.get(ix, iz).abs() < 1e-10 && u2.get(ix, iz).abs() < 1e-10);
        }
    }
}

#[test]
fn spectrum_matches_dense_eigensolve_for_k0() {
    let g = Grid::new(8, 257, 2.0).unwrap();
    let sp = clamped_spectrum(0, 1, Strip::Symmetric, &[]).unwrap();
    let d = dense_clamped_eigenvalues(&g, 0.0, 1).unwrap();
    assert!((sp[0].lambda - d[0]).abs() / sp[0].lambda < 1e-6);
}

#[test]
fn spectrum_block_matches_dense_eigensolve() {
    let g = Grid::new(8, 257, 2.0).unwrap();
    for k in 0..=4i64 {
        let sp = clamped_spectrum(k, 5, Strip::Symmetric, &[]).unwrap();
        let d = dense_clamped_eigenvalues(&g, k as f64, 5).unwrap();
        for n in 0..5 {
            let rel = (sp[n].lambda - d[n]).abs() / sp[n].lambda;
            assert!(rel < 1e-5, "(n, k) = ({n}, {k}): {rel}");
        }
    }
}

#[test]
fn spectrum_ratio_is_bounded() {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..=20i64 {
        for e in clamped_spectrum(k, 21, Strip::Symmetric, &[]).unwrap() {
            let d = (((e.n + 1) * (e.n + 1)) as f64 + (k * k) as f64).powi(2);
            lo = lo.min(e.lambda / d);
            hi = hi.max(e.lambda / d);
        }
    }
    assert!(lo >= 1.0 && hi <= 32.0, "[{lo}, {hi}]");
}

#[test]
fn eigenfunctions_satisfy_clamped_conditions() {
    for strip in [Strip::Symmetric, Strip::Unit] {
        for k in [0i64, 1, 3, 7] {
            for e in clamped_spectrum(k, 8, strip, &[]).unwrap() {
                assert!(e.residual < 1e-8, "{strip:?} k {k} n {}: {}", e.n, e.residual);
            }
        }
    }
}

#[test]
fn eigenfunctions_have_unit_norm() {
    let z: Vec<f64> = (0..=4000).map(|i| i as f64 / 4000.0).collect();
    for e in clamped_spectrum(2, 4, Strip::Unit, &z).unwrap() {
        let h = z[1] - z[0];
        let s: f64 = e.eigfun.windows(2).map(|w| 0.5 * h * (w[0] * w[0] + w[1] * w[1])).sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

/// Decay exponent in `(1 + t)` of `‖Δ⁻²(cos x e^{−Z} p(Z) χ(z))‖`,
/// `Z = (1+t)^{1/4} z`, over `10^lo ..= 10^hi`.
fn localized_solve_exponent(p: impl Fn(f64) -> f64, nz: usize, lo: f64, hi: f64) -> f64 {
    let g = Grid::new(8, nz, 1.0).unwrap();
    let s = StokesSolver::new(&g).unwrap();
    let cut = SmoothCutoff { a: 0.25, b: 0.5 };
    let n = (2.0 * (hi - lo)).round() as usize;
    let times: Vec<f64> = (0..=n).map(|i| 10f64.powf(lo + 0.5 * i as f64)).collect();
    let norms: Vec<f64> = times
        .iter()
        .map(|t| {
            let st = (1.0 + t).powf(0.25);
            let f = RealField::from_fn(g.clone(), |x, z| x.cos() * (-st * z).exp() * p(st * z) * cut.value(z));
            s.solve_bilaplacian(&f).unwrap().l2_norm()
        })
        .collect();
    let shifted: Vec<f64> = times.iter().map(|t| 1.0 + t).collect();
    fit_ladder(&shifted, &norms).unwrap().exponent
}

/// Weight with `∫Z² f = ∫Z³ f = 0` for `f = e^{−Z} p(Z)`.
fn moment_free(z: f64) -> f64 {
    1.0 - 2.0 * z / 3.0 + z * z / 12.0
}

#[test]
fn localized_forcing_scaling_t10_to_t1e4() {
    let plain = localized_solve_exponent(|_| 1.0, 1025, 1.0, 4.0);
    let moments = localized_solve_exponent(moment_free, 1025, 1.0, 4.0);
    println!("plain {plain:.4}, moment-free {moments:.4}");
    assert!((0.70..=0.80).contains(&plain), "plain exponent {plain}");
    assert!((0.95..=1.05).contains(&moments), "moment-free exponent {moments}");
}

#[test]
fn localized_forcing_scaling_asymptotic() {
    // thin layers: 3/4 from the Z² moment; with the Z², Z³ moments removed
    // the local part δ⁴·δ^{1/2} dominates, i.e. 9/8
    let plain = localized_solve_exponent(|_| 1.0, 4097, 6.0, 8.0);
    assert!((0.70..=0.80).contains(&plain), "plain exponent {plain}");
    let moments = localized_solve_exponent(moment_free, 4097, 6.0, 8.0);
    assert!((1.10..=1.20).contains(&moments), "moment-free exponent {moments}");
}

#[test]
fn interpolation_inequality_for_single_mode() {
    let g = Grid::new(16, 257, 1.0).unwrap();
    let s = StokesSolver::new(&g).unwrap();
    for seed in 0..5 {
        let th = random_clamped(&g, seed);
        let th = split_mean_fluct(&th).fluct;
        let psi = s.solve_stream(&th).unwrap();
        let lap = |f: &RealField| {
            mixed_derivative(f, 2, 0)
                .unwrap()
                .axpy(1.0, &mixed_derivative(f, 0, 2).unwrap())
        };
        // Δ²ψ = ∂ₓθ, Δ⁴ψ = Δ²∂ₓθ
        let dth = mixed_derivative(&th, 1, 0).unwrap();
        let lhs = dth.l2_norm().powi(2);
        let a = mixed_derivative(&lap(&psi), 1, 0).unwrap().l2_norm();
        // ∂ₓ⁻²Δ⁴ψ = ∂ₓ⁻¹Δ²θ, computed mode by mode
        let bih = lap(&lap(&th));
        let mut sp = bih.to_spectral();
        for k in 0..g.n_modes() {
            let f = if k == 0 || k == g.nx / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, -1.0 / k as f64) };
            sp.column_mut(k).iter_mut().for_each(|c| *c *= f);
        }
        let b = sp.to_real().l2_norm();
        let rhs = a.powf(4.0 / 3.0) * b.powf(2.0 / 3.0);
        assert!(lhs <= 1.05 * rhs, "seed {seed}: {lhs} > {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 50,
        rng_seed: RngSeed::Fixed(6),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn stream_solve_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = Grid::new(16, 33, 1.0).unwrap();
        let solver = StokesSolver::new(&g).unwrap();
        let (f1, f2) = (random_clamped(&g, s1), random_clamped(&g, s2));
        let combo = solver.solve_stream(&f1.scaled(a).axpy(b, &f2)).unwrap();
        let sep = solver.solve_stream(&f1).unwrap().scaled(a).axpy(b, &solver.solve_stream(&f2).unwrap());
        prop_assert!(combo.axpy(-1.0, &sep).max_abs() <= 1e-12 * (1.0 + sep.max_abs()));
    }

    #[test]
    fn stokes_operator_is_positive(seed in any::<u64>()) {
        let g = Grid::new(16, 129, 1.0).unwrap();
        let solver = StokesSolver::new(&g).unwrap();
        let th = split_mean_fluct(&random_clamped(&g, seed)).fluct;
        let psi = solver.solve_stream(&th).unwrap();
        let lhs = mixed_derivative(&psi, 1, 0).unwrap().scaled(-1.0).inner(&th);
        let lap = mixed_derivative(&psi, 2, 0).unwrap().axpy(1.0, &mixed_derivative(&psi, 0, 2).unwrap());
        let rhs = lap.inner(&lap);
        prop_assert!((lhs - rhs).abs() <= 1e-6 * rhs, "{} vs {}", lhs, rhs);
    }
}
