use std::f64::consts::PI;

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlab::domain::*;
use stlab::Error;

fn grid(nx: usize, nz: usize) -> Grid {
    Grid::new(nx, nz, 1.0).unwrap()
}

fn random_smooth(g: &Grid, seed: u64) -> RealField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<(f64, f64, f64)> = (0..12)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..3.0)))
        .collect();
    RealField::from_fn(g.clone(), |x, z| {
        coef.iter()
            .enumerate()
            .map(|(i, &(a, b, c))| {
                let k = (i % 4) as f64;
                (a * (k * x).cos() + b * (k * x).sin()) * (c * z + i as f64).cos()
            })
            .sum()
    })
}

#[test]
fn grid_rejects_bad_sizes() {
    assert!(matches!(Grid::new(7, 33, 1.0), Err(Error::Config(_))));
    assert!(matches!(Grid::new(6, 33, 1.0), Err(Error::Config(_))));
    let e = Grid::new(16, 4, 1.0).unwrap_err().to_string();
    assert!(e.contains("nz must be >= 9"), "{e}");
    assert!(Grid::new(16, 33, 0.0).is_err());
}

#[test]
fn constant_field_has_only_mean_mode() {
    let g = grid(16, 17);
    let s = RealField::from_fn(g.clone(), |_, _| 1.0).to_spectral();
    for iz in 0..g.nz {
        assert!((s.mode(0, iz).re - 1.0).abs() < 1e-14);
        for k in 1..g.n_modes() as i64 {
            assert!(s.mode(k, iz).norm() < 1e-14);
        }
    }
}

#[test]
fn sine_has_half_amplitude_modes() {
    let g = grid(16, 9);
    let s = RealField::from_fn(g.clone(), |x, _| x.sin()).to_spectral();
    for iz in 0..g.nz {
        assert!((s.mode(1, iz).norm() - 0.5).abs() < 1e-14);
        assert!((s.mode(-1, iz).norm() - 0.5).abs() < 1e-14);
        assert!(s.mode(0, iz).norm() < 1e-14);
        assert!(s.mode(2, iz).norm() < 1e-14);
    }
}

#[test]
fn x_derivative_of_sine_is_exact() {
    let g = grid(32, 9);
    let f = RealField::from_fn(g.clone(), |x, _| x.sin());
    let d = differentiate(&f, Axis::X, 1).unwrap();
    let e = RealField::from_fn(g, |x, _| x.cos());
    assert!(d.axpy(-1.0, &e).max_abs() < 1e-12);
}

#[test]
fn z_derivative_reproduces_quadratics() {
    let g = grid(8, 33);
    let f = RealField::from_fn(g.clone(), |_, z| z * z);
    let d = differentiate(&f, Axis::Z, 1).unwrap();
    let e = RealField::from_fn(g, |_, z| 2.0 * z);
    assert!(d.axpy(-1.0, &e).max_abs() < 1e-11);
}

#[test]
fn z_derivative_converges_at_fourth_order() {
    let mut errs = Vec::new();
    for nz in [33, 65, 129] {
        let g = grid(8, nz);
        let f = RealField::from_fn(g.clone(), |x, z| z.exp() * x.sin());
        let d = differentiate(&f, Axis::Z, 1).unwrap();
        let e = RealField::from_fn(g, |x, z| z.exp() * x.sin());
        errs.push(d.axpy(-1.0, &e).max_abs());
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 4.0).abs() < 0.2, "observed order {order}");
    }
}

#[test]
fn unsupported_derivative_orders() {
    let g = grid(8, 17);
    let f = RealField::zeros(g);
    assert!(matches!(differentiate(&f, Axis::X, 5), Err(Error::Unsupported(_))));
    assert!(matches!(differentiate(&f, Axis::Z, 0), Err(Error::Unsupported(_))));
    assert!(matches!(sobolev_norm(&f, 7), Err(Error::Unsupported(_))));
}

#[test]
fn mean_fluct_examples() {
    let g = grid(16, 33);
    let f = RealField::from_fn(g.clone(), |x, z| 1.0 - z + 0.01 * x.sin());
    let p = split_mean_fluct(&f);
    for (z, m) in p.mean.z.iter().zip(&p.mean.values) {
        assert!((m - (1.0 - z)).abs() < 1e-14);
    }
    let e = RealField::from_fn(g.clone(), |x, _| 0.01 * x.sin());
    assert!(p.fluct.axpy(-1.0, &e).max_abs() < 1e-14);

    let f = RealField::from_fn(g, |x, z| x.cos() * (PI * z).cos());
    let p = split_mean_fluct(&f);
    assert!(p.mean.values.iter().all(|m| m.abs() < 1e-14));
}

#[test]
fn sobolev_norms_of_sine() {
    let g = grid(32, 65);
    let f = RealField::from_fn(g, |x, _| x.sin());
    assert!((sobolev_norm(&f, 0).unwrap() - PI.sqrt()).abs() < 1e-12);
    assert!((f.l2_norm() - PI.sqrt()).abs() < 1e-12);
    assert!((sobolev_norm(&f, 1).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-10);
}

#[test]
fn sobolev_norm_matches_direct_quadrature() {
    let g = grid(16, 65);
    let f = random_smooth(&g, 3);
    // direct: sum over mixed derivatives, physical quadrature
    let mut direct = 0.0;
    for a in 0..=2 {
        for b in 0..=(2 - a) {
            let d = mixed_derivative(&f, a, b).unwrap();
            direct += d.inner(&d);
        }
    }
    let s = sobolev_norm(&f, 2).unwrap();
    assert!((s * s - direct).abs() / direct < 1e-10, "{} vs {direct}", s * s);
}

#[test]
fn channel_energy_of_affine_profile() {
    let g = grid(16, 33);
    let rho = RealField::from_fn(g.clone(), |_, z| 1.0 - z);
    let zf = RealField::from_fn(g, |_, z| z);
    assert!((rho.inner(&zf) - PI / 3.0).abs() < 1e-13);
}

#[test]
fn z_quadrature_exact_for_cubics() {
    let g = grid(8, 17);
    let f = RealField::from_fn(g, |_, z| 4.0 * z.powi(3) - z * z + 2.0);
    let exact = 2.0 * PI * (1.0 - 1.0 / 3.0 + 2.0);
    assert!((f.integral() - exact).abs() < 1e-12);
}

#[test]
fn snapshot_roundtrip_and_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(16, 17);
    let f = random_smooth(&g, 11);
    let p = dir.path().join("f.stlb");
    write_snapshot(&p, &f, 3.25).unwrap();
    let (h, t) = read_snapshot(&p).unwrap();
    assert_eq!(t, 3.25);
    assert_eq!(h.values(), f.values());
    assert_eq!(h.grid(), f.grid());
    std::fs::write(&p, b"nope").unwrap();
    assert!(read_snapshot(&p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        rng_seed: RngSeed::Fixed(3),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn spectral_roundtrip(seed in any::<u64>(), nxh in 4usize..12, nz in 9usize..40) {
        let g = grid(2 * nxh, nz);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..g.nx * g.nz).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = RealField::from_values(g, vals).unwrap();
        let back = f.to_spectral().to_real();
        prop_assert!(back.axpy(-1.0, &f).max_abs() < 1e-12);
    }

    #[test]
    fn parseval(seed in any::<u64>()) {
        let g = grid(16, 33);
        let f = random_smooth(&g, seed);
        let s = f.to_spectral();
        let w = g.z_weights();
        let half = g.nx / 2;
        let mut spec = 0.0;
        for k in 0..=half {
            let mult = if k == 0 || k == half { 1.0 } else { 2.0 };
            spec += mult * s.column(k).iter().zip(&w).map(|(c, w)| c.norm_sqr() * w).sum::<f64>();
        }
        spec *= 2.0 * PI;
        let phys = f.inner(&f);
        prop_assert!((spec - phys).abs() <= 1e-10 * phys);
    }

    #[test]
    fn mean_fluct_orthogonal(seed in any::<u64>()) {
        let g = grid(16, 33);
        let f = random_smooth(&g, seed);
        let p = split_mean_fluct(&f);
        let m = p.mean.to_field(&g);
        let total = f.inner(&f);
        let parts = m.inner(&m) + p.fluct.inner(&p.fluct);
        prop_assert!((total - parts).abs() <= 1e-10 * total);
        // rows of the fluctuation average to zero
        for iz in 0..g.nz {
            let mean: f64 = (0..g.nx).map(|ix| p.fluct.get(ix, iz)).sum::<f64>() / g.nx as f64;
            prop_assert!(mean.abs() < 1e-13);
        }
        prop_assert!(p.reconstruct().axpy(-1.0, &f).max_abs() < 1e-14);
    }

    #[test]
    fn x_derivative_commutes_with_transform(seed in any::<u64>(), order in 1usize..=4) {
        let g = grid(16, 17);
        // band-limited below Nyquist
        let f = random_smooth(&g, seed);
        let d = differentiate(&f, Axis::X, order).unwrap().to_spectral();
        let mut s = f.to_spectral();
        dx_spectral(&mut s, order);
        for k in 0..g.n_modes() {
            for (a, b) in d.column(k).iter().zip(s.column(k)) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }
    }
}
