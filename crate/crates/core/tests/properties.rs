use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use backmap::flow::BumpProfile;
use backmap::homotopy::{boundary_degree, winding_number, ParameterRectangle, PlanarPath, SyntheticField};
use backmap::linalg::Vec3;
use backmap::stochastic::leray::inner_product;
use backmap::stochastic::{
    leray_project, mc_magnetization, spectral_divergence, Blob, BoxGrid, ClebschData, MagnetizationField, McOptions,
};
use proptest::prelude::*;

/// `k` turns around a circle of radius `r` centred at `c`.
fn loop_around(c: [f64; 2], r: f64, k: i64, n: usize) -> PlanarPath {
    let dir = k.signum() as f64;
    let turns = k.unsigned_abs().max(1) as f64;
    PlanarPath::closed(
        (0..n)
            .map(|i| {
                let th = dir * TAU * turns * i as f64 / n as f64;
                [c[0] + r * th.cos(), c[1] + r * th.sin()]
            })
            .collect(),
    )
}

fn transform(p: &PlanarPath, angle: f64, scale: f64, shift: usize) -> PlanarPath {
    let (s, c) = angle.sin_cos();
    let mut pts: Vec<[f64; 2]> = p.points.iter().map(|q| [scale * (c * q[0] - s * q[1]), scale * (s * q[0] + c * q[1])]).collect();
    let n = pts.len();
    pts.rotate_left(shift % n);
    PlanarPath::closed(pts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn winding_counts_turns_around_the_origin(
        cx in -2.0..2.0f64, cy in -2.0..2.0f64, r in 0.3..2.5f64, k in prop::sample::select(vec![-2i64, -1, 1, 2]),
    ) {
        let d = cx.hypot(cy);
        prop_assume!((d - r).abs() > 0.05);
        let expected = if d < r { k } else { 0 };
        prop_assert_eq!(winding_number(&loop_around([cx, cy], r, k, 256)).unwrap(), expected);
    }

    #[test]
    fn winding_ignores_rotation_scaling_and_start_point(
        cx in -1.0..1.0f64, cy in -1.0..1.0f64, angle in -PI..PI, scale in 0.01..100.0f64, shift in 0usize..256,
    ) {
        let p = loop_around([cx, cy], 1.2, 1, 256);
        prop_assume!((cx.hypot(cy) - 1.2).abs() > 0.05);
        let w = winding_number(&p).unwrap();
        prop_assert_eq!(winding_number(&transform(&p, angle, scale, shift)).unwrap(), w);
        prop_assert_eq!(winding_number(&p.reversed()).unwrap(), -w);
    }

    #[test]
    fn rectangle_degree_is_additive_and_locates_the_zero(
        kappa in 0.5..2.0f64, t_lo in 0.05..2.0f64, dt in 0.1..1.5f64, s_lo in -1.5..1.0f64, ds in 0.1..1.5f64,
        f in 0.2..0.8f64,
    ) {
        let field = SyntheticField { kappa };
        let rect = ParameterRectangle::new(t_lo, t_lo + dt, s_lo, s_lo + ds, 64, 64).unwrap();
        let (Ok(whole), Ok(parts)) = (
            boundary_degree(&rect, &field),
            rect.quadrants_at(f).iter().map(|q| boundary_degree(q, &field)).collect::<Result<Vec<_>, _>>(),
        ) else {
            return Err(TestCaseError::reject("boundary passes too close to the zero"));
        };
        prop_assert_eq!(parts.iter().sum::<i64>(), whole);
        // the only zero is (κ, 0), of local degree −1
        let inside = rect.t_lo < kappa && kappa < rect.t_hi && rect.s_lo < 0.0 && 0.0 < rect.s_hi;
        prop_assert_eq!(whole, if inside { -1 } else { 0 });
    }

    #[test]
    fn leray_projection_is_an_orthogonal_projector(
        c in prop::array::uniform3(-0.8..0.8f64), radius in 1.0..2.0f64,
        amp in prop::array::uniform3(-1.0..1.0f64), twist in -1.5..1.5f64,
        c2 in prop::array::uniform3(-0.8..0.8f64), twist2 in -1.5..1.5f64,
    ) {
        let grid = BoxGrid::periodic(4.0, 16);
        let a = MagnetizationField::sample(grid, &Blob { center: c, radius, amplitude: amp, twist });
        let b = MagnetizationField::sample(grid, &Blob { center: c2, radius: 1.5, amplitude: [0.3, -0.2, 0.9], twist: twist2 });
        let pa = leray_project(&a).unwrap().u;
        let pb = leray_project(&b).unwrap().u;
        let ppa = leray_project(&pa).unwrap().u;
        let scale = a.sup_norm().max(1e-300);
        let idem = pa.values.iter().zip(&ppa.values).map(|(x, y)| (Vec3::from(*x) - Vec3::from(*y)).amax()).fold(0.0, f64::max);
        prop_assert!(idem <= 1e-12 * scale, "idempotence defect {idem}");
        let (l, r) = (inner_product(&pa, &b), inner_product(&a, &pb));
        prop_assert!((l - r).abs() <= 1e-12 * (inner_product(&a, &a) * inner_product(&b, &b)).sqrt().max(1e-300));
        prop_assert!(spectral_divergence(&pa).unwrap().iter().all(|d| d.abs() <= 1e-10 * scale));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn monte_carlo_is_a_function_of_the_seed(seed in any::<u64>(), x in prop::array::uniform3(-0.8..0.8f64)) {
        let p = BumpProfile::default_with_angle(PI);
        let clebsch = ClebschData::coordinates(Arc::new(Blob { center: [0.0; 3], radius: 1.5, amplitude: [1.0, 0.2, -0.4], twist: 0.5 }));
        let x = Vec3::from(x);
        let opts = McOptions { n_paths: 32, dt: Some(0.02), seed, antithetic: true, sigma: None, parallel: true };
        let a = mc_magnetization(&p, &clebsch, 1e-2, &x, 0.5, &opts).unwrap();
        let b = mc_magnetization(&p, &clebsch, 1e-2, &x, 0.5, &McOptions { parallel: false, ..opts }).unwrap();
        let c = mc_magnetization(&p, &clebsch, 1e-2, &x, 0.5, &McOptions { seed: seed ^ 1, ..opts }).unwrap();
        prop_assert_eq!(a.mean.map(f64::to_bits), b.mean.map(f64::to_bits));
        prop_assert_eq!(a.stderr.map(f64::to_bits), b.stderr.map(f64::to_bits));
        prop_assert_ne!(a.mean, c.mean);
    }
}
