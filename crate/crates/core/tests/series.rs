use nce_core::correlations::*;
use nce_core::fft::wrap;
use nce_core::gridfield::*;
use nce_core::kernels::*;
use nce_core::linalg::Mat2;
use nce_core::sce::*;
use nce_core::NceError;
use proptest::prelude::*;
use std::f64::consts::PI;

fn cfg(order: usize, cavity: usize) -> SeriesConfig {
    SeriesConfig { order, cavity_radius_cells: cavity, ..Default::default() }
}

/// Shortest images of a torus offset; both ±side/2 at the Nyquist offset.
fn images(i: usize, side: usize) -> Vec<i64> {
    let i = i as i64;
    let s = side as i64;
    if 2 * i == s {
        vec![i, -i]
    } else if 2 * i < s {
        vec![i]
    } else {
        vec![i - s]
    }
}

fn brute_a2(chi: &[f64], side: usize, spec: &MediumSpec, cavity: usize) -> Mat2 {
    let h = 1.0 / side as f64;
    let mut acc = Mat2::ZERO;
    for y in 0..side {
        for x in 0..side {
            let (xs, ys) = (images(x, side), images(y, side));
            let w = 1.0 / (xs.len() * ys.len()) as f64;
            for &dy in &ys {
                for &dx in &xs {
                    if ((dx * dx + dy * dy) as f64).sqrt() < cavity as f64 {
                        continue;
                    }
                    acc += t_kernel([dx as f64 * h, dy as f64 * h], spec).unwrap() * (chi[y * side + x] * w);
                }
            }
        }
    }
    acc * (2.0 / (2.0 * PI) * h * h)
}

#[test]
fn a2_matches_direct_double_loop() {
    let side = 8;
    let spec = MediumSpec::wave(1.0, 3.0, 5.0);
    let chi: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.01).collect();
    for cavity in [1, 2] {
        let table = KernelTable::build(&AnalyticKernel(spec), side, 4, cavity).unwrap();
        let a = assemble_a2(&chi, side, &table, &spec).unwrap();
        let b = brute_a2(&chi, side, &spec, cavity);
        assert!((a - b).frobenius() < 1e-12 * (1.0 + b.frobenius()), "{a:?} vs {b:?}");
    }
    let table = KernelTable::build(&AnalyticKernel(spec), side, 4, 1).unwrap();
    assert_eq!(assemble_a2(&vec![0.0; 64], side, &table, &spec).unwrap(), Mat2::ZERO);
    let huge = KernelTable::build(&AnalyticKernel(spec), side, 4, 6).unwrap();
    assert!(matches!(assemble_a2(&chi, side, &huge, &spec), Err(NceError::Param(_))));
}

#[test]
fn isotropic_chi_cancels_for_conduction() {
    let side = 64;
    let spec = MediumSpec::conduction(1.0, 4.0);
    let chi: Vec<f64> = (0..side * side)
        .map(|i| {
            let x = nce_core::fft::min_image(i % side, side) as f64;
            let y = nce_core::fft::min_image(i / side, side) as f64;
            0.25 * (-(x * x + y * y) / 20.0).exp()
        })
        .collect();
    let table = KernelTable::build(&AnalyticKernel(spec), side, 32, 1).unwrap();
    let a = assemble_a2(&chi, side, &table, &spec).unwrap();
    let scale = 0.25 * t_kernel([1.0 / 64.0, 0.0], &spec).unwrap().frobenius();
    assert!(a.frobenius() <= 1e-3 * scale, "{a:?}");
}

#[test]
fn a3_matches_direct_triple_loop() {
    let m = generate_gaussian_levelset(3, 8, 0.1, 0.2, 0.5).unwrap();
    let cs = average_correlations(&[m.clone()], 3, 0.375).unwrap();
    let spec = MediumSpec::conduction(1.0, 6.0);
    let table = KernelTable::build(&AnalyticKernel(spec), 8, 6, 1).unwrap();
    let a3 = assemble_a3(&cs, &table, &spec, None, None).unwrap();

    let s = 8;
    let h = 1.0 / s as f64;
    let cell = |x: i64, y: i64| m.get(wrap(x, s), wrap(y, s)) as f64;
    let s2 = |r: [i64; 2]| (0..64).map(|j| cell(j % 8, j / 8) * cell(j % 8 + r[0], j / 8 + r[1])).sum::<f64>() / 64.0;
    let s3 = |a: [i64; 2], b: [i64; 2]| {
        (0..64).map(|j| cell(j % 8, j / 8) * cell(j % 8 + a[0], j / 8 + a[1]) * cell(j % 8 + b[0], j / 8 + b[1])).sum::<f64>()
            / 64.0
    };
    let phi = volume_fraction(&m);
    let mut acc = Mat2::ZERO;
    for a in -3i64..=3 {
        for b in -3i64..=3 {
            let r1 = [a, b];
            if a * a + b * b > 9 || r1 == [0, 0] {
                continue;
            }
            for c in -3i64..=3 {
                for d in -3i64..=3 {
                    let r2 = [c, d];
                    let r21 = [c - a, d - b];
                    if c * c + d * d > 9 || r2 == [0, 0] || r21 == [0, 0] {
                        continue;
                    }
                    let delta = s2(r1) * s2(r21) - phi * s3(r1, r2);
                    let t1 = t_kernel([a as f64 * h, b as f64 * h], &spec).unwrap();
                    let t2 = t_kernel([r21[0] as f64 * h, r21[1] as f64 * h], &spec).unwrap();
                    acc += t1 * t2 * delta;
                }
            }
        }
    }
    let f = 2.0 / (2.0 * PI) * h * h;
    let want = acc * (-f * f / phi);
    assert!((a3 - want).frobenius() < 1e-10 * (1.0 + want.frobenius()), "{a3:?} vs {want:?}");
}

#[test]
fn a3_vanishes_without_three_point_structure() {
    let ones = average_correlations(&[Microstructure::filled(16, 1).unwrap()], 3, 0.25).unwrap();
    let spec = MediumSpec::conduction(1.0, 6.0);
    let table = KernelTable::build(&AnalyticKernel(spec), 16, 8, 1).unwrap();
    assert!(assemble_a3(&ones, &table, &spec, None, None).unwrap().frobenius() < 1e-14);
}

#[test]
fn solve_examples() {
    let spec = MediumSpec::conduction(5.0, 20.0);
    let zero = SeriesTerms { a2: Mat2::ZERO, a3: None, cavity_radius_cells: 1 };
    let e = solve_effective(&zero, 0.6, 0.5, &spec).unwrap();
    assert!((e.m - Mat2::diag(5.0 * 1.3 / 0.7, 5.0 * 1.3 / 0.7)).frobenius() < 1e-12);
    assert!((5.0f64 * 1.3 / 0.7 - 9.2857).abs() < 1e-4);
    let d = d_map(&e, 0.6, 0.5, &spec).unwrap();
    assert!((d - Mat2::diag(0.3, 0.3)).frobenius() < 1e-12);
    assert_eq!(d_hat(&zero, 0.6, 0.5), Mat2::diag(0.3, 0.3));
    assert_eq!(solve_effective(&zero, 0.0, 0.5, &spec).unwrap().m, Mat2::diag(5.0, 5.0));
    assert_eq!(solve_effective(&zero, 0.6, 0.0, &spec).unwrap().m, Mat2::diag(5.0, 5.0));
    assert!(d_map(&EffectiveTensor::isotropic(5.0, MediumKind::Conduction), 0.6, 0.5, &spec).is_err());
    // R − β²φ²I singular.
    let sing = SeriesTerms { a2: Mat2::diag(0.6 * 0.5 / 0.36 - 0.25, 0.0), a3: None, cavity_radius_cells: 1 };
    assert!(matches!(solve_effective(&sing, 0.6, 0.5, &spec), Err(NceError::NearPercolation { .. })));
}

#[test]
fn predict_examples() {
    let spec = MediumSpec::conduction(5.0, 20.0);
    let k = AnalyticKernel(spec);
    let zeros = average_correlations(&[Microstructure::filled(16, 0).unwrap()], 2, 0.1).unwrap();
    assert_eq!(predict(&zeros, &spec, &k, &cfg(2, 1)).unwrap().m, Mat2::diag(5.0, 5.0));
    let ones = average_correlations(&[Microstructure::filled(16, 1).unwrap()], 3, 0.2).unwrap();
    for order in [2, 3] {
        let e = predict(&ones, &spec, &k, &cfg(order, 1)).unwrap();
        assert!((e.m - Mat2::diag(20.0, 20.0)).frobenius() < 1e-12);
    }
    let m = generate_gaussian_levelset(1, 64, 0.02, 0.2, 0.5).unwrap();
    let cs = average_correlations(&[m], 2, 0.1).unwrap();
    let e = predict(&cs, &spec, &k, &cfg(2, 1)).unwrap();
    assert!(e.m.get(1, 1).re > e.m.get(0, 0).re, "{:?}", e.m);
    assert!(predict(&cs, &spec, &k, &cfg(4, 1)).is_err());
}

#[test]
fn rotating_the_structure_rotates_the_tensor() {
    let spec = MediumSpec::conduction(5.0, 20.0);
    let k = AnalyticKernel(spec);
    let m = generate_gaussian_levelset(8, 32, 0.04, 0.12, 0.4).unwrap();
    for order in [2, 3] {
        let a = predict(&average_correlations(&[m.clone()], order, 0.125).unwrap(), &spec, &k, &cfg(order, 2)).unwrap();
        let b = predict(&average_correlations(&[m.rotated90()], order, 0.125).unwrap(), &spec, &k, &cfg(order, 2)).unwrap();
        let want = a.m.rotated(PI / 2.0);
        assert!((b.m - want).frobenius() <= 1e-6 * a.m.frobenius(), "order {order}: {:?} vs {want:?}", b.m);
    }
}

#[test]
fn wiener_bounds_on_isotropic_inputs() {
    let (s0, s1) = (5.0, 20.0);
    let spec = MediumSpec::conduction(s0, s1);
    let k = AnalyticKernel(spec);
    for seed in 0..3 {
        let m = generate_gaussian_levelset(seed, 32, 0.06, 0.06, 0.4).unwrap();
        let phi = volume_fraction(&m);
        let lo = 1.0 / (phi / s1 + (1.0 - phi) / s0);
        let hi = phi * s1 + (1.0 - phi) * s0;
        for order in [2, 3] {
            let e = predict(&average_correlations(&[m.clone()], order, 0.125).unwrap(), &spec, &k, &cfg(order, 1)).unwrap();
            for v in [e.m.get(0, 0).re, e.m.get(1, 1).re] {
                assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
            }
        }
    }
}

#[test]
fn orders_agree_when_delta3_vanishes() {
    let spec = MediumSpec::conduction(5.0, 20.0);
    let k = AnalyticKernel(spec);
    let m = generate_gaussian_levelset(2, 16, 0.1, 0.1, 0.5).unwrap();
    let mut cs = average_correlations(&[m], 3, 0.25).unwrap();
    // Overwrite S₃ so that Δ₃ ≡ 0 on the window.
    let t = cs.s3.clone().unwrap();
    let records: Vec<_> = t
        .records()
        .map(|(r1, r2, _)| (r1, r2, cs.s2_at(r1) * cs.s2_at([r2[0] - r1[0], r2[1] - r1[1]]) / cs.phi))
        .collect();
    cs.s3 = Some(S3Table::from_records(t.radius_cells(), &records).unwrap());
    let a = predict(&cs, &spec, &k, &cfg(2, 1)).unwrap();
    let b = predict(&cs, &spec, &k, &cfg(3, 1)).unwrap();
    assert!((a.m - b.m).frobenius() < 1e-12);
}

proptest! {
    #[test]
    fn d_round_trip(a in -0.05f64..0.05, b in -0.05f64..0.05, c in -0.05f64..0.05, beta in 0.1f64..0.9, phi in 0.1f64..0.9) {
        let spec = MediumSpec::conduction(2.0, 3.0);
        let terms = SeriesTerms { a2: Mat2::real(a, b, b, c), a3: Some(Mat2::real(c, a, a, b)), cavity_radius_cells: 1 };
        let e = solve_effective(&terms, beta, phi, &spec).unwrap();
        let d = d_map(&e, beta, phi, &spec).unwrap();
        let dh = d_hat(&terms, beta, phi);
        prop_assert!((d - dh).frobenius() < 1e-10 * (1.0 + dh.frobenius()));
    }
}
