use nce_core::correlations::*;
use nce_core::fft::wrap;
use nce_core::gridfield::*;
use proptest::prelude::*;

fn brute_s2(m: &Microstructure, r: [i64; 2]) -> f64 {
    let s = m.side();
    let mut acc = 0.0;
    for y in 0..s {
        for x in 0..s {
            acc += (m.get(x, y) * m.get(wrap(x as i64 + r[0], s), wrap(y as i64 + r[1], s))) as f64;
        }
    }
    acc / (s * s) as f64
}

fn brute_s3(m: &Microstructure, r1: [i64; 2], r2: [i64; 2]) -> f64 {
    let s = m.side();
    let at = |x: usize, y: usize, r: [i64; 2]| m.get(wrap(x as i64 + r[0], s), wrap(y as i64 + r[1], s));
    let mut acc = 0.0;
    for y in 0..s {
        for x in 0..s {
            acc += (m.get(x, y) * at(x, y, r1) * at(x, y, r2)) as f64;
        }
    }
    acc / (s * s) as f64
}

fn binary_grid(side: usize) -> impl Strategy<Value = Microstructure> {
    proptest::collection::vec(0u8..2, side * side).prop_map(move |c| Microstructure::from_cells(side, c).unwrap())
}

#[test]
fn generation_examples() {
    let m = generate_gaussian_levelset(1, 64, 0.05, 0.05, 0.5).unwrap();
    assert_eq!(m.count_ones(), 2048);
    assert_eq!(m, generate_gaussian_levelset(1, 64, 0.05, 0.05, 0.5).unwrap());
    assert_ne!(m, generate_gaussian_levelset(2, 64, 0.05, 0.05, 0.5).unwrap());
    for bad in [
        generate_gaussian_levelset(1, 48, 0.05, 0.05, 0.5),
        generate_gaussian_levelset(1, 2, 0.05, 0.05, 0.5),
        generate_gaussian_levelset(1, 64, 0.0, 0.05, 0.5),
        generate_gaussian_levelset(1, 64, 0.05, 1.0, 0.5),
        generate_gaussian_levelset(1, 64, 0.05, 0.05, 1.0),
    ] {
        assert!(bad.unwrap_err().is_parameter_error());
    }
}

#[test]
fn anisotropic_generation_decays_faster_along_x() {
    let m = generate_gaussian_levelset(1, 64, 0.001, 0.30, 0.5).unwrap();
    let s2 = two_point(&m);
    for d in 1..6 {
        assert!(s2[d] < s2[d * 64], "d = {d}: {} vs {}", s2[d], s2[d * 64]);
    }
}

#[test]
fn volume_fraction_examples() {
    assert_eq!(volume_fraction(&Microstructure::filled(4, 0).unwrap()), 0.0);
    assert_eq!(volume_fraction(&Microstructure::filled(4, 1).unwrap()), 1.0);
    assert_eq!(volume_fraction(&Microstructure::from_cells(2, vec![1, 0, 0, 0]).unwrap()), 0.25);
    assert!(Microstructure::from_cells(2, vec![1, 2, 0, 0]).is_err());
    assert!(Microstructure::from_cells(2, vec![1, 0, 0]).is_err());
}

#[test]
fn patch_sampling() {
    let m = generate_gaussian_levelset(4, 256, 0.01, 0.01, 0.4).unwrap();
    let p = sample_patches(&m, 64, 256, 7).unwrap();
    assert_eq!(p.len(), 256);
    assert!(p.iter().all(|q| q.side() == 64));
    let mean = p.iter().map(volume_fraction).sum::<f64>() / 256.0;
    assert!((mean - volume_fraction(&m)).abs() < 0.02 * volume_fraction(&m));
    assert_eq!(p, sample_patches(&m, 64, 256, 7).unwrap());
    let whole = sample_patches(&m, 256, 1, 3).unwrap();
    assert_eq!(whole[0].count_ones(), m.count_ones());
    assert!(sample_patches(&m, 512, 1, 0).is_err());
}

#[test]
fn swapped_lengths_transpose_mean_s2() {
    let seeds = 20;
    let mean = |lx: f64, ly: f64| {
        let mut acc = vec![0.0; 32 * 32];
        let mut each = Vec::new();
        for s in 0..seeds {
            let v = two_point(&generate_gaussian_levelset(s, 32, lx, ly, 0.5).unwrap());
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b / seeds as f64);
            each.push(v);
        }
        (acc, each)
    };
    let (a, each) = mean(0.03, 0.12);
    let (b, _) = mean(0.12, 0.03);
    let bt: Vec<f64> = (0..32 * 32).map(|i| b[(i % 32) * 32 + i / 32]).collect();
    let dist = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let spread = each.iter().map(|v| dist(v, &a)).sum::<f64>() / seeds as f64;
    assert!(dist(&a, &bt) < spread, "{} vs {spread}", dist(&a, &bt));
}

#[test]
fn two_point_examples() {
    let m = Microstructure::from_cells(2, vec![1, 0, 0, 0]).unwrap();
    assert_eq!(two_point(&m), vec![0.25, 0.0, 0.0, 0.0]);
    assert!(two_point(&Microstructure::filled(8, 1).unwrap()).iter().all(|v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn shifting_preserves_s2() {
    let m = generate_gaussian_levelset(3, 32, 0.1, 0.05, 0.3).unwrap();
    let a = two_point(&m);
    let b = two_point(&m.shifted(5, -11));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
}

#[test]
fn averaging_examples() {
    let m = generate_gaussian_levelset(5, 16, 0.1, 0.1, 0.5).unwrap();
    let one = average_correlations(&[m.clone()], 3, 0.25).unwrap();
    let two = average_correlations(&[m.clone(), m.clone()], 3, 0.25).unwrap();
    assert_eq!(one.s2, two.s2);
    assert_eq!(one.s3, two.s3);
    assert_eq!(one.s2, two_point(&m));
    assert!(average_correlations(&[m.clone(), Microstructure::filled(8, 0).unwrap()], 2, 0.1).is_err());
    assert!(average_correlations(&[], 2, 0.1).is_err());
    assert!(three_point(&m, 0.6).is_err());

    let big = generate_gaussian_levelset(8, 256, 0.02, 0.02, 0.45).unwrap();
    let patches = sample_patches(&big, 64, 64, 1).unwrap();
    let cs = average_correlations(&patches, 2, 0.1).unwrap();
    assert!((cs.s2[0] - cs.phi).abs() < 1e-12);
    // ΔV·Σχ = mean(φ_p²) − (mean φ_p)², the patch-to-patch variance of φ.
    let fr: Vec<f64> = patches.iter().map(volume_fraction).collect();
    let var = fr.iter().map(|f| f * f).sum::<f64>() / 64.0 - cs.phi * cs.phi;
    assert!((spectral_density(&cs).chi_k[0] - var).abs() < 1e-12);
    let single = average_correlations(&patches[..1], 2, 0.1).unwrap();
    assert!(spectral_density(&single).chi_k[0].abs() < 1e-12);
}

#[test]
fn total_correlation_examples() {
    let m = generate_gaussian_levelset(2, 16, 0.1, 0.1, 0.5).unwrap();
    let cs = average_correlations(&[m], 3, 0.25).unwrap();
    let chi = total_correlation_2(&cs);
    assert!((chi[0] - 0.25).abs() < 1e-15);
    for r in cs.s3.as_ref().unwrap().offsets() {
        assert!(total_correlation_3(&cs, *r, *r).unwrap().abs() < 1e-15);
    }
    assert!(total_correlation_3(&cs, [0, 0], [9, 9]).is_err());

    let ones = average_correlations(&[Microstructure::filled(8, 1).unwrap()], 3, 0.25).unwrap();
    assert!(total_correlation_3(&ones, [1, 0], [0, 2]).unwrap().abs() < 1e-14);

    // White-noise limit: χ vanishes away from the origin.
    let mut far = 0.0;
    for s in 0..10 {
        let cs = average_correlations(&[generate_gaussian_levelset(s, 64, 1e-4, 1e-4, 0.5).unwrap()], 2, 0.1).unwrap();
        far += total_correlation_2(&cs)[20 * 64 + 20] / 10.0;
    }
    assert!(far.abs() < 0.01, "{far}");
}

#[test]
fn spectral_density_examples() {
    let zero = CorrelationSet { side: 8, phi: 0.5, s2: vec![0.25; 64], s3: None, n_patches: 1, window_radius: 0.0 };
    assert!(spectral_density(&zero).chi_k.iter().all(|v| v.abs() < 1e-15));

    let m = generate_gaussian_levelset(6, 32, 0.05, 0.1, 0.4).unwrap();
    let cs = average_correlations(&[m], 2, 0.1).unwrap();
    let sd = spectral_density(&cs);
    let dv = 1.0 / (32.0 * 32.0);
    let dk = (2.0 * std::f64::consts::PI).powi(2);
    let lhs: f64 = sd.chi_k.iter().map(|v| v * v * dk).sum();
    let rhs: f64 = total_correlation_2(&cs).iter().map(|v| v * v * dv).sum::<f64>() * dk;
    assert!((lhs - rhs).abs() < 1e-10 * rhs);
    for i in 0..32 * 32 {
        let (x, y) = ((i % 32) as i64, (i / 32) as i64);
        assert!((sd.chi_k[i] - sd.chi_k[wrap(-y, 32) * 32 + wrap(-x, 32)]).abs() < 1e-15);
    }

    // Elongated along y in real space → elongated along k_x in Fourier space.
    let mut along_kx = 0.0;
    let mut along_ky = 0.0;
    for s in 0..10 {
        let cs = average_correlations(&[generate_gaussian_levelset(s, 64, 0.01, 0.1, 0.5).unwrap()], 2, 0.1).unwrap();
        let sd = spectral_density(&cs);
        along_kx += sd.chi_k[4];
        along_ky += sd.chi_k[4 * 64];
    }
    assert!(along_kx > along_ky, "{along_kx} vs {along_ky}");
}

#[test]
fn three_point_small_values() {
    let m = generate_gaussian_levelset(9, 8, 0.1, 0.2, 0.5).unwrap();
    let t = three_point(&m, 0.5).unwrap();
    let phi = volume_fraction(&m);
    assert!((t.get([0, 0], [0, 0]).unwrap() - phi).abs() < 1e-14);
    let s2 = two_point(&m);
    for r in t.offsets() {
        let want = s2[wrap(r[1], 8) * 8 + wrap(r[0], 8)];
        assert!((t.get(*r, [0, 0]).unwrap() - want).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn s2_matches_direct_sum(m in binary_grid(8)) {
        let s2 = two_point(&m);
        let phi = volume_fraction(&m);
        for y in 0..8i64 {
            for x in 0..8i64 {
                let v = s2[(y * 8 + x) as usize];
                prop_assert!((v - brute_s2(&m, [x, y])).abs() < 1e-12);
                prop_assert!((v - s2[wrap(-y, 8) * 8 + wrap(-x, 8)]).abs() < 1e-15);
                prop_assert!(v >= -1e-15 && v <= phi + 1e-15 && v >= (2.0 * phi - 1.0) - 1e-15);
            }
        }
    }

    #[test]
    fn s3_and_delta3_match_direct_sums(m in binary_grid(8)) {
        let cs = average_correlations(&[m.clone()], 3, 0.375).unwrap();
        let t = cs.s3.as_ref().unwrap();
        let phi = cs.phi;
        for &r1 in t.offsets() {
            for &r2 in t.offsets() {
                let s3 = brute_s3(&m, r1, r2);
                prop_assert!((t.get(r1, r2).unwrap() - s3).abs() < 1e-12);
                prop_assert!(s3 >= 0.0 && s3 <= phi + 1e-15);
                let d3 = brute_s2(&m, r1) * brute_s2(&m, [r2[0] - r1[0], r2[1] - r1[1]]) - phi * s3;
                prop_assert!((total_correlation_3(&cs, r1, r2).unwrap() - d3).abs() < 1e-12);
            }
        }
    }
}
