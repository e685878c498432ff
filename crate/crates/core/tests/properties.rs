use proptest::prelude::*;
use substable::asymptotics::{build_grid, omega};
use substable::estimators::{alpha_mult, mu_estimate, sigma_diag, sigma_offdiag};
use substable::{
    ecf, pack_index, safe_log_modulus, sample_subgaussian, unpack_index, ComplexValue,
    FrequencyPair, MuConfig, PackedSymmetric, RngSpec, StableParams,
};

/// Random PSD matrix `A A' + eps I` with `p` in 1..=4.
fn psd_matrix() -> impl Strategy<Value = PackedSymmetric<f64>> {
    (1usize..=4).prop_flat_map(|p| {
        prop::collection::vec(-0.5f64..0.5, p * p).prop_map(move |a| {
            let rows: Vec<Vec<f64>> = (0..p)
                .map(|i| {
                    (0..p)
                        .map(|j| {
                            let dot: f64 = (0..p).map(|k| a[i * p + k] * a[j * p + k]).sum();
                            dot + if i == j { 0.05 } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            PackedSymmetric::from_dense(&rows).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn pack_index_is_a_bijection(p in 2usize..40) {
        let q = p * (p - 1) / 2;
        for k in 1..=q {
            let (i, j) = unpack_index(k, p).unwrap();
            prop_assert!(1 <= j && j < i && i <= p);
            prop_assert_eq!(pack_index(i, j, p).unwrap(), k);
        }
    }

    #[test]
    fn plug_in_recovers_parameters(sigma in psd_matrix(), alpha in 0.3f64..1.95) {
        let p = sigma.dim();
        let mu: Vec<f64> = (0..p).map(|k| 0.1 * k as f64 - 0.15).collect();
        let params = StableParams::new(alpha, mu.clone(), sigma.clone()).unwrap();
        let fp = FrequencyPair::new(1.0, 0.5).unwrap();
        let a = alpha_mult(&params, &fp).unwrap();
        prop_assert!((a - alpha).abs() < 1e-8, "alpha {a} vs {alpha}");
        let d = sigma_diag(&params, a, fp.s1()).unwrap();
        for (x, y) in d.iter().zip(sigma.diag()) {
            prop_assert!((x - y).abs() < 1e-7 * y.max(1.0));
        }
        let nd = sigma_offdiag(&params, a).unwrap();
        for (x, y) in nd.iter().zip(sigma.subdiag()) {
            prop_assert!((x - y).abs() < 1e-7);
        }
        let m = mu_estimate(&params, &MuConfig::new(vec![1.0; p]).unwrap()).unwrap();
        for (x, y) in m.iter().zip(&mu) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn location_shift_leaves_scale_estimates_unchanged(shift in -3.0f64..3.0, alpha in 0.5f64..1.9) {
        let sigma = PackedSymmetric::from_dense(&[vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let fp = FrequencyPair::new(1.0, 0.5).unwrap();
        let base = StableParams::centered(alpha, sigma.clone()).unwrap();
        let moved = StableParams::new(alpha, vec![shift, -shift], sigma).unwrap();
        let (a0, a1) = (alpha_mult(&base, &fp).unwrap(), alpha_mult(&moved, &fp).unwrap());
        prop_assert!((a0 - a1).abs() < 1e-12);
        let (n0, n1) = (sigma_offdiag(&base, a0).unwrap(), sigma_offdiag(&moved, a1).unwrap());
        prop_assert!((n0[0] - n1[0]).abs() < 1e-12);
    }

    #[test]
    fn psd_projection_is_idempotent(diag in prop::collection::vec(0.1f64..2.0, 3), off in prop::collection::vec(-1.5f64..1.5, 3)) {
        let m = PackedSymmetric::from_parts(3, diag, off).unwrap();
        let once = m.psd_project().unwrap();
        prop_assert!(once.psd_check().unwrap().is_psd);
        let twice = once.psd_project().unwrap();
        for (a, b) in once.diag().iter().chain(once.subdiag()).zip(twice.diag().iter().chain(twice.subdiag())) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn omega_is_psd(sigma in psd_matrix(), alpha in 0.3f64..2.0) {
        let params = StableParams::centered(alpha, sigma).unwrap();
        let grid = build_grid(params.dim(), &FrequencyPair::new(1.0, 0.5).unwrap()).unwrap();
        let (lmin, trace) = omega(&params, &grid).unwrap().spectrum_check().unwrap();
        prop_assert!(lmin >= -1e-10 * trace, "lambda_min {lmin}, trace {trace}");
    }

    #[test]
    fn safe_log_modulus_is_finite_and_negative(re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let l = safe_log_modulus(ComplexValue::new(re, im));
        prop_assert!(l.is_finite() && l < 0.0);
    }

    #[test]
    fn ecf_modulus_at_most_one(seed in any::<u64>(), t in prop::collection::vec(-10.0f64..10.0, 2)) {
        let sigma = PackedSymmetric::from_dense(&[vec![1.0, 0.2], vec![0.2, 1.0]]).unwrap();
        let params = StableParams::centered(1.2, sigma).unwrap();
        let s = sample_subgaussian(&params, 50, &RngSpec::new(seed, 0)).unwrap();
        prop_assert!(ecf(&s, &t).unwrap().norm() <= 1.0 + 1e-12);
    }
}
