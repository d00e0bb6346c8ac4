use afcpap::bloch::{evolve_with, Detunings, EvolveOptions};
use afcpap::comb::{comb_model, detect_peaks, AfcProfile};
use afcpap::config::{self, SweepAxis, SweepSpec};
use afcpap::hz;
use afcpap::io::csv_bytes;
use afcpap::memory::{input_photon, StorageConfig};
use afcpap::model::{afc_metrics_analytic, maxwell_boltzmann, AtomicSystem, GasParameters, VelocityGrid};
use afcpap::pulses::PulseTrain;
use afcpap::stirapoz::{oz_curves, pap_width_from_stirap, stirap_widths, Regime};
use proptest::prelude::*;
use serde_json::{json, Value};

fn system(ratio: f64) -> AtomicSystem {
    AtomicSystem::new(hz(ratio * 637e12), hz(637e12), 1e7, 1e7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn density_matrix_stays_physical(
        v in -10.0f64..10.0,
        delta_mhz in 0.0f64..400.0,
        rabi_mhz in 20.0f64..160.0,
        n in 2usize..6,
    ) {
        let sys = system(2.5);
        let train = PulseTrain::new(hz(rabi_mhz * 1e6), n, 0.17e-6, 6.2e-9);
        let mut worst = [0.0f64; 4];
        evolve_with(&sys, &train, v, Detunings::common(hz(delta_mhz * 1e6)), &EvolveOptions::default(), |_, r| {
            worst[0] = worst[0].max((r.trace() - 1.0).abs());
            worst[1] = worst[1].max(r.hermiticity_error());
            for k in 0..3 {
                let p = r.population(k);
                worst[2] = worst[2].max((-p).max(p - 1.0));
                for j in 0..k {
                    let excess = r.0[j][k].norm_sqr() - r.population(j) * r.population(k);
                    worst[3] = worst[3].max(excess);
                }
            }
        }).unwrap();
        prop_assert!(worst[0] <= 1e-9, "trace {}", worst[0]);
        prop_assert!(worst[1] <= 1e-12, "hermiticity {}", worst[1]);
        prop_assert!(worst[2] <= 1e-9, "population {}", worst[2]);
        prop_assert!(worst[3] <= 1e-9, "coherence {}", worst[3]);
    }
}

proptest! {
    #[test]
    fn analytic_metrics_are_consistent(
        rabi_mhz in 5.0f64..300.0,
        sigma_ns in 1.0f64..20.0,
        tint_over_sigma in 5.0f64..100.0,
        delta_mhz in 1.0f64..2000.0,
        ratio in 1.1f64..5.0,
    ) {
        let sys = system(ratio);
        let sigma = sigma_ns * 1e-9;
        let a = afc_metrics_analytic(hz(rabi_mhz * 1e6), sigma, tint_over_sigma * sigma, hz(delta_mhz * 1e6), &sys).unwrap();
        let m = a.metrics;
        for x in [m.gamma, m.delta_sep, m.n_peaks, m.peak_fwhm, m.finesse, m.retrieval_time] {
            prop_assert!(x > 0.0 && x.is_finite());
        }
        prop_assert!((m.finesse / (m.delta_sep / m.peak_fwhm) - 1.0).abs() < 1e-12);
        prop_assert!((m.retrieval_time * m.delta_sep / std::f64::consts::TAU - 1.0).abs() < 1e-12);
    }

    #[test]
    fn width_chain_reproduces_tooth_width(
        rabi_mhz in 5.0f64..300.0,
        sigma_ns in 1.0f64..20.0,
        tint_over_sigma in 5.0f64..100.0,
        over_threshold in 1.01f64..20.0,
        ratio in 1.1f64..5.0,
    ) {
        let sys = system(ratio);
        let rabi = hz(rabi_mhz * 1e6);
        let delta = over_threshold * rabi * (sys.omega32 / sys.omega13()).sqrt();
        let sigma = sigma_ns * 1e-9;
        let t_int = tint_over_sigma * sigma;
        let w = stirap_widths(delta, rabi, &sys).unwrap();
        prop_assert_eq!(w.regime, Regime::Above);
        let chained = pap_width_from_stirap(w.stirap_fwhm, sigma, t_int).unwrap();
        let direct = afc_metrics_analytic(rabi, sigma, t_int, delta, &sys).unwrap().metrics.peak_fwhm;
        prop_assert!((chained / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oz_curves_are_ordered(ratio in 0.0f64..6.0, rabi_mhz in 1.0f64..300.0, levels in 1.1f64..5.0) {
        let sys = system(levels);
        let rabi = hz(rabi_mhz * 1e6);
        let c = oz_curves(ratio * rabi, rabi, &sys);
        prop_assert!(c.vs_plus >= c.vs_minus);
        let defined = (ratio * rabi).powi(2) * sys.omega13() >= rabi * rabi * sys.omega32;
        prop_assert_eq!(c.vp_plus.is_some(), defined);
        if let (Some(lo), Some(hi)) = (c.vp_minus, c.vp_plus) {
            prop_assert!(lo <= hi && hi <= c.vs_plus);
            prop_assert!(!c.contains(0.5 * (lo + hi)) || hi - lo < 1e-9);
        }
    }

    #[test]
    fn maxwell_boltzmann_normalised(eta in 10.0f64..1000.0, density in 1e10f64..1e22) {
        let gas = GasParameters::with_eta(eta, density);
        let grid = VelocityGrid::new(-8.0 * eta, 8.0 * eta, 4001).unwrap();
        let total: f64 = grid.values.iter().zip(grid.trapezoid_weights()).map(|(&v, w)| w * maxwell_boltzmann(v, &gas)).sum();
        prop_assert!((total / density - 1.0).abs() < 1e-6);
        prop_assert_eq!(maxwell_boltzmann(0.37 * eta, &gas), maxwell_boltzmann(-0.37 * eta, &gas));
    }

    #[test]
    fn velocity_grid_uniform(lo in -100.0f64..0.0, width in 0.1f64..200.0, n in 3usize..500) {
        let g = VelocityGrid::new(lo, lo + width, n).unwrap();
        prop_assert_eq!(g.len(), n);
        let dv = g.spacing();
        for w in g.values.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!(((w[1] - w[0]) / dv - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn pulse_train_invariants(n in 2usize..60, t_int_ns in 50.0f64..1000.0, frac in 0.01f64..0.24) {
        let t_int = t_int_ns * 1e-9;
        let tr = PulseTrain::new(1e8, n, t_int, frac * t_int);
        prop_assert!(tr.validate().is_ok());
        prop_assert!((tr.tau - (n - 1) as f64 * t_int).abs() <= 1e-12 * tr.tau);
        let bad = PulseTrain::new(1e8, n, t_int, 0.26 * t_int);
        prop_assert!(bad.validate().is_err());
    }

    #[test]
    fn peak_detection_scale_invariant(
        sep_mhz in 2.0f64..6.0,
        width_frac in 0.05f64..0.3,
        scale in 0.01f64..100.0,
    ) {
        let sep = hz(sep_mhz * 1e6);
        let fwhm = width_frac * sep;
        let gamma = 4.0 * sep;
        let delta: Vec<f64> = (0..4001).map(|i| -6.0 * gamma + 12.0 * gamma * i as f64 / 4000.0).collect();
        let rho: Vec<f64> = delta.iter().map(|&d| comb_model(d, 0.8, 0.0, gamma, sep, fwhm)).collect();
        let p = AfcProfile { delta: delta.clone(), rho33: rho.clone(), omega_map: 1e15 };
        let q = AfcProfile { delta, rho33: rho.iter().map(|x| x * scale).collect(), omega_map: 1e15 };
        let a = detect_peaks(&p, 0.1).unwrap();
        let b = detect_peaks(&q, 0.1).unwrap();
        prop_assert!(!a.is_empty());
        prop_assert!(a.centers.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(a.fwhms.iter().all(|&w| w > 0.0));
        prop_assert_eq!(a.centers.len(), b.centers.len());
        for (x, y) in a.centers.iter().zip(&b.centers) {
            prop_assert!((x - y).abs() <= 1e-9 * sep);
        }
        let step = 12.0 * gamma / 4000.0;
        prop_assert!((a.spacing().unwrap() - sep).abs() <= step);
    }

    #[test]
    fn detuning_map_round_trips(v in prop::collection::vec(-500.0f64..500.0, 3..20), omega in 1e14f64..1e16) {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        let p = AfcProfile::from_velocity(&v, vec![0.0; v.len()], omega).unwrap();
        prop_assert!(p.delta.windows(2).all(|w| w[1] >= w[0]));
        for (a, b) in v.iter().zip(p.velocities()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn photon_is_normalised(tau_us in 0.05f64..2.0) {
        let tau = tau_us * 1e-6;
        let t_c = 6.0 * tau;
        let dt = tau / 100.0;
        let times: Vec<f64> = (0..1201).map(|i| i as f64 * dt).collect();
        let e = input_photon(tau, t_c, &times).unwrap();
        let energy: f64 = e.iter().map(|x| x * x).sum::<f64>() * dt;
        prop_assert!((energy - 1.0).abs() < 1e-6);
    }

    #[test]
    fn control_gate_membership(on in 0.0f64..1e-6, len in 1e-9f64..1e-6, t in 0.0f64..3e-6) {
        let cfg = StorageConfig { control_gate: Some(vec![(on, on + len)]), ..StorageConfig::ba_example() };
        prop_assert_eq!(cfg.control_on(t), t >= on && t < on + len);
        prop_assert!(StorageConfig::ba_example().control_on(t));
    }

    #[test]
    fn csv_numbers_round_trip(xs in prop::collection::vec(prop::num::f64::NORMAL, 1..30)) {
        let rows: Vec<[Option<f64>; 1]> = xs.iter().map(|&x| [Some(x)]).collect();
        let text = String::from_utf8(csv_bytes(&["x"], rows).unwrap()).unwrap();
        let back: Vec<f64> = text.lines().skip(1).map(|l| l.parse().unwrap()).collect();
        prop_assert_eq!(back, xs);
    }

    #[test]
    fn unit_strings_scale_exactly(mantissa in 1u32..100_000, exp in -3i32..3) {
        let x = format!("{mantissa}e{exp}");
        let cfg = format!(
            "[atom]\nomega12_hz = \"{x} THz\"\nomega32_hz = \"{x} GHz\"\ngamma21_per_s = 1\ngamma23_per_s = 1\n"
        );
        let value = config::toml_to_value(&cfg).unwrap();
        let parsed = config::from_value(value).unwrap();
        let thz: f64 = format!("{mantissa}e{}", exp + 12).parse().unwrap();
        let ghz: f64 = format!("{mantissa}e{}", exp + 9).parse().unwrap();
        prop_assert_eq!(parsed.atom.omega12_hz.0, thz);
        prop_assert_eq!(parsed.atom.omega32_hz.0, ghz);
    }

    #[test]
    fn sweep_cells_enumerate_the_grid(sizes in prop::collection::vec(1usize..5, 1..4)) {
        let axes: Vec<SweepAxis> = sizes
            .iter()
            .enumerate()
            .map(|(a, &n)| SweepAxis { path: format!("x.a{a}"), values: (0..n).map(|i| json!(i)).collect() })
            .collect();
        let spec = SweepSpec { axes, outputs: vec![], cap: None };
        let total: usize = sizes.iter().product();
        prop_assert_eq!(spec.cell_count(), total);
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..total {
            let key: Vec<u64> = spec.cell(i).iter().map(|v| v.as_u64().unwrap()).collect();
            prop_assert!(seen.insert(key));
        }
        let last: Vec<&Value> = spec.cell(1 % total);
        if *sizes.last().unwrap() > 1 {
            prop_assert_eq!(last.last().unwrap().as_u64(), Some(1));
        }
    }
}
