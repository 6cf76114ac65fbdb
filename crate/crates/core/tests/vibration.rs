use proptest::prelude::*;
use swarmshm::modal::ModalBasis;
use swarmshm::oma::window_fft;
use swarmshm::plate::{analytic_beam_basis, PlateSpec};
use swarmshm::vibration::{sample_at, simulate_field, FieldParams, SensorModel, Window};

fn basis() -> ModalBasis {
    analytic_beam_basis(&PlateSpec::default()).unwrap()
}

const WINDOW: Window = Window { start: 5.0, length: 15.0 };

fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn identical_seeds_are_bit_identical() {
    let b = basis();
    let p = FieldParams::default();
    let s = SensorModel::default();
    let x = [0.3, 0.7];
    let a = sample_at(&simulate_field(&b, &p, 11).unwrap(), x, WINDOW, &s, 5).unwrap();
    let c = sample_at(&simulate_field(&b, &p, 11).unwrap(), x, WINDOW, &s, 5).unwrap();
    assert!(a.iter().zip(&c).all(|(u, v)| u.to_bits() == v.to_bits()));
}

#[test]
fn different_seeds_decorrelate() {
    let b = basis();
    let p = FieldParams::default();
    let s = SensorModel::default();
    let x = [0.5, 0.5];
    let signals: Vec<Vec<f64>> = (0..41u64)
        .map(|seed| sample_at(&simulate_field(&b, &p, seed).unwrap(), x, WINDOW, &s, seed).unwrap())
        .collect();
    let r: Vec<f64> = signals.windows(2).map(|w| ncc(&w[0], &w[1])).collect();
    let mean_abs = r.iter().map(|v| v.abs()).sum::<f64>() / r.len() as f64;
    assert!(mean_abs < 0.1, "mean |normalized cross-correlation| {mean_abs}");
}

#[test]
fn two_strongest_concentrations_sit_in_the_mode_bands() {
    let b = basis();
    let freqs = b.frequencies();
    let delta_f = 10.0;
    for seed in 0..5 {
        let f = simulate_field(&b, &FieldParams::default(), seed).unwrap();
        let a = sample_at(&f, [0.5, 0.5], WINDOW, &SensorModel::default(), seed).unwrap();
        let spec = window_fft(&a, 400.0).unwrap();
        let half = spec.len / 2;
        let power: Vec<f64> = spec.bins[..=half].iter().map(|z| z.norm_sqr()).collect();
        // Energy in every Δf-wide sliding window; pick the two strongest
        // non-overlapping ones.
        let w = (delta_f / spec.resolution).round() as usize;
        let energy: Vec<f64> = power.windows(w).map(|s| s.iter().sum()).collect();
        let best = |skip: Option<usize>| {
            (0..energy.len())
                .filter(|&k| skip.is_none_or(|s| k.abs_diff(s) >= w))
                .max_by(|&a, &b| energy[a].total_cmp(&energy[b]))
                .unwrap()
        };
        let first = best(None);
        let second = best(Some(first));
        let centre = |k: usize| (k as f64 + (w - 1) as f64 / 2.0) * spec.resolution;
        let mut found = [centre(first), centre(second)];
        found.sort_by(f64::total_cmp);
        for (c, fi) in found.iter().zip(&freqs) {
            assert!((c - fi).abs() <= delta_f / 2.0, "seed {seed}: concentration at {c} Hz, mode at {fi} Hz");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn modal_superposition_is_linear(seed in 0u64..1000, x in 0.0f64..1.0, y in 0.0f64..1.0, start in 0.0f64..15.0) {
        let f = simulate_field(&basis(), &FieldParams::default(), seed).unwrap();
        let quiet = SensorModel { noise_density: 0.0, ..SensorModel::default() };
        let w = Window { start, length: 15.0 };
        let both = sample_at(&f, [x, y], w, &quiet, seed).unwrap();
        let one = sample_at(&f.restricted(&[0]), [x, y], w, &quiet, seed).unwrap();
        let two = sample_at(&f.restricted(&[1]), [x, y], w, &quiet, seed).unwrap();
        for ((a, b), c) in both.iter().zip(&one).zip(&two) {
            prop_assert!((a - (b + c)).abs() <= 1e-12);
        }
    }

    #[test]
    fn series_are_finite_with_the_requested_length(seed in 0u64..1000, duration in 16.0f64..40.0) {
        let p = FieldParams { duration, ..FieldParams::default() };
        let f = simulate_field(&basis(), &p, seed).unwrap();
        prop_assert_eq!(f.len(), p.samples());
        prop_assert!(f.modal_accelerations.iter().flatten().all(|v| v.is_finite()));
    }
}
