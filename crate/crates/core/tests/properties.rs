use mkv_core::coefficients::{eval_mean_field, pairwise_mean};
use mkv_core::holder_net::{holder_seminorm, holder_seminorm_brute};
use mkv_core::io::{read_flow_cache, write_flow_cache};
use mkv_core::measure::{moment, tv_distance, w1_1d, EmpiricalMeasure, HistogramGrid};
use mkv_core::particle::{simulate_mckean, FlowOfMarginals, InitialLaw, ParticleCloud, SimConfig};
use mkv_core::rng::StreamRng;
use mkv_core::scenarios;
use proptest::prelude::*;

fn dyadic(range: i32) -> impl Strategy<Value = f64> {
    (-range..=range).prop_map(|k| k as f64 / 8.0)
}

fn cloud_rows(dim: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max).prop_flat_map(move |n| prop::collection::vec(dyadic(64), n * dim))
}

/// Minimum over all couplings by permutation.
fn w1_brute(a: &[f64], b: &[f64]) -> f64 {
    fn go(a: &[f64], b: &mut Vec<f64>, k: usize, acc: f64, best: &mut f64) {
        if k == a.len() {
            *best = best.min(acc);
            return;
        }
        for i in k..b.len() {
            b.swap(k, i);
            go(a, b, k + 1, acc + (a[k] - b[k]).abs(), best);
            b.swap(k, i);
        }
    }
    let mut best = f64::INFINITY;
    go(a, &mut b.to_vec(), 0, 0.0, &mut best);
    best / a.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_field_is_permutation_invariant(rows in cloud_rows(2, 16), x in prop::collection::vec(dyadic(16), 2), seed in any::<u64>()) {
        let f = scenarios::langevin(1, 0.5).unwrap();
        let cloud = ParticleCloud::new(0.0, 2, rows).unwrap();
        let mut perm: Vec<usize> = (0..cloud.len()).collect();
        let mut rng = StreamRng::new(seed, 0, 0, 0);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.index(i + 1));
        }
        let a = eval_mean_field(&f, 0.0, &x, &cloud).unwrap();
        let b = eval_mean_field(&f, 0.0, &x, &cloud.permuted(&perm)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mean_field_is_affine_in_the_measure(rows in prop::collection::vec(-4.0f64..4.0, 16), other in prop::collection::vec(-4.0f64..4.0, 16), x in prop::collection::vec(-2.0f64..2.0, 2)) {
        let f = scenarios::rough(1).unwrap();
        let a = ParticleCloud::new(0.0, 2, rows.clone()).unwrap();
        let b = ParticleCloud::new(0.0, 2, other.clone()).unwrap();
        let union = ParticleCloud::new(0.0, 2, [rows, other].concat()).unwrap();
        let ma = eval_mean_field(&f, 0.3, &x, &a).unwrap();
        let mb = eval_mean_field(&f, 0.3, &x, &b).unwrap();
        let mu = eval_mean_field(&f, 0.3, &x, &union).unwrap();
        for i in 0..1 {
            prop_assert!((mu.b1[i] - 0.5 * (ma.b1[i] + mb.b1[i])).abs() < 1e-12);
        }
        prop_assert!((mu.sigma1[0] - 0.5 * (ma.sigma1[0] + mb.sigma1[0])).abs() < 1e-12);
    }

    #[test]
    fn tv_is_a_bounded_metric(a in prop::collection::vec(-3.0f64..3.0, 1..40), b in prop::collection::vec(-3.0f64..3.0, 1..40), c in prop::collection::vec(-3.0f64..3.0, 1..40)) {
        let (ma, mb, mc) = (
            EmpiricalMeasure::scalars(a).unwrap(),
            EmpiricalMeasure::scalars(b).unwrap(),
            EmpiricalMeasure::scalars(c).unwrap(),
        );
        let grid = HistogramGrid::uniform(&[-3.0], &[3.0], 7).unwrap();
        let ab = tv_distance(&ma, &mb, &grid).unwrap();
        let ba = tv_distance(&mb, &ma, &grid).unwrap();
        let ac = tv_distance(&ma, &mc, &grid).unwrap();
        let cb = tv_distance(&mc, &mb, &grid).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(tv_distance(&ma, &ma, &grid).unwrap(), 0.0);
        prop_assert!((0.0..=2.0).contains(&ab));
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn tv_does_not_grow_when_bins_merge(a in prop::collection::vec(0.0f64..1.0, 1..60), b in prop::collection::vec(0.0f64..1.0, 1..60), bins in 2usize..12, pick in any::<prop::sample::Index>()) {
        let (ma, mb) = (EmpiricalMeasure::scalars(a).unwrap(), EmpiricalMeasure::scalars(b).unwrap());
        let fine = HistogramGrid::uniform(&[0.0], &[1.0], bins).unwrap();
        let coarse = fine.merge_bins(0, pick.index(bins - 1)).unwrap();
        prop_assert!(tv_distance(&ma, &mb, &coarse).unwrap() <= tv_distance(&ma, &mb, &fine).unwrap() + 1e-15);
    }

    #[test]
    fn w1_matches_permutation_search(a in prop::collection::vec(dyadic(64), 1..7), seed in any::<u64>()) {
        let mut rng = StreamRng::new(seed, 0, 0, 0);
        let b: Vec<f64> = a.iter().map(|_| (rng.index(129) as f64 - 64.0) / 8.0).collect();
        prop_assert_eq!(w1_1d(&a, &b).unwrap(), w1_brute(&a, &b));
    }

    #[test]
    fn w1_is_a_metric(a in prop::collection::vec(-5.0f64..5.0, 1..30), b in prop::collection::vec(-5.0f64..5.0, 1..30), c in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let ab = w1_1d(&a, &b).unwrap();
        prop_assert!((ab - w1_1d(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= w1_1d(&a, &c).unwrap() + w1_1d(&c, &b).unwrap() + 1e-9);
        prop_assert_eq!(w1_1d(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn moment_of_a_union_is_the_weighted_mean(a in prop::collection::vec(-4.0f64..4.0, 1..30), b in prop::collection::vec(-4.0f64..4.0, 1..30)) {
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let ma = moment(&EmpiricalMeasure::scalars(a.clone()).unwrap(), 4.0).unwrap();
        let mb = moment(&EmpiricalMeasure::scalars(b.clone()).unwrap(), 4.0).unwrap();
        let mu = moment(&EmpiricalMeasure::scalars([a, b].concat()).unwrap(), 4.0).unwrap();
        let expect = (na * ma + nb * mb) / (na + nb);
        prop_assert!((mu - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn seminorm_pruning_is_exact(values in prop::collection::vec(-3.0f64..3.0, 2..60), alpha in 0.05f64..1.0) {
        let fast = holder_seminorm(&values, 1, 0.01, alpha);
        let brute = holder_seminorm_brute(&values, 1, 0.01, alpha);
        prop_assert_eq!(fast.0, brute.0);
        prop_assert!((fast.1 - brute.1).abs() <= 1e-12 * brute.1.max(1.0));
    }

    #[test]
    fn seminorm_grows_under_refinement(values in prop::collection::vec(-3.0f64..3.0, 2..40), mids in prop::collection::vec(-3.0f64..3.0, 40), alpha in 0.05f64..1.0) {
        let mut fine = Vec::with_capacity(2 * values.len());
        for (i, v) in values.iter().enumerate() {
            fine.push(*v);
            if i + 1 < values.len() {
                fine.push(mids[i]);
            }
        }
        let coarse = holder_seminorm(&values, 1, 0.02, alpha);
        let refined = holder_seminorm(&fine, 1, 0.01, alpha);
        prop_assert!(refined.0 >= coarse.0);
        prop_assert!(refined.1 >= coarse.1 * (1.0 - 1e-12));
    }

    #[test]
    fn flow_cache_round_trips(states in prop::collection::vec(-1e6f64..1e6, 1..20), hash in any::<[u8; 32]>()) {
        let n = states.len();
        let clouds = vec![
            ParticleCloud::new(0.0, 1, states.clone()).unwrap(),
            ParticleCloud::new(0.5, 1, states.iter().map(|v| v * 0.5).collect()).unwrap(),
        ];
        let flow = FlowOfMarginals { dt: 0.5, stride: 1, clouds };
        let mut buf = Vec::new();
        write_flow_cache(&mut buf, &hash, &flow).unwrap();
        let back = read_flow_cache(&buf[..], &hash).unwrap();
        prop_assert_eq!(back.particles(), n);
        prop_assert_eq!(back, flow);
    }
}

#[test]
fn pairwise_mean_of_integers_is_exact() {
    let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
    assert_eq!(pairwise_mean(&v), 499.5);
}

#[test]
fn simulation_is_independent_of_thread_count() {
    let f = scenarios::langevin(1, 0.5).unwrap();
    let init = InitialLaw::Gaussian {
        center: vec![0.0, 0.0],
        std: vec![1.0, 1.0],
    };
    let cfg = SimConfig::new(200, 0.5, 20, 11).with_paths(10);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| simulate_mckean(&f, &init, &cfg)).unwrap();
    let b = four.install(|| simulate_mckean(&f, &init, &cfg)).unwrap();
    assert_eq!(a, b);
}
