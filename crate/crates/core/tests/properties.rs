use std::sync::Arc;

use proptest::prelude::*;
use radwave::params::a_closed_form;
use radwave::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_lattice() -> Arc<Lattice> {
    Arc::new(Lattice::new(GridSpec::new(4.0, 4.0, 8)).unwrap())
}

fn random_field(lat: &Arc<Lattice>, seed: u64, scale: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Field::zeros(lat);
    for k in 0..lat.len() {
        u.u[k] = scale * rng.gen_range(-1.0..1.0);
        u.u_r[k] = scale * rng.gen_range(-1.0..1.0);
        u.u_t[k] = scale * rng.gen_range(-1.0..1.0);
    }
    u
}

fn order() -> impl Strategy<Value = Order> {
    prop_oneof![Just(Order::One), Just(Order::Two)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ladder_matches_closed_form(p in 1.05f64..2.0, q in 2.0f64..14.0) {
        if let Ok(lp) = ladder_for(p, q) {
            for j in 0..lp.a.len() {
                let want = a_closed_form(&lp.kappas, j);
                prop_assert!((lp.a[j] - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
            let k1 = lp.kappas.kappa1;
            let l = lp.ell();
            prop_assert!(k1 * lp.a[l] <= 1.0 + 1e-12);
            prop_assert!(k1 * lp.a[l + 1] > 1.0);
        }
    }

    #[test]
    fn z_below_x_for_small_index(seed in any::<u64>(), nu in 0.05f64..=1.0, s in order()) {
        let u = random_field(&small_lattice(), seed, 1.0);
        prop_assert!(norm_z(&u, s, nu) <= norm_x(&u, s, nu));
    }

    #[test]
    fn x_below_z_for_large_index(seed in any::<u64>(), nu in 1.0f64..4.0, s in order()) {
        let u = random_field(&small_lattice(), seed, 1.0);
        prop_assert!(norm_x(&u, s, nu) <= norm_z(&u, s, nu));
    }

    #[test]
    fn norms_are_homogeneous(seed in any::<u64>(), c in -50.0f64..50.0, nu in 0.1f64..3.0, s in order()) {
        let u = random_field(&small_lattice(), seed, 1.0);
        for norm in [norm_x, norm_z] {
            let a = norm(&u.scale(c), s, nu);
            let b = c.abs() * norm(&u, s, nu);
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }
    }

    #[test]
    fn metric_is_symmetric_and_satisfies_triangle(seeds in any::<[u64; 6]>(), long in any::<bool>()) {
        let lat = small_lattice();
        let m = if long {
            MetricSpec::for_long(&ladder_for(1.8, 4.0).unwrap(), 0.1).unwrap()
        } else {
            MetricSpec::short_range(&ladder_for(3.0, 3.0).unwrap(), 0.1)
        };
        let f: Vec<Field> = seeds.iter().map(|s| random_field(&lat, *s, 1e-2)).collect();
        let (a, b, c) = ((&f[0], &f[1]), (&f[2], &f[3]), (&f[4], &f[5]));
        let ab = metric_d(a, b, &m).unwrap();
        let ba = metric_d(b, a, &m).unwrap();
        let ac = metric_d(a, c, &m).unwrap();
        let cb = metric_d(c, b, &m).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab <= (ac + cb) * (1.0 + 1e-12));
        prop_assert_eq!(metric_d(a, a, &m).unwrap(), 0.0);
    }

    #[test]
    fn energy_adds_over_disjoint_radii(seed in any::<u64>(), cut in 1usize..7, row in 0usize..=8) {
        let lat = small_lattice();
        let u = random_field(&lat, seed, 1.0);
        let mut inner = u.clone();
        let mut outer = u.clone();
        for (i, n) in lat.nodes() {
            let k = lat.idx(i, n);
            let target = if i < cut { &mut outer } else { &mut inner };
            target.u[k] = 0.0;
            target.u_r[k] = 0.0;
            target.u_t[k] = 0.0;
        }
        let t = lat.t(row);
        let whole = energy_norm(&u, t).unwrap().powi(2);
        let parts = energy_norm(&inner, t).unwrap().powi(2) + energy_norm(&outer, t).unwrap().powi(2);
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1e-300));
    }

    #[test]
    fn fitted_slope_ignores_amplitude(e in -3.0f64..-0.1, amp in 1e-6f64..1e6) {
        let series: Vec<(f64, f64)> = [10.0, 15.0, 22.5, 33.75, 50.0, 75.0]
            .iter()
            .map(|t: &f64| (*t, amp * (1.0 + t).powf(e)))
            .collect();
        let fit = fit_decay_exponent(&series, [10.0, 80.0]).unwrap();
        prop_assert!((fit.slope - e).abs() < 1e-9);
    }
}
