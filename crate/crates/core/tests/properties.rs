use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use svc_core::covkernel::{
    cholesky_spd, kernel_matrix, solve_spd, squared_distance_matrix, CoordMatrix, DEFAULT_JITTER,
};
use svc_core::dataio::{load_csv_dataset, read_samples, write_dataset_csv, write_samples, ColumnSpec};
use svc_core::gibbs::{run_chain, update_sigmasq, update_tausq, ChainState, InvGamma, KnotModel};
use svc_core::knots::{simpleknots, KnotSet};
use svc_core::ram::{propose, BoundedParam, RamState};
use svc_core::{Dataset, PriorSpec, RunConfig};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(100)
}

fn coords_strategy(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0..10.0f64, 0.0..10.0f64).prop_map(|(a, b)| [a, b]), 1..=max)
}

fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)])
        .collect();
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
    x.column_mut(0).fill(1.0);
    let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    Dataset::new(y, x, CoordMatrix::new(coords).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn kernel_is_spd_after_jitter(pts in coords_strategy(40), phi in 0.01..50.0f64) {
        let c = CoordMatrix::new(pts).unwrap();
        let d = squared_distance_matrix(&c, &c).unwrap();
        let k = kernel_matrix(&d, phi).unwrap();
        let f = cholesky_spd(k.matrix(), &DEFAULT_JITTER).unwrap();
        let l = f.lower();
        let mut target = k.matrix().clone();
        for i in 0..target.nrows() {
            target[(i, i)] += f.jitter();
        }
        prop_assert!((l * l.transpose() - &target).amax() < 1e-9);
        prop_assert!(l.diagonal().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn distance_matrix_symmetric(pts in coords_strategy(30)) {
        let c = CoordMatrix::new(pts).unwrap();
        let d = squared_distance_matrix(&c, &c).unwrap();
        let m = d.matrix();
        prop_assert_eq!(m, &m.transpose());
        prop_assert!(m.diagonal().iter().all(|v| *v == 0.0));
        prop_assert!(m.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn spd_solve_inverts(seed in any::<u64>(), dim in 1usize..=200) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(dim, dim) * dim as f64;
        let f = cholesky_spd(&spd, &DEFAULT_JITTER).unwrap();
        let factored = spd + DMatrix::identity(dim, dim) * f.jitter();
        let x = solve_spd(&f, &DMatrix::identity(dim, dim)).unwrap();
        prop_assert!((factored * x - DMatrix::identity(dim, dim)).amax() < 1e-9);
    }

    #[test]
    fn transform_round_trip(l in -100.0..100.0f64, width in 1e-3..1e3f64, frac in 0.001..0.999f64) {
        let u = l + width;
        let phi = l + frac * width;
        let p = BoundedParam::new(phi, l, u).unwrap();
        let back = BoundedParam::from_unbounded(p.to_unbounded().unwrap(), l, u);
        prop_assert!((back.value() - phi).abs() <= 1e-12 * phi.abs().max(1.0));
    }

    #[test]
    fn proposals_contained(seed in any::<u64>(), l in 0.0..1.0f64, width in 0.01..500.0f64, sd in 0.01..20.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = l + width;
        let s = RamState::new(sd, 0.234, 2.0 / 3.0).unwrap();
        let mut cur = BoundedParam::midpoint(l, u).unwrap();
        for _ in 0..200 {
            let (prop, _) = propose(&cur, &s, &mut rng).unwrap();
            prop_assert!(prop.value() > l && prop.value() < u);
            cur = prop;
        }
    }

    #[test]
    fn ram_sd_stays_in_range(probs in prop::collection::vec(0.0..=1.0f64, 1..500), sd in 1e-6..1e6f64) {
        let mut s = RamState::new(sd, 0.234, 2.0 / 3.0).unwrap();
        for a in probs {
            s = s.adapt(a);
            prop_assert!(s.proposal_sd() >= 1e-6 && s.proposal_sd() <= 1e6);
        }
    }

    #[test]
    fn variance_draws_positive(seed in any::<u64>(), scale in 1e-6..1e6f64, m in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_dataset(seed, m, 1);
        let knots = KnotSet::from_dataset(&data);
        let priors = PriorSpec::with_bounds(&[0.01], &[10.0]).unwrap();
        let mut cfg = RunConfig::new(1);
        cfg.start.w_knots = Some(vec![DVector::from_element(m, scale)]);
        let model = KnotModel::new(&knots, &priors, &cfg.jitter).unwrap();
        let state = ChainState::initialize(&model, &cfg).unwrap();
        for _ in 0..20 {
            let s = update_sigmasq(0, &state, &model, &mut rng).unwrap();
            prop_assert!(s > 0.0 && s.is_finite());
        }
        let surfaces = DMatrix::from_element(m, 1, scale);
        for _ in 0..20 {
            let t = update_tausq(&data, &surfaces, &InvGamma::default(), &mut rng).unwrap();
            prop_assert!(t > 0.0 && t.is_finite());
        }
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..30, p in 1usize..4) {
        let data = random_dataset(seed, n, p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_csv(&path, &data).unwrap();
        let (back, _) = load_csv_dataset(&path, &ColumnSpec::default()).unwrap();
        prop_assert_eq!(back.coords(), data.coords());
        prop_assert_eq!(back.response(), data.response());
        prop_assert_eq!(back.covariates(), data.covariates());
    }

    #[test]
    fn interpolation_identity_at_knots(pts in coords_strategy(25), phi in 0.05..5.0f64, seed in any::<u64>()) {
        use rand::Rng;
        use svc_core::gibbs::SurfaceInterpolator;
        let c = CoordMatrix::new(pts).unwrap();
        let m = c.len();
        let d = squared_distance_matrix(&c, &c).unwrap();
        let k = kernel_matrix(&d, phi).unwrap();
        let f = cholesky_spd(k.matrix(), &DEFAULT_JITTER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        let interp = SurfaceInterpolator::new(&c, &c).unwrap();
        let out = interp.interpolate(&w, phi, &f).unwrap();
        prop_assert!((out - w).amax() < 1e-8);
    }

    #[test]
    fn simpleknots_monotone(side in 2usize..12, k in 1usize..6) {
        let n = side * side;
        let coords: Vec<[f64; 2]> = (0..n).map(|i| [(i % side) as f64, (i / side) as f64]).collect();
        let data = Dataset::new(DVector::zeros(n), DMatrix::from_element(n, 1, 1.0), CoordMatrix::new(coords).unwrap()).unwrap();
        let a = simpleknots(&data, k).map(|s| s.m());
        let b = simpleknots(&data, k + 1).map(|s| s.m());
        if let (Ok(a), Ok(b)) = (&a, &b) {
            prop_assert!(b <= a);
        }
        if k == 1 {
            prop_assert_eq!(a.unwrap(), n);
        }
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn chain_invariants(seed in any::<u64>(), n in 4usize..14, p in 1usize..3) {
        let data = random_dataset(seed, n, p);
        let knots = KnotSet::from_dataset(&data);
        let priors = PriorSpec::with_bounds(&vec![0.01; p], &vec![20.0; p]).unwrap();
        let mut cfg = RunConfig::new(15);
        cfg.seed = seed;
        let a = run_chain(&data, &knots, &priors, &cfg).unwrap();
        let b = run_chain(&data, &knots, &priors, &cfg).unwrap();
        prop_assert_eq!(&a, &b);

        let start: Vec<f64> = priors.phi_bounds.iter().map(|(l, u)| l + 0.5 * (u - l)).collect();
        for t in 0..a.stored() {
            for r in 0..p {
                let (l, u) = priors.phi_bounds[r];
                let phi = a.phi[t][r];
                prop_assert!(phi > l && phi < u);
                prop_assert!(a.sigmasq[t][r] > 0.0);
                let prev = if t == 0 { start[r] } else { a.phi[t - 1][r] };
                prop_assert_eq!(a.phi_acceptance[t][r] == 1, phi != prev);
            }
            prop_assert!(a.tausq[t] > 0.0);
        }
    }

    #[test]
    fn samples_round_trip(seed in any::<u64>(), n in 3usize..10, p in 1usize..3, thin in 1usize..3) {
        let data = random_dataset(seed, n, p);
        let knots = KnotSet::from_dataset(&data);
        let priors = PriorSpec::with_bounds(&vec![0.01; p], &vec![20.0; p]).unwrap();
        let mut cfg = RunConfig::new(6);
        cfg.seed = seed;
        cfg.thin = thin;
        cfg.store_surfaces = seed % 2 == 0;
        let s = run_chain(&data, &knots, &priors, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let names: Vec<String> = (0..p).map(|r| format!("c{r}")).collect();
        write_samples(&s, &names, dir.path(), 1, "cfg").unwrap();
        let (back, back_names) = read_samples(dir.path()).unwrap();
        prop_assert_eq!(back_names, names);
        prop_assert_eq!(&back.iterations, &s.iterations);
        prop_assert_eq!(&back.phi, &s.phi);
        prop_assert_eq!(&back.phi_acceptance, &s.phi_acceptance);
        prop_assert_eq!(&back.sigmasq, &s.sigmasq);
        prop_assert_eq!(&back.tausq, &s.tausq);
        prop_assert_eq!(&back.w_knots, &s.w_knots);
        prop_assert_eq!(&back.w_surfaces, &s.w_surfaces);
    }
}
