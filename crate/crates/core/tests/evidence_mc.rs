use famcl_core::evidence::{adjust_curve, robust_adjustment, support_interval};
use famcl_core::likelihood::{default_or_grid, maximize, profile_with, OptimizeOptions};
use famcl_core::misleading::{estimate_misleading, estimate_misleading_multi};
use famcl_core::simulate::simulate_dataset;
use famcl_core::{CLKind, CompositeLikelihood, DependenceOdds, ModelParams, Param, PedigreeTemplate, PhenotypeSampler, SimConfig};

fn adjustment_at(cfg: &SimConfig, sampler: &PhenotypeSampler, r: u64) -> f64 {
    let data = simulate_dataset(cfg, sampler, r).unwrap();
    let cl = CompositeLikelihood::new(&data, CLKind::Independence).unwrap();
    let m = maximize(&cl, &[], &cl.initial_theta().unwrap(), &OptimizeOptions::default()).unwrap();
    robust_adjustment(&cl, &m.theta, 1).unwrap().1
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn adjustment_near_one_for_correct_singleton_model() {
    let p = ModelParams::independent(-1.0, 0.7);
    let sampler = PhenotypeSampler::new(p).unwrap();
    let mut spread = Vec::new();
    for n in [200, 5000] {
        let cfg = SimConfig::new(n, PedigreeTemplate::singleton(), 0.3, p, 41);
        let ab: Vec<f64> = (0..200).map(|r| adjustment_at(&cfg, &sampler, r)).collect();
        let (m, se) = mean_se(&ab);
        if n == 5000 {
            assert!((m - 1.0).abs() < 3.0 * se, "mean a/b {m} (se {se})");
        }
        spread.push(ab.iter().map(|a| (a - 1.0).abs()).sum::<f64>() / ab.len() as f64);
    }
    assert!(spread[1] < spread[0], "a/b does not tighten around 1: {spread:?}");
}

#[test]
fn strong_sibling_clustering_shrinks_adjustment() {
    let p = ModelParams::new(-1.0, 0.8, DependenceOdds::uniform(6.0)).unwrap();
    let sampler = PhenotypeSampler::new(p).unwrap();
    let cfg = SimConfig::new(300, PedigreeTemplate::sibship(4), 0.2, p, 3);
    let ab: Vec<f64> = (0..20).map(|r| adjustment_at(&cfg, &sampler, r)).collect();
    let (m, se) = mean_se(&ab);
    assert!(m + 3.0 * se < 1.0, "mean a/b {m}");
}

#[test]
fn strong_signal_intervals_exclude_null() {
    let p = ModelParams::new(-2.38, 1.76, DependenceOdds::from_array([3.0, 2.5, 2.0, 1.5, 1.2])).unwrap();
    let sampler = PhenotypeSampler::new(p).unwrap();
    let cfg = SimConfig::new(500, PedigreeTemplate::extended_twelve(), 0.2, p, 17);
    let grid = default_or_grid();
    let mut excluded = 0;
    let reps = 30;
    for r in 0..reps {
        let data = simulate_dataset(&cfg, &sampler, r).unwrap();
        let cl = CompositeLikelihood::new(&data, CLKind::Independence).unwrap();
        let mut curve = profile_with(&cl, Param::Beta1, &grid, &OptimizeOptions::default()).unwrap();
        adjust_curve(&cl, &mut curve).unwrap();
        excluded += usize::from(!support_interval(&curve, 8.0).unwrap().contains_null);
    }
    assert!(excluded as f64 >= 0.9 * reps as f64, "{excluded} of {reps}");
}

#[test]
fn correct_model_needs_no_adjustment() {
    let p = ModelParams::independent(-1.0, 0.5);
    let cfg = SimConfig::new(300, PedigreeTemplate::singleton(), 0.3, p, 12);
    let alts: Vec<f64> = (0..=10).map(|i| 0.5 + (i as f64 - 5.0) * 0.1).filter(|a| (a - 0.5f64).abs() > 1e-9).collect();
    let e = estimate_misleading(&cfg, &alts, 8.0, CLKind::Independence, 1000).unwrap();
    for j in 0..alts.len() {
        let se = e.mc_se[j].max(e.mc_se_raw[j]).max(1.0 / e.replicates as f64);
        assert!((e.proportion_raw[j] - e.proportion_adjusted[j]).abs() <= 3.0 * se, "alt {}", alts[j]);
    }
}

#[test]
fn proportions_fall_as_threshold_rises() {
    let p = ModelParams::new(-1.0, 1.0, DependenceOdds::uniform(3.0)).unwrap();
    let cfg = SimConfig::new(100, PedigreeTemplate::sibship(3), 0.2, p, 8);
    let alts = [0.6, 0.8, 1.2, 1.4];
    let est = estimate_misleading_multi(&cfg, &alts, &[4.0, 8.0, 32.0], CLKind::Independence, 400).unwrap();
    for w in est.windows(2) {
        for j in 0..alts.len() {
            assert!(w[1].proportion_adjusted[j] <= w[0].proportion_adjusted[j]);
            assert!(w[1].proportion_raw[j] <= w[0].proportion_raw[j]);
        }
    }
    assert!(estimate_misleading(&cfg, &[1.0], 8.0, CLKind::Independence, 400).is_err());
}
