mod common;

use common::*;
use famcl_core::evidence::{adjusted_lr, support_interval};
use famcl_core::likelihood::{cl_eval, maximize_cl};
use famcl_core::misleading::{bump, bump_argmax, fwer_bound};
use famcl_core::model::marginal_prob;
use famcl_core::{CLKind, DependenceOdds, FamilyData, ModelParams, PairClasses, Param, ProfileCurve, RelationshipClass};
use proptest::prelude::*;

fn family_strategy() -> impl Strategy<Value = FamilyData> {
    (1usize..5).prop_flat_map(|n| {
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0u8..3, n),
            prop::collection::vec(0usize..6, n * (n - 1) / 2),
        )
            .prop_map(move |(ys, xs, cls)| {
                let all = [
                    RelationshipClass::Sibling,
                    RelationshipClass::ParentOffspring,
                    RelationshipClass::Avuncular,
                    RelationshipClass::Grandparental,
                    RelationshipClass::Cousin,
                    RelationshipClass::Unrelated,
                ];
                let classes = PairClasses::new(n, cls.iter().map(|&c| all[c]).collect()).unwrap();
                let gs: Vec<_> = xs.iter().map(|&x| g(x)).collect();
                FamilyData::complete("f", &ys, &gs, classes).unwrap()
            })
    })
}

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (-2.0f64..1.0, -1.5f64..2.0, prop::array::uniform5(0.3f64..5.0))
        .prop_map(|(b0, b1, psi)| ModelParams::new(b0, b1, DependenceOdds::from_array(psi)).unwrap())
}

/// Reorders members of a family, carrying pair classes along.
fn permute_members(f: &FamilyData, perm: &[usize]) -> FamilyData {
    FamilyData::new(
        f.family_id.clone(),
        perm.iter().map(|&i| f.phenotypes[i]).collect(),
        perm.iter().map(|&i| f.genotypes[i]).collect(),
        PairClasses::from_fn(perm.len(), |a, b| f.pair_classes.get(perm[a], perm[b])),
    )
    .unwrap()
}

const KINDS: [CLKind; 3] = [CLKind::Independence, CLKind::PairwiseWeighted, CLKind::PairwiseUnweightedPsi];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loglik_invariant_to_data_order(
        data in prop::collection::vec(family_strategy(), 1..8),
        p in params_strategy(),
        seed in any::<u64>(),
    ) {
        let mut shuffled: Vec<FamilyData> = data
            .iter()
            .enumerate()
            .map(|(k, f)| {
                let n = f.size();
                let mut perm: Vec<usize> = (0..n).collect();
                perm.rotate_left(((seed >> k) as usize) % n);
                if (seed >> (k + 3)) & 1 == 1 {
                    perm.reverse();
                }
                permute_members(f, &perm)
            })
            .collect();
        shuffled.rotate_left(seed as usize % data.len());
        for kind in KINDS {
            let a = cl_eval(&data, &p, kind).unwrap().loglik;
            let b = cl_eval(&shuffled, &p, kind).unwrap().loglik;
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn unrelated_singleton_adds_its_bernoulli_term(
        data in prop::collection::vec(family_strategy(), 0..6),
        p in params_strategy(),
        y in any::<bool>(),
        x in 0u8..3,
    ) {
        let mut more = data.clone();
        more.push(singleton("extra", y, x));
        let m = marginal_prob(p.beta0, p.beta1, g(x)).unwrap();
        let term = if y { m } else { 1.0 - m }.ln();
        for kind in KINDS {
            let a = cl_eval(&data, &p, kind).unwrap().loglik;
            let b = cl_eval(&more, &p, kind).unwrap().loglik;
            prop_assert!((b - a - term).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn pairwise_reduces_to_independence_at_unit_odds(
        data in prop::collection::vec(family_strategy(), 1..8),
        b0 in -2.0f64..1.0,
        b1 in -1.5f64..2.0,
    ) {
        // every family weighted 1/(n-1) sees each member in n-1 pairs
        let p = ModelParams::independent(b0, b1);
        let a = cl_eval(&data, &p, CLKind::Independence).unwrap();
        let b = cl_eval(&data, &p, CLKind::PairwiseWeighted).unwrap();
        prop_assert!((a.loglik - b.loglik).abs() < 1e-12 * a.loglik.abs().max(1.0));
        for k in 0..2 {
            prop_assert!((a.score[k] - b.score[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn adjusted_lr_is_transitive(
        c in 0.5f64..20.0,
        centre in -1.0f64..1.5,
        ab in 0.2f64..1.5,
        t in prop::array::uniform3(-2.5f64..4.5),
    ) {
        let curve = quadratic_curve(c, centre, 0.0, ab);
        let [a, b, d] = t.map(f64::exp);
        let lhs = adjusted_lr(&curve, a, d).unwrap().ln();
        let rhs = adjusted_lr(&curve, a, b).unwrap().ln() + adjusted_lr(&curve, b, d).unwrap().ln();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn intervals_nest_and_ignore_shifts(
        c in 0.5f64..20.0,
        centre in -1.0f64..1.5,
        ab in 0.2f64..1.5,
        shift in -1e3f64..1e3,
    ) {
        let curve = quadratic_curve(c, centre, 0.0, ab);
        let shifted = quadratic_curve(c, centre, shift, ab);
        let mut prev: Option<famcl_core::SupportInterval> = None;
        for k in [8.0, 32.0, 100.0, 1000.0] {
            let iv = support_interval(&curve, k).unwrap();
            let jv = support_interval(&shifted, k).unwrap();
            prop_assert!((iv.lower_or.ln() - jv.lower_or.ln()).abs() < 1e-9);
            prop_assert!((iv.upper_or.ln() - jv.upper_or.ln()).abs() < 1e-9);
            prop_assert_eq!(iv.lower_open, jv.lower_open);
            if let Some(p) = prev {
                prop_assert!(iv.lower_or <= p.lower_or && iv.upper_or >= p.upper_or);
            }
            prev = Some(iv);
        }
    }

    #[test]
    fn fwer_monotone_and_capped(n in 1u64..5000, dn in 0u64..5000, m in 0.0f64..1.0, dm in 0.0f64..1.0) {
        let m2 = (m + dm).min(1.0);
        let a = fwer_bound(n, m).unwrap();
        prop_assert!(a <= 1.0);
        prop_assert!(fwer_bound(n + dn, m).unwrap() >= a);
        prop_assert!(fwer_bound(n, m2).unwrap() >= a);
    }

    #[test]
    fn bump_is_unimodal(k in 1.5f64..1e4) {
        let peak = bump_argmax(k).unwrap();
        let cs: Vec<f64> = (1..=2000).map(|i| i as f64 * 0.005).collect();
        let vals: Vec<f64> = cs.iter().map(|&c| bump(c, k).unwrap()).collect();
        for w in cs.windows(2).zip(vals.windows(2)) {
            let (c, v) = w;
            if c[1] <= peak {
                prop_assert!(v[1] >= v[0]);
            } else if c[0] >= peak {
                prop_assert!(v[1] <= v[0]);
            }
        }
    }

    #[test]
    fn marginal_monotone(b0 in -4.0f64..4.0, b1 in 0.01f64..3.0, d in 0.01f64..1.0) {
        for x in 0..3u8 {
            prop_assert!(marginal_prob(b0 + d, b1, g(x)).unwrap() > marginal_prob(b0, b1, g(x)).unwrap());
        }
        prop_assert!(marginal_prob(b0, b1, g(1)).unwrap() > marginal_prob(b0, b1, g(0)).unwrap());
        prop_assert!(marginal_prob(b0, b1, g(2)).unwrap() > marginal_prob(b0, b1, g(1)).unwrap());
    }
}

fn quadratic_curve(c: f64, centre: f64, shift: f64, ab: f64) -> ProfileCurve {
    let grid: Vec<f64> = (0..401).map(|i| -3.0 + 8.0 * i as f64 / 400.0).collect();
    let ll = grid.iter().map(|b| shift - c * (b - centre).powi(2)).collect();
    let mut curve = ProfileCurve::from_values(Param::Beta1, grid, ll, centre, shift).unwrap();
    curve.adjustment = Some(ab);
    curve
}

#[test]
fn mcle_agrees_at_unit_odds() {
    let data: Vec<FamilyData> = (0..40)
        .map(|f| {
            let ys: Vec<bool> = (0..3).map(|i| (f * 5 + i * 7) % 4 == 0).collect();
            let xs: Vec<u8> = (0..3).map(|i| ((f * 2 + i) % 3) as u8).collect();
            sibship(&format!("f{f}"), &ys, &xs)
        })
        .collect();
    let (_, a) = maximize_cl(&data, CLKind::Independence, &[], None).unwrap();
    let (layout, b) = maximize_cl(&data, CLKind::PairwiseWeighted, &[(Param::LogPsi(RelationshipClass::Sibling), 0.0)], None).unwrap();
    assert_eq!(layout.dim(), 3);
    assert!((a.theta[0] - b.theta[0]).abs() < 1e-8 && (a.theta[1] - b.theta[1]).abs() < 1e-8);
}
