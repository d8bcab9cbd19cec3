#![allow(dead_code)]

use famcl_core::{FamilyData, Genotype, PairClasses, RelationshipClass};

pub fn g(x: u8) -> Genotype {
    Genotype::new(x).unwrap()
}

pub fn expit(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// `p11` from the cross-product-ratio equation `psi = p11 p00 / (p10 p01)`,
/// found by bisection between the Frechet bounds.
pub fn p11_bisect(pi: f64, pj: f64, psi: f64) -> f64 {
    let f = |p11: f64| psi * (pi - p11) * (pj - p11) - p11 * (1.0 - pi - pj + p11);
    let (mut lo, mut hi) = ((pi + pj - 1.0).max(0.0), pi.min(pj));
    // f(lo) >= 0 >= f(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Probability of `(yi, yj)` under the Plackett table.
pub fn pair_prob(pi: f64, pj: f64, psi: f64, yi: bool, yj: bool) -> f64 {
    let p11 = p11_bisect(pi, pj, psi);
    match (yi, yj) {
        (true, true) => p11,
        (true, false) => pi - p11,
        (false, true) => pj - p11,
        (false, false) => 1.0 - pi - pj + p11,
    }
}

pub fn sibship(id: &str, ys: &[bool], xs: &[u8]) -> FamilyData {
    let n = ys.len();
    let gs: Vec<Genotype> = xs.iter().map(|&x| g(x)).collect();
    FamilyData::complete(id, ys, &gs, PairClasses::uniform(n, RelationshipClass::Sibling)).unwrap()
}

pub fn singleton(id: &str, y: bool, x: u8) -> FamilyData {
    FamilyData::singleton(id, y, g(x))
}

/// Unrelated singletons from `(genotype, cases, controls)` cell counts.
pub fn singletons_from_table(cells: &[(u8, usize, usize)]) -> Vec<FamilyData> {
    let mut out = Vec::new();
    for &(x, cases, controls) in cells {
        for _ in 0..cases {
            out.push(singleton(&format!("s{}", out.len()), true, x));
        }
        for _ in 0..controls {
            out.push(singleton(&format!("s{}", out.len()), false, x));
        }
    }
    out
}

/// Ordinary logistic maximum likelihood by iteratively reweighted least
/// squares on `(1, x)`, solving the 2x2 normal equations directly.
pub fn logistic_irls(xs: &[f64], ys: &[bool]) -> (f64, f64) {
    let (mut b0, mut b1) = (0.0, 0.0);
    for _ in 0..100 {
        let (mut s00, mut s01, mut s11, mut u0, mut u1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let p = expit(b0 + b1 * x);
            let w = p * (1.0 - p);
            s00 += w;
            s01 += w * x;
            s11 += w * x * x;
            let r = f64::from(u8::from(y)) - p;
            u0 += r;
            u1 += r * x;
        }
        let det = s00 * s11 - s01 * s01;
        let d0 = (s11 * u0 - s01 * u1) / det;
        let d1 = (s00 * u1 - s01 * u0) / det;
        b0 += d0;
        b1 += d1;
        if d0.abs().max(d1.abs()) < 1e-14 {
            break;
        }
    }
    (b0, b1)
}
