#![allow(dead_code)]

//! Brute-force reference for the worst-case noise problem: random points on
//! the noise sphere, each polished by projected ascent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use spectral_saturation::spectral::l2_norm;

pub fn objective(b: &[f64], d: &[f64], e: &[f64]) -> f64 {
    let v: Vec<f64> = b.iter().zip(d).zip(e).map(|((b, d), e)| b + d * e).collect();
    l2_norm(&v)
}

pub fn random_sphere(rng: &mut ChaCha8Rng, n: usize, delta: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nv = l2_norm(&v);
        if nv > 1e-3 && nv <= 1.0 {
            return v.iter().map(|x| x * delta / nv).collect();
        }
    }
}

/// Maximizing the convex objective's linearization over the ball never
/// decreases it, so iterating `e ← δ·D(b+De)/‖D(b+De)‖` is an ascent.
pub fn ascend(b: &[f64], d: &[f64], delta: f64, mut e: Vec<f64>) -> Vec<f64> {
    for _ in 0..20_000 {
        let grad: Vec<f64> = b.iter().zip(d).zip(&e).map(|((b, d), e)| d * (b + d * e)).collect();
        let ng = l2_norm(&grad);
        if ng == 0.0 {
            break;
        }
        let next: Vec<f64> = grad.iter().map(|g| g * delta / ng).collect();
        let moved = next.iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        e = next;
        if moved < 1e-15 * delta {
            break;
        }
    }
    e
}

pub fn oracle(b: &[f64], d: &[f64], delta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let n = b.len();
    let mut best = l2_norm(b);
    for _ in 0..64 {
        let e = ascend(b, d, delta, random_sphere(rng, n, delta));
        best = best.max(objective(b, d, &e));
    }
    // coordinate directions catch the hard case's ± choice
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; n];
            e[i] = s * delta;
            best = best.max(objective(b, d, &ascend(b, d, delta, e)));
        }
    }
    best
}

pub fn instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, f64) {
    let n = rng.gen_range(1..=6);
    let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
    // a share of degenerate instances: ties in d and bias vanishing where d peaks
    if n > 1 && rng.gen_bool(0.25) {
        d[1] = d[0];
    }
    if rng.gen_bool(0.2) {
        let dmax = d.iter().copied().fold(0.0, f64::max);
        for (bi, di) in b.iter_mut().zip(&d) {
            if *di == dmax {
                *bi = 0.0;
            }
        }
    }
    if b.iter().all(|v| *v == 0.0) {
        b[0] = 0.5;
    }
    let delta = 10f64.powf(rng.gen_range(-3.0..0.5));
    (b, d, delta)
}
