mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{instance, objective, oracle, random_sphere};
use spectral_saturation::spectral::l2_norm;
use spectral_saturation::toterr::worst_case_from_parts;

#[test]
fn solver_matches_the_ascent_oracle() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, d, delta) = instance(&mut rng);
        let sol = worst_case_from_parts(&b, &d, delta).unwrap();
        let reference = oracle(&b, &d, delta, &mut rng);
        assert!(
            (sol.value - reference).abs() <= 1e-6 * reference,
            "seed {seed}: solver {} oracle {reference} (b={b:?} d={d:?} delta={delta})",
            sol.value
        );
    }
}

#[test]
fn solutions_satisfy_kkt_and_sandwich_bounds() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (b, d, delta) = instance(&mut rng);
        let sol = worst_case_from_parts(&b, &d, delta).unwrap();
        let ne = l2_norm(&sol.noise);
        assert!((ne - delta).abs() <= 1e-12 * delta, "seed {seed}: |e| = {ne}, delta = {delta}");
        assert!((objective(&b, &d, &sol.noise) - sol.value).abs() <= 1e-12 * sol.value.max(1.0));
        assert!(sol.value >= l2_norm(&b));
        for _ in 0..64 {
            let radius = delta * rng.gen_range(0.0..=1.0);
            let e = random_sphere(&mut rng, b.len(), radius);
            assert!(sol.value >= objective(&b, &d, &e) * (1.0 - 1e-12));
        }
        if !sol.hard_case {
            let dmax = d.iter().copied().fold(0.0, f64::max);
            let res: Vec<f64> = b
                .iter()
                .zip(&d)
                .zip(&sol.noise)
                .map(|((b, d), e)| d * (b + d * e) - sol.multiplier * e)
                .collect();
            let bound = 1e-10 * (sol.value * dmax + 1.0);
            assert!(l2_norm(&res) <= bound, "seed {seed}: KKT residual {} > {bound}", l2_norm(&res));
        }
    }
}
