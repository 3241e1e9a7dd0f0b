//! Randomized invariants: things that must hold for every admissible input,
//! not just the frozen examples.

use proptest::prelude::*;
use proxsweep::analysis::{gronwall_bound, BoundCheck, CheckConfig};
use proxsweep::cli::{doc_to_toml, load_doc, ScenarioDoc};
use proxsweep::proxsets::certify::{sample_boundary_normal_pair, sample_in_box};
use proxsweep::proxsets::{minimal_norm_velocity, ConeRep, ProxSet};
use proxsweep::tolerances::MEMBERSHIP_TOL;
use proxsweep::vector::Vector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn vec_of(coords: Vec<f64>) -> Vector {
    Vector::new(coords).unwrap()
}

/// A small family of catalogue sets, indexed so proptest can shrink.
fn catalogue_set(pick: u8) -> ProxSet {
    match pick % 6 {
        0 => ProxSet::half_space(vec_of(vec![-1.0, 0.5]), 0.25).unwrap(),
        1 => ProxSet::axis_box(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap(),
        2 => ProxSet::ball(vec_of(vec![0.5, -0.5]), 1.5).unwrap(),
        3 => ProxSet::ball_complement(vec_of(vec![0.0, 0.0]), 1.0).unwrap(),
        4 => ProxSet::polytope(vec![
            proxsweep::proxsets::HalfSpace::new(vec_of(vec![-1.0, 0.0]), 0.0).unwrap(),
            proxsweep::proxsets::HalfSpace::new(vec_of(vec![0.0, -1.0]), 0.0).unwrap(),
            proxsweep::proxsets::HalfSpace::new(vec_of(vec![1.0, 1.0]), 1.0).unwrap(),
        ])
        .unwrap(),
        _ => ProxSet::disjoint_union(vec![
            ProxSet::ball(vec_of(vec![-2.0, 0.0]), 1.0).unwrap(),
            ProxSet::ball(vec_of(vec![2.0, 0.0]), 1.0).unwrap(),
        ])
        .unwrap(),
    }
}

proptest! {
    /// Raising the slack can only widen the acceptance region: a passing
    /// check never flips to failing.
    #[test]
    fn slack_is_monotone(
        measured in -5.0f64..5.0,
        bound in 0.0f64..5.0,
        lo in 0.0f64..1.0,
        extra in 0.0f64..1.0,
        abs_tol in 0.0f64..0.1,
    ) {
        let tight = BoundCheck::evaluate("t", measured, bound, &CheckConfig { slack: lo, abs_tol });
        let loose = BoundCheck::evaluate(
            "l",
            measured,
            bound,
            &CheckConfig { slack: lo + extra, abs_tol },
        );
        prop_assert!(!tight.pass || loose.pass);
        prop_assert_eq!(tight.pass, tight.recomputed_pass());
    }

    /// With no forcing term and exponent zero, the comparison envelope is
    /// exactly `w0 exp(int a)`; trapezoids are exact for affine rates.
    #[test]
    fn gronwall_reduces_to_the_exponential(
        p in -3.0f64..3.0,
        q in -3.0f64..3.0,
        w0 in 0.0f64..5.0,
    ) {
        let n = 10_001usize;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * 1e-4).collect();
        let a: Vec<f64> = times.iter().map(|t| p + q * t).collect();
        let zeros = vec![0.0; n];
        let out = gronwall_bound(&times, &a, &zeros, 0.0, w0).unwrap();
        for &k in &[n / 3, 2 * n / 3, n - 1] {
            let t = times[k];
            let exact = w0 * (p * t + 0.5 * q * t * t).exp();
            prop_assert!(
                (out[k] - exact).abs() <= 1e-6 * (1.0 + exact),
                "t = {t}: {} vs {exact}", out[k]
            );
        }
    }

    /// Projection lands in the set and is idempotent.
    #[test]
    fn projection_is_idempotent(pick in 0u8..6, seed in 0u64..1000) {
        let set = catalogue_set(pick);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = vec_of(vec![-4.0, -4.0]);
        let hi = vec_of(vec![4.0, 4.0]);
        for _ in 0..8 {
            let s = sample_in_box(&mut rng, &lo, &hi);
            let Ok(p) = set.project(&s) else { continue };
            prop_assert!(set.contains(&p, MEMBERSHIP_TOL).unwrap());
            let again = set.project(&p).unwrap();
            prop_assert!(again.dist(&p) <= 1e-9 * (1.0 + p.norm()));
        }
    }

    /// Points produced by the boundary sampler satisfy the nearest-point
    /// identity for normals shorter than the prox constant.
    #[test]
    fn sampled_normals_reproject_to_their_base(pick in 0u8..6, seed in 0u64..1000) {
        let set = catalogue_set(pick);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = vec_of(vec![-4.0, -4.0]);
        let hi = vec_of(vec![4.0, 4.0]);
        if let Some((x, dir)) =
            sample_boundary_normal_pair(&set, &mut rng, &lo, &hi, 200).unwrap()
        {
            let len = 0.5 * set.prox_r().min(2.0);
            let xi = dir.scale(len);
            prop_assert!(
                proxsweep::proxsets::certify::verify_projection_identity(&set, &x, &xi).unwrap()
            );
        }
    }

    /// The minimal-norm velocity is the metric projection of the field onto
    /// the complement of the cone: orthogonal residual, never longer than
    /// the field, and no cone element brings the field closer.
    #[test]
    fn minimal_velocity_is_a_projection_residual(
        gx in -2.0f64..2.0,
        gy in -2.0f64..2.0,
        fx in -3.0f64..3.0,
        fy in -3.0f64..3.0,
        lambda in 0.0f64..2.0,
    ) {
        let apex = vec_of(vec![0.0, 0.0]);
        let g1 = vec_of(vec![1.0, 0.0]);
        let g2 = match vec_of(vec![gx, gy]).normalized() {
            Some(u) => u,
            None => return Ok(()),
        };
        let cone = ConeRep::new(apex, vec![g1.clone(), g2.clone()]);
        let f = vec_of(vec![fx, fy]);
        let v = minimal_norm_velocity(&cone, &f);
        let normal_part = f.sub(&v);
        // Moreau decomposition: the removed part is orthogonal to v.
        prop_assert!(normal_part.dot(&v).abs() <= 1e-8);
        prop_assert!(v.norm() <= f.norm() + 1e-12);
        // No single-generator correction does better.
        for g in [&g1, &g2] {
            let alt = f.sub(&g.scale(lambda));
            prop_assert!(v.norm() <= alt.norm() + 1e-8);
        }
    }

    /// Scenario documents survive serialize/parse unchanged, digest included.
    #[test]
    fn scenario_documents_round_trip(
        n in 100usize..2000,
        t_pick in 0u8..3,
        x0 in 0.05f64..0.95,
        seed in proptest::option::of(0u64..u64::MAX),
    ) {
        let horizon = [1.0, 2.0, 4.0][t_pick as usize];
        let h = horizon / n as f64;
        let text = format!(
            "x0 = [{x0}]\nT = {horizon}\nh = {h}\n{}\n\
             [set]\nkind = \"box\"\nlower = [0.0]\nupper = [1.0]\n\n\
             [field]\nkind = \"constant\"\nvalue = [-1.0]\n\n\
             [[checks]]\nname = \"velocity_field_bound\"\nslack = 0.01\n",
            seed.map(|s| format!("seed = {s}")).unwrap_or_default(),
        );
        let doc: ScenarioDoc = toml::from_str(&text).unwrap();
        let serialized = doc_to_toml(&doc).unwrap();
        let reparsed: ScenarioDoc = toml::from_str(&serialized).unwrap();
        prop_assert_eq!(&doc, &reparsed);
        let a = load_doc(doc, Path::new("<prop>")).unwrap();
        let b = load_doc(reparsed, Path::new("<prop>")).unwrap();
        prop_assert_eq!(a.digest, b.digest);
        prop_assert_eq!(a.scenario.n_steps(), b.scenario.n_steps());
    }
}
