use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use momt_core::costs::Sense;
use momt_core::lp::{self, enumerate_vertices, is_vertex, Polytope};
use momt_core::measure::{disintegrate, glue, pushforward};
use momt_core::reduction::reduce;
use momt_core::{Coupling, DiscreteMeasure, Instance, Space};

fn line(name: &str, w: Vec<f64>) -> DiscreteMeasure {
    let space = Space::new(name, (0..w.len()).map(|i| vec![i as f64]).collect()).unwrap();
    DiscreteMeasure::new(space, w).unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|w| w / s).collect()
}

#[test]
fn gluing_a_deterministic_side_gives_the_only_vertex() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..20 {
        let mu = random_weights(&mut rng, 3);
        let map: Vec<Vec<usize>> = (0..3).map(|_| vec![rng.gen_range(0..2)]).collect();
        let left = Coupling::graph(&mu, &[2], &map).unwrap();
        let raw = Coupling::from_dense(vec![3, 2], &random_weights(&mut rng, 6)).unwrap();
        let m = raw.marginal(0);
        let right = Coupling::new(vec![3, 2], raw.iter().map(|(i, v)| (i.clone(), v / m[i[0]] * mu[i[0]]))).unwrap();

        let glued = glue(&left, &right).unwrap();
        let poly = Polytope::from_couplings(&[3, 2, 2], &[(vec![0, 1], &left), (vec![0, 2], &right)]).unwrap();
        assert!(is_vertex(&glued, &poly).unwrap());
        let verts = enumerate_vertices(&poly).unwrap();
        assert_eq!(verts.len(), 1);
        assert!(verts[0].total_variation(&glued) <= 1e-12);
    }
}

#[test]
fn conditionals_of_a_glued_plan_are_products() {
    let mu = vec![0.5, 0.5];
    let left = Coupling::from_dense(vec![2, 2], &[0.3, 0.2, 0.1, 0.4]).unwrap();
    let right = Coupling::from_dense(vec![2, 2], &[0.25, 0.25, 0.05, 0.45]).unwrap();
    let glued = glue(&left, &right).unwrap();
    let dis = disintegrate(&glued, &[0]).unwrap();
    assert_eq!(dis.base().marginal(0), mu);
    let cond = dis.conditional(&[0]).unwrap();
    assert!((cond.mass(&[0, 1]) - 0.6 * 0.5).abs() < 1e-15);
    assert!((cond.mass(&[1, 1]) - 0.4 * 0.5).abs() < 1e-15);
}

#[test]
fn reduced_instance_is_solved_by_the_pushforward() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..20 {
        let ms: Vec<_> = ["X", "Y", "Z", "W"].iter().map(|n| line(n, random_weights(&mut rng, 3))).collect();
        let table = (0..81).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sense = if case % 2 == 0 { Sense::Min } else { Sense::Max };
        let inst = Instance::from_table(ms, table, sense).unwrap();
        let sol = lp::solve(&inst).unwrap();
        for subset in [vec![0, 1], vec![1, 3], vec![0, 2, 3]] {
            let reduced = reduce(&inst, &sol.potentials, &subset).unwrap().to_instance(&inst).unwrap();
            let rsol = lp::solve(&reduced).unwrap();
            let pf = pushforward(&sol.plan, &subset).unwrap();
            let pf_value = pf.integrate(reduced.table());
            assert!((pf_value - rsol.value).abs() <= 1e-9, "case {case} {subset:?}");
        }
    }
}
