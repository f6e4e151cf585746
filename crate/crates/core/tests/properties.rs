use proptest::prelude::*;

use momt_core::costs::{evaluate, legendre_conjugate, CostKind, CostSpec, ConjugateTable, Sense};
use momt_core::extremality::{
    check_c_extreme, check_cyclical_monotonicity, detect_map_decomposition, fiber_report, CostTable, CycleOptions,
    Decomposition,
};
use momt_core::lp::{self, is_transport_vertex, uniqueness_certificate, UniquenessStatus};
use momt_core::measure::{disintegrate, glue, pushforward};
use momt_core::reduction::{reduce, reduce_chain, verify_reduction_optimality};
use momt_core::{Coupling, DiscreteMeasure, Instance, Space};

fn normalize(raw: Vec<f64>) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(normalize)
}

fn line(name: String, w: Vec<f64>) -> DiscreteMeasure {
    let space = Space::new(name, (0..w.len()).map(|i| vec![i as f64]).collect()).unwrap();
    DiscreteMeasure::new(space, w).unwrap()
}

fn tensor_instance(rank: std::ops::RangeInclusive<usize>, max_arity: usize) -> impl Strategy<Value = Instance> {
    prop::collection::vec(1..=max_arity, rank)
        .prop_flat_map(|arities| {
            let cells: usize = arities.iter().product();
            let ws: Vec<_> = arities.iter().map(|&n| weights(n)).collect();
            (ws, prop::collection::vec(-1.0f64..1.0, cells), any::<bool>())
        })
        .prop_map(|(ws, table, max)| {
            let marginals = ws
                .into_iter()
                .enumerate()
                .map(|(k, w)| line(format!("X{}", k + 1), w))
                .collect();
            let sense = if max { Sense::Max } else { Sense::Min };
            Instance::from_table(marginals, table, sense).unwrap()
        })
}

fn point_marginals(arities: Vec<usize>) -> impl Strategy<Value = Vec<DiscreteMeasure>> {
    arities
        .into_iter()
        .map(|n| (prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), n), weights(n)))
        .collect::<Vec<_>>()
        .prop_map(|parts| {
            parts
                .into_iter()
                .enumerate()
                .map(|(k, (pts, w))| DiscreteMeasure::new(Space::new(format!("X{}", k + 1), pts).unwrap(), w).unwrap())
                .collect()
        })
}

fn coupling(arities: Vec<usize>) -> impl Strategy<Value = Coupling> {
    let cells: usize = arities.iter().product();
    prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], cells).prop_filter_map("all zero", move |raw| {
        if raw.iter().all(|&m| m == 0.0) {
            return None;
        }
        Some(Coupling::from_dense(arities.clone(), &normalize(raw)).unwrap())
    })
}

fn positive_coupling(arities: Vec<usize>) -> impl Strategy<Value = Coupling> {
    let cells: usize = arities.iter().product();
    prop::collection::vec(0.01f64..1.0, cells)
        .prop_map(move |raw| Coupling::from_dense(arities.clone(), &normalize(raw)).unwrap())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn proper_subsets(rank: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << rank) - 1)
        .filter(|m| m.count_ones() >= 2)
        .map(|m| (0..rank).filter(|k| m & (1 << k) != 0).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solved_plans_have_the_given_marginals(inst in tensor_instance(2..=4, 4)) {
        let sol = lp::solve(&inst).unwrap();
        for k in 0..inst.n_axes() {
            let m = sol.plan.marginal(k);
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(max_diff(&m, inst.weights(k)) <= 1e-9);
        }
    }

    #[test]
    fn strong_duality_and_slackness(inst in tensor_instance(2..=4, 4)) {
        let sol = lp::solve(&inst).unwrap();
        let scale = inst.cost_scale();
        prop_assert!(sol.duality_gap() <= 1e-8 * scale);
        let slack: f64 = sol
            .plan
            .iter()
            .map(|(i, m)| inst.sense().sign() * (inst.cost_at(i) - sol.potentials.sum_at(i)) * m)
            .sum();
        prop_assert!(slack.abs() <= 1e-8 * scale);
        prop_assert!(sol.potentials.max_violation(&inst) <= 1e-8 * scale);
    }

    #[test]
    fn disintegration_round_trip(plan in coupling(vec![3, 2, 3]), mask in 1u32..7) {
        let cond: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
        let back = disintegrate(&plan, &cond).unwrap().recombine().unwrap();
        prop_assert!(max_diff(&back.to_dense(), &plan.to_dense()) <= 1e-12);
    }

    #[test]
    fn glue_restricts_to_both_inputs(
        (a, b) in weights(3).prop_flat_map(|mu| {
            let mu2 = mu.clone();
            (positive_coupling(vec![3, 2]).prop_map(move |c| rescale_first(&c, &mu)),
             positive_coupling(vec![3, 3]).prop_map(move |c| rescale_first(&c, &mu2)))
        })
    ) {
        let g = glue(&a, &b).unwrap();
        let left = pushforward(&g, &[0, 1]).unwrap();
        let right = pushforward(&g, &[0, 2]).unwrap();
        prop_assert!(max_diff(&left.to_dense(), &a.to_dense()) <= 1e-12);
        prop_assert!(max_diff(&right.to_dense(), &b.to_dense()) <= 1e-12);
    }

    #[test]
    fn pushforward_of_the_plan_solves_every_reduced_problem(inst in tensor_instance(3..=4, 3)) {
        let sol = lp::solve(&inst).unwrap();
        let scale = inst.cost_scale();
        for subset in proper_subsets(inst.n_axes()) {
            let rep = verify_reduction_optimality(&inst, &sol.plan, &sol.potentials, &subset).unwrap();
            prop_assert!(rep.pass, "subset {:?} gap {:e}", subset, rep.gap);
            prop_assert!((rep.inherited_dual_value - rep.reduced_optimum).abs() <= 1e-8 * scale);
            prop_assert!(rep.split_residual.abs() <= 1e-8 * scale);
            let red = reduce(&inst, &sol.potentials, &subset).unwrap();
            prop_assert!(red.inherited_violation() <= 1e-8 * scale);
        }
        let chain = reduce_chain(&inst, &sol.potentials).unwrap();
        prop_assert!(chain.nesting_residual <= 1e-9 * scale);
    }

    #[test]
    fn solver_support_is_cyclically_monotone(inst in tensor_instance(2..=3, 4)) {
        let sol = lp::solve(&inst).unwrap();
        let support: Vec<_> = sol.plan.support().cloned().collect();
        let rep = check_cyclical_monotonicity(
            &support,
            CostTable::new(inst.grid(), inst.table()),
            inst.sense(),
            CycleOptions { max_cycle: 3, samples: 50, ..Default::default() },
        )
        .unwrap();
        prop_assert!(rep.pass);
    }

    #[test]
    fn c_extreme_support_is_unique(inst in tensor_instance(2..=3, 4)) {
        let sol = lp::solve(&inst).unwrap();
        let pot = lp::strictly_complementary(&inst, &sol, Default::default()).unwrap();
        let set = lp::MinimizingSet::new(&inst, &pot, 1e-9 * inst.cost_scale());
        let rep = fiber_report(&set.indices, CostTable::new(inst.grid(), inst.table()), &[0], None).unwrap();
        if check_c_extreme(&rep).is_none() {
            let cert = uniqueness_certificate(&inst, &sol.plan, &pot, sol.value).unwrap();
            prop_assert_eq!(cert.status, UniquenessStatus::Unique);
        }
    }

    #[test]
    fn map_decomposition_recombines(plan in coupling(vec![3, 2, 2]), axis in 0usize..3) {
        if let Decomposition::Maps(d) = detect_map_decomposition(&plan, axis, None).unwrap() {
            let back = d.recombine().unwrap();
            prop_assert!(max_diff(&back.to_dense(), &plan.to_dense()) <= 1e-12);
        } else {
            prop_assert!(false, "no cap, so a decomposition always exists");
        }
    }

    #[test]
    fn singleton_fibers_give_vertices(inst in tensor_instance(3..=3, 3)) {
        let sol = lp::solve(&inst).unwrap();
        let support: Vec<_> = sol.plan.support().cloned().collect();
        let rep = fiber_report(&support, CostTable::new(inst.grid(), inst.table()), &[0], None).unwrap();
        if rep.max_fiber() == 1 {
            let a = inst.arities();
            let flat = Coupling::new(
                vec![a[0], a[1] * a[2]],
                sol.plan.iter().map(|(i, m)| (vec![i[0], i[1] * a[2] + i[2]], m)),
            )
            .unwrap();
            let tail = pushforward(&sol.plan, &[1, 2]).unwrap().to_dense();
            prop_assert!(is_transport_vertex(&flat, &[inst.weights(0), &tail]).unwrap());
        }
    }

    #[test]
    fn attractive_minimizers_are_surplus_maximizers(ms in point_marginals(vec![3, 3, 2])) {
        let solve = |kind, sense| {
            let inst = Instance::new(ms.clone(), CostSpec::new(kind, sense).unwrap()).unwrap();
            lp::solve(&inst).unwrap().plan
        };
        let a = solve(CostKind::Attractive, Sense::Min);
        let s = solve(CostKind::Surplus, Sense::Max);
        prop_assert!(max_diff(&a.to_dense(), &s.to_dense()) <= 1e-12);
    }

    #[test]
    fn fenchel_young_holds_on_samples(
        samples in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..12),
        s in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let table = ConjugateTable::from_fn(samples.clone(), |t| t[0] * t[0] + 0.5 * t[1].abs()).unwrap();
        let star = legendre_conjugate(&table, &s).unwrap();
        for (t, u) in table.samples().iter().zip(table.values()) {
            let dot = s[0] * t[0] + s[1] * t[1];
            prop_assert!(u + star.value >= dot - 1e-12);
        }
    }

    #[test]
    fn gromov_wasserstein_evaluation(
        x in prop::collection::vec(-2.0f64..2.0, 2),
        y in prop::collection::vec(-2.0f64..2.0, 2),
        xi in -2.0f64..2.0,
        a in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2),
    ) {
        let spec = CostSpec::new(CostKind::GromovWasserstein { xi, a: a.clone() }, Sense::Max).unwrap();
        let c = evaluate(&spec, &[&x, &y]).unwrap();
        let ax = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
        let n2 = |v: &[f64]| v[0] * v[0] + v[1] * v[1];
        let expected = n2(&x) * n2(&y) + xi * (ax[0] * y[0] + ax[1] * y[1]);
        prop_assert!((c - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }
}

fn rescale_first(c: &Coupling, mu: &[f64]) -> Coupling {
    let m = c.marginal(0);
    Coupling::new(
        c.arities().to_vec(),
        c.iter().map(|(i, v)| (i.clone(), v / m[i[0]] * mu[i[0]])),
    )
    .unwrap()
}
