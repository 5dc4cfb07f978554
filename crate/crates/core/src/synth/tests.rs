use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use super::*;
use crate::abstraction::{min_ctr_abs, Triple};
use crate::model::parse_model;
use crate::rational::ratio;

const FIG1: &str = include_str!("../../../../models/fig1.lts");
const FIG2: &str = include_str!("../../../../models/fig2.lts");
const EX33: &str = include_str!("../../../../models/ex33.qsm");

/// Least fixpoint straight from its definition, one level at a time.
fn oracle(p: &FiniteControlProblem) -> (BTreeMap<u64, BTreeSet<u64>>, BTreeMap<u64, u32>) {
    let img = |s: u64, a: u64| -> BTreeSet<u64> {
        p.transitions()
            .iter()
            .filter(|t| t.state == s && t.action == a)
            .map(|t| t.next)
            .collect()
    };
    let good = |s: u64, a: u64, d: &BTreeSet<u64>| {
        let i = img(s, a);
        !i.is_empty() && i.iter().all(|n| p.goal().contains(n) || d.contains(n))
    };
    let mut d = BTreeSet::new();
    let mut enabled = BTreeMap::new();
    let mut j = BTreeMap::new();
    for level in 1.. {
        let mut added = BTreeMap::new();
        for s in 1..=p.state_count() {
            if d.contains(&s) {
                continue;
            }
            let acts: BTreeSet<u64> = (1..=p.action_count()).filter(|&a| good(s, a, &d)).collect();
            if !acts.is_empty() {
                added.insert(s, acts);
            }
        }
        if added.is_empty() {
            break;
        }
        for (s, acts) in added {
            d.insert(s);
            j.insert(s, level);
            enabled.insert(s, acts);
        }
    }
    (enabled, j)
}

fn labelled(lts: &Lts, c: &Controller) -> BTreeSet<(i64, i64)> {
    c.pairs()
        .into_iter()
        .map(|(s, a)| (lts.state_label(s), lts.action_label(a)))
        .collect()
}

#[test]
fn figure_two_is_solved_by_k2() {
    let lts = parse_lts(FIG2).unwrap();
    let p = lts.problem().unwrap();
    let c = strong_solve(&p);
    assert_eq!(c.outcome, Outcome::Sol);
    let k2 = |s: i64, a: i64| ((s == 1 || s == 2) && a == 1) || (s != 1 && s != 2 && a == 0);
    let dom: BTreeSet<i64> = c.dom().into_iter().map(|s| lts.state_label(s)).collect();
    assert_eq!(dom, (-2..=5).collect());
    // On its domain the controller enables every K2 pair.
    for s in -2..=5 {
        for a in 0..=1 {
            if k2(s, a) {
                assert!(c.is_enabled(lts.state_index(s).unwrap(), lts.action_index(a).unwrap()), "({s},{a})");
            }
        }
    }
    // The most general optimal controller also allows 0 -1-> -1, which is as
    // fast as 0 -0-> 1; the lowest action per state is exactly K2.
    let mut expected: BTreeSet<(i64, i64)> = (-2..=5).flat_map(|s| (0..=1).map(move |a| (s, a))).filter(|&(s, a)| k2(s, a)).collect();
    expected.insert((0, 1));
    assert_eq!(labelled(&lts, &c), expected);
    let lowest: BTreeSet<(i64, i64)> = c
        .enabled
        .iter()
        .map(|(&s, acts)| (lts.state_label(s), lts.action_label(*acts.first().unwrap())))
        .collect();
    assert_eq!(lowest, (-2..=5).flat_map(|s| (0..=1).map(move |a| (s, a))).filter(|&(s, a)| k2(s, a)).collect());
    let report = verify_controller(&p, &c);
    assert!(report.verified);
    assert_eq!(report.max_steps, c.max_j());
}

#[test]
fn figure_two_levels() {
    let lts = parse_lts(FIG2).unwrap();
    let c = strong_solve(&lts.problem().unwrap());
    let j: BTreeMap<i64, u32> = c.j.iter().map(|(&s, &l)| (lts.state_label(s), l)).collect();
    // 1 and -1 step into the goal; 0, 2, -2 are one further; 3 then 4 then 5.
    assert_eq!(
        j,
        BTreeMap::from([(1, 1), (-1, 1), (0, 2), (2, 2), (-2, 2), (3, 3), (4, 4), (5, 5)])
    );
}

#[test]
fn figure_one_has_no_solution() {
    let lts = parse_lts(FIG1).unwrap();
    let p = lts.problem().unwrap();
    let c = strong_solve(&p);
    assert_eq!(c.outcome, Outcome::NoSol);
    let one = lts.state_index(1).unwrap();
    assert!(!c.dom().contains(&one));
    assert!(verify_controller(&p, &c).verified);
}

#[test]
fn goal_self_loop_is_reentered_in_one_step() {
    let p = FiniteControlProblem::new(
        1,
        1,
        [Triple::new(1, 1, 1)].into_iter().collect(),
        BTreeSet::from([1]),
        BTreeSet::from([1]),
        Provenance::ExplicitLts,
    )
    .unwrap();
    let c = strong_solve(&p);
    assert_eq!(c.outcome, Outcome::Sol);
    assert_eq!(c.j, BTreeMap::from([(1, 1)]));
}

#[test]
fn goal_without_successors_is_not_in_the_domain() {
    let p = FiniteControlProblem::new(
        2,
        1,
        [Triple::new(2, 1, 1)].into_iter().collect(),
        BTreeSet::from([2]),
        BTreeSet::from([1]),
        Provenance::AbstractionOfDtlhs,
    )
    .unwrap();
    let c = strong_solve(&p);
    assert_eq!(c.dom(), BTreeSet::from([2]));
    assert_eq!(c.outcome, Outcome::Sol);
    let p = p.clone().with_goal(BTreeSet::from([2])).unwrap();
    let c = strong_solve(&p);
    assert!(c.dom().is_empty());
    assert_eq!(c.outcome, Outcome::Unk);
}

#[test]
fn malformed_problems_are_rejected() {
    let t = |s, a, n| -> AbstractTransitionSet { [Triple::new(s, a, n)].into_iter().collect() };
    let mk = |tr, init: &[u64], goal: &[u64]| {
        FiniteControlProblem::new(
            3,
            2,
            tr,
            init.iter().copied().collect(),
            goal.iter().copied().collect(),
            Provenance::ExplicitLts,
        )
    };
    assert!(matches!(mk(t(4, 1, 1), &[], &[1]), Err(SynthError::StateOutOfRange(4, 3))));
    assert!(matches!(mk(t(1, 3, 1), &[], &[1]), Err(SynthError::ActionOutOfRange(3, 2))));
    assert!(matches!(mk(t(1, 1, 0), &[], &[1]), Err(SynthError::StateOutOfRange(0, 3))));
    assert!(matches!(mk(t(1, 1, 1), &[9], &[1]), Err(SynthError::StateOutOfRange(9, 3))));
    assert!(matches!(mk(t(1, 1, 1), &[], &[]), Err(SynthError::EmptyGoal)));
}

#[test]
fn verifier_finds_lassos_escapes_and_slow_levels() {
    let p = FiniteControlProblem::new(
        3,
        2,
        [
            Triple::new(2, 1, 2),
            Triple::new(2, 2, 1),
            Triple::new(3, 1, 2),
            Triple::new(3, 2, 1),
        ]
        .into_iter()
        .collect(),
        BTreeSet::new(),
        BTreeSet::from([1]),
        Provenance::ExplicitLts,
    )
    .unwrap();
    let good = strong_solve(&p);
    assert!(verify_controller(&p, &good).verified);

    let mut lasso = good.clone();
    lasso.enabled.get_mut(&2).unwrap().insert(1);
    let r = verify_controller(&p, &lasso);
    let cx = r.counterexample.unwrap();
    assert_eq!(cx.violation, Violation::Loop);
    assert_eq!(cx.steps, vec![(2, 1)]);
    assert_eq!(cx.last, 2);

    let mut escape = good.clone();
    escape.enabled.remove(&2);
    escape.enabled.get_mut(&3).unwrap().insert(1);
    let cx = verify_controller(&p, &escape).counterexample.unwrap();
    assert_eq!(cx.violation, Violation::Escape);

    let mut slow = good.clone();
    slow.enabled.insert(3, BTreeSet::from([1]));
    let cx = verify_controller(&p, &slow).counterexample.unwrap();
    assert_eq!(cx.violation, Violation::SlowerThanJ { bound: 1, actual: 2 });
    assert_eq!(cx.steps, vec![(3, 1), (2, 2)]);

    let mut empty = good;
    empty.enabled.get_mut(&2).unwrap().insert(1);
    empty.enabled.insert(1, BTreeSet::from([2]));
    empty.j.insert(1, 1);
    let cx = verify_controller(&p, &empty).counterexample.unwrap();
    assert_eq!(cx.violation, Violation::EmptyImage);
}

#[test]
fn empty_controller_is_vacuously_verified() {
    let lts = parse_lts(FIG1).unwrap();
    let p = lts.problem().unwrap().with_goal(BTreeSet::from([1])).unwrap();
    let none = Controller {
        states: 4,
        actions: 2,
        enabled: BTreeMap::new(),
        j: BTreeMap::new(),
        outcome: Outcome::NoSol,
    };
    assert!(verify_controller(&p, &none).verified);
}

#[test]
fn seven_levels_solve_the_switched_plant() {
    let m = parse_model(EX33).unwrap();
    let n = min_ctr_abs(&m).unwrap();
    let p = FiniteControlProblem::from_abstraction(&m, n, &m.quantization.step()).unwrap();
    assert_eq!(p.goal(), &BTreeSet::from([2, 3]));
    let c = strong_solve(&p);
    assert_eq!(c.outcome, Outcome::Sol);
    assert_eq!(c.dom(), (1..=7).collect());
    let (enabled, j) = oracle(&p);
    assert_eq!(c.enabled, enabled);
    assert_eq!(c.j, j);
    assert!(verify_controller(&p, &c).verified);
    // Left of the goal only u = 0 moves right; right of it u = 1 moves left
    // up to 7/4 and u = 0 beyond 5/4.
    assert!(c.is_enabled(1, 1) && !c.is_enabled(1, 2));
    assert!(c.is_enabled(4, 2));
    assert!(c.is_enabled(7, 1) && !c.is_enabled(7, 2));
}

#[test]
fn two_levels_leave_the_switched_plant_unknown() {
    let m = parse_model(EX33).unwrap().with_levels(&BTreeMap::from([("x".to_string(), 2)])).unwrap();
    let n = min_ctr_abs(&m).unwrap();
    let eps = m.quantization.step();
    assert_eq!(eps, ratio(7, 4));
    let p = FiniteControlProblem::from_abstraction(&m, n, &eps).unwrap();
    let c = strong_solve(&p);
    assert_eq!(c.outcome, Outcome::Unk);
}

fn arb_problem() -> impl Strategy<Value = FiniteControlProblem> {
    (1u64..9, 1u64..4).prop_flat_map(|(n, m)| {
        (
            Just(n),
            Just(m),
            proptest::collection::btree_set((1..=n, 1..=m, 1..=n), 0..30),
            proptest::collection::btree_set(1..=n, 1..3),
            proptest::collection::btree_set(1..=n, 0..4),
        )
            .prop_map(|(n, m, tr, goal, init)| {
                FiniteControlProblem::new(
                    n,
                    m,
                    tr.into_iter().map(|(s, a, x)| Triple::new(s, a, x)).collect(),
                    init,
                    goal,
                    Provenance::ExplicitLts,
                )
                .unwrap()
            })
    })
}

proptest! {
    #[test]
    fn solver_matches_the_definition(p in arb_problem()) {
        let c = strong_solve(&p);
        let (enabled, j) = oracle(&p);
        prop_assert_eq!(&c.enabled, &enabled);
        prop_assert_eq!(&c.j, &j);
        prop_assert!(verify_controller(&p, &c).verified);
        prop_assert_eq!(c.outcome == Outcome::Sol, p.init().iter().all(|s| c.dom().contains(s)));
    }

    #[test]
    fn enabled_actions_are_optimal(p in arb_problem()) {
        let c = strong_solve(&p);
        let rank = |s: u64| if p.goal().contains(&s) { Some(0) } else { c.j.get(&s).copied() };
        let images = p.images();
        for (&s, acts) in &c.enabled {
            for a in 1..=p.action_count() {
                let Some(img) = images.get(&(s, a)) else {
                    prop_assert!(!acts.contains(&a));
                    continue;
                };
                let worst = img.iter().map(|&n| rank(n)).collect::<Option<Vec<u32>>>().map(|v| 1 + v.into_iter().max().unwrap());
                if acts.contains(&a) {
                    prop_assert_eq!(worst, Some(c.j[&s]));
                } else {
                    prop_assert!(worst.is_none_or(|w| w > c.j[&s]));
                }
            }
        }
    }

    #[test]
    fn domain_cannot_be_extended(p in arb_problem()) {
        let c = strong_solve(&p);
        let images = p.images();
        for s in 1..=p.state_count() {
            if c.enabled.contains_key(&s) {
                continue;
            }
            for a in 1..=p.action_count() {
                if images.contains_key(&(s, a)) {
                    let mut bigger = c.clone();
                    bigger.enabled.insert(s, BTreeSet::from([a]));
                    bigger.j.insert(s, u32::MAX);
                    prop_assert!(!verify_controller(&p, &bigger).verified);
                }
            }
        }
    }

    #[test]
    fn larger_goals_never_shrink_the_domain(p in arb_problem(), extra in 1u64..9) {
        let c = strong_solve(&p);
        let mut goal = p.goal().clone();
        goal.insert(1 + (extra - 1) % p.state_count());
        let bigger = strong_solve(&p.clone().with_goal(goal).unwrap());
        prop_assert!(c.dom().is_subset(&bigger.dom()));
    }

    #[test]
    fn relabelling_states_commutes(p in arb_problem(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = p.state_count();
        let mut perm: Vec<u64> = (1..=n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let f = |s: u64| perm[s as usize - 1];
        let q = FiniteControlProblem::new(
            n,
            p.action_count(),
            p.transitions().iter().map(|t| Triple::new(f(t.state), t.action, f(t.next))).collect(),
            p.init().iter().map(|&s| f(s)).collect(),
            p.goal().iter().map(|&s| f(s)).collect(),
            p.provenance(),
        ).unwrap();
        let c = strong_solve(&p);
        let d = strong_solve(&q);
        let mapped: BTreeMap<u64, BTreeSet<u64>> = c.enabled.iter().map(|(&s, a)| (f(s), a.clone())).collect();
        prop_assert_eq!(mapped, d.enabled);
        prop_assert_eq!(c.outcome, d.outcome);
        prop_assert_eq!(strong_solve(&p), c);
    }
}
