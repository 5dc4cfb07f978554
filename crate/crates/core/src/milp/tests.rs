use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::model::{parse_model, Constraint, GuardedConstraint, LinearExpr, Variable, VarRole};
use crate::rational::{int, ratio};

fn guarded_plant(positive: bool) -> (Dtlhs, VariableSet) {
    let vars = vec![
        Variable::new("x", VarKind::Real, VarRole::State, int(0), int(10)),
        Variable::boolean("y", VarRole::Input),
    ];
    let x = Symbol::Current(VarId(0));
    let body = Constraint::le(LinearExpr::symbol(x), int(1));
    let c = if positive {
        GuardedConstraint::when(VarId(1), body)
    } else {
        GuardedConstraint::unless(VarId(1), body)
    };
    let plant = Dtlhs::new(vars, GuardedPredicate::new(vec![c])).unwrap();
    let set = VariableSet::for_plant(&plant, &BTreeMap::new());
    (plant, set)
}

#[test]
fn big_m_for_positive_guard() {
    let (plant, set) = guarded_plant(true);
    let p = translate(plant.transition(), &set).unwrap();
    // x <= 1 + 9(1 - y)  <=>  x + 9y <= 10
    assert_eq!(
        p.rows,
        vec![MilpRow {
            coeffs: vec![(0, int(1)), (1, int(9))],
            relation: RowRelation::Le,
            rhs: int(10),
        }]
    );
}

#[test]
fn big_m_for_negated_guard() {
    let (plant, set) = guarded_plant(false);
    let p = translate(plant.transition(), &set).unwrap();
    // x <= 1 + 9y
    assert_eq!(
        p.rows,
        vec![MilpRow {
            coeffs: vec![(0, int(1)), (1, int(-9))],
            relation: RowRelation::Le,
            rhs: int(1),
        }]
    );
}

#[test]
fn unguarded_rows_pass_through() {
    let vars = vec![Variable::new("x", VarKind::Real, VarRole::State, int(0), int(10))];
    let x = Symbol::Current(VarId(0));
    let pred = GuardedPredicate::new(vec![GuardedConstraint::plain(Constraint::le(LinearExpr::symbol(x), int(3)))]);
    let plant = Dtlhs::new(vars, pred.clone()).unwrap();
    let p = translate(&pred, &VariableSet::for_plant(&plant, &BTreeMap::new())).unwrap();
    assert_eq!(
        p.rows,
        vec![MilpRow {
            coeffs: vec![(0, int(1))],
            relation: RowRelation::Le,
            rhs: int(3),
        }]
    );
}

#[test]
fn translation_needs_bounds_for_every_symbol() {
    let (plant, _) = guarded_plant(true);
    let mut pred = plant.transition().clone();
    pred.conjuncts.push(GuardedConstraint::plain(Constraint::le(
        LinearExpr::symbol(Symbol::Next(VarId(0))),
        int(1),
    )));
    let set = VariableSet::for_plant(&plant, &BTreeMap::new());
    assert!(matches!(translate(&pred, &set), Err(MilpError::UnboundedVariable(_))));
}

fn one_var(lo: i64, hi: i64, integer: bool) -> MilpProblem {
    let mut p = MilpProblem::default();
    p.add_var("x", int(lo), int(hi), integer);
    p
}

#[test]
fn lp_examples() {
    let mut p = one_var(0, 10, false);
    p.add_row(vec![(0, int(1))], RowRelation::Le, int(3));
    p.objective = Some(Objective {
        coeffs: vec![(0, int(1))],
        sense: Sense::Max,
    });
    assert_eq!(solve_lp(&p).unwrap().value(), Some(3.0));

    let mut p = MilpProblem::default();
    p.add_var("x", int(0), int(1), false);
    p.add_var("y", int(0), int(1), false);
    p.add_row(vec![(0, int(1)), (1, int(1))], RowRelation::Le, int(1));
    p.objective = Some(Objective {
        coeffs: vec![(0, int(1)), (1, int(1))],
        sense: Sense::Max,
    });
    let v = solve_lp(&p).unwrap().value().unwrap();
    assert!((v - 1.0).abs() < 1e-12);

    let mut p = one_var(-5, 5, false);
    p.add_row(vec![(0, int(1))], RowRelation::Le, int(0));
    p.add_row(vec![(0, int(-1))], RowRelation::Le, int(-1));
    assert_eq!(solve_lp(&p).unwrap(), MilpOutcome::Infeasible);
}

#[test]
fn milp_rounds_down_to_the_lattice() {
    let mut p = one_var(0, 10, true);
    p.add_row(vec![(0, int(2))], RowRelation::Le, int(7));
    p.objective = Some(Objective {
        coeffs: vec![(0, int(1))],
        sense: Sense::Max,
    });
    assert_eq!(solve_milp(&p).unwrap().value(), Some(3.0));
    assert_eq!(solve_lp(&p).unwrap().value(), Some(3.5));
}

#[test]
fn node_limit_is_reported() {
    // 2x - 2y = 1 has no integer solution; the relaxation is feasible everywhere.
    let mut p = MilpProblem::default();
    p.add_var("x", int(0), int(1000), true);
    p.add_var("y", int(0), int(1000), true);
    p.add_row(vec![(0, int(2)), (1, int(-2))], RowRelation::Eq, int(1));
    let opts = SolveOptions {
        node_limit: 50,
        ..SolveOptions::default()
    };
    assert_eq!(solve_milp_with(&p, &opts), Err(MilpError::NodeLimit { limit: 50 }));
}

const EX33: &str = "\
state x real [-1, 5/2] levels 7;
input u bool;
trans {
  !u -> x' = x + (5/4 - x)/10;
  u -> x' = x + (x - 7/4)/10;
}
goal { x = 0; }
";

fn ex33_set() -> (Dtlhs, VariableSet) {
    let m = parse_model(EX33).unwrap();
    let nb = m.plant.next_state_bounds().unwrap();
    let set = VariableSet::for_plant(&m.plant, &nb);
    (m.plant, set)
}

fn bound_rows(set: &VariableSet, sym: Symbol, lo: Rational, hi: Rational) -> Vec<MilpRow> {
    let j = set.index(sym).unwrap();
    vec![
        MilpRow {
            coeffs: vec![(j, int(1))],
            relation: RowRelation::Le,
            rhs: hi,
        },
        MilpRow {
            coeffs: vec![(j, int(-1))],
            relation: RowRelation::Le,
            rhs: -lo,
        },
    ]
}

#[test]
fn switched_plant_reaches_the_top_of_the_image() {
    let (plant, set) = ex33_set();
    let x = plant.lookup("x").unwrap();
    let u = plant.lookup("u").unwrap();
    let mut extra = bound_rows(&set, Symbol::Current(x), int(2), ratio(5, 2));
    extra.extend(bound_rows(&set, Symbol::Current(u), int(1), int(1)));
    extra.extend(bound_rows(&set, Symbol::Next(x), ratio(5, 2), ratio(2575, 1000)));
    let mut p = translate(plant.transition(), &set).unwrap();
    p.rows.extend(extra);
    let out = solve_milp(&p).unwrap();
    let w = out.witness().unwrap();
    let xi = set.index(Symbol::Current(x)).unwrap();
    let xn = set.index(Symbol::Next(x)).unwrap();
    assert!(w[xi] >= 2.675 / 1.1 - 1e-9 && w[xi] <= 2.5 + 1e-9);
    assert!((1.1 * w[xi] - 0.175 - w[xn]).abs() < 1e-9);
    assert!(w[xn] >= 2.5 - 1e-9);
}

#[test]
fn feasibility_examples() {
    let vars = vec![Variable::new("x", VarKind::Real, VarRole::State, int(0), int(1))];
    let x = Symbol::Current(VarId(0));
    let taut = GuardedPredicate::new(vec![GuardedConstraint::plain(Constraint::le(LinearExpr::symbol(x), int(1)))]);
    let plant = Dtlhs::new(vars, taut.clone()).unwrap();
    let set = VariableSet::for_plant(&plant, &BTreeMap::new());
    assert!(check_feasible(&taut, &set, &[]).unwrap());
    let neg = GuardedPredicate::new(vec![GuardedConstraint::plain(Constraint::le(LinearExpr::symbol(x), int(-1)))]);
    assert!(!check_feasible(&neg, &set, &[]).unwrap());
}

#[test]
fn fixed_point_query_pins_five_quarters() {
    let (plant, set) = ex33_set();
    let x = plant.lookup("x").unwrap();
    let u = plant.lookup("u").unwrap();
    let xi = set.index(Symbol::Current(x)).unwrap();
    let xn = set.index(Symbol::Next(x)).unwrap();
    let mut p = translate(plant.transition(), &set).unwrap();
    p.rows.extend(bound_rows(&set, Symbol::Current(x), int(1), ratio(3, 2)));
    p.rows.extend(bound_rows(&set, Symbol::Current(u), int(0), int(0)));
    p.rows.push(MilpRow {
        coeffs: vec![(xi, int(1)), (xn, int(-1))],
        relation: RowRelation::Eq,
        rhs: int(0),
    });
    for sense in [Sense::Min, Sense::Max] {
        let mut q = p.clone();
        q.objective = Some(Objective {
            coeffs: vec![(xi, int(1))],
            sense,
        });
        let v = solve_milp(&q).unwrap().value().unwrap();
        assert!((v - 1.25).abs() < 1e-9, "{v}");
    }
}

#[test]
fn lp_format_is_deterministic() {
    let (plant, set) = guarded_plant(true);
    let p = translate(plant.transition(), &set).unwrap();
    let text = p.lp_format();
    assert_eq!(text, p.lp_format());
    assert!(text.contains("r0: 1 x + 9 y <= 10;"));
    assert!(text.contains("int y;"));
}

/// Brute force: every integer point, and for the continuous part every vertex
/// formed by a choice of active constraints (rows or bounds).
pub(crate) fn brute_force(p: &MilpProblem) -> Option<f64> {
    let n = p.vars.len();
    let ints: Vec<usize> = (0..n).filter(|&j| p.vars[j].integer).collect();
    let conts: Vec<usize> = (0..n).filter(|&j| !p.vars[j].integer).collect();
    let f = |r: &Rational| rational::to_f64(r);
    let obj: Vec<f64> = {
        let mut c = vec![0.0; n];
        if let Some(o) = &p.objective {
            for (j, k) in &o.coeffs {
                c[*j] += if o.sense == Sense::Max { f(k) } else { -f(k) };
            }
        }
        c
    };
    // All constraints as (coeffs dense, rhs, is_eq).
    let mut cons: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for r in &p.rows {
        let mut a = vec![0.0; n];
        for (j, k) in &r.coeffs {
            a[*j] += f(k);
        }
        cons.push((a, f(&r.rhs), r.relation == RowRelation::Eq));
    }
    let mut best: Option<f64> = None;
    let mut point = vec![0i64; ints.len()];
    let ranges: Vec<(i64, i64)> = ints
        .iter()
        .map(|&j| (rational::ceil_to_i64(&p.vars[j].lo), rational::floor_to_i64(&p.vars[j].hi)))
        .collect();
    if ranges.iter().any(|(l, h)| l > h) {
        return None;
    }
    for (k, r) in ranges.iter().enumerate() {
        point[k] = r.0;
    }
    loop {
        let mut x = vec![0.0; n];
        for (k, &j) in ints.iter().enumerate() {
            x[j] = point[k] as f64;
        }
        // Candidate hyperplanes over the continuous variables.
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for (a, b, _) in &cons {
            let rest: f64 = ints.iter().map(|&j| a[j] * x[j]).sum();
            planes.push((conts.iter().map(|&j| a[j]).collect(), b - rest));
        }
        for (k, &j) in conts.iter().enumerate() {
            let mut e = vec![0.0; conts.len()];
            e[k] = 1.0;
            planes.push((e.clone(), f(&p.vars[j].lo)));
            planes.push((e, f(&p.vars[j].hi)));
        }
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        match conts.len() {
            0 => candidates.push(vec![]),
            1 => {
                for (a, b) in &planes {
                    if a[0].abs() > 1e-12 {
                        candidates.push(vec![b / a[0]]);
                    }
                }
            }
            2 => {
                for i in 0..planes.len() {
                    for k in i + 1..planes.len() {
                        let (a, b) = (&planes[i].0, planes[i].1);
                        let (c, d) = (&planes[k].0, planes[k].1);
                        let det = a[0] * c[1] - a[1] * c[0];
                        if det.abs() > 1e-12 {
                            candidates.push(vec![(b * c[1] - a[1] * d) / det, (a[0] * d - b * c[0]) / det]);
                        }
                    }
                }
            }
            _ => unreachable!("oracle supports up to two continuous variables"),
        }
        for cand in candidates {
            for (k, &j) in conts.iter().enumerate() {
                x[j] = cand[k];
            }
            let tol = 1e-7;
            let in_box = conts
                .iter()
                .all(|&j| x[j] >= f(&p.vars[j].lo) - tol && x[j] <= f(&p.vars[j].hi) + tol);
            let rows_ok = cons.iter().all(|(a, b, eq)| {
                let act: f64 = a.iter().zip(&x).map(|(u, v)| u * v).sum();
                if *eq {
                    (act - b).abs() <= tol
                } else {
                    act <= b + tol
                }
            });
            if in_box && rows_ok {
                let v: f64 = obj.iter().zip(&x).map(|(u, v)| u * v).sum();
                if best.is_none_or(|b| v > b) {
                    best = Some(v);
                }
            }
        }
        // Next integer point.
        let mut k = 0;
        loop {
            if k == point.len() {
                return best.map(|b| {
                    if p.objective.as_ref().is_some_and(|o| o.sense == Sense::Min) {
                        -b
                    } else {
                        b
                    }
                });
            }
            point[k] += 1;
            if point[k] <= ranges[k].1 {
                break;
            }
            point[k] = ranges[k].0;
            k += 1;
        }
    }
}

fn random_problem() -> impl Strategy<Value = MilpProblem> {
    let var = (0i64..4, 1i64..=6, any::<bool>());
    let row = (proptest::collection::vec(-5i64..=5, 5), -10i64..=20, 0u8..5);
    (
        proptest::collection::vec(var, 1..=5),
        proptest::collection::vec(row, 0..=5),
        proptest::collection::vec(-4i64..=4, 5),
        any::<bool>(),
    )
        .prop_map(|(vars, rows, obj, max)| {
            let mut p = MilpProblem::default();
            let mut conts = 0;
            for (k, (lo, width, integer)) in vars.into_iter().enumerate() {
                let integer = integer || conts >= 2;
                if !integer {
                    conts += 1;
                }
                p.add_var(format!("v{k}"), int(-lo), int(width - lo), integer);
            }
            let n = p.vars.len();
            for (coeffs, rhs, kind) in rows {
                let coeffs: Vec<(usize, Rational)> = coeffs
                    .into_iter()
                    .take(n)
                    .enumerate()
                    .filter(|(_, c)| *c != 0)
                    .map(|(j, c)| (j, int(c)))
                    .collect();
                let rel = if kind == 0 { RowRelation::Eq } else { RowRelation::Le };
                p.add_row(coeffs, rel, ratio(rhs, 2));
            }
            p.objective = Some(Objective {
                coeffs: obj.into_iter().take(n).enumerate().map(|(j, c)| (j, int(c))).collect(),
                sense: if max { Sense::Max } else { Sense::Min },
            });
            p
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn agrees_with_enumeration(p in random_problem()) {
        let expected = brute_force(&p);
        let got = solve_milp(&p).unwrap();
        match (expected, got.value()) {
            (None, None) => {}
            (Some(e), Some(g)) => prop_assert!((e - g).abs() <= 1e-6, "expected {e}, got {g}\n{}", p.lp_format()),
            (e, g) => prop_assert!(false, "expected {e:?}, got {g:?}\n{}", p.lp_format()),
        }
        if let Some(w) = got.witness() {
            for r in &p.rows {
                let act: f64 = r.coeffs.iter().map(|(j, k)| rational::to_f64(k) * w[*j]).sum();
                let rhs = rational::to_f64(&r.rhs);
                match r.relation {
                    RowRelation::Le => prop_assert!(act <= rhs + 1e-9),
                    RowRelation::Eq => prop_assert!((act - rhs).abs() <= 1e-9),
                }
            }
            for (j, v) in p.vars.iter().enumerate() {
                if v.integer {
                    prop_assert!((w[j] - w[j].round()).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn adding_a_row_never_improves_a_maximum(p in random_problem(), extra in proptest::collection::vec(-3i64..=3, 5), rhs in -5i64..10) {
        let mut p = p;
        if let Some(o) = &mut p.objective { o.sense = Sense::Max; }
        let before = solve_milp(&p).unwrap().value();
        let n = p.vars.len();
        p.add_row(extra.into_iter().take(n).enumerate().map(|(j, c)| (j, int(c))).collect(), RowRelation::Le, int(rhs));
        let after = solve_milp(&p).unwrap().value();
        match (before, after) {
            (Some(b), Some(a)) => prop_assert!(a <= b + 1e-9),
            (None, Some(_)) => prop_assert!(false, "row made an infeasible problem feasible"),
            _ => {}
        }
    }

    #[test]
    fn solving_is_deterministic(p in random_problem()) {
        prop_assert_eq!(solve_milp(&p).unwrap(), solve_milp(&p).unwrap());
    }
}
