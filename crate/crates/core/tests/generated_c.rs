//! Compiles the generated C controller and compares it with the table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsynth_core::benchmarks::{build_pendulum, PendulumParams};
use qsynth_core::codegen::{determinize, emit_c_header, emit_c_source, ControlTable};
use qsynth_core::model::{parse_model, Model};
use qsynth_core::synth::{Controller, Outcome};

const HARNESS: &str = r#"
#include <stdio.h>
#include <stdlib.h>
#include "control.h"

int main(int argc, char **argv)
{
    FILE *f = fopen(argv[1], "r");
    double x[QSYNTH_STATE_DIM > 0 ? QSYNTH_STATE_DIM : 1];
    double u[QSYNTH_INPUT_DIM > 0 ? QSYNTH_INPUT_DIM : 1];
    int a, k;
    (void)argc;
    for (;;) {
        for (k = 0; k < QSYNTH_STATE_DIM; k++)
            if (fscanf(f, "%lf", &x[k]) != 1) goto done;
        printf("%d\n", qsynth_control(x));
    }
done:
    for (a = 0; a <= QSYNTH_ACTION_COUNT + 1; a++) {
        int r = qsynth_action_values(a, u);
        printf("A %d %d", a, r);
        if (r == 0)
            for (k = 0; k < QSYNTH_INPUT_DIM; k++) printf(" %.17g", u[k]);
        printf("\n");
    }
    return 0;
}
"#;

fn random_controller(model: &Model, seed: u64) -> Controller {
    let q = &model.quantization;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enabled = BTreeMap::new();
    let mut j = BTreeMap::new();
    for s in 1..=q.state_count() {
        if rng.gen_bool(0.7) {
            let acts: BTreeSet<u64> = (1..=q.action_count()).filter(|_| rng.gen_bool(0.5)).collect();
            if !acts.is_empty() {
                enabled.insert(s, acts);
                j.insert(s, rng.gen_range(1..10));
            }
        }
    }
    Controller {
        states: q.state_count(),
        actions: q.action_count(),
        enabled,
        j,
        outcome: Outcome::Unk,
    }
}

/// Points inside, outside and exactly on cell boundaries.
fn sample_points(table: &ControlTable, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            table
                .vars
                .iter()
                .map(|v| {
                    let width = v.hi - v.lo;
                    match rng.gen_range(0..10) {
                        0 => v.lo + (rng.gen_range(0..=v.levels) as f64) * v.delta,
                        1 => rng.gen_range(v.lo - 0.1 * width..v.hi + 0.1 * width),
                        _ if v.kind == "real" => rng.gen_range(v.lo..=v.hi),
                        _ => (rng.gen_range(v.lo as i64..=v.hi as i64) as f64) + rng.gen_range(-0.4..0.4),
                    }
                })
                .collect()
        })
        .collect()
}

fn compile(dir: &Path, table: &ControlTable) -> Option<std::path::PathBuf> {
    std::fs::write(dir.join("control.h"), emit_c_header(table)).unwrap();
    std::fs::write(dir.join("control.c"), emit_c_source(table, "control.h").unwrap()).unwrap();
    std::fs::write(dir.join("main.c"), HARNESS).unwrap();
    let exe = dir.join("harness");
    let status = Command::new("cc")
        .current_dir(dir)
        .args(["-std=c99", "-O2", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .args(["control.c", "main.c", "-lm"])
        .status();
    match status {
        Ok(s) if s.success() => Some(exe),
        Ok(s) => panic!("cc failed: {s}"),
        Err(e) => {
            eprintln!("skipping: no C compiler ({e})");
            None
        }
    }
}

fn check(model: &Model, seed: u64, points: usize) {
    let table = determinize(&random_controller(model, seed), model).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let Some(exe) = compile(dir.path(), &table) else { return };
    let xs = sample_points(&table, points, seed + 1);
    let mut input = String::new();
    for x in &xs {
        for v in x {
            let _ = write!(input, "{v:?} ");
        }
        input.push('\n');
    }
    let data = dir.path().join("points.txt");
    std::fs::write(&data, input).unwrap();
    let out = Command::new(&exe).arg(&data).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let space = model.quantization.states();
    for x in &xs {
        let c: i64 = lines.next().unwrap().parse().unwrap();
        assert_eq!(c, table.lookup(x), "at {x:?}");
        assert_eq!(c, table.lookup_with(space, x), "quantizer disagrees at {x:?}");
    }
    for a in 0..=table.action_count() + 1 {
        let words: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(words[1].parse::<u64>().unwrap(), a);
        if a == 0 || a > table.action_count() {
            assert_eq!(words[2], "-1");
            continue;
        }
        let u: Vec<f64> = words[3..].iter().map(|w| w.parse().unwrap()).collect();
        assert_eq!(u, table.action_values(a), "action {a}");
    }
}

#[test]
fn pendulum_table_matches_the_generated_c() {
    let (model, _) = build_pendulum(&PendulumParams::default(), 8).unwrap();
    check(&model, 3, 100_000);
}

#[test]
fn mixed_variable_kinds_match_the_generated_c() {
    let model = parse_model(
        "state x real [-1, 7/3] levels 5;\nstate k int [-2, 3];\ninput u int [-1, 1];\ninput b bool;\ninput w real [0, 1] levels 3;\n\
         trans { x' = x + u; k' = k; }\ngoal { x <= 0; }\n",
    )
    .unwrap();
    check(&model, 11, 20_000);
}
