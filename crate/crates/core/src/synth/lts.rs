//! Text format for explicit labeled transition systems.
//!
//! ```text
//! # comments run to end of line
//! states -2..5        # a range or a list of integer labels
//! actions 0 1
//! init all            # or a list; defaults to all states
//! goal 0
//! 0 0 1               # transition: state action next
//! ```
//!
//! Labels are mapped to indices `1..=n` in ascending label order.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{FiniteControlProblem, Provenance, SynthError};
use crate::abstraction::{AbstractTransitionSet, Triple};

#[derive(Debug, Error)]
pub enum LtsError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: undeclared {what} {label}")]
    Undeclared { line: usize, what: &'static str, label: i64 },
    #[error("missing goal")]
    MissingGoal,
    #[error(transparent)]
    Problem(#[from] SynthError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lts {
    pub states: Vec<i64>,
    pub actions: Vec<i64>,
    pub transitions: Vec<(i64, i64, i64)>,
    pub init: Option<Vec<i64>>,
    pub goal: Vec<i64>,
}

fn parse_labels(words: &[&str], line: usize) -> Result<Vec<i64>, LtsError> {
    let syntax = |message: String| LtsError::Syntax { line, message };
    let mut out = BTreeSet::new();
    for w in words {
        if let Some((lo, hi)) = w.split_once("..") {
            let lo: i64 = lo.parse().map_err(|_| syntax(format!("bad range {w}")))?;
            let hi: i64 = hi.parse().map_err(|_| syntax(format!("bad range {w}")))?;
            if lo > hi {
                return Err(syntax(format!("empty range {w}")));
            }
            out.extend(lo..=hi);
        } else {
            out.insert(w.parse().map_err(|_| syntax(format!("expected an integer label, found {w}")))?);
        }
    }
    Ok(out.into_iter().collect())
}

pub fn parse_lts(text: &str) -> Result<Lts, LtsError> {
    let mut states: Option<Vec<i64>> = None;
    let mut actions: Option<Vec<i64>> = None;
    let mut init = None;
    let mut goal = None;
    let mut transitions = Vec::new();
    let mut lines = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let words: Vec<&str> = body.split_whitespace().collect();
        let syntax = |message: String| LtsError::Syntax { line, message };
        let dup = |name: &str| syntax(format!("duplicate {name} line"));
        match words[0] {
            "states" => {
                if states.replace(parse_labels(&words[1..], line)?).is_some() {
                    return Err(dup("states"));
                }
            }
            "actions" => {
                if actions.replace(parse_labels(&words[1..], line)?).is_some() {
                    return Err(dup("actions"));
                }
            }
            "init" => {
                let v = if words[1..] == ["all"] {
                    None
                } else {
                    Some(parse_labels(&words[1..], line)?)
                };
                if init.replace((line, v)).is_some() {
                    return Err(dup("init"));
                }
            }
            "goal" => {
                if goal.replace((line, parse_labels(&words[1..], line)?)).is_some() {
                    return Err(dup("goal"));
                }
            }
            _ => {
                if words.len() != 3 {
                    return Err(syntax(format!("expected `state action next`, found `{body}`")));
                }
                let n: Vec<i64> = words
                    .iter()
                    .map(|w| w.parse().map_err(|_| syntax(format!("expected an integer label, found {w}"))))
                    .collect::<Result<_, _>>()?;
                transitions.push((n[0], n[1], n[2]));
                lines.push(line);
            }
        }
    }
    let (goal_line, goal) = goal.ok_or(LtsError::MissingGoal)?;
    let states = states.unwrap_or_else(|| {
        let mut s: BTreeSet<i64> = transitions.iter().flat_map(|&(a, _, b)| [a, b]).collect();
        s.extend(&goal);
        s.into_iter().collect()
    });
    let actions = actions.unwrap_or_else(|| {
        let s: BTreeSet<i64> = transitions.iter().map(|&(_, a, _)| a).collect();
        s.into_iter().collect()
    });
    let known_state = |label: i64, line: usize| {
        if states.binary_search(&label).is_ok() {
            Ok(())
        } else {
            Err(LtsError::Undeclared { line, what: "state", label })
        }
    };
    for (&(s, a, n), &line) in transitions.iter().zip(&lines) {
        known_state(s, line)?;
        known_state(n, line)?;
        if actions.binary_search(&a).is_err() {
            return Err(LtsError::Undeclared { line, what: "action", label: a });
        }
    }
    for &g in &goal {
        known_state(g, goal_line)?;
    }
    let init = match init {
        Some((line, Some(v))) => {
            for &s in &v {
                known_state(s, line)?;
            }
            Some(v)
        }
        _ => None,
    };
    Ok(Lts {
        states,
        actions,
        transitions,
        init,
        goal,
    })
}

impl Lts {
    pub fn state_index(&self, label: i64) -> Option<u64> {
        self.states.binary_search(&label).ok().map(|i| i as u64 + 1)
    }

    pub fn action_index(&self, label: i64) -> Option<u64> {
        self.actions.binary_search(&label).ok().map(|i| i as u64 + 1)
    }

    pub fn state_label(&self, index: u64) -> i64 {
        self.states[index as usize - 1]
    }

    pub fn action_label(&self, index: u64) -> i64 {
        self.actions[index as usize - 1]
    }

    pub fn transition_set(&self) -> AbstractTransitionSet {
        self.transitions
            .iter()
            .map(|&(s, a, n)| {
                Triple::new(
                    self.state_index(s).expect("validated"),
                    self.action_index(a).expect("validated"),
                    self.state_index(n).expect("validated"),
                )
            })
            .collect()
    }

    pub fn problem(&self) -> Result<FiniteControlProblem, LtsError> {
        let idx = |v: &[i64]| v.iter().map(|&l| self.state_index(l).expect("validated")).collect();
        let init = match &self.init {
            Some(v) => idx(v),
            None => (1..=self.states.len() as u64).collect(),
        };
        Ok(FiniteControlProblem::new(
            self.states.len() as u64,
            self.actions.len() as u64,
            self.transition_set(),
            init,
            idx(&self.goal),
            Provenance::ExplicitLts,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_ranges_lists_and_comments() {
        let l = parse_lts("states -1..1 # three\nactions 0 1\ngoal 0\n-1 0 0\n1 1 0 # back\n").unwrap();
        assert_eq!(l.states, vec![-1, 0, 1]);
        assert_eq!(l.actions, vec![0, 1]);
        assert_eq!(l.transitions, vec![(-1, 0, 0), (1, 1, 0)]);
        assert_eq!(l.init, None);
        assert_eq!(l.state_index(-1), Some(1));
        assert_eq!(l.state_label(3), 1);
        let p = l.problem().unwrap();
        assert_eq!(p.init().len(), 3);
        assert_eq!(p.goal(), &BTreeSet::from([2]));
        assert!(p.transitions().contains(&Triple::new(3, 2, 2)));
    }

    #[test]
    fn infers_labels_when_undeclared() {
        let l = parse_lts("goal 0\n3 7 0\n").unwrap();
        assert_eq!(l.states, vec![0, 3]);
        assert_eq!(l.actions, vec![7]);
    }

    #[test]
    fn reports_errors_with_lines() {
        assert!(matches!(parse_lts("states 0..1\n0 0 1\n"), Err(LtsError::MissingGoal)));
        assert!(matches!(
            parse_lts("states 0..1\ngoal 0\n0 0 2\n"),
            Err(LtsError::Undeclared { line: 3, what: "state", label: 2 })
        ));
        assert!(matches!(
            parse_lts("states 0..1\nactions 0\ngoal 0\n0 1 1\n"),
            Err(LtsError::Undeclared { line: 4, what: "action", .. })
        ));
        assert!(matches!(parse_lts("goal 0\n0 1\n"), Err(LtsError::Syntax { line: 2, .. })));
        assert!(matches!(parse_lts("goal x\n"), Err(LtsError::Syntax { line: 1, .. })));
        assert!(matches!(parse_lts("goal 0\ngoal 1\n"), Err(LtsError::Syntax { line: 2, .. })));
        assert!(matches!(
            parse_lts("states 0..1\ngoal\n").unwrap().problem(),
            Err(LtsError::Problem(SynthError::EmptyGoal))
        ));
    }
}
