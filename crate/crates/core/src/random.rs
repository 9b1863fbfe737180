//! Random small tasks and formulas for property tests and fuzz seeds.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cnf::{Lit, Var, VarKind, WeightedCnf};
use crate::oracle::{apply_action, initial_belief, ExplicitBelief};
use crate::task::{parse_task, ActionId, PlanningTask};

#[derive(Clone, Debug)]
pub struct TaskShape {
    pub max_vars: usize,
    /// Domain sizes are drawn from `2..=max_domain`.
    pub max_domain: usize,
    pub max_parents: usize,
    pub max_actions: usize,
    pub max_effects: usize,
    pub max_outcomes: usize,
    pub max_goal: usize,
}

impl Default for TaskShape {
    fn default() -> Self {
        TaskShape {
            max_vars: 4,
            max_domain: 3,
            max_parents: 2,
            max_actions: 4,
            max_effects: 2,
            max_outcomes: 3,
            max_goal: 2,
        }
    }
}

fn value(v: usize, k: usize) -> String {
    format!("v{v}x{k}")
}

/// Normalized distribution from small integer weights; zeros only when
/// `allow_zero`.
fn dist(rng: &mut impl Rng, n: usize, allow_zero: bool) -> Vec<f64> {
    let lo = if allow_zero { 0 } else { 1 };
    loop {
        let w: Vec<u32> = (0..n).map(|_| rng.gen_range(lo..=4)).collect();
        let s: u32 = w.iter().sum();
        if s > 0 {
            return w.iter().map(|x| *x as f64 / s as f64).collect();
        }
    }
}

fn row_text(dom: usize, v: usize, d: &[f64]) -> String {
    let items: Vec<String> = (0..dom)
        .filter(|k| d[*k] > 0.0)
        .map(|k| format!("{}={}", value(v, k), d[k]))
        .collect();
    items.join(", ")
}

/// One random task text; may violate validation rules.
pub fn random_task_text(rng: &mut impl Rng, shape: &TaskShape) -> String {
    let nv = rng.gen_range(1..=shape.max_vars);
    let doms: Vec<usize> = (0..nv).map(|_| rng.gen_range(2..=shape.max_domain)).collect();
    let mut s = String::from("vars:\n");
    for (v, d) in doms.iter().enumerate() {
        let vals: Vec<String> = (0..*d).map(|k| value(v, k)).collect();
        let _ = writeln!(s, "  V{v} = {}", vals.join(" | "));
    }
    s.push_str("bn:\n");
    for v in 0..nv {
        let mut parents: Vec<usize> = (0..v).collect();
        parents.shuffle(rng);
        parents.truncate(rng.gen_range(0..=shape.max_parents.min(v)));
        parents.sort_unstable();
        if parents.is_empty() {
            let _ = writeln!(s, "  node V{v}\n    row *: {}", row_text(doms[v], v, &dist(rng, doms[v], true)));
            continue;
        }
        let names: Vec<String> = parents.iter().map(|p| format!("V{p}")).collect();
        let _ = writeln!(s, "  node V{v} | {}", names.join(" "));
        let mut idx = vec![0usize; parents.len()];
        'rows: loop {
            let cond: Vec<String> = parents.iter().zip(&idx).map(|(p, k)| value(*p, *k)).collect();
            let d = dist(rng, doms[v], true);
            let _ = writeln!(s, "    row {}: {}", cond.join(" "), row_text(doms[v], v, &d));
            for i in 0..idx.len() {
                idx[i] += 1;
                if idx[i] < doms[parents[i]] {
                    continue 'rows;
                }
                idx[i] = 0;
            }
            break;
        }
    }
    s.push_str("actions:\n");
    let lit = |rng: &mut dyn rand::RngCore, vars: &[usize]| -> String {
        let v = *vars.choose(rng).unwrap();
        value(v, rng.gen_range(0..doms[v]))
    };
    let all: Vec<usize> = (0..nv).collect();
    for a in 0..rng.gen_range(1..=shape.max_actions) {
        let _ = writeln!(s, "  action a{a}");
        if rng.gen_bool(0.3) {
            let _ = writeln!(s, "    pre: {}", lit(rng, &all));
        }
        let mut free = all.clone();
        free.shuffle(rng);
        for _ in 0..rng.gen_range(1..=shape.max_effects) {
            if free.is_empty() {
                break;
            }
            let targets: Vec<usize> = free.drain(..rng.gen_range(1..=free.len().min(2))).collect();
            if rng.gen_bool(0.5) {
                let _ = writeln!(s, "    effect when {}:", lit(rng, &all));
            } else {
                s.push_str("    effect:\n");
            }
            let k = rng.gen_range(1..=shape.max_outcomes);
            let probs = dist(rng, k, false);
            for p in probs {
                let mut adds = Vec::new();
                for v in &targets {
                    if k == 1 || rng.gen_bool(0.8) {
                        adds.push(value(*v, rng.gen_range(0..doms[*v])));
                    }
                }
                if adds.is_empty() {
                    let _ = writeln!(s, "      outcome {p}:");
                } else {
                    let _ = writeln!(s, "      outcome {p}: add={}", adds.join(" "));
                }
            }
        }
    }
    let mut gvars = all.clone();
    gvars.shuffle(rng);
    gvars.truncate(rng.gen_range(1..=shape.max_goal.min(nv)));
    let goal: Vec<String> = gvars.iter().map(|v| value(*v, rng.gen_range(0..doms[*v]))).collect();
    let theta = rng.gen_range(1..=10) as f64 / 10.0;
    let _ = write!(s, "goal: {}\ntheta: {theta}\n", goal.join(" "));
    s
}

/// A random task that passes validation.
pub fn random_task(rng: &mut impl Rng, shape: &TaskShape) -> PlanningTask {
    loop {
        if let Ok(t) = parse_task(&random_task_text(rng, shape)) {
            return t;
        }
    }
}

/// A random sequence of up to `len` actions, each applicable in the belief
/// it is applied to, with the resulting explicit belief.
pub fn random_applicable_sequence(
    rng: &mut impl Rng,
    task: &PlanningTask,
    len: usize,
) -> (Vec<ActionId>, ExplicitBelief) {
    let mut b = initial_belief(task).expect("small task");
    let mut seq = Vec::new();
    for _ in 0..len {
        let mut ok: Vec<(ActionId, ExplicitBelief)> = (0..task.actions.len() as u32)
            .map(ActionId)
            .filter_map(|a| apply_action(task, &b, a).ok().map(|nb| (a, nb)))
            .collect();
        if ok.is_empty() {
            break;
        }
        let (a, nb) = ok.swap_remove(rng.gen_range(0..ok.len()));
        seq.push(a);
        b = nb;
    }
    (seq, b)
}

/// Random weighted CNF with clauses of width 1..=3 and weights that need not
/// sum to one per variable.
pub fn random_cnf(rng: &mut impl Rng, vars: usize, clauses: usize) -> WeightedCnf {
    let mut cnf = WeightedCnf::new();
    for i in 0..vars {
        let w = if rng.gen_bool(0.5) {
            let p = rng.gen_range(0.05..0.95);
            (p, 1.0 - p)
        } else {
            (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0))
        };
        cnf.new_var(VarKind::Chance, w, format!("x{i}"));
    }
    if vars == 0 {
        return cnf;
    }
    for _ in 0..clauses {
        let width = rng.gen_range(1..=3.min(vars));
        let lits: Vec<Lit> = (0..width)
            .map(|_| Lit::new(Var(rng.gen_range(0..vars) as u32), rng.gen_bool(0.5)))
            .collect();
        cnf.add_clause(&lits);
    }
    cnf
}
