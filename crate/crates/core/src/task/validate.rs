use std::fmt;

use super::{BnNode, Effect, Outcome, PlanningTask, PropId, VarId, PROB_TOL};

/// Parent assignments enumerated when checking CPT row coverage.
const COVERAGE_CAP: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    DistributionNotNormalized,
    NonPositiveProbability,
    EmptyOutcomes,
    AddDeleteOverlap,
    ConflictingValues,
    DeleteOnMultiValued,
    SelfContradiction,
    SharedVariables,
    MissingCpt,
    CyclicNet,
    RowNotNormalized,
    NegativeEntry,
    RowLiteralNotParent,
    RowCoverage,
    CoverageTooLarge,
    ConflictingGoal,
    ThetaOutOfRange,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::DistributionNotNormalized => "distribution not normalized",
            Rule::NonPositiveProbability => "outcome probability must be in (0,1]",
            Rule::EmptyOutcomes => "effect has no outcomes",
            Rule::AddDeleteOverlap => "outcome adds and deletes the same proposition",
            Rule::ConflictingValues => "two values of one variable in a conjunction",
            Rule::DeleteOnMultiValued => "delete-only change of a variable with more than two values",
            Rule::SelfContradiction => "self-contradiction",
            Rule::SharedVariables => "jointly applicable effects touch the same variable",
            Rule::MissingCpt => "variable has no CPT",
            Rule::CyclicNet => "initial belief net is cyclic",
            Rule::RowNotNormalized => "row not normalized",
            Rule::NegativeEntry => "negative CPT entry",
            Rule::RowLiteralNotParent => "row literal is not a value of a parent",
            Rule::RowCoverage => "parent assignment not covered by exactly one row",
            Rule::CoverageTooLarge => "too many parent assignments to check coverage",
            Rule::ConflictingGoal => "goal assigns two values to one variable",
            Rule::ThetaOutOfRange => "theta outside [0,1]",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub element: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.rule)
    }
}

/// Checks every static invariant of a task. Empty result means valid.
pub fn validate_task(task: &PlanningTask) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |element: String, rule: Rule| out.push(Violation { element, rule });

    for a in &task.actions {
        if has_conflict(task, &a.pre) {
            push(format!("action {} precondition", a.name), Rule::ConflictingValues);
        }
        for (ei, e) in a.effects.iter().enumerate() {
            let el = format!("action {} effect {}", a.name, ei + 1);
            check_effect(task, e, &el, &mut push);
        }
        for i in 0..a.effects.len() {
            for j in i + 1..a.effects.len() {
                let (e, f) = (&a.effects[i], &a.effects[j]);
                if task.conditions_exclusive(&e.condition, &f.condition) {
                    continue;
                }
                let el = format!("action {} effects {} and {}", a.name, i + 1, j + 1);
                if contradicts(e, f) || contradicts(f, e) {
                    push(el.clone(), Rule::SelfContradiction);
                }
                let ve = effect_vars(task, e);
                if effect_vars(task, f).iter().any(|v| ve.contains(v)) {
                    push(el, Rule::SharedVariables);
                }
            }
        }
    }

    for (vi, v) in task.vars.iter().enumerate() {
        let n = task
            .initial
            .nodes
            .iter()
            .filter(|n| n.var == VarId(vi as u32))
            .count();
        if n == 0 {
            push(format!("variable {}", v.name), Rule::MissingCpt);
        }
    }
    let acyclic = task.initial.topological_order().is_some();
    if !acyclic {
        push("bn".into(), Rule::CyclicNet);
    }
    for node in &task.initial.nodes {
        check_node(task, node, &mut push);
    }

    if has_conflict(task, &task.goal) {
        push("goal".into(), Rule::ConflictingGoal);
    }
    if !(0.0..=1.0).contains(&task.theta) {
        push("theta".into(), Rule::ThetaOutOfRange);
    }
    out
}

fn has_conflict(task: &PlanningTask, lits: &[PropId]) -> bool {
    lits.iter().enumerate().any(|(i, p)| {
        lits[i + 1..]
            .iter()
            .any(|q| p != q && task.var_of(*p) == task.var_of(*q))
    })
}

fn check_effect(task: &PlanningTask, e: &Effect, el: &str, push: &mut impl FnMut(String, Rule)) {
    if has_conflict(task, &e.condition) {
        push(format!("{el} condition"), Rule::ConflictingValues);
    }
    if e.outcomes.is_empty() {
        push(el.to_string(), Rule::EmptyOutcomes);
        return;
    }
    let sum: f64 = e.outcomes.iter().map(|o| o.prob).sum();
    if (sum - 1.0).abs() > PROB_TOL {
        push(el.to_string(), Rule::DistributionNotNormalized);
    }
    for (oi, o) in e.outcomes.iter().enumerate() {
        let ol = format!("{el} outcome {}", oi + 1);
        if !(o.prob > 0.0 && o.prob <= 1.0 + PROB_TOL) {
            push(ol.clone(), Rule::NonPositiveProbability);
        }
        if o.add.iter().any(|p| o.del.contains(p)) {
            push(ol.clone(), Rule::AddDeleteOverlap);
        }
        if has_conflict(task, &o.add) {
            push(ol.clone(), Rule::ConflictingValues);
        }
        for d in &o.del {
            let v = task.var_of(*d);
            let added = o.add.iter().any(|p| task.var_of(*p) == v);
            if !added && task.var(v).domain.len() > 2 {
                push(ol.clone(), Rule::DeleteOnMultiValued);
            }
        }
        let dels_same_var = o.del.iter().enumerate().any(|(i, p)| {
            o.del[i + 1..].iter().any(|q| task.var_of(*p) == task.var_of(*q))
                && !o.add.iter().any(|a| task.var_of(*a) == task.var_of(*p))
        });
        if dels_same_var {
            push(ol, Rule::ConflictingValues);
        }
    }
}

fn contradicts(e: &Effect, f: &Effect) -> bool {
    let adds = |x: &Effect| -> Vec<PropId> {
        x.outcomes.iter().flat_map(|o: &Outcome| o.add.clone()).collect()
    };
    let fa = adds(e);
    f.outcomes
        .iter()
        .any(|o| o.del.iter().any(|d| fa.contains(d)))
}

fn effect_vars(task: &PlanningTask, e: &Effect) -> Vec<VarId> {
    let mut out = Vec::new();
    for o in &e.outcomes {
        for v in task.outcome_vars(o) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

fn check_node(task: &PlanningTask, node: &BnNode, push: &mut impl FnMut(String, Rule)) {
    let name = &task.var(node.var).name;
    for (ri, row) in node.rows.iter().enumerate() {
        let el = format!("bn node {name} row {}", ri + 1);
        if row.dist.iter().any(|w| *w < 0.0) {
            push(el.clone(), Rule::NegativeEntry);
        }
        let s: f64 = row.dist.iter().sum();
        if (s - 1.0).abs() > PROB_TOL {
            push(el.clone(), Rule::RowNotNormalized);
        }
        if row
            .condition
            .iter()
            .any(|p| !node.parents.contains(&task.var_of(*p)))
        {
            push(el.clone(), Rule::RowLiteralNotParent);
        }
        if has_conflict(task, &row.condition) {
            push(el, Rule::ConflictingValues);
        }
    }
    let mut count: usize = 1;
    for p in &node.parents {
        count = count.saturating_mul(task.var(*p).domain.len());
    }
    if count > COVERAGE_CAP {
        push(format!("bn node {name}"), Rule::CoverageTooLarge);
        return;
    }
    let mut choice = vec![0usize; node.parents.len()];
    loop {
        let holds = |p: &PropId| {
            let v = task.var_of(*p);
            match node.parents.iter().position(|q| *q == v) {
                Some(k) => task.var(v).domain[choice[k]] == *p,
                None => false,
            }
        };
        let matching = node
            .rows
            .iter()
            .filter(|r| r.condition.iter().all(holds))
            .count();
        if matching != 1 {
            push(format!("bn node {name}"), Rule::RowCoverage);
            return;
        }
        let mut k = 0;
        loop {
            if k == choice.len() {
                return;
            }
            choice[k] += 1;
            if choice[k] < task.var(node.parents[k]).domain.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}
