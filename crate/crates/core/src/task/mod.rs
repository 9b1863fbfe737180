//! Planning tasks: multi-valued state variables, probabilistic conditional
//! effects, a Bayes-net initial belief, a goal and a threshold.

mod parse;
mod validate;
mod write;

use std::collections::HashMap;
use std::fmt;

pub use parse::{parse_literal_list, parse_plan, parse_task, parse_task_unchecked};
pub use validate::{validate_task, Rule, Violation};
pub use write::{write_plan, write_task};

/// Probability tolerance used for every normalization check.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PropId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub u32);

impl PropId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl VarId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl ActionId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposition {
    pub name: String,
    pub var: VarId,
    /// Position inside the variable's domain.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVariable {
    pub name: String,
    pub domain: Vec<PropId>,
    /// Declared with a single value `q`; the domain is `{q, !q}`.
    pub singleton: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub add: Vec<PropId>,
    pub del: Vec<PropId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Effect {
    pub condition: Vec<PropId>,
    pub outcomes: Vec<Outcome>,
}

impl Effect {
    pub fn is_deterministic(&self) -> bool {
        self.outcomes.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub name: String,
    pub pre: Vec<PropId>,
    pub effects: Vec<Effect>,
}

impl Action {
    pub fn is_deterministic(&self) -> bool {
        self.effects.iter().all(Effect::is_deterministic)
    }
}

/// One CPT rule: a partial assignment over the parents (empty = `*`) and a
/// distribution over the node's domain in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct CptRow {
    pub condition: Vec<PropId>,
    pub dist: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnNode {
    pub var: VarId,
    pub parents: Vec<VarId>,
    pub rows: Vec<CptRow>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct InitialBeliefNet {
    pub nodes: Vec<BnNode>,
}

impl InitialBeliefNet {
    pub fn node_of(&self, var: VarId) -> Option<&BnNode> {
        self.nodes.iter().find(|n| n.var == var)
    }

    /// Nodes in a parents-first order. Returns `None` on a cycle or when a
    /// parent has no node.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let pos: HashMap<VarId, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.var, i)).collect();
        let mut state = vec![0u8; self.nodes.len()];
        let mut order = Vec::with_capacity(self.nodes.len());
        fn visit(
            i: usize,
            nodes: &[BnNode],
            pos: &HashMap<VarId, usize>,
            state: &mut [u8],
            order: &mut Vec<usize>,
        ) -> bool {
            match state[i] {
                2 => return true,
                1 => return false,
                _ => {}
            }
            state[i] = 1;
            for p in &nodes[i].parents {
                match pos.get(p) {
                    Some(&j) => {
                        if !visit(j, nodes, pos, state, order) {
                            return false;
                        }
                    }
                    None => return false,
                }
            }
            state[i] = 2;
            order.push(i);
            true
        }
        for i in 0..self.nodes.len() {
            if !visit(i, &self.nodes, &pos, &mut state, &mut order) {
                return None;
            }
        }
        Some(order)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanningTask {
    pub vars: Vec<StateVariable>,
    pub props: Vec<Proposition>,
    pub actions: Vec<Action>,
    pub initial: InitialBeliefNet,
    pub goal: Vec<PropId>,
    pub theta: f64,
}

/// A maximal set of pairwise-exclusive effects of one action. At most one
/// effect of a group fires in any world.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectGroup {
    pub effects: Vec<usize>,
    /// The conditions cover every world, so no implicit null outcome.
    pub exhaustive: bool,
    pub probabilistic: bool,
}

impl PlanningTask {
    pub fn prop(&self, p: PropId) -> &Proposition {
        &self.props[p.idx()]
    }

    pub fn var(&self, v: VarId) -> &StateVariable {
        &self.vars[v.idx()]
    }

    pub fn var_of(&self, p: PropId) -> VarId {
        self.props[p.idx()].var
    }

    pub fn action(&self, a: ActionId) -> &Action {
        &self.actions[a.idx()]
    }

    pub fn prop_by_name(&self, name: &str) -> Option<PropId> {
        self.props
            .iter()
            .position(|p| p.name == name)
            .map(|i| PropId(i as u32))
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .map(|i| VarId(i as u32))
    }

    pub fn action_by_name(&self, name: &str) -> Option<ActionId> {
        self.actions
            .iter()
            .position(|a| a.name == name)
            .map(|i| ActionId(i as u32))
    }

    pub fn num_props(&self) -> usize {
        self.props.len()
    }

    pub fn is_effect_deterministic(&self) -> bool {
        self.actions.iter().all(Action::is_deterministic)
    }

    /// The value `o` assigns to `var`, if it touches `var` at all. A delete
    /// on a binary variable assigns the other value.
    pub fn outcome_value(&self, o: &Outcome, var: VarId) -> Option<PropId> {
        if let Some(&p) = o.add.iter().find(|p| self.var_of(**p) == var) {
            return Some(p);
        }
        let d = o.del.iter().find(|p| self.var_of(**p) == var)?;
        let dom = &self.var(var).domain;
        if dom.len() == 2 {
            Some(if dom[0] == *d { dom[1] } else { dom[0] })
        } else {
            None
        }
    }

    /// Variables an outcome assigns, in order of first mention.
    pub fn outcome_vars(&self, o: &Outcome) -> Vec<VarId> {
        let mut out = Vec::new();
        for p in o.add.iter().chain(&o.del) {
            let v = self.var_of(*p);
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    /// Variables touched by any outcome of any effect of `a`.
    pub fn affected_vars(&self, a: ActionId) -> Vec<VarId> {
        let mut out: Vec<VarId> = Vec::new();
        for e in &self.action(a).effects {
            for o in &e.outcomes {
                for v in self.outcome_vars(o) {
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Two conditions are exclusive if they require different values of
    /// some variable.
    pub fn conditions_exclusive(&self, a: &[PropId], b: &[PropId]) -> bool {
        a.iter().any(|p| {
            b.iter()
                .any(|q| p != q && self.var_of(*p) == self.var_of(*q))
        })
    }

    /// Greedy partition of an action's effects into exclusive groups.
    pub fn effect_groups(&self, a: ActionId) -> Vec<EffectGroup> {
        let action = self.action(a);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, e) in action.effects.iter().enumerate() {
            let slot = groups.iter().position(|g| {
                g.iter().all(|&j| {
                    self.conditions_exclusive(&e.condition, &action.effects[j].condition)
                })
            });
            match slot {
                Some(s) => groups[s].push(i),
                None => groups.push(vec![i]),
            }
        }
        groups
            .into_iter()
            .map(|effects| {
                let conds: Vec<&[PropId]> = effects
                    .iter()
                    .map(|&i| action.effects[i].condition.as_slice())
                    .collect();
                EffectGroup {
                    exhaustive: self.conditions_cover_all(&conds),
                    probabilistic: effects
                        .iter()
                        .any(|&i| !action.effects[i].is_deterministic()),
                    effects,
                }
            })
            .collect()
    }

    /// Whether the disjunction of the given conjunctions is valid over the
    /// variables they mention.
    pub fn conditions_cover_all(&self, conds: &[&[PropId]]) -> bool {
        if conds.iter().any(|c| c.is_empty()) {
            return true;
        }
        let mut vars: Vec<VarId> = conds
            .iter()
            .flat_map(|c| c.iter().map(|p| self.var_of(*p)))
            .collect();
        vars.sort();
        vars.dedup();
        let mut count: usize = 1;
        for v in &vars {
            count = count.saturating_mul(self.var(*v).domain.len());
        }
        if count > 1 << 16 {
            return false;
        }
        let mut choice = vec![0usize; vars.len()];
        loop {
            let holds = |p: &PropId| {
                let k = vars.binary_search(&self.var_of(*p)).unwrap();
                self.var(vars[k]).domain[choice[k]] == *p
            };
            if !conds.iter().any(|c| c.iter().all(holds)) {
                return false;
            }
            let mut k = 0;
            loop {
                if k == vars.len() {
                    return true;
                }
                choice[k] += 1;
                if choice[k] < self.var(vars[k]).domain.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
        }
    }

    /// Action names for a plan, in order.
    pub fn plan_names(&self, plan: &[ActionId]) -> Vec<&str> {
        plan.iter().map(|a| self.action(*a).name.as_str()).collect()
    }
}

impl fmt::Display for PropId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TaskError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}, column {col}: undeclared {what} `{name}`")]
    Undeclared {
        line: usize,
        col: usize,
        what: &'static str,
        name: String,
    },
    #[error("line {line}: duplicate {what} `{name}`")]
    Duplicate {
        line: usize,
        what: &'static str,
        name: String,
    },
    #[error("invalid task: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}


#[cfg(test)]
mod tests {
    use super::fixtures::RUNNING_EXAMPLE;
    use super::*;

    #[test]
    fn effect_groups_of_running_example() {
        let t = parse_task(RUNNING_EXAMPLE).unwrap();
        let mbr = t.action_by_name("move-b-right").unwrap();
        let g = t.effect_groups(mbr);
        assert_eq!(g.len(), 1);
        assert!(!g[0].exhaustive);
        assert!(g[0].probabilistic);
    }

    #[test]
    fn outcome_value_of_delete_only_binary() {
        let t = parse_task(
            "vars:\n q = q\nbn:\n node q\n row *: q=1\nactions:\n action a\n effect:\n outcome 1: del=q\ngoal:\ntheta: 0\n",
        )
        .unwrap();
        let o = &t.actions[0].effects[0].outcomes[0];
        let v = t.var_by_name("q").unwrap();
        assert_eq!(t.outcome_value(o, v), t.prop_by_name("!q"));
    }

    #[test]
    fn exhaustive_conditions_detected() {
        let t = parse_task(RUNNING_EXAMPLE).unwrap();
        let r1 = t.prop_by_name("r1").unwrap();
        let r2 = t.prop_by_name("r2").unwrap();
        let b1 = t.prop_by_name("b1").unwrap();
        assert!(t.conditions_cover_all(&[&[r1], &[r2]]));
        assert!(!t.conditions_cover_all(&[&[r1, b1], &[r2]]));
        assert!(t.conditions_cover_all(&[&[]]));
    }
}
