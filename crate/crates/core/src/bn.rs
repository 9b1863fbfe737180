//! Time-stamped Bayesian network of a belief state reached by an action
//! sequence. CPTs are ordered rule lists: the first rule whose condition
//! holds gives the distribution.

use std::fmt::Write;

use crate::oracle::{OracleError, DEFAULT_WORLD_CAP};
use crate::task::{ActionId, PlanningTask, PropId, VarId};

/// `node ∈ values`, values as sorted indices into the node's domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub node: usize,
    pub values: Vec<u16>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnRule {
    pub condition: Vec<Atom>,
    pub dist: Vec<f64>,
}

impl BnRule {
    fn onehot(condition: Vec<Atom>, n: usize, k: usize) -> Self {
        let mut dist = vec![0.0; n];
        dist[k] = 1.0;
        BnRule { condition, dist }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    State { var: VarId, time: usize },
    /// Outcome variable of the action applied at step `time` (1-based).
    Mediator { time: usize, group: usize },
}

impl NodeKind {
    pub fn time(&self) -> usize {
        match self {
            NodeKind::State { time, .. } | NodeKind::Mediator { time, .. } => *time,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnVar {
    pub kind: NodeKind,
    pub values: Vec<String>,
    pub parents: Vec<usize>,
    pub rules: Vec<BnRule>,
}

impl BnVar {
    pub fn value_label(&self, k: usize) -> String {
        format!("{}({})", self.values[k], self.kind.time())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeliefBN {
    /// Topologically ordered.
    pub nodes: Vec<BnVar>,
    /// `layers[t][v]` is the node of variable `v` at time `t`.
    pub layers: Vec<Vec<usize>>,
    /// Mediator nodes introduced by step `t`, at index `t - 1`.
    pub mediators: Vec<Vec<usize>>,
}

/// Value index of a proposition in its variable's domain.
fn val(task: &PlanningTask, p: PropId) -> u16 {
    task.prop(p).index as u16
}

fn atoms_of(task: &PlanningTask, lits: &[PropId], layer: &[usize]) -> Vec<Atom> {
    let mut atoms: Vec<Atom> = lits
        .iter()
        .map(|p| Atom {
            node: layer[task.var_of(*p).idx()],
            values: vec![val(task, *p)],
        })
        .collect();
    atoms.sort_by_key(|a| a.node);
    atoms
}

fn state_node(task: &PlanningTask, var: VarId, time: usize) -> BnVar {
    BnVar {
        kind: NodeKind::State { var, time },
        values: task
            .var(var)
            .domain
            .iter()
            .map(|p| task.prop(*p).name.clone())
            .collect(),
        parents: Vec::new(),
        rules: Vec::new(),
    }
}

/// Nodes for one action step. `prev[v]` is the node of variable `v` at the
/// previous layer and new nodes are numbered from `base`. Returns the new
/// nodes, the layer-`time` node of every variable and the mediators. With
/// `compact`, unaffected variables reuse their previous node.
pub fn step_nodes(
    task: &PlanningTask,
    a: ActionId,
    time: usize,
    prev: &[usize],
    base: usize,
    compact: bool,
) -> (Vec<BnVar>, Vec<usize>, Vec<usize>) {
    let action = task.action(a);
    let groups = task.effect_groups(a);
    let mut nodes = Vec::new();
    // Mediator node index and outcome-value map per group.
    let mut mediator: Vec<Option<(usize, Vec<Vec<usize>>)>> = Vec::new();
    let mut med_ids = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        if !g.probabilistic {
            mediator.push(None);
            continue;
        }
        let mut values = Vec::new();
        let mut index = Vec::new();
        for &ei in &g.effects {
            let e = &action.effects[ei];
            let mut row = Vec::new();
            for oi in 0..e.outcomes.len() {
                row.push(values.len());
                values.push(format!("{}:e{}o{}", action.name, ei + 1, oi + 1));
            }
            index.push(row);
        }
        if !g.exhaustive {
            values.push(format!("{}:null{}", action.name, gi + 1));
        }
        let n = values.len();
        let mut rules = Vec::new();
        let mut parents: Vec<usize> = Vec::new();
        for (k, &ei) in g.effects.iter().enumerate() {
            let e = &action.effects[ei];
            let mut dist = vec![0.0; n];
            for (oi, o) in e.outcomes.iter().enumerate() {
                dist[index[k][oi]] = o.prob;
            }
            let cond = atoms_of(task, &e.condition, prev);
            parents.extend(cond.iter().map(|x| x.node));
            rules.push(BnRule { condition: cond, dist });
        }
        if !g.exhaustive {
            rules.push(BnRule::onehot(Vec::new(), n, n - 1));
        }
        parents.sort();
        parents.dedup();
        let id = base + nodes.len();
        nodes.push(BnVar {
            kind: NodeKind::Mediator { time, group: gi },
            values,
            parents,
            rules,
        });
        med_ids.push(id);
        mediator.push(Some((id, index)));
    }

    let affected = task.affected_vars(a);
    let mut layer = Vec::with_capacity(task.vars.len());
    for (vi, var) in task.vars.iter().enumerate() {
        let v = VarId(vi as u32);
        let n = var.domain.len();
        let old = prev[vi];
        if !affected.contains(&v) {
            if compact {
                layer.push(old);
                continue;
            }
            let mut node = state_node(task, v, time);
            node.parents = vec![old];
            node.rules = (0..n)
                .map(|k| BnRule::onehot(vec![Atom { node: old, values: vec![k as u16] }], n, k))
                .collect();
            layer.push(base + nodes.len());
            nodes.push(node);
            continue;
        }
        let relevant: Vec<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                g.effects.iter().any(|&ei| {
                    action.effects[ei]
                        .outcomes
                        .iter()
                        .any(|o| task.outcome_value(o, v).is_some())
                })
            })
            .map(|(gi, _)| gi)
            .collect();
        let mut node = state_node(task, v, time);
        let mut parents = vec![old];
        let mut rules = Vec::new();
        let single_mediator = relevant.len() == 1 && mediator[relevant[0]].is_some();
        for &gi in &relevant {
            let g = &groups[gi];
            match &mediator[gi] {
                Some((y, index)) => {
                    parents.push(*y);
                    let ny = nodes[y - base].values.len();
                    let mut setting: Vec<Vec<u16>> = vec![Vec::new(); n];
                    let mut touched = vec![false; ny];
                    for (k, &ei) in g.effects.iter().enumerate() {
                        for (oi, o) in action.effects[ei].outcomes.iter().enumerate() {
                            if let Some(p) = task.outcome_value(o, v) {
                                setting[task.prop(p).index].push(index[k][oi] as u16);
                                touched[index[k][oi]] = true;
                            }
                        }
                    }
                    for (x, s) in setting.into_iter().enumerate() {
                        if !s.is_empty() {
                            rules.push(BnRule::onehot(vec![Atom { node: *y, values: s }], n, x));
                        }
                    }
                    if single_mediator {
                        let rest: Vec<u16> = (0..ny).filter(|j| !touched[*j]).map(|j| j as u16).collect();
                        if !rest.is_empty() {
                            for k in 0..n {
                                let mut cond = vec![
                                    Atom { node: old, values: vec![k as u16] },
                                    Atom { node: *y, values: rest.clone() },
                                ];
                                cond.sort_by_key(|a| a.node);
                                rules.push(BnRule::onehot(cond, n, k));
                            }
                        }
                    }
                }
                None => {
                    for &ei in &g.effects {
                        let e = &action.effects[ei];
                        if let Some(p) = task.outcome_value(&e.outcomes[0], v) {
                            let cond = atoms_of(task, &e.condition, prev);
                            parents.extend(cond.iter().map(|x| x.node));
                            rules.push(BnRule::onehot(cond, n, task.prop(p).index));
                        }
                    }
                }
            }
        }
        if !single_mediator {
            for k in 0..n {
                rules.push(BnRule::onehot(vec![Atom { node: old, values: vec![k as u16] }], n, k));
            }
        }
        parents.sort();
        parents.dedup();
        node.parents = parents;
        node.rules = rules;
        layer.push(base + nodes.len());
        nodes.push(node);
    }
    (nodes, layer, med_ids)
}

impl BeliefBN {
    /// Layer 0: a copy of the initial belief network.
    pub fn initial(task: &PlanningTask) -> Self {
        let order = task
            .initial
            .topological_order()
            .expect("validated net is acyclic");
        let mut layer = vec![usize::MAX; task.vars.len()];
        for (pos, &i) in order.iter().enumerate() {
            layer[task.initial.nodes[i].var.idx()] = pos;
        }
        let nodes = order
            .iter()
            .map(|&i| {
                let src = &task.initial.nodes[i];
                let mut node = state_node(task, src.var, 0);
                node.parents = src.parents.iter().map(|p| layer[p.idx()]).collect();
                node.parents.sort();
                node.rules = src
                    .rows
                    .iter()
                    .map(|r| BnRule {
                        condition: atoms_of(task, &r.condition, &layer),
                        dist: r.dist.clone(),
                    })
                    .collect();
                node
            })
            .collect();
        BeliefBN {
            nodes,
            layers: vec![layer],
            mediators: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn push_step(&mut self, task: &PlanningTask, a: ActionId, compact: bool) {
        let time = self.layers.len();
        let prev = self.layers.last().unwrap();
        let (nodes, layer, meds) = step_nodes(task, a, time, prev, self.nodes.len(), compact);
        self.nodes.extend(nodes);
        self.layers.push(layer);
        self.mediators.push(meds);
    }

    /// Total size of the rule lists: one unit per rule, per atom value and
    /// per distribution entry.
    pub fn description_size(&self) -> usize {
        self.nodes
            .iter()
            .flat_map(|n| &n.rules)
            .map(|r| 1 + r.condition.iter().map(|a| a.values.len()).sum::<usize>() + r.dist.len())
            .sum()
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let name = match n.kind {
                NodeKind::State { var, time } => format!("X{}({})", var.0, time),
                NodeKind::Mediator { time, group } => format!("Y{}({})", group, time),
            };
            let _ = writeln!(s, "node {i} {name} [{}] parents {:?}", n.values.join(" "), n.parents);
            for r in &n.rules {
                let cond: Vec<String> = r
                    .condition
                    .iter()
                    .map(|a| {
                        let vals: Vec<&str> = a
                            .values
                            .iter()
                            .map(|k| self.nodes[a.node].values[*k as usize].as_str())
                            .collect();
                        format!("{}in{{{}}}", a.node, vals.join(","))
                    })
                    .collect();
                let dist: Vec<String> = r
                    .dist
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p != 0.0)
                    .map(|(k, p)| format!("{}={}", n.values[k], p))
                    .collect();
                let c = if cond.is_empty() { "otherwise".to_string() } else { cond.join(" & ") };
                let _ = writeln!(s, "  {} -> {}", c, dist.join(", "));
            }
        }
        s
    }
}

pub fn rule_matches(rule: &BnRule, assignment: &[u16]) -> bool {
    rule.condition
        .iter()
        .all(|a| a.values.contains(&assignment[a.node]))
}

pub fn build_belief_bn(task: &PlanningTask, plan: &[ActionId]) -> BeliefBN {
    let mut bn = BeliefBN::initial(task);
    for a in plan {
        bn.push_step(task, *a, false);
    }
    bn
}

/// Exact `Pr(query at layer)` by enumerating the joint of all nodes.
pub fn bn_joint_marginal(
    task: &PlanningTask,
    bn: &BeliefBN,
    layer: usize,
    query: &[PropId],
) -> Result<f64, OracleError> {
    let targets: Vec<(usize, u16)> = query
        .iter()
        .map(|p| (bn.layers[layer][task.var_of(*p).idx()], val(task, *p)))
        .collect();
    let mut assignment = vec![0u16; bn.nodes.len()];
    let mut leaves = 0usize;
    fn rec(
        bn: &BeliefBN,
        i: usize,
        asg: &mut Vec<u16>,
        p: f64,
        targets: &[(usize, u16)],
        leaves: &mut usize,
    ) -> Result<f64, OracleError> {
        if i == bn.nodes.len() {
            *leaves += 1;
            if *leaves > DEFAULT_WORLD_CAP {
                return Err(OracleError::CapExceeded {
                    count: *leaves as u128,
                    cap: DEFAULT_WORLD_CAP,
                });
            }
            let ok = targets.iter().all(|(n, k)| asg[*n] == *k);
            return Ok(if ok { p } else { 0.0 });
        }
        let rule = bn.nodes[i]
            .rules
            .iter()
            .find(|r| rule_matches(r, asg))
            .expect("rule lists cover every parent assignment");
        let mut total = 0.0;
        for (k, q) in rule.dist.iter().enumerate() {
            if *q > 0.0 {
                asg[i] = k as u16;
                total += rec(bn, i + 1, asg, p * q, targets, leaves)?;
            }
        }
        asg[i] = 0;
        Ok(total)
    }
    rec(bn, 0, &mut assignment, 1.0, &targets, &mut leaves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::fixtures::RUNNING_EXAMPLE;
    use crate::task::parse_task;

    fn running() -> (PlanningTask, Vec<ActionId>) {
        let t = parse_task(RUNNING_EXAMPLE).unwrap();
        let plan = vec![
            t.action_by_name("move-b-right").unwrap(),
            t.action_by_name("move-left").unwrap(),
        ];
        (t, plan)
    }

    #[test]
    fn running_example_shape() {
        let (t, plan) = running();
        let bn = build_belief_bn(&t, &plan);
        assert_eq!(bn.mediators, vec![vec![2], vec![]]);
        let y = &bn.nodes[2];
        assert_eq!(y.values.len(), 4);
        assert_eq!(y.parents, vec![0, 1]);
        assert_eq!(bn.nodes.len(), 2 + 1 + 2 + 2);
        // Layer 2 depends on layer 1 only.
        for &n in &bn.layers[2] {
            assert!(bn.nodes[n].parents.iter().all(|p| bn.layers[1].contains(p)));
        }
    }

    #[test]
    fn empty_plan_is_initial_net() {
        let (t, _) = running();
        let bn = build_belief_bn(&t, &[]);
        assert_eq!(bn.nodes.len(), 2);
        assert_eq!(bn.nodes[1].rules.len(), 2);
        assert_eq!(bn.nodes[1].rules[0].dist, vec![0.7, 0.3]);
    }

    #[test]
    fn deterministic_plan_has_no_mediators() {
        let (t, _) = running();
        let mr = t.action_by_name("move-right").unwrap();
        let ml = t.action_by_name("move-left").unwrap();
        let bn = build_belief_bn(&t, &[mr, ml, mr]);
        assert!(bn.mediators.iter().all(Vec::is_empty));
    }

    #[test]
    fn marginals_match_oracle() {
        let (t, plan) = running();
        let bn = build_belief_bn(&t, &plan);
        let g = bn_joint_marginal(&t, &bn, 2, &t.goal).unwrap();
        assert!((g - 0.791).abs() < 1e-9);
        assert!((bn_joint_marginal(&t, &bn, 2, &[]).unwrap() - 1.0).abs() < 1e-9);
        let r2 = t.prop_by_name("r2").unwrap();
        assert_eq!(bn_joint_marginal(&t, &bn, 2, &[r2]).unwrap(), 0.0);
    }

    #[test]
    fn compact_layers_alias_unaffected_vars() {
        let (t, plan) = running();
        let mut bn = BeliefBN::initial(&t);
        bn.push_step(&t, plan[1], true);
        let b = t.var_by_name("B").unwrap().idx();
        assert_eq!(bn.layers[1][b], bn.layers[0][b]);
        assert!((bn_joint_marginal(&t, &bn, 1, &t.goal).unwrap() - 0.35).abs() < 1e-9);
    }

    #[test]
    fn dump_lists_every_node() {
        let (t, plan) = running();
        let d = build_belief_bn(&t, &plan).dump();
        assert_eq!(d.lines().filter(|l| l.starts_with("node")).count(), 7);
        assert!(d.contains("move-b-right:null1"));
    }
}
