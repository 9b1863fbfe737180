//! Relaxed plan extraction from a successful PRPG: implication-graph
//! reduction, support-graph backchaining and the simpler mode used when
//! no action has a probabilistic effect.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::cnf::Lit;
use crate::prpg::{Leaf, Prpg, PrpgContext, Source, Weights};
use crate::task::{ActionId, PlanningTask, PropId, PROB_TOL};

const THETA_TOL: f64 = 1e-9;

/// Selected `(time, action)` pairs, time ≥ 0.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelaxedPlan {
    pub steps: BTreeSet<(usize, ActionId)>,
}

impl RelaxedPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Actions per future layer, for rebuilding a restricted PRPG.
    pub fn per_layer(&self, horizon: usize) -> Vec<Vec<ActionId>> {
        let mut out = vec![Vec::new(); horizon];
        for (t, a) in &self.steps {
            out[*t].push(*a);
        }
        out
    }

    pub fn named(&self, task: &PlanningTask) -> Vec<String> {
        self.steps
            .iter()
            .map(|(t, a)| format!("{}@{t}", task.action(*a).name))
            .collect()
    }
}

/// One attempted removal of a repeated past action.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub action: ActionId,
    pub time: usize,
    pub estimate: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Reduction {
    /// Effect instances removed from the graph.
    pub disabled: HashSet<usize>,
    pub trials: Vec<Trial>,
}

fn open_goals(g: &Prpg, layer: usize, goal: &[PropId]) -> Vec<PropId> {
    goal.iter().copied().filter(|p| g.is_unknown(layer, *p)).collect()
}

/// Chance nodes of ∪ Imp_{→g(T)} over the unknown goals.
fn relevant_nodes(g: &Prpg, layer: usize, goal: &[PropId], disabled: &HashSet<usize>) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for p in open_goals(g, layer, goal) {
        out.extend(g.weights(layer, p, disabled).chance.keys().copied());
    }
    out
}

/// Greedily drops future repetitions of the past plan's actions while the
/// estimate stays at or above θ.
pub fn reduce_implication_graph(
    ctx: &PrpgContext,
    g: &Prpg,
    past: &[ActionId],
    goal: &[PropId],
    theta: f64,
) -> Reduction {
    let top = g.last_layer();
    let mut red = Reduction::default();
    let mut seen = HashSet::new();
    for a in past {
        if !seen.insert(*a) {
            continue;
        }
        for layer in g.past..top {
            let nodes = relevant_nodes(g, top, goal, &red.disabled);
            let insts: BTreeSet<usize> = nodes
                .iter()
                .map(|c| g.chance[*c].inst)
                .filter(|i| {
                    let inst = &g.instances[*i];
                    inst.layer == layer && inst.source.action() == Some(*a)
                })
                .collect();
            if insts.is_empty() {
                continue;
            }
            let mut trial = red.disabled.clone();
            trial.extend(insts);
            let estimate = g.get_p_with(ctx, top, goal, &trial);
            let accepted = estimate >= theta - THETA_TOL;
            red.trials.push(Trial {
                action: *a,
                time: layer - g.past,
                estimate,
                accepted,
            });
            if !accepted {
                break;
            }
            red.disabled = trial;
        }
    }
    red
}

struct Extractor<'a> {
    task: &'a PlanningTask,
    ctx: &'a PrpgContext,
    g: &'a Prpg,
    plan: RelaxedPlan,
    /// Sub-goals per layer.
    goals: BTreeMap<usize, BTreeSet<PropId>>,
}

impl<'a> Extractor<'a> {
    fn new(task: &'a PlanningTask, ctx: &'a PrpgContext, g: &'a Prpg) -> Self {
        Extractor {
            task,
            ctx,
            g,
            plan: RelaxedPlan::default(),
            goals: BTreeMap::new(),
        }
    }

    fn first_known(&self, p: PropId) -> Option<usize> {
        (0..self.g.layers.len()).find(|k| self.g.is_known(*k, p))
    }

    fn sub_goal(&mut self, props: impl IntoIterator<Item = PropId>) {
        for p in props {
            if let Some(k) = self.first_known(p) {
                if k > self.g.past {
                    self.goals.entry(k).or_default().insert(p);
                }
            }
        }
    }

    fn select(&mut self, layer: usize, a: ActionId, effect: usize) {
        self.plan.steps.insert((layer - self.g.past, a));
        let relaxed = &self.ctx.relaxed[a.idx()];
        let conds: Vec<PropId> = relaxed
            .pre
            .iter()
            .chain(relaxed.effects[effect].condition.first())
            .copied()
            .filter(|p| self.g.is_known(layer, *p))
            .collect();
        self.sub_goal(conds);
    }

    fn extract_subplan(&mut self, nodes: impl IntoIterator<Item = usize>) {
        for c in nodes {
            let inst = &self.g.instances[self.g.chance[c].inst];
            if inst.layer < self.g.past {
                continue;
            }
            if let Source::Action { action, effect } = inst.source {
                self.select(inst.layer, action, effect);
            }
        }
    }

    fn is_selected(&self, layer: usize, a: ActionId) -> bool {
        layer >= self.g.past && self.plan.steps.contains(&(layer - self.g.past, a))
    }

    /// A known-condition effect at `layer` adding `p` in every outcome.
    fn certain_achiever(&self, layer: usize, p: PropId) -> Option<(ActionId, usize)> {
        let known = &self.g.layers[layer].known;
        let mut found: Vec<(ActionId, usize)> = Vec::new();
        for a in &self.g.layers[layer].actions {
            for (ei, e) in self.ctx.relaxed[a.idx()].effects.iter().enumerate() {
                let cond_ok = e.condition.first().map_or(true, |c| known[c.idx()]);
                let total: f64 = e.outcomes.iter().map(|o| o.prob).sum();
                if cond_ok && total >= 1.0 - PROB_TOL && e.outcomes.iter().all(|o| o.add.contains(&p)) {
                    found.push((*a, ei));
                }
            }
        }
        found.sort_by_key(|(a, ei)| (!self.is_selected(layer, *a), *a, *ei));
        found.first().copied()
    }

    /// Sub-graph of implications that together make `p` certain at
    /// `layer`, grown forward from its support.
    fn construct_support_graph(&self, layer: usize, p: PropId, support: &[Leaf]) -> Vec<usize> {
        let g = self.g;
        let w = g.weights(layer, p, &HashSet::new());
        let mut edges = Vec::new();
        let mut seen_facts: HashSet<(usize, PropId)> = HashSet::new();
        let mut seen_chance: HashSet<usize> = HashSet::new();
        let mut open: Vec<(usize, PropId)> = Vec::new();
        let mut chance_open: Vec<usize> = Vec::new();
        for l in support {
            match l {
                Leaf::Fact(q) => open.push((0, *q)),
                Leaf::Chance(c) => chance_open.push(*c),
            }
        }
        let pick_target = |c: usize, w: &Weights| -> (usize, PropId) {
            let node = &g.chance[c];
            let k = g.instances[node.inst].layer + 1;
            let mut targets: Vec<PropId> = node
                .adds
                .iter()
                .copied()
                .filter(|q| w.facts.get(&(k, *q)).is_some_and(|x| x.certain))
                .collect();
            targets.sort_by_key(|q| (!(k == layer && *q == p), *q));
            let q = *targets
                .first()
                .expect("certain chance node has a certain add");
            (k, q)
        };
        loop {
            if let Some(c) = chance_open.pop() {
                if seen_chance.insert(c) {
                    edges.push(c);
                    let t = pick_target(c, &w);
                    if seen_facts.insert(t) {
                        open.push(t);
                    }
                }
                continue;
            }
            let Some((k, q)) = open.pop() else { break };
            if k == layer {
                continue;
            }
            let empty = Vec::new();
            let mut cands: Vec<usize> = g.layers[k]
                .conds
                .get(&q)
                .unwrap_or(&empty)
                .iter()
                .copied()
                .filter(|i| {
                    g.instances[*i]
                        .outcomes
                        .iter()
                        .all(|c| w.chance.get(c).is_some_and(|x| x.certain))
                })
                .collect();
            cands.sort_by_key(|i| {
                let src = g.instances[*i].source;
                let rank = match src {
                    Source::Noop(_) => 0,
                    Source::Action { action, .. } if self.is_selected(k, action) => 1,
                    Source::Action { .. } => 2,
                };
                (rank, src)
            });
            let inst = *cands
                .first()
                .unwrap_or_else(|| panic!("no certain effect on {}({k}) in a support graph", self.task.prop(q).name));
            for c in &g.instances[inst].outcomes {
                if seen_chance.insert(*c) {
                    edges.push(*c);
                    let t = pick_target(*c, &w);
                    if seen_facts.insert(t) {
                        open.push(t);
                    }
                }
            }
        }
        edges
    }

    /// Backward pass over the sub-goal layers.
    fn backchain(&mut self) {
        while let Some((&layer, _)) = self.goals.iter().next_back() {
            let set = self.goals.remove(&layer).unwrap();
            for p in set {
                if let Some((a, e)) = self.certain_achiever(layer - 1, p) {
                    self.select(layer - 1, a, e);
                } else {
                    let support = self
                        .g
                        .support(layer, p)
                        .unwrap_or_else(|| panic!("sub-goal {} has no support", self.task.prop(p).name))
                        .to_vec();
                    let edges = self.construct_support_graph(layer, p, &support);
                    self.extract_subplan(edges);
                }
            }
        }
    }
}

/// Full probabilistic extraction; the PRPG must have reached θ.
pub fn extract_prplan(
    ctx: &PrpgContext,
    task: &PlanningTask,
    g: &Prpg,
    past: &[ActionId],
    goal: &[PropId],
    theta: f64,
) -> RelaxedPlan {
    let top = g.last_layer();
    let red = reduce_implication_graph(ctx, g, past, goal, theta);
    let mut x = Extractor::new(task, ctx, g);
    let nodes = relevant_nodes(g, top, goal, &red.disabled);
    x.extract_subplan(nodes);
    x.sub_goal(goal.iter().copied().filter(|p| g.is_known(top, *p)));
    x.backchain();
    x.plan
}

/// Extraction for tasks whose actions are all deterministic. Goals that
/// hold only by implication keep the cheapest prefix of their leafs that
/// reaches a per-goal share of θ.
pub fn simple_extract(
    ctx: &PrpgContext,
    task: &PlanningTask,
    g: &Prpg,
    goal: &[PropId],
    theta: f64,
) -> RelaxedPlan {
    let top = g.last_layer();
    let mut x = Extractor::new(task, ctx, g);
    let mut partial: Vec<(usize, PropId)> = Vec::new();
    for p in goal {
        match x.first_known(*p) {
            Some(k) if k <= g.past => {}
            Some(k) if x.certain_achiever(k - 1, *p).is_some() => x.sub_goal([*p]),
            Some(k) => partial.push((k, *p)),
            None => partial.push((top, *p)),
        }
    }
    if !partial.is_empty() {
        let share = theta.clamp(0.0, 1.0).powf(1.0 / partial.len() as f64);
        for (k, p) in partial {
            let w = g.weights(k, p, &HashSet::new());
            let paths = cheapest_paths(g, k, &w, |layer, a| x.is_selected(layer, a));
            let mut leaves: Vec<(usize, f64, Leaf)> = g
                .leaves(&w)
                .into_iter()
                .filter_map(|l| paths.cost(l).map(|c| (c, prior(ctx, g, l), l)))
                .collect();
            leaves.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
            let keep = shortest_prefix(ctx, g, &leaves.iter().map(|l| l.2).collect::<Vec<_>>(), share);
            for (_, _, l) in leaves.into_iter().take(keep) {
                let nodes = paths.path(l);
                x.extract_subplan(nodes);
            }
        }
    }
    x.backchain();
    x.plan
}

fn leaf_lit(ctx: &PrpgContext, l: Leaf) -> Option<Lit> {
    match l {
        Leaf::Fact(p) => Some(ctx.prop_lit(p)),
        Leaf::Chance(_) => None,
    }
}

fn prior(ctx: &PrpgContext, g: &Prpg, l: Leaf) -> f64 {
    match l {
        Leaf::Fact(p) => ctx.marginal(p),
        Leaf::Chance(c) => g.chance[c].prob,
    }
}

/// Smallest k such that the first k leafs are jointly likely enough.
fn shortest_prefix(ctx: &PrpgContext, g: &Prpg, leaves: &[Leaf], target: f64) -> usize {
    let est = |k: usize| -> f64 {
        if leaves[..k].iter().any(|l| matches!(l, Leaf::Chance(_))) {
            return prefix_with_chance(ctx, g, &leaves[..k]);
        }
        let clause: Vec<Lit> = leaves[..k].iter().filter_map(|l| leaf_lit(ctx, *l)).collect();
        if clause.is_empty() {
            0.0
        } else {
            ctx.prob_of(&[clause])
        }
    };
    let (mut lo, mut hi) = (0, leaves.len());
    if est(hi) < target - THETA_TOL {
        return hi;
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if est(mid) >= target - THETA_TOL {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Probability of the disjunction when some leafs are outcome nodes:
/// those are independent of the initial state.
fn prefix_with_chance(ctx: &PrpgContext, g: &Prpg, leaves: &[Leaf]) -> f64 {
    let clause: Vec<Lit> = leaves.iter().filter_map(|l| leaf_lit(ctx, *l)).collect();
    let p_facts = if clause.is_empty() { 0.0 } else { ctx.prob_of(&[clause]) };
    let mut by_inst: HashMap<usize, f64> = HashMap::new();
    for l in leaves {
        if let Leaf::Chance(c) = l {
            *by_inst.entry(g.chance[*c].inst).or_default() += g.chance[*c].prob;
        }
    }
    let miss: f64 = by_inst.values().map(|p| 1.0 - p.min(1.0)).product();
    1.0 - (1.0 - p_facts) * miss
}

/// 0-1 shortest paths from the leafs of Imp_{→p(layer)} to p(layer):
/// future action outcomes cost 1 unless already selected, the rest 0.
struct Paths {
    fact: HashMap<(usize, PropId), (usize, Option<usize>)>,
    chance: HashMap<usize, (usize, (usize, PropId))>,
}

impl Paths {
    fn cost(&self, l: Leaf) -> Option<usize> {
        match l {
            Leaf::Fact(p) => self.fact.get(&(0, p)).map(|x| x.0),
            Leaf::Chance(c) => self.chance.get(&c).map(|x| x.0),
        }
    }

    fn path(&self, l: Leaf) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = match l {
            Leaf::Fact(p) => self.fact[&(0, p)].1,
            Leaf::Chance(c) => Some(c),
        };
        while let Some(c) = cur {
            out.push(c);
            let next = self.chance[&c].1;
            cur = self.fact.get(&next).and_then(|x| x.1);
        }
        out
    }
}

fn cheapest_paths(g: &Prpg, layer: usize, w: &Weights, selected: impl Fn(usize, ActionId) -> bool) -> Paths {
    let mut fact: HashMap<(usize, PropId), (usize, Option<usize>)> = HashMap::new();
    let mut chance: HashMap<usize, (usize, (usize, PropId))> = HashMap::new();
    for ((k, q), _) in w.facts.iter().filter(|((k, _), _)| *k == layer) {
        fact.insert((*k, *q), (0, None));
    }
    for k in (0..layer).rev() {
        let mut here: Vec<usize> = w
            .chance
            .keys()
            .copied()
            .filter(|c| g.instances[g.chance[*c].inst].layer == k)
            .collect();
        here.sort_unstable();
        for c in here {
            let node = &g.chance[c];
            let inst = &g.instances[node.inst];
            let step = match inst.source {
                Source::Action { action, .. } if k >= g.past && !selected(k, action) => 1,
                _ => 0,
            };
            let best = node
                .adds
                .iter()
                .filter_map(|q| fact.get(&(k + 1, *q)).map(|x| (x.0, (k + 1, *q))))
                .min();
            if let Some((cost, target)) = best {
                chance.insert(c, (cost + step, target));
                if let Some(q) = inst.cond {
                    let e = fact.entry((k, q)).or_insert((usize::MAX, None));
                    if cost + step < e.0 {
                        *e = (cost + step, Some(c));
                    }
                }
            }
        }
    }
    Paths { fact, chance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefConfig;
    use crate::prpg::{build_prpg, build_to_horizon, PrpgOptions, PrpgStatus};
    use crate::task::fixtures::RUNNING_EXAMPLE;
    use crate::task::parse_task;

    fn setup() -> (PlanningTask, PrpgContext, PrpgOptions, Vec<ActionId>) {
        let task = parse_task(RUNNING_EXAMPLE).unwrap();
        let ctx = PrpgContext::new(&task, &BeliefConfig::default());
        let mbr = task.action_by_name("move-b-right").unwrap();
        let ml = task.action_by_name("move-left").unwrap();
        let opts = PrpgOptions {
            goal: vec![task.prop_by_name("r1").unwrap(), task.prop_by_name("b2").unwrap()],
            theta: 0.9,
            actions: Some(vec![mbr, ml]),
        };
        (task, ctx, opts, vec![mbr])
    }

    #[test]
    fn reduction_rejects_first_removal() {
        let (task, mut ctx, opts, plan) = setup();
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        let red = reduce_implication_graph(&ctx, &g, &plan, &opts.goal, opts.theta);
        assert_eq!(red.trials.len(), 1);
        assert_eq!(red.trials[0].time, 0);
        assert!((red.trials[0].estimate - 0.724).abs() < 1e-9, "{:?}", red.trials);
        assert!(!red.trials[0].accepted);
        assert!(red.disabled.is_empty());
    }

    #[test]
    fn worked_example_plan() {
        let (task, mut ctx, opts, plan) = setup();
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        let rp = extract_prplan(&ctx, &task, &g, &plan, &opts.goal, opts.theta);
        assert_eq!(rp.named(&task), vec!["move-left@0", "move-b-right@0", "move-b-right@1"]);
        assert_eq!(rp.len(), 3);
    }

    #[test]
    fn zero_threshold_removes_everything_examined() {
        let (task, mut ctx, opts, plan) = setup();
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        let red = reduce_implication_graph(&ctx, &g, &plan, &opts.goal, 0.0);
        assert!(red.trials.iter().all(|t| t.accepted));
        assert_eq!(red.trials.len(), 2);
    }

    #[test]
    fn selected_actions_keep_estimate() {
        let (task, mut ctx, opts, plan) = setup();
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        let rp = extract_prplan(&ctx, &task, &g, &plan, &opts.goal, opts.theta);
        let h = g.horizon().unwrap();
        let r = build_to_horizon(&mut ctx, &task, &plan, h, Some(&rp.per_layer(h)));
        assert!(r.get_p(&ctx, r.last_layer(), &opts.goal) >= opts.theta - 1e-9);
    }

    fn safe(n: usize) -> PlanningTask {
        let mut s = String::from("vars:\n  C =");
        for i in 0..n {
            s += &format!("{} c{i}", if i == 0 { "" } else { " |" });
        }
        s += "\n  open = open\nbn:\n  node C\n    row *:";
        for i in 0..n {
            s += &format!("{} c{i}={}", if i == 0 { "" } else { "," }, 1.0 / n as f64);
        }
        s += "\n  node open\n    row *: open=0, !open=1\nactions:\n";
        for i in 0..n {
            s += &format!("  action try{i}\n    effect when c{i}:\n      outcome 1: add=open\n");
        }
        s += "goal: open\ntheta: 0.5\n";
        parse_task(&s).unwrap()
    }

    #[test]
    fn simple_extract_takes_prefix() {
        let task = safe(4);
        let mut ctx = PrpgContext::new(&task, &BeliefConfig::default());
        let opts = PrpgOptions::for_task(&task);
        let g = build_prpg(&mut ctx, &task, &[], &opts);
        assert_eq!(g.status, Some(PrpgStatus::Reached { horizon: 1 }));
        let rp = simple_extract(&ctx, &task, &g, &opts.goal, 0.5);
        assert_eq!(rp.len(), 2);
        let rp = simple_extract(&ctx, &task, &g, &opts.goal, 1.0);
        assert_eq!(rp.len(), 4);
        let t0 = ActionId(0);
        let g = build_prpg(&mut ctx, &task, &[t0], &opts);
        let rp = simple_extract(&ctx, &task, &g, &opts.goal, 0.5);
        assert_eq!(rp.len(), 1, "{:?}", rp.named(&task));
    }

    #[test]
    fn support_graph_for_known_r1() {
        let (task, mut ctx, opts, plan) = setup();
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        let r1 = task.prop_by_name("r1").unwrap();
        let x = Extractor::new(&task, &ctx, &g);
        let l = g.layer(1);
        let s = g.support(l, r1).unwrap().to_vec();
        let edges = x.construct_support_graph(l, r1, &s);
        let names: BTreeSet<String> = edges.iter().map(|c| g.describe_node(&task, *c)).collect();
        let expect: BTreeSet<String> = ["noop-r1/o0(-1)", "noop-r1/o0(0)", "noop-r2/o0(-1)", "move-left#e0/o0(0)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(names, expect);
        assert!(x.construct_support_graph(l, r1, &[]).is_empty());
    }
}
