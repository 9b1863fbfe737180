//! Probabilistic relaxed planning graph: known/unknown fact layers, the
//! time-stamped implication graph with chance nodes, backward weight
//! propagation, support sets and the goal-probability estimate.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::belief::{BeliefConfig, BeliefNode, FactStatus};
use crate::cnf::{Lit, Var, VarKind, WeightedCnf};
use crate::oracle::{relax_action, ConditionPick};
use crate::task::{Action, ActionId, PlanningTask, PropId, PROB_TOL};
use crate::wmc::{wmc, SatSolver, WmcOptions};

pub const DEFAULT_HORIZON_CAP: usize = 500;
const P_EQ_TOL: f64 = 1e-12;
const THETA_TOL: f64 = 1e-9;

/// Who induced an effect instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Noop(PropId),
    Action { action: ActionId, effect: usize },
}

impl Source {
    pub fn action(self) -> Option<ActionId> {
        match self {
            Source::Noop(_) => None,
            Source::Action { action, .. } => Some(action),
        }
    }
}

/// One effect of one relaxed action (or NOOP) at one layer.
#[derive(Clone, Debug)]
pub struct EffectInstance {
    pub layer: usize,
    pub source: Source,
    /// Condition fact when it is unknown at `layer`; `None` for a known
    /// condition, whose outcomes then form an exactly-one group in Φ.
    pub cond: Option<PropId>,
    pub outcomes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ChanceNode {
    pub inst: usize,
    pub outcome: usize,
    pub prob: f64,
    /// Targets at `layer + 1`; facts already known there get no edge.
    pub adds: Vec<PropId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leaf {
    /// Unknown fact of the initial layer.
    Fact(PropId),
    Chance(usize),
}

#[derive(Clone, Debug, Default)]
pub struct Layer {
    pub known: Vec<bool>,
    pub unknown: Vec<bool>,
    /// Relaxed actions applied from this layer (empty for the last one).
    pub actions: Vec<ActionId>,
    /// Chance nodes with an edge into each fact of this layer.
    pub achievers: HashMap<PropId, Vec<usize>>,
    /// Effect instances conditioned on each unknown fact of this layer.
    pub conds: HashMap<PropId, Vec<usize>>,
    /// Support of every fact that was unknown before the implication test.
    pub supports: HashMap<PropId, Arc<Vec<Leaf>>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W {
    pub value: f64,
    /// Structural form of `value == ϖ`.
    pub certain: bool,
}

/// Weights w_{p(t)} over the nodes of Imp_{→p(t)}.
#[derive(Clone, Debug)]
pub struct Weights {
    pub facts: HashMap<(usize, PropId), W>,
    pub chance: BTreeMap<usize, W>,
}

impl Weights {
    pub fn fact(&self, layer: usize, p: PropId) -> Option<f64> {
        self.facts.get(&(layer, p)).map(|w| w.value)
    }

    pub fn of_chance(&self, c: usize) -> Option<f64> {
        self.chance.get(&c).map(|w| w.value)
    }

    pub fn leaf(&self, l: Leaf) -> W {
        match l {
            Leaf::Fact(p) => self.facts[&(0, p)],
            Leaf::Chance(c) => self.chance[&c],
        }
    }
}

/// Everything shared by all PRPG builds for one task.
pub struct PrpgContext {
    pub relaxed: Vec<Action>,
    pub wmc: WmcOptions,
    pub horizon_cap: usize,
    phi: WeightedCnf,
    prop_lits: Vec<Lit>,
    init_known: Vec<bool>,
    init_unknown: Vec<bool>,
    marginals: Vec<f64>,
    solver: SatSolver,
    implied_cache: HashMap<Vec<PropId>, bool>,
}

impl PrpgContext {
    pub fn new(task: &PlanningTask, cfg: &BeliefConfig) -> Self {
        let root = BeliefNode::root(task, cfg);
        Self::from_root(task, &root, cfg.wmc)
    }

    pub fn from_root(task: &PlanningTask, root: &BeliefNode, wmc: WmcOptions) -> Self {
        assert_eq!(root.depth, 0, "context needs the initial belief");
        let phi = root.formula();
        let n = task.num_props();
        let props = (0..n as u32).map(PropId);
        let status: Vec<FactStatus> = props.clone().map(|p| root.status(task, p)).collect();
        let prop_lits: Vec<Lit> = props.map(|p| root.prop_lit(task, p, 0)).collect();
        let marginals = status
            .iter()
            .zip(&prop_lits)
            .map(|(s, l)| match s {
                FactStatus::Known => 1.0,
                FactStatus::Unknown => crate::wmc::wmc(&phi, &[*l], wmc),
                _ => 0.0,
            })
            .collect();
        PrpgContext {
            relaxed: task
                .actions
                .iter()
                .map(|a| relax_action(task, a, ConditionPick::First))
                .collect(),
            wmc,
            horizon_cap: DEFAULT_HORIZON_CAP,
            solver: SatSolver::from_cnf(&phi),
            prop_lits,
            marginals,
            init_known: status.iter().map(|s| *s == FactStatus::Known).collect(),
            init_unknown: status.iter().map(|s| *s == FactStatus::Unknown).collect(),
            phi,
            implied_cache: HashMap::new(),
        }
    }

    /// State proposition of `p` in the initial layer of φ(N_bI).
    pub fn prop_lit(&self, p: PropId) -> Lit {
        self.prop_lits[p.idx()]
    }

    /// Initial probability of `p`.
    pub fn marginal(&self, p: PropId) -> f64 {
        self.marginals[p.idx()]
    }

    /// Probability of a CNF over initial-layer literals under b_I.
    pub fn prob_of(&self, clauses: &[Vec<Lit>]) -> f64 {
        let mut cnf = self.phi.clone();
        for c in clauses {
            cnf.add_clause(c);
        }
        wmc(&cnf, &[], self.wmc)
    }

    /// Whether φ(N_bI) implies the disjunction of the given initial facts.
    fn implies_any(&mut self, facts: Vec<PropId>) -> bool {
        if facts.is_empty() {
            return false;
        }
        if let Some(r) = self.implied_cache.get(&facts) {
            return *r;
        }
        let assumptions: Vec<Lit> = facts.iter().map(|p| !self.prop_lits[p.idx()]).collect();
        let r = !self.solver.solve(&assumptions);
        self.implied_cache.insert(facts, r);
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrpgOptions {
    pub goal: Vec<PropId>,
    pub theta: f64,
    /// Restricts the future layers to these actions.
    pub actions: Option<Vec<ActionId>>,
}

impl PrpgOptions {
    pub fn for_task(task: &PlanningTask) -> Self {
        PrpgOptions {
            goal: task.goal.clone(),
            theta: task.theta,
            actions: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrpgStatus {
    /// get_p(T, G) ≥ θ.
    Reached { horizon: usize },
    /// Fixpoint without reaching θ, or the horizon cap was hit.
    Failed { capped: bool },
}

#[derive(Clone, Debug)]
pub struct Prpg {
    /// Number of past layers m.
    pub past: usize,
    pub layers: Vec<Layer>,
    pub instances: Vec<EffectInstance>,
    pub chance: Vec<ChanceNode>,
    /// get_p(t, G) per layer where it was evaluated.
    pub probs: Vec<Option<f64>>,
    pub status: Option<PrpgStatus>,
}

fn is_det(outcomes: &[crate::task::Outcome]) -> bool {
    outcomes.len() == 1 && outcomes[0].prob >= 1.0 - PROB_TOL
}

impl Prpg {
    /// Layer −m plus the replayed past layers of `plan`.
    pub fn start(ctx: &mut PrpgContext, task: &PlanningTask, plan: &[ActionId]) -> Prpg {
        let n = task.num_props();
        let mut first = Layer {
            known: ctx.init_known.clone(),
            unknown: ctx.init_unknown.clone(),
            ..Layer::default()
        };
        for i in 0..n {
            if first.unknown[i] {
                let p = PropId(i as u32);
                first.supports.insert(p, Arc::new(vec![Leaf::Fact(p)]));
            }
        }
        let mut g = Prpg {
            past: plan.len(),
            layers: vec![first],
            instances: Vec::new(),
            chance: Vec::new(),
            probs: vec![None],
            status: None,
        };
        for a in plan {
            g.build_timestep(ctx, &[*a]);
        }
        g
    }

    /// Layer index of time `t`.
    pub fn layer(&self, t: isize) -> usize {
        let l = t + self.past as isize;
        assert!(l >= 0, "time {t} before the initial layer");
        l as usize
    }

    pub fn time(&self, layer: usize) -> isize {
        layer as isize - self.past as isize
    }

    pub fn last_layer(&self) -> usize {
        self.layers.len() - 1
    }

    /// Horizon T when the build reached θ.
    pub fn horizon(&self) -> Option<usize> {
        match self.status {
            Some(PrpgStatus::Reached { horizon }) => Some(horizon),
            _ => None,
        }
    }

    pub fn is_known(&self, layer: usize, p: PropId) -> bool {
        self.layers[layer].known[p.idx()]
    }

    pub fn is_unknown(&self, layer: usize, p: PropId) -> bool {
        self.layers[layer].unknown[p.idx()]
    }

    pub fn known_facts(&self, layer: usize) -> Vec<PropId> {
        Self::set_of(&self.layers[layer].known)
    }

    pub fn unknown_facts(&self, layer: usize) -> Vec<PropId> {
        Self::set_of(&self.layers[layer].unknown)
    }

    fn set_of(v: &[bool]) -> Vec<PropId> {
        v.iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| PropId(i as u32))
            .collect()
    }

    /// Future-layer actions whose preconditions are known at `layer`.
    pub fn applicable(&self, ctx: &PrpgContext, layer: usize, allowed: Option<&[ActionId]>) -> Vec<ActionId> {
        let known = &self.layers[layer].known;
        let ok = |a: &ActionId| ctx.relaxed[a.idx()].pre.iter().all(|p| known[p.idx()]);
        match allowed {
            Some(list) => list.iter().copied().filter(ok).collect(),
            None => (0..ctx.relaxed.len() as u32).map(ActionId).filter(ok).collect(),
        }
    }

    /// Appends layer `k + 1` induced by `actions` at the last layer `k`.
    pub fn build_timestep(&mut self, ctx: &mut PrpgContext, actions: &[ActionId]) {
        let k = self.last_layer();
        self.layers[k].actions = actions.to_vec();
        let n = self.layers[k].known.len();
        let mut known = self.layers[k].known.clone();
        let cur_known = &self.layers[k].known;
        let cur_unknown = &self.layers[k].unknown;
        for a in actions {
            for e in &ctx.relaxed[a.idx()].effects {
                let cond_known = e.condition.first().map_or(true, |c| cur_known[c.idx()]);
                if cond_known && is_det(&e.outcomes) {
                    for p in &e.outcomes[0].add {
                        known[p.idx()] = true;
                    }
                }
            }
        }

        let mut achievers: HashMap<PropId, Vec<usize>> = HashMap::new();
        let mut conds: HashMap<PropId, Vec<usize>> = HashMap::new();
        let mut new_inst = |this: &mut Prpg,
                            source: Source,
                            cond: Option<PropId>,
                            outs: Vec<(f64, Vec<PropId>)>,
                            achievers: &mut HashMap<PropId, Vec<usize>>| {
            let id = this.instances.len();
            let mut outcomes = Vec::with_capacity(outs.len());
            for (j, (prob, adds)) in outs.into_iter().enumerate() {
                let c = this.chance.len();
                let adds: Vec<PropId> = adds.into_iter().filter(|p| !known[p.idx()]).collect();
                for p in &adds {
                    achievers.entry(*p).or_default().push(c);
                }
                this.chance.push(ChanceNode {
                    inst: id,
                    outcome: j,
                    prob,
                    adds,
                });
                outcomes.push(c);
            }
            this.instances.push(EffectInstance {
                layer: k,
                source,
                cond,
                outcomes,
            });
            if let Some(c) = cond {
                conds.entry(c).or_default().push(id);
            }
        };

        let cur_unknown = cur_unknown.clone();
        let cur_known = cur_known.clone();
        for i in 0..n {
            let p = PropId(i as u32);
            if cur_unknown[i] && !known[i] {
                new_inst(self, Source::Noop(p), Some(p), vec![(1.0, vec![p])], &mut achievers);
            }
        }
        for a in actions {
            for (ei, e) in ctx.relaxed[a.idx()].effects.iter().enumerate() {
                let cond = e.condition.first().copied();
                let cond_known = cond.map_or(true, |c| cur_known[c.idx()]);
                if !cond_known && !cond.is_some_and(|c| cur_unknown[c.idx()]) {
                    continue;
                }
                if cond_known && is_det(&e.outcomes) {
                    continue;
                }
                if e.outcomes.iter().all(|o| o.add.iter().all(|p| known[p.idx()])) {
                    continue;
                }
                let mut outs: Vec<(f64, Vec<PropId>)> =
                    e.outcomes.iter().map(|o| (o.prob, o.add.clone())).collect();
                let total: f64 = outs.iter().map(|o| o.0).sum();
                if total < 1.0 - PROB_TOL {
                    outs.push((1.0 - total, Vec::new()));
                }
                let source = Source::Action { action: *a, effect: ei };
                new_inst(self, source, if cond_known { None } else { cond }, outs, &mut achievers);
            }
        }

        let mut unknown = vec![false; n];
        for p in achievers.keys() {
            unknown[p.idx()] = true;
        }
        for (p, list) in achievers.iter_mut() {
            list.sort_unstable();
            debug_assert!(!known[p.idx()]);
        }
        self.layers.push(Layer {
            known,
            unknown,
            actions: Vec::new(),
            achievers,
            conds: HashMap::new(),
            supports: HashMap::new(),
        });
        self.layers[k].conds = conds;
        self.probs.push(None);

        let next = k + 1;
        let mut candidates: Vec<PropId> = self.layers[next].achievers.keys().copied().collect();
        candidates.sort_unstable();
        for p in candidates {
            let (support, fresh) = match self.noop_only(next, p) {
                Some(s) => (s, false),
                None => {
                    let w = self.weights(next, p, &HashSet::new());
                    (Arc::new(self.support_of(&w)), true)
                }
            };
            if fresh && self.implied(ctx, &support) {
                self.layers[next].known[p.idx()] = true;
                self.layers[next].unknown[p.idx()] = false;
            }
            self.layers[next].supports.insert(p, support);
        }
    }

    /// Support of `p` at `layer` when its only achiever is its own NOOP
    /// from an unknown `p` one layer below: identical to the one below.
    fn noop_only(&self, layer: usize, p: PropId) -> Option<Arc<Vec<Leaf>>> {
        let ach = &self.layers[layer].achievers[&p];
        if ach.len() != 1 {
            return None;
        }
        let inst = &self.instances[self.chance[ach[0]].inst];
        if inst.source != Source::Noop(p) {
            return None;
        }
        self.layers[layer - 1].supports.get(&p).cloned()
    }

    /// Φ ⊨ ∨ support, decomposed over the independent outcome groups.
    fn implied(&self, ctx: &mut PrpgContext, support: &[Leaf]) -> bool {
        let mut facts = Vec::new();
        let mut per_inst: HashMap<usize, usize> = HashMap::new();
        for l in support {
            match l {
                Leaf::Fact(p) => facts.push(*p),
                Leaf::Chance(c) => *per_inst.entry(self.chance[*c].inst).or_default() += 1,
            }
        }
        if per_inst
            .iter()
            .any(|(i, cnt)| *cnt == self.instances[*i].outcomes.len())
        {
            return true;
        }
        facts.sort_unstable();
        ctx.implies_any(facts)
    }

    /// Backward weight propagation from `p` at `layer` over the graph
    /// minus the effect instances in `disabled`.
    pub fn weights(&self, layer: usize, p: PropId, disabled: &HashSet<usize>) -> Weights {
        let mut facts: HashMap<(usize, PropId), W> = HashMap::new();
        let mut chance: BTreeMap<usize, W> = BTreeMap::new();
        facts.insert((layer, p), W { value: 1.0, certain: true });
        let mut cur: BTreeSet<PropId> = BTreeSet::from([p]);
        for k in (0..layer).rev() {
            let mut nodes: BTreeSet<usize> = BTreeSet::new();
            for q in &cur {
                if let Some(list) = self.layers[k + 1].achievers.get(q) {
                    nodes.extend(list.iter().filter(|c| !disabled.contains(&self.chance[**c].inst)));
                }
            }
            let mut below: BTreeSet<PropId> = BTreeSet::new();
            for c in nodes {
                let node = &self.chance[c];
                let mut alpha = 1.0;
                let mut certain = false;
                for r in &node.adds {
                    if let Some(w) = facts.get(&(k + 1, *r)) {
                        alpha *= 1.0 - w.value;
                        certain |= w.certain;
                    }
                }
                let value = if certain { node.prob } else { node.prob * (1.0 - alpha) };
                chance.insert(c, W { value, certain });
                if let Some(q) = self.instances[node.inst].cond {
                    below.insert(q);
                }
            }
            for q in &below {
                let mut alpha = 1.0;
                let mut certain = false;
                for i in &self.layers[k].conds[q] {
                    if disabled.contains(i) {
                        continue;
                    }
                    let inst = &self.instances[*i];
                    let mut sum = 0.0;
                    let mut all = true;
                    let mut any = false;
                    for c in &inst.outcomes {
                        match chance.get(c) {
                            Some(w) => {
                                sum += w.value;
                                all &= w.certain;
                                any = true;
                            }
                            None => all = false,
                        }
                    }
                    if any {
                        alpha *= (1.0 - sum).clamp(0.0, 1.0);
                        certain |= all;
                    }
                }
                let value = if certain { 1.0 } else { 1.0 - alpha };
                facts.insert((k, *q), W { value, certain });
            }
            cur = below;
        }
        Weights { facts, chance }
    }

    /// Zero in-degree nodes of the weighted subgraph: initial facts and
    /// chance nodes of known-condition effects.
    pub fn leaves(&self, w: &Weights) -> Vec<Leaf> {
        let mut out: Vec<Leaf> = w
            .facts
            .keys()
            .filter(|(l, _)| *l == 0)
            .map(|(_, p)| Leaf::Fact(*p))
            .collect();
        out.extend(
            w.chance
                .keys()
                .filter(|c| self.instances[self.chance[**c].inst].cond.is_none())
                .map(|c| Leaf::Chance(*c)),
        );
        out.sort_unstable();
        out
    }

    pub fn support_of(&self, w: &Weights) -> Vec<Leaf> {
        self.leaves(w)
            .into_iter()
            .filter(|l| w.leaf(*l).certain)
            .collect()
    }

    pub fn support(&self, layer: usize, p: PropId) -> Option<&[Leaf]> {
        self.layers[layer].supports.get(&p).map(|s| s.as_slice())
    }

    /// Initial-layer facts of the support of `p` at `layer`.
    pub fn support_projection(&self, layer: usize, p: PropId) -> Vec<PropId> {
        self.support(layer, p)
            .unwrap_or(&[])
            .iter()
            .filter_map(|l| match l {
                Leaf::Fact(q) => Some(*q),
                Leaf::Chance(_) => None,
            })
            .collect()
    }

    /// Goal-probability estimate at `layer`.
    pub fn get_p(&self, ctx: &PrpgContext, layer: usize, goal: &[PropId]) -> f64 {
        self.get_p_with(ctx, layer, goal, &HashSet::new())
    }

    /// `get_p` over the graph minus the effect instances in `disabled`.
    pub fn get_p_with(&self, ctx: &PrpgContext, layer: usize, goal: &[PropId], disabled: &HashSet<usize>) -> f64 {
        self.estimate(ctx, layer, goal, disabled, false)
    }

    /// Variant of `get_p` in which an initial-fact leaf counts for a goal
    /// only when it holds and its own weight chance fires, so a leaf that
    /// holds never lowers the estimate.
    pub fn get_p_any_leaf(&self, ctx: &PrpgContext, layer: usize, goal: &[PropId]) -> f64 {
        self.estimate(ctx, layer, goal, &HashSet::new(), true)
    }

    fn estimate(&self, ctx: &PrpgContext, layer: usize, goal: &[PropId], disabled: &HashSet<usize>, any_leaf: bool) -> f64 {
        let l = &self.layers[layer];
        if goal.iter().any(|g| !l.known[g.idx()] && !l.unknown[g.idx()]) {
            return 0.0;
        }
        let open: Vec<PropId> = goal.iter().copied().filter(|g| !l.known[g.idx()]).collect();
        if open.is_empty() {
            return 1.0;
        }
        let mut cnf = ctx.phi.clone();
        let mut groups: HashMap<usize, Vec<Var>> = HashMap::new();
        for g in open {
            let w = self.weights(layer, g, disabled);
            let leaves = self.leaves(&w);
            if leaves.is_empty() {
                return 0.0;
            }
            let mut clause = Vec::with_capacity(leaves.len());
            for leaf in leaves {
                match leaf {
                    Leaf::Fact(p) => {
                        let lit = ctx.prop_lits[p.idx()];
                        let lw = w.leaf(leaf);
                        if lw.certain || lw.value >= 1.0 {
                            clause.push(lit);
                            continue;
                        }
                        let name = format!("<{}_{}>", p.0, g.0);
                        let v = cnf.new_var(VarKind::Chance, (lw.value, 1.0 - lw.value), name);
                        if any_leaf {
                            let z = cnf.new_var(VarKind::Chance, (1.0, 1.0), format!("fire<{}_{}>", p.0, g.0));
                            cnf.add_clause(&[z.neg(), lit]);
                            cnf.add_clause(&[z.neg(), v.pos()]);
                            cnf.add_clause(&[z.pos(), !lit, v.neg()]);
                            clause.push(z.pos());
                        } else {
                            clause.push(lit);
                            cnf.add_clause(&[!lit, v.pos()]);
                        }
                    }
                    Leaf::Chance(c) => {
                        let node = &self.chance[c];
                        let vars = groups
                            .entry(node.inst)
                            .or_insert_with(|| self.group_vars(&mut cnf, node.inst));
                        clause.push(vars[node.outcome].pos());
                    }
                }
            }
            cnf.add_clause(&clause);
        }
        wmc(&cnf, &[], ctx.wmc)
    }

    /// Exactly-one group over the outcomes of a known-condition effect.
    fn group_vars(&self, cnf: &mut WeightedCnf, inst: usize) -> Vec<Var> {
        let outs = &self.instances[inst].outcomes;
        let vars: Vec<Var> = outs
            .iter()
            .map(|c| cnf.new_var(VarKind::Chance, (self.chance[*c].prob, 1.0), format!("eps{c}")))
            .collect();
        cnf.add_clause(&vars.iter().map(|v| v.pos()).collect::<Vec<_>>());
        for i in 0..vars.len() {
            for j in i + 1..vars.len() {
                cnf.add_clause(&[vars[i].neg(), vars[j].neg()]);
            }
        }
        vars
    }

    /// Φ as a formula: φ(N_bI) plus every exactly-one group.
    pub fn phi(&self, ctx: &PrpgContext) -> WeightedCnf {
        let mut cnf = ctx.phi.clone();
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.cond.is_none() {
                self.group_vars(&mut cnf, i);
            }
        }
        cnf
    }

    /// The fixpoint test between the last two layers.
    fn stagnated(&self, ctx: &PrpgContext, prev: usize) -> bool {
        let (a, b) = (&self.layers[prev], &self.layers[prev + 1]);
        if a.known != b.known || a.unknown != b.unknown {
            return false;
        }
        let same_p = match (self.probs[prev], self.probs[prev + 1]) {
            (Some(x), Some(y)) => (x - y).abs() <= P_EQ_TOL,
            _ => false,
        };
        let unknown = Self::set_of(&b.unknown);
        same_p
            && unknown
                .iter()
                .all(|p| self.support_projection(prev, *p) == self.support_projection(prev + 1, *p))
            // A fact can gain achievers whose leaves are all chance nodes,
            // which only shows in the goal estimate one layer later.
            && unknown.iter().all(|p| {
                let x = self.get_p(ctx, prev, &[*p]);
                let y = self.get_p(ctx, prev + 1, &[*p]);
                (x - y).abs() <= P_EQ_TOL
            })
    }

    pub fn describe_node(&self, task: &PlanningTask, c: usize) -> String {
        let node = &self.chance[c];
        let inst = &self.instances[node.inst];
        let src = match inst.source {
            Source::Noop(p) => format!("noop-{}", task.prop(p).name),
            Source::Action { action, effect } => format!("{}#e{}", task.action(action).name, effect),
        };
        format!("{src}/o{}({})", node.outcome, self.time(inst.layer))
    }

    /// Text form of the implication graph, layer by layer.
    pub fn dump(&self, task: &PlanningTask) -> String {
        let names = |v: Vec<PropId>| {
            v.iter()
                .map(|p| task.prop(*p).name.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        for k in 0..self.layers.len() {
            let t = self.time(k);
            let _ = writeln!(
                out,
                "layer {t}: P={{{}}} uP={{{}}}",
                names(self.known_facts(k)),
                names(self.unknown_facts(k))
            );
            for inst in self.instances.iter().filter(|i| i.layer == k) {
                for c in &inst.outcomes {
                    let node = &self.chance[*c];
                    let from = match inst.cond {
                        Some(q) => format!("{}({t})", task.prop(q).name),
                        None => "Phi".to_string(),
                    };
                    let to: Vec<String> = node
                        .adds
                        .iter()
                        .map(|p| format!("{}({})", task.prop(*p).name, t + 1))
                        .collect();
                    let _ = writeln!(
                        out,
                        "  {} w={} : {from} -> [{}]",
                        self.describe_node(task, *c),
                        node.prob,
                        to.join(",")
                    );
                }
            }
            if let Some(p) = self.probs[k] {
                let _ = writeln!(out, "  get_p={p}");
            }
        }
        out
    }
}

/// Builds the PRPG for the belief reached by `plan`.
pub fn build_prpg(ctx: &mut PrpgContext, task: &PlanningTask, plan: &[ActionId], opts: &PrpgOptions) -> Prpg {
    let mut g = Prpg::start(ctx, task, plan);
    let mut k = g.last_layer();
    g.probs[k] = Some(g.get_p(ctx, k, &opts.goal));
    loop {
        let p = g.probs[k].unwrap();
        if p >= opts.theta - THETA_TOL {
            g.status = Some(PrpgStatus::Reached { horizon: k - g.past });
            return g;
        }
        if k - g.past >= ctx.horizon_cap {
            g.status = Some(PrpgStatus::Failed { capped: true });
            return g;
        }
        let actions = g.applicable(ctx, k, opts.actions.as_deref());
        g.build_timestep(ctx, &actions);
        g.probs[k + 1] = Some(g.get_p(ctx, k + 1, &opts.goal));
        if g.stagnated(ctx, k) {
            let a = g.get_p_any_leaf(ctx, k + 1, &opts.goal);
            if a >= opts.theta - THETA_TOL {
                g.status = Some(PrpgStatus::Reached { horizon: k + 1 - g.past });
                return g;
            }
            if (a - g.get_p_any_leaf(ctx, k, &opts.goal)).abs() <= P_EQ_TOL {
                g.status = Some(PrpgStatus::Failed { capped: false });
                return g;
            }
        }
        k += 1;
    }
}

/// Builds exactly `horizon` future layers, ignoring both termination tests.
/// `per_layer` optionally fixes the candidate actions of each future layer.
pub fn build_to_horizon(
    ctx: &mut PrpgContext,
    task: &PlanningTask,
    plan: &[ActionId],
    horizon: usize,
    per_layer: Option<&[Vec<ActionId>]>,
) -> Prpg {
    let mut g = Prpg::start(ctx, task, plan);
    for t in 0..horizon {
        let k = g.last_layer();
        let allowed = per_layer.map(|v| v.get(t).map(|x| x.as_slice()).unwrap_or(&[]));
        let actions = g.applicable(ctx, k, allowed);
        g.build_timestep(ctx, &actions);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::fixtures::RUNNING_EXAMPLE;
    use crate::task::parse_task;

    fn setup(theta: f64) -> (PlanningTask, PrpgContext, PrpgOptions, Vec<ActionId>) {
        let task = parse_task(RUNNING_EXAMPLE).unwrap();
        let ctx = PrpgContext::new(&task, &BeliefConfig::default());
        let mbr = task.action_by_name("move-b-right").unwrap();
        let ml = task.action_by_name("move-left").unwrap();
        let opts = PrpgOptions {
            goal: vec![task.prop_by_name("r1").unwrap(), task.prop_by_name("b2").unwrap()],
            theta,
            actions: Some(vec![mbr, ml]),
        };
        (task, ctx, opts, vec![mbr])
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn worked_example_probabilities() {
        let (task, mut ctx, opts, plan) = setup(0.9);
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        assert_eq!(g.status, Some(PrpgStatus::Reached { horizon: 2 }));
        let p: Vec<f64> = (0..3).map(|t| g.probs[g.layer(t)].unwrap()).collect();
        assert!(close(p[0], 0.63), "{p:?}");
        assert!(close(p[1], 0.899), "{p:?}");
        assert!(close(p[2], 0.913), "{p:?}");
        let r1 = task.prop_by_name("r1").unwrap();
        assert!(!g.is_known(g.layer(0), r1));
        assert!(g.is_known(g.layer(1), r1));
    }

    #[test]
    fn worked_example_weights() {
        let (task, mut ctx, opts, plan) = setup(0.9);
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        let p = |n: &str| task.prop_by_name(n).unwrap();
        let none = HashSet::new();
        let w = g.weights(g.layer(0), p("r2"), &none);
        assert!(close(w.fact(0, p("r1")).unwrap(), 0.9));
        let w = g.weights(g.layer(0), p("b2"), &none);
        assert!(close(w.fact(0, p("r1")).unwrap(), 0.7));
        assert!(w.fact(0, p("r2")).is_none());
        let w = g.weights(g.layer(1), p("b2"), &none);
        assert!(close(w.fact(0, p("r1")).unwrap(), 0.91));
        let s = g.support(g.layer(1), p("r1")).unwrap();
        assert_eq!(s, &[Leaf::Fact(p("r1")), Leaf::Fact(p("r2"))]);
        let s = g.support(g.layer(2), p("b2")).unwrap();
        assert_eq!(s.len(), 2);
        assert!(matches!(s[1], Leaf::Chance(_)));
    }

    #[test]
    fn low_threshold_stops_at_zero() {
        let (task, mut ctx, opts, plan) = setup(0.25);
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        assert_eq!(g.status, Some(PrpgStatus::Reached { horizon: 0 }));
    }

    #[test]
    fn unreachable_goal_fails() {
        let task = parse_task(
            "vars:\n p = p\n q = q\nbn:\n node p\n row *: p=0.5, !p=0.5\n node q\n row *: q=0, !q=1\n\
             actions:\n action a\n  effect when p:\n   outcome 1: add=p\ngoal: q\ntheta: 0.5\n",
        )
        .unwrap();
        let mut ctx = PrpgContext::new(&task, &BeliefConfig::default());
        let g = build_prpg(&mut ctx, &task, &[], &PrpgOptions::for_task(&task));
        assert_eq!(g.status, Some(PrpgStatus::Failed { capped: false }));
    }

    #[test]
    fn phi_gains_group_at_layer_one() {
        let (task, mut ctx, opts, plan) = setup(0.9);
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        let groups: Vec<&EffectInstance> = g.instances.iter().filter(|i| i.cond.is_none()).collect();
        assert_eq!(groups.len(), 1);
        assert_eq!(g.time(groups[0].layer), 1);
        assert_eq!(groups[0].outcomes.len(), 3);
        let d = g.dump(&task);
        assert!(d.contains("move-b-right#e0/o0(-1)"), "{d}");
    }

    #[test]
    fn decomposed_implication_matches_sat() {
        let (task, mut ctx, opts, plan) = setup(0.9);
        let g = build_prpg(&mut ctx, &task, &plan, &opts);
        let phi = g.phi(&ctx);
        let base = ctx.phi.num_vars();
        let mut group_var = HashMap::new();
        let mut next = base;
        for inst in g.instances.iter().filter(|i| i.cond.is_none()) {
            for c in &inst.outcomes {
                group_var.insert(*c, Var(next as u32));
                next += 1;
            }
        }
        for k in 1..g.layers.len() {
            for (p, s) in &g.layers[k].supports {
                let neg: Vec<Lit> = s
                    .iter()
                    .map(|l| match l {
                        Leaf::Fact(q) => !ctx.prop_lits[q.idx()],
                        Leaf::Chance(c) => group_var[c].neg(),
                    })
                    .collect();
                let implied = !s.is_empty() && !crate::wmc::sat(&phi, &neg);
                assert_eq!(implied, g.is_known(k, *p), "{} at {k}", task.prop(*p).name);
            }
        }
    }
}
