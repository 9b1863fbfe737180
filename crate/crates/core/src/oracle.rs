//! Exact explicit-distribution semantics: the ground truth every implicit
//! component is tested against. Also hosts the relaxed-execution oracle and
//! the Monte Carlo simulator used by the validator.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::task::{Action, ActionId, Effect, Outcome, PlanningTask, PropId, VarId};

pub const DEFAULT_WORLD_CAP: usize = 1 << 24;
const RELAXED_STATE_CAP: usize = 1 << 20;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("world count {count} exceeds enumeration cap {cap}")]
    CapExceeded { count: u128, cap: usize },
    #[error("action `{action}` at step {step} is not applicable")]
    NotApplicable { step: usize, action: String },
    #[error("relaxed oracle supports at most 128 propositions, task has {0}")]
    TooManyProps(usize),
}

/// One value index per state variable.
pub type World = Vec<u16>;

#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitBelief {
    pub dist: BTreeMap<World, f64>,
}

impl ExplicitBelief {
    pub fn total(&self) -> f64 {
        self.dist.values().sum()
    }

    /// Probability of a conjunction of propositions.
    pub fn prob(&self, task: &PlanningTask, lits: &[PropId]) -> f64 {
        self.dist
            .iter()
            .filter(|(w, _)| holds(task, w, lits))
            .map(|(_, p)| *p)
            .sum()
    }

    /// Entries as `(proposition names, probability)` for readable asserts.
    pub fn named(&self, task: &PlanningTask) -> Vec<(Vec<String>, f64)> {
        self.dist
            .iter()
            .map(|(w, p)| {
                let names = w
                    .iter()
                    .enumerate()
                    .map(|(v, k)| task.prop(task.vars[v].domain[*k as usize]).name.clone())
                    .collect();
                (names, *p)
            })
            .collect()
    }
}

pub fn holds(task: &PlanningTask, w: &[u16], lits: &[PropId]) -> bool {
    lits.iter().all(|p| {
        let prop = task.prop(*p);
        w[prop.var.idx()] as usize == prop.index
    })
}

fn world_count(task: &PlanningTask) -> u128 {
    task.vars
        .iter()
        .fold(1u128, |acc, v| acc.saturating_mul(v.domain.len() as u128))
}

/// CPT entry for `var` taking value index `k` under the partial world `w`.
fn cpt_entry(task: &PlanningTask, var: VarId, w: &[u16], k: usize) -> f64 {
    let node = task.initial.node_of(var).expect("validated task has a CPT per variable");
    let row = node
        .rows
        .iter()
        .find(|r| holds(task, w, &r.condition))
        .expect("validated CPT covers every parent assignment");
    row.dist[k]
}

pub fn initial_belief(task: &PlanningTask) -> Result<ExplicitBelief, OracleError> {
    initial_belief_capped(task, DEFAULT_WORLD_CAP)
}

pub fn initial_belief_capped(task: &PlanningTask, cap: usize) -> Result<ExplicitBelief, OracleError> {
    let count = world_count(task);
    if count > cap as u128 {
        return Err(OracleError::CapExceeded { count, cap });
    }
    let order: Vec<VarId> = task
        .initial
        .topological_order()
        .expect("validated net is acyclic")
        .into_iter()
        .map(|i| task.initial.nodes[i].var)
        .collect();
    let mut dist = BTreeMap::new();
    let mut w = vec![0u16; task.vars.len()];
    fn rec(
        task: &PlanningTask,
        order: &[VarId],
        i: usize,
        w: &mut World,
        p: f64,
        dist: &mut BTreeMap<World, f64>,
    ) {
        if i == order.len() {
            dist.insert(w.clone(), p);
            return;
        }
        let v = order[i];
        for k in 0..task.var(v).domain.len() {
            w[v.idx()] = k as u16;
            let q = cpt_entry(task, v, w, k);
            if q > 0.0 {
                rec(task, order, i + 1, w, p * q, dist);
            }
        }
        w[v.idx()] = 0;
    }
    rec(task, &order, 0, &mut w, 1.0, &mut dist);
    Ok(ExplicitBelief { dist })
}

fn apply_outcome(task: &PlanningTask, w: &mut World, o: &Outcome) {
    for v in task.outcome_vars(o) {
        if let Some(p) = task.outcome_value(o, v) {
            w[v.idx()] = task.prop(p).index as u16;
        }
    }
}

/// Successor distribution of one world.
pub fn world_successors(task: &PlanningTask, w: &World, a: &Action) -> Vec<(World, f64)> {
    let firing: Vec<&Effect> = a
        .effects
        .iter()
        .filter(|e| holds(task, w, &e.condition))
        .collect();
    let mut out = vec![(w.clone(), 1.0)];
    for e in firing {
        let mut next = Vec::with_capacity(out.len() * e.outcomes.len());
        for (s, p) in &out {
            for o in &e.outcomes {
                let mut s2 = s.clone();
                apply_outcome(task, &mut s2, o);
                next.push((s2, p * o.prob));
            }
        }
        out = next;
    }
    out
}

pub fn apply_action(task: &PlanningTask, b: &ExplicitBelief, a: ActionId) -> Result<ExplicitBelief, OracleError> {
    apply_at(task, b, a, 0)
}

fn apply_at(task: &PlanningTask, b: &ExplicitBelief, a: ActionId, step: usize) -> Result<ExplicitBelief, OracleError> {
    let action = task.action(a);
    let mut dist = BTreeMap::new();
    for (w, p) in &b.dist {
        if *p <= 0.0 {
            continue;
        }
        if !holds(task, w, &action.pre) {
            return Err(OracleError::NotApplicable {
                step,
                action: action.name.clone(),
            });
        }
        for (s, q) in world_successors(task, w, action) {
            *dist.entry(s).or_insert(0.0) += p * q;
        }
    }
    Ok(ExplicitBelief { dist })
}

pub fn apply_sequence(task: &PlanningTask, b: &ExplicitBelief, seq: &[ActionId]) -> Result<ExplicitBelief, OracleError> {
    let mut cur = b.clone();
    for (i, a) in seq.iter().enumerate() {
        cur = apply_at(task, &cur, *a, i + 1)?;
    }
    Ok(cur)
}

pub fn goal_probability(task: &PlanningTask, b: &ExplicitBelief, goal: &[PropId]) -> f64 {
    b.prob(task, goal)
}

/// Exact probability that `plan` achieves the task goal, within the cap.
pub fn plan_probability(task: &PlanningTask, plan: &[ActionId], cap: usize) -> Result<f64, OracleError> {
    let b = initial_belief_capped(task, cap)?;
    let b = apply_sequence(task, &b, plan)?;
    Ok(goal_probability(task, &b, &task.goal))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConditionPick {
    #[default]
    First,
    Last,
}

/// The |+1 relaxation: deletes dropped, each condition cut to one literal.
/// A delete on a binary variable keeps the value it implies as an add.
pub fn relax_action(task: &PlanningTask, a: &Action, pick: ConditionPick) -> Action {
    Action {
        name: a.name.clone(),
        pre: a.pre.clone(),
        effects: a
            .effects
            .iter()
            .map(|e| Effect {
                condition: match pick {
                    ConditionPick::First => e.condition.first().copied().into_iter().collect(),
                    ConditionPick::Last => e.condition.last().copied().into_iter().collect(),
                },
                outcomes: e
                    .outcomes
                    .iter()
                    .map(|o| Outcome {
                        prob: o.prob,
                        add: task
                            .outcome_vars(o)
                            .into_iter()
                            .filter_map(|v| task.outcome_value(o, v))
                            .collect(),
                        del: Vec::new(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

type Facts = u128;

fn fact_bit(p: PropId) -> Facts {
    1u128 << p.0
}

fn facts_hold(s: Facts, lits: &[PropId]) -> bool {
    lits.iter().all(|p| s & fact_bit(*p) != 0)
}

/// Distributions over relaxed fact sets at layers `0..=past.len()+horizon`,
/// executing the relaxed `past` actions one per step and then, at every
/// later step, all relaxed actions whose preconditions hold with certainty.
pub fn relaxed_layers(
    task: &PlanningTask,
    past: &[ActionId],
    horizon: usize,
) -> Result<Vec<HashMap<Facts, f64>>, OracleError> {
    if task.num_props() > 128 {
        return Err(OracleError::TooManyProps(task.num_props()));
    }
    let relaxed: Vec<Action> = task
        .actions
        .iter()
        .map(|a| relax_action(task, a, ConditionPick::First))
        .collect();
    let b = initial_belief(task)?;
    let mut cur: HashMap<Facts, f64> = HashMap::new();
    for (w, p) in &b.dist {
        let mut s = 0;
        for (v, k) in w.iter().enumerate() {
            s |= fact_bit(task.vars[v].domain[*k as usize]);
        }
        *cur.entry(s).or_insert(0.0) += p;
    }
    let mut layers = vec![cur.clone()];
    for step in 0..past.len() + horizon {
        let actions: Vec<&Action> = if step < past.len() {
            vec![&relaxed[past[step].idx()]]
        } else {
            let known = cur.keys().fold(!0u128, |acc, s| acc & s);
            relaxed
                .iter()
                .filter(|a| facts_hold(known, &a.pre))
                .collect()
        };
        let mut next: HashMap<Facts, f64> = HashMap::new();
        for (s, p) in &cur {
            let mut acc: HashMap<Facts, f64> = HashMap::from([(*s, *p)]);
            for a in &actions {
                for e in &a.effects {
                    if !facts_hold(*s, &e.condition) {
                        continue;
                    }
                    let mut folded: HashMap<Facts, f64> = HashMap::new();
                    for (x, q) in &acc {
                        for o in &e.outcomes {
                            let add = o.add.iter().fold(0, |m, p| m | fact_bit(*p));
                            *folded.entry(x | add).or_insert(0.0) += q * o.prob;
                        }
                    }
                    acc = folded;
                    if acc.len() > RELAXED_STATE_CAP {
                        return Err(OracleError::CapExceeded {
                            count: acc.len() as u128,
                            cap: RELAXED_STATE_CAP,
                        });
                    }
                }
            }
            for (x, q) in acc {
                *next.entry(x).or_insert(0.0) += q;
            }
        }
        cur = next;
        layers.push(cur.clone());
    }
    Ok(layers)
}

/// Probability that all `targets` hold after relaxed `past` followed by
/// `horizon` steps of every certainly-applicable relaxed action.
pub fn relaxed_reach_probability(
    task: &PlanningTask,
    past: &[ActionId],
    horizon: usize,
    targets: &[PropId],
) -> Result<f64, OracleError> {
    let layers = relaxed_layers(task, past, horizon)?;
    Ok(layer_prob(layers.last().unwrap(), targets))
}

pub fn layer_prob(layer: &HashMap<Facts, f64>, targets: &[PropId]) -> f64 {
    layer
        .iter()
        .filter(|(s, _)| facts_hold(**s, targets))
        .map(|(_, p)| *p)
        .sum()
}

/// Result of a Monte Carlo run with a 99% Wilson interval.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub samples: usize,
    pub successes: usize,
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

const Z99: f64 = 2.575_829_303_548_901;

pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn sample_index<R: Rng>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

/// Samples trajectories of `plan`; a sampled world violating a precondition
/// is reported as an inapplicable step.
pub fn simulate(
    task: &PlanningTask,
    plan: &[ActionId],
    samples: usize,
    seed: u64,
) -> Result<McEstimate, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<VarId> = task
        .initial
        .topological_order()
        .expect("validated net is acyclic")
        .into_iter()
        .map(|i| task.initial.nodes[i].var)
        .collect();
    let mut successes = 0;
    let mut w: World = vec![0; task.vars.len()];
    for _ in 0..samples {
        for v in &order {
            let n = task.var(*v).domain.len();
            let probs: Vec<f64> = (0..n).map(|k| cpt_entry(task, *v, &w, k)).collect();
            w[v.idx()] = sample_index(&mut rng, probs.into_iter()) as u16;
        }
        for (step, a) in plan.iter().enumerate() {
            let action = task.action(*a);
            if !holds(task, &w, &action.pre) {
                return Err(OracleError::NotApplicable {
                    step: step + 1,
                    action: action.name.clone(),
                });
            }
            let firing: Vec<&Effect> = action
                .effects
                .iter()
                .filter(|e| holds(task, &w, &e.condition))
                .collect();
            for e in firing {
                let k = sample_index(&mut rng, e.outcomes.iter().map(|o| o.prob));
                apply_outcome(task, &mut w, &e.outcomes[k]);
            }
        }
        if holds(task, &w, &task.goal) {
            successes += 1;
        }
    }
    let (lo, hi) = wilson_interval(successes, samples, Z99);
    Ok(McEstimate {
        samples,
        successes,
        p_hat: if samples == 0 { 0.0 } else { successes as f64 / samples as f64 },
        lo,
        hi,
    })
}
