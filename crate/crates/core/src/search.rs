//! Forward search over implicit belief states: enforced hill-climbing
//! with a greedy best-first fallback, guided by the relaxed-plan length.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{BeliefConfig, BeliefNode};
use crate::extract::{extract_prplan, simple_extract};
use crate::oracle::{plan_probability, DEFAULT_WORLD_CAP};
use crate::prpg::{build_prpg, PrpgContext, PrpgOptions, PrpgStatus, DEFAULT_HORIZON_CAP};
use crate::task::{ActionId, PlanningTask, PropId, PROB_TOL};
use crate::wmc::{wmc, wmc_calls};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    EhcThenBfs,
    Ehc,
    Bfs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub horizon_cap: usize,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Depth of the breadth-first plateau search inside one EHC step.
    pub ehc_depth: usize,
    /// Best-first orders by g + h instead of h.
    pub g_plus_h: bool,
    /// Reserved; helpful-action pruning is not implemented.
    pub helpful_actions: bool,
    pub belief: BeliefConfig,
    /// World cap for the exact re-validation of a found plan.
    pub validate_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            strategy: Strategy::EhcThenBfs,
            horizon_cap: DEFAULT_HORIZON_CAP,
            node_limit: 1_000_000,
            time_limit: Some(Duration::from_secs(60)),
            ehc_depth: 6,
            g_plus_h: false,
            helpful_actions: false,
            belief: BeliefConfig::planner(),
            validate_cap: DEFAULT_WORLD_CAP,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SearchError {
    #[error("search limits must be positive")]
    InvalidLimits,
    #[error("helpful-action pruning is not supported")]
    HelpfulActionsUnsupported,
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.node_limit == 0 || self.horizon_cap == 0 || self.ehc_depth == 0 {
            return Err(SearchError::InvalidLimits);
        }
        if self.time_limit.is_some_and(|t| t.is_zero()) {
            return Err(SearchError::InvalidLimits);
        }
        if self.helpful_actions {
            return Err(SearchError::HelpfulActionsUnsupported);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchStatus {
    PlanFound,
    /// The heuristic proved at the root that no relaxed plan exists.
    ProvenUnsolvableAtRoot,
    ResourceExhausted,
    /// Every reachable belief was explored without reaching θ.
    Exhausted,
}

impl SearchStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchStatus::PlanFound => "plan-found",
            SearchStatus::ProvenUnsolvableAtRoot => "proven-unsolvable-at-root",
            SearchStatus::ResourceExhausted => "resource-exhausted",
            SearchStatus::Exhausted => "exhausted",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchStats {
    pub nodes_evaluated: usize,
    pub heuristic_calls: usize,
    pub wmc_calls: u64,
    pub horizon_capped: usize,
    pub wall: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub status: SearchStatus,
    pub plan: Vec<ActionId>,
    /// Goal probability of the final belief as computed by the search.
    pub probability: Option<f64>,
    /// Exact goal probability from the explicit oracle, when within caps.
    pub validated: Option<f64>,
    pub stats: SearchStats,
}

/// Relaxed-plan heuristic over belief nodes.
pub struct Heuristic {
    ctx: PrpgContext,
    simple: bool,
    pub calls: usize,
    pub capped: usize,
}

impl Heuristic {
    pub fn new(task: &PlanningTask, root: &BeliefNode, cfg: &SearchConfig) -> Self {
        let mut ctx = PrpgContext::from_root(task, root, cfg.belief.wmc);
        ctx.horizon_cap = cfg.horizon_cap;
        Heuristic {
            ctx,
            simple: task.is_effect_deterministic(),
            calls: 0,
            capped: 0,
        }
    }

    /// h(node): 0 iff the goal test holds, `None` when the PRPG fails.
    pub fn evaluate(&mut self, task: &PlanningTask, node: &BeliefNode) -> Option<usize> {
        if goal_reached(task, node) {
            return Some(0);
        }
        self.calls += 1;
        let plan = node.plan();
        let opts = PrpgOptions::for_task(task);
        let g = build_prpg(&mut self.ctx, task, &plan, &opts);
        match g.status {
            Some(PrpgStatus::Reached { .. }) => {}
            Some(PrpgStatus::Failed { capped }) => {
                self.capped += capped as usize;
                return None;
            }
            None => unreachable!("build_prpg always sets a status"),
        }
        let rp = if self.simple {
            simple_extract(&self.ctx, task, &g, &task.goal, task.theta)
        } else {
            extract_prplan(&self.ctx, task, &g, &plan, &task.goal, task.theta)
        };
        Some(rp.len().max(1))
    }
}

pub fn goal_reached(task: &PlanningTask, node: &BeliefNode) -> bool {
    node.goal_probability >= task.theta - PROB_TOL
}

const FINGERPRINT_SCALE: f64 = 1e9;

/// A belief node plus the data used for duplicate detection.
#[derive(Clone)]
struct Entry {
    node: Arc<BeliefNode>,
    fingerprint: i64,
    h: usize,
}

type Key = (Vec<u64>, i64);

fn dup_key(e: &Entry) -> Key {
    (e.node.dup_key(), e.fingerprint)
}

/// Fixed pseudo-random weights, one per proposition, for belief
/// fingerprints.
fn fingerprint_weights(task: &PlanningTask) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..task.num_props()).map(|_| rng.gen_range(0.5..1.5)).collect()
}

struct Searcher<'a> {
    task: &'a PlanningTask,
    cfg: &'a SearchConfig,
    heur: Heuristic,
    start: Instant,
    evaluated: usize,
    weights: Vec<f64>,
}

enum Step {
    Found(Entry),
    Failed,
    Limit,
}

impl<'a> Searcher<'a> {
    fn out_of_budget(&self) -> bool {
        self.evaluated >= self.cfg.node_limit
            || self.cfg.time_limit.is_some_and(|t| self.start.elapsed() >= t)
    }

    /// Quantized log of E[Π r(v)] over the belief, with a fixed random
    /// weight r per proposition: equal distributions give equal values.
    fn fingerprint(&self, node: &BeliefNode) -> i64 {
        if node.possible.iter().all(|p| p.iter().filter(|b| **b).count() <= 1) {
            return 0;
        }
        let mut cnf = node.formula();
        for p in 0..self.task.num_props() {
            let prop = self.task.prop(PropId(p as u32));
            if node.possible[prop.var.idx()][prop.index] {
                let x = node.layer_vars[prop.var.idx()][prop.index];
                cnf.weights[x.idx()].0 *= self.weights[p];
            }
        }
        let fp = wmc(&cnf, &[], self.cfg.belief.wmc);
        (fp.ln() * FINGERPRINT_SCALE).round() as i64
    }

    /// Applicable actions of `e` in declaration order.
    fn applicable(&self, e: &Entry) -> Vec<ActionId> {
        (0..self.task.actions.len() as u32)
            .map(ActionId)
            .filter(|a| e.node.is_applicable(self.task, *a))
            .collect()
    }

    /// The successor of `e` by `a` unless it duplicates a seen belief or
    /// has infinite h.
    fn child(&mut self, e: &Entry, a: ActionId, seen: &mut HashSet<Key>) -> Option<Entry> {
        let node = e
            .node
            .successor(self.task, a, &self.cfg.belief)
            .expect("applicability checked");
        let mut child = Entry {
            fingerprint: self.fingerprint(&node),
            node,
            h: 0,
        };
        if !seen.insert(dup_key(&child)) {
            return None;
        }
        self.evaluated += 1;
        child.h = self.heur.evaluate(self.task, &child.node)?;
        Some(child)
    }

    fn ehc(&mut self, root: Entry) -> Step {
        let mut cur = root;
        let mut seen: HashSet<Key> = HashSet::new();
        seen.insert(dup_key(&cur));
        loop {
            if cur.h == 0 {
                return Step::Found(cur);
            }
            let mut queue: VecDeque<(Entry, usize)> = VecDeque::from([(cur.clone(), 0)]);
            let mut better = None;
            'bfs: while let Some((e, depth)) = queue.pop_front() {
                for a in self.applicable(&e) {
                    if self.out_of_budget() {
                        return Step::Limit;
                    }
                    let Some(s) = self.child(&e, a, &mut seen) else {
                        continue;
                    };
                    if s.h < cur.h {
                        better = Some(s);
                        break 'bfs;
                    }
                    if depth + 1 < self.cfg.ehc_depth {
                        queue.push_back((s, depth + 1));
                    }
                }
            }
            match better {
                Some(b) => cur = b,
                None => return Step::Failed,
            }
        }
    }

    fn best_first(&mut self, root: Entry) -> Step {
        let mut heap = BinaryHeap::new();
        let mut store: Vec<Entry> = Vec::new();
        let mut seen: HashSet<Key> = HashSet::new();
        seen.insert(dup_key(&root));
        let prio = |e: &Entry, g_plus_h: bool| e.h + if g_plus_h { e.node.depth } else { 0 };
        heap.push(Reverse((prio(&root, self.cfg.g_plus_h), 0usize)));
        store.push(root);
        while let Some(Reverse((_, id))) = heap.pop() {
            let e = store[id].clone();
            if e.h == 0 {
                return Step::Found(e);
            }
            for a in self.applicable(&e) {
                if self.out_of_budget() {
                    return Step::Limit;
                }
                if let Some(s) = self.child(&e, a, &mut seen) {
                    heap.push(Reverse((prio(&s, self.cfg.g_plus_h), store.len())));
                    store.push(s);
                }
            }
        }
        Step::Failed
    }
}

/// Searches for a plan reaching the task's θ.
pub fn plan(task: &PlanningTask, cfg: &SearchConfig) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let start = Instant::now();
    let wmc0 = wmc_calls();
    let root = BeliefNode::root(task, &cfg.belief);
    let mut s = Searcher {
        task,
        cfg,
        heur: Heuristic::new(task, &root, cfg),
        start,
        evaluated: 1,
        weights: fingerprint_weights(task),
    };
    let h = s.heur.evaluate(task, &root);
    let finish = |s: &Searcher, status: SearchStatus, found: Option<&Arc<BeliefNode>>| {
        let plan = found.map(|n| n.plan()).unwrap_or_default();
        let validated = match found {
            Some(_) => plan_probability(task, &plan, cfg.validate_cap).ok(),
            None => None,
        };
        SearchResult {
            status,
            probability: found.map(|n| n.goal_probability),
            validated,
            plan,
            stats: SearchStats {
                nodes_evaluated: s.evaluated,
                heuristic_calls: s.heur.calls,
                wmc_calls: wmc_calls() - wmc0,
                horizon_capped: s.heur.capped,
                wall: start.elapsed(),
            },
        }
    };
    let Some(h) = h else {
        return Ok(finish(&s, SearchStatus::ProvenUnsolvableAtRoot, None));
    };
    let entry = Entry {
        fingerprint: s.fingerprint(&root),
        node: root,
        h,
    };
    let mut step = Step::Failed;
    if matches!(cfg.strategy, Strategy::EhcThenBfs | Strategy::Ehc) {
        step = s.ehc(entry.clone());
    }
    if matches!(step, Step::Failed) && matches!(cfg.strategy, Strategy::EhcThenBfs | Strategy::Bfs) {
        step = s.best_first(entry);
    }
    Ok(match step {
        Step::Found(e) => finish(&s, SearchStatus::PlanFound, Some(&e.node)),
        Step::Limit => finish(&s, SearchStatus::ResourceExhausted, None),
        Step::Failed if cfg.strategy == Strategy::Ehc => finish(&s, SearchStatus::ResourceExhausted, None),
        Step::Failed => finish(&s, SearchStatus::Exhausted, None),
    })
}
