//! Implicit belief states: a node stores only the clauses and variables of
//! its own time layer and points to its parent for the rest.

use std::sync::Arc;

use crate::bn::{step_nodes, BeliefBN};
use crate::cnf::{encode_bn, encode_nodes, Lit, Var, VarKind, WeightedCnf};
use crate::task::{ActionId, PlanningTask, PropId, VarId};
use crate::wmc::{wmc_clauses, SatSolver, WmcOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeliefConfig {
    /// Unaffected variables reuse the previous layer's propositions
    /// instead of getting persistence clauses.
    pub compact_frames: bool,
    pub wmc: WmcOptions,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        BeliefConfig {
            compact_frames: false,
            wmc: WmcOptions::default(),
        }
    }
}

impl BeliefConfig {
    pub fn planner() -> Self {
        BeliefConfig {
            compact_frames: true,
            wmc: WmcOptions::planner(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactStatus {
    Known,
    NegKnown,
    Unknown,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BeliefError {
    #[error("precondition of `{0}` is not known")]
    PreconditionNotKnown(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalTest {
    pub satisfied: bool,
    pub probability: f64,
}

#[derive(Debug)]
pub struct BeliefNode {
    pub parent: Option<Arc<BeliefNode>>,
    pub action: Option<ActionId>,
    pub depth: usize,
    first_var: u32,
    kinds: Vec<VarKind>,
    weights: Vec<(f64, f64)>,
    names: Vec<String>,
    clauses: Vec<Vec<Lit>>,
    /// Value propositions of every state variable at this layer.
    pub layer_vars: Vec<Vec<Var>>,
    /// Possible values of every state variable at this layer.
    pub possible: Vec<Vec<bool>>,
    /// Probability of the task goal at this layer.
    pub goal_probability: f64,
}

impl BeliefNode {
    pub fn root(task: &PlanningTask, cfg: &BeliefConfig) -> Arc<BeliefNode> {
        let bn = BeliefBN::initial(task);
        let enc = encode_bn(&bn).expect("validated CPTs encode");
        let layer_vars: Vec<Vec<Var>> = (0..task.vars.len())
            .map(|v| enc.value_vars[bn.layers[0][v]].clone())
            .collect();
        let cnf = enc.cnf;
        let mut node = BeliefNode {
            parent: None,
            action: None,
            depth: 0,
            first_var: 0,
            kinds: cnf.kinds,
            weights: cnf.weights,
            names: cnf.names,
            clauses: cnf.clauses,
            layer_vars,
            possible: Vec::new(),
            goal_probability: 0.0,
        };
        let all: Vec<VarId> = (0..task.vars.len() as u32).map(VarId).collect();
        node.possible = vec![Vec::new(); task.vars.len()];
        node.classify(task, &all);
        node.goal_probability = node.compute_goal_probability(task, &task.goal, cfg);
        Arc::new(node)
    }

    pub fn total_vars(&self) -> usize {
        self.first_var as usize + self.kinds.len()
    }

    pub fn plan(&self) -> Vec<ActionId> {
        let mut out = Vec::with_capacity(self.depth);
        let mut cur = Some(self);
        while let Some(n) = cur {
            if let Some(a) = n.action {
                out.push(a);
            }
            cur = n.parent.as_deref();
        }
        out.reverse();
        out
    }

    fn ancestor(&self, t: usize) -> &BeliefNode {
        assert!(t <= self.depth, "time {t} beyond node depth {}", self.depth);
        let mut cur = self;
        while cur.depth > t {
            cur = cur.parent.as_deref().unwrap();
        }
        cur
    }

    /// Status of `p` at time `t ≤ depth`.
    pub fn classify_fact(&self, task: &PlanningTask, p: PropId, t: usize) -> FactStatus {
        let n = self.ancestor(t);
        let prop = task.prop(p);
        let poss = &n.possible[prop.var.idx()];
        if !poss[prop.index] {
            FactStatus::NegKnown
        } else if poss.iter().filter(|b| **b).count() == 1 {
            FactStatus::Known
        } else {
            FactStatus::Unknown
        }
    }

    pub fn status(&self, task: &PlanningTask, p: PropId) -> FactStatus {
        self.classify_fact(task, p, self.depth)
    }

    pub fn facts_with(&self, task: &PlanningTask, t: usize, s: FactStatus) -> Vec<PropId> {
        (0..task.num_props() as u32)
            .map(PropId)
            .filter(|p| self.classify_fact(task, *p, t) == s)
            .collect()
    }

    pub fn is_applicable(&self, task: &PlanningTask, a: ActionId) -> bool {
        task.action(a)
            .pre
            .iter()
            .all(|p| self.status(task, *p) == FactStatus::Known)
    }

    /// State proposition of `p` at time `t`.
    pub fn prop_lit(&self, task: &PlanningTask, p: PropId, t: usize) -> Lit {
        let prop = task.prop(p);
        self.ancestor(t).layer_vars[prop.var.idx()][prop.index].pos()
    }

    /// The full formula φ(b_ā).
    pub fn formula(&self) -> WeightedCnf {
        let mut chain = Vec::with_capacity(self.depth + 1);
        let mut cur = Some(self);
        while let Some(n) = cur {
            chain.push(n);
            cur = n.parent.as_deref();
        }
        chain.reverse();
        let mut cnf = WeightedCnf::new();
        for n in chain {
            cnf.kinds.extend_from_slice(&n.kinds);
            cnf.weights.extend_from_slice(&n.weights);
            cnf.names.extend(n.names.iter().cloned());
            cnf.clauses.extend(n.clauses.iter().cloned());
        }
        cnf
    }

    pub fn successor(
        self: &Arc<Self>,
        task: &PlanningTask,
        a: ActionId,
        cfg: &BeliefConfig,
    ) -> Result<Arc<BeliefNode>, BeliefError> {
        if !self.is_applicable(task, a) {
            return Err(BeliefError::PreconditionNotKnown(task.action(a).name.clone()));
        }
        let nvars = task.vars.len();
        let prev: Vec<usize> = (0..nvars).collect();
        let time = self.depth + 1;
        let (nodes, layer, _) = step_nodes(task, a, time, &prev, nvars, cfg.compact_frames);
        let base = self.total_vars();
        let mut local = WeightedCnf::new();
        local.kinds = vec![VarKind::State; base];
        local.weights = vec![(1.0, 1.0); base];
        local.names = vec![String::new(); base];
        let mut vv = self.layer_vars.clone();
        encode_nodes(&mut local, &nodes, &mut vv).expect("validated outcomes encode");
        let layer_vars: Vec<Vec<Var>> = layer.iter().map(|n| vv[*n].clone()).collect();
        let mut node = BeliefNode {
            parent: Some(self.clone()),
            action: Some(a),
            depth: time,
            first_var: base as u32,
            kinds: local.kinds.split_off(base),
            weights: local.weights.split_off(base),
            names: local.names.split_off(base),
            clauses: local.clauses,
            layer_vars,
            possible: self.possible.clone(),
            goal_probability: 0.0,
        };
        let affected = task.affected_vars(a);
        node.classify(task, &affected);
        node.goal_probability = node.compute_goal_probability(task, &task.goal, cfg);
        Ok(Arc::new(node))
    }

    fn classify(&mut self, task: &PlanningTask, vars: &[VarId]) {
        if vars.is_empty() {
            return;
        }
        let cnf = self.formula_with_self();
        let mut solver = SatSolver::from_cnf(&cnf);
        for v in vars {
            self.possible[v.idx()] = vec![false; task.var(*v).domain.len()];
        }
        for v in vars {
            for k in 0..task.var(*v).domain.len() {
                if self.possible[v.idx()][k] {
                    continue;
                }
                let lit = self.layer_vars[v.idx()][k].pos();
                if let Some(model) = solver.solve_model(&[lit]) {
                    for w in vars {
                        for (j, x) in self.layer_vars[w.idx()].iter().enumerate() {
                            if model[x.idx()] {
                                self.possible[w.idx()][j] = true;
                            }
                        }
                    }
                }
            }
        }
    }

    /// `formula()` for a node not yet wrapped in an `Arc`.
    fn formula_with_self(&self) -> WeightedCnf {
        let mut cnf = match &self.parent {
            Some(p) => p.formula(),
            None => WeightedCnf::new(),
        };
        cnf.kinds.extend_from_slice(&self.kinds);
        cnf.weights.extend_from_slice(&self.weights);
        cnf.names.extend(self.names.iter().cloned());
        cnf.clauses.extend(self.clauses.iter().cloned());
        cnf
    }

    fn compute_goal_probability(&self, task: &PlanningTask, goal: &[PropId], cfg: &BeliefConfig) -> f64 {
        let mut unknown = Vec::new();
        for g in goal {
            match self.status(task, *g) {
                FactStatus::NegKnown => return 0.0,
                FactStatus::Known => {}
                FactStatus::Unknown => unknown.push(*g),
            }
        }
        if unknown.is_empty() {
            return 1.0;
        }
        let cnf = self.formula_with_self();
        let mut clauses = cnf.clauses;
        for (v, poss) in self.possible.iter().enumerate() {
            if poss.iter().filter(|b| **b).count() == 1 {
                let k = poss.iter().position(|b| *b).unwrap();
                clauses.push(vec![self.layer_vars[v][k].pos()]);
            }
        }
        for g in unknown {
            let prop = task.prop(g);
            clauses.push(vec![self.layer_vars[prop.var.idx()][prop.index].pos()]);
        }
        wmc_clauses(&cnf.weights, clauses, cfg.wmc)
    }

    /// Probability of `goal` at the last layer and whether it reaches θ.
    pub fn goal_test(&self, task: &PlanningTask, goal: &[PropId], theta: f64, cfg: &BeliefConfig) -> GoalTest {
        let probability = if goal == task.goal.as_slice() {
            self.goal_probability
        } else {
            self.compute_goal_probability(task, goal, cfg)
        };
        GoalTest {
            satisfied: probability >= theta - crate::task::PROB_TOL,
            probability,
        }
    }

    /// Key for duplicate detection: possible-value sets at the last layer.
    pub fn dup_key(&self) -> Vec<u64> {
        let mut key = Vec::new();
        let mut word = 0u64;
        let mut bit = 0;
        for poss in &self.possible {
            for b in poss {
                if *b {
                    word |= 1 << bit;
                }
                bit += 1;
                if bit == 64 {
                    key.push(word);
                    word = 0;
                    bit = 0;
                }
            }
        }
        key.push(word);
        key
    }
}
