//! Satisfiability (CDCL with assumptions) and exact weighted model
//! counting (DPLL with optional components and caching).

use std::cell::Cell;
use std::collections::HashMap;

use crate::cnf::{normalize_clause, Lit, Var, WeightedCnf};

const UNDEF: u8 = 2;

/// Incremental CDCL solver. Learned clauses survive between calls.
pub struct SatSolver {
    num_vars: usize,
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<usize>>,
    value: Vec<u8>,
    level: Vec<u32>,
    reason: Vec<Option<usize>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    bump: f64,
    phase: Vec<bool>,
    heap: VarHeap,
    seen: Vec<bool>,
    unsat: bool,
    pub conflicts: u64,
}

/// Max-heap of variables keyed by activity.
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<Option<usize>>,
}

impl VarHeap {
    fn new(n: usize) -> Self {
        VarHeap {
            heap: (0..n as u32).collect(),
            pos: (0..n).map(Some).collect(),
        }
    }
    fn contains(&self, v: usize) -> bool {
        self.pos[v].is_some()
    }
    fn up(&mut self, mut i: usize, act: &[f64]) {
        while i > 0 {
            let p = (i - 1) / 2;
            if act[self.heap[i] as usize] <= act[self.heap[p] as usize] {
                break;
            }
            self.swap(i, p);
            i = p;
        }
    }
    fn down(&mut self, mut i: usize, act: &[f64]) {
        loop {
            let l = 2 * i + 1;
            if l >= self.heap.len() {
                break;
            }
            let r = l + 1;
            let c = if r < self.heap.len() && act[self.heap[r] as usize] > act[self.heap[l] as usize] {
                r
            } else {
                l
            };
            if act[self.heap[c] as usize] <= act[self.heap[i] as usize] {
                break;
            }
            self.swap(i, c);
            i = c;
        }
    }
    fn swap(&mut self, i: usize, j: usize) {
        self.heap.swap(i, j);
        self.pos[self.heap[i] as usize] = Some(i);
        self.pos[self.heap[j] as usize] = Some(j);
    }
    fn insert(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v as u32);
        let i = self.heap.len() - 1;
        self.pos[v] = Some(i);
        self.up(i, act);
    }
    fn pop(&mut self, act: &[f64]) -> Option<usize> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap[0] as usize;
        let last = self.heap.pop().unwrap();
        self.pos[top] = None;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last as usize] = Some(0);
            self.down(0, act);
        }
        Some(top)
    }
}

fn luby(mut i: u64) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != i {
        size = (size - 1) >> 1;
        seq -= 1;
        i %= size;
    }
    1 << seq
}

impl SatSolver {
    pub fn new(num_vars: usize) -> Self {
        SatSolver {
            num_vars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            value: vec![UNDEF; num_vars],
            level: vec![0; num_vars],
            reason: vec![None; num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: vec![0.0; num_vars],
            bump: 1.0,
            phase: vec![false; num_vars],
            heap: VarHeap::new(num_vars),
            seen: vec![false; num_vars],
            unsat: false,
            conflicts: 0,
        }
    }

    pub fn from_cnf(cnf: &WeightedCnf) -> Self {
        let mut s = SatSolver::new(cnf.num_vars());
        for c in &cnf.clauses {
            s.add_clause(c);
        }
        s
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Grows the variable set, e.g. for a formula extended in place.
    pub fn ensure_vars(&mut self, n: usize) {
        while self.num_vars < n {
            let v = self.num_vars;
            self.num_vars += 1;
            self.watches.push(Vec::new());
            self.watches.push(Vec::new());
            self.value.push(UNDEF);
            self.level.push(0);
            self.reason.push(None);
            self.activity.push(0.0);
            self.phase.push(false);
            self.seen.push(false);
            self.heap.pos.push(None);
            self.heap.insert(v, &self.activity);
        }
    }

    fn lit_value(&self, l: Lit) -> u8 {
        let v = self.value[l.var().idx()];
        if v == UNDEF {
            UNDEF
        } else {
            v ^ (!l.is_pos()) as u8
        }
    }

    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn enqueue(&mut self, l: Lit, reason: Option<usize>) {
        let v = l.var().idx();
        self.value[v] = l.is_pos() as u8;
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    pub fn add_clause(&mut self, lits: &[Lit]) {
        if self.unsat {
            return;
        }
        self.cancel_until(0);
        let Some(c) = normalize_clause(lits) else { return };
        let mut c: Vec<Lit> = c.into_iter().filter(|l| self.lit_value(*l) != 0).collect();
        if c.iter().any(|l| self.lit_value(*l) == 1) {
            return;
        }
        match c.len() {
            0 => self.unsat = true,
            1 => {
                self.enqueue(c[0], None);
                if self.propagate().is_some() {
                    self.unsat = true;
                }
            }
            _ => {
                c.sort();
                self.attach(c);
            }
        }
    }

    fn attach(&mut self, c: Vec<Lit>) -> usize {
        let id = self.clauses.len();
        self.watches[(!c[0]).idx()].push(id);
        self.watches[(!c[1]).idx()].push(id);
        self.clauses.push(c);
        id
    }

    /// Returns a conflicting clause id.
    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            // Clauses watching ¬p are registered under p.
            let mut ws = std::mem::take(&mut self.watches[p.idx()]);
            let false_lit = !p;
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let cid = ws[i];
                i += 1;
                let c = &mut self.clauses[cid];
                if c[0] == false_lit {
                    c.swap(0, 1);
                }
                let first = c[0];
                let fv = {
                    let v = self.value[first.var().idx()];
                    if v == UNDEF { UNDEF } else { v ^ (!first.is_pos()) as u8 }
                };
                if fv == 1 {
                    ws[j] = cid;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..c.len() {
                    let l = c[k];
                    let v = self.value[l.var().idx()];
                    let lv = if v == UNDEF { UNDEF } else { v ^ (!l.is_pos()) as u8 };
                    if lv != 0 {
                        c.swap(1, k);
                        let nw = !c[1];
                        self.watches[nw.idx()].push(cid);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = cid;
                j += 1;
                if fv == 0 {
                    conflict = Some(cid);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        i += 1;
                        j += 1;
                    }
                } else {
                    self.enqueue(first, Some(cid));
                }
            }
            ws.truncate(j);
            self.watches[p.idx()] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn cancel_until(&mut self, lvl: u32) {
        if self.decision_level() <= lvl {
            return;
        }
        let lim = self.trail_lim[lvl as usize];
        for k in (lim..self.trail.len()).rev() {
            let v = self.trail[k].var().idx();
            self.phase[v] = self.trail[k].is_pos();
            self.value[v] = UNDEF;
            self.reason[v] = None;
            self.heap.insert(v, &self.activity);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(lvl as usize);
        self.qhead = lim;
    }

    fn bump_var(&mut self, v: usize) {
        self.activity[v] += self.bump;
        if self.activity[v] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.bump *= 1e-100;
        }
        if let Some(i) = self.heap.pos[v] {
            self.heap.up(i, &self.activity);
        }
    }

    fn analyze(&mut self, mut confl: usize) -> (Vec<Lit>, u32) {
        let mut learnt = vec![Lit(0)];
        let mut counter = 0;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let dl = self.decision_level();
        loop {
            let c = self.clauses[confl].clone();
            for &q in &c {
                if Some(q) == p {
                    continue;
                }
                let v = q.var().idx();
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(v);
                    if self.level[v] >= dl {
                        counter += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var().idx()] {
                    break;
                }
            }
            let pl = self.trail[idx];
            p = Some(pl);
            self.seen[pl.var().idx()] = false;
            counter -= 1;
            if counter == 0 {
                learnt[0] = !pl;
                break;
            }
            confl = self.reason[pl.var().idx()].expect("implied literal has a reason");
        }
        for l in &learnt[1..] {
            self.seen[l.var().idx()] = false;
        }
        let mut bt = 0;
        if learnt.len() > 1 {
            let mut mi = 1;
            for k in 2..learnt.len() {
                if self.level[learnt[k].var().idx()] > self.level[learnt[mi].var().idx()] {
                    mi = k;
                }
            }
            learnt.swap(1, mi);
            bt = self.level[learnt[1].var().idx()];
        }
        self.bump *= 1.0 / 0.95;
        (learnt, bt)
    }

    /// Satisfiability under assumptions; returns a model when satisfiable.
    pub fn solve_model(&mut self, assumptions: &[Lit]) -> Option<Vec<bool>> {
        if self.unsat {
            return None;
        }
        self.cancel_until(0);
        if self.propagate().is_some() {
            self.unsat = true;
            return None;
        }
        let mut restart = 0u64;
        let mut budget = 100 * luby(restart);
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                if self.decision_level() == 0 {
                    self.unsat = true;
                    return None;
                }
                let (learnt, bt) = self.analyze(confl);
                self.cancel_until(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let l0 = learnt[0];
                    let id = self.attach(learnt);
                    self.enqueue(l0, Some(id));
                }
                budget = budget.saturating_sub(1);
                continue;
            }
            if budget == 0 {
                restart += 1;
                budget = 100 * luby(restart);
                self.cancel_until(0);
                continue;
            }
            let dl = self.decision_level() as usize;
            if dl < assumptions.len() {
                let a = assumptions[dl];
                match self.lit_value(a) {
                    1 => {
                        self.trail_lim.push(self.trail.len());
                        continue;
                    }
                    0 => {
                        self.cancel_until(0);
                        return None;
                    }
                    _ => {
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(a, None);
                        continue;
                    }
                }
            }
            let mut next = None;
            while let Some(v) = self.heap.pop(&self.activity) {
                if self.value[v] == UNDEF {
                    next = Some(v);
                    break;
                }
            }
            match next {
                None => {
                    let model = self.value.iter().map(|v| *v == 1).collect();
                    self.cancel_until(0);
                    return Some(model);
                }
                Some(v) => {
                    self.trail_lim.push(self.trail.len());
                    self.enqueue(Lit::new(Var(v as u32), self.phase[v]), None);
                }
            }
        }
    }

    pub fn solve(&mut self, assumptions: &[Lit]) -> bool {
        self.solve_model(assumptions).is_some()
    }
}

/// One-shot satisfiability of `cnf ∧ assumptions`.
pub fn sat(cnf: &WeightedCnf, assumptions: &[Lit]) -> bool {
    SatSolver::from_cnf(cnf).solve(assumptions)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Branching {
    /// Most occurrences among the shortest clauses.
    #[default]
    MostOccurrencesShortest,
    /// Lowest variable index first.
    Ordered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct WmcOptions {
    pub components: bool,
    pub cache: bool,
    pub branching: Branching,
}

impl WmcOptions {
    /// Settings used by the planner: components, caching, ordered branching.
    pub fn planner() -> Self {
        WmcOptions {
            components: true,
            cache: true,
            branching: Branching::Ordered,
        }
    }
}

/// Weighted model counter over a fixed weight table: DPLL with unit
/// propagation, component decomposition and component caching.
pub struct Counter<'a> {
    weights: &'a [(f64, f64)],
    opts: WmcOptions,
    clauses: Clauses,
    cache: HashMap<Vec<u32>, f64>,
    /// 0 unassigned, 1 true, 2 false.
    val: Vec<u8>,
    /// Per-variable scratch: union-find parent, occurrence counts.
    parent: Vec<u32>,
    stamp: Vec<u32>,
    epoch: u32,
    pub decisions: u64,
}

type Clauses = Vec<Vec<Lit>>;

impl<'a> Counter<'a> {
    pub fn new(weights: &'a [(f64, f64)], opts: WmcOptions) -> Self {
        let n = weights.len();
        Counter {
            weights,
            opts,
            clauses: Vec::new(),
            cache: HashMap::new(),
            val: vec![0; n],
            parent: vec![0; n],
            stamp: vec![0; n],
            epoch: 0,
            decisions: 0,
        }
    }

    fn lw(&self, l: Lit) -> f64 {
        let (p, n) = self.weights[l.var().idx()];
        if l.is_pos() {
            p
        } else {
            n
        }
    }

    fn free(&self, v: Var) -> f64 {
        let (p, n) = self.weights[v.idx()];
        p + n
    }

    fn value(&self, l: Lit) -> Option<bool> {
        match self.val[l.var().idx()] {
            0 => None,
            v => Some((v == 1) == l.is_pos()),
        }
    }

    fn set(&mut self, l: Lit) {
        self.val[l.var().idx()] = if l.is_pos() { 1 } else { 2 };
    }

    /// Count of `clauses` over all variables in `scope` (sorted). Every
    /// variable of `clauses` must be in `scope`.
    pub fn count(&mut self, clauses: Clauses, scope: Vec<Var>) -> f64 {
        if clauses.iter().any(|c| c.is_empty()) {
            return 0.0;
        }
        self.clauses = clauses;
        self.cache.clear();
        let ids: Vec<u32> = (0..self.clauses.len() as u32).collect();
        self.solve(&ids, &scope)
    }

    fn solve(&mut self, ids: &[u32], scope: &[Var]) -> f64 {
        stacker::maybe_grow(64 * 1024, 4 * 1024 * 1024, || self.solve_inner(ids, scope))
    }

    /// Unit propagation restricted to `ids`; pushes assigned literals.
    fn propagate(&mut self, ids: &[u32], trail: &mut Vec<Lit>) -> bool {
        loop {
            let mut progress = false;
            for &c in ids {
                let mut unit = None;
                let mut open = 0;
                let mut sat = false;
                for &l in &self.clauses[c as usize] {
                    match self.value(l) {
                        Some(true) => {
                            sat = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            open += 1;
                            unit = Some(l);
                        }
                    }
                }
                if sat {
                    continue;
                }
                match (open, unit) {
                    (0, _) => return false,
                    (1, Some(l)) => {
                        self.set(l);
                        trail.push(l);
                        progress = true;
                    }
                    _ => {}
                }
            }
            if !progress {
                return true;
            }
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let g = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = g;
            x = g;
        }
        x
    }

    fn solve_inner(&mut self, ids: &[u32], scope: &[Var]) -> f64 {
        let mut trail = Vec::new();
        let ok = self.propagate(ids, &mut trail);
        let weight = if ok { self.residual(ids, scope, &trail) } else { 0.0 };
        for l in trail {
            self.val[l.var().idx()] = 0;
        }
        weight
    }

    /// Count of the residual formula after propagation.
    fn residual(&mut self, ids: &[u32], scope: &[Var], trail: &[Lit]) -> f64 {
        let mut weight: f64 = trail.iter().map(|l| self.lw(*l)).product();
        let rem: Vec<u32> = ids
            .iter()
            .copied()
            .filter(|c| !self.clauses[*c as usize].iter().any(|l| self.value(*l) == Some(true)))
            .collect();
        self.epoch += 1;
        let epoch = self.epoch;
        for &c in &rem {
            for l in &self.clauses[c as usize] {
                let v = l.var().idx();
                if self.val[v] == 0 && self.stamp[v] != epoch {
                    self.stamp[v] = epoch;
                    self.parent[v] = v as u32;
                }
            }
        }
        let mut used = Vec::new();
        for v in scope {
            if self.stamp[v.idx()] == epoch {
                used.push(*v);
            } else if self.val[v.idx()] == 0 {
                weight *= self.free(*v);
            }
        }
        if rem.is_empty() || weight == 0.0 {
            return weight;
        }
        if !self.opts.components {
            return weight * self.component(rem, used);
        }
        for &c in &rem {
            let mut first = None;
            for i in 0..self.clauses[c as usize].len() {
                let l = self.clauses[c as usize][i];
                if self.val[l.var().idx()] != 0 {
                    continue;
                }
                let r = self.find(l.var().0);
                match first {
                    None => first = Some(r),
                    Some(f) if f != r => self.parent[r as usize] = f,
                    _ => {}
                }
            }
        }
        let mut slot: HashMap<u32, usize> = HashMap::new();
        let mut comps: Vec<(Vec<u32>, Vec<Var>)> = Vec::new();
        for v in &used {
            let r = self.find(v.0);
            let s = *slot.entry(r).or_insert_with(|| {
                comps.push((Vec::new(), Vec::new()));
                comps.len() - 1
            });
            comps[s].1.push(*v);
        }
        for &c in &rem {
            let l = self.clauses[c as usize]
                .iter()
                .find(|l| self.val[l.var().idx()] == 0)
                .copied()
                .unwrap();
            let r = self.find(l.var().0);
            comps[slot[&r]].0.push(c);
        }
        for (cids, vars) in comps {
            weight *= self.component(cids, vars);
            if weight == 0.0 {
                break;
            }
        }
        weight
    }

    fn component(&mut self, ids: Vec<u32>, vars: Vec<Var>) -> f64 {
        let key = self.opts.cache.then(|| {
            let mut k = Vec::with_capacity(ids.len() + vars.len() + 1);
            k.extend_from_slice(&ids);
            k.push(u32::MAX);
            k.extend(vars.iter().map(|v| v.0));
            k
        });
        if let Some(v) = key.as_ref().and_then(|k| self.cache.get(k)) {
            return *v;
        }
        let v = self.pick(&ids, &vars);
        self.decisions += 1;
        let rest: Vec<Var> = vars.iter().copied().filter(|x| *x != v).collect();
        let mut total = 0.0;
        for l in [v.pos(), v.neg()] {
            let w = self.lw(l);
            if w == 0.0 {
                continue;
            }
            self.set(l);
            total += w * self.solve(&ids, &rest);
            self.val[v.idx()] = 0;
        }
        if let Some(k) = key {
            self.cache.insert(k, total);
        }
        total
    }

    fn pick(&mut self, ids: &[u32], vars: &[Var]) -> Var {
        match self.opts.branching {
            Branching::Ordered => vars[0],
            Branching::MostOccurrencesShortest => {
                let open = |c: &Vec<Lit>, val: &[u8]| c.iter().filter(|l| val[l.var().idx()] == 0).count();
                let shortest = ids
                    .iter()
                    .map(|c| open(&self.clauses[*c as usize], &self.val))
                    .min()
                    .unwrap();
                for v in vars {
                    self.parent[v.idx()] = 0;
                }
                for &c in ids {
                    let clause = &self.clauses[c as usize];
                    if open(clause, &self.val) == shortest {
                        for l in clause {
                            if self.val[l.var().idx()] == 0 {
                                self.parent[l.var().idx()] += 1;
                            }
                        }
                    }
                }
                *vars
                    .iter()
                    .max_by(|a, b| self.parent[a.idx()].cmp(&self.parent[b.idx()]).then(b.cmp(a)))
                    .unwrap()
            }
        }
    }
}

/// Removes satisfied clauses and false literals under unit propagation.
/// `None` on conflict.
fn unit_simplify(mut clauses: Clauses, num_vars: usize) -> Option<Clauses> {
    let mut val = vec![0u8; num_vars];
    loop {
        let mut progress = false;
        for c in &clauses {
            if let [l] = c[..] {
                let want = if l.is_pos() { 1 } else { 2 };
                match val[l.var().idx()] {
                    0 => {
                        val[l.var().idx()] = want;
                        progress = true;
                    }
                    v if v != want => return None,
                    _ => {}
                }
            }
        }
        if !progress {
            return Some(clauses);
        }
        let mut next = Vec::with_capacity(clauses.len());
        for c in clauses {
            if c.iter().any(|l| val[l.var().idx()] == if l.is_pos() { 1 } else { 2 }) {
                continue;
            }
            let rest: Vec<Lit> = c.into_iter().filter(|l| val[l.var().idx()] == 0).collect();
            if rest.is_empty() {
                return None;
            }
            next.push(rest);
        }
        clauses = next;
    }
}

/// Weighted model count of `cnf ∧ assumptions` over all variables of `cnf`.
pub fn wmc(cnf: &WeightedCnf, assumptions: &[Lit], opts: WmcOptions) -> f64 {
    let mut clauses = cnf.clauses.clone();
    clauses.extend(assumptions.iter().map(|l| vec![*l]));
    wmc_clauses(&cnf.weights, clauses, opts)
}

thread_local! {
    static WMC_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of top-level counts run on this thread so far.
pub fn wmc_calls() -> u64 {
    WMC_CALLS.with(Cell::get)
}

/// Weighted model count of a clause list over every variable of `weights`.
pub fn wmc_clauses(weights: &[(f64, f64)], clauses: Clauses, opts: WmcOptions) -> f64 {
    WMC_CALLS.with(|c| c.set(c.get() + 1));
    let scope: Vec<Var> = (0..weights.len() as u32).map(Var).collect();
    Counter::new(weights, opts).count(clauses, scope)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Conditioned {
    Conflict,
    Formula(WeightedCnf),
}

/// Unit-propagates `lits` into `cnf`. The result keeps a unit clause for
/// every fixed literal, so its count equals the count of `cnf ∧ lits`.
pub fn condition(cnf: &WeightedCnf, lits: &[Lit]) -> Conditioned {
    let mut clauses = cnf.clauses.clone();
    clauses.extend(lits.iter().map(|l| vec![*l]));
    match unit_simplify(clauses, cnf.num_vars()) {
        None => Conditioned::Conflict,
        Some(clauses) => {
            // Recover the fixed literals: they are exactly the units.
            let mut fixed = fixed_literals(cnf, lits);
            fixed.sort();
            let mut out = cnf.clone();
            out.clauses = clauses;
            out.clauses.extend(fixed.into_iter().map(|l| vec![l]));
            Conditioned::Formula(out)
        }
    }
}

/// Literals fixed by unit propagation of `cnf ∧ lits`; empty on conflict.
pub fn fixed_literals(cnf: &WeightedCnf, lits: &[Lit]) -> Vec<Lit> {
    let mut s = SatSolver::new(cnf.num_vars());
    for c in &cnf.clauses {
        s.add_clause(c);
    }
    for l in lits {
        s.add_clause(&[*l]);
    }
    if s.unsat {
        return Vec::new();
    }
    s.trail.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnf::{wmc_bruteforce, VarKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cnf(rng: &mut ChaCha8Rng, n: usize, m: usize) -> WeightedCnf {
        let mut cnf = WeightedCnf::new();
        for i in 0..n {
            let w = if rng.gen_bool(0.5) {
                let p: f64 = rng.gen();
                (p, 1.0 - p)
            } else {
                (rng.gen(), rng.gen())
            };
            cnf.new_var(VarKind::Chance, w, format!("v{i}"));
        }
        for _ in 0..m {
            let k = rng.gen_range(1..=3);
            let c: Vec<Lit> = (0..k)
                .map(|_| Lit::new(Var(rng.gen_range(0..n as u32)), rng.gen_bool(0.5)))
                .collect();
            cnf.add_clause(&c);
        }
        cnf
    }

    #[test]
    fn basics() {
        let cnf = WeightedCnf::new();
        assert!(sat(&cnf, &[]));
        assert_eq!(wmc(&cnf, &[], WmcOptions::default()), 1.0);
        let mut c = WeightedCnf::new();
        let q = c.new_var(VarKind::State, (1.0, 1.0), "q".into());
        c.add_clause(&[q.pos()]);
        c.add_clause(&[q.neg()]);
        assert!(!sat(&c, &[]));
        assert_eq!(wmc(&c, &[], WmcOptions::default()), 0.0);
    }

    #[test]
    fn unmentioned_variables_count() {
        let mut c = WeightedCnf::new();
        c.new_var(VarKind::Chance, (0.3, 0.9), "a".into());
        let b = c.new_var(VarKind::State, (1.0, 1.0), "b".into());
        c.add_clause(&[b.pos()]);
        assert!((wmc(&c, &[], WmcOptions::default()) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn matches_bruteforce_on_random_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..200 {
            let n = rng.gen_range(1..=12);
            let m = rng.gen_range(0..=3 * n);
            let cnf = random_cnf(&mut rng, n, m);
            let exact = wmc_bruteforce(&cnf, &[]).unwrap();
            for opts in [WmcOptions::default(), WmcOptions::planner()] {
                let got = wmc(&cnf, &[], opts);
                assert!((got - exact).abs() < 1e-9, "case {i}: {got} vs {exact}");
            }
            if exact > 0.0 {
                assert!(sat(&cnf, &[]));
            }
        }
    }

    #[test]
    fn sat_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.gen_range(1..=10);
            let m = rng.gen_range(0..=5 * n);
            let mut cnf = random_cnf(&mut rng, n, m);
            for w in &mut cnf.weights {
                *w = (1.0, 1.0);
            }
            let count = wmc_bruteforce(&cnf, &[]).unwrap();
            let mut s = SatSolver::from_cnf(&cnf);
            assert_eq!(s.solve(&[]), count > 0.0);
            for v in 0..n as u32 {
                let l = Var(v).pos();
                let c = wmc_bruteforce(&cnf, &[l]).unwrap();
                assert_eq!(s.solve(&[l]), c > 0.0);
                if let Some(model) = s.solve_model(&[!l]) {
                    assert!(!model[v as usize]);
                    assert!(cnf.clauses.iter().all(|c| c.iter().any(|x| model[x.var().idx()] == x.is_pos())));
                }
            }
        }
    }

    #[test]
    fn conditioning_preserves_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.gen_range(2..=10);
            let cnf = random_cnf(&mut rng, n, 2 * n);
            let l = Lit::new(Var(rng.gen_range(0..n as u32)), rng.gen_bool(0.5));
            let exact = wmc_bruteforce(&cnf, &[l]).unwrap();
            match condition(&cnf, &[l]) {
                Conditioned::Conflict => assert_eq!(exact, 0.0),
                Conditioned::Formula(f) => {
                    assert!((wmc(&f, &[], WmcOptions::default()) - exact).abs() < 1e-9);
                    assert_eq!(sat(&f, &[]), sat(&cnf, &[l]));
                }
            }
        }
    }

    #[test]
    fn luby_sequence() {
        let s: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(s, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }
}
