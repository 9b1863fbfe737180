//! Weighted CNF: the belief-formula substrate. Encodes rule-list CPTs into
//! clauses with weighted chance variables; reads and writes weighted DIMACS.

use std::fmt::{self, Write};

use crate::bn::{BeliefBN, BnRule, BnVar};
use crate::task::PlanningTask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

/// `2 * var + negated`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(pub u32);

impl Var {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
    pub fn pos(self) -> Lit {
        Lit(self.0 << 1)
    }
    pub fn neg(self) -> Lit {
        Lit(self.0 << 1 | 1)
    }
}

impl Lit {
    pub fn new(v: Var, positive: bool) -> Self {
        if positive {
            v.pos()
        } else {
            v.neg()
        }
    }
    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }
    pub fn is_pos(self) -> bool {
        self.0 & 1 == 0
    }
    pub fn idx(self) -> usize {
        self.0 as usize
    }
    /// DIMACS form, 1-based and signed.
    pub fn to_dimacs(self) -> i64 {
        let v = self.var().0 as i64 + 1;
        if self.is_pos() {
            v
        } else {
            -v
        }
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    State,
    Chance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCnf {
    pub kinds: Vec<VarKind>,
    /// `(weight of v, weight of ¬v)`.
    pub weights: Vec<(f64, f64)>,
    pub names: Vec<String>,
    pub clauses: Vec<Vec<Lit>>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CnfError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("brute-force counting supports at most {cap} variables, formula has {vars}")]
    TooManyVars { vars: usize, cap: usize },
    #[error("row residual mass is zero before its last nonzero entry")]
    ZeroResidual,
}

pub const BRUTEFORCE_CAP: usize = 24;

impl Default for WeightedCnf {
    fn default() -> Self {
        Self::new()
    }
}

impl WeightedCnf {
    pub fn new() -> Self {
        WeightedCnf {
            kinds: Vec::new(),
            weights: Vec::new(),
            names: Vec::new(),
            clauses: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.kinds.len()
    }

    pub fn new_var(&mut self, kind: VarKind, w: (f64, f64), name: String) -> Var {
        self.kinds.push(kind);
        self.weights.push(w);
        self.names.push(name);
        Var(self.kinds.len() as u32 - 1)
    }

    /// Adds a clause after sorting and removing duplicates; tautologies
    /// are dropped.
    pub fn add_clause(&mut self, lits: &[Lit]) {
        if let Some(c) = normalize_clause(lits) {
            self.clauses.push(c);
        }
    }

    pub fn lit_weight(&self, l: Lit) -> f64 {
        let (p, n) = self.weights[l.var().idx()];
        if l.is_pos() {
            p
        } else {
            n
        }
    }

    pub fn chance_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k == VarKind::Chance).count()
    }
}

pub fn normalize_clause(lits: &[Lit]) -> Option<Vec<Lit>> {
    let mut c = lits.to_vec();
    c.sort();
    c.dedup();
    if c.windows(2).any(|w| w[0].var() == w[1].var()) {
        return None;
    }
    Some(c)
}

/// `ϖ(π) = Π ϖ(l)` for a total assignment (`true` = positive literal).
pub fn weight_of_assignment(cnf: &WeightedCnf, assignment: &[bool]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(v, b)| {
            let (p, n) = cnf.weights[v];
            if *b {
                p
            } else {
                n
            }
        })
        .product()
}

/// Exhaustive weighted model count of `cnf ∧ extra`.
pub fn wmc_bruteforce(cnf: &WeightedCnf, extra: &[Lit]) -> Result<f64, CnfError> {
    let n = cnf.num_vars();
    if n > BRUTEFORCE_CAP {
        return Err(CnfError::TooManyVars { vars: n, cap: BRUTEFORCE_CAP });
    }
    let mut total = 0.0;
    let mut asg = vec![false; n];
    for bits in 0u64..(1u64 << n) {
        for (v, a) in asg.iter_mut().enumerate() {
            *a = bits >> v & 1 == 1;
        }
        let sat = |l: &Lit| asg[l.var().idx()] == l.is_pos();
        if extra.iter().all(sat) && cnf.clauses.iter().all(|c| c.iter().any(sat)) {
            total += weight_of_assignment(cnf, &asg);
        }
    }
    Ok(total)
}

/// CNF variables of the values of every BN node encoded so far.
pub type ValueVars = Vec<Vec<Var>>;

/// Clause prefixes expressing `¬cond` for an atom. Each alternative is a
/// literal set; the prefix is their conjunction when `split`.
fn negate_atom(vars: &[Var], values: &[u16]) -> Vec<Vec<Lit>> {
    if values.len() <= vars.len() - values.len() {
        values.iter().map(|k| vec![vars[*k as usize].neg()]).collect()
    } else {
        vec![vars
            .iter()
            .enumerate()
            .filter(|(k, _)| !values.contains(&(*k as u16)))
            .map(|(_, v)| v.pos())
            .collect()]
    }
}

fn cross(acc: Vec<Vec<Lit>>, alts: &[Vec<Lit>]) -> Vec<Vec<Lit>> {
    let mut out = Vec::with_capacity(acc.len() * alts.len());
    for a in &acc {
        for b in alts {
            let mut c = a.clone();
            c.extend_from_slice(b);
            out.push(c);
        }
    }
    out
}

/// Drops positive literals of a node that also has a negative literal in
/// the clause: under exactly-one they can never be the satisfying literal.
fn simplify(clause: Vec<Lit>, node_of: &dyn Fn(Var) -> Option<usize>) -> Option<Vec<Lit>> {
    let c = normalize_clause(&clause)?;
    let neg_nodes: Vec<usize> = c
        .iter()
        .filter(|l| !l.is_pos())
        .filter_map(|l| node_of(l.var()))
        .collect();
    Some(
        c.into_iter()
            .filter(|l| !l.is_pos() || node_of(l.var()).map_or(true, |n| !neg_nodes.contains(&n)))
            .collect(),
    )
}

/// Clause prefixes for the antecedent "rule `i` is the first match".
/// `None` if the rule can never fire.
fn antecedent(rules: &[BnRule], i: usize, vv: &ValueVars) -> Option<Vec<Vec<Lit>>> {
    let cond = &rules[i].condition;
    let mut prefixes: Vec<Vec<Lit>> = vec![Vec::new()];
    for a in cond {
        prefixes = cross(prefixes, &negate_atom(&vv[a.node], &a.values));
    }
    for prior in &rules[..i] {
        let mut disjunct_choices: Vec<Vec<Lit>> = Vec::new();
        let mut overlaps = true;
        for pa in &prior.condition {
            let own = cond.iter().find(|a| a.node == pa.node);
            let vals: Vec<u16> = match own {
                Some(o) => o.values.iter().copied().filter(|k| pa.values.contains(k)).collect(),
                None => pa.values.clone(),
            };
            if vals.is_empty() {
                overlaps = false;
                break;
            }
            if own.map_or(false, |o| vals.len() == o.values.len()) {
                continue;
            }
            disjunct_choices.push(vals.iter().map(|k| vv[pa.node][*k as usize].pos()).collect());
        }
        if !overlaps {
            continue;
        }
        if disjunct_choices.is_empty() {
            return None;
        }
        let alts: Vec<Vec<Lit>> = disjunct_choices;
        prefixes = cross(prefixes, &alts);
    }
    Some(prefixes)
}

/// Merges deterministic clauses that differ only in a negative literal and
/// whose differing literals cover a full node domain.
fn resolve_full_domains(clauses: Vec<Vec<Lit>>, vv: &ValueVars, node_of: &dyn Fn(Var) -> Option<usize>) -> Vec<Vec<Lit>> {
    let mut cur = clauses;
    loop {
        let mut merged = None;
        'outer: for (ci, c) in cur.iter().enumerate() {
            for (li, l) in c.iter().enumerate() {
                if l.is_pos() {
                    continue;
                }
                let Some(n) = node_of(l.var()) else { continue };
                let mut rest = c.clone();
                rest.remove(li);
                let mut members = vec![ci];
                for v in &vv[n] {
                    if *v == l.var() {
                        continue;
                    }
                    let mut want = rest.clone();
                    want.push(v.neg());
                    want.sort();
                    match cur.iter().position(|d| *d == want) {
                        Some(di) => members.push(di),
                        None => continue 'outer,
                    }
                }
                merged = Some((members, rest));
                break 'outer;
            }
        }
        match merged {
            Some((mut members, rest)) => {
                members.sort_unstable();
                let first = members[0];
                for m in members.iter().rev() {
                    cur.remove(*m);
                }
                cur.insert(first, rest);
            }
            None => return cur,
        }
    }
}

/// Appends the encoding of `nodes` (numbered from `vv.len()`) to `cnf`,
/// extending `vv` with their value variables.
pub fn encode_nodes(cnf: &mut WeightedCnf, nodes: &[BnVar], vv: &mut ValueVars) -> Result<(), CnfError> {
    for node in nodes {
        let me = vv.len();
        let n = node.values.len();
        let root_shortcut = node.parents.is_empty()
            && node.rules.len() == 1
            && n == 2
            && node.rules[0].dist[0] > 0.0
            && node.rules[0].dist[0] < 1.0;
        let vars: Vec<Var> = (0..n)
            .map(|k| {
                let w = if root_shortcut && k == 0 {
                    (node.rules[0].dist[0], 1.0 - node.rules[0].dist[0])
                } else {
                    (1.0, 1.0)
                };
                cnf.new_var(VarKind::State, w, node.value_label(k))
            })
            .collect();
        vv.push(vars.clone());
        let lo = vars[0].0;
        let hi = vars[n - 1].0;
        let node_of = |v: Var| -> Option<usize> {
            if v.0 >= lo && v.0 <= hi {
                return Some(me);
            }
            node.parents.iter().copied().find(|p| vv_contains(&vv[*p], v))
        };
        cnf.add_clause(&vars.iter().map(|v| v.pos()).collect::<Vec<_>>());
        for i in 0..n {
            for j in i + 1..n {
                cnf.add_clause(&[vars[i].neg(), vars[j].neg()]);
            }
        }
        if root_shortcut {
            continue;
        }
        let mut det_clauses = Vec::new();
        for (ri, rule) in node.rules.iter().enumerate() {
            let Some(prefixes) = antecedent(&node.rules, ri, vv) else { continue };
            let nonzero: Vec<usize> = (0..n).filter(|k| rule.dist[*k] > 0.0).collect();
            if nonzero.len() == 1 {
                let z = vars[nonzero[0]].pos();
                for p in &prefixes {
                    let mut c = p.clone();
                    c.push(z);
                    if let Some(c) = simplify(c, &node_of) {
                        det_clauses.push(c);
                    }
                }
                continue;
            }
            let last = *nonzero.last().expect("normalized row has a nonzero entry");
            let mut chance: Vec<Lit> = Vec::new();
            let mut mass = 0.0;
            let mut row_clauses = Vec::new();
            for k in 0..n {
                let p = rule.dist[k];
                let mut tail = chance.clone();
                if p == 0.0 {
                    tail.push(vars[k].neg());
                } else if k == last {
                    tail.push(vars[k].pos());
                } else {
                    let residual = 1.0 - mass;
                    if residual <= 0.0 {
                        return Err(CnfError::ZeroResidual);
                    }
                    let w = (p / residual).min(1.0);
                    let c = cnf.new_var(VarKind::Chance, (w, 1.0 - w), format!("<{}^{}>", node.value_label(k), ri + 1));
                    tail.push(c.neg());
                    tail.push(vars[k].pos());
                    chance.push(c.pos());
                    mass += p;
                }
                row_clauses.push(tail);
            }
            for p in &prefixes {
                for t in &row_clauses {
                    let mut c = p.clone();
                    c.extend_from_slice(t);
                    if let Some(c) = simplify(c, &node_of) {
                        cnf.clauses.push(c);
                    }
                }
            }
        }
        for c in resolve_full_domains(det_clauses, vv, &node_of) {
            cnf.add_clause(&c);
        }
    }
    Ok(())
}

fn vv_contains(vars: &[Var], v: Var) -> bool {
    vars.first().map_or(false, |f| f.0 <= v.0) && vars.last().map_or(false, |l| v.0 <= l.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedBn {
    pub cnf: WeightedCnf,
    /// Value variables per BN node.
    pub value_vars: ValueVars,
}

impl EncodedBn {
    /// State proposition of `p` at time `t`.
    pub fn prop_lit(&self, task: &PlanningTask, bn: &BeliefBN, p: crate::task::PropId, t: usize) -> Lit {
        let node = bn.layers[t][task.var_of(p).idx()];
        self.value_vars[node][task.prop(p).index].pos()
    }
}

pub fn encode_bn(bn: &BeliefBN) -> Result<EncodedBn, CnfError> {
    let mut cnf = WeightedCnf::new();
    let mut vv = Vec::new();
    encode_nodes(&mut cnf, &bn.nodes, &mut vv)?;
    Ok(EncodedBn { cnf, value_vars: vv })
}

/// Weighted DIMACS. `w v p` sets ϖ(v)=p and ϖ(¬v)=1-p, `w v p n` sets both.
pub fn write_wdimacs(cnf: &WeightedCnf) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "p cnf {} {}", cnf.num_vars(), cnf.clauses.len());
    for (i, (p, n)) in cnf.weights.iter().enumerate() {
        if *p == 1.0 && *n == 1.0 {
            continue;
        }
        if (p + n - 1.0).abs() == 0.0 {
            let _ = writeln!(s, "w {} {}", i + 1, p);
        } else {
            let _ = writeln!(s, "w {} {} {}", i + 1, p, n);
        }
    }
    for c in &cnf.clauses {
        for l in c {
            let _ = write!(s, "{} ", l.to_dimacs());
        }
        s.push_str("0\n");
    }
    s
}

pub fn parse_wdimacs(text: &str) -> Result<WeightedCnf, CnfError> {
    let err = |line: usize, msg: &str| CnfError::Syntax { line, msg: msg.to_string() };
    let mut cnf = WeightedCnf::new();
    let mut header: Option<(usize, usize)> = None;
    let mut pending: Vec<Lit> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('c') || t.starts_with('%') {
            continue;
        }
        let mut toks = t.split_whitespace();
        if t.starts_with('p') {
            if header.is_some() {
                return Err(err(line, "duplicate header"));
            }
            toks.next();
            if toks.next() != Some("cnf") {
                return Err(err(line, "expected `p cnf <vars> <clauses>`"));
            }
            let nv: usize = toks.next().and_then(|x| x.parse().ok()).ok_or_else(|| err(line, "bad variable count"))?;
            let nc: usize = toks.next().and_then(|x| x.parse().ok()).ok_or_else(|| err(line, "bad clause count"))?;
            if toks.next().is_some() {
                return Err(err(line, "trailing tokens in header"));
            }
            if nv > 1 << 24 {
                return Err(err(line, "too many variables"));
            }
            for v in 0..nv {
                cnf.new_var(VarKind::State, (1.0, 1.0), format!("x{}", v + 1));
            }
            header = Some((nv, nc));
            continue;
        }
        let Some((nv, _)) = header else {
            return Err(err(line, "clause or weight before header"));
        };
        if t.starts_with('w') {
            toks.next();
            let v: usize = toks.next().and_then(|x| x.parse().ok()).ok_or_else(|| err(line, "bad weight variable"))?;
            if v == 0 || v > nv {
                return Err(err(line, "weight variable out of range"));
            }
            let p: f64 = toks.next().and_then(|x| x.parse().ok()).ok_or_else(|| err(line, "bad weight"))?;
            let n: Option<f64> = match toks.next() {
                Some(x) => Some(x.parse().map_err(|_| err(line, "bad negative weight"))?),
                None => None,
            };
            if toks.next().is_some() {
                return Err(err(line, "trailing tokens in weight line"));
            }
            let w = match n {
                Some(n) => (p, n),
                None if p == -1.0 => (1.0, 1.0),
                None => (p, 1.0 - p),
            };
            if !(w.0.is_finite() && w.1.is_finite()) || w.0 < 0.0 || w.1 < 0.0 {
                return Err(err(line, "weights must be finite and nonnegative"));
            }
            cnf.weights[v - 1] = w;
            if w != (1.0, 1.0) {
                cnf.kinds[v - 1] = VarKind::Chance;
            }
            continue;
        }
        for tok in toks {
            let x: i64 = tok.parse().map_err(|_| err(line, "bad literal"))?;
            if x == 0 {
                let c = std::mem::take(&mut pending);
                cnf.add_clause(&c);
                continue;
            }
            let v = x.unsigned_abs() as usize;
            if v > nv {
                return Err(err(line, "literal out of range"));
            }
            pending.push(Lit::new(Var(v as u32 - 1), x > 0));
        }
    }
    if header.is_none() {
        return Err(err(0, "missing header"));
    }
    if !pending.is_empty() {
        cnf.add_clause(&pending);
    }
    Ok(cnf)
}
