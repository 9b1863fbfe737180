use std::collections::HashMap;

use super::{
    validate_task, Action, ActionId, BnNode, CptRow, Effect, InitialBeliefNet, Outcome,
    PlanningTask, PropId, Proposition, StateVariable, TaskError, VarId,
};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Vars,
    Bn,
    Actions,
    Goal,
}

struct Line<'a> {
    no: usize,
    /// Byte offset of `text` inside the raw line.
    offset: usize,
    raw: &'a str,
    text: &'a str,
}

impl<'a> Line<'a> {
    fn col_of(&self, sub: &str) -> usize {
        let base = self.raw.as_ptr() as usize;
        let p = sub.as_ptr() as usize;
        if p >= base && p <= base + self.raw.len() {
            self.raw[..p - base].chars().count() + 1
        } else {
            self.offset + 1
        }
    }

    fn err(&self, at: &str, msg: impl Into<String>) -> TaskError {
        TaskError::Syntax {
            line: self.no,
            col: self.col_of(at),
            msg: msg.into(),
        }
    }
}

struct Builder {
    vars: Vec<StateVariable>,
    props: Vec<Proposition>,
    prop_index: HashMap<String, PropId>,
    var_index: HashMap<String, VarId>,
    nodes: Vec<BnNode>,
    actions: Vec<Action>,
    action_index: HashMap<String, ActionId>,
    goal: Vec<PropId>,
    goal_seen: bool,
    theta: Option<f64>,
}

/// Parses and validates a task file.
pub fn parse_task(text: &str) -> Result<PlanningTask, TaskError> {
    let task = parse_task_unchecked(text)?;
    let violations = validate_task(&task);
    if violations.is_empty() {
        Ok(task)
    } else {
        Err(TaskError::Invalid(violations))
    }
}

/// Parses a task file without running [`validate_task`].
pub fn parse_task_unchecked(text: &str) -> Result<PlanningTask, TaskError> {
    let mut b = Builder {
        vars: Vec::new(),
        props: Vec::new(),
        prop_index: HashMap::new(),
        var_index: HashMap::new(),
        nodes: Vec::new(),
        actions: Vec::new(),
        action_index: HashMap::new(),
        goal: Vec::new(),
        goal_seen: false,
        theta: None,
    };
    let mut section = Section::None;
    let mut current_effect: Option<(usize, usize)> = None;

    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let stripped = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        let text = stripped.trim();
        if text.is_empty() {
            continue;
        }
        let offset = stripped.len() - stripped.trim_start().len();
        let line = Line {
            no,
            offset,
            raw,
            text,
        };

        if let Some((head, rest)) = split_header(text) {
            match head {
                "vars" => section = Section::Vars,
                "bn" => section = Section::Bn,
                "actions" => {
                    section = Section::Actions;
                    current_effect = None;
                }
                "goal" => {
                    section = Section::Goal;
                    if b.goal_seen {
                        return Err(TaskError::Duplicate {
                            line: no,
                            what: "section",
                            name: "goal".into(),
                        });
                    }
                    b.goal_seen = true;
                }
                "theta" => {
                    section = Section::None;
                    if b.theta.is_some() {
                        return Err(TaskError::Duplicate {
                            line: no,
                            what: "section",
                            name: "theta".into(),
                        });
                    }
                    let v = parse_number(rest)
                        .ok_or_else(|| line.err(rest, format!("bad number `{rest}`")))?;
                    b.theta = Some(v);
                    continue;
                }
                _ => unreachable!(),
            }
            if !rest.is_empty() {
                if section == Section::Goal {
                    let lits = b.resolve_list(&line, rest)?;
                    b.goal.extend(lits);
                } else {
                    return Err(line.err(rest, "unexpected text after section header"));
                }
            }
            continue;
        }

        match section {
            Section::None => return Err(line.err(text, "text outside of any section")),
            Section::Vars => b.var_line(&line)?,
            Section::Bn => b.bn_line(&line)?,
            Section::Actions => b.action_line(&line, &mut current_effect)?,
            Section::Goal => {
                let lits = b.resolve_list(&line, text)?;
                b.goal.extend(lits);
            }
        }
    }

    let theta = b.theta.unwrap_or(1.0);
    Ok(PlanningTask {
        vars: b.vars,
        props: b.props,
        actions: b.actions,
        initial: InitialBeliefNet { nodes: b.nodes },
        goal: b.goal,
        theta,
    })
}

fn split_header(text: &str) -> Option<(&'static str, &str)> {
    for head in ["vars", "bn", "actions", "goal", "theta"] {
        if let Some(rest) = text.strip_prefix(head) {
            if let Some(rest) = rest.trim_start().strip_prefix(':') {
                return Some((head, rest.trim()));
            }
        }
    }
    None
}

fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = if let Some((n, d)) = s.split_once('/') {
        let n: f64 = n.trim().parse().ok()?;
        let d: f64 = d.trim().parse().ok()?;
        if d == 0.0 {
            return None;
        }
        n / d
    } else {
        s.parse().ok()?
    };
    v.is_finite().then_some(v)
}

fn is_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '!' | '@' | '\''))
        && !s.starts_with(|c: char| c.is_ascii_digit() && s.parse::<f64>().is_ok())
}

fn tokens(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
}

impl Builder {
    fn resolve(&self, line: &Line, tok: &str) -> Result<PropId, TaskError> {
        self.prop_index
            .get(tok)
            .copied()
            .ok_or_else(|| TaskError::Undeclared {
                line: line.no,
                col: line.col_of(tok),
                what: "proposition",
                name: tok.to_string(),
            })
    }

    fn resolve_list(&self, line: &Line, s: &str) -> Result<Vec<PropId>, TaskError> {
        let s = s.trim();
        if s == "*" {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for tok in tokens(s) {
            let p = self.resolve(line, tok)?;
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn add_prop(&mut self, line: &Line, name: &str, var: VarId, index: usize) -> Result<PropId, TaskError> {
        if !is_name(name) {
            return Err(line.err(name, format!("bad proposition name `{name}`")));
        }
        if self.prop_index.contains_key(name) {
            return Err(TaskError::Duplicate {
                line: line.no,
                what: "proposition",
                name: name.to_string(),
            });
        }
        let id = PropId(self.props.len() as u32);
        self.props.push(Proposition {
            name: name.to_string(),
            var,
            index,
        });
        self.prop_index.insert(name.to_string(), id);
        Ok(id)
    }

    fn var_line(&mut self, line: &Line) -> Result<(), TaskError> {
        let (name, values) = line
            .text
            .split_once('=')
            .ok_or_else(|| line.err(line.text, "expected `name = p1 | p2 | ...`"))?;
        let name = name.trim();
        if !is_name(name) || name.starts_with('!') {
            return Err(line.err(name, format!("bad variable name `{name}`")));
        }
        if self.var_index.contains_key(name) {
            return Err(TaskError::Duplicate {
                line: line.no,
                what: "variable",
                name: name.to_string(),
            });
        }
        let vals: Vec<&str> = values.split('|').map(str::trim).collect();
        if vals.iter().any(|v| v.is_empty()) {
            return Err(line.err(values, "empty value in domain"));
        }
        let var = VarId(self.vars.len() as u32);
        let singleton = vals.len() == 1;
        let mut domain = Vec::new();
        for (k, v) in vals.iter().enumerate() {
            if v.starts_with('!') {
                return Err(line.err(v, "`!` is reserved for singleton negations"));
            }
            domain.push(self.add_prop(line, v, var, k)?);
        }
        if singleton {
            let neg = format!("!{}", vals[0]);
            domain.push(self.add_prop(line, &neg, var, 1)?);
        }
        self.vars.push(StateVariable {
            name: name.to_string(),
            domain,
            singleton,
        });
        self.var_index.insert(name.to_string(), var);
        Ok(())
    }

    fn resolve_var(&self, line: &Line, tok: &str) -> Result<VarId, TaskError> {
        self.var_index
            .get(tok)
            .copied()
            .ok_or_else(|| TaskError::Undeclared {
                line: line.no,
                col: line.col_of(tok),
                what: "variable",
                name: tok.to_string(),
            })
    }

    fn bn_line(&mut self, line: &Line) -> Result<(), TaskError> {
        let text = line.text;
        if let Some(rest) = keyword(text, "node") {
            let (head, parents) = match rest.split_once('|') {
                Some((h, p)) => (h.trim(), p.trim()),
                None => (rest.trim(), ""),
            };
            let var = self.resolve_var(line, head)?;
            if self.nodes.iter().any(|n| n.var == var) {
                return Err(TaskError::Duplicate {
                    line: line.no,
                    what: "bn node",
                    name: head.to_string(),
                });
            }
            let mut ps = Vec::new();
            for tok in tokens(parents) {
                let p = self.resolve_var(line, tok)?;
                if ps.contains(&p) {
                    return Err(TaskError::Duplicate {
                        line: line.no,
                        what: "parent",
                        name: tok.to_string(),
                    });
                }
                ps.push(p);
            }
            self.nodes.push(BnNode {
                var,
                parents: ps,
                rows: Vec::new(),
            });
            Ok(())
        } else if let Some(rest) = keyword(text, "row") {
            let node_var = match self.nodes.last() {
                Some(n) => n.var,
                None => return Err(line.err(text, "`row` before any `node`")),
            };
            let (cond, dist) = rest
                .split_once(':')
                .ok_or_else(|| line.err(rest, "expected `row <literals|*>: p=w, ...`"))?;
            let condition = self.resolve_list(line, cond)?;
            let domain = self.vars[node_var.idx()].domain.clone();
            let mut probs = vec![0.0; domain.len()];
            let mut seen = vec![false; domain.len()];
            for item in dist.split(',') {
                let item = item.trim();
                if item.is_empty() {
                    continue;
                }
                let (n, w) = item
                    .split_once('=')
                    .ok_or_else(|| line.err(item, "expected `p=w`"))?;
                let n = n.trim();
                let p = self.resolve(line, n)?;
                let k = domain.iter().position(|d| *d == p).ok_or_else(|| {
                    line.err(n, format!("`{n}` is not a value of this node's variable"))
                })?;
                if seen[k] {
                    return Err(TaskError::Duplicate {
                        line: line.no,
                        what: "row entry",
                        name: n.to_string(),
                    });
                }
                seen[k] = true;
                probs[k] = parse_number(w).ok_or_else(|| line.err(w, format!("bad number `{}`", w.trim())))?;
            }
            self.nodes.last_mut().unwrap().rows.push(CptRow {
                condition,
                dist: probs,
            });
            Ok(())
        } else {
            Err(line.err(text, "expected `node` or `row`"))
        }
    }

    fn action_line(
        &mut self,
        line: &Line,
        current_effect: &mut Option<(usize, usize)>,
    ) -> Result<(), TaskError> {
        let text = line.text;
        if let Some(rest) = keyword(text, "action") {
            let name = rest.trim();
            if !is_name(name) {
                return Err(line.err(rest, format!("bad action name `{name}`")));
            }
            if self.action_index.contains_key(name) {
                return Err(TaskError::Duplicate {
                    line: line.no,
                    what: "action",
                    name: name.to_string(),
                });
            }
            self.action_index
                .insert(name.to_string(), ActionId(self.actions.len() as u32));
            self.actions.push(Action {
                name: name.to_string(),
                pre: Vec::new(),
                effects: Vec::new(),
            });
            *current_effect = None;
            return Ok(());
        }
        let a = match self.actions.len() {
            0 => return Err(line.err(text, "expected `action <name>`")),
            n => n - 1,
        };
        if let Some(rest) = text.strip_prefix("pre:") {
            let lits = self.resolve_list(line, rest)?;
            self.actions[a].pre.extend(lits);
            Ok(())
        } else if let Some(rest) = text.strip_prefix("effect") {
            let rest = rest.trim();
            let body = rest
                .strip_suffix(':')
                .ok_or_else(|| line.err(text, "effect header must end with `:`"))?
                .trim();
            let condition = if body.is_empty() {
                Vec::new()
            } else {
                let c = keyword(body, "when")
                    .ok_or_else(|| line.err(body, "expected `effect when <literals>:`"))?;
                self.resolve_list(line, c)?
            };
            self.actions[a].effects.push(Effect {
                condition,
                outcomes: Vec::new(),
            });
            *current_effect = Some((a, self.actions[a].effects.len() - 1));
            Ok(())
        } else if let Some(rest) = keyword(text, "outcome") {
            let (a, e) = current_effect.ok_or_else(|| line.err(text, "`outcome` outside an effect"))?;
            let (prob, fields) = rest
                .split_once(':')
                .ok_or_else(|| line.err(rest, "expected `outcome <prob>: add=..., del=...`"))?;
            let prob = parse_number(prob)
                .ok_or_else(|| line.err(prob, format!("bad number `{}`", prob.trim())))?;
            let mut add = Vec::new();
            let mut del = Vec::new();
            for field in fields.split(',') {
                let field = field.trim();
                if field.is_empty() {
                    continue;
                }
                if let Some(v) = field.strip_prefix("add=") {
                    add.extend(self.resolve_list(line, v)?);
                } else if let Some(v) = field.strip_prefix("del=") {
                    del.extend(self.resolve_list(line, v)?);
                } else {
                    return Err(line.err(field, "expected `add=` or `del=`"));
                }
            }
            self.actions[a].effects[e]
                .outcomes
                .push(Outcome { prob, add, del });
            Ok(())
        } else {
            Err(line.err(text, "expected `pre:`, `effect` or `outcome`"))
        }
    }
}

fn keyword<'a>(text: &'a str, kw: &str) -> Option<&'a str> {
    let rest = text.strip_prefix(kw)?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest.trim_start())
    } else {
        None
    }
}

/// Parses a whitespace/comma separated list of proposition names.
pub fn parse_literal_list(task: &PlanningTask, s: &str) -> Result<Vec<PropId>, TaskError> {
    let mut out = Vec::new();
    for tok in tokens(s) {
        out.push(task.prop_by_name(tok).ok_or_else(|| TaskError::Undeclared {
            line: 1,
            col: 1,
            what: "proposition",
            name: tok.to_string(),
        })?);
    }
    Ok(out)
}

/// Parses a plan file: one action name per line, `#` comments.
pub fn parse_plan(task: &PlanningTask, text: &str) -> Result<Vec<ActionId>, TaskError> {
    let mut plan = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let stripped = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        let name = stripped.trim();
        if name.is_empty() {
            continue;
        }
        let a = task.action_by_name(name).ok_or_else(|| TaskError::Undeclared {
            line: i + 1,
            col: raw.len() - raw.trim_start().len() + 1,
            what: "action",
            name: name.to_string(),
        })?;
        plan.push(a);
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::RUNNING_EXAMPLE;
    use super::*;

    #[test]
    fn running_example_shape() {
        let t = parse_task(RUNNING_EXAMPLE).unwrap();
        assert_eq!(t.vars.len(), 2);
        assert_eq!(t.props.len(), 4);
        assert_eq!(t.actions.len(), 4);
        assert_eq!(t.goal.len(), 2);
        assert!((t.theta - 0.9).abs() < 1e-12);
        let mbr = &t.actions[t.action_by_name("move-b-right").unwrap().idx()];
        assert_eq!(mbr.effects[0].outcomes.len(), 3);
        assert!(mbr.effects[0].outcomes[2].add.is_empty());
    }

    #[test]
    fn unnormalized_outcomes_rejected() {
        let src = RUNNING_EXAMPLE.replacen("outcome 0.7:", "outcome 0.6:", 1);
        let err = parse_task(&src).unwrap_err();
        assert!(err.to_string().contains("distribution not normalized"), "{err}");
    }

    #[test]
    fn vacuous_task_is_valid() {
        let t = parse_task("vars:\nbn:\nactions:\ngoal:\ntheta: 0\n").unwrap();
        assert!(t.actions.is_empty());
        assert!(t.goal.is_empty());
        assert_eq!(t.theta, 0.0);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_task("vars:\n  R = r1 | r2\nbn:\n  nod R\n").unwrap_err();
        match err {
            TaskError::Syntax { line, col, .. } => {
                assert_eq!(line, 4);
                assert_eq!(col, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn undeclared_and_duplicate() {
        let err = parse_task("vars:\n  R = r1 | r2\ngoal: r3\n").unwrap_err();
        assert!(matches!(err, TaskError::Undeclared { line: 3, col: 7, .. }), "{err:?}");
        let err = parse_task("vars:\n  R = r1 | r2\n  S = r1 | s\n").unwrap_err();
        assert!(matches!(err, TaskError::Duplicate { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn singleton_expands_to_negation() {
        let t = parse_task("vars:\n moat = moat\nbn:\n node moat\n row *: !moat=1\ngoal: !moat\ntheta: 1\n").unwrap();
        assert_eq!(t.vars[0].domain.len(), 2);
        assert_eq!(t.props[1].name, "!moat");
        assert_eq!(t.goal, vec![PropId(1)]);
    }

    #[test]
    fn fractions_are_accepted() {
        let t = parse_task("vars:\n X = a | b | c\nbn:\n node X\n row *: a=1/3, b=1/3, c=1/3\ngoal:\ntheta: 1/2\n").unwrap();
        assert!((t.theta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plan_file() {
        let t = parse_task(RUNNING_EXAMPLE).unwrap();
        let p = parse_plan(&t, "# plan\nmove-b-right\n\nmove-left\n").unwrap();
        assert_eq!(t.plan_names(&p), vec!["move-b-right", "move-left"]);
        assert!(parse_plan(&t, "fly\n").is_err());
    }
}
