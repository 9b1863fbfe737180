use std::fmt::Write;

use super::{ActionId, PlanningTask, PropId};

fn names(task: &PlanningTask, lits: &[PropId]) -> String {
    lits.iter()
        .map(|p| task.prop(*p).name.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Serializes a task in the format accepted by [`super::parse_task`].
pub fn write_task(task: &PlanningTask) -> String {
    let mut s = String::new();
    s.push_str("vars:\n");
    for v in &task.vars {
        let shown: Vec<&str> = if v.singleton {
            vec![task.prop(v.domain[0]).name.as_str()]
        } else {
            v.domain.iter().map(|p| task.prop(*p).name.as_str()).collect()
        };
        let _ = writeln!(s, "  {} = {}", v.name, shown.join(" | "));
    }
    s.push_str("\nbn:\n");
    for n in &task.initial.nodes {
        let var = task.var(n.var);
        if n.parents.is_empty() {
            let _ = writeln!(s, "  node {}", var.name);
        } else {
            let ps: Vec<&str> = n.parents.iter().map(|p| task.var(*p).name.as_str()).collect();
            let _ = writeln!(s, "  node {} | {}", var.name, ps.join(" "));
        }
        for r in &n.rows {
            let cond = if r.condition.is_empty() {
                "*".to_string()
            } else {
                names(task, &r.condition)
            };
            let entries: Vec<String> = var
                .domain
                .iter()
                .zip(&r.dist)
                .filter(|(_, w)| **w != 0.0)
                .map(|(p, w)| format!("{}={}", task.prop(*p).name, w))
                .collect();
            let _ = writeln!(s, "    row {}: {}", cond, entries.join(", "));
        }
    }
    s.push_str("\nactions:\n");
    for a in &task.actions {
        let _ = writeln!(s, "  action {}", a.name);
        if !a.pre.is_empty() {
            let _ = writeln!(s, "    pre: {}", names(task, &a.pre));
        }
        for e in &a.effects {
            if e.condition.is_empty() {
                s.push_str("    effect:\n");
            } else {
                let _ = writeln!(s, "    effect when {}:", names(task, &e.condition));
            }
            for o in &e.outcomes {
                let mut fields = Vec::new();
                if !o.add.is_empty() {
                    fields.push(format!("add={}", names(task, &o.add)));
                }
                if !o.del.is_empty() {
                    fields.push(format!("del={}", names(task, &o.del)));
                }
                let _ = writeln!(s, "      outcome {}: {}", o.prob, fields.join(", "));
            }
        }
    }
    let _ = writeln!(s, "\ngoal: {}", names(task, &task.goal));
    let _ = writeln!(s, "theta: {}", task.theta);
    s
}

/// One action name per line.
pub fn write_plan(task: &PlanningTask, plan: &[ActionId]) -> String {
    let mut s = String::new();
    for a in plan {
        s.push_str(&task.action(*a).name);
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::RUNNING_EXAMPLE;
    use super::super::parse_task;
    use super::*;

    #[test]
    fn round_trip_running_example() {
        let t = parse_task(RUNNING_EXAMPLE).unwrap();
        let again = parse_task(&write_task(&t)).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn round_trip_singletons() {
        let src = "vars:\n moat = moat\nbn:\n node moat\n row *: moat=0.25, !moat=0.75\nactions:\n action dig\n effect when !moat:\n outcome 0.5: add=moat\n outcome 0.5:\ngoal: moat\ntheta: 0.5\n";
        let t = parse_task(src).unwrap();
        assert_eq!(t, parse_task(&write_task(&t)).unwrap());
    }
}
