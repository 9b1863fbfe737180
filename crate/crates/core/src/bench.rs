//! Generators for the benchmark families, emitting task-file text.

use std::collections::BTreeMap;
use std::fmt::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    SafeUni,
    SafeCub,
    CubeUni,
    CubeCub,
    CubeCenter,
    Bomb,
    Sandcastle,
    SlipperyGripper,
    WalkGrid1d,
    WalkGrid2d,
    LogisticsL,
    LogisticsLL,
}

pub const FAMILIES: [Family; 12] = [
    Family::SafeUni,
    Family::SafeCub,
    Family::CubeUni,
    Family::CubeCub,
    Family::CubeCenter,
    Family::Bomb,
    Family::Sandcastle,
    Family::SlipperyGripper,
    Family::WalkGrid1d,
    Family::WalkGrid2d,
    Family::LogisticsL,
    Family::LogisticsLL,
];

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::SafeUni => "safe-uni",
            Family::SafeCub => "safe-cub",
            Family::CubeUni => "cube-uni",
            Family::CubeCub => "cube-cub",
            Family::CubeCenter => "cube-center",
            Family::Bomb => "bomb",
            Family::Sandcastle => "sandcastle",
            Family::SlipperyGripper => "slippery-gripper",
            Family::WalkGrid1d => "walkgrid-1d",
            Family::WalkGrid2d => "walkgrid-2d",
            Family::LogisticsL => "logistics-L",
            Family::LogisticsLL => "logistics-LL",
        }
    }

    /// Names of the integer parameters, in order.
    pub fn params(self) -> &'static [&'static str] {
        match self {
            Family::SafeUni | Family::SafeCub => &["n"],
            Family::CubeUni | Family::CubeCub | Family::CubeCenter => &["n"],
            Family::Bomb => &["n", "m"],
            Family::Sandcastle | Family::SlipperyGripper => &[],
            Family::WalkGrid1d | Family::WalkGrid2d => &["n"],
            Family::LogisticsL | Family::LogisticsLL => &["x", "y", "z"],
        }
    }

    /// Whether the seed influences the output.
    pub fn seeded(self) -> bool {
        matches!(self, Family::LogisticsL | Family::LogisticsLL)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FAMILIES
            .iter()
            .copied()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| BenchError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BenchError {
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("{family} takes {expected} parameter(s), got {got}")]
    Arity { family: Family, expected: usize, got: usize },
    #[error("{family}: {msg}")]
    InvalidParams { family: Family, msg: String },
    #[error("theta {0} outside [0,1]")]
    Theta(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSpec {
    pub family: Family,
    pub params: Vec<usize>,
    pub theta: f64,
    pub seed: u64,
}

impl BenchSpec {
    pub fn new(family: Family, params: &[usize], theta: f64) -> Self {
        BenchSpec {
            family,
            params: params.to_vec(),
            theta,
            seed: 0,
        }
    }

    /// Instance id such as `bomb-5-5` or `logistics-LL-2-2-2`.
    pub fn name(&self) -> String {
        let mut s = self.family.as_str().to_string();
        for p in &self.params {
            let _ = write!(s, "-{p}");
        }
        if self.family.seeded() && self.seed != 0 {
            let _ = write!(s, "-s{}", self.seed);
        }
        s
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let family = self.family;
        let want = family.params().len();
        if self.params.len() != want {
            return Err(BenchError::Arity {
                family,
                expected: want,
                got: self.params.len(),
            });
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(BenchError::Theta(self.theta));
        }
        let bad = |msg: &str| {
            Err(BenchError::InvalidParams {
                family,
                msg: msg.to_string(),
            })
        };
        let p = &self.params;
        match family {
            Family::SafeUni | Family::SafeCub if p[0] < 2 => bad("n must be at least 2"),
            Family::CubeUni | Family::CubeCub | Family::CubeCenter if p[0] < 2 => bad("n must be at least 2"),
            Family::Bomb if p[0] == 0 || p[1] == 0 => bad("n and m must be positive"),
            Family::WalkGrid1d | Family::WalkGrid2d if p[0] < 2 => bad("n must be at least 2"),
            Family::LogisticsL | Family::LogisticsLL if p[0] == 0 || p[1] < 2 || p[2] == 0 => {
                bad("need x >= 1, y >= 2 and z >= 1")
            }
            _ => Ok(()),
        }
    }
}

/// Emits the task file for `spec`.
pub fn generate(spec: &BenchSpec) -> Result<String, BenchError> {
    spec.validate()?;
    let p = &spec.params;
    let mut w = TaskText::default();
    match spec.family {
        Family::SafeUni => safe(&mut w, p[0], false),
        Family::SafeCub => safe(&mut w, p[0], true),
        Family::CubeUni => cube(&mut w, p[0], false, false),
        Family::CubeCub => cube(&mut w, p[0], true, false),
        Family::CubeCenter => cube(&mut w, p[0], false, true),
        Family::Bomb => bomb(&mut w, p[0], p[1]),
        Family::Sandcastle => sandcastle(&mut w),
        Family::SlipperyGripper => slippery_gripper(&mut w),
        Family::WalkGrid1d => walkgrid_1d(&mut w, p[0]),
        Family::WalkGrid2d => walkgrid_2d(&mut w, p[0]),
        Family::LogisticsL => logistics(&mut w, p[0], p[1], p[2], false, spec.seed),
        Family::LogisticsLL => logistics(&mut w, p[0], p[1], p[2], true, spec.seed),
    }
    Ok(w.finish(&format!("{} generated instance", spec.name()), spec.theta))
}

/// Weight of position `i` in `1..=n` proportional to `(n - i)^3`.
pub fn cubic_prior(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|i| ((n - i) as f64).powi(3)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

pub fn uniform_prior(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

#[derive(Default)]
struct TaskText {
    vars: String,
    bn: String,
    actions: String,
    goal: Vec<String>,
}

impl TaskText {
    fn var(&mut self, name: &str, values: &[String]) {
        let _ = writeln!(self.vars, "  {name} = {}", values.join(" | "));
    }

    fn flag(&mut self, name: &str) {
        let _ = writeln!(self.vars, "  {name} = {name}");
    }

    /// Root node with a single unconditional row.
    fn root(&mut self, name: &str, entries: &[(String, f64)]) {
        let _ = writeln!(self.bn, "  node {name}");
        let items: Vec<String> = entries
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(n, w)| format!("{n}={w}"))
            .collect();
        let _ = writeln!(self.bn, "    row *: {}", items.join(", "));
    }

    /// Prior over one root variable.
    fn prior(&mut self, name: &str, values: &[String], dist: &[f64]) {
        let entries: Vec<(String, f64)> = values.iter().cloned().zip(dist.iter().copied()).collect();
        self.root(name, &entries);
    }

    fn fixed(&mut self, name: &str, value: &str) {
        self.root(name, &[(value.to_string(), 1.0)]);
    }

    fn action(&mut self, name: &str, pre: &str) {
        let _ = writeln!(self.actions, "  action {name}");
        if !pre.is_empty() {
            let _ = writeln!(self.actions, "    pre: {pre}");
        }
    }

    fn effect(&mut self, cond: &str, outcomes: &[(f64, &str)]) {
        if cond.is_empty() {
            self.actions.push_str("    effect:\n");
        } else {
            let _ = writeln!(self.actions, "    effect when {cond}:");
        }
        for (p, body) in outcomes {
            let _ = writeln!(self.actions, "      outcome {p}: {body}");
        }
    }

    fn finish(self, title: &str, theta: f64) -> String {
        format!(
            "# {title}\nvars:\n{}\nbn:\n{}\nactions:\n{}\ngoal: {}\ntheta: {theta}\n",
            self.vars,
            self.bn,
            self.actions,
            self.goal.join(" ")
        )
    }
}

fn move_to(from: &str, to: &str) -> String {
    format!("add={to}, del={from}")
}

fn safe(w: &mut TaskText, n: usize, cubic: bool) {
    let combos: Vec<String> = (1..=n).map(|i| format!("c{i}")).collect();
    w.var("C", &combos);
    w.flag("open");
    let dist = if cubic { cubic_prior(n) } else { uniform_prior(n) };
    w.prior("C", &combos, &dist);
    w.fixed("open", "!open");
    for c in &combos {
        w.action(&format!("try-{c}"), "");
        w.effect(c, &[(1.0, "add=open")]);
    }
    w.goal.push("open".into());
}

fn cube(w: &mut TaskText, n: usize, cubic: bool, center: bool) {
    let dist = if cubic { cubic_prior(n) } else { uniform_prior(n) };
    for d in ["x", "y", "z"] {
        let vals: Vec<String> = (1..=n).map(|i| format!("{d}{i}")).collect();
        w.var(&d.to_uppercase(), &vals);
    }
    for d in ["x", "y", "z"] {
        let vals: Vec<String> = (1..=n).map(|i| format!("{d}{i}")).collect();
        w.prior(&d.to_uppercase(), &vals, &dist);
    }
    for d in ["x", "y", "z"] {
        w.action(&format!("dec-{d}"), "");
        for i in 2..=n {
            w.effect(&format!("{d}{i}"), &[(1.0, &move_to(&format!("{d}{i}"), &format!("{d}{}", i - 1)))]);
        }
        w.action(&format!("inc-{d}"), "");
        for i in 1..n {
            w.effect(&format!("{d}{i}"), &[(1.0, &move_to(&format!("{d}{i}"), &format!("{d}{}", i + 1)))]);
        }
    }
    let target = if center { n.div_ceil(2) } else { 1 };
    for d in ["x", "y", "z"] {
        w.goal.push(format!("{d}{target}"));
    }
}

fn bomb(w: &mut TaskText, n: usize, m: usize) {
    for i in 1..=n {
        w.flag(&format!("armed{i}"));
    }
    for j in 1..=m {
        w.flag(&format!("clogged{j}"));
    }
    let p = 1.0 / n as f64;
    for i in 1..=n {
        let a = format!("armed{i}");
        w.prior(&a, &[a.clone(), format!("!{a}")], &[p, 1.0 - p]);
    }
    for j in 1..=m {
        w.fixed(&format!("clogged{j}"), &format!("!clogged{j}"));
    }
    for i in 1..=n {
        for j in 1..=m {
            w.action(&format!("dunk-b{i}-t{j}"), &format!("!clogged{j}"));
            w.effect(&format!("armed{i}"), &[(1.0, &format!("del=armed{i}"))]);
            w.effect("", &[(1.0, &format!("add=clogged{j}"))]);
        }
    }
    for j in 1..=m {
        w.action(&format!("flush-t{j}"), "");
        w.effect("", &[(1.0, &format!("del=clogged{j}"))]);
    }
    for i in 1..=n {
        w.goal.push(format!("!armed{i}"));
    }
}

fn sandcastle(w: &mut TaskText) {
    w.flag("moat");
    w.flag("castle");
    w.fixed("moat", "!moat");
    w.fixed("castle", "!castle");
    w.action("dig-moat", "");
    w.effect("", &[(0.5, "add=moat"), (0.5, "")]);
    w.action("erect-castle", "");
    w.effect("moat", &[(0.67, "add=castle"), (0.165, "del=moat"), (0.165, "")]);
    w.effect("!moat", &[(0.25, "add=castle"), (0.75, "")]);
    w.goal.push("castle".into());
}

fn slippery_gripper(w: &mut TaskText) {
    for f in ["grip-dry", "grip-dirty", "block-painted", "block-held"] {
        w.flag(f);
    }
    w.prior("grip-dry", &["grip-dry".into(), "!grip-dry".into()], &[0.7, 0.3]);
    w.fixed("grip-dirty", "!grip-dirty");
    w.fixed("block-painted", "!block-painted");
    w.fixed("block-held", "!block-held");
    w.action("dry", "");
    w.effect("", &[(0.8, "add=grip-dry"), (0.2, "")]);
    w.action("clean", "");
    w.effect("", &[(0.85, "del=grip-dirty"), (0.15, "")]);
    w.action("paint", "");
    w.effect("", &[(1.0, "add=block-painted")]);
    w.effect("block-held", &[(1.0, "add=grip-dirty")]);
    w.effect("!block-held", &[(0.1, "add=grip-dirty"), (0.9, "")]);
    w.action("pickup", "");
    w.effect("grip-dry", &[(0.95, "add=block-held"), (0.05, "")]);
    w.effect("!grip-dry", &[(0.5, "add=block-held"), (0.5, "")]);
    w.goal.extend(["block-held", "block-painted", "!grip-dirty"].map(String::from));
}

fn walkgrid_1d(w: &mut TaskText, n: usize) {
    let cells: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    w.var("X", &cells);
    w.fixed("X", "x1");
    w.action("right", "");
    for i in 1..n {
        w.effect(&cells[i - 1], &[(0.8, &move_to(&cells[i - 1], &cells[i])), (0.2, "")]);
    }
    w.action("left", "");
    for i in 2..=n {
        w.effect(&cells[i - 1], &[(0.8, &move_to(&cells[i - 1], &cells[i - 2])), (0.2, "")]);
    }
    w.goal.push(cells[n - 1].clone());
}

fn walkgrid_2d(w: &mut TaskText, n: usize) {
    let cell = |x: usize, y: usize| format!("c{x}-{y}");
    let cells: Vec<String> = (1..=n).flat_map(|x| (1..=n).map(move |y| (x, y))).map(|(x, y)| cell(x, y)).collect();
    w.var("Pos", &cells);
    w.fixed("Pos", &cell(1, 1));
    let dirs: [(&str, (i64, i64)); 4] = [("right", (1, 0)), ("left", (-1, 0)), ("up", (0, 1)), ("down", (0, -1))];
    let step = |x: usize, y: usize, (dx, dy): (i64, i64)| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if (1..=n as i64).contains(&nx) && (1..=n as i64).contains(&ny) {
            (nx as usize, ny as usize)
        } else {
            (x, y)
        }
    };
    for (name, d) in dirs {
        let lateral = [(d.1, d.0), (-d.1, -d.0)];
        w.action(name, "");
        for x in 1..=n {
            for y in 1..=n {
                let mut dest: BTreeMap<(usize, usize), f64> = BTreeMap::new();
                *dest.entry(step(x, y, d)).or_default() += 0.8;
                for l in lateral {
                    *dest.entry(step(x, y, l)).or_default() += 0.1;
                }
                if dest.len() == 1 && dest.contains_key(&(x, y)) {
                    continue;
                }
                let here = cell(x, y);
                let bodies: Vec<(f64, String)> = dest
                    .into_iter()
                    .map(|((tx, ty), p)| {
                        let body = if (tx, ty) == (x, y) { String::new() } else { move_to(&here, &cell(tx, ty)) };
                        ((p * 1e12).round() / 1e12, body)
                    })
                    .collect();
                let refs: Vec<(f64, &str)> = bodies.iter().map(|(p, b)| (*p, b.as_str())).collect();
                w.effect(&here, &refs);
            }
        }
    }
    w.goal.push(cell(n, n));
}

/// One truck per city, one airplane, the first location of each city is
/// its airport.
fn logistics(w: &mut TaskText, x: usize, y: usize, z: usize, uncertain: bool, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loc = |c: usize, l: usize| format!("l{c}-{l}");
    let all_locs: Vec<String> = (1..=y).flat_map(|c| (1..=x).map(move |l| loc(c, l))).collect();
    let airports: Vec<String> = (1..=y).map(|c| loc(c, 1)).collect();
    for c in 1..=y {
        let vals: Vec<String> = (1..=x).map(|l| format!("t{c}-at-{}", loc(c, l))).collect();
        w.var(&format!("T{c}"), &vals);
    }
    let plane_vals: Vec<String> = airports.iter().map(|a| format!("a-at-{a}")).collect();
    w.var("A", &plane_vals);
    let pkg_vals = |p: usize| -> Vec<String> {
        let mut v: Vec<String> = all_locs.iter().map(|l| format!("p{p}-at-{l}")).collect();
        v.extend((1..=y).map(|c| format!("p{p}-in-t{c}")));
        v.push(format!("p{p}-in-a"));
        v
    };
    for p in 1..=z {
        w.var(&format!("P{p}"), &pkg_vals(p));
    }
    for c in 1..=y {
        w.fixed(&format!("T{c}"), &format!("t{c}-at-{}", loc(c, 1)));
    }
    w.fixed("A", &plane_vals[0]);
    for p in 1..=z {
        let city = rng.gen_range(1..=y);
        let vals = pkg_vals(p);
        let mut dist = vec![0.0; vals.len()];
        if uncertain {
            for l in 1..=x {
                dist[(city - 1) * x + l - 1] = 1.0 / x as f64;
            }
        } else {
            dist[(city - 1) * x + rng.gen_range(0..x)] = 1.0;
        }
        w.prior(&format!("P{p}"), &vals, &dist);
        let mut goal_city = rng.gen_range(1..y);
        if goal_city >= city {
            goal_city += 1;
        }
        w.goal.push(format!("p{p}-at-{}", loc(goal_city, rng.gen_range(1..=x))));
    }
    for c in 1..=y {
        for a in 1..=x {
            for b in 1..=x {
                if a != b {
                    let (from, to) = (format!("t{c}-at-{}", loc(c, a)), format!("t{c}-at-{}", loc(c, b)));
                    w.action(&format!("drive-t{c}-{}-{}", loc(c, a), loc(c, b)), &from);
                    w.effect("", &[(1.0, &move_to(&from, &to))]);
                }
            }
        }
    }
    for (i, a) in airports.iter().enumerate() {
        for (j, b) in airports.iter().enumerate() {
            if i != j {
                w.action(&format!("fly-{a}-{b}"), &plane_vals[i]);
                w.effect("", &[(1.0, &move_to(&plane_vals[i], &plane_vals[j]))]);
            }
        }
    }
    for p in 1..=z {
        for c in 1..=y {
            for l in 1..=x {
                let (at, truck_at, inside) = (format!("p{p}-at-{}", loc(c, l)), format!("t{c}-at-{}", loc(c, l)), format!("p{p}-in-t{c}"));
                w.action(&format!("load-p{p}-t{c}-{}", loc(c, l)), &truck_at);
                w.effect(&at, &[(0.875, &move_to(&at, &inside)), (0.125, "")]);
                w.action(&format!("unload-p{p}-t{c}-{}", loc(c, l)), &truck_at);
                w.effect(&inside, &[(0.75, &move_to(&inside, &at)), (0.25, "")]);
            }
        }
        for (i, a) in airports.iter().enumerate() {
            let (at, inside) = (format!("p{p}-at-{a}"), format!("p{p}-in-a"));
            w.action(&format!("load-p{p}-a-{a}"), &plane_vals[i]);
            w.effect(&at, &[(0.9, &move_to(&at, &inside)), (0.1, "")]);
            w.action(&format!("unload-p{p}-a-{a}"), &plane_vals[i]);
            w.effect(&inside, &[(0.8, &move_to(&inside, &at)), (0.2, "")]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::plan_probability;
    use crate::task::{parse_task, validate_task};

    fn task(f: Family, p: &[usize], theta: f64) -> crate::task::PlanningTask {
        let text = generate(&BenchSpec::new(f, p, theta)).unwrap();
        parse_task(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
    }

    #[test]
    fn every_family_parses_and_validates() {
        for f in FAMILIES {
            let params: Vec<usize> = f.params().iter().map(|_| 2).collect();
            let t = task(f, &params, 0.5);
            assert!(validate_task(&t).is_empty(), "{f}");
        }
    }

    #[test]
    fn safe_uni_counts() {
        let t = task(Family::SafeUni, &[70], 0.5);
        assert_eq!(t.actions.len(), 70);
        let d = &t.initial.nodes[0].rows[0].dist;
        assert!(d.iter().all(|x| (x - 1.0 / 70.0).abs() < 1e-12));
    }

    #[test]
    fn safe_uni_k_tries_give_k_over_n() {
        let t = task(Family::SafeUni, &[6], 1.0);
        for k in 0..=6 {
            let plan: Vec<_> = (0..k).map(|i| crate::task::ActionId(i as u32)).collect();
            let p = plan_probability(&t, &plan, 1 << 16).unwrap();
            assert!((p - k as f64 / 6.0).abs() < 1e-9, "{k}: {p}");
        }
    }

    #[test]
    fn safe_cub_last_combination_impossible() {
        let d = cubic_prior(5);
        assert_eq!(d[4], 0.0);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn sandcastle_shape() {
        let t = task(Family::Sandcastle, &[], 0.5);
        assert_eq!((t.vars.len(), t.actions.len()), (2, 2));
        let erect = &t.actions[1];
        assert_eq!(erect.effects[0].outcomes[0].prob, 0.67);
        assert_eq!(erect.effects[0].outcomes[1].prob, 0.165);
    }

    #[test]
    fn bomb_shape() {
        let t = task(Family::Bomb, &[2, 2], 0.5);
        assert_eq!(t.actions.iter().filter(|a| a.name.starts_with("dunk")).count(), 4);
        assert_eq!(t.actions.iter().filter(|a| a.name.starts_with("flush")).count(), 2);
        assert_eq!(t.initial.nodes[0].rows[0].dist, vec![0.5, 0.5]);
    }

    #[test]
    fn walkgrid_2d_outcomes_normalized() {
        let t = task(Family::WalkGrid2d, &[3], 0.5);
        for a in &t.actions {
            for e in &a.effects {
                let s: f64 = e.outcomes.iter().map(|o| o.prob).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn seeded_families_are_deterministic() {
        let mut s = BenchSpec::new(Family::LogisticsLL, &[2, 2, 2], 0.5);
        s.seed = 7;
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
    }

    #[test]
    fn bad_params_rejected() {
        assert!(matches!(
            generate(&BenchSpec::new(Family::Bomb, &[2], 0.5)),
            Err(BenchError::Arity { .. })
        ));
        assert!(matches!(
            generate(&BenchSpec::new(Family::SafeUni, &[1], 0.5)),
            Err(BenchError::InvalidParams { .. })
        ));
        assert_eq!(generate(&BenchSpec::new(Family::Sandcastle, &[], 1.5)), Err(BenchError::Theta(1.5)));
        assert_eq!("logistics-LL".parse::<Family>(), Ok(Family::LogisticsLL));
        assert!("grid".parse::<Family>().is_err());
    }
}
