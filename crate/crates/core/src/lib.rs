//! Conformant probabilistic planning: forward search over belief states kept
//! as weighted CNF formulas, exact weighted model counting, and a
//! probabilistic relaxed-planning-graph heuristic.

pub mod task;
pub mod oracle;
pub mod bn;
pub mod cnf;
pub mod wmc;
pub mod belief;
pub mod prpg;
pub mod extract;
pub mod search;
pub mod bench;
pub mod random;
