use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use probplan::oracle::simulate;
use probplan::search::{plan, SearchConfig, SearchStatus};
use probplan::task::PlanningTask;

use crate::{instance_name, load_task, BenchArgs, CliError, ValidateMode, EXIT_OK};

pub const HEADER: [&str; 11] = [
    "instance",
    "theta",
    "status",
    "t",
    "nodes",
    "length",
    "wmc_calls",
    "probability",
    "ci_low",
    "ci_high",
    "seed",
];

/// One (instance, θ) run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub instance: String,
    pub theta: f64,
    pub status: String,
    pub seconds: f64,
    pub nodes: usize,
    pub length: usize,
    pub wmc_calls: u64,
    /// Exact probability, or the Monte Carlo point estimate.
    pub probability: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub seed: u64,
}

impl RunRecord {
    fn failed(instance: String, theta: f64, status: &str, seed: u64) -> Self {
        RunRecord {
            instance,
            theta,
            status: status.to_string(),
            seconds: 0.0,
            nodes: 0,
            length: 0,
            wmc_calls: 0,
            probability: None,
            ci: None,
            seed,
        }
    }

    pub fn fields(&self) -> [String; 11] {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.9}")).unwrap_or_default();
        [
            self.instance.clone(),
            self.theta.to_string(),
            self.status.clone(),
            format!("{:.3}", self.seconds),
            self.nodes.to_string(),
            self.length.to_string(),
            self.wmc_calls.to_string(),
            opt(self.probability),
            opt(self.ci.map(|c| c.0)),
            opt(self.ci.map(|c| c.1)),
            self.seed.to_string(),
        ]
    }
}

/// Task files of `dir` in name order.
pub fn task_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.extension().is_some_and(|e| e == "task") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub struct Job {
    pub instance: String,
    pub task: Result<PlanningTask, String>,
    pub theta: Option<f64>,
}

/// Plans and validates one job.
pub fn run_job(job: &Job, cfg: &SearchConfig, mode: ValidateMode, samples: usize, seed: u64) -> RunRecord {
    let task = match &job.task {
        Ok(t) => t,
        Err(_) => return RunRecord::failed(job.instance.clone(), job.theta.unwrap_or(f64::NAN), "input-error", seed),
    };
    let mut task = task.clone();
    if let Some(t) = job.theta {
        task.theta = t;
    }
    let r = match plan(&task, cfg) {
        Ok(r) => r,
        Err(_) => return RunRecord::failed(job.instance.clone(), task.theta, "input-error", seed),
    };
    let mut rec = RunRecord {
        instance: job.instance.clone(),
        theta: task.theta,
        status: r.status.as_str().to_string(),
        seconds: r.stats.wall.as_secs_f64(),
        nodes: r.stats.nodes_evaluated,
        length: r.plan.len(),
        wmc_calls: r.stats.wmc_calls,
        probability: None,
        ci: None,
        seed,
    };
    if r.status == SearchStatus::PlanFound {
        let exact = if mode == ValidateMode::Exact { r.validated } else { None };
        match exact {
            Some(p) => rec.probability = Some(p),
            None => {
                if let Ok(m) = simulate(&task, &r.plan, samples, seed) {
                    rec.probability = Some(m.p_hat);
                    rec.ci = Some((m.lo, m.hi));
                }
            }
        }
    }
    rec
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = a.limits.config()?;
    let thetas: Vec<Option<f64>> = if a.theta.is_empty() {
        vec![None]
    } else {
        a.theta.iter().map(|t| Some(*t)).collect()
    };
    if let Some(t) = a.theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(CliError::Usage(format!("theta {t} outside [0,1]")));
    }
    let mut jobs = Vec::new();
    for f in task_files(&a.dir)? {
        let task = load_task(&f, None).map_err(|e| e.to_string());
        if let Err(e) = &task {
            let _ = writeln!(err, "error: {e}");
        }
        for t in &thetas {
            jobs.push(Job {
                instance: instance_name(&f),
                task: task.clone(),
                theta: *t,
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let rows: Vec<RunRecord> =
        pool.install(|| jobs.par_iter().map(|j| run_job(j, &cfg, a.mode, a.samples, a.seed)).collect());
    let sink: Box<dyn Write + '_> = match &a.output {
        Some(p) => Box::new(fs::File::create(p).map_err(|source| CliError::Io {
            path: p.clone(),
            source,
        })?),
        None => Box::new(out),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HEADER)?;
    for r in &rows {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: a.output.clone().unwrap_or_else(|| PathBuf::from("-")),
        source,
    })?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_sorted_and_filtered() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["b.task", "a.task", "notes.txt"] {
            fs::write(dir.path().join(n), "").unwrap();
        }
        let names: Vec<String> = task_files(dir.path()).unwrap().iter().map(|p| instance_name(p)).collect();
        assert_eq!(names, ["a", "b"]);
    }

    #[test]
    fn failed_row_leaves_numbers_empty() {
        let r = RunRecord::failed("x".into(), 0.5, "input-error", 3);
        assert_eq!(r.fields().join(","), "x,0.5,input-error,0.000,0,0,0,,,,3");
    }
}
