use std::collections::{HashSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

use serde::Serialize;

use super::plan::SweepPlan;
use super::store::{coupling_nano, now, FailedPoint, RecordStore, SweepRecord};
use crate::error::{Error, Result};
use crate::mps::MpsState;
use crate::observables::{measure_point_dmrg, measure_point_exact, EngineConfig};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    /// Allow the store to already hold records of this plan and fill in the rest.
    pub resume: bool,
    /// Stop after this many new points (used to emulate an interrupted run).
    pub stop_after: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 1, resume: false, stop_after: None }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub plan_id: String,
    pub total: usize,
    pub already_present: usize,
    pub pending: usize,
    pub computed: usize,
    pub not_converged: usize,
    pub failed: Vec<FailedPoint>,
}

enum Task {
    /// Points of one length solved in order, each warm-started from the last success.
    Chain { length: usize, points: Vec<(i64, f64)>, warm: Option<(i64, MpsState)> },
    Single { length: usize, index: i64, d: f64 },
}

enum Message {
    Done { record: SweepRecord, checkpoint: Option<(String, i64, Box<MpsState>)> },
    Failed(FailedPoint),
}

/// Evaluate every grid point of `plan` that the store does not hold yet.
///
/// Results are written by the calling thread only, so each partition log has a
/// single writer however many workers solve points.
pub fn run_plan(plan: &SweepPlan, store: &RecordStore, opts: &RunOptions) -> Result<RunSummary> {
    plan.validate()?;
    let variant = plan.model_variant()?;
    let label = variant.label();
    let epsilon = plan.engine.epsilon();
    let grid = plan.grid();
    let chained = plan.warm_start && matches!(plan.engine, EngineConfig::Dmrg(_));

    let mut summary = RunSummary { plan_id: plan.id.clone(), ..RunSummary::default() };
    let mut tasks = VecDeque::new();
    for &length in &plan.lengths {
        let partition = plan.partition(length)?;
        let present: HashSet<i64> = store
            .load_partition(&partition)?
            .iter()
            .filter(|r| r.delta == plan.delta && r.epsilon == epsilon && r.variant == label)
            .map(|r| coupling_nano(r.d_index, r.grid_step))
            .collect();
        let missing: Vec<(i64, f64)> =
            grid.iter().copied().filter(|&(i, _)| !present.contains(&coupling_nano(i, plan.grid_step))).collect();
        summary.total += grid.len();
        summary.already_present += grid.len() - missing.len();
        summary.pending += missing.len();
        if missing.is_empty() {
            continue;
        }
        if chained {
            let first = missing[0].0;
            let last_ok = grid
                .iter()
                .map(|&(i, _)| i)
                .filter(|&i| i < first && present.contains(&coupling_nano(i, plan.grid_step)))
                .max();
            let warm = match last_ok {
                Some(i) => store.load_checkpoint(&partition, i)?.map(|s| (i, s)),
                None => None,
            };
            tasks.push_back(Task::Chain { length, points: missing, warm });
        } else {
            tasks.extend(missing.into_iter().map(|(index, d)| Task::Single { length, index, d }));
        }
    }
    if summary.already_present > 0 && !opts.resume {
        return Err(Error::InvalidInput(format!(
            "store already holds {} of the {} points of plan '{}'; rerun with --resume",
            summary.already_present, summary.total, plan.id
        )));
    }

    let queue = Mutex::new(tasks);
    let budget = AtomicUsize::new(opts.stop_after.unwrap_or(usize::MAX));
    let (tx, rx) = mpsc::channel::<Message>();
    let workers = opts.workers.max(1);
    let mut write_error: Option<Error> = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (queue, budget) = (&queue, &budget);
            scope.spawn(move || loop {
                let task = queue.lock().expect("task queue").pop_front();
                match task {
                    Some(t) => run_task(plan, t, budget, &tx),
                    None => break,
                }
            });
        }
        drop(tx);
        for msg in rx {
            if write_error.is_some() {
                continue;
            }
            let res = match msg {
                Message::Done { record, checkpoint } => {
                    summary.computed += 1;
                    if !record.converged {
                        summary.not_converged += 1;
                    }
                    persist(store, &record, checkpoint)
                }
                Message::Failed(f) => {
                    let r = store.append_failure(&f);
                    summary.failed.push(f);
                    r
                }
            };
            if let Err(e) = res {
                write_error = Some(e);
                budget.store(0, Ordering::SeqCst);
            }
        }
    });
    match write_error {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

fn persist(store: &RecordStore, record: &SweepRecord, checkpoint: Option<(String, i64, Box<MpsState>)>) -> Result<()> {
    match checkpoint {
        Some((partition, index, state)) => {
            store.save_checkpoint(&partition, index, &state)?;
            store.append(record)?;
            store.prune_checkpoints(&partition, &[index])
        }
        None => store.append(record),
    }
}

fn take_budget(budget: &AtomicUsize) -> bool {
    budget.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |b| b.checked_sub(1)).is_ok()
}

fn run_task(plan: &SweepPlan, task: Task, budget: &AtomicUsize, tx: &mpsc::Sender<Message>) {
    match task {
        Task::Single { length, index, d } => {
            if take_budget(budget) {
                let _ = tx.send(solve(plan, length, index, d, None).0);
            }
        }
        Task::Chain { length, points, warm } => {
            let mut state = warm.map(|w| w.1);
            for (index, d) in points {
                if !take_budget(budget) {
                    return;
                }
                let (msg, next) = solve(plan, length, index, d, state.as_ref());
                if next.is_some() {
                    state = next;
                }
                if tx.send(msg).is_err() {
                    return;
                }
            }
        }
    }
}

fn solve(plan: &SweepPlan, length: usize, index: i64, d: f64, warm: Option<&MpsState>) -> (Message, Option<MpsState>) {
    let outcome = plan.spec(length, d).and_then(|spec| match &plan.engine {
        EngineConfig::Ed => measure_point_exact(&spec, plan.delta).map(|p| (p, None)),
        EngineConfig::Dmrg(settings) => measure_point_dmrg(&spec, plan.delta, settings, warm).map(|(p, s)| (p, Some(s))),
    });
    match outcome {
        Ok((point, state)) => {
            let record = SweepRecord::from_point(&point, &plan.id, index, plan.grid_step);
            let checkpoint = match (&state, plan.warm_start) {
                (Some(s), true) => Some((record.partition(), index, Box::new(s.clone()))),
                _ => None,
            };
            (Message::Done { record, checkpoint }, state)
        }
        Err(e) => {
            let failure = FailedPoint {
                plan_id: plan.id.clone(),
                timestamp: now(),
                status: "failed".into(),
                variant: plan.model_variant().map(|v| v.label()).unwrap_or_default(),
                spin: plan.spin,
                length,
                d,
                d_index: index,
                grid_step: plan.grid_step,
                delta: plan.delta,
                epsilon: plan.engine.epsilon(),
                error: e.to_string(),
            };
            (Message::Failed(failure), None)
        }
    }
}
