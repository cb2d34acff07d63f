//! Growing file-transfer workload and the per-task state machine.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{Topology, VertexId};

/// Per-iteration file size increment in bytes.
pub const FILE_SIZE_STEP: u64 = 140_428;
/// Size of the first file; equal to the increment.
pub const MIN_FILE_SIZE: u64 = FILE_SIZE_STEP;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("transfer duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("need at least two LANs with hosts to build cross-LAN traffic")]
    SingleLan,
    #[error("event {event:?} is not valid in state {state:?} (task {task})")]
    IllegalTransition { task: u64, state: TaskState, event: TaskEvent },
}

/// `None` gives the first size; otherwise one step up the ladder.
pub fn next_file_size(prev: Option<u64>) -> u64 {
    match prev {
        None => MIN_FILE_SIZE,
        Some(p) => p + FILE_SIZE_STEP,
    }
}

/// Size of the file sent in iteration `n` (zero based).
pub fn file_size(iteration: u32) -> u64 {
    MIN_FILE_SIZE + u64::from(iteration) * FILE_SIZE_STEP
}

/// Bytes per second for a completed transfer.
pub fn transfer_rate(size: u64, duration: f64) -> Result<f64, TrafficError> {
    if duration.is_nan() || duration <= 0.0 {
        return Err(TrafficError::NonPositiveDuration(duration));
    }
    Ok(size as f64 / duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskState {
    Running,
    Executing,
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureCause {
    HostDown,
    PortDown,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TaskEvent {
    /// Scheduled start reached; transfer begins.
    Start,
    TransferDone,
    HostFailure,
    PortFailure,
    /// Run horizon reached before delivery.
    Timeout,
    Tick,
    AllPeersDone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTask {
    pub id: u64,
    /// Resend counter; replacements after a failure bump it.
    #[serde(default)]
    pub attempt: u32,
    pub src_host: VertexId,
    pub dst_host: VertexId,
    pub iteration: u32,
    pub size: u64,
    pub state: TaskState,
    #[serde(default)]
    pub failure_cause: Option<FailureCause>,
    pub start_t: f64,
    #[serde(default)]
    pub end_t: Option<f64>,
}

impl TransferTask {
    pub fn new(id: u64, src_host: VertexId, dst_host: VertexId, iteration: u32, start_t: f64) -> Self {
        Self {
            id,
            attempt: 0,
            src_host,
            dst_host,
            iteration,
            size: file_size(iteration),
            state: TaskState::Running,
            failure_cause: None,
            start_t,
            end_t: None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, TaskState::Completed | TaskState::Failed)
    }

    /// Log line for a task that reached a terminal state.
    pub fn record(&self) -> Option<TransferRecord> {
        let end = self.end_t?;
        if !self.is_terminal() {
            return None;
        }
        let duration = end - self.start_t;
        let rate = match self.state {
            TaskState::Completed => transfer_rate(self.size, duration).ok(),
            _ => None,
        };
        Some(TransferRecord {
            task_id: self.id,
            attempt: self.attempt,
            src: self.src_host,
            dst: self.dst_host,
            size: self.size,
            duration,
            rate,
            status: self.state,
            failure_cause: self.failure_cause,
            timestamp: end,
        })
    }
}

/// Result of one state-machine step. `spawned` carries the same-size resend
/// after a host or port failure, or the next-iteration task once all peers
/// are done.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub task: TransferTask,
    pub spawned: Option<TransferTask>,
}

pub fn step_task(task: &TransferTask, event: TaskEvent, now: f64) -> Result<Transition, TrafficError> {
    use TaskEvent as E;
    use TaskState as S;
    let mut next = task.clone();
    let mut spawned = None;
    match (task.state, event) {
        (S::Running, E::Tick) | (S::Executing, E::Tick) => {}
        (S::Running, E::Start) => {
            next.state = S::Executing;
            next.start_t = now;
        }
        (S::Executing, E::TransferDone) => {
            next.state = S::Completed;
            next.end_t = Some(now);
        }
        (S::Executing, E::HostFailure) | (S::Executing, E::PortFailure) => {
            let cause = if event == E::HostFailure { FailureCause::HostDown } else { FailureCause::PortDown };
            next.state = S::Failed;
            next.failure_cause = Some(cause);
            next.end_t = Some(now);
            // host restarted or port reactivated, then the same file goes again
            spawned = Some(TransferTask {
                attempt: task.attempt + 1,
                state: S::Executing,
                failure_cause: None,
                start_t: now,
                end_t: None,
                ..task.clone()
            });
        }
        (S::Executing, E::Timeout) | (S::Running, E::Timeout) => {
            next.state = S::Failed;
            next.failure_cause = Some(FailureCause::Timeout);
            next.end_t = Some(now);
        }
        (S::Completed, E::AllPeersDone) => {
            let mut succ = TransferTask::new(task.id, task.src_host, task.dst_host, task.iteration + 1, now);
            succ.size = next_file_size(Some(task.size));
            spawned = Some(succ);
        }
        (state, event) => return Err(TrafficError::IllegalTransition { task: task.id, state, event }),
    }
    Ok(Transition { task: next, spawned })
}

/// Draws one cross-LAN destination per host, then repeats that pairing for
/// `iterations` rounds with the file size ladder. Task ids are
/// `iteration * hosts + host index`.
pub fn build_schedule(topology: &Topology, iterations: u32, seed: u64) -> Result<Vec<TransferTask>, TrafficError> {
    let pairs = draw_pairs(topology, seed)?;
    let mut tasks = Vec::with_capacity(pairs.len() * iterations as usize);
    for it in 0..iterations {
        for (i, &(src, dst)) in pairs.iter().enumerate() {
            let id = u64::from(it) * pairs.len() as u64 + i as u64;
            tasks.push(TransferTask::new(id, src, dst, it, 0.0));
        }
    }
    Ok(tasks)
}

/// One `(src, dst)` per host, `dst` uniform over hosts in other LANs.
pub fn draw_pairs(topology: &Topology, seed: u64) -> Result<Vec<(VertexId, VertexId)>, TrafficError> {
    let hosts = topology.hosts();
    let lans: std::collections::BTreeSet<_> = hosts.iter().filter_map(|&h| topology.lan_of(h)).collect();
    if lans.len() < 2 {
        return Err(TrafficError::SingleLan);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(hosts
        .iter()
        .map(|&src| {
            let lan = topology.lan_of(src);
            let others: Vec<VertexId> = hosts.iter().copied().filter(|&h| topology.lan_of(h) != lan).collect();
            (src, others[rng.gen_range(0..others.len())])
        })
        .collect())
}

/// Terminal-state log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub task_id: u64,
    pub attempt: u32,
    pub src: VertexId,
    pub dst: VertexId,
    pub size: u64,
    pub duration: f64,
    pub rate: Option<f64>,
    pub status: TaskState,
    pub failure_cause: Option<FailureCause>,
    pub timestamp: f64,
}

/// Writes records as `timestamp,src,dst,size,duration,rate,status`.
pub fn write_transfer_csv<W: Write>(records: &[TransferRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "src", "dst", "size", "duration", "rate", "status"])?;
    for r in records {
        let status = match (r.status, r.failure_cause) {
            (TaskState::Failed, Some(c)) => format!("Failed({c:?})"),
            (s, _) => format!("{s:?}"),
        };
        w.write_record([
            r.timestamp.to_string(),
            r.src.to_string(),
            r.dst.to_string(),
            r.size.to_string(),
            r.duration.to_string(),
            r.rate.map(|x| x.to_string()).unwrap_or_default(),
            status,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{assign_roles, gen_erdos_renyi, DegreeBounds, LinkProfile};

    fn five_core_topology() -> Topology {
        let core = gen_erdos_renyi(5, 0.6, DegreeBounds::default(), 4).unwrap();
        assign_roles(&core, &LinkProfile::default()).unwrap()
    }

    #[test]
    fn size_ladder() {
        assert_eq!(next_file_size(None), 140_428);
        assert_eq!(next_file_size(Some(140_428)), 280_856);
        assert_eq!(next_file_size(Some(140_428 * 9)), 1_404_280);
        assert_eq!(file_size(0), 140_428);
        assert_eq!(file_size(9), 1_404_280);
    }

    #[test]
    fn rates() {
        assert_eq!(transfer_rate(1_404_280, 2.0).unwrap(), 702_140.0);
        assert_eq!(transfer_rate(140_428, 1.0).unwrap(), 140_428.0);
        assert_eq!(transfer_rate(0, 1.0).unwrap(), 0.0);
        assert_eq!(transfer_rate(1, 0.0), Err(TrafficError::NonPositiveDuration(0.0)));
        assert!(transfer_rate(1, -1.0).is_err());
    }

    #[test]
    fn schedule_is_cross_lan() {
        let topo = five_core_topology();
        let tasks = build_schedule(&topo, 1, 3).unwrap();
        assert_eq!(tasks.len(), 6);
        for t in &tasks {
            assert_ne!(topo.lan_of(t.src_host), topo.lan_of(t.dst_host));
            assert_eq!(t.state, TaskState::Running);
        }
    }

    #[test]
    fn schedule_ladder_and_determinism() {
        let topo = five_core_topology();
        let tasks = build_schedule(&topo, 3, 8).unwrap();
        assert_eq!(tasks, build_schedule(&topo, 3, 8).unwrap());
        for host in topo.hosts() {
            let sizes: Vec<u64> = tasks.iter().filter(|t| t.src_host == host).map(|t| t.size).collect();
            assert_eq!(sizes, vec![file_size(0), file_size(1), file_size(2)]);
        }
    }

    #[test]
    fn single_lan_rejected() {
        use crate::topology::{GraphParams, Link, Role, Vertex};
        let topo = Topology::from_parts(
            None,
            0,
            GraphParams::default(),
            vec![
                Vertex { id: 0, role: Role::Switch, lan: Some(0) },
                Vertex { id: 1, role: Role::Host, lan: Some(0) },
                Vertex { id: 2, role: Role::Host, lan: Some(0) },
            ],
            vec![
                Link { u: 0, v: 1, bandwidth_bytes_per_s: 1.0, prop_delay_s: 0.0 },
                Link { u: 0, v: 2, bandwidth_bytes_per_s: 1.0, prop_delay_s: 0.0 },
            ],
        )
        .unwrap();
        assert_eq!(build_schedule(&topo, 1, 0), Err(TrafficError::SingleLan));
    }

    #[test]
    fn state_machine_paths() {
        let t = TransferTask::new(7, 10, 20, 0, 0.0);
        let running = step_task(&t, TaskEvent::Tick, 0.1).unwrap();
        assert_eq!(running.task, t);
        assert!(running.spawned.is_none());

        let exec = step_task(&t, TaskEvent::Start, 0.5).unwrap().task;
        assert_eq!(exec.state, TaskState::Executing);
        assert_eq!(exec.start_t, 0.5);

        let done = step_task(&exec, TaskEvent::TransferDone, 2.5).unwrap().task;
        assert_eq!(done.state, TaskState::Completed);
        let rec = done.record().unwrap();
        assert_eq!(rec.duration, 2.0);
        assert_eq!(rec.rate, Some(t.size as f64 / 2.0));

        let next = step_task(&done, TaskEvent::AllPeersDone, 3.0).unwrap();
        let succ = next.spawned.unwrap();
        assert_eq!(succ.iteration, 1);
        assert_eq!(succ.size, file_size(1));
        assert_eq!(succ.state, TaskState::Running);
    }

    #[test]
    fn failures_resend_same_size() {
        let exec = step_task(&TransferTask::new(1, 0, 1, 4, 0.0), TaskEvent::Start, 0.0).unwrap().task;
        for (event, cause) in
            [(TaskEvent::HostFailure, FailureCause::HostDown), (TaskEvent::PortFailure, FailureCause::PortDown)]
        {
            let tr = step_task(&exec, event, 1.0).unwrap();
            assert_eq!(tr.task.state, TaskState::Failed);
            assert_eq!(tr.task.failure_cause, Some(cause));
            let resend = tr.spawned.unwrap();
            assert_eq!(resend.size, exec.size);
            assert_eq!(resend.state, TaskState::Executing);
            assert_eq!(resend.attempt, 1);
            assert_eq!(tr.task.record().unwrap().rate, None);
        }
        let timeout = step_task(&exec, TaskEvent::Timeout, 9.0).unwrap();
        assert_eq!(timeout.task.failure_cause, Some(FailureCause::Timeout));
        assert!(timeout.spawned.is_none());
    }

    #[test]
    fn illegal_transitions() {
        let t = TransferTask::new(1, 0, 1, 0, 0.0);
        assert!(matches!(step_task(&t, TaskEvent::TransferDone, 0.0), Err(TrafficError::IllegalTransition { .. })));
        assert!(step_task(&t, TaskEvent::AllPeersDone, 0.0).is_err());
        let exec = step_task(&t, TaskEvent::Start, 0.0).unwrap().task;
        assert!(step_task(&exec, TaskEvent::Start, 0.0).is_err());
    }

    #[test]
    fn transfer_csv_header() {
        let exec = step_task(&TransferTask::new(1, 2, 3, 0, 0.0), TaskEvent::Start, 0.0).unwrap().task;
        let done = step_task(&exec, TaskEvent::TransferDone, 1.0).unwrap().task;
        let mut buf = Vec::new();
        write_transfer_csv(&[done.record().unwrap()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "timestamp,src,dst,size,duration,rate,status\n1,2,3,140428,1,140428,Completed\n");
    }
}
