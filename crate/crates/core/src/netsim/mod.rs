//! Time-stepped fluid simulator over shortest-path forwarding with optional
//! policy-based overrides.
//!
//! Every tick each active flow injects up to its access-link budget into the
//! first hop. Each directed link then drains at most `floor(capacity * tick)`
//! bytes from the backlog that was present at the start of the tick, split
//! between flows in proportion to their eligible backlog. Drained bytes
//! become eligible on the next hop `max(1, ceil(prop_delay / tick))` ticks
//! later. Byte counts are integers, so conservation is exact.

mod log;
mod routing;

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::log::{read_event_csv, write_event_csv, PacketRecord};
pub use routing::{
    apply_pbr, build_routing_tables, lan_hosts_at, reachable, trace_route, PbrRule, RouteError, RoutingState, SdPair,
};

use crate::topology::{Role, Topology, VertexId};
use crate::traffic::{step_task, TaskEvent, TaskState, TransferRecord, TransferTask};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("tick must be positive, got {0}")]
    BadTick(f64),
    #[error("link {u}-{v} moves less than one byte per tick ({bandwidth} B/s at tick {tick} s)")]
    TickTooSmall { u: VertexId, v: VertexId, bandwidth: f64, tick: f64 },
    #[error("task {task}: {reason}")]
    BadTask { task: u64, reason: String },
    #[error("forwarding loop for {pair} at vertex {vertex} under rules [{rules}]")]
    ForwardingLoop { pair: SdPair, vertex: VertexId, rules: String },
    #[error(transparent)]
    Route(#[from] RouteError),
}

/// Run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Step length in seconds.
    pub tick: f64,
    /// Simulated time after which unfinished tasks time out.
    pub horizon: f64,
    /// Chance that a transfer attempt hits a host or port failure.
    pub failure_prob: f64,
    /// Seed for failure injection.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { tick: 0.01, horizon: 600.0, failure_prob: 0.0, seed: 0 }
    }
}

/// A topology plus the transfers to replay on it.
#[derive(Debug, Clone)]
pub struct Scenario<'a> {
    pub topology: &'a Topology,
    pub schedule: Vec<TransferTask>,
    pub config: SimConfig,
}

impl Scenario<'_> {
    fn validate(&self) -> Result<(), SimError> {
        if self.config.tick.is_nan() || self.config.tick <= 0.0 {
            return Err(SimError::BadTick(self.config.tick));
        }
        let n = self.topology.vertex_count();
        for t in &self.schedule {
            let bad = |reason: &str| SimError::BadTask { task: t.id, reason: reason.to_string() };
            if t.src_host >= n || t.dst_host >= n {
                return Err(bad("endpoint out of range"));
            }
            if self.topology.role(t.src_host) != Role::Host || self.topology.role(t.dst_host) != Role::Host {
                return Err(bad("endpoints must be hosts"));
            }
            if self.topology.lan_of(t.src_host) == self.topology.lan_of(t.dst_host) {
                return Err(bad("endpoints share a LAN"));
            }
            if t.size == 0 {
                return Err(bad("empty transfer"));
            }
        }
        Ok(())
    }
}

/// Byte accounting for one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteTotals {
    pub injected: u64,
    pub delivered: u64,
    pub queued: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub events: Vec<PacketRecord>,
    /// Final state of every task attempt, in creation order.
    pub tasks: Vec<TransferTask>,
    /// One record per terminal state reached.
    pub records: Vec<TransferRecord>,
    pub totals: ByteTotals,
    /// Time of the last delivery, or the horizon if tasks timed out.
    pub end_t: f64,
    pub ticks: u64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    bytes: u64,
    eligible: u64,
}

#[derive(Debug)]
struct DirLink {
    from: VertexId,
    to: VertexId,
    budget: u64,
    prop_delay: f64,
    prop_ticks: u64,
    queue: BTreeMap<u64, VecDeque<Segment>>,
}

#[derive(Debug)]
struct Flow {
    id: u64,
    task: usize,
    links: Vec<usize>,
    remaining: u64,
    inject_budget: u64,
    delivered: u64,
    size: u64,
    /// Failure trigger: delivered-byte threshold and event.
    failure: Option<(u64, TaskEvent)>,
    dead: bool,
    last_arrival: f64,
}

fn new_flow(
    id: u64,
    task_idx: usize,
    task: &TransferTask,
    paths: &BTreeMap<SdPair, Vec<usize>>,
    links: &[DirLink],
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Flow {
    let hops = paths[&SdPair { src: task.src_host, dst: task.dst_host }].clone();
    let failure = if cfg.failure_prob > 0.0 && rng.gen::<f64>() < cfg.failure_prob {
        let at = (task.size as f64 * rng.gen_range(0.1..0.9)) as u64;
        let event = if rng.gen::<bool>() { TaskEvent::HostFailure } else { TaskEvent::PortFailure };
        Some((at.max(1), event))
    } else {
        None
    };
    Flow {
        id,
        task: task_idx,
        inject_budget: links[hops[0]].budget,
        links: hops,
        remaining: task.size,
        delivered: 0,
        size: task.size,
        failure,
        dead: false,
        last_arrival: 0.0,
    }
}

/// Replays `scenario` under `state` and returns the event log and task
/// outcomes.
pub fn run(scenario: &Scenario<'_>, state: &RoutingState) -> Result<RunOutput, SimError> {
    scenario.validate()?;
    let topo = scenario.topology;
    let cfg = scenario.config;
    let tick = cfg.tick;

    let mut links = Vec::with_capacity(topo.links().len() * 2);
    let mut link_index = BTreeMap::new();
    for l in topo.links() {
        let raw = l.bandwidth_bytes_per_s * tick;
        if raw < 1.0 {
            return Err(SimError::TickTooSmall { u: l.u, v: l.v, bandwidth: l.bandwidth_bytes_per_s, tick });
        }
        let prop_ticks = ((l.prop_delay_s / tick) - 1e-9).ceil().max(1.0) as u64;
        for (from, to) in [(l.u, l.v), (l.v, l.u)] {
            link_index.insert((from, to), links.len());
            links.push(DirLink {
                from,
                to,
                budget: raw.floor() as u64,
                prop_delay: l.prop_delay_s,
                prop_ticks,
                queue: BTreeMap::new(),
            });
        }
    }

    let mut paths: BTreeMap<SdPair, Vec<usize>> = BTreeMap::new();
    for t in &scenario.schedule {
        let pair = SdPair { src: t.src_host, dst: t.dst_host };
        if paths.contains_key(&pair) {
            continue;
        }
        let path = trace_route(state, pair.src, pair.dst).map_err(|e| match e {
            RouteError::Loop { vertex, .. } => SimError::ForwardingLoop { pair, vertex, rules: state.describe_rules() },
            other => SimError::Route(other),
        })?;
        let hops = path.windows(2).map(|w| link_index[&(w[0], w[1])]).collect();
        paths.insert(pair, hops);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tasks: Vec<TransferTask> = scenario.schedule.clone();
    let mut flows: Vec<Flow> = Vec::new();
    let mut events = Vec::new();
    let mut records = Vec::new();
    let mut totals = ByteTotals::default();
    let mut last_delivery = 0.0f64;
    let horizon_ticks = (cfg.horizon / tick).ceil() as u64;
    let mut k: u64 = 0;

    loop {
        let now = k as f64 * tick;

        // state machine: start due tasks, idle ticks for the rest
        #[allow(clippy::needless_range_loop)] // new_flow needs the index too
        for i in 0..tasks.len() {
            if tasks[i].state == TaskState::Running {
                let event = if tasks[i].start_t <= now + 1e-12 { TaskEvent::Start } else { TaskEvent::Tick };
                tasks[i] = step_task(&tasks[i], event, now).expect("running task accepts start/tick").task;
                if event == TaskEvent::Start {
                    let f = new_flow(flows.len() as u64, i, &tasks[i], &paths, &links, &cfg, &mut rng);
                    flows.push(f);
                }
            } else if tasks[i].state == TaskState::Executing && !flows.iter().any(|f| f.task == i) {
                // resend spawned by a failure
                let f = new_flow(flows.len() as u64, i, &tasks[i], &paths, &links, &cfg, &mut rng);
                flows.push(f);
            }
        }

        let active = tasks.iter().any(|t| !t.is_terminal());
        let queued: u64 = links.iter().flat_map(|l| l.queue.values()).flatten().map(|s| s.bytes).sum();
        if !active && queued == 0 {
            break;
        }
        if k >= horizon_ticks {
            for t in tasks.iter_mut() {
                if !t.is_terminal() {
                    *t = step_task(t, TaskEvent::Timeout, cfg.horizon).expect("timeout is always legal").task;
                    records.extend(t.record());
                }
            }
            totals.queued = queued;
            break;
        }

        // injection
        for f in flows.iter_mut().filter(|f| !f.dead && f.remaining > 0) {
            let bytes = f.remaining.min(f.inject_budget);
            f.remaining -= bytes;
            totals.injected += bytes;
            links[f.links[0]].queue.entry(f.id).or_default().push_back(Segment { bytes, eligible: k });
        }

        // drain, link by link
        let done_at = (k + 1) as f64 * tick;
        for li in 0..links.len() {
            let backlog: Vec<(u64, u64)> = links[li]
                .queue
                .iter()
                .map(|(&fid, q)| (fid, q.iter().take_while(|s| s.eligible <= k).map(|s| s.bytes).sum::<u64>()))
                .filter(|&(_, b)| b > 0)
                .collect();
            if backlog.is_empty() {
                continue;
            }
            let grants = proportional_share(links[li].budget, &backlog);
            for ((fid, _), grant) in backlog.into_iter().zip(grants) {
                if grant == 0 {
                    continue;
                }
                let link = &mut links[li];
                let q = link.queue.get_mut(&fid).expect("backlog came from this queue");
                let mut left = grant;
                while left > 0 {
                    let front = q.front_mut().expect("grant never exceeds eligible backlog");
                    let take = left.min(front.bytes);
                    front.bytes -= take;
                    left -= take;
                    if front.bytes == 0 {
                        q.pop_front();
                    }
                }
                if q.is_empty() {
                    link.queue.remove(&fid);
                }
                let (from, to, prop_delay, prop_ticks) = (link.from, link.to, link.prop_delay, link.prop_ticks);
                let flow = &mut flows[fid as usize];
                let task = &tasks[flow.task];
                let arrival_t = done_at + prop_delay;
                events.push(PacketRecord {
                    flow_id: fid,
                    edge: (from, to),
                    arrival_t,
                    size: grant,
                    src_host: task.src_host,
                    dst_host: task.dst_host,
                });
                let hop = flow.links.iter().position(|&x| x == li).expect("flow traverses link");
                if hop + 1 == flow.links.len() {
                    flow.delivered += grant;
                    flow.last_arrival = arrival_t;
                    totals.delivered += grant;
                    last_delivery = last_delivery.max(arrival_t);
                } else {
                    let next = flow.links[hop + 1];
                    links[next]
                        .queue
                        .entry(fid)
                        .or_default()
                        .push_back(Segment { bytes: grant, eligible: k + prop_ticks });
                }
            }
        }

        // completions and failures
        for f in flows.iter_mut().filter(|f| !f.dead) {
            let ti = f.task;
            if f.delivered >= f.size {
                f.dead = true;
                let tr =
                    step_task(&tasks[ti], TaskEvent::TransferDone, f.last_arrival).expect("executing task completes");
                tasks[ti] = tr.task;
                records.extend(tasks[ti].record());
            } else if let Some((threshold, event)) = f.failure {
                if f.delivered >= threshold {
                    f.dead = true;
                    f.remaining = 0;
                    let tr = step_task(&tasks[ti], event, done_at).expect("executing task can fail");
                    tasks[ti] = tr.task;
                    records.extend(tasks[ti].record());
                    if let Some(mut resend) = tr.spawned {
                        resend.start_t = done_at;
                        tasks.push(resend);
                    }
                }
            }
        }
        k += 1;
    }

    if totals.queued == 0 {
        totals.queued = links.iter().flat_map(|l| l.queue.values()).flatten().map(|s| s.bytes).sum();
    }
    let timed_out = tasks.iter().any(|t| t.failure_cause == Some(crate::traffic::FailureCause::Timeout));
    let end_t = if timed_out { cfg.horizon } else { last_delivery };
    Ok(RunOutput { events, tasks, records, totals, end_t, ticks: k })
}

/// Splits `budget` across `(flow, backlog)` in proportion to backlog, using
/// largest remainders (ties to the lower flow id). Never grants more than a
/// flow's backlog and grants everything when the budget covers it.
pub(crate) fn proportional_share(budget: u64, backlog: &[(u64, u64)]) -> Vec<u64> {
    let total: u64 = backlog.iter().map(|&(_, b)| b).sum();
    if total <= budget {
        return backlog.iter().map(|&(_, b)| b).collect();
    }
    let mut grants = Vec::with_capacity(backlog.len());
    let mut rems = Vec::with_capacity(backlog.len());
    for (i, &(fid, b)) in backlog.iter().enumerate() {
        let num = u128::from(budget) * u128::from(b);
        grants.push((num / u128::from(total)) as u64);
        rems.push((num % u128::from(total), fid, i));
    }
    let mut left = budget - grants.iter().sum::<u64>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, _, i) in &rems {
        if left == 0 {
            break;
        }
        grants[i] += 1;
        left -= 1;
    }
    grants
}
