//! Deterministic virtual-time event loop.
//!
//! Each rank runs the cycle program from [`crate::app::cycle_protocol`]. The
//! engine executes a rank's actions until it blocks (compute, send overhead
//! or an unsatisfied wait) and resumes it when the corresponding event fires.
//!
//! Message timing follows a LogP-style split: the sender is busy for
//! `send_overhead`, the message then spends `transfer_time` on the wire
//! (after waiting for the node NIC if it leaves the node), and becomes
//! available to the receiver `send_overhead` later.
//!
//! Events are totally ordered by `(time, rank, kind, sequence)`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand_chacha::ChaCha8Rng;

use crate::app::{cycle_protocol_ordered, idle_of_wait, Action, Neighbors};
use crate::config::{ConfigError, SimConfig};
use crate::network::{nic_request, transfer_time, LocalityClass, NicState, Topology};
use crate::noise::{compute_cost, jitter_stream, Blackouts};
use crate::trace::{Direction, IdleRecord, Trace, TraceError, TraceHeader, TraceSource, FORMAT_VERSION};
use crate::{Cycles, Rank};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: Cycles,
}

impl SimClock {
    pub fn now(&self) -> Cycles {
        self.now
    }

    fn advance_to(&mut self, t: Cycles) -> Result<(), SimError> {
        if t < self.now {
            return Err(SimError::Internal(format!("clock would move backwards from {} to {t}", self.now)));
        }
        self.now = t;
        Ok(())
    }
}

/// Tie-break priority among events at the same time on the same rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    MessageArrive,
    NicGranted,
    SendDone,
    ComputeDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Message {
    from: Rank,
    to: Rank,
    /// Side of the receiver the message comes from.
    side: Direction,
    tag: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Payload {
    Cycle(u64),
    Send { dir: Direction, cycle: u64 },
    Deliver { msg: Message, transfer: Cycles },
    Arrive(Message),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: Cycles,
    pub rank: Rank,
    pub kind: EventKind,
    seq: u64,
    payload: Payload,
}

impl Event {
    fn key(&self) -> (Cycles, Rank, EventKind, u64) {
        (self.time, self.rank, self.kind, self.seq)
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Computing,
    Sending,
    WaitingRecv { dir: Direction, entry: Cycles },
    Done,
}

#[derive(Debug, Clone)]
pub struct RankState {
    pub rank: Rank,
    pub cycle_index: u64,
    pub phase: Phase,
    /// Tag of the posted receive on each side, indexed by [`Direction::index`].
    pub pending_recv: [Option<u64>; 2],
    neighbors: Neighbors,
    program: Vec<Action>,
    pc: usize,
    /// Messages that arrived before the matching wait: `(tag, available_at)`.
    mailbox: [VecDeque<(u64, Cycles)>; 2],
    rng_stream: ChaCha8Rng,
    blackouts: Blackouts,
}

/// Where a rank's time went. `compute + send + noise + idle == finish`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RankAccount {
    pub compute: Cycles,
    pub send: Cycles,
    pub noise: Cycles,
    pub idle: Cycles,
    pub finish: Cycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineStatus {
    Running,
    Finished,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub trace: Trace,
    pub accounts: Vec<RankAccount>,
    /// Inter-node messages served per node NIC.
    pub nic_served: Vec<u64>,
    pub events_processed: u64,
}

pub struct Engine {
    config: SimConfig,
    topology: Topology,
    base_cost: Cycles,
    clock: SimClock,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    ranks: Vec<RankState>,
    nics: Vec<NicState>,
    records: Vec<IdleRecord>,
    accounts: Vec<RankAccount>,
    done: u32,
    processed: u64,
}

impl Engine {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        Self::with_wait_order(config, Direction::Left)
    }

    /// Engine whose ranks wait on `wait_first` before the opposite side.
    pub fn with_wait_order(config: &SimConfig, wait_first: Direction) -> Result<Self, SimError> {
        config.validate()?;
        let config = config.resolved();
        let topology = config.topology;
        let ranks = (0..topology.ranks)
            .map(|rank| {
                let neighbors = Neighbors::of(rank, topology.ranks, config.app.boundary);
                RankState {
                    rank,
                    cycle_index: 0,
                    phase: Phase::Computing,
                    pending_recv: [None; 2],
                    neighbors,
                    program: cycle_protocol_ordered(neighbors, wait_first),
                    pc: 0,
                    mailbox: Default::default(),
                    rng_stream: jitter_stream(config.seed, rank),
                    blackouts: Blackouts::for_rank(config.seed, rank, &config.noise),
                }
            })
            .collect();
        let mut engine = Self {
            base_cost: config.app.base_compute_cost(),
            nics: vec![NicState::default(); topology.nodes() as usize],
            accounts: vec![RankAccount::default(); topology.ranks as usize],
            topology,
            config,
            clock: SimClock::default(),
            queue: BinaryHeap::new(),
            seq: 0,
            ranks,
            records: Vec::new(),
            done: 0,
            processed: 0,
        };
        for rank in 0..topology.ranks {
            engine.advance(rank, 0)?;
        }
        Ok(engine)
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn rank_state(&self, rank: Rank) -> Option<&RankState> {
        self.ranks.get(rank as usize)
    }

    fn push(&mut self, time: Cycles, rank: Rank, kind: EventKind, payload: Payload) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time,
            rank,
            kind,
            seq: self.seq,
            payload,
        }));
    }

    /// Processes the least pending event.
    pub fn step(&mut self) -> Result<EngineStatus, SimError> {
        let Some(Reverse(ev)) = self.queue.pop() else {
            return if self.done == self.topology.ranks {
                Ok(EngineStatus::Finished)
            } else {
                Err(SimError::Internal(format!(
                    "event queue drained with {} of {} ranks unfinished",
                    self.topology.ranks - self.done,
                    self.topology.ranks
                )))
            };
        };
        if ev.rank >= self.topology.ranks {
            return Err(SimError::Internal(format!("event for unknown rank {}", ev.rank)));
        }
        self.clock.advance_to(ev.time)?;
        self.processed += 1;
        let now = ev.time;
        match (ev.kind, ev.payload) {
            (EventKind::ComputeDone, Payload::Cycle(cycle)) => {
                self.expect_phase(ev.rank, cycle, Phase::Computing)?;
                self.advance(ev.rank, now)?;
            }
            (EventKind::SendDone, Payload::Send { dir, cycle }) => {
                self.expect_phase(ev.rank, cycle, Phase::Sending)?;
                self.issue_message(ev.rank, dir, cycle, now)?;
                self.advance(ev.rank, now)?;
            }
            (EventKind::NicGranted, Payload::Deliver { msg, transfer }) => {
                let node = self.topology.locate(msg.from).map_err(|e| SimError::Internal(e.to_string()))?.node;
                self.nics[node as usize].release_until(now);
                let at = now + transfer + self.config.network.send_overhead;
                self.push(at, msg.to, EventKind::MessageArrive, Payload::Arrive(msg));
            }
            (EventKind::MessageArrive, Payload::Arrive(msg)) => self.deliver(msg, now)?,
            (kind, payload) => {
                return Err(SimError::Internal(format!("malformed event {kind:?} with {payload:?}")));
            }
        }
        Ok(if self.queue.is_empty() && self.done == self.topology.ranks {
            EngineStatus::Finished
        } else {
            EngineStatus::Running
        })
    }

    fn expect_phase(&self, rank: Rank, cycle: u64, phase: Phase) -> Result<(), SimError> {
        let st = &self.ranks[rank as usize];
        if st.cycle_index != cycle || st.phase != phase {
            return Err(SimError::Internal(format!(
                "stale event for rank {rank}: event cycle {cycle} / {phase:?}, rank at cycle {} / {:?}",
                st.cycle_index, st.phase
            )));
        }
        Ok(())
    }

    fn issue_message(&mut self, from: Rank, dir: Direction, cycle: u64, now: Cycles) -> Result<(), SimError> {
        let to = self.ranks[from as usize]
            .neighbors
            .get(dir)
            .ok_or_else(|| SimError::Internal(format!("rank {from} has no {dir} neighbour")))?;
        let class = self
            .topology
            .locality(from, to)
            .map_err(|e| SimError::Internal(e.to_string()))?;
        let net = self.config.network;
        let transfer = transfer_time(self.config.app.message_bytes, class, &net);
        let msg = Message {
            from,
            to,
            side: dir.opposite(),
            tag: cycle,
        };
        if class == LocalityClass::InterNode && net.nic_contention {
            let node = self.topology.locate(from).map_err(|e| SimError::Internal(e.to_string()))?.node as usize;
            let grant = nic_request(now, &mut self.nics[node], &net);
            self.push(grant, from, EventKind::NicGranted, Payload::Deliver { msg, transfer });
        } else {
            self.push(now + transfer + net.send_overhead, to, EventKind::MessageArrive, Payload::Arrive(msg));
        }
        Ok(())
    }

    fn deliver(&mut self, msg: Message, now: Cycles) -> Result<(), SimError> {
        let st = &mut self.ranks[msg.to as usize];
        if st.phase == Phase::Done {
            return Err(SimError::Protocol(format!(
                "rank {} received tag {} from {} after finishing",
                msg.to, msg.tag, msg.from
            )));
        }
        if msg.tag != st.cycle_index && msg.tag != st.cycle_index + 1 {
            return Err(SimError::Protocol(format!(
                "rank {} at cycle {} received unexpected tag {} from {}",
                msg.to, st.cycle_index, msg.tag, msg.from
            )));
        }
        let side = msg.side.index();
        match st.phase {
            Phase::WaitingRecv { dir, entry } if dir == msg.side && msg.tag == st.cycle_index => {
                self.complete_wait(msg.to, dir, entry, now);
                self.advance(msg.to, now)
            }
            _ => {
                if st.mailbox[side].len() >= 2 {
                    return Err(SimError::Protocol(format!(
                        "rank {} has more than two unmatched messages on its {} side",
                        msg.to, msg.side
                    )));
                }
                st.mailbox[side].push_back((msg.tag, now));
                Ok(())
            }
        }
    }

    fn complete_wait(&mut self, rank: Rank, dir: Direction, entry: Cycles, exit: Cycles) {
        let st = &mut self.ranks[rank as usize];
        st.pending_recv[dir.index()] = None;
        st.pc += 1;
        self.records.push(IdleRecord {
            rank,
            cycle: st.cycle_index,
            peer: st.neighbors.get(dir),
            dir,
            wait_start: entry,
            wait_end: exit,
        });
        self.accounts[rank as usize].idle += idle_of_wait(entry, exit);
    }

    /// Runs the rank's program from its current position until it blocks.
    fn advance(&mut self, rank: Rank, now: Cycles) -> Result<(), SimError> {
        let cycles = self.config.app.cycles;
        loop {
            let st = &mut self.ranks[rank as usize];
            if st.pc == st.program.len() {
                st.pc = 0;
                st.cycle_index += 1;
                if st.cycle_index == cycles {
                    st.phase = Phase::Done;
                    self.accounts[rank as usize].finish = now;
                    self.done += 1;
                    return Ok(());
                }
            }
            let cycle = st.cycle_index;
            match st.program[st.pc] {
                Action::PostRecv(dir) => {
                    let slot = &mut st.pending_recv[dir.index()];
                    if slot.is_some() {
                        return Err(SimError::Internal(format!("rank {rank} posted two receives on its {dir} side")));
                    }
                    *slot = Some(cycle);
                    st.pc += 1;
                }
                Action::Compute => {
                    let cost = compute_cost(rank, self.base_cost, &self.config.noise, &mut st.rng_stream);
                    let delay = self.config.noise.injected_delay(rank, cycle);
                    let (end, absorbed) = st.blackouts.run_work(now, cost + delay);
                    st.phase = Phase::Computing;
                    st.pc += 1;
                    let acct = &mut self.accounts[rank as usize];
                    acct.compute += cost;
                    acct.noise += delay + absorbed;
                    self.push(end, rank, EventKind::ComputeDone, Payload::Cycle(cycle));
                    return Ok(());
                }
                Action::Send(dir) => {
                    st.phase = Phase::Sending;
                    st.pc += 1;
                    let o = self.config.network.send_overhead;
                    self.accounts[rank as usize].send += o;
                    self.push(now + o, rank, EventKind::SendDone, Payload::Send { dir, cycle });
                    return Ok(());
                }
                Action::Wait(dir) => {
                    if st.pending_recv[dir.index()] != Some(cycle) {
                        return Err(SimError::Internal(format!("rank {rank} waits on {dir} without a posted receive")));
                    }
                    let mailbox = &mut st.mailbox[dir.index()];
                    match mailbox.front().copied() {
                        Some((tag, _arrived)) if tag == cycle => {
                            mailbox.pop_front();
                            self.complete_wait(rank, dir, now, now);
                        }
                        Some((tag, _)) if tag != cycle + 1 => {
                            return Err(SimError::Protocol(format!(
                                "rank {rank} at cycle {cycle} holds stale tag {tag} on its {dir} side"
                            )));
                        }
                        _ => {
                            st.phase = Phase::WaitingRecv { dir, entry: now };
                            return Ok(());
                        }
                    }
                }
            }
        }
    }

    pub fn run(mut self) -> Result<SimResult, SimError> {
        while self.step()? == EngineStatus::Running {}
        let header = TraceHeader {
            format_version: FORMAT_VERSION,
            ranks: self.topology.ranks,
            cycles: self.config.app.cycles,
            clock_hz: self.config.clock_hz,
            config_fingerprint: self.config.fingerprint(),
            source: TraceSource::Simulated,
        };
        Ok(SimResult {
            trace: Trace::new(header, self.records)?,
            accounts: self.accounts,
            nic_served: self.nics.iter().map(|n| n.served).collect(),
            events_processed: self.processed,
        })
    }
}

pub fn simulate(config: &SimConfig) -> Result<Trace, SimError> {
    Ok(Engine::new(config)?.run()?.trace)
}

pub fn simulate_detailed(config: &SimConfig) -> Result<SimResult, SimError> {
    Engine::new(config)?.run()
}
