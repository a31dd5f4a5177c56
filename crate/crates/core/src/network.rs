//! Point-to-point transfer costs over a three-tier locality hierarchy
//! (socket, node, network) and the per-node shared NIC.
//!
//! Ranks are placed in contiguous blocks: the first `cores_per_socket`
//! ranks fill socket 0 of node 0, the next block fills socket 1, and so on.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Cycles, Rank};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("rank {rank} out of range (topology has {ranks} ranks)")]
    RankOutOfRange { rank: Rank, ranks: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub ranks: u32,
    pub cores_per_socket: u32,
    pub sockets_per_node: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Location {
    pub node: u32,
    pub socket: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LocalityClass {
    IntraSocket,
    InterSocket,
    InterNode,
}

impl Topology {
    pub fn new(ranks: u32, cores_per_socket: u32, sockets_per_node: u32) -> Self {
        Self {
            ranks,
            cores_per_socket,
            sockets_per_node,
        }
    }

    pub fn ranks_per_node(&self) -> u32 {
        self.cores_per_socket * self.sockets_per_node
    }

    /// Number of nodes touched by the placement; the last one may be partial.
    pub fn nodes(&self) -> u32 {
        self.ranks.div_ceil(self.ranks_per_node())
    }

    pub fn locate(&self, rank: Rank) -> Result<Location, TopologyError> {
        if rank >= self.ranks {
            return Err(TopologyError::RankOutOfRange {
                rank,
                ranks: self.ranks,
            });
        }
        Ok(Location {
            node: rank / self.ranks_per_node(),
            socket: (rank / self.cores_per_socket) % self.sockets_per_node,
        })
    }

    pub fn locality(&self, a: Rank, b: Rank) -> Result<LocalityClass, TopologyError> {
        let la = self.locate(a)?;
        let lb = self.locate(b)?;
        Ok(if la.node != lb.node {
            LocalityClass::InterNode
        } else if la.socket != lb.socket {
            LocalityClass::InterSocket
        } else {
            LocalityClass::IntraSocket
        })
    }
}

/// LogGP-flavoured cost parameters, all in clock cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkParams {
    pub latency_intra_socket: Cycles,
    pub latency_inter_socket: Cycles,
    pub latency_inter_node: Cycles,
    /// Cycles per payload byte.
    pub bandwidth_cost: Cycles,
    /// CPU time the sender spends per message; the receiver pays the same
    /// amount again when the message is delivered.
    pub send_overhead: Cycles,
    /// NIC occupancy per inter-node message.
    pub nic_service: Cycles,
    pub nic_contention: bool,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            latency_intra_socket: 500,
            latency_inter_socket: 1_500,
            latency_inter_node: 5_000,
            bandwidth_cost: 1,
            send_overhead: 200,
            nic_service: 1_000,
            nic_contention: true,
        }
    }
}

impl NetworkParams {
    pub fn latency(&self, class: LocalityClass) -> Cycles {
        match class {
            LocalityClass::IntraSocket => self.latency_intra_socket,
            LocalityClass::InterSocket => self.latency_inter_socket,
            LocalityClass::InterNode => self.latency_inter_node,
        }
    }
}

pub fn transfer_time(size_bytes: u64, class: LocalityClass, params: &NetworkParams) -> Cycles {
    params.latency(class) + params.bandwidth_cost * size_bytes
}

/// One node's network interface: a FIFO server with a fixed service time.
#[derive(Debug, Clone, Default)]
pub struct NicState {
    pub busy_until: Cycles,
    /// Grants handed out but not yet reached by the simulation clock.
    pub pending: VecDeque<Cycles>,
    pub served: u64,
}

impl NicState {
    /// Drop grants whose time has come.
    pub fn release_until(&mut self, now: Cycles) {
        while self.pending.front().is_some_and(|&g| g <= now) {
            self.pending.pop_front();
        }
    }
}

/// Requests must arrive in non-decreasing `t_request` order (the engine
/// guarantees this by issuing them from the time-ordered event queue).
pub fn nic_request(t_request: Cycles, nic: &mut NicState, params: &NetworkParams) -> Cycles {
    let grant = t_request.max(nic.busy_until);
    nic.busy_until = grant + params.nic_service;
    nic.pending.push_back(grant);
    nic.served += 1;
    grant
}
