//! The 1D halo-exchange application: what a rank does in each cycle and how
//! a receive wait turns into a measured idle period.
//!
//! Blocking receives are modelled as post + wait, with receives posted at the
//! start of the cycle. The idle period is exactly the time spent inside the
//! wait, so posting cost never leaks into it.

use serde::{Deserialize, Serialize};

use crate::trace::Direction;
use crate::{Cycles, Rank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    #[default]
    NonPeriodic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub grid_points_per_rank: u64,
    pub cost_per_point: Cycles,
    pub cycles: u64,
    pub boundary: Boundary,
    pub message_bytes: u64,
    /// Overlapping communication with computation is not modelled; setting
    /// this is rejected at validation time.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub nonblocking_overlap: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            grid_points_per_rank: 1_000_000,
            cost_per_point: 1,
            cycles: 100,
            boundary: Boundary::NonPeriodic,
            message_bytes: 8,
            nonblocking_overlap: false,
        }
    }
}

impl AppConfig {
    pub fn base_compute_cost(&self) -> Cycles {
        self.grid_points_per_rank * self.cost_per_point
    }
}

/// Short, medium and long run lengths used for the heat application.
pub const CYCLE_PRESETS: [u64; 3] = [100, 1_000, 10_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbors {
    pub left: Option<Rank>,
    pub right: Option<Rank>,
}

impl Neighbors {
    pub fn of(rank: Rank, ranks: u32, boundary: Boundary) -> Self {
        match boundary {
            Boundary::Periodic => Self {
                left: Some((rank + ranks - 1) % ranks),
                right: Some((rank + 1) % ranks),
            },
            Boundary::NonPeriodic => Self {
                left: rank.checked_sub(1),
                right: (rank + 1 < ranks).then_some(rank + 1),
            },
        }
    }

    pub fn get(&self, dir: Direction) -> Option<Rank> {
        match dir {
            Direction::Left => self.left,
            Direction::Right => self.right,
        }
    }

    pub fn count(&self) -> usize {
        self.left.is_some() as usize + self.right.is_some() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    PostRecv(Direction),
    Compute,
    Send(Direction),
    Wait(Direction),
}

/// The per-cycle program of a rank. Sides without a neighbour are skipped.
pub fn cycle_protocol(neighbors: Neighbors) -> Vec<Action> {
    cycle_protocol_ordered(neighbors, Direction::Left)
}

/// As [`cycle_protocol`], but waiting on `wait_first` before the other side.
pub fn cycle_protocol_ordered(neighbors: Neighbors, wait_first: Direction) -> Vec<Action> {
    let sides: Vec<Direction> = [Direction::Left, Direction::Right]
        .into_iter()
        .filter(|&d| neighbors.get(d).is_some())
        .collect();
    let mut actions = Vec::with_capacity(3 * sides.len() + 1);
    actions.extend(sides.iter().map(|&d| Action::PostRecv(d)));
    actions.push(Action::Compute);
    actions.extend(sides.iter().map(|&d| Action::Send(d)));
    let waits = sides.iter().filter(|&&d| d == wait_first).chain(sides.iter().filter(|&&d| d != wait_first));
    actions.extend(waits.map(|&d| Action::Wait(d)));
    actions
}

/// Cycles spent inside a wait entered at `entry` for a message available at
/// `arrival`.
pub fn idle_of_wait(entry: Cycles, arrival: Cycles) -> Cycles {
    arrival.saturating_sub(entry)
}

pub fn wait_exit(entry: Cycles, arrival: Cycles) -> Cycles {
    entry.max(arrival)
}
