//! Power-network model, MATPOWER-style case parsing, bus admittance and a
//! polar Newton–Raphson AC power-flow solver.

mod case;
mod newton;
mod ybus;

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

pub use case::{parse_case, parse_case_str};
pub use newton::{
    solve_power_flow, BusDemands, PowerFlowOptions, PowerFlowProblem, PowerFlowSolution,
};
pub use ybus::{build_admittance, Complex};

/// Case file shipped with the crate.
pub const CASE30: &str = include_str!("../../data/case30.m");

#[derive(Debug, Error)]
pub enum GridError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("case line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("network has no slack bus")]
    MissingSlack,
    #[error("network has more than one slack bus: {0:?}")]
    MultipleSlack(Vec<u32>),
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("{context} refers to unknown bus {bus}")]
    UnknownBus { bus: u32, context: String },
    #[error("branch {index} connects bus {bus} to itself")]
    SelfLoop { index: usize, bus: u32 },
    #[error("in-service branch {index} ({from}-{to}) has zero reactance")]
    ZeroReactance { index: usize, from: u32, to: u32 },
    #[error("invalid voltage setpoint {value} at bus {bus}")]
    InvalidSetpoint { bus: u32, value: f64 },
    #[error("network is disconnected; unreachable buses {0:?}")]
    Disconnected(Vec<u32>),
    #[error("demand vectors have length {found}, network has {expected} buses")]
    DemandLength { expected: usize, found: usize },
    #[error(
        "power flow did not converge in {iterations} iterations (max mismatch {max_mismatch:e} pu)"
    )]
    NonConvergence {
        iterations: usize,
        max_mismatch: f64,
    },
    #[error("singular Jacobian at iteration {iteration}")]
    SingularSystem { iteration: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub p_demand_mw: f64,
    pub q_demand_mvar: f64,
    /// Shunt conductance, MW consumed at 1 pu.
    pub gs_mw: f64,
    /// Shunt susceptance, MVAr injected at 1 pu.
    pub bs_mvar: f64,
    pub base_kv: f64,
    /// Held voltage magnitude for slack and PV buses.
    pub v_setpoint_pu: f64,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: u32,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub v_setpoint_pu: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Total line charging susceptance.
    pub b_pu: f64,
    /// Off-nominal tap ratio; 1 for lines.
    pub tap: f64,
    pub shift_deg: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn line(from: u32, to: u32, r_pu: f64, x_pu: f64, b_pu: f64) -> Self {
        Branch {
            from,
            to,
            r_pu,
            x_pu,
            b_pu,
            tap: 1.0,
            shift_deg: 0.0,
            in_service: true,
        }
    }
}

/// A validated network. Bus order is the order given at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    base_mva: f64,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    branches: Vec<Branch>,
    position: HashMap<u32, usize>,
}

impl Network {
    /// Validates and builds a network. Slack and PV setpoints are taken from
    /// the first in-service generator at the bus when one exists; a PV bus
    /// without an in-service generator becomes PQ.
    pub fn new(
        base_mva: f64,
        mut buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
    ) -> Result<Self, GridError> {
        let mut position = HashMap::new();
        for (i, b) in buses.iter().enumerate() {
            if position.insert(b.id, i).is_some() {
                return Err(GridError::DuplicateBus(b.id));
            }
        }
        for (i, g) in generators.iter().enumerate() {
            if !position.contains_key(&g.bus) {
                return Err(GridError::UnknownBus {
                    bus: g.bus,
                    context: format!("generator {i}"),
                });
            }
        }
        for b in buses.iter_mut() {
            let gen = generators.iter().find(|g| g.in_service && g.bus == b.id);
            match (b.kind, gen) {
                (BusKind::Slack | BusKind::Pv, Some(g)) => b.v_setpoint_pu = g.v_setpoint_pu,
                (BusKind::Pv, None) => b.kind = BusKind::Pq,
                _ => {}
            }
            if b.kind != BusKind::Pq && !(b.v_setpoint_pu > 0.0 && b.v_setpoint_pu.is_finite()) {
                return Err(GridError::InvalidSetpoint {
                    bus: b.id,
                    value: b.v_setpoint_pu,
                });
            }
        }
        let slack: Vec<u32> = buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        match slack.len() {
            0 => return Err(GridError::MissingSlack),
            1 => {}
            _ => return Err(GridError::MultipleSlack(slack)),
        }
        for (i, br) in branches.iter().enumerate() {
            for bus in [br.from, br.to] {
                if !position.contains_key(&bus) {
                    return Err(GridError::UnknownBus {
                        bus,
                        context: format!("branch {i}"),
                    });
                }
            }
            if br.from == br.to {
                return Err(GridError::SelfLoop {
                    index: i,
                    bus: br.from,
                });
            }
            if br.in_service && br.x_pu == 0.0 {
                return Err(GridError::ZeroReactance {
                    index: i,
                    from: br.from,
                    to: br.to,
                });
            }
        }
        let net = Network {
            base_mva,
            buses,
            generators,
            branches,
            position,
        };
        net.check_connected()?;
        Ok(net)
    }

    fn check_connected(&self) -> Result<(), GridError> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (self.position[&br.from], self.position[&br.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let start = self.slack_index();
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let mut missing: Vec<u32> = (0..n)
            .filter(|&i| !seen[i])
            .map(|i| self.buses[i].id)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            missing.sort_unstable();
            Err(GridError::Disconnected(missing))
        }
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    /// Position of bus `id` in bus order.
    pub fn position(&self, id: u32) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn bus_ids(&self) -> Vec<u32> {
        self.buses.iter().map(|b| b.id).collect()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// Ids of PQ buses in ascending order.
    pub fn pq_bus_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Pq)
            .map(|b| b.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Buses adjacent to `id` over in-service branches, ascending, without duplicates.
    pub fn neighbors(&self, id: u32) -> Vec<u32> {
        let set: BTreeSet<u32> = self
            .branches
            .iter()
            .filter(|b| b.in_service)
            .filter_map(|b| {
                if b.from == id {
                    Some(b.to)
                } else if b.to == id {
                    Some(b.from)
                } else {
                    None
                }
            })
            .collect();
        set.into_iter().collect()
    }

    /// Sum of nominal active demand over all buses, MW.
    pub fn total_p_demand_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_demand_mw).sum()
    }

    /// Nominal demands from the case data.
    pub fn nominal_demands(&self) -> BusDemands {
        BusDemands {
            p_mw: self.buses.iter().map(|b| b.p_demand_mw).collect(),
            q_mvar: self.buses.iter().map(|b| b.q_demand_mvar).collect(),
        }
    }

    /// The same network with buses listed in the order given by `order`
    /// (a permutation of bus positions).
    pub fn reordered(&self, order: &[usize]) -> Result<Network, GridError> {
        let buses = order.iter().map(|&i| self.buses[i].clone()).collect();
        Network::new(
            self.base_mva,
            buses,
            self.generators.clone(),
            self.branches.clone(),
        )
    }
}
