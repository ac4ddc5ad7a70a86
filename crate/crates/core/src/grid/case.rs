//! MATPOWER-style case files.
//!
//! Grammar (one statement per line, `%` starts a comment):
//!
//! ```text
//! mpc.baseMVA = <number>;
//! mpc.bus    = [ <row>; ... ];   bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin
//! mpc.gen    = [ <row>; ... ];   bus Pg Qg Qmax Qmin Vg mBase status ...
//! mpc.branch = [ <row>; ... ];   fbus tbus r x b rateA rateB rateC ratio angle status ...
//! ```
//!
//! Rows are whitespace- or comma-separated numbers terminated by `;` or a
//! line break. Other `mpc.*` assignments and blocks are ignored. Bus type
//! codes: 1 = PQ, 2 = PV, 3 = slack; type 4 (isolated) buses are dropped
//! together with their branches and generators.

use std::path::Path;

use super::{Branch, Bus, BusKind, Generator, GridError, Network};

pub fn parse_case(path: impl AsRef<Path>) -> Result<Network, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_case_str(&text)
}

#[derive(Clone, Copy, PartialEq)]
enum Block {
    Bus,
    Gen,
    Branch,
    Ignored,
}

type Row = (usize, Vec<f64>);

pub fn parse_case_str(text: &str) -> Result<Network, GridError> {
    let mut base_mva = None;
    let mut bus_rows: Vec<Row> = Vec::new();
    let mut gen_rows: Vec<Row> = Vec::new();
    let mut branch_rows: Vec<Row> = Vec::new();
    let mut block: Option<(Block, char)> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut body = line;
        if block.is_none() {
            let Some(rest) = line.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, value)) = rest.split_once('=') else {
                continue;
            };
            let name = name.trim();
            let value = value.trim();
            if let Some(open) = value.find(['[', '{']) {
                let kind = match name {
                    "bus" => Block::Bus,
                    "gen" => Block::Gen,
                    "branch" => Block::Branch,
                    _ => Block::Ignored,
                };
                let close = if value.as_bytes()[open] == b'[' {
                    ']'
                } else {
                    '}'
                };
                block = Some((kind, close));
                body = &value[open + 1..];
            } else {
                if name == "baseMVA" {
                    let v = value.trim_end_matches(';').trim();
                    base_mva = Some(v.parse::<f64>().map_err(|e| GridError::Parse {
                        line: line_no,
                        reason: format!("baseMVA {v:?}: {e}"),
                    })?);
                }
                continue;
            }
        }
        let Some((kind, close)) = block else {
            continue;
        };
        let (content, ended) = match body.find(close) {
            Some(p) => (&body[..p], true),
            None => (body, false),
        };
        if kind != Block::Ignored {
            for row in content.split(';') {
                let row = row.trim();
                if row.is_empty() {
                    continue;
                }
                let values = row
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>().map_err(|e| GridError::Parse {
                            line: line_no,
                            reason: format!("bad number {s:?}: {e}"),
                        })
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                let target = match kind {
                    Block::Bus => &mut bus_rows,
                    Block::Gen => &mut gen_rows,
                    _ => &mut branch_rows,
                };
                target.push((line_no, values));
            }
        }
        if ended {
            block = None;
        }
    }

    let base_mva = base_mva.ok_or(GridError::Parse {
        line: 0,
        reason: "missing mpc.baseMVA".into(),
    })?;
    if bus_rows.is_empty() {
        return Err(GridError::Parse {
            line: 0,
            reason: "missing or empty mpc.bus".into(),
        });
    }

    let need = |(line, v): &Row, n: usize, what: &str| -> Result<(), GridError> {
        if v.len() < n {
            Err(GridError::Parse {
                line: *line,
                reason: format!("{what} row has {} columns, expected at least {n}", v.len()),
            })
        } else {
            Ok(())
        }
    };
    let as_id = |line: usize, x: f64| -> Result<u32, GridError> {
        if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 {
            Ok(x as u32)
        } else {
            Err(GridError::Parse {
                line,
                reason: format!("invalid bus id {x}"),
            })
        }
    };

    let mut buses = Vec::new();
    let mut isolated = Vec::new();
    for row in &bus_rows {
        need(row, 13, "bus")?;
        let (line, v) = row;
        let id = as_id(*line, v[0])?;
        let kind = match v[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            4 => {
                isolated.push(id);
                continue;
            }
            t => {
                return Err(GridError::Parse {
                    line: *line,
                    reason: format!("unknown bus type {t}"),
                })
            }
        };
        buses.push(Bus {
            id,
            kind,
            p_demand_mw: v[2],
            q_demand_mvar: v[3],
            gs_mw: v[4],
            bs_mvar: v[5],
            base_kv: v[9],
            v_setpoint_pu: v[7],
            v_max_pu: v[11],
            v_min_pu: v[12],
        });
    }

    let mut generators = Vec::new();
    for row in &gen_rows {
        need(row, 8, "gen")?;
        let (line, v) = row;
        let bus = as_id(*line, v[0])?;
        if isolated.contains(&bus) {
            continue;
        }
        generators.push(Generator {
            bus,
            p_mw: v[1],
            q_mvar: v[2],
            v_setpoint_pu: v[5],
            in_service: v[7] > 0.0,
        });
    }

    let mut branches = Vec::new();
    for row in &branch_rows {
        need(row, 11, "branch")?;
        let (line, v) = row;
        let from = as_id(*line, v[0])?;
        let to = as_id(*line, v[1])?;
        if isolated.contains(&from) || isolated.contains(&to) {
            continue;
        }
        branches.push(Branch {
            from,
            to,
            r_pu: v[2],
            x_pu: v[3],
            b_pu: v[4],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            shift_deg: v[9],
            in_service: v[10] > 0.0,
        });
    }

    Network::new(base_mva, buses, generators, branches)
}
