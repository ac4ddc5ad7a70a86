//! Rooftop site populations and accuracy-calibrated error injection.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;
use crate::descriptor::QuantityInterval;
use crate::grid::Network;
use crate::rng::keyed_stream;

/// One rooftop site: its bus and PV quantity interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteRecord {
    pub site_id: String,
    pub bus: u32,
    pub quantity: QuantityInterval,
}

/// Error-generation accuracies for one assessment model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub quantity_accuracy: f64,
    pub location_accuracy: f64,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, quantity_accuracy: f64, location_accuracy: f64) -> Self {
        ModelSpec {
            name: name.into(),
            quantity_accuracy,
            location_accuracy,
        }
    }

    /// Parses `name=a_q,a_ell`.
    pub fn parse(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::Config(format!("model spec {s:?} is not name=a_q,a_ell"));
        let (name, acc) = s.split_once('=').ok_or_else(bad)?;
        let (q, l) = acc.split_once(',').ok_or_else(bad)?;
        let m = ModelSpec::new(
            name.trim(),
            q.trim().parse().map_err(|_| bad())?,
            l.trim().parse().map_err(|_| bad())?,
        );
        if m.name.is_empty() {
            return Err(bad());
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (what, v) in [
            ("quantity accuracy", self.quantity_accuracy),
            ("location accuracy", self.location_accuracy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Config(format!(
                    "{}: {what} {v} outside [0, 1]",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Reads a site file (`site_id,bus,quantity` header, one site per line).
pub fn read_sites(reader: impl std::io::Read) -> Result<Vec<SiteRecord>, SimError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(site_csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| SimError::SiteFormat {
                line: 1,
                reason: format!("header is missing column {name:?}"),
            })
    };
    let (ci, cb, cq) = (col("site_id")?, col("bus")?, col("quantity")?);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(site_csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let err = |reason: String| SimError::SiteFormat { line, reason };
        let bus = row[cb]
            .parse::<u32>()
            .map_err(|e| err(format!("bus {:?}: {e}", &row[cb])))?;
        let quantity: QuantityInterval = row[cq].parse().map_err(|e| err(format!("{e}")))?;
        if quantity.is_na() {
            return Err(err("site quantity must not be NA".into()));
        }
        out.push(SiteRecord {
            site_id: row[ci].to_string(),
            bus,
            quantity,
        });
    }
    Ok(out)
}

fn site_csv_err(e: csv::Error) -> SimError {
    SimError::SiteFormat {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        reason: e.to_string(),
    }
}

pub fn load_sites(path: impl AsRef<Path>) -> Result<Vec<SiteRecord>, SimError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_sites(file)
}

pub fn write_sites(writer: impl std::io::Write, sites: &[SiteRecord]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| SimError::SiteFormat {
        line: 0,
        reason: e.to_string(),
    };
    w.write_record(["site_id", "bus", "quantity"]).map_err(io)?;
    for s in sites {
        w.write_record([s.site_id.as_str(), &s.bus.to_string(), s.quantity.as_str()])
            .map_err(io)?;
    }
    w.flush().map_err(|source| SimError::Io {
        path: "<sites>".into(),
        source,
    })
}

/// Checks that every site sits on a network bus.
pub fn check_sites(net: &Network, sites: &[SiteRecord]) -> Result<(), SimError> {
    for s in sites {
        if net.position(s.bus).is_none() {
            return Err(SimError::UnknownBus {
                site: s.site_id.clone(),
                bus: s.bus,
            });
        }
        if s.quantity.is_na() {
            return Err(SimError::SiteFormat {
                line: 0,
                reason: format!("site {} has quantity NA", s.site_id),
            });
        }
    }
    Ok(())
}

/// `n` sites with intervals drawn from `weights` (over the four ordered
/// intervals; uniform when `None`) and buses drawn uniformly over PQ buses.
pub fn synthetic_sites(
    net: &Network,
    n: usize,
    seed: u64,
    weights: Option<[f64; 4]>,
) -> Result<Vec<SiteRecord>, SimError> {
    let buses = net.pq_bus_ids();
    if buses.is_empty() {
        return Err(SimError::Config("network has no PQ buses for sites".into()));
    }
    let w = weights.unwrap_or([1.0; 4]);
    let dist = rand::distributions::WeightedIndex::new(w)
        .map_err(|e| SimError::Config(format!("quantity weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.saturating_sub(1).to_string().len().max(4);
    Ok((0..n)
        .map(|i| SiteRecord {
            site_id: format!("site-{i:0width$}"),
            quantity: QuantityInterval::ORDERED[rng.sample(&dist)],
            bus: buses[rng.gen_range(0..buses.len())],
        })
        .collect())
}

/// Parses `synth:N:seed`.
pub fn parse_synth_spec(s: &str) -> Option<(usize, u64)> {
    let rest = s.strip_prefix("synth:")?;
    let (n, seed) = rest.split_once(':')?;
    Some((n.parse().ok()?, seed.parse().ok()?))
}

/// Perturbs quantities and buses according to `model`'s accuracies.
///
/// Each site draws four uniforms, in order, from its own stream keyed by
/// `(seed, site_id)`: keep-quantity, direction, keep-bus, neighbor choice.
/// All four are drawn whether or not they are used, so the same seed gives
/// every model the same underlying draws.
pub fn inject_errors(
    sites: &[SiteRecord],
    net: &Network,
    model: &ModelSpec,
    under_bias: f64,
    seed: u64,
) -> Result<Vec<SiteRecord>, SimError> {
    model.validate()?;
    if !(0.0..=1.0).contains(&under_bias) {
        return Err(SimError::Config(format!(
            "under_bias {under_bias} outside [0, 1]"
        )));
    }
    check_sites(net, sites)?;
    let relocate = model.location_accuracy < 1.0;
    let mut neighbors = std::collections::HashMap::new();
    for s in sites {
        if let std::collections::hash_map::Entry::Vacant(slot) = neighbors.entry(s.bus) {
            let nb = net.neighbors(s.bus);
            if relocate && nb.is_empty() {
                return Err(SimError::IsolatedBus {
                    site: s.site_id.clone(),
                    bus: s.bus,
                });
            }
            slot.insert(nb);
        }
    }
    sites
        .iter()
        .map(|s| {
            let mut rng = keyed_stream(seed, &s.site_id);
            let u_q: f64 = rng.gen();
            let u_dir: f64 = rng.gen();
            let u_loc: f64 = rng.gen();
            let u_bus: f64 = rng.gen();
            let quantity = if u_q < model.quantity_accuracy {
                s.quantity
            } else {
                let (lo, hi) = s.quantity.neighbors()?;
                let moved = if u_dir < under_bias {
                    lo.or(hi)
                } else {
                    hi.or(lo)
                };
                moved.unwrap_or(s.quantity)
            };
            let bus = if u_loc < model.location_accuracy {
                s.bus
            } else {
                let nb = &neighbors[&s.bus];
                nb[((u_bus * nb.len() as f64) as usize).min(nb.len() - 1)]
            };
            Ok(SiteRecord {
                site_id: s.site_id.clone(),
                bus,
                quantity,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{parse_case_str, CASE30};

    fn net() -> Network {
        parse_case_str(CASE30).unwrap()
    }

    #[test]
    fn perfect_accuracy_is_identity() {
        let net = net();
        let sites = synthetic_sites(&net, 200, 1, None).unwrap();
        let out = inject_errors(&sites, &net, &ModelSpec::new("m", 1.0, 1.0), 0.75, 9).unwrap();
        assert_eq!(out, sites);
    }

    #[test]
    fn forced_downward_move() {
        let net = net();
        let s = vec![
            SiteRecord {
                site_id: "a".into(),
                bus: 3,
                quantity: QuantityInterval::OneToFive,
            },
            SiteRecord {
                site_id: "b".into(),
                bus: 3,
                quantity: QuantityInterval::ZeroToOne,
            },
        ];
        let out = inject_errors(&s, &net, &ModelSpec::new("m", 0.0, 1.0), 1.0, 0).unwrap();
        assert_eq!(out[0].quantity, QuantityInterval::ZeroToOne);
        // Reflection at the lower boundary.
        assert_eq!(out[1].quantity, QuantityInterval::OneToFive);
        let out = inject_errors(&s, &net, &ModelSpec::new("m", 0.0, 1.0), 0.0, 0).unwrap();
        assert_eq!(out[0].quantity, QuantityInterval::FiveToTen);
    }

    #[test]
    fn relocation_goes_to_neighbors() {
        let net = net();
        let sites = synthetic_sites(&net, 300, 2, None).unwrap();
        let out = inject_errors(&sites, &net, &ModelSpec::new("m", 1.0, 0.0), 0.75, 3).unwrap();
        for (a, b) in sites.iter().zip(&out) {
            assert!(net.neighbors(a.bus).contains(&b.bus));
            assert_eq!(a.quantity, b.quantity);
        }
    }

    #[test]
    fn order_independent() {
        let net = net();
        let sites = synthetic_sites(&net, 100, 4, None).unwrap();
        let m = ModelSpec::new("m", 0.5, 0.5);
        let fwd = inject_errors(&sites, &net, &m, 0.75, 5).unwrap();
        let rev: Vec<_> = sites.iter().rev().cloned().collect();
        let mut back = inject_errors(&rev, &net, &m, 0.75, 5).unwrap();
        back.reverse();
        assert_eq!(fwd, back);
        // Dropping a site leaves the others untouched.
        let fewer = inject_errors(&sites[1..], &net, &m, 0.75, 5).unwrap();
        assert_eq!(&fwd[1..], &fewer[..]);
    }

    #[test]
    fn isolated_bus_is_an_error() {
        use crate::grid::{Bus, BusKind};
        let bus = |id, kind| Bus {
            id,
            kind,
            p_demand_mw: 0.0,
            q_demand_mvar: 0.0,
            gs_mw: 0.0,
            bs_mvar: 0.0,
            base_kv: 1.0,
            v_setpoint_pu: 1.0,
            v_min_pu: 0.9,
            v_max_pu: 1.1,
        };
        let net = Network::new(100.0, vec![bus(1, BusKind::Slack)], vec![], vec![]).unwrap();
        let s = vec![SiteRecord {
            site_id: "x".into(),
            bus: 1,
            quantity: QuantityInterval::TenPlus,
        }];
        assert!(matches!(
            inject_errors(&s, &net, &ModelSpec::new("m", 1.0, 0.5), 0.5, 0),
            Err(SimError::IsolatedBus { bus: 1, .. })
        ));
        assert!(inject_errors(&s, &net, &ModelSpec::new("m", 0.5, 1.0), 0.5, 0).is_ok());
        let s = vec![SiteRecord {
            site_id: "y".into(),
            bus: 7,
            quantity: QuantityInterval::TenPlus,
        }];
        assert!(matches!(
            inject_errors(&s, &net, &ModelSpec::new("m", 1.0, 1.0), 0.5, 0),
            Err(SimError::UnknownBus { .. })
        ));
    }

    #[test]
    fn site_file_round_trip_and_errors() {
        let net = net();
        let sites = synthetic_sites(&net, 12, 7, None).unwrap();
        let mut buf = Vec::new();
        write_sites(&mut buf, &sites).unwrap();
        assert_eq!(read_sites(buf.as_slice()).unwrap(), sites);
        let bad = "site_id,bus,quantity\na,3,NA\n";
        assert!(matches!(
            read_sites(bad.as_bytes()),
            Err(SimError::SiteFormat { line: 2, .. })
        ));
        assert_eq!(parse_synth_spec("synth:1000:7"), Some((1000, 7)));
        assert_eq!(parse_synth_spec("sites.csv"), None);
    }

    #[test]
    fn model_spec_parsing() {
        let m = ModelSpec::parse("rag=0.862,0.802").unwrap();
        assert_eq!(m, ModelSpec::new("rag", 0.862, 0.802));
        assert!(ModelSpec::parse("rag=1.2,0.5").is_err());
        assert!(ModelSpec::parse("rag").is_err());
    }
}
