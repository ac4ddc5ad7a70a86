//! Capacity aggregation, κ-scaling and the 24-hour coupling simulation.

use rayon::prelude::*;

use super::metrics::{mape, max_deviation, rmse, voltage_deviation};
use super::profiles::DayProfiles;
use super::sites::{check_sites, inject_errors, ModelSpec, SiteRecord};
use super::SimError;
use crate::grid::{build_admittance, BusDemands, Network, PowerFlowOptions, PowerFlowProblem};

/// Name of the reference (error-free) model.
pub const TRUE_MODEL: &str = "true";

/// Scenario parameters shared by every model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Peak-load multiplier α_L applied to nominal demands.
    pub alpha_load: f64,
    /// Target PV penetration ρ of peak load.
    pub penetration: f64,
    pub per_panel_kw: f64,
    /// Probability that a quantity error moves one interval down.
    pub under_bias: f64,
    pub seed: u64,
    /// MAPE threshold as a fraction of the largest true |net load|.
    pub mape_epsilon_frac: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            alpha_load: 1.3,
            penetration: 0.6,
            per_panel_kw: 0.4,
            under_bias: 0.75,
            seed: 0,
            mape_epsilon_frac: 0.05,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Config(m));
        if !(self.alpha_load > 1.0 && self.alpha_load.is_finite()) {
            return fail(format!("alpha_load {} must be > 1", self.alpha_load));
        }
        if !(self.penetration > 0.0 && self.penetration <= 1.0) {
            return fail(format!("penetration {} outside (0, 1]", self.penetration));
        }
        if !(self.per_panel_kw > 0.0 && self.per_panel_kw.is_finite()) {
            return fail(format!(
                "per_panel_kw {} must be positive",
                self.per_panel_kw
            ));
        }
        if !(0.0..=1.0).contains(&self.under_bias) {
            return fail(format!("under_bias {} outside [0, 1]", self.under_bias));
        }
        if !(0.0..=1.0).contains(&self.mape_epsilon_frac) {
            return fail(format!(
                "mape_epsilon_frac {} outside [0, 1]",
                self.mape_epsilon_frac
            ));
        }
        Ok(())
    }
}

/// Scaled PV capacity for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCapacity {
    pub name: String,
    /// κ-scaled capacity per bus in network bus order, kW.
    pub bus_kw: Vec<f64>,
    pub total_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityScaling {
    pub kappa: f64,
    /// True model first, then the others in input order.
    pub models: Vec<ModelCapacity>,
}

/// Per-bus capacities `C_i` (kW, unscaled) and their site-order sum.
fn bus_capacity(
    net: &Network,
    sites: &[SiteRecord],
    per_panel_kw: f64,
) -> Result<(Vec<f64>, f64), SimError> {
    check_sites(net, sites)?;
    let mut bus = vec![0.0; net.len()];
    let mut total = 0.0;
    for s in sites {
        let c = s.quantity.site_capacity_kw(per_panel_kw)?;
        bus[net.position(s.bus).expect("checked")] += c;
        total += c;
    }
    Ok((bus, total))
}

/// Aggregates site capacities per bus and scales every model by the common
/// factor `κ = ρ·α_L·ΣP⁰_d[kW] / ΣC_true`, so the true fleet's peak output
/// is `ρ·α_L·ΣP⁰_d`. Totals are summed over sites in input order, so
/// relocating sites leaves a model's total bit-identical to the truth.
pub fn aggregate_and_scale(
    net: &Network,
    true_sites: &[SiteRecord],
    models: &[(String, Vec<SiteRecord>)],
    cfg: &ScenarioConfig,
) -> Result<CapacityScaling, SimError> {
    let (true_bus, true_total) = bus_capacity(net, true_sites, cfg.per_panel_kw)?;
    if true_total.is_nan() || true_total <= 0.0 {
        return Err(SimError::EmptyPopulation);
    }
    let kappa = cfg.penetration * cfg.alpha_load * net.total_p_demand_mw() * 1000.0 / true_total;
    let scaled = |name: &str, bus: Vec<f64>, total: f64| ModelCapacity {
        name: name.to_string(),
        bus_kw: bus.into_iter().map(|c| kappa * c).collect(),
        total_mw: kappa * total / 1000.0,
    };
    let mut out = vec![scaled(TRUE_MODEL, true_bus, true_total)];
    for (name, sites) in models {
        let (bus, total) = bus_capacity(net, sites, cfg.per_panel_kw)?;
        out.push(scaled(name, bus, total));
    }
    Ok(CapacityScaling { kappa, models: out })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Model names; the true model is first.
    pub models: Vec<String>,
    pub bus_ids: Vec<u32>,
    pub hours: Vec<f64>,
    /// Slack active power per model and step, MW.
    pub net_load_mw: Vec<Vec<f64>>,
    /// Voltage magnitudes indexed `[model][step][bus]`.
    pub v_mag_pu: Vec<Vec<Vec<f64>>>,
    /// κ-scaled capacities per model and bus, kW.
    pub capacities_kw: Vec<Vec<f64>>,
    pub kappa: f64,
    pub total_capacity_mw: Vec<f64>,
}

/// Solves one power flow per model and time step. Steps are solved in
/// parallel; results are assembled in step order.
pub fn run_day_simulation(
    net: &Network,
    scaling: &CapacityScaling,
    profiles: &DayProfiles,
    cfg: &ScenarioConfig,
    pf: &PowerFlowOptions,
) -> Result<SimulationResult, SimError> {
    let y = build_admittance(net);
    let base_p: Vec<f64> = net.buses().iter().map(|b| b.p_demand_mw).collect();
    let base_q: Vec<f64> = net.buses().iter().map(|b| b.q_demand_mvar).collect();
    let steps = profiles.grid.steps;
    let mut net_load = Vec::new();
    let mut voltages = Vec::new();
    for model in &scaling.models {
        let per_step = (0..steps)
            .into_par_iter()
            .map(|t| {
                let l = cfg.alpha_load * profiles.load[t];
                let g = profiles.pv[t];
                let demands = BusDemands {
                    p_mw: base_p
                        .iter()
                        .zip(&model.bus_kw)
                        .map(|(p, c)| l * p - g * c / 1000.0)
                        .collect(),
                    q_mvar: base_q.iter().map(|q| l * q).collect(),
                };
                PowerFlowProblem::new(net, &y, &demands)
                    .and_then(|p| p.solve(pf))
                    .map_err(|source| SimError::PowerFlow {
                        model: model.name.clone(),
                        step: t,
                        source,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        net_load.push(per_step.iter().map(|s| s.slack_p_mw).collect());
        voltages.push(per_step.into_iter().map(|s| s.v_mag_pu).collect());
    }
    Ok(SimulationResult {
        models: scaling.models.iter().map(|m| m.name.clone()).collect(),
        bus_ids: net.bus_ids(),
        hours: profiles.grid.hours(),
        net_load_mw: net_load,
        v_mag_pu: voltages,
        capacities_kw: scaling.models.iter().map(|m| m.bus_kw.clone()).collect(),
        kappa: scaling.kappa,
        total_capacity_mw: scaling.models.iter().map(|m| m.total_mw).collect(),
    })
}

/// Summary metrics of one model against the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMetrics {
    pub name: String,
    pub total_capacity_mw: f64,
    /// `None` for the true model.
    pub capacity_bias_mw: Option<f64>,
    pub rmse_mw: Option<f64>,
    pub mape_pct: Option<f64>,
    pub max_voltage_dev_pu: Option<f64>,
    /// `[step][bus]`; empty for the true model.
    pub voltage_dev_pu: Vec<Vec<f64>>,
}

/// Metrics for every model; the true model's entry has no error fields.
pub fn compute_metrics(
    result: &SimulationResult,
    cfg: &ScenarioConfig,
) -> Result<Vec<ModelMetrics>, SimError> {
    let truth = &result.net_load_mw[0];
    let v_true = &result.v_mag_pu[0];
    let c_true = result.total_capacity_mw[0];
    let mut out = vec![ModelMetrics {
        name: result.models[0].clone(),
        total_capacity_mw: c_true,
        capacity_bias_mw: None,
        rmse_mw: None,
        mape_pct: None,
        max_voltage_dev_pu: None,
        voltage_dev_pu: Vec::new(),
    }];
    for m in 1..result.models.len() {
        let dev = voltage_deviation(&result.v_mag_pu[m], v_true)?;
        out.push(ModelMetrics {
            name: result.models[m].clone(),
            total_capacity_mw: result.total_capacity_mw[m],
            capacity_bias_mw: Some(result.total_capacity_mw[m] - c_true),
            rmse_mw: Some(rmse(&result.net_load_mw[m], truth)?),
            mape_pct: mape(&result.net_load_mw[m], truth, cfg.mape_epsilon_frac)?,
            max_voltage_dev_pu: Some(max_deviation(&dev).0),
            voltage_dev_pu: dev,
        });
    }
    Ok(out)
}

/// Everything produced by [`run_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub result: SimulationResult,
    pub metrics: Vec<ModelMetrics>,
}

/// Injects errors for each model, scales capacities, simulates the day and
/// computes metrics.
pub fn run_scenario(
    net: &Network,
    true_sites: &[SiteRecord],
    models: &[ModelSpec],
    profiles: &DayProfiles,
    cfg: &ScenarioConfig,
    pf: &PowerFlowOptions,
) -> Result<ScenarioOutcome, SimError> {
    cfg.validate()?;
    let mut names = std::collections::HashSet::from([TRUE_MODEL]);
    for m in models {
        if !names.insert(m.name.as_str()) {
            return Err(SimError::Config(format!(
                "duplicate model name {:?}",
                m.name
            )));
        }
    }
    let perturbed = models
        .iter()
        .map(|m| {
            Ok((
                m.name.clone(),
                inject_errors(true_sites, net, m, cfg.under_bias, cfg.seed)?,
            ))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let scaling = aggregate_and_scale(net, true_sites, &perturbed, cfg)?;
    let result = run_day_simulation(net, &scaling, profiles, cfg, pf)?;
    let metrics = compute_metrics(&result, cfg)?;
    Ok(ScenarioOutcome { result, metrics })
}
