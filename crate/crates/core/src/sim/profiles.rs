//! Time grid and normalized daily load / PV shapes.

use std::path::Path;

use super::SimError;

/// Uniform daily grid: `steps` intervals of `dt_minutes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    pub dt_minutes: u32,
    pub steps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            dt_minutes: 15,
            steps: 96,
        }
    }
}

impl TimeGrid {
    /// Hour of day at zero-based step `t`.
    pub fn tau_hours(&self, t: usize) -> f64 {
        t as f64 * f64::from(self.dt_minutes) / 60.0
    }

    pub fn hours(&self) -> Vec<f64> {
        (0..self.steps).map(|t| self.tau_hours(t)).collect()
    }
}

fn check_tau(tau: f64) -> Result<(), SimError> {
    if (0.0..24.0).contains(&tau) {
        Ok(())
    } else {
        Err(SimError::Profile(format!("hour {tau} outside [0, 24)")))
    }
}

fn gaussian(tau: f64, center: f64, width: f64) -> f64 {
    (-(tau - center).powi(2) / (2.0 * width * width)).exp()
}

/// Un-normalized default load: base 0.45, a mid-day bump (height 0.55,
/// centre 12:00, width 3 h) and an evening bump (height 0.3, centre
/// 19:00, width 1.5 h).
fn raw_load(tau: f64) -> f64 {
    0.45 + 0.55 * gaussian(tau, 12.0, 3.0) + 0.3 * gaussian(tau, 19.0, 1.5)
}

fn raw_load_grid_max() -> f64 {
    let grid = TimeGrid::default();
    (0..grid.steps)
        .map(|t| raw_load(grid.tau_hours(t)))
        .fold(f64::MIN, f64::max)
}

/// Default load shape, scaled so its maximum over the 15-minute grid is 1.
pub fn load_profile(tau: f64) -> Result<f64, SimError> {
    check_tau(tau)?;
    Ok(raw_load(tau) / raw_load_grid_max())
}

/// Default clear-sky PV shape: `sin²(π(τ−6)/12)` on [6, 18], zero elsewhere.
pub fn pv_profile(tau: f64) -> Result<f64, SimError> {
    check_tau(tau)?;
    if !(6.0..=18.0).contains(&tau) {
        return Ok(0.0);
    }
    Ok((std::f64::consts::PI * (tau - 6.0) / 12.0).sin().powi(2))
}

/// Per-step load and PV multipliers for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayProfiles {
    pub grid: TimeGrid,
    pub load: Vec<f64>,
    pub pv: Vec<f64>,
}

impl Default for DayProfiles {
    fn default() -> Self {
        let grid = TimeGrid::default();
        let hours = grid.hours();
        DayProfiles {
            grid,
            load: hours
                .iter()
                .map(|&h| load_profile(h).expect("on grid"))
                .collect(),
            pv: hours
                .iter()
                .map(|&h| pv_profile(h).expect("on grid"))
                .collect(),
        }
    }
}

fn parse_values(text: &str, what: &str, steps: usize) -> Result<Vec<f64>, SimError> {
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| SimError::Profile(format!("{what}: bad value {s:?}: {e}")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if values.len() != steps {
        return Err(SimError::Profile(format!(
            "{what}: expected {steps} values, found {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(SimError::Profile(format!(
            "{what}: value {v} outside [0, 1]"
        )));
    }
    Ok(values)
}

impl DayProfiles {
    /// Replaces the defaults with `load.txt` and/or `pv.txt` from `dir`, each
    /// holding one value per step (whitespace or comma separated).
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, SimError> {
        let dir = dir.as_ref();
        let mut p = DayProfiles::default();
        let steps = p.grid.steps;
        for (name, slot) in [("load.txt", &mut p.load), ("pv.txt", &mut p.pv)] {
            let path = dir.join(name);
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| SimError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                *slot = parse_values(&text, name, steps)?;
            }
        }
        Ok(p)
    }

    pub fn from_values(load: Vec<f64>, pv: Vec<f64>) -> Result<Self, SimError> {
        let grid = TimeGrid::default();
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        Ok(DayProfiles {
            grid,
            load: parse_values(&join(&load), "load", grid.steps)?,
            pv: parse_values(&join(&pv), "pv", grid.steps)?,
        })
    }
}
