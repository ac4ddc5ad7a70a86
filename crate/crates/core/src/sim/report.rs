//! CSV reports for a simulated scenario.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::run::ScenarioOutcome;
use super::SimError;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// File-name-safe form of a model name.
pub fn file_stem(model: &str) -> String {
    model
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// `netload.csv`: step (1-based), hour, one column per model.
pub fn write_netload(out: &mut impl Write, o: &ScenarioOutcome) -> std::io::Result<()> {
    let r = &o.result;
    writeln!(out, "step,hour,{}", r.models.join(","))?;
    for (t, hour) in r.hours.iter().enumerate() {
        let cols: Vec<String> = r
            .net_load_mw
            .iter()
            .map(|m| format!("{:.6}", m[t]))
            .collect();
        writeln!(out, "{},{hour:.2},{}", t + 1, cols.join(","))?;
    }
    Ok(())
}

/// `metrics.csv`: model, total_capacity_mw, rmse_mw, mape_pct. The true
/// model's error columns are blank.
pub fn write_metrics(out: &mut impl Write, o: &ScenarioOutcome) -> std::io::Result<()> {
    writeln!(out, "model,total_capacity_mw,rmse_mw,mape_pct")?;
    for m in &o.metrics {
        writeln!(
            out,
            "{},{:.6},{},{}",
            m.name,
            m.total_capacity_mw,
            fmt_opt(m.rmse_mw),
            fmt_opt(m.mape_pct)
        )?;
    }
    Ok(())
}

/// `voltage_dev_<model>.csv`: one row per bus, one column per step.
pub fn write_voltage_dev(
    out: &mut impl Write,
    o: &ScenarioOutcome,
    model: usize,
) -> std::io::Result<()> {
    let dev = &o.metrics[model].voltage_dev_pu;
    let steps = dev.len();
    let header: Vec<String> = (1..=steps).map(|t| format!("t{t}")).collect();
    writeln!(out, "bus,{}", header.join(","))?;
    for (i, bus) in o.result.bus_ids.iter().enumerate() {
        let row: Vec<String> = dev.iter().map(|step| format!("{:.6e}", step[i])).collect();
        writeln!(out, "{bus},{}", row.join(","))?;
    }
    Ok(())
}

/// Writes all report files into `dir` and returns their paths.
pub fn emit_simulation_report(
    o: &ScenarioOutcome,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, SimError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| SimError::Io { path: p, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let mut write =
        |name: String, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| -> Result<(), SimError> {
            let path = dir.join(name);
            let mut buf = Vec::new();
            f(&mut buf).map_err(io(&path))?;
            std::fs::write(&path, buf).map_err(io(&path))?;
            written.push(path);
            Ok(())
        };
    write("netload.csv".into(), &|b| write_netload(b, o))?;
    write("metrics.csv".into(), &|b| write_metrics(b, o))?;
    for m in 1..o.metrics.len() {
        write(
            format!("voltage_dev_{}.csv", file_stem(&o.metrics[m].name)),
            &|b| write_voltage_dev(b, o, m),
        )?;
    }
    Ok(written)
}

/// Human-readable metrics table.
pub fn format_metrics_table(o: &ScenarioOutcome) -> String {
    let mut s = format!(
        "{:<12} {:>14} {:>10} {:>10} {:>10} {:>12}\n",
        "model", "capacity_mw", "bias_pct", "rmse_mw", "mape_pct", "max_dv_pu"
    );
    let c_true = o.metrics[0].total_capacity_mw;
    for m in &o.metrics {
        let bias = m.capacity_bias_mw.map(|b| 100.0 * b / c_true);
        let f =
            |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "--".into());
        s.push_str(&format!(
            "{:<12} {:>14.2} {:>10} {:>10} {:>10} {:>12}\n",
            m.name,
            m.total_capacity_mw,
            f(bias, 2),
            f(m.rmse_mw, 2),
            f(m.mape_pct, 2),
            m.max_voltage_dev_pu
                .map(|x| format!("{x:.2e}"))
                .unwrap_or_else(|| "--".into()),
        ));
    }
    s
}
