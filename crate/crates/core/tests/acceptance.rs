//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use pvrag::assessor::{AssessmentMode, MockBackend};
use pvrag::dataset::{build_reference_index, generate_synthetic, SyntheticConfig};
use pvrag::descriptor::PvDescriptor;
use pvrag::evaluation::{
    aggregate, emit_report, f1_score, parse_csv_report, Averaging, ReportFormat, Task, OVERALL,
};
use pvrag::grid::{
    build_admittance, parse_case_str, solve_power_flow, Branch, Bus, BusKind, Network,
    PowerFlowOptions, PowerFlowProblem, CASE30,
};
use pvrag::index::{
    metric, similarity_from_distance, Embedding, EntryFilter, ReferenceEntry, VectorIndex,
};
use pvrag::pipeline::Pipeline;
use pvrag::sim::{
    aggregate_and_scale, default_models, inject_errors, run_scenario, synthetic_sites, DayProfiles,
    ModelSpec, ScenarioConfig,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
/// Capacity bias and RMSE per model for one seed.
type SeedMetrics = (Vec<f64>, Vec<f64>);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn retrieval_exactness() -> Outcome {
    let (n, dim, nq) = (1000, 512, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut idx = VectorIndex::new(dim);
    for i in 0..n {
        let v: Vec<f32> = gaussian_unit(&mut rng, dim)
            .into_iter()
            .map(|x| x as f32)
            .collect();
        idx.insert_normalizing(ReferenceEntry {
            id: format!("e{i:04}"),
            city: "c".into(),
            continent: "x".into(),
            embedding: Embedding::new(v).unwrap(),
            label: PvDescriptor::absent("none"),
        })
        .map_err(|e| e.to_string())?;
    }
    let queries: Vec<Vec<f32>> = (0..nq)
        .map(|_| {
            (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                .collect()
        })
        .collect();

    // Exhaustive scan written out independently of the index.
    let oracle = |q: &[f32], k: usize| -> Vec<String> {
        let norm = q
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt();
        let qn: Vec<f32> = q.iter().map(|&x| (f64::from(x) / norm) as f32).collect();
        let mut all: Vec<(f64, &str)> = idx
            .entries()
            .iter()
            .map(|e| {
                let d2: f64 = qn
                    .iter()
                    .zip(e.embedding.values())
                    .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                    .sum();
                (d2, e.id.as_str())
            })
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        all.iter().take(k).map(|(_, id)| id.to_string()).collect()
    };

    let mut mismatches = 0;
    let mut elapsed = 0.0;
    for q in &queries {
        let emb = Embedding::new(q.clone()).unwrap();
        for k in [1, 3, 5, 10] {
            let t = Instant::now();
            let hits = idx
                .search_topk(&emb, k, &EntryFilter::none())
                .map_err(|e| e.to_string())?;
            elapsed += t.elapsed().as_secs_f64();
            let ids: Vec<String> = hits.iter().map(|h| h.entry.id.clone()).collect();
            if ids != oracle(q, k) {
                mismatches += 1;
            }
        }
    }
    check(
        mismatches == 0 && elapsed < 1.0,
        format!("{mismatches} mismatches over 400 searches; search time {elapsed:.3} s (< 1 s)"),
    )
}

fn metric_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_id, mut worst_sim) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let a = gaussian_unit(&mut rng, 512);
        let b = gaussian_unit(&mut rng, 512);
        let d = metric::distance(&a, &b).map_err(|e| e.to_string())?;
        let c = metric::cosine(&a, &b).map_err(|e| e.to_string())?;
        worst_id = worst_id.max((d * d - 2.0 * (1.0 - c)).abs());
        worst_sim = worst_sim.max((similarity_from_distance(d) - 1.0 / (1.0 + d)).abs());
    }
    check(
        worst_id <= 1e-9 && worst_sim <= 1e-12,
        format!("max |d²-2(1-cos)| = {worst_id:.2e} (≤ 1e-9); max similarity error {worst_sim:.2e} (≤ 1e-12)"),
    )
}

fn f1_reproduction() -> Outcome {
    let f = f1_score(0.987, 0.819).ok_or("F1 undefined")?;
    // Harmonic-mean inversion: F = 2pr/(p+r)  =>  p = F·r / (2r − F).
    let (r, f_rag) = (0.978, 0.969);
    let p = f_rag * r / (2.0 * r - f_rag);
    let round_trip = f1_score(p, r).ok_or("F1 undefined")?;
    check(
        (f - 0.895).abs() <= 0.001
            && (p - 0.960).abs() <= 0.002
            && (round_trip - f_rag).abs() < 1e-12,
        format!(
            "F1(98.7, 81.9) = {:.3}%; back-solved precision {:.3}%",
            100.0 * f,
            100.0 * p
        ),
    )
}

fn pf_bus(id: u32, kind: BusKind, v: f64, pd: f64, qd: f64) -> Bus {
    Bus {
        id,
        kind,
        p_demand_mw: pd,
        q_demand_mvar: qd,
        gs_mw: 0.0,
        bs_mvar: 0.0,
        base_kv: 12.47,
        v_setpoint_pu: v,
        v_min_pu: 0.9,
        v_max_pu: 1.1,
    }
}

fn power_flow_correctness() -> Outcome {
    let opts = PowerFlowOptions::default();
    let mut notes = Vec::new();
    let mut ok = true;

    // (a) Unloaded radial feeder without shunts or charging.
    let setpoint = 1.02;
    let flat = Network::new(
        100.0,
        vec![
            pf_bus(1, BusKind::Slack, setpoint, 0.0, 0.0),
            pf_bus(2, BusKind::Pq, 1.0, 0.0, 0.0),
            pf_bus(3, BusKind::Pq, 1.0, 0.0, 0.0),
            pf_bus(4, BusKind::Pq, 1.0, 0.0, 0.0),
        ],
        vec![],
        vec![
            Branch::line(1, 2, 0.01, 0.05, 0.0),
            Branch::line(2, 3, 0.02, 0.06, 0.0),
            Branch::line(2, 4, 0.03, 0.04, 0.0),
        ],
    )
    .map_err(|e| e.to_string())?;
    let sol = solve_power_flow(&flat, &flat.nominal_demands(), &opts).map_err(|e| e.to_string())?;
    let a_ok =
        sol.v_mag_pu.iter().all(|v| (v - setpoint).abs() < 1e-12) && sol.slack_p_mw.abs() <= 1e-10;
    ok &= a_ok;
    notes.push(format!("(a) flat {}", if a_ok { "ok" } else { "off" }));

    // (b) Lossless two-bus line, slack 1∠0, load P + jQ at bus 2:
    //   P x = V sin δ,  Q x + V² = V cos δ  =>  V⁴ + (2Qx − 1)V² + x²(P² + Q²) = 0.
    let (x, p, q) = (0.2, 0.8, 0.3);
    let two = Network::new(
        100.0,
        vec![
            pf_bus(1, BusKind::Slack, 1.0, 0.0, 0.0),
            pf_bus(2, BusKind::Pq, 1.0, 100.0 * p, 100.0 * q),
        ],
        vec![],
        vec![Branch::line(1, 2, 0.0, x, 0.0)],
    )
    .map_err(|e| e.to_string())?;
    let sol = solve_power_flow(&two, &two.nominal_demands(), &opts).map_err(|e| e.to_string())?;
    let b = 1.0 - 2.0 * q * x;
    let v2 = ((b + (b * b - 4.0 * x * x * (p * p + q * q)).sqrt()) / 2.0).sqrt();
    let th2 = -(p * x / v2).asin();
    let err_b = (sol.v_mag_pu[1] - v2)
        .abs()
        .max((sol.v_ang_rad[1] - th2).abs());
    ok &= err_b <= 1e-8;
    notes.push(format!("(b) two-bus err {err_b:.1e}"));

    // (c) Frozen independent-solver solution of case30 at nominal load.
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/case30_pf_oracle.json"
    ))
    .map_err(|e| e.to_string())?;
    let oracle: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let nominal = &oracle["scenarios"]["nominal"];
    let floats = |v: &serde_json::Value| -> Vec<f64> {
        v.as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect()
    };
    let net = parse_case_str(CASE30).map_err(|e| e.to_string())?;
    let sol = solve_power_flow(&net, &net.nominal_demands(), &opts).map_err(|e| e.to_string())?;
    let dv = sol
        .v_mag_pu
        .iter()
        .zip(floats(&nominal["v_mag_pu"]))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let dp = (sol.slack_p_mw - nominal["slack_p_mw"].as_f64().unwrap()).abs();
    ok &= dv <= 1e-6 && dp <= 1e-4;
    notes.push(format!(
        "(c) case30 |V| err {dv:.1e} pu, slack err {dp:.1e} MW"
    ));

    // (d) Analytic Jacobian against central differences.
    let y = build_admittance(&net);
    let demands = net.nominal_demands();
    let prob = PowerFlowProblem::new(&net, &y, &demands).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n_ang = prob.dim() - net.pq_bus_ids().len();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mut xv = prob.flat_start();
        for k in 0..xv.len() {
            xv[k] = if k < n_ang {
                rng.gen_range(-0.3..0.3)
            } else {
                rng.gen_range(0.9..1.1)
            };
        }
        let jac = prob.jacobian(&xv);
        let scale = jac.abs().max();
        for c in 0..xv.len() {
            let (mut xp, mut xm) = (xv.clone(), xv.clone());
            xp[c] += h;
            xm[c] -= h;
            let col: DVector<f64> = (prob.mismatch(&xp) - prob.mismatch(&xm)) / (2.0 * h);
            for r in 0..xv.len() {
                worst = worst.max((col[r] - jac[(r, c)]).abs() / scale);
            }
        }
    }
    ok &= worst <= 1e-6;
    notes.push(format!("(d) Jacobian rel err {worst:.1e}"));

    // Runtime of a full day with the truth and three models.
    let sites = synthetic_sites(&net, 1000, 0, None).map_err(|e| e.to_string())?;
    let t = Instant::now();
    run_scenario(
        &net,
        &sites,
        &default_models(),
        &DayProfiles::default(),
        &ScenarioConfig::default(),
        &opts,
    )
    .map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 10.0;
    notes.push(format!("96-step x 4-model day {secs:.2} s"));
    check(ok, notes.join("; "))
}

fn zero_error_baseline() -> Outcome {
    let net = parse_case_str(CASE30).map_err(|e| e.to_string())?;
    let sites = synthetic_sites(&net, 1000, 1, None).map_err(|e| e.to_string())?;
    let models: Vec<ModelSpec> = default_models()
        .into_iter()
        .map(|m| ModelSpec::new(m.name, 1.0, 1.0))
        .collect();
    let opts = PowerFlowOptions::default();
    let o = run_scenario(
        &net,
        &sites,
        &models,
        &DayProfiles::default(),
        &ScenarioConfig::default(),
        &opts,
    )
    .map_err(|e| e.to_string())?;
    let (mut rmse, mut mape, mut dv) = (0.0f64, 0.0f64, 0.0f64);
    for m in &o.metrics[1..] {
        rmse = rmse.max(m.rmse_mw.unwrap());
        mape = mape.max(m.mape_pct.unwrap_or(0.0));
        dv = dv.max(m.max_voltage_dev_pu.unwrap());
    }
    check(
        rmse == 0.0 && mape == 0.0 && dv <= 2.0 * opts.tol,
        format!(
            "RMSE {rmse:.2} MW, MAPE {mape:.2}%, max |ΔV| {dv:.1e} pu (≤ {:.0e})",
            2.0 * opts.tol
        ),
    )
}

fn capacity_ordering() -> Outcome {
    let net = parse_case_str(CASE30).map_err(|e| e.to_string())?;
    let seeds = 100u64;
    let per_seed: Vec<Result<SeedMetrics, String>> = (0..seeds)
        .into_par_iter()
        .map(|seed| {
            let sites = synthetic_sites(&net, 1000, seed, None).map_err(|e| e.to_string())?;
            let cfg = ScenarioConfig {
                seed,
                under_bias: 0.75,
                ..ScenarioConfig::default()
            };
            let o = run_scenario(
                &net,
                &sites,
                &default_models(),
                &DayProfiles::default(),
                &cfg,
                &Default::default(),
            )
            .map_err(|e| e.to_string())?;
            let bias = o.metrics[1..]
                .iter()
                .map(|m| m.capacity_bias_mw.unwrap())
                .collect();
            let rmse = o.metrics[1..].iter().map(|m| m.rmse_mw.unwrap()).collect();
            Ok((bias, rmse))
        })
        .collect();
    let (mut negative, mut ordered) = (0, 0);
    let mut mean = [[0.0; 2]; 3];
    for r in per_seed {
        let (b, e) = r?;
        if b.iter().all(|v| *v < 0.0) {
            negative += 1;
        }
        if b[0].abs() < b[1].abs() && b[1].abs() < b[2].abs() && e[0] < e[1] && e[1] < e[2] {
            ordered += 1;
        }
        for m in 0..3 {
            mean[m][0] += b[m] / seeds as f64;
            mean[m][1] += e[m] / seeds as f64;
        }
    }
    let all_negative = mean.iter().all(|m| m[0] < 0.0) && negative == seeds;
    check(
        all_negative && ordered as f64 >= 0.95 * seeds as f64,
        format!(
            "bias < 0 in {negative}/{seeds} seeds; |bias| and RMSE ordered in {ordered}/{seeds}; mean bias {:.2}/{:.2}/{:.2} MW, mean RMSE {:.2}/{:.2}/{:.2} MW",
            mean[0][0], mean[1][0], mean[2][0], mean[0][1], mean[1][1], mean[2][1]
        ),
    )
}

fn capacity_conservation() -> Outcome {
    let net = parse_case_str(CASE30).map_err(|e| e.to_string())?;
    let cfg = ScenarioConfig::default();
    let model = ModelSpec::new("relocate", 1.0, 0.5);
    let mut exact = 0;
    let seeds = 100u64;
    for seed in 0..seeds {
        let sites = synthetic_sites(&net, 1000, seed, None).map_err(|e| e.to_string())?;
        let moved =
            inject_errors(&sites, &net, &model, cfg.under_bias, seed).map_err(|e| e.to_string())?;
        let s = aggregate_and_scale(&net, &sites, &[("relocate".into(), moved)], &cfg)
            .map_err(|e| e.to_string())?;
        if s.models[1].total_mw == s.models[0].total_mw {
            exact += 1;
        }
    }
    check(
        exact == seeds,
        format!("C_tot equal to truth bit-for-bit in {exact}/{seeds} seeds"),
    )
}

fn injection_calibration() -> Outcome {
    let net = parse_case_str(CASE30).map_err(|e| e.to_string())?;
    let n = 100_000;
    let a_q = 0.862;
    let sites = synthetic_sites(&net, n, 5, None).map_err(|e| e.to_string())?;
    let out = inject_errors(&sites, &net, &ModelSpec::new("m", a_q, 1.0), 0.75, 5)
        .map_err(|e| e.to_string())?;
    let unchanged = sites
        .iter()
        .zip(&out)
        .filter(|(a, b)| a.quantity == b.quantity)
        .count();
    let frac = unchanged as f64 / n as f64;
    let sigma = (a_q * (1.0 - a_q) / n as f64).sqrt();
    check(
        (frac - a_q).abs() <= 3.0 * sigma,
        format!(
            "unchanged fraction {frac:.5}, bounds {a_q} ± {:.5}",
            3.0 * sigma
        ),
    )
}

fn end_to_end_mock() -> Outcome {
    let seeds = 20u64;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report_path = dir.path().join("report.csv");
    let (mut similar, mut random) = (0.0, 0.0);
    for seed in 0..seeds {
        let cfg = SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        }
        .with_city_count(2);
        let ds = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
        let index =
            build_reference_index(&ds.records, &ds.embeddings, None).map_err(|e| e.to_string())?;
        let pipe = Pipeline::new(&ds.records, &ds.embeddings, &index, &MockBackend);
        if seed == 0 {
            let lines = pipe
                .predict(AssessmentMode::rag(3), false)
                .map_err(|e| e.to_string())?;
            if lines.len() != 480 {
                return Err(format!("{} predictions, expected 480", lines.len()));
            }
            let scored = pipe.score(&lines).map_err(|e| e.to_string())?;
            let table = aggregate(&[scored], Averaging::Micro).map_err(|e| e.to_string())?;
            emit_report(&table, &report_path, ReportFormat::Csv).map_err(|e| e.to_string())?;
            let back =
                parse_csv_report(std::fs::File::open(&report_path).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
            if back.get(OVERALL, Task::Presence).is_none() {
                return Err("report lacks an overall presence row".into());
            }
        }
        let paired = pipe.random_vs_similar(3, seed).map_err(|e| e.to_string())?;
        similar += paired.similar.presence / seeds as f64;
        random += paired.random.presence / seeds as f64;
    }
    check(
        similar >= random,
        format!("report written; presence accuracy similar {similar:.4} vs random {random:.4} over {seeds} seeds"),
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_pvrag");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let p = |name: &str| -> PathBuf { root.join(name) };
    let s = |path: &Path| path.to_str().unwrap().to_string();
    let case = concat!(env!("CARGO_MANIFEST_DIR"), "/data/case30.m");
    let (manifest, emb, index) = (
        p("data/manifest.csv"),
        p("data/embeddings.pveb"),
        p("ref.pvix"),
    );
    let data = [
        "--manifest".to_string(),
        s(&manifest),
        "--embeddings".into(),
        s(&emb),
        "--index".into(),
        s(&index),
    ];
    let runs: Vec<Vec<String>> = vec![
        vec![
            "ingest".into(),
            "--synthetic".into(),
            "--out-dir".into(),
            s(&p("data")),
            "--cities".into(),
            "2".into(),
        ],
        vec![
            "index".into(),
            "--manifest".into(),
            s(&manifest),
            "--embeddings".into(),
            s(&emb),
            "--out".into(),
            s(&index),
        ],
        [
            &["retrieve".to_string()][..],
            &data,
            &[
                "--query".into(),
                "sydney-e-0007".into(),
                "--out".into(),
                s(&p("retrieve.csv")),
            ],
        ]
        .concat(),
        [
            &["assess".to_string()][..],
            &data,
            &[
                "--mode".into(),
                "rag".into(),
                "--out".into(),
                s(&p("rag.jsonl")),
            ],
        ]
        .concat(),
        [
            &["assess".to_string()][..],
            &data,
            &[
                "--mode".into(),
                "random".into(),
                "--seed".into(),
                "3".into(),
                "--out".into(),
                s(&p("random.jsonl")),
            ],
        ]
        .concat(),
        [
            &["assess".to_string()][..],
            &data,
            &[
                "--mode".into(),
                "plain".into(),
                "--out".into(),
                s(&p("plain.jsonl")),
            ],
        ]
        .concat(),
        vec![
            "evaluate".into(),
            "--manifest".into(),
            s(&manifest),
            "--predictions".into(),
            s(&p("rag.jsonl")),
            "--predictions".into(),
            s(&p("random.jsonl")),
            "--out".into(),
            s(&p("report.md")),
            "--format".into(),
            "markdown".into(),
            "--prf".into(),
            s(&p("prf.csv")),
        ],
        [
            &["ablate".to_string(), "k-sweep".into()][..],
            &data,
            &["--out".into(), s(&p("ksweep.csv"))],
        ]
        .concat(),
        [
            &["ablate".to_string(), "random-vs-similar".into()][..],
            &data,
            &[
                "--seed".into(),
                "4".into(),
                "--out".into(),
                s(&p("rvs.csv")),
            ],
        ]
        .concat(),
        [
            &["ablate".to_string(), "leave-one-out".into()][..],
            &data,
            &["--out".into(), s(&p("loo.csv"))],
        ]
        .concat(),
        vec![
            "simulate".into(),
            "--case".into(),
            case.into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            s(&p("sim")),
        ],
    ];
    let outputs = [
        "data/manifest.csv",
        "data/embeddings.pveb",
        "ref.pvix",
        "retrieve.csv",
        "rag.jsonl",
        "random.jsonl",
        "plain.jsonl",
        "report.md",
        "prf.csv",
        "ksweep.csv",
        "rvs.csv",
        "loo.csv",
        "sim/netload.csv",
        "sim/metrics.csv",
        "sim/voltage_dev_rag.csv",
    ];
    let pass = || -> Result<Vec<Vec<u8>>, String> {
        let mut captured = Vec::new();
        for args in &runs {
            let out = Command::new(bin)
                .args(args)
                .env_remove("PVRAG_LOG")
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!(
                    "{} failed: {}",
                    args[0],
                    String::from_utf8_lossy(&out.stderr)
                ));
            }
            captured.push(out.stdout);
        }
        for f in outputs {
            captured.push(std::fs::read(p(f)).map_err(|e| format!("{f}: {e}"))?);
        }
        Ok(captured)
    };
    let (a, b) = (pass()?, pass()?);
    let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    check(
        differing == 0,
        format!(
            "{} invocations, {} output files; {differing} differ between repeated runs",
            runs.len(),
            outputs.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("retrieval exactness", retrieval_exactness),
        ("metric identity", metric_identity),
        ("F1 reproduction", f1_reproduction),
        ("power-flow correctness", power_flow_correctness),
        ("coupling zero-error baseline", zero_error_baseline),
        ("capacity ordering and sign over seeds", capacity_ordering),
        (
            "capacity conservation under relocation",
            capacity_conservation,
        ),
        ("error-injection calibration", injection_calibration),
        ("end-to-end mock pipeline", end_to_end_mock),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
