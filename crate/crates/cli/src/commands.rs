use std::fs;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use dualview::amp::{amp_run, InitStrategy};
use dualview::baselines::{run_baseline, Method};
use dualview::energy::bethe_free_energy;
use dualview::energy::{it_threshold, spinodal, BranchThreshold, BranchThresholdOptions};
use dualview::linamp::linamp_run;
use dualview::metrics::{cs2, se_cs2};
use dualview::model::{generate_dataset, ModelConfig, View};
use dualview::se::{se_solve, SeInit, SeParams};
use dualview::thresholds::{algorithmic_threshold, eta_plus, eta_plus_of, Axis, PhaseGrid, PhaseMode};

use crate::config::{GridSpec, PhaseSection, RunFile};
use crate::error::{CliError, Result};
use crate::table::{Cell, Table};
use crate::{Common, InitArg, KindArg, MethodArg, ModeArg, SeInitArg};

fn load(common: &Common) -> Result<RunFile> {
    let text = fs::read_to_string(&common.config)?;
    RunFile::parse(&text)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

/// Grid points × seeds, ordered by axis values then seed.
fn tasks(rf: &RunFile, seeds: &[u64]) -> Vec<(Vec<f64>, u64)> {
    let mut grid = rf.grid();
    grid.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    grid.into_iter()
        .flat_map(|p| {
            let mut s = seeds.to_vec();
            s.sort_unstable();
            s.into_iter().map(move |seed| (p.clone(), seed))
        })
        .collect()
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Amp => "amp",
        MethodArg::Linamp => "linamp",
        MethodArg::PlsSvd => Method::PlsSvd.name(),
        MethodArg::PlsCanonical => Method::PlsCanonical.name(),
        MethodArg::Cca => Method::Cca.name(),
        MethodArg::Pca => Method::Pca.name(),
    }
}

fn strategy(i: InitArg) -> InitStrategy {
    match i {
        InitArg::ApproxNishimori => InitStrategy::ApproxNishimori,
        InitArg::Informed => InitStrategy::Informed,
        InitArg::Spectral => InitStrategy::Spectral,
    }
}

struct Outcome {
    /// `(t, [cs2_w_x, cs2_w_y, cs2_v_x, cs2_v_y])`; a single entry unless a
    /// trajectory was requested.
    points: Vec<(usize, [f64; 4])>,
    converged: bool,
    iters: usize,
}

fn cs2_all(w: [&[f64]; 2], v: [&[f64]; 2], ds: &dualview::model::Dataset) -> Result<[f64; 4]> {
    Ok([
        cs2(w[0], ds.w0(View::X))?,
        cs2(w[1], ds.w0(View::Y))?,
        cs2(v[0], ds.v0(View::X))?,
        cs2(v[1], ds.v0(View::Y))?,
    ])
}

fn run_one(rf: &RunFile, cfg: &ModelConfig, method: MethodArg, init: InitArg, trajectory: bool) -> Result<Outcome> {
    let ds = generate_dataset(cfg)?;
    match method {
        MethodArg::Amp => {
            let r = amp_run(&ds, cfg, strategy(init), &rf.amp_options())?;
            let pick = |p: &dualview::amp::TrajectoryPoint| [p.cs2_w[0], p.cs2_w[1], p.cs2_v[0], p.cs2_v[1]];
            let points = if trajectory {
                r.trajectory.iter().enumerate().map(|(t, p)| (t, pick(p))).collect()
            } else {
                vec![(r.iters, pick(r.final_point()))]
            };
            Ok(Outcome {
                points,
                converged: r.converged,
                iters: r.iters,
            })
        }
        MethodArg::Linamp => {
            let e = linamp_run(&ds, cfg, &rf.linamp_options())?;
            Ok(Outcome {
                points: vec![(e.iterations, cs2_all([&e.w_x, &e.w_y], [&e.v_x, &e.v_y], &ds)?)],
                converged: e.converged,
                iters: e.iterations,
            })
        }
        other => {
            let m = match other {
                MethodArg::PlsSvd => Method::PlsSvd,
                MethodArg::PlsCanonical => Method::PlsCanonical,
                MethodArg::Cca => Method::Cca,
                _ => Method::Pca,
            };
            let e = run_baseline(m, &ds.x_data, &ds.y_data)?;
            Ok(Outcome {
                points: vec![(0, cs2_all([&e.w_hat_x, &e.w_hat_y], [&e.v_hat_x, &e.v_hat_y], &ds)?)],
                converged: true,
                iters: 0,
            })
        }
    }
}

pub fn run(common: &Common, method: MethodArg, init: InitArg, trajectory: bool, timing: bool) -> Result<()> {
    if trajectory && method != MethodArg::Amp {
        return Err(CliError::Config("--trajectory is only available for method amp".into()));
    }
    let rf = load(common)?;
    let seeds = rf.seeds(common.seeds)?;
    let work = tasks(&rf, &seeds);
    let results: Vec<Result<(f64, Outcome, f64)>> = pool(common.jobs)?.install(|| {
        work.par_iter()
            .map(|(point, seed)| {
                let cfg = rf.config_at(point, *seed)?;
                let eta = eta_plus_of(&SeParams::from_config(&cfg));
                let t0 = Instant::now();
                let out = run_one(&rf, &cfg, method, init, trajectory)?;
                Ok((eta, out, t0.elapsed().as_secs_f64()))
            })
            .collect()
    });

    let mut columns = rf.axis_names();
    columns.extend(["method", "init", "seed"].map(String::from));
    if trajectory {
        columns.push("t".into());
    }
    columns.extend(
        [
            "cs2_w_x",
            "cs2_w_y",
            "cs2_v_x",
            "cs2_v_y",
            "eta_plus",
            "converged",
            "iters",
        ]
        .map(String::from),
    );
    if timing {
        columns.push("wall_time".into());
    }
    let init_name = match method {
        MethodArg::Amp => strategy(init).name(),
        _ => "none",
    };
    let mut table = Table::new(columns);
    for ((point, seed), res) in work.iter().zip(results) {
        let (eta, out, secs) = res?;
        for (t, c) in &out.points {
            let mut row: Vec<Cell> = point.iter().map(|&v| v.into()).collect();
            row.extend([method_name(method).into(), init_name.into(), (*seed).into()]);
            if trajectory {
                row.push((*t).into());
            }
            row.extend(c.iter().map(|&v| Cell::from(v)));
            row.extend([eta.into(), out.converged.into(), out.iters.into()]);
            if timing {
                row.push(secs.into());
            }
            table.push(row);
        }
    }
    table.write(&common.out)
}

fn se_init(i: SeInitArg) -> (SeInit, &'static str) {
    match i {
        SeInitArg::Uninformative => (SeInit::UninformativePerturbed, "uninformative"),
        SeInitArg::Informative => (SeInit::Informative, "informative"),
    }
}

pub fn se(common: &Common, inits: &[SeInitArg], trajectory: bool) -> Result<()> {
    let rf = load(common)?;
    let opts = rf.se_options();
    let base_seed = rf.base_config()?.seed;
    let grid: Vec<Vec<f64>> = tasks(&rf, &[base_seed]).into_iter().map(|(p, _)| p).collect();
    let work: Vec<(Vec<f64>, SeInitArg)> = grid
        .iter()
        .flat_map(|p| inits.iter().map(move |&i| (p.clone(), i)))
        .collect();
    let results: Vec<Result<Vec<Vec<Cell>>>> = pool(common.jobs)?.install(|| {
        work.par_iter()
            .map(|(point, init)| {
                let cfg = rf.config_at(point, base_seed)?;
                let p = SeParams::from_config(&cfg);
                let eta = eta_plus_of(&p);
                let (si, name) = se_init(*init);
                let r = se_solve(&p, si, &opts)?;
                let states: Vec<(usize, dualview::se::OverlapState)> = if trajectory {
                    r.trajectory.iter().copied().enumerate().collect()
                } else {
                    vec![(r.iterations, r.fixed_point)]
                };
                Ok(states
                    .into_iter()
                    .map(|(t, s)| {
                        let c = se_cs2(&s, [p.x.w_prior, p.y.w_prior], &p.latent);
                        let phi = bethe_free_energy(&s, &p).unwrap_or(f64::NAN);
                        let mut row: Vec<Cell> = point.iter().map(|&v| v.into()).collect();
                        row.push(name.into());
                        if trajectory {
                            row.push(t.into());
                        }
                        row.extend(s.m_w.iter().chain(&s.m_v).map(|&v| Cell::from(v)));
                        row.extend([c.w_x, c.w_y, c.v_x, c.v_y, phi, eta].map(Cell::from));
                        row.extend([r.converged.into(), r.iterations.into()]);
                        row
                    })
                    .collect())
            })
            .collect()
    });
    let mut columns = rf.axis_names();
    columns.push("init".into());
    if trajectory {
        columns.push("t".into());
    }
    columns.extend(
        [
            "m_w_x",
            "m_w_y",
            "m_v_x",
            "m_v_y",
            "cs2_w_x",
            "cs2_w_y",
            "cs2_v_x",
            "cs2_v_y",
            "phi",
            "eta_plus",
            "converged",
            "iters",
        ]
        .map(String::from),
    );
    let mut table = Table::new(columns);
    for rows in results {
        for row in rows? {
            table.push(row);
        }
    }
    table.write(&common.out)
}

fn scan_json(t: &BranchThreshold) -> Value {
    Value::Array(
        t.scan
            .iter()
            .map(|(x, a, b)| json!({"x": x, "cs2_informative": a, "cs2_uninformative": b}))
            .collect(),
    )
}

fn report(kind: &str, axis: Axis, theta: Option<f64>, tol: f64, diagnostics: Value) -> Value {
    json!({"kind": kind, "axis": axis.name(), "theta": theta, "tol": tol, "diagnostics": diagnostics})
}

pub fn threshold(
    common: &Common,
    kind: KindArg,
    axis: Option<&str>,
    range: Option<Vec<f64>>,
    tol: Option<f64>,
) -> Result<()> {
    let rf = load(common)?;
    let cfg = rf.base_config()?;
    let template = SeParams::from_config(&cfg);
    let axis = match axis {
        Some(a) => Axis::parse(a)?,
        None => rf.threshold.axis.unwrap_or(Axis::SigmaXi),
    };
    let range = match range {
        Some(r) => (r[0], r[1]),
        None => rf.threshold.range.unwrap_or(match axis {
            Axis::SigmaXi | Axis::SigmaXiX => (0.05, 3.0),
            Axis::Alpha => (0.01, 20.0),
            Axis::Lambda => (0.05, 10.0),
        }),
    };
    let defaults = BranchThresholdOptions::default();
    let bt = BranchThresholdOptions {
        se: rf.se_options(),
        tol: tol.or(rf.threshold.tol).unwrap_or(defaults.tol),
        scan_points: rf.threshold.scan_points.unwrap_or(defaults.scan_points),
        ..defaults
    };
    let range_json = json!([range.0.min(range.1), range.0.max(range.1)]);

    let alg = || -> Result<Value> {
        let theta = algorithmic_threshold(&template, axis, range)?;
        let closed = axis == Axis::SigmaXi;
        let p = axis.apply(&template, theta)?;
        let [lx, ly] = dualview::thresholds::effective_snrs(&p);
        Ok(report(
            "alg",
            axis,
            Some(theta),
            if closed { 0.0 } else { 1e-6 },
            json!({
                "method": if closed { "closed_form" } else { "bisection" },
                "eta_plus_at_theta": eta_plus(lx, ly, p.latent.c_hat()),
                "range": range_json,
            }),
        ))
    };
    let it = || -> Result<Value> {
        let t = it_threshold(&template, axis, range, &bt)?;
        Ok(report(
            "it",
            axis,
            Some(t.theta),
            if t.continuous { 1e-6 } else { bt.tol },
            json!({
                "continuous": t.continuous,
                "bisection_steps": t.bisection_steps,
                "range": range_json,
                "scan": scan_json(&t),
            }),
        ))
    };
    let sp = || -> Result<Value> {
        match spinodal(&template, axis, range, &bt) {
            Ok(t) => Ok(report(
                "spinodal",
                axis,
                Some(t.theta),
                bt.tol,
                json!({
                    "continuous": false,
                    "bisection_steps": t.bisection_steps,
                    "range": range_json,
                    "scan": scan_json(&t),
                }),
            )),
            Err(e @ dualview::Error::NoSpinodal { .. }) => Ok(report(
                "spinodal",
                axis,
                None,
                bt.tol,
                json!({"continuous": true, "message": e.to_string(), "range": range_json}),
            )),
            Err(e) => Err(e.into()),
        }
    };
    let out = match kind {
        KindArg::Alg => alg()?,
        KindArg::It => it()?,
        KindArg::Spinodal => sp()?,
        KindArg::All => Value::Array(vec![alg()?, it()?, sp()?]),
    };
    fs::write(&common.out, serde_json::to_string_pretty(&out)? + "\n")?;
    Ok(())
}

pub fn phase_diagram(common: &Common, mode: ModeArg) -> Result<()> {
    let text = fs::read_to_string(&common.config)?;
    let v: Value = serde_json::from_str(&text)?;
    let (section, se_opts) = if v.get("grid").is_some() {
        let s: PhaseSection = serde_json::from_value(v)?;
        (s, dualview::se::SeOptions::default())
    } else {
        let rf = RunFile::parse(&text)?;
        let s = rf
            .phase_diagram
            .clone()
            .ok_or_else(|| CliError::Config("run file has no `phase_diagram` section".into()))?;
        (s, rf.se_options())
    };
    let points: Vec<(f64, f64, f64)> = match &section.grid {
        GridSpec::CorrelationVsSnr { c_hat, snr } => c_hat
            .iter()
            .flat_map(|&c| snr.iter().map(move |&l| (c, l, l)))
            .collect(),
        GridSpec::SnrPair { c_hat, snr_x, snr_y } => snr_x
            .iter()
            .flat_map(|&a| snr_y.iter().map(move |&b| (*c_hat, a, b)))
            .collect(),
    };
    if points.is_empty() {
        return Err(CliError::Config("phase-diagram grid is empty".into()));
    }
    let mode = match mode {
        ModeArg::Boundary => PhaseMode::Boundary,
        ModeArg::Cs2Surface => PhaseMode::Cs2Surface,
    };
    let rows: Vec<Result<dualview::thresholds::PhaseDiagramRow>> = pool(common.jobs)?.install(|| {
        points
            .par_iter()
            .map(|&(c, a, b)| {
                let g = PhaseGrid::SnrPair {
                    c_hat: c,
                    snr_x: vec![a],
                    snr_y: vec![b],
                };
                Ok(dualview::thresholds::phase_diagram(&g, mode, &se_opts)?.remove(0))
            })
            .collect()
    });
    let mut table = Table::new(
        [
            "c_hat",
            "snr_x",
            "snr_y",
            "eta_plus",
            "recoverable",
            "cs2_w_x",
            "cs2_w_y",
            "cs2_v_x",
            "cs2_v_y",
        ]
        .map(String::from)
        .to_vec(),
    );
    for r in rows {
        let r = r?;
        let cs = r.cs2.unwrap_or([f64::NAN; 4]);
        let mut row: Vec<Cell> = vec![
            r.c_hat.into(),
            r.snr_x.into(),
            r.snr_y.into(),
            r.eta_plus.into(),
            r.recoverable.into(),
        ];
        row.extend(cs.iter().map(|&v| Cell::from(v)));
        table.push(row);
    }
    table.write(&common.out)
}
