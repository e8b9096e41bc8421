//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use wsn_energy::catalog::{default_space, sample_config, Param};
use wsn_energy::dataset::RESPONSE;
use wsn_energy::pipeline::{self, PipelineOptions};
use wsn_energy::regression::{fit, Design};
use wsn_energy::sim::{Simulator, WorldConfig};
use wsn_energy::stats::{analyze, linear_corr, nonlinear_corr, p_value, reduce, CorrelationReport, ReportRow};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn normal_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn correlation_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..10_000 {
        let n = rng.random_range(3..200);
        let p = normal_series(&mut rng, n);
        let e = normal_series(&mut rng, n);
        let a: f64 = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let b: f64 = rng.random_range(-100.0..100.0);

        let line: Vec<f64> = p.iter().map(|x| a * x + b).collect();
        let r_line = linear_corr(&p, &line).map_err(|e| e.to_string())?;
        ensure(
            (r_line - a.signum()).abs() <= 1e-12,
            format!("case {case}: linear series gave {r_line}"),
        )?;

        let r = linear_corr(&p, &e).map_err(|e| e.to_string())?;
        let r_sym = linear_corr(&e, &p).map_err(|e| e.to_string())?;
        let r_aff = linear_corr(&line, &e).map_err(|e| e.to_string())?;
        ensure((-1.0..=1.0).contains(&r), format!("case {case}: r = {r}"))?;
        worst = worst.max((r - r_sym).abs()).max((r_aff - a.signum() * r).abs());
        ensure(
            worst <= 1e-10,
            format!("case {case}: symmetry/affine deviation {worst:e}"),
        )?;
    }
    Ok(format!("10000 cases, worst symmetry/affine deviation {worst:.1e}"))
}

fn nonlinear_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..10_000 {
        let n = rng.random_range(3..200);
        let p = normal_series(&mut rng, n);
        let e = normal_series(&mut rng, n);
        let p2: Vec<f64> = p.iter().map(|x| x * x).collect();
        let e2: Vec<f64> = e.iter().map(|x| x * x).collect();
        let a = nonlinear_corr(&p, &e).map_err(|e| e.to_string())?;
        let b = linear_corr(&p2, &e2).map_err(|e| e.to_string())?;
        ensure(a == b, format!("case {case}: {a} != {b}"))?;
    }
    let (p, e) = ([-1.0, 0.0, 1.0], [2.0, 0.0, 2.0]);
    let lin = linear_corr(&p, &e).map_err(|e| e.to_string())?;
    let non = nonlinear_corr(&p, &e).map_err(|e| e.to_string())?;
    ensure(
        lin.abs() <= 1e-12 && (non - 1.0).abs() <= 1e-12,
        format!("symmetric case gave ({lin}, {non})"),
    )?;
    Ok(format!(
        "10000 exact matches; (-1,0,1)/(2,0,2) gives linear {lin:.0}, nonlinear {non:.0}"
    ))
}

/// Pair of standardized series whose sample correlation is exactly `r`.
fn series_with_correlation(rng: &mut ChaCha8Rng, m: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
    let standardize = |v: &mut Vec<f64>| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    let mut x = normal_series(rng, m);
    standardize(&mut x);
    let mut z = normal_series(rng, m);
    standardize(&mut z);
    let dot: f64 = x.iter().zip(&z).map(|(a, b)| a * b).sum();
    z.iter_mut().zip(&x).for_each(|(zi, xi)| *zi -= dot * xi);
    standardize(&mut z);
    let y = x
        .iter()
        .zip(&z)
        .map(|(a, b)| r * a + (1.0 - r * r).sqrt() * b)
        .collect();
    (x, y)
}

const PERMUTATIONS: u64 = 1_000_000;

fn permutation_p(x: &[f64], y: &[f64], seed: u64) -> f64 {
    // x and y are centered with unit norm, so a dot product is a correlation.
    let observed = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>().abs() - 1e-12;
    let chunks = 64u64;
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c << 40));
            let mut perm = y.to_vec();
            let mut hits = 0u64;
            for _ in 0..PERMUTATIONS / chunks {
                perm.shuffle(&mut rng);
                let r: f64 = x.iter().zip(&perm).map(|(a, b)| a * b).sum();
                if r.abs() >= observed {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    hits as f64 / (PERMUTATIONS / chunks * chunks) as f64
}

fn p_value_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_abs = 0.0f64;
    let mut lines = Vec::new();
    for pair in 0..20u64 {
        let m = rng.random_range(20..=500usize);
        // spread targets over p from ~1e-3 to ~1
        let z: f64 = rng.random_range(0.0..3.3);
        let r = (z / (m as f64).sqrt()).min(0.95) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let (x, y) = series_with_correlation(&mut rng, m, r);
        let analytic = p_value(r, m).map_err(|e| e.to_string())?;
        let empirical = permutation_p(&x, &y, 0x5eed_0000 + pair);
        let abs = (analytic - empirical).abs();
        let rel = abs / analytic;
        let ok = abs <= 0.02 || (analytic > 1e-3 && rel <= 0.05);
        worst_abs = worst_abs.max(abs);
        lines.push(format!(
            "M={m} r={r:+.4} t-test {analytic:.5} permutation {empirical:.5}"
        ));
        ensure(ok, format!("pair {pair}: {}", lines.last().unwrap()))?;
    }
    Ok(format!("20 pairs x 1e6 permutations, worst |diff| {worst_abs:.4}"))
}

fn pinv_solution(design: &Design) -> DVector<f64> {
    let pinv = design.matrix.clone().pseudo_inverse(1e-14).expect("pseudo-inverse");
    pinv * &design.response
}

fn orthogonality(design: &Design, coef: &DVector<f64>) -> f64 {
    let r = &design.response - &design.matrix * coef;
    (design.matrix.transpose() * r).amax() / (design.matrix.transpose() * &design.response).amax()
}

fn coefficients(model: &wsn_energy::regression::LinearModel) -> DVector<f64> {
    let mut v = vec![model.intercept];
    v.extend(&model.coefficients);
    DVector::from_vec(v)
}

fn regression_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_orth = 0.0f64;

    // noiseless E = 2 + 3p
    let p: Vec<f64> = (0..50).map(|_| rng.random_range(-10.0..10.0)).collect();
    let design = Design {
        matrix: DMatrix::from_fn(50, 2, |i, j| if j == 0 { 1.0 } else { p[i] }),
        response: DVector::from_fn(50, |i, _| 2.0 + 3.0 * p[i]),
        names: vec!["p".into()],
    };
    let model = fit(&design).map_err(|e| e.to_string())?;
    ensure(
        (model.intercept - 2.0).abs() <= 1e-9 && (model.coefficients[0] - 3.0).abs() <= 1e-9,
        format!("exact recovery gave ({}, {})", model.intercept, model.coefficients[0]),
    )?;
    worst_orth = worst_orth.max(orthogonality(&design, &coefficients(&model)));

    // noisy, M = 1000, N = 4
    let (m, n, sigma) = (1000, 4, 0.01);
    let truth = DVector::from_vec(vec![0.5, -1.25, 2.0, 0.03, 7.5]);
    let matrix = DMatrix::from_fn(m, n + 1, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.random_range(0.0..1.0) * j as f64
        }
    });
    let noise = DVector::from_fn(m, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    });
    let design = Design {
        response: &matrix * &truth + noise,
        matrix,
        names: (1..=n).map(|j| format!("x{j}")).collect(),
    };
    let model = fit(&design).map_err(|e| e.to_string())?;
    let fitted = coefficients(&model);
    let oracle = pinv_solution(&design);
    let gram_inv = (design.matrix.transpose() * &design.matrix)
        .try_inverse()
        .ok_or("singular gram matrix")?;
    let mut worst_se = 0.0f64;
    for j in 0..=n {
        let se = sigma * gram_inv[(j, j)].sqrt();
        let z = (fitted[j] - truth[j]).abs() / se;
        worst_se = worst_se.max(z);
        ensure(
            z <= 3.0,
            format!("coefficient {j} is {z:.2} standard errors from truth"),
        )?;
        let agree = (fitted[j] - oracle[j]).abs() <= 1e-8 * (1.0 + oracle[j].abs());
        ensure(
            agree,
            format!("coefficient {j}: fit {} vs pseudo-inverse {}", fitted[j], oracle[j]),
        )?;
    }
    worst_orth = worst_orth.max(orthogonality(&design, &fitted));

    // orthogonality on a batch of random fits
    for _ in 0..200 {
        let rows = rng.random_range(10..300);
        let cols = rng.random_range(0..7);
        let matrix = DMatrix::from_fn(rows, cols + 1, |_, j| {
            if j == 0 {
                1.0
            } else {
                rng.random_range(-1.0..1.0) * 10f64.powi(j as i32 - 3)
            }
        });
        let response = DVector::from_fn(rows, |_, _| rng.random_range(0.0..1.0));
        let design = Design {
            matrix,
            response,
            names: (1..=cols).map(|j| format!("x{j}")).collect(),
        };
        let model = fit(&design).map_err(|e| e.to_string())?;
        worst_orth = worst_orth.max(orthogonality(&design, &coefficients(&model)));
    }
    ensure(worst_orth <= 1e-8, format!("orthogonality {worst_orth:e}"))?;
    Ok(format!(
        "exact recovery ok; noisy worst {worst_se:.2} SE; worst orthogonality {worst_orth:.1e}"
    ))
}

fn conservation_and_determinism(sim: &Simulator) -> Check {
    let space = sim.space().clone();
    let initial = sim.world().initial_energy;
    let results: Vec<_> = (0..1000u64)
        .into_par_iter()
        .map(|s| sim.run(&sample_config(&space, 50_000 + s)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for r in &results {
        let spent: f64 = r.node_residuals.iter().map(|x| initial - x).sum();
        let booked = r.counters.energy.total();
        let rel = (spent - booked).abs() / spent.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        ensure(
            rel <= 1e-9,
            format!("seed {}: spent {spent:e} vs booked {booked:e}", r.seed),
        )?;
    }
    for r in results.iter().step_by(10) {
        let again = sim.run(&r.config).map_err(|e| e.to_string())?;
        ensure(&again == r, format!("seed {} is not reproducible", r.seed))?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(
            bits(&again.node_residuals) == bits(&r.node_residuals),
            "residuals differ bitwise",
        )?;
    }
    Ok(format!(
        "1000 runs, worst relative imbalance {worst:.1e}; 100 re-runs bit-identical"
    ))
}

fn reference_selection() -> Check {
    let rows = [
        ("transmission_interval", 3.7979e-5, 0.2842, 0.2474),
        ("num_hops", 0.00051, -0.2411, -0.2247),
        ("sensor_interval", 0.02397, 0.1580, 0.1280),
        ("sense_radius", 0.04933, -0.1355, -0.1178),
        ("net_density", 0.11896, -0.1095, -0.0474),
        ("transmission_radius", 0.32401, -0.0694, -0.0693),
        ("num_sinks", 0.42896, -0.0557, 0.0004),
        ("num_neighbors", 0.44191, -0.0541, 0.0088),
    ];
    let report = CorrelationReport {
        response: RESPONSE.into(),
        samples: 800,
        rows: rows
            .iter()
            .map(|&(name, p, lin, non)| ReportRow {
                parameter: name.into(),
                symbol: Param::lookup(name).unwrap().symbol().into(),
                p_value: Some(p),
                linear_corr: Some(lin),
                nonlinear_corr: Some(non),
                flag: None,
            })
            .collect(),
    };
    let selected = reduce(&report, 0.05, None).map_err(|e| e.to_string())?.names();
    let expected = ["transmission_interval", "num_hops", "sensor_interval", "sense_radius"];
    ensure(selected == expected, format!("selected {selected:?}"))?;
    Ok(format!("selected {}", selected.join(", ")))
}

fn sign_reproduction(sim: &Simulator) -> Check {
    let ds = pipeline::profile(sim, 0..800, None).map_err(|e| e.to_string())?;
    let report = analyze(&ds).map_err(|e| e.to_string())?;
    let row = |sym: &str| report.rows.iter().find(|r| r.symbol == sym).cloned().unwrap();
    let (g, h, rs) = (row("g_Tx"), row("h_iD"), row("r_sense"));
    let r = |x: &ReportRow| x.linear_corr.unwrap_or(f64::NAN);
    let p = |x: &ReportRow| x.p_value.unwrap_or(f64::NAN);
    let summary = format!(
        "g_Tx r={:+.3} p={:.1e}; h_iD r={:+.3} p={:.1e}; r_sense r={:+.3}",
        r(&g),
        p(&g),
        r(&h),
        p(&h),
        r(&rs)
    );
    ensure(r(&g) > 0.0 && r(&h) < 0.0 && r(&rs) < 0.0, format!("signs: {summary}"))?;
    ensure(p(&g) < 0.05 && p(&h) < 0.05, format!("significance: {summary}"))?;
    Ok(summary)
}

fn error_band(sim: &Simulator) -> Check {
    let out = pipeline::run_pipeline(sim, &PipelineOptions::default()).map_err(|e| e.to_string())?;
    let err = out.evaluation.mean_relative_error;
    let summary = format!(
        "800/200, selected [{}], mean relative error {:.2}%",
        out.manifest.selected.join(", "),
        100.0 * err
    );
    ensure(err > 0.02 && err <= 0.20, summary.clone())?;
    Ok(summary)
}

fn trends(sim: &Simulator) -> Check {
    let world = sim.world();
    let (t, horizon) = (world.event_interval_mean, world.buffer_horizon());
    let seeds = 0..pipeline::SWEEP_SEEDS;

    let g = pipeline::sweep(
        sim,
        Param::TransmissionInterval,
        &pipeline::transmission_interval_grid(),
        seeds.clone(),
        None,
    )
    .map_err(|e| e.to_string())?;
    let inside: Vec<f64> = g
        .residual_energy
        .iter()
        .filter(|p| p.x > t && p.x <= horizon)
        .map(|p| p.mean)
        .collect();
    ensure(
        inside.windows(2).all(|w| w[1] >= w[0]),
        format!("residual energy not non-decreasing on (T, nT]: {inside:?}"),
    )?;
    let best = g
        .received_packets
        .iter()
        .filter(|p| p.x > t && p.x <= horizon)
        .map(|p| p.mean)
        .fold(f64::MIN, f64::max);
    let beyond: Vec<f64> = g
        .received_packets
        .iter()
        .filter(|p| p.x > horizon)
        .map(|p| p.mean)
        .collect();
    let drop = 1.0 - beyond.iter().sum::<f64>() / beyond.len() as f64 / best;
    ensure(
        drop >= 0.10,
        format!("received packets drop only {:.1}% past nT", 100.0 * drop),
    )?;

    let h = pipeline::sweep(sim, Param::NumHops, &pipeline::hop_grid(), seeds, None).map_err(|e| e.to_string())?;
    let tail: Vec<f64> = h
        .residual_energy
        .iter()
        .filter(|p| p.x >= 2.0)
        .map(|p| p.mean)
        .collect();
    ensure(
        tail.windows(2).all(|w| w[1] < w[0]),
        format!("residual energy not strictly decreasing over h = 2..8: {tail:?}"),
    )?;
    Ok(format!(
        "g_Tx energy rises {:.5} -> {:.5} J; {:.1}% fewer packets past nT; h 2..8 energy {:.5} -> {:.5} J",
        inside[0],
        inside[inside.len() - 1],
        100.0 * drop,
        tail[0],
        tail[tail.len() - 1]
    ))
}

fn main() {
    let sim = Simulator::new(default_space(), WorldConfig::default()).expect("default simulator");
    let criteria: Vec<Criterion> = vec![
        ("correlation identities", Box::new(correlation_identities)),
        ("nonlinear correlation identity", Box::new(nonlinear_identity)),
        ("p-value vs permutation oracle", Box::new(p_value_oracle)),
        ("regression oracle", Box::new(regression_oracle)),
        (
            "energy conservation and determinism",
            Box::new(|| conservation_and_determinism(&sim)),
        ),
        ("reference report selection", Box::new(reference_selection)),
        ("linear-correlation signs", Box::new(|| sign_reproduction(&sim))),
        ("end-to-end error band", Box::new(|| error_band(&sim))),
        ("g_Tx and h_iD trends", Box::new(|| trends(&sim))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail}) [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({detail}) [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
