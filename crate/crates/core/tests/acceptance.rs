//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line to the real stdout (visible without `--nocapture`) and then asserts.

use std::fs;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use parsimony::cli::run_with;
use parsimony::convex::lasso::{bpdn_lasso, elastic_net, kkt_residual, lambda_max, LassoConfig};
use parsimony::dictionary::Algorithm;
use parsimony::experiments::{phase_grid, synth_dict_experiment, volume_scores, PhaseCell, PhaseConfig, SynthDictConfig};
use parsimony::frame_analysis::{exhaustive_p0, krank, mutual_coherence, nsp_constant, ric, spark};
use parsimony::linalg::{least_squares, pseudoinverse, svd};
use parsimony::matrix_io::{save_matrix, save_vector};
use parsimony::rng::{exact_k_sparse, gaussian_frame, gaussian_matrix, RngStream};
use parsimony::solvers::Solver;
use parsimony::Frame;

const SEED: u64 = 20_240_601;

fn report(criterion: u32, pass: bool, elapsed: Duration, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion}: {verdict} ({:.1} s) {detail}\n", elapsed.as_secs_f64());
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn vector(len: usize, stream: &RngStream) -> DVector<f64> {
    DVector::from_iterator(len, gaussian_matrix(len, 1, &mut stream.generator()).iter().copied())
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let names = ["omp", "bp", "sl0", "limaps", "focuss"];
    let solvers: Vec<Solver> = names.iter().map(|n| Solver::named(n).unwrap()).collect();
    let root = RngStream::new(SEED).fork(1);
    let mut matches = [0usize; 5];
    let (mut nsp_cases, mut bp_nsp_matches) = (0, 0);
    let mut by_k = [0usize; 3];
    let total = 200usize;
    for i in 0..total {
        let stream = root.fork(i as u64);
        let mut g = stream.fork(9).generator();
        let n = g.gen_range(4..=8);
        let m = g.gen_range(n + 1..=12);
        let phi = gaussian_frame(n, m, &stream.fork(0), true).unwrap();
        let mu = mutual_coherence(&phi).unwrap();
        // Largest k ≤ 2 strictly below the coherence bound.
        let k = (1..=2).rev().find(|&k| (k as f64) < (1.0 + 1.0 / mu) / 2.0).unwrap_or(1);
        by_k[k] += 1;
        let alpha = exact_k_sparse(m, k, &stream.fork(1)).unwrap();
        let s = phi.apply(&alpha);
        let oracle = exhaustive_p0(&phi, &s, 2).unwrap();
        assert!(oracle.converged);
        let nsp_ok = nsp_constant(&phi, k).unwrap() < 1.0;
        nsp_cases += nsp_ok as usize;
        for (j, solver) in solvers.iter().enumerate() {
            let hit = solver.solve(&phi, &s).map(|r| r.code.support() == oracle.code.support()).unwrap_or(false);
            matches[j] += hit as usize;
            if names[j] == "bp" && nsp_ok && hit {
                bp_nsp_matches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let rates: Vec<String> = names.iter().zip(matches).map(|(n, c)| format!("{n} {c}/{total}")).collect();
    let pass = matches.iter().all(|&c| c * 100 >= 95 * total)
        && bp_nsp_matches == nsp_cases
        && elapsed < Duration::from_secs(120);
    report(
        1,
        pass,
        elapsed,
        &format!(
            "support matches: {}; bp on NSP<1 instances {bp_nsp_matches}/{nsp_cases}; k=1: {}, k=2: {}",
            rates.join(", "),
            by_k[1],
            by_k[2]
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_theorem_suite() {
    let start = Instant::now();
    let root = RngStream::new(SEED).fork(2);
    let sqrt2 = 2f64.sqrt();
    let (mut spark_krank, mut spark_mu, mut ric_ok, mut rip_cases, mut rip_ok) = (0, 0, 0, 0, 0);
    let total = 100usize;
    for i in 0..total {
        let stream = root.fork(i as u64);
        let mut g = stream.fork(9).generator();
        let n = g.gen_range(3..=8);
        let m = g.gen_range(n + 1..=n + 4);
        let phi = if i % 2 == 0 {
            gaussian_frame(n, m, &stream.fork(0), true).unwrap()
        } else {
            // Rotated identity plus flat-ish extra atoms: low coherence, so the
            // isometry hypothesis is met often.
            let q = gaussian_matrix(n, n, &mut g).qr().q();
            let mut a = DMatrix::identity(n, m);
            for c in n..m {
                let v = DVector::from_fn(n, |_, _| if g.gen_bool(0.5) { 1.0 } else { -1.0 } + 0.2 * g.gen_range(-1.0..1.0));
                a.set_column(c, &v.normalize());
            }
            Frame::new(q * a).unwrap()
        };
        let sp = spark(&phi).unwrap();
        let mu = mutual_coherence(&phi).unwrap();
        spark_krank += (sp == krank(&phi).unwrap() + 1) as usize;
        spark_mu += (sp as f64 >= 1.0 + 1.0 / mu - 1e-12) as usize;
        let d1 = ric(&phi, 1).unwrap();
        let d2 = ric(&phi, 2).unwrap();
        ric_ok += (d1.abs() <= 1e-10 && (d2 - mu).abs() <= 1e-10) as usize;
        if d2 < sqrt2 - 1.0 {
            rip_cases += 1;
            let gamma = nsp_constant(&phi, 2).unwrap();
            let bound = sqrt2 * d2 / (1.0 - (1.0 + sqrt2) * d2);
            rip_ok += (gamma <= bound + 1e-8) as usize;
        }
    }
    let elapsed = start.elapsed();
    let pass = spark_krank == total
        && spark_mu == total
        && ric_ok == total
        && rip_ok == rip_cases
        && rip_cases > 0
        && elapsed < Duration::from_secs(60);
    report(
        2,
        pass,
        elapsed,
        &format!(
            "spark=krank+1 {spark_krank}/{total}; spark>=1+1/mu {spark_mu}/{total}; d1=0,d2=mu {ric_ok}/{total}; \
             RIP->NSP {rip_ok}/{rip_cases} applicable"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_phase_grid() {
    let start = Instant::now();
    let cfg = PhaseConfig::desk(SEED);
    assert_eq!((cfg.n, cfg.resolution, cfg.trials), (50, 10, 20));
    let cells = phase_grid(&cfg).unwrap();
    let volumes = volume_scores(&cells).unwrap();
    let elapsed = start.elapsed();

    let region = |pred: &dyn Fn(&PhaseCell) -> bool| cells.iter().filter(|c| pred(c)).collect::<Vec<_>>();
    let easy = region(&|c| c.delta >= 0.8 && c.rho <= 0.06);
    let hard = region(&|c| c.delta <= 0.15 && c.rho >= 0.45);
    let mut notes = Vec::new();
    let mut pass = !easy.is_empty() && !hard.is_empty();
    for name in &cfg.solvers {
        let easy_min = easy.iter().map(|c| c.solvers[name].mean_snr).fold(f64::INFINITY, f64::min);
        let hard_max = hard.iter().map(|c| c.solvers[name].mean_snr).fold(f64::NEG_INFINITY, f64::max);
        pass &= easy_min > 60.0 && hard_max < 10.0;
        notes.push(format!("{name} easy>={easy_min:.1} hard<={hard_max:.1} V={:.3}", volumes[name]));
    }
    let vmax = volumes.values().copied().fold(f64::NEG_INFINITY, f64::max);
    pass &= volumes["limaps"] >= 0.95 * vmax;
    pass &= elapsed < Duration::from_secs(600);
    report(
        3,
        pass,
        elapsed,
        &format!("{} easy / {} hard cells; {}", easy.len(), hard.len(), notes.join("; ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_4_dictionary_learning() {
    let start = Instant::now();
    let cfg = SynthDictConfig::desk(SEED);
    assert_eq!((cfg.n, cfg.m, cfg.k, cfg.samples, cfg.iterations, cfg.trials), (50, 100, 5, 2000, 50, 10));
    let report_data = synth_dict_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();

    let clean_k = report_data.summary(None, Algorithm::Ksvd).unwrap();
    let clean_r = report_data.summary(None, Algorithm::Rsvd).unwrap();
    let a = clean_k.mean_recovered >= 85.0 && clean_r.mean_recovered >= 85.0;
    let mut b = true;
    let mut gaps = Vec::new();
    for noise in cfg.noise_snr_db.iter().flatten().filter(|v| **v >= 30.0) {
        let k = report_data.summary(Some(*noise), Algorithm::Ksvd).unwrap();
        let r = report_data.summary(Some(*noise), Algorithm::Rsvd).unwrap();
        b &= r.mean_final_e_snr >= k.mean_final_e_snr - 0.2;
        gaps.push(format!("{noise} dB: rsvd {:.2} vs ksvd {:.2}", r.mean_final_e_snr, k.mean_final_e_snr));
    }
    let violations: usize = report_data.summaries.iter().map(|s| s.monotone_violations).sum();
    let c = violations == 0;
    let pass = a && b && c && elapsed < Duration::from_secs(900);
    report(
        4,
        pass,
        elapsed,
        &format!(
            "(a) {} atoms ksvd {:.2} rsvd {:.2}; (b) {} {}; (c) {} monotone violations",
            if a { "ok" } else { "FAIL" },
            clean_k.mean_recovered,
            clean_r.mean_recovered,
            if b { "ok" } else { "FAIL" },
            gaps.join(", "),
            violations
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_convex_optimality() {
    let start = Instant::now();
    let root = RngStream::new(SEED).fork(5);
    let total = 100usize;
    let (mut kkt_ok, mut zero_ok, mut dup_ok) = (0, 0, 0);
    let mut worst_kkt: f64 = 0.0;
    let mut worst_dup: f64 = 0.0;
    for i in 0..total {
        let stream = root.fork(i as u64);
        let mut g = stream.fork(9).generator();
        let n = g.gen_range(5..=30);
        let m = g.gen_range(n + 1..=3 * n);
        let k = g.gen_range(1..=(n / 3).max(1));
        let phi = gaussian_frame(n, m, &stream.fork(0), true).unwrap();
        let s = phi.apply(&exact_k_sparse(m, k, &stream.fork(1)).unwrap()) + vector(n, &stream.fork(2)) * 0.01;
        let top = lambda_max(&phi, &s);

        let lambda = top * 10f64.powf(g.gen_range(-4.0..-0.1));
        let r = bpdn_lasso(&phi, &s, &LassoConfig::new(lambda)).unwrap();
        let kkt = kkt_residual(&phi, &s, &r.code.to_vector(), lambda, 1.0);
        worst_kkt = worst_kkt.max(kkt);
        kkt_ok += (kkt <= 1e-6) as usize;

        let big = top * g.gen_range(1.0..5.0);
        zero_ok += (bpdn_lasso(&phi, &s, &LassoConfig::new(big)).unwrap().code.sparsity() == 0) as usize;

        let j = g.gen_range(0..m);
        let dup = phi.matrix().clone().insert_column(m, 0.0);
        let mut dup = dup;
        dup.set_column(m, &phi.matrix().column(j).into_owned());
        let phi2 = Frame::new(dup).unwrap();
        let mix = g.gen_range(0.1..0.9);
        let cfg = LassoConfig::new(lambda_max(&phi2, &s) * mix * 0.05).with_mix(mix);
        let v = elastic_net(&phi2, &s, &cfg).unwrap().code.to_vector();
        let gap = (v[j] - v[m]).abs();
        worst_dup = worst_dup.max(gap);
        dup_ok += (gap <= 1e-6) as usize;
    }
    let elapsed = start.elapsed();
    let pass = kkt_ok == total && zero_ok == total && dup_ok == total && elapsed < Duration::from_secs(60);
    report(
        5,
        pass,
        elapsed,
        &format!(
            "KKT<=1e-6 {kkt_ok}/{total} (worst {worst_kkt:.1e}); zero above lambda_max {zero_ok}/{total}; \
             duplicate columns equal {dup_ok}/{total} (worst {worst_dup:.1e})"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_numerical_kernels() {
    let start = Instant::now();
    let root = RngStream::new(SEED).fork(6);
    let (mut worst_svd, mut worst_pinv): (f64, f64) = (0.0, 0.0);
    for i in 0..50 {
        let stream = root.fork(i as u64);
        let mut g = stream.fork(9).generator();
        let rows = g.gen_range(1..=50);
        let cols = g.gen_range(1..=100);
        let a = gaussian_matrix(rows, cols, &mut stream.generator());
        let dec = svd(&a).unwrap();
        worst_svd = worst_svd.max((&a - dec.reconstruct()).norm() / a.norm().max(1.0));
        let p = pseudoinverse(&a).unwrap();
        let ap = &a * &p;
        let pa = &p * &a;
        for e in [
            (&ap * &a - &a).norm(),
            (&pa * &p - &p).norm(),
            (&ap - ap.transpose()).norm(),
            (&pa - pa.transpose()).norm(),
        ] {
            worst_pinv = worst_pinv.max(e);
        }
    }

    let stream = root.fork(100);
    let a = gaussian_matrix(10, 25, &mut stream.generator());
    let b = vector(10, &stream.fork(1));
    let x = least_squares(&a, &b).unwrap();
    let null_proj = DMatrix::identity(25, 25) - pseudoinverse(&a).unwrap() * &a;
    let mut g = stream.fork(2).generator();
    let mut least = true;
    for _ in 0..1000 {
        let z = DVector::from_fn(25, |_, _| g.gen_range(-1.0..1.0));
        let y = &x + &null_proj * z;
        least &= (&a * &y - &b).norm() <= 1e-9 && y.norm() >= x.norm() - 1e-9;
    }
    let elapsed = start.elapsed();
    let pass = worst_svd <= 1e-10 && worst_pinv <= 1e-9 && least;
    report(
        6,
        pass,
        elapsed,
        &format!("svd reconstruction {worst_svd:.1e}; Moore-Penrose {worst_pinv:.1e}; least norm vs 1000 perturbations {least}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 7

fn cli(args: &[&str]) -> i32 {
    let argv = std::iter::once("parsimony").chain(args.iter().copied());
    run_with(argv, &mut Vec::new(), &mut Vec::new())
}

#[test]
fn criterion_7_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    let phi = gaussian_frame(8, 14, &RngStream::new(SEED).fork(7), true).unwrap();
    let s = phi.apply(&exact_k_sparse(14, 2, &RngStream::new(SEED).fork(8)).unwrap());
    save_matrix(&phi, d("phi.csv")).unwrap();
    save_vector(&s, d("s.csv")).unwrap();
    fs::write(d("phase.json"), r#"{"n": 10, "delta_max": 0.8, "resolution": 3, "trials": 4, "solvers": ["omp", "bp", "sl0", "limaps", "lasso"]}"#)
        .unwrap();
    fs::write(d("dict.json"), r#"{"n": 8, "m": 12, "k": 2, "samples": 80, "iterations": 4, "trials": 2}"#).unwrap();

    let runs: Vec<(&str, Vec<String>, &[&str])> = vec![
        ("phase", vec!["phase".into(), "--config".into(), d("phase.json"), "--seed".into(), "3".into()], &[
            "cells.csv",
            "volumes.json",
            "heatmap_limaps.svg",
        ]),
        ("dictlearn", vec!["dictlearn".into(), "--config".into(), d("dict.json")], &[
            "learn_curves.csv",
            "atoms_table.csv",
            "summary.json",
        ]),
        ("analyze", vec!["analyze".into(), "--matrix".into(), d("phi.csv")], &["report.json"]),
        (
            "recover",
            vec!["recover".into(), "--matrix".into(), d("phi.csv"), "--signal".into(), d("s.csv"), "--solver".into(), "bp".into()],
            &["result.json"],
        ),
    ];
    let mut identical = 0;
    let mut compared = 0;
    let mut codes_ok = true;
    for (name, args, files) in &runs {
        let first = d(&format!("{name}-1"));
        let again = d(&format!("{name}-2"));
        let mut a: Vec<&str> = vec!["--out", &first];
        a.extend(args.iter().map(String::as_str));
        codes_ok &= cli(&a) == 0;
        // The second run sees only the manifest of the first.
        let manifest = format!("{first}/manifest.json");
        let cmd = args[0].as_str();
        let b: Vec<&str> = vec!["--out", &again, "--jobs", "2", cmd, "--config", &manifest];
        codes_ok &= cli(&b) == 0;
        for f in files.iter().chain(std::iter::once(&"manifest.json")) {
            compared += 1;
            let x = fs::read(format!("{first}/{f}"));
            let y = fs::read(format!("{again}/{f}"));
            identical += matches!((x, y), (Ok(x), Ok(y)) if x == y) as usize;
        }
    }
    let elapsed = start.elapsed();
    let pass = codes_ok && identical == compared;
    report(7, pass, elapsed, &format!("{identical}/{compared} artifacts byte-identical on re-run from manifest, exit codes ok: {codes_ok}"));
    assert!(pass);
}
