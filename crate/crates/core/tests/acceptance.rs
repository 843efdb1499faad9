//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//! Failures are reported, not hidden; set `ACCEPTANCE_STRICT=1` to also turn
//! them into a non-zero exit. `ACCEPTANCE_ONLY=k` runs criterion `k` alone.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use jinet::eval::{
    adjusted_rand_index, component_errors, kmeans, method_errors, variance_explained_covariates,
    variance_explained_network,
};
use jinet::io::{read_matrix, write_matrix};
use jinet::linalg::{delta_separation, procrustes_distance, OrthonormalBasis};
use jinet::simgen::{group_structure_example, group_structure_groups, random_ground_truth, simulation_design, SimConfig, Setting};
use jinet::{refine_decompose, spectral_decompose, AdjacencyMatrix, CovariateMatrix, Decomposition, Ranks, RefineConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let shapes = [(1, 1, 1), (2, 1, 1), (2, 2, 2)];
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..200u64 {
        let n = if i % 2 == 0 { 40 } else { 100 };
        let (a, b, c) = shapes[(i as usize / 2) % 3];
        let ranks = Ranks::new(a, b, c).unwrap();
        let truth = random_ground_truth(n, 10, ranks, 0.1, 1000 + i).unwrap();
        let adj = AdjacencyMatrix::new(truth.network_signal.clone()).unwrap();
        let cov = CovariateMatrix::unnamed(truth.covariate_signal.clone()).unwrap();
        match spectral_decompose(&adj, &cov, ranks).and_then(|d| component_errors(&d, &truth.components)) {
            Ok((dm, d1, d2)) => {
                let w = dm.max(d1).max(d2);
                worst = worst.max(w);
                if !(w < 1e-8) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures == 0 && secs < 30.0,
        format!("200 instances, {failures} failures, worst distance {worst:.2e}, {secs:.1}s"),
    )
}

fn noisy_instance(i: u64) -> SimConfig {
    let setting = if i % 2 == 0 { Setting::StrongJoint } else { Setting::WeakJoint };
    let mut cfg = SimConfig::defaults(setting);
    cfg.n = 100;
    cfg.target_degree = 10.0;
    cfg.delta = (i % 10) as f64 / 10.0;
    cfg.seed = 5000 + i;
    cfg
}

fn refinement_descent() -> Outcome {
    let start = Instant::now();
    let cfg = RefineConfig::default();
    let ranks = Ranks::new(1, 1, 1).unwrap();
    let results: Vec<Result<(f64, usize, f64), String>> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let inst = simulation_design(&noisy_instance(i)).map_err(|e| e.to_string())?;
            let (a, x) = (&inst.adjacency, &inst.covariates);
            let init = spectral_decompose(a, x, ranks).map_err(|e| e.to_string())?;
            let out = refine_decompose(a, x, &init, ranks, &cfg).map_err(|e| e.to_string())?;
            let again = refine_decompose(a, x, &out.decomposition, ranks, &cfg).map_err(|e| e.to_string())?;
            let rerun_change = (again.trace.final_loss() - out.trace.final_loss()).abs();
            Ok((out.trace.max_increase(), out.trace.iterations, rerun_change))
        })
        .collect();
    let mut failures = Vec::new();
    let (mut max_inc, mut max_iter, mut max_change) = (f64::NEG_INFINITY, 0, 0.0f64);
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok((inc, it, change)) => {
                max_inc = max_inc.max(*inc);
                max_iter = max_iter.max(*it);
                max_change = max_change.max(*change);
                if *inc > 1e-12 || *it > cfg.t_max || !(*change < cfg.epsilon) {
                    failures.push(i);
                }
            }
            Err(e) => failures.push({
                eprintln!("instance {i}: {e}");
                i
            }),
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "100 instances, {} failures, max step increase {max_inc:.2e}, max iterations {max_iter}, \
             max re-run change {max_change:.2e}, {:.1}s",
            failures.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

/// True when 2-means on the `subset` rows of `rows` splits them exactly by `groups`.
fn separates(rows: &DMatrix<f64>, subset: &[usize], groups: &[usize], seed: u64) -> bool {
    let a = kmeans(&rows.select_rows(subset.iter()), 2, seed).unwrap();
    let b: Vec<usize> = subset.iter().map(|&i| groups[i]).collect();
    adjusted_rand_index(&a, &b).unwrap() == 1.0
}

fn group_structure() -> Outcome {
    let groups = group_structure_groups();
    let ranks = Ranks::new(2, 1, 1).unwrap();
    let all: Vec<usize> = (0..groups.len()).collect();
    let first_two: Vec<usize> = all.iter().copied().filter(|&i| groups[i] <= 2).collect();
    let last_two: Vec<usize> = all.iter().copied().filter(|&i| groups[i] >= 3).collect();
    let merged: Vec<usize> = groups.iter().map(|&g| usize::from(g >= 3)).collect();
    let reps = 50u64;
    let (mut ok_m, mut ok_r1, mut ok_r2) = (0, 0, 0);
    for seed in 0..reps {
        let inst = group_structure_example(seed).unwrap();
        let est = spectral_decompose(&inst.adjacency, &inst.covariates, ranks)
            .and_then(|init| refine_decompose(&inst.adjacency, &inst.covariates, &init, ranks, &RefineConfig::default()));
        let Ok(est) = est else { continue };
        let d = est.decomposition;
        ok_m += separates(d.joint.columns(), &all, &merged, seed) as usize;
        ok_r1 += separates(d.network.columns(), &first_two, &groups, seed) as usize;
        ok_r2 += separates(d.covariate.columns(), &last_two, &groups, seed) as usize;
    }
    let frac = |k: usize| k as f64 / reps as f64;
    outcome(
        frac(ok_m) >= 0.9 && frac(ok_r1) >= 0.8 && frac(ok_r2) >= 0.8,
        format!(
            "M splits {{1,2}}|{{3,4}} in {ok_m}/{reps}, R1 splits 1|2 in {ok_r1}/{reps}, R2 splits 3|4 in {ok_r2}/{reps}"
        ),
    )
}

struct Sweep {
    separations: Vec<f64>,
    /// `errors[grid][rep][method] = (dM, dR1, dR2)`
    errors: Vec<Vec<[[f64; 3]; 4]>>,
}

fn run_sweep(setting: Setting, reps: u64) -> Sweep {
    let refine = RefineConfig::default();
    let coefficients: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let jobs: Vec<(usize, u64)> = (0..coefficients.len()).flat_map(|g| (0..reps).map(move |r| (g, r))).collect();
    let flat: Vec<[[f64; 3]; 4]> = jobs
        .par_iter()
        .map(|&(g, r)| {
            let mut cfg = SimConfig::defaults(setting);
            cfg.delta = coefficients[g];
            cfg.seed = r;
            method_errors(&simulation_design(&cfg).unwrap(), &refine)
        })
        .collect();
    let errors = flat.chunks(reps as usize).map(|c| c.to_vec()).collect();
    Sweep {
        separations: coefficients.iter().map(|c| 1.0 - c).collect(),
        errors,
    }
}

fn column(sweep: &Sweep, grid: usize, method: usize, block: usize) -> Vec<f64> {
    sweep.errors[grid].iter().map(|e| e[method][block]).collect()
}

fn trends() -> Outcome {
    let start = Instant::now();
    let strong = run_sweep(Setting::StrongJoint, 50);
    let weak = run_sweep(Setting::WeakJoint, 50);
    let mut notes = Vec::new();
    let mut pass = true;
    if strong.errors.iter().chain(&weak.errors).flatten().flatten().flatten().any(|v| v.is_nan()) {
        pass = false;
        notes.push("some replications failed".to_string());
    }

    // (a) strong: separation 1 (grid 0) vs separation 0.1 (grid 9)
    for (m, name) in [(0, "spectral"), (1, "spectral_opt")] {
        let at1 = mean(&column(&strong, 0, m, 0));
        let at01 = mean(&column(&strong, 9, m, 0));
        let ok = at1 <= 0.5 * at01;
        pass &= ok;
        notes.push(format!("(a) {name} dM {at1:.3} at sep 1 vs {at01:.3} at sep 0.1"));
    }
    // (b) weak: refined no worse than spectral within one standard error
    let mut worst_gap = f64::NEG_INFINITY;
    for g in 0..weak.separations.len() {
        let diff: Vec<f64> = column(&weak, g, 1, 0)
            .iter()
            .zip(column(&weak, g, 0, 0))
            .map(|(o, s)| o - s)
            .collect();
        let gap = mean(&diff) - std_err(&diff);
        worst_gap = worst_gap.max(gap);
        pass &= gap <= 0.0;
    }
    notes.push(format!("(b) max over grid of mean(opt - spectral) - SE = {worst_gap:.4}"));
    // (c) baselines
    let mut worst_net = f64::NEG_INFINITY;
    let mut weak_ok = true;
    for g in 0..strong.separations.len() {
        let best = mean(&column(&strong, g, 0, 0)).min(mean(&column(&strong, g, 1, 0)));
        worst_net = worst_net.max(mean(&column(&strong, g, 2, 0)) - best);
        weak_ok &= mean(&column(&weak, g, 2, 1)) < mean(&column(&weak, g, 2, 0));
    }
    pass &= worst_net <= 0.1 && weak_ok;
    notes.push(format!(
        "(c) strong top_sv_net excess dM {worst_net:.5}; weak top_sv_net closer to R1 than M at every point: {weak_ok}"
    ));
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    notes.push(format!("{secs:.0}s"));
    outcome(pass, notes.join("; "))
}

fn rate() -> Outcome {
    let ranks = Ranks::new(1, 1, 1).unwrap();
    let means: Vec<f64> = [200usize, 400, 800]
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = (0..50u64)
                .into_par_iter()
                .map(|r| {
                    let mut cfg = SimConfig::defaults(Setting::StrongJoint);
                    cfg.n = n;
                    cfg.target_degree = 20.0 * n as f64 / 200.0;
                    cfg.seed = 900 + r;
                    let inst = simulation_design(&cfg).unwrap();
                    let d = spectral_decompose(&inst.adjacency, &inst.covariates, ranks).unwrap();
                    procrustes_distance(&d.joint, &inst.truth.components.joint).unwrap()
                })
                .collect();
            mean(&errs)
        })
        .collect();
    let ratio = means[0] / means[2];
    outcome(
        (1.4..=2.9).contains(&ratio),
        format!(
            "mean dM {:.4} / {:.4} / {:.4} at n = 200 / 400 / 800, ratio {ratio:.3}",
            means[0], means[1], means[2]
        ),
    )
}

fn sums_to_one(reports: &[jinet::eval::VarianceReport]) -> bool {
    reports.iter().all(|r| {
        (r.total() - 1.0).abs() <= 1e-10 && [r.joint, r.individual, r.residual].iter().all(|v| (0.0..=1.0).contains(v))
    })
}

fn variance_accounting(bin: &Path) -> Outcome {
    let mut checked = 0;
    let mut bad_sum = 0;
    let mut worst_noiseless = 0.0f64;
    let ranks = Ranks::new(1, 1, 1).unwrap();
    let mut instances = Vec::new();
    for seed in 0..10u64 {
        instances.push((group_structure_example(seed).unwrap(), Ranks::new(2, 1, 1).unwrap()));
        for setting in Setting::ALL {
            let mut cfg = SimConfig::defaults(setting);
            cfg.delta = (seed % 10) as f64 / 10.0;
            cfg.seed = seed;
            instances.push((simulation_design(&cfg).unwrap(), ranks));
        }
    }
    for (inst, r) in &instances {
        let latent = r.joint + r.network;
        let est = spectral_decompose(&inst.adjacency, &inst.covariates, *r).unwrap();
        for d in [&est, &inst.truth.components] {
            let net = variance_explained_network(&inst.adjacency, d, latent).unwrap();
            let cov = variance_explained_covariates(&inst.covariates, &d.joint, &d.covariate).unwrap();
            checked += 2;
            if !sums_to_one(&[net, cov]) {
                bad_sum += 1;
            }
        }
        let p = AdjacencyMatrix::new(inst.truth.network_signal.clone()).unwrap();
        let net = variance_explained_network(&p, &inst.truth.components, latent).unwrap();
        worst_noiseless = worst_noiseless.max(net.residual);
        if !sums_to_one(&[net]) {
            bad_sum += 1;
        }
    }

    // the variance subcommand on files in the documented formats
    let dir = tempfile::tempdir().unwrap();
    let cli_ok = (|| -> Option<bool> {
        let gen = Command::new(bin)
            .args(["generate", "--example", "groups", "--seed", "3", "--out"])
            .arg(dir.path().join("data"))
            .stdout(Stdio::null())
            .status()
            .ok()?;
        let dec = Command::new(bin)
            .args(["decompose", "--ranks", "2,1,1", "--network"])
            .arg(dir.path().join("data/A.csv"))
            .arg("--covariates")
            .arg(dir.path().join("data/X.csv"))
            .args(["--symmetrize", "none", "--no-log-covariates", "--out"])
            .arg(dir.path().join("est"))
            .stdout(Stdio::null())
            .status()
            .ok()?;
        let run = || {
            Command::new(bin)
                .args(["variance", "--symmetrize", "none", "--no-log-covariates", "--network"])
                .arg(dir.path().join("data/A.csv"))
                .arg("--covariates")
                .arg(dir.path().join("data/X.csv"))
                .arg("--est")
                .arg(dir.path().join("est"))
                .output()
                .ok()
        };
        let (a, b) = (run()?, run()?);
        let text = String::from_utf8(a.stdout.clone()).ok()?;
        let rows_ok = text.lines().skip(1).all(|line| {
            let vals: Vec<f64> = line.split(',').skip(1).filter_map(|v| v.parse().ok()).collect();
            vals.len() == 3
                && vals.iter().all(|v| (0.0..=1.0).contains(v))
                && (vals.iter().sum::<f64>() - 1.0).abs() <= 1e-10
        });
        Some(
            gen.success()
                && dec.success()
                && a.status.success()
                && a.stdout == b.stdout
                && text.lines().count() == 3
                && rows_ok,
        )
    })()
    .unwrap_or(false);

    outcome(
        bad_sum == 0 && worst_noiseless < 1e-8 && cli_ok,
        format!(
            "{checked} reports on {} instances, {bad_sum} not summing to 1, worst noiseless network residual \
             {worst_noiseless:.2e}, variance subcommand structural check {}",
            instances.len(),
            if cli_ok { "ok" } else { "failed" }
        ),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_p = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..20);
        let unit = |rng: &mut ChaCha8Rng| {
            let v: DMatrix<f64> = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
            let norm = v.norm();
            v / norm
        };
        let (u, v) = (unit(&mut rng), unit(&mut rng));
        let brute = (&u - &v).norm().min((&u + &v).norm());
        let d = procrustes_distance(
            &OrthonormalBasis::new_unchecked(u),
            &OrthonormalBasis::new_unchecked(v),
        )
        .unwrap();
        worst_p = worst_p.max((d - brute).abs());
    }
    let mut worst_d = 0.0f64;
    for k in 0..=100 {
        let theta = k as f64 / 100.0 * std::f64::consts::FRAC_PI_2;
        let mut r1 = DMatrix::zeros(5, 2);
        r1[(0, 0)] = 1.0;
        r1[(2, 1)] = 1.0;
        let mut r2 = DMatrix::zeros(5, 2);
        r2[(0, 0)] = theta.cos();
        r2[(1, 0)] = theta.sin();
        r2[(3, 1)] = 1.0;
        let got = delta_separation(
            &OrthonormalBasis::new_unchecked(r1),
            &OrthonormalBasis::new_unchecked(r2),
        )
        .unwrap();
        worst_d = worst_d.max((got - (1.0 - theta.cos())).abs());
    }
    outcome(
        worst_p <= 1e-12 && worst_d <= 1e-12,
        format!("Procrustes vs sign brute force max error {worst_p:.2e}; separation vs 1 - cos(theta) max error {worst_d:.2e}"),
    )
}

fn cli_equivalence(bin: &Path) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SimConfig::defaults(Setting::WeakJoint);
    cfg.delta = 0.4;
    cfg.seed = 11;
    let inst = simulation_design(&cfg).unwrap();
    let ranks = Ranks::new(1, 1, 1).unwrap();
    write_matrix(inst.adjacency.entries(), &dir.path().join("A.csv")).unwrap();
    std::fs::write(dir.path().join("X.csv"), jinet::cli::covariates_to_csv(&inst.covariates)).unwrap();
    let status = Command::new(bin)
        .args(["--seed", "11", "decompose", "--no-refine", "--ranks", "1,1,1", "--network"])
        .arg(dir.path().join("A.csv"))
        .arg("--covariates")
        .arg(dir.path().join("X.csv"))
        .args(["--symmetrize", "none", "--no-log-network", "--no-log-covariates", "--no-standardize", "--out"])
        .arg(dir.path().join("out"))
        .stdout(Stdio::null())
        .status()
        .unwrap();
    if !status.success() {
        return outcome(false, format!("decompose exited with {status}"));
    }
    let lib: Decomposition = spectral_decompose(&inst.adjacency, &inst.covariates, ranks).unwrap();
    let same = ["M.csv", "R1.csv", "R2.csv"]
        .iter()
        .zip([&lib.joint, &lib.network, &lib.covariate])
        .all(|(name, block)| {
            let got = read_matrix(&dir.path().join("out").join(name)).unwrap();
            got.shape() == block.columns().shape()
                && got.iter().zip(block.columns().iter()).all(|(a, b)| a.to_bits() == b.to_bits())
        });
    outcome(same, format!("decompose --no-refine vs library: {}", if same { "bit-identical" } else { "differs" }))
}

fn main() {
    let bin = Path::new(env!("CARGO_BIN_EXE_jinet"));
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("noiseless exact recovery", Box::new(exact_recovery)),
        ("refinement descent", Box::new(refinement_descent)),
        ("group-structure reproduction", Box::new(group_structure)),
        ("simulation trends", Box::new(trends)),
        ("error rate in n", Box::new(rate)),
        ("variance accounting", Box::new(|| variance_accounting(bin))),
        ("metric oracles", Box::new(metric_oracles)),
        ("CLI/library equivalence", Box::new(|| cli_equivalence(bin))),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let o = run();
        println!("criterion {} ({name}): {} - {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{failed} of {} criteria failed", if only.is_some() { 1 } else { criteria.len() });
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
