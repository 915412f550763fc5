//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.
//!
//! Run with `cargo test --test acceptance`; the attack searches
//! take a few minutes on one core.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use roadmark::bayesopt::*;
use roadmark::controller::Command;
use roadmark::harness::*;
use roadmark::objective::ObjectiveKind;
use roadmark::pattern::{param_space, PatternFamily, PatternParams};
use roadmark::simulate::*;
use roadmark::world::{build_layout, Exit, GeometryConfig, Scenario};

type Runs = BTreeMap<String, Vec<RunOutcome>>;

/// Seeds used wherever a criterion asks for a fixed seed set.
const SEEDS: std::ops::Range<u64> = 0..10;

/// (1 + √5 + 5/3)·exp(−√5), evaluated to 30 digits with mpmath.
const MATERN_AT_LENGTHSCALE: f64 = 0.523_994_108_831_820_3;
/// E[max(0, Z)] = φ(0) and E[max(0, 1 + Z)] = Φ(1) + φ(1) for standard normal Z.
const EI_ZERO: f64 = 0.398_942_280_401_432_7;
const EI_ONE: f64 = 1.083_315_470_587_686_3;

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

fn check(pass: bool, failures: &mut Vec<String>, what: impl Into<String>) {
    if !pass {
        failures.push(what.into());
    }
}

fn finish(failures: Vec<String>, ok: impl Into<String>) -> Outcome {
    if failures.is_empty() {
        outcome(true, ok.into())
    } else {
        outcome(false, failures.join("; "))
    }
}

fn config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        out: out.to_path_buf(),
        ..Default::default()
    }
}

// 1 -----------------------------------------------------------------------

fn kernel_and_ei() -> Outcome {
    let mut f = Vec::new();
    for l in [0.1, 1.0, 2.5] {
        let u = [0.2, 0.4];
        let v = [0.2 + l * 0.6, 0.4 + l * 0.8];
        let k = matern52(&u, &v, l).unwrap();
        check((k - MATERN_AT_LENGTHSCALE).abs() <= 1e-9, &mut f, format!("matern52 at r=l={l}: {k}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for (mu, exact) in [(0.0, EI_ZERO), (1.0, EI_ONE)] {
        let n = 10_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            acc += (mu + z).max(0.0);
        }
        let mc = acc / n as f64;
        let ei = expected_improvement(mu, 1.0, 0.0);
        worst = worst.max((ei - mc).abs());
        check((ei - mc).abs() <= 1e-3, &mut f, format!("EI(mu={mu}) {ei} vs Monte Carlo {mc}"));
        check((ei - exact).abs() <= 1e-12, &mut f, format!("EI(mu={mu}) {ei} vs closed form {exact}"));
    }
    finish(f, format!("kernel within 1e-9, EI within {worst:.2e} of 1e7-sample Monte Carlo"))
}

// 2 -----------------------------------------------------------------------

fn dense_kernel(a: &[f64], b: &[f64], l: f64) -> f64 {
    let r = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let s = 5f64.sqrt() * r / l;
    (1.0 + s + 5.0 * r * r / (3.0 * l * l)) * (-s).exp()
}

fn dense_posterior(xs: &[Vec<f64>], ys: &[f64], l: f64, noise_var: f64, q: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let z = DVector::from_iterator(n, ys.iter().map(|y| (y - mean) / sd));
    let k = DMatrix::from_fn(n, n, |i, j| dense_kernel(&xs[i], &xs[j], l) + if i == j { noise_var } else { 0.0 });
    let kinv = k.try_inverse().unwrap();
    let ks = DVector::from_iterator(n, xs.iter().map(|x| dense_kernel(x, q, l)));
    let mu = (ks.transpose() * &kinv * &z)[0];
    let var = 1.0 - (ks.transpose() * &kinv * &ks)[0];
    (mu * sd + mean, var.max(0.0).sqrt() * sd)
}

fn gp_correctness() -> Outcome {
    let mut f = Vec::new();
    let xs = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.3]];
    let ys = [1.0, -0.5, 2.0];
    let m = GpModel::fit(&xs, &ys, &HyperPolicy::fixed(0.5)).unwrap();
    for q in [[0.3, 0.3], [0.0, 1.0], [0.5, 0.9], [0.75, 0.25]] {
        let (mu, sd) = m.posterior(&q);
        let (mu_o, sd_o) = dense_posterior(&xs, &ys, 0.5, m.noise_variance, &q);
        check((mu - mu_o).abs() <= 1e-8 && (sd - sd_o).abs() <= 1e-8, &mut f, format!("posterior at {q:?}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts = |n: usize, d: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
    };
    let xs = pts(15, 3, &mut rng);
    let ys: Vec<f64> = xs.iter().map(|x| (4.0 * x[0]).sin() + x[1] * x[2] - x[2]).collect();
    let m = GpModel::fit(&xs, &ys, &HyperPolicy::default()).unwrap();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
    let mut worst: f64 = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        worst = worst.max(((m.posterior(x).0 - y) / sd).abs());
    }
    check(worst <= 1e-4, &mut f, format!("interpolation error {worst:e}"));

    let mut min_eig = f64::INFINITY;
    for _ in 0..20 {
        let xs = pts(50, 4, &mut rng);
        for l in [0.0625, 0.25, 1.0, 4.0] {
            let g = gram(&xs, l);
            let e = SymmetricEigen::new(DMatrix::from_row_slice(50, 50, &g)).eigenvalues.min();
            min_eig = min_eig.min(e);
        }
    }
    check(min_eig >= -1e-8, &mut f, format!("Gram min eigenvalue {min_eig:e}"));
    finish(f, format!("posterior within 1e-8, interpolation {worst:.1e}, min eigenvalue {min_eig:.1e}"))
}

// 3 -----------------------------------------------------------------------

/// Negated Branin on the unit square; maximum −0.397887 at three points.
fn branin_unit(u: &[f64]) -> f64 {
    let x1 = -5.0 + 15.0 * u[0];
    let x2 = 15.0 * u[1];
    let pi = std::f64::consts::PI;
    let b = 5.1 / (4.0 * pi * pi);
    let c = 5.0 / pi;
    let t = 1.0 / (8.0 * pi);
    -((x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0)
}

const BRANIN_MAX: f64 = -0.397_887_357_729_738;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn optimizer_ordering() -> Outcome {
    let mut f = Vec::new();
    let space = param_space(PatternFamily::SingleLine).unwrap();
    let s2 = space.clone();
    let ev = FnEvaluator(move |p: &PatternParams| branin_unit(&s2.normalize(&p.values)));
    let opts = SearchOptions::default();
    let mut bayes = Vec::new();
    let mut random = Vec::new();
    for seed in SEEDS {
        bayes.push(bayes_search(&space, 15, 60, &ev, seed, &opts, &mut discard).unwrap().best_score().unwrap());
        random.push(random_search(&space, 60, &ev, seed, &opts, &mut discard).unwrap().best_score().unwrap());
    }
    let grid_space = space.clone().with_grid_counts(&[6, 10]).unwrap();
    let grid = grid_search(&grid_space, &ev, &opts, &mut discard).unwrap();
    let grid_best = grid.best_score().unwrap();
    // what the 6x10 lattice costs relative to the true optimum
    let gap = BRANIN_MAX - grid_best;
    let (mb, mr) = (median(bayes.clone()), median(random));
    check(mb > mr, &mut f, format!("median bayes {mb:.4} <= median random {mr:.4}"));
    for (seed, b) in SEEDS.zip(&bayes) {
        check(grid_best - b <= gap, &mut f, format!("seed {seed}: grid {grid_best:.4} beats bayes {b:.4} by more than {gap:.4}"));
    }
    finish(
        f,
        format!("median best: bayes {mb:.4}, random {mr:.4}; grid {grid_best:.4} with resolution gap {gap:.4}"),
    )
}

// 4 -----------------------------------------------------------------------

fn baseline_competence(out: &Path) -> Outcome {
    let mut f = Vec::new();
    let mut frames = Vec::new();
    for s in Scenario::ALL {
        let cfg = ExperimentConfig {
            scenario: s,
            ..config(out)
        };
        match run_baseline(&cfg) {
            Ok(b) => {
                let r = infractions(&b.trace, &cfg.sim.thresholds).unwrap();
                let exit = Exit::for_command(s.default_command());
                check(r.severity == Severity::Safe, &mut f, format!("{s}: {:?}", r.severity));
                check(b.trace.reached_gate(exit), &mut f, format!("{s}: ended with {:?}", b.trace.termination));
                frames.push(format!("{s} {}", b.trace.len()));
            }
            Err(e) => f.push(format!("{s}: {e}")),
        }
    }
    finish(f, format!("all six Safe at their gates (frames: {})", frames.join(", ")))
}

// 5, 6 --------------------------------------------------------------------

fn search(cfg: &ExperimentConfig) -> Result<RunOutcome, HarnessError> {
    run_search(cfg, &RunControl::default())
}

fn worst(o: &RunOutcome) -> Option<Severity> {
    o.records.iter().filter_map(|r| r.severity).max()
}

fn attack_existence(out: &Path, runs: &mut Runs) -> Outcome {
    let mut f = Vec::new();
    let grid = ExperimentConfig {
        scenario: Scenario::RightTurn,
        pattern: PatternFamily::DoubleLine,
        strategy: Strategy::Grid,
        grid: Some(vec![10, 8, 4]),
        ..config(out)
    };
    let grid_hits = match search(&grid) {
        Ok(o) => {
            check(o.records.len() == 320, &mut f, format!("grid gave {} records", o.records.len()));
            o.records.iter().filter(|r| r.severity >= Some(Severity::OppositeLane)).count()
        }
        Err(e) => {
            f.push(format!("grid: {e}"));
            0
        }
    };
    check(grid_hits >= 1, &mut f, "grid found no episode at OppositeLane or worse");

    let mut seeds_hit = 0;
    for seed in SEEDS {
        let cfg = ExperimentConfig {
            scenario: Scenario::RightTurn,
            pattern: PatternFamily::TwoLine,
            strategy: Strategy::Bayes,
            warmup: 20,
            budget: 120,
            seed,
            ..config(out)
        };
        match search(&cfg) {
            Ok(o) => {
                if worst(&o) >= Some(Severity::Offroad) {
                    seeds_hit += 1;
                }
                runs.entry(Scenario::RightTurn.to_string()).or_default().push(o);
            }
            Err(e) => f.push(format!("bayes seed {seed}: {e}")),
        }
    }
    check(seeds_hit >= 7, &mut f, format!("only {seeds_hit}/10 bayes seeds reached Offroad"));
    finish(
        f,
        format!("grid: {grid_hits}/320 episodes at OppositeLane or worse; bayes: {seeds_hit}/10 seeds reached Offroad"),
    )
}

fn unique_successes(runs: &[RunOutcome]) -> usize {
    runs.iter()
        .map(|o| {
            let data = load_results(&o.path).unwrap();
            unique_success_curve(&[&data], data.records.len()).last().copied().unwrap_or(0)
        })
        .sum()
}

fn difficulty_ordering(out: &Path, runs: &mut Runs) -> Outcome {
    let mut f = Vec::new();
    for s in [Scenario::StraightRoad, Scenario::LeftTurn] {
        for seed in SEEDS {
            let cfg = ExperimentConfig {
                scenario: s,
                pattern: PatternFamily::TwoLine,
                strategy: Strategy::Bayes,
                warmup: 20,
                budget: 120,
                seed,
                ..config(out)
            };
            match search(&cfg) {
                Ok(o) => runs.entry(s.to_string()).or_default().push(o),
                Err(e) => f.push(format!("{s} seed {seed}: {e}")),
            }
        }
    }
    let count = |s: Scenario| runs.get(&s.to_string()).map(|r| unique_successes(r)).unwrap_or(0);
    let (straight, right, left) = (count(Scenario::StraightRoad), count(Scenario::RightTurn), count(Scenario::LeftTurn));
    check(straight <= right, &mut f, format!("straight {straight} > right turn {right}"));
    check(straight <= left, &mut f, format!("straight {straight} > left turn {left}"));
    finish(
        f,
        format!("unique successes over 10 seeds x 120: straight {straight} <= right turn {right}, left turn {left}"),
    )
}

// 7 -----------------------------------------------------------------------

fn objective_table(out: &Path) -> Outcome {
    let mut f = Vec::new();
    let kinds = [
        ObjectiveKind::CollideRight,
        ObjectiveKind::CollideLeft,
        ObjectiveKind::AbsSteerDiff,
        ObjectiveKind::PathDeviation,
    ];
    let mut files = Vec::new();
    for kind in kinds {
        let cfg = ExperimentConfig {
            scenario: Scenario::RightTurn,
            objective: kind,
            strategy: Strategy::Bayes,
            warmup: 20,
            budget: 60,
            // kept apart from the longer seed-0 run of the attack search
            ..config(&out.join("objectives"))
        };
        match search(&cfg) {
            Ok(o) => files.push(o.path),
            Err(e) => f.push(format!("{kind}: {e}")),
        }
    }
    let dest = out.join("report-objectives");
    if let Err(e) = emit_report(&files, &dest) {
        return outcome(false, format!("report: {e}"));
    }
    let text = std::fs::read_to_string(dest.join("objectives.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let cols = ["safe_pct", "collision_pct", "offroad_pct", "opposite_lane_pct", "any_infraction_pct"].map(col);
    if cols.iter().any(Option::is_none) || col("objective").is_none() {
        return outcome(false, format!("objectives.csv header {header:?}"));
    }
    let cols = cols.map(Option::unwrap);
    let mut seen = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let v = cols.map(|c| cells[c].parse::<f64>().unwrap());
        seen.push(cells[col("objective").unwrap()].to_string());
        check((v[0] + v[4] - 100.0).abs() <= 1e-9, &mut f, format!("{line}: safe + any != 100"));
        check((v[1] + v[2] + v[3] - v[4]).abs() <= 1e-9, &mut f, format!("{line}: tiers != any"));
    }
    for kind in kinds {
        check(seen.contains(&kind.to_string()), &mut f, format!("no row for {kind}"));
    }
    finish(f, format!("objectives.csv rows for {} partition to 100%", seen.join(", ")))
}

// 8 -----------------------------------------------------------------------

const PAIRS: [(Scenario, Command); 6] = [
    (Scenario::RightIntersection, Command::LeftAtIntersection),
    (Scenario::RightIntersection, Command::StraightAtIntersection),
    (Scenario::LeftIntersection, Command::RightAtIntersection),
    (Scenario::LeftIntersection, Command::StraightAtIntersection),
    (Scenario::StraightIntersection, Command::LeftAtIntersection),
    (Scenario::StraightIntersection, Command::RightAtIntersection),
];

fn hijack_config(out: &Path, scenario: Scenario, target: Command, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        scenario,
        target: Some(target),
        objective: ObjectiveKind::HijackDistance,
        slot: Some("junction-entry".into()),
        strategy: Strategy::Bayes,
        warmup: 20,
        budget: 200,
        seed,
        ..config(out)
    }
}

fn hijack_protocol(out: &Path) -> Outcome {
    let mut f = Vec::new();
    let thresholds = SeverityThresholds::default();
    let mut rows = Vec::new();
    let mut total = 0;
    for (scenario, target) in PAIRS {
        let cfg = hijack_config(out, scenario, target, 0);
        let t = match record_target(&cfg, target) {
            Ok(t) => t,
            Err(e) => {
                f.push(format!("{scenario}->{target}: {e}"));
                continue;
            }
        };
        let b = run_baseline(&cfg).unwrap();
        // scripted fixtures: the target run itself, the baseline, and a crash on the target leg
        let followed = classify_hijack(&t.trace, &t, &thresholds).unwrap();
        let own = classify_hijack(&b.trace, &t, &thresholds).unwrap();
        let mut crashed = t.trace.clone();
        let last = crashed.frames.len() - 1;
        crashed.frames[last].collision = cfg.sim.vehicle.mass * crashed.frames[last].state.speed;
        let crash = classify_hijack(&crashed, &t, &thresholds).unwrap();
        check(followed.success && !own.success && !crash.success, &mut f, format!("{scenario}->{target}: fixtures"));
        for h in [followed, own, crash] {
            check(
                h.success == (h.reached_target_gate && h.severity == Severity::Safe),
                &mut f,
                format!("{scenario}->{target}: invariant on fixture"),
            );
        }
        match search(&cfg) {
            Ok(o) => {
                let mut wins = 0;
                for r in &o.records {
                    if let Some(h) = r.hijack {
                        check(
                            h.success == (h.reached_target_gate && h.severity == Severity::Safe),
                            &mut f,
                            format!("{scenario}->{target}: invariant at iteration {}", r.iteration),
                        );
                        wins += h.success as usize;
                    }
                }
                total += wins;
                rows.push(format!("{scenario}->{target} {wins}"));
            }
            Err(e) => f.push(format!("{scenario}->{target}: {e}")),
        }
    }
    // the rest of the seed set only matters when seed 0 found nothing
    let mut seed = SEEDS.start + 1;
    while total == 0 && seed < SEEDS.end {
        for (scenario, target) in PAIRS {
            if let Ok(o) = search(&hijack_config(out, scenario, target, seed)) {
                total += o.summary.hijack_successes;
            }
        }
        seed += 1;
    }
    check(total >= 1, &mut f, "no pair produced a successful hijack");
    finish(f, format!("successful hijacks with budget 200, seed 0: {}", rows.join(", ")))
}

// 9 -----------------------------------------------------------------------

fn without_wall_clock(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            if let Some(o) = v.as_object_mut() {
                o.remove("wall_seconds");
            }
            if let Some(s) = v.get_mut("summary").and_then(|s| s.as_object_mut()) {
                s.remove("wall_seconds");
            }
            v
        })
        .collect()
}

fn episode_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir.join("episodes"))
        .map(|d| d.filter_map(|e| e.ok()).map(|e| e.path()).collect())
        .unwrap_or_default();
    files.sort();
    files
}

fn determinism_and_resume(out: &Path) -> Outcome {
    let mut f = Vec::new();
    let cfg = |root: &str| ExperimentConfig {
        scenario: Scenario::RightTurn,
        pattern: PatternFamily::TwoLine,
        strategy: Strategy::Bayes,
        warmup: 10,
        budget: 30,
        seed: 3,
        ..config(&out.join(root))
    };
    let a = search(&cfg("det-a")).unwrap();
    let b = search(&cfg("det-b")).unwrap();
    check(without_wall_clock(&a.path) == without_wall_clock(&b.path), &mut f, "repeated runs differ");
    let interrupted = run_search(
        &cfg("det-c"),
        &RunControl {
            resume: true,
            stop_after: Some(17),
        },
    );
    check(interrupted.is_err(), &mut f, "interruption did not stop the run");
    let c = search(&cfg("det-c")).unwrap();
    check(c.resumed == 17 && c.simulated == 13, &mut f, format!("resumed {} simulated {}", c.resumed, c.simulated));
    check(without_wall_clock(&a.path) == without_wall_clock(&c.path), &mut f, "resumed run differs");
    let (ea, ec) = (episode_files(a.path.parent().unwrap()), episode_files(c.path.parent().unwrap()));
    check(ea.len() == 30 && ec.len() == 30, &mut f, "episode file count");
    for (x, y) in ea.iter().zip(&ec) {
        check(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), &mut f, format!("{} differs", x.display()));
    }
    finish(f, "repeated and interrupted-then-resumed streams identical modulo wall clock (30 records, stop at 17)")
}

// 10 ----------------------------------------------------------------------

fn fit_radius(pts: &[(f64, f64)]) -> f64 {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(x, y) in pts {
        let row = Vector3::new(x, y, 1.0);
        ata += row * row.transpose();
        atb += row * -(x * x + y * y);
    }
    let s = ata.lu().solve(&atb).unwrap();
    (0.25 * (s[0] * s[0] + s[1] * s[1]) - s[2]).sqrt()
}

fn all_jsonl(dir: &Path, acc: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() {
            all_jsonl(&p, acc);
        } else if p.extension().is_some_and(|x| x == "jsonl") && p.file_name().is_some_and(|n| n != "results.jsonl") {
            acc.push(p);
        }
    }
}

fn simulation_oracles(out: &Path) -> Outcome {
    let mut f = Vec::new();
    let params = VehicleParams {
        drag: 0.0,
        ..Default::default()
    };
    let mut s = VehicleState {
        x: 0.0,
        y: 0.0,
        heading: 0.0,
        speed: 8.0,
    };
    let c = Control {
        steer: 0.5,
        ..Default::default()
    };
    let mut pts = vec![(s.x, s.y)];
    for _ in 0..100 {
        s = step(&s, &c, 0.1, &params);
        pts.push((s.x, s.y));
    }
    let want = (0.5 * 35f64.to_radians()).tan() / 2.9;
    let got = 1.0 / fit_radius(&pts);
    let rel = (got - want).abs() / want;
    check(rel < 0.01, &mut f, format!("curvature {got} vs {want}"));

    let layout = build_layout(Scenario::StraightRoad, &GeometryConfig::default()).unwrap();
    let vp = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mc_err: f64 = 0.0;
    for y in [-3.5, 0.0, 3.5] {
        let h = 45f64.to_radians();
        let st = VehicleState {
            x: 30.0,
            y,
            heading: h,
            speed: 8.0,
        };
        let fr = classify(&layout, &st, &vp);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            let a = rng.random_range(-0.5 * vp.length..0.5 * vp.length);
            let b = rng.random_range(-0.5 * vp.width..0.5 * vp.width);
            let py = y + a * h.sin() + b * h.cos();
            let k = if py.abs() > 3.5 {
                2
            } else if py >= 0.0 {
                1
            } else {
                0
            };
            counts[k] += 1;
        }
        let mc = counts.map(|c| c as f64 / n as f64);
        for (x, m) in [fr.own, fr.opposite, fr.offroad].iter().zip(mc) {
            mc_err = mc_err.max((x - m).abs());
        }
    }
    check(mc_err <= 0.01, &mut f, format!("region fractions off Monte Carlo by {mc_err}"));

    let mut files = Vec::new();
    all_jsonl(out, &mut files);
    let mut frames = 0usize;
    let mut bad = 0usize;
    for p in &files {
        let trace = match EpisodeTrace::read_jsonl(std::io::BufReader::new(std::fs::File::open(p).unwrap())) {
            Ok(t) => t,
            Err(e) => {
                f.push(format!("{}: {e}", p.display()));
                continue;
            }
        };
        for fr in &trace.frames {
            frames += 1;
            if (fr.regions.sum() - 1.0).abs() > 1e-9 {
                bad += 1;
            }
        }
    }
    check(bad == 0 && frames > 0, &mut f, format!("{bad} of {frames} frames with fractions not summing to 1"));
    finish(
        f,
        format!(
            "curvature off by {:.3}%, Monte Carlo gap {mc_err:.4}, {frames} frames in {} episode files sum to 1",
            rel * 100.0,
            files.len()
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut runs = BTreeMap::new();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, limit: Duration, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took <= limit;
        let timing = if took > limit {
            format!(" (over the {}s limit)", limit.as_secs())
        } else {
            String::new()
        };
        println!(
            "criterion {n:>2} {}: {name}: {} [{:.1}s]{timing}",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
        if !pass {
            failed += 1;
        }
    };
    let min = |m: u64| Duration::from_secs(60 * m);
    report(1, "kernel and EI numerics", min(1), &mut kernel_and_ei);
    report(2, "GP correctness", min(1), &mut gp_correctness);
    report(3, "optimizer ordering", min(2), &mut optimizer_ordering);
    report(4, "baseline competence", Duration::from_secs(30), &mut || baseline_competence(out));
    report(5, "attack existence", min(15), &mut || attack_existence(out, &mut runs));
    report(6, "difficulty ordering", min(15), &mut || difficulty_ordering(out, &mut runs));
    report(7, "objective comparison table", min(15), &mut || objective_table(out));
    report(8, "hijack protocol", min(20), &mut || hijack_protocol(out));
    report(9, "determinism and resume", min(5), &mut || determinism_and_resume(out));
    report(10, "simulation oracles", min(5), &mut || simulation_oracles(out));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
