//! Acceptance criteria C1–C7. Every criterion prints one PASS/FAIL line to
//! stdout (uncaptured) and then asserts.
//!
//! C7 runs at full paper scale and takes hours on one core:
//! `cargo test -p hierpi --test acceptance -- --ignored`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use hierpi::dynsim::effective_dynamics;
use hierpi::harness::{load_scenario, run_episode, EpisodeSummary, Mode, Scenario};
use hierpi::hiercore::{projector_chain, right_pseudoinverse, TaskJacobianSet, RANK_RTOL};
use hierpi::oracle::{fd_suite, LqInstance, LQ_STATES};
use hierpi::parallel::{current_workers, map_indexed, sample_rng, with_workers};
use hierpi::picore::{estimate_control_unchecked, sample_rollouts, RolloutResult};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn report(id: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    // Straight to the process stdout so the line shows without --nocapture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[acceptance] {id} {verdict}: {detail}");
    let _ = out.flush();
}

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    load_scenario(path).expect("shipped scenario loads")
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- C1

fn random_set(rng: &mut impl Rng) -> TaskJacobianSet {
    loop {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(1..=4usize.min(n));
        let mut left = n;
        let mut jacobians = Vec::with_capacity(k);
        for level in 0..k {
            let reserve = k - level - 1;
            let m = rng.random_range(1..=(left - reserve).min(4));
            left -= m;
            jacobians.push(DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)));
        }
        // Redraw the rare near-singular set.
        if let Ok(set) = TaskJacobianSet::new(jacobians, RANK_RTOL) {
            return set;
        }
    }
}

#[test]
fn c1_projector_algebra() {
    let start = Instant::now();
    let mut rng = sample_rng(2024, 1);
    let mut worst = 0.0_f64;
    let mut rank_errors = 0;
    for _ in 0..1000 {
        let set = random_set(&mut rng);
        let n = set.dofs();
        let eye = DMatrix::<f64>::identity(n, n);
        for j in set.jacobians() {
            let m = j.nrows();
            let pinv = right_pseudoinverse(j, RANK_RTOL).unwrap();
            worst = worst.max((j * &pinv - DMatrix::<f64>::identity(m, m)).amax());
            // Minimal norm: no component of J† in the null space of J.
            worst = worst.max(((&eye - &pinv * j) * &pinv).amax());
        }
        let chain = projector_chain(&set, RANK_RTOL).unwrap();
        worst = worst.max((&chain.projectors()[0] - &eye).amax());
        let mut used = 0;
        for (k, nk) in chain.projectors().iter().enumerate().skip(1) {
            worst = worst.max((nk * nk - nk).amax());
            worst = worst.max((nk - nk.transpose()).amax());
            for j in &set.jacobians()[..k] {
                worst = worst.max((j * nk).amax());
            }
            used += set.jacobians()[k - 1].nrows();
            if chain.residual_dims()[k - 1] != n - used {
                rank_errors += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-9 && rank_errors == 0 && elapsed < Duration::from_secs(10);
    report(
        "C1",
        pass,
        &format!(
            "1000 random sets (n<=12, K<=4): max residual of right-inverse, minimal-norm, idempotence, symmetry, annihilation {worst:.2e} (tol 1e-9), rank mismatches {rank_errors}, {:.2}s (limit 10s)",
            secs(elapsed)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- C2

#[test]
fn c2_finite_difference_oracle() {
    let start = Instant::now();
    let rows = fd_suite(500, 7, 1e-5).unwrap();
    let elapsed = start.elapsed();
    let mut pass = elapsed < Duration::from_secs(30) && rows.len() == 5;
    let mut parts = Vec::new();
    for r in &rows {
        let ratio_ok = r.ratio.is_none_or(|q| (1.5..=2.5).contains(&q));
        pass &= r.max_err < 1e-4 && ratio_ok;
        let ratio = r.ratio.map_or_else(|| "exact".to_string(), |q| format!("{q:.3}"));
        parts.push(format!("{} err {:.1e} ratio {ratio}", r.task, r.max_err));
    }
    report(
        "C2",
        pass,
        &format!("500 states, h=1e-5: {}; {:.2}s (limit 30s)", parts.join(", "), secs(elapsed)),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- C3

#[test]
fn c3_lq_riccati() {
    let start = Instant::now();
    let inst = LqInstance::default();
    let seeds = 50;
    let mut mean_abs = Vec::new();
    let mut worst_mean_rel = 0.0_f64;
    for samples in [1_000usize, 10_000, 100_000] {
        let mut abs_sum = 0.0;
        for (i, &x) in LQ_STATES.iter().enumerate() {
            let reference = inst.reference(x);
            let est = map_indexed(seeds, |s| inst.estimate(x, samples, (i * 1000 + s) as u64).unwrap());
            let mean = est.iter().sum::<f64>() / seeds as f64;
            abs_sum += est.iter().map(|e| (e - reference).abs() / reference.abs()).sum::<f64>() / seeds as f64;
            if samples == 100_000 {
                worst_mean_rel = worst_mean_rel.max((mean - reference).abs() / reference.abs());
            }
        }
        mean_abs.push(abs_sum / LQ_STATES.len() as f64);
    }
    let elapsed = start.elapsed();
    let monotone = mean_abs.windows(2).all(|w| w[1] < w[0]);
    let pass = worst_mean_rel <= 0.1 && monotone && elapsed < Duration::from_secs(300);
    report(
        "C3",
        pass,
        &format!(
            "worst 50-seed mean rel. error at M=1e5 {worst_mean_rel:.4} (tol 0.1); mean |rel. error| over M=1e3/1e4/1e5: {:.4} / {:.4} / {:.4} (must decrease); {:.1}s (limit 300s)",
            mean_abs[0],
            mean_abs[1],
            mean_abs[2],
            secs(elapsed)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- C4

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

#[test]
fn c4_invariance_determinism_variance() {
    let scn = scenario("single_agent_desk.scenario");
    let model = scn.fleet();
    let hierarchy = scn.hierarchy(Mode::Hybrid).unwrap();
    let k = hierarchy.pi_index().unwrap();
    let sys = effective_dynamics(&model, &hierarchy, k).unwrap();
    let cost = scn.pi_cost();
    let params = scn.pi_params().unwrap();

    // Shift invariance on real rollouts, far from and close to the obstacle.
    let mut shift_err = 0.0_f64;
    for (x, t) in [(vec![-4.0, 0.0, 0.1, 0.0], 0.0), (vec![-0.9, 0.2, 0.6, -0.2], 4.0)] {
        let x = DVector::from_vec(x);
        let rollouts = sample_rollouts(&sys, &x, t, &params, &cost, 99).unwrap();
        let mut base = rollouts.clone();
        let reference = estimate_control_unchecked(&mut base, &sys, &x, t, &params).unwrap();
        for shift in [-50.0, 1.0, 50.0] {
            let mut shifted: Vec<RolloutResult> = rollouts
                .iter()
                .map(|r| RolloutResult {
                    cost: r.cost + shift,
                    ..r.clone()
                })
                .collect();
            let e = estimate_control_unchecked(&mut shifted, &sys, &x, t, &params).unwrap();
            shift_err = shift_err.max((e.control - &reference.control).amax());
        }
    }

    // Bit-identical sampler output and episodes for any worker count.
    let x = DVector::from_vec(vec![-4.0, 0.0, 0.1, 0.0]);
    let p256 = params.with_samples(256).unwrap();
    let mut quick = scn.clone();
    quick.t_final = 2.0;
    quick.pi.samples = 64;
    let runs: Vec<(Vec<u64>, Vec<u64>, EpisodeSummary)> = [1, 4, 16]
        .iter()
        .map(|&w| {
            with_workers(Some(w), || {
                assert_eq!(current_workers(), if cfg!(feature = "parallel") { w } else { 1 });
                let r = sample_rollouts(&sys, &x, 0.0, &p256, &cost, 5).unwrap();
                let costs = r.iter().map(|s| s.cost.to_bits()).collect();
                let log = run_episode(&quick, Mode::Hybrid, 3).unwrap();
                let states = log.records.iter().flat_map(|r| r.state.iter().map(|v| v.to_bits())).collect();
                (costs, states, log.summary)
            })
        })
        .collect();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);

    // Estimator variance at M and 4M over 200 seeds.
    let inst = LqInstance::default();
    let m = 250;
    let small: Vec<f64> = map_indexed(200, |s| inst.estimate(0.7, m, s as u64).unwrap());
    let large: Vec<f64> = map_indexed(200, |s| inst.estimate(0.7, 4 * m, 10_000 + s as u64).unwrap());
    let ratio = variance(&small) / variance(&large);

    let pass = shift_err < 1e-12 && identical && (2.5..=6.0).contains(&ratio);
    report(
        "C4",
        pass,
        &format!(
            "cost-shift max |du| {shift_err:.1e} (tol 1e-12); workers 1/4/16 bit-identical: {identical}; variance ratio M=250 vs 1000 over 200 seeds {ratio:.3} (range [2.5, 6])"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- C5, C6

/// Hybrid runs over seeds `base..base + total`, evaluated in chunks and
/// stopped early once more than `allowed_misses` runs have failed `ok`
/// (the criterion can no longer pass). Returns the summaries evaluated.
fn hybrid_runs(
    scn: &Scenario,
    total: usize,
    allowed_misses: usize,
    ok: impl Fn(&EpisodeSummary) -> bool + Sync,
) -> Vec<EpisodeSummary> {
    let mut done: Vec<EpisodeSummary> = Vec::with_capacity(total);
    let mut misses = 0;
    while done.len() < total && misses <= allowed_misses {
        let chunk = (allowed_misses + 1 - misses).max(current_workers()).min(total - done.len());
        let offset = done.len() as u64;
        let batch = map_indexed(chunk, |i| {
            run_episode(scn, Mode::Hybrid, scn.seeds.base + offset + i as u64)
                .expect("episode runs")
                .summary
        });
        misses += batch.iter().filter(|s| !ok(s)).count();
        done.extend(batch);
    }
    done
}

fn finals(runs: &[EpisodeSummary]) -> String {
    let v: Vec<f64> = runs.iter().map(|s| s.final_goal_distance).collect();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    format!("final distance range [{lo:.3}, {hi:.3}]")
}

#[test]
fn c5_single_agent_desk() {
    let scn = scenario("single_agent_desk.scenario");
    let pd = run_episode(&scn, Mode::PdOnly, scn.seeds.base).unwrap().summary;
    let pd_ok = pd.final_goal_distance > 1.0 && pd.oscillating;

    let total = 100;
    let runs = hybrid_runs(&scn, total, 5, |s| s.final_goal_distance < 0.3 && !s.penetrated);
    let reached = runs.iter().filter(|s| s.final_goal_distance < 0.3).count();
    let penetrated = runs.iter().filter(|s| s.penetrated).count();
    let complete = runs.len() == total;
    let hybrid_ok = complete && reached >= 95 && penetrated == 0;
    let note = if complete { String::new() } else { " (stopped early: 95/100 no longer reachable)".into() };

    let pass = pd_ok && hybrid_ok;
    report(
        "C5",
        pass,
        &format!(
            "pd: final {:.3} (>1.0), {} sign changes in last 20% (>=3); hybrid: {reached}/{} runs end <0.3 (need 95/100), {penetrated}/{} penetrate (need 0), {}{note}",
            pd.final_goal_distance,
            pd.oscillation_sign_changes,
            runs.len(),
            runs.len(),
            finals(&runs)
        ),
    );
    assert!(pass);
}

#[test]
fn c6_two_agent_desk() {
    let scn = scenario("two_agent_desk.scenario");
    // pd-only runs are noise-free, so every seed gives the same episode.
    let pd = run_episode(&scn, Mode::PdOnly, scn.seeds.base).unwrap().summary;
    let pd_ok = pd.final_goal_distance > 1.0;
    let pd_spacing = pd.mean_spacing_error.unwrap();

    let total = 100;
    let runs = hybrid_runs(&scn, total, 10, |s| s.final_goal_distance < 0.4 && !s.penetrated);
    let reached = runs.iter().filter(|s| s.final_goal_distance < 0.4).count();
    let penetrated = runs.iter().filter(|s| s.penetrated).count();
    let hybrid_spacing =
        runs.iter().map(|s| s.mean_spacing_error.unwrap()).sum::<f64>() / runs.len() as f64;
    let complete = runs.len() == total;
    let hybrid_ok = complete && reached >= 90 && penetrated == 0;
    let spacing_ok = hybrid_spacing < pd_spacing;
    let note = if complete { String::new() } else { " (stopped early: 90/100 no longer reachable)".into() };

    let pass = pd_ok && hybrid_ok && spacing_ok;
    report(
        "C6",
        pass,
        &format!(
            "pd: centroid final {:.3} (>1.0); hybrid: {reached}/{} runs end <0.4 (need 90/100), {penetrated}/{} penetrate (need 0), {}; mean spacing error hybrid {hybrid_spacing:.4} vs pd {pd_spacing:.4} (hybrid must be lower){note}",
            pd.final_goal_distance,
            runs.len(),
            runs.len(),
            finals(&runs)
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- C7

#[test]
#[ignore = "paper scale (M=1e4, dt=0.01); hours on one core"]
fn c7_single_agent_paper_scale() {
    let scn = scenario("single_agent.scenario");
    let start = Instant::now();
    let pd = run_episode(&scn, Mode::PdOnly, scn.seeds.base).unwrap().summary;
    let hy = run_episode(&scn, Mode::Hybrid, scn.seeds.base).unwrap().summary;
    let pd_ok = pd.final_goal_distance > 1.0 && pd.oscillating;
    let hy_ok = hy.final_goal_distance < 0.3 && !hy.penetrated;
    let pass = pd_ok && hy_ok;
    report(
        "C7",
        pass,
        &format!(
            "pd: final {:.3} (>1.0), {} sign changes (>=3); hybrid seed {}: final {:.3} (<0.3), min obstacle distance {:.3} (>= r); {:.0}s",
            pd.final_goal_distance,
            pd.oscillation_sign_changes,
            scn.seeds.base,
            hy.final_goal_distance,
            hy.min_obstacle_distance,
            secs(start.elapsed())
        ),
    );
    assert!(pass);
}
