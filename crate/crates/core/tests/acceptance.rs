//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::seq::SliceRandom;
use rand::Rng;
use viewplan::belief::{self, Belief, Observation};
use viewplan::cli;
use viewplan::model::{self, Scenario};
use viewplan::planner::{
    brute_force_optimal, evaluate_policy_exact, nonadaptive_greedy_order, AdaptiveIg, AgentState,
    FixedOrder, PlannerConfig, Policy, PolicyAction, RandomOrder,
};
use viewplan::scenarios::{
    is_fully_separable, make_polyhedra_like_instance, make_random_instance,
    make_random_instance_with, make_theorem1_instance, CorrespondenceProfile, RandomSpec,
};
use viewplan::sim::compare_policies;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut all = vec!["viewplan"];
    all.extend_from_slice(args);
    match cli::run(all, &mut out, &mut err) {
        0 => Ok(out),
        code => Err(format!("exit {code}: {}", String::from_utf8_lossy(&err).trim())),
    }
}

fn oracle_cost(path: &str, mode: &str) -> Result<f64, String> {
    let out = run_cli(&["oracle", "--scenario", path, "--tau", "0", "--mode", mode, "--json"])?;
    let v: serde_json::Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    v["expected_cost"].as_f64().ok_or_else(|| "no expected_cost".into())
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut adaptive = Vec::new();
    let mut fixed = Vec::new();
    for n in [4usize, 8, 16] {
        let path = dir.path().join(format!("t{n}.json")).display().to_string();
        run_cli(&["generate", "--type", "theorem1", "--n", &n.to_string(), "--out", &path])?;
        let a = oracle_cost(&path, "adaptive")?;
        let na = oracle_cost(&path, "nonadaptive")?;
        ensure(a == n.ilog2() as f64, || format!("N={n}: adaptive cost {a}, want {}", n.ilog2()))?;
        ensure(na == (n - 1) as f64, || format!("N={n}: non-adaptive cost {na}, want {}", n - 1))?;
        adaptive.push(a);
        fixed.push(na);
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), || format!("took {t:?}"))?;
    Ok(format!("adaptive {adaptive:?}, non-adaptive {fixed:?} for N = 4, 8, 16 ({t:.2?})"))
}

/// Visit every branch reachable under `truth`, checking depth and loss at
/// each stop.
fn walk_truth(
    s: &Scenario,
    policy: &AdaptiveIg,
    st: &AgentState,
    truth: usize,
    depth: usize,
    want: usize,
    leaves: &mut usize,
) -> Result<(), String> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    match policy.act(s, st, &mut rng).map_err(|e| e.to_string())? {
        PolicyAction::Stop(d) => {
            *leaves += 1;
            ensure(depth == want && s.loss[d][truth] == 0.0, || {
                format!("h{truth}: stopped after {depth} views deciding {d}")
            })
        }
        PolicyAction::Visit(l) => {
            ensure(depth < want, || format!("h{truth}: more than {want} views"))?;
            let feats = viewplan::planner::revealed_features(s, &st.belief, l, false);
            for x in assignments(s, &feats) {
                if feats.iter().zip(&x).any(|(&f, &v)| s.features[f].cpt[truth][v] == 0.0) {
                    continue;
                }
                let obs: Vec<Observation> =
                    feats.iter().zip(&x).map(|(&f, &v)| Observation::new(f, v)).collect();
                let next = st.advance(s, l, &obs, false).map_err(|e| e.to_string())?;
                walk_truth(s, policy, &next, truth, depth + 1, want, leaves)?;
            }
            Ok(())
        }
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut leaves = 0;
    for n in [4usize, 8, 16] {
        let s = make_theorem1_instance(n, 1.0).map_err(|e| e.to_string())?;
        let policy = AdaptiveIg { config: PlannerConfig::for_scenario(&s).with_tau(0.0) };
        let want = n.ilog2() as usize;
        for h in 0..n {
            walk_truth(&s, &policy, &AgentState::start(&s), h, 0, want, &mut leaves)?;
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("{leaves} outcome branches over all true hypotheses, each log2 N views and loss 0 ({t:.2?})"))
}

fn all_subset_gains(s: &Scenario) -> Result<Vec<f64>, String> {
    let m = s.n_locations();
    let b = Belief::prior(s);
    (0u32..1 << m)
        .map(|set| {
            let locs: Vec<usize> = (0..m).filter(|l| set & (1 << l) != 0).collect();
            belief::expected_information_gain_set(s, &b, &locs).map_err(|e| e.to_string())
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut pairs = 0usize;
    let mut worst = f64::INFINITY;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let n = r.gen_range(2..=4);
        let m = r.gen_range(1..=5);
        let s = make_random_instance(n, m, m, r.gen_range(0.0..0.5), seed).map_err(|e| e.to_string())?;
        let f = all_subset_gains(&s)?;
        for big in 0u32..1 << m {
            // Every subset of `big`.
            let mut small = big;
            loop {
                worst = worst.min(f[big as usize] - f[small as usize]);
                ensure(f[small as usize] <= f[big as usize] + 1e-9, || {
                    format!("seed {seed}: monotonicity fails for {small:b} in {big:b}")
                })?;
                for l in (0..m).filter(|l| big & (1 << l) == 0) {
                    let da = f[(small | 1 << l) as usize] - f[small as usize];
                    let db = f[(big | 1 << l) as usize] - f[big as usize];
                    worst = worst.min(da - db);
                    ensure(da >= db - 1e-9, || {
                        format!("seed {seed}: diminishing returns fails, A={small:b} B={big:b} L={l}")
                    })?;
                    pairs += 1;
                }
                if small == 0 {
                    break;
                }
                small = (small - 1) & big;
            }
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(120), || format!("took {t:?}"))?;
    Ok(format!("{pairs} (A, B, L) triples on 100 instances, smallest margin {worst:.3e} ({t:.2?})"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let ratio = 1.0 - (-1.0f64).exp();
    let mut checks = 0;
    let mut min_ratio = f64::INFINITY;
    for seed in 0..50u64 {
        let mut r = rng(1000 + seed);
        let n = r.gen_range(2..=4);
        let m = r.gen_range(3..=5);
        let s = make_random_instance(n, m, m, r.gen_range(0.0..0.4), 1000 + seed).map_err(|e| e.to_string())?;
        let f = all_subset_gains(&s)?;
        let cfg = PlannerConfig::for_scenario(&s);
        for budget in 1..=3 {
            let order = nonadaptive_greedy_order(&s, budget, &cfg).map_err(|e| e.to_string())?;
            let mask: u32 = order.iter().map(|l| 1u32 << l).sum();
            let greedy = f[mask as usize];
            let best = subsets_of_size(m, budget)
                .iter()
                .map(|set| f[set.iter().map(|l| 1usize << l).sum::<usize>()])
                .fold(0.0, f64::max);
            ensure(greedy >= ratio * best - 1e-9, || {
                format!("seed {seed}, B={budget}: greedy {greedy} < (1-1/e) * {best}")
            })?;
            if best > 1e-12 {
                min_ratio = min_ratio.min(greedy / best);
            }
            checks += 1;
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(120), || format!("took {t:?}"))?;
    Ok(format!("{checks} (instance, B) pairs, worst greedy/optimal ratio {min_ratio:.4} ({t:.2?})"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut used = 0;
    let mut seed = 0u64;
    let mut worst_slack = f64::INFINITY;
    let mut strict = 0;
    while used < 50 {
        seed += 1;
        let mut r = rng(5000 + seed);
        let n = r.gen_range(3..=8);
        let m = r.gen_range(3..=7);
        let s = make_random_instance_with(&RandomSpec {
            uniform_prior: true,
            unit_costs: true,
            ..RandomSpec::new(n, m, m, 0.0, 5000 + seed)
        })
        .map_err(|e| e.to_string())?;
        if !is_fully_separable(&s) {
            continue;
        }
        used += 1;
        let cfg = PlannerConfig::for_scenario(&s).with_tau(0.0);
        let greedy = evaluate_policy_exact(&s, &AdaptiveIg { config: cfg.clone() }, m)
            .map_err(|e| e.to_string())?;
        let oracle = brute_force_optimal(&s, &cfg).map_err(|e| e.to_string())?;
        let bound = oracle.expected_cost * ((1.0 / s.p_min()).ln() + 1.0);
        ensure(greedy.expected_cost <= bound + 1e-9, || {
            format!("seed {seed}: greedy {} > bound {bound}", greedy.expected_cost)
        })?;
        ensure(greedy.expected_loss <= 1e-12, || format!("seed {seed}: greedy loss {}", greedy.expected_loss))?;
        worst_slack = worst_slack.min(bound - greedy.expected_cost);
        if greedy.expected_cost > oracle.expected_cost + 1e-9 {
            strict += 1;
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(300), || format!("took {t:?}"))?;
    Ok(format!(
        "50 separable instances; greedy above optimal on {strict}, smallest slack to bound {worst_slack:.3} ({t:.2?})"
    ))
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    for case in 0..1000u64 {
        let mut r = rng(60_000 + case);
        let n = r.gen_range(2..=5);
        let k = r.gen_range(1..=5);
        let s = make_random_instance_with(&RandomSpec {
            arity: r.gen_range(2..=3),
            ..RandomSpec::new(n, k, k, r.gen_range(0.01..0.5), case)
        })
        .map_err(|e| e.to_string())?;
        let probs = random_simplex(&mut r, n, 0.05);
        let mut feats: Vec<usize> = (0..k).collect();
        feats.shuffle(&mut r);
        let take = r.gen_range(1..=k);
        let obs: Vec<Observation> = feats[..take]
            .iter()
            .map(|&f| Observation::new(f, r.gen_range(0..s.features[f].values.len())))
            .collect();
        let want = joint_posterior(&s, &probs, &obs);
        let start = Belief::from_probs(probs);
        let mut seq = start.clone();
        for o in &obs {
            seq = belief::update(&s, &seq, &[*o]).map_err(|e| e.to_string())?;
        }
        let mut reversed = start.clone();
        for o in obs.iter().rev() {
            reversed = belief::update(&s, &reversed, &[*o]).map_err(|e| e.to_string())?;
        }
        let joint = belief::update(&s, &start, &obs).map_err(|e| e.to_string())?;
        for h in 0..n {
            let d = (seq.probs()[h] - want[h]).abs();
            let o1 = (seq.probs()[h] - reversed.probs()[h]).abs();
            let o2 = (seq.probs()[h] - joint.probs()[h]).abs();
            worst = worst.max(d).max(o1).max(o2);
            ensure(d <= 1e-12, || format!("case {case}: posterior off by {d}"))?;
            ensure(o1 <= 1e-12 && o2 <= 1e-12, || format!("case {case}: order dependence {o1} {o2}"))?;
        }
    }
    Ok(format!("1000 cases, largest deviation {worst:.1e}"))
}

fn criterion_7() -> Outcome {
    let mut max_increase = f64::NEG_INFINITY;
    for case in 0..1000u64 {
        let mut r = rng(70_000 + case);
        let n = r.gen_range(2..=5);
        let k = r.gen_range(1..=5);
        let m = r.gen_range(1..=k);
        let mut s = make_random_instance_with(&RandomSpec {
            arity: r.gen_range(2..=3),
            ..RandomSpec::new(n, k, m, r.gen_range(0.0..0.5), case)
        })
        .map_err(|e| e.to_string())?;
        if r.gen_bool(0.5) {
            // Asymmetric loss.
            for d in 0..n {
                for h in 0..n {
                    s.loss[d][h] = if d == h { 0.0 } else { r.gen_range(0.1..5.0) };
                }
            }
        }
        let probs = random_simplex(&mut r, n, 0.0);
        let l = r.gen_range(0..m);
        let f = &s.locations[l].features;
        let before = belief::risk_of(&s, &probs);
        let after = belief::expected_posterior_risk(&s, &probs, f).map_err(|e| e.to_string())?;
        let check = expected_risk_after(&s, &probs, f);
        ensure((after - check).abs() <= 1e-12, || format!("case {case}: {after} vs reference {check}"))?;
        ensure(after <= before + 1e-12, || format!("case {case}: risk grew {before} -> {after}"))?;
        max_increase = max_increase.max(after - before);
    }
    Ok(format!("1000 triples, largest change in risk {max_increase:.3e}"))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let profile = CorrespondenceProfile::platonic_default();
    let budgets: Vec<usize> = (1..=24).collect();

    let s2 = make_polyhedra_like_instance(2, 24, &profile, 0).map_err(|e| e.to_string())?;
    let cfg = PlannerConfig::for_scenario(&s2).with_tau(0.0);
    let adaptive = AdaptiveIg { config: cfg.clone() };
    let random = RandomOrder { config: cfg };
    let t2 = compare_policies(&s2, &[&adaptive, &random], 100, &budgets, 1).map_err(|e| e.to_string())?;
    let (a, r) = (&t2.columns[0].accuracy, &t2.columns[1].accuracy);
    let mut strictly = 0;
    for b in 0..12 {
        ensure(a[b] >= r[b], || format!("2-class budget {}: adaptive {} < random {}", b + 1, a[b], r[b]))?;
        if a[b] > r[b] {
            strictly += 1;
        }
    }
    ensure(strictly >= 3, || format!("2-class: strictly better at only {strictly} budgets"))?;

    let s5 = make_polyhedra_like_instance(5, 24, &profile, 0).map_err(|e| e.to_string())?;
    let cfg = PlannerConfig::for_scenario(&s5).with_tau(0.0);
    let adaptive = AdaptiveIg { config: cfg.clone() };
    let fixed = FixedOrder::nonadaptive_ig(&s5, &cfg).map_err(|e| e.to_string())?;
    let t5 = compare_policies(&s5, &[&adaptive, &fixed], 100, &budgets, 1).map_err(|e| e.to_string())?;
    let (a5, f5) = (&t5.columns[0].accuracy, &t5.columns[1].accuracy);
    let at_least = (0..24).filter(|&b| a5[b] >= f5[b]).count();
    ensure(at_least * 2 > 24, || format!("5-class: adaptive >= non-adaptive at only {at_least}/24 budgets"))?;

    let t = start.elapsed();
    ensure(t < Duration::from_secs(180), || format!("took {t:?}"))?;
    Ok(format!(
        "2-class: adaptive >= random at budgets 1..12, strictly at {strictly}; \
         5-class: adaptive >= non-adaptive at {at_least}/24 budgets ({t:.2?})"
    ))
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scen = dir.path().join("s.json").display().to_string();
    run_cli(&["generate", "--type", "polyhedra", "--classes", "3", "--views", "10", "--seed", "4", "--out", &scen])?;
    let rand_scen = dir.path().join("r.json").display().to_string();
    run_cli(&["generate", "--type", "random", "--n", "4", "--k", "6", "--m", "5", "--seed", "2", "--out", &rand_scen])?;
    let invocations: Vec<Vec<&str>> = vec![
        vec!["simulate", "--scenario", &scen, "--policy", "random", "--runs", "200", "--seed", "11"],
        vec!["simulate", "--scenario", &rand_scen, "--policy", "cost-ig", "--runs", "200", "--seed", "5"],
        vec!["simulate", "--scenario", &rand_scen, "--policy", "horizon:2", "--runs", "50", "--seed", "5"],
        vec!["compare", "--scenario", &scen, "--policies", "adaptive-ig,random,nonadaptive-ig", "--runs", "100", "--seed", "3"],
    ];
    let mut files = 0;
    for (i, args) in invocations.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "1", "4", "8"] {
            let out = dir.path().join(format!("o{i}-{}.csv", outputs.len())).display().to_string();
            let mut a = args.clone();
            a.extend_from_slice(&["--threads", threads, "--out", &out]);
            run_cli(&a)?;
            outputs.push(model::read_scenario_text(&out).map_err(|e| e.to_string())?);
            files += 1;
        }
        ensure(outputs.windows(2).all(|w| w[0] == w[1]), || format!("{} differs between runs", args[0]))?;
    }
    Ok(format!("4 invocations x {} runs with 1, 1, 4, 8 threads, byte-identical", files / 4))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("adaptivity gap on the binary-search construction", criterion_1),
        ("adaptive greedy matches log2 N on every branch", criterion_2),
        ("information gain is monotone and submodular", criterion_3),
        ("greedy set within (1 - 1/e) of the best set", criterion_4),
        ("adaptive greedy within (ln(1/p_min) + 1) of the oracle", criterion_5),
        ("sequential update equals the joint posterior", criterion_6),
        ("expected Bayes risk never increases", criterion_7),
        ("qualitative policy orderings on polyhedra-like instances", criterion_8),
        ("simulate and compare are byte-for-byte reproducible", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
