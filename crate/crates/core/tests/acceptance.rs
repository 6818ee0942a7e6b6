use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddq_core::agent::{degenerate_config, AgentConfig, AgentState, Algorithm, Threshold};
use ddq_core::diagnostics::{self, escape_bound, CHECK_ATTEMPTED, CHECK_MONOTONE, CHECK_PER_PAIR, CHECK_RANGE, CHECK_TOTAL_SUCCESSFUL};
use ddq_core::env::{env_step, Environment, Rng};
use ddq_core::harness::{recommend_params, run_bench, BenchOutput, RunSettings, DEFAULT_HORIZON};
use ddq_core::known::{build_known_mdp, KnownSet};
use ddq_core::mdp::{
    optimal_action_values, policy_state_values, random_mdp, sweeps_for_accuracy, value_iteration, Policy, QTable,
};

const EPSILON: f64 = 0.06;
const GAMMA: f64 = 0.8;
const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

fn report(id: u32, pass: bool, detail: String) {
    println!("acceptance {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn benchmark_config() -> AgentConfig {
    AgentConfig::from_epsilon(Threshold::Finite(65), Threshold::Finite(175), EPSILON, GAMMA).unwrap()
}

struct Bench {
    output: BenchOutput,
    elapsed: Duration,
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let env = Environment::default_grid();
        let seeds: Vec<u64> = SEEDS.collect();
        let started = Instant::now();
        let output = run_bench(
            &env,
            &benchmark_config(),
            &Algorithm::ALL,
            &seeds,
            &RunSettings::new(EPSILON, DEFAULT_HORIZON),
            ddq_core::harness::default_workers(),
        )
        .unwrap();
        Bench {
            output,
            elapsed: started.elapsed(),
        }
    })
}

fn ddq_runs() -> impl Iterator<Item = &'static ddq_core::harness::RunOutput> {
    bench()
        .output
        .runs
        .iter()
        .filter(|r| r.result.algorithm == Algorithm::Ddq.label())
}

#[test]
fn criterion_1_ordering_and_band() {
    let b = bench();
    let s = &b.output.summary;
    let mean = |a: Algorithm| s.mean(a.label());
    let (ddq, dq, rm) = (mean(Algorithm::Ddq), mean(Algorithm::DelayedQ), mean(Algorithm::Rmax));
    let all_converged = s.algorithms.iter().all(|a| a.converged_runs == a.runs);
    let ordering = matches!((ddq, dq, rm), (Some(x), Some(y), Some(z)) if x < y && x < z);
    let band = [ddq, dq, rm]
        .iter()
        .all(|m| m.is_some_and(|v| (1000.0..=20000.0).contains(&v)));
    let fast = b.elapsed < Duration::from_secs(120);
    report(
        1,
        all_converged && ordering && band && fast,
        format!(
            "means ddq={ddq:?} delayed_q={dq:?} rmax={rm:?}; ordering={ordering} band[1000,20000]={band} \
             all_converged={all_converged} elapsed={:.1}s",
            b.elapsed.as_secs_f64()
        ),
    );
    assert!(all_converged, "some runs did not converge: {:?}", s.warnings);
    assert!(ordering, "ddq mean is not below both baselines");
    assert!(band, "a mean lies outside [1000, 20000]");
    assert!(fast, "30 runs took {:?}", b.elapsed);
}

#[test]
fn criterion_2_deterministic_bounds() {
    let names = [CHECK_PER_PAIR, CHECK_TOTAL_SUCCESSFUL, CHECK_ATTEMPTED, CHECK_MONOTONE, CHECK_RANGE];
    let mut failures = Vec::new();
    for run in &bench().output.runs {
        for name in names {
            let check = run.audit.check(name).expect("check present");
            if !check.pass {
                failures.push(format!("{} seed {}: {name} {} > {:?}", run.result.algorithm, run.result.seed, check.observed, check.bound));
            }
        }
    }
    let runs = bench().output.runs.len();
    report(2, failures.is_empty(), format!("{runs} runs, {} violations {failures:?}", failures.len()));
    assert_eq!(runs, 30);
    assert!(failures.is_empty());
}

#[test]
fn criterion_3_escape_bound() {
    let cfg = benchmark_config();
    let bound = escape_bound(&cfg, 9, 4).unwrap();
    let escapes: Vec<u64> = ddq_runs().map(|r| r.result.escape_events).collect();
    let ok = escapes.iter().filter(|&&e| e as f64 <= bound).count();
    let pass = bound == 6300.0 && ok >= 9;
    report(3, pass, format!("bound={bound} within={ok}/10 escapes={escapes:?}"));
    assert_eq!(bound, 6300.0);
    assert!(ok >= 9);
}

#[test]
fn criterion_4_optimism() {
    let held: Vec<bool> = ddq_runs().map(|r| r.result.optimism_ok).collect();
    let worst: Vec<Option<f64>> = ddq_runs()
        .map(|r| r.audit.conditions.as_ref().and_then(|c| c.worst_optimism_margin))
        .collect();
    let ok = held.iter().filter(|&&h| h).count();
    report(4, ok >= 9, format!("held in {ok}/10 seeds, worst margins {worst:?}"));
    assert_eq!(held.len(), 10);
    assert!(ok >= 9);
}

#[test]
fn criterion_5_solver_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_vi = 0.0f64;
    let mut worst_eval = 0.0f64;
    let mut failures = 0;
    for _ in 0..20 {
        let ns = rng.gen_range(1..=5);
        let na = rng.gen_range(1..=3);
        let gamma = [0.5, 0.8, 0.9][rng.gen_range(0..3)];
        let m = random_mdp(&mut rng, ns, na, gamma);
        let (_, eps2) = ddq_core::agent::accuracy_chain(EPSILON, gamma);
        let sweeps = sweeps_for_accuracy(eps2, gamma).unwrap();
        let q_star = optimal_action_values(&m, 1e-12).unwrap();
        for start in [0.0, m.v_max()] {
            let q0 = QTable::filled(ns, na, start);
            let q = value_iteration(&m, &q0, sweeps, None).unwrap();
            let err = q.max_abs_diff(&q_star);
            worst_vi = worst_vi.max(err);
            failures += (err > eps2) as usize;
        }
        let v = policy_state_values(&m, &q_star.greedy_policy()).unwrap();
        let err = (0..ns)
            .map(|s| (v[s] - q_star.state_value(s)).abs())
            .fold(0.0, f64::max);
        worst_eval = worst_eval.max(err);
        failures += (err > 1e-8) as usize;
    }
    report(5, failures == 0, format!("20 MDPs, worst |VI - Q*| = {worst_vi:.3e}, worst |v_greedy - V*| = {worst_eval:.3e}"));
    assert_eq!(failures, 0);
}

/// Delayed Q-learning written from its textbook description, sharing no
/// code with the agent.
struct DelayedQ {
    na: usize,
    m: u64,
    gamma: f64,
    eps1: f64,
    q: Vec<f64>,
    u: Vec<f64>,
    l: Vec<u64>,
    b: Vec<u64>,
    learn: Vec<bool>,
    t_star: u64,
    t: u64,
}

#[derive(Debug, PartialEq)]
struct Event {
    a: usize,
    s_next: usize,
    attempted: bool,
    succeeded: bool,
    q_bits: Option<u64>,
    learn_after: bool,
}

impl DelayedQ {
    fn new(ns: usize, na: usize, m: u64, gamma: f64, eps1: f64) -> Self {
        let pairs = ns * na;
        DelayedQ {
            na,
            m,
            gamma,
            eps1,
            q: vec![1.0 / (1.0 - gamma); pairs],
            u: vec![0.0; pairs],
            l: vec![0; pairs],
            b: vec![0; pairs],
            learn: vec![true; pairs],
            t_star: 0,
            t: 0,
        }
    }

    fn value(&self, s: usize) -> f64 {
        self.q[s * self.na..(s + 1) * self.na]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn act(&self, s: usize) -> usize {
        let row = &self.q[s * self.na..(s + 1) * self.na];
        let mut best = 0;
        for a in 1..self.na {
            if row[a] > row[best] {
                best = a;
            }
        }
        best
    }

    fn update(&mut self, s: usize, a: usize, r: f64, s2: usize) -> Event {
        self.t += 1;
        let i = s * self.na + a;
        let mut ev = Event { a, s_next: s2, attempted: false, succeeded: false, q_bits: None, learn_after: false };
        if self.b[i] <= self.t_star {
            self.learn[i] = true;
        }
        if self.learn[i] {
            if self.l[i] == 0 {
                self.b[i] = self.t;
            }
            self.l[i] += 1;
            self.u[i] += r + self.gamma * self.value(s2);
            if self.l[i] == self.m {
                ev.attempted = true;
                let avg = self.u[i] / self.m as f64;
                if self.q[i] - avg >= 2.0 * self.eps1 {
                    self.q[i] = avg + self.eps1;
                    self.t_star = self.t;
                    ev.succeeded = true;
                    ev.q_bits = Some(self.q[i].to_bits());
                } else if self.b[i] > self.t_star {
                    self.learn[i] = false;
                }
                self.u[i] = 0.0;
                self.l[i] = 0;
            }
        }
        ev.learn_after = self.learn[i];
        ev
    }
}

#[test]
fn criterion_6_delayed_q_equivalence() {
    let env = Environment::default_grid();
    let m = &env.mdp;
    let cfg = degenerate_config(Algorithm::DelayedQ, &benchmark_config());
    let mut mismatches = Vec::new();
    for seed in 1..=3u64 {
        let mut agent = AgentState::new(cfg.clone(), m.num_states(), m.num_actions()).unwrap();
        let mut reference = DelayedQ::new(m.num_states(), m.num_actions(), 65, GAMMA, cfg.epsilon1);
        let (mut rng_a, mut rng_b) = (Rng::new(seed), Rng::new(seed));
        let (mut sa, mut sb) = (env.start, env.start);
        for t in 1..=10_000u64 {
            let a = agent.select_action(sa);
            let (r, next) = env_step(m, sa, a, &mut rng_a);
            let out = agent.observe(sa, a, r, next).unwrap();
            let i = sa * m.num_actions() + a;
            let got = Event {
                a,
                s_next: next,
                attempted: out.type1_attempted,
                succeeded: out.type1_succeeded,
                q_bits: out.q_changes.first().map(|c| c.new.to_bits()),
                learn_after: agent.learn[i],
            };

            let b = reference.act(sb);
            let (rb, next_b) = env_step(m, sb, b, &mut rng_b);
            let want = reference.update(sb, b, rb, next_b);

            if out.type2_triggered || out.q_changes.len() > 1 || got != want {
                mismatches.push(format!("seed {seed} t {t}: {got:?} vs {want:?}"));
                break;
            }
            sa = next;
            sb = next_b;
        }
        let same_q = agent.q().as_slice().iter().zip(&reference.q).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same_q || agent.t_star != reference.t_star {
            mismatches.push(format!("seed {seed}: final state differs"));
        }
    }
    report(6, mismatches.is_empty(), format!("3 seeds x 10000 steps, mismatches {mismatches:?}"));
    assert!(mismatches.is_empty());
}

#[test]
fn criterion_7_known_mdp_preservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_return = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut unknown_checked = 0;
    for _ in 0..200 {
        let ns = rng.gen_range(1..=5);
        let na = rng.gen_range(1..=3);
        let gamma = [0.5, 0.8, 0.9, 0.95][rng.gen_range(0..4)];
        let m = random_mdp(&mut rng, ns, na, gamma);
        let vmax = m.v_max();
        let rows: Vec<Vec<f64>> = (0..ns)
            .map(|_| (0..na).map(|_| rng.gen::<f64>() * vmax).collect())
            .collect();
        let q = QTable::from_rows(rows).unwrap();
        let mask: Vec<bool> = (0..ns * na).map(|_| rng.gen_bool(0.5)).collect();
        let km = build_known_mdp(&m, &KnownSet::from_mask(na, mask), &q).unwrap();

        let actions: Vec<usize> = (0..km.mdp.num_states()).map(|_| rng.gen_range(0..na)).collect();
        let v = policy_state_values(&km.mdp, &Policy::new(actions)).unwrap();
        for &(s, a) in &km.origins {
            let ret = km.mdp.backup(s, a, &v);
            worst_return = worst_return.max((ret - q.get(s, a)).abs());
            unknown_checked += 1;
        }
        let q_known = optimal_action_values(&km.mdp, 1e-12).unwrap();
        let top = q_known.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst_excess = worst_excess.max(top - vmax);
    }
    let pass = worst_return <= 1e-9 && worst_excess <= 1e-12;
    report(
        7,
        pass,
        format!("{unknown_checked} unknown pairs, worst |return - Q| = {worst_return:.3e}, worst max Q*_K - v_max = {worst_excess:.3e}"),
    );
    assert!(unknown_checked > 0);
    assert!(worst_return <= 1e-9);
    assert!(worst_excess <= 1e-12);
}

#[test]
fn criterion_8_recommender() {
    let p = recommend_params(9, 4, 0.06, 0.1, 0.8, 1.0).unwrap();
    // frozen from an independent arbitrary-precision evaluation
    let (m1_exact, m2_exact) = (131_349_271.122_f64, 5_964_449_615.55_f64);
    let checks = [
        ("epsilon1", (p.epsilon1 - 0.004).abs() < 1e-15),
        ("epsilon2", (p.epsilon2 - 0.004 / 3.0).abs() < 1e-15),
        ("vi_sweeps", p.vi_sweeps == 42),
        ("kappa", (p.kappa - 45036.0).abs() < 1e-6),
        ("m1", p.m1 == 131_349_272),
        ("m2", p.m2 == 5_964_449_616),
        ("m1_exact", ((p.m1_exact - m1_exact) / m1_exact).abs() < 1e-11),
        ("m2_exact", ((p.m2_exact - m2_exact) / m2_exact).abs() < 1e-11),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(8, failed.is_empty(), format!("{p:?} failed={failed:?}"));
    assert!(failed.is_empty());
    assert_eq!(diagnostics::kappa(9, 4, 0.8, p.epsilon1).round(), 45036.0);
}
