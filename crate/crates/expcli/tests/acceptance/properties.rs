//! Exact property checks against independent oracles.

use mbppol::cmdp_env::{CmdpEnv, CmdpSpec};
use mbppol::diffnum::{finite_difference, max_relative_error};
use mbppol::dynamics_model::{performance_ratio, performance_ratio_over, GaussianDynamicsMember, TransitionModel};
use mbppol::dynamics_model::{DynamicsEnsemble, EnsembleConfig, TransitionDataset};
use mbppol::estimation::{gae, td_residuals};
use mbppol::lagrangian_ppo::{lagrangian_policy_loss, CostSurrogate, GaussianPolicy, LagrangeConfig, LagrangeState, PolicyMinibatch};
use mbppol::parallel::Execution;
use mbppol::rng::{self, Rng};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::Outcome;

fn brute_force_gae(signal: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = signal.len();
    (0..n)
        .map(|t| {
            (t..n)
                .map(|k| {
                    let delta = signal[k] + gamma * values[k + 1] - values[k];
                    (gamma * lambda).powi((k - t) as i32) * delta
                })
                .sum()
        })
        .collect()
}

pub fn gae_equivalence() -> Outcome {
    let mut r = rng::from_seed(2);
    let mut worst: f64 = 0.0;
    let mut td_exact = true;
    for _ in 0..100 {
        let n = r.gen_range(1..120);
        let signal: Vec<f64> = (0..n).map(|_| r.gen_range(-2.0..2.0)).collect();
        let mut values: Vec<f64> = (0..=n).map(|_| r.gen_range(-5.0..5.0)).collect();
        if r.gen_bool(0.5) {
            values[n] = 0.0;
        }
        let gamma = r.gen_range(0.8..1.0);
        for lambda in [0.0, 0.5, 0.95, 1.0] {
            let fast = gae(&signal, &values, gamma, lambda).unwrap();
            let slow = brute_force_gae(&signal, &values, gamma, lambda);
            for (a, b) in fast.iter().zip(&slow) {
                worst = worst.max((a - b).abs());
            }
            if lambda == 0.0 {
                let one_step: Vec<f64> = (0..n).map(|t| signal[t] + gamma * values[t + 1] - values[t]).collect();
                td_exact &= fast == one_step && td_residuals(&signal, &values, gamma).unwrap() == one_step;
            }
        }
    }
    Outcome::new(
        worst <= 1e-10 && td_exact,
        format!("max |gae - brute force| = {worst:.2e}, lambda 0 equals one-step TD exactly: {td_exact}"),
    )
}

fn random_minibatch(policy: &GaussianPolicy, r: &mut Rng, n: usize) -> PolicyMinibatch {
    let obs = Array2::from_shape_fn((n, policy.obs_dim()), |_| r.gen_range(-1.0..1.0));
    let mut actions = Array2::zeros((n, policy.action_dim()));
    for i in 0..n {
        let (a, _) = policy.sample(&obs.row(i).to_vec(), r).unwrap();
        for (j, v) in a.into_iter().enumerate() {
            actions[[i, j]] = v;
        }
    }
    let old_log_probs = policy.log_prob_batch(obs.view(), actions.view()).unwrap();
    PolicyMinibatch {
        obs,
        actions,
        old_log_probs,
        reward_adv: (0..n).map(|_| r.gen_range(-2.0..2.0)).collect(),
        cost_adv: (0..n).map(|_| r.gen_range(-1.0..2.0)).collect(),
    }
}

fn policy_gradient_error(r: &mut Rng, cost: CostSurrogate) -> Option<f64> {
    let mut pol = GaussianPolicy::new(3, &[6, 6], 2, r.gen_range(-1.0..0.0), r).unwrap();
    let mb = random_minibatch(&pol, r, 24);
    for p in pol.trunk.params_mut() {
        *p += r.gen_range(-0.08..0.08);
    }
    for l in &mut pol.log_std {
        *l += r.gen_range(-0.1..0.1);
    }
    let eps = 0.2;
    let lambda = r.gen_range(0.0..3.0);
    // central differences straddling a clip boundary are not meaningful
    let new_lp = pol.log_prob_batch(mb.obs.view(), mb.actions.view()).unwrap();
    let near_kink = new_lp.iter().zip(&mb.old_log_probs).any(|(n, o)| {
        let ratio = (n - o).exp();
        (ratio - (1.0 - eps)).abs() < 1e-3 || (ratio - (1.0 + eps)).abs() < 1e-3
    });
    if near_kink {
        return None;
    }
    let loss = lagrangian_policy_loss(&pol, &mb, lambda, eps, true, cost).unwrap();
    let np = pol.trunk.num_params();
    let mut flat = pol.trunk.params().to_vec();
    flat.extend_from_slice(&pol.log_std);
    let numeric = finite_difference(&flat, 1e-5, |x| {
        let mut probe = pol.clone();
        probe.trunk.params_mut().copy_from_slice(&x[..np]);
        probe.log_std.copy_from_slice(&x[np..]);
        lagrangian_policy_loss(&probe, &mb, lambda, eps, true, cost).unwrap().loss
    });
    let mut analytic = loss.grad_trunk;
    analytic.extend_from_slice(&loss.grad_log_std);
    Some(max_relative_error(&analytic, &numeric, 1e-6))
}

fn nll_gradient_error(r: &mut Rng) -> f64 {
    let (sd, ad) = (r.gen_range(1..4), r.gen_range(1..3));
    let member = GaussianDynamicsMember::new(sd, ad, &[7, 5], r).unwrap();
    let n = r.gen_range(3..12);
    let x = Array2::from_shape_fn((n, sd + ad), |_| r.gen_range(-1.5..1.5));
    let y = Array2::from_shape_fn((n, sd), |_| r.gen_range(-1.5..1.5));
    let (_, analytic) = member.nll_gradient(x.view(), y.view()).unwrap();
    let numeric = finite_difference(member.net.params(), 1e-5, |p| {
        let mut probe = member.clone();
        probe.net.params_mut().copy_from_slice(p);
        probe.nll(x.view(), y.view()).unwrap() / n as f64
    });
    max_relative_error(&analytic, &numeric, 1e-6)
}

pub fn gradient_correctness() -> Outcome {
    let mut r = rng::from_seed(3);
    let mut policy_worst = Vec::new();
    for cost in [CostSurrogate::Clipped, CostSurrogate::Pessimistic] {
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        while checked < 20 {
            if let Some(e) = policy_gradient_error(&mut r, cost) {
                worst = worst.max(e);
                checked += 1;
            }
        }
        policy_worst.push(worst);
    }
    let nll_worst = (0..20).map(|_| nll_gradient_error(&mut r)).fold(0.0, f64::max);
    Outcome::new(
        policy_worst.iter().all(|&e| e < 1e-4) && nll_worst < 1e-4,
        format!(
            "max relative error: policy loss {:.2e} (clipped cost) and {:.2e} (pessimistic cost), NLL {nll_worst:.2e} (20 instances each)",
            policy_worst[0], policy_worst[1]
        ),
    )
}

pub fn lambda_dynamics() -> Outcome {
    let mut hand = LagrangeState::new(&LagrangeConfig {
        lambda_init: 1.0,
        lr: 0.05,
        cost_limit: 4.0,
        beta: 1.0,
    })
    .unwrap();
    let stepped = hand.update(10.0).unwrap();
    let hand_ok = (stepped - 1.3).abs() < 1e-12;
    let mut projected = LagrangeState::new(&LagrangeConfig {
        lambda_init: 0.1,
        lr: 0.05,
        cost_limit: 10.0,
        beta: 0.5,
    })
    .unwrap();
    let clamp_ok = projected.update(0.0).unwrap() == 0.0;

    let mut r = rng::from_seed(4);
    let mut negative = 0u64;
    let mut oracle_mismatch = 0u64;
    for _ in 0..1_000_000 {
        let cfg = LagrangeConfig {
            lambda_init: r.gen_range(0.0..5.0),
            lr: r.gen_range(1e-4..1.0),
            cost_limit: r.gen_range(0.0..20.0),
            beta: r.gen_range(0.0..=1.0),
        };
        let mut state = LagrangeState::new(&cfg).unwrap();
        let mut expected = cfg.lambda_init;
        for _ in 0..r.gen_range(1..8) {
            let cost = r.gen_range(0.0..40.0);
            let got = state.update(cost).unwrap();
            expected = (expected + cfg.lr * (cost - cfg.beta * cfg.cost_limit)).max(0.0);
            negative += (got < 0.0) as u64;
            oracle_mismatch += ((got - expected).abs() > 1e-9 * (1.0 + expected)) as u64;
        }
    }
    Outcome::new(
        hand_ok && clamp_ok && negative == 0 && oracle_mismatch == 0,
        format!(
            "1 + 0.05 (10 - 4) -> {stepped}; projection to 0: {clamp_ok}; 1e6 random sequences: {negative} negative, {oracle_mismatch} oracle mismatches"
        ),
    )
}

const A: [[f64; 2]; 2] = [[0.9, 0.1], [-0.1, 0.95]];
const B: [f64; 2] = [0.2, 0.1];

fn linear_gaussian(n: usize, sigma: f64, seed: u64) -> TransitionDataset {
    let mut r = rng::from_seed(seed);
    let mut d = TransitionDataset::new(2, 1);
    for _ in 0..n {
        let s = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
        let a = [r.gen_range(-1.0..1.0)];
        let mut next = [0.0; 2];
        for i in 0..2 {
            let z: f64 = r.sample(StandardNormal);
            next[i] = A[i][0] * s[0] + A[i][1] * s[1] + B[i] * a[0] + sigma * z;
        }
        d.push(&s, &a, &next).unwrap();
    }
    d
}

pub fn ensemble_fidelity() -> Outcome {
    let sigma = 0.01;
    let data = linear_gaussian(5000, sigma, 7);
    let cfg = EnsembleConfig {
        hidden: vec![64, 64],
        max_epochs: 60,
        patience: 8,
        ..EnsembleConfig::default()
    };
    let mut ens = DynamicsEnsemble::new(2, 1, &cfg, &mut rng::from_seed(1)).unwrap();
    let report = ens.train(&data, &cfg, &mut rng::from_seed(2), Execution::default()).unwrap();
    let nll_improved = report
        .initial_validation_nll
        .iter()
        .zip(&report.validation_nll)
        .all(|(init, fin)| fin < init);
    let mut worst: f64 = 0.0;
    for &e in ens.elites() {
        let member = &ens.members()[e];
        let mut sq = 0.0;
        for &i in &report.validation_indices {
            let (mean, _) = member.predict(data.state(i), data.action(i)).unwrap();
            sq += mean.iter().zip(data.next_state(i)).map(|(m, y)| (m - y).powi(2)).sum::<f64>();
        }
        worst = worst.max((sq / (2 * report.validation_indices.len()) as f64).sqrt());
    }
    Outcome::new(
        worst <= 1.5 * sigma && nll_improved,
        format!(
            "worst elite validation RMSE {worst:.5} (limit {:.3}); validation NLL below initial for all members: {nll_improved}",
            1.5 * sigma
        ),
    )
}

/// Point on a line; reward is the signed displacement of the step.
struct Line {
    spec: CmdpSpec,
}

impl CmdpEnv for Line {
    fn name(&self) -> &str {
        "line"
    }
    fn spec(&self) -> &CmdpSpec {
        &self.spec
    }
    fn sample_initial(&self, r: &mut Rng) -> Vec<f64> {
        vec![r.gen_range(-1.0..1.0)]
    }
    fn transition(&self, s: &[f64], a: &[f64], _: &mut Rng) -> Vec<f64> {
        vec![s[0] + a[0]]
    }
    fn reward(&self, s: &[f64], _: &[f64], n: &[f64]) -> f64 {
        n[0] - s[0]
    }
    fn cost(&self, _: &[f64], _: &[f64], _: &[f64]) -> f64 {
        0.0
    }
    fn is_terminal(&self, _: &[f64]) -> bool {
        false
    }
    fn observe(&self, s: &[f64]) -> Vec<f64> {
        s.to_vec()
    }
}

/// Noiseless model `s' = s + gain * a`.
struct Gain(f64);

impl TransitionModel for Gain {
    fn sample_next(&self, s: &[f64], a: &[f64], _: &mut Rng) -> mbppol::Result<Vec<f64>> {
        Ok(vec![s[0] + self.0 * a[0]])
    }
}

pub fn pr_semantics() -> Outcome {
    let env = Line {
        spec: CmdpSpec {
            state_dim: 1,
            obs_dim: 1,
            action_dim: 1,
            action_low: -1.0,
            action_high: 1.0,
            horizon: 20,
            gamma: 0.99,
        },
    };
    let mut old = GaussianPolicy::new(1, &[4], 1, 0.3f64.ln(), &mut rng::from_seed(1)).unwrap();
    old.trunk.params_mut().iter_mut().for_each(|p| *p = 0.0);
    let mut new = old.clone();
    let bias = new.trunk.num_params() - 1;
    new.trunk.params_mut()[bias] = 0.2;

    let ratio = |gains: &[f64], new: &GaussianPolicy| {
        let models: Vec<Gain> = gains.iter().map(|&g| Gain(g)).collect();
        let refs: Vec<&dyn TransitionModel> = models.iter().map(|m| m as &dyn TransitionModel).collect();
        performance_ratio_over(&refs, &env, new, &old, 0.99, 20, 5, &mut rng::from_seed(3), Execution::Sequential)
            .unwrap()
    };
    let gains = [1.0, 0.5, 2.0, 0.8, 1.2, 0.3];
    let same_synthetic = ratio(&gains, &old);
    let uniform = ratio(&gains, &new);
    let four_of_six = ratio(&[1.0, -0.5, 2.0, 0.8, -1.2, 0.3], &new);

    // a trained ensemble with identical policies under common random numbers
    let mut r = rng::from_seed(9);
    let mut data = TransitionDataset::new(1, 1);
    for _ in 0..400 {
        let s = [r.gen_range(-1.0..1.0)];
        let a = [r.gen_range(-1.0..1.0)];
        let z: f64 = r.sample(StandardNormal);
        data.push(&s, &a, &[s[0] + a[0] + 0.05 * z]).unwrap();
    }
    let cfg = EnsembleConfig {
        hidden: vec![16],
        max_epochs: 5,
        ..EnsembleConfig::default()
    };
    let mut ens = DynamicsEnsemble::new(1, 1, &cfg, &mut r).unwrap();
    ens.train(&data, &cfg, &mut r, Execution::Sequential).unwrap();
    let same_ensemble =
        performance_ratio(&ens, &env, &new, &new, 0.99, 20, 5, &mut rng::from_seed(4), Execution::Sequential).unwrap();

    Outcome::new(
        same_synthetic == 0.0 && same_ensemble == 0.0 && uniform == 1.0 && four_of_six == 2.0 / 3.0,
        format!(
            "identical policies {same_synthetic} (synthetic) / {same_ensemble} (trained ensemble); uniform improvement {uniform}; 4 of 6 {four_of_six}"
        ),
    )
}
