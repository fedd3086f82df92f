use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rismec_core::env::{mean_pattern_gain, EnvConfig, MecEnv, OrientationMode};
use rismec_learn::gaussian::GaussianHead;
use rismec_learn::policy::{Heuristic, HeuristicKind, Policy};
use rismec_learn::ppo::{PpoAgent, PpoConfig, Rollout};
use rismec_learn::replay::ReplayBuffer;
use rismec_learn::sac::{SacAgent, SacConfig};

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

#[test]
fn sac_actor_gradient_matches_finite_differences() {
    let h = 1e-5;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let obs_dim = rng.random_range(2..6);
        let act_dim = rng.random_range(1..4);
        let cfg = SacConfig { hidden: vec![rng.random_range(3..8)], temperature: rng.random_range(0.05..1.0), ..Default::default() };
        let agent = SacAgent::new(cfg, obs_dim, act_dim, &mut rng).unwrap();
        let n = 4;
        let obs = Array2::from_shape_simple_fn((n, obs_dim), || rng.random_range(-1.0..1.0));
        let eps = Array2::from_shape_simple_fn((n, act_dim), || rng.sample::<f64, _>(StandardNormal));
        let step = agent.actor_loss_grad(&obs, &eps).unwrap();
        let analytic = step.grads.to_flat();
        let flat = agent.actor.to_flat();
        let mut probe = agent.clone();
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] += h;
            probe.actor.set_flat(&p).unwrap();
            let up = probe.actor_loss_grad(&obs, &eps).unwrap().loss;
            p[i] -= 2.0 * h;
            probe.actor.set_flat(&p).unwrap();
            let down = probe.actor_loss_grad(&obs, &eps).unwrap().loss;
            let numeric = (up - down) / (2.0 * h);
            assert!(rel_err(analytic[i], numeric) < 1e-4, "seed {seed} param {i}: {} vs {numeric}", analytic[i]);
        }
    }
}

#[test]
fn squashed_samples_average_to_the_expected_mean() {
    // E[tanh(μ + σε)] by quadrature is the oracle; the squashed mean tanh(μ) is
    // only its small-σ limit.
    let head = GaussianHead::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mu, ls) = (0.4, -1.2f64);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| head.sample(&[mu], &[ls], &mut rng).action[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let steps = 20_000;
    let expected: f64 = (0..steps)
        .map(|i| {
            let z = -8.0 + 16.0 * (i as f64 + 0.5) / steps as f64;
            (mu + ls.exp() * z).tanh() * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * 16.0 / steps as f64
        })
        .sum();
    assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} (se {se})");
}

#[test]
fn log_density_matches_a_histogram() {
    let head = GaussianHead::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mu, ls) = (0.3, -0.4);
    let n = 1_000_000;
    let bins = 40;
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let a = head.sample(&[mu], &[ls], &mut rng).action[0];
        let b = (((a + 1.0) / 2.0) * bins as f64).floor() as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let width = 2.0 / bins as f64;
    // Interior bins with enough mass for a 5% comparison.
    for (b, &c) in counts.iter().enumerate().take(bins - 4).skip(4) {
        let centre = -1.0 + (b as f64 + 0.5) * width;
        let density = head.log_prob(&[mu], &[ls], &[centre]).exp();
        let empirical = c as f64 / (n as f64 * width);
        if c > 5000 {
            assert!((empirical / density - 1.0).abs() < 0.05, "bin {b}: {empirical} vs {density}");
        }
    }
}

#[test]
fn critic_converges_on_a_single_transition() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = SacConfig { hidden: vec![16, 16], lr_critic: 1e-3, gamma: 0.5, ..Default::default() };
    let mut agent = SacAgent::new(cfg, 2, 1, &mut rng).unwrap();
    let mut buf = ReplayBuffer::new(1, 2, 1);
    buf.push(&[0.2, -0.3], &[0.5], -1.5, &[0.1, 0.1], true);
    for _ in 0..3000 {
        let batch = buf.sample(1, &mut rng);
        agent.update(&batch, &mut rng).unwrap();
    }
    let batch = buf.sample(1, &mut rng);
    let target = agent.critic_target(&batch, &mut rng).unwrap()[0];
    for critic in &agent.critics {
        let q = critic.forward_one(&[0.2, -0.3, 0.5]).unwrap()[0];
        assert!((q - target).abs() < 1e-3, "{q} vs {target}");
    }
}

/// One-step bandit: reward peaks at action 0.3 in every dimension.
fn bandit_batch(rng: &mut ChaCha8Rng, agent: &SacAgent, buf: &mut ReplayBuffer, n: usize) {
    for _ in 0..n {
        let obs = [1.0];
        let (a, _) = agent.sample_action(&obs, rng).unwrap();
        let r = -a.iter().map(|x| (x - 0.3).powi(2)).sum::<f64>();
        buf.push(&obs, &a, r, &obs, true);
    }
}

#[test]
fn strong_entropy_weight_widens_the_policy() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let cfg = SacConfig { hidden: vec![16], temperature: 5.0, batch_size: 64, ..Default::default() };
    let mut agent = SacAgent::new(cfg, 1, 2, &mut rng).unwrap();
    // Start narrow so there is room to widen towards the maximum-entropy width.
    let last_layer = agent.actor.layers.last_mut().unwrap();
    last_layer.bias.slice_mut(ndarray::s![2..]).fill(-2.0);
    let mut buf = ReplayBuffer::new(5000, 1, 2);
    bandit_batch(&mut rng, &agent, &mut buf, 256);
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..1000 {
        bandit_batch(&mut rng, &agent, &mut buf, 1);
        let batch = buf.sample(64, &mut rng);
        let l = agent.update(&batch, &mut rng).unwrap();
        first.get_or_insert(l.mean_log_std);
        last = l.mean_log_std;
    }
    assert!(last > first.unwrap() + 0.1, "{first:?} -> {last}");
}

#[test]
fn sac_learns_a_one_step_bandit() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let cfg = SacConfig { hidden: vec![32], temperature: 0.01, batch_size: 64, lr_actor: 1e-3, lr_critic: 1e-3, ..Default::default() };
    let mut agent = SacAgent::new(cfg, 1, 2, &mut rng).unwrap();
    let mut buf = ReplayBuffer::new(5000, 1, 2);
    bandit_batch(&mut rng, &agent, &mut buf, 256);
    for _ in 0..8000 {
        bandit_batch(&mut rng, &agent, &mut buf, 1);
        let batch = buf.sample(64, &mut rng);
        agent.update(&batch, &mut rng).unwrap();
    }
    let a = agent.deterministic_action(&[1.0]).unwrap();
    assert!(a.iter().all(|x| (x - 0.3).abs() < 0.1), "{a:?}");
}

#[test]
fn sac_training_is_bit_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let cfg = SacConfig { hidden: vec![8], batch_size: 16, ..Default::default() };
        let mut agent = SacAgent::new(cfg, 1, 2, &mut rng).unwrap();
        let mut buf = ReplayBuffer::new(500, 1, 2);
        bandit_batch(&mut rng, &agent, &mut buf, 32);
        let mut curve = Vec::new();
        for _ in 0..50 {
            bandit_batch(&mut rng, &agent, &mut buf, 1);
            let batch = buf.sample(16, &mut rng);
            curve.push(agent.update(&batch, &mut rng).unwrap());
        }
        (curve, agent)
    };
    assert_eq!(run(), run());
}

fn ppo_small(seed: u64) -> (PpoAgent, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = PpoConfig { hidden: vec![8], minibatch: 16, epochs: 2, ..Default::default() };
    let agent = PpoAgent::new(cfg, 2, 1, &mut rng).unwrap();
    (agent, rng)
}

fn rollout(agent: &PpoAgent, rng: &mut ChaCha8Rng, n: usize, adv: impl Fn(f64) -> f64) -> Rollout {
    let mut obs = Array2::zeros((n, 2));
    let mut pre = Array2::zeros((n, 1));
    let mut old = Array1::zeros(n);
    let mut advantages = Array1::zeros(n);
    for i in 0..n {
        let o = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (a, u, lp) = agent.sample(&o, rng).unwrap();
        obs[[i, 0]] = o[0];
        obs[[i, 1]] = o[1];
        pre[[i, 0]] = u[0];
        old[i] = lp;
        advantages[i] = adv(a[0]);
    }
    Rollout { obs, pre_squash: pre, old_log_prob: old, advantages, returns: Array1::zeros(n) }
}

#[test]
fn zero_advantage_leaves_the_policy_untouched() {
    let (mut agent, mut rng) = ppo_small(30);
    let r = rollout(&agent, &mut rng, 64, |_| 0.0);
    let (actor, log_std) = (agent.actor.clone(), agent.log_std.clone());
    agent.update(&r, &mut rng).unwrap();
    assert_eq!(agent.actor, actor);
    assert_eq!(agent.log_std, log_std);
}

#[test]
fn clipped_samples_contribute_no_gradient() {
    let (agent, mut rng) = ppo_small(31);
    let mut r = rollout(&agent, &mut rng, 32, |a| if a > 0.0 { 1.0 } else { -1.0 });
    // Shift the stored log-probs so every ratio is far outside the clip range
    // on the side where the clip binds.
    for i in 0..32 {
        let shift = if r.advantages[i] > 0.0 { -1.0 } else { 1.0 };
        r.old_log_prob[i] += shift;
    }
    let (_, g_mean, g_ls, frac, _) = agent.surrogate_grads(&r.obs, &r.pre_squash, &r.old_log_prob, &r.advantages).unwrap();
    assert_eq!(frac, 1.0);
    assert!(g_mean.iter().all(|&g| g == 0.0));
    assert!(g_ls.iter().all(|&g| g == 0.0));

    // Inside the range, the same samples do move the policy.
    let fresh = rollout(&agent, &mut rng, 32, |a| if a > 0.0 { 1.0 } else { -1.0 });
    let (_, g_mean, _, frac, _) =
        agent.surrogate_grads(&fresh.obs, &fresh.pre_squash, &fresh.old_log_prob, &fresh.advantages).unwrap();
    assert_eq!(frac, 0.0);
    assert!(g_mean.iter().any(|&g| g != 0.0));
}

#[test]
fn ppo_solves_a_two_armed_bandit() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let cfg = PpoConfig { hidden: vec![16], minibatch: 64, epochs: 4, lr_actor: 3e-3, init_log_std: 0.0, ..Default::default() };
    let mut agent = PpoAgent::new(cfg, 1, 1, &mut rng).unwrap();
    // Arm "positive" pays 1, arm "negative" pays 0; one-step episodes.
    for _ in 0..60 {
        let n = 256;
        let mut obs = Array2::ones((n, 1));
        let mut pre = Array2::zeros((n, 1));
        let mut old = Array1::zeros(n);
        let mut rewards = vec![0.0; n];
        for i in 0..n {
            let (a, u, lp) = agent.sample(&[1.0], &mut rng).unwrap();
            pre[[i, 0]] = u[0];
            old[i] = lp;
            rewards[i] = if a[0] > 0.0 { 1.0 } else { 0.0 };
            obs[[i, 0]] = 1.0;
        }
        let v = agent.value_of(&[1.0]).unwrap();
        let values = vec![v; n];
        let (adv, ret) = rismec_learn::ppo::gae(&rewards, &values, &vec![true; n], 0.0, 0.95, 0.95);
        let r = Rollout { obs, pre_squash: pre, old_log_prob: old, advantages: adv.into(), returns: ret.into() };
        agent.update(&r, &mut rng).unwrap();
    }
    let wins = (0..2000).filter(|_| agent.sample(&[1.0], &mut rng).unwrap().0[0] > 0.0).count();
    assert!(wins as f64 / 2000.0 >= 0.95, "{wins}");
}

fn small_env(orientation: OrientationMode) -> MecEnv {
    let mut cfg = EnvConfig { num_ues: 5, num_elements: 8, orientation, ..Default::default() };
    cfg.channel.num_ues = 5;
    MecEnv::new(cfg).unwrap()
}

#[test]
fn local_only_returns_the_local_energy() {
    let mut env = small_env(OrientationMode::Agent);
    let mut policy = Heuristic::for_env(HeuristicKind::LocalOnly, &env);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for seed in 0..5 {
        let s = env.reset(seed).unwrap();
        let mut obs = env.observe(&s);
        let mut ret = 0.0;
        while !env.is_done() {
            let raw = policy.act(&obs, &mut rng, false).unwrap();
            let out = env.step(&env.decode_action(&raw).unwrap()).unwrap();
            assert_eq!(out.reward.penalty(), 0.0);
            ret += out.reward.total;
            obs = env.observe(&out.state);
        }
        assert!((ret + 10.8).abs() < 1e-9, "{ret}");
    }
}

#[test]
fn fixed_orientation_matches_a_grid_search() {
    let env = small_env(OrientationMode::Fixed);
    let centroid = env.config().mobility.region_center;
    let rule = Heuristic::fixed_for_points(&env, &[centroid]).unwrap();
    let b = env.bounds();
    let (mut best, mut best_gain) = (b.lo, f64::MIN);
    for i in 0..10_000 {
        let d = b.lo + b.width() * i as f64 / 9999.0;
        let g = mean_pattern_gain(env.config(), &[centroid], d).unwrap();
        if g > best_gain {
            best = d;
            best_gain = g;
        }
    }
    assert!((rule.fixed_rotation - best).abs() <= b.width() / 9999.0, "{} vs {best}", rule.fixed_rotation);
    let held = env.decode_action(&{
        let mut raw = vec![0.0; env.config().action_dim()];
        raw[0] = rule.fixed_raw_rotation;
        raw
    });
    assert!((held.unwrap().rotation - rule.fixed_rotation).abs() < 1e-12);
}

/// Asymptotic Kolmogorov distribution tail `P(K > x)`.
fn kolmogorov_tail(x: f64) -> f64 {
    let mut p = 0.0;
    for k in 1..200 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp();
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn random_orientation_is_uniform_over_the_bounds() {
    let env = small_env(OrientationMode::Agent);
    let mut policy = Heuristic::for_env(HeuristicKind::RandomOrientation, &env);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let b = env.bounds();
    let obs = vec![0.0; env.config().observation_dim()];
    let n = 10_000;
    let mut u: Vec<f64> = (0..n)
        .map(|_| {
            let raw = policy.act(&obs, &mut rng, true).unwrap();
            let d = env.decode_action(&raw).unwrap().rotation;
            assert!(b.contains(d));
            (d - b.lo) / b.width()
        })
        .collect();
    u.sort_by(f64::total_cmp);
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - x))
        .fold(0.0, f64::max);
    let p = kolmogorov_tail(d * (n as f64).sqrt());
    assert!(p > 0.01, "KS p-value {p}");
}

#[test]
fn random_phase_uses_every_codebook_level() {
    let env = small_env(OrientationMode::Agent);
    let mut policy = Heuristic::for_env(HeuristicKind::RandomPhase, &env);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut counts = [0usize; 4];
    for _ in 0..1000 {
        let raw = policy.act(&[], &mut rng, true).unwrap();
        for p in env.decode_action(&raw).unwrap().phases.phases {
            counts[(p / (std::f64::consts::PI / 2.0)).round() as usize] += 1;
        }
    }
    let total = 8000.0;
    assert!(counts.iter().all(|&c| (c as f64 / total - 0.25).abs() < 0.03), "{counts:?}");
}
