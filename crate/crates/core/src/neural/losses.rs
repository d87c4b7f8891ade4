//! Scalar losses with exact parameter gradients.

use super::action_space::ACTION_DIM;
use super::policy::{clamp_unit, critic_input, softmax_rows, GaussianPolicy};
use super::Mlp;
use ndarray::{s, Array1, Array2};

#[derive(Debug, Clone)]
pub struct ActorLoss {
    pub loss: f64,
    pub grad: Mlp,
    /// Mean of `−log π` over the batch.
    pub entropy: f64,
}

/// `mean(α·log π(a|s) − min(Q1, Q2)(s, a))` with `a` reparameterized from
/// the fixed standard-normal draws `eps`.
pub fn actor_loss(
    policy: &GaussianPolicy,
    q1: &Mlp,
    q2: &Mlp,
    obs: &Array2<f64>,
    eps: &Array2<f64>,
    alpha: f64,
) -> ActorLoss {
    let b = obs.nrows() as f64;
    let cache = policy.net.forward(obs.clone());
    let head = GaussianPolicy::head_from_output(&cache.output);
    let sample = head.sample_with(eps);
    let x = critic_input(obs, &sample.y);
    let c1 = q1.forward(x.clone());
    let c2 = q2.forward(x);
    let n = obs.nrows();
    let mut g1 = Array2::zeros((n, 1));
    let mut g2 = Array2::zeros((n, 1));
    let mut q_sum = 0.0;
    for i in 0..n {
        let (a, c) = (c1.output[[i, 0]], c2.output[[i, 0]]);
        if a <= c {
            g1[[i, 0]] = -1.0 / b;
            q_sum += a;
        } else {
            g2[[i, 0]] = -1.0 / b;
            q_sum += c;
        }
    }
    let (_, gx1) = q1.backward(&c1, g1, false);
    let (_, gx2) = q2.backward(&c2, g2, false);
    let obs_dim = obs.ncols();
    let gy = &gx1.slice(s![.., obs_dim..]) + &gx2.slice(s![.., obs_dim..]);

    let mut grad_out = Array2::zeros((n, 2 * ACTION_DIM));
    for i in 0..n {
        for d in 0..ACTION_DIM {
            let t = sample.u[[i, d]].tanh();
            let y = sample.y[[i, d]];
            let g_u = gy[[i, d]] * (1.0 - y * y) + alpha / b * 2.0 * t;
            grad_out[[i, d]] = g_u;
            if head.log_std_active[[i, d]] {
                let sigma = head.log_std[[i, d]].exp();
                grad_out[[i, ACTION_DIM + d]] = g_u * sigma * eps[[i, d]] - alpha / b;
            }
        }
    }
    let (grad, _) = policy.net.backward(&cache, grad_out, true);
    let mean_logp = sample.log_prob.mean().unwrap_or(0.0);
    ActorLoss { loss: alpha * mean_logp - q_sum / b, grad: grad.unwrap(), entropy: -mean_logp }
}

/// Mean negative log-likelihood of normalized target actions `y`.
pub fn nll_loss(policy: &GaussianPolicy, obs: &Array2<f64>, y: &Array2<f64>) -> (f64, Mlp) {
    let b = obs.nrows() as f64;
    let cache = policy.net.forward(obs.clone());
    let head = GaussianPolicy::head_from_output(&cache.output);
    let log_prob = head.log_prob_of(y);
    let mut grad_out = Array2::zeros((obs.nrows(), 2 * ACTION_DIM));
    for i in 0..obs.nrows() {
        for d in 0..ACTION_DIM {
            let u = clamp_unit(y[[i, d]]).atanh();
            let inv_var = (-2.0 * head.log_std[[i, d]]).exp();
            let diff = u - head.mean[[i, d]];
            grad_out[[i, d]] = -diff * inv_var / b;
            if head.log_std_active[[i, d]] {
                grad_out[[i, ACTION_DIM + d]] = (1.0 - diff * diff * inv_var) / b;
            }
        }
    }
    let (grad, _) = policy.net.backward(&cache, grad_out, true);
    (-log_prob.mean().unwrap_or(0.0), grad.unwrap())
}

/// Mean squared error of a critic against fixed targets.
pub fn critic_loss(critic: &Mlp, x: &Array2<f64>, target: &Array1<f64>) -> (f64, Mlp) {
    let b = x.nrows() as f64;
    let cache = critic.forward(x.clone());
    let diff = &cache.output.column(0) - target;
    let loss = diff.mapv(|d| d * d).sum() / b;
    let g = diff.mapv(|d| 2.0 * d / b).insert_axis(ndarray::Axis(1));
    let (grad, _) = critic.backward(&cache, g, true);
    (loss, grad.unwrap())
}

/// Mean cross-entropy of softmax logits against class labels.
pub fn cross_entropy(net: &Mlp, obs: &Array2<f64>, labels: &[usize]) -> (f64, Mlp) {
    assert_eq!(obs.nrows(), labels.len(), "one label per row");
    let b = obs.nrows() as f64;
    let cache = net.forward(obs.clone());
    let mut p = softmax_rows(&cache.output);
    let mut loss = 0.0;
    for (i, &c) in labels.iter().enumerate() {
        loss -= p[[i, c]].max(f64::MIN_POSITIVE).ln();
        p[[i, c]] -= 1.0;
    }
    p /= b;
    let (grad, _) = net.backward(&cache, p, true);
    (loss / b, grad.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::policy::standard_normal;
    use crate::neural::CriticPair;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const OBS: usize = 5;

    fn obs(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, OBS), |_| rng.random_range(-1.5..1.5))
    }

    /// Central differences over every parameter, relative tolerance 1e-4.
    fn check(params: &Mlp, grad: &Mlp, loss: impl Fn(&Mlp) -> f64) {
        let h = 1e-4;
        let analytic: Vec<f64> = grad.params().collect();
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-8);
        for (k, &a) in analytic.iter().enumerate() {
            let mut p = params.clone();
            *p.params_mut().nth(k).unwrap() += h;
            let up = loss(&p);
            *p.params_mut().nth(k).unwrap() -= 2.0 * h;
            let down = loss(&p);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-2 * scale);
            assert!(err < 1e-4, "param {k}: analytic {a} vs numeric {fd}");
        }
    }

    #[test]
    fn actor_loss_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = GaussianPolicy { net: Mlp::new(&[OBS, 6, 4], 1.0, &mut rng) };
        let critics = CriticPair::new(OBS, &[6], &mut rng);
        let x = obs(&mut rng, 5);
        let eps = standard_normal(5, &mut rng);
        for alpha in [0.0, 0.3] {
            let r = actor_loss(&policy, &critics.q1, &critics.q2, &x, &eps, alpha);
            check(&policy.net, &r.grad, |p| {
                actor_loss(&GaussianPolicy { net: p.clone() }, &critics.q1, &critics.q2, &x, &eps, alpha).loss
            });
        }
    }

    #[test]
    fn log_prob_gradient_including_tanh_correction() {
        // With a zero critic the actor loss is α·mean log π, so this checks
        // the squashed log-density gradient on its own.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = GaussianPolicy { net: Mlp::new(&[OBS, 6, 4], 1.0, &mut rng) };
        let zero = CriticPair::new(OBS, &[3], &mut rng).q1.zeros_like();
        let x = obs(&mut rng, 4);
        let eps = standard_normal(4, &mut rng) * 2.0;
        let r = actor_loss(&policy, &zero, &zero, &x, &eps, 1.0);
        check(&policy.net, &r.grad, |p| actor_loss(&GaussianPolicy { net: p.clone() }, &zero, &zero, &x, &eps, 1.0).loss);
    }

    #[test]
    fn nll_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let policy = GaussianPolicy { net: Mlp::new(&[OBS, 7, 4], 1.0, &mut rng) };
        let x = obs(&mut rng, 6);
        let y = Array2::from_shape_fn((6, 2), |_| rng.random_range(-0.95..0.95));
        let (_, g) = nll_loss(&policy, &x, &y);
        check(&policy.net, &g, |p| nll_loss(&GaussianPolicy { net: p.clone() }, &x, &y).0);
    }

    #[test]
    fn critic_loss_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let critics = CriticPair::new(OBS, &[6, 5], &mut rng);
        let x = obs(&mut rng, 7);
        let x = ndarray::concatenate(ndarray::Axis(1), &[x.view(), Array2::from_elem((7, 2), 0.3).view()]).unwrap();
        let t = Array1::from_shape_fn(7, |_| rng.random_range(-2.0..2.0));
        for q in [&critics.q1, &critics.q2] {
            let (_, g) = critic_loss(q, &x, &t);
            check(q, &g, |p| critic_loss(p, &x, &t).0);
        }
    }

    #[test]
    fn cross_entropy_gradient_and_uniform_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[OBS, 6, 9], 1.0, &mut rng);
        let x = obs(&mut rng, 5);
        let labels = [0, 3, 8, 3, 1];
        let (_, g) = cross_entropy(&net, &x, &labels);
        check(&net, &g, |p| cross_entropy(p, &x, &labels).0);
        let (loss, _) = cross_entropy(&net.zeros_like(), &x, &labels);
        assert_close!(loss, 9f64.ln(), 1e-12);
    }
}
