//! Gaussian policy over per-individual `(F, CR)` and the improvement reward.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, LdeError, Result};
use crate::neural::sigmoid;
use crate::rng::{self, Purpose};

pub const REWARD_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyConfig {
    pub sigma: f64,
    pub f_min: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            sigma: 0.1,
            f_min: 1e-3,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.f_min > 0.0 && self.f_min < 1.0) {
            return Err(invalid(format!(
                "F_min must lie in (0, 1), got {}",
                self.f_min
            )));
        }
        Ok(())
    }
}

/// A sampled action. `raw` is `[F ‖ CR]` before clipping and is what the
/// log-likelihood gradient uses; the clipped halves drive the DE step.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub raw: Vec<f64>,
    pub clipped_f: Vec<f64>,
    pub clipped_cr: Vec<f64>,
}

impl Action {
    /// Clips a raw `[F ‖ CR]` vector into the legal ranges.
    pub fn from_raw(raw: Vec<f64>, cfg: &PolicyConfig) -> Self {
        let n = raw.len() / 2;
        let clipped_f = raw[..n].iter().map(|v| v.clamp(cfg.f_min, 1.0)).collect();
        let clipped_cr = raw[n..].iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Action {
            raw,
            clipped_f,
            clipped_cr,
        }
    }
}

/// `raw = mu + σ·z` for given standard-normal draws `z`.
pub fn action_from_draws(mu: &[f64], z: &[f64], cfg: &PolicyConfig) -> Action {
    let raw = mu.iter().zip(z).map(|(m, z)| m + cfg.sigma * z).collect();
    Action::from_raw(raw, cfg)
}

pub fn sample_action<R: Rng + ?Sized>(mu: &[f64], cfg: &PolicyConfig, rng: &mut R) -> Action {
    let z: Vec<f64> = (0..mu.len()).map(|_| rng.sample(StandardNormal)).collect();
    action_from_draws(mu, &z, cfg)
}

/// `∂ ln π / ∂μ = (raw − μ) / σ²`.
pub fn logprob_grad_mu(action: &Action, mu: &[f64], cfg: &PolicyConfig) -> Vec<f64> {
    let inv = 1.0 / (cfg.sigma * cfg.sigma);
    action
        .raw
        .iter()
        .zip(mu)
        .map(|(a, m)| (a - m) * inv)
        .collect()
}

/// Relative improvement of the best error: `(e_t − e_{t+1}) / (e_t + ε)`.
pub fn reward(err_prev: f64, err_next: f64) -> Result<f64> {
    if err_next > err_prev + 1e-9 {
        return Err(LdeError::InternalConsistency(format!(
            "best error rose from {err_prev} to {err_next}"
        )));
    }
    Ok(((err_prev - err_next) / (err_prev + REWARD_EPS)).clamp(0.0, 1.0))
}

/// Undiscounted trajectory return.
pub fn trajectory_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

/// One-parameter bandit: `μ = σ(θ)`, reward `−(a − target)²`. Runs `steps`
/// REINFORCE updates from `θ = 0` and returns the trajectory of `μ`.
pub fn scalar_bandit(seed: u64, steps: usize, alpha: f64, sigma: f64, target: f64) -> Vec<f64> {
    let cfg = PolicyConfig { sigma, f_min: 1e-3 };
    let mut rng = rng::stream(seed, Purpose::Test, &[steps as u64]);
    let mut theta = 0.0f64;
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(sigmoid(theta));
    for _ in 0..steps {
        let mu = sigmoid(theta);
        let action = sample_action(&[mu], &cfg, &mut rng);
        let r = -(action.raw[0] - target).powi(2);
        let g_mu = logprob_grad_mu(&action, &[mu], &cfg)[0];
        theta += alpha * r * g_mu * mu * (1.0 - mu);
        trace.push(sigmoid(theta));
    }
    trace
}
