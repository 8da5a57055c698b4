//! REINFORCE training of the controller over a suite of functions.
//!
//! Each epoch draws one initial population shared by every training
//! function, samples `L` trajectories of `T` generations per function, and
//! applies one gradient-ascent step with the trajectory-return-weighted
//! log-likelihood gradient averaged over all `M·L` trajectories.

use std::borrow::Borrow;
use std::time::Instant;

use rand::Rng;

use crate::benchfn::Objective;
use crate::de::{self, ParamSheet, Population};
use crate::error::{invalid, LdeError, Result};
use crate::neural::{ControllerState, ControllerWeights, Dims, StepTape};
use crate::par;
use crate::policy::{self, Action, PolicyConfig};
use crate::rng::{self, Purpose};
use crate::state::{assemble_state, HistRing};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Q
    pub epochs: usize,
    /// L
    pub trajectories: usize,
    /// T
    pub horizon: usize,
    /// N
    pub pop_size: usize,
    /// b
    pub bins: usize,
    /// g
    pub window: usize,
    /// H
    pub hidden: usize,
    pub alpha: f64,
    pub policy: PolicyConfig,
    pub p: f64,
    pub seed: u64,
    /// Subtract each function's mean return before weighting gradients.
    pub baseline: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            trajectories: 20,
            horizon: 50,
            pop_size: 20,
            bins: 5,
            window: 5,
            hidden: 32,
            alpha: 0.005,
            policy: PolicyConfig::default(),
            p: 0.05,
            seed: 0,
            baseline: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 || self.bins == 0 || self.window == 0 || self.hidden == 0 {
            return Err(invalid("L, b, g and H must be positive"));
        }
        if self.pop_size < de::MIN_POPULATION {
            return Err(invalid(format!(
                "population size must be at least {}",
                de::MIN_POPULATION
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid("p must lie in (0, 1]"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        self.policy.validate()
    }

    pub fn dims(&self) -> Result<Dims> {
        Dims::for_population(self.hidden, self.pop_size, self.bins)
    }
}

#[derive(Clone, Debug)]
pub struct TrajStep {
    pub state_input: Vec<f64>,
    pub tape: StepTape,
    pub action: Action,
    pub mu: Vec<f64>,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub function_id: String,
    pub steps: Vec<TrajStep>,
    pub total_return: f64,
}

impl Borrow<StepTape> for TrajStep {
    fn borrow(&self) -> &StepTape {
        &self.tape
    }
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Runs `cfg.horizon` controlled generations from `p0` (already evaluated on `f`).
pub fn sample_trajectory<O, R>(
    w: &ControllerWeights,
    f: &O,
    p0: &Population,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Trajectory>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    let dims = w.dims();
    if dims.pop != p0.len() || dims.input != p0.len() + 2 * cfg.bins {
        return Err(invalid(format!(
            "controller {dims:?} does not fit N = {}, b = {}",
            p0.len(),
            cfg.bins
        )));
    }
    let mut pop = p0.clone();
    let mut ring = HistRing::new(cfg.window);
    let mut st = ControllerState::zeros(dims.hidden);
    let mut best_err = f.error_value(pop.best_fitness())?;
    let mut steps = Vec::with_capacity(cfg.horizon);
    for _ in 0..cfg.horizon {
        let x = assemble_state(&pop, &mut ring, cfg.bins).as_vector();
        let out = w.forward_step(&x, &st)?;
        let action = policy::sample_action(&out.mu, &cfg.policy, rng);
        let params = ParamSheet {
            f: action.clipped_f.clone(),
            cr: action.clipped_cr.clone(),
        };
        let mutants = de::mutate_current_to_pbest(&pop, &params, cfg.p, rng)?;
        let (trials, tf) = de::make_trials(&pop, &mutants, &params.cr, f, rng)?;
        pop = de::select(pop, trials, &tf)?;
        let err = f.error_value(pop.best_fitness())?;
        let reward = policy::reward(best_err, err)?;
        best_err = err;
        st = out.state;
        steps.push(TrajStep {
            state_input: x,
            tape: out.tape,
            action,
            mu: out.mu,
            reward,
        });
    }
    let total_return = steps.iter().map(|s| s.reward).sum();
    Ok(Trajectory {
        function_id: f.id().to_string(),
        steps,
        total_return,
    })
}

/// Per-step output gradients `s · ∂ln π/∂μ` for one trajectory.
fn output_grads(traj: &Trajectory, scale: f64, cfg: &PolicyConfig) -> Vec<Vec<f64>> {
    traj.steps
        .iter()
        .map(|s| {
            policy::logprob_grad_mu(&s.action, &s.mu, cfg)
                .into_iter()
                .map(|g| scale * g)
                .collect()
        })
        .collect()
}

/// Mean return of each function's trajectories, keyed by position of first appearance.
fn function_means(trajectories: &[Trajectory]) -> Vec<(String, f64, f64, usize)> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for t in trajectories {
        match groups.iter_mut().find(|(id, _)| *id == t.function_id) {
            Some((_, v)) => v.push(t.total_return),
            None => groups.push((t.function_id.clone(), vec![t.total_return])),
        }
    }
    groups
        .into_iter()
        .map(|(id, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
            (id, mean, var.sqrt(), v.len())
        })
        .collect()
}

/// Policy-gradient estimate averaged over all trajectories, reduced in index order.
pub fn epoch_gradient(
    w: &ControllerWeights,
    trajectories: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<ControllerWeights> {
    let mut total = ControllerWeights::zeros(w.dims());
    if trajectories.is_empty() {
        return Ok(total);
    }
    let means = function_means(trajectories);
    let items: Vec<&Trajectory> = trajectories.iter().collect();
    let grads = par::map(items, |traj| -> Result<ControllerWeights> {
        let base = if cfg.baseline {
            means
                .iter()
                .find(|(id, ..)| *id == traj.function_id)
                .map(|m| m.1)
                .unwrap_or(0.0)
        } else {
            0.0
        };
        let scale = traj.total_return - base;
        if let Some(s) = traj.steps.first() {
            if s.tape.x.len() != w.dims().input || s.mu.len() != 2 * w.dims().pop {
                return Err(invalid("trajectory does not match controller dims"));
            }
        }
        if scale == 0.0 || traj.steps.is_empty() {
            return Ok(ControllerWeights::zeros(w.dims()));
        }
        w.backward_through_time(&traj.steps, &output_grads(traj, scale, &cfg.policy))
    });
    for g in grads {
        total.add_assign(&g?)?;
    }
    total.scale(1.0 / trajectories.len() as f64);
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionReturn {
    pub function_id: String,
    pub mean: f64,
    pub std: f64,
}

/// One training epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLogRow {
    /// 1-based.
    pub epoch: usize,
    /// Mean of the per-function mean returns.
    pub mean_return: f64,
    pub returns: Vec<FunctionReturn>,
    pub grad_norm: f64,
    pub wallclock_ms: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: ControllerWeights,
    pub log: Vec<EpochLogRow>,
    pub epochs_done: usize,
}

#[derive(Debug)]
pub struct TrainFailure {
    pub error: LdeError,
    pub last_good: ControllerWeights,
    pub epochs_done: usize,
}

/// Runs epochs `start_epoch..cfg.epochs` from `weights`.
///
/// `on_epoch` sees the 1-based epoch number, the updated weights and that
/// epoch's log row; returning an error aborts training.
pub fn train_from<O, F>(
    suite: &[O],
    cfg: &TrainConfig,
    mut weights: ControllerWeights,
    start_epoch: usize,
    mut on_epoch: F,
) -> std::result::Result<TrainOutcome, Box<TrainFailure>>
where
    O: Objective,
    F: FnMut(usize, &ControllerWeights, &EpochLogRow) -> Result<()>,
{
    let fail = |error: LdeError, w: &ControllerWeights, done: usize| {
        Box::new(TrainFailure {
            error,
            last_good: w.clone(),
            epochs_done: done,
        })
    };
    let check = || -> Result<()> {
        cfg.validate()?;
        if suite.is_empty() {
            return Err(invalid("training suite is empty"));
        }
        let dim = suite[0].dim();
        if suite.iter().any(|f| f.dim() != dim) {
            return Err(invalid("training functions must share one dimension"));
        }
        if weights.dims() != cfg.dims()? {
            return Err(invalid(format!(
                "weights {:?} do not match config {:?}",
                weights.dims(),
                cfg.dims()?
            )));
        }
        Ok(())
    };
    if let Err(e) = check() {
        return Err(fail(e, &weights, start_epoch));
    }
    let dim = suite[0].dim();
    let mut log = Vec::new();

    for epoch in start_epoch..cfg.epochs {
        let started = Instant::now();
        let step = || -> Result<(ControllerWeights, EpochLogRow)> {
            let mut prng = rng::stream(cfg.seed, Purpose::Population, &[epoch as u64]);
            let unit = Population::unit_sample(cfg.pop_size, dim, &mut prng);
            let starts = suite
                .iter()
                .map(|f| Population::place(&unit, f))
                .collect::<Result<Vec<_>>>()?;
            let tasks: Vec<(usize, usize)> = (0..suite.len())
                .flat_map(|k| (0..cfg.trajectories).map(move |l| (k, l)))
                .collect();
            let trajectories = par::map(tasks, |(k, l)| {
                let mut trng = rng::stream(
                    cfg.seed,
                    Purpose::Trajectory,
                    &[epoch as u64, k as u64, l as u64],
                );
                sample_trajectory(&weights, &suite[k], &starts[k], cfg, &mut trng)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let grad = epoch_gradient(&weights, &trajectories, cfg)?;
            if !grad.is_finite() {
                return Err(LdeError::NumericFailure(format!(
                    "non-finite gradient in epoch {}",
                    epoch + 1
                )));
            }
            let next = weights.sgd_ascent(&grad, cfg.alpha)?;
            if !next.is_finite() {
                return Err(LdeError::NumericFailure(format!(
                    "non-finite weights after epoch {}",
                    epoch + 1
                )));
            }
            let returns: Vec<FunctionReturn> = function_means(&trajectories)
                .into_iter()
                .map(|(function_id, mean, std, _)| FunctionReturn {
                    function_id,
                    mean,
                    std,
                })
                .collect();
            let row = EpochLogRow {
                epoch: epoch + 1,
                mean_return: returns.iter().map(|r| r.mean).sum::<f64>() / returns.len() as f64,
                returns,
                grad_norm: grad.norm(),
                wallclock_ms: 0,
            };
            Ok((next, row))
        };
        let (next, mut row) = step().map_err(|e| fail(e, &weights, epoch))?;
        row.wallclock_ms = started.elapsed().as_millis() as u64;
        weights = next;
        on_epoch(epoch + 1, &weights, &row).map_err(|e| fail(e, &weights, epoch + 1))?;
        log.push(row);
    }
    Ok(TrainOutcome {
        weights,
        log,
        epochs_done: cfg.epochs.max(start_epoch),
    })
}

/// Trains from seeded initial weights for `cfg.epochs` epochs.
pub fn train<O: Objective>(
    suite: &[O],
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome, Box<TrainFailure>> {
    let init = match cfg.dims() {
        Ok(d) => ControllerWeights::init(d, cfg.seed),
        Err(error) => {
            return Err(Box::new(TrainFailure {
                error,
                last_good: ControllerWeights::zeros(Dims {
                    hidden: 1,
                    input: 1,
                    pop: 1,
                }),
                epochs_done: 0,
            }))
        }
    };
    train_from(suite, cfg, init, 0, |_, _, _| Ok(()))
}

/// Mean return per epoch (averaged over functions), in epoch order.
pub fn epoch_mean_returns(log: &[EpochLogRow]) -> Vec<f64> {
    log.iter().map(|r| r.mean_return).collect()
}

/// Column names of the training log for the given function ids.
pub fn log_header(function_ids: &[String]) -> Vec<String> {
    let mut h: Vec<String> = ["epoch", "mean_return", "grad_norm", "wallclock_ms"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for id in function_ids {
        h.push(format!("{id}:mean"));
        h.push(format!("{id}:std"));
    }
    h
}

/// Writes training-log rows as CSV, one row per epoch. The header (see
/// [`log_header`]) is written when `header` is set.
pub fn write_log<W: std::io::Write>(out: W, rows: &[EpochLogRow], header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    if header {
        if let Some(first) = rows.first() {
            let ids: Vec<String> = first
                .returns
                .iter()
                .map(|r| r.function_id.clone())
                .collect();
            w.write_record(log_header(&ids))?;
        }
    }
    for r in rows {
        let mut rec = vec![
            r.epoch.to_string(),
            r.mean_return.to_string(),
            r.grad_norm.to_string(),
            r.wallclock_ms.to_string(),
        ];
        for f in &r.returns {
            rec.push(f.mean.to_string());
            rec.push(f.std.to_string());
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchfn::{make_suite, Counting, Family, FunctionInstance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            trajectories: 2,
            horizon: 4,
            pop_size: 6,
            bins: 3,
            window: 2,
            hidden: 4,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn sphere2() -> FunctionInstance {
        FunctionInstance::new("sph", Family::Sphere, vec![1.0, -2.0], None, 0.0).unwrap()
    }

    #[test]
    fn empty_horizon_gives_empty_trajectory() {
        let cfg = TrainConfig {
            horizon: 0,
            ..tiny_cfg()
        };
        let f = sphere2();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p0 = Population::random(&f, 6, &mut rng).unwrap();
        let w = ControllerWeights::init(cfg.dims().unwrap(), 1);
        let t = sample_trajectory(&w, &f, &p0, &cfg, &mut rng).unwrap();
        assert!(t.steps.is_empty());
        assert_eq!(t.total_return, 0.0);
    }

    #[test]
    fn trajectories_are_reproducible_and_consistent() {
        let cfg = tiny_cfg();
        let f = Counting::new(sphere2());
        let w = ControllerWeights::init(cfg.dims().unwrap(), 1);
        let p0 = Population::random(&f, 6, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let before = f.count();
        let a = sample_trajectory(&w, &f, &p0, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(f.count() - before, (cfg.pop_size * cfg.horizon) as u64);
        let b = sample_trajectory(&w, &f, &p0, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.rewards(), b.rewards());
        assert_eq!(a.steps.len(), cfg.horizon);
        assert!((a.total_return - a.rewards().iter().sum::<f64>()).abs() < 1e-12);
        for s in &a.steps {
            assert!((0.0..=1.0).contains(&s.reward));
        }
    }

    #[test]
    fn random_controller_improves_sphere() {
        let cfg = TrainConfig {
            horizon: 20,
            pop_size: 8,
            ..tiny_cfg()
        };
        let f = sphere2();
        let positive = (0..10u64)
            .filter(|&seed| {
                let w = ControllerWeights::init(cfg.dims().unwrap(), seed);
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                let p0 = Population::random(&f, 8, &mut rng).unwrap();
                sample_trajectory(&w, &f, &p0, &cfg, &mut rng)
                    .unwrap()
                    .total_return
                    > 0.0
            })
            .count();
        assert!(positive >= 9, "{positive}/10");
    }

    #[test]
    fn log_has_one_row_per_epoch() {
        let (suite, _) = make_suite(3, 2, 2, 1).unwrap();
        let out = train(&suite, &tiny_cfg()).unwrap();
        let mut buf = Vec::new();
        write_log(&mut buf, &out.log, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + tiny_cfg().epochs);
        assert!(
            lines[0].starts_with("epoch,mean_return,grad_norm,wallclock_ms,train00-sphere:mean")
        );
        assert_eq!(lines[1].split(',').count(), 4 + 2 * suite.len());
    }

    #[test]
    fn zero_returns_give_zero_gradient() {
        let cfg = tiny_cfg();
        let f = sphere2();
        let w = ControllerWeights::init(cfg.dims().unwrap(), 1);
        let p0 = Population::random(&f, 6, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut t =
            sample_trajectory(&w, &f, &p0, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        t.total_return = 0.0;
        let g = epoch_gradient(&w, &[t.clone(), t], &cfg).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equal_returns_cancel_under_baseline() {
        let cfg = TrainConfig {
            baseline: true,
            ..tiny_cfg()
        };
        let f = sphere2();
        let w = ControllerWeights::init(cfg.dims().unwrap(), 1);
        let p0 = Population::random(&f, 6, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut a =
            sample_trajectory(&w, &f, &p0, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut b =
            sample_trajectory(&w, &f, &p0, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        a.total_return = 1.5;
        b.total_return = 1.5;
        let g = epoch_gradient(&w, &[a, b], &cfg).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    /// Single trajectory, single step: the estimator equals
    /// `r · Σ_j (a_j − μ_j)/σ² · ∂μ_j/∂w`, with `∂μ/∂w` from central differences.
    #[test]
    fn single_step_estimator_matches_finite_differences() {
        let cfg = TrainConfig {
            horizon: 1,
            hidden: 2,
            pop_size: 4,
            bins: 1,
            ..tiny_cfg()
        };
        let f = sphere2();
        let w = ControllerWeights::init(cfg.dims().unwrap(), 8);
        let p0 = Population::random(&f, 4, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let traj = sample_trajectory(&w, &f, &p0, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let g = epoch_gradient(&w, std::slice::from_ref(&traj), &cfg).unwrap();

        let step = &traj.steps[0];
        let coef: Vec<f64> = policy::logprob_grad_mu(&step.action, &step.mu, &cfg.policy)
            .into_iter()
            .map(|v| v * traj.total_return)
            .collect();
        let zero = ControllerState::zeros(cfg.hidden);
        let eps = 1e-6;
        let mut probe = w.clone();
        for idx in 0..w.as_slice().len() {
            let orig = probe.as_slice()[idx];
            probe.as_mut_slice()[idx] = orig + eps;
            let up = probe.forward_step(&step.state_input, &zero).unwrap().mu;
            probe.as_mut_slice()[idx] = orig - eps;
            let down = probe.forward_step(&step.state_input, &zero).unwrap().mu;
            probe.as_mut_slice()[idx] = orig;
            let numeric: f64 = (0..coef.len())
                .map(|j| coef[j] * (up[j] - down[j]) / (2.0 * eps))
                .sum();
            let err = crate::neural::relative_error(g.as_slice()[idx], numeric);
            assert!(
                err < 1e-4,
                "param {idx}: {} vs {numeric}",
                g.as_slice()[idx]
            );
        }
    }

    #[test]
    fn zero_epochs_or_zero_rate_keep_weights() {
        let (suite, _) = make_suite(3, 2, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_cfg()
        };
        let out = train(&suite, &cfg).unwrap();
        assert_eq!(
            out.weights,
            ControllerWeights::init(cfg.dims().unwrap(), cfg.seed)
        );
        assert!(out.log.is_empty());

        let cfg = TrainConfig {
            alpha: 0.0,
            ..tiny_cfg()
        };
        let out = train(&suite, &cfg).unwrap();
        assert_eq!(
            out.weights,
            ControllerWeights::init(cfg.dims().unwrap(), cfg.seed)
        );
        assert_eq!(out.log.len(), cfg.epochs);
        assert!(out.log.iter().all(|r| r.returns.len() == suite.len()));
    }

    #[test]
    fn evaluation_accounting() {
        let (suite, _) = make_suite(3, 2, 3, 1).unwrap();
        let counted: Vec<_> = suite.into_iter().map(Counting::new).collect();
        let cfg = tiny_cfg();
        train(&counted, &cfg).unwrap();
        let total: u64 = counted.iter().map(Counting::count).sum();
        let (q, m, l, n, t) = (
            cfg.epochs,
            counted.len(),
            cfg.trajectories,
            cfg.pop_size,
            cfg.horizon,
        );
        assert_eq!(total, (q * m * (l * n * t + n)) as u64);
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let (suite, _) = make_suite(3, 2, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..tiny_cfg()
        };
        let full = train(&suite, &cfg).unwrap();
        let first = train(
            &suite,
            &TrainConfig {
                epochs: 1,
                ..cfg.clone()
            },
        )
        .unwrap();
        let rest = train_from(&suite, &cfg, first.weights, 1, |_, _, _| Ok(())).unwrap();
        assert_eq!(rest.weights, full.weights);
        let strip = |rows: &[EpochLogRow]| -> Vec<EpochLogRow> {
            rows.iter()
                .cloned()
                .map(|r| EpochLogRow {
                    wallclock_ms: 0,
                    ..r
                })
                .collect()
        };
        let mut joined = strip(&first.log);
        joined.extend(strip(&rest.log));
        assert_eq!(joined, strip(&full.log));
    }

    #[test]
    fn mismatched_weights_rejected() {
        let (suite, _) = make_suite(3, 2, 2, 1).unwrap();
        let cfg = tiny_cfg();
        let wrong = ControllerWeights::init(Dims::for_population(4, 7, 3).unwrap(), 1);
        let err = train_from(&suite, &cfg, wrong, 0, |_, _, _| Ok(())).unwrap_err();
        assert!(matches!(err.error, LdeError::InvalidArgument(_)));
    }
}
