//! The learned DE and fixed-parameter baselines under one evaluation budget.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};

use crate::benchfn::Objective;
use crate::de::{self, ParamSheet, Population};
use crate::error::{invalid, LdeError, Result};
use crate::neural::{ControllerState, ControllerWeights};
use crate::par;
use crate::policy::{self, PolicyConfig};
use crate::rng::{self, Purpose};
use crate::state::{assemble_state, HistRing};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Termination {
    pub max_evals: usize,
    pub error_tol: f64,
}

impl Termination {
    /// `dim × 10⁴` evaluations, error tolerance `1e-8`.
    pub fn standard(dim: usize) -> Self {
        Termination {
            max_evals: dim * 10_000,
            error_tol: 1e-8,
        }
    }
}

/// DE settings shared by the learned optimizer and the baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct DeConfig {
    pub pop_size: usize,
    pub bins: usize,
    pub window: usize,
    pub p: f64,
    pub policy: PolicyConfig,
    /// Use the controller mean directly instead of sampling around it.
    pub deterministic: bool,
    pub record_params: bool,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            pop_size: 20,
            bins: 5,
            window: 5,
            p: 0.05,
            policy: PolicyConfig::default(),
            deterministic: false,
            record_params: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    /// DE/rand/1/bin, F = 0.5, CR = 0.8.
    DeRand1Fixed,
    /// current-to-pbest/1/bin, F = 0.5, CR = 0.9.
    CtpbFixed,
    /// current-to-pbest/1/bin with F ~ U(F_min, 1], CR ~ U[0, 1] per individual and generation.
    RandomParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlgorithmId {
    Lde,
    Baseline(BaselineKind),
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 4] = [
        AlgorithmId::Lde,
        AlgorithmId::Baseline(BaselineKind::DeRand1Fixed),
        AlgorithmId::Baseline(BaselineKind::CtpbFixed),
        AlgorithmId::Baseline(BaselineKind::RandomParams),
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::Lde => "lde",
            AlgorithmId::Baseline(BaselineKind::DeRand1Fixed) => "de_rand1_fixed",
            AlgorithmId::Baseline(BaselineKind::CtpbFixed) => "ctpb_fixed",
            AlgorithmId::Baseline(BaselineKind::RandomParams) => "random_params",
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = LdeError;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTraceRow {
    pub generation: usize,
    /// 0 = best third by fitness.
    pub tercile: usize,
    pub mean_f: f64,
    pub mean_cr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub function_id: String,
    pub algorithm_id: String,
    pub seed: u64,
    pub best_error: f64,
    pub evals_used: usize,
    /// `(evaluations, best error)` at the start and at every improvement.
    pub error_trace: Vec<(usize, f64)>,
    pub param_trace: Option<Vec<ParamTraceRow>>,
}

enum Strategy {
    CurrentToPbest,
    Rand1,
}

trait ParamSource {
    fn strategy(&self) -> Strategy;
    fn next<R: Rng + ?Sized>(&mut self, pop: &Population, rng: &mut R) -> Result<ParamSheet>;
}

struct Learned<'a> {
    weights: &'a ControllerWeights,
    ring: HistRing,
    state: ControllerState,
    cfg: &'a DeConfig,
}

impl ParamSource for Learned<'_> {
    fn strategy(&self) -> Strategy {
        Strategy::CurrentToPbest
    }

    fn next<R: Rng + ?Sized>(&mut self, pop: &Population, rng: &mut R) -> Result<ParamSheet> {
        let x = assemble_state(pop, &mut self.ring, self.cfg.bins).as_vector();
        let out = self.weights.forward_step(&x, &self.state)?;
        self.state = out.state;
        let action = if self.cfg.deterministic {
            policy::Action::from_raw(out.mu, &self.cfg.policy)
        } else {
            policy::sample_action(&out.mu, &self.cfg.policy, rng)
        };
        Ok(ParamSheet {
            f: action.clipped_f,
            cr: action.clipped_cr,
        })
    }
}

struct Fixed {
    f: f64,
    cr: f64,
    strategy: fn() -> Strategy,
}

impl ParamSource for Fixed {
    fn strategy(&self) -> Strategy {
        (self.strategy)()
    }

    fn next<R: Rng + ?Sized>(&mut self, pop: &Population, _rng: &mut R) -> Result<ParamSheet> {
        Ok(ParamSheet::uniform(pop.len(), self.f, self.cr))
    }
}

struct Uniform {
    f_min: f64,
}

impl ParamSource for Uniform {
    fn strategy(&self) -> Strategy {
        Strategy::CurrentToPbest
    }

    fn next<R: Rng + ?Sized>(&mut self, pop: &Population, rng: &mut R) -> Result<ParamSheet> {
        let n = pop.len();
        // U(F_min, 1]: reflect the half-open [0, 1) draw.
        let f = (0..n)
            .map(|_| self.f_min + (1.0 - rng.random::<f64>()) * (1.0 - self.f_min))
            .collect();
        let cr = (0..n).map(|_| rng.random::<f64>()).collect();
        Ok(ParamSheet { f, cr })
    }
}

/// DE/rand/1 mutants: `x_r1 + F·(x_r2 − x_r3)` with `r1, r2, r3, i` distinct.
pub fn mutate_rand1<R: Rng + ?Sized>(
    pop: &Population,
    params: &ParamSheet,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = pop.len();
    if n < de::MIN_POPULATION {
        return Err(invalid(format!(
            "DE/rand/1 needs N ≥ {}",
            de::MIN_POPULATION
        )));
    }
    Ok((0..n)
        .map(|i| {
            let mut picks = [i; 3];
            for k in 0..3 {
                loop {
                    let c = rng.random_range(0..n);
                    if c != i && !picks[..k].contains(&c) {
                        picks[k] = c;
                        break;
                    }
                }
            }
            let m = &pop.members;
            let fi = params.f[i];
            m[picks[0]]
                .iter()
                .zip(&m[picks[1]])
                .zip(&m[picks[2]])
                .map(|((a, b), c)| a + fi * (b - c))
                .collect()
        })
        .collect())
}

fn tercile_means(pop: &Population, params: &ParamSheet, generation: usize) -> Vec<ParamTraceRow> {
    let order = pop.ranking();
    let n = order.len();
    (0..3)
        .filter_map(|t| {
            let group = &order[t * n / 3..(t + 1) * n / 3];
            if group.is_empty() {
                return None;
            }
            let k = group.len() as f64;
            Some(ParamTraceRow {
                generation,
                tercile: t,
                mean_f: group.iter().map(|&i| params.f[i]).sum::<f64>() / k,
                mean_cr: group.iter().map(|&i| params.cr[i]).sum::<f64>() / k,
            })
        })
        .collect()
}

fn run_with<O, S, R>(
    source: &mut S,
    algorithm_id: &str,
    f: &O,
    term: &Termination,
    cfg: &DeConfig,
    seed: u64,
    rng: &mut R,
) -> Result<RunResult>
where
    O: Objective + ?Sized,
    S: ParamSource,
    R: Rng + ?Sized,
{
    let n = cfg.pop_size;
    if term.max_evals < n {
        return Err(invalid(format!(
            "budget {} is smaller than the population {n}",
            term.max_evals
        )));
    }
    let mut pop = Population::random(f, n, rng)?;
    let mut evals = n;
    let mut best = f.error_value(pop.best_fitness())?;
    let mut trace = vec![(evals, best)];
    let mut params_log = cfg.record_params.then(Vec::new);
    while evals + n <= term.max_evals && best > term.error_tol {
        let params = source.next(&pop, rng)?;
        if let Some(log) = params_log.as_mut() {
            log.extend(tercile_means(&pop, &params, pop.generation));
        }
        let mutants = match source.strategy() {
            Strategy::CurrentToPbest => de::mutate_current_to_pbest(&pop, &params, cfg.p, rng)?,
            Strategy::Rand1 => mutate_rand1(&pop, &params, rng)?,
        };
        let (trials, tf) = de::make_trials(&pop, &mutants, &params.cr, f, rng)?;
        evals += n;
        pop = de::select(pop, trials, &tf)?;
        let err = f.error_value(pop.best_fitness())?;
        if err < best {
            best = err;
            trace.push((evals, best));
        }
    }
    if trace.last().map(|t| t.0) != Some(evals) {
        trace.push((evals, best));
    }
    Ok(RunResult {
        function_id: f.id().to_string(),
        algorithm_id: algorithm_id.to_string(),
        seed,
        best_error: best,
        evals_used: evals,
        error_trace: trace,
        param_trace: params_log,
    })
}

fn check_binding(w: &ControllerWeights, cfg: &DeConfig) -> Result<()> {
    let d = w.dims();
    if d.pop != cfg.pop_size || d.input != cfg.pop_size + 2 * cfg.bins {
        return Err(invalid(format!(
            "controller was trained for N = {}, D = {}; run asks for N = {}, b = {}",
            d.pop, d.input, cfg.pop_size, cfg.bins
        )));
    }
    Ok(())
}

/// The learned DE: controller-driven current-to-pbest/1/bin until the budget
/// or the error tolerance is reached.
pub fn run_lde<O: Objective + ?Sized>(
    w: &ControllerWeights,
    f: &O,
    term: &Termination,
    cfg: &DeConfig,
    seed: u64,
) -> Result<RunResult> {
    check_binding(w, cfg)?;
    cfg.policy.validate()?;
    let mut source = Learned {
        weights: w,
        ring: HistRing::new(cfg.window),
        state: ControllerState::zeros(w.dims().hidden),
        cfg,
    };
    let mut rng = rng::Stream::seed_from_u64(seed);
    run_with(
        &mut source,
        AlgorithmId::Lde.name(),
        f,
        term,
        cfg,
        seed,
        &mut rng,
    )
}

pub fn run_baseline<O: Objective + ?Sized>(
    kind: BaselineKind,
    f: &O,
    term: &Termination,
    cfg: &DeConfig,
    seed: u64,
) -> Result<RunResult> {
    let mut rng = rng::Stream::seed_from_u64(seed);
    let id = AlgorithmId::Baseline(kind).name();
    match kind {
        BaselineKind::DeRand1Fixed => {
            let mut s = Fixed {
                f: 0.5,
                cr: 0.8,
                strategy: || Strategy::Rand1,
            };
            run_with(&mut s, id, f, term, cfg, seed, &mut rng)
        }
        BaselineKind::CtpbFixed => {
            let mut s = Fixed {
                f: 0.5,
                cr: 0.9,
                strategy: || Strategy::CurrentToPbest,
            };
            run_with(&mut s, id, f, term, cfg, seed, &mut rng)
        }
        BaselineKind::RandomParams => {
            let mut s = Uniform {
                f_min: cfg.policy.f_min,
            };
            run_with(&mut s, id, f, term, cfg, seed, &mut rng)
        }
    }
}

pub fn run_algorithm<O: Objective + ?Sized>(
    alg: AlgorithmId,
    weights: Option<&ControllerWeights>,
    f: &O,
    term: &Termination,
    cfg: &DeConfig,
    seed: u64,
) -> Result<RunResult> {
    match alg {
        AlgorithmId::Lde => {
            let w = weights.ok_or_else(|| invalid("the learned DE needs controller weights"))?;
            run_lde(w, f, term, cfg, seed)
        }
        AlgorithmId::Baseline(kind) => run_baseline(kind, f, term, cfg, seed),
    }
}

/// Seed of run `run` on function `function`. Algorithms share it, so every
/// algorithm starts a given run from the same initial population.
pub fn run_seed(master: u64, function: usize, run: usize) -> u64 {
    rng::derive_seed(master, Purpose::Run, &[function as u64, run as u64])
}

/// Every `(algorithm, function, run)` combination, in that nesting order.
///
/// Results are computed in parallel batches and handed to `sink` strictly
/// in order as each batch completes, so a failure leaves a valid prefix.
#[allow(clippy::too_many_arguments)]
pub fn batch_experiment<O, S>(
    algorithms: &[AlgorithmId],
    weights: Option<&ControllerWeights>,
    functions: &[O],
    runs: usize,
    term: &Termination,
    cfg: &DeConfig,
    master_seed: u64,
    mut sink: S,
) -> Result<Vec<RunResult>>
where
    O: Objective,
    S: FnMut(&RunResult) -> Result<()>,
{
    if runs == 0 {
        return Err(invalid("runs must be at least 1"));
    }
    if algorithms.contains(&AlgorithmId::Lde) {
        let w = weights.ok_or_else(|| invalid("the learned DE needs controller weights"))?;
        check_binding(w, cfg)?;
    }
    let tasks: Vec<(AlgorithmId, usize, usize)> = algorithms
        .iter()
        .flat_map(|&a| (0..functions.len()).flat_map(move |k| (0..runs).map(move |r| (a, k, r))))
        .collect();
    let batch = (par::workers() * 2).max(1);
    let mut results = Vec::with_capacity(tasks.len());
    for chunk in tasks.chunks(batch) {
        let done = par::map(chunk.to_vec(), |(a, k, r)| {
            run_algorithm(
                a,
                weights,
                &functions[k],
                term,
                cfg,
                run_seed(master_seed, k, r),
            )
        });
        for res in done {
            let res = res?;
            sink(&res)?;
            results.push(res);
        }
    }
    Ok(results)
}

pub const RESULTS_HEADER: [&str; 5] = [
    "algorithm_id",
    "function_id",
    "seed",
    "best_error",
    "evals_used",
];

fn result_record(r: &RunResult) -> [String; 5] {
    [
        r.algorithm_id.clone(),
        r.function_id.clone(),
        r.seed.to_string(),
        r.best_error.to_string(),
        r.evals_used.to_string(),
    ]
}

/// Streams a results CSV, flushing after every row so an interrupted batch
/// leaves a readable prefix.
pub struct ResultsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(RESULTS_HEADER)?;
        inner.flush()?;
        Ok(ResultsWriter { inner })
    }

    pub fn push(&mut self, r: &RunResult) -> Result<()> {
        self.inner.write_record(result_record(r))?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_results<W: Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = ResultsWriter::new(out)?;
    results.iter().try_for_each(|r| w.push(r))
}

/// One row of a results CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub algorithm_id: String,
    pub function_id: String,
    pub seed: u64,
    pub best_error: f64,
    pub evals_used: usize,
}

pub fn read_results<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(LdeError::Parse(format!(
            "unexpected results header {headers:?}"
        )));
    }
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| -> Result<&str> {
                rec.get(i)
                    .ok_or_else(|| LdeError::Parse("short results row".into()))
            };
            let bad = |what: &str| LdeError::Parse(format!("bad {what} in results row"));
            Ok(ResultRow {
                algorithm_id: num(0)?.to_string(),
                function_id: num(1)?.to_string(),
                seed: num(2)?.parse().map_err(|_| bad("seed"))?,
                best_error: num(3)?.parse().map_err(|_| bad("best_error"))?,
                evals_used: num(4)?.parse().map_err(|_| bad("evals_used"))?,
            })
        })
        .collect()
}

pub fn write_trace<W: Write>(out: W, r: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["evals", "best_error"])?;
    for (e, b) in &r.error_trace {
        w.write_record([e.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_param_trace<W: Write>(out: W, rows: &[ParamTraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["generation", "tercile", "mean_F", "mean_CR"])?;
    for p in rows {
        w.write_record([
            p.generation.to_string(),
            p.tercile.to_string(),
            p.mean_f.to_string(),
            p.mean_cr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchfn::{Counting, Family, FunctionInstance};
    use crate::neural::Dims;

    fn sphere(dim: usize) -> FunctionInstance {
        FunctionInstance::new("sphere", Family::Sphere, vec![1.5; dim], None, 10.0).unwrap()
    }

    fn controller(cfg: &DeConfig) -> ControllerWeights {
        ControllerWeights::init(Dims::for_population(8, cfg.pop_size, cfg.bins).unwrap(), 3)
    }

    #[test]
    fn budget_of_one_population_evaluates_once() {
        let cfg = DeConfig::default();
        let f = sphere(2);
        let term = Termination {
            max_evals: cfg.pop_size,
            error_tol: 1e-8,
        };
        let w = controller(&cfg);
        let r = run_lde(&w, &f, &term, &cfg, 4).unwrap();
        let init =
            Population::random(&f, cfg.pop_size, &mut rng::Stream::seed_from_u64(4)).unwrap();
        assert_eq!(r.evals_used, cfg.pop_size);
        assert_eq!(r.best_error, f.error_value(init.best_fitness()).unwrap());
        for alg in AlgorithmId::ALL {
            let r = run_algorithm(alg, Some(&w), &f, &term, &cfg, 4).unwrap();
            assert_eq!(r.evals_used, cfg.pop_size);
            assert_eq!(r.best_error, f.error_value(init.best_fitness()).unwrap());
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = DeConfig {
            record_params: true,
            ..DeConfig::default()
        };
        let f = sphere(3);
        let term = Termination {
            max_evals: 2000,
            error_tol: 1e-8,
        };
        let w = controller(&cfg);
        for alg in AlgorithmId::ALL {
            let a = run_algorithm(alg, Some(&w), &f, &term, &cfg, 11).unwrap();
            let b = run_algorithm(alg, Some(&w), &f, &term, &cfg, 11).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn traces_are_monotone_and_within_budget() {
        let cfg = DeConfig::default();
        let f = Counting::new(sphere(4));
        let term = Termination {
            max_evals: 3010,
            error_tol: 0.0,
        };
        let w = controller(&cfg);
        for alg in AlgorithmId::ALL {
            let before = f.count();
            let r = run_algorithm(alg, Some(&w), &f, &term, &cfg, 2).unwrap();
            assert_eq!((f.count() - before) as usize, r.evals_used);
            assert!(r.evals_used <= term.max_evals);
            assert!(r
                .error_trace
                .windows(2)
                .all(|w| w[1].1 <= w[0].1 && w[1].0 > w[0].0));
        }
    }

    #[test]
    fn population_binding_is_enforced() {
        let cfg = DeConfig::default();
        let w = ControllerWeights::init(Dims::for_population(8, 10, cfg.bins).unwrap(), 1);
        let err = run_lde(&w, &sphere(2), &Termination::standard(2), &cfg, 1).unwrap_err();
        assert!(matches!(err, LdeError::InvalidArgument(_)));
    }

    #[test]
    fn rand1_indices_distinct_and_fixed_point() {
        let pop = Population::new(vec![vec![2.0, 2.0]; 5], vec![0.0; 5]).unwrap();
        let mut rng = rng::Stream::seed_from_u64(1);
        let v = mutate_rand1(&pop, &ParamSheet::uniform(5, 0.5, 0.8), &mut rng).unwrap();
        assert_eq!(v, pop.members);
    }

    #[test]
    fn random_params_stay_in_range() {
        let mut s = Uniform { f_min: 0.2 };
        let pop = Population::new(vec![vec![0.0]; 50], vec![0.0; 50]).unwrap();
        let mut rng = rng::Stream::seed_from_u64(1);
        for _ in 0..20 {
            let p = s.next(&pop, &mut rng).unwrap();
            assert!(p.f.iter().all(|&f| f > 0.2 && f <= 1.0));
            assert!(p.cr.iter().all(|&c| (0.0..1.0).contains(&c)));
        }
    }

    #[test]
    fn tercile_split_covers_population() {
        let pop = Population::new(
            (0..6).map(|i| vec![i as f64]).collect(),
            vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0],
        )
        .unwrap();
        let params = ParamSheet {
            f: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            cr: vec![1.0; 6],
        };
        let rows = tercile_means(&pop, &params, 7);
        assert_eq!(rows.len(), 3);
        assert!((rows[0].mean_f - 0.55).abs() < 1e-12);
        assert!((rows[2].mean_f - 0.15).abs() < 1e-12);
    }

    #[test]
    fn batch_order_and_seeds() {
        let cfg = DeConfig::default();
        let fns = vec![sphere(2)];
        let term = Termination {
            max_evals: 200,
            error_tol: 1e-8,
        };
        let algs = [AlgorithmId::Baseline(BaselineKind::CtpbFixed)];
        let res = batch_experiment(&algs, None, &fns, 11, &term, &cfg, 5, |_| Ok(())).unwrap();
        assert_eq!(res.len(), 11);
        let mut seeds: Vec<u64> = res.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 11);
        let one = batch_experiment(&algs, None, &fns, 1, &term, &cfg, 5, |_| Ok(())).unwrap();
        assert_eq!(one.len(), 1);
        assert!(
            batch_experiment(&[AlgorithmId::Lde], None, &fns, 1, &term, &cfg, 5, |_| Ok(
                ()
            ))
            .is_err()
        );
    }

    #[test]
    fn results_csv_round_trip() {
        let cfg = DeConfig::default();
        let term = Termination {
            max_evals: 100,
            error_tol: 1e-8,
        };
        let r = run_baseline(BaselineKind::RandomParams, &sphere(2), &term, &cfg, 1).unwrap();
        let mut buf = Vec::new();
        write_results(&mut buf, std::slice::from_ref(&r)).unwrap();
        let rows = read_results(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].best_error, r.best_error);
        assert_eq!(rows[0].algorithm_id, "random_params");
    }
}
