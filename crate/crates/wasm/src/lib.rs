//! Browser bindings: benchmark landscapes, convergence of the learned DE
//! against the baselines, and the one-step policy-gradient bandit.

use lde_core::benchfn::{make_suite, Family, FunctionInstance};
use lde_core::neural::{ControllerWeights, Dims};
use lde_core::policy::scalar_bandit;
use lde_core::runner::{run_algorithm, AlgorithmId, DeConfig, RunResult, Termination};
use lde_core::weightfile::WeightFile;
use lde_core::LdeError;
use wasm_bindgen::prelude::*;

fn js(e: LdeError) -> JsError {
    JsError::new(&e.to_string())
}

fn instance(family: &str, dim: usize, seed: u32) -> Result<FunctionInstance, JsError> {
    let fam: Family = family.parse().map_err(js)?;
    let k = Family::CYCLE.iter().position(|&f| f == fam).unwrap_or(0);
    let (train, _) = make_suite(u64::from(seed), dim, Family::CYCLE.len(), 1).map_err(js)?;
    Ok(train[k].clone())
}

#[wasm_bindgen]
pub fn families() -> Vec<String> {
    Family::CYCLE.iter().map(|f| f.name().to_string()).collect()
}

#[wasm_bindgen]
pub fn algorithms() -> Vec<String> {
    AlgorithmId::ALL
        .iter()
        .map(|a| a.name().to_string())
        .collect()
}

/// `log10(1 + error)` of a shifted, rotated 2-D instance on a
/// `resolution × resolution` grid over the search box, row-major with the
/// top row at the upper bound of the second coordinate. The last two entries
/// are the optimum's grid coordinates.
#[wasm_bindgen]
pub fn landscape(family: &str, seed: u32, resolution: usize) -> Result<Vec<f64>, JsError> {
    if resolution < 2 {
        return Err(JsError::new("resolution must be at least 2"));
    }
    let f = instance(family, 2, seed)?;
    let (lo, hi) = f.bounds[0];
    let step = (hi - lo) / (resolution - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution + 2);
    for row in 0..resolution {
        let y = hi - row as f64 * step;
        for col in 0..resolution {
            let x = lo + col as f64 * step;
            let err = f
                .error_value(f.evaluate(&[x, y]).map_err(js)?)
                .map_err(js)?;
            out.push((1.0 + err).log10());
        }
    }
    out.push((f.shift[0] - lo) / step);
    out.push((hi - f.shift[1]) / step);
    Ok(out)
}

/// μ after each update of the scalar bandit.
#[wasm_bindgen]
pub fn bandit(seed: u32, steps: usize, alpha: f64, sigma: f64, target: f64) -> Vec<f64> {
    scalar_bandit(u64::from(seed), steps, alpha, sigma, target)
}

/// Controller weights used by the learned DE in [`Controller::convergence`].
#[wasm_bindgen]
pub struct Controller {
    weights: ControllerWeights,
    bins: usize,
    label: String,
}

#[wasm_bindgen]
impl Controller {
    /// Seeded initial weights for `N = 20`, `b = 5`, `H = 32`.
    pub fn untrained(seed: u32) -> Result<Controller, JsError> {
        let dims = Dims::for_population(32, 20, 5).map_err(js)?;
        Ok(Controller {
            weights: ControllerWeights::init(dims, u64::from(seed)),
            bins: 5,
            label: format!("untrained (seed {seed})"),
        })
    }

    /// Parses the bytes of a `weights.lde` file written by `lde train`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Controller, JsError> {
        let wf = WeightFile::from_bytes(bytes).map_err(js)?;
        let label = match wf.metadata("epochs_done") {
            Some(e) => format!("trained, {e} epochs"),
            None => "trained".to_string(),
        };
        Ok(Controller {
            weights: wf.weights,
            bins: wf.bins,
            label,
        })
    }

    #[wasm_bindgen(getter)]
    pub fn label(&self) -> String {
        self.label.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn population(&self) -> usize {
        self.weights.dims().pop
    }

    /// Best error of every algorithm (in [`algorithms`] order) sampled at
    /// `points` evenly spaced evaluation counts up to `budget`; `points`
    /// values per algorithm, concatenated.
    pub fn convergence(
        &self,
        family: &str,
        dim: usize,
        seed: u32,
        budget: usize,
        points: usize,
    ) -> Result<Vec<f64>, JsError> {
        if points == 0 {
            return Err(JsError::new("points must be positive"));
        }
        let f = instance(family, dim, seed)?;
        let cfg = DeConfig {
            pop_size: self.weights.dims().pop,
            bins: self.bins,
            ..DeConfig::default()
        };
        let term = Termination {
            max_evals: budget,
            error_tol: 1e-8,
        };
        let mut out = Vec::with_capacity(AlgorithmId::ALL.len() * points);
        for alg in AlgorithmId::ALL {
            let r = run_algorithm(alg, Some(&self.weights), &f, &term, &cfg, u64::from(seed))
                .map_err(js)?;
            out.extend(sample_trace(&r, budget, points));
        }
        Ok(out)
    }
}

/// Step-function lookup of the best error at evenly spaced budgets.
fn sample_trace(r: &RunResult, budget: usize, points: usize) -> Vec<f64> {
    (1..=points)
        .map(|k| {
            let at = budget * k / points;
            r.error_trace
                .iter()
                .take_while(|(e, _)| *e <= at)
                .last()
                .or(r.error_trace.first())
                .map_or(f64::NAN, |&(_, err)| err)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landscape_minimum_sits_at_the_shift() {
        let res = 41;
        let grid = landscape("sphere", 3, res).unwrap();
        assert_eq!(grid.len(), res * res + 2);
        let (cx, cy) = (grid[res * res], grid[res * res + 1]);
        let argmin = (0..res * res)
            .min_by(|&a, &b| grid[a].total_cmp(&grid[b]))
            .unwrap();
        let (row, col) = ((argmin / res) as f64, (argmin % res) as f64);
        assert!((col - cx).abs() <= 1.0 && (row - cy).abs() <= 1.0);
    }

    #[test]
    fn convergence_is_monotone_per_algorithm() {
        let c = Controller::untrained(1).unwrap();
        let points = 10;
        let v = c.convergence("rastrigin", 4, 2, 2000, points).unwrap();
        assert_eq!(v.len(), AlgorithmId::ALL.len() * points);
        for curve in v.chunks(points) {
            assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn loads_weight_files() {
        let dims = Dims::for_population(4, 6, 2).unwrap();
        let wf = WeightFile {
            weights: ControllerWeights::init(dims, 5),
            bins: 2,
            seed: 5,
            training_metadata: "epochs_done=3".into(),
        };
        let c = Controller::from_bytes(&wf.to_bytes()).unwrap();
        assert_eq!(c.population(), 6);
        assert_eq!(c.label(), "trained, 3 epochs");
        assert!(c.convergence("sphere", 2, 0, 300, 3).is_ok());
    }
}
