//! LSTM controller with two sigmoid heads, and its reverse-mode gradient
//! through time.
//!
//! One step maps input `x` (length `D`) and state `(h, c)` to
//!
//! ```text
//! f = σ(W_f·[h, x] + b_f)     i = σ(W_i·[h, x] + b_i)
//! g = tanh(W_c·[h, x] + b_c)  o = σ(W_o·[h, x] + b_o)
//! c' = f ⊙ c + i ⊙ g          h' = o ⊙ tanh(c')
//! μ_F = σ(h'ᵀ W_F + b_F)      μ_CR = σ(h'ᵀ W_C + b_C)
//! ```
//!
//! All parameters live in one flat buffer so the optimizer, serializer and
//! finite-difference checks can treat them uniformly. The fixed order is
//! `W_f W_i W_c W_o b_f b_i b_c b_o W_F b_F W_C b_C`; gate matrices are
//! `H × (H + D)` with the `h` columns first, head matrices are `H × N`, all
//! row-major.

use std::borrow::Borrow;
use std::ops::Range;

use rand::Rng;

use crate::error::{invalid, LdeError, Result};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dims {
    pub hidden: usize,
    pub input: usize,
    pub pop: usize,
}

impl Dims {
    pub fn new(hidden: usize, input: usize, pop: usize) -> Result<Self> {
        if hidden == 0 || input == 0 || pop == 0 {
            return Err(invalid("controller dimensions must be positive"));
        }
        Ok(Dims { hidden, input, pop })
    }

    /// Input width for a population of `pop` and `bins` histogram bins.
    pub fn for_population(hidden: usize, pop: usize, bins: usize) -> Result<Self> {
        Dims::new(hidden, pop + 2 * bins, pop)
    }

    fn gate_len(&self) -> usize {
        self.hidden * (self.hidden + self.input)
    }

    fn head_len(&self) -> usize {
        self.hidden * self.pop
    }

    pub fn param_count(&self) -> usize {
        4 * self.gate_len() + 4 * self.hidden + 2 * self.head_len() + 2 * self.pop
    }

    /// Multiply-adds in one forward step.
    pub fn forward_cost(&self) -> usize {
        4 * self.gate_len() + 2 * self.head_len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    GateF,
    GateI,
    GateC,
    GateO,
    BiasF,
    BiasI,
    BiasC,
    BiasO,
    HeadF,
    HeadFBias,
    HeadCr,
    HeadCrBias,
}

impl Block {
    pub const ORDER: [Block; 12] = [
        Block::GateF,
        Block::GateI,
        Block::GateC,
        Block::GateO,
        Block::BiasF,
        Block::BiasI,
        Block::BiasC,
        Block::BiasO,
        Block::HeadF,
        Block::HeadFBias,
        Block::HeadCr,
        Block::HeadCrBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::GateF => "W_f",
            Block::GateI => "W_i",
            Block::GateC => "W_c",
            Block::GateO => "W_o",
            Block::BiasF => "b_f",
            Block::BiasI => "b_i",
            Block::BiasC => "b_c",
            Block::BiasO => "b_o",
            Block::HeadF => "W_F",
            Block::HeadFBias => "b_F",
            Block::HeadCr => "W_C",
            Block::HeadCrBias => "b_C",
        }
    }

    fn len(self, d: &Dims) -> usize {
        match self {
            Block::GateF | Block::GateI | Block::GateC | Block::GateO => d.gate_len(),
            Block::BiasF | Block::BiasI | Block::BiasC | Block::BiasO => d.hidden,
            Block::HeadF | Block::HeadCr => d.head_len(),
            Block::HeadFBias | Block::HeadCrBias => d.pop,
        }
    }

    pub fn range(self, d: &Dims) -> Range<usize> {
        let start: usize = Block::ORDER
            .iter()
            .take_while(|&&b| b != self)
            .map(|b| b.len(d))
            .sum();
        start..start + self.len(d)
    }
}

/// Controller parameters; the same shape doubles as a gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerWeights {
    dims: Dims,
    data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl ControllerState {
    pub fn zeros(hidden: usize) -> Self {
        ControllerState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Intermediates of one forward step, enough to replay it backwards.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTape {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    /// `[μ_F ‖ μ_CR]`, length `2N`.
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// `[μ_F ‖ μ_CR]`, length `2N`.
    pub mu: Vec<f64>,
    pub state: ControllerState,
    pub tape: StepTape,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ControllerWeights {
    pub fn zeros(dims: Dims) -> Self {
        ControllerWeights {
            dims,
            data: vec![0.0; dims.param_count()],
        }
    }

    pub fn from_flat(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                dims.param_count(),
                data.len()
            )));
        }
        Ok(ControllerWeights { dims, data })
    }

    /// Uniform in `[−1/√H, 1/√H]`, deterministic per seed.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Purpose::Init, &[]);
        let bound = 1.0 / (dims.hidden as f64).sqrt();
        let data = (0..dims.param_count())
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        ControllerWeights { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.data[b.range(&self.dims)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let r = b.range(&self.dims);
        &mut self.data[r]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_same_shape(&self, other: &ControllerWeights) -> Result<()> {
        if self.dims != other.dims {
            return Err(invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &ControllerWeights) -> Result<()> {
        self.check_same_shape(other)?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Gradient ascent step `w + α·grad`.
    pub fn sgd_ascent(&self, grad: &ControllerWeights, alpha: f64) -> Result<ControllerWeights> {
        self.check_same_shape(grad)?;
        let data = self
            .data
            .iter()
            .zip(&grad.data)
            .map(|(w, g)| w + alpha * g)
            .collect();
        Ok(ControllerWeights {
            dims: self.dims,
            data,
        })
    }

    pub fn forward_step(&self, x: &[f64], st: &ControllerState) -> Result<StepOutput> {
        let d = self.dims;
        let hn = d.hidden;
        if x.len() != d.input || st.h.len() != hn || st.c.len() != hn {
            return Err(invalid(format!(
                "forward_step: input {} / state {} do not match {:?}",
                x.len(),
                st.h.len(),
                d
            )));
        }
        let mut hx = Vec::with_capacity(hn + d.input);
        hx.extend_from_slice(&st.h);
        hx.extend_from_slice(x);

        let gate = |wb: Block, bb: Block, act: fn(f64) -> f64| -> Vec<f64> {
            let w = self.block(wb);
            self.block(bb)
                .iter()
                .zip(w.chunks_exact(hn + d.input))
                .map(|(b, row)| act(b + dot(row, &hx)))
                .collect()
        };
        let f = gate(Block::GateF, Block::BiasF, sigmoid);
        let i = gate(Block::GateI, Block::BiasI, sigmoid);
        let g = gate(Block::GateC, Block::BiasC, f64::tanh);
        let o = gate(Block::GateO, Block::BiasO, sigmoid);

        let c: Vec<f64> = (0..hn).map(|k| f[k] * st.c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();

        let mut mu = Vec::with_capacity(2 * d.pop);
        for (wb, bb) in [
            (Block::HeadF, Block::HeadFBias),
            (Block::HeadCr, Block::HeadCrBias),
        ] {
            let mut z = self.block(bb).to_vec();
            for (hk, row) in h.iter().zip(self.block(wb).chunks_exact(d.pop)) {
                for (zj, wj) in z.iter_mut().zip(row) {
                    *zj += hk * wj;
                }
            }
            mu.extend(z.into_iter().map(sigmoid));
        }
        if !mu.iter().chain(&c).all(|v| v.is_finite()) {
            return Err(LdeError::NumericFailure(
                "controller produced a non-finite output".into(),
            ));
        }
        let state = ControllerState {
            h: h.clone(),
            c: c.clone(),
        };
        let tape = StepTape {
            x: x.to_vec(),
            h_prev: st.h.clone(),
            c_prev: st.c.clone(),
            f,
            i,
            g,
            o,
            c,
            tanh_c,
            h,
            mu: mu.clone(),
        };
        Ok(StepOutput { mu, state, tape })
    }

    /// Gradient of `Σ_t ⟨out_grads[t], μ_t⟩` with respect to every parameter,
    /// propagated through `h` and `c` across all recorded steps.
    pub fn backward_through_time<T: Borrow<StepTape>>(
        &self,
        tapes: &[T],
        out_grads: &[Vec<f64>],
    ) -> Result<ControllerWeights> {
        let d = self.dims;
        let hn = d.hidden;
        let width = hn + d.input;
        if tapes.len() != out_grads.len() {
            return Err(invalid(format!(
                "{} tapes but {} output gradients",
                tapes.len(),
                out_grads.len()
            )));
        }
        if let Some(bad) = out_grads.iter().find(|g| g.len() != 2 * d.pop) {
            return Err(invalid(format!(
                "output gradient of length {}, expected {}",
                bad.len(),
                2 * d.pop
            )));
        }
        let mut grad = ControllerWeights::zeros(d);
        let mut dh_next = vec![0.0; hn];
        let mut dc_next = vec![0.0; hn];
        let mut dz_head = vec![0.0; 2 * d.pop];
        let mut hx = vec![0.0; width];
        let mut dz = [vec![0.0; hn], vec![0.0; hn], vec![0.0; hn], vec![0.0; hn]];

        for (tape, og) in tapes.iter().zip(out_grads).rev() {
            let tape: &StepTape = tape.borrow();
            if tape.x.len() != d.input || tape.h.len() != hn {
                return Err(invalid("tape does not match controller dims"));
            }
            // Heads.
            for ((dzj, &m), &gj) in dz_head.iter_mut().zip(&tape.mu).zip(og) {
                *dzj = gj * m * (1.0 - m);
            }
            let mut dh = dh_next.clone();
            for (half, (wb, bb)) in [
                (Block::HeadF, Block::HeadFBias),
                (Block::HeadCr, Block::HeadCrBias),
            ]
            .into_iter()
            .enumerate()
            {
                let dzh = &dz_head[half * d.pop..(half + 1) * d.pop];
                grad.block_mut(bb)
                    .iter_mut()
                    .zip(dzh)
                    .for_each(|(a, b)| *a += b);
                let w = self.block(wb);
                let gw = grad.block_mut(wb);
                for k in 0..hn {
                    let row = k * d.pop..(k + 1) * d.pop;
                    let hk = tape.h[k];
                    for (gwj, dzj) in gw[row.clone()].iter_mut().zip(dzh) {
                        *gwj += hk * dzj;
                    }
                    dh[k] += dot(&w[row], dzh);
                }
            }
            // Cell.
            for k in 0..hn {
                let o = tape.o[k];
                let tc = tape.tanh_c[k];
                let dc = dh[k] * o * (1.0 - tc * tc) + dc_next[k];
                let (f, i, g) = (tape.f[k], tape.i[k], tape.g[k]);
                dz[0][k] = dc * tape.c_prev[k] * f * (1.0 - f);
                dz[1][k] = dc * g * i * (1.0 - i);
                dz[2][k] = dc * i * (1.0 - g * g);
                dz[3][k] = dh[k] * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            hx[..hn].copy_from_slice(&tape.h_prev);
            hx[hn..].copy_from_slice(&tape.x);
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            let gates = [
                (Block::GateF, Block::BiasF),
                (Block::GateI, Block::BiasI),
                (Block::GateC, Block::BiasC),
                (Block::GateO, Block::BiasO),
            ];
            for (dzg, (wb, bb)) in dz.iter().zip(gates) {
                grad.block_mut(bb)
                    .iter_mut()
                    .zip(dzg)
                    .for_each(|(a, b)| *a += b);
                let w = self.block(wb);
                let gw = grad.block_mut(wb);
                for k in 0..hn {
                    let dzk = dzg[k];
                    if dzk == 0.0 {
                        continue;
                    }
                    let row = k * width..(k + 1) * width;
                    for (gwj, v) in gw[row.clone()].iter_mut().zip(&hx) {
                        *gwj += dzk * v;
                    }
                    for (dhj, wj) in dh_next.iter_mut().zip(&w[row.start..row.start + hn]) {
                        *dhj += dzk * wj;
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Runs the controller over a sequence of inputs from the zero state.
    pub fn rollout(&self, inputs: &[Vec<f64>]) -> Result<Vec<StepOutput>> {
        let mut st = ControllerState::zeros(self.dims.hidden);
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            let step = self.forward_step(x, &st)?;
            st = step.state.clone();
            out.push(step);
        }
        Ok(out)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of comparing analytic gradients with central finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_block: &'static str,
    pub worst_index: usize,
    pub params_checked: usize,
}

/// Absolute floor of the relative-error denominator. Central differences at
/// `ε = 1e-6` carry roughly `1e-10` of rounding noise, so derivatives below
/// this floor are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// Relative error used by gradient checks.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Checks [`ControllerWeights::backward_through_time`] on a seeded random
/// rollout against central differences of `Σ_t ⟨g_t, μ_t⟩` over every
/// parameter. `corrupt` perturbs the analytic gradient, for exercising the
/// failure path.
pub fn gradient_check(
    dims: Dims,
    steps: usize,
    seed: u64,
    eps: f64,
    corrupt: bool,
) -> Result<GradCheck> {
    let mut rng = rng::stream(seed, Purpose::Test, &[dims.hidden as u64, steps as u64]);
    let mut w = ControllerWeights::init(dims, seed);
    // Spread the weights a little wider than init so gates leave the linear regime.
    w.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
    let inputs: Vec<Vec<f64>> = (0..steps)
        .map(|_| {
            (0..dims.input)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let weights_out: Vec<Vec<f64>> = (0..steps)
        .map(|_| {
            (0..2 * dims.pop)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();

    let objective = |w: &ControllerWeights| -> Result<f64> {
        Ok(w.rollout(&inputs)?
            .iter()
            .zip(&weights_out)
            .map(|(s, g)| dot(&s.mu, g))
            .sum())
    };
    let tapes: Vec<StepTape> = w.rollout(&inputs)?.into_iter().map(|s| s.tape).collect();
    let mut analytic = w.backward_through_time(&tapes, &weights_out)?;
    if corrupt {
        analytic.as_mut_slice().iter_mut().for_each(|v| *v *= 1.01);
    }

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_block: "",
        worst_index: 0,
        params_checked: 0,
    };
    for block in Block::ORDER {
        for idx in block.range(&dims) {
            let orig = w.data[idx];
            w.data[idx] = orig + eps;
            let up = objective(&w)?;
            w.data[idx] = orig - eps;
            let down = objective(&w)?;
            w.data[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(analytic.data[idx], numeric);
            report.params_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_block = block.name();
                report.worst_index = idx - block.range(&dims).start;
            }
        }
    }
    Ok(report)
}
