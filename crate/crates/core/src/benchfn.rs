//! Shifted and rotated classic benchmark functions.
//!
//! Each instance evaluates `base(s · R · (x − shift)) + f_star`, where `s` is
//! a per-family input scale that maps the default `[-100, 100]` box onto the
//! family's customary search range.

use std::f64::consts::{E, PI};
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, LdeError, Result};
use crate::rng::{self, Purpose};

pub const DEFAULT_BOUND: f64 = 100.0;
const SHIFT_RANGE: f64 = 80.0;
const ORTHO_TOL: f64 = 1e-9;
const WEIERSTRASS_TERMS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Sphere,
    Ellipsoid,
    Rosenbrock,
    Rastrigin,
    Ackley,
    Griewank,
    Schwefel12,
    WeierstrassLite,
}

impl Family {
    /// Suite cycle order; alternates unimodal and multimodal members.
    pub const CYCLE: [Family; 8] = [
        Family::Sphere,
        Family::Rastrigin,
        Family::Ellipsoid,
        Family::Ackley,
        Family::Schwefel12,
        Family::Griewank,
        Family::Rosenbrock,
        Family::WeierstrassLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sphere => "sphere",
            Family::Ellipsoid => "ellipsoid",
            Family::Rosenbrock => "rosenbrock",
            Family::Rastrigin => "rastrigin",
            Family::Ackley => "ackley",
            Family::Griewank => "griewank",
            Family::Schwefel12 => "schwefel12",
            Family::WeierstrassLite => "weierstrass-lite",
        }
    }

    pub fn is_unimodal(self) -> bool {
        matches!(
            self,
            Family::Sphere | Family::Ellipsoid | Family::Schwefel12
        )
    }

    fn input_scale(self) -> f64 {
        match self {
            Family::Rastrigin => 5.12 / 100.0,
            Family::Griewank => 600.0 / 100.0,
            Family::Rosenbrock => 2.048 / 100.0,
            Family::WeierstrassLite => 0.5 / 100.0,
            _ => 1.0,
        }
    }

    /// Raw family value at `z`; minimum 0 at `z = 0`.
    fn value(self, z: &[f64]) -> f64 {
        let n = z.len();
        match self {
            Family::Sphere => z.iter().map(|v| v * v).sum(),
            Family::Ellipsoid => {
                if n == 1 {
                    return z[0] * z[0];
                }
                z.iter()
                    .enumerate()
                    .map(|(i, v)| 10f64.powf(6.0 * i as f64 / (n - 1) as f64) * v * v)
                    .sum()
            }
            Family::Rosenbrock => z
                .windows(2)
                .map(|w| {
                    let (a, b) = (w[0] + 1.0, w[1] + 1.0);
                    100.0 * (a * a - b).powi(2) + (a - 1.0).powi(2)
                })
                .sum(),
            Family::Rastrigin => z
                .iter()
                .map(|v| v * v - 10.0 * (2.0 * PI * v).cos() + 10.0)
                .sum(),
            Family::Ackley => {
                let inv = 1.0 / n as f64;
                let sq = z.iter().map(|v| v * v).sum::<f64>() * inv;
                let cs = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() * inv;
                -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
            }
            Family::Griewank => {
                let sum = z.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let prod = z
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos())
                    .product::<f64>();
                sum - prod + 1.0
            }
            Family::Schwefel12 => {
                let mut partial = 0.0;
                let mut total = 0.0;
                for v in z {
                    partial += v;
                    total += partial * partial;
                }
                total
            }
            Family::WeierstrassLite => {
                let (a, b) = (0.5f64, 3.0f64);
                let mut offset = 0.0;
                let mut total = 0.0;
                let mut ak = 1.0;
                let mut bk = 1.0;
                for _ in 0..WEIERSTRASS_TERMS {
                    offset += ak * (PI * bk).cos();
                    total += z
                        .iter()
                        .map(|v| ak * (2.0 * PI * bk * (v + 0.5)).cos())
                        .sum::<f64>();
                    ak *= a;
                    bk *= b;
                }
                total - n as f64 * offset
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = LdeError;

    fn from_str(s: &str) -> Result<Self> {
        Family::CYCLE
            .into_iter()
            .find(|fam| fam.name() == s)
            .ok_or_else(|| LdeError::Parse(format!("unknown function family `{s}`")))
    }
}

/// One objective: a family with its shift, optional rotation, box and optimum value.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionInstance {
    pub id: String,
    pub dim: usize,
    pub base: Family,
    pub shift: Vec<f64>,
    /// Row-major `dim × dim` orthogonal matrix; `None` means identity.
    pub rotation: Option<Vec<f64>>,
    pub bounds: Vec<(f64, f64)>,
    pub f_star: f64,
}

impl FunctionInstance {
    /// Builds and validates an instance on the default box.
    pub fn new(
        id: impl Into<String>,
        base: Family,
        shift: Vec<f64>,
        rotation: Option<Vec<f64>>,
        f_star: f64,
    ) -> Result<Self> {
        let dim = shift.len();
        let inst = FunctionInstance {
            id: id.into(),
            dim,
            base,
            shift,
            rotation,
            bounds: vec![(-DEFAULT_BOUND, DEFAULT_BOUND); dim],
            f_star,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("function dimension must be positive"));
        }
        if self.id.is_empty() || self.id.contains(char::is_whitespace) {
            return Err(invalid(format!("bad instance id `{}`", self.id)));
        }
        if self.shift.len() != self.dim || self.bounds.len() != self.dim {
            return Err(invalid("shift/bounds length differs from dim"));
        }
        if !self.f_star.is_finite() {
            return Err(invalid("f_star must be finite"));
        }
        for (j, (&s, &(lo, hi))) in self.shift.iter().zip(&self.bounds).enumerate() {
            if !(lo < s && s < hi) {
                return Err(invalid(format!("shift[{j}] = {s} outside ({lo}, {hi})")));
            }
        }
        if let Some(r) = &self.rotation {
            if r.len() != self.dim * self.dim {
                return Err(invalid("rotation must be dim × dim"));
            }
            let dev = orthogonality_defect(r, self.dim);
            if dev > ORTHO_TOL {
                return Err(invalid(format!(
                    "rotation not orthogonal (|RᵀR − I| = {dev:e})"
                )));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(invalid(format!(
                "point has length {}, function `{}` expects {}",
                x.len(),
                self.id,
                self.dim
            )));
        }
        let n = self.dim;
        let scale = self.base.input_scale();
        let diff: Vec<f64> = x.iter().zip(&self.shift).map(|(a, s)| a - s).collect();
        let z: Vec<f64> = match &self.rotation {
            None => diff.iter().map(|d| scale * d).collect(),
            Some(r) => r
                .chunks_exact(n)
                .map(|row| scale * row.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>())
                .collect(),
        };
        Ok(self.base.value(&z) + self.f_star)
    }

    /// Function error value `f_found − f_star`, clamping tiny negative round-off.
    pub fn error_value(&self, f_found: f64) -> Result<f64> {
        error_value(self.f_star, f_found)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.id, self.dim, self.base, self.f_star
        );
        let _ = writeln!(out, "{}", join(&self.shift));
        if let Some(r) = &self.rotation {
            for row in r.chunks_exact(self.dim) {
                let _ = writeln!(out, "{}", join(row));
            }
        }
        out
    }

    /// Parses the plain-text record written by [`to_text`](Self::to_text).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| LdeError::Parse("empty instance record".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [id, dim, base, f_star] = fields[..] else {
            return Err(LdeError::Parse(format!("bad header `{header}`")));
        };
        let dim: usize = dim
            .parse()
            .map_err(|_| LdeError::Parse(format!("bad dimension `{dim}`")))?;
        let base: Family = base.parse()?;
        let f_star = parse_f64(f_star)?;
        let shift = parse_row(
            lines
                .next()
                .ok_or_else(|| LdeError::Parse("missing shift line".into()))?,
            dim,
        )?;
        let rows: Vec<&str> = lines.collect();
        let rotation = match rows.len() {
            0 => None,
            k if k == dim => {
                let mut r = Vec::with_capacity(dim * dim);
                for row in rows {
                    r.extend(parse_row(row, dim)?);
                }
                Some(r)
            }
            k => {
                return Err(LdeError::Parse(format!(
                    "rotation block has {k} rows, expected {dim}"
                )))
            }
        };
        FunctionInstance::new(id, base, shift, rotation, f_star)
    }
}

/// Anything the DE loop can minimize: a box-bounded function with a known optimum.
pub trait Objective: Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn bounds(&self) -> &[(f64, f64)];
    fn f_star(&self) -> f64;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    fn error_value(&self, f_found: f64) -> Result<f64> {
        error_value(self.f_star(), f_found)
    }
}

impl Objective for FunctionInstance {
    fn id(&self) -> &str {
        &self.id
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
    fn f_star(&self) -> f64 {
        self.f_star
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        FunctionInstance::evaluate(self, x)
    }
}

/// Wraps an objective and counts evaluations.
#[derive(Debug)]
pub struct Counting<O> {
    pub inner: O,
    count: AtomicU64,
}

impl<O> Counting<O> {
    pub fn new(inner: O) -> Self {
        Counting {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl<O: Objective> Objective for Counting<O> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn bounds(&self) -> &[(f64, f64)] {
        self.inner.bounds()
    }
    fn f_star(&self) -> f64 {
        self.inner.f_star()
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x)
    }
}

pub fn error_value(f_star: f64, f_found: f64) -> Result<f64> {
    let err = f_found - f_star;
    if err >= 0.0 {
        Ok(err)
    } else if err > -1e-12 {
        Ok(0.0)
    } else {
        Err(LdeError::InternalConsistency(format!(
            "found value {f_found} is below the optimum {f_star}"
        )))
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| LdeError::Parse(format!("bad number `{s}`")))
}

fn parse_row(line: &str, dim: usize) -> Result<Vec<f64>> {
    let row = line
        .split_whitespace()
        .map(parse_f64)
        .collect::<Result<Vec<_>>>()?;
    if row.len() != dim {
        return Err(LdeError::Parse(format!(
            "row has {} values, expected {dim}",
            row.len()
        )));
    }
    Ok(row)
}

/// Max entrywise deviation of `RᵀR` from the identity.
pub fn orthogonality_defect(r: &[f64], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let dot: f64 = (0..n).map(|k| r[k * n + a] * r[k * n + b]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// Orthonormalizes a seeded Gaussian matrix by modified Gram–Schmidt (two passes).
pub fn random_rotation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let mut ok = true;
        for i in 0..n {
            for _pass in 0..2 {
                for k in 0..i {
                    let (done, rest) = rows.split_at_mut(i);
                    let proj: f64 = done[k].iter().zip(&rest[0]).map(|(a, b)| a * b).sum();
                    for (v, q) in rest[0].iter_mut().zip(&done[k]) {
                        *v -= proj * q;
                    }
                }
            }
            let norm = rows[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            rows[i].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            return rows.concat();
        }
    }
}

fn generate<R: Rng + ?Sized>(
    id: String,
    base: Family,
    dim: usize,
    f_star: f64,
    rng: &mut R,
) -> FunctionInstance {
    let shift = (0..dim)
        .map(|_| rng.random_range(-SHIFT_RANGE..SHIFT_RANGE))
        .collect();
    let rotation = Some(random_rotation(dim, rng));
    FunctionInstance::new(id, base, shift, rotation, f_star)
        .expect("generated instance satisfies its invariants")
}

/// Deterministic training and test suites cycling through [`Family::CYCLE`].
///
/// Train and test members draw their shift and rotation from distinct
/// seed-derived streams, so no instance is shared between the two sets.
pub fn make_suite(
    seed: u64,
    dim: usize,
    count_train: usize,
    count_test: usize,
) -> Result<(Vec<FunctionInstance>, Vec<FunctionInstance>)> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if count_train == 0 || count_test == 0 {
        return Err(invalid("suite counts must be at least 1"));
    }
    let build = |role: u64, count: usize, tag: &str| -> Vec<FunctionInstance> {
        (0..count)
            .map(|k| {
                let base = Family::CYCLE[k % Family::CYCLE.len()];
                let mut rng = rng::stream(seed, Purpose::Suite, &[role, k as u64]);
                let f_star = 100.0 * (role as f64 * 50.0 + k as f64 + 1.0);
                generate(format!("{tag}{k:02}-{base}"), base, dim, f_star, &mut rng)
            })
            .collect()
    };
    Ok((build(0, count_train, "train"), build(1, count_test, "test")))
}
