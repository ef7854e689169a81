//! Projected gradient descent on the layer's mean-squared error.
//!
//! Full batch over a uniform grid. A candidate step is accepted only if it
//! does not increase the loss, after which the step size grows by
//! [`STEP_GROWTH`]; a rejected step halves it. After every update each
//! spline's control points are projected back into the feasible set.
//!
//! Targets are divided by their range before training and the result is
//! rescaled into the coefficients and `w_b` afterwards; spline outputs,
//! and therefore the noise they receive, are unaffected by the rescale.

use serde::{Deserialize, Serialize};

use super::{BasisKind, KanLayer, NoiseInjector};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{max_abs_error, median, nmpe, Sweep};
use crate::rng::{derive_seed, UniformStream};
use crate::spline::{project_to_constraints, ControlPoints, SplineDomain};

/// NMPE of the worst measured full spline, used as the default training
/// noise.
pub const DEFAULT_SPLINE_NOISE: f64 = -0.0758;

/// Step multiplier after an accepted step.
pub const STEP_GROWTH: f64 = 1.25;
const MAX_STEP_SCALE: f64 = 1e6;

/// Function to approximate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Square,
    Exp,
    /// Piecewise-linear through `(x, y)` samples sorted by `x`.
    Tabulated(Vec<(f64, f64)>),
}

impl Target {
    pub fn tabulated(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config(
                "a tabulated target needs at least two samples".into(),
            ));
        }
        if samples
            .iter()
            .any(|(x, y)| !x.is_finite() || !y.is_finite())
        {
            return Err(Error::Config(
                "tabulated target has non-finite samples".into(),
            ));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config(
                "tabulated target has duplicate x values".into(),
            ));
        }
        Ok(Target::Tabulated(samples))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::Square => "square",
            Target::Exp => "exp",
            Target::Tabulated(_) => "tabulated",
        }
    }

    /// Tabulated targets are held constant beyond their end samples.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Target::Square => x * x,
            Target::Exp => x.exp(),
            Target::Tabulated(s) => {
                let i = s.partition_point(|&(sx, _)| sx <= x);
                if i == 0 {
                    return s[0].1;
                }
                if i == s.len() {
                    return s[s.len() - 1].1;
                }
                let (x0, y0) = s[i - 1];
                let (x1, y1) = s[i];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub target: Target,
    pub domain: SplineDomain,
    pub n_splines: usize,
    pub grid_size: usize,
    pub noise_factor: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub learning_rate: f64,
    /// Training stops once the step size falls below
    /// `tolerance * learning_rate`.
    pub tolerance: f64,
    pub basis: BasisKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            target: Target::Square,
            domain: SplineDomain::RAIL,
            n_splines: 3,
            grid_size: 256,
            noise_factor: 0.0,
            seed: 1,
            max_iters: 3000,
            learning_rate: 0.5,
            tolerance: 1e-12,
            basis: BasisKind::Silu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_splines < 1 {
            return Err(Error::Config("n_splines must be at least 1".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::Config("grid_size must be at least 2".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !self.noise_factor.is_finite() {
            return Err(Error::Config("noise_factor must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub layer: KanLayer,
    /// NMPE of the trained layer, noise-free, on the held-out grid.
    pub nmpe_vs_target: f64,
    /// NMPE of the trained layer on the held-out grid with spline noise
    /// injected as during training. Equals `nmpe_vs_target` when
    /// training was noise-free.
    pub nmpe_with_noise: f64,
    pub max_abs_error: f64,
    /// Loss of every accepted iterate, in normalized target units.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
    /// `[base, init, training noise, evaluation noise]`
    pub seeds_used: Vec<u64>,
    /// Held-out grid evaluation behind the two NMPE figures.
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

/// One held-out sample of a trained layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub target: f64,
    pub clean: f64,
    pub noisy: f64,
}

/// Gradient of the mean-squared error.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w_b: f64,
    pub w_s: f64,
    pub coefficients: Vec<f64>,
    pub points: Vec<[f64; 3]>,
}

impl Gradient {
    fn zeros(n: usize) -> Self {
        Self {
            w_b: 0.0,
            w_s: 0.0,
            coefficients: vec![0.0; n],
            points: vec![[0.0; 3]; n],
        }
    }

    /// `[w_b, w_s, coefficients.., P0, P1, P2 of each spline..]`
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = vec![self.w_b, self.w_s];
        v.extend(&self.coefficients);
        v.extend(self.points.iter().flatten());
        v
    }

    fn scale(&mut self, k: f64) {
        self.w_b *= k;
        self.w_s *= k;
        self.coefficients.iter_mut().for_each(|c| *c *= k);
        self.points
            .iter_mut()
            .for_each(|p| p.iter_mut().for_each(|v| *v *= k));
    }
}

/// Per-sample quantities that do not depend on the parameters.
struct Sample {
    spline: usize,
    basis: f64,
    /// `d B / d (P0, P1, P2)` at the spline's local input.
    bernstein: [f64; 3],
}

fn design(layer: &KanLayer, xs: &[f64]) -> Result<Vec<Sample>> {
    xs.iter()
        .map(|&x| {
            let k = layer.active_index(x)?;
            let t = layer.segments[k].local(x);
            let s = 1.0 - t;
            Ok(Sample {
                spline: k,
                basis: layer.basis.eval(x),
                bernstein: [s * s, 2.0 * t * s, t * t],
            })
        })
        .collect()
}

fn loss_and_gradient(
    layer: &KanLayer,
    samples: &[Sample],
    targets: &[f64],
    mut noise: Option<&mut NoiseInjector>,
) -> (f64, Gradient) {
    let n = samples.len() as f64;
    let mut grad = Gradient::zeros(layer.len());
    let mut loss = 0.0;
    for (s, &target) in samples.iter().zip(targets) {
        let k = s.spline;
        let p = &layer.segments[k].points;
        let clean = p.p0 * s.bernstein[0] + p.p1 * s.bernstein[1] + p.p2 * s.bernstein[2];
        let spline = match noise.as_deref_mut() {
            Some(inj) => inj.perturb(k, clean),
            None => clean,
        };
        let c = layer.coefficients[k];
        let y = layer.w_b * s.basis + layer.w_s * c * spline;
        let r = y - target;
        loss += r * r;

        grad.w_b += r * s.basis;
        grad.w_s += r * c * spline;
        grad.coefficients[k] += r * layer.w_s * spline;
        let scale = r * layer.w_s * c;
        for (g, b) in grad.points[k].iter_mut().zip(&s.bernstein) {
            *g += scale * b;
        }
    }
    grad.scale(2.0 / n);
    (loss / n, grad)
}

/// Noise-free mean-squared error of `layer` against `targets` at `xs`.
pub fn mse(layer: &KanLayer, xs: &[f64], targets: &[f64]) -> Result<f64> {
    Ok(mse_and_gradient(layer, xs, targets)?.0)
}

/// Noise-free mean-squared error and its analytic gradient.
pub fn mse_and_gradient(layer: &KanLayer, xs: &[f64], targets: &[f64]) -> Result<(f64, Gradient)> {
    if xs.len() != targets.len() || xs.is_empty() {
        return Err(Error::Shape(format!(
            "{} inputs, {} targets",
            xs.len(),
            targets.len()
        )));
    }
    let samples = design(layer, xs)?;
    Ok(loss_and_gradient(layer, &samples, targets, None))
}

/// Central finite-difference gradient of [`mse`] with step `h`, in the
/// same layout as [`mse_and_gradient`].
pub fn finite_difference_gradient(
    layer: &KanLayer,
    xs: &[f64],
    targets: &[f64],
    h: f64,
) -> Result<Gradient> {
    let probe = |edit: &dyn Fn(&mut KanLayer, f64)| -> Result<f64> {
        let mut up = layer.clone();
        let mut down = layer.clone();
        edit(&mut up, h);
        edit(&mut down, -h);
        Ok((mse(&up, xs, targets)? - mse(&down, xs, targets)?) / (2.0 * h))
    };
    let mut grad = Gradient::zeros(layer.len());
    grad.w_b = probe(&|l, d| l.w_b += d)?;
    grad.w_s = probe(&|l, d| l.w_s += d)?;
    for k in 0..layer.len() {
        grad.coefficients[k] = probe(&|l, d| l.coefficients[k] += d)?;
        for j in 0..3 {
            grad.points[k][j] = probe(&|l, d| {
                let mut p = l.segments[k].points.as_array();
                p[j] += d;
                l.segments[k].points = ControlPoints::from_array(p);
            })?;
        }
    }
    Ok(grad)
}

/// `None` if the step leaves finite numbers or lands so far out that the
/// projection loses all precision.
fn step(layer: &KanLayer, grad: &Gradient, lr: f64) -> Result<Option<KanLayer>> {
    let mut next = layer.clone();
    next.w_b -= lr * grad.w_b;
    next.w_s -= lr * grad.w_s;
    for (c, g) in next.coefficients.iter_mut().zip(&grad.coefficients) {
        *c -= lr * g;
    }
    for (seg, g) in next.segments.iter_mut().zip(&grad.points) {
        let p = seg.points;
        let moved = ControlPoints::new(p.p0 - lr * g[0], p.p1 - lr * g[1], p.p2 - lr * g[2]);
        if !moved.as_array().iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        match project_to_constraints(&moved) {
            Ok(p) => seg.points = p,
            Err(Error::Projection(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    let finite = next.w_b.is_finite()
        && next.w_s.is_finite()
        && next.coefficients.iter().all(|c| c.is_finite());
    Ok(finite.then_some(next))
}

fn initial_layer(config: &TrainConfig, seed: u64) -> Result<KanLayer> {
    let mut layer = KanLayer::new(config.domain, config.n_splines, config.basis)?;
    let mut rng = UniformStream::new(seed);
    for seg in &mut layer.segments {
        let p0 = rng.next_in(-0.1, 0.1);
        let p1 = p0 + rng.next_in(-0.05, 0.05);
        let p2 = p1 + rng.next_in(-0.05, 0.05);
        seg.points = project_to_constraints(&ControlPoints::new(p0, p1, p2))?;
    }
    Ok(layer)
}

/// Uniform grid with `10 * grid_size` points for reporting.
pub fn held_out_grid(config: &TrainConfig) -> Vec<f64> {
    config.domain.grid(10 * config.grid_size)
}

pub fn train(config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let init_seed = derive_seed(config.seed, 0);
    let train_noise_seed = derive_seed(config.seed, 1);
    let eval_noise_seed = derive_seed(config.seed, 2);

    let xs = config.domain.grid(config.grid_size);
    let raw: Vec<f64> = xs.iter().map(|&x| config.target.eval(x)).collect();
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let scale = if hi > lo { hi - lo } else { 1.0 };
    let targets: Vec<f64> = raw.iter().map(|v| v / scale).collect();

    let mut layer = initial_layer(config, init_seed)?;
    let samples = design(&layer, &xs)?;
    let mut noise = (config.noise_factor != 0.0)
        .then(|| NoiseInjector::new(config.noise_factor, config.n_splines, train_noise_seed));

    let (mut loss, mut grad) = loss_and_gradient(&layer, &samples, &targets, noise.as_mut());
    if !loss.is_finite() {
        return Err(Error::Divergence { iteration: 0, loss });
    }
    let mut history = vec![loss];
    let mut lr = config.learning_rate;
    let mut iterations = 0;
    for iter in 1..=config.max_iters {
        iterations = iter;
        let Some(candidate) = step(&layer, &grad, lr)? else {
            return Err(Error::Divergence {
                iteration: iter,
                loss: f64::INFINITY,
            });
        };
        let (c_loss, c_grad) = loss_and_gradient(&candidate, &samples, &targets, noise.as_mut());
        if !c_loss.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                loss: c_loss,
            });
        }
        if c_loss <= loss {
            layer = candidate;
            loss = c_loss;
            grad = c_grad;
            history.push(loss);
            lr = (lr * STEP_GROWTH).min(config.learning_rate * MAX_STEP_SCALE);
        } else {
            lr *= 0.5;
            if lr < config.tolerance * config.learning_rate {
                break;
            }
        }
    }

    layer.w_b *= scale;
    layer.coefficients.iter_mut().for_each(|c| *c *= scale);

    let eval_xs = held_out_grid(config);
    let reference: Vec<f64> = eval_xs.iter().map(|&x| config.target.eval(x)).collect();
    let clean: Vec<f64> = eval_xs
        .iter()
        .map(|&x| layer.eval(x))
        .collect::<Result<_>>()?;
    let noisy: Vec<f64> = match &noise {
        Some(inj) => {
            let mut inj = inj.reseeded(eval_noise_seed);
            eval_xs
                .iter()
                .map(|&x| layer.eval_noisy(x, &mut inj))
                .collect::<Result<_>>()?
        }
        None => clean.clone(),
    };
    let curve = (0..eval_xs.len())
        .map(|i| CurvePoint {
            x: eval_xs[i],
            target: reference[i],
            clean: clean[i],
            noisy: noisy[i],
        })
        .collect();
    let clean_sweep = Sweep::new(eval_xs.clone(), reference.clone(), clean)?;
    let noisy_sweep = Sweep::new(eval_xs, reference, noisy)?;

    Ok(TrainReport {
        nmpe_vs_target: nmpe(&clean_sweep)?,
        nmpe_with_noise: nmpe(&noisy_sweep)?,
        max_abs_error: max_abs_error(&clean_sweep),
        layer,
        loss_history: history,
        iterations,
        seeds_used: vec![config.seed, init_seed, train_noise_seed, eval_noise_seed],
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WideDomainRow {
    pub domain: SplineDomain,
    pub median_abs_nmpe: f64,
    pub median_abs_nmpe_noiseless: f64,
    pub nmpe_per_seed: Vec<f64>,
}

/// Retrain with noise on each domain for every seed and report the median
/// noisy NMPE magnitude, alongside a noise-free baseline.
pub fn wide_domain_experiment(
    base: &TrainConfig,
    domains: &[SplineDomain],
    noise_factor: f64,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<WideDomainRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    domains
        .iter()
        .map(|&domain| {
            let run = |noise: f64| -> Result<Vec<f64>> {
                exec.try_map_range(seeds.len(), |i| {
                    let cfg = TrainConfig {
                        domain,
                        noise_factor: noise,
                        seed: seeds[i],
                        ..base.clone()
                    };
                    train(&cfg).map(|r| r.nmpe_with_noise)
                })
            };
            let noisy = run(noise_factor)?;
            let clean = run(0.0)?;
            let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
            Ok(WideDomainRow {
                domain,
                median_abs_nmpe: median(&abs(&noisy)),
                median_abs_nmpe_noiseless: median(&abs(&clean)),
                nmpe_per_seed: noisy,
            })
        })
        .collect()
}
