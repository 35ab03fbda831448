//! Projected gradient descent and minibatch-1 stochastic gradient
//! descent on the sphere and on the product of three spheres.
//!
//! One step is `w <- retract(w - gamma * tangential_gradient(w))`. The
//! stopping norm is the tangential gradient: the ambient gradient keeps
//! a radial component that never vanishes on the sphere.

use serde::Serialize;
use std::fmt;

use crate::error::{Error, Result};
use crate::landscape::{
    hamiltonian, tripartite_gradient_into, tripartite_hamiltonian, CouplingTensor,
    DecomposedField, GradKernel,
};
use crate::rng::Stream;
use crate::scalar::Scalar;
use crate::sphere::{norm2, retract_to_sphere, ProductSpherePoint, SpherePoint};

pub const DEFAULT_STEP_SIZE: f64 = 0.01;
pub const DEFAULT_GRAD_TOL: f64 = 1e-5;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

/// Consecutive energy increases beyond the noise floor before a run is
/// flagged divergent.
const DIVERGENCE_PATIENCE: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig<T> {
    /// Constant step size gamma.
    pub step_size: T,
    /// Stop once the tangential gradient norm falls below this.
    pub grad_tol: T,
    pub max_steps: usize,
    /// Trace sampling stride; 0 disables the trace.
    pub record_every: usize,
}

impl<T: Scalar> Default for DescentConfig<T> {
    fn default() -> Self {
        DescentConfig {
            step_size: T::from_f(DEFAULT_STEP_SIZE),
            grad_tol: T::from_f(DEFAULT_GRAD_TOL),
            max_steps: DEFAULT_MAX_STEPS,
            record_every: 0,
        }
    }
}

impl<T: Scalar> DescentConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > T::zero()) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if !(self.grad_tol > T::zero()) {
            return Err(Error::invalid("grad_tol must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientBelowTol,
    MaxSteps,
    Divergence,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StopReason::GradientBelowTol => "gradient-below-tol",
            StopReason::MaxSteps => "max-steps",
            StopReason::Divergence => "divergence",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminalPoint<T> {
    Sphere(SpherePoint<T>),
    ProductSphere(ProductSpherePoint<T>),
}

impl<T> TerminalPoint<T> {
    pub fn as_sphere(&self) -> Option<&SpherePoint<T>> {
        match self {
            TerminalPoint::Sphere(p) => Some(p),
            TerminalPoint::ProductSphere(_) => None,
        }
    }

    pub fn as_product(&self) -> Option<&ProductSpherePoint<T>> {
        match self {
            TerminalPoint::ProductSphere(p) => Some(p),
            TerminalPoint::Sphere(_) => None,
        }
    }
}

/// Summary of one descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentRecord<T> {
    pub terminal_point: TerminalPoint<T>,
    pub terminal_energy: T,
    /// terminal_energy / n; comparable across dimensions.
    pub normalized_energy: T,
    pub steps_taken: usize,
    pub stop_reason: StopReason,
    /// (cumulative step_size * steps, energy) pairs at the configured
    /// stride, always including the terminal step.
    pub trace: Option<Vec<(T, T)>>,
}

/// Tracks sustained energy increases; noise below `tol` per step is
/// ignored.
struct DivergenceMonitor<T> {
    prev: Option<T>,
    consecutive_up: usize,
    tol: T,
}

impl<T: Scalar> DivergenceMonitor<T> {
    fn new(n: usize) -> Self {
        DivergenceMonitor {
            prev: None,
            consecutive_up: 0,
            tol: T::from_f(1e-9) * T::from_f(n as f64),
        }
    }

    /// Returns true when the run should stop as divergent.
    fn observe(&mut self, energy: T) -> bool {
        if !energy.is_finite() {
            return true;
        }
        if let Some(prev) = self.prev {
            if energy > prev + self.tol {
                self.consecutive_up += 1;
            } else {
                self.consecutive_up = 0;
            }
        }
        self.prev = Some(energy);
        self.consecutive_up >= DIVERGENCE_PATIENCE
    }
}

struct TraceBuffer<T> {
    every: usize,
    entries: Vec<(T, T)>,
    last_step: Option<usize>,
}

impl<T: Scalar> TraceBuffer<T> {
    fn new(every: usize) -> Self {
        TraceBuffer {
            every,
            entries: Vec::new(),
            last_step: None,
        }
    }

    fn record(&mut self, step: usize, step_size: T, energy: T) {
        if self.every == 0 {
            return;
        }
        if step % self.every == 0 && self.last_step != Some(step) {
            self.push(step, step_size, energy);
        }
    }

    fn record_terminal(&mut self, step: usize, step_size: T, energy: T) {
        if self.every == 0 {
            return;
        }
        if self.last_step != Some(step) {
            self.push(step, step_size, energy);
        }
    }

    fn push(&mut self, step: usize, step_size: T, energy: T) {
        self.entries
            .push((step_size * T::from_f(step as f64), energy));
        self.last_step = Some(step);
    }

    fn into_option(self) -> Option<Vec<(T, T)>> {
        if self.every == 0 {
            None
        } else {
            Some(self.entries)
        }
    }
}

/// `Ok(None)` signals a degenerate update (zero or non-finite step),
/// which the loops report as divergence rather than an error.
fn step_and_retract<T: Scalar>(
    coords: &[T],
    g_tan: &[T],
    gamma: T,
) -> Result<Option<Vec<T>>> {
    let moved: Vec<T> = coords
        .iter()
        .zip(g_tan)
        .map(|(&w, &g)| w - gamma * g)
        .collect();
    match retract_to_sphere(&moved) {
        Ok(p) => Ok(Some(p.into_coords())),
        Err(Error::DegenerateInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Projects `g` against `coords` in place (coords assumed on the sphere,
/// squared norm n) and returns the tangential norm.
fn project_in_place<T: Scalar>(g: &mut [T], coords: &[T]) -> T {
    let n = T::from_f(coords.len() as f64);
    let radial = crate::sphere::dot(g, coords) / n;
    for (gi, &wi) in g.iter_mut().zip(coords) {
        *gi = *gi - radial * wi;
    }
    norm2(g)
}

/// Projected gradient descent on the coupled landscape.
pub fn gradient_descent<T: Scalar>(
    x: &CouplingTensor<T>,
    w0: &SpherePoint<T>,
    cfg: &DescentConfig<T>,
) -> Result<DescentRecord<T>> {
    if x.n() != w0.n() {
        return Err(Error::dims(format!(
            "tensor n={} vs start point n={}",
            x.n(),
            w0.n()
        )));
    }
    cfg.validate()?;
    let kernel = GradKernel::new(x);
    descend_single(&kernel, w0, cfg)
}

fn descend_single<T: Scalar>(
    kernel: &GradKernel<T>,
    w0: &SpherePoint<T>,
    cfg: &DescentConfig<T>,
) -> Result<DescentRecord<T>> {
    let n = kernel.n();
    let mut coords = w0.coords().to_vec();
    let mut g = vec![T::zero(); n];
    let mut monitor = DivergenceMonitor::new(n);
    let mut trace = TraceBuffer::new(cfg.record_every);

    let mut step = 0usize;
    let stop_reason = loop {
        let energy = kernel.gradient_into(&coords, &mut g);
        if monitor.observe(energy) {
            break StopReason::Divergence;
        }
        trace.record(step, cfg.step_size, energy);
        let tangential_norm = project_in_place(&mut g, &coords);
        if tangential_norm < cfg.grad_tol {
            break StopReason::GradientBelowTol;
        }
        if step >= cfg.max_steps {
            break StopReason::MaxSteps;
        }
        match step_and_retract(&coords, &g, cfg.step_size)? {
            Some(next) => coords = next,
            None => break StopReason::Divergence,
        }
        step += 1;
    };

    let terminal = SpherePoint::new(coords)?;
    let terminal_energy = kernel.gradient_into(terminal.coords(), &mut g);
    trace.record_terminal(step, cfg.step_size, terminal_energy);
    Ok(DescentRecord {
        normalized_energy: terminal_energy / T::from_f(n as f64),
        terminal_point: TerminalPoint::Sphere(terminal),
        terminal_energy,
        steps_taken: step,
        stop_reason,
        trace: trace.into_option(),
    })
}

/// Order in which SGD visits the P summands.
#[derive(Debug, Clone)]
pub enum PassOrder {
    /// p = step mod P, repeated in epochs; the default.
    Cyclic,
    /// Uniform with replacement, drawn from the given stream.
    WithReplacement(Stream),
}

/// Minibatch-1 SGD: each step follows the tangential gradient of a
/// single sub-field. The stopping rule applies to the full-field
/// tangential gradient, checked at epoch boundaries; with P = 1 the
/// step sequence is bit-identical to [`gradient_descent`].
///
/// The terminal energy is always evaluated on the full summed field.
pub fn sgd_spin_glass<T: Scalar>(
    field: &DecomposedField<T>,
    w0: &SpherePoint<T>,
    cfg: &DescentConfig<T>,
    order: PassOrder,
) -> Result<DescentRecord<T>> {
    if field.n() != w0.n() {
        return Err(Error::dims(format!(
            "field n={} vs start point n={}",
            field.n(),
            w0.n()
        )));
    }
    cfg.validate()?;
    let n = field.n();
    let p_count = field.p_count();
    let sub_kernels: Vec<GradKernel<T>> =
        field.subfields().iter().map(GradKernel::new).collect();
    // With P = 1 the lone sub-field IS the full field; skip the copy so
    // the P=1 path stays bit-identical to plain gradient descent.
    let full_kernel = if p_count == 1 {
        None
    } else {
        Some(GradKernel::new(&field.summed_tensor()))
    };
    let full = |g: &mut Vec<T>, coords: &[T], sub_energy_grad: Option<T>| -> T {
        match (&full_kernel, sub_energy_grad) {
            (None, Some(e)) => e,
            (Some(k), _) => k.gradient_into(coords, g),
            (None, None) => sub_kernels[0].gradient_into(coords, g),
        }
    };

    let mut order = order;
    let mut coords = w0.coords().to_vec();
    let mut g_sub = vec![T::zero(); n];
    let mut g_full = vec![T::zero(); n];
    let mut monitor = DivergenceMonitor::new(n);
    let mut trace = TraceBuffer::new(cfg.record_every);

    let mut step = 0usize;
    let stop_reason = loop {
        let p = match &mut order {
            PassOrder::Cyclic => step % p_count,
            PassOrder::WithReplacement(stream) => {
                use rand::Rng;
                stream.gen_range(0..p_count)
            }
        };
        let sub_energy = sub_kernels[p].gradient_into(&coords, &mut g_sub);
        if !sub_energy.is_finite() {
            break StopReason::Divergence;
        }

        // Epoch boundary: check the full landscape.
        if step % p_count == 0 {
            let sub_for_full = if p_count == 1 { Some(sub_energy) } else { None };
            let full_energy = full(&mut g_full, &coords, sub_for_full);
            if monitor.observe(full_energy) {
                break StopReason::Divergence;
            }
            trace.record(step, cfg.step_size, full_energy);
            let tangential_norm = if p_count == 1 {
                // g_sub already holds the full gradient.
                let mut g_tmp = g_sub.clone();
                project_in_place(&mut g_tmp, &coords)
            } else {
                project_in_place(&mut g_full, &coords)
            };
            if tangential_norm < cfg.grad_tol {
                break StopReason::GradientBelowTol;
            }
        }
        if step >= cfg.max_steps {
            break StopReason::MaxSteps;
        }

        project_in_place(&mut g_sub, &coords);
        match step_and_retract(&coords, &g_sub, cfg.step_size)? {
            Some(next) => coords = next,
            None => break StopReason::Divergence,
        }
        step += 1;
    };

    let terminal = SpherePoint::new(coords)?;
    let terminal_energy = full(&mut g_full, terminal.coords(), None);
    trace.record_terminal(step, cfg.step_size, terminal_energy);
    Ok(DescentRecord {
        normalized_energy: terminal_energy / T::from_f(n as f64),
        terminal_point: TerminalPoint::Sphere(terminal),
        terminal_energy,
        steps_taken: step,
        stop_reason,
        trace: trace.into_option(),
    })
}

/// Plain gradient descent on the summed field, used to polish an SGD
/// terminal point down to the bottom of its well.
pub fn refine_with_gd<T: Scalar>(
    field: &DecomposedField<T>,
    start: &SpherePoint<T>,
    cfg: &DescentConfig<T>,
) -> Result<DescentRecord<T>> {
    let summed = field.summed_tensor();
    gradient_descent(&summed, start, cfg)
}

/// Descent on the product of three spheres: all three factors update
/// from their tangential gradients, then each retracts to its own
/// sphere. The stopping rule uses the concatenated tangential norm.
pub fn tripartite_descent<T: Scalar>(
    x: &CouplingTensor<T>,
    p0: &ProductSpherePoint<T>,
    cfg: &DescentConfig<T>,
) -> Result<DescentRecord<T>> {
    if x.n() != p0.n() {
        return Err(Error::dims(format!(
            "tensor n={} vs start point n={}",
            x.n(),
            p0.n()
        )));
    }
    cfg.validate()?;
    let n = x.n();
    let mut factors: [Vec<T>; 3] = [
        p0.factor(0).coords().to_vec(),
        p0.factor(1).coords().to_vec(),
        p0.factor(2).coords().to_vec(),
    ];
    let mut grads: [Vec<T>; 3] = [
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
    ];
    let mut monitor = DivergenceMonitor::new(n);
    let mut trace = TraceBuffer::new(cfg.record_every);

    let mut step = 0usize;
    let stop_reason = loop {
        let energy = tripartite_gradient_into(x, &factors, &mut grads);
        if monitor.observe(energy) {
            break StopReason::Divergence;
        }
        trace.record(step, cfg.step_size, energy);
        let mut norm_sq = T::zero();
        for f in 0..3 {
            let tn = project_in_place(&mut grads[f], &factors[f]);
            norm_sq += tn * tn;
        }
        if norm_sq.sqrt() < cfg.grad_tol {
            break StopReason::GradientBelowTol;
        }
        if step >= cfg.max_steps {
            break StopReason::MaxSteps;
        }
        let mut degenerate = false;
        for f in 0..3 {
            match step_and_retract(&factors[f], &grads[f], cfg.step_size)? {
                Some(next) => factors[f] = next,
                None => degenerate = true,
            }
        }
        if degenerate {
            break StopReason::Divergence;
        }
        step += 1;
    };

    let [a, b, c] = factors;
    let terminal = ProductSpherePoint::new(
        SpherePoint::new(a)?,
        SpherePoint::new(b)?,
        SpherePoint::new(c)?,
    )?;
    let terminal_energy = tripartite_hamiltonian(x, &terminal)?;
    trace.record_terminal(step, cfg.step_size, terminal_energy);
    Ok(DescentRecord {
        normalized_energy: terminal_energy / T::from_f(n as f64),
        terminal_point: TerminalPoint::ProductSphere(terminal),
        terminal_energy,
        steps_taken: step,
        stop_reason,
        trace: trace.into_option(),
    })
}

/// Consistency check used by callers that aggregate records: the stored
/// terminal energy must match a fresh evaluation of the landscape.
pub fn verify_terminal_energy<T: Scalar>(
    x: &CouplingTensor<T>,
    record: &DescentRecord<T>,
) -> Result<bool> {
    let fresh = match &record.terminal_point {
        TerminalPoint::Sphere(p) => hamiltonian(x, p)?,
        TerminalPoint::ProductSphere(p) => tripartite_hamiltonian(x, p)?,
    };
    let tol = T::from_f(1e-10) * fresh.abs().max(T::one());
    Ok((fresh - record.terminal_energy).abs() <= tol)
}
