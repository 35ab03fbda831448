//! Seeded multi-trial floor experiments: terminal-energy distributions,
//! band statistics per dimension, and the GD-vs-SGD comparison on the
//! decomposed field.
//!
//! Trials are independent work items on a rayon pool; every trial's
//! streams derive from `(master_seed, label, trial index)`, so the
//! resulting energies are identical for any worker count.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::descent::{
    gradient_descent, refine_with_gd, sgd_spin_glass, tripartite_descent, DescentConfig,
    DescentRecord, PassOrder, StopReason,
};
use crate::error::{Error, Result};
use crate::landscape::{decompose_field, sample_couplings, CouplingTensor, E_INFINITY, E_ZERO};
use crate::rng::{derive_stream, derive_subseed};
use crate::sphere::{random_sphere_point, ProductSpherePoint};
use crate::stats::{interquartile_range, mean, quantile_sorted, sample_std};

pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_BIN_WIDTH: f64 = 0.01;
pub const DEFAULT_MEMORY_BUDGET_BYTES: usize = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandscapeKind {
    Coupled,
    Tripartite,
    Decomposed { p_count: usize },
}

impl LandscapeKind {
    /// Peak working-set bytes for one trial: tensors plus the cached
    /// contraction each one carries, at 8 bytes per entry.
    pub fn working_bytes(&self, n: usize) -> usize {
        let tensor = n * n * n * 8;
        match self {
            // Tensor + gradient kernel.
            LandscapeKind::Coupled => 2 * tensor,
            // The tri-partite loop contracts the raw tensor directly.
            LandscapeKind::Tripartite => tensor,
            // P sub-fields with kernels, plus the summed field and its
            // kernel for epoch checks and refinement.
            LandscapeKind::Decomposed { p_count } => (2 * p_count + 2) * tensor,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub kind: LandscapeKind,
    pub n: usize,
    pub trials: usize,
    /// true: a new landscape per trial; false: one fixed landscape,
    /// fresh starting points only.
    pub fresh_couplings_per_trial: bool,
    pub descent: DescentConfig<f64>,
    pub master_seed: u64,
    pub memory_budget_bytes: usize,
}

impl EnsembleSpec {
    pub fn new(kind: LandscapeKind, n: usize, trials: usize, master_seed: u64) -> Self {
        EnsembleSpec {
            kind,
            n,
            trials,
            fresh_couplings_per_trial: true,
            descent: DescentConfig::default(),
            master_seed,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET_BYTES,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if let LandscapeKind::Decomposed { p_count } = self.kind {
            if p_count == 0 {
                return Err(Error::invalid("p_count must be >= 1"));
            }
        }
        self.descent.validate()?;
        let need = self.kind.working_bytes(self.n);
        if need > self.memory_budget_bytes {
            return Err(Error::BudgetExceeded(format!(
                "n={} with {:?} needs {} bytes per trial, budget is {}",
                self.n, self.kind, need, self.memory_budget_bytes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// bins + 1 edges; bin b covers [edges[b], edges[b+1]).
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Left-closed right-open bins of the given width covering [min, max].
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::invalid("histogram needs at least one value"));
    }
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin_width must be positive"));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::invalid("histogram values must be finite"));
    }
    let bins = ((max - min) / bin_width).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = (((v - min) / bin_width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let edges = (0..=bins).map(|b| min + b as f64 * bin_width).collect();
    Ok(Histogram { edges, counts })
}

impl Histogram {
    /// Center of the most populated bin (first one on ties).
    pub fn modal_bin_center(&self) -> f64 {
        let (idx, _) = self
            .counts
            .iter()
            .enumerate()
            .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best });
        (self.edges[idx] + self.edges[idx + 1]) / 2.0
    }
}

/// Distribution of terminal energies across the trials of one spec.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    /// Terminal H/n per completed (finite-energy) trial, in trial order.
    pub normalized_energies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub interquartile_range: f64,
    pub histogram: Histogram,
    /// mean - (-e_infinity): how far above the asymptotic floor.
    pub floor_gap: f64,
    pub stop_reason_counts: BTreeMap<String, usize>,
}

impl EnsembleReport {
    fn from_records(records: &[DescentRecord<f64>], bin_width: f64) -> Result<Self> {
        let mut stop_reason_counts = BTreeMap::new();
        let mut energies = Vec::with_capacity(records.len());
        for rec in records {
            *stop_reason_counts
                .entry(rec.stop_reason.to_string())
                .or_insert(0) += 1;
            if rec.normalized_energy.is_finite() {
                energies.push(rec.normalized_energy);
            }
        }
        if energies.is_empty() {
            return Err(Error::invalid("no trial produced a finite energy"));
        }
        let mut sorted = energies.clone();
        sorted.sort_by(f64::total_cmp);
        let m = mean(&energies);
        Ok(EnsembleReport {
            histogram: histogram(&energies, bin_width)?,
            mean: m,
            std: sample_std(&energies),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            interquartile_range: interquartile_range(&sorted),
            floor_gap: m + E_INFINITY,
            normalized_energies: energies,
            stop_reason_counts,
        })
    }

    /// Every energy respects the slackened ground-state bound.
    pub fn respects_lower_bound(&self) -> bool {
        self.min >= -E_ZERO - 0.01
    }
}

fn run_trial(spec: &EnsembleSpec, fixed: Option<&Landscape>, trial: u64) -> Result<DescentRecord<f64>> {
    let mut init = derive_stream(spec.master_seed, "init", trial);
    let owned;
    let landscape = match fixed {
        Some(l) => l,
        None => {
            owned = Landscape::sample(spec, trial)?;
            &owned
        }
    };
    match landscape {
        Landscape::Coupled(x) => {
            let w0 = random_sphere_point(spec.n, &mut init)?;
            gradient_descent(x, &w0, &spec.descent)
        }
        Landscape::Tripartite(x) => {
            let p0 = ProductSpherePoint::new(
                random_sphere_point(spec.n, &mut init)?,
                random_sphere_point(spec.n, &mut init)?,
                random_sphere_point(spec.n, &mut init)?,
            )?;
            tripartite_descent(x, &p0, &spec.descent)
        }
        Landscape::Decomposed(field) => {
            let w0 = random_sphere_point(spec.n, &mut init)?;
            sgd_spin_glass(field, &w0, &spec.descent, PassOrder::Cyclic)
        }
    }
}

enum Landscape {
    Coupled(CouplingTensor<f64>),
    Tripartite(CouplingTensor<f64>),
    Decomposed(crate::landscape::DecomposedField<f64>),
}

impl Landscape {
    fn sample(spec: &EnsembleSpec, trial: u64) -> Result<Self> {
        let mut stream = derive_stream(spec.master_seed, "couplings", trial);
        Ok(match spec.kind {
            LandscapeKind::Coupled => {
                Landscape::Coupled(sample_couplings(spec.n, 1.0, &mut stream)?)
            }
            LandscapeKind::Tripartite => {
                Landscape::Tripartite(sample_couplings(spec.n, 1.0, &mut stream)?)
            }
            LandscapeKind::Decomposed { p_count } => {
                Landscape::Decomposed(decompose_field(spec.n, p_count, &mut stream)?)
            }
        })
    }
}

/// Runs `spec.trials` independent descents and aggregates the terminal
/// energies. Divergent trials are tallied in `stop_reason_counts`, not
/// fatal.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleReport> {
    run_ensemble_with_bin_width(spec, DEFAULT_BIN_WIDTH)
}

pub fn run_ensemble_with_bin_width(spec: &EnsembleSpec, bin_width: f64) -> Result<EnsembleReport> {
    spec.validate()?;
    let fixed = if spec.fresh_couplings_per_trial {
        None
    } else {
        Some(Landscape::sample(spec, 0)?)
    };
    let records: Vec<DescentRecord<f64>> = (0..spec.trials as u64)
        .into_par_iter()
        .map(|trial| run_trial(spec, fixed.as_ref(), trial))
        .collect::<Result<_>>()?;
    EnsembleReport::from_records(&records, bin_width)
}

/// One summary row per dimension under a shared protocol.
#[derive(Debug, Clone, Serialize)]
pub struct BandRow {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub interquartile_range: f64,
}

/// How the terminal-energy band tightens with dimension; rows come back
/// ordered by n.
pub fn band_width_vs_dimension(
    kind: LandscapeKind,
    dims: &[usize],
    trials: usize,
    descent: &DescentConfig<f64>,
    master_seed: u64,
) -> Result<Vec<BandRow>> {
    if dims.is_empty() {
        return Err(Error::invalid("dims must be non-empty"));
    }
    let mut rows = Vec::with_capacity(dims.len());
    for (i, &n) in dims.iter().enumerate() {
        let spec = EnsembleSpec {
            descent: descent.clone(),
            ..EnsembleSpec::new(kind, n, trials, derive_subseed(master_seed, "band-dim", i as u64))
        };
        let report = run_ensemble(&spec)?;
        rows.push(BandRow {
            n,
            mean: report.mean,
            std: report.std,
            interquartile_range: report.interquartile_range,
        });
    }
    rows.sort_by_key(|r| r.n);
    Ok(rows)
}

/// One row of the GD-vs-SGD table on the decomposed field.
#[derive(Debug, Clone, Serialize)]
pub struct GdSgdRow {
    pub p_count: usize,
    pub mean_normalized_energy: f64,
    pub std_normalized_energy: f64,
    pub refined_mean_normalized_energy: f64,
}

/// SGD arms for each P at a matched step-size-times-steps budget, with
/// a GD refinement column. P = 1 is the plain-GD baseline and must be
/// present in `p_values`.
pub fn compare_gd_sgd_spin(
    n: usize,
    p_values: &[usize],
    budget: f64,
    trials: usize,
    descent: &DescentConfig<f64>,
    master_seed: u64,
) -> Result<Vec<GdSgdRow>> {
    if p_values.is_empty() {
        return Err(Error::invalid("p_values must be non-empty"));
    }
    if !p_values.contains(&1) {
        return Err(Error::invalid("p_values must include the P=1 GD baseline"));
    }
    if !(budget > 0.0) {
        return Err(Error::invalid("budget must be positive"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let steps = ((budget / descent.step_size).round() as usize).max(1);
    let cfg = DescentConfig {
        max_steps: steps,
        ..descent.clone()
    };

    let mut rows = Vec::with_capacity(p_values.len());
    for &p_count in p_values {
        let kind = LandscapeKind::Decomposed { p_count };
        let need = kind.working_bytes(n);
        if need > DEFAULT_MEMORY_BUDGET_BYTES {
            return Err(Error::BudgetExceeded(format!(
                "P={p_count} at n={n} needs {need} bytes per trial"
            )));
        }
        let results: Vec<(f64, f64)> = (0..trials as u64)
            .into_par_iter()
            .map(|trial| -> Result<(f64, f64)> {
                let mut couplings = derive_stream(master_seed, "couplings", trial);
                let field = decompose_field::<f64>(n, p_count, &mut couplings)?;
                let mut init = derive_stream(master_seed, "init", trial);
                let w0 = random_sphere_point(n, &mut init)?;
                let sgd = sgd_spin_glass(&field, &w0, &cfg, PassOrder::Cyclic)?;
                let start = sgd
                    .terminal_point
                    .as_sphere()
                    .expect("sgd runs on a single sphere");
                let refined = refine_with_gd(&field, start, &cfg)?;
                Ok((sgd.normalized_energy, refined.normalized_energy))
            })
            .collect::<Result<_>>()?;
        let raw: Vec<f64> = results.iter().map(|r| r.0).collect();
        let refined: Vec<f64> = results.iter().map(|r| r.1).collect();
        rows.push(GdSgdRow {
            p_count,
            mean_normalized_energy: mean(&raw),
            std_normalized_energy: sample_std(&raw),
            refined_mean_normalized_energy: mean(&refined),
        });
    }
    Ok(rows)
}
