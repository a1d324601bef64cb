//! Madelung fields, the energy budget, vortex topology and recurrence
//! detection.
//!
//! Velocity convention: `phi = sqrt(rho) exp(i theta / 2)` with `v = grad theta`,
//! so `theta = 2 arg(phi)` and one quantum of circulation is `4 pi` in
//! `theta`. Winding numbers are reported in units of `2 pi` of `arg(phi)`.
//!
//! The energy split is the Hamiltonian of the lattice equation
//! `i d_t phi = -lap(phi) + s (g |phi|^2 - 1) phi` (with `s` the phase
//! scale), scaled by 4 so that the kinetic term is exactly `sum (sqrt(rho) v)^2`:
//!
//! ```text
//! E_kin = sum (sqrt(rho) v)^2
//! E_qu  = 4 sum (grad sqrt(rho))^2
//! E_int = 2 s g sum (rho - 1/g)^2      (g > 0)
//! ```

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{QlgError, Result};
use crate::evolution::{Hook, SimParams};
use crate::lattice::{project_phi, Axis, GridSpec, ScalarField, SpinorField, VectorField};
use crate::reduce::{chunked_sum, chunked_sum_indexed};
use crate::spectral::helmholtz_split;

/// Density floor relative to the maximum density.
pub const DENSITY_FLOOR_FRACTION: f64 = 1e-12;

pub fn default_density_floor(phi: &ScalarField) -> f64 {
    let max_rho = phi.data().iter().map(|p| p.norm_sqr()).fold(0.0, f64::max);
    (DENSITY_FLOOR_FRACTION * max_rho).max(f64::MIN_POSITIVE)
}

/// Density, density-weighted velocity and `grad sqrt(rho)`.
#[derive(Debug, Clone)]
pub struct FlowFields {
    pub rho: Vec<f64>,
    /// `w = sqrt(rho) v`.
    pub w: VectorField,
    pub sqrt_rho_grad: VectorField,
}

/// Madelung fields from second-order centered differences `D`.
///
/// With `s = max(sqrt(rho), sqrt(density_floor))`,
/// `w = 2 Im(conj(phi) D phi) / s` and `grad sqrt(rho) = Re(conj(phi) D phi) / s`.
/// These tend to `sqrt(rho) grad theta` and `grad sqrt(rho)` in the continuum,
/// need no phase unwrapping, and split `4 |D phi|^2` exactly into its
/// kinetic and quantum parts, which keeps the lattice energy conserved.
pub fn madelung(phi: &ScalarField, density_floor: f64) -> FlowFields {
    assert!(density_floor > 0.0, "density floor must be positive");
    let grid = phi.grid();
    let data = phi.data();
    let rho: Vec<f64> = data.par_iter().map(|p| p.norm_sqr()).collect();
    let sqrt_floor = density_floor.sqrt();

    let per_site: Vec<[f64; 6]> = (0..grid.sites())
        .into_par_iter()
        .map(|i| {
            let mut out = [0.0; 6];
            let denom = rho[i].sqrt().max(sqrt_floor);
            for axis in Axis::ALL {
                let fwd = grid.neighbor(i, axis, 1);
                let bwd = grid.neighbor(i, axis, -1);
                let dphi = (data[fwd] - data[bwd]) * 0.5;
                let flux = data[i].conj() * dphi;
                out[axis.index()] = 2.0 * flux.im / denom;
                out[3 + axis.index()] = flux.re / denom;
            }
            out
        })
        .collect();
    let w = [0, 1, 2].map(|c| per_site.iter().map(|v| v[c]).collect());
    let g = [0, 1, 2].map(|c| per_site.iter().map(|v| v[3 + c]).collect());
    FlowFields {
        rho,
        w: VectorField::from_components(grid, w).expect("grid-sized"),
        sqrt_rho_grad: VectorField::from_components(grid, g).expect("grid-sized"),
    }
}

/// Energy split at one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBudget {
    pub timestep: u64,
    pub e_kin: f64,
    pub e_qu: f64,
    pub e_int: f64,
    pub e_tot: f64,
    pub e_kin_incomp: f64,
    pub e_kin_comp: f64,
}

pub fn energies(field: &SpinorField, params: &SimParams, timestep: u64) -> EnergyBudget {
    energies_of_phi(&project_phi(field), params, timestep)
}

pub fn energies_of_phi(phi: &ScalarField, params: &SimParams, timestep: u64) -> EnergyBudget {
    let flow = madelung(phi, default_density_floor(phi));
    let e_kin = flow.w.norm_sqr();
    let e_qu = 4.0 * flow.sqrt_rho_grad.norm_sqr();
    let s = params.phase_scale;
    let e_int = if params.g > 0.0 {
        let rho0 = 1.0 / params.g;
        2.0 * s * params.g * chunked_sum(&flow.rho, |r| (r - rho0).powi(2))
    } else {
        // linear limit, dropping the constant that diverges as g -> 0
        -4.0 * s * chunked_sum(&flow.rho, |r| *r)
    };
    let (inc, comp) = helmholtz_split(&flow.w);
    EnergyBudget {
        timestep,
        e_kin,
        e_qu,
        e_int,
        e_tot: e_kin + e_qu + e_int,
        e_kin_incomp: inc.norm_sqr(),
        e_kin_comp: comp.norm_sqr(),
    }
}

fn are_neighbors(grid: GridSpec, a: [usize; 3], b: [usize; 3]) -> bool {
    let dims = grid.dims();
    let mut steps = 0;
    for c in 0..3 {
        let d = (a[c] as i64 - b[c] as i64).rem_euclid(dims[c] as i64);
        if d == 1 || d == dims[c] as i64 - 1 {
            steps += 1;
        } else if d != 0 {
            return false;
        }
    }
    steps == 1
}

/// Net winding of `arg(phi)` around a closed loop of neighbouring sites.
///
/// The loop is given as its ordered sites; it closes from the last site back
/// to the first (repeating the first site at the end is also accepted).
pub fn winding_number(phi: &ScalarField, sites: &[[usize; 3]], density_floor: f64) -> Result<i64> {
    let grid = phi.grid();
    let mut path: Vec<[usize; 3]> = sites.to_vec();
    if path.len() > 1 && path.first() == path.last() {
        path.pop();
    }
    if path.len() < 3 {
        return Err(QlgError::InvalidInput("winding loop needs at least 3 distinct sites".into()));
    }
    for j in 0..path.len() {
        let (a, b) = (path[j], path[(j + 1) % path.len()]);
        if !are_neighbors(grid, a, b) {
            return Err(QlgError::InvalidInput(format!("loop sites {a:?} and {b:?} are not neighbours")));
        }
    }
    let values: Vec<Complex64> = path.iter().map(|s| phi.at(s[0], s[1], s[2])).collect();
    for (s, v) in path.iter().zip(&values) {
        if v.norm_sqr() < density_floor {
            return Err(QlgError::IndeterminateWinding { site: *s, density: v.norm_sqr() });
        }
    }
    let total: f64 = (0..values.len())
        .map(|j| (values[j].conj() * values[(j + 1) % values.len()]).arg())
        .sum();
    Ok((total / (2.0 * std::f64::consts::PI)).round() as i64)
}

/// Counter-clockwise square loop (right-handed about `axis`) in the plane
/// through `origin`, with lower corner at `origin` and side `side` sites.
pub fn square_loop(grid: GridSpec, axis: Axis, origin: [usize; 3], side: usize) -> Vec<[usize; 3]> {
    assert!(side >= 1, "loop side must be positive");
    let (t1, t2) = axis.transverse();
    let dims = grid.dims();
    let at = |u: usize, v: usize| {
        let mut s = origin;
        s[t1.index()] = (origin[t1.index()] + u) % dims[t1.index()];
        s[t2.index()] = (origin[t2.index()] + v) % dims[t2.index()];
        s
    };
    let mut path = Vec::with_capacity(4 * side);
    for u in 0..side {
        path.push(at(u, 0));
    }
    for v in 0..side {
        path.push(at(side, v));
    }
    for u in (1..=side).rev() {
        path.push(at(u, side));
    }
    for v in (1..=side).rev() {
        path.push(at(0, v));
    }
    path
}

/// Sites with `|phi| < c |phi|_max` and their 6-connected periodic components.
#[derive(Debug, Clone)]
pub struct VortexMask {
    pub threshold: f64,
    pub mask: Vec<bool>,
    pub components: usize,
    pub voxels: usize,
    /// Voxel count of each component, largest first.
    pub component_sizes: Vec<usize>,
}

pub fn vortex_core_mask(phi: &ScalarField, c: f64) -> VortexMask {
    assert!(c > 0.0 && c < 1.0, "core fraction must lie in (0, 1)");
    let grid = phi.grid();
    let cut = c * phi.max_abs();
    let mask: Vec<bool> = phi.data().iter().map(|p| p.norm() < cut).collect();
    let voxels = mask.iter().filter(|&&m| m).count();

    let mut label = vec![usize::MAX; grid.sites()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..grid.sites() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            for axis in Axis::ALL {
                for d in [-1, 1] {
                    let j = grid.neighbor(i, axis, d);
                    if mask[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    VortexMask { threshold: c, mask, components: sizes.len(), voxels, component_sizes: sizes }
}

/// `|<a, b>| / (|a| |b|)`.
pub fn fidelity(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(QlgError::InvalidInput("fidelity of fields on different grids".into()));
    }
    let (na, nb) = (a.norm_sqr(), b.norm_sqr());
    if na == 0.0 || nb == 0.0 {
        return Err(QlgError::ZeroNorm);
    }
    let (da, db) = (a.data(), b.data());
    let re = chunked_sum_indexed(da.len(), |i| (da[i].conj() * db[i]).re);
    let im = chunked_sum_indexed(da.len(), |i| (da[i].conj() * db[i]).im);
    Ok((Complex64::new(re, im).norm() / (na * nb).sqrt()).min(1.0))
}

/// Maps the value at site `x` to site `-x mod L` on every axis.
pub fn point_inversion(phi: &ScalarField) -> ScalarField {
    let grid = phi.grid();
    let data = (0..grid.sites()).map(|i| phi.data()[grid.inverted_index(i)]).collect();
    ScalarField::from_data(grid, data).expect("grid-sized")
}

pub fn point_inversion_spinor(field: &SpinorField) -> SpinorField {
    let grid = field.grid();
    let data = (0..grid.sites()).map(|i| field.data()[grid.inverted_index(i)]).collect();
    SpinorField::from_data(grid, data).expect("grid-sized")
}

/// Healing length `1 / sqrt(a g rho0)`.
pub fn coherence_length(params: &SimParams, rho0: f64) -> f64 {
    assert!(rho0 > 0.0, "background density must be positive");
    1.0 / (params.a * params.g * rho0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub energy: EnergyBudget,
    pub fidelity: f64,
    pub fidelity_inversion: f64,
    pub core_voxels: usize,
}

impl TraceSample {
    pub fn timestep(&self) -> u64 {
        self.energy.timestep
    }
}

/// Sampled energies and fidelities of a run against its initial state.
#[derive(Debug, Clone, Default)]
pub struct RecurrenceTrace {
    pub samples: Vec<TraceSample>,
}

pub const TRACE_HEADER: &str =
    "timestep,E_kin,E_qu,E_int,E_tot,E_kin_incomp,E_kin_comp,fidelity,fidelity_inversion,core_voxels";

impl RecurrenceTrace {
    pub fn push(&mut self, sample: TraceSample) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if sample.timestep() <= last.timestep() {
                return Err(QlgError::InvalidInput(format!(
                    "trace samples must increase in time ({} after {})",
                    sample.timestep(),
                    last.timestep()
                )));
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn timesteps(&self) -> Vec<u64> {
        self.samples.iter().map(TraceSample::timestep).collect()
    }

    pub fn fidelities(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.fidelity).collect()
    }

    /// Recurrence peaks of the fidelity against the initial state.
    pub fn peaks(&self, threshold: f64) -> Result<Vec<(u64, f64)>> {
        detect_recurrence(&self.timesteps(), &self.fidelities(), threshold)
    }

    /// Largest relative deviation of `E_tot` from its first sample.
    pub fn energy_drift(&self) -> f64 {
        let Some(first) = self.samples.first() else { return 0.0 };
        let e0 = first.energy.e_tot;
        self.samples.iter().map(|s| ((s.energy.e_tot - e0) / e0).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv_row<W: Write>(sample: &TraceSample, mut out: W) -> std::io::Result<()> {
        let e = &sample.energy;
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:.12},{:.12},{}",
            e.timestep,
            e.e_kin,
            e.e_qu,
            e.e_int,
            e.e_tot,
            e.e_kin_incomp,
            e.e_kin_comp,
            sample.fidelity,
            sample.fidelity_inversion,
            sample.core_voxels
        )
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for s in &self.samples {
            Self::write_csv_row(s, &mut out)?;
        }
        Ok(())
    }
}

/// Recurrence peaks in a sampled fidelity series.
///
/// The series is split into excursions above `threshold`; the excursion that
/// contains the first sample (the initial state) is skipped, and each later
/// excursion contributes its maximum. An excursion still open at the last
/// sample is reported only if its maximum lies strictly before the end.
pub fn detect_recurrence(timesteps: &[u64], values: &[f64], threshold: f64) -> Result<Vec<(u64, f64)>> {
    if timesteps.len() != values.len() {
        return Err(QlgError::InvalidInput("timesteps and values differ in length".into()));
    }
    if values.len() < 3 {
        return Err(QlgError::InvalidInput(format!("need at least 3 samples, got {}", values.len())));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(QlgError::InvalidInput(format!("threshold {threshold} outside (0, 1)")));
    }
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < values.len() && values[i] > threshold {
        i += 1;
    }
    while i < values.len() {
        if values[i] <= threshold {
            i += 1;
            continue;
        }
        let mut best = i;
        while i < values.len() && values[i] > threshold {
            if values[i] > values[best] {
                best = i;
            }
            i += 1;
        }
        let open = i == values.len();
        if !open || best + 1 < values.len() {
            peaks.push((timesteps[best], values[best]));
        }
    }
    Ok(peaks)
}

/// Measured against diffusion-ordered recurrence times for one grid pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCheck {
    pub l1: usize,
    pub l2: usize,
    pub t1: f64,
    pub t2: f64,
    /// `t1 (l2 / l1)^2`.
    pub t2_theory: f64,
    /// `t2 / t2_theory`.
    pub ratio: f64,
}

/// Compares each consecutive pair of `(L, T)` against `T ~ L^2`.
pub fn diffusion_scaling_check(pairs: &[(usize, f64)]) -> Vec<ScalingCheck> {
    pairs
        .windows(2)
        .map(|w| {
            let ((l1, t1), (l2, t2)) = (w[0], w[1]);
            let t2_theory = t1 * (l2 as f64 / l1 as f64).powi(2);
            ScalingCheck { l1, l2, t1, t2, t2_theory, ratio: t2 / t2_theory }
        })
        .collect()
}

/// Hook that records a [`RecurrenceTrace`] against a fixed initial state.
pub struct TraceRecorder<'a> {
    params: SimParams,
    initial: ScalarField,
    initial_inverted: ScalarField,
    core_fraction: f64,
    pub trace: RecurrenceTrace,
    sink: Option<Box<dyn Write + 'a>>,
}

impl<'a> TraceRecorder<'a> {
    pub fn new(initial: &SpinorField, params: SimParams, core_fraction: f64) -> Self {
        let phi0 = project_phi(initial);
        TraceRecorder {
            params,
            initial_inverted: point_inversion(&phi0),
            initial: phi0,
            core_fraction,
            trace: RecurrenceTrace::default(),
            sink: None,
        }
    }

    /// Streams each sample as a CSV row to `sink` as it is recorded.
    pub fn with_sink(mut self, sink: Box<dyn Write + 'a>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn sample(&self, step: u64, field: &SpinorField) -> Result<TraceSample> {
        let phi = project_phi(field);
        Ok(TraceSample {
            energy: energies_of_phi(&phi, &self.params, step),
            fidelity: fidelity(&self.initial, &phi)?,
            fidelity_inversion: fidelity(&self.initial_inverted, &phi)?,
            core_voxels: vortex_core_mask(&phi, self.core_fraction).voxels,
        })
    }
}

impl Hook for TraceRecorder<'_> {
    fn observe(&mut self, step: u64, field: &SpinorField) -> Result<()> {
        let sample = self.sample(step, field)?;
        if let Some(sink) = self.sink.as_mut() {
            RecurrenceTrace::write_csv_row(&sample, sink).map_err(|e| QlgError::io("trace", e))?;
        }
        self.trace.push(sample)
    }
}
