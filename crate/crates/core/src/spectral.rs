//! Fourier-space diagnostics: 3D transforms, Helmholtz projection of the
//! density-weighted velocity, shell-binned energy spectra and windowed
//! log-log regression of spectral exponents.
//!
//! Conventions: the forward transform is unnormalized and the inverse
//! carries `1/V`, so `sum_k |f_hat(k)|^2 / V = sum_x |f(x)|^2`. Spectra are
//! normalized the same way, which makes shell sums equal the real-space
//! energies exactly.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::diagnostics::madelung;
use crate::error::{QlgError, Result};
use crate::evolution::SimParams;
use crate::lattice::{project_phi, Axis, GridSpec, ScalarField, SpinorField, VectorField};

struct Plans {
    axes: [Arc<dyn Fft<f64>>; 3],
}

impl Plans {
    fn new(grid: GridSpec, direction: FftDirection) -> Self {
        let mut planner = FftPlanner::new();
        let axes = grid.dims().map(|n| planner.plan_fft(n, direction));
        Plans { axes }
    }
}

fn transform_in_place(grid: GridSpec, data: &mut [Complex64], direction: FftDirection) {
    let plans = Plans::new(grid, direction);
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let zero = Complex64::new(0.0, 0.0);

    data.par_chunks_mut(nz).for_each(|line| plans.axes[2].process(line));

    data.par_chunks_mut(ny * nz).for_each(|slab| {
        let mut line = vec![zero; ny];
        for z in 0..nz {
            for (y, v) in line.iter_mut().enumerate() {
                *v = slab[y * nz + z];
            }
            plans.axes[1].process(&mut line);
            for (y, v) in line.iter().enumerate() {
                slab[y * nz + z] = *v;
            }
        }
    });

    let plane = ny * nz;
    let mut scratch = vec![zero; grid.sites()];
    {
        let src = &*data;
        scratch.par_chunks_mut(nx).enumerate().for_each(|(yz, line)| {
            for (x, v) in line.iter_mut().enumerate() {
                *v = src[x * plane + yz];
            }
            plans.axes[0].process(line);
        });
    }
    data.par_chunks_mut(plane).enumerate().for_each(|(x, slab)| {
        for (yz, v) in slab.iter_mut().enumerate() {
            *v = scratch[yz * nx + x];
        }
    });
}

/// Unnormalized forward DFT, `f_hat(k) = sum_x f(x) exp(-2 pi i k.x / n)`.
pub fn forward_transform(field: &ScalarField) -> ScalarField {
    let mut out = field.clone();
    transform_in_place(field.grid(), out.data_mut(), FftDirection::Forward);
    out
}

/// Inverse DFT with the `1/V` normalization.
pub fn inverse_transform(field: &ScalarField) -> ScalarField {
    let mut out = field.clone();
    transform_in_place(field.grid(), out.data_mut(), FftDirection::Inverse);
    let scale = 1.0 / field.grid().sites() as f64;
    out.data_mut().par_iter_mut().for_each(|v| *v *= scale);
    out
}

fn forward_real(grid: GridSpec, values: &[f64]) -> ScalarField {
    let data = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_transform(&ScalarField::from_data(grid, data).expect("length checked by caller"))
}

/// Integer wavevectors and shell indices for every mode of a grid.
#[derive(Debug, Clone)]
pub struct KGrid {
    grid: GridSpec,
    wavenumbers: [Vec<i64>; 3],
}

impl KGrid {
    pub fn new(grid: GridSpec) -> Self {
        let axis_k = |n: usize| -> Vec<i64> {
            (0..n).map(|i| if i < n.div_ceil(2) { i as i64 } else { i as i64 - n as i64 }).collect()
        };
        KGrid { grid, wavenumbers: grid.dims().map(axis_k) }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Integer wavevector of the mode stored at flat index `i`.
    #[inline]
    pub fn wavevector(&self, i: usize) -> [i64; 3] {
        let [x, y, z] = self.grid.coords(i);
        [self.wavenumbers[0][x], self.wavenumbers[1][y], self.wavenumbers[2][z]]
    }

    /// Angular wavevector `2 pi k_i / n_i` in inverse lattice units.
    #[inline]
    pub fn angular(&self, i: usize) -> [f64; 3] {
        let k = self.wavevector(i);
        let d = self.grid.dims();
        [0, 1, 2].map(|c| 2.0 * std::f64::consts::PI * k[c] as f64 / d[c] as f64)
    }

    /// `round(|k|)` of the integer wavevector.
    #[inline]
    pub fn shell(&self, i: usize) -> usize {
        let k = self.wavevector(i);
        let m2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
        m2.sqrt().round() as usize
    }

    pub fn max_shell(&self) -> usize {
        let d = self.grid.dims();
        let m2: f64 = d.iter().map(|&n| ((n / 2) as f64).powi(2)).sum();
        m2.sqrt().round() as usize
    }
}

/// Splits a real vector field into divergence-free and curl-free parts.
///
/// In Fourier space the compressible part is `k_hat (k_hat . w_hat)` for
/// `k != 0`; the mean (k = 0) mode goes to the incompressible part.
/// A Nyquist wavenumber has no sign, so that component of `k` is dropped
/// (as in `spectral_gradient`); this keeps the projector Hermitian and the
/// two parts real and orthogonal. Returns `(incompressible, compressible)`.
pub fn helmholtz_split(w: &VectorField) -> (VectorField, VectorField) {
    let grid = w.grid();
    let kgrid = KGrid::new(grid);
    let dims = grid.dims();
    let hats: Vec<ScalarField> = w.components().iter().map(|c| forward_real(grid, c)).collect();
    let n = grid.sites();
    let zero = Complex64::new(0.0, 0.0);
    let mut comp_hat = [vec![zero; n], vec![zero; n], vec![zero; n]];
    let projected: Vec<[Complex64; 3]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let k = kgrid.wavevector(i);
            let mut q = kgrid.angular(i);
            for c in 0..3 {
                if 2 * k[c].unsigned_abs() as usize == dims[c] {
                    q[c] = 0.0;
                }
            }
            let q2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2];
            if q2 == 0.0 {
                return [zero; 3];
            }
            let dot = (0..3).map(|c| hats[c].data()[i] * q[c]).sum::<Complex64>() / q2;
            [dot * q[0], dot * q[1], dot * q[2]]
        })
        .collect();
    for (i, p) in projected.iter().enumerate() {
        for c in 0..3 {
            comp_hat[c][i] = p[c];
        }
    }
    let comp: [Vec<f64>; 3] = comp_hat.map(|h| {
        let f = ScalarField::from_data(grid, h).expect("grid-sized");
        inverse_transform(&f).data().iter().map(|v| v.re).collect()
    });
    let incomp: [Vec<f64>; 3] = [0, 1, 2].map(|c| {
        w.components()[c].iter().zip(&comp[c]).map(|(total, part)| total - part).collect()
    });
    (
        VectorField::from_components(grid, incomp).expect("grid-sized"),
        VectorField::from_components(grid, comp).expect("grid-sized"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectrumKind {
    IncompressibleKinetic,
    CompressibleKinetic,
    Quantum,
    TotalKinetic,
}

impl SpectrumKind {
    pub const ALL: [SpectrumKind; 4] = [
        SpectrumKind::IncompressibleKinetic,
        SpectrumKind::CompressibleKinetic,
        SpectrumKind::Quantum,
        SpectrumKind::TotalKinetic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpectrumKind::IncompressibleKinetic => "incompressible_KE",
            SpectrumKind::CompressibleKinetic => "compressible_KE",
            SpectrumKind::Quantum => "quantum",
            SpectrumKind::TotalKinetic => "total_KE",
        }
    }
}

impl fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpectrumKind {
    type Err = QlgError;

    fn from_str(s: &str) -> Result<Self> {
        SpectrumKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| QlgError::InvalidInput(format!("unknown spectrum kind '{s}'")))
    }
}

/// Energy per unit-width shell, indexed by shell number.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub kind: SpectrumKind,
    pub timestep: u64,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn accumulate_shells(kgrid: &KGrid, hats: &[&ScalarField]) -> Vec<f64> {
    let grid = kgrid.grid();
    let inv_v = 1.0 / grid.sites() as f64;
    let mut values = vec![0.0; kgrid.max_shell() + 1];
    for i in 0..grid.sites() {
        let e: f64 = hats.iter().map(|h| h.data()[i].norm_sqr()).sum();
        values[kgrid.shell(i)] += e * inv_v;
    }
    values
}

/// Shell spectrum of a real vector field: `sum_{round|k|=s} |w_hat(k)|^2 / V`.
pub fn shell_spectrum(w: &VectorField, kind: SpectrumKind, timestep: u64) -> Spectrum {
    let grid = w.grid();
    let kgrid = KGrid::new(grid);
    let hats: Vec<ScalarField> = w.components().iter().map(|c| forward_real(grid, c)).collect();
    let refs: Vec<&ScalarField> = hats.iter().collect();
    Spectrum { kind, timestep, values: accumulate_shells(&kgrid, &refs) }
}

/// Shell spectrum of a complex scalar field given in real space.
pub fn scalar_shell_spectrum(f: &ScalarField, kind: SpectrumKind, timestep: u64) -> Spectrum {
    let kgrid = KGrid::new(f.grid());
    let hat = forward_transform(f);
    Spectrum { kind, timestep, values: accumulate_shells(&kgrid, &[&hat]) }
}

/// The four spectra of one field state.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSpectra {
    pub timestep: u64,
    pub incompressible: Spectrum,
    pub compressible: Spectrum,
    pub quantum: Spectrum,
    pub total: Spectrum,
}

impl SnapshotSpectra {
    pub fn get(&self, kind: SpectrumKind) -> &Spectrum {
        match kind {
            SpectrumKind::IncompressibleKinetic => &self.incompressible,
            SpectrumKind::CompressibleKinetic => &self.compressible,
            SpectrumKind::Quantum => &self.quantum,
            SpectrumKind::TotalKinetic => &self.total,
        }
    }

    /// CSV with columns `k, E_incomp, E_comp, E_quantum, E_total_kin`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,E_incomp,E_comp,E_quantum,E_total_kin")?;
        for k in 0..self.total.values.len() {
            writeln!(
                out,
                "{k},{:e},{:e},{:e},{:e}",
                self.incompressible.values[k],
                self.compressible.values[k],
                self.quantum.values[k],
                self.total.values[k]
            )?;
        }
        Ok(())
    }

    pub fn csv_name(&self) -> String {
        format!("spectra_t{}.csv", self.timestep)
    }
}

/// Kinetic (split into Helmholtz parts) and quantum spectra of a spinor state.
///
/// The kinetic spectra are of `w = sqrt(rho) v`, the quantum spectrum is of
/// `2 grad sqrt(rho)`; each shell sum reproduces the corresponding energy
/// reported by [`crate::diagnostics::energies`].
pub fn snapshot_spectra(field: &SpinorField, _params: &SimParams, timestep: u64) -> SnapshotSpectra {
    let phi = project_phi(field);
    let flow = madelung(&phi, crate::diagnostics::default_density_floor(&phi));
    let (inc, comp) = helmholtz_split(&flow.w);
    let mut quantum_field = flow.sqrt_rho_grad.clone();
    for c in quantum_field.components_mut().iter_mut() {
        c.iter_mut().for_each(|v| *v *= 2.0);
    }
    SnapshotSpectra {
        timestep,
        incompressible: shell_spectrum(&inc, SpectrumKind::IncompressibleKinetic, timestep),
        compressible: shell_spectrum(&comp, SpectrumKind::CompressibleKinetic, timestep),
        quantum: shell_spectrum(&quantum_field, SpectrumKind::Quantum, timestep),
        total: shell_spectrum(&flow.w, SpectrumKind::TotalKinetic, timestep),
    }
}

/// Power-law fit `E ~ k^-alpha` over an inclusive shell window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFit {
    pub k_lo: usize,
    pub k_hi: usize,
    pub alpha: f64,
    pub std_error: f64,
    pub n_points: usize,
}

/// Least-squares fit of `log10 E` against `log10 k` over shells `k_lo..=k_hi`
/// with nonzero energy; `alpha` is minus the slope.
pub fn fit_exponent(spectrum: &Spectrum, k_lo: usize, k_hi: usize) -> Result<SpectralFit> {
    if k_lo >= k_hi {
        return Err(QlgError::InvalidInput(format!("fit window [{k_lo}, {k_hi}] is empty")));
    }
    let points: Vec<(f64, f64)> = (k_lo.max(1)..=k_hi)
        .filter_map(|k| {
            let e = *spectrum.values.get(k)?;
            (e > 0.0 && e.is_finite()).then(|| ((k as f64).log10(), e.log10()))
        })
        .collect();
    let n = points.len();
    if n < 3 {
        return Err(QlgError::Window { k_lo, k_hi, usable: n });
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let std_error = (ssr / (nf - 2.0) / sxx).sqrt();
    Ok(SpectralFit { k_lo, k_hi, alpha: -slope, std_error, n_points: n })
}

/// One row of the time-averaged exponent table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentRow {
    pub kind: SpectrumKind,
    pub k_lo: usize,
    pub k_hi: usize,
    /// Mean exponent over the snapshots whose fit succeeded.
    pub alpha_mean: f64,
    /// Standard deviation of the per-snapshot exponents.
    pub alpha_std: f64,
    pub n_snapshots: usize,
    /// Fit errors for snapshots that were skipped, as `(timestep, message)`.
    pub errors: Vec<(u64, String)>,
}

/// Mean and spread of per-snapshot exponents for every kind and window.
///
/// A failing fit on one snapshot is recorded in the row and does not abort
/// the table; a row whose fits all failed has NaN statistics.
pub fn time_averaged_exponents(
    snapshots: &[SnapshotSpectra],
    windows: &[(usize, usize)],
) -> Result<Vec<ExponentRow>> {
    if snapshots.len() < 2 {
        return Err(QlgError::InvalidInput(format!(
            "time averaging needs at least 2 snapshots, got {}",
            snapshots.len()
        )));
    }
    Ok(exponent_rows(snapshots, windows))
}

/// Per-kind, per-window exponent statistics without a minimum snapshot
/// count; with one snapshot the spread column is 0.
pub fn exponent_rows(snapshots: &[SnapshotSpectra], windows: &[(usize, usize)]) -> Vec<ExponentRow> {
    let mut rows = Vec::new();
    for kind in SpectrumKind::ALL {
        for &(k_lo, k_hi) in windows {
            let mut alphas = Vec::new();
            let mut errors = Vec::new();
            for snap in snapshots {
                match fit_exponent(snap.get(kind), k_lo, k_hi) {
                    Ok(fit) => alphas.push(fit.alpha),
                    Err(e) => errors.push((snap.timestep, e.to_string())),
                }
            }
            let (alpha_mean, alpha_std) = mean_std(&alphas);
            rows.push(ExponentRow {
                kind,
                k_lo,
                k_hi,
                alpha_mean,
                alpha_std,
                n_snapshots: alphas.len(),
                errors,
            });
        }
    }
    rows
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    match values.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], 0.0),
        n => {
            // work with offsets from the first sample so equal inputs give an exact zero spread
            let d: Vec<f64> = values.iter().map(|v| v - values[0]).collect();
            let shift = d.iter().sum::<f64>() / n as f64;
            let var = d.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / (n - 1) as f64;
            (values[0] + shift, var.sqrt())
        }
    }
}

/// CSV with columns `kind, k_lo, k_hi, alpha_mean, alpha_std, n_snapshots`.
pub fn write_fit_table<W: Write>(rows: &[ExponentRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "kind,k_lo,k_hi,alpha_mean,alpha_std,n_snapshots")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{}",
            r.kind, r.k_lo, r.k_hi, r.alpha_mean, r.alpha_std, r.n_snapshots
        )?;
    }
    Ok(())
}

/// Parses `"4:12,14:24"` into inclusive shell windows.
pub fn parse_windows(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut windows = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| QlgError::InvalidInput(format!("window '{part}' is not lo:hi")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| QlgError::InvalidInput(format!("window bound '{s}' is not an integer")))
        };
        windows.push((parse(lo)?, parse(hi)?));
    }
    validate_windows(&windows)?;
    Ok(windows)
}

/// Windows must be nonempty, ordered and non-overlapping.
pub fn validate_windows(windows: &[(usize, usize)]) -> Result<()> {
    if windows.is_empty() {
        return Err(QlgError::InvalidInput("no fit windows given".into()));
    }
    for (i, &(lo, hi)) in windows.iter().enumerate() {
        if lo >= hi {
            return Err(QlgError::InvalidInput(format!("window {lo}:{hi} must have lo < hi")));
        }
        if i > 0 && lo <= windows[i - 1].1 {
            return Err(QlgError::InvalidInput(format!(
                "window {lo}:{hi} overlaps or precedes {}:{}",
                windows[i - 1].0,
                windows[i - 1].1
            )));
        }
    }
    Ok(())
}

/// Gradient of a real scalar along `axis` by spectral differentiation.
pub fn spectral_gradient(grid: GridSpec, values: &[f64], axis: Axis) -> Vec<f64> {
    let kgrid = KGrid::new(grid);
    let mut hat = forward_real(grid, values);
    let n_axis = grid.extent(axis) as i64;
    hat.data_mut().par_iter_mut().enumerate().for_each(|(i, v)| {
        let k = kgrid.wavevector(i)[axis.index()];
        if 2 * k.abs() == n_axis {
            *v = Complex64::new(0.0, 0.0);
        } else {
            let q = kgrid.angular(i)[axis.index()];
            *v *= Complex64::new(0.0, q);
        }
    });
    inverse_transform(&hat).data().iter().map(|v| v.re).collect()
}
