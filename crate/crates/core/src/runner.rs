//! Experiment drivers behind the `qlg` subcommands.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use crate::catmap::{cat_period, cat_step, read_pgm, write_pgm, PixelImage};
use crate::config::RunConfig;
use crate::diagnostics::{
    detect_recurrence, diffusion_scaling_check, fidelity, RecurrenceTrace, ScalingCheck, TraceRecorder, TRACE_HEADER,
};
use crate::error::{QlgError, Result};
use crate::evolution::{self, evolve_step_in_place, Hook, SimParams};
use crate::initcond::{compose, recurrence_class_check, InitLayout, RecurrenceClass};
use crate::lattice::{project_phi, GridSpec, SpinorField};
use crate::snapshot::{load_snapshot, save_snapshot, write_atomic, CheckpointMeta, Snapshot};
use crate::spectral::{exponent_rows, snapshot_spectra, write_fit_table, ExponentRow, SnapshotSpectra};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| QlgError::io(dir, e))
}

/// Builds the configured initial state, writes it and its energy report.
pub fn init(cfg: &RunConfig, out: &Path) -> Result<RecurrenceClass> {
    cfg.params.validate()?;
    let field = compose(cfg.grid, &cfg.layout()?, &cfg.params)?;
    let class = recurrence_class_check(&field, &cfg.params)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_snapshot(&Snapshot::new(field, 0, &cfg.params), out)?;
    let report = out.with_extension("report.txt");
    let text = format!("{class}\n");
    write_atomic(&report, |w| w.write_all(text.as_bytes()))?;
    Ok(class)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured step count.
    pub steps: Option<u64>,
    /// Starts from this snapshot instead of the configured layout.
    pub input: Option<PathBuf>,
    /// Continues from the checkpoint in the output directory if present.
    pub resume: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub start_step: u64,
    pub end_step: u64,
    pub final_snapshot: PathBuf,
    pub trace_csv: PathBuf,
    pub trace: RecurrenceTrace,
    pub peaks: Vec<(u64, f64)>,
}

pub fn snapshot_name(step: u64) -> String {
    format!("snap_t{step}.qlg")
}

/// Keeps the header and rows before `step` of an existing trace file.
fn truncate_trace(path: &Path, step: u64) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| QlgError::io(path, e))?;
    let mut kept = String::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| QlgError::io(path, e))?;
        let t = line.split(',').next().and_then(|t| t.parse::<u64>().ok());
        if t.is_none_or(|t| t < step) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    write_atomic(path, |w| w.write_all(kept.as_bytes()))
}

/// Dispatches the run's sampled steps to the trace, snapshot, checkpoint and
/// norm checks, each at its own cadence.
struct RunHooks<'a> {
    cfg: &'a RunConfig,
    hash: String,
    recorder: TraceRecorder<'a>,
    norm0: f64,
    end: u64,
}

impl Hook for RunHooks<'_> {
    fn observe(&mut self, step: u64, field: &SpinorField) -> Result<()> {
        let drift = (field.norm_sqr() - self.norm0).abs() / self.norm0;
        if !drift.is_finite() || drift > self.cfg.norm_tolerance {
            return Err(QlgError::NumericInvariant(format!(
                "step {step}: relative norm drift {drift:e} exceeds {:e}",
                self.cfg.norm_tolerance
            )));
        }
        let at_end = step == self.end;
        if step.is_multiple_of(self.cfg.hook_every) || at_end {
            self.recorder.observe(step, field)?;
        }
        let dir = &self.cfg.output_dir;
        if step.is_multiple_of(self.cfg.params.steps_per_output) || at_end {
            save_snapshot(&Snapshot::new(field.clone(), step, &self.cfg.params), &dir.join(snapshot_name(step)))?;
        }
        if self.cfg.checkpoint_every > 0 && step.is_multiple_of(self.cfg.checkpoint_every) {
            CheckpointMeta::write(dir, &self.hash, &Snapshot::new(field.clone(), step, &self.cfg.params))?;
        }
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Evolves the configured state, writing `trace.csv`, periodic snapshots,
/// checkpoints and `final.qlg` into the output directory.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.params.validate()?;
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let hash = cfg.hash();
    let initial_path = dir.join("initial.qlg");
    let trace_path = dir.join("trace.csv");
    let end = opts.steps.unwrap_or(cfg.n_steps);

    let initial = match &opts.input {
        Some(path) => {
            let snap = load_snapshot(path)?;
            if snap.field.grid() != cfg.grid {
                return Err(QlgError::InvalidInput(format!(
                    "{}: grid {:?} differs from configured {:?}",
                    path.display(),
                    snap.field.grid().dims(),
                    cfg.grid.dims()
                )));
            }
            snap.field
        }
        None => compose(cfg.grid, &cfg.layout()?, &cfg.params)?,
    };

    let checkpoint = if opts.resume { CheckpointMeta::read(&dir)? } else { None };
    let (start, field, initial) = match checkpoint {
        Some(meta) => {
            if meta.config_hash != hash {
                return Err(QlgError::InvalidInput(format!(
                    "checkpoint in {} was written by a different configuration",
                    dir.display()
                )));
            }
            if meta.step > end {
                return Err(QlgError::InvalidInput(format!("checkpoint step {} is past the run end {end}", meta.step)));
            }
            let snap = load_snapshot(&meta.snapshot)?;
            if snap.timestep != meta.step || snap.field.grid() != cfg.grid {
                return Err(QlgError::Format(format!(
                    "{} does not match its checkpoint sidecar",
                    meta.snapshot.display()
                )));
            }
            let initial = if initial_path.exists() { load_snapshot(&initial_path)?.field } else { initial };
            truncate_trace(&trace_path, meta.step)?;
            info!("resuming from step {}", meta.step);
            (meta.step, snap.field, initial)
        }
        None => {
            save_snapshot(&Snapshot::new(initial.clone(), 0, &cfg.params), &initial_path)?;
            write_atomic(&trace_path, |w| writeln!(w, "{TRACE_HEADER}"))?;
            (0, initial.clone(), initial)
        }
    };

    let sink = OpenOptions::new().append(true).open(&trace_path).map_err(|e| QlgError::io(&trace_path, e))?;
    let recorder =
        TraceRecorder::new(&initial, cfg.params, cfg.core_fraction).with_sink(Box::new(BufWriter::new(sink)));
    let mut hooks = RunHooks { cfg, hash, recorder, norm0: initial.norm_sqr(), end };
    if hooks.norm0 == 0.0 {
        return Err(QlgError::ZeroNorm);
    }
    let mut cadence = gcd(cfg.hook_every, cfg.params.steps_per_output);
    if cfg.checkpoint_every > 0 {
        cadence = gcd(cadence, cfg.checkpoint_every);
    }
    let result = evolution::run(field, &cfg.params, start, end - start, cadence, &mut [&mut hooks]);
    // flush whatever rows were recorded, also when the run failed
    let RunHooks { recorder, .. } = hooks;
    let trace = recorder.trace.clone();
    drop(recorder);
    let field = result?;

    let final_snapshot = dir.join("final.qlg");
    save_snapshot(&Snapshot::new(field, end, &cfg.params), &final_snapshot)?;
    let peaks = if trace.samples.len() >= 3 { trace.peaks(cfg.recurrence_threshold)? } else { Vec::new() };
    Ok(RunSummary { start_step: start, end_step: end, final_snapshot, trace_csv: trace_path, trace, peaks })
}

/// Spectra CSV per snapshot plus the exponent table over all of them.
pub fn spectra(inputs: &[PathBuf], windows: &[(usize, usize)], out_dir: &Path) -> Result<Vec<ExponentRow>> {
    if inputs.is_empty() {
        return Err(QlgError::InvalidInput("no snapshots given".into()));
    }
    crate::spectral::validate_windows(windows)?;
    create_dir(out_dir)?;
    let mut all: Vec<SnapshotSpectra> = Vec::new();
    for path in inputs {
        let snap = load_snapshot(path)?;
        let spectra = snapshot_spectra(&snap.field, &snap.params(), snap.timestep);
        write_atomic(&out_dir.join(spectra.csv_name()), |w| spectra.write_csv(w))?;
        all.push(spectra);
    }
    let rows = exponent_rows(&all, windows);
    for row in &rows {
        for (t, e) in &row.errors {
            log::warn!("{} {}:{} at t={t}: {e}", row.kind, row.k_lo, row.k_hi);
        }
    }
    write_atomic(&out_dir.join("fit_table.csv"), |w| write_fit_table(&rows, w))?;
    Ok(rows)
}

/// Result of one grid of the recurrence experiment.
#[derive(Debug, Clone)]
pub struct GridRecurrence {
    pub l: usize,
    pub params: SimParams,
    /// First recurrence peak `(step, fidelity)`, if any within budget.
    pub peak: Option<(u64, f64)>,
    pub steps_run: u64,
}

#[derive(Debug, Clone)]
pub struct RecurrenceReport {
    pub grids: Vec<GridRecurrence>,
    pub scaling: Vec<ScalingCheck>,
}

impl RecurrenceReport {
    pub fn conclusive(&self) -> bool {
        self.grids.iter().all(|g| g.peak.is_some())
    }
}

impl std::fmt::Display for RecurrenceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:>6} {:>12} {:>12} {:>10} {:>10} {:>12}", "L", "a", "phase_scale", "T", "fidelity", "steps_run")?;
        for g in &self.grids {
            let (t, fid) = match g.peak {
                Some((t, v)) => (t.to_string(), format!("{v:.4}")),
                None => ("none".into(), "-".into()),
            };
            writeln!(f, "{:>6} {:>12.4e} {:>12.4e} {:>10} {:>10} {:>12}", g.l, g.params.a, g.params.phase_scale, t, fid, g.steps_run)?;
        }
        if self.conclusive() {
            for s in &self.scaling {
                writeln!(
                    f,
                    "T({})/T({}) = {:.4}, (L2/L1)^2 = {:.4}, ratio = {:.4}",
                    s.l2,
                    s.l1,
                    s.t2 / s.t1,
                    (s.l2 as f64 / s.l1 as f64).powi(2),
                    s.ratio
                )?;
            }
        } else {
            writeln!(f, "inconclusive: no recurrence within the step budget on every grid")?;
        }
        Ok(())
    }
}

/// Steps `field` until the first recurrence excursion above `threshold`
/// closes or `budget` steps pass; fidelity is sampled every step.
pub fn first_recurrence(
    initial: &SpinorField,
    params: &SimParams,
    threshold: f64,
    budget: u64,
) -> Result<(Option<(u64, f64)>, u64)> {
    let phi0 = project_phi(initial);
    let mut field = initial.clone();
    let mut ts = vec![0u64];
    let mut fs = vec![1.0];
    let mut left_start = false;
    let mut above = false;
    for step in 1..=budget {
        evolve_step_in_place(&mut field, params);
        let f = fidelity(&phi0, &project_phi(&field))?;
        ts.push(step);
        fs.push(f);
        if f <= threshold {
            left_start = true;
            if above {
                let peaks = detect_recurrence(&ts, &fs, threshold)?;
                return Ok((peaks.first().copied(), step));
            }
        } else if left_start {
            above = true;
        }
    }
    let peaks = if ts.len() >= 3 { detect_recurrence(&ts, &fs, threshold)? } else { Vec::new() };
    Ok((peaks.first().copied(), budget))
}

/// Runs the configured layout on each grid with parameters rescaled from
/// `reference` so that all grids describe the same physical system.
pub fn recurrence(cfg: &RunConfig, grids: &[usize], reference: usize, budget: u64) -> Result<RecurrenceReport> {
    if grids.len() < 2 {
        return Err(QlgError::InvalidInput("need at least two grids".into()));
    }
    if grids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(QlgError::InvalidInput("grids must be increasing".into()));
    }
    let mut out = Vec::new();
    for &l in grids {
        let grid = GridSpec::cubic(l)?;
        let params = cfg.params.rescaled_for_grid(reference, l);
        let layout = match &cfg.layout {
            crate::config::LayoutSource::Preset(name) if name == "single" => {
                InitLayout::single(grid, cfg.winding, cfg.amplitude_rescale)?
            }
            crate::config::LayoutSource::Preset(name) => InitLayout::preset(name, grid, cfg.winding, cfg.amplitude_rescale)?,
            crate::config::LayoutSource::File(p) => {
                return Err(QlgError::InvalidInput(format!(
                    "recurrence needs a preset layout that scales with the grid, got {}",
                    p.display()
                )))
            }
        };
        let initial = compose(grid, &layout, &params)?;
        // budget is for the largest grid; smaller grids get the diffusion-scaled share
        let l_max = *grids.last().expect("nonempty");
        let grid_budget = (budget as f64 * (l as f64 / l_max as f64).powi(2)).ceil() as u64;
        let (peak, steps_run) = first_recurrence(&initial, &params, cfg.recurrence_threshold, grid_budget)?;
        info!("L={l}: peak {peak:?} after {steps_run} steps");
        out.push(GridRecurrence { l, params, peak, steps_run });
    }
    let pairs: Vec<(usize, f64)> = out.iter().filter_map(|g| g.peak.map(|(t, _)| (g.l, t as f64))).collect();
    let scaling = if pairs.len() == out.len() { diffusion_scaling_check(&pairs) } else { Vec::new() };
    Ok(RecurrenceReport { grids: out, scaling })
}

#[derive(Debug, Clone)]
pub struct CatmapReport {
    pub n: u64,
    pub period: u64,
    pub half_inversion: bool,
}

impl std::fmt::Display for CatmapReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "period={}, half_inversion={}", self.period, self.half_inversion)
    }
}

/// Period report, plus `steps` iterations of an optional image written to
/// `out`.
pub fn catmap(n: u64, image: Option<&Path>, steps: u64, out: Option<&Path>) -> Result<CatmapReport> {
    if n == 0 || n >= 1 << 31 {
        return Err(QlgError::InvalidInput(format!("--n must lie in [1, 2^31), got {n}")));
    }
    let (period, half_inversion) = cat_period(n);
    if let Some(path) = image {
        let mut img = read_pgm(path)?;
        if img.side() as u64 != n {
            return Err(QlgError::InvalidInput(format!("{} is {}x{}, expected {n}x{n}", path.display(), img.side(), img.side())));
        }
        for _ in 0..steps % period {
            img = cat_step(&img);
        }
        let target = out.map(Path::to_path_buf).unwrap_or_else(|| path.with_extension(format!("t{steps}.pgm")));
        write_pgm(&img, &target)?;
    } else if let Some(target) = out {
        let side = n as usize;
        let mut img = PixelImage::from_fn(side, |x, y| ((x * 255 / side.max(2)) ^ (y * 255 / side.max(2))) as u8)?;
        for _ in 0..steps % period {
            img = cat_step(&img);
        }
        write_pgm(&img, target)?;
    }
    Ok(CatmapReport { n, period, half_inversion })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcd_values() {
        assert_eq!(gcd(100, 1000), 100);
        assert_eq!(gcd(6, 4), 2);
    }
}
