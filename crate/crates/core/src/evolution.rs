//! The unitary collide-stream timestep.
//!
//! One step applies `U = U_1[Omega/2] U_0[Omega/2]`, where for component
//! `gamma`
//!
//! ```text
//! U_gamma[Omega] = J_x^2 J_y^2 J_z^2 exp(-i phase_scale Omega)
//! J_axis         = S(-1) C S(+1) C
//! ```
//!
//! Operators act right to left. `S(+1)` pulls the selected component from
//! the neighbour at `x + 1`, `C` is the square root of swap and
//! `Omega = g |alpha + beta|^2 - 1`. In lattice units (unit spacing, one
//! step per unit time) the projected field `phi = alpha + beta` follows
//! `i d_t phi = -lap(phi) + phase_scale (g |phi|^2 - 1) phi` up to
//! corrections of the order of the squared lattice wavenumber.

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{QlgError, Result};
use crate::lattice::{for_each_line, Axis, Pair, SpinorField};

/// Coupling, core scale and nonlinear phase scale of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Nonlinear coupling `g`.
    pub g: f64,
    /// Radial scaling parameter of the vortex profiles, sets the core size `~ a^{-1/2}`.
    pub a: f64,
    /// Multiplier of `Omega` in the per-step phase rotation.
    pub phase_scale: f64,
    /// Cadence, in steps, of snapshot output during a run.
    pub steps_per_output: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { g: 1.0, a: 0.04, phase_scale: 0.1, steps_per_output: 1000 }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        // g = 0 is the linear limit and is allowed
        if !(self.g.is_finite() && self.g >= 0.0) || !positive(self.a) || !positive(self.phase_scale) {
            return Err(QlgError::InvalidInput(format!(
                "g must be >= 0, a and phase_scale > 0, all finite (got g={}, a={}, phase_scale={})",
                self.g, self.a, self.phase_scale
            )));
        }
        if self.steps_per_output == 0 {
            return Err(QlgError::InvalidInput("steps_per_output must be positive".into()));
        }
        Ok(())
    }

    /// The same physical set-up on a grid of extent `to` instead of `from`.
    ///
    /// Lengths scale with the grid and times with its square, so `a` and
    /// `phase_scale` both scale as `(from / to)^2`.
    pub fn rescaled_for_grid(&self, from: usize, to: usize) -> SimParams {
        let f = (from as f64 / to as f64).powi(2);
        SimParams { a: self.a * f, phase_scale: self.phase_scale * f, ..*self }
    }

    #[inline]
    pub fn omega(&self, phi: Complex64) -> f64 {
        self.g * phi.norm_sqr() - 1.0
    }
}

#[inline]
pub fn collide_pair(p: Pair) -> Pair {
    let s = (p[0] + p[1]) * 0.5;
    let d = (p[0] - p[1]) * 0.5;
    let id = Complex64::new(-d.im, d.re);
    [s - id, s + id]
}

/// Square-root-of-swap collision at every site.
pub fn collide(field: &SpinorField) -> SpinorField {
    let mut out = field.clone();
    collide_in_place(&mut out);
    out
}

pub fn collide_in_place(field: &mut SpinorField) {
    field.data_mut().par_iter_mut().for_each(|p| *p = collide_pair(*p));
}

#[inline]
fn collide_line(line: &mut [Pair]) {
    for p in line.iter_mut() {
        *p = collide_pair(*p);
    }
}

/// `c(i) <- c(i + 1)` with wrap.
#[inline]
fn pull_forward(line: &mut [Pair], component: usize) {
    let n = line.len();
    let first = line[0][component];
    for i in 0..n - 1 {
        line[i][component] = line[i + 1][component];
    }
    line[n - 1][component] = first;
}

/// `c(i) <- c(i - 1)` with wrap.
#[inline]
fn pull_backward(line: &mut [Pair], component: usize) {
    let n = line.len();
    let last = line[n - 1][component];
    for i in (1..n).rev() {
        line[i][component] = line[i - 1][component];
    }
    line[0][component] = last;
}

#[inline]
fn sweep_line(line: &mut [Pair], component: usize) {
    collide_line(line);
    pull_forward(line, component);
    collide_line(line);
    pull_backward(line, component);
}

/// One interleaved collide-stream sweep `J = S(-1) C S(+1) C` on `component` along `axis`.
pub fn interleaved_sweep(field: &SpinorField, axis: Axis, component: usize) -> SpinorField {
    assert!(component < 2, "spinor component must be 0 or 1");
    let mut out = field.clone();
    for_each_line(&mut out, axis, |line| sweep_line(line, component));
    out
}

/// `J^2` along `axis`, fused into a single pass over each line.
pub fn sweep_squared_in_place(field: &mut SpinorField, axis: Axis, component: usize) {
    assert!(component < 2, "spinor component must be 0 or 1");
    for_each_line(field, axis, |line| {
        sweep_line(line, component);
        sweep_line(line, component);
    });
}

/// Multiplies both components by `exp(-i phase_scale fraction Omega)`, with
/// `Omega` taken from the field as it is on entry.
pub fn nonlinear_phase(field: &SpinorField, params: &SimParams, fraction: f64) -> SpinorField {
    let mut out = field.clone();
    nonlinear_phase_in_place(&mut out, params, fraction);
    out
}

pub fn nonlinear_phase_in_place(field: &mut SpinorField, params: &SimParams, fraction: f64) {
    assert!(fraction > 0.0 && fraction <= 1.0, "phase fraction must lie in (0, 1]");
    let scale = params.phase_scale * fraction;
    let p = *params;
    field.data_mut().par_iter_mut().for_each(|s| {
        let omega = p.omega(s[0] + s[1]);
        let (sin, cos) = (-scale * omega).sin_cos();
        let rot = Complex64::new(cos, sin);
        s[0] *= rot;
        s[1] *= rot;
    });
}

/// `U_gamma[Omega/2]`: half phase first, then `J_z^2`, `J_y^2`, `J_x^2`.
pub fn half_step_in_place(field: &mut SpinorField, params: &SimParams, component: usize) {
    nonlinear_phase_in_place(field, params, 0.5);
    for axis in [Axis::Z, Axis::Y, Axis::X] {
        sweep_squared_in_place(field, axis, component);
    }
}

pub fn evolve_step_in_place(field: &mut SpinorField, params: &SimParams) {
    half_step_in_place(field, params, 0);
    half_step_in_place(field, params, 1);
}

/// One full timestep `U_1[Omega/2] U_0[Omega/2]`.
pub fn evolve_step(field: &SpinorField, params: &SimParams) -> SpinorField {
    let mut out = field.clone();
    evolve_step_in_place(&mut out, params);
    out
}

/// Largest per-step phase rotation `phase_scale * max|Omega|` for the current state.
pub fn phase_budget(field: &SpinorField, params: &SimParams) -> f64 {
    let max_omega = field
        .data()
        .par_iter()
        .map(|s| params.omega(s[0] + s[1]).abs())
        .reduce(|| 0.0, f64::max);
    params.phase_scale * max_omega
}

/// Read-only observer invoked by [`run`] on sampled steps.
pub trait Hook {
    fn observe(&mut self, step: u64, field: &SpinorField) -> Result<()>;
}

impl<F> Hook for F
where
    F: FnMut(u64, &SpinorField) -> Result<()>,
{
    fn observe(&mut self, step: u64, field: &SpinorField) -> Result<()> {
        self(step, field)
    }
}

const PHASE_WARN: f64 = std::f64::consts::FRAC_PI_4;

/// Evolves `field` from `start_step` for `n_steps` steps.
///
/// Hooks run at `start_step`, at every later step divisible by `hook_every`,
/// and at the final step. A hook error stops the run and is returned.
pub fn run(
    mut field: SpinorField,
    params: &SimParams,
    start_step: u64,
    n_steps: u64,
    hook_every: u64,
    hooks: &mut [&mut dyn Hook],
) -> Result<SpinorField> {
    assert!(hook_every > 0, "hook_every must be positive");
    let end = start_step + n_steps;
    let mut warned = false;
    let mut observe = |step: u64, field: &SpinorField, warned: &mut bool| -> Result<()> {
        if !*warned {
            let budget = phase_budget(field, params);
            if budget > PHASE_WARN {
                warn!("step {step}: nonlinear phase per step {budget:.3} rad is not small");
                *warned = true;
            }
        }
        for hook in hooks.iter_mut() {
            hook.observe(step, field)?;
        }
        Ok(())
    };
    observe(start_step, &field, &mut warned)?;
    for step in start_step + 1..=end {
        evolve_step_in_place(&mut field, params);
        if step % hook_every == 0 || step == end {
            observe(step, &field, &mut warned)?;
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{project_phi, GridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_field(grid: GridSpec, seed: u64) -> SpinorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.sites())
            .map(|_| {
                [
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                ]
            })
            .collect();
        SpinorField::from_data(grid, data).unwrap()
    }

    #[test]
    fn collide_matrix_row() {
        let out = collide_pair([c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((out[0] - c(0.5, -0.5)).norm() < 1e-16);
        assert!((out[1] - c(0.5, 0.5)).norm() < 1e-16);
    }

    #[test]
    fn collide_twice_swaps_four_times_is_identity() {
        let g = GridSpec::cubic(4).unwrap();
        let f = random_field(g, 1);
        let twice = collide(&collide(&f));
        let swapped = SpinorField::from_data(g, f.data().iter().map(|p| [p[1], p[0]]).collect()).unwrap();
        assert!(twice.max_abs_diff(&swapped) < 1e-15);
        assert!(collide(&collide(&twice)).max_abs_diff(&f) < 1e-14);
    }

    #[test]
    fn uniform_field_invariant_under_squared_sweeps() {
        let g = GridSpec::new(4, 5, 6).unwrap();
        let f = SpinorField::from_fn(g, |_, _, _| [c(0.3, -0.2), c(0.7, 0.1)]);
        for axis in Axis::ALL {
            for comp in 0..2 {
                let twice = interleaved_sweep(&interleaved_sweep(&f, axis, comp), axis, comp);
                assert!(twice.max_abs_diff(&f) < 1e-14);
            }
        }
    }

    #[test]
    fn sweep_preserves_norm() {
        let g = GridSpec::cubic(16).unwrap();
        let f = random_field(g, 2);
        let n0 = f.norm_sqr();
        for axis in Axis::ALL {
            for comp in 0..2 {
                let n1 = interleaved_sweep(&f, axis, comp).norm_sqr();
                assert!(((n1 - n0) / n0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fused_squared_sweep_matches_two_single_sweeps() {
        let g = GridSpec::new(5, 4, 6).unwrap();
        let f = random_field(g, 3);
        for axis in Axis::ALL {
            for comp in 0..2 {
                let mut fused = f.clone();
                sweep_squared_in_place(&mut fused, axis, comp);
                let two = interleaved_sweep(&interleaved_sweep(&f, axis, comp), axis, comp);
                assert!(fused.bit_eq(&two));
            }
        }
    }

    #[test]
    fn phase_at_omega_root_leaves_field_unchanged() {
        let g = GridSpec::cubic(4).unwrap();
        let params = SimParams { g: 4.0, ..SimParams::default() };
        // |phi|^2 = 1/g
        let f = SpinorField::from_fn(g, |_, _, _| [c(0.25, 0.0), c(0.25, 0.0)]);
        let out = nonlinear_phase(&f, &params, 1.0);
        assert!(out.max_abs_diff(&f) < 1e-16);
    }

    #[test]
    fn phase_of_pi_on_empty_density_negates() {
        let g = GridSpec::cubic(4).unwrap();
        let params = SimParams { phase_scale: std::f64::consts::PI, ..SimParams::default() };
        let f = SpinorField::from_fn(g, |x, _, _| {
            // alpha = -beta so phi = 0 and Omega = -1
            let v = c(0.1 * x as f64 + 0.2, -0.3);
            [v, -v]
        });
        let out = nonlinear_phase(&f, &params, 1.0);
        for (a, b) in f.data().iter().zip(out.data()) {
            assert!((b[0] + a[0]).norm() < 1e-15);
            assert!((b[1] + a[1]).norm() < 1e-15);
        }
    }

    #[test]
    fn phase_preserves_site_moduli() {
        let g = GridSpec::cubic(6).unwrap();
        let f = random_field(g, 4);
        let out = nonlinear_phase(&f, &SimParams::default(), 0.5);
        for (a, b) in f.data().iter().zip(out.data()) {
            assert!((a[0].norm() - b[0].norm()).abs() < 1e-15);
            assert!((a[1].norm() - b[1].norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_fixed_point_is_invariant() {
        let g = GridSpec::cubic(8).unwrap();
        let params = SimParams::default();
        let amp = 0.5 / params.g.sqrt();
        let f = SpinorField::from_fn(g, |_, _, _| [c(amp, 0.0), c(amp, 0.0)]);
        let mut s = f.clone();
        for _ in 0..5 {
            let next = evolve_step(&s, &params);
            assert!(next.max_abs_diff(&s) < 1e-13);
            s = next;
        }
        assert!((project_phi(&s).data()[0].norm_sqr() - 1.0 / params.g).abs() < 1e-13);
    }

    #[test]
    fn run_zero_steps_is_identity_and_runs_compose() {
        let g = GridSpec::cubic(6).unwrap();
        let params = SimParams::default();
        let f = random_field(g, 5);
        let same = run(f.clone(), &params, 0, 0, 1, &mut []).unwrap();
        assert!(same.bit_eq(&f));
        let a = run(f.clone(), &params, 0, 7, 3, &mut []).unwrap();
        let b = run(f.clone(), &params, 0, 3, 3, &mut []).unwrap();
        let b = run(b, &params, 3, 4, 3, &mut []).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn hooks_see_monotone_steps() {
        let g = GridSpec::cubic(4).unwrap();
        let mut seen = Vec::new();
        let mut hook = |step: u64, _: &SpinorField| -> Result<()> {
            seen.push(step);
            Ok(())
        };
        run(random_field(g, 6), &SimParams::default(), 0, 5, 1, &mut [&mut hook]).unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn hook_error_stops_run() {
        let g = GridSpec::cubic(4).unwrap();
        let mut hook = |step: u64, _: &SpinorField| -> Result<()> {
            if step == 2 {
                Err(QlgError::NumericInvariant("stop".into()))
            } else {
                Ok(())
            }
        };
        let err = run(random_field(g, 7), &SimParams::default(), 0, 5, 1, &mut [&mut hook]);
        assert!(matches!(err, Err(QlgError::NumericInvariant(_))));
    }

    #[test]
    fn rescaling_parameters_follows_diffusion_ordering() {
        let p = SimParams::default().rescaled_for_grid(32, 64);
        assert!((p.a - 0.01).abs() < 1e-15);
        assert!((p.phase_scale - 0.025).abs() < 1e-15);
        assert_eq!(p.g, 1.0);
    }
}
