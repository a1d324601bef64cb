//! Straight-line vortex initial states.
//!
//! Single vortices use the polar angle about the nearest periodic image of
//! their axis. Composed layouts instead take the phase from a product of
//! Jacobi theta functions, one per vortex, which is exactly periodic on the
//! box whenever the layout has zero net circulation per axis (the built-in
//! layouts do). The amplitude is always the product of normalized radial
//! profiles measured to the nearest image.

use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;

use crate::diagnostics::energies;
use crate::error::{QlgError, Result};
use crate::evolution::SimParams;
use crate::lattice::{Axis, GridSpec, ScalarField, SpinorField};

/// Radial amplitude of the winding-1 Pade vortex.
///
/// `sqrt(11 u (12 + u) / (g (384 + u (128 + 11 u))))` with `u = a r^2`.
/// Note that the rational form overshoots `1/sqrt(g)` by about 0.2% for
/// `u > 96` before settling back onto it.
pub fn pade_profile(r: f64, a: f64, g: f64) -> f64 {
    assert!(r >= 0.0 && a > 0.0 && g > 0.0, "pade_profile needs r >= 0, a > 0, g > 0");
    let u = a * r * r;
    if u.is_infinite() {
        return 1.0 / g.sqrt();
    }
    (11.0 * u * (12.0 + u) / (g * (384.0 + u * (128.0 + 11.0 * u)))).sqrt()
}

/// Profile scaled to unit far-field value and raised to the winding.
fn normalized_profile(r: f64, params: &SimParams, winding: u8) -> f64 {
    let f = params.g.sqrt() * pade_profile(r, params.a, params.g);
    if winding == 2 {
        f * f
    } else {
        f
    }
}

/// One straight vortex line parallel to a lattice axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexSpec {
    pub axis: Axis,
    /// Position in the two transverse coordinates, ordered as
    /// [`Axis::transverse`] (y,z for x; z,x for y; x,y for z).
    pub center: [f64; 2],
    pub winding: u8,
    pub sign: i8,
}

impl VortexSpec {
    pub fn new(axis: Axis, center: [f64; 2], winding: u8, sign: i8) -> Result<Self> {
        if !(winding == 1 || winding == 2) {
            return Err(QlgError::InvalidInput(format!("winding must be 1 or 2, got {winding}")));
        }
        if !(sign == 1 || sign == -1) {
            return Err(QlgError::InvalidInput(format!("sign must be +1 or -1, got {sign}")));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(QlgError::InvalidInput("vortex center must be finite".into()));
        }
        Ok(VortexSpec { axis, center, winding, sign })
    }

    /// Signed circulation in units of `2 pi` of `arg(phi)`.
    pub fn charge(&self) -> i64 {
        self.winding as i64 * self.sign as i64
    }

    fn check_in_box(&self, grid: GridSpec) -> Result<()> {
        let (t1, t2) = self.axis.transverse();
        for (c, t) in self.center.iter().zip([t1, t2]) {
            let l = grid.extent(t) as f64;
            if !(0.0..l).contains(c) {
                return Err(QlgError::InvalidInput(format!(
                    "vortex center {:?} outside the box along {t:?} (extent {l})",
                    self.center
                )));
            }
        }
        Ok(())
    }

    /// Offsets of a site from the vortex axis in the transverse plane,
    /// without wrapping.
    fn raw_offset(&self, site: [usize; 3]) -> (f64, f64) {
        let (t1, t2) = self.axis.transverse();
        (site[t1.index()] as f64 - self.center[0], site[t2.index()] as f64 - self.center[1])
    }

    /// Offsets to the nearest periodic image of the axis.
    fn nearest_offset(&self, grid: GridSpec, site: [usize; 3]) -> (f64, f64) {
        let (t1, t2) = self.axis.transverse();
        let (dx, dy) = self.raw_offset(site);
        let wrap = |d: f64, l: f64| d - l * (d / l).round();
        (wrap(dx, grid.extent(t1) as f64), wrap(dy, grid.extent(t2) as f64))
    }

    /// Square loop of side `2 radius - 1` around the core in one slice along
    /// the axis, counter-clockwise about the axis.
    ///
    /// `radius = 1` is the enclosing plaquette, which resolves winding 1; a
    /// winding-2 core needs `radius >= 2` so that no phase step reaches `pi`.
    pub fn core_loop(&self, grid: GridSpec, slice: usize, radius: usize) -> Vec<[usize; 3]> {
        assert!(radius >= 1, "loop radius must be positive");
        let (t1, t2) = self.axis.transverse();
        let corner = |c: f64, l: usize| (c.floor() as i64 - (radius as i64 - 1)).rem_euclid(l as i64) as usize;
        let mut origin = [0; 3];
        origin[self.axis.index()] = slice % grid.extent(self.axis);
        origin[t1.index()] = corner(self.center[0], grid.extent(t1));
        origin[t2.index()] = corner(self.center[1], grid.extent(t2));
        crate::diagnostics::square_loop(grid, self.axis, origin, 2 * radius - 1)
    }
}

/// Parses a layout-file line `axis cx cy winding sign`.
impl FromStr for VortexSpec {
    type Err = QlgError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(QlgError::InvalidInput(format!(
                "expected `axis cx cy winding sign`, got {} fields",
                parts.len()
            )));
        }
        let axis: Axis = parts[0].parse()?;
        let num = |t: &str| t.parse::<f64>().map_err(|_| QlgError::InvalidInput(format!("bad coordinate `{t}`")));
        let winding = parts[3]
            .parse::<u8>()
            .map_err(|_| QlgError::InvalidInput(format!("bad winding `{}`", parts[3])))?;
        let sign = parts[4]
            .trim_start_matches('+')
            .parse::<i8>()
            .map_err(|_| QlgError::InvalidInput(format!("bad sign `{}`", parts[4])))?;
        VortexSpec::new(axis, [num(parts[1])?, num(parts[2])?], winding, sign)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitLayout {
    pub vortices: Vec<VortexSpec>,
    pub amplitude_rescale: f64,
}

pub const DEFAULT_AMPLITUDE_RESCALE: f64 = 1.4;

/// Square checkerboard of lines at every pair of `coords`, alternating in sign.
fn grid_set(axis: Axis, coords: &[f64], winding: u8) -> Vec<VortexSpec> {
    let mut out = Vec::new();
    for (i, &c1) in coords.iter().enumerate() {
        for (j, &c2) in coords.iter().enumerate() {
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            out.push(VortexSpec { axis, center: [c1, c2], winding, sign });
        }
    }
    out
}

impl InitLayout {
    pub fn new(vortices: Vec<VortexSpec>, amplitude_rescale: f64) -> Result<Self> {
        let layout = InitLayout { vortices, amplitude_rescale };
        if layout.vortices.is_empty() {
            return Err(QlgError::InvalidInput("layout has no vortices".into()));
        }
        if !(amplitude_rescale > 0.0 && amplitude_rescale.is_finite()) {
            return Err(QlgError::InvalidInput(format!("amplitude_rescale must be > 0, got {amplitude_rescale}")));
        }
        Ok(layout)
    }

    /// Built-in layouts: `twelve` (4 lines per axis) and `fortyeight`
    /// (16 per axis).
    ///
    /// Every set is a checkerboard of alternating circulation, so each axis
    /// carries zero net circulation. The three sets are offset from each
    /// other so that no two lines intersect, and all cores sit at plaquette
    /// centres.
    pub fn preset(name: &str, grid: GridSpec, winding: u8, amplitude_rescale: f64) -> Result<Self> {
        if !(winding == 1 || winding == 2) {
            return Err(QlgError::InvalidInput(format!("winding must be 1 or 2, got {winding}")));
        }
        // fractions of the extent for the (first, second) transverse coordinates
        let (per_axis, offsets): (usize, [f64; 3]) = match name {
            "twelve" => (2, [1.0 / 8.0, 3.0 / 8.0, 1.0 / 4.0]),
            "fortyeight" => (4, [3.0 / 16.0, 1.0 / 16.0, 1.0 / 8.0]),
            other => return Err(QlgError::InvalidInput(format!("unknown layout preset `{other}`"))),
        };
        let spacing = 1.0 / per_axis as f64;
        let mut vortices = Vec::new();
        for axis in Axis::ALL {
            let (t1, t2) = axis.transverse();
            if grid.extent(t1) != grid.extent(t2) {
                return Err(QlgError::InvalidInput(format!("preset `{name}` needs square cross-sections")));
            }
            let l = grid.extent(t1) as f64;
            let coords: Vec<f64> =
                (0..per_axis).map(|j| ((offsets[axis.index()] + j as f64 * spacing) * l).floor() + 0.5).collect();
            vortices.extend(grid_set(axis, &coords, winding));
        }
        InitLayout::new(vortices, amplitude_rescale)
    }

    /// A single z-directed vortex at the plaquette centre nearest the box
    /// centre.
    pub fn single(grid: GridSpec, winding: u8, amplitude_rescale: f64) -> Result<Self> {
        let c = |axis: Axis| (grid.extent(axis) / 2) as f64 - 0.5;
        let v = VortexSpec::new(Axis::Z, [c(Axis::X), c(Axis::Y)], winding, 1)?;
        InitLayout::new(vec![v], amplitude_rescale)
    }

    /// Parses a layout file: one `axis cx cy winding sign` per line, `#`
    /// starts a comment.
    pub fn parse(text: &str, amplitude_rescale: f64) -> Result<Self> {
        let mut vortices = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let v = line.parse::<VortexSpec>().map_err(|e| QlgError::Config { line: n + 1, message: e.to_string() })?;
            vortices.push(v);
        }
        InitLayout::new(vortices, amplitude_rescale)
    }

    pub fn load(path: &Path, amplitude_rescale: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QlgError::io(path, e))?;
        InitLayout::parse(&text, amplitude_rescale)
    }

    /// Whether the theta-function phase is single valued on the box.
    ///
    /// Per axis the net charge must vanish and the charge-weighted first
    /// transverse coordinate must be a multiple of its extent.
    pub fn is_periodic_compatible(&self, grid: GridSpec) -> bool {
        Axis::ALL.iter().all(|&axis| {
            let l = grid.extent(axis.transverse().0) as f64;
            let set = self.vortices.iter().filter(|v| v.axis == axis);
            let net: i64 = set.clone().map(VortexSpec::charge).sum();
            let moment: f64 = set.map(|v| v.charge() as f64 * v.center[0]).sum();
            let frac = moment / l;
            net == 0 && (frac - frac.round()).abs() < 1e-9
        })
    }
}

/// Jacobi `theta_1(u | q)` by its q-series.
///
/// Arguments come from unwrapped offsets, so `|Im u|` stays below
/// `pi Ly / Lx` and 30 terms are far past convergence.
fn theta1(u: Complex64, q_log: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for n in 0..30 {
        let h = n as f64 + 0.5;
        let weight = (q_log * h * h).exp();
        if weight == 0.0 {
            break;
        }
        let term = (u * (2 * n + 1) as f64).sin() * weight;
        if n % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum * 2.0
}

/// Unit phase factor of one vortex that is doubly periodic up to a
/// layout-wide factor which cancels for periodic-compatible layouts.
fn theta_phase(v: &VortexSpec, grid: GridSpec, site: [usize; 3]) -> Complex64 {
    let (t1, t2) = v.axis.transverse();
    let (lx, ly) = (grid.extent(t1) as f64, grid.extent(t2) as f64);
    let (dx, dy) = v.raw_offset(site);
    let u = Complex64::new(dx, dy) * (PI / lx);
    let t = theta1(u, -PI * ly / lx);
    let unit = t / t.norm();
    let unit = if v.sign > 0 { unit } else { unit.conj() };
    if v.winding == 2 {
        unit * unit
    } else {
        unit
    }
}

/// A single line vortex with phase `n sign theta` about the nearest image.
pub fn line_vortex(grid: GridSpec, spec: &VortexSpec, params: &SimParams) -> ScalarField {
    ScalarField::from_fn(grid, |x, y, z| {
        let (dx, dy) = spec.nearest_offset(grid, [x, y, z]);
        let r = dx.hypot(dy);
        let amp = normalized_profile(r, params, spec.winding) / params.g.sqrt();
        Complex64::from_polar(amp, spec.charge() as f64 * dy.atan2(dx))
    })
}

/// The layout's scalar wavefunction `phi`.
pub fn compose_phi(grid: GridSpec, layout: &InitLayout, params: &SimParams) -> Result<ScalarField> {
    for v in &layout.vortices {
        v.check_in_box(grid)?;
    }
    let periodic = layout.is_periodic_compatible(grid);
    if !periodic {
        log::warn!("layout has net circulation along an axis; using nearest-image phases");
    }
    let scale = layout.amplitude_rescale / params.g.sqrt();
    Ok(ScalarField::from_fn(grid, |x, y, z| {
        let site = [x, y, z];
        let mut amp = scale;
        let mut phase = Complex64::new(1.0, 0.0);
        for v in &layout.vortices {
            let (dx, dy) = v.nearest_offset(grid, site);
            amp *= normalized_profile(dx.hypot(dy), params, v.winding);
            phase *= if periodic {
                theta_phase(v, grid, site)
            } else {
                Complex64::from_polar(1.0, v.charge() as f64 * dy.atan2(dx))
            };
        }
        phase * amp
    }))
}

/// The layout as a spinor with `alpha = beta = phi / 2`.
pub fn compose(grid: GridSpec, layout: &InitLayout, params: &SimParams) -> Result<SpinorField> {
    Ok(SpinorField::from_phi(&compose_phi(grid, layout, params)?))
}

/// Energy ratios that classify an initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceClass {
    pub int_over_kin: f64,
    pub qu_over_kin: f64,
    pub comp_over_incomp: f64,
    pub incompressible_share: f64,
}

impl RecurrenceClass {
    pub const MAX_INT_OVER_KIN: f64 = 0.1;
    pub const MAX_COMP_OVER_INCOMP: f64 = 0.05;

    pub fn is_recurrence_class(&self) -> bool {
        self.int_over_kin < Self::MAX_INT_OVER_KIN && self.comp_over_incomp < Self::MAX_COMP_OVER_INCOMP
    }
}

impl std::fmt::Display for RecurrenceClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "E_int/E_kin = {:.6}", self.int_over_kin)?;
        writeln!(f, "E_qu/E_kin = {:.6}", self.qu_over_kin)?;
        writeln!(f, "E_comp/E_incomp = {:.6}", self.comp_over_incomp)?;
        writeln!(f, "incompressible share = {:.6}", self.incompressible_share)?;
        write!(f, "recurrence_class = {}", self.is_recurrence_class())
    }
}

pub fn recurrence_class_check(field: &SpinorField, params: &SimParams) -> Result<RecurrenceClass> {
    if field.norm_sqr() == 0.0 {
        return Err(QlgError::ZeroNorm);
    }
    let e = energies(field, params, 0);
    if e.e_kin <= 0.0 {
        return Err(QlgError::ZeroKineticEnergy);
    }
    Ok(RecurrenceClass {
        int_over_kin: e.e_int / e.e_kin,
        qu_over_kin: e.e_qu / e.e_kin,
        comp_over_incomp: e.e_kin_comp / e.e_kin_incomp,
        incompressible_share: e.e_kin_incomp / e.e_kin,
    })
}
