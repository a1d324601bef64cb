//! `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{QlgError, Result};
use crate::evolution::SimParams;
use crate::initcond::{InitLayout, DEFAULT_AMPLITUDE_RESCALE};
use crate::lattice::GridSpec;
use crate::spectral::{parse_windows, validate_windows};

/// Where the initial vortex layout comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum LayoutSource {
    /// `twelve`, `fortyeight` or `single`.
    Preset(String),
    File(PathBuf),
}

impl LayoutSource {
    fn parse(value: &str) -> Self {
        match value {
            "twelve" | "fortyeight" | "single" => LayoutSource::Preset(value.to_owned()),
            path => LayoutSource::File(PathBuf::from(path)),
        }
    }

    pub fn build(&self, grid: GridSpec, winding: u8, amplitude_rescale: f64) -> Result<InitLayout> {
        match self {
            LayoutSource::Preset(name) if name == "single" => InitLayout::single(grid, winding, amplitude_rescale),
            LayoutSource::Preset(name) => InitLayout::preset(name, grid, winding, amplitude_rescale),
            LayoutSource::File(path) => InitLayout::load(path, amplitude_rescale),
        }
    }
}

impl std::fmt::Display for LayoutSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayoutSource::Preset(name) => f.write_str(name),
            LayoutSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: SimParams,
    pub layout: LayoutSource,
    pub winding: u8,
    pub amplitude_rescale: f64,
    pub n_steps: u64,
    pub hook_every: u64,
    pub output_dir: PathBuf,
    /// Zero disables checkpoints.
    pub checkpoint_every: u64,
    pub recurrence_threshold: f64,
    pub core_fraction: f64,
    pub fit_windows: Vec<(usize, usize)>,
    /// Largest tolerated relative drift of the spinor norm before a run aborts.
    pub norm_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSpec::cubic(64).expect("valid"),
            params: SimParams::default(),
            layout: LayoutSource::Preset("twelve".into()),
            winding: 1,
            amplitude_rescale: DEFAULT_AMPLITUDE_RESCALE,
            n_steps: 1000,
            hook_every: 100,
            output_dir: PathBuf::from("out"),
            checkpoint_every: 1000,
            recurrence_threshold: 0.9,
            core_fraction: 0.1,
            fit_windows: vec![(4, 12), (14, 24)],
            norm_tolerance: 1e-8,
        }
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, what: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|_| format!("`{value}` is not a valid {what}"))
}

impl RunConfig {
    /// Relative paths in the config are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| QlgError::Config { line: line_no, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(err(format!("`{key}` has no value")));
            }
            let resolve = |p: &str| match base {
                Some(b) if Path::new(p).is_relative() => b.join(p),
                _ => PathBuf::from(p),
            };
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "grid" => {
                        let dims: Vec<usize> =
                            value.split_whitespace().map(|t| parse_num(t, "grid extent")).collect::<std::result::Result<_, _>>()?;
                        cfg.grid = match dims.as_slice() {
                            [n] => GridSpec::cubic(*n),
                            [x, y, z] => GridSpec::new(*x, *y, *z),
                            _ => return Err(format!("grid takes 1 or 3 extents, got {}", dims.len())),
                        }
                        .map_err(|e| e.to_string())?;
                    }
                    "g" => cfg.params.g = parse_num(value, "number")?,
                    "a" => cfg.params.a = parse_num(value, "number")?,
                    "phase_scale" => cfg.params.phase_scale = parse_num(value, "number")?,
                    "steps_per_output" => cfg.params.steps_per_output = parse_num(value, "count")?,
                    "layout" => {
                        cfg.layout = match LayoutSource::parse(value) {
                            LayoutSource::File(p) => LayoutSource::File(resolve(&p.to_string_lossy())),
                            preset => preset,
                        }
                    }
                    "winding" => cfg.winding = parse_num(value, "winding")?,
                    "amplitude_rescale" => cfg.amplitude_rescale = parse_num(value, "number")?,
                    "n_steps" => cfg.n_steps = parse_num(value, "count")?,
                    "hook_every" => cfg.hook_every = parse_num(value, "count")?,
                    "output_dir" => cfg.output_dir = resolve(value),
                    "checkpoint_every" => cfg.checkpoint_every = parse_num(value, "count")?,
                    "recurrence_threshold" => cfg.recurrence_threshold = parse_num(value, "number")?,
                    "core_fraction" => cfg.core_fraction = parse_num(value, "number")?,
                    "fit_windows" => cfg.fit_windows = parse_windows(value).map_err(|e| e.to_string())?,
                    "norm_tolerance" => cfg.norm_tolerance = parse_num(value, "number")?,
                    other => return Err(format!("unknown key `{other}`")),
                }
                cfg.validate_key(key)
            })();
            r.map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QlgError::io(path, e))?;
        RunConfig::parse(&text, path.parent())
    }

    fn validate_key(&self, key: &str) -> std::result::Result<(), String> {
        let p = &self.params;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let ok = match key {
            "g" => positive(p.g),
            "a" => positive(p.a),
            "phase_scale" => positive(p.phase_scale),
            "steps_per_output" => p.steps_per_output > 0,
            "winding" => self.winding == 1 || self.winding == 2,
            "amplitude_rescale" => positive(self.amplitude_rescale),
            "hook_every" => self.hook_every > 0,
            "recurrence_threshold" => self.recurrence_threshold > 0.0 && self.recurrence_threshold < 1.0,
            "core_fraction" => self.core_fraction > 0.0 && self.core_fraction < 1.0,
            "norm_tolerance" => positive(self.norm_tolerance),
            "fit_windows" => return validate_windows(&self.fit_windows).map_err(|e| e.to_string()),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("value of `{key}` is out of range"))
        }
    }

    pub fn layout(&self) -> Result<InitLayout> {
        self.layout.build(self.grid, self.winding, self.amplitude_rescale)
    }

    /// Settings that determine the trajectory, one per line.
    ///
    /// Run length and output location are excluded so that a checkpoint can
    /// be resumed with a longer run or a moved directory.
    pub fn physics_key(&self) -> String {
        let mut s = String::new();
        let [nx, ny, nz] = self.grid.dims();
        let p = &self.params;
        let _ = writeln!(s, "grid = {nx} {ny} {nz}");
        let _ = writeln!(s, "g = {:e}\na = {:e}\nphase_scale = {:e}", p.g, p.a, p.phase_scale);
        let _ = writeln!(s, "layout = {}\nwinding = {}\namplitude_rescale = {:e}", self.layout, self.winding, self.amplitude_rescale);
        s
    }

    /// SHA-256 of [`Self::physics_key`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.physics_key().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::parse("", None).unwrap();
        assert_eq!(cfg.grid.dims(), [64, 64, 64]);
        assert_eq!(cfg.layout, LayoutSource::Preset("twelve".into()));
        assert_eq!(cfg.winding, 1);
        assert_eq!((cfg.params.a, cfg.params.g, cfg.params.phase_scale), (0.04, 1.0, 0.1));
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn grid_forms() {
        let cfg = RunConfig::parse("grid = 32 32 32\n", None).unwrap();
        assert_eq!(cfg.grid.dims(), [32, 32, 32]);
        let cfg = RunConfig::parse("grid = 16 # cubic\n", None).unwrap();
        assert_eq!(cfg.grid.dims(), [16, 16, 16]);
        match RunConfig::parse("# header\ngrid = 32 32\n", None) {
            Err(QlgError::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("g = 1\nbogus = 3\n", 2),
            ("a = -1\n", 1),
            ("\n\nwinding = 3\n", 3),
            ("phase_scale = fast\n", 1),
            ("fit_windows = 4:12,10:20\n", 1),
            ("hook_every = 0\n", 1),
            ("n_steps\n", 1),
        ];
        for (text, want) in cases {
            match RunConfig::parse(text, None) {
                Err(QlgError::Config { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn paths_and_hash() {
        let cfg = RunConfig::parse("layout = vortices.txt\noutput_dir = out2\n", Some(Path::new("/runs"))).unwrap();
        assert_eq!(cfg.layout, LayoutSource::File(PathBuf::from("/runs/vortices.txt")));
        assert_eq!(cfg.output_dir, PathBuf::from("/runs/out2"));
        let a = RunConfig::default();
        let b = RunConfig { n_steps: 5, output_dir: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = RunConfig { params: SimParams { g: 2.0, ..a.params }, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }
}
