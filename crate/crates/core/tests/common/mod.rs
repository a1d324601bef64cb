//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlg_core::initcond::{InitLayout, VortexSpec};
use qlg_core::{Axis, GridSpec, SimParams, SpinorField, VectorField};

pub fn random_spinor(grid: GridSpec, seed: u64, amp: f64) -> SpinorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = || Complex64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp));
    let data = (0..grid.sites()).map(|_| [c(), c()]).collect();
    SpinorField::from_data(grid, data).unwrap()
}

pub fn random_vector(grid: GridSpec, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = [0, 1, 2].map(|_| (0..grid.sites()).map(|_| rng.gen_range(-1.0..1.0)).collect());
    VectorField::from_components(grid, comps).unwrap()
}

/// Parameters of the low-amplitude regime used for the long desk runs.
pub fn desk_params() -> SimParams {
    SimParams { g: 1.0, a: 0.04, phase_scale: 0.005, steps_per_output: 1000 }
}

pub const DESK_RESCALE: f64 = 1.4;

/// Four z-vortices of alternating sign on a 2x2 arrangement.
///
/// Net charge vanishes along both transverse axes, so the phase is exactly
/// periodic and each core behaves as an isolated line vortex.
pub fn quadrupole(grid: GridSpec, amplitude_rescale: f64) -> InitLayout {
    let (lx, ly) = (grid.extent(Axis::X) as f64, grid.extent(Axis::Y) as f64);
    let mut vortices = Vec::new();
    for i in 0..2 {
        for j in 0..2 {
            let center = [lx / 4.0 + i as f64 * lx / 2.0 - 0.5, ly / 4.0 + j as f64 * ly / 2.0 - 0.5];
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            vortices.push(VortexSpec::new(Axis::Z, center, 1, sign).unwrap());
        }
    }
    InitLayout::new(vortices, amplitude_rescale).unwrap()
}

/// Square complex matrix in row-major order.
#[derive(Clone)]
pub struct Dense {
    pub n: usize,
    pub m: Vec<Complex64>,
}

impl Dense {
    pub fn identity(n: usize) -> Self {
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            m[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Dense { n, m }
    }

    pub fn zeros(n: usize) -> Self {
        Dense { n, m: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn mul(&self, o: &Dense) -> Dense {
        let n = self.n;
        let mut out = Dense::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.m[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.m[i * n + j] += a * o.m[k * n + j];
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        (0..n).map(|i| (0..n).map(|j| self.m[i * n + j] * v[j]).sum()).collect()
    }
}

/// Dense operators on the flattened state `v[2 * site + component]`.
///
/// Site indexing and neighbour wrap are rebuilt here from coordinates so the
/// oracle shares nothing with the stepping code beyond the flat layout.
pub struct Oracle {
    pub grid: GridSpec,
    dim: usize,
}

impl Oracle {
    pub fn new(grid: GridSpec) -> Self {
        Oracle { grid, dim: 2 * grid.sites() }
    }

    fn site(&self, x: usize, y: usize, z: usize) -> usize {
        self.grid.index(x, y, z)
    }

    /// Block-diagonal square root of swap.
    pub fn collision(&self) -> Dense {
        let half = 0.5;
        let p = Complex64::new(half, -half);
        let q = Complex64::new(half, half);
        let mut c = Dense::zeros(self.dim);
        let n = self.dim;
        for s in 0..self.grid.sites() {
            let (a, b) = (2 * s, 2 * s + 1);
            c.m[a * n + a] = p;
            c.m[a * n + b] = q;
            c.m[b * n + a] = q;
            c.m[b * n + b] = p;
        }
        c
    }

    /// `S(dir)`: the chosen component at `x` takes the value from `x + dir`.
    pub fn shift(&self, axis: Axis, dir: i64, component: usize) -> Dense {
        let [nx, ny, nz] = self.grid.dims();
        let n = self.dim;
        let mut s = Dense::zeros(n);
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let mut from = [x as i64, y as i64, z as i64];
                    from[axis.index()] += dir;
                    let d = [nx, ny, nz];
                    let w = [0, 1, 2].map(|c| from[c].rem_euclid(d[c] as i64) as usize);
                    let here = self.site(x, y, z);
                    let there = self.site(w[0], w[1], w[2]);
                    for comp in 0..2 {
                        let src = if comp == component { there } else { here };
                        s.m[(2 * here + comp) * n + 2 * src + comp] = Complex64::new(1.0, 0.0);
                    }
                }
            }
        }
        s
    }

    /// `J = S(-1) C S(+1) C`.
    pub fn sweep(&self, axis: Axis, component: usize) -> Dense {
        let c = self.collision();
        self.shift(axis, -1, component).mul(&c).mul(&self.shift(axis, 1, component)).mul(&c)
    }

    /// `J_x^2 J_y^2 J_z^2` for one component.
    pub fn streaming_part(&self, component: usize) -> Dense {
        let jx = self.sweep(Axis::X, component);
        let jy = self.sweep(Axis::Y, component);
        let jz = self.sweep(Axis::Z, component);
        jx.mul(&jx).mul(&jy).mul(&jy).mul(&jz).mul(&jz)
    }

    /// Diagonal `exp(-i phase_scale Omega / 2)` evaluated on `state`.
    pub fn half_phase(&self, state: &[Complex64], params: &SimParams) -> Dense {
        let mut d = Dense::zeros(self.dim);
        let n = self.dim;
        for s in 0..self.grid.sites() {
            let phi = state[2 * s] + state[2 * s + 1];
            let omega = params.g * phi.norm_sqr() - 1.0;
            let rot = Complex64::from_polar(1.0, -0.5 * params.phase_scale * omega);
            d.m[2 * s * n + 2 * s] = rot;
            d.m[(2 * s + 1) * n + 2 * s + 1] = rot;
        }
        d
    }

    /// `U_1[Omega/2] U_0[Omega/2]` applied to `state`.
    pub fn step(&self, state: &[Complex64], params: &SimParams) -> Vec<Complex64> {
        let mut v = state.to_vec();
        for component in 0..2 {
            let u = self.streaming_part(component).mul(&self.half_phase(&v, params));
            v = u.apply(&v);
        }
        v
    }
}

pub fn flatten(field: &SpinorField) -> Vec<Complex64> {
    field.data().iter().flat_map(|p| [p[0], p[1]]).collect()
}

pub fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
