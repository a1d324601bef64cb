//! Periodic cubic lattice storage for two-spinor and scalar fields.
//!
//! Sites are stored row-major with `z` fastest: `index = (x * ny + y) * nz + z`.
//! A spinor site holds the pair `[alpha, beta]` contiguously.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{QlgError, Result};
use crate::reduce::chunked_sum;

pub type Pair = [Complex64; 2];

pub const MIN_EXTENT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        match i {
            0 => Some(Axis::X),
            1 => Some(Axis::Y),
            2 => Some(Axis::Z),
            _ => None,
        }
    }

    /// The two transverse axes, in cyclic order (x -> (y, z), y -> (z, x), z -> (x, y)).
    pub fn transverse(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = QlgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(QlgError::InvalidInput(format!("unknown axis '{other}'"))),
        }
    }
}

/// Site counts of a periodic box with unit spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx < MIN_EXTENT || ny < MIN_EXTENT || nz < MIN_EXTENT {
            return Err(QlgError::InvalidInput(format!(
                "grid {nx}x{ny}x{nz}: every extent must be at least {MIN_EXTENT}"
            )));
        }
        nx.checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| QlgError::InvalidInput(format!("grid {nx}x{ny}x{nz} overflows")))?;
        Ok(GridSpec { nx, ny, nz })
    }

    pub fn cubic(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn extent(&self, axis: Axis) -> usize {
        self.dims()[axis.index()]
    }

    pub fn sites(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.ny + y) * self.nz + z
    }

    /// Index of an arbitrary integer coordinate, wrapped into the box.
    #[inline]
    pub fn wrapped_index(&self, x: i64, y: i64, z: i64) -> usize {
        let w = |v: i64, n: usize| v.rem_euclid(n as i64) as usize;
        self.index(w(x, self.nx), w(y, self.ny), w(z, self.nz))
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let z = i % self.nz;
        let y = (i / self.nz) % self.ny;
        let x = i / (self.ny * self.nz);
        [x, y, z]
    }

    /// Index of the neighbour `delta` sites away along `axis`, with periodic wrap.
    #[inline]
    pub fn neighbor(&self, i: usize, axis: Axis, delta: i64) -> usize {
        let [x, y, z] = self.coords(i);
        let (x, y, z) = (x as i64, y as i64, z as i64);
        match axis {
            Axis::X => self.wrapped_index(x + delta, y, z),
            Axis::Y => self.wrapped_index(x, y + delta, z),
            Axis::Z => self.wrapped_index(x, y, z + delta),
        }
    }

    /// Memory stride between consecutive sites along `axis`.
    pub fn stride(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.ny * self.nz,
            Axis::Y => self.nz,
            Axis::Z => 1,
        }
    }

    /// Site reached by the point inversion `x -> -x mod L` on every axis.
    #[inline]
    pub fn inverted_index(&self, i: usize) -> usize {
        let [x, y, z] = self.coords(i);
        self.wrapped_index(-(x as i64), -(y as i64), -(z as i64))
    }
}

/// Complex two-spinor `(alpha, beta)` per lattice site.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    grid: GridSpec,
    data: Vec<Pair>,
}

impl SpinorField {
    pub fn zeros(grid: GridSpec) -> Self {
        SpinorField { grid, data: vec![[Complex64::new(0.0, 0.0); 2]; grid.sites()] }
    }

    pub fn from_data(grid: GridSpec, data: Vec<Pair>) -> Result<Self> {
        if data.len() != grid.sites() {
            return Err(QlgError::InvalidInput(format!(
                "spinor data has {} sites, grid needs {}",
                data.len(),
                grid.sites()
            )));
        }
        Ok(SpinorField { grid, data })
    }

    /// Builds a field from a per-site closure of the site coordinates.
    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(usize, usize, usize) -> Pair + Sync,
    {
        let data = (0..grid.sites())
            .into_par_iter()
            .map(|i| {
                let [x, y, z] = grid.coords(i);
                f(x, y, z)
            })
            .collect();
        SpinorField { grid, data }
    }

    /// `alpha = beta = phi / 2` at every site.
    pub fn from_phi(phi: &ScalarField) -> Self {
        let data = phi.data.iter().map(|&p| [p * 0.5, p * 0.5]).collect();
        SpinorField { grid: phi.grid, data }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn data(&self) -> &[Pair] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Pair] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Pair> {
        self.data
    }

    /// Global spinor norm `sum(|alpha|^2 + |beta|^2)`.
    pub fn norm_sqr(&self) -> f64 {
        chunked_sum(&self.data, |p| p[0].norm_sqr() + p[1].norm_sqr())
    }

    /// Maximum per-component absolute difference against `other`.
    pub fn max_abs_diff(&self, other: &SpinorField) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a[0] - b[0]).norm().max((a[1] - b[1]).norm()))
            .fold(0.0, f64::max)
    }

    pub fn bit_eq(&self, other: &SpinorField) -> bool {
        self.grid == other.grid
            && self.data.iter().zip(&other.data).all(|(a, b)| {
                a.iter().zip(b).all(|(u, v)| {
                    u.re.to_bits() == v.re.to_bits() && u.im.to_bits() == v.im.to_bits()
                })
            })
    }
}

/// Complex scalar `phi` per site.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    data: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        ScalarField { grid, data: vec![Complex64::new(0.0, 0.0); grid.sites()] }
    }

    pub fn from_data(grid: GridSpec, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.sites() {
            return Err(QlgError::InvalidInput(format!(
                "scalar data has {} sites, grid needs {}",
                data.len(),
                grid.sites()
            )));
        }
        Ok(ScalarField { grid, data })
    }

    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(usize, usize, usize) -> Complex64 + Sync,
    {
        let data = (0..grid.sites())
            .into_par_iter()
            .map(|i| {
                let [x, y, z] = grid.coords(i);
                f(x, y, z)
            })
            .collect();
        ScalarField { grid, data }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn at(&self, x: usize, y: usize, z: usize) -> Complex64 {
        self.data[self.grid.index(x, y, z)]
    }

    pub fn norm_sqr(&self) -> f64 {
        chunked_sum(&self.data, |p| p.norm_sqr())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// Real three-component vector field, one `Vec` per Cartesian component.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.sites();
        VectorField { grid, comps: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    pub fn from_components(grid: GridSpec, comps: [Vec<f64>; 3]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.sites()) {
            return Err(QlgError::InvalidInput("vector component length does not match grid".into()));
        }
        Ok(VectorField { grid, comps })
    }

    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(usize, usize, usize) -> [f64; 3] + Sync,
    {
        let values: Vec<[f64; 3]> = (0..grid.sites())
            .into_par_iter()
            .map(|i| {
                let [x, y, z] = grid.coords(i);
                f(x, y, z)
            })
            .collect();
        let comps = [0, 1, 2].map(|c| values.iter().map(|v| v[c]).collect());
        VectorField { grid, comps }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn component(&self, axis: Axis) -> &[f64] {
        &self.comps[axis.index()]
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [Vec<f64>; 3] {
        &mut self.comps
    }

    pub fn at(&self, i: usize) -> [f64; 3] {
        [self.comps[0][i], self.comps[1][i], self.comps[2][i]]
    }

    /// `sum |v|^2` over sites.
    pub fn norm_sqr(&self) -> f64 {
        self.comps.iter().map(|c| chunked_sum(c, |v| v * v)).sum()
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        (0..3)
            .map(|c| {
                let (a, b) = (&self.comps[c], &other.comps[c]);
                crate::reduce::chunked_sum_indexed(a.len(), |i| a[i] * b[i])
            })
            .sum()
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let comps = [0, 1, 2].map(|c| {
            self.comps[c].iter().zip(&other.comps[c]).map(|(a, b)| a + b).collect()
        });
        VectorField { grid: self.grid, comps }
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        (0..3)
            .flat_map(|c| self.comps[c].iter().zip(&other.comps[c]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

/// `phi = alpha + beta` at every site.
pub fn project_phi(field: &SpinorField) -> ScalarField {
    let data = field.data.par_iter().map(|p| p[0] + p[1]).collect();
    ScalarField { grid: field.grid, data }
}

/// Moves one spinor component a single site along `axis`, with periodic wrap.
///
/// `dir = +1` carries the value at `x` to `x + 1` (a delta at the origin ends
/// up at site 1); `dir = -1` is the inverse. The result is written into a fresh
/// buffer and values are copied bit-for-bit.
pub fn stream(field: &SpinorField, axis: Axis, dir: i64, component: usize) -> SpinorField {
    assert!(dir == 1 || dir == -1, "stream direction must be +1 or -1");
    assert!(component < 2, "spinor component must be 0 or 1");
    let grid = field.grid;
    let src = &field.data;
    let data = (0..grid.sites())
        .into_par_iter()
        .map(|i| {
            let mut p = src[i];
            p[component] = src[grid.neighbor(i, axis, -dir)][component];
            p
        })
        .collect();
    SpinorField { grid, data }
}

/// Applies `op` to every 1D line of sites running along `axis`.
///
/// Lines are independent, so this is parallel over lines. Each line is
/// gathered into a contiguous scratch buffer, transformed, and written back;
/// `op` sees the line in increasing coordinate order.
pub(crate) fn for_each_line<F>(field: &mut SpinorField, axis: Axis, op: F)
where
    F: Fn(&mut [Pair]) + Sync,
{
    let grid = field.grid;
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    match axis {
        Axis::Z => field.data.par_chunks_mut(nz).for_each(&op),
        Axis::Y => field.data.par_chunks_mut(ny * nz).for_each(|slab| {
            let mut line = vec![[Complex64::new(0.0, 0.0); 2]; ny];
            for z in 0..nz {
                for (y, p) in line.iter_mut().enumerate() {
                    *p = slab[y * nz + z];
                }
                op(&mut line);
                for (y, p) in line.iter().enumerate() {
                    slab[y * nz + z] = *p;
                }
            }
        }),
        Axis::X => {
            let plane = ny * nz;
            let src = &field.data;
            let mut scratch = vec![[Complex64::new(0.0, 0.0); 2]; grid.sites()];
            scratch.par_chunks_mut(nx).enumerate().for_each(|(yz, line)| {
                for (x, p) in line.iter_mut().enumerate() {
                    *p = src[x * plane + yz];
                }
                op(line);
            });
            field.data.par_chunks_mut(plane).enumerate().for_each(|(x, slab)| {
                for (yz, p) in slab.iter_mut().enumerate() {
                    *p = scratch[yz * nx + x];
                }
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn numbered(grid: GridSpec) -> SpinorField {
        SpinorField::from_fn(grid, |x, y, z| {
            let i = grid.index(x, y, z) as f64;
            [c(i, -i), c(0.5 * i + 1.0, 2.0)]
        })
    }

    #[test]
    fn grid_rejects_small_extents() {
        assert!(GridSpec::new(3, 8, 8).is_err());
        assert!(GridSpec::new(4, 4, 4).is_ok());
    }

    #[test]
    fn wraparound_is_exact() {
        let g = GridSpec::new(5, 6, 7).unwrap();
        assert_eq!(g.wrapped_index(5, 2, 3), g.index(0, 2, 3));
        assert_eq!(g.wrapped_index(-1, -1, -1), g.index(4, 5, 6));
        for i in 0..g.sites() {
            let [x, y, z] = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
        }
    }

    #[test]
    fn project_phi_examples() {
        let g = GridSpec::cubic(4).unwrap();
        let f = SpinorField::from_fn(g, |_, _, _| [c(0.5, 0.0), c(0.5, 0.0)]);
        assert!(project_phi(&f).data().iter().all(|&p| p == c(1.0, 0.0)));
        let f = SpinorField::from_fn(g, |_, _, _| [c(0.0, 1.0), c(0.0, -1.0)]);
        assert!(project_phi(&f).data().iter().all(|&p| p == c(0.0, 0.0)));
    }

    #[test]
    fn delta_streams_to_next_site() {
        let g = GridSpec::cubic(4).unwrap();
        let mut f = SpinorField::zeros(g);
        f.data_mut()[0][0] = c(1.0, 0.0);
        let s = stream(&f, Axis::X, 1, 0);
        assert_eq!(s.data()[g.index(1, 0, 0)][0], c(1.0, 0.0));
        assert_eq!(s.data()[0][0], c(0.0, 0.0));
        let s = stream(&f, Axis::Z, -1, 0);
        assert_eq!(s.data()[g.index(0, 0, 3)][0], c(1.0, 0.0));
    }

    #[test]
    fn stream_reverse_and_periodicity_bit_exact() {
        let g = GridSpec::new(5, 4, 6).unwrap();
        let f = numbered(g);
        for axis in Axis::ALL {
            for comp in 0..2 {
                let back = stream(&stream(&f, axis, 1, comp), axis, -1, comp);
                assert!(back.bit_eq(&f));
                let mut s = f.clone();
                for _ in 0..g.extent(axis) {
                    s = stream(&s, axis, 1, comp);
                }
                assert!(s.bit_eq(&f));
            }
        }
    }

    #[test]
    fn stream_leaves_other_component_untouched() {
        let g = GridSpec::cubic(4).unwrap();
        let f = numbered(g);
        let s = stream(&f, Axis::Y, 1, 1);
        for (a, b) in f.data().iter().zip(s.data()) {
            assert_eq!(a[0], b[0]);
        }
    }

    #[test]
    fn line_iteration_visits_lines_in_coordinate_order() {
        let g = GridSpec::new(4, 5, 6).unwrap();
        for axis in Axis::ALL {
            let mut f = numbered(g);
            // rotate component 0 left by one within each line: same as streaming dir -1
            for_each_line(&mut f, axis, |line| {
                let first = line[0][0];
                for i in 0..line.len() - 1 {
                    line[i][0] = line[i + 1][0];
                }
                let n = line.len();
                line[n - 1][0] = first;
            });
            assert!(f.bit_eq(&stream(&numbered(g), axis, -1, 0)));
        }
    }

    #[test]
    fn point_inversion_index_is_involution() {
        let g = GridSpec::new(4, 5, 7).unwrap();
        for i in 0..g.sites() {
            assert_eq!(g.inverted_index(g.inverted_index(i)), i);
        }
        assert_eq!(g.inverted_index(g.index(1, 0, 0)), g.index(3, 0, 0));
    }
}
