//! Arnold cat map `(x, y) -> (2x + y, x + y) mod N` on square pixel images.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{QlgError, Result};

/// `N x N` pixels stored row by row (`y` major, `x` minor).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage<T> {
    n: usize,
    pixels: Vec<T>,
}

impl<T: Clone> PixelImage<T> {
    pub fn new(n: usize, pixels: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(QlgError::InvalidInput("image side must be at least 1".into()));
        }
        if pixels.len() != n * n {
            return Err(QlgError::InvalidInput(format!("expected {} pixels, got {}", n * n, pixels.len())));
        }
        Ok(PixelImage { n, pixels })
    }

    pub fn from_fn<F: FnMut(usize, usize) -> T>(n: usize, mut f: F) -> Result<Self> {
        let mut pixels = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                pixels.push(f(x, y));
            }
        }
        PixelImage::new(n, pixels)
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.pixels[y * self.n + x]
    }

    fn remap(&self, dest: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let n = self.n;
        let mut out = self.pixels.clone();
        for y in 0..n {
            for x in 0..n {
                let (nx, ny) = dest(x, y);
                out[ny * n + nx] = self.pixels[y * n + x].clone();
            }
        }
        PixelImage { n, pixels: out }
    }

    /// Maps the pixel at `(x, y)` to `(-x mod N, -y mod N)`.
    pub fn point_inversion(&self) -> Self {
        let n = self.n;
        self.remap(|x, y| ((n - x) % n, (n - y) % n))
    }
}

impl PixelImage<u32> {
    /// Image whose pixels all differ (each holds its own index).
    pub fn labelled(n: usize) -> Result<Self> {
        PixelImage::from_fn(n, |x, y| (y * n + x) as u32)
    }
}

/// Moves the pixel at `(x, y)` to `((2x + y) mod N, (x + y) mod N)`.
pub fn cat_step<T: Clone>(img: &PixelImage<T>) -> PixelImage<T> {
    let n = img.n;
    img.remap(|x, y| ((2 * x + y) % n, (x + y) % n))
}

/// Inverse map `(x, y) -> ((x - y) mod N, (2y - x) mod N)`.
pub fn cat_step_inverse<T: Clone>(img: &PixelImage<T>) -> PixelImage<T> {
    let n = img.n;
    img.remap(|x, y| ((x + n - y) % n, (2 * y + n - x) % n))
}

type Mat = [[u64; 2]; 2];

fn mat_mul(a: &Mat, b: &Mat, n: u64) -> Mat {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (a[i][0] * b[0][j] + a[i][1] * b[1][j]) % n;
        }
    }
    out
}

fn mat_pow(m: &Mat, mut e: u64, n: u64) -> Mat {
    let mut result = [[1 % n, 0], [0, 1 % n]];
    let mut base = *m;
    while e > 0 {
        if e & 1 == 1 {
            result = mat_mul(&result, &base, n);
        }
        base = mat_mul(&base, &base, n);
        e >>= 1;
    }
    result
}

const CAT: Mat = [[2, 1], [1, 1]];

/// Period `T` of the cat map on an `N x N` grid, and whether the state at
/// `T / 2` is the point inversion of the initial one.
///
/// The period is the order of `[[2, 1], [1, 1]]` modulo `N`, found by
/// stepping through its powers (the order never exceeds `3N`).
pub fn cat_period(n: u64) -> (u64, bool) {
    assert!(n >= 1, "cat map needs N >= 1");
    assert!(n < 1 << 31, "N too large for 64-bit matrix products");
    if n == 1 {
        return (1, false);
    }
    let identity: Mat = [[1, 0], [0, 1]];
    let mut m = CAT;
    let mut t = 1;
    while m != identity {
        m = mat_mul(&m, &CAT, n);
        t += 1;
    }
    let minus_one: Mat = [[n - 1, 0], [0, n - 1]];
    let half_inversion = t % 2 == 0 && mat_pow(&CAT, t / 2, n) == minus_one;
    (t, half_inversion)
}

/// Reads a binary (P5) PGM with maxval below 256.
pub fn read_pgm(path: &Path) -> Result<PixelImage<u8>> {
    let file = std::fs::File::open(path).map_err(|e| QlgError::io(path, e))?;
    parse_pgm(BufReader::new(file)).map_err(|e| match e {
        QlgError::Format(m) => QlgError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn parse_pgm<R: BufRead>(mut r: R) -> Result<PixelImage<u8>> {
    let mut header = Vec::new();
    // magic, width, height, maxval; `#` comments run to end of line
    while header.len() < 4 {
        let mut line = String::new();
        if r.read_line(&mut line).map_err(|e| QlgError::io("pgm", e))? == 0 {
            return Err(QlgError::Format("PGM header ended early".into()));
        }
        let content = line.split('#').next().unwrap_or("");
        header.extend(content.split_whitespace().map(str::to_owned));
    }
    if header.len() > 4 {
        return Err(QlgError::Format("unexpected data after PGM header".into()));
    }
    if header[0] != "P5" {
        return Err(QlgError::Format(format!("expected PGM magic P5, found {:?}", header[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| QlgError::Format(format!("bad PGM header value `{s}`")));
    let (w, h, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    if w != h {
        return Err(QlgError::Format(format!("cat map needs a square image, got {w}x{h}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(QlgError::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let mut pixels = vec![0u8; w * h];
    let mut filled = 0;
    while filled < pixels.len() {
        match r.read(&mut pixels[filled..]).map_err(|e| QlgError::io("pgm", e))? {
            0 => return Err(QlgError::Truncated { expected: (w * h) as u64, found: filled as u64 }),
            k => filled += k,
        }
    }
    PixelImage::new(w, pixels)
}

pub fn write_pgm(img: &PixelImage<u8>, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.n, img.n).into_bytes();
    bytes.extend_from_slice(&img.pixels);
    crate::snapshot::write_atomic(path, |w| w.write_all(&bytes))
}
