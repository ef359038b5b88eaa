//! Random semi-unitary dictionaries.
//!
//! A dictionary is S = √α · P · O with O an N×N unitary, P an L×N row
//! selector and α = N/L the load, so that S S† = α I_L. Two ensembles:
//!
//! * `DenseHaar`: O is Haar-distributed. Internally O is kept as a product
//!   of Householder reflections (one per recursion level of the subgroup
//!   algorithm: a uniform coset representative on the sphere times a Haar
//!   element of the stabilizer), which samples the exact Haar law in O(N²)
//!   work and applies in O(N²F). Each reflection has its own labeled RNG
//!   substream, so beyond a size threshold the operator regenerates
//!   reflections on the fly during apply — bit-identical to the stored
//!   mode — and never holds O(N²) memory. P selects the first L rows.
//! * `SignedFourier`: O = diag(s) F_N diag(s) with i.i.d. uniform signs s
//!   and the unitary DFT F_N (entries e^{-2πi jk/N}/√N); P selects L rows
//!   uniformly without replacement. Applies run through an FFT in
//!   O(N log N) per column and the matrix is never materialized. N must be
//!   a power of two.
//!
//! `sample_haar_unitary` returns an explicit Haar matrix via QR of an
//! i.i.d. complex Gaussian matrix with the R-diagonal phase correction
//! (plain QR alone is not Haar-distributed).

use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, RngExt};
use rustfft::Fft;

use crate::error::{Error, Result};
use crate::linalg::{czero, CMat, C64};
use crate::rng::{standard_complex, standard_complex_matrix, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionaryKind {
    DenseHaar,
    SignedFourier,
}

impl std::fmt::Display for DictionaryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DictionaryKind::DenseHaar => write!(f, "haar"),
            DictionaryKind::SignedFourier => write!(f, "fourier"),
        }
    }
}

impl std::str::FromStr for DictionaryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "haar" | "dense-haar" | "dense_haar" => Ok(DictionaryKind::DenseHaar),
            "fourier" | "signed-fourier" | "signed_fourier" => Ok(DictionaryKind::SignedFourier),
            other => Err(Error::Parse(format!(
                "unknown dictionary kind {other:?}; expected \"haar\" or \"fourier\""
            ))),
        }
    }
}

/// One level of the Haar product: v ↦ e^{iφ}(I − 2ww†)v on the trailing
/// coordinates. `w = None` means a pure phase.
struct Reflection {
    phase: C64,
    w: Option<Vec<C64>>,
}

fn draw_reflection(n: usize, seed: u64, label: &str, k: usize) -> Reflection {
    let mut rng = stream(seed, &format!("{label}/hh{k}"));
    let m = n - k;
    let x: Vec<C64> = (0..m).map(|_| standard_complex(&mut rng)).collect();
    let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let x0_abs = x[0].norm();
    let phase = if x0_abs > 0.0 {
        x[0] / x0_abs
    } else {
        C64::new(1.0, 0.0)
    };
    // y = e^{-iφ} x/‖x‖ has a real nonnegative first entry; the reflection
    // sends e_1 to y, so e^{iφ}(I − 2ww†) sends e_1 to x/‖x‖.
    let y0 = x0_abs / norm;
    let gap = 2.0 * (1.0 - y0);
    if gap <= 1e-28 {
        return Reflection { phase, w: None };
    }
    let inv = 1.0 / gap.sqrt();
    let pc = phase.conj();
    let mut w = Vec::with_capacity(m);
    w.push(C64::new((1.0 - y0) * inv, 0.0));
    for xi in &x[1..] {
        w.push(-(pc * xi / norm) * inv);
    }
    Reflection { phase, w: Some(w) }
}

fn reflect_forward(col: &mut [C64], r: &Reflection) {
    if let Some(w) = &r.w {
        let mut c = czero();
        for (wi, vi) in w.iter().zip(col.iter()) {
            c += wi.conj() * *vi;
        }
        let c2 = c + c;
        for (wi, vi) in w.iter().zip(col.iter_mut()) {
            *vi -= c2 * *wi;
        }
    }
    for vi in col.iter_mut() {
        *vi *= r.phase;
    }
}

fn reflect_adjoint(col: &mut [C64], r: &Reflection) {
    let pc = r.phase.conj();
    for vi in col.iter_mut() {
        *vi *= pc;
    }
    if let Some(w) = &r.w {
        let mut c = czero();
        for (wi, vi) in w.iter().zip(col.iter()) {
            c += wi.conj() * *vi;
        }
        let c2 = c + c;
        for (wi, vi) in w.iter().zip(col.iter_mut()) {
            *vi -= c2 * *wi;
        }
    }
}

/// Above this many stored complex entries (~320 MB) the reflection table is
/// regenerated from its substreams during each apply instead of being kept.
const MAX_STORED_REFLECTION_ENTRIES: usize = 20_000_000;

struct HaarProduct {
    n: usize,
    seed: u64,
    label: String,
    stored: Option<Vec<Reflection>>,
}

impl HaarProduct {
    fn new(n: usize, seed: u64, label: &str) -> Self {
        let entries = n * (n + 1) / 2;
        let stored = if entries <= MAX_STORED_REFLECTION_ENTRIES {
            Some(
                (0..n)
                    .map(|k| draw_reflection(n, seed, label, k))
                    .collect(),
            )
        } else {
            None
        };
        HaarProduct {
            n,
            seed,
            label: label.to_string(),
            stored,
        }
    }

    #[cfg(test)]
    fn new_streamed(n: usize, seed: u64, label: &str) -> Self {
        HaarProduct {
            n,
            seed,
            label: label.to_string(),
            stored: None,
        }
    }

    fn with_reflection<T>(&self, k: usize, f: impl FnOnce(&Reflection) -> T) -> T {
        match &self.stored {
            Some(table) => f(&table[k]),
            None => f(&draw_reflection(self.n, self.seed, &self.label, k)),
        }
    }

    /// work ← O · work, each column independently.
    fn apply_forward(&self, work: &mut CMat) {
        let (n, cols) = (self.n, work.ncols());
        debug_assert_eq!(work.nrows(), n);
        for k in (0..n).rev() {
            self.with_reflection(k, |r| {
                let data = work.as_mut_slice();
                for f in 0..cols {
                    reflect_forward(&mut data[f * n + k..(f + 1) * n], r);
                }
            });
        }
    }

    /// work ← O† · work.
    fn apply_adjoint(&self, work: &mut CMat) {
        let (n, cols) = (self.n, work.ncols());
        debug_assert_eq!(work.nrows(), n);
        for k in 0..n {
            self.with_reflection(k, |r| {
                let data = work.as_mut_slice();
                for f in 0..cols {
                    reflect_adjoint(&mut data[f * n + k..(f + 1) * n], r);
                }
            });
        }
    }
}

struct FourierRepr {
    signs: Vec<f64>,
    selection: Vec<usize>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl FourierRepr {
    fn new(n: usize, signs: Vec<f64>, selection: Vec<usize>) -> Self {
        let mut planner = rustfft::FftPlanner::new();
        FourierRepr {
            signs,
            selection,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        }
    }
}

enum Repr {
    Haar(HaarProduct),
    Dense(CMat),
    Fourier(FourierRepr),
}

pub struct SemiUnitaryDictionary {
    kind: DictionaryKind,
    rows: usize,
    cols: usize,
    alpha: f64,
    repr: Repr,
}

impl SemiUnitaryDictionary {
    /// Build an L×N dictionary of the given ensemble. `seed`/`label` name
    /// the RNG substream, so the same pair reproduces the same dictionary.
    pub fn build(
        kind: DictionaryKind,
        rows: usize,
        cols: usize,
        seed: u64,
        label: &str,
    ) -> Result<Self> {
        if rows == 0 || cols < rows {
            return Err(Error::Dimension(format!(
                "dictionary needs 1 <= L <= N, got L={rows}, N={cols}"
            )));
        }
        let alpha = cols as f64 / rows as f64;
        let repr = match kind {
            DictionaryKind::DenseHaar => Repr::Haar(HaarProduct::new(cols, seed, label)),
            DictionaryKind::SignedFourier => {
                if !cols.is_power_of_two() {
                    return Err(Error::NotPowerOfTwo("signed-Fourier column count", cols));
                }
                let mut rng = stream(seed, &format!("{label}/fourier"));
                let signs: Vec<f64> = (0..cols)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                // uniform without replacement: partial Fisher-Yates
                let mut pool: Vec<usize> = (0..cols).collect();
                for i in 0..rows {
                    let j = rng.random_range(i..cols);
                    pool.swap(i, j);
                }
                pool.truncate(rows);
                Repr::Fourier(FourierRepr::new(cols, signs, pool))
            }
        };
        Ok(SemiUnitaryDictionary {
            kind,
            rows,
            cols,
            alpha,
            repr,
        })
    }

    /// Dense-Haar dictionary sharing an explicitly supplied unitary
    /// (selection is the first L rows, matching `build`). Used where the
    /// same O must drive both the AMP engine and the oracle dynamics.
    pub fn from_unitary(o: &CMat, rows: usize) -> Result<Self> {
        let n = o.nrows();
        if o.ncols() != n || rows == 0 || rows > n {
            return Err(Error::Dimension(format!(
                "from_unitary needs square O and 1 <= L <= N, got O {}x{}, L={rows}",
                o.nrows(),
                o.ncols()
            )));
        }
        let alpha = n as f64 / rows as f64;
        let s = o.rows(0, rows).into_owned().scale(alpha.sqrt());
        Ok(SemiUnitaryDictionary {
            kind: DictionaryKind::DenseHaar,
            rows,
            cols: n,
            alpha,
            repr: Repr::Dense(s),
        })
    }

    /// Wrap an explicit dense operator (already scaled). The apply cost of
    /// a dense dictionary depends only on its shape, so timing harnesses
    /// can use arbitrary content.
    pub fn from_dense_matrix(s: CMat) -> Result<Self> {
        let (rows, cols) = (s.nrows(), s.ncols());
        if rows == 0 || cols < rows {
            return Err(Error::Dimension(format!(
                "dense dictionary needs 1 <= L <= N, got {rows}x{cols}"
            )));
        }
        Ok(SemiUnitaryDictionary {
            kind: DictionaryKind::DenseHaar,
            rows,
            cols,
            alpha: cols as f64 / rows as f64,
            repr: Repr::Dense(s),
        })
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }

    /// L, the observation dimension.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// N, the column count.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Load factor N/L.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Row indices of O kept by the selector P.
    pub fn selection(&self) -> Vec<usize> {
        match &self.repr {
            Repr::Fourier(f) => f.selection.clone(),
            _ => (0..self.rows).collect(),
        }
    }

    pub fn signs(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Fourier(f) => Some(&f.signs),
            _ => None,
        }
    }

    /// S · x for x of shape N×F.
    pub fn apply(&self, x: &CMat) -> Result<CMat> {
        if x.nrows() != self.cols {
            return Err(Error::Shape {
                context: "dictionary apply",
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", x.nrows()),
            });
        }
        let sqrt_alpha = self.alpha.sqrt();
        match &self.repr {
            Repr::Haar(h) => {
                let mut work = x.clone();
                h.apply_forward(&mut work);
                Ok(work.rows(0, self.rows).into_owned().scale(sqrt_alpha))
            }
            Repr::Dense(s) => Ok(s * x),
            Repr::Fourier(f) => {
                let n = self.cols;
                let scale = sqrt_alpha / (n as f64).sqrt();
                let mut out = CMat::zeros(self.rows, x.ncols());
                let mut buf = vec![czero(); n];
                let mut scratch = vec![czero(); f.fft.get_inplace_scratch_len()];
                for c in 0..x.ncols() {
                    for j in 0..n {
                        buf[j] = x[(j, c)] * f.signs[j];
                    }
                    f.fft.process_with_scratch(&mut buf, &mut scratch);
                    for (i, &sel) in f.selection.iter().enumerate() {
                        out[(i, c)] = buf[sel] * (f.signs[sel] * scale);
                    }
                }
                Ok(out)
            }
        }
    }

    /// S† · z for z of shape L×F.
    pub fn apply_adjoint(&self, z: &CMat) -> Result<CMat> {
        if z.nrows() != self.rows {
            return Err(Error::Shape {
                context: "dictionary adjoint apply",
                expected: format!("{} rows", self.rows),
                got: format!("{} rows", z.nrows()),
            });
        }
        let sqrt_alpha = self.alpha.sqrt();
        match &self.repr {
            Repr::Haar(h) => {
                let mut work = CMat::zeros(self.cols, z.ncols());
                work.rows_mut(0, self.rows).copy_from(z);
                h.apply_adjoint(&mut work);
                Ok(work.scale(sqrt_alpha))
            }
            Repr::Dense(s) => Ok(s.ad_mul(z)),
            Repr::Fourier(f) => {
                let n = self.cols;
                let scale = sqrt_alpha / (n as f64).sqrt();
                let mut out = CMat::zeros(n, z.ncols());
                let mut buf = vec![czero(); n];
                let mut scratch = vec![czero(); f.ifft.get_inplace_scratch_len()];
                for c in 0..z.ncols() {
                    buf.fill(czero());
                    for (i, &sel) in f.selection.iter().enumerate() {
                        buf[sel] = z[(i, c)] * f.signs[sel];
                    }
                    f.ifft.process_with_scratch(&mut buf, &mut scratch);
                    for j in 0..n {
                        out[(j, c)] = buf[j] * (f.signs[j] * scale);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Column j of S as an L-vector. O(L) for signed-Fourier (closed form),
    /// one apply otherwise.
    pub fn column(&self, j: usize) -> Result<Vec<C64>> {
        if j >= self.cols {
            return Err(Error::Dimension(format!(
                "column {j} out of range for N={}",
                self.cols
            )));
        }
        match &self.repr {
            Repr::Fourier(f) => {
                let n = self.cols as f64;
                let scale = self.alpha.sqrt() / n.sqrt() * f.signs[j];
                Ok(f.selection
                    .iter()
                    .map(|&sel| {
                        let ang = -2.0 * std::f64::consts::PI * (sel as f64) * (j as f64) / n;
                        C64::new(ang.cos(), ang.sin()) * (f.signs[sel] * scale)
                    })
                    .collect())
            }
            Repr::Dense(s) => Ok(s.column(j).iter().copied().collect()),
            Repr::Haar(_) => {
                let mut e = CMat::zeros(self.cols, 1);
                e[(j, 0)] = C64::new(1.0, 0.0);
                let col = self.apply(&e)?;
                Ok(col.column(0).iter().copied().collect())
            }
        }
    }

    /// Explicit L×N matrix. Costs one apply per column; intended for test
    /// and desk-check sizes.
    pub fn materialize(&self) -> CMat {
        match &self.repr {
            Repr::Dense(s) => s.clone(),
            _ => {
                let mut out = CMat::zeros(self.rows, self.cols);
                for j in 0..self.cols {
                    let col = self.column(j).expect("column in range");
                    for i in 0..self.rows {
                        out[(i, j)] = col[i];
                    }
                }
                out
            }
        }
    }

    /// Serialize the signs/selection of a signed-Fourier dictionary.
    /// Layout, little-endian: magic "MSFD", u32 version, u64 L, u64 N,
    /// N sign bytes (0x01 = +1, 0xFF = −1), L u64 selection indices.
    pub fn write_fourier_params<W: Write>(&self, out: &mut W) -> Result<()> {
        let f = match &self.repr {
            Repr::Fourier(f) => f,
            _ => {
                return Err(Error::Config(
                    "parameter dump applies to signed-Fourier dictionaries only".into(),
                ))
            }
        };
        out.write_all(b"MSFD")?;
        out.write_all(&1u32.to_le_bytes())?;
        out.write_all(&(self.rows as u64).to_le_bytes())?;
        out.write_all(&(self.cols as u64).to_le_bytes())?;
        let bytes: Vec<u8> = f
            .signs
            .iter()
            .map(|&s| if s > 0.0 { 0x01u8 } else { 0xFF })
            .collect();
        out.write_all(&bytes)?;
        for &sel in &f.selection {
            out.write_all(&(sel as u64).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_fourier_params<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"MSFD" {
            return Err(Error::Parse("bad magic in dictionary parameter dump".into()));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != 1 {
            return Err(Error::Parse("unsupported dictionary dump version".into()));
        }
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let rows = u64::from_le_bytes(u64buf) as usize;
        input.read_exact(&mut u64buf)?;
        let cols = u64::from_le_bytes(u64buf) as usize;
        if rows == 0 || cols < rows || !cols.is_power_of_two() {
            return Err(Error::Parse("inconsistent dimensions in dictionary dump".into()));
        }
        let mut sign_bytes = vec![0u8; cols];
        input.read_exact(&mut sign_bytes)?;
        let signs: Vec<f64> = sign_bytes
            .iter()
            .map(|&b| match b {
                0x01 => Ok(1.0),
                0xFF => Ok(-1.0),
                other => Err(Error::Parse(format!("bad sign byte {other:#x}"))),
            })
            .collect::<Result<_>>()?;
        let mut selection = Vec::with_capacity(rows);
        for _ in 0..rows {
            input.read_exact(&mut u64buf)?;
            let sel = u64::from_le_bytes(u64buf) as usize;
            if sel >= cols {
                return Err(Error::Parse(format!("selection index {sel} out of range")));
            }
            selection.push(sel);
        }
        Ok(SemiUnitaryDictionary {
            kind: DictionaryKind::SignedFourier,
            rows,
            cols,
            alpha: cols as f64 / rows as f64,
            repr: Repr::Fourier(FourierRepr::new(cols, signs, selection)),
        })
    }
}

/// Haar-distributed n×n unitary: QR of an i.i.d. CN(0,1) matrix, with Q's
/// columns rotated by the phases of R's diagonal.
pub fn sample_haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CMat> {
    if n == 0 {
        return Err(Error::Dimension("Haar matrix needs n >= 1".into()));
    }
    let g = standard_complex_matrix(n, n, rng);
    let qr = nalgebra::QR::new(g);
    let r_diag: Vec<C64> = (0..n).map(|i| qr.r()[(i, i)]).collect();
    let mut q = qr.q();
    for (j, d) in r_diag.iter().enumerate() {
        let norm = d.norm();
        let phase = if norm > 0.0 {
            *d / norm
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    Ok(q)
}
