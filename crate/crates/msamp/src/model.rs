//! System model: configuration, channel statistics, signal and observation
//! synthesis.
//!
//! The observation is Y = N + Σ_u S_u X_u with L×F noise N of i.i.d.
//! CN(0, σ²) entries, per-source dictionaries S_u (L×N_u) and signal
//! matrices X_u (N_u×F) whose rows are independently zero with probability
//! 1−λ_u or CN(0, Σ_u) with probability λ_u.
//!
//! The cell geometry enters only through Σ_u = diag(g_u1 … g_uB) ⊗ I_M,
//! built from a U×B large-scale fading matrix; `wyner_covariances` covers
//! the crosstalk-℘ two-location model and its tiled extensions.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::{DictionaryKind, SemiUnitaryDictionary};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hermitian_sqrt, CMat, C64};
use crate::rng::{standard_complex, standard_complex_matrix, stream};

pub const DEFAULT_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Observation dimension L.
    pub l: usize,
    /// Channel dimension F per user.
    pub f: usize,
    /// AMP / state-evolution iteration count T.
    pub t: usize,
    /// Noise variance σ² per complex entry.
    pub noise_var: f64,
    pub seed: u64,
    pub mc_samples: usize,
    pub dict_kind: DictionaryKind,
    /// Per-source load α_u = N_u / L, each ≥ 1 with α_u·L integral.
    pub alpha: Vec<f64>,
    /// Per-source activity probability λ_u.
    pub lambda: Vec<f64>,
    /// Per-source detection threshold ν_u.
    pub nu: Vec<f64>,
    /// Per-source channel covariance Σ_u (F×F Hermitian PSD).
    pub sigma: Vec<CMat>,
}

impl SystemConfig {
    /// Number of sources U.
    pub fn sources(&self) -> usize {
        self.alpha.len()
    }

    /// Column count N_u = α_u L.
    pub fn n_u(&self, u: usize) -> usize {
        (self.alpha[u] * self.l as f64).round() as usize
    }

    /// The two-location crosstalk model: U = 2, B = M = 2 (so F = 4),
    /// α_u = 1, ν_u = 1, Σ_u from `wyner_covariances` with ℘ = 1/2.
    pub fn two_location(l: usize, lambda: [f64; 2], noise_var: f64, t: usize, seed: u64) -> Self {
        let sigma = wyner_covariances(2, 2, 0.5, None).expect("two-location covariances");
        SystemConfig {
            l,
            f: 4,
            t,
            noise_var,
            seed,
            mc_samples: DEFAULT_MC_SAMPLES,
            dict_kind: DictionaryKind::DenseHaar,
            alpha: vec![1.0, 1.0],
            lambda: lambda.to_vec(),
            nu: vec![1.0, 1.0],
            sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.sources();
        if u == 0 {
            return Err(Error::Config("need at least one source".into()));
        }
        for (name, len) in [
            ("lambda", self.lambda.len()),
            ("nu", self.nu.len()),
            ("sigma", self.sigma.len()),
        ] {
            if len != u {
                return Err(Error::Config(format!(
                    "{name} has {len} entries but alpha has {u}"
                )));
            }
        }
        if self.l == 0 || self.f == 0 || self.t == 0 {
            return Err(Error::Config("l, f and t must be positive".into()));
        }
        if self.mc_samples < 64 {
            return Err(Error::Config("mc_samples must be at least 64".into()));
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::Config("noise_var must be positive".into()));
        }
        for uu in 0..u {
            let a = self.alpha[uu];
            if !(a >= 1.0) {
                return Err(Error::Config(format!(
                    "alpha[{uu}] = {a} must be >= 1 (N_u >= L)"
                )));
            }
            let n_exact = a * self.l as f64;
            if (n_exact - n_exact.round()).abs() > 1e-9 * n_exact.max(1.0) {
                return Err(Error::Config(format!(
                    "alpha[{uu}]*L = {n_exact} is not an integer"
                )));
            }
            if self.dict_kind == DictionaryKind::SignedFourier
                && !self.n_u(uu).is_power_of_two()
            {
                return Err(Error::Config(format!(
                    "signed-Fourier needs power-of-two N_u, got N_{uu} = {}",
                    self.n_u(uu)
                )));
            }
            let lam = self.lambda[uu];
            if !(0.0..=1.0).contains(&lam) {
                return Err(Error::Config(format!("lambda[{uu}] = {lam} not in [0, 1]")));
            }
            if !(self.nu[uu] > 0.0) {
                return Err(Error::Config(format!("nu[{uu}] must be positive")));
            }
            let s = &self.sigma[uu];
            if s.nrows() != self.f || s.ncols() != self.f {
                return Err(Error::Config(format!(
                    "sigma[{uu}] is {}x{}, expected {}x{}",
                    s.nrows(),
                    s.ncols(),
                    self.f,
                    self.f
                )));
            }
            if (s - s.adjoint()).norm() > 1e-10 * s.norm().max(1.0) {
                return Err(Error::Config(format!("sigma[{uu}] is not Hermitian")));
            }
            let (vals, _) = hermitian_eigen(s);
            if vals.first().copied().unwrap_or(0.0) < -1e-10 * vals.last().copied().unwrap_or(1.0).max(1.0) {
                return Err(Error::Config(format!("sigma[{uu}] is not PSD")));
            }
        }
        Ok(())
    }

    pub fn build_dictionaries(&self) -> Result<Vec<SemiUnitaryDictionary>> {
        (0..self.sources())
            .map(|u| {
                SemiUnitaryDictionary::build(
                    self.dict_kind,
                    self.l,
                    self.n_u(u),
                    self.seed,
                    &format!("dict/u{u}"),
                )
            })
            .collect()
    }

    /// Canonical byte encoding of every field, for hashing.
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [self.l as u64, self.f as u64, self.t as u64, self.seed, self.mc_samples as u64] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.noise_var.to_le_bytes());
        b.push(match self.dict_kind {
            DictionaryKind::DenseHaar => 0,
            DictionaryKind::SignedFourier => 1,
        });
        for u in 0..self.sources() {
            b.extend_from_slice(&self.alpha[u].to_le_bytes());
            b.extend_from_slice(&self.lambda[u].to_le_bytes());
            b.extend_from_slice(&self.nu[u].to_le_bytes());
            for v in self.sigma[u].iter() {
                b.extend_from_slice(&v.re.to_le_bytes());
                b.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        b
    }

    /// First 16 hex digits of the SHA-256 of the canonical encoding.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let mut sigma_diag = Vec::with_capacity(self.sources());
        for (u, s) in self.sigma.iter().enumerate() {
            let mut offdiag: f64 = 0.0;
            let mut diag = Vec::with_capacity(self.f);
            for i in 0..self.f {
                for j in 0..self.f {
                    if i == j {
                        diag.push(s[(i, i)].re);
                    } else {
                        offdiag += s[(i, j)].norm_sqr();
                    }
                }
            }
            if offdiag.sqrt() > 1e-12 * s.norm().max(1.0) {
                return Err(Error::Config(format!(
                    "sigma[{u}] has off-diagonal entries; the config file stores diagonal covariances only"
                )));
            }
            sigma_diag.push(diag);
        }
        let file = ConfigFile {
            l: self.l,
            u: self.sources(),
            f: self.f,
            t: self.t,
            noise_var: self.noise_var,
            seed: self.seed,
            mc_samples: self.mc_samples,
            dict_kind: self.dict_kind.to_string(),
            alpha: self.alpha.clone(),
            lambda: self.lambda.clone(),
            nu: self.nu.clone(),
            sigma_diag,
        };
        toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.u != file.alpha.len() {
            return Err(Error::Config(format!(
                "u = {} but alpha has {} entries",
                file.u,
                file.alpha.len()
            )));
        }
        let sigma = file
            .sigma_diag
            .iter()
            .enumerate()
            .map(|(u, d)| {
                if d.len() != file.f {
                    return Err(Error::Config(format!(
                        "sigma_diag[{u}] has {} entries, expected f = {}",
                        d.len(),
                        file.f
                    )));
                }
                let mut m = CMat::zeros(file.f, file.f);
                for (i, &v) in d.iter().enumerate() {
                    m[(i, i)] = C64::new(v, 0.0);
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = SystemConfig {
            l: file.l,
            f: file.f,
            t: file.t,
            noise_var: file.noise_var,
            seed: file.seed,
            mc_samples: file.mc_samples,
            dict_kind: file.dict_kind.parse()?,
            alpha: file.alpha,
            lambda: file.lambda,
            nu: file.nu,
            sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    l: usize,
    u: usize,
    f: usize,
    t: usize,
    noise_var: f64,
    seed: u64,
    mc_samples: usize,
    dict_kind: String,
    alpha: Vec<f64>,
    lambda: Vec<f64>,
    nu: Vec<f64>,
    sigma_diag: Vec<Vec<f64>>,
}

/// Channel covariances Σ_u = diag(g_u1 … g_uB) ⊗ I_M from a U×B
/// large-scale fading matrix. With `gains = None`, U = B and
/// g_ub = 1 on the diagonal, `crosstalk` off it (the classical crosstalk
/// cell row [1, ℘] / [℘, 1] for B = 2).
pub fn wyner_covariances(
    b: usize,
    m: usize,
    crosstalk: f64,
    gains: Option<&[Vec<f64>]>,
) -> Result<Vec<CMat>> {
    if b == 0 || m == 0 {
        return Err(Error::Config("need b >= 1 and m >= 1".into()));
    }
    if !(0.0..=1.0).contains(&crosstalk) {
        return Err(Error::Config(format!("crosstalk {crosstalk} not in [0, 1]")));
    }
    let default_gains: Vec<Vec<f64>>;
    let g: &[Vec<f64>] = match gains {
        Some(g) => g,
        None => {
            default_gains = (0..b)
                .map(|u| {
                    (0..b)
                        .map(|bb| if u == bb { 1.0 } else { crosstalk })
                        .collect()
                })
                .collect();
            &default_gains
        }
    };
    let f = b * m;
    g.iter()
        .enumerate()
        .map(|(u, row)| {
            if row.len() != b {
                return Err(Error::Config(format!(
                    "gain row {u} has {} entries, expected {b}",
                    row.len()
                )));
            }
            let mut s = CMat::zeros(f, f);
            for (bb, &gain) in row.iter().enumerate() {
                if gain < 0.0 {
                    return Err(Error::Config(format!("negative gain g[{u}][{bb}]")));
                }
                for mm in 0..m {
                    s[(bb * m + mm, bb * m + mm)] = C64::new(gain, 0.0);
                }
            }
            Ok(s)
        })
        .collect()
}

/// Gain matrix for 2-cell geometry tiled to U locations (U even):
/// odd-indexed locations mirror location 0, even-indexed mirror location 1.
pub fn tiled_two_cell_gains(u: usize, crosstalk: f64) -> Result<Vec<Vec<f64>>> {
    if u == 0 || u % 2 != 0 {
        return Err(Error::Config(format!("tiled gains need even U, got {u}")));
    }
    Ok((0..u)
        .map(|uu| {
            if uu % 2 == 0 {
                vec![1.0, crosstalk]
            } else {
                vec![crosstalk, 1.0]
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SignalRealization {
    /// Per-source N_u×F signal matrix; inactive rows are zero.
    pub x: Vec<CMat>,
    /// Per-source activity flags.
    pub activity: Vec<Vec<bool>>,
}

impl SignalRealization {
    /// All (source, index) pairs of active users.
    pub fn active_set(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, act) in self.activity.iter().enumerate() {
            for (n, &a) in act.iter().enumerate() {
                if a {
                    out.push((u, n));
                }
            }
        }
        out
    }
}

/// Draw activities and channel rows for every source. `scope` isolates the
/// RNG substreams, so distinct scopes (e.g. trial indices) give independent
/// realizations under one master seed.
pub fn sample_signals(cfg: &SystemConfig, scope: &str) -> Result<SignalRealization> {
    let mut x = Vec::with_capacity(cfg.sources());
    let mut activity = Vec::with_capacity(cfg.sources());
    for u in 0..cfg.sources() {
        let n = cfg.n_u(u);
        let root = hermitian_sqrt(&cfg.sigma[u])?;
        let mut act_rng = stream(cfg.seed, &format!("{scope}/activity/u{u}"));
        let mut chan_rng = stream(cfg.seed, &format!("{scope}/channel/u{u}"));
        let mut xu = CMat::zeros(n, cfg.f);
        let mut act = vec![false; n];
        for row in 0..n {
            // draw the uniform unconditionally to keep the stream aligned
            // across configs that differ only in lambda
            let coin: f64 = rand::RngExt::random(&mut act_rng);
            if coin < cfg.lambda[u] {
                act[row] = true;
                let z = standard_complex_matrix(1, cfg.f, &mut chan_rng);
                let h = &z * &root;
                xu.row_mut(row).copy_from(&h);
            }
        }
        x.push(xu);
        activity.push(act);
    }
    Ok(SignalRealization { x, activity })
}

/// Y = N + Σ_u S_u X_u. Returns (Y, N); the realized noise feeds the
/// oracle dynamics.
pub fn synthesize_observation(
    cfg: &SystemConfig,
    dicts: &[SemiUnitaryDictionary],
    signals: &SignalRealization,
    scope: &str,
) -> Result<(CMat, CMat)> {
    if dicts.len() != cfg.sources() || signals.x.len() != cfg.sources() {
        return Err(Error::Shape {
            context: "observation synthesis",
            expected: format!("{} sources", cfg.sources()),
            got: format!("{} dicts, {} signals", dicts.len(), signals.x.len()),
        });
    }
    let mut noise_rng = stream(cfg.seed, &format!("{scope}/noise"));
    let sd = cfg.noise_var.sqrt();
    let noise = CMat::from_fn(cfg.l, cfg.f, |_, _| standard_complex(&mut noise_rng) * sd);
    let mut y = noise.clone();
    for (u, d) in dicts.iter().enumerate() {
        y += d.apply(&signals.x[u])?;
    }
    Ok((y, noise))
}
