//! Two-time state evolution.
//!
//! For each source u the effective noises (ψ_u^(t), φ_u^(t)) are zero-mean
//! Gaussian processes whose covariances obey
//!
//!   C_ψu^(t,s) = α_u·E[(x_u − f_u^(t))†(x_u − f_u^(s))]
//!   C_φu^(t,s) = σ²I + ((α_u−1)/α_u)·C_ψu^(t,s) + Σ_{u'≠u} C_ψu'^(t,s)
//!
//! with f_u^(t+1) = f_{u,t}(x_u + φ_u^(t)) and f_u^(1) = 0. The expectations
//! are Monte-Carlo estimates over per-source sample banks shared by every
//! (t, s) pair (common random numbers), so each assembled two-time matrix is
//! an exact Gram matrix and PSD to machine precision. Banks are additionally
//! moment-matched (`gram_match`), which pins the base case
//! C_ψ^(1,1) = α λ Σ exactly and removes the leading MC error from every
//! covariance block; all sources advance in lockstep because C_φ of one
//! source mixes in C_ψ of all the others.

use crate::denoiser::{DenoiserParams, DivergenceFreeDenoiser};
use crate::error::{Error, Result};
use crate::linalg::{
    get_block, gram_match, hermitianize, identity, pd_inverse, psd_cholesky, CMat,
};
use crate::model::SystemConfig;
use crate::rng::{standard_complex_matrix, stream};
use crate::stats::{batch_ranges, MatrixStat};

pub const SE_BATCHES: usize = 20;

/// Lower block-triangular factor B with A = B·B†. Blocks of any size F
/// divide the scalar factor, so this is the scalar PSD-tolerant Cholesky;
/// rank-deficient pivots are zeroed, which makes comonotone (fully
/// correlated) processes reproduce exactly.
pub fn block_cholesky(a: &CMat) -> Result<CMat> {
    psd_cholesky(a)
}

/// Draw `n` joint rows (φ^(1), …, φ^(t)) of a Gaussian process with the
/// given two-time covariance, assembled from `pairs[(t,s)]` blocks
/// (1 ≤ s ≤ t). Returns an n×tF matrix, block column s holding φ^(s).
pub fn sample_gp_trajectory<R: rand::Rng + ?Sized>(
    pairs: &dyn Fn(usize, usize) -> CMat,
    t: usize,
    f: usize,
    n: usize,
    rng: &mut R,
) -> Result<CMat> {
    let a = assemble_two_time(pairs, t, f);
    let b = block_cholesky(&a)?;
    let z = standard_complex_matrix(n, t * f, rng);
    Ok(z * b.adjoint())
}

fn assemble_two_time(pairs: &dyn Fn(usize, usize) -> CMat, t: usize, f: usize) -> CMat {
    let mut a = CMat::zeros(t * f, t * f);
    for tt in 1..=t {
        for s in 1..=tt {
            let block = pairs(tt, s);
            set_block(&mut a, f, tt - 1, s - 1, &block);
            if s != tt {
                set_block(&mut a, f, s - 1, tt - 1, &block.adjoint());
            }
        }
    }
    a
}

fn set_block(a: &mut CMat, f: usize, r: usize, c: usize, val: &CMat) {
    crate::linalg::set_block(a, f, r, c, val);
}

/// Per-(source, iteration) Monte-Carlo diagnostics, over `SE_BATCHES`
/// equal batches of the sample bank.
#[derive(Debug, Clone)]
pub struct IterationDiagnostics {
    /// Batch statistics of Q^(t+1).
    pub q: MatrixStat,
    /// Batch statistics of the equal-time block C_ψ^(t+1,t+1).
    pub c_psi_next: MatrixStat,
    /// Batch statistics of (I−Q)⁻¹ − I − (C_φ^(t,t))⁻¹ α⁻¹ C_ψ^(t+1,t+1),
    /// each batch internally consistent (its own Q and f). Zero in
    /// expectation for the exact posterior-mean denoiser.
    pub identity_residual: MatrixStat,
}

#[derive(Debug, Clone)]
pub struct TwoTimeCovariance {
    f: usize,
    t_max: usize,
    sources: usize,
    /// [u][pair(t,s)] with 1 ≤ s ≤ t ≤ T.
    c_psi: Vec<Vec<CMat>>,
    c_phi: Vec<Vec<CMat>>,
    /// [u][t−2] holding Q_u^(t) for t = 2..=T+1.
    q: Vec<Vec<CMat>>,
    /// [u][t−1] for t = 1..=T.
    pub diagnostics: Vec<Vec<IterationDiagnostics>>,
}

fn pair_index(t: usize, s: usize) -> usize {
    assert!(1 <= s && s <= t, "need 1 <= s <= t, got t={t}, s={s}");
    t * (t - 1) / 2 + (s - 1)
}

impl TwoTimeCovariance {
    pub fn dim(&self) -> usize {
        self.f
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    /// C_ψu^(t,s), 1 ≤ s ≤ t ≤ T.
    pub fn c_psi(&self, u: usize, t: usize, s: usize) -> &CMat {
        &self.c_psi[u][pair_index(t, s)]
    }

    /// C_φu^(t,s), 1 ≤ s ≤ t ≤ T.
    pub fn c_phi(&self, u: usize, t: usize, s: usize) -> &CMat {
        &self.c_phi[u][pair_index(t, s)]
    }

    /// Q_u^(t) = E[η'_{u,t−1}], available for t = 2..=T+1.
    pub fn q(&self, u: usize, t: usize) -> &CMat {
        assert!(
            (2..=self.t_max + 1).contains(&t),
            "Q is defined for 2 <= t <= T+1, got t={t}"
        );
        &self.q[u][t - 2]
    }

    /// Assembled tF×tF two-time matrix of C_φu blocks, 1 ≤ t ≤ T.
    pub fn assembled_c_phi(&self, u: usize, t: usize) -> CMat {
        assemble_two_time(&|tt, s| self.c_phi(u, tt, s).clone(), t, self.f)
    }

    /// CSV dump: kind,u,t,s,i,j,re,im — kind ∈ {psi, phi, q} with s = 0
    /// on q rows.
    pub fn csv_string(&self) -> String {
        let mut out = String::from("kind,u,t,s,i,j,re,im\n");
        for u in 0..self.sources {
            for t in 1..=self.t_max {
                for s in 1..=t {
                    for (kind, m) in [("psi", self.c_psi(u, t, s)), ("phi", self.c_phi(u, t, s))] {
                        push_matrix_rows(&mut out, kind, u, t, s, m);
                    }
                }
            }
            for t in 2..=self.t_max + 1 {
                push_matrix_rows(&mut out, "q", u, t, 0, self.q(u, t));
            }
        }
        out
    }
}

fn push_matrix_rows(out: &mut String, kind: &str, u: usize, t: usize, s: usize, m: &CMat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            out.push_str(&format!(
                "{kind},{u},{t},{s},{i},{j},{:.17e},{:.17e}\n",
                v.re, v.im
            ));
        }
    }
}

struct SourceBanks {
    x: CMat,
    z: CMat,
    /// f^(s) banks, index s−1, s = 1..=T+1 as they appear.
    f_banks: Vec<CMat>,
    /// φ^(s) banks, index s−1.
    phi_banks: Vec<CMat>,
}

/// Run the two-time state-evolution recursion by Monte Carlo with
/// `config.mc_samples` joint trajectories per source.
pub fn run_state_evolution(config: &SystemConfig) -> Result<TwoTimeCovariance> {
    config.validate()?;
    let (f, t_max, sources, mc) = (config.f, config.t, config.sources(), config.mc_samples);
    if mc < 2 * t_max * f {
        return Err(Error::Config(format!(
            "mc_samples = {mc} too small for T·F = {}; need at least {}",
            t_max * f,
            2 * t_max * f
        )));
    }
    let sigma_noise = identity(f).scale(config.noise_var);

    let mut banks = Vec::with_capacity(sources);
    for u in 0..sources {
        let mut x_rng = stream(config.seed, &format!("se/x/u{u}"));
        let mut z_rng = stream(config.seed, &format!("se/z/u{u}"));
        let mut x = CMat::zeros(mc, f);
        let sig_root = crate::linalg::hermitian_sqrt(&config.sigma[u])?;
        for row in 0..mc {
            let coin: f64 = rand::RngExt::random(&mut x_rng);
            if coin < config.lambda[u] {
                let zr = standard_complex_matrix(1, f, &mut x_rng);
                x.row_mut(row).copy_from(&(&zr * &sig_root));
            }
        }
        let x = gram_match(&x, &config.sigma[u].scale(config.lambda[u]))?;
        let z = standard_complex_matrix(mc, t_max * f, &mut z_rng);
        let z = gram_match(&z, &identity(t_max * f))?;
        banks.push(SourceBanks {
            x,
            z,
            f_banks: vec![CMat::zeros(mc, f)],
            phi_banks: Vec::new(),
        });
    }

    let mut c_psi: Vec<Vec<CMat>> = vec![Vec::new(); sources];
    let mut c_phi: Vec<Vec<CMat>> = vec![Vec::new(); sources];
    let mut q: Vec<Vec<CMat>> = vec![Vec::new(); sources];
    let mut diagnostics: Vec<Vec<IterationDiagnostics>> = vec![Vec::new(); sources];
    let ranges = batch_ranges(mc, SE_BATCHES);

    for t in 1..=t_max {
        // ψ blocks for every source first: φ of one source needs them all
        for (u, bank) in banks.iter().enumerate() {
            let err_t = &bank.x - &bank.f_banks[t - 1];
            for s in 1..=t {
                let err_s = &bank.x - &bank.f_banks[s - 1];
                let mut block = (err_t.adjoint() * err_s)
                    .unscale(mc as f64)
                    .scale(config.alpha[u]);
                if s == t {
                    block = hermitianize(&block);
                }
                c_psi[u].push(block);
            }
        }
        for u in 0..sources {
            for s in 1..=t {
                let mut block = sigma_noise.clone();
                for u2 in 0..sources {
                    let w = if u2 == u {
                        (config.alpha[u] - 1.0) / config.alpha[u]
                    } else {
                        1.0
                    };
                    block += c_psi[u2][pair_index(t, s)].scale(w);
                }
                c_phi[u].push(block);
            }
        }

        // synthesize the new φ^(t) bank: block row t of the factor applied
        // to the shared normal bank; earlier φ^(s) banks are untouched
        // because the factor's leading blocks do not change
        for u in 0..sources {
            let a = assemble_two_time(&|tt, s| c_phi[u][pair_index(tt, s)].clone(), t, f);
            let b = block_cholesky(&a).map_err(|e| {
                Error::NotPsd(format!(
                    "assembled C_phi for source {u} at t={t} is not PSD ({e}); increase mc_samples"
                ))
            })?;
            let mut phi = CMat::zeros(mc, f);
            for s in 1..=t {
                let blk = get_block(&b, f, t - 1, s - 1);
                phi += banks[u].z.columns((s - 1) * f, f) * blk.adjoint();
            }
            banks[u].phi_banks.push(phi);
        }

        // denoise: Q^(t+1), f^(t+1) banks, per-batch diagnostics
        for u in 0..sources {
            let c_tt = hermitianize(&c_phi[u][pair_index(t, t)]);
            let params = DenoiserParams::new(config.lambda[u], &config.sigma[u], &c_tt)?;
            let r = &banks[u].x + &banks[u].phi_banks[t - 1];

            let q_mean = params.mean_jacobian(&r);
            let df = DivergenceFreeDenoiser::new(params.clone(), q_mean.clone())?;
            let f_next = df.apply(&r);

            let c_inv = pd_inverse(&c_tt)?;
            let inv_alpha = 1.0 / config.alpha[u];
            let mut q_batches = Vec::with_capacity(ranges.len());
            let mut c_psi_batches = Vec::with_capacity(ranges.len());
            let mut residual_batches = Vec::with_capacity(ranges.len());
            for range in &ranges {
                let rows = r.rows(range.start, range.len()).into_owned();
                let x_rows = banks[u].x.rows(range.start, range.len()).into_owned();
                let q_b = params.mean_jacobian(&rows);
                // rebuild f with the batch's own Q so the batch is
                // self-consistent and batches stay independent
                let df_b = DivergenceFreeDenoiser::new(params.clone(), q_b.clone())?;
                let err_b = &x_rows - df_b.apply(&rows);
                let c_psi_b = (err_b.adjoint() * &err_b)
                    .unscale(range.len() as f64)
                    .scale(config.alpha[u]);
                let lhs = (identity(f) - &q_b)
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("I - Q singular in a batch".into()))?;
                let residual = lhs - identity(f) - &c_inv * c_psi_b.scale(inv_alpha);
                q_batches.push(q_b);
                c_psi_batches.push(c_psi_b);
                residual_batches.push(residual);
            }
            diagnostics[u].push(IterationDiagnostics {
                q: MatrixStat::from_batches(&q_batches),
                c_psi_next: MatrixStat::from_batches(&c_psi_batches),
                identity_residual: MatrixStat::from_batches(&residual_batches),
            });

            q[u].push(q_mean);
            banks[u].f_banks.push(f_next);
        }
    }

    Ok(TwoTimeCovariance {
        f,
        t_max,
        sources,
        c_psi,
        c_phi,
        q,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob, rel_frob_diff, C64};
    use crate::model::SystemConfig;
    use crate::rng::stream;
    use crate::stats::batch_ranges;

    fn random_pd_blocks(t: usize, f: usize, seed: u64) -> Vec<CMat> {
        // pairs of a PD two-time matrix built from a random Gram
        let n = t * f;
        let g = standard_complex_matrix(n + 4, n, &mut stream(seed, "gp"));
        let a = (g.adjoint() * &g).unscale((n + 4) as f64) + identity(n).scale(0.4);
        let mut pairs = Vec::new();
        for tt in 1..=t {
            for s in 1..=tt {
                pairs.push(get_block(&a, f, tt - 1, s - 1));
            }
        }
        pairs
    }

    fn pairs_fn(pairs: &[CMat]) -> impl Fn(usize, usize) -> CMat + '_ {
        move |t, s| pairs[pair_index(t, s)].clone()
    }

    #[test]
    fn block_cholesky_reconstructs_and_is_triangular() {
        assert_eq!(block_cholesky(&identity(6)).unwrap(), identity(6));

        let pairs = random_pd_blocks(3, 2, 31);
        let a = assemble_two_time(&pairs_fn(&pairs), 3, 2);
        let b = block_cholesky(&a).unwrap();
        assert!(frob(&(&b * b.adjoint() - &a)) <= 1e-10);
        for i in 0..6 {
            for j in (i + 1)..6 {
                assert_eq!(b[(i, j)], C64::new(0.0, 0.0));
            }
        }

        // single block = plain Cholesky
        let single = random_pd_blocks(1, 4, 32);
        let b1 = block_cholesky(&single[0]).unwrap();
        assert!(frob(&(&b1 * b1.adjoint() - &single[0])) <= 1e-10);
    }

    #[test]
    fn gp_sampler_matches_requested_covariances() {
        let pairs = random_pd_blocks(3, 2, 33);
        let n = 40_000;
        let phi =
            sample_gp_trajectory(&pairs_fn(&pairs), 3, 2, n, &mut stream(33, "draw")).unwrap();
        // E[(φ^(3))† φ^(1)] vs C^(3,1) with batch-means error bars
        let mut diffs = Vec::new();
        for range in batch_ranges(n, 20) {
            let p3 = phi.view((range.start, 4), (range.len(), 2)).into_owned();
            let p1 = phi.view((range.start, 0), (range.len(), 2)).into_owned();
            let est = (p3.adjoint() * p1).unscale(range.len() as f64);
            diffs.push(est - &pairs[pair_index(3, 1)]);
        }
        let stat = crate::stats::MatrixStat::from_batches(&diffs);
        assert!(
            frob(&stat.mean) <= 3.0 * stat.se_frob,
            "{} vs {}",
            frob(&stat.mean),
            3.0 * stat.se_frob
        );
    }

    #[test]
    fn comonotone_process_repeats_its_first_sample() {
        // C^(t,s) = C for all pairs → φ^(1) = φ^(2) samplewise
        let c = random_pd_blocks(1, 3, 34)[0].clone();
        let phi = sample_gp_trajectory(&|_, _| c.clone(), 2, 3, 200, &mut stream(34, "d")).unwrap();
        let first = phi.columns(0, 3);
        let second = phi.columns(3, 3);
        assert!(frob(&(&first - &second).into_owned()) <= 1e-10);
    }

    #[test]
    fn single_time_sampler_has_the_right_scale() {
        let c = identity(2).scale(0.09);
        let n = 100_000;
        let phi = sample_gp_trajectory(&|_, _| c.clone(), 1, 2, n, &mut stream(35, "d")).unwrap();
        let est = (phi.adjoint() * &phi).unscale(n as f64);
        assert!(rel_frob_diff(&est, &c) <= 0.05);
    }

    fn identity_sigma_config(mc: usize) -> SystemConfig {
        let mut cfg = SystemConfig::two_location(64, [0.1, 0.1], 0.1, 3, 41);
        cfg.sigma = vec![identity(4), identity(4)];
        cfg.mc_samples = mc;
        cfg
    }

    #[test]
    fn base_case_blocks_are_exact() {
        let se = run_state_evolution(&identity_sigma_config(4000)).unwrap();
        for u in 0..2 {
            let want_psi = identity(4).scale(0.1); // α λ Σ = 1·0.1·I
            assert!(
                frob(&(se.c_psi(u, 1, 1) - &want_psi)) <= 1e-12,
                "C_psi(1,1) off by {}",
                frob(&(se.c_psi(u, 1, 1) - &want_psi))
            );
            let want_phi = identity(4).scale(0.2); // σ² + λ from the other source
            assert!(frob(&(se.c_phi(u, 1, 1) - &want_phi)) <= 1e-12);
        }
    }

    #[test]
    fn gaussian_signals_freeze_the_recursion() {
        // λ = 1: f ≡ 0, so C_ψ^(t,s) = α Σ for every pair and Q^(t+1) is the
        // linear-MMSE gain of C_φ^(t,t)
        let mut cfg = SystemConfig::two_location(64, [1.0, 1.0], 0.2, 3, 42);
        cfg.mc_samples = 4000;
        let se = run_state_evolution(&cfg).unwrap();
        for u in 0..2 {
            for t in 1..=3 {
                for s in 1..=t {
                    assert!(
                        frob(&(se.c_psi(u, t, s) - &cfg.sigma[u])) <= 1e-6,
                        "psi({t},{s}) deviates by {}",
                        frob(&(se.c_psi(u, t, s) - &cfg.sigma[u]))
                    );
                }
            }
            let c_tt = se.c_phi(u, 3, 3);
            let w = pd_inverse(&(&cfg.sigma[u] + c_tt)).unwrap() * &cfg.sigma[u];
            assert!(frob(&(se.q(u, 4) - &w)) <= 1e-6);
        }
    }

    #[test]
    fn recursion_reaches_a_fixed_point() {
        let mut cfg = SystemConfig::two_location(64, [0.1, 0.1], 0.1, 10, 43);
        cfg.mc_samples = 20_000;
        let se = run_state_evolution(&cfg).unwrap();
        for u in 0..2 {
            let rel = rel_frob_diff(se.c_phi(u, 10, 10), se.c_phi(u, 9, 9));
            assert!(rel <= 1e-2, "source {u} fixed-point gap {rel}");
            // effective noise should have improved on the first iteration
            let tr0: f64 = se.c_phi(u, 1, 1).diagonal().iter().map(|v| v.re).sum();
            let tr_t: f64 = se.c_phi(u, 10, 10).diagonal().iter().map(|v| v.re).sum();
            assert!(tr_t < tr0, "no contraction: {tr_t} vs {tr0}");
        }
    }

    #[test]
    fn identity_residuals_sit_inside_three_standard_errors() {
        let mut cfg = SystemConfig::two_location(64, [0.15, 0.1], 0.1, 4, 44);
        cfg.mc_samples = 20_000;
        let se = run_state_evolution(&cfg).unwrap();
        for u in 0..2 {
            for (t, diag) in se.diagnostics[u].iter().enumerate() {
                let miss = frob(&diag.identity_residual.mean);
                let gate = 3.0 * diag.identity_residual.se_frob + 1e-6;
                assert!(miss <= gate, "u={u} t={} residual {miss} > {gate}", t + 1);
            }
        }
    }

    #[test]
    fn assembled_covariances_are_psd_and_runs_are_deterministic() {
        let mut cfg = SystemConfig::two_location(64, [0.2, 0.1], 0.1, 4, 45);
        cfg.mc_samples = 8000;
        let se1 = run_state_evolution(&cfg).unwrap();
        let se2 = run_state_evolution(&cfg).unwrap();
        assert_eq!(se1.c_phi(1, 4, 2), se2.c_phi(1, 4, 2));
        assert_eq!(se1.q(0, 5), se2.q(0, 5));
        for u in 0..2 {
            let a = se1.assembled_c_phi(u, 4);
            assert!(block_cholesky(&a).is_ok());
            let eq = se1.c_phi(u, 3, 3);
            assert!(frob(&(eq - &eq.adjoint())) <= 1e-12);
        }
    }

    #[test]
    fn rs_fixed_point_matches_an_independent_mmse_estimate() {
        // converged C_ψ ≈ mmse(x | x + z√C_φ)·(I−Q)⁻¹ with fresh samples
        let mut cfg = SystemConfig::two_location(64, [0.1, 0.1], 0.1, 8, 46);
        cfg.mc_samples = 30_000;
        let se = run_state_evolution(&cfg).unwrap();
        let t = cfg.t;
        for u in 0..2 {
            let c_tt = hermitianize(se.c_phi(u, t, t));
            let params = DenoiserParams::new(cfg.lambda[u], &cfg.sigma[u], &c_tt).unwrap();
            let correction = (identity(4) - se.q(u, t + 1)).try_inverse().unwrap();
            let diag = &se.diagnostics[u][t - 1];

            let (x, r) = params
                .sample_rows(30_000, &mut stream(99, &format!("rs/u{u}")))
                .unwrap();
            let mut batches = Vec::new();
            for range in batch_ranges(30_000, 20) {
                let xs = x.rows(range.start, range.len()).into_owned();
                let rs = r.rows(range.start, range.len()).into_owned();
                let err = &xs - params.eta(&rs);
                let mmse_b = (err.adjoint() * &err).unscale(range.len() as f64);
                batches.push(mmse_b * &correction - &diag.c_psi_next.mean);
            }
            let stat = crate::stats::MatrixStat::from_batches(&batches);
            let gate = 3.0 * (stat.se_frob + diag.c_psi_next.se_frob);
            assert!(
                frob(&stat.mean) <= gate,
                "u={u}: RS residual {} vs {gate}",
                frob(&stat.mean)
            );
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_entry() {
        let mut cfg = SystemConfig::two_location(64, [0.1, 0.1], 0.1, 2, 47);
        cfg.mc_samples = 2000;
        let se = run_state_evolution(&cfg).unwrap();
        let csv = se.csv_string();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        // header + 2 sources × (3 pairs × 2 kinds + 2 q matrices) × 16 entries
        assert_eq!(lines[0], "kind,u,t,s,i,j,re,im");
        assert_eq!(lines.len(), 1 + 2 * (3 * 2 + 2) * 16);
        assert!(lines[1].starts_with("psi,0,1,1,0,0,"));
    }

    use crate::rng::standard_complex_matrix;
}
