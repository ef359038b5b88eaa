//! Unitary-free equivalent of the residual AMP dynamics.
//!
//! The iteration can be written purely in terms of the residuals
//! Ψ̂^(t) = √α·O·T^(t) and Φ̂^(t) = R^(t) − X. Sampling the Haar matrix O
//! lazily — one orthonormal F-block per product, interleaving fresh Gaussian
//! blocks for the adjoint side — yields a dynamics whose residuals have the
//! same joint distribution without ever materializing O. Running both and
//! comparing moments over many seeds gives an end-to-end check of the AMP
//! implementation that shares no linear-algebra code path with it.

use crate::denoiser::{DenoiserParams, DivergenceFreeDenoiser};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hermitianize, CMat, C64};
use crate::model::{SignalRealization, SystemConfig};
use crate::rng::{standard_complex_matrix, stream};
use crate::state_evolution::TwoTimeCovariance;

/// Residual pair per source and iteration; both live in the N_u×F domain
/// (the observation-space residual is the first-L-rows selection of Ψ̂).
#[derive(Debug, Clone)]
pub struct ResidualTrajectory {
    /// psi_hat[u][t-1] = √α_u·O_u·T_u^(t)
    pub psi_hat: Vec<Vec<CMat>>,
    /// phi_hat[u][t-1] = R_u^(t) − X_u
    pub phi_hat: Vec<Vec<CMat>>,
}

fn build_denoisers(
    config: &SystemConfig,
    se: &TwoTimeCovariance,
) -> Result<Vec<Vec<DivergenceFreeDenoiser>>> {
    (0..config.sources())
        .map(|u| {
            (1..=config.t)
                .map(|t| {
                    let c = hermitianize(se.c_phi(u, t, t));
                    let params = DenoiserParams::new(config.lambda[u], &config.sigma[u], &c)?;
                    DivergenceFreeDenoiser::new(params, se.q(u, t + 1).clone())
                })
                .collect()
        })
        .collect()
}

fn check_inputs(
    config: &SystemConfig,
    se: &TwoTimeCovariance,
    signals: &SignalRealization,
    noise: &CMat,
) -> Result<()> {
    if se.t_max() < config.t {
        return Err(Error::Config(format!(
            "state evolution covers {} iterations, dynamics needs {}",
            se.t_max(),
            config.t
        )));
    }
    if noise.nrows() != config.l || noise.ncols() != config.f {
        return Err(Error::Shape {
            context: "residual dynamics noise",
            expected: format!("{}x{}", config.l, config.f),
            got: format!("{}x{}", noise.nrows(), noise.ncols()),
        });
    }
    if signals.x.len() != config.sources() {
        return Err(Error::Shape {
            context: "residual dynamics signals",
            expected: format!("{} sources", config.sources()),
            got: format!("{}", signals.x.len()),
        });
    }
    Ok(())
}

/// Selection of the first L rows (the dense-dictionary row layout).
fn select_rows(a: &CMat, l: usize) -> CMat {
    a.rows(0, l).into_owned()
}

fn scatter_rows(z: &CMat, n: usize) -> CMat {
    let mut out = CMat::zeros(n, z.ncols());
    out.rows_mut(0, z.nrows()).copy_from(z);
    out
}

/// Residual form of the AMP iteration with explicitly given unitaries:
/// Ψ̂^(t) = √α·O·T^(t), Z^(t) = noise − Σ_u P_u Ψ̂_u^(t),
/// Φ̂^(t) = O†(√α P_u^⊤ Z^(t)) + T^(t), T^(t+1) = f_t(X + Φ̂^(t)) − X.
pub fn run_residual_dynamics(
    config: &SystemConfig,
    se: &TwoTimeCovariance,
    signals: &SignalRealization,
    noise: &CMat,
    unitaries: &[CMat],
) -> Result<ResidualTrajectory> {
    check_inputs(config, se, signals, noise)?;
    let sources = config.sources();
    if unitaries.len() != sources {
        return Err(Error::Shape {
            context: "residual dynamics unitaries",
            expected: format!("{sources} matrices"),
            got: format!("{}", unitaries.len()),
        });
    }
    for u in 0..sources {
        let n = config.n_u(u);
        if unitaries[u].nrows() != n || unitaries[u].ncols() != n {
            return Err(Error::Shape {
                context: "residual dynamics unitaries",
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", unitaries[u].nrows(), unitaries[u].ncols()),
            });
        }
    }
    let denoisers = build_denoisers(config, se)?;

    let mut t_cur: Vec<CMat> = signals.x.iter().map(|x| -x).collect();
    let mut psi_hat = vec![Vec::with_capacity(config.t); sources];
    let mut phi_hat = vec![Vec::with_capacity(config.t); sources];

    for t in 1..=config.t {
        let mut z = noise.clone();
        for u in 0..sources {
            let psi = (&unitaries[u] * &t_cur[u]).scale(config.alpha[u].sqrt());
            z -= select_rows(&psi, config.l);
            psi_hat[u].push(psi);
        }
        for u in 0..sources {
            let t_tilde =
                scatter_rows(&z, config.n_u(u)).scale(config.alpha[u].sqrt());
            let phi = unitaries[u].adjoint() * t_tilde + &t_cur[u];
            let r = &signals.x[u] + &phi;
            t_cur[u] = denoisers[u][t - 1].apply(&r) - &signals.x[u];
            phi_hat[u].push(phi);
        }
    }
    Ok(ResidualTrajectory { psi_hat, phi_hat })
}

/// Block Gram-Schmidt step: the N×F frame V with (1/N)V†V = I_F spanning
/// the part of b orthogonal to the given frames.
fn gram_schmidt(b: &CMat, basis: &[CMat]) -> Result<CMat> {
    let n = b.nrows() as f64;
    let mut proj = b.clone();
    for v in basis {
        proj -= v * (v.adjoint() * b).unscale(n);
    }
    let q = hermitianize(&(proj.adjoint() * &proj));
    let (eigs, vecs) = hermitian_eigen(&q);
    let max_eig = eigs.last().copied().unwrap_or(0.0);
    let min_eig = eigs.first().copied().unwrap_or(0.0);
    // rank tolerance relative to the input block, so a block (nearly)
    // inside the existing span is rejected rather than orthonormalized noise
    if min_eig <= 1e-10 * b.norm_squared().max(1e-300) {
        return Err(Error::RankDeficient { min_eig, max_eig });
    }
    let mut scaled = vecs.clone();
    for (j, &e) in eigs.iter().enumerate() {
        let s = C64::new(e.sqrt().recip(), 0.0);
        scaled.column_mut(j).scale_mut(s.re);
    }
    let inv_root = &scaled * vecs.adjoint();
    Ok((proj * inv_root).scale(n.sqrt()))
}

/// The lazy-unitary dynamics: identical interface and residual law as
/// [`run_residual_dynamics`], but the Haar matrices are never sampled.
/// Per iteration and source, four Gram-Schmidt blocks extend two coupled
/// orthonormal frames; the fresh-Gaussian blocks come from the streams
/// `{scope}/dice/{g,gt}/u{u}/t{t}` under the config seed.
pub fn run_householder_dice(
    config: &SystemConfig,
    se: &TwoTimeCovariance,
    signals: &SignalRealization,
    noise: &CMat,
    scope: &str,
) -> Result<ResidualTrajectory> {
    check_inputs(config, se, signals, noise)?;
    let sources = config.sources();
    for u in 0..sources {
        if config.n_u(u) < 2 * config.t * config.f {
            return Err(Error::Config(format!(
                "lazy unitary sampling needs N_u >= 2TF codewords, source {u} has {} < {}",
                config.n_u(u),
                2 * config.t * config.f
            )));
        }
    }
    let denoisers = build_denoisers(config, se)?;

    let mut t_cur: Vec<CMat> = signals.x.iter().map(|x| -x).collect();
    let mut frames: Vec<Vec<CMat>> = vec![Vec::new(); sources];
    let mut frames_tilde: Vec<Vec<CMat>> = vec![Vec::new(); sources];
    let mut psi_hat = vec![Vec::with_capacity(config.t); sources];
    let mut phi_hat = vec![Vec::with_capacity(config.t); sources];

    let inner = |a: &CMat, b: &CMat| -> CMat { (a.adjoint() * b).unscale(a.nrows() as f64) };

    for t in 1..=config.t {
        let mut z = noise.clone();
        for u in 0..sources {
            let n = config.n_u(u);
            let mut g_rng = stream(config.seed, &format!("{scope}/dice/gt/u{u}/t{t}"));
            let g_tilde = standard_complex_matrix(n, config.f, &mut g_rng);

            let v_new = gram_schmidt(&t_cur[u], &frames[u])?;
            frames[u].push(v_new);
            let vt_new = gram_schmidt(&g_tilde, &frames_tilde[u])?;
            frames_tilde[u].push(vt_new);

            let mut psi = CMat::zeros(n, config.f);
            for (v, vt) in frames[u].iter().zip(&frames_tilde[u]) {
                psi += vt * inner(v, &t_cur[u]);
            }
            let psi = psi.scale(config.alpha[u].sqrt());
            z -= select_rows(&psi, config.l);
            psi_hat[u].push(psi);
        }
        for u in 0..sources {
            let n = config.n_u(u);
            let mut g_rng = stream(config.seed, &format!("{scope}/dice/g/u{u}/t{t}"));
            let g = standard_complex_matrix(n, config.f, &mut g_rng);

            let t_tilde =
                scatter_rows(&z, n).scale(config.alpha[u].sqrt());
            let vt_new = gram_schmidt(&t_tilde, &frames_tilde[u])?;
            frames_tilde[u].push(vt_new);
            let v_new = gram_schmidt(&g, &frames[u])?;
            frames[u].push(v_new);

            let mut phi = t_cur[u].clone();
            for (v, vt) in frames[u].iter().zip(&frames_tilde[u]) {
                phi += v * inner(vt, &t_tilde);
            }
            let r = &signals.x[u] + &phi;
            t_cur[u] = denoisers[u][t - 1].apply(&r) - &signals.x[u];
            phi_hat[u].push(phi);
        }
    }
    Ok(ResidualTrajectory { psi_hat, phi_hat })
}

/// True when every source has at least F active rows, so the first
/// Gram-Schmidt block of the lazy dynamics is full rank almost surely.
/// Realizations failing this (possible at small N_u·λ_u) have no
/// unitary-free representation; comparisons should skip them, which is a
/// selection on the shared signal draw and preserves equality in law.
pub fn dice_start_is_full_rank(signals: &SignalRealization, f: usize) -> bool {
    signals
        .activity
        .iter()
        .all(|a| a.iter().filter(|&&on| on).count() >= f)
}

/// Moment statistics of one residual trajectory, pooled per source:
/// normalized equal- and cross-time traces of the residual Grams plus the
/// complex overlap of Φ̂ with the truth. Equality in law across the two
/// dynamics makes the means of these match.
pub fn residual_moments(traj: &ResidualTrajectory, signals: &SignalRealization) -> Vec<f64> {
    let mut out = Vec::new();
    for u in 0..traj.psi_hat.len() {
        let steps = traj.psi_hat[u].len();
        let norm = |a: &CMat, b: &CMat| -> C64 {
            let mut acc = C64::new(0.0, 0.0);
            for (x, y) in a.iter().zip(b.iter()) {
                acc += x.conj() * y;
            }
            acc / C64::new((a.nrows() * a.ncols()) as f64, 0.0)
        };
        for t in 0..steps {
            for s in t..steps {
                out.push(norm(&traj.psi_hat[u][t], &traj.psi_hat[u][s]).re);
                out.push(norm(&traj.phi_hat[u][t], &traj.phi_hat[u][s]).re);
            }
            let cross = norm(&signals.x[u], &traj.phi_hat[u][t]);
            out.push(cross.re);
            out.push(cross.im);
        }
    }
    out
}

/// Column labels matching the `residual_moments` layout for `sources`
/// sources observed over `steps` iterations.
pub fn moment_labels(sources: usize, steps: usize) -> Vec<String> {
    let mut out = Vec::new();
    for u in 0..sources {
        for t in 1..=steps {
            for s in t..=steps {
                out.push(format!("u{u}/psi{t}{s}"));
                out.push(format!("u{u}/phi{t}{s}"));
            }
            out.push(format!("u{u}/cross{t}_re"));
            out.push(format!("u{u}/cross{t}_im"));
        }
    }
    out
}
