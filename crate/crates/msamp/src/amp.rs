//! Multi-source AMP iterations.
//!
//! For t = 1..T:
//!   Γ_u^(t) = S_u F_u^(t)
//!   Z^(t)   = Y − Σ_u Γ_u^(t)
//!   R_u^(t) = S_u† Z^(t) + F_u^(t)
//!   F_u^(t+1) = f_{u,t}(R_u^(t))   (row-wise divergence-free denoiser)
//!
//! with F_u^(1) = 0. The denoisers are parameterized by the state-evolution
//! covariances: f_{u,t} uses C_φu^(t,t) and Q_u^(t+1). No damping anywhere;
//! if an operating point diverges it is reported by the trajectory, not
//! hidden.

use crate::denoiser::{DenoiserParams, DivergenceFreeDenoiser};
use crate::dictionary::SemiUnitaryDictionary;
use crate::error::{Error, Result};
use crate::linalg::{hermitianize, pd_solve, CMat};
use crate::model::SystemConfig;
use crate::state_evolution::TwoTimeCovariance;

#[derive(Debug, Clone, Copy, Default)]
pub struct AmpOptions {
    /// Keep every iteration instead of only the last.
    pub store_all: bool,
    /// Replace the SE equal-time C_φ by the instance estimate derived from
    /// (1/L)·Z†Z (practical-receiver mode; not covered by the analysis).
    pub empirical_c_phi: bool,
}

/// One AMP iteration's matrices. `f` holds the inputs F_u^(t); the output
/// F_u^(t+1) is the next iteration's `f` (or `f_next` on the last stored
/// iteration).
#[derive(Debug, Clone)]
pub struct AmpIteration {
    pub t: usize,
    pub gamma: Vec<CMat>,
    pub z: CMat,
    pub r: Vec<CMat>,
    pub f: Vec<CMat>,
    /// Equal-time denoiser covariance actually used at this t (SE block, or
    /// the instance estimate in empirical mode).
    pub c_denoiser: Vec<CMat>,
}

#[derive(Debug, Clone)]
pub struct AmpTrajectory {
    /// All iterations when `store_all`, otherwise just the final one.
    pub iterations: Vec<AmpIteration>,
    /// F_u^(T+1), the denoised output of the last iteration.
    pub f_next: Vec<CMat>,
}

impl AmpTrajectory {
    /// Iteration t (1-based), if stored.
    pub fn at(&self, t: usize) -> Option<&AmpIteration> {
        self.iterations.iter().find(|it| it.t == t)
    }

    pub fn last(&self) -> &AmpIteration {
        self.iterations.last().expect("at least one iteration")
    }
}

pub fn run_amp(
    y: &CMat,
    dicts: &[SemiUnitaryDictionary],
    config: &SystemConfig,
    se: &TwoTimeCovariance,
    options: AmpOptions,
) -> Result<AmpTrajectory> {
    let sources = config.sources();
    if dicts.len() != sources {
        return Err(Error::Shape {
            context: "amp dictionaries",
            expected: format!("{sources} dictionaries"),
            got: format!("{}", dicts.len()),
        });
    }
    if y.nrows() != config.l || y.ncols() != config.f {
        return Err(Error::Shape {
            context: "amp observation",
            expected: format!("{}x{}", config.l, config.f),
            got: format!("{}x{}", y.nrows(), y.ncols()),
        });
    }
    if se.t_max() < config.t {
        return Err(Error::Config(format!(
            "state evolution covers T={} but config needs T={}",
            se.t_max(),
            config.t
        )));
    }

    let mut f_cur: Vec<CMat> = (0..sources)
        .map(|u| CMat::zeros(config.n_u(u), config.f))
        .collect();
    let mut iterations = Vec::new();
    let mut f_next = Vec::new();

    for t in 1..=config.t {
        let gamma: Vec<CMat> = (0..sources)
            .map(|u| dicts[u].apply(&f_cur[u]))
            .collect::<Result<_>>()?;
        let mut z = y.clone();
        for g in &gamma {
            z -= g;
        }
        let r: Vec<CMat> = (0..sources)
            .map(|u| Ok(dicts[u].apply_adjoint(&z)? + &f_cur[u]))
            .collect::<Result<_>>()?;

        let z_gram = if options.empirical_c_phi {
            Some(hermitianize(&(z.adjoint() * &z).unscale(config.l as f64)))
        } else {
            None
        };

        let mut c_denoiser = Vec::with_capacity(sources);
        f_next = Vec::with_capacity(sources);
        for u in 0..sources {
            let c = match &z_gram {
                Some(g) => {
                    // (1/L)Z†Z estimates C_φu + α_u⁻¹C_ψu for every u
                    hermitianize(&(g - se.c_psi(u, t, t).unscale(config.alpha[u])))
                }
                None => hermitianize(se.c_phi(u, t, t)),
            };
            let params = DenoiserParams::new(config.lambda[u], &config.sigma[u], &c)?;
            let df = DivergenceFreeDenoiser::new(params, se.q(u, t + 1).clone())?;
            f_next.push(df.apply(&r[u]));
            c_denoiser.push(c);
        }

        let keep = options.store_all || t == config.t;
        if keep {
            iterations.push(AmpIteration {
                t,
                gamma,
                z,
                r,
                f: f_cur.clone(),
                c_denoiser,
            });
        }
        f_cur = f_next.clone();
    }

    Ok(AmpTrajectory { iterations, f_next })
}

/// Gain matrix (C_φ + α⁻¹C_ψ)⁻¹ C_ψ of the Θ-estimate correction.
pub fn theta_correction_gain(c_phi_tt: &CMat, c_psi_tt: &CMat, alpha: f64) -> Result<CMat> {
    let inner = hermitianize(&(c_phi_tt + c_psi_tt.unscale(alpha)));
    pd_solve(&inner, c_psi_tt)
}

/// Θ_u^(t) = Γ_u^(t) + Z^(t)(C_φu^(t,t) + α_u⁻¹C_ψu^(t,t))⁻¹C_ψu^(t,t),
/// the AMP estimate of S_u X_u. In empirical mode the iteration's own
/// (1/L)Z†Z replaces the SE denominator.
pub fn estimate_theta(
    iteration: &AmpIteration,
    se: &TwoTimeCovariance,
    config: &SystemConfig,
    empirical_denominator: bool,
) -> Result<Vec<CMat>> {
    let t = iteration.t;
    let z_gram = hermitianize(
        &(iteration.z.adjoint() * &iteration.z).unscale(config.l as f64),
    );
    (0..config.sources())
        .map(|u| {
            let c_psi = se.c_psi(u, t, t);
            let gain = if empirical_denominator {
                pd_solve(&z_gram, c_psi)?
            } else {
                theta_correction_gain(se.c_phi(u, t, t), c_psi, config.alpha[u])?
            };
            Ok(&iteration.gamma[u] + &iteration.z * gain)
        })
        .collect()
}
