//! Row-wise posterior-mean denoiser for the Bernoulli–Gaussian prior and its
//! divergence-free companion map.
//!
//! A row is zero with probability 1−λ and CN(0, Σ) with probability λ; the
//! denoiser sees r = x + φ with φ ~ CN(0, C). Everything here is separable
//! across rows, so the batched entry points take an n×F matrix and act on
//! each row independently.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    chol_logdet, hermitian_sqrt, hermitianize, identity, pd_inverse, row_quad_forms, CMat, C64,
};
use crate::rng::standard_complex_matrix;

/// Everything η, Λ and Q need, precomputed from (λ, Σ, C).
#[derive(Debug, Clone)]
pub struct DenoiserParams {
    pub lambda: f64,
    pub sigma: CMat,
    pub c: CMat,
    /// Linear-MMSE gain W = (Σ+C)⁻¹Σ.
    w: CMat,
    /// C⁻¹ − (Σ+C)⁻¹, PSD; the quadratic form in the likelihood ratio.
    quad: CMat,
    /// logdet(Σ+C) − logdet(C) ≥ 0.
    log_det_ratio: f64,
    /// Finite-difference step for Wirtinger Jacobians.
    fd_step: f64,
}

impl DenoiserParams {
    pub fn new(lambda: f64, sigma: &CMat, c: &CMat) -> Result<Self> {
        let f = c.nrows();
        if sigma.nrows() != f || sigma.ncols() != f || c.ncols() != f {
            return Err(Error::Shape {
                context: "denoiser parameters",
                expected: format!("{f}x{f} sigma and c"),
                got: format!("{}x{} sigma, {}x{} c", sigma.nrows(), sigma.ncols(), c.nrows(), c.ncols()),
            });
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda = {lambda} not in [0, 1]")));
        }
        let spc = sigma + c;
        let c_inv = pd_inverse(c)?;
        let spc_inv = pd_inverse(&spc)?;
        let w = &spc_inv * sigma;
        let quad = hermitianize(&(&c_inv - &spc_inv));
        let log_det_ratio = chol_logdet(&spc)?.1 - chol_logdet(c)?.1;
        let mean_var = c.diagonal().iter().map(|v| v.re).sum::<f64>() / f as f64;
        Ok(DenoiserParams {
            lambda,
            sigma: sigma.clone(),
            c: c.clone(),
            w,
            quad,
            log_det_ratio,
            fd_step: 1e-4 * mean_var.sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// W = (Σ+C)⁻¹Σ, the always-active (λ = 1) denoiser gain.
    pub fn linear_gain(&self) -> &CMat {
        &self.w
    }

    /// ln Λ(r; C) per row: logdet(Σ+C) − logdet(C) − r(C⁻¹−(Σ+C)⁻¹)r†.
    pub fn log_likelihood_ratio_rows(&self, r: &CMat) -> Vec<f64> {
        row_quad_forms(r, &self.quad)
            .into_iter()
            .map(|q| self.log_det_ratio - q)
            .collect()
    }

    /// Λ(r; C) per row; bounded by det(Σ+C)/det(C), so never overflows.
    pub fn likelihood_ratio_rows(&self, r: &CMat) -> Vec<f64> {
        self.log_likelihood_ratio_rows(r)
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    /// Posterior activity weight λ / (λ + (1−λ)Λ(r)) per row.
    pub fn activity_weights(&self, r: &CMat) -> Vec<f64> {
        if self.lambda == 1.0 {
            return vec![1.0; r.nrows()];
        }
        if self.lambda == 0.0 {
            return vec![0.0; r.nrows()];
        }
        self.likelihood_ratio_rows(r)
            .into_iter()
            .map(|lr| self.lambda / (self.lambda + (1.0 - self.lambda) * lr))
            .collect()
    }

    /// Posterior mean per row: η(r) = weight(r) · rW.
    pub fn eta(&self, r: &CMat) -> CMat {
        let mut out = r * &self.w;
        for (n, s) in self.activity_weights(r).into_iter().enumerate() {
            out.row_mut(n).apply(|v| *v *= s);
        }
        out
    }

    /// Average Wirtinger Jacobian (J_ij = ∂η_j/∂r_i) over the rows of `r`,
    /// by central differences with step `fd_step`.
    pub fn mean_jacobian(&self, r: &CMat) -> CMat {
        mean_jacobian_of(|m| self.eta(m), r, self.dim(), self.fd_step)
    }

    /// Per-row Wirtinger Jacobian with an explicit step, for convergence
    /// studies.
    pub fn jacobian_at(&self, row: &CMat, h: f64) -> CMat {
        mean_jacobian_of(|m| self.eta(m), row, self.dim(), h)
    }

    /// Draw n rows of x ~ Bernoulli(λ)·CN(0, Σ) and r = x + φ with
    /// φ ~ CN(0, C).
    pub fn sample_rows<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(CMat, CMat)> {
        let f = self.dim();
        let sig_root = hermitian_sqrt(&self.sigma)?;
        let c_root = hermitian_sqrt(&self.c)?;
        let mut x = CMat::zeros(n, f);
        for row in 0..n {
            let coin: f64 = rand::RngExt::random(rng);
            if coin < self.lambda {
                let z = standard_complex_matrix(1, f, rng);
                x.row_mut(row).copy_from(&(&z * &sig_root));
            }
        }
        let phi = standard_complex_matrix(n, f, rng) * &c_root;
        let r = &x + &phi;
        Ok((x, r))
    }
}

/// Monte-Carlo estimate of Q = E[η'(x + φ)].
pub fn jacobian_expectation_q<R: Rng + ?Sized>(
    p: &DenoiserParams,
    mc_samples: usize,
    rng: &mut R,
) -> Result<CMat> {
    if mc_samples == 0 {
        return Err(Error::Config("mc_samples must be positive".into()));
    }
    let (_, r) = p.sample_rows(mc_samples, rng)?;
    Ok(p.mean_jacobian(&r))
}

/// Average Wirtinger Jacobian of an arbitrary row-separable map over the
/// rows of `r`. `eval` must act row-wise on an n×F matrix.
pub fn mean_jacobian_of<Ffn: Fn(&CMat) -> CMat>(eval: Ffn, r: &CMat, f: usize, h: f64) -> CMat {
    let n = r.nrows();
    let inv = 1.0 / (4.0 * h * n as f64);
    let mut j = CMat::zeros(f, f);
    let shifted = |i: usize, delta: C64| {
        let mut m = r.clone();
        for v in m.column_mut(i).iter_mut() {
            *v += delta;
        }
        // column sums = n × (column mean of the row-wise outputs)
        let out = eval(&m);
        CMat::from_fn(1, f, |_, jj| out.column(jj).sum())
    };
    for i in 0..f {
        let re = shifted(i, C64::new(h, 0.0)) - shifted(i, C64::new(-h, 0.0));
        let im = shifted(i, C64::new(0.0, h)) - shifted(i, C64::new(0.0, -h));
        for jj in 0..f {
            j[(i, jj)] = (re[(0, jj)] - C64::i() * im[(0, jj)]) * inv;
        }
    }
    j
}

/// The divergence-free map f(r) = (η(r) − rQ)(I − Q)⁻¹ built from a
/// posterior-mean denoiser and its Jacobian expectation Q.
#[derive(Debug, Clone)]
pub struct DivergenceFreeDenoiser {
    pub params: DenoiserParams,
    pub q: CMat,
    correction: CMat,
}

impl DivergenceFreeDenoiser {
    pub fn new(params: DenoiserParams, q: CMat) -> Result<Self> {
        let f = params.dim();
        if q.nrows() != f || q.ncols() != f {
            return Err(Error::Shape {
                context: "divergence-free denoiser",
                expected: format!("{f}x{f} Q"),
                got: format!("{}x{}", q.nrows(), q.ncols()),
            });
        }
        let correction = (identity(f) - &q).try_inverse().ok_or_else(|| {
            Error::Singular(format!("I - Q is singular; Q = {q}"))
        })?;
        Ok(DivergenceFreeDenoiser { params, q, correction })
    }

    /// f(r) per row.
    pub fn apply(&self, r: &CMat) -> CMat {
        (self.params.eta(r) - r * &self.q) * &self.correction
    }

    /// Average Wirtinger Jacobian of f over the rows of `r`; ≈ 0 when Q
    /// matches E[η'] under the law of the rows.
    pub fn mean_jacobian(&self, r: &CMat) -> CMat {
        mean_jacobian_of(|m| self.apply(m), r, self.params.dim(), self.params.fd_step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob;
    use crate::rng::stream;
    use crate::stats::{batch_ranges, MatrixStat};
    use nalgebra::DMatrix;

    fn scaled_identity(f: usize, v: f64) -> CMat {
        identity(f) * C64::new(v, 0.0)
    }

    /// Gauss–Hermite nodes/weights for ∫e^{−t²}g(t)dt via Golub–Welsch.
    fn gauss_hermite(m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for k in 1..m {
            let b = (k as f64 / 2.0).sqrt();
            jac[(k - 1, k)] = b;
            jac[(k, k - 1)] = b;
        }
        let eig = jac.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..m)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let w = std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2);
                (node, w)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pairs.into_iter().unzip()
    }

    /// Brute-force posterior mean and likelihood ratio at F = 1 by 2-D
    /// quadrature over the complex signal plane.
    fn quadrature_reference(lambda: f64, sigma: f64, c: f64, r: C64) -> (C64, f64) {
        let (nodes, weights) = gauss_hermite(80);
        let s = (sigma / 2.0).sqrt(); // per-component std dev of CN(0, sigma)
        let g = |v: C64| (-v.norm_sqr() / c).exp() / (std::f64::consts::PI * c);
        let mut like_active = 0.0;
        let mut num = C64::new(0.0, 0.0);
        for (i, &a) in nodes.iter().enumerate() {
            for (j, &b) in nodes.iter().enumerate() {
                let x = C64::new(2f64.sqrt() * s * a, 2f64.sqrt() * s * b);
                let w = weights[i] * weights[j] / std::f64::consts::PI;
                like_active += w * g(r - x);
                num += x * w * g(r - x);
            }
        }
        let like_inactive = g(r);
        let den = lambda * like_active + (1.0 - lambda) * like_inactive;
        (num * lambda / den, like_inactive / like_active)
    }

    #[test]
    fn likelihood_ratio_at_zero_is_the_determinant_ratio() {
        let sigma = wyner_sigma();
        let c = scaled_identity(4, 0.2);
        let p = DenoiserParams::new(0.1, &sigma, &c).unwrap();
        let lr = p.likelihood_ratio_rows(&CMat::zeros(1, 4))[0];
        // det(Σ+C)/det(C) = (1.2² · 0.7²)/0.2⁴
        let want = (1.2f64.powi(2) * 0.7f64.powi(2)) / 0.2f64.powi(4);
        assert!((lr - want).abs() <= 1e-9 * want, "{lr} vs {want}");
        assert!(lr >= 1.0);
    }

    #[test]
    fn zero_sigma_gives_unit_ratio_and_zero_estimates() {
        let c = scaled_identity(2, 0.3);
        let p = DenoiserParams::new(0.4, &CMat::zeros(2, 2), &c).unwrap();
        let r = standard_complex_matrix(5, 2, &mut stream(1, "t"));
        for lr in p.likelihood_ratio_rows(&r) {
            assert!((lr - 1.0).abs() <= 1e-12);
        }
        assert!(frob(&p.eta(&r)) <= 1e-14);
        let q = jacobian_expectation_q(&p, 100, &mut stream(1, "q")).unwrap();
        assert!(frob(&q) <= 1e-9);
    }

    #[test]
    fn scalar_ratio_matches_hand_computation() {
        let p = DenoiserParams::new(
            0.1,
            &scaled_identity(1, 1.0),
            &scaled_identity(1, 0.2),
        )
        .unwrap();
        let mut r = CMat::zeros(1, 1);
        r[(0, 0)] = C64::new(1.0, 0.0);
        let lr = p.likelihood_ratio_rows(&r)[0];
        let want = 6.0 * (-25.0f64 / 6.0).exp();
        assert!((lr - want).abs() <= 1e-12 * want, "{lr} vs {want}");
    }

    #[test]
    fn scalar_denoiser_matches_quadrature() {
        let (lambda, sigma, c) = (0.1, 1.0, 0.2);
        let p = DenoiserParams::new(lambda, &scaled_identity(1, sigma), &scaled_identity(1, c))
            .unwrap();
        let mut rng = stream(7, "quad-inputs");
        let mut checked = 0;
        for _ in 0..20 {
            let r = standard_complex_matrix(1, 1, &mut rng) * C64::new(1.3, 0.0);
            let (want_eta, want_lr) = quadrature_reference(lambda, sigma, c, r[(0, 0)]);
            let got_eta = p.eta(&r)[(0, 0)];
            let got_lr = p.likelihood_ratio_rows(&r)[0];
            assert!(
                (got_eta - want_eta).norm() <= 1e-6,
                "eta {got_eta} vs quadrature {want_eta} at r = {}",
                r[(0, 0)]
            );
            assert!(
                (got_lr - want_lr).abs() <= 1e-6 * want_lr.max(1.0),
                "ratio {got_lr} vs quadrature {want_lr}"
            );
            checked += 1;
        }
        assert_eq!(checked, 20);
    }

    #[test]
    fn always_active_denoiser_is_the_linear_mmse_map() {
        let sigma = wyner_sigma();
        let c = scaled_identity(4, 0.25);
        let p = DenoiserParams::new(1.0, &sigma, &c).unwrap();
        let r = standard_complex_matrix(50, 4, &mut stream(2, "t"));
        let want = &r * p.linear_gain();
        assert!(frob(&(p.eta(&r) - &want)) <= 1e-12);

        // Q = W exactly; the MC/FD estimate should sit on top of it.
        let q = jacobian_expectation_q(&p, 200, &mut stream(2, "q")).unwrap();
        assert!(frob(&(&q - p.linear_gain())) <= 1e-7, "{}", frob(&(&q - p.linear_gain())));

        // and the divergence-free map collapses to zero
        let df = DivergenceFreeDenoiser::new(p, q).unwrap();
        assert!(frob(&df.apply(&r)) <= 1e-6);
    }

    #[test]
    fn zero_q_reduces_f_to_eta() {
        let sigma = wyner_sigma();
        let p = DenoiserParams::new(0.3, &sigma, &scaled_identity(4, 0.4)).unwrap();
        let df = DivergenceFreeDenoiser::new(p.clone(), CMat::zeros(4, 4)).unwrap();
        let r = standard_complex_matrix(10, 4, &mut stream(3, "t"));
        assert!(frob(&(df.apply(&r) - p.eta(&r))) <= 1e-13);
    }

    #[test]
    fn eta_shrinks_rows_toward_zero() {
        // each output row is the linear-MMSE row scaled by a weight in [0, 1]
        let sigma = wyner_sigma();
        let p = DenoiserParams::new(0.2, &sigma, &scaled_identity(4, 0.3)).unwrap();
        let r = standard_complex_matrix(40, 4, &mut stream(4, "t"));
        let lin = &r * p.linear_gain();
        let out = p.eta(&r);
        let weights = p.activity_weights(&r);
        for n in 0..40 {
            assert!((0.0..=1.0).contains(&weights[n]));
            let diff = out.row(n) - lin.row(n) * C64::new(weights[n], 0.0);
            assert!(diff.norm() <= 1e-12);
        }
    }

    #[test]
    fn likelihood_ratio_decays_along_rays() {
        let sigma = wyner_sigma();
        let p = DenoiserParams::new(0.2, &sigma, &scaled_identity(4, 0.3)).unwrap();
        let r = standard_complex_matrix(10, 4, &mut stream(5, "t"));
        let near = p.likelihood_ratio_rows(&r);
        let far = p.likelihood_ratio_rows(&(&r * C64::new(3.0, 0.0)));
        for n in 0..10 {
            assert!(far[n] <= near[n] + 1e-15);
            assert!(near[n] > 0.0);
        }
    }

    #[test]
    fn central_differences_show_second_order_richardson_decay() {
        let p = DenoiserParams::new(0.3, &scaled_identity(1, 1.0), &scaled_identity(1, 0.2))
            .unwrap();
        let mut r = CMat::zeros(1, 1);
        r[(0, 0)] = C64::new(0.7, -0.4);
        let h = 2e-2;
        let j1 = p.jacobian_at(&r, h)[(0, 0)];
        let j2 = p.jacobian_at(&r, h / 2.0)[(0, 0)];
        let j4 = p.jacobian_at(&r, h / 4.0)[(0, 0)];
        let ratio = (j1 - j2).norm() / (j2 - j4).norm();
        assert!((3.0..5.0).contains(&ratio), "Richardson ratio {ratio}");
    }

    #[test]
    fn jacobian_expectation_matches_the_mmse_moment() {
        // For the exact posterior mean, C·Q equals E[(x−η)†(x−η)]; the FD
        // route and the moment route share no code, so agreement pins both.
        let mut sigma = CMat::zeros(2, 2);
        sigma[(0, 0)] = C64::new(1.0, 0.0);
        sigma[(1, 1)] = C64::new(0.25, 0.0);
        let mut c = CMat::zeros(2, 2);
        c[(0, 0)] = C64::new(0.3, 0.0);
        c[(0, 1)] = C64::new(0.1, 0.05);
        c[(1, 0)] = C64::new(0.1, -0.05);
        c[(1, 1)] = C64::new(0.2, 0.0);
        let p = DenoiserParams::new(0.25, &sigma, &c).unwrap();

        let mut rng = stream(11, "stein");
        let n = 40_000;
        let (x, r) = p.sample_rows(n, &mut rng).unwrap();
        let mut residuals = Vec::new();
        for range in batch_ranges(n, 20) {
            let xs = x.rows(range.start, range.len()).into_owned();
            let rs = r.rows(range.start, range.len()).into_owned();
            let q_b = p.mean_jacobian(&rs);
            let err = &xs - p.eta(&rs);
            let m_b = (err.adjoint() * &err).unscale(range.len() as f64);
            residuals.push(&c * q_b - m_b);
        }
        let stat = MatrixStat::from_batches(&residuals);
        assert!(
            frob(&stat.mean) <= 3.0 * stat.se_frob + 1e-6,
            "residual {} vs 3se {}",
            frob(&stat.mean),
            stat.se_frob * 3.0
        );
    }

    #[test]
    fn divergence_free_property_holds_under_fresh_samples() {
        let sigma = wyner_sigma();
        let c = scaled_identity(4, 0.2);
        let p = DenoiserParams::new(0.1, &sigma, &c).unwrap();
        let q = jacobian_expectation_q(&p, 60_000, &mut stream(12, "q")).unwrap();
        let df = DivergenceFreeDenoiser::new(p.clone(), q).unwrap();

        let (_, r) = p.sample_rows(40_000, &mut stream(12, "check")).unwrap();
        let mut jacobians = Vec::new();
        for range in batch_ranges(40_000, 20) {
            let rs = r.rows(range.start, range.len()).into_owned();
            jacobians.push(df.mean_jacobian(&rs));
        }
        let stat = MatrixStat::from_batches(&jacobians);
        assert!(
            frob(&stat.mean) <= 3.0 * stat.se_frob + 1e-5,
            "E[f'] = {} vs 3se {}",
            frob(&stat.mean),
            3.0 * stat.se_frob
        );
    }

    #[test]
    fn q_identity_links_cpsi_and_the_correction() {
        // (I−Q)⁻¹ = I + C⁻¹ α⁻¹ C_ψ with α = 1 and
        // C_ψ = E[(x−f(x+φ))†(x−f(x+φ))], all from one MC stream.
        let sigma = scaled_identity(2, 1.0);
        let c = scaled_identity(2, 0.2);
        let p = DenoiserParams::new(0.1, &sigma, &c).unwrap();
        let n = 60_000;
        let (x, r) = p.sample_rows(n, &mut stream(13, "mc")).unwrap();
        let q = p.mean_jacobian(&r);
        let df = DivergenceFreeDenoiser::new(p.clone(), q.clone()).unwrap();
        let err = &x - df.apply(&r);
        let c_psi = (err.adjoint() * &err).unscale(n as f64);
        let lhs = (identity(2) - &q).try_inverse().unwrap();
        let rhs = identity(2) + pd_inverse(&c).unwrap() * &c_psi;
        let rel = frob(&(&lhs - &rhs)) / frob(&lhs);
        assert!(rel <= 0.02, "identity residual {rel}");
    }

    #[test]
    fn inactive_dimensions_stay_zero() {
        let mut sigma = CMat::zeros(2, 2);
        sigma[(0, 0)] = C64::new(1.0, 0.0);
        let p = DenoiserParams::new(0.5, &sigma, &scaled_identity(2, 0.1)).unwrap();
        let r = standard_complex_matrix(30, 2, &mut stream(6, "t"));
        let out = p.eta(&r);
        for n in 0..30 {
            assert!(out[(n, 1)].norm() <= 1e-14);
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        let sigma = wyner_sigma();
        assert!(DenoiserParams::new(1.5, &sigma, &scaled_identity(4, 0.1)).is_err());
        assert!(DenoiserParams::new(0.5, &sigma, &CMat::zeros(4, 4)).is_err());
        assert!(DenoiserParams::new(0.5, &sigma, &scaled_identity(3, 0.1)).is_err());
        let p = DenoiserParams::new(0.5, &sigma, &scaled_identity(4, 0.1)).unwrap();
        assert!(DivergenceFreeDenoiser::new(p, identity(4)).is_err());
    }

    fn wyner_sigma() -> CMat {
        let mut s = CMat::zeros(4, 4);
        for (i, v) in [1.0, 1.0, 0.5, 0.5].iter().enumerate() {
            s[(i, i)] = C64::new(*v, 0.0);
        }
        s
    }
}
