//! Constrained-mixture point model: HGO-type fiber families, a coupled
//! neo-Hookean ground matrix, active strain and the prestress update.
//!
//! Energies are per unit mass (J/kg). [`mixture_stress`] scales them by
//! `1e-3 * rho0` so that stresses come out in kPa, consistent with lengths in
//! mm and pressures in kPa.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

/// Exponent bound on `k2 (I4e - 1)^2` beyond which the fiber energy is
/// reported as an overflow.
pub const EXP_LIMIT: f64 = 700.0;

/// Exponential fiber family `W = k1/(2 k2) (exp[k2 (I4e - 1)^2] - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberFamily {
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub xi_c: f64,
    pub xi_l: f64,
    pub xi_gm: f64,
    pub circ: FiberFamily,
    pub long: FiberFamily,
    pub mu_gm: f64,
    pub nu_gm: f64,
    /// Homeostatic elastic fiber stretch, circumferential and longitudinal.
    pub lambda_h_c: f64,
    pub lambda_h_l: f64,
    pub alpha_c: f64,
    pub alpha_l: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub v_thr: f64,
    /// Reference density in kg/m^3.
    pub rho0: f64,
}

impl Default for MixtureParams {
    fn default() -> Self {
        Self {
            xi_c: 0.35,
            xi_l: 0.35,
            xi_gm: 0.3,
            circ: FiberFamily { k1: 0.312, k2: 16.078 },
            long: FiberFamily { k1: 8.467, k2: 3.143 },
            mu_gm: 70.0,
            nu_gm: 0.499,
            lambda_h_c: 1.1,
            lambda_h_l: 1.1,
            alpha_c: 0.0,
            alpha_l: 0.0,
            beta1: 10.0,
            beta2: 10.0,
            v_thr: 0.25,
            rho0: 1050.0,
        }
    }
}

impl MixtureParams {
    /// Cylinder benchmark material: both fiber families use the longitudinal
    /// constants and `alpha_c = alpha_l = 0.5`.
    pub fn cylinder() -> Self {
        let base = Self::default();
        Self { circ: base.long, alpha_c: 0.5, alpha_l: 0.5, ..base }
    }

    pub fn c1(&self) -> f64 {
        0.5 * self.mu_gm
    }

    pub fn c2(&self) -> f64 {
        self.nu_gm / (1.0 - 2.0 * self.nu_gm)
    }

    pub fn fraction_sum(&self) -> f64 {
        self.xi_c + self.xi_l + self.xi_gm
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ParameterInconsistency(m.to_string()));
        if [self.xi_c, self.xi_l, self.xi_gm].iter().any(|x| !(*x >= 0.0)) {
            return bad("mass fractions must be non-negative");
        }
        if !(self.nu_gm < 0.5 && self.nu_gm > -1.0) {
            return bad("ground-matrix Poisson ratio must lie in (-1, 0.5)");
        }
        if !(self.mu_gm > 0.0 && self.rho0 > 0.0) {
            return bad("shear modulus and density must be positive");
        }
        for f in [self.circ, self.long] {
            if !(f.k1 >= 0.0 && f.k2 > 0.0) {
                return bad("fiber constants need k1 >= 0 and k2 > 0");
            }
        }
        if !(self.lambda_h_c > 0.0 && self.lambda_h_l > 0.0) {
            return bad("homeostatic stretches must be positive");
        }
        if !((0.0..1.0).contains(&self.alpha_c) && (0.0..1.0).contains(&self.alpha_l)) {
            return bad("active intensities must lie in [0, 1)");
        }
        if !(self.beta1 > 0.0 && self.beta2 > 0.0) {
            return bad("activation rates must be positive");
        }
        Ok(())
    }
}

/// Muscle activation from the SMC potential, zero at and below `v_thr`.
pub fn activation_gamma(v_smc: f64, p: &MixtureParams) -> f64 {
    let d = v_smc - p.v_thr;
    if d <= 0.0 {
        return 0.0;
    }
    -(-p.beta1 * d).exp_m1() * -(-p.beta2 * d).exp_m1()
}

fn contraction(gamma: f64, alpha: f64) -> Result<f64> {
    let ga = gamma * alpha;
    if !(ga < 1.0) {
        return Err(Error::ContractionOverflow(ga));
    }
    Ok(1.0 - ga)
}

/// Isochoric active deformation gradient with fiber shortening `1 - gamma alpha`.
pub fn active_deformation_gradient(gamma: f64, alpha: f64, f: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let s = contraction(gamma, alpha)?;
    let ff = f * f.transpose();
    Ok(ff * s + (Matrix3::identity() - ff) / s.sqrt())
}

/// Fiber energy and its first two derivatives with respect to the total
/// fiber stretch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberResponse {
    pub w: f64,
    pub dw: f64,
    pub d2w: f64,
}

pub fn fiber_response(lambda: f64, lambda_gr: f64, gamma: f64, alpha: f64, fam: FiberFamily) -> Result<FiberResponse> {
    if !(lambda > 0.0 && lambda_gr > 0.0) {
        return Err(Error::InvertedState(lambda.min(lambda_gr)));
    }
    let s = 1.0 / (lambda_gr * contraction(gamma, alpha)?);
    let le = lambda * s;
    let x = le * le - 1.0;
    let expo = fam.k2 * x * x;
    if expo > EXP_LIMIT {
        return Err(Error::EnergyOverflow(expo));
    }
    let e = expo.exp();
    Ok(FiberResponse {
        w: fam.k1 / (2.0 * fam.k2) * expo.exp_m1(),
        dw: 2.0 * fam.k1 * le * x * e * s,
        d2w: 2.0 * fam.k1 * e * (x + 2.0 * le * le + 4.0 * fam.k2 * x * x * le * le) * s * s,
    })
}

/// Fiber energy and its derivative with respect to the total fiber stretch.
pub fn fiber_energy_and_stress(lambda: f64, lambda_gr: f64, gamma: f64, alpha: f64, fam: FiberFamily) -> Result<(f64, f64)> {
    fiber_response(lambda, lambda_gr, gamma, alpha, fam).map(|r| (r.w, r.dw))
}

/// Ground-matrix energy `c1 (I1 - 3) + c1/c2 (J^(-2 c2) - 1)` and its
/// derivative with respect to the elastic deformation gradient.
pub fn gm_energy_and_stress(fe: &Matrix3<f64>, p: &MixtureParams) -> Result<(f64, Matrix3<f64>)> {
    let j = fe.determinant();
    if !(j > 0.0) {
        return Err(Error::InvertedState(j));
    }
    let (c1, c2) = (p.c1(), p.c2());
    let jp = j.powf(-2.0 * c2);
    let inv_t = fe.try_inverse().ok_or(Error::InvertedState(j))?.transpose();
    let w = c1 * (fe.norm_squared() - 3.0) + c1 / c2 * (jp - 1.0);
    Ok((w, (fe - inv_t * jp) * (2.0 * c1)))
}

/// Internal variables of one material point.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePoint {
    pub f_c: Vector3<f64>,
    pub f_l: Vector3<f64>,
    /// Ground-matrix inelastic prestretch, symmetric with unit determinant.
    pub f_gr_gm: Matrix3<f64>,
    pub lambda_gr_c: f64,
    pub lambda_gr_l: f64,
}

impl MixturePoint {
    /// Point with fibers at their homeostatic prestretch and no ground-matrix
    /// prestretch.
    pub fn homeostatic(f_c: Vector3<f64>, f_l: Vector3<f64>, p: &MixtureParams) -> Self {
        Self { f_c, f_l, f_gr_gm: Matrix3::identity(), lambda_gr_c: 1.0 / p.lambda_h_c, lambda_gr_l: 1.0 / p.lambda_h_l }
    }

    pub fn stress_free(f_c: Vector3<f64>, f_l: Vector3<f64>) -> Self {
        Self { f_c, f_l, f_gr_gm: Matrix3::identity(), lambda_gr_c: 1.0, lambda_gr_l: 1.0 }
    }
}

/// Volumetric energy (kPa) and first Piola-Kirchhoff stress (kPa).
pub fn mixture_stress(f: &Matrix3<f64>, pt: &MixturePoint, p: &MixtureParams, gamma: f64) -> Result<(f64, Matrix3<f64>)> {
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Error::InvertedState(det));
    }
    let g_inv = pt.f_gr_gm.try_inverse().ok_or(Error::InvertedState(pt.f_gr_gm.determinant()))?;
    let (w_gm, dw_gm) = gm_energy_and_stress(&(f * g_inv), p)?;
    let mut psi = p.xi_gm * w_gm;
    let mut stress = dw_gm * g_inv.transpose() * p.xi_gm;
    for (dir, lgr, alpha, fam, xi) in [
        (pt.f_c, pt.lambda_gr_c, p.alpha_c, p.circ, p.xi_c),
        (pt.f_l, pt.lambda_gr_l, p.alpha_l, p.long, p.xi_l),
    ] {
        if xi == 0.0 {
            continue;
        }
        let ff = f * dir;
        let lambda = ff.norm();
        let (w, dw) = fiber_energy_and_stress(lambda, lgr, gamma, alpha, fam)?;
        psi += xi * w;
        stress += ff * dir.transpose() * (xi * dw / lambda);
    }
    let scale = 1e-3 * p.rho0;
    Ok((scale * psi, stress * scale))
}

/// Symmetric positive-definite right stretch of a non-singular matrix.
pub fn right_stretch(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let eig = SymmetricEigen::new(m.transpose() * m);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvertedState(m.determinant()));
    }
    let root = eig.eigenvalues.map(f64::sqrt);
    Ok(eig.eigenvectors * Matrix3::from_diagonal(&root) * eig.eigenvectors.transpose())
}

/// Ground-matrix prestretch update: the rotation-free, isochoric part of
/// `Fbar^-1 F_gr` with `Fbar = det(F)^(-1/3) F`.
pub fn prestress_update(f: &Matrix3<f64>, f_gr: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Error::InvertedState(det));
    }
    let fbar_inv = f.try_inverse().ok_or(Error::InvertedState(det))? * det.cbrt();
    let u = right_stretch(&(fbar_inv * f_gr))?;
    let u = (u + u.transpose()) * 0.5;
    Ok(u / u.determinant().cbrt())
}

/// Under-relaxed prestress update: `F` is replaced by `R U^omega` from its
/// polar decomposition before the update, so `omega = 1` is the full step.
pub fn prestress_update_relaxed(f: &Matrix3<f64>, f_gr: &Matrix3<f64>, omega: f64) -> Result<Matrix3<f64>> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::invalid("relaxation factor must lie in (0, 1]"));
    }
    if omega == 1.0 {
        return prestress_update(f, f_gr);
    }
    let det = f.determinant();
    if !(det > 0.0) {
        return Err(Error::InvertedState(det));
    }
    let eig = SymmetricEigen::new(f.transpose() * f);
    let u = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
    let u_inv = u.try_inverse().ok_or(Error::InvertedState(det))?;
    let u_pow = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.powf(0.5 * omega))) * eig.eigenvectors.transpose();
    prestress_update(&(f * u_inv * u_pow), f_gr)
}

/// Energy density (kPa) with gradient and Hessian in the principal stretches
/// `(lambda_l, lambda_c, lambda_t)` of a diagonal deformation whose fibers lie
/// on the first two axes and whose ground-matrix prestretch is diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalResponse {
    pub psi: f64,
    pub grad: Vector3<f64>,
    pub hess: Matrix3<f64>,
}

/// Internal variables of a principal-axis point: diagonal `F_gr^gm` in
/// `(l, c, t)` order and fiber inelastic stretches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalPoint {
    pub g: Vector3<f64>,
    pub lambda_gr_l: f64,
    pub lambda_gr_c: f64,
}

impl PrincipalPoint {
    pub fn homeostatic(p: &MixtureParams) -> Self {
        Self { g: Vector3::repeat(1.0), lambda_gr_l: 1.0 / p.lambda_h_l, lambda_gr_c: 1.0 / p.lambda_h_c }
    }
}

pub fn principal_response(stretch: &Vector3<f64>, pt: &PrincipalPoint, p: &MixtureParams, gamma: f64) -> Result<PrincipalResponse> {
    let e = stretch.component_div(&pt.g);
    let j = e.product();
    if !(j > 0.0) || e.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvertedState(j));
    }
    let (c1, c2) = (p.c1(), p.c2());
    let jp = j.powf(-2.0 * c2);
    let w_gm = c1 * (e.norm_squared() - 3.0) + c1 / c2 * (jp - 1.0);
    let mut grad = Vector3::from_fn(|i, _| (2.0 * c1 * e[i] - 2.0 * c1 * jp / e[i]) / pt.g[i]) * p.xi_gm;
    let mut hess = Matrix3::from_fn(|i, k| {
        let diag = if i == k { 2.0 * c1 + 2.0 * c1 * jp / (e[i] * e[i]) } else { 0.0 };
        (diag + 4.0 * c1 * c2 * jp / (e[i] * e[k])) / (pt.g[i] * pt.g[k])
    }) * p.xi_gm;
    let mut psi = p.xi_gm * w_gm;
    for (axis, lgr, alpha, fam, xi) in [(0, pt.lambda_gr_l, p.alpha_l, p.long, p.xi_l), (1, pt.lambda_gr_c, p.alpha_c, p.circ, p.xi_c)] {
        if xi == 0.0 {
            continue;
        }
        let r = fiber_response(stretch[axis], lgr, gamma, alpha, fam)?;
        psi += xi * r.w;
        grad[axis] += xi * r.dw;
        hess[(axis, axis)] += xi * r.d2w;
    }
    let scale = 1e-3 * p.rho0;
    Ok(PrincipalResponse { psi: scale * psi, grad: grad * scale, hess: hess * scale })
}
