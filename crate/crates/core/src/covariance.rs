//! Isotropic correlation families and the covariance blocks built from them.

use statrs::function::gamma::ln_gamma;

use crate::bessel::ln_bessel_k;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CovFamily {
    Exponential,
    /// `exp(−(φd)^α)` with exponent α ∈ (0, 2].
    PoweredExponential { alpha: f64 },
    Gaussian,
    Spherical,
    /// Smoothness ν is carried in [`ProcessParams::nu`].
    Matern,
}

impl CovFamily {
    pub fn name(&self) -> &'static str {
        match self {
            CovFamily::Exponential => "exponential",
            CovFamily::PoweredExponential { .. } => "powered-exponential",
            CovFamily::Gaussian => "gaussian",
            CovFamily::Spherical => "spherical",
            CovFamily::Matern => "matern",
        }
    }

    pub fn needs_nu(&self) -> bool {
        matches!(self, CovFamily::Matern)
    }

    pub fn validate(&self) -> Result<()> {
        if let CovFamily::PoweredExponential { alpha } = *self {
            if !(alpha > 0.0 && alpha <= 2.0) {
                return Err(Error::InvalidParam(format!(
                    "powered-exponential exponent must lie in (0, 2], got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

/// θ = (σ², φ, ν, τ²).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessParams {
    pub sigma_sq: f64,
    pub phi: f64,
    pub nu: Option<f64>,
    pub tau_sq: f64,
}

impl ProcessParams {
    pub fn new(sigma_sq: f64, phi: f64, tau_sq: f64) -> Self {
        Self {
            sigma_sq,
            phi,
            nu: None,
            tau_sq,
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = Some(nu);
        self
    }

    pub fn validate(&self, family: CovFamily) -> Result<()> {
        family.validate()?;
        if !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::InvalidParam(format!("sigma_sq must be positive, got {}", self.sigma_sq)));
        }
        if !(self.tau_sq >= 0.0 && self.tau_sq.is_finite()) {
            return Err(Error::InvalidParam(format!("tau_sq must be nonnegative, got {}", self.tau_sq)));
        }
        check_phi(self.phi)?;
        match (family.needs_nu(), self.nu) {
            (true, Some(nu)) => check_nu(nu),
            (true, None) => Err(Error::InvalidParam("matern family requires nu".into())),
            (false, Some(_)) => Err(Error::InvalidParam(format!("{} family takes no nu", family.name()))),
            (false, None) => Ok(()),
        }
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("phi must be positive, got {phi}")))
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("nu must be positive, got {nu}")))
    }
}

/// A nonempty set of planar locations.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordSet {
    points: Vec<[f64; 2]>,
}

impl CoordSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidModel("coordinate set is empty".into()));
        }
        if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidModel(format!("coordinate {i} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn subset(&self, idx: &[usize]) -> Result<CoordSet> {
        CoordSet::new(idx.iter().map(|&i| self.points[i]).collect())
    }

    /// `([min_x, min_y], [max_x, max_y])`.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

/// `|a| × |b|` matrix of Euclidean distances.
pub fn pairwise_distances(a: &CoordSet, b: &CoordSet) -> DenseMatrix {
    let (na, nb) = (a.len(), b.len());
    let mut out = DenseMatrix::zeros(na, nb);
    par::for_each_chunk_mut(out.as_mut_slice(), na, 4 * na, |j, col| {
        let q = b.points[j];
        for (d, p) in col.iter_mut().zip(&a.points) {
            let dx = p[0] - q[0];
            let dy = p[1] - q[1];
            *d = (dx * dx + dy * dy).sqrt();
        }
    });
    out
}

/// Correlation ρ(d) for one of the supported families.
pub fn correlation(d: f64, family: CovFamily, phi: f64, nu: Option<f64>) -> Result<f64> {
    family.validate()?;
    check_phi(phi)?;
    if family.needs_nu() {
        check_nu(nu.ok_or_else(|| Error::InvalidParam("matern family requires nu".into()))?)?;
    }
    if !(d >= 0.0) {
        return Err(Error::InvalidParam(format!("distance must be nonnegative, got {d}")));
    }
    Ok(correlation_unchecked(d, family, phi, nu.unwrap_or(0.5)))
}

#[inline]
pub(crate) fn correlation_unchecked(d: f64, family: CovFamily, phi: f64, nu: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    match family {
        CovFamily::Exponential => (-phi * d).exp(),
        CovFamily::PoweredExponential { alpha } => (-(phi * d).powf(alpha)).exp(),
        CovFamily::Gaussian => {
            let s = phi * d;
            (-s * s).exp()
        }
        CovFamily::Spherical => {
            let s = phi * d;
            if s >= 1.0 {
                0.0
            } else {
                1.0 - 1.5 * s + 0.5 * s * s * s
            }
        }
        CovFamily::Matern => matern(d * phi, nu),
    }
}

/// `x^ν K_ν(x) / (2^{ν−1} Γ(ν))`, evaluated on the log scale.
fn matern(x: f64, nu: f64) -> f64 {
    let ln = nu * x.ln() + ln_bessel_k(nu, x) - (nu - 1.0) * std::f64::consts::LN_2 - ln_gamma(nu);
    ln.exp().clamp(0.0, 1.0)
}

/// Decay φ at which the exponential correlation falls to 0.05 at `range`.
pub fn effective_range_to_phi(range: f64) -> Result<f64> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::InvalidParam(format!("effective range must be positive, got {range}")));
    }
    Ok(-(0.05f64).ln() / range)
}

/// `σ² ρ(D)` elementwise, plus τ² on the diagonal when `include_nugget`.
pub fn cov_from_distances(
    dist: &DenseMatrix,
    family: CovFamily,
    params: &ProcessParams,
    include_nugget: bool,
) -> Result<DenseMatrix> {
    params.validate(family)?;
    let mut out = DenseMatrix::zeros(dist.rows(), dist.cols());
    fill_cov_from_distances(&mut out, dist, family, params);
    if include_nugget {
        out.add_to_diag(params.tau_sq);
    }
    Ok(out)
}

/// Writes `σ² ρ(D)` into an existing buffer of matching shape. No validation.
pub(crate) fn fill_cov_from_distances(out: &mut DenseMatrix, dist: &DenseMatrix, family: CovFamily, params: &ProcessParams) {
    debug_assert_eq!((out.rows(), out.cols()), (dist.rows(), dist.cols()));
    let rows = dist.rows();
    let (s2, phi, nu) = (params.sigma_sq, params.phi, params.nu.unwrap_or(0.5));
    let cost = if family.needs_nu() { 200 } else { 20 };
    par::for_each_chunk_mut(out.as_mut_slice(), rows, cost * rows, |j, col| {
        for (c, &d) in col.iter_mut().zip(dist.col(j)) {
            *c = s2 * correlation_unchecked(d, family, phi, nu);
        }
    });
}

/// `K(θ)` for one coordinate set.
pub fn cov_matrix(coords: &CoordSet, family: CovFamily, params: &ProcessParams, include_nugget: bool) -> Result<DenseMatrix> {
    cov_from_distances(&pairwise_distances(coords, coords), family, params, include_nugget)
}

/// Rectangular covariance between two coordinate sets, never with nugget.
pub fn cross_cov(a: &CoordSet, b: &CoordSet, family: CovFamily, params: &ProcessParams) -> Result<DenseMatrix> {
    cov_from_distances(&pairwise_distances(a, b), family, params, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::chol;
    use proptest::prelude::*;

    fn pts(v: &[[f64; 2]]) -> CoordSet {
        CoordSet::new(v.to_vec()).unwrap()
    }

    fn lcg_points(seed: u64, n: usize) -> CoordSet {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        pts(&(0..n).map(|_| [next(), next()]).collect::<Vec<_>>())
    }

    #[test]
    fn distance_examples() {
        let o = pts(&[[0.0, 0.0]]);
        assert_eq!(pairwise_distances(&o, &o)[(0, 0)], 0.0);
        let d = pairwise_distances(&o, &pts(&[[3.0, 4.0]]));
        assert_eq!(d[(0, 0)], 5.0);
    }

    #[test]
    fn distances_match_scalar_loop() {
        let a = lcg_points(1, 6);
        let b = lcg_points(2, 6);
        let d = pairwise_distances(&a, &b);
        for i in 0..6 {
            for j in 0..6 {
                let p = a.points()[i];
                let q = b.points()[j];
                let want = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                assert!((d[(i, j)] - want).abs() < 1e-12);
            }
        }
        let s = pairwise_distances(&a, &a);
        assert_eq!(s.max_asymmetry(), 0.0);
        assert!(s.diag().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn correlation_examples() {
        let fams = [
            CovFamily::Exponential,
            CovFamily::PoweredExponential { alpha: 1.5 },
            CovFamily::Gaussian,
            CovFamily::Spherical,
            CovFamily::Matern,
        ];
        for f in fams {
            let nu = f.needs_nu().then_some(1.2);
            assert_eq!(correlation(0.0, f, 3.0, nu).unwrap(), 1.0);
        }
        let r = correlation(0.5, CovFamily::Exponential, 6.0, None).unwrap();
        assert!((r - (-3.0f64).exp()).abs() < 1e-15);
        assert!((r - 0.049787).abs() < 1e-6);
    }

    #[test]
    fn matern_half_integers_are_closed_forms() {
        for &d in &[0.001, 0.05, 0.3, 1.0, 2.5] {
            for &phi in &[0.7, 3.0, 12.0] {
                let x = d * phi;
                let m05 = correlation(d, CovFamily::Matern, phi, Some(0.5)).unwrap();
                let m15 = correlation(d, CovFamily::Matern, phi, Some(1.5)).unwrap();
                let m25 = correlation(d, CovFamily::Matern, phi, Some(2.5)).unwrap();
                let e = correlation(d, CovFamily::Exponential, phi, None).unwrap();
                assert!((m05 - e).abs() < 1e-10);
                assert!((m15 - (1.0 + x) * (-x).exp()).abs() < 1e-9);
                assert!((m25 - (1.0 + x + x * x / 3.0) * (-x).exp()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn matern_general_order_reference() {
        // frozen from scipy: x^ν K_ν(x) / (2^{ν−1} Γ(ν))
        for &(nu, x, want) in &[
            (0.8, 0.6, 0.7125671621794373),
            (2.2, 3.0, 0.30635561948659756),
            (1.0, 0.05, 0.9954837162941254),
            (5.0, 7.5, 0.07101608596903251),
        ] {
            let got = correlation(x, CovFamily::Matern, 1.0, Some(nu)).unwrap();
            assert!((got - want).abs() < 1e-12, "nu={nu} x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(correlation(1.0, CovFamily::Exponential, 0.0, None).is_err());
        assert!(correlation(1.0, CovFamily::Matern, 1.0, Some(0.0)).is_err());
        assert!(correlation(1.0, CovFamily::Matern, 1.0, None).is_err());
        assert!(correlation(1.0, CovFamily::PoweredExponential { alpha: 2.5 }, 1.0, None).is_err());
    }

    #[test]
    fn spherical_vanishes_beyond_range() {
        assert_eq!(correlation(0.5, CovFamily::Spherical, 2.0, None).unwrap(), 0.0);
        assert_eq!(correlation(3.0, CovFamily::Spherical, 2.0, None).unwrap(), 0.0);
        let s = 0.2 * 2.0;
        let want = 1.0 - 1.5 * s + 0.5 * s * s * s;
        assert!((correlation(0.2, CovFamily::Spherical, 2.0, None).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn effective_range_examples() {
        assert!((effective_range_to_phi(0.5).unwrap() - 5.9915).abs() < 1e-4);
        assert!((effective_range_to_phi(1.0).unwrap() - 2.9957).abs() < 1e-4);
        assert!((effective_range_to_phi(0.1).unwrap() - 29.957).abs() < 1e-3);
        assert!(effective_range_to_phi(0.0).is_err());
    }

    #[test]
    fn cov_matrix_examples() {
        let p = ProcessParams::new(2.0, 1.0, 1.0);
        let one = cov_matrix(&pts(&[[0.3, 0.3]]), CovFamily::Exponential, &p, true).unwrap();
        assert_eq!(one[(0, 0)], 3.0);
        let two = cov_matrix(&pts(&[[1.0, 1.0], [1.0, 1.0]]), CovFamily::Exponential, &p, false).unwrap();
        assert_eq!(two.as_slice(), &[2.0, 2.0, 2.0, 2.0]);

        let c = lcg_points(5, 5);
        let p = ProcessParams::new(1.7, 4.0, 0.0);
        let k = cov_matrix(&c, CovFamily::Exponential, &p, false).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let a = c.points()[i];
                let b = c.points()[j];
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                assert!((k[(i, j)] - 1.7 * (-4.0 * d).exp()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_cov_examples() {
        let c = lcg_points(9, 4);
        let p = ProcessParams::new(1.3, 2.0, 0.5);
        let k = cov_matrix(&c, CovFamily::Gaussian, &p, false).unwrap();
        assert_eq!(cross_cov(&c, &c, CovFamily::Gaussian, &p).unwrap(), k);

        let p1 = ProcessParams::new(1.0, 1.0, 0.0);
        let x = cross_cov(&pts(&[[0.0, 0.0]]), &pts(&[[3.0, 4.0]]), CovFamily::Exponential, &p1).unwrap();
        assert!((x[(0, 0)] - (-5.0f64).exp()).abs() < 1e-15);

        let a = lcg_points(11, 3);
        let b = lcg_points(12, 7);
        let x = cross_cov(&a, &b, CovFamily::Spherical, &p1).unwrap();
        assert_eq!((x.rows(), x.cols()), (3, 7));
        for i in 0..3 {
            for j in 0..7 {
                let (u, v) = (a.points()[i], b.points()[j]);
                let d = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt();
                let want = if d >= 1.0 { 0.0 } else { 1.0 - 1.5 * d + 0.5 * d * d * d };
                assert!((x[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nugget_makes_tied_coordinates_spd() {
        for seed in 0..100u64 {
            let base = lcg_points(seed + 100, 6);
            let mut v = base.points().to_vec();
            v.push(v[0]);
            v.push(v[3]);
            let c = pts(&v);
            let p = ProcessParams::new(1.0 + (seed % 5) as f64, 0.5 + (seed % 7) as f64, 0.05);
            let k = cov_matrix(&c, CovFamily::Gaussian, &p, true).unwrap();
            assert!(chol(&k).is_ok(), "seed {seed}");
        }
    }

    fn family_strategy() -> impl Strategy<Value = (CovFamily, Option<f64>)> {
        prop_oneof![
            Just((CovFamily::Exponential, None)),
            (0.1f64..2.0).prop_map(|a| (CovFamily::PoweredExponential { alpha: a }, None)),
            Just((CovFamily::Gaussian, None)),
            Just((CovFamily::Spherical, None)),
            (0.1f64..6.0).prop_map(|nu| (CovFamily::Matern, Some(nu))),
        ]
    }

    proptest! {
        #[test]
        fn correlation_is_one_at_zero_and_bounded(
            (fam, nu) in family_strategy(),
            phi in 0.01f64..50.0,
            d in 0.0f64..5.0,
        ) {
            prop_assert_eq!(correlation(0.0, fam, phi, nu).unwrap(), 1.0);
            let r = correlation(d, fam, phi, nu).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn correlation_nonincreasing(
            (fam, nu) in family_strategy(),
            phi in 0.05f64..20.0,
            d in 0.0f64..3.0,
            step in 0.0f64..1.0,
        ) {
            let a = correlation(d, fam, phi, nu).unwrap();
            let b = correlation(d + step, fam, phi, nu).unwrap();
            prop_assert!(b <= a + 1e-12);
        }
    }
}
