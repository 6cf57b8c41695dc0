//! Cat map, pair collision and the direct/switch decomposition.
//!
//! A collision keeps the pair sum fixed and applies `M` to the difference:
//!
//! ```text
//! x0' + x1' = x0 + x1,    x0' - x1' = M (x0 - x1)
//! ```
//!
//! which is the same as `x0' = K+ x0 + K- x1`, `x1' = K- x0 + K+ x1` with
//! `K+ = (I + M)/2` (direct) and `K- = (I - M)/2` (switch). Phase points live on
//! the unit torus and are reduced mod 1 after every operation; displacements
//! live in the tangent plane and are never reduced.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduce into `[0, 1)`. `v - v.floor()` can round up to exactly 1.0 for tiny
/// negative inputs, so that case is folded back to 0.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Minimal-image offset in `[-1/2, 1/2)`.
#[inline]
fn min_image(v: f64) -> f64 {
    v - (v + 0.5).floor()
}

/// A particle state `(x, p)` on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    x: f64,
    p: f64,
}

impl PhasePoint {
    /// Builds a point, reducing both coordinates mod 1.
    pub fn new(x: f64, p: f64) -> Self {
        debug_assert!(x.is_finite() && p.is_finite());
        Self {
            x: wrap_unit(x),
            p: wrap_unit(p),
        }
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Moves the point by a tangent displacement and wraps.
    pub fn displaced(&self, d: TangentVector) -> Self {
        Self::new(self.x + d.dx, self.p + d.dp)
    }
}

/// A displacement `(dx, dp)` in the tangent plane. Unbounded, never wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TangentVector {
    pub dx: f64,
    pub dp: f64,
}

impl TangentVector {
    pub const ZERO: TangentVector = TangentVector { dx: 0.0, dp: 0.0 };

    pub const fn new(dx: f64, dp: f64) -> Self {
        Self { dx, dp }
    }

    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dp)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dx * self.dx + self.dp * self.dp
    }

    pub fn dot(&self, other: &TangentVector) -> f64 {
        self.dx * other.dx + self.dp * other.dp
    }

    pub fn is_zero(&self) -> bool {
        self.dx == 0.0 && self.dp == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dp.is_finite()
    }

    pub fn normalized(&self) -> Option<TangentVector> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self * (1.0 / n))
    }
}

impl Add for TangentVector {
    type Output = TangentVector;
    fn add(self, rhs: TangentVector) -> TangentVector {
        TangentVector::new(self.dx + rhs.dx, self.dp + rhs.dp)
    }
}

impl Sub for TangentVector {
    type Output = TangentVector;
    fn sub(self, rhs: TangentVector) -> TangentVector {
        TangentVector::new(self.dx - rhs.dx, self.dp - rhs.dp)
    }
}

impl Neg for TangentVector {
    type Output = TangentVector;
    fn neg(self) -> TangentVector {
        TangentVector::new(-self.dx, -self.dp)
    }
}

impl Mul<f64> for TangentVector {
    type Output = TangentVector;
    fn mul(self, s: f64) -> TangentVector {
        TangentVector::new(self.dx * s, self.dp * s)
    }
}

/// Row-major 2×2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    #[inline]
    pub fn apply(&self, v: TangentVector) -> TangentVector {
        let m = &self.0;
        TangentVector::new(
            m[0][0] * v.dx + m[0][1] * v.dp,
            m[1][0] * v.dx + m[1][1] * v.dp,
        )
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// Row-major 2×2 integer matrix defining the collision map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMat2(pub [[i64; 2]; 2]);

impl IntMat2 {
    /// The Arnold cat map `[[1, 1], [1, 2]]`.
    pub const CAT: IntMat2 = IntMat2([[1, 1], [1, 2]]);

    pub fn det(&self) -> i64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> i64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn to_real(&self) -> Mat2 {
        let m = &self.0;
        Mat2([
            [m[0][0] as f64, m[0][1] as f64],
            [m[1][0] as f64, m[1][1] as f64],
        ])
    }
}

/// Which linear factor a collision contributes along an influence path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// The path stays with the same particle: factor `K+ = (I + M)/2`.
    Direct,
    /// The path jumps to the partner: factor `K- = (I - M)/2`.
    Switch,
}

/// The collision map together with its direct/switch matrices and the
/// eigen-data along the expanding direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionModel {
    pub m: IntMat2,
    pub k_plus: Mat2,
    pub k_minus: Mat2,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// Unit eigenvector of `m` for `lambda_plus`, first component positive.
    pub xi_plus: TangentVector,
    /// Unit eigenvector of `m` for `lambda_minus`, first component positive.
    pub xi_minus: TangentVector,
    /// Eigenvalue of `k_plus` on `xi_plus`.
    pub kp: f64,
    /// Eigenvalue of `k_minus` on `xi_plus`.
    pub km: f64,
}

impl Default for CollisionModel {
    fn default() -> Self {
        Self::cat()
    }
}

impl CollisionModel {
    /// The model for the standard cat map.
    pub fn cat() -> Self {
        spectral_decompose(IntMat2::CAT).expect("cat map is hyperbolic and unimodular")
    }

    /// `(M x) mod 1`.
    pub fn cat_apply(&self, x: PhasePoint) -> PhasePoint {
        let m = &self.m.0;
        PhasePoint::new(
            m[0][0] as f64 * x.x + m[0][1] as f64 * x.p,
            m[1][0] as f64 * x.x + m[1][1] as f64 * x.p,
        )
    }

    /// One pair collision, computed from the sum/difference form and wrapped.
    pub fn collide(&self, x0: PhasePoint, x1: PhasePoint) -> (PhasePoint, PhasePoint) {
        let m = &self.m.0;
        let (sx, sp) = (x0.x + x1.x, x0.p + x1.p);
        let (ux, up) = (x0.x - x1.x, x0.p - x1.p);
        let dx = m[0][0] as f64 * ux + m[0][1] as f64 * up;
        let dp = m[1][0] as f64 * ux + m[1][1] as f64 * up;
        (
            PhasePoint::new(0.5 * (sx + dx), 0.5 * (sp + dp)),
            PhasePoint::new(0.5 * (sx - dx), 0.5 * (sp - dp)),
        )
    }

    /// Single-collision factor for a displacement: `K+ d` or `K- d`.
    #[inline]
    pub fn propagate_tangent(&self, d: TangentVector, role: Role) -> TangentVector {
        match role {
            Role::Direct => self.k_plus.apply(d),
            Role::Switch => self.k_minus.apply(d),
        }
    }

    /// Linearised pair collision acting on both displacements.
    #[inline]
    pub fn collide_tangents(
        &self,
        d0: TangentVector,
        d1: TangentVector,
    ) -> (TangentVector, TangentVector) {
        (
            self.k_plus.apply(d0) + self.k_minus.apply(d1),
            self.k_minus.apply(d0) + self.k_plus.apply(d1),
        )
    }

    /// 4×4 Jacobian of the pair map in the ordering `(x0, p0, x1, p1)`.
    pub fn pair_jacobian(&self) -> [[f64; 4]; 4] {
        let (a, b) = (&self.k_plus.0, &self.k_minus.0);
        [
            [a[0][0], a[0][1], b[0][0], b[0][1]],
            [a[1][0], a[1][1], b[1][0], b[1][1]],
            [b[0][0], b[0][1], a[0][0], a[0][1]],
            [b[1][0], b[1][1], a[1][0], a[1][1]],
        ]
    }

    /// `|kp * km|`, the per-two-stage dilation along `xi_plus`.
    pub fn mixed_dilation(&self) -> f64 {
        (self.kp * self.km).abs()
    }

    /// `kp^2 + km^2`, the per-stage growth of the squared whole-subsystem norm.
    pub fn square_sum(&self) -> f64 {
        self.kp * self.kp + self.km * self.km
    }
}

/// Minimal-image difference `a - b`, each component in `[-1/2, 1/2)`.
pub fn torus_diff(a: PhasePoint, b: PhasePoint) -> TangentVector {
    TangentVector::new(min_image(a.x - b.x), min_image(a.p - b.p))
}

fn unit_eigenvector(m: &IntMat2, lambda: f64) -> TangentVector {
    let [[a, b], [c, d]] = m.0;
    // Null vector of (M - lambda I), taken from whichever row is non-degenerate.
    let v = if b != 0 {
        TangentVector::new(b as f64, lambda - a as f64)
    } else {
        TangentVector::new(lambda - d as f64, c as f64)
    };
    let v = v.normalized().expect("eigenvector of a hyperbolic matrix is nonzero");
    if v.dx < 0.0 || (v.dx == 0.0 && v.dp < 0.0) {
        -v
    } else {
        v
    }
}

/// Builds a [`CollisionModel`] from an integer matrix.
///
/// Eigenvalues come from the closed form `(tr ± sqrt(tr² - 4)) / 2`, with the
/// contracting one taken as `1/lambda_plus` since `det = 1`.
pub fn spectral_decompose(m: IntMat2) -> Result<CollisionModel> {
    let det = m.det();
    if det != 1 {
        return Err(Error::NotUnimodular { det });
    }
    let trace = m.trace();
    if trace <= 2 {
        return Err(Error::NotHyperbolic { trace });
    }
    let tr = trace as f64;
    let lambda_plus = 0.5 * (tr + (tr * tr - 4.0).sqrt());
    let lambda_minus = 1.0 / lambda_plus;

    let mr = m.to_real().0;
    let k_plus = Mat2([
        [0.5 * (1.0 + mr[0][0]), 0.5 * mr[0][1]],
        [0.5 * mr[1][0], 0.5 * (1.0 + mr[1][1])],
    ]);
    let k_minus = Mat2([
        [0.5 * (1.0 - mr[0][0]), -0.5 * mr[0][1]],
        [-0.5 * mr[1][0], 0.5 * (1.0 - mr[1][1])],
    ]);

    Ok(CollisionModel {
        m,
        k_plus,
        k_minus,
        lambda_plus,
        lambda_minus,
        xi_plus: unit_eigenvector(&m, lambda_plus),
        xi_minus: unit_eigenvector(&m, lambda_minus),
        kp: 0.5 * (1.0 + lambda_plus),
        km: 0.5 * (1.0 - lambda_plus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::det4;

    const SQRT5: f64 = 2.236_067_977_499_79;

    fn close_on_torus(a: PhasePoint, b: PhasePoint, tol: f64) -> bool {
        torus_diff(a, b).norm() < tol
    }

    #[test]
    fn wrap_unit_never_returns_one() {
        assert_eq!(wrap_unit(-1e-17), 0.0);
        assert_eq!(wrap_unit(1.0), 0.0);
        assert_eq!(wrap_unit(-0.25), 0.75);
        assert_eq!(wrap_unit(2.5), 0.5);
    }

    #[test]
    fn cat_apply_examples() {
        let model = CollisionModel::cat();
        assert_eq!(model.cat_apply(PhasePoint::new(0.0, 0.0)), PhasePoint::new(0.0, 0.0));
        let y = model.cat_apply(PhasePoint::new(0.2, 0.3));
        assert!(close_on_torus(y, PhasePoint::new(0.5, 0.8), 1e-12));
        let y = model.cat_apply(PhasePoint::new(0.7, 0.6));
        assert!(close_on_torus(y, PhasePoint::new(0.3, 0.9), 1e-12));
    }

    #[test]
    fn cat_apply_permutes_rational_grid() {
        let model = CollisionModel::cat();
        let q = 5;
        let mut seen = vec![false; q * q];
        for i in 0..q {
            for j in 0..q {
                let y = model.cat_apply(PhasePoint::new(i as f64 / q as f64, j as f64 / q as f64));
                let yi = (y.x() * q as f64).round() as usize % q;
                let yj = (y.p() * q as f64).round() as usize % q;
                assert!(!seen[yi * q + yj], "grid point hit twice");
                seen[yi * q + yj] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn collide_examples() {
        let model = CollisionModel::cat();
        let a = PhasePoint::new(0.4, 0.7);
        let (a0, a1) = model.collide(a, a);
        assert!(close_on_torus(a0, a, 1e-15) && close_on_torus(a1, a, 1e-15));

        let (y0, y1) = model.collide(PhasePoint::new(0.5, 0.5), PhasePoint::new(0.1, 0.3));
        assert!(close_on_torus(y0, PhasePoint::new(0.6, 0.8), 1e-12));
        assert!(close_on_torus(y1, PhasePoint::new(0.0, 0.0), 1e-12));
    }

    #[test]
    fn collide_matches_direct_switch_form() {
        let model = CollisionModel::cat();
        let x0 = PhasePoint::new(0.13, 0.77);
        let x1 = PhasePoint::new(0.91, 0.02);
        let v0 = TangentVector::new(x0.x(), x0.p());
        let v1 = TangentVector::new(x1.x(), x1.p());
        let (y0, y1) = model.collide(x0, x1);
        let z0 = model.k_plus.apply(v0) + model.k_minus.apply(v1);
        let z1 = model.k_minus.apply(v0) + model.k_plus.apply(v1);
        assert!(close_on_torus(y0, PhasePoint::new(z0.dx, z0.dp), 1e-14));
        assert!(close_on_torus(y1, PhasePoint::new(z1.dx, z1.dp), 1e-14));
    }

    #[test]
    fn direct_and_switch_matrices_are_exact() {
        let model = CollisionModel::cat();
        let m = model.m.to_real().0;
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert_eq!(model.k_plus.0[i][j] + model.k_minus.0[i][j], id);
                assert_eq!(model.k_plus.0[i][j] - model.k_minus.0[i][j], m[i][j]);
            }
        }
    }

    #[test]
    fn spectral_constants_of_cat_map() {
        let model = CollisionModel::cat();
        assert!((model.lambda_plus - (3.0 + SQRT5) / 2.0).abs() < 1e-12);
        assert!((model.lambda_plus - 2.618_033_988_7).abs() < 1e-10);
        assert!((model.lambda_minus - 0.381_966_011_3).abs() < 1e-10);
        assert!((model.kp - (5.0 + SQRT5) / 4.0).abs() < 1e-12);
        assert!((model.km + (1.0 + SQRT5) / 4.0).abs() < 1e-12);
        assert!((model.mixed_dilation() - (1.0 + 0.375 * (SQRT5 - 1.0))).abs() < 1e-12);
        assert!((model.mixed_dilation() - 1.463_525_491_6).abs() < 1e-10);
        // numpy eigh of [[1,1],[1,2]], sign-fixed.
        assert!((model.xi_plus.dx - 0.525_731_112_1).abs() < 1e-10);
        assert!((model.xi_plus.dp - 0.850_650_808_4).abs() < 1e-10);
    }

    #[test]
    fn eigen_residuals() {
        let model = CollisionModel::cat();
        let m = model.m.to_real();
        let xi = model.xi_plus;
        assert!((m.apply(xi) - xi * model.lambda_plus).norm() < 1e-12);
        assert!((model.k_plus.apply(xi) - xi * model.kp).norm() < 1e-12);
        assert!((model.k_minus.apply(xi) - xi * model.km).norm() < 1e-12);
        let xm = model.xi_minus;
        assert!((m.apply(xm) - xm * model.lambda_minus).norm() < 1e-12);
        assert!(xm.dx > 0.0);
    }

    #[test]
    fn propagate_tangent_examples() {
        let model = CollisionModel::cat();
        let eps = 1e-3;
        let d = model.xi_plus * eps;
        let direct = model.propagate_tangent(d, Role::Direct);
        let switch = model.propagate_tangent(d, Role::Switch);
        assert!((direct - d * 1.809_016_994_4).norm() < 1e-12);
        assert!((switch - d * -0.809_016_994_4).norm() < 1e-12);
        assert_eq!(
            model.propagate_tangent(TangentVector::ZERO, Role::Direct),
            TangentVector::ZERO
        );
    }

    #[test]
    fn torus_diff_examples() {
        let a = PhasePoint::new(0.3, 0.8);
        assert_eq!(torus_diff(a, a), TangentVector::ZERO);
        let d = torus_diff(PhasePoint::new(0.95, 0.1), PhasePoint::new(0.05, 0.1));
        assert!((d.dx + 0.10).abs() < 1e-12 && d.dp == 0.0);
        let d = torus_diff(a, PhasePoint::new(0.1, 0.1));
        assert!((d.dx - 0.2).abs() < 1e-12 && (d.dp + 0.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            spectral_decompose(IntMat2([[1, 0], [0, 1]])),
            Err(Error::NotHyperbolic { trace: 2 })
        ));
        assert!(matches!(
            spectral_decompose(IntMat2([[2, 1], [1, 2]])),
            Err(Error::NotUnimodular { det: 3 })
        ));
        assert!(matches!(
            spectral_decompose(IntMat2([[-1, 1], [1, -2]])),
            Err(Error::NotHyperbolic { .. })
        ));
        let msg = spectral_decompose(IntMat2([[1, 0], [0, 1]])).unwrap_err().to_string();
        assert!(msg.contains("hyperbolic"));
    }

    #[test]
    fn generalized_matrices_decompose() {
        for m in [IntMat2([[2, 1], [1, 1]]), IntMat2([[2, 3], [1, 2]]), IntMat2([[3, 1], [5, 2]])] {
            let model = spectral_decompose(m).unwrap();
            let mr = m.to_real();
            assert!((mr.apply(model.xi_plus) - model.xi_plus * model.lambda_plus).norm() < 1e-12);
            assert!((mr.apply(model.xi_minus) - model.xi_minus * model.lambda_minus).norm() < 1e-12);
            assert!((model.k_minus.apply(model.xi_plus) - model.xi_plus * model.km).norm() < 1e-12);
            assert!(model.xi_plus.dx > 0.0);
        }
    }

    #[test]
    fn pair_map_preserves_volume() {
        let model = CollisionModel::cat();
        assert!((det4(model.pair_jacobian()) - 1.0).abs() < 1e-12);

        // Central finite differences of collide() away from the wrap cut.
        let base = [0.31, 0.47, 0.52, 0.44];
        let h = 1e-7;
        let mut jac = [[0.0; 4]; 4];
        for col in 0..4 {
            let eval = |s: f64| {
                let mut v = base;
                v[col] += s;
                let (y0, y1) = model.collide(PhasePoint::new(v[0], v[1]), PhasePoint::new(v[2], v[3]));
                [y0.x(), y0.p(), y1.x(), y1.p()]
            };
            let (fp, fm) = (eval(h), eval(-h));
            for row in 0..4 {
                jac[row][col] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        assert!((det4(jac) - 1.0).abs() < 1e-6);
    }
}
