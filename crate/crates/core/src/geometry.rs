//! SE(3) and quadric-surface algebra.
//!
//! Everything uses the column-vector convention `x' = Q x + t`.

use nalgebra::{Matrix3, Vector3, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::*;
use crate::scalar::Scalar;

/// Rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform<T = f64> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Scalar> RigidTransform<T> {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: identity(),
            translation: [T::zero(); 3],
        }
    }

    pub fn apply(&self, x: &Vec3<T>) -> Vec3<T> {
        add3(&mat_vec(&self.rotation, x), &self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, &self.translation);
        RigidTransform {
            rotation: rt,
            translation: [-t[0], -t[1], -t[2]],
        }
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Self) -> Self {
        RigidTransform {
            rotation: mat_mul(&self.rotation, &first.rotation),
            translation: self.apply(&first.translation),
        }
    }

    pub fn value(&self) -> RigidTransform<f64> {
        RigidTransform {
            rotation: value33(&self.rotation),
            translation: value3(&self.translation),
        }
    }
}

impl RigidTransform<f64> {
    /// Validated constructor; the rotation must be orthonormal with
    /// determinant +1 within 1e-9.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let rtr = mat_mul(&transpose(&rotation), &rotation);
        if max_abs_diff(&rtr, &identity()) > 1e-9 || (det(&rotation) - 1.0).abs() > 1e-9 {
            return Err(Error::Config("rotation is not a proper orthonormal matrix".into()));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn translation_only(t: Vec3) -> Self {
        RigidTransform {
            rotation: identity(),
            translation: t,
        }
    }

    pub fn lift<T: Scalar>(&self) -> RigidTransform<T> {
        RigidTransform {
            rotation: lift33(&self.rotation),
            translation: lift3(&self.translation),
        }
    }

    pub fn apply_all(&self, xs: &[Vec3]) -> Vec<Vec3> {
        xs.iter().map(|x| self.apply(x)).collect()
    }
}

/// Axis-aligned elliptic paraboloid `l1 x^2 + l2 y^2 + beta z = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardParaboloid<T = f64> {
    pub lambda1: T,
    pub lambda2: T,
    pub beta: T,
}

impl<T: Scalar> StandardParaboloid<T> {
    pub fn to_quadric(&self) -> Quadric<T> {
        let z = T::zero();
        Quadric {
            a: diag([self.lambda1, self.lambda2, z]),
            b: [z, z, self.beta],
            c: z,
        }
    }

    pub fn value(&self) -> StandardParaboloid<f64> {
        StandardParaboloid {
            lambda1: self.lambda1.value(),
            lambda2: self.lambda2.value(),
            beta: self.beta.value(),
        }
    }
}

/// General quadric `<A x, x> + <b, x> + c = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadric<T = f64> {
    pub a: Mat3<T>,
    pub b: Vec3<T>,
    pub c: T,
}

impl<T: Scalar> Quadric<T> {
    pub fn eval(&self, x: &Vec3<T>) -> T {
        dot3(&mat_vec(&self.a, x), x) + dot3(&self.b, x) + self.c
    }

    /// Evaluation at a constant point.
    pub fn eval_at(&self, x: &Vec3) -> T {
        self.eval(&lift3(x))
    }

    pub fn negated(&self) -> Self {
        Quadric {
            a: mat_scale(&self.a, T::constant(-1.0)),
            b: scale3(&self.b, T::constant(-1.0)),
            c: -self.c,
        }
    }

    pub fn value(&self) -> Quadric<f64> {
        Quadric {
            a: value33(&self.a),
            b: value3(&self.b),
            c: self.c.value(),
        }
    }
}

impl Quadric<f64> {
    pub fn max_coeff_diff(&self, other: &Quadric) -> f64 {
        let mut m = max_abs_diff(&self.a, &other.a);
        for i in 0..3 {
            m = m.max((self.b[i] - other.b[i]).abs());
        }
        m.max((self.c - other.c).abs())
    }
}

/// Coefficients of the image of `q` under `x -> Q x + t`.
pub fn transform_quadric<T: Scalar>(q: &Quadric<T>, tr: &RigidTransform<T>) -> Quadric<T> {
    let rot = &tr.rotation;
    let t = &tr.translation;
    let rt = transpose(rot);
    let a_new = mat_mul(&mat_mul(rot, &q.a), &rt);
    let a_sym = mat_add(&q.a, &transpose(&q.a));
    let qb = mat_vec(rot, &q.b);
    let b_new = sub3(&qb, &mat_vec(&mat_mul(&mat_mul(rot, &a_sym), &rt), t));
    let c_new = q.c + dot3(t, &mat_vec(&a_new, t)) - dot3(t, &qb);
    Quadric {
        a: a_new,
        b: b_new,
        c: c_new,
    }
}

/// Symmetric PSD square root through the eigendecomposition.
pub fn sqrt_psd3(l: &Mat3) -> Result<Mat3> {
    if max_abs_diff(l, &transpose(l)) > 1e-9 {
        return Err(Error::Config("matrix is not symmetric".into()));
    }
    let (vals, s) = sym_eigen3(l);
    if vals[2] < -1e-10 {
        return Err(Error::NotPsd { eigenvalue: vals[2] });
    }
    let root = diag([vals[0].max(0.0).sqrt(), vals[1].max(0.0).sqrt(), vals[2].max(0.0).sqrt()]);
    Ok(mat_mul(&mat_mul(&s, &root), &transpose(&s)))
}

struct PolarParts {
    q: Mat3,
    sigma: Vec3,
    s: Mat3,
}

fn polar_f64(r: &Mat3) -> Result<PolarParts> {
    let d = det(r);
    if d <= 0.0 {
        return Err(Error::DegenerateMatrix { det: d });
    }
    let l = mat_mul(r, &transpose(r));
    let (vals, s) = sym_eigen3(&l);
    let sigma = [vals[0].max(0.0).sqrt(), vals[1].max(0.0).sqrt(), vals[2].max(0.0).sqrt()];
    let ratio = sigma[2] / sigma[0];
    if !(ratio >= 1e-8) {
        return Err(Error::NearSingular { ratio });
    }
    let u_inv = mat_mul(
        &mat_mul(&s, &diag([1.0 / sigma[0], 1.0 / sigma[1], 1.0 / sigma[2]])),
        &transpose(&s),
    );
    Ok(PolarParts {
        q: mat_mul(&u_inv, r),
        sigma,
        s,
    })
}

/// Rotation factor `(R R^T)^(-1/2) R` of the left polar decomposition.
///
/// When `T` is tracked, the result carries the exact Jacobian: with
/// `R = U Q`, a perturbation `dR` gives `dQ = W Q` where the skew `W` solves
/// `U W + W U = X - X^T`, `X = dR Q^T`.
pub fn polar_rotation<T: Scalar>(r: &Mat3<T>) -> Result<Mat3<T>> {
    let rv = value33(r);
    let parts = polar_f64(&rv)?;
    if !T::TRACKED {
        return Ok(lift33(&parts.q));
    }
    let st = transpose(&parts.s);
    let qt = transpose(&parts.q);
    // jac[c][d] = dQ / dR_cd
    let mut jac = [[[[0.0; 3]; 3]; 3]; 3];
    for c in 0..3 {
        for d in 0..3 {
            let mut dr = [[0.0; 3]; 3];
            dr[c][d] = 1.0;
            let x = mat_mul(&dr, &qt);
            let y = mat_sub(&x, &transpose(&x));
            let yt = mat_mul(&mat_mul(&st, &y), &parts.s);
            let mut w = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    w[i][j] = yt[i][j] / (parts.sigma[i] + parts.sigma[j]);
                }
            }
            let omega = mat_mul(&mat_mul(&parts.s, &w), &st);
            jac[c][d] = mat_mul(&omega, &parts.q);
        }
    }
    let mut out = [[T::zero(); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut parents = Vec::with_capacity(9);
            for c in 0..3 {
                for d in 0..3 {
                    parents.push((r[c][d], jac[c][d][a][b]));
                }
            }
            out[a][b] = T::from_op(parts.q[a][b], &parents);
        }
    }
    Ok(out)
}

/// Docking transform `Q2 Qr Q1^T`, `t2 - Q2 Qr Q1^T t1`.
pub fn compose_relative<T: Scalar>(
    t1: &RigidTransform<T>,
    t2: &RigidTransform<T>,
    qr: &Mat3<T>,
) -> RigidTransform<T> {
    let rot = mat_mul(&mat_mul(&t2.rotation, qr), &transpose(&t1.rotation));
    let translation = sub3(&t2.translation, &mat_vec(&rot, &t1.translation));
    RigidTransform {
        rotation: rot,
        translation,
    }
}

/// `[[cos, sin, 0], [-sin, cos, 0], [0, 0, 1]]`.
pub fn refinement_rotation<T: Scalar>(theta: T) -> Mat3<T> {
    let c = theta.cos();
    let s = theta.sin();
    let z = T::zero();
    let o = T::constant(1.0);
    [[c, s, z], [-s, c, z], [z, z, o]]
}

fn centroid(points: &[Vec3]) -> Vec3 {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    [c[0] / n, c[1] / n, c[2] / n]
}

fn is_degenerate_cloud(points: &[Vec3], c: &Vec3) -> bool {
    let mut cov = [[0.0; 3]; 3];
    for p in points {
        let d = sub3(p, c);
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    let (vals, _) = sym_eigen3(&cov);
    vals[0] <= 1e-10 || vals[1] <= 1e-10 * vals[0].max(1.0)
}

/// Least-squares rigid transform taking `p` onto `q`.
pub fn kabsch(p: &[Vec3], q: &[Vec3]) -> Result<RigidTransform> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(p.len(), q.len()));
    }
    if p.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: p.len() });
    }
    let cp = centroid(p);
    let cq = centroid(q);
    if is_degenerate_cloud(p, &cp) || is_degenerate_cloud(q, &cq) {
        return Err(Error::DegenerateConfiguration("collinear or coincident points"));
    }
    // H = sum (p - cp)(q - cq)^T; R = V diag(1, 1, d) U^T
    let mut h = Matrix3::<f64>::zeros();
    for (a, b) in p.iter().zip(q) {
        let x = Vector3::from(sub3(a, &cp));
        let y = Vector3::from(sub3(b, &cq));
        h += x * y.transpose();
    }
    let svd = SVD::new(h, true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    let mut correction = Matrix3::<f64>::identity();
    if d < 0.0 {
        let sv = svd.singular_values;
        let k = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap_or(2);
        correction[(k, k)] = -1.0;
    }
    let r = v * correction * u.transpose();
    let mut rotation = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rotation[i][j] = r[(i, j)];
        }
    }
    let translation = sub3(&cq, &mat_vec(&rotation, &cp));
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Planar rotation `R` minimising `sum |R p_k - q_k|^2` over mean-centred
/// point sets.
///
/// The optimum has the closed form `cos = C / n`, `sin = S / n` with
/// `C = sum <p, q>`, `S = sum p x q` and `n = sqrt(C^2 + S^2)`, so it is
/// differentiable wherever it is defined.
pub fn kabsch2d<T: Scalar>(p: &[[T; 2]], q: &[[T; 2]]) -> Result<[[T; 2]; 2]> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(p.len(), q.len()));
    }
    if p.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: p.len() });
    }
    let inv_n = T::constant(1.0 / p.len() as f64);
    let mean = |pts: &[[T; 2]]| {
        let mut m = [T::zero(); 2];
        for x in pts {
            m[0] += x[0];
            m[1] += x[1];
        }
        [m[0] * inv_n, m[1] * inv_n]
    };
    let mp = mean(p);
    let mq = mean(q);
    let mut cos_sum = T::zero();
    let mut sin_sum = T::zero();
    let mut spread_p = 0.0;
    let mut spread_q = 0.0;
    for (a, b) in p.iter().zip(q) {
        let a = [a[0] - mp[0], a[1] - mp[1]];
        let b = [b[0] - mq[0], b[1] - mq[1]];
        spread_p += a[0].value().powi(2) + a[1].value().powi(2);
        spread_q += b[0].value().powi(2) + b[1].value().powi(2);
        cos_sum += a[0] * b[0] + a[1] * b[1];
        sin_sum += a[0] * b[1] - a[1] * b[0];
    }
    if spread_p <= 1e-20 || spread_q <= 1e-20 {
        return Err(Error::DegenerateConfiguration("coincident planar points"));
    }
    let r2 = cos_sum * cos_sum + sin_sum * sin_sum;
    if r2.value() <= 1e-24 * spread_p * spread_q {
        return Err(Error::DegenerateConfiguration("planar rotation is undetermined"));
    }
    let r = r2.sqrt();
    let c = cos_sum / r;
    let s = sin_sum / r;
    Ok([[c, -s], [s, c]])
}

/// Haar-uniform rotation from a normalised Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return quaternion_to_matrix([q[0] / n, q[1] / n, q[2] / n, q[3] / n]);
        }
    }
}

/// Unit quaternion `(w, x, y, z)` to rotation matrix.
pub fn quaternion_to_matrix(q: [f64; 4]) -> Mat3 {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Rotation by `angle` radians about a unit `axis`.
pub fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
    let n = norm3(&axis);
    let (s, c) = (angle / 2.0).sin_cos();
    quaternion_to_matrix([c, s * axis[0] / n, s * axis[1] / n, s * axis[2] / n])
}

/// Geodesic distance on SO(3) between two rotations, in radians.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let m = mat_mul(&transpose(a), b);
    let tr = m[0][0] + m[1][1] + m[2][2];
    let cos = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0);
    // acos loses precision near 0; use the skew part there
    let skew = [m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]];
    let sin = 0.5 * norm3(&skew);
    sin.atan2(cos)
}

pub fn random_transform<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> RigidTransform {
    let rotation = random_rotation(rng);
    let translation = [
        rng.random_range(-half_width..=half_width),
        rng.random_range(-half_width..=half_width),
        rng.random_range(-half_width..=half_width),
    ];
    RigidTransform {
        rotation,
        translation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Var};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rz(deg: f64) -> Mat3 {
        axis_angle([0.0, 0.0, 1.0], deg.to_radians())
    }

    /// Points on the transported surface: sample the source surface, map
    /// each point, and evaluate the new coefficients there.
    fn max_sampled_residual(src: &StandardParaboloid, tr: &RigidTransform, rng: &mut ChaCha8Rng) -> f64 {
        let out = transform_quadric(&src.to_quadric(), tr);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let y: f64 = rng.random_range(-3.0..3.0);
            let z = -(src.lambda1 * x * x + src.lambda2 * y * y) / src.beta;
            let moved = tr.apply(&[x, y, z]);
            worst = worst.max(out.eval(&moved).abs());
        }
        worst
    }

    #[test]
    fn identity_transport_is_exact() {
        let q = Quadric {
            a: diag([1.0, 1.0, 0.0]),
            b: [0.0, 0.0, 1.0],
            c: 0.0,
        };
        assert_eq!(transform_quadric(&q, &RigidTransform::identity()), q);
    }

    #[test]
    fn unit_lift_along_z() {
        let q = Quadric {
            a: diag([1.0, 1.0, 0.0]),
            b: [0.0, 0.0, 1.0],
            c: 0.0,
        };
        let out = transform_quadric(&q, &RigidTransform::translation_only([0.0, 0.0, 1.0]));
        let expected = Quadric {
            a: diag([1.0, 1.0, 0.0]),
            b: [0.0, 0.0, 1.0],
            c: -1.0,
        };
        assert!(out.max_coeff_diff(&expected) < 1e-15);
        let std = StandardParaboloid {
            lambda1: 1.0,
            lambda2: 1.0,
            beta: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tr = RigidTransform::translation_only([0.0, 0.0, 1.0]);
        assert!(max_sampled_residual(&std, &tr, &mut rng) < 1e-12);
    }

    #[test]
    fn random_transport_satisfies_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let std = StandardParaboloid {
                lambda1: rng.random_range(0.1..2.0),
                lambda2: rng.random_range(0.1..2.0),
                beta: rng.random_range(0.5..2.0),
            };
            let tr = random_transform(&mut rng, 5.0);
            assert!(max_sampled_residual(&std, &tr, &mut rng) < 1e-9);
        }
    }

    #[test]
    fn polar_of_rotation_and_scaled_identity() {
        let r = rz(30.0);
        let q = polar_rotation(&r).unwrap();
        assert!(max_abs_diff(&q, &r) < 1e-12);
        let q = polar_rotation(&mat_scale(&identity::<f64>(), 2.0)).unwrap();
        assert!(max_abs_diff(&q, &identity()) < 1e-15);
    }

    #[test]
    fn polar_of_scaled_random_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r0 = random_rotation(&mut rng);
        let q = polar_rotation(&mat_scale(&r0, 3.7)).unwrap();
        assert!(max_abs_diff(&q, &r0) < 1e-9);
    }

    #[test]
    fn polar_rejects_reflections_and_singular() {
        let refl = diag([1.0, 1.0, -1.0]);
        assert!(matches!(polar_rotation(&refl), Err(Error::DegenerateMatrix { .. })));
        let near = diag([1.0, 1.0, 1e-9]);
        assert!(matches!(polar_rotation(&near), Err(Error::NearSingular { .. })));
    }

    #[test]
    fn polar_jacobian_matches_finite_differences() {
        let r = [[1.3, 0.2, -0.4], [0.1, 0.9, 0.3], [0.5, -0.2, 1.1]];
        let tape = Tape::new();
        let vars: Vec<Var> = tape.vars(&r.iter().flatten().copied().collect::<Vec<_>>());
        let rv = [
            [vars[0], vars[1], vars[2]],
            [vars[3], vars[4], vars[5]],
            [vars[6], vars[7], vars[8]],
        ];
        let q = polar_rotation(&rv).unwrap();
        let weights = [[0.3, -1.0, 0.5], [0.7, 0.2, -0.4], [1.1, 0.0, 0.9]];
        let mut out = Var::constant(0.0);
        for i in 0..3 {
            for j in 0..3 {
                out += q[i][j] * Var::constant(weights[i][j]);
            }
        }
        let grad = tape.gradient(out, &vars);
        let f = |m: &Mat3| {
            let q = polar_rotation(m).unwrap();
            (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| q[i][j] * weights[i][j]).sum::<f64>()
        };
        let h = 1e-6;
        for k in 0..9 {
            let mut plus = r;
            let mut minus = r;
            plus[k / 3][k % 3] += h;
            minus[k / 3][k % 3] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-8, "entry {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn sqrt_psd_cases() {
        assert!(max_abs_diff(&sqrt_psd3(&identity()).unwrap(), &identity()) < 1e-15);
        let u = sqrt_psd3(&diag([4.0, 9.0, 1.0])).unwrap();
        assert!(max_abs_diff(&u, &diag([2.0, 3.0, 1.0])) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut r = [[0.0; 3]; 3];
        for row in r.iter_mut() {
            for x in row.iter_mut() {
                *x = rng.random_range(-1.0..1.0);
            }
        }
        let l = mat_mul(&r, &transpose(&r));
        let u = sqrt_psd3(&l).unwrap();
        let back = mat_mul(&u, &u);
        assert!(frob2(&mat_sub(&back, &l)).sqrt() < 1e-9);
        assert!(matches!(sqrt_psd3(&diag([1.0, -1.0, 1.0])), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn compose_relative_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let id = RigidTransform::<f64>::identity();
        let out = compose_relative(&id, &id, &identity());
        assert_eq!(out, id);
        let t2 = random_transform(&mut rng, 4.0);
        let out = compose_relative(&id, &t2, &identity());
        assert!(max_abs_diff(&out.rotation, &t2.rotation) < 1e-15);
        assert_eq!(out.translation, t2.translation);
    }

    #[test]
    fn compose_relative_two_path_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t1 = random_transform(&mut rng, 10.0);
        let t2 = random_transform(&mut rng, 10.0);
        let rel = compose_relative(&t1, &t2, &identity());
        let inv1 = t1.inverse();
        for _ in 0..100 {
            let x = [
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            ];
            let a = rel.apply(&x);
            let b = t2.apply(&inv1.apply(&x));
            assert!(norm3(&sub3(&a, &b)) < 1e-10);
        }
    }

    #[test]
    fn refinement_rotation_layout() {
        assert_eq!(refinement_rotation(0.0), identity::<f64>());
        let q = refinement_rotation(std::f64::consts::FRAC_PI_2);
        let expected = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(max_abs_diff(&q, &expected) < 1e-15);
        let q = refinement_rotation(std::f64::consts::PI);
        assert!(max_abs_diff(&q, &diag([-1.0, -1.0, 1.0])) < 1e-15);
        for theta in [-2.0, 0.3, 1.7, 12.0] {
            let p = mat_mul(&refinement_rotation(theta), &refinement_rotation(-theta));
            assert!(max_abs_diff(&p, &identity()) < 1e-12);
        }
    }

    fn tetra() -> Vec<Vec3> {
        vec![[0.0, 0.0, 0.0], [1.5, 0.0, 0.2], [0.3, 2.0, -0.1], [0.4, 0.5, 1.8]]
    }

    #[test]
    fn kabsch_identity_and_known_motion() {
        let p = tetra();
        let t = kabsch(&p, &p).unwrap();
        assert!(max_abs_diff(&t.rotation, &identity()) < 1e-12);
        assert!(norm3(&t.translation) < 1e-12);
        let truth = RigidTransform {
            rotation: rz(30.0),
            translation: [1.0, 2.0, 3.0],
        };
        let q = truth.apply_all(&p);
        let t = kabsch(&p, &q).unwrap();
        assert!(max_abs_diff(&t.rotation, &truth.rotation) < 1e-9);
        assert!(norm3(&sub3(&t.translation, &truth.translation)) < 1e-9);
    }

    #[test]
    fn kabsch_errors() {
        let p = tetra();
        assert!(matches!(kabsch(&p[..2], &p[..2]), Err(Error::TooFewPoints { .. })));
        let line: Vec<Vec3> = (0..5).map(|i| [i as f64, 2.0 * i as f64, 0.0]).collect();
        assert!(matches!(kabsch(&line, &line), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn kabsch_handles_reflection_case() {
        // mirrored cloud: best proper rotation must still have det +1
        let p = tetra();
        let q: Vec<Vec3> = p.iter().map(|x| [x[0], x[1], -x[2]]).collect();
        let t = kabsch(&p, &q).unwrap();
        assert!((det(&t.rotation) - 1.0).abs() < 1e-12);
    }

    fn rmsd_after(t: &RigidTransform, p: &[Vec3], q: &[Vec3]) -> f64 {
        let s: f64 = p.iter().zip(q).map(|(a, b)| {
            let d = sub3(&t.apply(a), b);
            dot3(&d, &d)
        }).sum();
        (s / p.len() as f64).sqrt()
    }

    #[test]
    fn kabsch_beats_coarse_grid_search_on_noisy_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let q: Vec<Vec3> = (0..5)
            .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let truth = RigidTransform {
            rotation: axis_angle([1.0, 1.0, 0.0], 0.4),
            translation: [0.5, -0.2, 0.1],
        };
        let noisy: Vec<Vec3> = truth
            .inverse()
            .apply_all(&q)
            .iter()
            .map(|x| {
                let n: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                [x[0] + 0.1 * n[0], x[1] + 0.1 * n[1], x[2] + 0.1 * n[2]]
            })
            .collect();
        let fit = kabsch(&noisy, &q).unwrap();
        let best = rmsd_after(&fit, &noisy, &q);
        // coarse oracle: local grid around the truth at 1 degree / centroid-matched translation
        let mut grid_best = f64::INFINITY;
        let cq = centroid(&q);
        for ax in -3..=3 {
            for ay in -3..=3 {
                for az in -3..=3 {
                    let delta = mat_mul(
                        &mat_mul(
                            &axis_angle([1.0, 0.0, 0.0], (ax as f64).to_radians()),
                            &axis_angle([0.0, 1.0, 0.0], (ay as f64).to_radians()),
                        ),
                        &axis_angle([0.0, 0.0, 1.0], (az as f64).to_radians()),
                    );
                    let rot = mat_mul(&delta, &truth.rotation);
                    // optimal translation for a fixed rotation matches centroids
                    let cp = mat_vec(&rot, &centroid(&noisy));
                    let tr = RigidTransform {
                        rotation: rot,
                        translation: sub3(&cq, &cp),
                    };
                    grid_best = grid_best.min(rmsd_after(&tr, &noisy, &q));
                }
            }
        }
        assert!(best <= grid_best + 1e-12, "{best} > {grid_best}");
    }

    #[test]
    fn kabsch2d_cases() {
        let p = [[1.0, 0.0], [0.0, 2.0], [-1.5, 0.5]];
        let r = kabsch2d(&p, &p).unwrap();
        assert!((r[0][0] - 1.0).abs() < 1e-15 && r[1][0].abs() < 1e-15);
        let a = std::f64::consts::FRAC_PI_4;
        let q: Vec<[f64; 2]> = p
            .iter()
            .map(|x| [a.cos() * x[0] - a.sin() * x[1], a.sin() * x[0] + a.cos() * x[1]])
            .collect();
        let r = kabsch2d(&p, &q).unwrap();
        assert!((r[0][0] - a.cos()).abs() < 1e-9);
        assert!((r[1][0] - a.sin()).abs() < 1e-9);
        assert!((r[0][1] + a.sin()).abs() < 1e-9);
        let dup = [[0.3, 0.4]; 4];
        assert!(matches!(kabsch2d(&dup, &dup), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn random_rotation_is_proper_and_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let r = random_rotation(&mut a);
            assert_eq!(r, random_rotation(&mut b));
            let rtr = mat_mul(&transpose(&r), &r);
            assert!(max_abs_diff(&rtr, &identity()) < 1e-12);
            assert!((det(&r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_mean_rotation_angle() {
        // density (1 - cos a) / pi on [0, pi] has mean pi/2 + 2/pi
        let expected = (std::f64::consts::FRAC_PI_2 + 2.0 / std::f64::consts::PI).to_degrees();
        assert!((expected - 126.476).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| rotation_angle_between(&identity(), &random_rotation(&mut rng)).to_degrees())
            .sum::<f64>()
            / n as f64;
        assert!((mean - expected).abs() < 2.0, "mean {mean}");
    }
}
