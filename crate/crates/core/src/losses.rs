//! Training objectives: interface fitness, side separation, in-plane
//! refinement and docking error.

use serde::{Deserialize, Serialize};

use crate::dock::InterfacePrediction;
use crate::error::{Error, Result};
use crate::geometry::{kabsch2d, refinement_rotation, RigidTransform};
use crate::linalg::*;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub fit: f64,
    pub overlap: f64,
    pub refinement: f64,
    pub dock: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            fit: 1.0,
            overlap: 1.0,
            refinement: 1.0,
            dock: 1.0,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.fit, self.overlap, self.refinement, self.dock]
    }

    pub fn only(index: usize) -> Self {
        let mut w = [0.0; 4];
        w[index] = 1.0;
        Self::from_array(w)
    }

    pub fn from_array(w: [f64; 4]) -> Self {
        LossWeights {
            fit: w[0],
            overlap: w[1],
            refinement: w[2],
            dock: w[3],
        }
    }

    pub fn all_zero(&self) -> bool {
        self.as_array().iter().all(|&w| w == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub fit: f64,
    pub overlap: f64,
    pub refinement: f64,
    pub dock: f64,
    pub total: f64,
    pub weights: LossWeights,
    /// Samples whose refinement target was undefined and contributed 0.
    pub refinement_skipped: usize,
    /// Samples without contacts; fitness and refinement contributed 0.
    pub no_contacts: usize,
}

impl LossReport {
    pub fn components(&self) -> [f64; 4] {
        [self.fit, self.overlap, self.refinement, self.dock]
    }

    /// Component-wise sum of two reports with the same weights.
    pub fn accumulate(&mut self, other: &LossReport) {
        self.fit += other.fit;
        self.overlap += other.overlap;
        self.refinement += other.refinement;
        self.dock += other.dock;
        self.total += other.total;
        self.refinement_skipped += other.refinement_skipped;
        self.no_contacts += other.no_contacts;
    }

    pub fn zero(weights: LossWeights) -> Self {
        LossReport {
            fit: 0.0,
            overlap: 0.0,
            refinement: 0.0,
            dock: 0.0,
            total: 0.0,
            weights,
            refinement_skipped: 0,
            no_contacts: 0,
        }
    }
}

/// `(1/K) sum_p sum_k [phi_p(P_p[k])^2 + |<P_p[k] - t_p, n_p>|]`.
pub fn fit_loss<T: Scalar>(iface: &InterfacePrediction<T>, pockets1: &[Vec3], pockets2: &[Vec3]) -> Result<T> {
    if pockets1.is_empty() || pockets2.is_empty() {
        return Err(Error::NoContacts);
    }
    if pockets1.len() != pockets2.len() {
        return Err(Error::ShapeMismatch(pockets1.len(), pockets2.len()));
    }
    let mut terms = Vec::with_capacity(4 * pockets1.len());
    for (p, pockets) in [pockets1, pockets2].into_iter().enumerate() {
        let quad = &iface.general[p];
        let peak = iface.peak(p);
        let normal = iface.normal(p);
        for x in pockets {
            terms.push(quad.eval_at(x).square());
            terms.push(dot3(&sub3(&lift3(x), &peak), &normal).abs());
        }
    }
    Ok(T::sum(&terms).scale(1.0 / pockets1.len() as f64))
}

fn side_penalty<T: Scalar>(iface: &InterfacePrediction<T>, p: usize, xs: &[Vec3], sign: f64) -> T {
    let terms: Vec<T> = xs.iter().map(|x| iface.general[p].eval_at(x).scale(sign).sqrt_relu()).collect();
    T::sum(&terms).scale(1.0 / xs.len() as f64)
}

/// The smaller of the two side assignments of mean `sqrt(relu(+-phi))`.
pub fn overlap_loss<T: Scalar>(iface: &InterfacePrediction<T>, x1: &[Vec3], x2: &[Vec3]) -> T {
    let a = side_penalty(iface, 0, x1, 1.0) + side_penalty(iface, 1, x2, -1.0);
    let b = side_penalty(iface, 0, x1, -1.0) + side_penalty(iface, 1, x2, 1.0);
    if b.value() < a.value() {
        b
    } else {
        a
    }
}

fn standard_frame_xy<T: Scalar>(pockets: &[Vec3], t: &RigidTransform<T>) -> Vec<[T; 2]> {
    let qt = transpose(&t.rotation);
    pockets
        .iter()
        .map(|x| {
            let local = mat_vec(&qt, &sub3(&lift3(x), &t.translation));
            [local[0], local[1]]
        })
        .collect()
}

/// `|Qr(theta)[:2,:2] - kabsch2d(P1_hat, P2_hat)|_F^2` with pockets in each
/// interface's standard frame. Errors when the planar alignment is
/// undefined; callers count the sample as skipped.
pub fn refinement_loss<T: Scalar>(
    theta: T,
    pockets1: &[Vec3],
    pockets2: &[Vec3],
    t1: &RigidTransform<T>,
    t2: &RigidTransform<T>,
) -> Result<T> {
    let p1 = standard_frame_xy(pockets1, t1);
    let p2 = standard_frame_xy(pockets2, t2);
    let target = kabsch2d(&p1, &p2)?;
    let qr = refinement_rotation(theta);
    let mut s = T::zero();
    for i in 0..2 {
        for j in 0..2 {
            s += (qr[i][j] - target[i][j]).square();
        }
    }
    Ok(s)
}

/// `|Q - Q_gt^T|_F^2 + |t + Q_gt^T t_gt|^2`.
pub fn dock_loss<T: Scalar>(pred: &RigidTransform<T>, q_gt: &Mat3, t_gt: &Vec3) -> T {
    let qt = transpose(q_gt);
    let rot = frob2(&mat_sub(&pred.rotation, &lift33(&qt)));
    let shift = lift3(&mat_vec(&qt, t_gt));
    let tr = add3(&pred.translation, &shift);
    rot + dot3(&tr, &tr)
}

/// Weighted sum; zero-weight terms are left out so they cannot contribute
/// even when non-finite.
pub fn total_loss<T: Scalar>(components: &[T; 4], weights: &LossWeights) -> T {
    let mut total = T::zero();
    for (c, w) in components.iter().zip(weights.as_array()) {
        if w != 0.0 {
            total += c.scale(w);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::geometry::{axis_angle, random_rotation, random_transform, transform_quadric, StandardParaboloid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iface(std: StandardParaboloid, t1: RigidTransform, t2: RigidTransform) -> InterfacePrediction {
        InterfacePrediction::new(std, t1, t2)
    }

    fn unit() -> StandardParaboloid {
        StandardParaboloid { lambda1: 0.5, lambda2: 0.25, beta: 2.0 }
    }

    #[test]
    fn fit_loss_zero_at_peaks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (random_transform(&mut rng, 5.0), random_transform(&mut rng, 5.0));
        let i = iface(unit(), a, b);
        let l = fit_loss(&i, &[a.translation; 3], &[b.translation; 3]).unwrap();
        assert!(l.abs() < 1e-20);
    }

    #[test]
    fn fit_loss_surface_point() {
        let std = unit();
        let i = iface(std, RigidTransform::identity(), RigidTransform::identity());
        // (1, 0, z) on the surface: 0.5 + 2 z = 0
        let p = [1.0, 0.0, -0.25];
        let l = fit_loss(&i, &[p], &[[0.0; 3]]).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        // duplicating every pocket leaves the mean unchanged
        let l2 = fit_loss(&i, &[p, p], &[[0.0; 3], [0.0; 3]]).unwrap();
        assert!((l - l2).abs() < 1e-15);
        assert!(matches!(fit_loss(&i, &[], &[]), Err(Error::NoContacts)));
    }

    #[test]
    fn overlap_cases() {
        let std = unit();
        let i = iface(std, RigidTransform::identity(), RigidTransform::identity());
        // phi(0,0,-1) = -2 < 0 and phi(0,0,1) = 2 > 0
        assert_eq!(overlap_loss(&i, &[[0.0, 0.0, -1.0]], &[[0.0, 0.0, 1.0]]), 0.0);
        // phi = 4 on both sides
        let p = [0.0, 0.0, 2.0];
        assert!((overlap_loss(&i, &[p], &[p]) - 2.0).abs() < 1e-15);
        let neg = InterfacePrediction {
            general: [i.general[0].negated(), i.general[1].negated()],
            ..i.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x1: Vec<Vec3> = (0..5).map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0))).collect();
            let x2: Vec<Vec3> = (0..4).map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0))).collect();
            assert!((overlap_loss(&i, &x1, &x2) - overlap_loss(&neg, &x1, &x2)).abs() < 1e-15);
            assert!(overlap_loss(&i, &x1, &x2) >= 0.0);
        }
    }

    fn planar_fixture() -> Vec<Vec3> {
        vec![[1.0, 0.0, 0.3], [0.0, 2.0, -0.1], [-1.5, -0.5, 0.0], [0.5, -1.0, 0.2]]
    }

    #[test]
    fn refinement_cases() {
        let p = planar_fixture();
        let id = RigidTransform::identity();
        assert!(refinement_loss(0.0, &p, &p, &id, &id).unwrap().abs() < 1e-24);
        // second set rotated by the refinement rotation itself
        let theta = std::f64::consts::FRAC_PI_4;
        let qr = refinement_rotation(theta);
        let p2: Vec<Vec3> = p.iter().map(|x| mat_vec(&qr, x)).collect();
        assert!(refinement_loss(theta, &p, &p2, &id, &id).unwrap() < 1e-24);
        let l = refinement_loss(0.0, &p, &p2, &id, &id).unwrap();
        let expected = 4.0 - 4.0 * theta.cos();
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 1.17157).abs() < 1e-5);
        // direct Frobenius expansion
        let r = [[qr[0][0], qr[0][1]], [qr[1][0], qr[1][1]]];
        let direct: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| ((i == j) as u8 as f64 - r[i][j]).powi(2)).sum();
        assert!((l - direct).abs() < 1e-12);
    }

    #[test]
    fn refinement_reads_standard_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = planar_fixture();
        let (a, b) = (random_transform(&mut rng, 5.0), random_transform(&mut rng, 5.0));
        let pa = a.apply_all(&p);
        let pb = b.apply_all(&p);
        assert!(refinement_loss(0.0, &pa, &pb, &a, &b).unwrap() < 1e-20);
        let same = vec![[1.0, 1.0, 0.0]; 3];
        assert!(refinement_loss(0.0, &same, &same, &a, &b).is_err());
    }

    #[test]
    fn dock_loss_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = random_transform(&mut rng, 10.0);
        let exact = gt.inverse();
        assert!(dock_loss(&exact, &gt.rotation, &gt.translation) < 1e-24);
        assert_eq!(dock_loss(&RigidTransform::<f64>::identity(), &identity(), &[0.0; 3]), 0.0);
        for _ in 0..20 {
            let axis: Vec3 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let phi: f64 = rng.random_range(0.0..3.0);
            let off = RigidTransform {
                rotation: mat_mul(&axis_angle(axis, phi), &exact.rotation),
                translation: exact.translation,
            };
            let l = dock_loss(&off, &gt.rotation, &gt.translation);
            let direct = frob2(&mat_sub(&off.rotation, &transpose(&gt.rotation)));
            assert!((l - direct).abs() < 1e-12);
            assert!((l - 8.0 * (phi / 2.0).sin().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn total_loss_weighting() {
        let c = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(total_loss(&c, &LossWeights::from_array([0.0; 4])), 0.0);
        assert_eq!(total_loss(&c, &LossWeights::default()), 10.0);
        assert_eq!(total_loss(&c, &LossWeights::from_array([0.0, 0.0, 1.0, 1.0])), 7.0);
        assert_eq!(total_loss(&[f64::NAN, 1.0, 0.0, 0.0], &LossWeights::from_array([0.0, 1.0, 0.0, 0.0])), 1.0);
    }

    #[test]
    fn losses_invariant_under_joint_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let std = unit();
        let (a, b) = (random_transform(&mut rng, 5.0), random_transform(&mut rng, 5.0));
        let base = iface(std, a, b);
        let p1: Vec<Vec3> = (0..6).map(|_| std::array::from_fn(|_| rng.random_range(-4.0..4.0))).collect();
        let p2: Vec<Vec3> = (0..6).map(|_| std::array::from_fn(|_| rng.random_range(-4.0..4.0))).collect();
        let fit = fit_loss(&base, &p1, &p2).unwrap();
        let ov = overlap_loss(&base, &p1, &p2);
        let rf = refinement_loss(0.3, &p1, &p2, &a, &b).unwrap();
        for _ in 0..10 {
            let m = random_transform(&mut rng, 10.0);
            let moved = iface(std, m.after(&a), b);
            // the transported ligand quadric matches the directly built one
            assert!(moved.general[0].max_coeff_diff(&transform_quadric(&base.general[0], &m)) < 1e-9);
            let q1 = m.apply_all(&p1);
            assert!((fit_loss(&moved, &q1, &p2).unwrap() - fit).abs() < 1e-8 * (1.0 + fit));
            assert!((overlap_loss(&moved, &q1, &p2) - ov).abs() < 1e-8);
            assert!((refinement_loss(0.3, &q1, &p2, &moved.transforms[0], &b).unwrap() - rf).abs() < 1e-8);
        }
        // dock loss: the ligand motion cancels when folded into Q_gt
        let gt = random_transform(&mut rng, 5.0);
        let pred = random_transform(&mut rng, 5.0);
        let l = dock_loss(&pred, &gt.rotation, &gt.translation);
        let w = RigidTransform { rotation: random_rotation(&mut rng), translation: [0.0; 3] };
        let gt2 = w.after(&gt);
        let pred2 = pred.after(&w.inverse());
        assert!((dock_loss(&pred2, &gt2.rotation, &gt2.translation) - l).abs() < 1e-9);
    }

    #[test]
    fn losses_differentiate_on_tape() {
        let tape = Tape::new();
        let x = tape.vars(&[0.4, 0.2, 1.5]);
        let std = StandardParaboloid { lambda1: x[0], lambda2: x[1], beta: x[2] };
        let id = RigidTransform::identity();
        let i = InterfacePrediction::new(std, id, id);
        let pts = [[1.0, 0.5, 0.2], [0.0, 1.0, -0.3]];
        let l = fit_loss(&i, &pts, &pts).unwrap();
        let g = tape.gradient(l, &x);
        let f = |v: [f64; 3]| {
            let s = StandardParaboloid { lambda1: v[0], lambda2: v[1], beta: v[2] };
            fit_loss(&InterfacePrediction::new(s, RigidTransform::identity(), RigidTransform::identity()), &pts, &pts).unwrap()
        };
        for k in 0..3 {
            let mut hi = [0.4, 0.2, 1.5];
            let mut lo = hi;
            hi[k] += 1e-6;
            lo[k] -= 1e-6;
            assert!((g[k] - (f(hi) - f(lo)) / 2e-6).abs() < 1e-7);
        }
    }
}
