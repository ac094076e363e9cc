//! From network head outputs to a pair of paraboloid interfaces and the
//! ligand-to-receptor motion.

use serde::{Deserialize, Serialize};

use crate::epit::{compute_e, compute_f, epit_forward, Dropout, ModelParams, Network, NodeState};
use crate::error::{Error, Result};
use crate::geometry::{compose_relative, polar_rotation, refinement_rotation, transform_quadric, Quadric, RigidTransform, StandardParaboloid};
use crate::linalg::*;
use crate::protein_io::ProteinGraph;
use crate::scalar::Scalar;

/// Head matrices with `|det| < DEGENERATE_DET` are rejected at inference.
pub const DEGENERATE_DET: f64 = 1e-10;
/// Shift added to a degenerate head matrix during training.
pub const TRAINING_SHIFT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DockOptions {
    /// Apply the learned in-plane refinement rotation.
    pub refine: bool,
    /// Regularise degenerate head matrices instead of failing.
    pub training: bool,
}

impl Default for DockOptions {
    fn default() -> Self {
        DockOptions {
            refine: true,
            training: false,
        }
    }
}

/// The shared standard paraboloid and each protein's placement of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfacePrediction<T = f64> {
    pub standard: StandardParaboloid<T>,
    /// Ligand then receptor.
    pub transforms: [RigidTransform<T>; 2],
    pub general: [Quadric<T>; 2],
}

impl<T: Scalar> InterfacePrediction<T> {
    pub fn new(standard: StandardParaboloid<T>, t1: RigidTransform<T>, t2: RigidTransform<T>) -> Self {
        let general = [to_general_form(&standard, &t1), to_general_form(&standard, &t2)];
        InterfacePrediction {
            standard,
            transforms: [t1, t2],
            general,
        }
    }

    pub fn peak(&self, p: usize) -> Vec3<T> {
        self.transforms[p].translation
    }

    /// Image of the standard z axis.
    pub fn normal(&self, p: usize) -> Vec3<T> {
        let q = &self.transforms[p].rotation;
        [q[0][2], q[1][2], q[2][2]]
    }

    pub fn value(&self) -> InterfacePrediction<f64> {
        InterfacePrediction {
            standard: self.standard.value(),
            transforms: [self.transforms[0].value(), self.transforms[1].value()],
            general: [self.general[0].value(), self.general[1].value()],
        }
    }
}

/// Everything predicted for one pair, over any scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub interfaces: InterfacePrediction<T>,
    pub theta: T,
    pub transform: RigidTransform<T>,
    pub f: [[T; 4]; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DockingResult {
    pub transform: RigidTransform,
    pub interfaces: InterfacePrediction,
    pub theta: f64,
    pub docked_ligand: Vec<Vec3>,
}

/// `lambda_i = softplus(F1[i] + F2[i])`, `beta = F1[2] + F2[2]`.
pub fn predict_standard_form<T: Scalar>(f1: &[T; 4], f2: &[T; 4]) -> StandardParaboloid<T> {
    StandardParaboloid {
        lambda1: (f1[0] + f2[0]).softplus(),
        lambda2: (f1[1] + f2[1]).softplus(),
        beta: f1[2] + f2[2],
    }
}

pub fn refinement_angle<T: Scalar>(f1: &[T; 4], f2: &[T; 4]) -> T {
    f1[3] - f2[3]
}

/// Rotation from the sum of the first `m` row blocks of `E` (rows are
/// equivariant vectors, so the block is transposed to put them in columns),
/// translation from the last row plus the centroid.
pub fn predict_se3<T: Scalar>(e: &[[T; 3]], m: usize, centroid: &Vec3, training: bool) -> Result<RigidTransform<T>> {
    if e.len() != 3 * m + 1 {
        return Err(Error::ShapeMismatch(3 * m + 1, e.len()));
    }
    let mut rows = [[T::zero(); 3]; 3];
    for j in 0..m {
        for (r, row) in rows.iter_mut().enumerate() {
            for c in 0..3 {
                row[c] += e[3 * j + r][c];
            }
        }
    }
    let mut r = transpose(&rows);
    let d = det(&r).value();
    if d.abs() < DEGENERATE_DET || !d.is_finite() {
        if !training || !d.is_finite() {
            return Err(Error::DegenerateHead { det: d });
        }
        r = mat_add(&r, &mat_scale(&identity(), T::constant(TRAINING_SHIFT)));
    }
    if det(&r).value() < 0.0 {
        r = mat_scale(&r, T::constant(-1.0));
    }
    let rotation = polar_rotation(&r)?;
    let last = &e[3 * m];
    let translation = [last[0] + T::constant(centroid[0]), last[1] + T::constant(centroid[1]), last[2] + T::constant(centroid[2])];
    Ok(RigidTransform { rotation, translation })
}

/// Closed-form general coefficients of the standard paraboloid moved by
/// `t`: `A = Q L Q^T`, `b = Q b* - 2 Q L Q^T t`, `c = t^T Q L Q^T t - t^T Q b*`.
pub fn to_general_form<T: Scalar>(std: &StandardParaboloid<T>, t: &RigidTransform<T>) -> Quadric<T> {
    let q = &t.rotation;
    let lam = diag([std.lambda1, std.lambda2, T::zero()]);
    let a = mat_mul(&mat_mul(q, &lam), &transpose(q));
    let qb = mat_vec(q, &[T::zero(), T::zero(), std.beta]);
    let at = mat_vec(&a, &t.translation);
    let b = sub3(&qb, &scale3(&at, T::constant(2.0)));
    let c = dot3(&t.translation, &at) - dot3(&t.translation, &qb);
    Quadric { a, b, c }
}

/// Interfaces, refinement angle and composed motion from the network.
pub fn predict<T: Scalar>(
    net: &Network,
    w: &[T],
    g1: &ProteinGraph,
    g2: &ProteinGraph,
    options: DockOptions,
    dropout: Option<&mut Dropout>,
) -> Result<Prediction<T>> {
    let (s1, s2) = epit_forward(net, w, g1, g2, dropout);
    predict_from_states(net, w, &s1, &s2, &g1.centroid(), &g2.centroid(), options)
}

pub fn predict_from_states<T: Scalar>(
    net: &Network,
    w: &[T],
    s1: &NodeState<T>,
    s2: &NodeState<T>,
    c1: &Vec3,
    c2: &Vec3,
    options: DockOptions,
) -> Result<Prediction<T>> {
    let m = net.config.m;
    let f1 = compute_f(net, w, &s1.h, &s2.h);
    let f2 = compute_f(net, w, &s2.h, &s1.h);
    let t1 = predict_se3(&compute_e(net, w, s1), m, c1, options.training)?;
    let t2 = predict_se3(&compute_e(net, w, s2), m, c2, options.training)?;
    let standard = predict_standard_form(&f1, &f2);
    let theta = refinement_angle(&f1, &f2);
    let interfaces = InterfacePrediction::new(standard, t1, t2);
    let transform = compose_from_interfaces(&interfaces, theta, options.refine);
    Ok(Prediction {
        interfaces,
        theta,
        transform,
        f: [f1, f2],
    })
}

/// `T2 Qr T1^-1`, with `Qr = I` when refinement is off.
pub fn compose_from_interfaces<T: Scalar>(iface: &InterfacePrediction<T>, theta: T, refine: bool) -> RigidTransform<T> {
    let qr = if refine { refinement_rotation(theta) } else { identity() };
    compose_relative(&iface.transforms[0], &iface.transforms[1], &qr)
}

/// Inference on one ligand (`g1`) / receptor (`g2`) pair.
pub fn dock(params: &ModelParams, g1: &ProteinGraph, g2: &ProteinGraph, options: DockOptions) -> Result<DockingResult> {
    let pred = predict(&params.network, &params.values, g1, g2, options, None)?;
    Ok(finish(pred.interfaces, pred.theta, pred.transform, &g1.coords))
}

/// Docking with externally supplied interfaces in place of the network.
pub fn dock_with_interfaces(interfaces: InterfacePrediction, theta: f64, refine: bool, ligand: &[Vec3]) -> DockingResult {
    let transform = compose_from_interfaces(&interfaces, theta, refine);
    finish(interfaces, theta, transform, ligand)
}

fn finish(interfaces: InterfacePrediction, theta: f64, transform: RigidTransform, ligand: &[Vec3]) -> DockingResult {
    DockingResult {
        docked_ligand: transform.apply_all(ligand),
        transform,
        interfaces,
        theta,
    }
}

/// Cross-check of [`to_general_form`] against the generic transport.
pub fn general_form_by_transport(std: &StandardParaboloid, t: &RigidTransform) -> Quadric {
    transform_quadric(&std.to_quadric(), t)
}
