//! Training: rigid-motion augmentation, exact gradients through the whole
//! pipeline, Adam, early stopping and checkpoint retention.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dock::{predict, DockOptions};
use crate::epit::{save_checkpoint, Checkpoint, Dropout, ModelConfig, ModelParams, NamedArray, Network};
use crate::error::{Error, Result};
use crate::geometry::{random_transform, RigidTransform};
use crate::linalg::{Mat3, Vec3};
use crate::losses::{dock_loss, fit_loss, overlap_loss, refinement_loss, total_loss, LossReport, LossWeights};
use crate::protein_io::{build_graph, extract_pockets, track_pockets, PocketSet, ProteinGraph, ProteinStructure, Side, POCKET_THRESHOLD};
use crate::scalar::Scalar;
use crate::synth::SynthTruth;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Use the refinement rotation when composing the docking motion.
    pub refine: bool,
    pub seed: u64,
    pub epochs: usize,
    pub patience: usize,
    pub top_k_checkpoints: usize,
    pub max_steps: Option<usize>,
    /// Half-width of the augmentation translation cube, in angstrom.
    pub translation_half_width: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            learning_rate: 2e-4,
            weights: LossWeights::default(),
            refine: true,
            seed: 0,
            epochs: 100,
            patience: 8,
            top_k_checkpoints: 10,
            max_steps: None,
            translation_half_width: 10.0,
            clip_norm: 1.0,
            batch_size: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.weights.as_array().iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size == 0 || self.top_k_checkpoints == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size, top_k_checkpoints and patience must be positive".into()));
        }
        Ok(())
    }
}

/// Loss-toggle configurations of the ablation study plus the refinement
/// toggle: `(name, weights, refine)`.
pub fn ablation_configs() -> Vec<(&'static str, LossWeights, bool)> {
    let w = LossWeights::from_array;
    vec![
        ("full", w([1.0, 1.0, 1.0, 1.0]), true),
        ("-fit", w([0.0, 1.0, 1.0, 1.0]), true),
        ("-overlap", w([1.0, 0.0, 1.0, 1.0]), true),
        ("-ref", w([1.0, 1.0, 0.0, 1.0]), true),
        ("-fit-overlap", w([0.0, 0.0, 1.0, 1.0]), true),
        ("-fit-ref", w([0.0, 1.0, 0.0, 1.0]), true),
        ("-overlap-ref", w([1.0, 0.0, 0.0, 1.0]), true),
        ("-qr", w([1.0, 1.0, 1.0, 1.0]), false),
    ]
}

/// A bound complex: ligand and receptor graphs in the receptor's frame and
/// the pockets between them.
#[derive(Clone, Debug)]
pub struct Complex {
    pub id: String,
    pub ligand: ProteinGraph,
    pub receptor: ProteinGraph,
    pub pockets: Option<PocketSet>,
}

impl Complex {
    pub fn from_structures(id: &str, ligand: &ProteinStructure, receptor: &ProteinStructure, model: &ModelConfig) -> Result<Self> {
        let features = model.feature_config();
        let ligand = build_graph(ligand, &features)?;
        let receptor = build_graph(receptor, &features)?;
        let pockets = match extract_pockets(&ligand.coords, &receptor.coords, POCKET_THRESHOLD) {
            Ok(p) => Some(p),
            Err(Error::NoContacts) => None,
            Err(e) => return Err(e),
        };
        Ok(Complex {
            id: id.to_string(),
            ligand,
            receptor,
            pockets,
        })
    }

    pub fn from_truth(truth: &SynthTruth, model: &ModelConfig) -> Result<Self> {
        Self::from_structures(&truth.id, &truth.bound_ligand_structure(), &truth.receptor_structure(), model)
    }
}

/// A training input: the ligand moved off its bound pose by a known motion.
#[derive(Clone, Debug)]
pub struct AugmentedSample {
    pub index: usize,
    pub ligand: ProteinGraph,
    pub receptor: ProteinGraph,
    /// Ligand-side and receptor-side pocket copies in the input poses.
    pub pockets: Option<(Vec<Vec3>, Vec<Vec3>)>,
    pub q_gt: Mat3,
    pub t_gt: Vec3,
}

/// Ligand input `X1 = Q_gt X1* + t_gt`; the receptor is left in place.
pub fn augment_with(index: usize, c: &Complex, gt: &RigidTransform) -> AugmentedSample {
    let ligand = c.ligand.with_coords(gt.apply_all(&c.ligand.coords));
    let pockets = c.pockets.as_ref().map(|p| {
        let lig = track_pockets(p, gt, Side::Ligand).midpoints;
        (lig, p.midpoints.clone())
    });
    AugmentedSample {
        index,
        ligand,
        receptor: c.receptor.clone(),
        pockets,
        q_gt: gt.rotation,
        t_gt: gt.translation,
    }
}

/// Haar-random rotation and a translation uniform in the configured cube.
pub fn augment<R: Rng + ?Sized>(index: usize, c: &Complex, rng: &mut R, half_width: f64) -> AugmentedSample {
    let gt = random_transform(rng, half_width);
    augment_with(index, c, &gt)
}

/// Raw loss components of one sample and the bookkeeping flags.
#[derive(Clone, Debug)]
pub struct SampleLoss<T> {
    pub components: [T; 4],
    pub total: T,
    pub refinement_skipped: bool,
    pub no_contacts: bool,
}

/// Disabled (zero-weight) components are not evaluated and read as 0.
pub fn sample_loss<T: Scalar>(
    net: &Network,
    w: &[T],
    s: &AugmentedSample,
    weights: &LossWeights,
    refine: bool,
    dropout: Option<&mut Dropout>,
) -> Result<SampleLoss<T>> {
    let options = DockOptions { refine, training: true };
    let pred = predict(net, w, &s.ligand, &s.receptor, options, dropout)?;
    let iface = &pred.interfaces;
    let mut c = [T::zero(); 4];
    let mut refinement_skipped = false;
    if let Some((p1, p2)) = &s.pockets {
        if weights.fit != 0.0 {
            c[0] = fit_loss(iface, p1, p2)?;
        }
        if weights.refinement != 0.0 {
            match refinement_loss(pred.theta, p1, p2, &iface.transforms[0], &iface.transforms[1]) {
                Ok(v) => c[2] = v,
                Err(Error::DegenerateConfiguration(_)) | Err(Error::TooFewPoints { .. }) => refinement_skipped = true,
                Err(e) => return Err(e),
            }
        }
    }
    if weights.overlap != 0.0 {
        c[1] = overlap_loss(iface, &s.ligand.coords, &s.receptor.coords);
    }
    if weights.dock != 0.0 {
        c[3] = dock_loss(&pred.transform, &s.q_gt, &s.t_gt);
    }
    let total = total_loss(&c, weights);
    if !total.value().is_finite() {
        return Err(Error::NonFiniteLoss { sample: s.index });
    }
    Ok(SampleLoss {
        components: c,
        total,
        refinement_skipped,
        no_contacts: s.pockets.is_none(),
    })
}

fn report_of<T: Scalar>(l: &SampleLoss<T>, weights: LossWeights) -> LossReport {
    LossReport {
        fit: l.components[0].value(),
        overlap: l.components[1].value(),
        refinement: l.components[2].value(),
        dock: l.components[3].value(),
        total: l.total.value(),
        weights,
        refinement_skipped: l.refinement_skipped as usize,
        no_contacts: l.no_contacts as usize,
    }
}

/// Summed loss report and summed gradient (flat, in parameter layout
/// order) over a batch.
pub fn loss_gradient(
    params: &ModelParams,
    batch: &[AugmentedSample],
    weights: &LossWeights,
    refine: bool,
    mut dropout: Option<&mut Dropout>,
) -> Result<(LossReport, Vec<f64>)> {
    let mut report = LossReport::zero(*weights);
    let mut grad = vec![0.0; params.len()];
    for s in batch {
        let tape = Tape::new();
        let w: Vec<Var> = tape.vars(&params.values);
        let l = sample_loss(&params.network, &w, s, weights, refine, dropout.as_deref_mut())?;
        report.accumulate(&report_of(&l, *weights));
        if weights.all_zero() {
            continue;
        }
        let g = tape.gradient(l.total, &w);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((report, grad))
}

/// Plain forward evaluation, averaged over the samples.
pub fn evaluate(params: &ModelParams, samples: &[AugmentedSample], weights: &LossWeights, refine: bool) -> Result<LossReport> {
    let mut report = LossReport::zero(*weights);
    for s in samples {
        let l = sample_loss(&params.network, &params.values, s, weights, refine, None)?;
        report.accumulate(&report_of(&l, *weights));
    }
    let n = samples.len().max(1) as f64;
    report.fit /= n;
    report.overlap /= n;
    report.refinement /= n;
    report.dock /= n;
    report.total /= n;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn to_arrays(&self) -> Vec<NamedArray> {
        vec![
            NamedArray { name: "adam.m".into(), shape: vec![self.m.len()], data: self.m.clone() },
            NamedArray { name: "adam.v".into(), shape: vec![self.v.len()], data: self.v.clone() },
            NamedArray { name: "adam.step".into(), shape: vec![1], data: vec![self.step as f64] },
        ]
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Option<Self> {
        let m = ckpt.extra("adam.m")?.data.clone();
        let v = ckpt.extra("adam.v")?.data.clone();
        let step = ckpt.extra("adam.step")?.data.first().copied()? as u64;
        Some(Adam { step, m, v, ..Adam::new(0) })
    }
}

/// One bias-corrected Adam update.
pub fn optimizer_step(params: &mut [f64], grads: &[f64], state: &mut Adam, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let c1 = 1.0 - state.beta1.powi(state.step as i32);
    let c2 = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        params[i] -= lr * mh / (vh.sqrt() + state.eps);
    }
}

/// Rescales `g` to at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for x in g.iter_mut() {
            *x *= s;
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub sample: String,
    pub fit: f64,
    pub overlap: f64,
    pub refinement: f64,
    pub dock: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub refinement_skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetainedCheckpoint {
    pub epoch: usize,
    pub val_loss: f64,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub best_params: ModelParams,
    pub optimizer: Adam,
    pub retained: Vec<RetainedCheckpoint>,
    pub epochs: Vec<EpochLog>,
    pub steps: usize,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

pub const NO_PROGRESS_WARNING: &str = "NoProgress: every loss weight is zero, parameters cannot change";

/// Validation samples use one fixed augmentation so epochs are comparable.
pub fn fixed_augmentation(complexes: &[Complex], seed: u64, half_width: f64) -> Vec<AugmentedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_F1E1D);
    complexes.iter().enumerate().map(|(i, c)| augment(i, c, &mut rng, half_width)).collect()
}

/// Epoch-based training with fresh augmentation each epoch, top-k
/// checkpoint retention by validation loss and patience-based stopping.
/// An empty validation set falls back to the training set.
pub fn train_loop(
    init: ModelParams,
    train: &[Complex],
    val: &[Complex],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if init.config() != &cfg.model {
        return Err(Error::Config("initial parameters do not match the model configuration".into()));
    }
    let mut params = init;
    let mut adam = Adam::new(params.len());
    let mut outcome = TrainOutcome {
        best_params: params.clone(),
        params: params.clone(),
        optimizer: adam.clone(),
        retained: Vec::new(),
        epochs: Vec::new(),
        steps: 0,
        stopped_early: false,
        warnings: Vec::new(),
    };
    if cfg.weights.all_zero() {
        outcome.warnings.push(NO_PROGRESS_WARNING.to_string());
        return Ok(outcome);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let val_set = if val.is_empty() { train } else { val };
    let val_samples = fixed_augmentation(val_set, cfg.seed, cfg.translation_half_width);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout = Dropout {
        rate: cfg.model.dropout,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)),
    };
    let mut best_val = f64::INFINITY;
    let mut since_best = 0;
    let mut step = 0;
    'epochs: for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut epoch_count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            let batch: Vec<AugmentedSample> = chunk.iter().map(|&i| augment(i, &train[i], &mut rng, cfg.translation_half_width)).collect();
            let (report, mut grad) = loss_gradient(&params, &batch, &cfg.weights, cfg.refine, Some(&mut dropout))?;
            let grad_norm = clip_global_norm(&mut grad, cfg.clip_norm);
            optimizer_step(&mut params.values, &grad, &mut adam, cfg.learning_rate);
            step += 1;
            epoch_total += report.total;
            epoch_count += batch.len();
            on_step(&StepLog {
                step,
                epoch,
                sample: chunk.iter().map(|&i| train[i].id.as_str()).collect::<Vec<_>>().join(","),
                fit: report.fit,
                overlap: report.overlap,
                refinement: report.refinement,
                dock: report.dock,
                total: report.total,
                grad_norm,
                lr: cfg.learning_rate,
                refinement_skipped: report.refinement_skipped,
            });
        }
        if epoch_count == 0 {
            break;
        }
        let val_loss = evaluate(&params, &val_samples, &cfg.weights, cfg.refine)?.total;
        outcome.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_total / epoch_count as f64,
            val_loss,
        });
        retain(&mut outcome.retained, &params, &adam, epoch, step, val_loss, cfg.top_k_checkpoints, out_dir)?;
        if val_loss < best_val {
            best_val = val_loss;
            since_best = 0;
            outcome.best_params = params.clone();
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                outcome.stopped_early = true;
                break 'epochs;
            }
        }
        if cfg.max_steps.is_some_and(|m| step >= m) {
            break;
        }
    }
    outcome.params = params;
    outcome.optimizer = adam;
    outcome.steps = step;
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn retain(
    kept: &mut Vec<RetainedCheckpoint>,
    params: &ModelParams,
    adam: &Adam,
    epoch: usize,
    step: usize,
    val_loss: f64,
    top_k: usize,
    out_dir: Option<&Path>,
) -> Result<()> {
    let worst = kept.iter().map(|k| k.val_loss).fold(f64::NEG_INFINITY, f64::max);
    if kept.len() >= top_k && !(val_loss < worst) {
        return Ok(());
    }
    let path = match out_dir {
        Some(dir) => {
            let path = dir.join(format!("ckpt_epoch{epoch:04}.ckpt"));
            let ckpt = Checkpoint {
                params: params.clone(),
                extra: adam.to_arrays(),
                meta: serde_json::json!({"epoch": epoch, "step": step, "val_loss": val_loss}),
            };
            save_checkpoint(&path, &ckpt)?;
            Some(path)
        }
        None => None,
    };
    kept.push(RetainedCheckpoint { epoch, val_loss, path });
    kept.sort_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.epoch.cmp(&b.epoch)));
    while kept.len() > top_k {
        if let Some(evicted) = kept.pop() {
            if let Some(p) = evicted.path {
                std::fs::remove_file(p)?;
            }
        }
    }
    if let (Some(dir), Some(best)) = (out_dir, kept.first()) {
        if best.epoch == epoch {
            std::fs::copy(best.path.as_ref().unwrap(), dir.join("best.ckpt"))?;
        }
    }
    Ok(())
}

/// Agreement of the reverse-mode gradient with central differences for
/// one parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    /// `|g_ad - g_fd| / max(|g_ad|, |g_fd|)`, 0 when both vanish.
    pub relative_error: f64,
}

/// Central differences of the total loss of one sample with step `h`,
/// compared per parameter array. Dropout is off.
pub fn finite_difference_check(
    params: &ModelParams,
    sample: &AugmentedSample,
    weights: &LossWeights,
    refine: bool,
    h: f64,
) -> Result<Vec<GradientCheck>> {
    let (_, analytic) = loss_gradient(params, std::slice::from_ref(sample), weights, refine, None)?;
    let mut probe = params.values.clone();
    let eval = |values: &[f64]| -> Result<f64> {
        Ok(sample_loss(&params.network, values, sample, weights, refine, None)?.total)
    };
    let mut out = Vec::new();
    for e in &params.network.entries {
        let mut diff2 = 0.0;
        let mut a2 = 0.0;
        let mut n2 = 0.0;
        for i in e.range() {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = eval(&probe)?;
            probe[i] = orig - h;
            let down = eval(&probe)?;
            probe[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            diff2 += (numeric - analytic[i]).powi(2);
            a2 += analytic[i].powi(2);
            n2 += numeric.powi(2);
        }
        let scale = a2.sqrt().max(n2.sqrt());
        out.push(GradientCheck {
            name: e.name.clone(),
            analytic_norm: a2.sqrt(),
            numeric_norm: n2.sqrt(),
            relative_error: if scale < 1e-12 { 0.0 } else { diff2.sqrt() / scale },
        });
    }
    Ok(out)
}
