//! Python bindings: structures, geometry, the docking model, metrics,
//! synthetic data and a small training entry point.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use paradock::dock::{dock_with_interfaces, DockOptions, DockingResult, InterfacePrediction};
use paradock::epit::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, ModelParams};
use paradock::geometry::{self, RigidTransform};
use paradock::linalg::{Mat3, Vec3};
use paradock::protein_io::{build_graph, parse_pdb, ProteinStructure};
use paradock::synth::{SynthConfig, SynthTruth};
use paradock::train::{train_loop, Complex, TrainConfig};

fn err(e: paradock::Error) -> PyErr {
    match e {
        paradock::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "RigidTransform", module = "paradock")]
struct PyTransform {
    inner: RigidTransform,
}

#[pymethods]
impl PyTransform {
    #[new]
    fn new(rotation: Mat3, translation: Vec3) -> PyResult<Self> {
        Ok(PyTransform {
            inner: RigidTransform::new(rotation, translation).map_err(err)?,
        })
    }

    #[staticmethod]
    fn identity() -> Self {
        PyTransform {
            inner: RigidTransform::identity(),
        }
    }

    #[getter]
    fn rotation(&self) -> Mat3 {
        self.inner.rotation
    }

    #[getter]
    fn translation(&self) -> Vec3 {
        self.inner.translation
    }

    fn apply(&self, x: Vec3) -> Vec3 {
        self.inner.apply(&x)
    }

    fn apply_all(&self, xs: Vec<Vec3>) -> Vec<Vec3> {
        self.inner.apply_all(&xs)
    }

    fn inverse(&self) -> Self {
        PyTransform {
            inner: self.inner.inverse(),
        }
    }

    /// `self ∘ first`.
    fn after(&self, first: &PyTransform) -> Self {
        PyTransform {
            inner: self.inner.after(&first.inner),
        }
    }

    fn __repr__(&self) -> String {
        format!("RigidTransform(rotation={:?}, translation={:?})", self.inner.rotation, self.inner.translation)
    }
}

#[pyclass(name = "Quadric", module = "paradock")]
struct PyQuadric {
    inner: geometry::Quadric,
}

#[pymethods]
impl PyQuadric {
    #[new]
    fn new(a: Mat3, b: Vec3, c: f64) -> Self {
        PyQuadric {
            inner: geometry::Quadric { a, b, c },
        }
    }

    #[getter]
    fn a(&self) -> Mat3 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> Vec3 {
        self.inner.b
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    fn eval(&self, x: Vec3) -> f64 {
        self.inner.eval(&x)
    }

    /// Image of the surface under `t`.
    fn transformed(&self, t: &PyTransform) -> Self {
        PyQuadric {
            inner: geometry::transform_quadric(&self.inner, &t.inner),
        }
    }

    fn __repr__(&self) -> String {
        format!("Quadric(a={:?}, b={:?}, c={})", self.inner.a, self.inner.b, self.inner.c)
    }
}

#[pyclass(name = "Paraboloid", module = "paradock")]
struct PyParaboloid {
    inner: geometry::StandardParaboloid,
}

#[pymethods]
impl PyParaboloid {
    #[new]
    fn new(lambda1: f64, lambda2: f64, beta: f64) -> Self {
        PyParaboloid {
            inner: geometry::StandardParaboloid { lambda1, lambda2, beta },
        }
    }

    #[getter]
    fn lambda1(&self) -> f64 {
        self.inner.lambda1
    }

    #[getter]
    fn lambda2(&self) -> f64 {
        self.inner.lambda2
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    fn to_quadric(&self) -> PyQuadric {
        PyQuadric {
            inner: self.inner.to_quadric(),
        }
    }

    fn general_form(&self, t: &PyTransform) -> PyQuadric {
        PyQuadric {
            inner: paradock::dock::to_general_form(&self.inner, &t.inner),
        }
    }
}

#[pyclass(name = "Structure", module = "paradock")]
struct PyStructure {
    inner: ProteinStructure,
}

#[pymethods]
impl PyStructure {
    #[staticmethod]
    fn from_pdb(text: &str) -> PyResult<Self> {
        Ok(PyStructure {
            inner: parse_pdb(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Self::from_pdb(&text)
    }

    fn to_pdb(&self) -> String {
        self.inner.to_pdb()
    }

    fn coords(&self) -> Vec<Vec3> {
        self.inner.coords()
    }

    fn residue_names(&self) -> Vec<String> {
        self.inner.residues().map(|(_, r)| r.name.clone()).collect()
    }

    fn chain_ids(&self) -> Vec<char> {
        self.inner.chain_ids()
    }

    fn with_coords(&self, coords: Vec<Vec3>) -> PyResult<Self> {
        if coords.len() != self.inner.len() {
            return Err(err(paradock::Error::ShapeMismatch(self.inner.len(), coords.len())));
        }
        Ok(PyStructure {
            inner: self.inner.with_coords(&coords),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "DockResult", module = "paradock")]
struct PyDockResult {
    inner: DockingResult,
}

#[pymethods]
impl PyDockResult {
    #[getter]
    fn transform(&self) -> PyTransform {
        PyTransform {
            inner: self.inner.transform,
        }
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn docked_ligand(&self) -> Vec<Vec3> {
        self.inner.docked_ligand.clone()
    }

    #[getter]
    fn standard(&self) -> PyParaboloid {
        PyParaboloid {
            inner: self.inner.interfaces.standard,
        }
    }

    /// Ligand (0) or receptor (1) interface in its input frame.
    fn interface(&self, side: usize) -> PyResult<PyQuadric> {
        let q = self.inner.interfaces.general.get(side).ok_or_else(|| PyValueError::new_err("side must be 0 or 1"))?;
        Ok(PyQuadric { inner: *q })
    }
}

#[pyclass(name = "Model", module = "paradock")]
struct PyModel {
    params: ModelParams,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (seed=0, embed_dim=64, hidden_dim=128, layers=2, heads=16, m=3, k=10, dropout=0.1))]
    #[allow(clippy::too_many_arguments)]
    fn new(seed: u64, embed_dim: usize, hidden_dim: usize, layers: usize, heads: usize, m: usize, k: usize, dropout: f64) -> PyResult<Self> {
        let cfg = ModelConfig {
            embed_dim,
            hidden_dim,
            layers,
            heads,
            m,
            k,
            dropout,
            ..Default::default()
        };
        Ok(PyModel {
            params: ModelParams::init(&cfg, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyModel {
            params: load_checkpoint(std::path::Path::new(path)).map_err(err)?.params,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(std::path::Path::new(path), &Checkpoint::new(self.params.clone())).map_err(err)
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.params.len()
    }

    #[getter]
    fn hidden_dim(&self) -> usize {
        self.params.config().hidden_dim
    }

    #[pyo3(signature = (ligand, receptor, refine=true))]
    fn dock(&self, ligand: &PyStructure, receptor: &PyStructure, refine: bool) -> PyResult<PyDockResult> {
        let features = self.params.config().feature_config();
        let g1 = build_graph(&ligand.inner, &features).map_err(err)?;
        let g2 = build_graph(&receptor.inner, &features).map_err(err)?;
        let inner = paradock::dock::dock(&self.params, &g1, &g2, DockOptions { refine, training: false }).map_err(err)?;
        Ok(PyDockResult { inner })
    }
}

#[pyclass(name = "SynthComplex", module = "paradock")]
struct PySynth {
    inner: SynthTruth,
}

#[pymethods]
impl PySynth {
    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn ligand(&self) -> PyStructure {
        PyStructure {
            inner: self.inner.unbound_ligand_structure(),
        }
    }

    #[getter]
    fn bound_ligand(&self) -> PyStructure {
        PyStructure {
            inner: self.inner.bound_ligand_structure(),
        }
    }

    #[getter]
    fn receptor(&self) -> PyStructure {
        PyStructure {
            inner: self.inner.receptor_structure(),
        }
    }

    #[getter]
    fn docking_transform(&self) -> PyTransform {
        PyTransform {
            inner: self.inner.docking_transform,
        }
    }

    /// Docks with the generator's own interfaces in place of a model.
    #[pyo3(signature = (refine=true))]
    fn oracle_dock(&self, refine: bool) -> PyDockResult {
        let t = &self.inner;
        let iface = InterfacePrediction::new(t.standard, t.ligand_frame, t.receptor_frame);
        PyDockResult {
            inner: dock_with_interfaces(iface, t.theta, refine, &t.unbound_ligand),
        }
    }

    fn write(&self, dir: &str) -> PyResult<()> {
        paradock::synth::write_complex(std::path::Path::new(dir), &self.inner).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (n, seed=0))]
fn generate_synthetic(n: usize, seed: u64) -> PyResult<Vec<PySynth>> {
    Ok(paradock::synth::generate(&SynthConfig::default(), n, seed)
        .map_err(err)?
        .into_iter()
        .map(|inner| PySynth { inner })
        .collect())
}

#[pyfunction]
fn polar_rotation(r: Mat3) -> PyResult<Mat3> {
    geometry::polar_rotation(&r).map_err(err)
}

/// Rigid motion that best maps `p` onto `q`.
#[pyfunction]
fn kabsch(p: Vec<Vec3>, q: Vec<Vec3>) -> PyResult<PyTransform> {
    Ok(PyTransform {
        inner: geometry::kabsch(&p, &q).map_err(err)?,
    })
}

#[pyfunction]
fn crmsd(reference: Vec<Vec3>, pred: Vec<Vec3>) -> PyResult<f64> {
    paradock::metrics::crmsd(&reference, &pred).map_err(err)
}

#[pyfunction]
fn dockq_score(fnat: f64, irmsd: f64, lrmsd: f64) -> f64 {
    paradock::metrics::dockq_score(fnat, irmsd, lrmsd)
}

/// CRMSD, IRMSD, fnat, LRMSD and DockQ-lite of a predicted complex.
#[pyfunction]
fn evaluate_complex(ref_ligand: Vec<Vec3>, ref_receptor: Vec<Vec3>, pred_ligand: Vec<Vec3>, pred_receptor: Vec<Vec3>) -> PyResult<HashMap<String, f64>> {
    use paradock::metrics::ComplexCoords;
    let m = paradock::metrics::evaluate_complex(
        &ComplexCoords { ligand: &ref_ligand, receptor: &ref_receptor },
        &ComplexCoords { ligand: &pred_ligand, receptor: &pred_receptor },
    )
    .map_err(err)?;
    Ok(HashMap::from([
        ("crmsd".to_string(), m.crmsd),
        ("irmsd".to_string(), m.irmsd),
        ("fnat".to_string(), m.fnat),
        ("lrmsd".to_string(), m.lrmsd),
        ("dockq_lite".to_string(), m.dockq),
    ]))
}

#[pyfunction]
fn dock_loss(pred: &PyTransform, q_gt: Mat3, t_gt: Vec3) -> f64 {
    paradock::losses::dock_loss(&pred.inner, &q_gt, &t_gt)
}

/// Trains `model` in place on bound `(ligand, receptor)` pairs and returns
/// the per-step loss log.
#[pyfunction]
#[pyo3(signature = (model, complexes, max_steps=100, learning_rate=2e-4, seed=0))]
fn train(model: &mut PyModel, complexes: Vec<(PyRef<'_, PyStructure>, PyRef<'_, PyStructure>)>, max_steps: usize, learning_rate: f64, seed: u64) -> PyResult<Vec<HashMap<String, f64>>> {
    let cfg = TrainConfig {
        model: model.params.config().clone(),
        learning_rate,
        seed,
        max_steps: Some(max_steps),
        epochs: usize::MAX,
        patience: usize::MAX,
        ..Default::default()
    };
    let data = complexes
        .iter()
        .enumerate()
        .map(|(i, (l, r))| Complex::from_structures(&format!("complex_{i}"), &l.inner, &r.inner, &cfg.model))
        .collect::<paradock::Result<Vec<_>>>()
        .map_err(err)?;
    let mut log = Vec::new();
    let out = train_loop(model.params.clone(), &data, &[], &cfg, None, &mut |s| {
        log.push(HashMap::from([
            ("step".to_string(), s.step as f64),
            ("fit".to_string(), s.fit),
            ("overlap".to_string(), s.overlap),
            ("refinement".to_string(), s.refinement),
            ("dock".to_string(), s.dock),
            ("total".to_string(), s.total),
            ("grad_norm".to_string(), s.grad_norm),
        ]));
    })
    .map_err(err)?;
    model.params = out.params;
    Ok(log)
}

#[pymodule(name = "paradock")]
fn paradock_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTransform>()?;
    m.add_class::<PyQuadric>()?;
    m.add_class::<PyParaboloid>()?;
    m.add_class::<PyStructure>()?;
    m.add_class::<PyDockResult>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySynth>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(polar_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(kabsch, m)?)?;
    m.add_function(wrap_pyfunction!(crmsd, m)?)?;
    m.add_function(wrap_pyfunction!(dockq_score, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_complex, m)?)?;
    m.add_function(wrap_pyfunction!(dock_loss, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
