//! Python bindings. Vectors and matrices cross the boundary as plain lists;
//! similarity matrices are gallery-major lists of rows with `None` for MISSING.

use std::collections::HashMap;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use facepipe_core::assoc::{self, AssocConfig, ConstantVelocity};
use facepipe_core::data::{Embedding, EmbeddingMatrix, EmbeddingSet, SimilarityMatrix, SourceKind, Template};
use facepipe_core::embedding::{self, Objective, TrainConfig};
use facepipe_core::eval::{self, SubjectLabels};
use facepipe_core::landmarks::{self, Point};
use facepipe_core::pooling::{self, Pooler, PoolingMode};
use facepipe_core::synth::{gen_tracking_scenario, ScenarioScript};
use facepipe_core::Error;

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> PyResult<EmbeddingMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows differ in length"));
    }
    EmbeddingMatrix::from_row_major(rows.len(), cols, rows.concat()).map_err(py_err)
}

fn matrix_to_rows(m: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn similarity(rows: &[Vec<Option<f64>>]) -> PyResult<SimilarityMatrix> {
    let probes = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != probes) {
        return Err(PyValueError::new_err("score rows differ in length"));
    }
    let g = (0..rows.len()).map(|i| format!("g{i}")).collect();
    let p = (0..probes).map(|i| format!("p{i}")).collect();
    SimilarityMatrix::new(g, p, rows.concat()).map_err(py_err)
}

fn similarity_rows(m: &SimilarityMatrix) -> Vec<Vec<Option<f64>>> {
    (0..m.n_gallery()).map(|g| (0..m.n_probe()).map(|p| m.get(g, p)).collect()).collect()
}

fn labelled_set(vectors: Vec<Vec<f64>>, subjects: Vec<String>, media: Option<Vec<String>>) -> PyResult<EmbeddingSet> {
    if vectors.len() != subjects.len() || media.as_ref().is_some_and(|m| m.len() != vectors.len()) {
        return Err(PyValueError::new_err("vectors, subjects and media must have the same length"));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    let items = vectors
        .into_iter()
        .zip(subjects)
        .enumerate()
        .map(|(i, (v, s))| {
            let m = media.as_ref().map_or_else(|| format!("m{i}"), |m| m[i].clone());
            Embedding::new(v, s, m, SourceKind::Image)
        })
        .collect();
    EmbeddingSet::new(dim, items).map_err(py_err)
}

#[pyfunction]
fn l2_normalize(v: Vec<f64>) -> PyResult<Vec<f64>> {
    embedding::l2_normalize(&v).map_err(py_err)
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    embedding::cosine_similarity(&a, &b).map_err(py_err)
}

/// Trains a projection with hard-negative mining; returns its rows.
#[pyfunction]
#[pyo3(signature = (vectors, subjects, output_dim=128, iterations=10_000, learning_rate=0.01, margin=0.1, negatives=1000, seed=0, objective="tse"))]
#[allow(clippy::too_many_arguments)]
fn train_embedding(
    vectors: Vec<Vec<f64>>,
    subjects: Vec<String>,
    output_dim: usize,
    iterations: usize,
    learning_rate: f64,
    margin: f64,
    negatives: usize,
    seed: u64,
    objective: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let objective = match objective {
        "tse" => Objective::Tse,
        "tde" => Objective::Tde,
        other => return Err(PyValueError::new_err(format!("unknown objective `{other}`"))),
    };
    let set = labelled_set(vectors, subjects, None)?;
    let cfg = TrainConfig {
        output_dim,
        iterations,
        learning_rate,
        margin,
        negatives_pool: negatives,
        seed,
        ..TrainConfig::default()
    };
    let state = embedding::train(&set, &cfg, objective).map_err(py_err)?;
    Ok(matrix_to_rows(&state.matrix))
}

#[pyfunction]
#[pyo3(signature = (w, v, renormalize=true))]
fn project(w: Vec<Vec<f64>>, v: Vec<f64>, renormalize: bool) -> PyResult<Vec<f64>> {
    embedding::project_scored(&matrix_from_rows(&w)?, &v, renormalize).map_err(py_err)
}

/// Pools one template. `media` gives each vector's media id.
#[pyfunction]
#[pyo3(signature = (vectors, media, mode="media"))]
fn pool_template(vectors: Vec<Vec<f64>>, media: Vec<String>, mode: &str) -> PyResult<Vec<f64>> {
    let mode: PoolingMode = mode.parse().map_err(py_err)?;
    let n = vectors.len();
    let set = labelled_set(vectors, vec!["s".into(); n], Some(media))?;
    let t = Template::new("t", "s", (0..n).collect());
    Pooler::new(mode).pool(&t, &set).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (matrices, weights=None))]
fn fuse_scores(matrices: Vec<Vec<Vec<Option<f64>>>>, weights: Option<Vec<f64>>) -> PyResult<Vec<Vec<Option<f64>>>> {
    let ms = matrices.iter().map(|m| similarity(m)).collect::<PyResult<Vec<_>>>()?;
    let fused = pooling::fuse_scores(&ms, weights.as_deref()).map_err(py_err)?;
    Ok(similarity_rows(&fused))
}

/// `(far, tar, threshold)` points, threshold descending.
#[pyfunction]
fn roc_curve(scores: Vec<(Option<f64>, bool)>) -> PyResult<Vec<(f64, f64, f64)>> {
    let curve = eval::roc_curve(&scores).map_err(py_err)?;
    Ok(curve.iter().map(|p| (p.far, p.tar, p.threshold)).collect())
}

#[pyfunction]
fn tar_at_far(scores: Vec<(Option<f64>, bool)>, far: f64) -> PyResult<f64> {
    Ok(eval::tar_at_far(&eval::roc_curve(&scores).map_err(py_err)?, far))
}

#[pyfunction]
#[pyo3(signature = (scores, gallery_subjects, probe_subjects, max_rank=None))]
fn cmc_curve(
    scores: Vec<Vec<Option<f64>>>,
    gallery_subjects: Vec<String>,
    probe_subjects: Vec<String>,
    max_rank: Option<usize>,
) -> PyResult<Vec<f64>> {
    let m = similarity(&scores)?;
    let labels = SubjectLabels { gallery: gallery_subjects, probe: probe_subjects };
    eval::cmc_curve(&m, &labels, max_rank.unwrap_or(m.n_gallery())).map_err(py_err)
}

#[pyfunction]
fn tpir_at_fpir(
    scores: Vec<Vec<Option<f64>>>,
    gallery_subjects: Vec<String>,
    probe_subjects: Vec<String>,
    fpir: Vec<f64>,
) -> PyResult<Vec<f64>> {
    let labels = SubjectLabels { gallery: gallery_subjects, probe: probe_subjects };
    eval::tpir_at_fpir(&similarity(&scores)?, &labels, &fpir).map_err(py_err)
}

/// Column per row, `None` for unassigned rows.
#[pyfunction]
fn hungarian_assign(cost: Vec<Vec<f64>>) -> PyResult<Vec<Option<usize>>> {
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols || r.iter().any(|c| !c.is_finite())) {
        return Err(PyValueError::new_err("cost must be a rectangular matrix of finite values"));
    }
    Ok(assoc::hungarian_assign(&cost))
}

/// `(scale, theta, tx, ty)` best mapping `src` onto `dst`.
#[pyfunction]
fn similarity_transform(src: Vec<(f64, f64)>, dst: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64, f64)> {
    let pts = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| Point::new(x, y)).collect::<Vec<_>>();
    let t = landmarks::similarity_transform(&pts(&src), &pts(&dst)).map_err(py_err)?;
    Ok((t.scale, t.theta, t.tx, t.ty))
}

/// Renders a scenario script and associates it. Returns the event log and
/// the identity switch count against the script's ground truth.
#[pyfunction]
fn associate_script(script: &str) -> PyResult<(String, usize)> {
    let script = ScenarioScript::parse(script).map_err(py_err)?;
    let sc = gen_tracking_scenario(&script).map_err(py_err)?;
    let out =
        assoc::associate(&sc.detections, sc.frames, &AssocConfig::default(), &mut ConstantVelocity).map_err(py_err)?;
    let truth: HashMap<usize, String> = sc.truth.into_iter().enumerate().collect();
    Ok((assoc::io::event_log(&out.events), assoc::identity_switches(&out.assignments, &truth)))
}

/// Runs the command-line tool in-process; returns its exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    facepipe_core::cli::main_with_args(std::iter::once("facepipe".to_string()).chain(args))
}

#[pymodule]
fn facepipe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(l2_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(train_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(pool_template, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_scores, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(tar_at_far, m)?)?;
    m.add_function(wrap_pyfunction!(cmc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(tpir_at_fpir, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian_assign, m)?)?;
    m.add_function(wrap_pyfunction!(similarity_transform, m)?)?;
    m.add_function(wrap_pyfunction!(associate_script, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
