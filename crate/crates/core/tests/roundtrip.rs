use facepipe_core::assoc::io::{detections_csv, parse_detections, parse_truth, truth_csv};
use facepipe_core::data::io::{
    load_embeddings, load_matrix, load_similarity, write_embeddings, write_matrix, write_similarity,
};
use facepipe_core::data::{seeded_rng, EmbeddingMatrix, SimilarityMatrix};
use facepipe_core::landmarks::{
    cascade_predict, cascade_train, load_model, load_shape, write_model, write_shape, CascadeConfig, PixelDifference,
};
use facepipe_core::synth::{
    gen_clusters, gen_shape_corpus, gen_tracking_scenario, ClusterSpec, ScenarioScript, ShapeCorpusSpec,
};

// Payloads are f32: the first save quantizes, every later one is lossless.
#[test]
fn embeddings_and_projection_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = gen_clusters(&ClusterSpec { subjects: 3, per_subject: 5, ..ClusterSpec::default() }).unwrap();
    let path = tmp.path().join("e.vpe");
    write_embeddings(&path, &data.embeddings).unwrap();
    let once = load_embeddings(&path).unwrap();
    for (a, b) in once.items().iter().zip(data.embeddings.items()) {
        assert_eq!((&a.subject_id, &a.media_id, a.source_kind), (&b.subject_id, &b.media_id, b.source_kind));
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| (x - y).abs() <= 1e-7 * y.abs().max(1.0)));
    }
    write_embeddings(&path, &once).unwrap();
    assert_eq!(load_embeddings(&path).unwrap(), once);

    let w = EmbeddingMatrix::random(4, 64, &mut seeded_rng(1));
    let path = tmp.path().join("w.vpw");
    write_matrix(&path, &w).unwrap();
    let once = load_matrix(&path).unwrap();
    write_matrix(&path, &once).unwrap();
    assert_eq!(load_matrix(&path).unwrap(), once);
}

#[test]
fn similarity_csv_keeps_missing_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let m = SimilarityMatrix::new(
        vec!["g0".into(), "g1".into()],
        vec!["p0".into(), "p1".into(), "p2".into()],
        vec![Some(0.25), None, Some(-1.0 / 3.0), Some(1e-300), Some(0.0), None],
    )
    .unwrap();
    let path = tmp.path().join("s.csv");
    write_similarity(&path, &m).unwrap();
    assert_eq!(load_similarity(&path).unwrap(), m);
}

#[test]
fn cascade_model_and_shape_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (samples, mean) = gen_shape_corpus(&ShapeCorpusSpec { samples: 40, ..ShapeCorpusSpec::default() }).unwrap();
    let phi = PixelDifference::new(2, 3).prepared(mean.len());
    let cfg = CascadeConfig { ridge: 1.0, ..CascadeConfig::with_stages(2) };
    let trained = cascade_train(&samples, &mean, &phi, &cfg).unwrap();
    let path = tmp.path().join("m.vpl");
    write_model(&path, &trained.stages).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded.len(), 2);

    // weights are stored as f32, so predictions agree to single precision
    let a = cascade_predict(&samples[0].0, &mean, &trained.stages, &phi).unwrap();
    let b = cascade_predict(&samples[0].0, &mean, &loaded, &phi).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!((p.x - q.x).abs() < 1e-3 && (p.y - q.y).abs() < 1e-3);
    }

    let path = tmp.path().join("shape.csv");
    write_shape(&path, &a).unwrap();
    assert_eq!(load_shape(&path).unwrap(), a);
}

#[test]
fn scenario_csvs_round_trip() {
    let script = ScenarioScript::parse(
        "seed 4; confidence_noise 0.2\nsubject a; waypoint 0 0 0 10 10; waypoint 9 9 0 10 10\nsubject b; waypoint 3 50 50 10 12; waypoint 12 50 60 10 12\n",
    )
    .unwrap();
    let sc = gen_tracking_scenario(&script).unwrap();
    let text = detections_csv(&sc.detections, None);
    let back = parse_detections(&text, None).unwrap();
    assert_eq!(back.len(), sc.detections.len());
    for (x, y) in back.iter().zip(&sc.detections) {
        assert_eq!((x.frame, x.bbox, x.confidence, x.row), (y.frame, y.bbox, y.confidence, y.row));
    }
    let truth = parse_truth(&truth_csv(&sc.truth)).unwrap();
    assert_eq!(truth.len(), sc.truth.len());
    assert_eq!(truth[&0], "a");
}
