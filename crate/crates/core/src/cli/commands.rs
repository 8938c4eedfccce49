use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    AssociateArgs, Cli, Command, EvaluateArgs, FuseArgs, LandmarksPredictArgs, LandmarksTrainArgs, PoolArgs,
    ProjectArgs, ReportArgs, ScoringArgs, SynthClustersArgs, SynthCommand, SynthScenarioArgs, TemplateArgs, TrainArgs,
};
use crate::assoc::{self, AssocConfig, ConstantVelocity};
use crate::data::io::{
    load_embeddings, load_matrix, load_similarity, read_manifest, templates_from_rows, write_embeddings,
    write_manifest, write_matrix, write_similarity,
};
use crate::data::{Embedding, EmbeddingMatrix, EmbeddingSet, SimilarityMatrix, SourceKind, Template};
use crate::embedding::{project_set, select_output_dim, train, write_training_log, Objective, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_splits, apply_setup, build_similarity_matrix, read_protocol, score_report, summary_csv, write_cmc,
    write_protocol, write_roc, write_summary, Protocol, ScoringPipeline, Setup, Split, SubjectLabels,
};
use crate::landmarks::{
    align_face, cascade_predict, cascade_train, load_model, load_shape, normalized_error, write_model, write_shape,
    AlignmentIndices, CascadeConfig, ErrorNorm, GrayImage, PixelDifference, Point, DEFAULT_PATCH_SCALES,
};
use crate::pooling::{fuse_scores, Pooler, PoolingMode};
use crate::synth::{
    gen_clusters, gen_protocol, gen_shape_corpus, gen_tracking_scenario, ClusterSpec, MediaLayout, ScenarioScript,
    ShapeCorpusSpec,
};

/// Number of folds used when choosing the output dimension.
const SELECTION_FOLDS: usize = 3;

pub(super) fn dispatch(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
    write_run_manifest(cli)?;
    match &cli.command {
        Command::Synth(SynthCommand::Clusters(a)) => synth_clusters(cli, a),
        Command::Synth(SynthCommand::Scenario(a)) => synth_scenario(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Project(a) => cmd_project(cli, a),
        Command::Pool(a) => cmd_pool(cli, a),
        Command::Score(a) => cmd_score(cli, &a.scoring),
        Command::Fuse(a) => cmd_fuse(cli, a),
        Command::Associate(a) => cmd_associate(cli, a),
        Command::LandmarksTrain(a) => cmd_landmarks_train(cli, a),
        Command::LandmarksPredict(a) => cmd_landmarks_predict(cli, a),
        Command::Evaluate(a) => cmd_evaluate(cli, a),
        Command::Report(a) => cmd_report(cli, a),
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool_version: &'a str,
    seed: u64,
    threads: Option<usize>,
    command: &'a Command,
}

/// Resolved configuration, excluding the output directory so reruns into
/// different directories produce identical files.
fn write_run_manifest(cli: &Cli) -> Result<()> {
    let m = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: cli.seed,
        threads: cli.threads,
        command: &cli.command,
    };
    let json = serde_json::to_string_pretty(&m).map_err(|e| Error::Parse(e.to_string()))?;
    write_text(&cli.out_dir.join("manifest.json"), &(json + "\n"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn split_suffix(k: Option<usize>) -> String {
    k.map(|k| format!("_split{k}")).unwrap_or_default()
}

fn select_splits<'a>(protocol: &'a Protocol, which: &str) -> Result<Vec<&'a Split>> {
    if which == "all" {
        return Ok(protocol.splits.iter().collect());
    }
    let k: usize =
        which.parse().map_err(|_| Error::Config(format!("--split must be an index or `all`, got `{which}`")))?;
    protocol
        .splits
        .iter()
        .find(|s| s.index == k)
        .map(|s| vec![s])
        .ok_or_else(|| Error::Config(format!("protocol has no split {k}")))
}

fn read_undetected(path: Option<&Path>) -> Result<HashSet<usize>> {
    let Some(path) = path else { return Ok(HashSet::new()) };
    read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse().map_err(|_| Error::Parse(format!("{}: bad embedding index `{l}`", path.display()))))
        .collect()
}

fn load_templates(path: &Path, set: &EmbeddingSet, setup: u8, undetected: Option<&Path>) -> Result<Vec<Template>> {
    let templates = templates_from_rows(&read_manifest(path)?)?;
    for t in &templates {
        t.validate(set)?;
    }
    Ok(apply_setup(&templates, &read_undetected(undetected)?, Setup::from_number(setup)?))
}

fn template_map(templates: &[Template]) -> HashMap<&str, &Template> {
    templates.iter().map(|t| (t.template_id.as_str(), t)).collect()
}

fn synth_clusters(cli: &Cli, a: &SynthClustersArgs) -> Result<()> {
    let spec = ClusterSpec {
        subjects: a.subjects,
        per_subject: a.per_subject,
        ambient_dim: a.dim,
        intrinsic_dim: a.intrinsic_dim,
        noise_sigma: a.noise,
        media_per_subject: a.media_per_subject,
        media_noise_sigma: a.media_noise,
        templates_per_subject: a.templates_per_subject,
        layout: match a.video_frames {
            Some(video_frames) => MediaLayout::ImbalancedVideo { video_frames },
            None => MediaLayout::Uniform,
        },
        seed: cli.seed,
    };
    let data = gen_clusters(&spec)?;
    let protocol = gen_protocol(&data.templates, a.splits, a.train_fraction, a.impostor_fraction, cli.seed)?;
    write_embeddings(&cli.out_dir.join("embeddings.vpe"), &data.embeddings)?;
    write_manifest(&cli.out_dir.join("manifest.csv"), &data.manifest())?;
    write_protocol(&cli.out_dir.join("protocol.csv"), &protocol)?;
    println!(
        "{} embeddings, {} templates, {} splits",
        data.embeddings.len(),
        data.templates.len(),
        protocol.splits.len()
    );
    Ok(())
}

fn synth_scenario(cli: &Cli, a: &SynthScenarioArgs) -> Result<()> {
    let script = ScenarioScript::parse(&read_text(&a.script)?)?;
    let sc = gen_tracking_scenario(&script)?;
    let refs = sc.appearances.as_ref().map(|_| sc.appearance_refs.as_slice());
    write_text(&cli.out_dir.join("detections.csv"), &assoc::io::detections_csv(&sc.detections, refs))?;
    write_text(&cli.out_dir.join("truth.csv"), &assoc::io::truth_csv(&sc.truth))?;
    if let Some(app) = &sc.appearances {
        write_embeddings(&cli.out_dir.join("appearances.vpe"), app)?;
    }
    println!("{} detections over {} frames", sc.detections.len(), sc.frames);
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let set = load_embeddings(&a.embeddings)?;
    let objective: Objective = a.objective.parse()?;
    let base = TrainConfig {
        output_dim: a.dim,
        margin: a.margin,
        learning_rate: a.lr,
        negatives_pool: a.negatives,
        iterations: a.iterations,
        seed: cli.seed,
        log_every: a.log_every,
    };
    let jobs: Vec<(Option<usize>, EmbeddingSet)> = match (&a.protocol, &a.manifest) {
        (Some(protocol), Some(manifest)) => {
            let templates = load_templates(manifest, &set, 1, None)?;
            let map = template_map(&templates);
            let protocol = read_protocol(protocol)?;
            protocol.validate(&map)?;
            select_splits(&protocol, &a.split)?
                .into_iter()
                .map(|s| {
                    let mut idx: Vec<usize> = Vec::new();
                    for id in &s.train {
                        let t = map.get(id.as_str()).ok_or_else(|| Error::UnknownTemplate(id.clone()))?;
                        idx.extend(&t.members);
                    }
                    idx.sort_unstable();
                    idx.dedup();
                    Ok((Some(s.index), set.select(&idx)?))
                })
                .collect::<Result<_>>()?
        }
        _ => vec![(None, set)],
    };
    for (k, pool) in jobs {
        // each split draws from its own stream
        let mut cfg = TrainConfig { seed: cli.seed.wrapping_add(k.unwrap_or(0) as u64), ..base.clone() };
        if let Some(c) = &a.dim_candidates {
            cfg.output_dim = select_output_dim(&pool, c, SELECTION_FOLDS, &cfg, objective)?;
            println!("split {}: selected output dimension {}", k.map_or("-".into(), |k| k.to_string()), cfg.output_dim);
        }
        let state = train(&pool, &cfg, objective)?;
        let suffix = split_suffix(k);
        write_matrix(&cli.out_dir.join(format!("w{suffix}.vpw")), &state.matrix)?;
        write_training_log(&cli.out_dir.join(format!("training_log{suffix}.csv")), &state.log)?;
        if let Some(last) = state.log.last() {
            println!("w{suffix}.vpw: {} iterations, loss ema {:.6}", state.iteration, last.loss_ema);
        }
    }
    Ok(())
}

fn cmd_project(cli: &Cli, a: &ProjectArgs) -> Result<()> {
    let set = load_embeddings(&a.embeddings)?;
    let w = load_matrix(&a.matrix)?;
    let out = project_set(&w, &set, !a.no_renormalize)?;
    write_embeddings(&cli.out_dir.join("projected.vpe"), &out)
}

fn cmd_pool(cli: &Cli, a: &PoolArgs) -> Result<()> {
    let t = &a.templates;
    let set = load_embeddings(&t.embeddings)?;
    let templates = load_templates(&t.manifest, &set, t.setup, t.undetected.as_deref())?;
    let pooler = Pooler::new(t.pooling.parse::<PoolingMode>()?);
    let mut items = Vec::new();
    let mut missing = 0usize;
    for tpl in &templates {
        if tpl.missing {
            missing += 1;
            continue;
        }
        let v = pooler.pool(tpl, &set)?;
        items.push(Embedding::new(v, tpl.subject_id.clone(), tpl.template_id.clone(), SourceKind::Image));
    }
    write_embeddings(&cli.out_dir.join("pooled.vpe"), &EmbeddingSet::new(set.dim(), items)?)?;
    println!("{} templates pooled, {missing} missing", templates.len() - missing);
    Ok(())
}

struct ScoringInputs<'a> {
    templates: &'a TemplateArgs,
    protocol: &'a Path,
    split: &'a str,
    projection: Option<&'a Path>,
    projection_dir: Option<&'a Path>,
    renormalize: bool,
}

type ScoredSplit = (usize, SimilarityMatrix, SubjectLabels);

fn score_protocol(inp: &ScoringInputs<'_>) -> Result<Vec<ScoredSplit>> {
    let ta = inp.templates;
    let set = load_embeddings(&ta.embeddings)?;
    let templates = load_templates(&ta.manifest, &set, ta.setup, ta.undetected.as_deref())?;
    let map = template_map(&templates);
    let protocol = read_protocol(inp.protocol)?;
    protocol.validate(&map)?;
    let pooler = Pooler::new(ta.pooling.parse::<PoolingMode>()?);
    let shared: Option<EmbeddingMatrix> = inp.projection.map(load_matrix).transpose()?;

    let mut out = Vec::new();
    for split in select_splits(&protocol, inp.split)? {
        let projection = match (inp.projection_dir, &shared) {
            (Some(dir), _) => Some(load_matrix(&dir.join(format!("w_split{}.vpw", split.index)))?),
            (None, w) => w.clone(),
        };
        let pipeline = ScoringPipeline { pooler, projection, renormalize: inp.renormalize };
        let resolve = |ids: &[String]| -> Result<Vec<&Template>> {
            ids.iter()
                .map(|id| map.get(id.as_str()).copied().ok_or_else(|| Error::UnknownTemplate(id.clone())))
                .collect()
        };
        let gallery = resolve(&split.gallery)?;
        let probe = resolve(&split.probe)?;
        let vectors = pipeline.template_vectors(gallery.iter().chain(&probe).copied(), &set)?;
        let matrix = build_similarity_matrix(&gallery, &probe, &vectors)?;
        let labels = SubjectLabels {
            gallery: gallery.iter().map(|t| t.subject_id.clone()).collect(),
            probe: probe.iter().map(|t| t.subject_id.clone()).collect(),
        };
        out.push((split.index, matrix, labels));
    }
    Ok(out)
}

fn cmd_score(cli: &Cli, a: &ScoringArgs) -> Result<()> {
    let scored = score_protocol(&ScoringInputs {
        templates: &a.templates,
        protocol: &a.protocol,
        split: &a.split,
        projection: a.projection.as_deref(),
        projection_dir: a.projection_dir.as_deref(),
        renormalize: !a.no_renormalize,
    })?;
    for (k, m, _) in &scored {
        write_similarity(&cli.out_dir.join(format!("similarity_split{k}.csv")), m)?;
    }
    println!("{} similarity matrices written", scored.len());
    Ok(())
}

fn cmd_fuse(cli: &Cli, a: &FuseArgs) -> Result<()> {
    if a.inputs.len() < 2 {
        return Err(Error::Config("fusion needs at least two inputs".into()));
    }
    let mats = a.inputs.iter().map(|p| load_similarity(p)).collect::<Result<Vec<_>>>()?;
    let fused = fuse_scores(&mats, a.weights.as_deref())?;
    write_similarity(&cli.out_dir.join(&a.output), &fused)
}

fn cmd_associate(cli: &Cli, a: &AssociateArgs) -> Result<()> {
    let cfg = AssocConfig {
        overlap_threshold: a.gamma,
        detect_every: a.detect_every,
        termination_frames: a.termination,
        det_confidence_min: a.det_confidence_min,
        high_confidence: a.high_confidence,
        ..Default::default()
    };
    let appearances = a.appearances.as_deref().map(load_embeddings).transpose()?;
    let detections = assoc::io::load_detections(&a.detections, appearances.as_ref())?;
    let out = assoc::associate(&detections, a.frames, &cfg, &mut ConstantVelocity)?;
    write_text(&cli.out_dir.join("tracklets.csv"), &assoc::io::tracklets_csv(&out.tracklets))?;
    write_text(&cli.out_dir.join("events.log"), &assoc::io::event_log(&out.events))?;
    let mut summary = format!("tracklets={} identities={}", out.tracklets.len(), out.identity_count());
    if let Some(truth) = &a.truth {
        let truth = assoc::io::load_truth(truth)?;
        summary.push_str(&format!(" identity_switches={}", assoc::identity_switches(&out.assignments, &truth)));
    }
    println!("{summary}");
    Ok(())
}

fn shape_corpus_spec(cli: &Cli, samples: usize) -> ShapeCorpusSpec {
    ShapeCorpusSpec { samples, seed: cli.seed, ..Default::default() }
}

fn cmd_landmarks_train(cli: &Cli, a: &LandmarksTrainArgs) -> Result<()> {
    if a.stages == 0 || a.stages > DEFAULT_PATCH_SCALES.len() {
        return Err(Error::Config(format!("--stages must be in 1..={}", DEFAULT_PATCH_SCALES.len())));
    }
    let (samples, mean) = gen_shape_corpus(&shape_corpus_spec(cli, a.samples))?;
    let phi = PixelDifference::new(a.pairs, a.feature_seed).prepared(mean.len());
    let cfg = CascadeConfig { ridge: a.ridge, line_search: !a.no_line_search, ..CascadeConfig::with_stages(a.stages) };
    let trained = cascade_train(&samples, &mean, &phi, &cfg)?;
    write_model(&cli.out_dir.join("model.vpl"), &trained.stages)?;
    write_shape(&cli.out_dir.join("mean_shape.csv"), &mean)?;
    let mut log = String::from("stage,mean_error\n");
    for (t, e) in trained.errors.iter().enumerate() {
        log.push_str(&format!("{t},{e}\n"));
    }
    write_text(&cli.out_dir.join("stage_errors.csv"), &log)?;
    println!(
        "initial error {:.6}, final error {:.6}",
        trained.errors[0],
        trained.errors.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Serialize)]
struct AlignmentRecord {
    indices: AlignmentIndices,
    scale: f64,
    theta: f64,
    tx: f64,
    ty: f64,
}

fn cmd_landmarks_predict(cli: &Cli, a: &LandmarksPredictArgs) -> Result<()> {
    let stages = load_model(&a.model)?;
    let mean = load_shape(&a.mean_shape)?;
    let (img, truth) = match (&a.image, a.synthetic_index) {
        (Some(path), _) => {
            let (w, h) =
                a.width.zip(a.height).ok_or_else(|| Error::Config("--image needs --width and --height".into()))?;
            (GrayImage::load_raw(path, w, h)?, None)
        }
        (None, Some(i)) => {
            let (mut samples, _) = gen_shape_corpus(&shape_corpus_spec(cli, i + 1))?;
            let (img, shape) = samples.swap_remove(i);
            (img, Some(shape))
        }
        (None, None) => return Err(Error::Config("pass --image or --synthetic-index".into())),
    };
    let phi = PixelDifference::new(a.pairs, a.feature_seed).prepared(mean.len());
    let pred = cascade_predict(&img, &mean, &stages, &phi)?;
    write_shape(&cli.out_dir.join("shape.csv"), &pred)?;

    let indices = AlignmentIndices::default();
    let canonical: [Point; 7] = std::array::from_fn(|k| mean.points.get(indices.0[k]).copied().unwrap_or_default());
    let t = align_face(&pred, &canonical, &indices)?;
    let record = AlignmentRecord { indices, scale: t.scale, theta: t.theta, tx: t.tx, ty: t.ty };
    let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Parse(e.to_string()))?;
    write_text(&cli.out_dir.join("alignment.json"), &(json + "\n"))?;
    if let Some(truth) = truth {
        let norm = ErrorNorm::for_len(truth.len());
        println!(
            "normalized error: initial {:.6}, predicted {:.6}",
            normalized_error(&mean, &truth, &norm)?,
            normalized_error(&pred, &truth, &norm)?
        );
    }
    Ok(())
}

/// Split index encoded as `..._split{k}.csv`, if any.
fn split_index_from_name(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    stem.rsplit_once("_split")?.1.parse().ok()
}

fn matrix_inputs(a: &EvaluateArgs) -> Result<Vec<(usize, PathBuf)>> {
    let mut files: Vec<PathBuf> = a.matrix.clone();
    if let Some(dir) = &a.matrix_dir {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("similarity_split") && name.ends_with(".csv") {
                files.push(p);
            }
        }
    }
    let mut indexed: Vec<(usize, PathBuf)> =
        files.into_iter().enumerate().map(|(i, p)| (split_index_from_name(&p).unwrap_or(i), p)).collect();
    indexed.sort();
    if indexed.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Config("two similarity matrices map to the same split index".into()));
    }
    Ok(indexed)
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let scored: Vec<ScoredSplit> = match (&a.embeddings, &a.protocol) {
        (Some(embeddings), Some(protocol)) => {
            let templates = TemplateArgs {
                embeddings: embeddings.clone(),
                manifest: a.manifest.clone(),
                pooling: a.pooling.clone(),
                setup: a.setup,
                undetected: a.undetected.clone(),
            };
            score_protocol(&ScoringInputs {
                templates: &templates,
                protocol,
                split: &a.split,
                projection: a.projection.as_deref(),
                projection_dir: a.projection_dir.as_deref(),
                renormalize: !a.no_renormalize,
            })?
        }
        _ => {
            let inputs = matrix_inputs(a)?;
            if inputs.is_empty() {
                return Err(Error::Config("pass --matrix, --matrix-dir or --embeddings with --protocol".into()));
            }
            let subjects: HashMap<String, String> =
                read_manifest(&a.manifest)?.into_iter().map(|r| (r.template_id, r.subject_id)).collect();
            let label = |ids: &[String]| -> Result<Vec<String>> {
                ids.iter()
                    .map(|id| subjects.get(id).cloned().ok_or_else(|| Error::UnknownTemplate(id.clone())))
                    .collect()
            };
            inputs
                .into_iter()
                .map(|(k, p)| {
                    let m = load_similarity(&p)?;
                    let labels = SubjectLabels { gallery: label(m.gallery_ids())?, probe: label(m.probe_ids())? };
                    Ok((k, m, labels))
                })
                .collect::<Result<_>>()?
        }
    };

    let mut per_split = Vec::with_capacity(scored.len());
    for (k, matrix, labels) in scored {
        let report = score_report(k, matrix, &labels)?;
        write_roc(&cli.out_dir.join(format!("roc_split{k}.csv")), &report.roc)?;
        if !report.cmc.is_empty() {
            write_cmc(&cli.out_dir.join(format!("cmc_split{k}.csv")), &report.cmc)?;
        }
        per_split.push(report.metrics);
    }
    let summary = aggregate_splits(&per_split);
    write_summary(&cli.out_dir.join("summary.csv"), &summary)?;
    print!("{}", summary_csv(&summary));
    Ok(())
}

fn cmd_report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let labels: Vec<String> = match &a.labels {
        Some(l) if l.len() == a.summary.len() => l.clone(),
        Some(l) => {
            return Err(Error::Config(format!("{} labels for {} summaries", l.len(), a.summary.len())));
        }
        None => a
            .summary
            .iter()
            .map(|p| p.parent().and_then(|d| d.file_name()).and_then(|n| n.to_str()).unwrap_or("run").to_string())
            .collect(),
    };
    let mut metrics: Vec<String> = Vec::new();
    let mut cells: Vec<HashMap<String, String>> = Vec::new();
    for path in &a.summary {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["metric", "mean", "std"] {
            return Err(Error::MalformedHeader(format!("{}: expected metric,mean,std", path.display())));
        }
        let mut col = HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Parse(format!("{}: bad number `{}`", path.display(), &rec[i])))
            };
            if !metrics.contains(&rec[0].to_string()) {
                metrics.push(rec[0].to_string());
            }
            col.insert(rec[0].to_string(), format!("{:.4} ± {:.4}", num(1)?, num(2)?));
        }
        cells.push(col);
    }
    let mut out = format!("| metric | {} |\n|---|{}\n", labels.join(" | "), "---|".repeat(labels.len()));
    for m in &metrics {
        let row: Vec<&str> = cells.iter().map(|c| c.get(m).map(String::as_str).unwrap_or("-")).collect();
        out.push_str(&format!("| {m} | {} |\n", row.join(" | ")));
    }
    write_text(&cli.out_dir.join("report.md"), &out)?;
    print!("{out}");
    Ok(())
}
