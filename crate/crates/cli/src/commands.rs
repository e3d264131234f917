use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rayon::prelude::*;
use sseg::metrics::{
    edge_error, part_ap, rank_corpus, segmentation_map, MetricReport, RetrievalItem, ScoredSegment, ShapeMetrics,
    AP_IOU_THRESHOLD, SEG_IOU_THRESHOLD,
};
use sseg::nnet::{curves_to_csv, train as train_model, Sample, TrainConfig};
use sseg::pipeline::{rule_based, Model};
use sseg::refine::decisions_to_json_lines;
use sseg::structure::{Hierarchy, Segment, Taxonomy};
use sseg::synthio::{
    gen_dataset, read_hierarchy, read_shape, record_paths, shape_stem, write_hierarchy, write_shape, Category,
    Dataset, GenConfig, LabeledCloud, ShapeFile, Split,
};

use crate::{EvalArgs, GenArgs, InferArgs, RefineArgs, RetrieveArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(sseg::Error),
}

impl From<sseg::Error> for CliError {
    fn from(e: sseg::Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Prints the one-line JSON error record and maps the failure to an exit
/// code: 2 usage, 3 data, 4 numeric.
pub fn report(e: &CliError) -> ExitCode {
    let (kind, message, code) = match e {
        CliError::Usage(m) => ("usage", m.clone(), 2),
        CliError::Core(e) => (e.kind(), e.to_string(), if e.is_numeric() { 4 } else { 3 }),
    };
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ap,
    Ee,
    Map,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "ap" => Ok(Metric::Ap),
            "ee" => Ok(Metric::Ee),
            "map" => Ok(Metric::Map),
            o => Err(format!("unknown metric '{o}' (expected ap, ee or map)")),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(sseg::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn read_taxonomy(path: &Path) -> CliResult<Taxonomy> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(Taxonomy::from_json_str(&text)?)
}

fn is_dataset(dir: &Path) -> bool {
    dir.join("manifest.json").is_file() && dir.join("taxonomy.json").is_file()
}

/// Shape files under `path`: the file itself, a dataset's shapes in
/// manifest order, or a directory's `*.shape.json` files sorted by name.
fn shape_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if is_dataset(path) {
        let ds = Dataset::open(path)?;
        return Ok(ds.manifest().shapes.iter().map(|e| ds.shape_path(&e.name)).collect());
    }
    let entries = std::fs::read_dir(path).map_err(|e| io_error(path, e))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e.map_err(|e| io_error(path, e))?.path();
        if p.to_string_lossy().ends_with(".shape.json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Taxonomy from, in order: an explicit file, a dataset root, the
/// category recorded in the first shape.
fn resolve_taxonomy(explicit: Option<&Path>, root: &Path, shapes: &[PathBuf]) -> CliResult<Taxonomy> {
    if let Some(p) = explicit {
        return read_taxonomy(p);
    }
    if root.is_dir() && is_dataset(root) {
        return read_taxonomy(&root.join("taxonomy.json"));
    }
    let first = shapes
        .first()
        .ok_or_else(|| CliError::Usage(format!("no shapes found in {}", root.display())))?;
    match read_shape(first)?.category {
        Some(c) => Ok(c.parse::<Category>()?.taxonomy()),
        None => Err(CliError::Usage(format!(
            "{} records no category; pass --taxonomy",
            first.display()
        ))),
    }
}

fn leaf_segments(h: &Hierarchy, n_points: usize) -> sseg::Result<Vec<Segment>> {
    h.leaves()
        .into_iter()
        .map(|l| Segment::new(h.node(l).point_indices.clone(), h.node(l).semantic, n_points))
        .collect()
}

pub fn gen(a: &GenArgs) -> CliResult {
    if !(0.0..=1.0).contains(&a.oversample_prob) {
        return Err(CliError::Usage("--oversample-prob must lie in [0, 1]".into()));
    }
    let mut cfg = GenConfig {
        points: a.points,
        oversegment_prob: a.oversample_prob,
        ..GenConfig::default()
    };
    if let Some(n) = a.label_noise {
        cfg.label_noise = n;
    }
    let ds = gen_dataset(&a.out, a.category, a.count, a.seed, &cfg)?;
    log::info!("wrote {} shapes to {}", ds.manifest().shapes.len(), a.out.display());
    Ok(())
}

enum Predictor {
    Model(Box<Model>),
    RuleBased(Taxonomy),
}

impl Predictor {
    fn taxonomy(&self) -> &Taxonomy {
        match self {
            Predictor::Model(m) => &m.taxonomy,
            Predictor::RuleBased(t) => t,
        }
    }

    fn infer(&self, shape: &ShapeFile) -> sseg::Result<Hierarchy> {
        let segments = shape.cloud.segments();
        match self {
            Predictor::Model(m) => m.infer(shape.cloud.points(), &segments),
            Predictor::RuleBased(t) => rule_based(shape.cloud.points(), &segments, t),
        }
    }
}

pub fn infer(a: &InferArgs) -> CliResult {
    let files = shape_files(&a.shape)?;
    let predictor = match &a.predictor.model {
        Some(m) => {
            let mut model = Model::load(m)?;
            if let Some(t) = &a.taxonomy {
                model.taxonomy = read_taxonomy(t)?;
            }
            Predictor::Model(Box::new(model))
        }
        None => Predictor::RuleBased(resolve_taxonomy(a.taxonomy.as_deref(), &a.shape, &files)?),
    };
    if a.shape.is_file() {
        let shape = read_shape(&a.shape)?;
        let h = predictor.infer(&shape)?;
        write_hierarchy(&a.out, &h, predictor.taxonomy())?;
        return Ok(());
    }
    files.par_iter().try_for_each(|f| -> CliResult {
        let shape = read_shape(f)?;
        let h = predictor.infer(&shape)?;
        let (_, hp) = record_paths(&a.out, &shape_stem(f));
        write_hierarchy(&hp, &h, predictor.taxonomy())?;
        Ok(())
    })?;
    log::info!("inferred {} shapes into {}", files.len(), a.out.display());
    Ok(())
}

pub fn refine(a: &RefineArgs) -> CliResult {
    for (flag, v) in [("--iou-thresh", a.iou_thresh), ("--merge-thresh", a.merge_thresh)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Usage(format!("{flag} must lie in [0, 1]")));
        }
    }
    let model = Model::load(&a.model)?;
    let shape = read_shape(&a.shape)?;
    let points = shape.cloud.points();
    let segments = shape.cloud.segments();
    let h = match &a.hierarchy {
        Some(p) => read_hierarchy(p, &model.taxonomy)?,
        None => model.infer(points, &segments)?,
    };
    let r = model.refine(points, &segments, &h, a.iou_thresh, a.merge_thresh)?;

    // refined segmentation as a shape file: one instance per surviving segment
    let mut semantics = shape.cloud.semantics().to_vec();
    let mut instances = vec![0u32; points.len()];
    for (k, s) in r.segments.iter().enumerate() {
        for &i in s.point_indices() {
            instances[i] = k as u32;
            semantics[i] = s.semantic;
        }
    }
    let refined = ShapeFile {
        name: shape.name.clone(),
        category: shape.category.clone(),
        cloud: LabeledCloud::new(points.to_vec(), semantics, instances, shape.cloud.is_normalized())?,
        gt_merges: Vec::new(),
    };
    let (sp, hp) = record_paths(&a.out, &shape.name);
    write_shape(&sp, &refined)?;
    write_hierarchy(&hp, &r.hierarchy, &model.taxonomy)?;
    write_file(
        &a.out.join(format!("{}.decisions.jsonl", shape.name)),
        &decisions_to_json_lines(&r.decisions),
    )?;
    log::info!("{}: {} candidates, {} merges applied", shape.name, r.decisions.len(), r.applied);
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult {
    if a.metrics.is_empty() {
        return Err(CliError::Usage("--metrics must name at least one metric".into()));
    }
    let files = shape_files(&a.gt)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no shapes found in {}", a.gt.display())));
    }
    let taxonomy = resolve_taxonomy(a.taxonomy.as_deref(), &a.gt, &files)?;
    let want = |m: Metric| a.metrics.contains(&m);
    let rows = files
        .par_iter()
        .map(|f| -> CliResult<ShapeMetrics> {
            let name = shape_stem(f);
            let shape = read_shape(f)?;
            let (_, gt_path) = record_paths(f.parent().unwrap_or(Path::new(".")), &name);
            let gt = read_hierarchy(&gt_path, &taxonomy)?;
            let (_, pred_path) = record_paths(&a.pred, &name);
            let pred = read_hierarchy(&pred_path, &taxonomy)?;
            let n = shape.cloud.len();
            let seg_map = if want(Metric::Map) {
                let p: Vec<ScoredSegment> = leaf_segments(&pred, n)?.into_iter().map(ScoredSegment::new).collect();
                Some(segmentation_map(&p, &leaf_segments(&gt, n)?, n, SEG_IOU_THRESHOLD)?.mean)
            } else {
                None
            };
            Ok(ShapeMetrics {
                name: shape.name,
                ap_25: if want(Metric::Ap) { Some(part_ap(&pred, &gt, AP_IOU_THRESHOLD)?) } else { None },
                edge_error: if want(Metric::Ee) { Some(edge_error(&pred, &gt)?) } else { None },
                seg_map,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let report = MetricReport::from_shapes(rows);
    if let Some(out) = &a.out {
        write_file(out, &report.to_json())?;
    }
    print!("{}", report.to_table());
    Ok(())
}

/// Retrieval entry of one shape: its structure is inferred with `model`
/// or read from the `.hierarchy.json` next to it.
fn retrieval_item(path: &Path, model: Option<&Model>, taxonomy: &Taxonomy) -> CliResult<RetrievalItem> {
    let shape = read_shape(path)?;
    let hierarchy = match model {
        Some(m) => m.infer(shape.cloud.points(), &shape.cloud.segments())?,
        None => {
            let (_, hp) = record_paths(path.parent().unwrap_or(Path::new(".")), &shape_stem(path));
            read_hierarchy(&hp, taxonomy)?
        }
    };
    Ok(RetrievalItem {
        name: shape.name,
        points: shape.cloud.points().to_vec(),
        hierarchy,
    })
}

pub fn retrieve(a: &RetrieveArgs) -> CliResult {
    let files = shape_files(&a.corpus)?;
    let model = a.model.as_deref().map(Model::load).transpose()?;
    let taxonomy = match &model {
        Some(m) => m.taxonomy.clone(),
        None => resolve_taxonomy(a.taxonomy.as_deref(), &a.corpus, &files)?,
    };
    let query = retrieval_item(&a.query, model.as_ref(), &taxonomy)?;
    let corpus = files
        .par_iter()
        .map(|f| retrieval_item(f, model.as_ref(), &taxonomy))
        .collect::<CliResult<Vec<_>>>()?;
    // the query itself never ranks
    let exclude = corpus.iter().position(|c| c.name == query.name);
    let hits = rank_corpus(&query, &corpus, a.mode, exclude)?;
    let top: Vec<_> = hits.into_iter().take(a.topk).collect();
    println!("{}", serde_json::to_string_pretty(&top).expect("hits serialize"));
    Ok(())
}

pub fn train(a: &TrainArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            TrainConfig::from_str_auto(&text, &p.display().to_string())?
        }
        None => TrainConfig::default(),
    };
    cfg.seed = a.seed;
    if cfg.dump_dir.is_none() {
        cfg.dump_dir = Some(a.out.clone());
    }
    let ds = Dataset::open(&a.data)?;
    let taxonomy = ds.taxonomy().clone();
    let load = |split| -> CliResult<Vec<Sample>> {
        ds.load_split(Some(split))?
            .iter()
            .map(|r| Sample::from_record(r, &taxonomy).map_err(CliError::from))
            .collect()
    };
    let (train_set, held_out) = (load(Split::Train)?, load(Split::Test)?);
    log::info!("training on {} shapes, {} held out", train_set.len(), held_out.len());
    let outcome = train_model(&train_set, &held_out, &taxonomy, &cfg)?;
    outcome.model.save(&a.out)?;
    write_file(&a.out.join("curves.csv"), &curves_to_csv(&outcome.curves))?;
    let report = serde_json::json!({
        "config": cfg,
        "train_shapes": train_set.len(),
        "held_out_shapes": held_out.len(),
        "steps": outcome.step_losses.len(),
        "evaluation": outcome.evaluation,
    });
    write_file(
        &a.out.join("report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(())
}
