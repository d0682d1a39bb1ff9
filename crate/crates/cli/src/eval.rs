//! `eval` and `render`.

use rayon::prelude::*;

use ghostgrid::mapper::MapperConfig;
use ghostgrid::metrics::{write_table_csv, EvalMask, MetricAccumulator, MetricReport};
use ghostgrid::modelio::SensorModel;
use ghostgrid::pipeline::{accumulate_scene, evaluate_sensor, infer_scene, PipelineConfig, SceneInference};
use ghostgrid::scene::{extract_training_pairs, PairSelection, Scene, TrainingPair};
use ghostgrid::Grid;

use crate::args::{EvalArgs, Level, RenderArgs, Selection};
use crate::error::{CliError, PathContext, Result};
use crate::io;
use crate::manifest::{manifest_path, RunManifest};

const CHUNK: usize = 256;

fn default_name(model: &SensorModel<f64>) -> &'static str {
    match model {
        SensorModel::KMeans(_) => "k-means PaS",
        SensorModel::Gmm(_) => "GMM PaS",
        SensorModel::Cvae(_) => "CVAE",
    }
}

fn row_names(given: &[String], defaults: &[&str]) -> Result<Vec<String>> {
    if given.is_empty() {
        return Ok(defaults.iter().map(|s| s.to_string()).collect());
    }
    if given.len() != defaults.len() {
        return Err(CliError::usage(format!(
            "{} names given for {} rows",
            given.len(),
            defaults.len()
        )));
    }
    Ok(given.to_vec())
}

/// Pairs each prediction with its ground truth on the full grid.
fn eval_grids(a: &EvalArgs, manifest: &mut RunManifest) -> Result<Vec<(String, MetricReport<f64>)>> {
    if a.pred.len() != a.gt.len() {
        return Err(CliError::usage(format!(
            "{} predictions for {} ground-truth grids",
            a.pred.len(),
            a.gt.len()
        )));
    }
    let mut acc = MetricAccumulator::new();
    for (p, g) in a.pred.iter().zip(&a.gt) {
        manifest.input(p).input(g);
        let pred = io::read_grid(p)?;
        let gt = io::read_grid(g)?;
        let (h, w) = gt.dims();
        acc.add(&pred, &[(1.0, &pred)], &gt, &EvalMask::full(h, w))
            .map_err(|e| CliError::from(e).context(format!("{} against {}", p.display(), g.display())))?;
    }
    let name = row_names(&a.name, &["prediction"])?.remove(0);
    Ok(vec![(name, acc.report())])
}

fn infer_all(scenes: &[Scene], idx: &[usize], model: &SensorModel<f64>, config: &PipelineConfig) -> Result<Vec<SceneInference>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(CHUNK) {
        let batch: Vec<SceneInference> = chunk
            .par_iter()
            .map(|&i| infer_scene(&scenes[i], model, config))
            .collect::<ghostgrid::Result<_>>()?;
        out.extend(batch);
    }
    Ok(out)
}

fn eval_models(a: &EvalArgs, manifest: &mut RunManifest) -> Result<Vec<(String, MetricReport<f64>)>> {
    let scenes_path = a
        .scenes
        .as_deref()
        .ok_or_else(|| CliError::usage("--model needs --scenes"))?;
    manifest.input(scenes_path);
    let scenes = io::read_scenes(scenes_path)?;
    let idx = io::limited(io::select_scenes(&scenes, &a.split)?, a.limit);
    let mut models = Vec::with_capacity(a.model.len());
    for p in &a.model {
        manifest.input(p);
        models.push(io::read_model(p)?);
    }
    let defaults: Vec<&str> = models.iter().map(default_name).collect();
    let names = row_names(&a.name, &defaults)?;
    let t = std::time::Instant::now();
    let rows = match a.level {
        Level::Scene => eval_scene_level(a, &scenes, &idx, &models, names)?,
        Level::Sensor => eval_sensor_level(a, &scenes, &idx, &models, names)?,
    };
    manifest.time("evaluate", t.elapsed());
    Ok(rows)
}

fn eval_scene_level(
    a: &EvalArgs,
    scenes: &[Scene],
    idx: &[usize],
    models: &[SensorModel<f64>],
    names: Vec<String>,
) -> Result<Vec<(String, MetricReport<f64>)>> {
    let fusion = a.fusion.config();
    fusion.validate()?;
    if a.fusion.top_k == 0 {
        return Err(CliError::usage("--top-k must be at least 1"));
    }
    let config = PipelineConfig {
        mapper: MapperConfig::default(),
        fusion,
        top_k: a.fusion.top_k,
    };
    let mut rows = Vec::with_capacity(models.len() + 1);
    // The observed grid on the first model's mask: the baseline without any
    // driver sensor.
    let mut vanilla = MetricAccumulator::new();
    for (m, (model, name)) in models.iter().zip(names).enumerate() {
        let mut acc = MetricAccumulator::new();
        for inf in infer_all(scenes, idx, model, &config)? {
            accumulate_scene(&mut acc, &inf)?;
            if m == 0 {
                let observed: &Grid = &inf.view.observed;
                let mask = inf.evaluation_mask()?;
                vanilla.add(observed, &[(1.0, observed)], &inf.view.ground_truth, &mask)?;
            }
        }
        rows.push((name, acc.report()));
    }
    rows.insert(0, ("Vanilla OGM".to_string(), vanilla.report()));
    Ok(rows)
}

fn eval_sensor_level(
    a: &EvalArgs,
    scenes: &[Scene],
    idx: &[usize],
    models: &[SensorModel<f64>],
    names: Vec<String>,
) -> Result<Vec<(String, MetricReport<f64>)>> {
    let selection = match a.selection {
        Selection::All => PairSelection::AllDrivers,
        Selection::Scripted => PairSelection::ScriptedOnly,
    };
    let chosen: Vec<Scene> = idx.iter().map(|&i| scenes[i].clone()).collect();
    let pairs: Vec<TrainingPair> =
        extract_training_pairs(&chosen, selection, &MapperConfig::default().driver, None);
    if pairs.is_empty() {
        return Err(CliError::data("no driver-view pairs in the selected scenes"));
    }
    models
        .iter()
        .zip(names)
        .map(|(model, name)| Ok((name, evaluate_sensor(model, &pairs)?)))
        .collect()
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut manifest = RunManifest::new("eval", a);
    let rows = if !a.pred.is_empty() {
        eval_grids(a, &mut manifest)?
    } else if !a.model.is_empty() {
        eval_models(a, &mut manifest)?
    } else {
        return Err(CliError::usage("eval needs --model or --pred/--gt"));
    };
    let table: Vec<(&str, &MetricReport<f64>)> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let mut text = Vec::new();
    write_table_csv(&table, &mut text)?;
    io::create_parent(&a.out)?;
    std::fs::write(&a.out, &text).at(&a.out)?;
    manifest.output(&a.out);
    manifest.write(&manifest_path(&a.manifest.manifest, &a.out))?;
    print!("{}", String::from_utf8_lossy(&text));
    Ok(())
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let mut manifest = RunManifest::new("render", a);
    manifest.input(&a.input);
    let grid = io::read_grid(&a.input)?;
    io::create_parent(&a.out)?;
    io::write_pgm_file(&a.out, &grid)?;
    manifest.output(&a.out);
    manifest.write(&manifest_path(&a.manifest.manifest, &a.out))?;
    let (h, w) = grid.dims();
    println!("rendered {h}x{w} grid to {}", a.out.display());
    Ok(())
}
