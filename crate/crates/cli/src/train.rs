//! `train`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ghostgrid::cvae::{CvaeSensor, LossBreakdown, TrainConfig};
use ghostgrid::driver_models::{FeatureFrame, GmmConfig, GmmSensor, KMeansConfig, KMeansSensor, Trajectory};
use ghostgrid::mapper::MapperConfig;
use ghostgrid::modelio::{save_model, SensorModel};
use ghostgrid::scene::{extract_training_pairs, DatasetSplit, PairSelection, Split, SplitFractions, TrainingPair};
use ghostgrid::{Error, Grid};

use crate::args::{Frame, ModelKind, Selection, TrainArgs};
use crate::error::{CliError, PathContext, Result};
use crate::io;
use crate::manifest::{manifest_path, RunManifest};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cvae_config(a: &TrainArgs) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        alpha: a.alpha.unwrap_or(d.alpha),
        beta_max: a.beta_max.unwrap_or(d.beta_max),
        crossover: a.crossover.unwrap_or(d.crossover),
        ramp: a.ramp.unwrap_or(d.ramp),
        kl_clamp: a.kl_clamp.unwrap_or(d.kl_clamp),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        epochs: a.epochs.unwrap_or(d.epochs),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        seed: a.seed,
        ..d
    }
}

pub fn loss_trace_csv(trace: &[LossBreakdown<f64>]) -> String {
    let mut s = String::from("iteration,reconstruction,kl_raw,kl_clamped,mutual_information,beta,total\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{}",
            l.reconstruction, l.kl_raw, l.kl_clamped, l.mutual_information, l.beta, l.total
        );
    }
    s
}

fn series_csv(name: &str, values: &[f64]) -> String {
    let mut s = format!("iteration,{name}\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    s
}

#[derive(Serialize)]
struct TrainSnapshot<'a> {
    args: &'a TrainArgs,
    #[serde(skip_serializing_if = "Option::is_none")]
    cvae: Option<TrainConfig>,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cvae_cfg = (a.model == ModelKind::Cvae).then(|| cvae_config(a));
    let mut manifest = RunManifest::new("train", &TrainSnapshot { args: a, cvae: cvae_cfg });
    manifest.seed("model", a.seed).input(&a.scenes);
    let scenes = io::read_scenes(&a.scenes)?;

    let split = match &a.split {
        Some(p) => {
            manifest.input(p);
            io::read_split(p)?
        }
        None => {
            manifest.seed("split", a.split_seed);
            DatasetSplit::new(scenes.iter().map(|s| s.ego_id), SplitFractions::default(), a.split_seed)?
        }
    };
    let selection = match a.selection {
        Selection::All => PairSelection::AllDrivers,
        Selection::Scripted => PairSelection::ScriptedOnly,
    };
    let frame = match a.frame {
        Frame::Driver => FeatureFrame::DriverRelative,
        Frame::World => FeatureFrame::World,
    };
    let spec = MapperConfig::default().driver;
    let pairs = extract_training_pairs(&scenes, selection, &spec, Some(&split));
    let train: Vec<&TrainingPair> = pairs.iter().filter(|p| p.split == Some(Split::Train)).collect();
    if train.is_empty() {
        return Err(CliError::data(format!(
            "{}: no training pairs in the train split",
            a.scenes.display()
        )));
    }
    let trajs: Vec<&Trajectory> = train.iter().map(|p| &p.trajectory).collect();
    let grids: Vec<Grid> = train.iter().map(|p| p.grid.clone()).collect();

    io::create_parent(&a.out)?;
    let trace_path = a.trace.clone().unwrap_or_else(|| with_suffix(&a.out, ".trace.csv"));
    let t = std::time::Instant::now();
    let (model, trace) = match a.model {
        ModelKind::Kmeans => {
            let d = KMeansConfig::default();
            let cfg = KMeansConfig {
                k: a.k,
                seed: a.seed,
                max_iter: a.max_iter.unwrap_or(d.max_iter),
            };
            let s = KMeansSensor::fit(&trajs, &grids, &cfg, frame)?;
            let trace = s.parts().map(|p| p.2.objective_trace().to_vec()).unwrap_or_default();
            (SensorModel::KMeans(s), series_csv("objective", &trace))
        }
        ModelKind::Gmm => {
            let d = GmmConfig::default();
            let cfg = GmmConfig {
                k: a.k,
                seed: a.seed,
                max_iter: a.max_iter.unwrap_or(d.max_iter),
                ..d
            };
            let s = GmmSensor::fit(&trajs, &grids, &cfg, frame)?;
            let trace = s.parts().map(|p| p.2.ll_trace().to_vec()).unwrap_or_default();
            (SensorModel::Gmm(s), series_csv("log_likelihood", &trace))
        }
        ModelKind::Cvae => {
            let cfg = cvae_cfg.expect("set for cvae");
            match CvaeSensor::fit(&trajs, &grids, a.k, &cfg, frame) {
                Ok((s, trace)) => (SensorModel::Cvae(s), loss_trace_csv(&trace)),
                Err(Error::Diverged { iteration, trace }) => {
                    std::fs::write(&trace_path, series_csv("total", &trace)).at(&trace_path)?;
                    return Err(CliError::from(Error::Diverged { iteration, trace })
                        .context(format!("partial trace in {}", trace_path.display())));
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    manifest.time("fit", t.elapsed());
    save_model(&model, &a.out).at(&a.out)?;
    std::fs::write(&trace_path, trace).at(&trace_path)?;
    manifest.output(&a.out).output(&trace_path);
    if a.split.is_none() {
        let split_path = with_suffix(&a.out, ".split.json");
        std::fs::write(&split_path, serde_json::to_string_pretty(&split)? + "\n").at(&split_path)?;
        manifest.output(&split_path);
    }
    manifest.write(&manifest_path(&a.manifest.manifest, &a.out))?;
    println!(
        "trained {} with K = {} on {} pairs in {:.1}s; model {}",
        match a.model {
            ModelKind::Kmeans => "kmeans",
            ModelKind::Gmm => "gmm",
            ModelKind::Cvae => "cvae",
        },
        a.k,
        train.len(),
        t.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}
