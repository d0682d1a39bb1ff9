//! `infer` and `fuse`.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};

use rayon::prelude::*;
use serde::Serialize;

use ghostgrid::driver_models::DriverSensor;
use ghostgrid::fusion::ObservedDriver;
use ghostgrid::mapper::{observe_scene, MapperConfig};
use ghostgrid::pipeline::{infer_scene, observe_drivers, PipelineConfig, SceneInference};

use crate::args::{FuseArgs, InferArgs};
use crate::data::dir_primary;
use crate::error::{CliError, PathContext, Result};
use crate::io;
use crate::manifest::{manifest_path, RunManifest};

const CHUNK: usize = 256;

#[derive(Serialize)]
struct DriverRecord<'a> {
    scene: usize,
    ego_id: i64,
    timestamp: f64,
    agent_id: i64,
    prior: &'a [f64],
    /// Classes by decreasing prior.
    ranked: Vec<usize>,
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let mut manifest = RunManifest::new("infer", a);
    manifest.input(&a.model).input(&a.scenes);
    let model = io::read_model(&a.model)?;
    let scenes = io::read_scenes(&a.scenes)?;
    let idx = io::limited(io::select_scenes(&scenes, &a.split)?, a.limit);
    let mapper = MapperConfig::default();
    io::create_parent(&a.out)?;
    let mut out = BufWriter::new(std::fs::File::create(&a.out).at(&a.out)?);
    let mut example = None;
    let mut drivers_seen = 0;
    let t = std::time::Instant::now();
    for chunk in idx.chunks(CHUNK) {
        let results: Vec<Vec<ObservedDriver<f64>>> = chunk
            .par_iter()
            .map(|&i| {
                let view = observe_scene(&scenes[i], &mapper)?;
                observe_drivers(&scenes[i], &view.visible, &model, &mapper.driver)
            })
            .collect::<ghostgrid::Result<_>>()?;
        for (&i, drivers) in chunk.iter().zip(&results) {
            let s = &scenes[i];
            for d in drivers {
                let rec = DriverRecord {
                    scene: i,
                    ego_id: s.ego_id,
                    timestamp: s.timestamp,
                    agent_id: d.agent_id,
                    prior: d.output.prior(),
                    ranked: d.output.ranked_classes(),
                };
                serde_json::to_writer(&mut out, &rec).at(&a.out)?;
                out.write_all(b"\n").at(&a.out)?;
                drivers_seen += 1;
                if example.is_none() {
                    example = s.agent(d.agent_id).and_then(|ag| ag.trajectory());
                }
            }
        }
    }
    out.flush().at(&a.out)?;
    manifest.time("infer", t.elapsed()).output(&a.out);
    if let Some(dir) = &a.grid_dir {
        // Decodings depend only on the class, so any trajectory yields them.
        let traj = example.ok_or_else(|| CliError::data("no visible drivers to decode class grids for"))?;
        let output = model.infer(&traj)?;
        io::create_dir(dir)?;
        for z in 0..output.k() {
            for p in io::write_grid(dir, &format!("class{z:02}"), output.grid(z), a.format)? {
                manifest.output(&p);
            }
        }
    }
    manifest.write(&manifest_path(&a.manifest.manifest, &a.out))?;
    println!("inferred {drivers_seen} drivers over {} scenes into {}", idx.len(), a.out.display());
    Ok(())
}

fn assignment_label(inf: &SceneInference, classes: &[usize]) -> String {
    inf.drivers
        .iter()
        .zip(classes)
        .map(|(d, z)| format!("{}:{z}", d.agent_id))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn fuse(a: &FuseArgs) -> Result<()> {
    let mut manifest = RunManifest::new("fuse", a);
    manifest.input(&a.model).input(&a.scenes);
    let model = io::read_model(&a.model)?;
    let scenes = io::read_scenes(&a.scenes)?;
    let idx = match a.scene {
        Some(i) if i < scenes.len() => vec![i],
        Some(i) => {
            return Err(CliError::usage(format!(
                "--scene {i} out of range for {} scenes",
                scenes.len()
            )))
        }
        None => io::limited(io::select_scenes(&scenes, &a.split)?, a.limit),
    };
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
    io::create_dir(&a.out_dir)?;
    let mut listing = String::from("scene,ego_id,timestamp,rank,likelihood,updated_cells,conflicts,assignment\n");
    let t = std::time::Instant::now();
    for chunk in idx.chunks(CHUNK) {
        let results: Vec<SceneInference> = chunk
            .par_iter()
            .map(|&i| infer_scene(&scenes[i], &model, &config))
            .collect::<ghostgrid::Result<_>>()?;
        for (&i, inf) in chunk.iter().zip(&results) {
            let s = &scenes[i];
            for p in io::write_grid(&a.out_dir, &format!("scene{i:06}_observed"), &inf.view.observed, a.format)? {
                manifest.output(&p);
            }
            let mut sidecar = String::from("rank,likelihood,updated_cells,conflicts,assignment\n");
            for (r, m) in inf.modes.iter().enumerate() {
                for p in io::write_grid(&a.out_dir, &format!("scene{i:06}_mode{r}"), &m.fused.grid, a.format)? {
                    manifest.output(&p);
                }
                let label = assignment_label(inf, &m.assignment.classes);
                let row = format!(
                    "{r},{:e},{},{},{label}",
                    m.assignment.likelihood,
                    m.fused.updated,
                    m.fused.conflicts.len()
                );
                let _ = writeln!(sidecar, "{row}");
                let _ = writeln!(listing, "{i},{},{:.1},{row}", s.ego_id, s.timestamp);
            }
            let p = a.out_dir.join(format!("scene{i:06}_likelihoods.csv"));
            std::fs::write(&p, sidecar).at(&p)?;
            manifest.output(&p);
        }
    }
    let listing_path = a.out_dir.join("likelihoods.csv");
    std::fs::write(&listing_path, listing).at(&listing_path)?;
    manifest.time("fuse", t.elapsed()).output(&listing_path);
    manifest.write(&manifest_path(&a.manifest.manifest, &dir_primary(&a.out_dir)))?;
    println!("fused {} scenes into {}", idx.len(), a.out_dir.display());
    Ok(())
}
