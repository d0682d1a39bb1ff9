//! `gen`, `ingest` and `map`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use ghostgrid::mapper::{observe_scene, EgoView, MapperConfig};
use ghostgrid::scene::{generate_scenarios, ingest_tracks, GeneratorConfig, IngestConfig, Scene};

use crate::args::{GenArgs, IngestArgs, MapArgs};
use crate::error::{PathContext, Result};
use crate::io;
use crate::manifest::{manifest_path, RunManifest};

/// Scenes mapped per parallel batch; bounds memory on long streams.
const MAP_CHUNK: usize = 256;

fn generator_config(a: &GenArgs) -> GeneratorConfig {
    let mut c = GeneratorConfig::default();
    if let Some(n) = a.scenarios {
        let base = n / 5;
        c.stopped_for_crossing = base;
        c.decelerating = base;
        c.accelerating = base;
        c.constant_speed = n - 3 * base;
    }
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut c.stopped_for_crossing, a.stopped);
    set(&mut c.constant_speed, a.constant);
    set(&mut c.decelerating, a.decelerating);
    set(&mut c.accelerating, a.accelerating);
    set(&mut c.frames, a.frames);
    if let Some(v) = a.traffic_fraction {
        c.traffic_fraction = v;
    }
    if let Some(v) = a.decelerating_occupied {
        c.decelerating_occupied_probability = v;
    }
    if let Some(v) = a.jitter {
        c.jitter_sigma = v;
    }
    c
}

#[derive(Serialize)]
struct GenSnapshot<'a> {
    args: &'a GenArgs,
    generator: &'a GeneratorConfig,
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let config = generator_config(a);
    let mut manifest = RunManifest::new("gen", &GenSnapshot { args: a, generator: &config });
    manifest.seed("generator", a.seed);
    let t = std::time::Instant::now();
    let scenes = generate_scenarios(&config, a.seed)?;
    let n = io::write_scenes(&a.out, &scenes.collect::<Vec<Scene>>())?;
    manifest.time("generate", t.elapsed()).output(&a.out);
    manifest.write(&manifest_path(&a.manifest.manifest, &a.out))?;
    println!(
        "wrote {n} scenes from {} scenarios to {}",
        config.scenario_count(),
        a.out.display()
    );
    Ok(())
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let mut manifest = RunManifest::new("ingest", a);
    manifest.seed("ego-sampling", a.seed).input(&a.input);
    let config = IngestConfig {
        max_egos: a.max_egos,
        seed: a.seed,
    };
    let t = std::time::Instant::now();
    let scenes = ingest_tracks(&a.input, &config).at(&a.input)?;
    let n = io::write_scenes(&a.out, &scenes)?;
    let egos: std::collections::BTreeSet<i64> = scenes.iter().map(|s| s.ego_id).collect();
    manifest.time("ingest", t.elapsed()).output(&a.out);
    manifest.write(&manifest_path(&a.manifest.manifest, &a.out))?;
    println!("wrote {n} scenes for {} ego vehicles to {}", egos.len(), a.out.display());
    Ok(())
}

pub fn map(a: &MapArgs) -> Result<()> {
    let mut manifest = RunManifest::new("map", a);
    manifest.input(&a.scenes);
    let scenes = io::read_scenes(&a.scenes)?;
    let idx = io::limited((0..scenes.len()).collect(), a.limit);
    io::create_dir(&a.out_dir)?;
    let config = MapperConfig::default();
    let t = std::time::Instant::now();
    let mut index = String::from("scene,ego_id,timestamp,visible,occluded_cells\n");
    let mut written = Vec::new();
    for chunk in idx.chunks(MAP_CHUNK) {
        let views: Vec<EgoView> = chunk
            .par_iter()
            .map(|&i| observe_scene(&scenes[i], &config))
            .collect::<ghostgrid::Result<_>>()?;
        for (&i, view) in chunk.iter().zip(&views) {
            let s = &scenes[i];
            written.extend(io::write_grid(&a.out_dir, &format!("scene{i:06}_gt"), &view.ground_truth, a.format)?);
            written.extend(io::write_grid(&a.out_dir, &format!("scene{i:06}_observed"), &view.observed, a.format)?);
            let occluded = view.observed.cells().iter().filter(|&&p| p == 0.5).count();
            let _ = writeln!(index, "{i},{},{:.1},{},{occluded}", s.ego_id, s.timestamp, view.visible.len());
        }
    }
    let index_path = a.out_dir.join("index.csv");
    std::fs::write(&index_path, index).at(&index_path)?;
    manifest.time("map", t.elapsed()).output(&index_path);
    for p in &written {
        manifest.output(p);
    }
    manifest.write(&manifest_path(&a.manifest.manifest, &dir_primary(&a.out_dir)))?;
    println!("mapped {} scenes into {}", idx.len(), a.out_dir.display());
    Ok(())
}

/// Primary output of a directory-producing command.
pub fn dir_primary(dir: &Path) -> std::path::PathBuf {
    dir.join("run")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn args() -> GenArgs {
        GenArgs {
            seed: 0,
            scenarios: None,
            stopped: None,
            constant: None,
            decelerating: None,
            accelerating: None,
            frames: None,
            traffic_fraction: None,
            decelerating_occupied: None,
            jitter: None,
            out: PathBuf::from("x"),
            manifest: crate::args::ManifestArgs { manifest: None },
        }
    }

    #[test]
    fn scenario_total_is_split_by_mix() {
        let c = generator_config(&GenArgs {
            scenarios: Some(101),
            ..args()
        });
        assert_eq!(c.scenario_count(), 101);
        assert_eq!((c.stopped_for_crossing, c.constant_speed, c.decelerating, c.accelerating), (20, 41, 20, 20));
        let c = generator_config(&GenArgs {
            scenarios: Some(10),
            accelerating: Some(0),
            ..args()
        });
        assert_eq!(c.scenario_count(), 8);
        assert_eq!(generator_config(&args()), GeneratorConfig::default());
    }
}
