//! Scene streams, grid files and split selection.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ghostgrid::modelio::{load_model, SensorModel};
use ghostgrid::ogm::{read_ogm_csv, write_ogm_csv, write_pgm};
use ghostgrid::scene::{DatasetSplit, Scene, SplitFractions};
use ghostgrid::Grid;

use crate::args::{GridFormat, SplitArgs, Subset};
use crate::error::{CliError, PathContext, Result};

/// Reads a scene stream: one JSON scene per line.
pub fn read_scenes(path: &Path) -> Result<Vec<Scene>> {
    let file = File::open(path).at(path)?;
    let mut scenes = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        let scene: Scene = serde_json::from_str(&line)
            .map_err(|e| CliError::data(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        scene
            .validate()
            .map_err(|e| CliError::from(e).context(format!("{}: line {}", path.display(), i + 1)))?;
        scenes.push(scene);
    }
    Ok(scenes)
}

pub fn write_scenes<'a, I: IntoIterator<Item = &'a Scene>>(path: &Path, scenes: I) -> Result<usize> {
    create_parent(path)?;
    let mut out = BufWriter::new(File::create(path).at(path)?);
    let mut n = 0;
    for s in scenes {
        serde_json::to_writer(&mut out, s).at(path)?;
        out.write_all(b"\n").at(path)?;
        n += 1;
    }
    out.flush().at(path)?;
    Ok(n)
}

pub fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).at(p),
        _ => Ok(()),
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).at(path)
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let file = File::open(path).at(path)?;
    read_ogm_csv(BufReader::new(file)).at(path)
}

/// Writes `<stem>.csv` and/or `<stem>.pgm` in `dir`; returns the paths.
pub fn write_grid(dir: &Path, stem: &str, grid: &Grid, format: GridFormat) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if format.csv() {
        let p = dir.join(format!("{stem}.csv"));
        let mut out = BufWriter::new(File::create(&p).at(&p)?);
        write_ogm_csv(grid, &mut out).at(&p)?;
        out.flush().at(&p)?;
        written.push(p);
    }
    if format.pgm() {
        let p = dir.join(format!("{stem}.pgm"));
        write_pgm_file(&p, grid)?;
        written.push(p);
    }
    Ok(written)
}

pub fn write_pgm_file(path: &Path, grid: &Grid) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).at(path)?);
    write_pgm(grid, &mut out).at(path)?;
    out.flush().at(path)
}

pub fn read_model(path: &Path) -> Result<SensorModel<f64>> {
    load_model(path).at(path)
}

pub fn read_split(path: &Path) -> Result<DatasetSplit> {
    let text = std::fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).at(path)
}

/// Indices of the scenes selected by the split arguments, in stream order.
pub fn select_scenes(scenes: &[Scene], args: &SplitArgs) -> Result<Vec<usize>> {
    let subset = args.subset.unwrap_or(if args.split.is_some() || args.split_seed.is_some() {
        Subset::Test
    } else {
        Subset::All
    });
    let Some(wanted) = subset.split() else {
        return Ok((0..scenes.len()).collect());
    };
    let split = match (&args.split, args.split_seed) {
        (Some(p), _) => read_split(p)?,
        (None, Some(seed)) => DatasetSplit::new(scenes.iter().map(|s| s.ego_id), SplitFractions::default(), seed)?,
        (None, None) => return Err(CliError::usage("--subset needs --split or --split-seed")),
    };
    Ok((0..scenes.len())
        .filter(|&i| split.split_of(scenes[i].ego_id) == Some(wanted))
        .collect())
}

/// Applies `--limit`.
pub fn limited(mut idx: Vec<usize>, limit: Option<usize>) -> Vec<usize> {
    if let Some(n) = limit {
        idx.truncate(n);
    }
    idx
}
