//! `bench`.

use std::time::Instant;

use serde::Serialize;

use ghostgrid::driver_models::{DriverState, HISTORY_LEN};
use ghostgrid::mapper::{observe_scene, MapperConfig};
use ghostgrid::pipeline::{fuse_modes, observe_drivers, PipelineConfig};
use ghostgrid::scene::{AgentSnapshot, Bounds, Scene};

use crate::args::BenchArgs;
use crate::error::{CliError, PathContext, Result};
use crate::io;
use crate::manifest::{manifest_path, RunManifest};

/// Most drivers the fixture can place in the ego's field of view.
pub const MAX_DRIVERS: usize = 10;

/// Real-time budget at 56 Hz, milliseconds.
const REFERENCE_MS: f64 = 1000.0 / 56.0;

/// Ego at the origin heading +x, `n` drivers side by side 20 m ahead, each
/// with a full constant-speed history.
pub fn fixture(n: usize) -> Scene {
    let snapshot = |id: i64, x: f64, y: f64, speed: f64| AgentSnapshot {
        agent_id: id,
        length: 4.4,
        width: 1.8,
        history: (0..HISTORY_LEN)
            .map(|t| {
                let back = (HISTORY_LEN - 1 - t) as f64 * 0.1 * speed;
                DriverState::new(x - back, y, 0.0, speed, 0.0, 0.0, 0.0)
            })
            .collect(),
    };
    let first = -2.5 * (n.max(1) - 1) as f64;
    let mut agents = vec![snapshot(0, 0.0, 0.0, 6.0)];
    agents.extend((0..n).map(|i| snapshot(i as i64 + 1, 20.0, first + 5.0 * i as f64, 4.0 + i as f64)));
    Scene {
        timestamp: 0.0,
        ego_id: 0,
        agents,
        world_bounds: Bounds {
            min_x: -50.0,
            min_y: -50.0,
            max_x: 100.0,
            max_y: 50.0,
        },
        labels: Vec::new(),
    }
}

#[derive(Debug, Serialize)]
struct Row {
    drivers: usize,
    visible: usize,
    mean_ms: f64,
    p95_ms: f64,
    max_ms: f64,
}

#[derive(Debug, Serialize)]
struct Report {
    iterations: usize,
    reference_ms: f64,
    rows: Vec<Row>,
    /// Least-squares milliseconds per additional driver.
    slope_ms_per_driver: Option<f64>,
    /// Mean time per driver at the largest count over that at the smallest.
    per_driver_ratio: Option<f64>,
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn percentile(sorted: &[f64], q: usize) -> f64 {
    sorted[(sorted.len() * q).div_ceil(100).max(1) - 1]
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    if a.iterations == 0 {
        return Err(CliError::usage("--iterations must be at least 1"));
    }
    if let Some(&n) = a.drivers.iter().find(|&&n| n > MAX_DRIVERS) {
        return Err(CliError::usage(format!("--drivers {n} exceeds the fixture maximum of {MAX_DRIVERS}")));
    }
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
    let mut manifest = RunManifest::new("bench", a);
    manifest.input(&a.model);
    let model = io::read_model(&a.model)?;
    let mut rows = Vec::with_capacity(a.drivers.len());
    for &n in &a.drivers {
        let scene = fixture(n);
        let step = || -> ghostgrid::Result<usize> {
            let view = observe_scene(&scene, &config.mapper)?;
            let drivers = observe_drivers(&scene, &view.visible, &model, &config.mapper.driver)?;
            let visible = drivers.len();
            std::hint::black_box(fuse_modes(view, drivers, &config)?);
            Ok(visible)
        };
        let visible = step()?;
        let mut times = Vec::with_capacity(a.iterations);
        for _ in 0..a.iterations {
            let t = Instant::now();
            step()?;
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
        times.sort_by(f64::total_cmp);
        let row = Row {
            drivers: n,
            visible,
            mean_ms: times.iter().sum::<f64>() / times.len() as f64,
            p95_ms: percentile(&times, 95),
            max_ms: *times.last().unwrap(),
        };
        println!(
            "{n:>3} drivers ({} visible): mean {:.2} ms, p95 {:.2} ms, max {:.2} ms",
            row.visible, row.mean_ms, row.p95_ms, row.max_ms
        );
        rows.push(row);
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.visible as f64, r.mean_ms)).collect();
    let slope_ms_per_driver = slope(&points);
    let per_driver = |r: &Row| (r.visible > 0).then(|| r.mean_ms / r.visible as f64);
    let per_driver_ratio = match (
        rows.iter().filter(|r| r.visible > 0).min_by_key(|r| r.visible),
        rows.iter().max_by_key(|r| r.visible),
    ) {
        (Some(lo), Some(hi)) if hi.visible > lo.visible => per_driver(hi).zip(per_driver(lo)).map(|(h, l)| h / l),
        _ => None,
    };
    if let Some(s) = slope_ms_per_driver {
        println!("slope {s:.3} ms per driver");
    }
    if let Some(r) = per_driver_ratio {
        println!("per-driver cost ratio, largest over smallest count: {r:.2}");
    }
    println!("reference {REFERENCE_MS:.1} ms per step (56 Hz)");
    let report = Report {
        iterations: a.iterations,
        reference_ms: REFERENCE_MS,
        rows,
        slope_ms_per_driver,
        per_driver_ratio,
    };
    if let Some(out) = &a.out {
        io::create_parent(out)?;
        std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n").at(out)?;
        manifest.output(out);
        manifest.write(&manifest_path(&a.manifest.manifest, out))?;
    } else if let Some(p) = &a.manifest.manifest {
        manifest.write(p)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let s = slope(&[(1.0, 3.0), (5.0, 11.0), (10.0, 21.0)]).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert_eq!(slope(&[(2.0, 1.0), (2.0, 5.0)]), None);
    }

    #[test]
    fn fixture_drivers_are_all_visible() {
        let config = MapperConfig::default();
        for n in [0, 1, 5, MAX_DRIVERS] {
            let scene = fixture(n);
            scene.validate().unwrap();
            let view = observe_scene(&scene, &config).unwrap();
            assert_eq!(view.visible.iter().filter(|&&id| id != 0).count(), n);
        }
    }
}
