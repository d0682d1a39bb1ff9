//! Ingestion of recorded tracks in the `TrackCSV` layout:
//! `track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AgentSnapshot, AgentTrack, Bounds, Scene};
use crate::driver_models::{DriverState, FRAME_DT, HISTORY_LEN};
use crate::error::{Error, Result};
use crate::ogm::normalize_angle;

const PERIOD_MS: f64 = 100.0;
/// Samples farther apart than this start a new contiguous segment.
const MAX_GAP_MS: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestConfig {
    /// Maximum number of ego vehicles sampled per recording.
    pub max_egos: usize,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            max_egos: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Row {
    t_ms: f64,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    psi: f64,
}

/// Parses a track file and resamples every agent to 10 Hz.
///
/// Tracks with gaps are split into contiguous segments, all sharing the
/// agent id. Pedestrians and bicycles are skipped.
pub fn parse_tracks<R: BufRead>(input: R) -> Result<Vec<AgentTrack>> {
    let mut raw: BTreeMap<i64, (f64, f64, Vec<Row>)> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if line_no == 1 && fields.first() == Some(&"track_id") {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        if fields.len() != 11 {
            return Err(bad(format!("expected 11 fields, got {}", fields.len())));
        }
        let num = |k: usize| -> Result<f64> {
            let v: f64 = fields[k]
                .parse()
                .map_err(|_| bad(format!("field {} is not a number: {:?}", k + 1, fields[k])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("field {} is not finite", k + 1)))
            }
        };
        let id: i64 = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad track_id {:?}", fields[0])))?;
        let frame: i64 = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad frame_id {:?}", fields[1])))?;
        let agent_type = fields[3].to_ascii_lowercase();
        if agent_type.contains("pedestrian") || agent_type.contains("bicycle") {
            continue;
        }
        let row = Row {
            t_ms: num(2)?,
            x: num(4)?,
            y: num(5)?,
            vx: num(6)?,
            vy: num(7)?,
            psi: num(8)?,
        };
        let (length, width) = (num(9)?, num(10)?);
        if !(length > 0.0 && width > 0.0) {
            return Err(bad("footprint must be positive".into()));
        }
        let entry = raw.entry(id).or_insert((length, width, Vec::new()));
        if let Some(prev) = entry.2.last() {
            if row.t_ms <= prev.t_ms {
                return Err(Error::NonMonotoneTimestamps { agent: id, frame });
            }
        }
        entry.2.push(row);
    }

    let mut tracks = Vec::new();
    for (id, (length, width, rows)) in raw {
        let mut start = 0;
        for i in 1..=rows.len() {
            if i == rows.len() || rows[i].t_ms - rows[i - 1].t_ms > MAX_GAP_MS {
                if let Some((t0, states)) = resample(&rows[start..i]) {
                    tracks.push(AgentTrack::new(id, length, width, t0, states)?);
                }
                start = i;
            }
        }
    }
    Ok(tracks)
}

/// Linear interpolation onto the 100 ms lattice; accelerations by finite
/// differences of the resampled velocities.
fn resample(rows: &[Row]) -> Option<(f64, Vec<DriverState>)> {
    let first = (rows.first()?.t_ms / PERIOD_MS).ceil() as i64;
    let last = (rows.last()?.t_ms / PERIOD_MS + 1e-9).floor() as i64;
    if last < first {
        return None;
    }
    let mut j = 0;
    let mut states: Vec<DriverState> = (first..=last)
        .map(|k| {
            let t = k as f64 * PERIOD_MS;
            while j + 1 < rows.len() && rows[j + 1].t_ms <= t {
                j += 1;
            }
            let a = rows[j];
            let (x, y, vx, vy, psi) = if j + 1 < rows.len() && a.t_ms < t {
                let b = rows[j + 1];
                let f = (t - a.t_ms) / (b.t_ms - a.t_ms);
                let lerp = |p: f64, q: f64| p + f * (q - p);
                (
                    lerp(a.x, b.x),
                    lerp(a.y, b.y),
                    lerp(a.vx, b.vx),
                    lerp(a.vy, b.vy),
                    a.psi + f * normalize_angle(b.psi - a.psi),
                )
            } else {
                (a.x, a.y, a.vx, a.vy, a.psi)
            };
            DriverState::new(x, y, psi, vx, vy, 0.0, 0.0)
        })
        .collect();
    let n = states.len();
    if n > 1 {
        let v: Vec<(f64, f64)> = states.iter().map(|s| (s.vx, s.vy)).collect();
        for (i, s) in states.iter_mut().enumerate() {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            let dt = (hi - lo) as f64 * FRAME_DT;
            s.ax = (v[hi].0 - v[lo].0) / dt;
            s.ay = (v[hi].1 - v[lo].1) / dt;
        }
    }
    Some((first as f64 * FRAME_DT, states))
}

fn tick(t: f64) -> i64 {
    (t / FRAME_DT).round() as i64
}

/// Builds one scene per (ego, time step) at which the ego has a full 1 s
/// history. Egos are sampled uniformly without replacement.
pub fn tracks_to_scenes(tracks: &[AgentTrack], config: &IngestConfig) -> Vec<Scene> {
    if tracks.is_empty() {
        return Vec::new();
    }
    let ids: BTreeSet<i64> = tracks.iter().map(|t| t.agent_id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut egos: Vec<i64> = if ids.len() <= config.max_egos {
        ids.iter().copied().collect()
    } else {
        ids.iter().copied().choose_multiple(&mut rng, config.max_egos)
    };
    egos.sort_unstable();

    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in tracks.iter().flat_map(|t| &t.states) {
        min_x = min_x.min(s.x);
        min_y = min_y.min(s.y);
        max_x = max_x.max(s.x);
        max_y = max_y.max(s.y);
    }
    let bounds = Bounds {
        min_x,
        min_y,
        max_x,
        max_y,
    };

    let snapshot_at = |t: &AgentTrack, k: i64| -> Option<AgentSnapshot> {
        let i = k - tick(t.start_time);
        if i < 0 || i as usize >= t.states.len() {
            return None;
        }
        let i = i as usize;
        let start = (i + 1).saturating_sub(HISTORY_LEN);
        Some(AgentSnapshot {
            agent_id: t.agent_id,
            length: t.footprint_length,
            width: t.footprint_width,
            history: t.states[start..=i].to_vec(),
        })
    };

    let mut scenes = Vec::new();
    for &ego in &egos {
        for ego_track in tracks.iter().filter(|t| t.agent_id == ego) {
            let k0 = tick(ego_track.start_time);
            for i in HISTORY_LEN - 1..ego_track.states.len() {
                let k = k0 + i as i64;
                let agents: Vec<AgentSnapshot> =
                    tracks.iter().filter_map(|t| snapshot_at(t, k)).collect();
                scenes.push(Scene {
                    timestamp: k as f64 * FRAME_DT,
                    ego_id: ego,
                    agents,
                    world_bounds: bounds,
                    labels: Vec::new(),
                });
            }
        }
    }
    scenes
}

/// Reads a track file and converts it to scenes.
pub fn ingest_tracks(path: &Path, config: &IngestConfig) -> Result<Vec<Scene>> {
    let file = std::fs::File::open(path)?;
    let tracks = parse_tracks(std::io::BufReader::new(file))?;
    Ok(tracks_to_scenes(&tracks, config))
}
