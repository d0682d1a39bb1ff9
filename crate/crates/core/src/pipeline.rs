//! Per-scene inference: observe, run the driver sensor on every visible
//! driver, search the most likely mode assignments and fuse each one.

use serde::{Deserialize, Serialize};

use crate::driver_models::DriverSensor;
use crate::error::Result;
use crate::fusion::{top_k_assignments, FusedGrid, FusionConfig, FusionPlan, ModeAssignment, ObservedDriver};
use crate::mapper::{observe_scene, EgoView, GridSpec, MapperConfig};
use crate::metrics::{EvalMask, MetricAccumulator, MetricReport};
use crate::scene::{Scene, TrainingPair};
use crate::{Grid, Report};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mapper: MapperConfig,
    pub fusion: FusionConfig,
    /// Number of joint mode assignments to fuse.
    pub top_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mapper: MapperConfig::default(),
            fusion: FusionConfig::default(),
            top_k: 3,
        }
    }
}

/// A fused ego grid for one joint mode assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedMode {
    pub assignment: ModeAssignment<f64>,
    pub fused: FusedGrid<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInference {
    pub view: EgoView,
    pub drivers: Vec<ObservedDriver<f64>>,
    /// Most likely first.
    pub modes: Vec<FusedMode>,
}

impl SceneInference {
    pub fn most_likely(&self) -> &Grid {
        &self.modes[0].fused.grid
    }

    /// Occluded ego cells that the most likely fusion classifies as known.
    pub fn evaluation_mask(&self) -> Result<EvalMask> {
        EvalMask::occluded(&self.view.observed, &[self.most_likely()])
    }
}

/// Sensor outputs of every visible non-ego agent with a full history, each
/// placed at the driver-view pose of its current state.
pub fn observe_drivers<S: DriverSensor<f64> + ?Sized>(
    scene: &Scene,
    visible: &[i64],
    sensor: &S,
    spec: &GridSpec,
) -> Result<Vec<ObservedDriver<f64>>> {
    let mut out = Vec::new();
    for &id in visible {
        if id == scene.ego_id {
            continue;
        }
        let Some(trajectory) = scene.agent(id).and_then(|a| a.trajectory()) else {
            continue;
        };
        let s = trajectory.last();
        let pose = spec.pose_behind(s.x, s.y, s.psi);
        let output = sensor.infer(&trajectory)?;
        out.push(ObservedDriver {
            agent_id: id,
            pose,
            output: output.placed(pose),
        });
    }
    Ok(out)
}

/// Fuses the `top_k` most likely joint modes of the visible drivers.
pub fn fuse_modes(view: EgoView, drivers: Vec<ObservedDriver<f64>>, config: &PipelineConfig) -> Result<SceneInference> {
    let priors: Vec<&[f64]> = drivers.iter().map(|d| d.output.prior()).collect();
    let assignments = top_k_assignments(&priors, config.top_k)?;
    let plan = FusionPlan::new(&view.observed, &drivers, config.fusion)?;
    let modes = assignments
        .into_iter()
        .map(|a| {
            let fused = plan.fuse(&a.classes)?;
            Ok(FusedMode { assignment: a, fused })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneInference { view, drivers, modes })
}

/// Full step for one scene.
pub fn infer_scene<S: DriverSensor<f64> + ?Sized>(scene: &Scene, sensor: &S, config: &PipelineConfig) -> Result<SceneInference> {
    let view = observe_scene(scene, &config.mapper)?;
    let drivers = observe_drivers(scene, &view.visible, sensor, &config.mapper.driver)?;
    fuse_modes(view, drivers, config)
}

/// Adds a scene's fused grids to an accumulator, masked to the occluded
/// cells the fusion made known.
pub fn accumulate_scene(acc: &mut MetricAccumulator<f64>, inference: &SceneInference) -> Result<()> {
    let mask = inference.evaluation_mask()?;
    let candidates: Vec<(f64, &Grid)> = inference
        .modes
        .iter()
        .map(|m| (m.assignment.likelihood, &m.fused.grid))
        .collect();
    acc.add(inference.most_likely(), &candidates, &inference.view.ground_truth, &mask)
}

/// Driver-sensor metrics over training pairs on the full driver grid: the
/// most likely decoded grid is the prediction; all decoded grids are top-3
/// candidates.
pub fn evaluate_sensor<'a, S, I>(sensor: &S, pairs: I) -> Result<Report>
where
    S: DriverSensor<f64> + ?Sized,
    I: IntoIterator<Item = &'a TrainingPair>,
{
    let mut acc = MetricAccumulator::new();
    for pair in pairs {
        let out = sensor.infer(&pair.trajectory)?;
        let (h, w) = pair.grid.dims();
        let mask = EvalMask::full(h, w);
        let best = out.ranked_classes()[0];
        let candidates: Vec<(f64, &Grid)> = out
            .prior()
            .iter()
            .zip(out.decoded_grids())
            .map(|(&p, g)| (p, g))
            .collect();
        let gt = pair.grid.with_pose(*out.grid(best).pose());
        acc.add(out.grid(best), &candidates, &gt, &mask)?;
    }
    Ok(acc.report())
}

/// Pools scene-level metrics.
pub fn evaluate_scenes<'a, S, I>(sensor: &S, scenes: I, config: &PipelineConfig) -> Result<MetricReport<f64>>
where
    S: DriverSensor<f64> + ?Sized,
    I: IntoIterator<Item = &'a Scene>,
{
    let mut acc = MetricAccumulator::new();
    for scene in scenes {
        accumulate_scene(&mut acc, &infer_scene(scene, sensor, config)?)?;
    }
    Ok(acc.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver_models::{FeatureFrame, KMeansConfig, KMeansSensor, Trajectory};
    use crate::ogm::CellClass;
    use crate::scene::{extract_training_pairs, generate_scenarios, GeneratorConfig, PairSelection};

    fn setup() -> (Vec<Scene>, KMeansSensor<f64>, Vec<TrainingPair>) {
        let scenes: Vec<Scene> = generate_scenarios(&GeneratorConfig::default(), 3).unwrap().collect();
        let spec = MapperConfig::default().driver;
        let pairs = extract_training_pairs(&scenes, PairSelection::ScriptedOnly, &spec, None);
        let trajs: Vec<&Trajectory> = pairs.iter().map(|p| &p.trajectory).collect();
        let grids: Vec<Grid> = pairs.iter().map(|p| p.grid.clone()).collect();
        let cfg = KMeansConfig { k: 4, ..Default::default() };
        let sensor = KMeansSensor::fit(&trajs, &grids, &cfg, FeatureFrame::DriverRelative).unwrap();
        (scenes, sensor, pairs)
    }

    #[test]
    fn scene_inference_respects_observations() {
        let (scenes, sensor, _) = setup();
        let config = PipelineConfig::default();
        let mut fused_any = false;
        for scene in scenes.iter().step_by(29).take(40) {
            let inf = infer_scene(scene, &sensor, &config).unwrap();
            assert!(!inf.modes.is_empty() && inf.modes.len() <= 3);
            for w in inf.modes.windows(2) {
                assert!(w[0].assignment.likelihood >= w[1].assignment.likelihood);
            }
            let obs = inf.view.observed.cells();
            for m in &inf.modes {
                for (a, b) in obs.iter().zip(m.fused.grid.cells()) {
                    if *a != 0.5 {
                        assert_eq!(a.to_bits(), b.to_bits());
                    }
                }
            }
            fused_any |= inf.modes[0].fused.updated > 0;
            assert!(inf.drivers.iter().all(|d| d.agent_id != scene.ego_id));
            let mask = inf.evaluation_mask().unwrap();
            for c in mask.indices() {
                let flat = inf.view.observed.flat_index(c);
                assert_eq!(obs[flat], 0.5);
                assert_ne!(crate::classify_cell(inf.most_likely().cells()[flat]).unwrap(), CellClass::Unknown);
            }
        }
        assert!(fused_any);
    }

    #[test]
    fn sensor_evaluation_is_bounded() {
        let (scenes, sensor, pairs) = setup();
        let r = evaluate_sensor(&sensor, &pairs).unwrap();
        assert_eq!(r.grids, pairs.len());
        let acc = r.accuracy.overall.unwrap().value;
        let top3 = r.top3_accuracy.overall.unwrap().value;
        assert!((0.0..=1.0).contains(&acc) && top3 >= acc - 1e-12);
        let s = evaluate_scenes(&sensor, scenes.iter().step_by(50), &PipelineConfig::default()).unwrap();
        assert!(s.grids > 0);
    }
}
