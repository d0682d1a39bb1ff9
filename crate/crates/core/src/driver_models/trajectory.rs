use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ogm::normalize_angle;

/// Number of states in a driver trajectory (1 s at 10 Hz).
pub const HISTORY_LEN: usize = 10;
/// Sampling period of all tracks, seconds.
pub const FRAME_DT: f64 = 0.1;
/// Kinematic features per state.
pub const STATE_DIM: usize = 7;
/// Length of a flattened trajectory feature vector.
pub const FEATURE_DIM: usize = HISTORY_LEN * STATE_DIM;

/// Kinematic state of a driver: position, heading, velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub ax: f64,
    pub ay: f64,
}

impl DriverState {
    pub fn new(x: f64, y: f64, psi: f64, vx: f64, vy: f64, ax: f64, ay: f64) -> Self {
        Self {
            x,
            y,
            psi: normalize_angle(psi),
            vx,
            vy,
            ax,
            ay,
        }
    }

    pub fn at_rest(x: f64, y: f64, psi: f64) -> Self {
        Self::new(x, y, psi, 0.0, 0.0, 0.0, 0.0)
    }

    pub fn as_array(&self) -> [f64; STATE_DIM] {
        [self.x, self.y, self.psi, self.vx, self.vy, self.ax, self.ay]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// Frame in which trajectory features are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeatureFrame {
    /// Relative to the final state, rotated so the final heading is zero.
    #[default]
    DriverRelative,
    /// Raw world coordinates.
    World,
}

/// Exactly [`HISTORY_LEN`] consecutive driver states, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<DriverState>,
}

impl Trajectory {
    pub fn new(states: Vec<DriverState>) -> Result<Self> {
        if states.len() != HISTORY_LEN {
            return Err(Error::Config(format!(
                "trajectory needs {HISTORY_LEN} states, got {}",
                states.len()
            )));
        }
        if let Some(s) = states.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("trajectory state {s:?}")));
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[DriverState] {
        &self.states
    }

    pub fn last(&self) -> &DriverState {
        &self.states[HISTORY_LEN - 1]
    }

    /// Flattened `HISTORY_LEN x STATE_DIM` feature vector.
    pub fn features(&self, frame: FeatureFrame) -> Vec<f64> {
        match frame {
            FeatureFrame::World => self.states.iter().flat_map(|s| s.as_array()).collect(),
            FeatureFrame::DriverRelative => {
                let anchor = *self.last();
                let (s, c) = anchor.psi.sin_cos();
                // Rotation by -psi of the anchor.
                let rot = |x: f64, y: f64| (c * x + s * y, -s * x + c * y);
                self.states
                    .iter()
                    .flat_map(|st| {
                        let (px, py) = rot(st.x - anchor.x, st.y - anchor.y);
                        let (vx, vy) = rot(st.vx, st.vy);
                        let (ax, ay) = rot(st.ax, st.ay);
                        [px, py, normalize_angle(st.psi - anchor.psi), vx, vy, ax, ay]
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(psi: f64, speed: f64) -> Trajectory {
        let (s, c) = psi.sin_cos();
        Trajectory::new(
            (0..HISTORY_LEN)
                .map(|i| {
                    let d = speed * FRAME_DT * i as f64;
                    DriverState::new(3.0 + c * d, -1.0 + s * d, psi, c * speed, s * speed, 0.0, 0.0)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(Trajectory::new(vec![DriverState::at_rest(0.0, 0.0, 0.0); 9]).is_err());
        let mut states = vec![DriverState::at_rest(0.0, 0.0, 0.0); HISTORY_LEN];
        states[3].vx = f64::NAN;
        assert!(matches!(Trajectory::new(states), Err(Error::NonFinite(_))));
    }

    #[test]
    fn relative_features_are_heading_invariant() {
        let a = straight(0.3, 8.0).features(FeatureFrame::DriverRelative);
        let b = straight(-2.1, 8.0).features(FeatureFrame::DriverRelative);
        assert_eq!(a.len(), FEATURE_DIM);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        // Final state is the origin of the relative frame.
        assert!(a[FEATURE_DIM - STATE_DIM..FEATURE_DIM - 4].iter().all(|v| v.abs() < 1e-12));
        // Earlier positions lie behind the driver.
        assert!((a[0] + 8.0 * 0.9).abs() < 1e-9);
        assert!((a[3] - 8.0).abs() < 1e-9);
    }

    #[test]
    fn world_features_are_raw() {
        let t = straight(0.0, 1.0);
        let f = t.features(FeatureFrame::World);
        assert_eq!(&f[..STATE_DIM], &t.states()[0].as_array());
    }
}
