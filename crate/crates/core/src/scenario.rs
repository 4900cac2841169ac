//! Synthetic stimulus world, retinal rendering into the four feature
//! channels, and gaze shifts.
//!
//! World and retina share one metric: one world unit is one cell.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid;

/// Minimum distance between two stimuli, in world cells.
pub const MIN_SEPARATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Blue,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Deg45,
    Deg135,
}

/// One of the four filtered input dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureChannel {
    Blue,
    Green,
    Deg45,
    Deg135,
}

impl FeatureChannel {
    pub const ALL: [FeatureChannel; 4] = [
        FeatureChannel::Blue,
        FeatureChannel::Green,
        FeatureChannel::Deg45,
        FeatureChannel::Deg135,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureChannel::Blue => "blue",
            FeatureChannel::Green => "green",
            FeatureChannel::Deg45 => "deg45",
            FeatureChannel::Deg135 => "deg135",
        }
    }
}

impl fmt::Display for FeatureChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Color> for FeatureChannel {
    fn from(c: Color) -> Self {
        match c {
            Color::Blue => FeatureChannel::Blue,
            Color::Green => FeatureChannel::Green,
        }
    }
}

impl From<Orientation> for FeatureChannel {
    fn from(o: Orientation) -> Self {
        match o {
            Orientation::Deg45 => FeatureChannel::Deg45,
            Orientation::Deg135 => FeatureChannel::Deg135,
        }
    }
}

/// An oriented colored bar, reduced to its two feature labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    /// `[x, y]` in world cells.
    pub pos: [f64; 2],
    pub color: Color,
    pub orientation: Orientation,
}

impl Stimulus {
    pub fn new(x: f64, y: f64, color: Color, orientation: Orientation) -> Self {
        Stimulus {
            pos: [x, y],
            color,
            orientation,
        }
    }

    pub fn channels(&self) -> [FeatureChannel; 2] {
        [self.color.into(), self.orientation.into()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    #[serde(default)]
    pub stimuli: Vec<Stimulus>,
    /// Bounding box; derived from the stimuli when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Extent>,
}

impl World {
    pub fn new(stimuli: Vec<Stimulus>) -> Result<Self> {
        let world = World {
            stimuli,
            extent: None,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.stimuli.iter().enumerate() {
            if !s.pos.iter().all(|v| v.is_finite()) {
                return Err(Error::config(
                    format!("scene.stimuli[{i}].pos"),
                    "coordinates must be finite",
                ));
            }
        }
        for (i, a) in self.stimuli.iter().enumerate() {
            for (j, b) in self.stimuli.iter().enumerate().skip(i + 1) {
                let d = ((a.pos[0] - b.pos[0]).powi(2) + (a.pos[1] - b.pos[1]).powi(2)).sqrt();
                if d < MIN_SEPARATION {
                    return Err(Error::config(
                        format!("scene.stimuli[{j}].pos"),
                        format!("closer than {MIN_SEPARATION} cells to stimulus {i}"),
                    ));
                }
            }
        }
        if let Some(e) = &self.extent {
            if !(e.min[0] <= e.max[0] && e.min[1] <= e.max[1]) {
                return Err(Error::config("scene.extent", "min must not exceed max"));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Extent {
        if let Some(e) = self.extent {
            return e;
        }
        let mut e = Extent {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        };
        for s in &self.stimuli {
            for k in 0..2 {
                e.min[k] = e.min[k].min(s.pos[k]);
                e.max[k] = e.max[k].max(s.pos[k]);
            }
        }
        if self.stimuli.is_empty() {
            e = Extent {
                min: [0.0; 2],
                max: [0.0; 2],
            };
        }
        e
    }

    /// Index of the stimulus closest to a world position.
    pub fn nearest(&self, pos: [f64; 2]) -> Option<(usize, f64)> {
        self.stimuli
            .iter()
            .enumerate()
            .map(|(i, s)| (i, distance(s.pos, pos)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// World position imaged at the foveal cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaze {
    pub center: [f64; 2],
}

impl Gaze {
    pub fn new(x: f64, y: f64) -> Self {
        Gaze { center: [x, y] }
    }

    /// Retinal cell coordinates of a world point.
    pub fn to_retina(&self, grid: Grid, world: [f64; 2]) -> (f64, f64) {
        let (fx, fy) = grid.center();
        (
            world[0] - self.center[0] + fx as f64,
            world[1] - self.center[1] + fy as f64,
        )
    }

    /// World position of a retinal location.
    pub fn to_world(&self, grid: Grid, retina: (f64, f64)) -> [f64; 2] {
        let (fx, fy) = grid.center();
        [
            retina.0 - fx as f64 + self.center[0],
            retina.1 - fy as f64 + self.center[1],
        ]
    }
}

impl Default for Gaze {
    fn default() -> Self {
        Gaze::new(0.0, 0.0)
    }
}

pub fn apply_saccade(gaze: Gaze, v: [f64; 2]) -> Gaze {
    Gaze {
        center: [gaze.center[0] + v[0], gaze.center[1] + v[1]],
    }
}

/// Rendered feature channels, indexed by [`FeatureChannel::index`].
pub type Channels = [Vec<f64>; 4];

/// Gaussian blobs of amplitude 1 at each visible stimulus, in its color and
/// orientation channels, summed and clamped to `[0, 1]`.
pub fn render_channels(world: &World, gaze: Gaze, grid: Grid, sigma_stim: f64) -> Result<Channels> {
    if !(sigma_stim > 0.0) || !sigma_stim.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma_stim must be positive, got {sigma_stim}"
        )));
    }
    let mut out: Channels = std::array::from_fn(|_| grid.zeros());
    let two_s2 = 2.0 * sigma_stim * sigma_stim;
    for s in &world.stimuli {
        let (rx, ry) = gaze.to_retina(grid, s.pos);
        if !grid.contains(rx, ry) {
            continue;
        }
        let [c0, c1] = s.channels();
        for y in 0..grid.height {
            let dy = y as f64 - ry;
            for x in 0..grid.width {
                let dx = x as f64 - rx;
                let v = (-(dx * dx + dy * dy) / two_s2).exp();
                let i = grid.index(x, y);
                out[c0.index()][i] += v;
                out[c1.index()][i] += v;
            }
        }
    }
    for ch in out.iter_mut() {
        ch.iter_mut().for_each(|v| *v = v.min(1.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g() -> Grid {
        Grid::default()
    }

    #[test]
    fn empty_world_renders_zero() {
        let ch = render_channels(&World::new(vec![]).unwrap(), Gaze::default(), g(), 1.5).unwrap();
        assert!(ch.iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn blue45_at_gaze_center() {
        let w = World::new(vec![Stimulus::new(
            3.0,
            -2.0,
            Color::Blue,
            Orientation::Deg45,
        )])
        .unwrap();
        let ch = render_channels(&w, Gaze::new(3.0, -2.0), g(), 1.5).unwrap();
        let c = g().index(20, 20);
        assert_eq!(ch[0][c], 1.0);
        assert_eq!(ch[0], ch[2]);
        assert!(ch[1].iter().chain(&ch[3]).all(|&v| v == 0.0));
    }

    #[test]
    fn gaze_shift_moves_blob_opposite() {
        let w = World::new(vec![Stimulus::new(
            0.0,
            0.0,
            Color::Green,
            Orientation::Deg135,
        )])
        .unwrap();
        let a = render_channels(&w, Gaze::new(0.0, 0.0), g(), 1.5).unwrap();
        let b = render_channels(&w, Gaze::new(5.0, 0.0), g(), 1.5).unwrap();
        for y in 0..40 {
            for x in 0..35 {
                assert_eq!(b[1][g().index(x, y)], a[1][g().index(x + 5, y)]);
            }
        }
    }

    #[test]
    fn saccade_then_render_foveates() {
        let w = World::new(vec![Stimulus::new(
            10.0,
            -3.0,
            Color::Blue,
            Orientation::Deg135,
        )])
        .unwrap();
        let gaze = apply_saccade(Gaze::new(0.0, 0.0), [10.0, -3.0]);
        assert_eq!(gaze.center, [10.0, -3.0]);
        assert_eq!(apply_saccade(gaze, [0.0, 0.0]), gaze);
        let ch = render_channels(&w, gaze, g(), 1.5).unwrap();
        assert_eq!(ch[0][g().index(20, 20)], 1.0);
    }

    #[test]
    fn off_grid_stimulus_is_invisible() {
        let w = World::new(vec![Stimulus::new(
            30.0,
            0.0,
            Color::Blue,
            Orientation::Deg45,
        )])
        .unwrap();
        let ch = render_channels(&w, Gaze::default(), g(), 1.5).unwrap();
        assert!(ch.iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn crowded_world_rejected() {
        let r = World::new(vec![
            Stimulus::new(0.0, 0.0, Color::Blue, Orientation::Deg45),
            Stimulus::new(2.0, 0.0, Color::Green, Orientation::Deg45),
        ]);
        assert!(r.is_err());
    }
}
