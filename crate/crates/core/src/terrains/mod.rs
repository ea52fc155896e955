//! Deterministic synthetic scenes: wave fields, corridor networks with glass
//! panes and cluttered rooms, plus scenario configuration and presets.

mod presets;
mod scenario;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::localmap::{slope_layer, LayeredGridMap, MapError};

pub use presets::{preset, PRESET_NAMES};
pub use scenario::{Disturbance, PerceptionConfig, RobotModel, ScenarioConfig, ScenarioError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WavefieldSpec {
    pub extent: [f64; 2],
    pub amplitude1: f64,
    pub wavelength1: f64,
    pub amplitude2: f64,
    pub wavelength2: f64,
    pub noise_sigma: f64,
}

impl Default for WavefieldSpec {
    fn default() -> Self {
        Self {
            extent: [24.0, 36.0],
            amplitude1: 0.75,
            wavelength1: 12.0,
            amplitude2: 0.125,
            wavelength2: 2.0,
            noise_sigma: 0.02,
        }
    }
}

impl WavefieldSpec {
    /// Noise-free elevation, shifted so the lowest point sits at zero.
    pub fn elevation(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::TAU;
        self.amplitude1 * (TAU * x / self.wavelength1).sin()
            + self.amplitude2 * (TAU * y / self.wavelength2).sin()
            + self.amplitude1.abs()
            + self.amplitude2.abs()
    }
}

/// Free corridors are capsules of `width` around each segment; everything
/// else is wall. Glass panes replace wall cells near their segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorridorSpec {
    pub extent: [f64; 2],
    pub width: f64,
    pub wall_height: f64,
    pub segments: Vec<[f64; 4]>,
    pub glass: Vec<[f64; 4]>,
    pub glass_thickness: f64,
    /// Height of the frame under a pane as seen by perception.
    pub rail_height: f64,
}

impl Default for CorridorSpec {
    fn default() -> Self {
        Self {
            extent: [20.0, 20.0],
            width: 2.4,
            wall_height: 1.0,
            segments: Vec::new(),
            glass: Vec::new(),
            glass_thickness: 0.3,
            rail_height: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Obstacle {
    Box { center: [f64; 2], half_size: [f64; 2] },
    Disc { center: [f64; 2], radius: f64 },
}

impl Obstacle {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Obstacle::Box { center, half_size } => {
                (x - center[0]).abs() <= half_size[0] && (y - center[1]).abs() <= half_size[1]
            }
            Obstacle::Disc { center, radius } => (x - center[0]).hypot(y - center[1]) <= radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutteredSpec {
    pub extent: [f64; 2],
    pub obstacles: Vec<Obstacle>,
    pub holes: Vec<Obstacle>,
    pub obstacle_height: f64,
    pub hole_depth: f64,
    /// Elevation change that counts as untraversable.
    pub step_height: f64,
    /// Perimeter wall thickness; zero leaves the room open.
    pub wall: f64,
    pub noise_sigma: f64,
}

impl Default for ClutteredSpec {
    fn default() -> Self {
        Self {
            extent: [16.0, 16.0],
            obstacles: Vec::new(),
            holes: Vec::new(),
            obstacle_height: 0.6,
            hole_depth: -1.0,
            step_height: 0.3,
            wall: 0.3,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainSpec {
    Flat { extent: [f64; 2] },
    Wavefield(WavefieldSpec),
    Corridors(CorridorSpec),
    Cluttered(ClutteredSpec),
}

/// Ground truth used for collisions and the map perception hands the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub truth: LayeredGridMap,
    pub perception: LayeredGridMap,
    /// Cells that are glass in truth.
    pub glass: Vec<usize>,
}

fn noise(map: &mut LayeredGridMap, sigma: f64, seed: u64) {
    if sigma <= 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    for z in map.elevation.iter_mut() {
        *z += normal.sample(&mut rng);
    }
}

pub fn gen_flat(extent: [f64; 2], resolution: f64) -> Result<LayeredGridMap, MapError> {
    Ok(slope_layer(&LayeredGridMap::with_extent(0.0, 0.0, extent[0], extent[1], resolution)?))
}

/// Two orthogonal sinusoids plus Gaussian noise, lifted to non-negative elevation.
pub fn gen_wavefield(spec: &WavefieldSpec, resolution: f64, seed: u64) -> Result<LayeredGridMap, MapError> {
    let mut map = LayeredGridMap::with_extent(0.0, 0.0, spec.extent[0], spec.extent[1], resolution)?;
    for i in 0..map.len() {
        let [x, y] = map.cell_center(map.cell_of_index(i));
        map.elevation[i] = spec.elevation(x, y);
    }
    noise(&mut map, spec.noise_sigma, seed);
    Ok(slope_layer(&map))
}

fn segment_distance(x: f64, y: f64, s: &[f64; 4]) -> f64 {
    let (dx, dy) = (s[2] - s[0], s[3] - s[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x - s[0]) * dx + (y - s[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x - s[0] - t * dx).hypot(y - s[1] - t * dy)
}

pub fn gen_corridors(spec: &CorridorSpec, resolution: f64) -> Result<Terrain, MapError> {
    let mut truth = LayeredGridMap::with_extent(0.0, 0.0, spec.extent[0], spec.extent[1], resolution)?;
    let mut glass = Vec::new();
    for i in 0..truth.len() {
        let [x, y] = truth.cell_center(truth.cell_of_index(i));
        let free = spec.segments.iter().any(|s| segment_distance(x, y, s) <= spec.width / 2.0);
        if free {
            continue;
        }
        truth.obstacle[i] = true;
        truth.elevation[i] = spec.wall_height;
        if spec.glass.iter().any(|g| segment_distance(x, y, g) <= spec.glass_thickness / 2.0) {
            glass.push(i);
        }
    }
    let mut perception = truth.clone();
    for &i in &glass {
        perception.obstacle[i] = false;
        perception.elevation[i] = spec.rail_height;
    }
    Ok(Terrain {
        truth: slope_layer(&truth),
        perception: slope_layer(&perception),
        glass,
    })
}

pub fn gen_cluttered(spec: &ClutteredSpec, resolution: f64, seed: u64) -> Result<LayeredGridMap, MapError> {
    let mut map = LayeredGridMap::with_extent(0.0, 0.0, spec.extent[0], spec.extent[1], resolution)?;
    noise(&mut map, spec.noise_sigma, seed);
    for i in 0..map.len() {
        let [x, y] = map.cell_center(map.cell_of_index(i));
        let edge = x.min(y).min(spec.extent[0] - x).min(spec.extent[1] - y);
        if edge < spec.wall || spec.obstacles.iter().any(|o| o.contains(x, y)) {
            map.elevation[i] = spec.obstacle_height;
        } else if spec.holes.iter().any(|h| h.contains(x, y)) {
            map.elevation[i] = spec.hole_depth;
        }
        if map.elevation[i].abs() > spec.step_height {
            map.obstacle[i] = true;
        }
    }
    Ok(slope_layer(&map))
}

impl TerrainSpec {
    pub fn generate(&self, resolution: f64, seed: u64) -> Result<Terrain, MapError> {
        let single = |m: LayeredGridMap| Terrain {
            truth: m.clone(),
            perception: m,
            glass: Vec::new(),
        };
        Ok(match self {
            TerrainSpec::Flat { extent } => single(gen_flat(*extent, resolution)?),
            TerrainSpec::Wavefield(w) => single(gen_wavefield(w, resolution, seed)?),
            TerrainSpec::Corridors(c) => gen_corridors(c, resolution)?,
            TerrainSpec::Cluttered(c) => single(gen_cluttered(c, resolution, seed)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::localmap::{mask_beyond_occluders, MaskOptions};
    use crate::mission::{detect_intersection, MissionConfig};
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};

    fn hash(map: &LayeredGridMap) -> u64 {
        let mut h = DefaultHasher::new();
        for z in &map.elevation {
            z.to_bits().hash(&mut h);
        }
        map.obstacle.hash(&mut h);
        h.finish()
    }

    #[test]
    fn wave_peak_to_valley_is_twice_the_amplitude() {
        let w = WavefieldSpec::default();
        let peak = w.elevation(w.wavelength1 / 4.0, 0.0);
        let valley = w.elevation(3.0 * w.wavelength1 / 4.0, 0.0);
        assert_eq!(peak - valley, 2.0 * w.amplitude1);
        assert!(valley >= 0.0);
    }

    #[test]
    fn flat_when_amplitudes_vanish_and_stable_per_seed() {
        let w = WavefieldSpec {
            amplitude1: 0.0,
            amplitude2: 0.0,
            noise_sigma: 0.0,
            extent: [5.0, 5.0],
            ..Default::default()
        };
        let m = gen_wavefield(&w, 0.1, 1).unwrap();
        assert!(m.elevation.iter().all(|&z| z == 0.0));
        let noisy = WavefieldSpec {
            extent: [5.0, 5.0],
            ..Default::default()
        };
        assert_eq!(hash(&gen_wavefield(&noisy, 0.1, 7).unwrap()), hash(&gen_wavefield(&noisy, 0.1, 7).unwrap()));
        assert_ne!(hash(&gen_wavefield(&noisy, 0.1, 7).unwrap()), hash(&gen_wavefield(&noisy, 0.1, 8).unwrap()));
    }

    #[test]
    fn t_junction_layout_has_three_branches() {
        let spec = CorridorSpec {
            extent: [12.0, 12.0],
            segments: vec![[0.0, 6.0, 12.0, 6.0], [6.0, 0.0, 6.0, 6.0]],
            ..Default::default()
        };
        let t = gen_corridors(&spec, 0.1).unwrap();
        t.truth.validate().unwrap();
        let b = detect_intersection(&t.perception, &Pose::new(6.0, 6.0, std::f64::consts::FRAC_PI_2), &MissionConfig::default());
        assert_eq!(b.len(), 3, "{b:?}");
    }

    #[test]
    fn glass_is_hidden_from_perception_until_masked() {
        let spec = CorridorSpec {
            extent: [12.0, 10.0],
            segments: vec![[1.5, 4.0, 10.5, 4.0], [1.5, 6.6, 10.5, 6.6]],
            glass: vec![[2.0, 5.3, 10.0, 5.3]],
            ..Default::default()
        };
        let t = gen_corridors(&spec, 0.1).unwrap();
        assert!(!t.glass.is_empty());
        for &i in &t.glass {
            assert!(t.truth.obstacle[i]);
            assert!(t.perception.traversable_index(i));
        }
        let behind = t.perception.index(t.perception.cell_of(6.0, 6.6)).unwrap();
        let robot = Pose::new(6.0, 4.0, 0.0);
        let opts = MaskOptions {
            occluder_height: Some(0.05),
            z_ref: 0.0,
        };
        assert!(t.perception.traversable_index(behind));
        let masked = mask_beyond_occluders(&t.perception, &robot, &opts);
        assert!(masked.map.unknown[behind]);
    }

    #[test]
    fn holes_and_boxes_are_untraversable() {
        let spec = ClutteredSpec {
            obstacles: vec![Obstacle::Box {
                center: [4.0, 4.0],
                half_size: [1.0, 0.5],
            }],
            holes: vec![Obstacle::Disc {
                center: [10.0, 10.0],
                radius: 1.0,
            }],
            ..Default::default()
        };
        let m = gen_cluttered(&spec, 0.1, 0).unwrap();
        assert!(!m.traversable_at(4.0, 4.0));
        assert!(!m.traversable_at(10.0, 10.0));
        assert_eq!(m.elevation_at(10.0, 10.0), Some(-1.0));
        assert!(m.traversable_at(7.0, 7.0));
        assert!(!m.traversable_at(0.1, 7.0));
    }
}
