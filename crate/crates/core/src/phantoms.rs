//! Ground-truth scenes: sparse debris fields, piecewise-constant satellite
//! silhouettes, and the two combined.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SceneKind {
    Debris,
    Satellite,
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: Image,
    /// Exact nonzero count of `image`.
    pub sparsity_r: usize,
    pub kind: SceneKind,
    pub seed: u64,
}

impl Scene {
    fn new(image: Image, kind: SceneKind, seed: u64) -> Self {
        Self {
            sparsity_r: image.nonzero_count(),
            image,
            kind,
            seed,
        }
    }
}

/// Axis-aligned rectangle of constant amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
    pub amplitude: f64,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row
            && row < self.row + self.height
            && col >= self.col
            && col < self.col + self.width
    }
}

/// Satellite silhouette: a body rectangle flanked by solar panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteSpec {
    pub body: Option<Rect>,
    pub panels: Vec<Rect>,
}

impl SatelliteSpec {
    pub fn empty() -> Self {
        Self {
            body: None,
            panels: Vec::new(),
        }
    }

    /// Body of side `n/5` at amplitude 1.0, centred, with two `n/10 × n/5`
    /// panels at amplitude 0.6 directly left and right of it. Covers 8% of
    /// the grid when `n` is a multiple of 10.
    pub fn default_for(n: usize) -> Self {
        let body_side = (n / 5).max(1);
        let panel_h = (n / 10).max(1);
        let body_row = (n - body_side) / 2;
        let body_col = (n - body_side) / 2;
        let panel_row = body_row + (body_side - panel_h) / 2;
        let panel_w = body_side.min(body_col);
        let mut panels = Vec::new();
        if panel_w > 0 {
            panels.push(Rect {
                row: panel_row,
                col: body_col - panel_w,
                height: panel_h,
                width: panel_w,
                amplitude: 0.6,
            });
            panels.push(Rect {
                row: panel_row,
                col: body_col + body_side,
                height: panel_h,
                width: panel_w.min(n - body_col - body_side),
                amplitude: 0.6,
            });
        }
        Self {
            body: Some(Rect {
                row: body_row,
                col: body_col,
                height: body_side,
                width: body_side,
                amplitude: 1.0,
            }),
            panels,
        }
    }

    pub fn rects(&self) -> impl Iterator<Item = &Rect> {
        self.body.iter().chain(self.panels.iter())
    }

    pub fn max_amplitude(&self) -> f64 {
        self.rects().map(|r| r.amplitude).fold(0.0, f64::max)
    }

    /// True when `(row, col)` lies inside any rectangle.
    pub fn covers(&self, row: usize, col: usize) -> bool {
        self.rects().any(|r| r.contains(row, col))
    }
}

fn check_side(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::arg("scene side must be at least 1"));
    }
    Ok(())
}

/// `k` distinct random pixels with amplitudes uniform in `amp_range`; the rest zero.
pub fn make_debris_phantom(n: usize, k: usize, amp_range: (f64, f64), seed: u64) -> Result<Scene> {
    check_side(n)?;
    let (low, high) = amp_range;
    if !(low > 0.0 && low <= high && high.is_finite()) {
        return Err(Error::arg(format!(
            "debris amplitude range [{low}, {high}] must satisfy 0 < low <= high"
        )));
    }
    if k == 0 || k > n * n {
        return Err(Error::arg(format!(
            "debris count {k} must lie in 1..={}",
            n * n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut image = Image::zeros(n);
    let mut positions = sample(&mut rng, n * n, k).into_vec();
    positions.sort_unstable();
    for p in positions {
        image.pixels_mut()[p] = if low == high {
            low
        } else {
            rng.gen_range(low..=high)
        };
    }
    Ok(Scene::new(image, SceneKind::Debris, seed))
}

/// Deterministic piecewise-constant silhouette; overlapping rectangles take the larger amplitude.
pub fn make_satellite_phantom(n: usize, spec: &SatelliteSpec) -> Result<Scene> {
    check_side(n)?;
    let mut image = Image::zeros(n);
    for r in spec.rects() {
        if r.height == 0 || r.width == 0 || r.row + r.height > n || r.col + r.width > n {
            return Err(Error::arg(format!(
                "rectangle {r:?} does not fit inside the {n}x{n} grid"
            )));
        }
        if !(r.amplitude >= 0.0 && r.amplitude.is_finite()) {
            return Err(Error::arg(
                "rectangle amplitude must be finite and nonnegative",
            ));
        }
        for row in r.row..r.row + r.height {
            for col in r.col..r.col + r.width {
                let v = image.get(row, col).max(r.amplitude);
                image.set(row, col, v);
            }
        }
    }
    Ok(Scene::new(image, SceneKind::Satellite, 0))
}

/// Satellite silhouette plus `k_debris` spikes placed only on free pixels.
pub fn make_combined_phantom(
    n: usize,
    satellite: &SatelliteSpec,
    k_debris: usize,
    amp_range: (f64, f64),
    seed: u64,
) -> Result<Scene> {
    let sat = make_satellite_phantom(n, satellite)?;
    let free: Vec<usize> = (0..n * n)
        .filter(|&p| !satellite.covers(p / n, p % n))
        .collect();
    if k_debris > free.len() {
        return Err(Error::arg(format!(
            "{k_debris} debris spikes requested but only {} pixels lie outside the satellite",
            free.len()
        )));
    }
    let mut image = sat.image;
    if k_debris > 0 {
        // Draw the spikes in the free-pixel index space, then map back.
        let debris = make_debris_phantom_on(free.len(), k_debris, amp_range, seed)?;
        for (slot, amp) in debris {
            let p = free[slot];
            image.pixels_mut()[p] = image.pixels()[p].max(amp);
        }
    }
    Ok(Scene::new(image, SceneKind::Combined, seed))
}

fn make_debris_phantom_on(
    slots: usize,
    k: usize,
    (low, high): (f64, f64),
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if !(low > 0.0 && low <= high && high.is_finite()) {
        return Err(Error::arg(format!(
            "debris amplitude range [{low}, {high}] must satisfy 0 < low <= high"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = sample(&mut rng, slots, k).into_vec();
    positions.sort_unstable();
    Ok(positions
        .into_iter()
        .map(|p| {
            (
                p,
                if low == high {
                    low
                } else {
                    rng.gen_range(low..=high)
                },
            )
        })
        .collect())
}
