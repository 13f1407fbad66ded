//! Training-time data augmentation: scale (S), rotation (R), elastic (E)
//! and chromatic (C).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::regions::PlaneModel;
use crate::rng::{derive_seed, seeded};

pub const SCALE_RANGE: (f64, f64) = (0.9, 1.1);
pub const CHROMATIC_JITTER: f64 = 10.0;
pub const ELASTIC_CELL: f64 = 1.0;
pub const ELASTIC_AMPLITUDE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    pub scale: bool,
    pub rotation: bool,
    pub elastic: bool,
    pub chromatic: bool,
}

impl AugmentConfig {
    pub const NONE: Self = Self {
        scale: false,
        rotation: false,
        elastic: false,
        chromatic: false,
    };

    pub const ALL: Self = Self {
        scale: true,
        rotation: true,
        elastic: true,
        chromatic: true,
    };

    pub fn any(&self) -> bool {
        self.scale || self.rotation || self.elastic || self.chromatic
    }
}

/// Scale, rotation and chromatic on; elastic distortion off.
impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            elastic: false,
            ..Self::ALL
        }
    }
}

/// Letters `S`, `R`, `E`, `C` in any order, or `none`.
impl FromStr for AugmentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cfg = Self::NONE;
        if s.eq_ignore_ascii_case("none") || s.is_empty() {
            return Ok(cfg);
        }
        for ch in s.chars() {
            match ch.to_ascii_uppercase() {
                'S' => cfg.scale = true,
                'R' => cfg.rotation = true,
                'E' => cfg.elastic = true,
                'C' => cfg.chromatic = true,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown augmentation `{other}` (expected letters from SREC or `none`)"
                    )))
                }
            }
        }
        Ok(cfg)
    }
}

impl fmt::Display for AugmentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.any() {
            return f.write_str("none");
        }
        for (on, ch) in [(self.scale, 'S'), (self.rotation, 'R'), (self.elastic, 'E'), (self.chromatic, 'C')] {
            if on {
                write!(f, "{ch}")?;
            }
        }
        Ok(())
    }
}

/// `p' = center + scale · Rz(angle) · (p − center)` with `center.z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub center: [f64; 2],
    pub angle: f64,
    pub scale: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            center: [0.0, 0.0],
            angle: 0.0,
            scale: 1.0,
        }
    }

    fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.angle.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
    }

    pub fn apply(&self, p: &[f64; 3]) -> [f64; 3] {
        if self.angle == 0.0 && self.scale == 1.0 {
            return *p;
        }
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2]];
        let r = self.rotate(d);
        [
            self.center[0] + self.scale * r[0],
            self.center[1] + self.scale * r[1],
            self.scale * r[2],
        ]
    }

    /// The image of `plane`; signed distances scale by `self.scale`.
    pub fn apply_plane(&self, plane: &PlaneModel) -> PlaneModel {
        let n = plane.normal;
        let normal = self.rotate(n);
        let c = [self.center[0], self.center[1], 0.0];
        let n_dot_c = n[0] * c[0] + n[1] * c[1];
        let rn_dot_c = normal[0] * c[0] + normal[1] * c[1];
        PlaneModel {
            normal,
            offset: rn_dot_c + self.scale * (plane.offset - n_dot_c),
            inlier_threshold: plane.inlier_threshold * self.scale,
        }
    }
}

/// One concrete draw of augmentation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentDraw {
    pub similarity: Similarity,
    elastic: Option<ElasticField>,
    chromatic_seed: Option<u64>,
}

impl AugmentDraw {
    /// Samples parameters for a cloud with the given positions.
    pub fn sample(config: &AugmentConfig, positions: &[[f64; 3]], seed: u64) -> Self {
        let (lo, hi) = bounds(positions);
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let angle = if config.rotation {
            seeded(derive_seed(seed, 1)).random_range(0.0..std::f64::consts::TAU)
        } else {
            0.0
        };
        let scale = if config.scale {
            seeded(derive_seed(seed, 2)).random_range(SCALE_RANGE.0..=SCALE_RANGE.1)
        } else {
            1.0
        };
        let similarity = Similarity { center, angle, scale };
        let elastic = config.elastic.then(|| {
            let moved: Vec<[f64; 3]> = positions.iter().map(|p| similarity.apply(p)).collect();
            ElasticField::sample(&moved, derive_seed(seed, 3))
        });
        let chromatic_seed = config.chromatic.then(|| derive_seed(seed, 4));
        Self {
            similarity,
            elastic,
            chromatic_seed,
        }
    }

    pub fn has_elastic(&self) -> bool {
        self.elastic.is_some()
    }

    pub fn position(&self, p: &[f64; 3]) -> [f64; 3] {
        let q = self.similarity.apply(p);
        match &self.elastic {
            Some(field) => {
                let d = field.displacement(&q);
                [q[0] + d[0], q[1] + d[1], q[2] + d[2]]
            }
            None => q,
        }
    }

    /// Color of point `index`; jitter is a pure function of (seed, index).
    pub fn color(&self, index: usize, c: [u8; 3]) -> [u8; 3] {
        let Some(seed) = self.chromatic_seed else {
            return c;
        };
        let bits = derive_seed(seed, index as u64);
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let chunk = (bits >> (21 * ch)) & ((1 << 21) - 1);
            let u = chunk as f64 / ((1u64 << 21) - 1) as f64;
            let jitter = (2.0 * u - 1.0) * CHROMATIC_JITTER;
            out[ch] = (c[ch] as f64 + jitter).round().clamp(0.0, 255.0) as u8;
        }
        out
    }
}

fn bounds(positions: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    if positions.is_empty() {
        return ([0.0; 3], [0.0; 3]);
    }
    (lo, hi)
}

/// Gaussian noise on a coarse lattice, trilinearly interpolated.
#[derive(Debug, Clone, PartialEq)]
struct ElasticField {
    origin: [f64; 3],
    dims: [usize; 3],
    values: Vec<[f64; 3]>,
}

impl ElasticField {
    fn sample(positions: &[[f64; 3]], seed: u64) -> Self {
        let (lo, hi) = bounds(positions);
        let origin = lo.map(|v| (v / ELASTIC_CELL).floor() * ELASTIC_CELL);
        let dims: [usize; 3] =
            std::array::from_fn(|a| ((hi[a] - origin[a]) / ELASTIC_CELL).floor() as usize + 2);
        let mut rng = seeded(seed);
        let values = (0..dims[0] * dims[1] * dims[2])
            .map(|_| {
                std::array::from_fn(|_| ELASTIC_AMPLITUDE * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        Self { origin, dims, values }
    }

    fn at(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        self.values[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    fn displacement(&self, p: &[f64; 3]) -> [f64; 3] {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let t = ((p[a] - self.origin[a]) / ELASTIC_CELL).max(0.0);
            let cell = (t.floor() as usize).min(self.dims[a] - 2);
            base[a] = cell;
            frac[a] = (t - cell as f64).clamp(0.0, 1.0);
        }
        let mut out = [0.0; 3];
        for corner in 0..8 {
            let offs = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3)
                .map(|a| if offs[a] == 1 { frac[a] } else { 1.0 - frac[a] })
                .product();
            let v = self.at(base[0] + offs[0], base[1] + offs[1], base[2] + offs[2]);
            for a in 0..3 {
                out[a] += w * v[a];
            }
        }
        out
    }
}

/// Applies a freshly sampled augmentation to a whole cloud.
pub fn augment(
    positions: &[[f64; 3]],
    colors: &[[u8; 3]],
    config: &AugmentConfig,
    seed: u64,
) -> (Vec<[f64; 3]>, Vec<[u8; 3]>) {
    if !config.any() {
        return (positions.to_vec(), colors.to_vec());
    }
    let draw = AugmentDraw::sample(config, positions, seed);
    let p = positions.iter().map(|p| draw.position(p)).collect();
    let c = colors
        .iter()
        .enumerate()
        .map(|(i, &c)| draw.color(i, c))
        .collect();
    (p, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample_cloud(n: usize) -> (Vec<[f64; 3]>, Vec<[u8; 3]>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let p = (0..n)
            .map(|_| [rng.random_range(0.0..20.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..8.0)])
            .collect();
        let c = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        (p, c)
    }

    fn d(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn all_off_is_identity() {
        let (p, c) = sample_cloud(50);
        assert_eq!(augment(&p, &c, &AugmentConfig::NONE, 3), (p, c));
    }

    #[test]
    fn rotation_is_isometry_about_z() {
        let (p, c) = sample_cloud(60);
        let cfg = AugmentConfig { rotation: true, ..AugmentConfig::NONE };
        for seed in 0..10 {
            let (q, qc) = augment(&p, &c, &cfg, seed);
            assert_eq!(qc, c);
            for i in 0..p.len() {
                assert_eq!(q[i][2], p[i][2]);
                for j in 0..p.len() {
                    assert!((d(&p[i], &p[j]) - d(&q[i], &q[j])).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn chromatic_is_bounded() {
        let (p, c) = sample_cloud(500);
        let cfg = AugmentConfig { chromatic: true, ..AugmentConfig::NONE };
        let (q, qc) = augment(&p, &c, &cfg, 5);
        assert_eq!(q, p);
        let mut changed = 0;
        for (a, b) in c.iter().zip(&qc) {
            for ch in 0..3 {
                assert!((a[ch] as i32 - b[ch] as i32).abs() <= 10);
                changed += (a[ch] != b[ch]) as usize;
            }
        }
        assert!(changed > 500);
    }

    #[test]
    fn scale_within_range() {
        let (p, c) = sample_cloud(40);
        let cfg = AugmentConfig { scale: true, ..AugmentConfig::NONE };
        for seed in 0..20 {
            let (q, _) = augment(&p, &c, &cfg, seed);
            let ratio = d(&q[0], &q[1]) / d(&p[0], &p[1]);
            assert!((0.9 - 1e-12..=1.1 + 1e-12).contains(&ratio));
        }
    }

    #[test]
    fn elastic_is_small_and_smooth() {
        let (p, c) = sample_cloud(400);
        let cfg = AugmentConfig { elastic: true, ..AugmentConfig::NONE };
        let (q, _) = augment(&p, &c, &cfg, 8);
        let mut moved = 0;
        for (a, b) in p.iter().zip(&q) {
            // five sigma of one trilinear blend of N(0, 0.05²) per axis
            assert!(d(a, b) < 0.5);
            moved += (d(a, b) > 0.0) as usize;
        }
        assert!(moved > 390);
        // nearby points move alike
        let draw = AugmentDraw::sample(&cfg, &p, 8);
        let x = [3.3, 1.1, 2.2];
        let y = [3.31, 1.1, 2.2];
        let (dx, dy) = (draw.position(&x), draw.position(&y));
        assert!(((dx[0] - x[0]) - (dy[0] - y[0])).abs() < 0.01);
    }

    #[test]
    fn deterministic_and_plane_consistent() {
        let (p, c) = sample_cloud(30);
        assert_eq!(augment(&p, &c, &AugmentConfig::ALL, 4), augment(&p, &c, &AugmentConfig::ALL, 4));
        let plane = PlaneModel { normal: [0.0, 0.6, 0.8], offset: 1.5, inlier_threshold: 0.1 };
        let sim = Similarity { center: [4.0, -2.0], angle: 0.7, scale: 1.07 };
        let moved = sim.apply_plane(&plane);
        for q in &p {
            let h = plane.signed_distance(q);
            assert!((moved.signed_distance(&sim.apply(q)) - sim.scale * h).abs() < 1e-9);
        }
    }

    #[test]
    fn parses_flag_strings() {
        assert_eq!("SRC".parse::<AugmentConfig>().unwrap(), AugmentConfig::default());
        assert_eq!("none".parse::<AugmentConfig>().unwrap(), AugmentConfig::NONE);
        assert_eq!("crse".parse::<AugmentConfig>().unwrap(), AugmentConfig::ALL);
        assert!("X".parse::<AugmentConfig>().is_err());
        assert_eq!(AugmentConfig::default().to_string(), "SRC");
    }
}
