//! Synthetic labeled urban scenes.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{PointCloud, NO_LABEL};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    Ground,
    Street,
    Building,
    Crown,
    Trunk,
    LowVegetation,
}

impl Primitive {
    const ALL: [Primitive; 6] = [
        Primitive::Ground,
        Primitive::Street,
        Primitive::Building,
        Primitive::Crown,
        Primitive::Trunk,
        Primitive::LowVegetation,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Ground => "ground",
            Primitive::Street => "street",
            Primitive::Building => "building",
            Primitive::Crown => "crown",
            Primitive::Trunk => "trunk",
            Primitive::LowVegetation => "low_vegetation",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown primitive '{s}'")))
    }
}

/// One class: the primitive that generates it and its color distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPalette {
    pub primitive: Primitive,
    pub color: [u8; 3],
    /// Per-channel uniform jitter half-width.
    pub jitter: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub extent: [f64; 2],
    /// Points per m² of sampled surface.
    pub density: f64,
    /// Class id = position in the palette.
    pub palette: Vec<ClassPalette>,
    pub buildings: usize,
    pub trees: usize,
    pub vegetation_patches: usize,
    pub streets: usize,
    pub street_width: f64,
    pub ground_noise: f64,
    pub seed: u64,
    /// Hide ground truth on a random half of the scene.
    pub partial_annotation: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let class = |primitive, color, jitter| ClassPalette { primitive, color, jitter };
        Self {
            extent: [50.0, 50.0],
            density: 40.0,
            palette: vec![
                class(Primitive::Ground, [150, 140, 115], 15),
                class(Primitive::Street, [65, 65, 70], 10),
                class(Primitive::Building, [200, 180, 160], 20),
                class(Primitive::Crown, [45, 125, 45], 20),
                class(Primitive::Trunk, [85, 55, 30], 12),
                class(Primitive::LowVegetation, [110, 175, 60], 20),
            ],
            buildings: 3,
            trees: 8,
            vegetation_patches: 5,
            streets: 2,
            street_width: 6.0,
            ground_noise: 0.02,
            seed: 0,
            partial_annotation: false,
        }
    }
}

impl SceneSpec {
    pub fn class_count(&self) -> usize {
        self.palette.len()
    }

    pub fn class_of(&self, primitive: Primitive) -> Option<usize> {
        self.palette.iter().position(|c| c.primitive == primitive)
    }

    pub fn validate(&self) -> Result<()> {
        if self.palette.len() < 2 {
            return Err(Error::InvalidSpec("a scene needs at least 2 classes".into()));
        }
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0 && self.extent.iter().all(|e| e.is_finite())) {
            return Err(Error::InvalidSpec(format!("extent must be positive, got {:?}", self.extent)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidSpec(format!("density must be positive, got {}", self.density)));
        }
        if !(self.street_width > 0.0) || !(self.ground_noise >= 0.0) {
            return Err(Error::InvalidSpec("street_width must be positive and ground_noise non-negative".into()));
        }
        for (i, c) in self.palette.iter().enumerate() {
            if self.palette[..i].iter().any(|o| o.primitive == c.primitive) {
                return Err(Error::InvalidSpec(format!("primitive {} used by two classes", c.primitive)));
            }
            let instances = match c.primitive {
                Primitive::Ground => 1,
                Primitive::Street => self.streets,
                Primitive::Building => self.buildings,
                Primitive::Crown | Primitive::Trunk => self.trees,
                Primitive::LowVegetation => self.vegetation_patches,
            };
            if instances == 0 {
                return Err(Error::InvalidSpec(format!("class {i} ({}) has no instances", c.primitive)));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the defaults. Any `class.<id>`
    /// line replaces the whole default palette.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SceneSpec::default();
        let mut palette: Vec<Option<ClassPalette>> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::InvalidSpec(format!("line {}: {msg}", n + 1));
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("expected key = value, got '{line}'")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number '{v}' for {key}")));
            let count = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad count '{v}' for {key}")));
            match key {
                "extent" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 2 {
                        return Err(bad("extent needs two values".into()));
                    }
                    spec.extent = [num(parts[0])?, num(parts[1])?];
                }
                "density" => spec.density = num(value)?,
                "buildings" => spec.buildings = count(value)?,
                "trees" => spec.trees = count(value)?,
                "vegetation_patches" => spec.vegetation_patches = count(value)?,
                "streets" => spec.streets = count(value)?,
                "street_width" => spec.street_width = num(value)?,
                "ground_noise" => spec.ground_noise = num(value)?,
                "seed" => spec.seed = value.parse().map_err(|_| bad(format!("bad seed '{value}'")))?,
                "partial_annotation" => {
                    spec.partial_annotation = value.parse().map_err(|_| bad(format!("expected true/false, got '{value}'")))?
                }
                _ if key.starts_with("class.") => {
                    let id = count(&key["class.".len()..])?;
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 5 {
                        return Err(bad("class needs: primitive r g b jitter".into()));
                    }
                    let byte = |v: &str| v.parse::<u8>().map_err(|_| bad(format!("bad color value '{v}'")));
                    if palette.len() <= id {
                        palette.resize(id + 1, None);
                    }
                    palette[id] = Some(ClassPalette {
                        primitive: parts[0].parse().map_err(|e: Error| bad(e.to_string()))?,
                        color: [byte(parts[1])?, byte(parts[2])?, byte(parts[3])?],
                        jitter: byte(parts[4])?,
                    });
                }
                _ => return Err(bad(format!("unknown key '{key}'"))),
            }
        }
        if !palette.is_empty() {
            spec.palette = palette
                .into_iter()
                .enumerate()
                .map(|(i, c)| c.ok_or_else(|| Error::InvalidSpec(format!("class ids must be contiguous; class.{i} missing"))))
                .collect::<Result<_>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Rect {
    fn contains(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.lo[0] - margin && x <= self.hi[0] + margin && y >= self.lo[1] - margin && y <= self.hi[1] + margin
    }

    fn overlaps(&self, o: &Rect, margin: f64) -> bool {
        self.lo[0] - margin < o.hi[0] && o.lo[0] < self.hi[0] + margin && self.lo[1] - margin < o.hi[1] && o.lo[1] < self.hi[1] + margin
    }
}

#[derive(Debug, Clone, Copy)]
struct Disc {
    center: [f64; 2],
    radius: f64,
}

#[derive(Debug, Clone, Copy)]
struct Tree {
    center: [f64; 2],
    trunk_radius: f64,
    trunk_height: f64,
    crown_radii: [f64; 2],
}

struct Layout {
    streets: Vec<Rect>,
    buildings: Vec<(Rect, f64)>,
    patches: Vec<Disc>,
    trees: Vec<Tree>,
}

const PLACEMENT_ATTEMPTS: usize = 500;

fn place(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Layout> {
    let [ex, ey] = spec.extent;
    let want = |p: Primitive, n: usize| if spec.class_of(p).is_some() { n } else { 0 };

    let half = spec.street_width / 2.0;
    let streets: Vec<Rect> = (0..want(Primitive::Street, spec.streets))
        .map(|i| {
            if i % 2 == 0 {
                let c = rng.random_range(0.2..0.8) * ey;
                Rect { lo: [0.0, (c - half).max(0.0)], hi: [ex, (c + half).min(ey)] }
            } else {
                let c = rng.random_range(0.2..0.8) * ex;
                Rect { lo: [(c - half).max(0.0), 0.0], hi: [(c + half).min(ex), ey] }
            }
        })
        .collect();

    let mut buildings: Vec<(Rect, f64)> = Vec::new();
    for _ in 0..want(Primitive::Building, spec.buildings) {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = rng.random_range(8.0..11.0f64).min(ex - 2.0);
            let d = rng.random_range(8.0..11.0f64).min(ey - 2.0);
            if w <= 0.0 || d <= 0.0 {
                break;
            }
            let x = rng.random_range(1.0..=(ex - 1.0 - w).max(1.0));
            let y = rng.random_range(1.0..=(ey - 1.0 - d).max(1.0));
            let r = Rect { lo: [x, y], hi: [x + w, y + d] };
            let height = rng.random_range(7.0..10.0);
            if streets.iter().all(|s| !s.overlaps(&r, 1.0)) && buildings.iter().all(|(b, _)| !b.overlaps(&r, 2.0)) {
                buildings.push((r, height));
                break;
            }
        }
    }

    let free = |x: f64, y: f64, margin: f64, buildings: &[(Rect, f64)]| {
        streets.iter().all(|s| !s.contains(x, y, margin)) && buildings.iter().all(|(b, _)| !b.contains(x, y, margin))
    };

    let mut patches = Vec::new();
    for _ in 0..want(Primitive::LowVegetation, spec.vegetation_patches) {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let radius = rng.random_range(2.8..3.2f64).min(ex.min(ey) / 2.0);
            let x = rng.random_range(radius..=(ex - radius).max(radius));
            let y = rng.random_range(radius..=(ey - radius).max(radius));
            if free(x, y, radius + 0.5, &buildings) {
                patches.push(Disc { center: [x, y], radius });
                break;
            }
        }
    }

    let mut trees: Vec<Tree> = Vec::new();
    let tree_count = if spec.class_of(Primitive::Crown).is_some() || spec.class_of(Primitive::Trunk).is_some() {
        spec.trees
    } else {
        0
    };
    for _ in 0..tree_count {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let rxy = rng.random_range(1.8..2.2f64).min(ex.min(ey) / 2.0 - 0.5).max(0.1);
            let x = rng.random_range(rxy + 0.5..=(ex - rxy - 0.5).max(rxy + 0.5));
            let y = rng.random_range(rxy + 0.5..=(ey - rxy - 0.5).max(rxy + 0.5));
            let apart = trees
                .iter()
                .all(|t| (t.center[0] - x).hypot(t.center[1] - y) > t.crown_radii[0] + rxy + 0.5);
            if free(x, y, rxy + 0.5, &buildings) && apart {
                trees.push(Tree {
                    center: [x, y],
                    trunk_radius: rng.random_range(0.18..0.22),
                    trunk_height: rng.random_range(3.0..3.5),
                    crown_radii: [rxy, rng.random_range(1.8..2.2)],
                });
                break;
            }
        }
    }

    Ok(Layout { streets, buildings, patches, trees })
}

struct Builder<'a> {
    spec: &'a SceneSpec,
    positions: Vec<[f64; 3]>,
    colors: Vec<[u8; 3]>,
    labels: Vec<i32>,
}

impl Builder<'_> {
    fn push(&mut self, rng: &mut ChaCha8Rng, primitive: Primitive, p: [f64; 3]) {
        let Some(class) = self.spec.class_of(primitive) else {
            return;
        };
        let pal = self.spec.palette[class];
        let j = pal.jitter as i32;
        let color = pal.color.map(|c| (c as i32 + rng.random_range(-j..=j)).clamp(0, 255) as u8);
        let [ex, ey] = self.spec.extent;
        let p = [p[0].clamp(0.0, ex), p[1].clamp(0.0, ey), p[2].clamp(-1.0, 30.0)];
        self.positions.push(p);
        self.colors.push(color);
        self.labels.push(class as i32);
    }
}

fn sample_count(rng: &mut ChaCha8Rng, expected: f64) -> usize {
    let base = expected.floor();
    base as usize + (rng.random::<f64>() < expected - base) as usize
}

/// Generates the labeled cloud described by `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let layout = place(spec, &mut seeded(derive_seed(spec.seed, 1)))?;
    let mut b = Builder { spec, positions: Vec::new(), colors: Vec::new(), labels: Vec::new() };
    let [ex, ey] = spec.extent;

    {
        let mut rng = seeded(derive_seed(spec.seed, 2));
        let noise = Normal::new(0.0, spec.ground_noise).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let n = sample_count(&mut rng, spec.density * ex * ey);
        for _ in 0..n {
            let x = rng.random_range(0.0..=ex);
            let y = rng.random_range(0.0..=ey);
            let z = noise.sample(&mut rng);
            if layout.buildings.iter().any(|(r, _)| r.contains(x, y, 0.0)) {
                continue;
            }
            if layout
                .patches
                .iter()
                .any(|d| (d.center[0] - x).hypot(d.center[1] - y) <= d.radius)
            {
                continue;
            }
            let on_street = layout.streets.iter().any(|s| s.contains(x, y, 0.0));
            let prim = if on_street { Primitive::Street } else { Primitive::Ground };
            b.push(&mut rng, prim, [x, y, z]);
        }
    }

    for (k, (r, h)) in layout.buildings.iter().enumerate() {
        let mut rng = seeded(derive_seed(spec.seed, 100 + k as u64));
        let (w, d) = (r.hi[0] - r.lo[0], r.hi[1] - r.lo[1]);
        for _ in 0..sample_count(&mut rng, spec.density * w * d) {
            let p = [rng.random_range(r.lo[0]..=r.hi[0]), rng.random_range(r.lo[1]..=r.hi[1]), *h];
            b.push(&mut rng, Primitive::Building, p);
        }
        let perimeter = 2.0 * (w + d);
        for _ in 0..sample_count(&mut rng, spec.density * perimeter * h) {
            let mut t = rng.random_range(0.0..perimeter);
            let z = rng.random_range(0.0..=*h);
            let p = if t < w {
                [r.lo[0] + t, r.lo[1], z]
            } else if {
                t -= w;
                t < d
            } {
                [r.hi[0], r.lo[1] + t, z]
            } else if {
                t -= d;
                t < w
            } {
                [r.hi[0] - t, r.hi[1], z]
            } else {
                [r.lo[0], r.hi[1] - (t - w), z]
            };
            b.push(&mut rng, Primitive::Building, p);
        }
    }

    for (k, patch) in layout.patches.iter().enumerate() {
        let mut rng = seeded(derive_seed(spec.seed, 300 + k as u64));
        let area = std::f64::consts::PI * patch.radius * patch.radius;
        for _ in 0..sample_count(&mut rng, 1.5 * spec.density * area) {
            let rho = patch.radius * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let crest = 1.0 - (rho / patch.radius).powi(2);
            let z = rng.random_range(0.05..=0.15 + 0.85 * crest);
            b.push(&mut rng, Primitive::LowVegetation, [patch.center[0] + rho * phi.cos(), patch.center[1] + rho * phi.sin(), z]);
        }
    }

    for (k, tree) in layout.trees.iter().enumerate() {
        let mut rng = seeded(derive_seed(spec.seed, 200 + k as u64));
        let [cx, cy] = tree.center;
        let lateral = std::f64::consts::TAU * tree.trunk_radius * tree.trunk_height;
        for _ in 0..sample_count(&mut rng, spec.density * lateral).max(1) {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let z = rng.random_range(0.0..=tree.trunk_height);
            b.push(&mut rng, Primitive::Trunk, [cx + tree.trunk_radius * phi.cos(), cy + tree.trunk_radius * phi.sin(), z]);
        }
        let [a, c] = tree.crown_radii;
        let cz = tree.trunk_height + 0.8 * c;
        // Knud Thomsen's approximation of the spheroid surface
        let pp = 1.6075;
        let area = 4.0 * std::f64::consts::PI * (((a * a).powf(pp) + 2.0 * (a * c).powf(pp)) / 3.0).powf(1.0 / pp);
        for _ in 0..sample_count(&mut rng, spec.density * area).max(1) {
            let u: f64 = rng.random_range(-1.0..=1.0);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - u * u).sqrt();
            let depth = rng.random_range(0.8..=1.0);
            b.push(
                &mut rng,
                Primitive::Crown,
                [cx + depth * a * s * phi.cos(), cy + depth * a * s * phi.sin(), cz + depth * c * u],
            );
        }
    }

    let Builder { positions, colors, mut labels, .. } = b;
    for (class, pal) in spec.palette.iter().enumerate() {
        if !labels.contains(&(class as i32)) {
            return Err(Error::InvalidSpec(format!(
                "class {class} ({}) produced no points; enlarge the extent or the density",
                pal.primitive
            )));
        }
    }
    if spec.partial_annotation {
        let mut rng = seeded(derive_seed(spec.seed, 3));
        let axis = rng.random_range(0..2usize);
        let upper = rng.random::<bool>();
        let mid = spec.extent[axis] / 2.0;
        for (p, l) in positions.iter().zip(labels.iter_mut()) {
            if (p[axis] >= mid) == upper {
                *l = NO_LABEL;
            }
        }
    }
    PointCloud::new(positions, colors, labels, spec.class_count())
}

/// Training and evaluation scenes whose seeds differ by `eval_seed_offset`.
pub fn scene_pair(spec: &SceneSpec, eval_seed_offset: u64) -> Result<(PointCloud, PointCloud)> {
    let train = generate_scene(spec)?;
    let eval_spec = SceneSpec {
        seed: spec.seed.wrapping_add(eval_seed_offset),
        ..spec.clone()
    };
    Ok((train, generate_scene(&eval_spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::fit_ground_plane;

    fn small() -> SceneSpec {
        SceneSpec {
            extent: [25.0, 25.0],
            density: 10.0,
            buildings: 1,
            trees: 3,
            vegetation_patches: 2,
            streets: 1,
            ..SceneSpec::default()
        }
    }

    fn frequencies(c: &PointCloud) -> Vec<f64> {
        let mut f = vec![0.0; c.class_count()];
        for &l in c.gt_labels() {
            if l >= 0 {
                f[l as usize] += 1.0;
            }
        }
        let n: f64 = f.iter().sum();
        f.iter().map(|v| v / n).collect()
    }

    #[test]
    fn generation_is_deterministic() {
        let s = small();
        assert_eq!(generate_scene(&s).unwrap(), generate_scene(&s).unwrap());
        let other = SceneSpec { seed: 1, ..s.clone() };
        assert_ne!(generate_scene(&s).unwrap(), generate_scene(&other).unwrap());
    }

    #[test]
    fn all_classes_present_and_bounded() {
        let s = SceneSpec::default();
        let c = generate_scene(&s).unwrap();
        assert!(c.len() > 80_000 && c.len() < 250_000, "{}", c.len());
        let f = frequencies(&c);
        assert!(f.iter().all(|&v| v > 0.0));
        for p in c.positions() {
            assert!(p[0] >= 0.0 && p[0] <= 50.0 && p[1] >= 0.0 && p[1] <= 50.0);
            assert!(p[2] >= -1.0 && p[2] <= 30.0);
        }
    }

    #[test]
    fn five_class_palette() {
        let mut s = small();
        s.palette.truncate(5);
        let c = generate_scene(&s).unwrap();
        let mut seen: Vec<i32> = c.gt_labels().to_vec();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn ground_only_scene_is_horizontal() {
        let mut s = small();
        s.palette.truncate(2);
        let c = generate_scene(&s).unwrap();
        let (plane, _) = fit_ground_plane(c.positions(), 200, 0.1, 0).unwrap();
        assert!((plane.normal[2] - 1.0).abs() < 1e-3, "{:?}", plane.normal);
    }

    #[test]
    fn pairs() {
        let s = SceneSpec { density: 50.0, ..SceneSpec::default() };
        let (a, b) = scene_pair(&s, 0).unwrap();
        assert_eq!(a, b);
        let (a, b) = scene_pair(&s, 1).unwrap();
        assert_ne!(a.positions(), b.positions());
        assert_eq!(a.class_count(), b.class_count());
        let (fa, fb) = (frequencies(&a), frequencies(&b));
        for (x, y) in fa.iter().zip(&fb) {
            assert!((x - y).abs() <= 0.2 * x.max(*y), "{fa:?} vs {fb:?}");
        }
    }

    #[test]
    fn partial_annotation_hides_half() {
        let s = SceneSpec { partial_annotation: true, ..small() };
        let c = generate_scene(&s).unwrap();
        let hidden = c.gt_labels().iter().filter(|&&l| l == NO_LABEL).count() as f64 / c.len() as f64;
        assert!(hidden > 0.3 && hidden < 0.7, "{hidden}");
    }

    #[test]
    fn parse_config() {
        let s = SceneSpec::parse(
            "extent = 30 20\ndensity = 12.5 # sparse\nseed = 7\nclass.0 = ground 1 2 3 4\nclass.1 = building 9 9 9 0\nbuildings = 2\n",
        )
        .unwrap();
        assert_eq!(s.extent, [30.0, 20.0]);
        assert_eq!(s.density, 12.5);
        assert_eq!(s.seed, 7);
        assert_eq!(s.palette.len(), 2);
        assert_eq!(s.palette[1].primitive, Primitive::Building);
        assert_eq!(SceneSpec::parse("").unwrap(), SceneSpec::default());
        assert!(SceneSpec::parse("density = -1").is_err());
        assert!(SceneSpec::parse("class.0 = ground 1 2 3 4").is_err());
        assert!(SceneSpec::parse("class.0 = ground 1 2 3 4\nclass.2 = street 1 1 1 1").is_err());
        assert!(SceneSpec::parse("colour = red").is_err());
        assert!(SceneSpec::parse("extent = 0 5").is_err());
    }
}
