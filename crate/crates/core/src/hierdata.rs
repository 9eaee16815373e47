//! Synthetic part–whole dataset.
//!
//! Every object is assembled from surface samples of simple primitives laid
//! out by a per-category template, then jittered by a random scale and a
//! rotation about the vertical axis. Parts are cumulative prefixes of the
//! whole's point list, so `P₁ ⊂ P₂ ⊂ … ⊂ W` with strictly increasing sizes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chamfer::{Point3, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Part,
    Whole,
}

/// Axis-aligned primitive centered at the origin; `z` is up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Box { sx: f64, sy: f64, sz: f64 },
    /// Flat disk in the `z = 0` plane.
    Disk { radius: f64 },
    /// Closed cylinder (side and both caps) along `z`.
    Cylinder { radius: f64, height: f64 },
}

impl Primitive {
    fn validate(&self) -> Result<()> {
        let dims: &[f64] = match self {
            Primitive::Box { sx, sy, sz } => &[*sx, *sy, *sz],
            Primitive::Disk { radius } => &[*radius],
            Primitive::Cylinder { radius, height } => &[*radius, *height],
        };
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid(format!("primitive dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Primitive::Box { sx, sy, sz } => 2.0 * (sx * sy + sy * sz + sx * sz),
            Primitive::Disk { radius } => PI * radius * radius,
            Primitive::Cylinder { radius, height } => 2.0 * PI * radius * (radius + height),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        match *self {
            Primitive::Box { sx, sy, sz } => {
                let areas = [sx * sy, sx * sy, sy * sz, sy * sz, sx * sz, sx * sz];
                let face = pick_weighted(&areas, rng);
                let u = rng.random_range(-0.5..0.5);
                let v = rng.random_range(-0.5..0.5);
                let sign = if face % 2 == 0 { 0.5 } else { -0.5 };
                match face / 2 {
                    0 => [u * sx, v * sy, sign * sz],
                    1 => [sign * sx, u * sy, v * sz],
                    _ => [u * sx, sign * sy, v * sz],
                }
            }
            Primitive::Disk { radius } => {
                let (x, y) = disk_point(radius, rng);
                [x, y, 0.0]
            }
            Primitive::Cylinder { radius, height } => {
                let cap = PI * radius * radius;
                let side = 2.0 * PI * radius * height;
                match pick_weighted(&[side, cap, cap], rng) {
                    0 => {
                        let t = rng.random_range(0.0..2.0 * PI);
                        let z = rng.random_range(-0.5..0.5) * height;
                        [radius * t.cos(), radius * t.sin(), z]
                    }
                    k => {
                        let (x, y) = disk_point(radius, rng);
                        [x, y, if k == 1 { 0.5 * height } else { -0.5 * height }]
                    }
                }
            }
        }
    }
}

fn pick_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if t < *w {
            return i;
        }
        t -= w;
    }
    weights.len() - 1
}

fn disk_point(radius: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let t = rng.random_range(0.0..2.0 * PI);
    (r * t.cos(), r * t.sin())
}

/// `n` points uniformly distributed over the primitive's surface.
pub fn sample_primitive(primitive: Primitive, n: usize, seed: u64) -> Result<PointCloud> {
    primitive.validate()?;
    if n == 0 {
        return Err(Error::invalid("cannot sample zero points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new((0..n).map(|_| primitive.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy)]
struct Component {
    primitive: Primitive,
    offset: Point3,
}

fn comp(primitive: Primitive, offset: Point3) -> Component {
    Component { primitive, offset }
}

fn cyl(radius: f64, height: f64) -> Primitive {
    Primitive::Cylinder { radius, height }
}

fn cuboid(sx: f64, sy: f64, sz: f64) -> Primitive {
    Primitive::Box { sx, sy, sz }
}

/// Category names in template order.
pub const CATEGORIES: [&str; 5] = ["table", "chair", "lamp", "stool", "shelf"];

/// Components in part order, roughly centered on the origin.
fn template(category: usize) -> Vec<Component> {
    match category {
        0 => {
            let leg = cyl(0.04, 0.7);
            let mut c: Vec<Component> = [(-0.5, -0.3), (0.5, -0.3), (0.5, 0.3), (-0.5, 0.3)]
                .iter()
                .map(|&(x, y)| comp(leg, [x, y, -0.05]))
                .collect();
            c.push(comp(cuboid(1.2, 0.8, 0.06), [0.0, 0.0, 0.32]));
            c
        }
        1 => {
            let leg = cyl(0.03, 0.45);
            let mut c: Vec<Component> = [(-0.2, -0.2), (0.2, -0.2), (0.2, 0.2), (-0.2, 0.2)]
                .iter()
                .map(|&(x, y)| comp(leg, [x, y, -0.275]))
                .collect();
            c.push(comp(cuboid(0.5, 0.5, 0.05), [0.0, 0.0, -0.025]));
            c.push(comp(cuboid(0.5, 0.05, 0.5), [0.0, -0.225, 0.25]));
            c
        }
        2 => vec![
            comp(Primitive::Disk { radius: 0.25 }, [0.0, 0.0, -0.6]),
            comp(cyl(0.02, 1.0), [0.0, 0.0, -0.1]),
            comp(cyl(0.25, 0.3), [0.0, 0.0, 0.45]),
        ],
        3 => {
            let leg = cyl(0.03, 0.6);
            let mut c: Vec<Component> = (0..3)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / 3.0;
                    comp(leg, [0.2 * t.cos(), 0.2 * t.sin(), -0.3])
                })
                .collect();
            c.push(comp(Primitive::Disk { radius: 0.25 }, [0.0, 0.0, 0.0]));
            c
        }
        _ => {
            let side = cuboid(0.04, 0.3, 1.2);
            let board = cuboid(0.8, 0.3, 0.03);
            vec![
                comp(side, [-0.42, 0.0, 0.0]),
                comp(side, [0.42, 0.0, 0.0]),
                comp(board, [0.0, 0.0, -0.5]),
                comp(board, [0.0, 0.0, 0.0]),
                comp(board, [0.0, 0.0, 0.5]),
            ]
        }
    }
}

/// Split `n` points across components proportionally to surface area
/// (largest remainder), giving every component at least one point.
fn allocate(components: &[Component], n: usize) -> Vec<usize> {
    let k = components.len();
    let areas: Vec<f64> = components.iter().map(|c| c.primitive.surface_area()).collect();
    let total: f64 = areas.iter().sum();
    let spare = n - k;
    let exact: Vec<f64> = areas.iter().map(|a| a / total * spare as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(spare - assigned) {
        counts[i] += 1;
    }
    counts.iter().map(|c| c + 1).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub category: String,
    pub role: Role,
    pub n_points: usize,
    pub parent_id: Option<String>,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_categories: usize,
    pub objects_per_category: usize,
    pub parts_per_object: usize,
    pub points_whole: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_categories: 5,
            objects_per_category: 20,
            parts_per_object: 3,
            points_whole: 1024,
            seed: 42,
        }
    }
}

/// Catalogue of part and whole samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyManifest {
    samples: Vec<SampleRecord>,
    categories: Vec<String>,
    seed: u64,
}

impl HierarchyManifest {
    /// Validate and wrap a set of samples.
    pub fn new(samples: Vec<SampleRecord>, categories: Vec<String>, seed: u64) -> Result<Self> {
        let m = Self {
            samples,
            categories,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    /// Whole index → indices of its parts, in manifest order.
    pub fn objects(&self) -> BTreeMap<usize, Vec<usize>> {
        let by_id: HashMap<&str, usize> = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            match (s.role, &s.parent_id) {
                (Role::Whole, _) => {
                    out.entry(i).or_default();
                }
                (Role::Part, Some(p)) => out.entry(by_id[p.as_str()]).or_default().push(i),
                (Role::Part, None) => {}
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.len() < 2 {
            return Err(Error::invalid(format!(
                "manifest has {} categor{}; triplet mining needs at least 2",
                self.categories.len(),
                if self.categories.len() == 1 { "y" } else { "ies" }
            )));
        }
        let cats: HashSet<&str> = self.categories.iter().map(String::as_str).collect();
        let mut by_id: HashMap<&str, &SampleRecord> = HashMap::new();
        for s in &self.samples {
            if by_id.insert(&s.id, s).is_some() {
                return Err(Error::invalid(format!("duplicate sample id {}", s.id)));
            }
            if !cats.contains(s.category.as_str()) {
                return Err(Error::invalid(format!("{}: unknown category {}", s.id, s.category)));
            }
            if s.n_points != s.cloud.len() {
                return Err(Error::invalid(format!(
                    "{}: n_points {} but cloud has {} points",
                    s.id,
                    s.n_points,
                    s.cloud.len()
                )));
            }
        }
        for s in &self.samples {
            match (s.role, &s.parent_id) {
                (Role::Whole, Some(_)) => {
                    return Err(Error::invalid(format!("{}: a whole cannot have a parent", s.id)))
                }
                (Role::Part, None) => {
                    return Err(Error::invalid(format!("{}: part without parent_id", s.id)))
                }
                (Role::Part, Some(p)) => {
                    let parent = by_id.get(p.as_str()).ok_or_else(|| {
                        Error::invalid(format!("{}: parent {p} does not exist", s.id))
                    })?;
                    if parent.role != Role::Whole || parent.category != s.category {
                        return Err(Error::invalid(format!(
                            "{}: parent {p} is not a whole of category {}",
                            s.id, s.category
                        )));
                    }
                }
                (Role::Whole, None) => {}
            }
        }
        for (whole, parts) in self.objects() {
            let w = &self.samples[whole];
            if parts.windows(2).any(|p| self.samples[p[0]].n_points >= self.samples[p[1]].n_points) {
                return Err(Error::invalid(format!(
                    "{}: parts are not ordered by strictly increasing size",
                    w.id
                )));
            }
            let mut chain: Vec<&SampleRecord> = parts.iter().map(|&i| &self.samples[i]).collect();
            chain.push(w);
            for pair in chain.windows(2) {
                if pair[0].n_points >= pair[1].n_points || !is_subset(&pair[0].cloud, &pair[1].cloud) {
                    return Err(Error::invalid(format!(
                        "{} is not a strict subset of {}",
                        pair[0].id, pair[1].id
                    )));
                }
            }
        }
        Ok(())
    }
}

fn point_key(p: &Point3) -> [u64; 3] {
    [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()]
}

/// Exact point-identity containment.
pub fn is_subset(small: &PointCloud, big: &PointCloud) -> bool {
    let set: HashSet<[u64; 3]> = big.points().iter().map(point_key).collect();
    small.points().iter().all(|p| set.contains(&point_key(p)))
}

fn object_cloud(category: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let components = template(category);
    let counts = allocate(&components, n);
    let scale = rng.random_range(0.8..1.2);
    let theta = rng.random_range(0.0..2.0 * PI);
    let (s, c) = theta.sin_cos();
    let mut pts = Vec::with_capacity(n);
    for (component, &k) in components.iter().zip(&counts) {
        for _ in 0..k {
            let p = component.primitive.sample(rng);
            let x = p[0] + component.offset[0];
            let y = p[1] + component.offset[1];
            let z = p[2] + component.offset[2];
            pts.push([scale * (c * x - s * y), scale * (s * x + c * y), scale * z]);
        }
    }
    pts
}

/// Build the synthetic manifest.
///
/// Each object draws from its own ChaCha stream, so objects are independent
/// of generation order.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<HierarchyManifest> {
    if cfg.n_categories < 2 || cfg.n_categories > CATEGORIES.len() {
        return Err(Error::invalid(format!(
            "n_categories must be in 2..={}, got {}",
            CATEGORIES.len(),
            cfg.n_categories
        )));
    }
    if cfg.objects_per_category == 0 {
        return Err(Error::invalid("objects_per_category must be at least 1"));
    }
    if cfg.parts_per_object < 2 {
        return Err(Error::invalid(format!(
            "parts_per_object must be at least 2, got {}",
            cfg.parts_per_object
        )));
    }
    let min_points = (cfg.parts_per_object + 1).max(8);
    if cfg.points_whole < min_points {
        return Err(Error::invalid(format!(
            "points_whole must be at least {min_points}, got {}",
            cfg.points_whole
        )));
    }

    let mut samples = Vec::new();
    for cat in 0..cfg.n_categories {
        let name = CATEGORIES[cat];
        for obj in 0..cfg.objects_per_category {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((cat * cfg.objects_per_category + obj) as u64);
            let pts = object_cloud(cat, cfg.points_whole, &mut rng);
            let whole_id = format!("{name}_{obj:03}_whole");
            for p in 1..=cfg.parts_per_object {
                let n = p * cfg.points_whole / (cfg.parts_per_object + 1);
                samples.push(SampleRecord {
                    id: format!("{name}_{obj:03}_part{p}"),
                    category: name.to_string(),
                    role: Role::Part,
                    n_points: n,
                    parent_id: Some(whole_id.clone()),
                    cloud: PointCloud::new(pts[..n].to_vec())?,
                });
            }
            samples.push(SampleRecord {
                id: whole_id,
                category: name.to_string(),
                role: Role::Whole,
                n_points: pts.len(),
                parent_id: None,
                cloud: PointCloud::new(pts)?,
            });
        }
    }
    let categories = CATEGORIES[..cfg.n_categories]
        .iter()
        .map(|s| s.to_string())
        .collect();
    HierarchyManifest::new(samples, categories, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chamfer::{chamfer_distance, ChamferVariant};

    #[test]
    fn disk_samples_lie_on_disk() {
        let c = sample_primitive(Primitive::Disk { radius: 1.0 }, 1000, 1).unwrap();
        assert_eq!(c.len(), 1000);
        for p in c.points() {
            assert!(p[0] * p[0] + p[1] * p[1] <= 1.0);
            assert_eq!(p[2], 0.0);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let prim = cyl(0.3, 1.0);
        assert_eq!(
            sample_primitive(prim, 200, 7).unwrap(),
            sample_primitive(prim, 200, 7).unwrap()
        );
        assert_ne!(
            sample_primitive(prim, 200, 7).unwrap(),
            sample_primitive(prim, 200, 8).unwrap()
        );
    }

    #[test]
    fn box_faces_are_area_weighted() {
        let c = sample_primitive(cuboid(1.0, 1.0, 1.0), 6000, 3).unwrap();
        let mut counts = [0usize; 6];
        for p in c.points() {
            let face = (0..3)
                .find(|&a| p[a].abs() == 0.5)
                .map(|a| 2 * a + usize::from(p[a] < 0.0))
                .expect("point not on a face");
            counts[face] += 1;
        }
        // binomial(6000, 1/6): σ ≈ 28.87
        let sigma = (6000.0f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for k in counts {
            assert!((k as f64 - 1000.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn cylinder_points_on_surface() {
        let c = sample_primitive(cyl(0.5, 2.0), 2000, 4).unwrap();
        for p in c.points() {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let on_side = (r - 0.5).abs() < 1e-12 && p[2].abs() <= 1.0;
            let on_cap = r <= 0.5 + 1e-12 && p[2].abs() == 1.0;
            assert!(on_side || on_cap);
        }
    }

    #[test]
    fn bad_primitives_rejected() {
        assert!(sample_primitive(Primitive::Disk { radius: 0.0 }, 10, 0).is_err());
        assert!(sample_primitive(cuboid(1.0, -1.0, 1.0), 10, 0).is_err());
        assert!(sample_primitive(cyl(1.0, 1.0), 0, 0).is_err());
    }

    #[test]
    fn default_dataset_shape() {
        let m = generate_dataset(&DatasetConfig::default()).unwrap();
        assert_eq!(m.len(), 400);
        assert_eq!(m.categories().len(), 5);
        let objects = m.objects();
        assert_eq!(objects.len(), 100);
        for (whole, parts) in objects {
            assert_eq!(parts.len(), 3);
            let w = &m.samples()[whole];
            for &p in &parts {
                let part = &m.samples()[p];
                assert!(part.n_points < w.n_points);
                assert!(is_subset(&part.cloud, &w.cloud));
            }
        }
    }

    #[test]
    fn seeds_change_clouds_not_shape() {
        let a = generate_dataset(&DatasetConfig { seed: 1, ..Default::default() }).unwrap();
        let b = generate_dataset(&DatasetConfig { seed: 2, ..Default::default() }).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!((&x.id, x.role, x.n_points), (&y.id, y.role, y.n_points));
            assert_ne!(x.cloud, y.cloud);
        }
        let a2 = generate_dataset(&DatasetConfig { seed: 1, ..Default::default() }).unwrap();
        assert_eq!(a, a2);
    }

    #[test]
    fn parameter_bounds() {
        let base = DatasetConfig::default();
        for bad in [
            DatasetConfig { n_categories: 1, ..base },
            DatasetConfig { n_categories: 6, ..base },
            DatasetConfig { parts_per_object: 1, ..base },
            DatasetConfig { objects_per_category: 0, ..base },
            DatasetConfig { points_whole: 3, ..base },
        ] {
            assert!(generate_dataset(&bad).is_err());
        }
    }

    #[test]
    fn validation_catches_broken_manifests() {
        let m = generate_dataset(&DatasetConfig {
            objects_per_category: 2,
            points_whole: 64,
            ..Default::default()
        })
        .unwrap();
        let mut samples = m.samples().to_vec();
        samples[0].parent_id = Some("missing".into());
        assert!(HierarchyManifest::new(samples, m.categories().to_vec(), 0).is_err());

        let mut samples = m.samples().to_vec();
        samples[1].cloud = PointCloud::new(vec![[9.0, 9.0, 9.0]; samples[1].n_points]).unwrap();
        assert!(HierarchyManifest::new(samples, m.categories().to_vec(), 0).is_err());

        let one: Vec<SampleRecord> = m
            .samples()
            .iter()
            .filter(|s| s.category == "table")
            .cloned()
            .collect();
        let err = HierarchyManifest::new(one, vec!["table".into()], 0).unwrap_err();
        assert!(err.to_string().contains("triplet mining"));
    }

    #[test]
    fn categories_are_separable() {
        let m = generate_dataset(&DatasetConfig {
            objects_per_category: 5,
            points_whole: 512,
            ..Default::default()
        })
        .unwrap();
        let wholes: Vec<&SampleRecord> =
            m.samples().iter().filter(|s| s.role == Role::Whole).collect();
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for i in 0..wholes.len() {
            for j in i + 1..wholes.len() {
                let d = chamfer_distance(&wholes[i].cloud, &wholes[j].cloud, ChamferVariant::L1)
                    .unwrap();
                if wholes[i].category == wholes[j].category {
                    intra += d;
                    ni += 1;
                } else {
                    inter += d;
                    nx += 1;
                }
            }
        }
        assert!(inter / nx as f64 > intra / ni as f64);
    }
}
