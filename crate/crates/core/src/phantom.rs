//! Binary polygon phantoms: parallelograms, triangles and pentagons.
//!
//! Shape parameters are expressed in a 240×240 reference frame and scaled
//! to the requested grid when rasterised. A pixel is foreground when its
//! centre lies inside the closed polygon.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image::Image;

/// Grid size in which [`ShapeSpec`] radii and centres are expressed.
pub const REFERENCE_GRID: usize = 240;
/// Fixed circumscribed-circle centre `(x, y)` in the reference frame.
pub const REFERENCE_CENTER: (f64, f64) = (110.0, 130.0);

#[derive(Debug, Error, PartialEq)]
pub enum PhantomError {
    #[error("{kind} radius {radius} outside [{min}, {max}]")]
    RadiusOutOfRange {
        kind: ShapeKind,
        radius: f64,
        min: f64,
        max: f64,
    },
    #[error("center ({0}, {1}) differs from the dataset center (110, 130)")]
    CenterOutOfRange(f64, f64),
    #[error("rotation {0} outside [0, 360)")]
    RotationOutOfRange(f64),
    #[error("polygon leaves the {grid}x{grid} grid")]
    ShapeClipped { grid: usize },
    #[error("rotation pool is empty")]
    EmptyRotationPool,
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeKind {
    Parallelogram,
    Triangle,
    Pentagon,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Parallelogram, ShapeKind::Triangle, ShapeKind::Pentagon];

    /// Circumscribed-radius range in the reference frame.
    pub fn radius_range(self) -> (f64, f64) {
        match self {
            ShapeKind::Parallelogram => (42.0, 51.0),
            ShapeKind::Triangle | ShapeKind::Pentagon => (56.0, 89.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Parallelogram => "parallelogram",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Pentagon => "pentagon",
        }
    }

    /// Unrotated vertices on the unit circumscribed circle.
    fn unit_vertices(self) -> Vec<(f64, f64)> {
        match self {
            // Rhombus with a 60° interior angle: long half-diagonal on the
            // circle, short half-diagonal r·tan 30°.
            ShapeKind::Parallelogram => {
                let short = (PI / 6.0).tan();
                vec![(1.0, 0.0), (0.0, short), (-1.0, 0.0), (0.0, -short)]
            }
            ShapeKind::Triangle => regular(3),
            ShapeKind::Pentagon => regular(5),
        }
    }
}

fn regular(n: usize) -> Vec<(f64, f64)> {
    // First vertex points up (negative y in image coordinates).
    (0..n)
        .map(|k| {
            let t = -PI / 2.0 + 2.0 * PI * k as f64 / n as f64;
            (t.cos(), t.sin())
        })
        .collect()
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parallelogram" => Ok(ShapeKind::Parallelogram),
            "triangle" => Ok(ShapeKind::Triangle),
            "pentagon" => Ok(ShapeKind::Pentagon),
            other => Err(format!("unknown shape '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Circumscribed-circle radius, reference-frame pixels.
    pub radius: f64,
    /// Degrees in `[0, 360)`.
    pub rotation: f64,
    /// `(x, y)` = (column, row), reference-frame pixels.
    pub center: (f64, f64),
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, radius: f64, rotation: f64) -> Self {
        ShapeSpec {
            kind,
            radius,
            rotation,
            center: REFERENCE_CENTER,
        }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let (min, max) = self.kind.radius_range();
        if !(self.radius >= min - 1e-9 && self.radius <= max + 1e-9) {
            return Err(PhantomError::RadiusOutOfRange {
                kind: self.kind,
                radius: self.radius,
                min,
                max,
            });
        }
        if (self.center.0 - REFERENCE_CENTER.0).abs() > 1e-9 || (self.center.1 - REFERENCE_CENTER.1).abs() > 1e-9 {
            return Err(PhantomError::CenterOutOfRange(self.center.0, self.center.1));
        }
        if !(0.0..360.0).contains(&self.rotation) {
            return Err(PhantomError::RotationOutOfRange(self.rotation));
        }
        Ok(())
    }

    /// Polygon vertices in pixel coordinates of a `grid`×`grid` image.
    pub fn vertices(&self, grid: usize) -> Vec<(f64, f64)> {
        let scale = grid as f64 / REFERENCE_GRID as f64;
        let (cx, cy) = (self.center.0 * scale, self.center.1 * scale);
        let r = self.radius * scale;
        let (sin, cos) = self.rotation.to_radians().sin_cos();
        self.kind
            .unit_vertices()
            .into_iter()
            .map(|(x, y)| (cx + r * (x * cos - y * sin), cy + r * (x * sin + y * cos)))
            .collect()
    }

    pub fn id(&self) -> String {
        format!(
            "{}-r{:.3}-rot{:.1}-c{:.0},{:.0}",
            self.kind, self.radius, self.rotation, self.center.0, self.center.1
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub image: Image,
    pub spec: ShapeSpec,
    pub id: String,
}

/// Rasterises the convex polygon for `spec` onto a `grid`×`grid` image.
pub fn generate_phantom(spec: &ShapeSpec, grid: usize) -> Result<Phantom, PhantomError> {
    spec.validate()?;
    let verts = spec.vertices(grid);
    let hi = grid as f64 - 1.0;
    if verts.iter().any(|&(x, y)| x < 0.0 || y < 0.0 || x > hi || y > hi) {
        return Err(PhantomError::ShapeClipped { grid });
    }
    let image = rasterize_convex(&verts, grid);
    Ok(Phantom {
        image,
        spec: spec.clone(),
        id: spec.id(),
    })
}

/// Pixel-centre test against every edge half-plane of a convex polygon.
pub fn rasterize_convex(verts: &[(f64, f64)], grid: usize) -> Image {
    // Orientation-agnostic: accept if all cross products share a sign.
    let n = verts.len();
    let (min_x, max_x, min_y, max_y) = verts.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    let col_range = (min_x.floor().max(0.0) as usize)..=(max_x.ceil().min(grid as f64 - 1.0) as usize);
    let row_range = (min_y.floor().max(0.0) as usize)..=(max_y.ceil().min(grid as f64 - 1.0) as usize);
    let mut img = Image::zeros(grid);
    const EPS: f64 = 1e-9;
    for row in row_range {
        for col in col_range.clone() {
            let (px, py) = (col as f64, row as f64);
            let mut pos = false;
            let mut neg = false;
            for i in 0..n {
                let (ax, ay) = verts[i];
                let (bx, by) = verts[(i + 1) % n];
                let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
                if cross > EPS {
                    pos = true;
                } else if cross < -EPS {
                    neg = true;
                }
            }
            if !(pos && neg) {
                img[(row, col)] = 1.0;
            }
        }
    }
    img
}

/// Rotation pools. Validation angles sit half a degree off the training
/// grid so they never coincide.
pub fn training_rotations() -> Vec<f64> {
    (0..360).map(|d| d as f64).collect()
}

pub fn validation_rotations() -> Vec<f64> {
    (0..360).map(|d| d as f64 + 0.5).collect()
}

/// One entry of a dataset manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub spec: ShapeSpec,
    pub seed: u64,
}

/// Draws `n_per_shape` phantoms per kind, radii uniform in the kind's range,
/// rotations uniform over `rotation_pool`.
pub fn sample_specs(seed: u64, n_per_shape: usize, rotation_pool: &[f64]) -> Result<Vec<ShapeSpec>, PhantomError> {
    if rotation_pool.is_empty() {
        return Err(PhantomError::EmptyRotationPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut specs = Vec::with_capacity(3 * n_per_shape);
    for kind in ShapeKind::ALL {
        let (lo, hi) = kind.radius_range();
        for _ in 0..n_per_shape {
            let radius = rng.random_range(lo..=hi);
            let rotation = rotation_pool[rng.random_range(0..rotation_pool.len())];
            specs.push(ShapeSpec::new(kind, radius, rotation));
        }
    }
    Ok(specs)
}

pub fn sample_dataset(
    seed: u64,
    n_per_shape: usize,
    grid: usize,
    rotation_pool: &[f64],
) -> Result<Vec<Phantom>, PhantomError> {
    sample_specs(seed, n_per_shape, rotation_pool)?
        .iter()
        .map(|s| generate_phantom(s, grid))
        .collect()
}

pub fn write_manifest<W: Write>(mut out: W, records: &[ManifestRecord]) -> io::Result<()> {
    writeln!(out, "# id\tkind\tradius\trotation\tcenter_x\tcenter_y\tseed")?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{}",
            r.id, r.spec.kind, r.spec.radius, r.spec.rotation, r.spec.center.0, r.spec.center.1, r.seed
        )?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<ManifestRecord>, PhantomError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| PhantomError::Manifest {
            line: line_no,
            msg: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| PhantomError::Manifest { line: line_no, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
        out.push(ManifestRecord {
            id: fields[0].to_string(),
            spec: ShapeSpec {
                kind: fields[1].parse().map_err(err)?,
                radius: num(fields[2])?,
                rotation: num(fields[3])?,
                center: (num(fields[4])?, num(fields[5])?),
            },
            seed: fields[6].parse().map_err(|e| err(format!("seed: {e}")))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Crossing-number point-in-polygon with explicit on-edge acceptance.
    fn inside_oracle(verts: &[(f64, f64)], px: f64, py: f64) -> bool {
        let n = verts.len();
        for i in 0..n {
            let (ax, ay) = verts[i];
            let (bx, by) = verts[(i + 1) % n];
            let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
            let within = (px - ax) * (px - bx) <= 1e-9 && (py - ay) * (py - by) <= 1e-9;
            if cross.abs() <= 1e-9 && within {
                return true;
            }
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (xi, yi) = verts[i];
            let (xj, yj) = verts[j];
            if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    #[test]
    fn pentagon_count_matches_point_in_polygon_scan() {
        let spec = ShapeSpec::new(ShapeKind::Pentagon, 56.0, 0.0);
        let p = generate_phantom(&spec, 240).unwrap();
        let verts = spec.vertices(240);
        let mut expected = 0;
        for r in 0..240 {
            for c in 0..240 {
                if inside_oracle(&verts, c as f64, r as f64) {
                    expected += 1;
                }
            }
        }
        assert_eq!(p.image.count_nonzero(), expected);
        assert!(expected > 7000);
    }

    #[test]
    fn triangle_has_threefold_symmetry() {
        for r in [56.0, 70.5, 89.0] {
            let a = generate_phantom(&ShapeSpec::new(ShapeKind::Triangle, r, 0.0), 240).unwrap();
            let b = generate_phantom(&ShapeSpec::new(ShapeKind::Triangle, r, 120.0), 240).unwrap();
            let (na, nb) = (a.image.count_nonzero() as f64, b.image.count_nonzero() as f64);
            assert!((na - nb).abs() / na < 0.01);
        }
    }

    #[test]
    fn parallelogram_within_circumscribed_circle() {
        let spec = ShapeSpec::new(ShapeKind::Parallelogram, 42.0, 37.0);
        let p = generate_phantom(&spec, 240).unwrap();
        for r in 0..240 {
            for c in 0..240 {
                if p.image[(r, c)] > 0.0 {
                    let d = ((c as f64 - 110.0).powi(2) + (r as f64 - 130.0).powi(2)).sqrt();
                    assert!(d <= 43.0);
                }
            }
        }
    }

    #[test]
    fn out_of_range_specs_are_rejected() {
        let bad = ShapeSpec::new(ShapeKind::Parallelogram, 60.0, 0.0);
        assert!(matches!(generate_phantom(&bad, 240), Err(PhantomError::RadiusOutOfRange { .. })));
        let mut off = ShapeSpec::new(ShapeKind::Triangle, 60.0, 0.0);
        off.center = (100.0, 130.0);
        assert!(matches!(generate_phantom(&off, 240), Err(PhantomError::CenterOutOfRange(..))));
        // 89-pixel pentagon no longer fits once the grid is cut down.
        let big = ShapeSpec::new(ShapeKind::Pentagon, 89.0, 0.0);
        let verts = big.vertices(240);
        assert!(verts.iter().all(|&(x, y)| (0.0..=239.0).contains(&x) && (0.0..=239.0).contains(&y)));
    }

    #[test]
    fn dataset_is_balanced_and_deterministic() {
        let pool = training_rotations();
        let a = sample_dataset(42, 3, 64, &pool).unwrap();
        let b = sample_dataset(42, 3, 64, &pool).unwrap();
        assert_eq!(a.len(), 9);
        for kind in ShapeKind::ALL {
            assert_eq!(a.iter().filter(|p| p.spec.kind == kind).count(), 3);
        }
        assert_eq!(a, b);
        assert!(matches!(sample_dataset(1, 1, 64, &[]), Err(PhantomError::EmptyRotationPool)));
    }

    #[test]
    fn train_and_validation_pools_are_disjoint() {
        let train = sample_specs(1, 50, &training_rotations()).unwrap();
        let val = sample_specs(1, 50, &validation_rotations()).unwrap();
        for v in &val {
            assert!(train.iter().all(|t| t.rotation != v.rotation));
        }
    }

    #[test]
    fn manifest_round_trip() {
        let specs = sample_specs(3, 2, &validation_rotations()).unwrap();
        let records: Vec<_> = specs
            .into_iter()
            .map(|spec| ManifestRecord {
                id: spec.id(),
                spec,
                seed: 3,
            })
            .collect();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &records).unwrap();
        assert_eq!(read_manifest(&buf[..]).unwrap(), records);
        assert!(read_manifest(&b"a\tb\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn every_generated_phantom_fits_the_desk_grid(seed in 0u64..500) {
            for p in sample_dataset(seed, 1, 64, &training_rotations()).unwrap() {
                prop_assert!(p.spec.validate().is_ok());
                prop_assert!(p.image.data().iter().all(|&v| v == 0.0 || v == 1.0));
                prop_assert!(p.image.count_nonzero() > 0);
            }
        }

        #[test]
        fn area_monotone_in_radius(t in 0.0f64..1.0, dt in 0.0f64..1.0, rot in 0u32..360, k in 0usize..3) {
            let kind = ShapeKind::ALL[k];
            let (lo, hi) = kind.radius_range();
            let r1 = lo + t * (hi - lo);
            let r2 = r1 + dt * (hi - r1);
            let a = generate_phantom(&ShapeSpec::new(kind, r1, rot as f64), 64).unwrap();
            let b = generate_phantom(&ShapeSpec::new(kind, r2, rot as f64), 64).unwrap();
            prop_assert!(a.image.count_nonzero() <= b.image.count_nonzero());
        }
    }
}
