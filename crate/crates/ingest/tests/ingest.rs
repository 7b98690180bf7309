use std::cell::RefCell;
use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use soed_core::{Geometry, Image, Projector, SirtConfig};
use soed_ingest::manifest::sha256_bytes;
use soed_ingest::preprocess::FanSinogram;
use soed_ingest::raw::{RAW_COLUMNS, RAW_PROJECTIONS, RAW_ROWS};
use soed_ingest::{
    fetch_dataset, preprocess, read_flexray_dir, rebin_fan_to_parallel, FanGeometry, IngestError, Manifest, ManifestEntry,
    PreprocessConfig, RawScan, Transport,
};

struct MockTransport {
    files: HashMap<String, Vec<u8>>,
    calls: RefCell<Vec<String>>,
}

impl Transport for MockTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, IngestError> {
        self.calls.borrow_mut().push(url.to_string());
        self.files.get(url).cloned().ok_or_else(|| IngestError::Network(format!("404 {url}")))
    }
}

fn mock() -> (MockTransport, Manifest) {
    let files = [("triangle_01_600uA/scan_000000.tif", b"first".to_vec()), ("pentagon_12_100uA/io000000.tif", b"second file".to_vec())];
    let manifest = Manifest {
        entries: files
            .iter()
            .map(|(p, b)| ManifestEntry { path: p.to_string(), size: b.len() as u64, sha256: sha256_bytes(b) })
            .collect(),
    };
    let t = MockTransport {
        files: files.into_iter().map(|(p, b)| (format!("http://mirror/rec/{p}"), b)).collect(),
        calls: RefCell::new(Vec::new()),
    };
    (t, manifest)
}

#[test]
fn warm_cache_makes_no_requests() {
    let dir = tempfile::tempdir().unwrap();
    let (t, m) = mock();
    let r1 = fetch_dataset("http://mirror/rec/", &m, dir.path(), &t).unwrap();
    assert_eq!(r1.downloaded.len(), 2);
    assert_eq!(t.calls.borrow().len(), 2);
    let r2 = fetch_dataset("http://mirror/rec", &m, dir.path(), &t).unwrap();
    assert_eq!(r2.reused.len(), 2);
    assert_eq!(t.calls.borrow().len(), 2);
    assert_eq!(m.groups().len(), 2);
}

#[test]
fn corrupted_cache_entry_is_detected_and_fetched_again() {
    let dir = tempfile::tempdir().unwrap();
    let (t, m) = mock();
    fetch_dataset("http://mirror/rec", &m, dir.path(), &t).unwrap();
    let p = dir.path().join("pentagon_12_100uA/io000000.tif");
    fs::write(&p, b"second fild").unwrap();
    let r = fetch_dataset("http://mirror/rec", &m, dir.path(), &t).unwrap();
    assert_eq!(r.repaired.len(), 1);
    assert!(r.repaired[0].1.contains("checksum mismatch"));
    assert_eq!(fs::read(&p).unwrap(), b"second file");
    assert_eq!(t.calls.borrow().len(), 3);
}

#[test]
fn bad_remote_bytes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (mut t, m) = mock();
    t.files.insert("http://mirror/rec/triangle_01_600uA/scan_000000.tif".into(), b"fir5t".to_vec());
    let err = fetch_dataset("http://mirror/rec", &m, dir.path(), &t).unwrap_err();
    assert!(matches!(err, IngestError::ChecksumMismatch { .. }));
    assert!(!dir.path().join("triangle_01_600uA/scan_000000.tif").exists());
}

fn write_tiff(path: &Path, w: u32, h: u32, data: &[u16]) {
    let f = fs::File::create(path).unwrap();
    let mut enc = tiff::encoder::TiffEncoder::new(f).unwrap();
    enc.write_image::<tiff::encoder::colortype::Gray16>(w, h, data).unwrap();
}

#[test]
fn flexray_directory_reader_averages_reference_fields() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (12u32, 3u32);
    for k in 0..5u16 {
        let data: Vec<u16> = (0..w * h).map(|i| 1000 + k * 10 + i as u16).collect();
        write_tiff(&dir.path().join(format!("scan_{k:06}.tif")), w, h, &data);
    }
    write_tiff(&dir.path().join("io000000.tif"), w, h, &vec![4000; 36]);
    write_tiff(&dir.path().join("io000001.tif"), w, h, &vec![4200; 36]);
    write_tiff(&dir.path().join("di000000.tif"), w, h, &vec![100; 36]);
    let raw = read_flexray_dir(dir.path(), FanGeometry::flexray(0.1496), 600, "t").unwrap();
    assert_eq!((raw.n_projections, raw.rows, raw.cols), (5, 3, 12));
    assert_eq!(raw.pixel(3, 1, 2), (1000 + 30 + 14) as f32);
    assert_eq!(raw.flat.as_ref().unwrap()[0], 4100.0);
    assert_eq!(raw.dark.as_ref().unwrap()[7], 100.0);
}

fn full_raw(intensity: impl Fn(usize, usize) -> f32, with_flat: bool) -> RawScan {
    let mut projections = vec![0f32; RAW_PROJECTIONS * RAW_ROWS * RAW_COLUMNS];
    for v in 0..RAW_PROJECTIONS {
        for r in 0..RAW_ROWS {
            for c in 0..RAW_COLUMNS {
                projections[(v * RAW_ROWS + r) * RAW_COLUMNS + c] = intensity(v, c);
            }
        }
    }
    RawScan {
        n_projections: RAW_PROJECTIONS,
        rows: RAW_ROWS,
        cols: RAW_COLUMNS,
        projections,
        flat: with_flat.then(|| vec![5000.0; RAW_ROWS * RAW_COLUMNS]),
        dark: with_flat.then(|| vec![200.0; RAW_ROWS * RAW_COLUMNS]),
        geometry: FanGeometry::flexray(FanGeometry::RAW_PITCH),
        current_ua: 600,
        label: "synthetic".into(),
    }
}

#[test]
fn preprocessing_shapes_and_beer_lambert_contracts() {
    // Attenuation grows with the column index; air path in column 0.
    let raw = full_raw(|_, c| if c == 0 { 5000.0 } else { 200.0 + 4800.0 * (-(c as f32) / 300.0).exp() }, true);
    let out = preprocess(&raw, &PreprocessConfig::default()).unwrap();
    let s = &out.sinogram;
    assert_eq!((s.n_views, s.n_cols), (361, 239));
    assert!(out.warnings.is_empty());
    assert_eq!(s.angles_deg[1], 1.0);
    assert_eq!(s.angles_deg[360], 360.0);
    assert!((s.geometry.pitch - 4.0 * FanGeometry::RAW_PITCH).abs() < 1e-12);
    for v in [0, 100, 360] {
        assert_eq!(s.at(v, 0), 0.0);
        for c in 1..239 {
            assert!(s.at(v, c) > s.at(v, c - 1));
        }
    }
    let again = preprocess(&raw, &PreprocessConfig::default()).unwrap();
    assert_eq!(again, out);
}

#[test]
fn missing_flat_field_falls_back_with_warning() {
    let raw = full_raw(|v, c| 1000.0 + (v % 7) as f32 + c as f32, false);
    let out = preprocess(&raw, &PreprocessConfig::default()).unwrap();
    assert_eq!(out.warnings.len(), 2);
    assert!(out.sinogram.data.iter().all(|&p| p >= 0.0));
    assert!(out.sinogram.data.iter().any(|&p| p == 0.0));
}

/// Chord length of a disk `(cx, cy, r)` [mm] along the parallel ray (φ, s).
fn disk_chord(disks: &[(f64, f64, f64, f64)], phi_deg: f64, s: f64) -> f64 {
    let (sn, cs) = phi_deg.to_radians().sin_cos();
    disks
        .iter()
        .map(|&(cx, cy, r, mu)| {
            let d = s - (cx * cs + cy * sn);
            if d.abs() < r { 2.0 * mu * (r * r - d * d).sqrt() } else { 0.0 }
        })
        .sum()
}

fn analytic_fan(disks: &[(f64, f64, f64, f64)], geom: FanGeometry) -> FanSinogram {
    let (n_views, n_cols) = (361, 239);
    let sdd = geom.source_detector();
    let mut data = Vec::with_capacity(n_views * n_cols);
    for v in 0..n_views {
        let beta = v as f64;
        for c in 0..n_cols {
            let u = (c as f64 - (n_cols as f64 - 1.0) / 2.0) * geom.pitch;
            let gamma = (u / sdd).atan();
            data.push(disk_chord(disks, beta + gamma.to_degrees(), geom.source_object * gamma.sin()));
        }
    }
    FanSinogram { n_views, n_cols, data, angles_deg: (0..n_views).map(|v| v as f64).collect(), geometry: geom }
}

/// Supersampled disk image; pixel values in attenuation × pixel size so the
/// projector (pixel units) returns millimetre line integrals.
fn disk_image(disks: &[(f64, f64, f64, f64)], g: usize, px: f64) -> Image {
    let ss = 6;
    Image::from_fn(g, |row, col| {
        let mut acc = 0.0;
        for a in 0..ss {
            for b in 0..ss {
                let x = (col as f64 - (g as f64 - 1.0) / 2.0 + (b as f64 + 0.5) / ss as f64 - 0.5) * px;
                let y = (row as f64 - (g as f64 - 1.0) / 2.0 + (a as f64 + 0.5) / ss as f64 - 0.5) * px;
                for &(cx, cy, r, mu) in disks {
                    if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                        acc += mu;
                    }
                }
            }
        }
        acc / (ss * ss) as f64 * px
    })
}

#[test]
fn rebinned_disks_match_direct_parallel_projection() {
    let geom = FanGeometry::flexray(4.0 * FanGeometry::RAW_PITCH);
    let px = geom.pitch / geom.magnification();
    let disks = [(5.0, -8.0, 16.0, 0.02), (-14.0, 10.0, 6.0, 0.05)];
    let fan = analytic_fan(&disks, geom);
    let par = rebin_fan_to_parallel(&fan, 240, None).unwrap();
    assert_eq!(par.angles.len(), 180);

    let proj = Projector::new(Geometry::square(240));
    let direct = proj.project_all(&disk_image(&disks, 240, px)).unwrap();
    let num: f64 = par.data.iter().zip(&direct.data).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = direct.data.iter().map(|b| b * b).sum();
    let rel = (num / den).sqrt();
    assert!(rel < 0.02, "relative RMSE {rel}");
    for v in 0..180 {
        let a: f64 = par.row(v).iter().sum();
        let b: f64 = direct.row(v).iter().sum();
        assert!((a - b).abs() / b < 0.03, "view {v}: {a} vs {b}");
    }
}

#[test]
fn reference_reconstruction_is_nonnegative_and_reproducible() {
    let geom = FanGeometry::flexray(4.0 * FanGeometry::RAW_PITCH);
    let fan = analytic_fan(&[(0.0, 3.0, 20.0, 0.03)], geom);
    let par = rebin_fan_to_parallel(&fan, 240, None).unwrap();
    let proj = Arc::new(Projector::new(Geometry::square(240)));
    let cfg = SirtConfig { iterations: 30, ..Default::default() };
    let a = soed_core::sirt::sirt_reconstruct(&proj, &par, &cfg, None).unwrap();
    let b = soed_core::sirt::sirt_reconstruct(&proj, &par, &cfg, None).unwrap();
    assert_eq!(a, b);
    assert!(a.data().iter().all(|&v| v >= 0.0));
}
