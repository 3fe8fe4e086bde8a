//! File formats: experiment config JSON, PGM images, CSV matrices and
//! reports, and run manifests. Every writer goes through a temporary file in
//! the target directory followed by a rename, so a partially written file
//! never appears under the final name.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::ExperimentConfig;
use crate::image::Image;
use crate::metrics::CellSummary;

const PGM_MAXVAL: u32 = 65_535;

/// Header of the per-cell metrics CSV.
pub const REPORT_HEADER: [&str; 8] = [
    "solver",
    "snapshots",
    "snr_db",
    "trials",
    "mse_mean",
    "mse_std",
    "rel_l2_mean",
    "runtime_mean_s",
];

/// Writes `bytes` to `path` atomically, creating parent directories.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

// ---------------------------------------------------------------------------
// Config

/// Parses and validates a config from JSON text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a config file. Missing keys take their defaults;
/// unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&read_to_string(path)?)
}

/// Canonical JSON of a config; what [`config_digest`] hashes.
pub fn config_json(cfg: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serialization cannot fail")
}

pub fn save_config(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let mut text = config_json(cfg);
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn config_digest(cfg: &ExperimentConfig) -> String {
    sha256_hex(config_json(cfg).as_bytes())
}

// ---------------------------------------------------------------------------
// PGM

fn pgm_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "PGM",
        message: message.into(),
    }
}

/// Renders an image as ASCII PGM (P2) with 16-bit levels. Pixel values map
/// linearly onto `0..=65535`; the map is stored as a `# scale=… offset=…`
/// comment so [`read_pgm`] can undo it.
pub fn pgm_string(image: &Image) -> Result<String> {
    let pixels = image.pixels();
    if let Some(bad) = pixels.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::arg(format!(
            "PGM pixels must be finite and nonnegative, found {bad}"
        )));
    }
    let offset = image.min();
    let scale = (image.max() - offset) / f64::from(PGM_MAXVAL);
    let side = image.side();
    let mut out = String::with_capacity(side * side * 6 + 64);
    let _ = writeln!(out, "P2");
    let _ = writeln!(out, "# scale={scale:e} offset={offset:e}");
    let _ = writeln!(out, "{side} {side}");
    let _ = writeln!(out, "{PGM_MAXVAL}");
    for row in pixels.chunks(side) {
        let line: Vec<String> = row
            .iter()
            .map(|&v| {
                let level = if scale > 0.0 {
                    ((v - offset) / scale).round()
                } else {
                    0.0
                };
                (level.clamp(0.0, f64::from(PGM_MAXVAL)) as u32).to_string()
            })
            .collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    Ok(out)
}

pub fn write_pgm(image: &Image, path: &Path) -> Result<()> {
    write_atomic(path, pgm_string(image)?.as_bytes())
}

/// Parses a P2 image. Files without a scale comment are read as levels over
/// `maxval`, i.e. into `[0, 1]`.
pub fn parse_pgm(text: &str) -> Result<Image> {
    let mut scale = None;
    let mut offset = 0.0;
    let mut tokens = Vec::new();
    for line in text.lines() {
        let (body, comment) = match line.find('#') {
            Some(i) => (&line[..i], Some(&line[i + 1..])),
            None => (line, None),
        };
        if let Some(c) = comment {
            for item in c.split_whitespace() {
                if let Some(v) = item.strip_prefix("scale=") {
                    scale = Some(
                        v.parse::<f64>()
                            .map_err(|_| pgm_err(format!("bad scale `{v}`")))?,
                    );
                } else if let Some(v) = item.strip_prefix("offset=") {
                    offset = v
                        .parse::<f64>()
                        .map_err(|_| pgm_err(format!("bad offset `{v}`")))?;
                }
            }
        }
        tokens.extend(body.split_whitespace());
    }
    let mut it = tokens.into_iter();
    match it.next() {
        Some("P2") => {}
        Some(magic) => return Err(pgm_err(format!("unsupported magic `{magic}`"))),
        None => return Err(pgm_err("empty file")),
    }
    let mut header = |name: &str| -> Result<u32> {
        let tok = it
            .next()
            .ok_or_else(|| pgm_err(format!("missing {name}")))?;
        tok.parse()
            .map_err(|_| pgm_err(format!("bad {name} `{tok}`")))
    };
    let width = header("width")? as usize;
    let height = header("height")? as usize;
    let maxval = header("maxval")?;
    if width == 0 || width != height {
        return Err(pgm_err(format!(
            "expected a non-empty square image, got {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > PGM_MAXVAL {
        return Err(pgm_err(format!("maxval {maxval} outside 1..=65535")));
    }
    let scale = scale.unwrap_or(1.0 / f64::from(maxval));
    let mut pixels = Vec::with_capacity(width * height);
    for tok in it.by_ref() {
        let level: u32 = tok
            .parse()
            .map_err(|_| pgm_err(format!("bad pixel `{tok}`")))?;
        if level > maxval {
            return Err(pgm_err(format!("pixel {level} exceeds maxval {maxval}")));
        }
        pixels.push(offset + f64::from(level) * scale);
    }
    if pixels.len() != width * height {
        return Err(pgm_err(format!(
            "expected {} pixels, found {}",
            width * height,
            pixels.len()
        )));
    }
    Image::from_vec(width, pixels)
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    parse_pgm(&read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// CSV matrices

fn csv_err(message: impl Into<String>) -> Error {
    Error::Format {
        format: "CSV",
        message: message.into(),
    }
}

/// Shortest decimal that parses back to the same `f64`.
fn render(v: f64) -> String {
    format!("{v:?}")
}

pub fn csv_matrix_string(m: &DMatrix<f64>) -> Result<String> {
    if m.is_empty() {
        return Err(Error::arg("cannot write an empty matrix"));
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| render(v)))
            .map_err(|e| csv_err(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("rendered floats are ASCII"))
}

pub fn write_csv_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    write_atomic(path, csv_matrix_string(m)?.as_bytes())
}

pub fn parse_csv_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        if i == 0 {
            cols = record.len();
        }
        for field in record.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| csv_err(format!("row {}: bad number `{field}`", i + 1)))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 || cols == 0 {
        return Err(csv_err("matrix is empty"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_csv_matrix(&read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Metrics report

pub fn report_csv_string(cells: &[CellSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)
        .map_err(|e| csv_err(e.to_string()))?;
    for c in cells {
        w.write_record([
            c.solver.to_string(),
            c.snapshots.to_string(),
            c.snr_db.to_string(),
            c.trials.to_string(),
            render(c.mse_mean),
            render(c.mse_std),
            render(c.rel_l2_mean),
            render(c.runtime_mean_s),
        ])
        .map_err(|e| csv_err(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("report fields are UTF-8"))
}

pub fn write_report_csv(cells: &[CellSummary], path: &Path) -> Result<()> {
    write_atomic(path, report_csv_string(cells)?.as_bytes())
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChecksum {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub snapshots: usize,
    pub snr_index: usize,
    pub trial: usize,
    pub noise_seed: u64,
    pub phantom_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of the canonical config JSON.
    pub config_digest: String,
    pub master_seed: u64,
    pub seeds: Vec<SeedRecord>,
    pub files: Vec<FileChecksum>,
    pub failures: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config_digest(cfg),
            master_seed: cfg.master_seed,
            seeds: Vec::new(),
            files: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Records the checksum of `path`, stored relative to `root`.
    pub fn add_file(&mut self, root: &Path, path: &Path) -> Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.files.push(FileChecksum {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: file_sha256(path)?,
        });
        Ok(())
    }
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Format {
        format: "manifest",
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::encoding::Snr;
    use crate::harness::Scenario;
    use crate::solvers::{SolverConfig, SolverMode};

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse_config(r#"{"scenario": "SatelliteOnly", "n": 40}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::new(Scenario::SatelliteOnly, 40));
        assert_eq!(cfg.bernoulli_p, 0.2);
        assert_eq!(cfg.trials, 100);
        assert_eq!(cfg.snr_db_list, vec![Snr::Db(5.0)]);
        assert_eq!(cfg.snapshot_counts, vec![100, 200, 300]);
    }

    #[test]
    fn oversized_snapshot_count_names_field() {
        let err =
            parse_config(r#"{"scenario": "DebrisOnly", "n": 10, "snapshot_counts": [50, 100]}"#)
                .unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("snapshot_counts[1]"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = parse_config(r#"{"scenario": "DebrisOnly", "n": 40, "phantom": {"debris": 3}}"#)
            .unwrap_err();
        assert!(err.is_config());
        let msg = err.to_string();
        assert!(msg.contains("phantom") && msg.contains("debris"), "{msg}");

        let err = parse_config(
            r#"{"scenario": "DebrisOnly", "n": 40, "solver_configs": {"TV": {"mu": 1}}}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("solver_configs") && msg.contains("`mu`"),
            "{msg}"
        );
    }

    #[test]
    fn type_errors_name_the_field() {
        let err =
            parse_config(r#"{"scenario": "DebrisOnly", "n": 40, "trials": "many"}"#).unwrap_err();
        assert!(err.to_string().contains("`trials`"), "{err}");
        assert!(parse_config(r#"{"n": 40}"#).unwrap_err().is_config());
        assert!(parse_config("not json").unwrap_err().is_config());
    }

    #[test]
    fn missing_config_file_is_io_error() {
        let d = dir();
        assert!(matches!(
            load_config(&d.path().join("nope.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn config_round_trip() {
        let d = dir();
        let mut cfg = ExperimentConfig::new(Scenario::Combined, 40);
        cfg.snr_db_list = vec![Snr::Db(-5.0), Snr::Db(2.5), Snr::Noiseless];
        cfg.solvers = vec![SolverMode::TV, SolverMode::SBL];
        cfg.bernoulli_p = 0.35;
        cfg.master_seed = u64::MAX;
        let mut tv = SolverConfig::for_mode(SolverMode::TV);
        tv.epsilon = Some(0.1);
        tv.mu_final = 3e-7;
        cfg.solver_configs.insert(SolverMode::TV, tv);
        cfg.phantom.satellite = Some(crate::phantoms::SatelliteSpec::default_for(40));
        let path = d.path().join("cfg.json");
        save_config(&cfg, &path).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);
        assert_eq!(
            config_digest(&cfg),
            config_digest(&load_config(&path).unwrap())
        );
    }

    #[test]
    fn config_digest_is_sha256_of_canonical_json() {
        let cfg = ExperimentConfig::new(Scenario::DebrisOnly, 20);
        let digest = config_digest(&cfg);
        assert_eq!(digest.len(), 64);
        assert_eq!(digest, sha256_hex(config_json(&cfg).as_bytes()));
        let mut other = cfg.clone();
        other.master_seed = 1;
        assert_ne!(config_digest(&other), digest);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn constant_image_round_trip_is_exact() {
        for value in [0.0, 0.7, 1e-9, 3.25e4] {
            let img = Image::filled(7, value);
            assert_eq!(parse_pgm(&pgm_string(&img).unwrap()).unwrap(), img);
        }
    }

    #[test]
    fn random_image_round_trip_within_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img =
            Image::from_vec(40, (0..1600).map(|_| rng.gen_range(0.0..3.0)).collect()).unwrap();
        let d = dir();
        let path = d.path().join("x.pgm");
        write_pgm(&img, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        let range = img.max() - img.min();
        let worst = img
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= range / 32768.0, "{worst}");
        assert_eq!(back.min(), img.min());
    }

    #[test]
    fn pgm_layout() {
        let img = Image::from_rows(&[vec![0.0, 1.0], vec![0.5, 2.0]]).unwrap();
        let text = pgm_string(&img).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "P2");
        assert!(lines[1].starts_with("# scale="));
        assert_eq!(&lines[2..], ["2 2", "65535", "0 32768", "16384 65535"]);
    }

    #[test]
    fn negative_pixel_rejected() {
        let img = Image::from_rows(&[vec![0.0, -1e-3], vec![0.5, 2.0]]).unwrap();
        assert!(matches!(pgm_string(&img), Err(Error::InvalidArgument(_))));
        let d = dir();
        let path = d.path().join("neg.pgm");
        assert!(write_pgm(&img, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn malformed_pgm_rejected() {
        assert!(parse_pgm("P5\n2 2\n255\n").is_err());
        assert!(parse_pgm("").is_err());
        assert!(parse_pgm("P2\n2 2\n255\n1 2 3\n").is_err());
        assert!(parse_pgm("P2\n2 2\n255\n1 2 3 300\n").is_err());
        assert!(parse_pgm("P2\n2 3\n255\n1 2 3 4 5 6\n").is_err());
        assert!(parse_pgm("P2\n2 2\n70000\n1 2 3 4\n").is_err());
    }

    #[test]
    fn plain_pgm_reads_into_unit_range() {
        let img = parse_pgm("P2\n# made elsewhere\n2 2\n4\n0 1\n2 4\n").unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn identity_csv_round_trip() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(
            parse_csv_matrix(&csv_matrix_string(&eye).unwrap()).unwrap(),
            eye
        );
    }

    #[test]
    fn random_scene_csv_round_trip_is_bit_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = DMatrix::from_fn(40, 40, |_, _| {
            rng.gen::<f64>() * 10f64.powi(rng.gen_range(-300..300))
        });
        let d = dir();
        let path = d.path().join("scene.csv");
        write_csv_matrix(&m, &path).unwrap();
        let back = read_csv_matrix(&path).unwrap();
        assert!(m
            .iter()
            .zip(back.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(csv_matrix_string(&DMatrix::<f64>::zeros(0, 3)).is_err());
        assert!(parse_csv_matrix("").is_err());
        assert!(parse_csv_matrix("1,2\n3\n").is_err());
        assert!(parse_csv_matrix("1,x\n").is_err());
    }

    #[test]
    fn report_header_is_stable() {
        let text = report_csv_string(&[]).unwrap();
        assert_eq!(
            text.trim_end(),
            "solver,snapshots,snr_db,trials,mse_mean,mse_std,rel_l2_mean,runtime_mean_s"
        );
    }

    #[test]
    fn manifest_round_trip_and_checksums() {
        let d = dir();
        let cfg = ExperimentConfig::new(Scenario::DebrisOnly, 20);
        let data = d.path().join("a.csv");
        write_atomic(&data, b"abc").unwrap();
        let mut manifest = RunManifest::new("run-scenario", &cfg);
        manifest.add_file(d.path(), &data).unwrap();
        assert_eq!(manifest.files[0].path, "a.csv");
        assert_eq!(manifest.files[0].sha256, sha256_hex(b"abc"));
        let path = d.path().join("manifest.json");
        write_manifest(&manifest, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), manifest);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let d = dir();
        let path = d.path().join("nested/out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
