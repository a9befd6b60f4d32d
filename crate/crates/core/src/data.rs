//! Dataset generation, CSV files and their binary caches.
//!
//! CSV layout: header `d0,…,d{d-1},y`, one sample per row, floats at 17
//! significant digits. Loading a CSV leaves a binary copy next to it, named
//! after the SHA-256 of the CSV bytes, which later loads read instead.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, rng_stream, standard_normal, Matrix};
use crate::network::{Dataset, Dims, Network, Variant};
use crate::output::{fmt_f64, parse_f64};

const INPUT_STREAM: u64 = 7;
const LABEL_STREAM: u64 = 8;
pub const MAX_REJECTION_ATTEMPTS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GenMode {
    SphereUniform,
    /// Minimum pairwise angle in degrees.
    SphereSeparated { min_angle_deg: f64 },
    /// Labels from a hidden dense network of the given width.
    Teacher { width: usize },
}

impl GenMode {
    /// `sphere-uniform`, `sphere-separated:<deg>` or `teacher:<width>`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |what: &str| -> Result<&str> {
            arg.ok_or_else(|| Error::Parse(format!("mode `{name}` needs `:{what}`")))
        };
        match name {
            "sphere-uniform" => Ok(GenMode::SphereUniform),
            "sphere-separated" => Ok(GenMode::SphereSeparated { min_angle_deg: parse_f64(num("degrees")?)? }),
            "teacher" => Ok(GenMode::Teacher {
                width: num("width")?.parse().map_err(|_| Error::Parse(format!("bad width in `{s}`")))?,
            }),
            _ => Err(Error::Parse(format!(
                "unknown mode `{s}` (sphere-uniform | sphere-separated:<deg> | teacher:<width>)"
            ))),
        }
    }
}

impl std::fmt::Display for GenMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GenMode::SphereUniform => f.write_str("sphere-uniform"),
            GenMode::SphereSeparated { min_angle_deg } => write!(f, "sphere-separated:{min_angle_deg}"),
            GenMode::Teacher { width } => write!(f, "teacher:{width}"),
        }
    }
}

fn unit_vector(rng: &mut rand_chacha::ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let nr = norm2(&v);
        if nr > 0.0 {
            v.iter_mut().for_each(|x| *x /= nr);
            return v;
        }
    }
}

/// `n` points uniform on the unit sphere in `R^d`.
pub fn sphere_uniform(n: usize, d: usize, seed: u64) -> Result<Matrix> {
    if n == 0 || d == 0 {
        return invalid(format!("need n, d >= 1, got n={n}, d={d}"));
    }
    let mut rng = rng_stream(seed, INPUT_STREAM);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| unit_vector(&mut rng, d)).collect();
    Matrix::from_rows(&rows)
}

/// Uniform points, rejecting candidates whose line makes an angle below
/// `min_angle_deg` with the line of any accepted point (`|cos| ≤ cos min`).
pub fn sphere_separated(n: usize, d: usize, min_angle_deg: f64, seed: u64) -> Result<Matrix> {
    if !(min_angle_deg > 0.0 && min_angle_deg < 90.0) {
        return invalid(format!("min angle must lie in (0, 90) degrees, got {min_angle_deg}"));
    }
    if n == 0 || d == 0 {
        return invalid(format!("need n, d >= 1, got n={n}, d={d}"));
    }
    let max_cos = min_angle_deg.to_radians().cos();
    let mut rng = rng_stream(seed, INPUT_STREAM);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0;
    while rows.len() < n {
        if attempts == MAX_REJECTION_ATTEMPTS {
            return Err(Error::InfeasibleSeparation(format!(
                "placed {}/{n} points at {min_angle_deg} degrees in d={d} after {attempts} attempts; \
                 try a smaller n or angle",
                rows.len()
            )));
        }
        attempts += 1;
        let cand = unit_vector(&mut rng, d);
        if rows.iter().all(|r| dot(r, &cand).abs() <= max_cos) {
            rows.push(cand);
        }
    }
    Matrix::from_rows(&rows)
}

pub fn uniform_labels(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_stream(seed, LABEL_STREAM);
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Inputs drawn with `input_seed`, labels from the clamped output of a dense
/// teacher network initialized with `teacher_seed`.
pub fn teacher_dataset(n: usize, d: usize, width: usize, teacher_seed: u64, input_seed: u64) -> Result<Dataset> {
    let x = sphere_uniform(n, d, input_seed)?;
    let teacher = Network::init(Variant::Dense, Dims::new(width, d, 0, 0), teacher_seed)?;
    let y = teacher.forward(&x)?.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    Dataset::new(x, y)
}

pub fn gen_data(n: usize, d: usize, mode: GenMode, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return invalid(format!("need at least 2 samples, got {n}"));
    }
    match mode {
        GenMode::SphereUniform => Dataset::new(sphere_uniform(n, d, seed)?, uniform_labels(n, seed)),
        GenMode::SphereSeparated { min_angle_deg } => {
            Dataset::new(sphere_separated(n, d, min_angle_deg, seed)?, uniform_labels(n, seed))
        }
        GenMode::Teacher { width } => teacher_dataset(n, d, width, seed, seed),
    }
}

pub fn dataset_to_csv(data: &Dataset) -> String {
    let d = data.d();
    let mut s: String = (0..d).map(|j| format!("d{j},")).collect();
    s.push_str("y\n");
    for i in 0..data.n() {
        for v in data.x().row(i) {
            s.push_str(&fmt_f64(*v));
            s.push(',');
        }
        s.push_str(&fmt_f64(data.y()[i]));
        s.push('\n');
    }
    s
}

pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().saturating_sub(1);
    let expected: Vec<String> = (0..d).map(|j| format!("d{j}")).chain(["y".to_string()]).collect();
    if d == 0 || cols != expected {
        return Err(Error::Parse(format!("dataset header must be d0,...,d{{d-1}},y; got `{header}`")));
    }
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (ln, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != d + 1 {
            return Err(Error::Parse(format!("row {} has {} fields, expected {}", ln + 1, f.len(), d + 1)));
        }
        rows.push(f[..d].iter().map(|v| parse_f64(v)).collect::<Result<Vec<f64>>>()?);
        y.push(parse_f64(f[d])?);
    }
    Dataset::new(Matrix::from_rows(&rows)?, y)
}

const CACHE_MAGIC: &[u8; 8] = b"LRNTKDAT";

fn cache_path(csv: &Path, bytes: &[u8]) -> PathBuf {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let name = csv.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!(".{name}.{hex}.bin"))
}

fn encode_binary(data: &Dataset) -> Vec<u8> {
    let mut out = CACHE_MAGIC.to_vec();
    out.extend((data.n() as u64).to_le_bytes());
    out.extend((data.d() as u64).to_le_bytes());
    for v in data.x().as_slice().iter().chain(data.y()) {
        out.extend(v.to_bits().to_le_bytes());
    }
    out
}

fn decode_binary(bytes: &[u8]) -> Result<Dataset> {
    let bad = || Error::Parse("corrupt dataset cache".into());
    if bytes.len() < 24 || &bytes[..8] != CACHE_MAGIC {
        return Err(bad());
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (n, d) = (word(8) as usize, word(16) as usize);
    if bytes.len() != 24 + 8 * (n * d + n) {
        return Err(bad());
    }
    let vals: Vec<f64> = (0..n * d + n).map(|i| f64::from_bits(word(24 + 8 * i))).collect();
    let (x, y) = vals.split_at(n * d);
    Dataset::new(Matrix::from_vec(n, d, x.to_vec())?, y.to_vec())
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    if let Some(p) = path.parent() {
        if !p.as_os_str().is_empty() {
            fs::create_dir_all(p)?;
        }
    }
    fs::write(path, dataset_to_csv(data))?;
    Ok(())
}

/// Load a dataset CSV, going through (and refreshing) its binary cache.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let cache = cache_path(path, &bytes);
    if let Ok(bin) = fs::read(&cache) {
        if let Ok(d) = decode_binary(&bin) {
            return Ok(d);
        }
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse("dataset is not UTF-8".into()))?;
    let data = dataset_from_csv(&text)?;
    // a read-only directory just means no cache
    let _ = fs::write(&cache, encode_binary(&data));
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_pair_is_near_orthogonal() {
        let x = sphere_separated(2, 2, 89.0, 3).unwrap();
        assert!(dot(x.row(0), x.row(1)).abs() <= 89f64.to_radians().cos() + 1e-12);
    }

    #[test]
    fn rows_are_unit() {
        for mode in [GenMode::SphereUniform, GenMode::SphereSeparated { min_angle_deg: 30.0 }, GenMode::Teacher { width: 3 }] {
            let d = gen_data(16, 8, mode, 5).unwrap();
            for i in 0..16 {
                assert!((norm2(d.x().row(i)) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn teacher_is_reproducible() {
        let a = gen_data(6, 4, GenMode::Teacher { width: 1 }, 9).unwrap();
        assert_eq!(a, gen_data(6, 4, GenMode::Teacher { width: 1 }, 9).unwrap());
    }

    #[test]
    fn infeasible_separation_is_reported() {
        let err = sphere_separated(10, 2, 80.0, 1).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSeparation(_)));
        assert!(sphere_separated(3, 3, 90.0, 1).is_err());
    }

    #[test]
    fn csv_and_cache_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("data.csv");
        let d = gen_data(5, 3, GenMode::SphereUniform, 2).unwrap();
        save_dataset(&p, &d).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("d0,d1,d2,y\n"));
        assert_eq!(load_dataset(&p).unwrap(), d);
        let cached = fs::read_dir(tmp.path()).unwrap().filter(|e| {
            e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".bin")
        });
        assert_eq!(cached.count(), 1);
        assert_eq!(load_dataset(&p).unwrap(), d);
        assert!(dataset_from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(GenMode::parse("teacher:4").unwrap(), GenMode::Teacher { width: 4 });
        assert_eq!(
            GenMode::parse("sphere-separated:30").unwrap(),
            GenMode::SphereSeparated { min_angle_deg: 30.0 }
        );
        assert!(GenMode::parse("cube").is_err());
        let m = GenMode::SphereSeparated { min_angle_deg: 12.5 };
        assert_eq!(GenMode::parse(&m.to_string()).unwrap(), m);
    }
}
