//! Weight bundles: named float32 parameters with shapes, stored as a JSON
//! manifest plus a single little-endian blob file. No training happens here;
//! bundles are either seeded-random (structural runs) or user-supplied.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug)]
pub enum WeightsError {
    Io(std::io::Error),
    Json(serde_json::Error),
    MissingParam(String),
    ShapeMismatch { name: String, expected: Vec<usize>, actual: Vec<usize> },
    BlobBounds { name: String },
}

impl fmt::Display for WeightsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightsError::Io(e) => write!(f, "weights io error: {e}"),
            WeightsError::Json(e) => write!(f, "weights manifest error: {e}"),
            WeightsError::MissingParam(name) => write!(f, "missing parameter {name}"),
            WeightsError::ShapeMismatch { name, expected, actual } => {
                write!(f, "parameter {name}: expected shape {expected:?}, got {actual:?}")
            }
            WeightsError::BlobBounds { name } => {
                write!(f, "parameter {name} extends past the end of the blob")
            }
        }
    }
}

impl std::error::Error for WeightsError {}

impl From<std::io::Error> for WeightsError {
    fn from(e: std::io::Error) -> Self {
        WeightsError::Io(e)
    }
}

impl From<serde_json::Error> for WeightsError {
    fn from(e: serde_json::Error) -> Self {
        WeightsError::Json(e)
    }
}

/// One named parameter in the manifest. Offsets are in f32 elements into the
/// blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub blob: String,
    pub params: Vec<ParamSpec>,
}

/// How a parameter is initialized when seeding a bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal with sigma = 1/sqrt(fan_in).
    Normal { fan_in: usize },
    /// Small-sigma normal for embedding tables.
    Embedding,
    Zeros,
    Ones,
}

/// In-memory map of named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    params: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl WeightBundle {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.params.insert(name.to_string(), (shape, data));
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    /// Fetch a parameter, validating its shape against the topology.
    pub fn get(&self, name: &str, expected: &[usize]) -> Result<&[f32], WeightsError> {
        let (shape, data) = self
            .params
            .get(name)
            .ok_or_else(|| WeightsError::MissingParam(name.to_string()))?;
        if shape != expected {
            return Err(WeightsError::ShapeMismatch {
                name: name.to_string(),
                expected: expected.to_vec(),
                actual: shape.clone(),
            });
        }
        Ok(data)
    }

    /// Generate a deterministic bundle from (name, shape, init) specs.
    /// Each parameter gets an independent stream derived from the seed and
    /// its name, so adding parameters does not disturb existing ones.
    pub fn seeded(seed: u64, specs: &[(String, Vec<usize>, Init)]) -> Self {
        let mut bundle = WeightBundle::new();
        for (name, shape, init) in specs {
            let n: usize = shape.iter().product();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()));
            let data: Vec<f32> = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Normal { fan_in } => {
                    let sigma = 1.0 / (*fan_in as f64).sqrt().max(1.0);
                    let dist = Normal::new(0.0, sigma).unwrap();
                    (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
                }
                Init::Embedding => {
                    let dist = Normal::new(0.0, 0.02).unwrap();
                    (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
                }
            };
            bundle.insert(name, shape.clone(), data);
        }
        bundle
    }

    /// Write manifest JSON and blob file into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), WeightsError> {
        std::fs::create_dir_all(dir)?;
        let blob_name = format!("{stem}.bin");
        let mut specs = Vec::new();
        let mut blob: Vec<u8> = Vec::new();
        let mut offset = 0usize;
        for (name, (shape, data)) in &self.params {
            specs.push(ParamSpec {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            });
            for v in data {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            offset += data.len();
        }
        let manifest = Manifest {
            format: "pod4d-weights-v1".to_string(),
            blob: blob_name.clone(),
            params: specs,
        };
        let mut f = std::fs::File::create(dir.join(format!("{stem}.json")))?;
        f.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        std::fs::File::create(dir.join(blob_name))?.write_all(&blob)?;
        Ok(())
    }

    /// Load a bundle from a manifest path; blob is resolved relative to it.
    pub fn load(manifest_path: &Path) -> Result<Self, WeightsError> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
        let blob_path = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&manifest.blob);
        let mut bytes = Vec::new();
        std::fs::File::open(blob_path)?.read_to_end(&mut bytes)?;
        let total = bytes.len() / 4;
        let mut bundle = WeightBundle::new();
        for spec in &manifest.params {
            let n: usize = spec.shape.iter().product();
            if spec.offset + n > total {
                return Err(WeightsError::BlobBounds {
                    name: spec.name.clone(),
                });
            }
            let mut data = Vec::with_capacity(n);
            for k in 0..n {
                let at = (spec.offset + k) * 4;
                data.push(f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]));
            }
            bundle.insert(&spec.name, spec.shape.clone(), data);
        }
        Ok(bundle)
    }
}

impl Default for WeightBundle {
    fn default() -> Self {
        Self::new()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_bundles_are_deterministic_and_name_keyed() {
        let specs = vec![
            ("a.weight".to_string(), vec![2, 3], Init::Normal { fan_in: 3 }),
            ("a.bias".to_string(), vec![3], Init::Zeros),
        ];
        let b1 = WeightBundle::seeded(42, &specs);
        let b2 = WeightBundle::seeded(42, &specs);
        assert_eq!(b1, b2);
        let b3 = WeightBundle::seeded(43, &specs);
        assert_ne!(b1.get("a.weight", &[2, 3]).unwrap(), b3.get("a.weight", &[2, 3]).unwrap());
        // Extending the spec list leaves earlier params untouched.
        let mut extended = specs.clone();
        extended.push(("z.weight".to_string(), vec![4], Init::Ones));
        let b4 = WeightBundle::seeded(42, &extended);
        assert_eq!(
            b1.get("a.weight", &[2, 3]).unwrap(),
            b4.get("a.weight", &[2, 3]).unwrap()
        );
    }

    #[test]
    fn shape_validation() {
        let specs = vec![("w".to_string(), vec![2, 2], Init::Ones)];
        let b = WeightBundle::seeded(0, &specs);
        assert!(b.get("w", &[2, 2]).is_ok());
        assert!(matches!(
            b.get("w", &[4]),
            Err(WeightsError::ShapeMismatch { .. })
        ));
        assert!(matches!(b.get("nope", &[1]), Err(WeightsError::MissingParam(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let specs = vec![
            ("conv.weight".to_string(), vec![3, 2, 4], Init::Normal { fan_in: 6 }),
            ("bn.gamma".to_string(), vec![4], Init::Ones),
        ];
        let b = WeightBundle::seeded(7, &specs);
        b.save(dir.path(), "net").unwrap();
        let loaded = WeightBundle::load(&dir.path().join("net.json")).unwrap();
        assert_eq!(b, loaded);
    }
}
