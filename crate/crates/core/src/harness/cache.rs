//! Persisted Monte Carlo snapshots.
//!
//! Layout: a text header
//!
//! ```text
//! weighted-rb snapshot-cache 1
//! digest <hex>
//! seed <mc seed>
//! shape <samples> <kl_terms> <steps> <dim> <dual 0|1>
//! end
//! ```
//!
//! then per sample `ξ_out…, ξ_in, s_h`, the primal states column-major and,
//! if present, the dual states, all as little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::construction::SnapshotSet;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::mc_samples;
use crate::solvers::{AffineModel, Direction, Trajectory};
use crate::stochastics::ParameterSample;

const MAGIC: &str = "weighted-rb snapshot-cache 1";

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotCache {
    pub digest: String,
    pub seed: u64,
    pub snapshots: SnapshotSet,
}

/// Hex SHA-256 over every setting that changes the cached values.
pub fn snapshot_digest(config: &ExperimentConfig, with_dual: bool) -> String {
    let d = &config.density;
    let floats = [
        config.mesh_h,
        config.final_time,
        config.time_step(),
        config.correlation_length,
        config.kl_mean,
        d.uniform_half_width,
        d.beta_support.0,
        d.beta_support.1,
        d.beta_shape.0,
        d.beta_shape.1,
    ];
    let ints = [
        config.steps as u64,
        config.kl_terms as u64,
        config.seed_mc,
        config.mc_samples as u64,
        with_dual as u64,
    ];
    let mut h = Sha256::new();
    h.update(MAGIC.as_bytes());
    for f in floats {
        h.update(f.to_bits().to_le_bytes());
    }
    for i in ints {
        h.update(i.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Number of `f64` values in the payload.
pub fn payload_floats(samples: usize, kl_terms: usize, steps: usize, dim: usize, with_dual: bool) -> usize {
    let per_trajectory = (steps + 1) * dim;
    samples * (kl_terms + 2 + per_trajectory * (1 + with_dual as usize))
}

impl SnapshotCache {
    /// Solves the detailed problems at the configured MC samples.
    pub fn build(config: &ExperimentConfig, model: &AffineModel, with_dual: bool) -> Result<Self> {
        let snapshots = SnapshotSet::compute(model, mc_samples(config), with_dual)?;
        Ok(Self {
            digest: snapshot_digest(config, with_dual),
            seed: config.seed_mc,
            snapshots,
        })
    }

    pub fn has_dual(&self) -> bool {
        self.snapshots.has_dual()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.snapshots;
        let first = s
            .primal
            .first()
            .ok_or_else(|| Error::CacheMismatch("empty snapshot set".into()))?;
        let q = s.samples[0].xi_out.len();
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "digest {}", self.digest)?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(
            w,
            "shape {} {q} {} {} {}",
            s.len(),
            first.steps(),
            first.states.nrows(),
            s.has_dual() as u8
        )?;
        writeln!(w, "end")?;
        let mut put = |v: f64| w.write_all(&v.to_le_bytes());
        for (i, xi) in s.samples.iter().enumerate() {
            for &x in xi.xi_out.iter().chain([&xi.xi_in, &s.outputs[i]]) {
                put(x)?;
            }
            for &x in s.primal[i].states.iter() {
                put(x)?;
            }
            if s.has_dual() {
                for &x in s.dual[i].states.iter() {
                    put(x)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        let mut next = |r: &mut R| -> Result<String> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format("snapshot cache header truncated".into()));
            }
            Ok(line.trim_end().to_string())
        };
        if next(&mut r)? != MAGIC {
            return Err(Error::Format("not a snapshot cache".into()));
        }
        let field = |text: String, key: &str| -> Result<String> {
            text.strip_prefix(key)
                .and_then(|t| t.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Format(format!("expected `{key}` line, found `{text}`")))
        };
        let digest = field(next(&mut r)?, "digest")?;
        let seed: u64 = field(next(&mut r)?, "seed")?
            .parse()
            .map_err(|_| Error::Format("bad seed".into()))?;
        let shape: Vec<usize> = field(next(&mut r)?, "shape")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Format(format!("bad shape value `{t}`"))))
            .collect::<Result<_>>()?;
        let [m, q, steps, dim, dual] = shape[..] else {
            return Err(Error::Format("shape needs five values".into()));
        };
        if next(&mut r)? != "end" {
            return Err(Error::Format("missing header terminator".into()));
        }

        let mut buf = [0u8; 8];
        let mut get = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("snapshot payload truncated".into()))?;
            Ok(f64::from_le_bytes(buf))
        };
        let mut trajectory = |r: &mut R, direction| -> Result<Trajectory> {
            let data: Vec<f64> = (0..dim * (steps + 1)).map(|_| get(r)).collect::<Result<_>>()?;
            Ok(Trajectory {
                states: DMatrix::from_vec(dim, steps + 1, data),
                direction,
            })
        };
        let mut set = SnapshotSet {
            samples: Vec::with_capacity(m),
            primal: Vec::with_capacity(m),
            dual: Vec::new(),
            outputs: Vec::with_capacity(m),
        };
        for _ in 0..m {
            let mut head = [0u8; 8];
            let mut values = Vec::with_capacity(q + 2);
            for _ in 0..q + 2 {
                r.read_exact(&mut head)
                    .map_err(|_| Error::Format("snapshot payload truncated".into()))?;
                values.push(f64::from_le_bytes(head));
            }
            set.samples.push(ParameterSample::new(values[..q].to_vec(), values[q]));
            set.outputs.push(values[q + 1]);
            set.primal.push(trajectory(&mut r, Direction::Forward)?);
            if dual == 1 {
                set.dual.push(trajectory(&mut r, Direction::Backward)?);
            }
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes after snapshot payload".into()));
        }
        Ok(Self {
            digest,
            seed,
            snapshots: set,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    /// Loads a cache and checks it against `expected_digest`.
    pub fn load(path: &Path, expected_digest: &str) -> Result<Self> {
        let cache = Self::read_from(BufReader::new(File::open(path)?))?;
        if cache.digest != expected_digest {
            return Err(Error::CacheMismatch(format!(
                "{} was built for digest {}, the configuration needs {expected_digest}",
                path.display(),
                cache.digest
            )));
        }
        Ok(cache)
    }

    /// Reuses the cache at `path` if present, otherwise builds and writes it.
    /// A cache built for different settings is an error, never silently
    /// replaced. Returns whether the cache was rebuilt.
    pub fn load_or_build(
        config: &ExperimentConfig,
        model: &AffineModel,
        path: &Path,
        with_dual: bool,
    ) -> Result<(Self, bool)> {
        let digest = snapshot_digest(config, with_dual);
        if path.exists() {
            let cache = Self::load(path, &digest)?;
            cache.snapshots.check(model)?;
            return Ok((cache, false));
        }
        let cache = Self::build(config, model, with_dual)?;
        cache.save(path)?;
        Ok((cache, true))
    }
}
