//! Benchmark datasets: generation, persistence and re-gridding.
//!
//! File layout: one ASCII line `HYCOPDS 1 <header bytes>`, a JSON header of
//! that many bytes, then little-endian `f64` records. Each record is
//! `params, t, u0, times, targets` and its byte offset and length are listed
//! in the header.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{query_grid, sample_ic, sample_params, BenchmarkSpec, DAM_BREAK_WALL};
use crate::error::{Error, Result};
use crate::field::{Boundary, Field};
use crate::reference::{solve_coupled_at_times, solve_exact_ad, solve_ks_etdrk4, KS_DT};
use crate::system::{PdeParams, System};

const MAGIC: &str = "HYCOPDS";
const VERSION: u32 = 1;
/// Draw attempts per sample before giving up.
const MAX_ATTEMPTS: u64 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Id,
    Ood,
    DamBreak,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Id, Split::Ood, Split::DamBreak];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Id => "id",
            Split::Ood => "ood",
            Split::DamBreak => "dam-break",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub split: Split,
    pub family: String,
    pub ic_seed: u64,
    pub params: PdeParams,
    pub u0: Field,
    /// Query time.
    pub t: f64,
    /// Stored reference snapshots; `t` is one of `times`.
    pub times: Vec<f64>,
    pub targets: Vec<Field>,
}

impl Sample {
    /// Reference at the query time.
    pub fn target(&self) -> &Field {
        let i = self.times.iter().position(|&s| s == self.t).expect("query time stored");
        &self.targets[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: BenchmarkSpec,
    pub samples: Vec<Sample>,
    /// Draws rejected because the reference diverged.
    pub resampled: usize,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }

    pub fn system(&self) -> System {
        self.spec.system
    }
}

fn mix(seed: u64, split: Split, index: u64, attempt: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        ^ split.tag().wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ attempt.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reference solution of a query at the sorted `times`.
pub fn reference_at(params: &PdeParams, u0: &Field, times: &[f64]) -> Result<Vec<Field>> {
    match params.system() {
        System::Ad1d => times.iter().map(|&t| solve_exact_ad(params, u0, t)).collect(),
        System::Ks1d => {
            let mut out = Vec::with_capacity(times.len());
            let mut u = u0.clone();
            let mut now = 0.0;
            for &t in times {
                if t > now {
                    u = solve_ks_etdrk4(params, &u, t - now, KS_DT)?.fields.pop().expect("final snapshot");
                    now = t;
                }
                out.push(u.clone());
            }
            Ok(out)
        }
        _ => solve_coupled_at_times(params, u0, times, 1),
    }
}

fn draw_sample(spec: &BenchmarkSpec, split: Split, index: u64, points: usize) -> Result<(Sample, usize)> {
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, split, index, attempt));
        let (ranges, fams, trange) = match split {
            Split::Train => (&spec.id_ranges, &spec.id_families, spec.train_t),
            Split::Id => (&spec.id_ranges, &spec.id_families, spec.id_t),
            Split::Ood => (&spec.ood_ranges, &spec.ood_families, spec.ood_t),
            Split::DamBreak => (&spec.id_ranges, &spec.id_families, spec.id_t),
        };
        let params = sample_params(spec.system, ranges, &mut rng)?;
        let family = match split {
            Split::DamBreak => DAM_BREAK_WALL.to_string(),
            _ => fams[rng.random_range(0..fams.len())].clone(),
        };
        let ic_seed = rng.random::<u64>();
        let t = trange[0] + (trange[1] - trange[0]) * rng.random::<f64>();
        let grid = query_grid(spec.system, &params, points, &family)?;
        let u0 = sample_ic(spec.system, &family, ic_seed, &grid)?;
        let (times, _) = if split == Split::Train { (vec![t], 0) } else { spec.snapshot_times(t) };
        match reference_at(&params, &u0, &times) {
            Ok(targets) => {
                return Ok((Sample { split, family, ic_seed, params, u0, t, times, targets }, attempt as usize))
            }
            Err(Error::ReferenceDiverged { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ReferenceDiverged { time: f64::NAN })
}

/// Draws every split of `spec` and solves the references, in parallel.
/// The result depends only on `spec`.
pub fn build_dataset(spec: &BenchmarkSpec) -> Result<Dataset> {
    spec.validate()?;
    let jobs: Vec<(Split, u64)> = [
        (Split::Train, spec.train),
        (Split::Id, spec.test_id),
        (Split::Ood, spec.test_ood),
        (Split::DamBreak, spec.dam_break),
    ]
    .into_iter()
    .flat_map(|(s, n)| (0..n as u64).map(move |i| (s, i)))
    .collect();
    let drawn: Vec<(Sample, usize)> =
        jobs.par_iter().map(|&(s, i)| draw_sample(spec, s, i, spec.points)).collect::<Result<_>>()?;
    let resampled = drawn.iter().map(|d| d.1).sum();
    if resampled > 0 {
        log::info!("{}: resampled {resampled} diverged draws", spec.system);
    }
    Ok(Dataset { spec: spec.clone(), samples: drawn.into_iter().map(|d| d.0).collect(), resampled })
}

/// The same queries with initial conditions re-sampled analytically on
/// `points` nodes and references re-solved there.
pub fn regrid(ds: &Dataset, points: usize) -> Result<Dataset> {
    let samples = ds
        .samples
        .par_iter()
        .map(|s| {
            let grid = query_grid(ds.spec.system, &s.params, points, &s.family)?;
            let u0 = sample_ic(ds.spec.system, &s.family, s.ic_seed, &grid)?;
            let targets = reference_at(&s.params, &u0, &s.times)?;
            Ok(Sample { u0, targets, ..s.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { spec: BenchmarkSpec { points, ..ds.spec.clone() }, samples, resampled: ds.resampled })
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    split: Split,
    family: String,
    ic_seed: u64,
    boundary: Boundary,
    snapshots: usize,
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: BenchmarkSpec,
    family_weights: String,
    resampled: usize,
    record_layout: String,
    records: Vec<RecordMeta>,
}

fn record_values(s: &Sample) -> Vec<f64> {
    let mut v = s.params.to_vec();
    v.push(s.t);
    v.extend_from_slice(s.u0.values());
    v.extend_from_slice(&s.times);
    for f in &s.targets {
        v.extend_from_slice(f.values());
    }
    v
}

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut records = Vec::with_capacity(self.samples.len());
        let mut body = Vec::new();
        for s in &self.samples {
            let vals = record_values(s);
            records.push(RecordMeta {
                split: s.split,
                family: s.family.clone(),
                ic_seed: s.ic_seed,
                boundary: s.u0.grid().boundary(),
                snapshots: s.times.len(),
                offset: body.len() as u64,
                len: vals.len() as u64 * 8,
            });
            for x in vals {
                body.extend_from_slice(&x.to_le_bytes());
            }
        }
        let header = Header {
            format_version: VERSION,
            spec: self.spec.clone(),
            family_weights: "uniform".into(),
            resampled: self.resampled,
            record_layout: "params, t, u0, times[snapshots], targets[snapshots]".into(),
            records,
        };
        let json = serde_json::to_string(&header).expect("header serializes");
        let mut out = format!("{MAGIC} {VERSION} {}\n", json.len()).into_bytes();
        out.extend_from_slice(json.as_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn from_reader(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut first = String::new();
        r.read_line(&mut first)?;
        let parts: Vec<&str> = first.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        if parts[1] != VERSION.to_string() {
            return Err(Error::Format(format!("unsupported dataset version {}", parts[1])));
        }
        let hlen: usize = parts[2].parse().map_err(|_| Error::Format("bad header length".into()))?;
        let mut hbuf = vec![0u8; hlen];
        r.read_exact(&mut hbuf)?;
        let header: Header =
            serde_json::from_slice(&hbuf).map_err(|e| Error::Format(format!("dataset header: {e}")))?;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        let spec = header.spec;
        let system = spec.system;
        let np = system.n_params();
        let mut samples = Vec::with_capacity(header.records.len());
        for m in header.records {
            let (a, b) = (m.offset as usize, (m.offset + m.len) as usize);
            let bytes = body.get(a..b).ok_or_else(|| Error::Format("record outside file".into()))?;
            let vals: Vec<f64> =
                bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            if vals.len() < np + 1 {
                return Err(Error::Format("truncated record".into()));
            }
            let params = PdeParams::from_slice(system, &vals[..np])?;
            let t = vals[np];
            let grid = system.grid(&params, spec.points, m.boundary)?;
            let size = grid.total_points() * system.channels();
            let s = m.snapshots;
            if vals.len() != np + 1 + size + s + s * size {
                return Err(Error::Format("record length does not match its grid".into()));
            }
            let mut at = np + 1;
            let u0 = Field::new(grid, system.channels(), vals[at..at + size].to_vec())?;
            at += size;
            let times = vals[at..at + s].to_vec();
            at += s;
            let targets = (0..s)
                .map(|i| Field::new(grid, system.channels(), vals[at + i * size..at + (i + 1) * size].to_vec()))
                .collect::<Result<Vec<_>>>()?;
            if !times.contains(&t) {
                return Err(Error::Format("query time missing from stored snapshots".into()));
            }
            samples.push(Sample { split: m.split, family: m.family, ic_seed: m.ic_seed, params, u0, t, times, targets });
        }
        Ok(Dataset { spec, samples, resampled: header.resampled })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::from_reader(std::fs::File::open(path)?)
    }
}
