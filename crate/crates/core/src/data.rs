//! Seeded sampling of training and test data.
//!
//! Every random draw comes from a [`RngStream`]: a ChaCha8 generator keyed by
//! `(seed, stream_id)`. Standard normals use the ziggurat sampler from
//! `rand_distr`, so a given `(seed, stream_id)` produces the same sequence on
//! every platform for a fixed build. Stream ids are derived from the sample
//! index, never from execution order, which keeps parallel generation
//! bit-identical to sequential generation.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_nu, group_of, ProblemSpec, Sample, SamplingMode};

/// Upper bound on `n * d` entries held in memory (1 GiB of `f64`).
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 27;

const NOISE_STREAM: u64 = 0;
const FLIP_STREAM: u64 = 1 << 62;
const GROUP_STREAM: u64 = 1 << 61;
/// Stream namespace reserved for Monte Carlo test draws.
pub const TEST_STREAM: u64 = 3 << 61;

/// A deterministic stream of random draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

/// A realized training set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub nu_plus: Vec<f64>,
    pub nu_minus: Vec<f64>,
    pub spec: ProblemSpec,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn d(&self) -> usize {
        self.nu_plus.len()
    }

    pub fn nu(&self, b: i8) -> &[f64] {
        if b > 0 {
            &self.nu_plus
        } else {
            &self.nu_minus
        }
    }

    /// Group sizes `(n_+, n_-)` as seen through the stored (possibly noisy) labels.
    pub fn group_counts(&self) -> (usize, usize) {
        let plus = self.samples.iter().filter(|s| s.b > 0).count();
        (plus, self.samples.len() - plus)
    }

    /// Group sizes computed from clean labels.
    pub fn clean_group_counts(&self) -> (usize, usize) {
        let plus = self
            .samples
            .iter()
            .filter(|s| if s.flipped { s.b < 0 } else { s.b > 0 })
            .count();
        (plus, self.samples.len() - plus)
    }

    pub fn flipped_count(&self) -> usize {
        self.samples.iter().filter(|s| s.flipped).count()
    }

    /// Builds a dataset from explicit signed vectors. Groups are taken as given,
    /// labels set to `+1`. Intended for hand-built fixtures.
    pub fn from_signed(spec: ProblemSpec, rows: Vec<(Vec<f64>, i8)>) -> Result<Self> {
        let (nu_plus, nu_minus) = build_nu(&spec)?;
        let d = nu_plus.len();
        let samples = rows
            .into_iter()
            .map(|(z, b)| {
                if z.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "sample",
                        expected: d,
                        got: z.len(),
                    });
                }
                Ok(Sample {
                    z,
                    b,
                    y: 1,
                    a: b,
                    flipped: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            samples,
            nu_plus,
            nu_minus,
            spec,
            seed: 0,
        })
    }
}

/// Group sizes from `(n, tau)`: `n_- = max(1, round(n / (tau + 1)))`, `n_+ = n - n_-`.
pub fn split_counts(n: usize, tau: f64) -> Result<(usize, usize)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 2 to form two groups, got {n}"
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let minus = ((n as f64 / (tau + 1.0)).round() as usize).clamp(1, n - 1);
    Ok((n - minus, minus))
}

/// Samples a training set with the default memory cap.
pub fn sample_dataset(spec: &ProblemSpec, seed: u64) -> Result<Dataset> {
    sample_dataset_capped(spec, seed, DEFAULT_MAX_ENTRIES)
}

pub fn sample_dataset_capped(spec: &ProblemSpec, seed: u64, max_entries: usize) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n();
    let d = spec.d();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if n.saturating_mul(d) > max_entries {
        return Err(Error::MemoryCap {
            n,
            d,
            cap: max_entries,
        });
    }
    let (nu_plus, nu_minus) = build_nu(spec)?;

    // (y, a) per sample, majority group first.
    let labels: Vec<(i8, i8)> = match spec.sampling_mode {
        SamplingMode::FixedCounts => {
            let alt = |k: usize| if k.is_multiple_of(2) { 1i8 } else { -1 };
            (0..spec.n_plus)
                .map(|k| (alt(k), alt(k)))
                .chain((0..spec.n_minus).map(|k| (alt(k), -alt(k))))
                .collect()
        }
        SamplingMode::Probabilistic {
            pi_plus,
            p_agree_plus,
            p_agree_minus,
        } => {
            let mut drawn: Vec<(i8, i8)> = (0..n)
                .map(|i| {
                    let mut rng = RngStream::new(seed, GROUP_STREAM + i as u64);
                    let y: i8 = if rng.uniform() < pi_plus { 1 } else { -1 };
                    let p_agree = if y > 0 { p_agree_plus } else { p_agree_minus };
                    let a = if rng.uniform() < p_agree { y } else { -y };
                    (y, a)
                })
                .collect();
            // stable partition: b = +1 first
            drawn.sort_by_key(|&(y, a)| -group_of(y, a));
            drawn
        }
    };

    let samples: Vec<Sample> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &(y, a))| {
            let b = group_of(y, a);
            let mut z = vec![0.0; d];
            RngStream::new(seed, NOISE_STREAM + i as u64).fill_normal(&mut z);
            let nu = if b > 0 { &nu_plus } else { &nu_minus };
            for (zi, mi) in z.iter_mut().zip(nu) {
                *zi += mi;
            }
            Sample {
                z,
                b,
                y,
                a,
                flipped: false,
            }
        })
        .collect();

    let ds = Dataset {
        samples,
        nu_plus,
        nu_minus,
        spec: spec.clone(),
        seed,
    };
    Ok(flip_labels(ds, spec.label_flip_rate, seed))
}

/// Independently negates each stored label with probability `xi`.
///
/// A flip negates `y`, hence `z = y x` and the group `b = y a` as well. Draws
/// come from a sub-stream disjoint from the feature noise, so runs with and
/// without flips share identical features.
pub fn flip_labels(mut ds: Dataset, xi: f64, seed: u64) -> Dataset {
    if xi <= 0.0 {
        return ds;
    }
    for (i, s) in ds.samples.iter_mut().enumerate() {
        let u = RngStream::new(seed, FLIP_STREAM + i as u64).uniform();
        if u < xi {
            s.y = -s.y;
            s.z.iter_mut().for_each(|v| *v = -*v);
            s.b = group_of(s.y, s.a);
            s.flipped = !s.flipped;
        }
    }
    ds
}

/// One test draw `z = nu_b + q` from group `b`.
pub fn sample_test_point(spec: &ProblemSpec, b: i8, rng: &mut RngStream) -> Result<Sample> {
    if b != 1 && b != -1 {
        return Err(Error::InvalidArgument(format!("group must be +-1, got {b}")));
    }
    let (nu_plus, nu_minus) = build_nu(spec)?;
    let nu = if b > 0 { nu_plus } else { nu_minus };
    let mut z = vec![0.0; nu.len()];
    rng.fill_normal(&mut z);
    for (zi, mi) in z.iter_mut().zip(&nu) {
        *zi += mi;
    }
    Ok(Sample {
        z,
        b,
        y: 1,
        a: b,
        flipped: false,
    })
}

/// Writes the delimited-text dump.
///
/// Line 1: `# vslab-dataset n=<n> d=<d> seed=<seed> spec_hash=<16 hex digits>`.
/// Each following line: `y,a,b,flipped,z_1,...,z_d` with `flipped` as 0/1 and
/// reals in shortest round-trip form.
pub fn write_dataset<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# vslab-dataset n={} d={} seed={} spec_hash={:016x}",
        ds.n(),
        ds.d(),
        ds.seed,
        ds.spec.hash64()
    )?;
    let mut line = String::new();
    for s in &ds.samples {
        line.clear();
        line.push_str(&format!("{},{},{},{}", s.y, s.a, s.b, u8::from(s.flipped)));
        for v in &s.z {
            line.push(',');
            line.push_str(&format!("{v:e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parsed header of a dataset dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpHeader {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub spec_hash: u64,
}

/// Reads back a dump written by [`write_dataset`]; `spec` supplies the means.
pub fn read_dataset<R: BufRead>(spec: &ProblemSpec, input: R) -> Result<(DumpHeader, Dataset)> {
    let bad = |msg: String| Error::InvalidArgument(format!("dataset dump: {msg}"));
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| bad("missing header".into()))??;
    let header = parse_header(&header).ok_or_else(|| bad(format!("bad header {header:?}")))?;
    let (nu_plus, nu_minus) = build_nu(spec)?;
    let mut samples = Vec::with_capacity(header.n);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + header.d {
            return Err(bad(format!("row has {} fields", fields.len())));
        }
        let int = |s: &str| s.parse::<i8>().map_err(|e| bad(e.to_string()));
        let z = fields[4..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            y: int(fields[0])?,
            a: int(fields[1])?,
            b: int(fields[2])?,
            flipped: fields[3] == "1",
            z,
        });
    }
    if samples.len() != header.n {
        return Err(bad(format!("expected {} rows, found {}", header.n, samples.len())));
    }
    let ds = Dataset {
        samples,
        nu_plus,
        nu_minus,
        spec: spec.clone(),
        seed: header.seed,
    };
    Ok((header, ds))
}

fn parse_header(line: &str) -> Option<DumpHeader> {
    let rest = line.strip_prefix("# vslab-dataset ")?;
    let mut n = None;
    let mut d = None;
    let mut seed = None;
    let mut hash = None;
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "n" => n = v.parse().ok(),
            "d" => d = v.parse().ok(),
            "seed" => seed = v.parse().ok(),
            "spec_hash" => hash = u64::from_str_radix(v, 16).ok(),
            _ => return None,
        }
    }
    Some(DumpHeader {
        n: n?,
        d: d?,
        seed: seed?,
        spec_hash: hash?,
    })
}
