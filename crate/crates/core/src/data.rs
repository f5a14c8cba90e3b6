//! Workload synthesis and ratings ingestion.
//!
//! Requests arrive as a Poisson process of events; each event carries a
//! Poisson-sized batch of requests for one Zipf-drawn file. Profiles are the
//! per-slot normalized counts.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::{Dirichlet, Exp, Poisson};

use crate::domain::{rng_from_seed, zipf_pmf, PopularityProfile, RequestMatrix, SimRng, ZipfSpec};
use crate::error::{Error, Result};

/// Dirichlet concentration of the default per-slot jitter.
pub const DEFAULT_JITTER: f64 = 100.0;
/// Default ratings slot width: 30 days.
pub const DEFAULT_SLOT_SECONDS: u64 = 30 * 24 * 3600;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeVariation {
    /// One global Zipf law for every event.
    Stationary,
    /// Independent profile per slot, see [`IidOptions`].
    IidPerSlot(IidOptions),
    /// Convex autoregression with block-wise coefficients.
    QuasiBlock { block_len: usize, order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    /// Mean requests per event.
    pub mean_requests: f64,
    /// Mean inter-arrival time in seconds.
    pub inter_arrival: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Number of events.
    pub n_events: usize,
    pub zipf: ZipfSpec,
    pub variation: TimeVariation,
}

impl SynthConfig {
    /// 100 requests per event, 10 ms between events, 15-minute slots and
    /// 2·10⁵ events under a stationary Zipf law.
    pub fn reference_defaults(zipf: ZipfSpec) -> Self {
        Self {
            mean_requests: 100.0,
            inter_arrival: 0.01,
            slot_duration: 900.0,
            n_events: 200_000,
            zipf,
            variation: TimeVariation::Stationary,
        }
    }

    /// Expected events per slot.
    pub fn events_per_slot(&self) -> f64 {
        self.slot_duration / self.inter_arrival
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, v: f64| Error::InvalidParameter { name, reason: format!("must be positive, got {v}") };
        if !(self.mean_requests > 0.0 && self.mean_requests.is_finite()) {
            return Err(bad("mean_requests", self.mean_requests));
        }
        if !(self.inter_arrival > 0.0 && self.inter_arrival.is_finite()) {
            return Err(bad("inter_arrival", self.inter_arrival));
        }
        if !(self.slot_duration > 0.0 && self.slot_duration.is_finite()) {
            return Err(bad("slot_duration", self.slot_duration));
        }
        if self.n_events == 0 {
            return Err(bad("n_events", 0.0));
        }
        match self.variation {
            TimeVariation::IidPerSlot(opts) => opts.validate(),
            TimeVariation::QuasiBlock { block_len, order } => check_quasi(order, block_len),
            TimeVariation::Stationary => Ok(()),
        }
    }
}

/// Inverse-CDF sampler over a fixed profile.
fn file_sampler(p: &PopularityProfile) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(p.as_slice()).map_err(|e| Error::InvalidProfile(e.to_string()))
}

fn poisson(mean: f64) -> Result<Poisson<f64>> {
    Poisson::new(mean).map_err(|e| Error::InvalidParameter { name: "mean_requests", reason: e.to_string() })
}

/// Event-level simulation: exponential gaps accumulate into absolute times,
/// and every event adds its batch to slot `⌈t_c/T⌉`. Under time variation
/// the file of an event is drawn from the profile of its slot.
pub fn generate_requests(cfg: &SynthConfig, seed: u64) -> Result<RequestMatrix> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let gap = Exp::new(1.0 / cfg.inter_arrival).map_err(|e| Error::InvalidParameter {
        name: "inter_arrival",
        reason: e.to_string(),
    })?;
    let batch = poisson(cfg.mean_requests)?;
    let mut profiles = SlotProfiles::new(cfg, &mut rng)?;
    let mut counts: Vec<Vec<u64>> = vec![Vec::new(); cfg.zipf.n_files];
    let mut clock = 0.0;
    for _ in 0..cfg.n_events {
        clock += gap.sample(&mut rng);
        let slot = ((clock / cfg.slot_duration).ceil() as usize).max(1) - 1;
        let sampler = profiles.sampler(slot, &mut rng)?;
        let file = sampler.sample(&mut rng);
        let n = batch.sample(&mut rng) as u64;
        if counts[0].len() <= slot {
            for row in counts.iter_mut() {
                row.resize(slot + 1, 0);
            }
        }
        counts[file][slot] += n;
    }
    RequestMatrix::new(counts, cfg.slot_duration)
}

/// Per-slot profiles for the event simulation, extended lazily.
struct SlotProfiles {
    variation: TimeVariation,
    zipf: ZipfSpec,
    base: WeightedIndex<f64>,
    profiles: Vec<PopularityProfile>,
    samplers: Vec<WeightedIndex<f64>>,
    coefficients: Vec<f64>,
}

impl SlotProfiles {
    fn new(cfg: &SynthConfig, rng: &mut SimRng) -> Result<Self> {
        let mut s = Self {
            variation: cfg.variation,
            zipf: cfg.zipf,
            base: file_sampler(&zipf_pmf(cfg.zipf))?,
            profiles: Vec::new(),
            samplers: Vec::new(),
            coefficients: Vec::new(),
        };
        if let TimeVariation::QuasiBlock { order, .. } = cfg.variation {
            let opts = IidOptions::default();
            for _ in 0..order {
                s.profiles.push(iid_profile(&zipf_pmf(cfg.zipf), opts, rng)?);
            }
        }
        Ok(s)
    }

    fn sampler(&mut self, slot: usize, rng: &mut SimRng) -> Result<&WeightedIndex<f64>> {
        match self.variation {
            TimeVariation::Stationary => Ok(&self.base),
            TimeVariation::IidPerSlot(opts) => {
                let base = zipf_pmf(self.zipf);
                while self.samplers.len() <= slot {
                    let p = iid_profile(&base, opts, rng)?;
                    self.samplers.push(file_sampler(&p)?);
                }
                Ok(&self.samplers[slot])
            }
            TimeVariation::QuasiBlock { block_len, order } => {
                while self.samplers.len() <= slot {
                    let t = self.samplers.len();
                    if t.is_multiple_of(block_len) {
                        self.coefficients = convex_coefficients(order, rng);
                    }
                    let p = convex_step(&self.profiles, &self.coefficients);
                    self.samplers.push(file_sampler(&p)?);
                    self.profiles.push(p);
                }
                Ok(&self.samplers[slot])
            }
        }
    }
}

/// Per-slot counts of the event process in closed form: a slot of length
/// `T` holds `Poisson(T/Δt · p_l)` events for file `l` (thinning), and the
/// sum of `K` independent `Poisson(λ)` batches is `Poisson(λK)`.
pub fn sample_slot_counts(p: &PopularityProfile, cfg: &SynthConfig, rng: &mut SimRng) -> Result<Vec<u64>> {
    cfg.validate()?;
    let rate = cfg.events_per_slot();
    p.as_slice()
        .iter()
        .map(|&pl| {
            if pl <= 0.0 {
                return Ok(0);
            }
            let events = poisson(rate * pl)?.sample(rng) as u64;
            if events == 0 {
                return Ok(0);
            }
            Ok(poisson(cfg.mean_requests * events as f64)?.sample(rng) as u64)
        })
        .collect()
}

/// Request counts for a given profile sequence, one column per slot.
pub fn counts_for_profiles(profiles: &[PopularityProfile], cfg: &SynthConfig, seed: u64) -> Result<RequestMatrix> {
    let n = profiles.first().map(PopularityProfile::len).ok_or(Error::EmptyDataset)?;
    let mut rng = rng_from_seed(seed);
    let mut counts = vec![Vec::with_capacity(profiles.len()); n];
    for p in profiles {
        for (row, c) in counts.iter_mut().zip(sample_slot_counts(p, cfg, &mut rng)?) {
            row.push(c);
        }
    }
    RequestMatrix::new(counts, cfg.slot_duration)
}

/// How a per-slot independent profile is drawn from the Zipf law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidOptions {
    /// Assign the Zipf ranks to files by a fresh uniform permutation.
    pub permute: bool,
    /// Dirichlet concentration around the (permuted) pmf; `None` disables.
    pub jitter: Option<f64>,
}

impl Default for IidOptions {
    fn default() -> Self {
        Self { permute: true, jitter: Some(DEFAULT_JITTER) }
    }
}

impl IidOptions {
    pub fn validate(&self) -> Result<()> {
        match self.jitter {
            Some(c) if !(c > 0.0 && c.is_finite()) => Err(Error::InvalidParameter {
                name: "jitter",
                reason: format!("concentration must be positive, got {c}"),
            }),
            _ => Ok(()),
        }
    }
}

fn iid_profile(base: &PopularityProfile, opts: IidOptions, rng: &mut SimRng) -> Result<PopularityProfile> {
    let p = if opts.permute {
        let mut perm: Vec<usize> = (0..base.len()).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
        base.permuted(&perm)
    } else {
        base.clone()
    };
    match opts.jitter {
        Some(conc) if p.len() >= 2 => {
            let alpha: Vec<f64> = p.as_slice().iter().map(|v| (conc * v).max(1e-12)).collect();
            let draw = Dirichlet::new(&alpha)
                .map_err(|e| Error::InvalidParameter { name: "jitter", reason: e.to_string() })?
                .sample(rng);
            PopularityProfile::from_weights(&draw).or(Ok(p))
        }
        _ => Ok(p),
    }
}

/// Independent per-slot profiles with the default options: a uniformly
/// permuted Zipf pmf with Dirichlet jitter of concentration 100.
pub fn generate_iid_stream(zipf: ZipfSpec, slots: usize, seed: u64) -> Result<Vec<PopularityProfile>> {
    generate_iid_stream_with(zipf, slots, IidOptions::default(), seed)
}

pub fn generate_iid_stream_with(zipf: ZipfSpec, slots: usize, opts: IidOptions, seed: u64) -> Result<Vec<PopularityProfile>> {
    if slots == 0 {
        return Err(Error::InvalidParameter { name: "slots", reason: "must be at least 1".into() });
    }
    opts.validate()?;
    let base = zipf_pmf(zipf);
    let mut rng = rng_from_seed(seed);
    (0..slots).map(|_| iid_profile(&base, opts, &mut rng)).collect()
}

fn check_quasi(order: usize, block_len: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidParameter { name: "d", reason: "order must be at least 1".into() });
    }
    if block_len <= order {
        return Err(Error::InvalidParameter {
            name: "block_len",
            reason: format!("must exceed the order {order}, got {block_len}"),
        });
    }
    Ok(())
}

/// Uniform draw from the probability simplex of dimension `d`.
fn convex_coefficients(d: usize, rng: &mut SimRng) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    // Dirichlet(1, …, 1) as normalized unit exponentials
    let e: Vec<f64> = (0..d).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `Σ_k c_k p_{t−k}` over the last `d` entries of `history`, `c_1` newest.
fn convex_step(history: &[PopularityProfile], c: &[f64]) -> PopularityProfile {
    let n = history[0].len();
    let t = history.len();
    let mut v = vec![0.0; n];
    for (k, ck) in c.iter().enumerate() {
        for (vi, pi) in v.iter_mut().zip(history[t - 1 - k].as_slice()) {
            *vi += ck * pi;
        }
    }
    PopularityProfile::clamp_normalize(&v)
}

/// A quasi-time-varying stream: `order` seed slots followed by `n_blocks`
/// blocks of `block_len` slots, each block with its own coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiStream {
    pub profiles: Vec<PopularityProfile>,
    /// `coefficients[b][k]` multiplies `p_{t−1−k}` inside block `b`.
    pub coefficients: Vec<Vec<f64>>,
    pub order: usize,
    pub block_len: usize,
}

impl QuasiStream {
    /// Slot range of block `b`.
    pub fn block(&self, b: usize) -> std::ops::Range<usize> {
        let start = self.order + b * self.block_len;
        start..start + self.block_len
    }

    pub fn n_blocks(&self) -> usize {
        self.coefficients.len()
    }
}

pub fn generate_quasi_stream(order: usize, block_len: usize, n_blocks: usize, zipf: ZipfSpec, seed: u64) -> Result<QuasiStream> {
    check_quasi(order, block_len)?;
    let base = zipf_pmf(zipf);
    let mut rng = rng_from_seed(seed);
    let mut profiles = Vec::with_capacity(order + n_blocks * block_len);
    for _ in 0..order {
        profiles.push(iid_profile(&base, IidOptions::default(), &mut rng)?);
    }
    let mut coefficients = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let c = convex_coefficients(order, &mut rng);
        for _ in 0..block_len {
            let p = convex_step(&profiles, &c);
            profiles.push(p);
        }
        coefficients.push(c);
    }
    Ok(QuasiStream { profiles, coefficients, order, block_len })
}

/// Ratings aggregated into per-slot profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingSeries {
    pub profiles: Vec<PopularityProfile>,
    /// Bucket index of each kept slot, counted from the earliest timestamp.
    pub buckets: Vec<u64>,
    /// Raw per-item rating sums of each kept slot.
    pub sums: Vec<Vec<f64>>,
    pub first_item: u32,
}

impl RatingSeries {
    /// Bucket indices skipped because they held no ratings.
    pub fn gaps(&self) -> Vec<u64> {
        self.buckets.windows(2).flat_map(|w| w[0] + 1..w[1]).collect()
    }
}

fn detect_delimiter(line: &str) -> u8 {
    if line.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parses `(user, item, rating, timestamp)` records, tab- or
/// comma-separated, keeps items in `[id_lo, id_hi]` and buckets timestamps
/// into slots of `slot_seconds`. Slot profiles are normalized rating sums;
/// empty slots are dropped.
pub fn load_movielens_from<R: Read>(reader: R, slot_seconds: u64, id_lo: u32, id_hi: u32) -> Result<RatingSeries> {
    if slot_seconds == 0 {
        return Err(Error::InvalidParameter { name: "slot_duration", reason: "must be positive".into() });
    }
    if id_lo > id_hi {
        return Err(Error::InvalidParameter { name: "id_range", reason: format!("{id_lo} > {id_hi}") });
    }
    let mut buf = std::io::BufReader::new(reader);
    let mut first = String::new();
    buf.read_line(&mut first)?;
    let delimiter = detect_delimiter(&first);
    let chained = std::io::Cursor::new(first.into_bytes()).chain(buf);
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(chained);

    let width = (id_hi - id_lo + 1) as usize;
    let mut rows: Vec<(i64, usize, f64)> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 4 {
            return Err(Error::Parse { line, message: format!("expected 4 fields, got {}", record.len()) });
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let parsed = (field(1).parse::<u32>(), field(2).parse::<f64>(), field(3).parse::<i64>(), field(0).parse::<u64>());
        let (item, rating, ts) = match parsed {
            (Ok(item), Ok(rating), Ok(ts), Ok(_)) if rating.is_finite() => (item, rating, ts),
            // a header is tolerated on the first line only
            _ if line == 1 && field(0).parse::<u64>().is_err() => continue,
            _ => return Err(Error::Parse { line, message: format!("cannot parse record {:?}", record.iter().collect::<Vec<_>>()) }),
        };
        if (id_lo..=id_hi).contains(&item) {
            rows.push((ts, (item - id_lo) as usize, rating));
        }
    }
    let t0 = rows.iter().map(|r| r.0).min().ok_or(Error::EmptyDataset)?;
    let mut slots: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (ts, item, rating) in rows {
        let bucket = (ts - t0) as u64 / slot_seconds;
        slots.entry(bucket).or_insert_with(|| vec![0.0; width])[item] += rating;
    }
    let mut profiles = Vec::with_capacity(slots.len());
    let mut buckets = Vec::with_capacity(slots.len());
    let mut kept = Vec::with_capacity(slots.len());
    for (bucket, sums) in slots {
        match PopularityProfile::from_weights(&sums) {
            Ok(p) => {
                profiles.push(p);
                buckets.push(bucket);
                kept.push(sums);
            }
            Err(_) => log::warn!("gap: slot {bucket} has no positive rating mass"),
        }
    }
    if profiles.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let series = RatingSeries { profiles, buckets, sums: kept, first_item: id_lo };
    for gap in series.gaps() {
        log::info!("gap: slot {gap} holds no ratings and was dropped");
    }
    Ok(series)
}

pub fn load_movielens(path: &Path, slot_seconds: u64, id_lo: u32, id_hi: u32) -> Result<RatingSeries> {
    load_movielens_from(std::fs::File::open(path)?, slot_seconds, id_lo, id_hi)
}

/// Writes `slot,file_1..file_N` with one row per slot and 9 decimals.
pub fn write_profiles_csv<W: Write>(profiles: &[PopularityProfile], out: W) -> Result<()> {
    let n = profiles.first().map(PopularityProfile::len).ok_or(Error::EmptyDataset)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["slot".to_string()];
    header.extend((1..=n).map(|i| format!("file_{i}")));
    w.write_record(&header).map_err(csv_io)?;
    for (t, p) in profiles.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(p.as_slice().iter().map(|v| format!("{v:.9}")));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads profiles in the export format; a bare row of probabilities without
/// a slot column or header is accepted too.
pub fn read_profiles_csv<R: Read>(input: R) -> Result<Vec<PopularityProfile>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    let mut has_slot = false;
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if line == 1 && record.get(0) == Some("slot") {
            has_slot = true;
            continue;
        }
        let values = record
            .iter()
            .skip(usize::from(has_slot))
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("{f:?}: {e}") }))
            .collect::<Result<Vec<f64>>>()?;
        out.push(PopularityProfile::from_weights(&values).map_err(|e| Error::Parse { line, message: e.to_string() })?);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zipf3() -> ZipfSpec {
        ZipfSpec::new(3, 1.5).unwrap()
    }

    #[test]
    fn single_event_fills_one_cell() {
        let cfg = SynthConfig { n_events: 1, ..SynthConfig::reference_defaults(zipf3()) };
        let m = generate_requests(&cfg, 9).unwrap();
        assert_eq!(m.n_slots(), 1);
        let nonzero: Vec<u64> = (0..3).map(|f| m.get(f, 0)).filter(|&c| c > 0).collect();
        assert!(nonzero.len() <= 1);
        assert_eq!(m.total(), nonzero.iter().sum::<u64>());
    }

    #[test]
    fn requests_are_deterministic() {
        let cfg = SynthConfig { n_events: 5000, ..SynthConfig::reference_defaults(zipf3()) };
        assert_eq!(generate_requests(&cfg, 4).unwrap(), generate_requests(&cfg, 4).unwrap());
    }

    #[test]
    fn slots_follow_ceiling_of_time() {
        // 2·10⁵ events 10 ms apart span about 2000 s, i.e. three 900 s slots
        let m = generate_requests(&SynthConfig::reference_defaults(zipf3()), 1).unwrap();
        assert_eq!(m.n_slots(), 3);
        assert_eq!(m.n_files(), 3);
    }

    #[test]
    fn two_file_permutations_without_jitter() {
        let opts = IidOptions { permute: true, jitter: None };
        let zipf = ZipfSpec::new(2, 1.0).unwrap();
        let base = zipf_pmf(zipf);
        let swapped = base.permuted(&[1, 0]);
        for p in generate_iid_stream_with(zipf, 50, opts, 3).unwrap() {
            assert!(p == base || p == swapped);
        }
    }

    #[test]
    fn quasi_order_one_is_constant_per_block() {
        let s = generate_quasi_stream(1, 5, 3, zipf3(), 2).unwrap();
        assert_eq!(s.profiles.len(), 16);
        for p in &s.profiles[1..] {
            assert_eq!(p, &s.profiles[0]);
        }
    }

    #[test]
    fn quasi_rejects_short_blocks() {
        assert!(generate_quasi_stream(4, 4, 1, zipf3(), 0).is_err());
    }

    #[test]
    fn ratings_single_slot() {
        let text = "1\t1\t5\t100\n2\t2\t3\t200\n3\t7\t4\t300\n";
        let s = load_movielens_from(text.as_bytes(), DEFAULT_SLOT_SECONDS, 1, 2).unwrap();
        assert_eq!(s.profiles.len(), 1);
        assert_eq!(s.profiles[0].as_slice(), &[0.625, 0.375]);
    }

    #[test]
    fn ratings_reject_bad_rows() {
        let text = "1,1,5,100\n2,x,3,200\n";
        match load_movielens_from(text.as_bytes(), 10, 1, 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert_eq!(load_movielens_from("1,9,5,100\n".as_bytes(), 10, 1, 2), Err(Error::EmptyDataset));
    }

    #[test]
    fn ratings_accept_header_and_report_gaps() {
        let text = "userId,movieId,rating,timestamp\n1,1,4,0\n1,2,4,25\n";
        let s = load_movielens_from(text.as_bytes(), 10, 1, 2).unwrap();
        assert_eq!(s.buckets, vec![0, 2]);
        assert_eq!(s.gaps(), vec![1]);
    }

    #[test]
    fn csv_round_trip() {
        let profiles = generate_iid_stream(zipf3(), 4, 1).unwrap();
        let mut buf = Vec::new();
        write_profiles_csv(&profiles, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("slot,file_1,file_2,file_3\n0,"));
        let back = read_profiles_csv(buf.as_slice()).unwrap();
        for (a, b) in back.iter().zip(&profiles) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 2e-9);
            }
        }
    }
}
