//! Seeded batch experiments: config parsing, the power/seed/algorithm sweep
//! and CSV output.
//!
//! Config files are flat `key = value` lines; `#` starts a comment and list
//! values are comma separated. Omitted keys take the desk-scale defaults of
//! [`ScenarioConfig::default`].

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;

use crate::channel::{
    build_sigma, sample_channel, substream, upa_response, ChannelBatch, SigmaModel, UpaGeometry,
    UtChannelStats,
};
use crate::error::{Error, Result};
use crate::geometry::{
    channel_power_beta, nadir_angle, noise_power, sample_space_angles, slant_distance,
    OrbitConfig, RfConfig,
};
use crate::lmo::{recover_precoders, solve_lmo, waterfilling, Multipliers};
use crate::mm::solve_mm;
use crate::precoder::{PrecoderMatrix, SolveOptions, SolveTrace};
use crate::rates::{aslnr_precoders, ergodic_sum_rate, los_only_precoders};
use crate::units::{db_to_linear, dbw_to_watts};
use crate::wmmse::solve_wmmse;

pub const CSV_HEADER: [&str; 7] = [
    "algorithm",
    "power_dbw",
    "seed",
    "sum_rate_bps_hz",
    "stderr",
    "iterations",
    "wall_ms",
];

const KEYS: [&str; 21] = [
    "earth_radius_km",
    "altitude_km",
    "carrier_ghz",
    "bandwidth_mhz",
    "noise_temp_k",
    "sat_gain_db",
    "ut_gain_db",
    "sat_nx",
    "sat_ny",
    "ut_nx",
    "ut_ny",
    "num_uts",
    "kappa_db",
    "sigma_model",
    "sigma_rho",
    "power_dbw",
    "seeds",
    "samples",
    "algorithms",
    "eps",
    "max_iter",
];

/// Half width of the uniform space-angle distribution.
const ANGLE_HALF_WIDTH: f64 = 0.5;

const TAG_PLACEMENT: u64 = 0x504C_4143;
const TAG_TRAIN: u64 = 0x5452_4149;
const TAG_EVAL: u64 = 0x4556_414C;

/// Listed in CSV order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Mm,
    Wmmse,
    Lmo,
    Aslnr,
    Los,
    Wf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Mm,
        Algorithm::Wmmse,
        Algorithm::Lmo,
        Algorithm::Aslnr,
        Algorithm::Los,
        Algorithm::Wf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mm => "mm",
            Algorithm::Wmmse => "wmmse",
            Algorithm::Lmo => "lmo",
            Algorithm::Aslnr => "aslnr",
            Algorithm::Los => "los",
            Algorithm::Wf => "wf",
        }
    }

    /// Whether the algorithm iterates and therefore produces a trace.
    pub fn is_iterative(self) -> bool {
        matches!(
            self,
            Algorithm::Mm | Algorithm::Wmmse | Algorithm::Lmo | Algorithm::Los
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("algorithms", format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub orbit: OrbitConfig,
    pub rf: RfConfig,
    pub sat_array: UpaGeometry,
    pub ut_array: UpaGeometry,
    pub num_uts: usize,
    pub kappa_db: f64,
    /// Linear Rician factor.
    pub kappa: f64,
    pub sigma_model: SigmaModel,
    pub power_grid_dbw: Vec<f64>,
    pub seeds: Vec<u64>,
    pub samples: usize,
    /// Sorted, without duplicates.
    pub algorithms: Vec<Algorithm>,
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

impl ScenarioConfig {
    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            eps: self.eps,
            max_iter: self.max_iter,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{raw}`")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "list is empty"));
    }
    Ok(items)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Error::config(key, "must be at least 1"))
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be finite, got {v}")))
    }
}

/// Parses config text; see the module docs for the format.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut entries: Vec<(String, String)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(line, format!("line {} is not `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if entries.iter().any(|(k, _)| k == key) {
            return Err(Error::config(key, "duplicate key"));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    let get = |key: &str| entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let num = |key: &str, default: f64| -> Result<f64> {
        get(key).map_or(Ok(default), |v| parse_value(key, v))
    };
    let int = |key: &str, default: usize| -> Result<usize> {
        get(key).map_or(Ok(default), |v| parse_value(key, v))
    };

    let earth_radius_km = positive("earth_radius_km", num("earth_radius_km", 6378.0)?)?;
    let altitude_km = positive("altitude_km", num("altitude_km", 1000.0)?)?;
    let carrier_ghz = positive("carrier_ghz", num("carrier_ghz", 2.0)?)?;
    let bandwidth_mhz = positive("bandwidth_mhz", num("bandwidth_mhz", 20.0)?)?;
    let noise_temp_k = positive("noise_temp_k", num("noise_temp_k", 300.0)?)?;
    let sat_gain_db = finite("sat_gain_db", num("sat_gain_db", 3.0)?)?;
    let ut_gain_db = finite("ut_gain_db", num("ut_gain_db", 3.0)?)?;
    let sat_nx = at_least_one("sat_nx", int("sat_nx", 8)?)?;
    let sat_ny = at_least_one("sat_ny", int("sat_ny", 8)?)?;
    let ut_nx = at_least_one("ut_nx", int("ut_nx", 6)?)?;
    let ut_ny = at_least_one("ut_ny", int("ut_ny", 6)?)?;
    let num_uts = at_least_one("num_uts", int("num_uts", 16)?)?;
    let kappa_db = finite("kappa_db", num("kappa_db", 0.0)?)?;
    let sigma_rho = num("sigma_rho", 0.5)?;
    let sigma_model = match get("sigma_model").unwrap_or("uniform") {
        "uniform" => SigmaModel::Uniform,
        "exp" => {
            if !(0.0..1.0).contains(&sigma_rho) {
                return Err(Error::config("sigma_rho", format!("must lie in [0, 1), got {sigma_rho}")));
            }
            SigmaModel::ExpCorr(sigma_rho)
        }
        other => {
            return Err(Error::config(
                "sigma_model",
                format!("expected `uniform` or `exp`, got `{other}`"),
            ))
        }
    };
    let power_grid_dbw: Vec<f64> = match get("power_dbw") {
        Some(v) => parse_list("power_dbw", v)?,
        None => (0..=6).map(|i| 5.0 * i as f64).collect(),
    };
    for &p in &power_grid_dbw {
        finite("power_dbw", p)?;
    }
    let seeds: Vec<u64> = match get("seeds") {
        Some(v) => parse_list("seeds", v)?,
        None => vec![1],
    };
    let samples = at_least_one("samples", int("samples", 1000)?)?;
    let algorithms: Vec<Algorithm> = match get("algorithms") {
        Some(v) => parse_list::<String>("algorithms", v)?
            .iter()
            .map(|s| s.parse())
            .collect::<Result<BTreeSet<_>>>()?
            .into_iter()
            .collect(),
        None => Algorithm::ALL.to_vec(),
    };
    let eps = positive("eps", num("eps", 1e-3)?)?;
    let max_iter = at_least_one("max_iter", int("max_iter", 200)?)?;

    let orbit = OrbitConfig::new(earth_radius_km, altitude_km)
        .map_err(|e| Error::config("altitude_km", e.to_string()))?;
    let rf = RfConfig::from_db(
        carrier_ghz * 1e9,
        bandwidth_mhz * 1e6,
        noise_temp_k,
        sat_gain_db,
        ut_gain_db,
    )
    .map_err(|e| Error::config("sat_gain_db", e.to_string()))?;
    let sat_array = UpaGeometry::wavelength_spaced(sat_nx, sat_ny)
        .map_err(|e| Error::config("sat_nx", e.to_string()))?;
    let ut_array = UpaGeometry::wavelength_spaced(ut_nx, ut_ny)
        .map_err(|e| Error::config("ut_nx", e.to_string()))?;

    Ok(ScenarioConfig {
        orbit,
        rf,
        sat_array,
        ut_array,
        num_uts,
        kappa_db,
        kappa: db_to_linear(kappa_db),
        sigma_model,
        power_grid_dbw,
        seeds,
        samples,
        algorithms,
        eps,
        max_iter,
    })
}

/// Reads and parses a config file. An unreadable file is a config error.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Places the UTs of `seed` and builds their statistics.
pub fn build_stats(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<UtChannelStats>> {
    let mut rng = substream(seed, &[TAG_PLACEMENT]);
    let sat_angles = sample_space_angles(&mut rng, cfg.num_uts, ANGLE_HALF_WIDTH)?;
    let ut_angles = sample_space_angles(&mut rng, cfg.num_uts, ANGLE_HALF_WIDTH)?;
    let m = cfg.sat_array.num_elements();
    let n = cfg.ut_array.num_elements();
    let sigma_cov = build_sigma(cfg.sigma_model, n)?;
    let sigma2 = noise_power(&cfg.rf);
    sat_angles
        .iter()
        .zip(&ut_angles)
        .map(|(&sat, &ut)| {
            let link = slant_distance(nadir_angle(sat)?, &cfg.orbit)?;
            let beta = channel_power_beta(link.slant_distance_km, &cfg.rf, m, n)?;
            UtChannelStats::new(
                beta,
                cfg.kappa,
                upa_response(&cfg.sat_array, sat),
                upa_response(&cfg.ut_array, ut),
                sigma_cov.clone(),
                sigma2,
            )
        })
        .collect()
}

/// Everything drawn once per seed and shared by all (power, algorithm) cells.
pub struct SeedContext {
    pub seed: u64,
    pub stats: Vec<UtChannelStats>,
    /// Sample set the MM design optimizes over.
    pub training: ChannelBatch,
    /// Sample set every design is scored on.
    pub evaluation: ChannelBatch,
}

impl SeedContext {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        let stats = build_stats(cfg, seed)?;
        let train_seed = substream(seed, &[TAG_TRAIN]).next_u64();
        let eval_seed = substream(seed, &[TAG_EVAL]).next_u64();
        Ok(Self {
            seed,
            training: sample_channel(&stats, cfg.samples, train_seed)?,
            evaluation: sample_channel(&stats, cfg.samples, eval_seed)?,
            stats,
        })
    }
}

/// Designed precoder plus the solver trace (empty for closed forms).
pub fn design(
    algorithm: Algorithm,
    ctx: &SeedContext,
    power_w: f64,
    opts: SolveOptions,
) -> Result<(PrecoderMatrix, SolveTrace)> {
    let stats = &ctx.stats;
    match algorithm {
        Algorithm::Mm => {
            let init = PrecoderMatrix::matched_filter(stats, power_w)?;
            solve_mm(stats, &ctx.training, &init, opts)
        }
        Algorithm::Wmmse => {
            let init = PrecoderMatrix::matched_filter(stats, power_w)?;
            solve_wmmse(stats, &init, opts)
        }
        Algorithm::Lmo => {
            let init = Multipliers::uniform(stats.len(), power_w)?;
            let (lam, trace) = solve_lmo(stats, &init, opts)?;
            Ok((recover_precoders(&lam, stats)?.1, trace))
        }
        Algorithm::Aslnr => Ok((aslnr_precoders(stats, power_w)?, SolveTrace::default())),
        Algorithm::Los => los_only_precoders(stats, power_w, opts),
        Algorithm::Wf => {
            let lam = waterfilling(stats, power_w)?;
            Ok((recover_precoders(&lam, stats)?.1, SolveTrace::default()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub power_dbw: f64,
    pub seed: u64,
    /// NaN when the solve failed.
    pub sum_rate: f64,
    pub stderr: f64,
    pub iterations: usize,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.sum_rate.is_nan()
    }
}

/// One finished (algorithm, power, seed) cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub row: ResultRow,
    pub trace: SolveTrace,
    pub per_ut_rate: Vec<f64>,
    pub per_ut_stderr: Vec<f64>,
    /// Solver error message of a failed cell.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Record elapsed milliseconds; otherwise `wall_ms` is 0 so that output
    /// bytes are reproducible.
    pub record_wall_time: bool,
}

fn run_cell(
    cfg: &ScenarioConfig,
    ctx: &SeedContext,
    algorithm: Algorithm,
    power_dbw: f64,
    record_wall_time: bool,
) -> Result<CellOutcome> {
    let start = Instant::now();
    let designed = design(algorithm, ctx, dbw_to_watts(power_dbw), cfg.solve_options());
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let mut row = ResultRow {
        algorithm,
        power_dbw,
        seed: ctx.seed,
        sum_rate: f64::NAN,
        stderr: f64::NAN,
        iterations: 0,
        wall_ms: if record_wall_time { elapsed } else { 0.0 },
    };
    match designed {
        Ok((w, trace)) => {
            let report = ergodic_sum_rate(&w, &ctx.stats, &ctx.evaluation)?;
            row.sum_rate = report.sum_rate;
            row.stderr = report.sum_stderr();
            row.iterations = trace.iterations;
            Ok(CellOutcome {
                row,
                trace,
                per_ut_rate: report.per_ut_rate,
                per_ut_stderr: report.estimator_stderr,
                failure: None,
            })
        }
        Err(
            e @ (Error::DegenerateDirection(_)
            | Error::Numeric(_)
            | Error::Recovery(_)),
        ) => Ok(CellOutcome {
            row,
            trace: SolveTrace::default(),
            per_ut_rate: Vec::new(),
            per_ut_stderr: Vec::new(),
            failure: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

/// Runs every (seed, power, algorithm) cell. Outcomes are sorted by
/// algorithm, power and seed, independently of scheduling.
pub fn run_experiment(cfg: &ScenarioConfig, opts: RunOptions) -> Result<Vec<CellOutcome>> {
    let work = || -> Result<Vec<CellOutcome>> {
        let contexts: Vec<SeedContext> = cfg
            .seeds
            .par_iter()
            .map(|&seed| SeedContext::new(cfg, seed))
            .collect::<Result<_>>()?;
        let mut cells = Vec::new();
        for ctx in &contexts {
            for &power in &cfg.power_grid_dbw {
                for &alg in &cfg.algorithms {
                    cells.push((ctx, alg, power));
                }
            }
        }
        let mut out: Vec<CellOutcome> = cells
            .into_par_iter()
            .map(|(ctx, alg, power)| run_cell(cfg, ctx, alg, power, opts.record_wall_time))
            .collect::<Result<_>>()?;
        out.sort_by(|a, b| {
            a.row
                .algorithm
                .cmp(&b.row.algorithm)
                .then(a.row.power_dbw.total_cmp(&b.row.power_dbw))
                .then(a.row.seed.cmp(&b.row.seed))
        });
        Ok(out)
    };
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Argument(format!("cannot build thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Writes the results CSV. Empty input is rejected before the file is created.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Argument("no result rows to write".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.algorithm.name().to_string(),
            r.power_dbw.to_string(),
            r.seed.to_string(),
            r.sum_rate.to_string(),
            r.stderr.to_string(),
            r.iterations.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Argument(format!("unexpected header {header:?}")));
    }
    let field = |rec: &csv::StringRecord, i: usize| -> Result<String> {
        rec.get(i)
            .map(str::to_string)
            .ok_or_else(|| Error::Argument(format!("missing column {}", CSV_HEADER[i])))
    };
    let bad = |i: usize, v: &str| Error::Argument(format!("bad {} value `{v}`", CSV_HEADER[i]));
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let f = |i: usize| field(&rec, i);
            let algorithm: Algorithm = f(0)?.parse().map_err(|_| bad(0, &rec[0]))?;
            let num = |i: usize| -> Result<f64> { f(i)?.parse().map_err(|_| bad(i, &rec[i])) };
            Ok(ResultRow {
                algorithm,
                power_dbw: num(1)?,
                seed: f(2)?.parse().map_err(|_| bad(2, &rec[2]))?,
                sum_rate: num(3)?,
                stderr: num(4)?,
                iterations: f(5)?.parse().map_err(|_| bad(5, &rec[5]))?,
                wall_ms: num(6)?,
            })
        })
        .collect()
}

/// `<algo>_<power>_<seed>.trace.csv`
pub fn trace_file_name(algorithm: Algorithm, power_dbw: f64, seed: u64) -> String {
    format!("{}_{}_{}.trace.csv", algorithm.name(), power_dbw, seed)
}

/// Writes one `iter,objective` file per iterative cell into `dir`.
pub fn write_traces(outcomes: &[CellOutcome], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for o in outcomes {
        if !o.row.algorithm.is_iterative() || o.failure.is_some() {
            continue;
        }
        let path = dir.join(trace_file_name(o.row.algorithm, o.row.power_dbw, o.row.seed));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iter", "objective"])?;
        for (i, v) in o.trace.objective_per_iteration.iter().enumerate() {
            w.write_record([i.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::DesignCsi;

    fn small_config(extra: &str) -> ScenarioConfig {
        parse_config(&format!(
            "sat_nx = 3\nsat_ny = 3\nut_nx = 2\nut_ny = 2\nnum_uts = 3\nsamples = 50\n\
             power_dbw = 10, 20\nseeds = 1, 2\nmax_iter = 30\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn empty_config_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.sat_array.num_elements(), 64);
        assert_eq!(c.ut_array.num_elements(), 36);
        assert_eq!(c.num_uts, 16);
        assert_eq!(c.kappa, 1.0);
        assert_eq!(c.power_grid_dbw, vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert_eq!(c.algorithms, Algorithm::ALL.to_vec());
        assert_eq!(c.samples, 1000);
        assert_eq!(c.rf.carrier_freq_hz, 2e9);
        assert_eq!(c.sigma_model, SigmaModel::Uniform);
    }

    #[test]
    fn kappa_is_converted_to_linear() {
        let c = parse_config("kappa_db = 10 # strong LoS").unwrap();
        assert!((c.kappa - 10.0).abs() < 1e-12);
    }

    #[test]
    fn config_errors_name_the_key() {
        let key_of = |text: &str| match parse_config(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(key_of("num_uts = 0"), "num_uts");
        assert_eq!(key_of("bogus = 1"), "bogus");
        assert_eq!(key_of("samples = many"), "samples");
        assert_eq!(key_of("power_dbw = "), "power_dbw");
        assert_eq!(key_of("algorithms = mm, foo"), "algorithms");
        assert_eq!(key_of("sigma_model = exp\nsigma_rho = 1.5"), "sigma_rho");
        assert_eq!(key_of("eps = 1\neps = 2"), "eps");
    }

    #[test]
    fn algorithms_are_sorted_and_deduplicated() {
        let c = parse_config("algorithms = lmo, mm, lmo, wf").unwrap();
        assert_eq!(c.algorithms, vec![Algorithm::Mm, Algorithm::Lmo, Algorithm::Wf]);
    }

    #[test]
    fn stats_are_reproducible_per_seed() {
        let c = small_config("");
        let a = build_stats(&c, 7).unwrap();
        let b = build_stats(&c, 7).unwrap();
        let other = build_stats(&c, 8).unwrap();
        for k in 0..3 {
            assert_eq!(a[k].g(), b[k].g());
            assert_eq!(a[k].beta(), b[k].beta());
        }
        assert_ne!(a[0].g(), other[0].g());
    }

    #[test]
    fn rows_are_sorted_and_thread_independent() {
        let c = small_config("algorithms = wmmse, lmo, aslnr");
        let one = run_experiment(&c, RunOptions { threads: Some(1), ..RunOptions::default() }).unwrap();
        let four = run_experiment(&c, RunOptions { threads: Some(4), ..RunOptions::default() }).unwrap();
        let rows1: Vec<_> = one.iter().map(|o| o.row.clone()).collect();
        let rows4: Vec<_> = four.iter().map(|o| o.row.clone()).collect();
        assert_eq!(rows1, rows4);
        assert_eq!(rows1.len(), 3 * 2 * 2);
        assert_eq!(rows1[0].algorithm, Algorithm::Wmmse);
        assert_eq!((rows1[0].power_dbw, rows1[0].seed), (10.0, 1));
        assert_eq!((rows1[1].power_dbw, rows1[1].seed), (10.0, 2));
        assert_eq!((rows1[2].power_dbw, rows1[2].seed), (20.0, 1));
        assert!(rows1.iter().all(|r| r.wall_ms == 0.0 && !r.failed()));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let rows = vec![
            ResultRow {
                algorithm: Algorithm::Lmo,
                power_dbw: 20.0,
                seed: 3,
                sum_rate: 12.345678901234567,
                stderr: 0.01,
                iterations: 7,
                wall_ms: 0.0,
            },
            ResultRow {
                algorithm: Algorithm::Los,
                power_dbw: 2.5,
                seed: 3,
                sum_rate: f64::NAN,
                stderr: f64::NAN,
                iterations: 0,
                wall_ms: 0.0,
            },
        ];
        emit_csv(&rows[..1], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "algorithm,power_dbw,seed,sum_rate_bps_hz,stderr,iterations,wall_ms\n\
             lmo,20,3,12.345678901234567,0.01,7,0\n"
        );
        emit_csv(&rows, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].failed());
        assert_eq!(back[1].power_dbw, 2.5);
    }

    #[test]
    fn empty_rows_create_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.csv");
        assert!(emit_csv(&[], &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn traces_are_written_for_iterative_cells() {
        let c = parse_config(
            "sat_nx = 3\nsat_ny = 3\nut_nx = 2\nut_ny = 2\nnum_uts = 3\nsamples = 50\n\
             algorithms = lmo, aslnr\nseeds = 4\npower_dbw = 15",
        )
        .unwrap();
        let out = run_experiment(&c, RunOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_traces(&out, dir.path()).unwrap();
        let trace = fs::read_to_string(dir.path().join("lmo_15_4.trace.csv")).unwrap();
        assert!(trace.starts_with("iter,objective\n0,"));
        assert!(!dir.path().join("aslnr_15_4.trace.csv").exists());
    }
}
