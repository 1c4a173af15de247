//! Experiment orchestration: the relative error metric, single trials,
//! trial ensembles over sensor counts and noise levels, and two-stage
//! forecast experiments.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{
    add_noise, gen_low_rank, gen_rotating_blobs, gen_traveling_waves, load_field_file,
    make_windows, sample_sensors, seeded_wave_modes, split_interspersed, split_temporal, Blob,
    FieldSeries, NoiseSpec, Scaler, SplitLabel, TemporalSegment, WindowedDataset,
};
use crate::error::{Error, Result};
use crate::map_items;
use crate::models::{
    forecaster_train_target, rollout, train, ForecasterModel, SdnModel, ShredArchitecture,
    ShredModel, TrainConfig,
};
use crate::pod::{
    fit_pod_snapshots, gappy_reconstruct, qr_place_sensors, random_place_sensors, PodBasis,
    SensorSet,
};

/// Reconstruction method under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Shred,
    Sdn,
    QrPod,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Shred => "shred",
            Method::Sdn => "sdn",
            Method::QrPod => "qr_pod",
        }
    }
    fn tag(&self) -> u64 {
        match self {
            Method::Shred => 1,
            Method::Sdn => 2,
            Method::QrPod => 3,
        }
    }
}

/// Sensor placement strategy for an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Qr,
    Random,
}

impl Placement {
    pub fn name(&self) -> &'static str {
        match self {
            Placement::Qr => "qr",
            Placement::Random => "random",
        }
    }
}

/// Synthetic dataset recipes plus on-disk field files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    TravelingWaves {
        height: usize,
        width: usize,
        t_len: usize,
        n_modes: usize,
        #[serde(default = "default_dt")]
        dt: f64,
        seed: u64,
    },
    LowRank {
        m: usize,
        t_len: usize,
        sigmas: Vec<f64>,
        frequencies: Vec<f64>,
        seed: u64,
    },
    RotatingBlobs {
        height: usize,
        width: usize,
        t_len: usize,
        blobs: Vec<Blob>,
        #[serde(default = "default_dt")]
        dt: f64,
    },
    File {
        path: String,
    },
}

fn default_dt() -> f64 {
    1.0
}

impl DatasetSpec {
    /// Materializes the snapshot series.
    pub fn realize(&self) -> Result<FieldSeries> {
        match self {
            DatasetSpec::TravelingWaves {
                height,
                width,
                t_len,
                n_modes,
                dt,
                seed,
            } => {
                let modes = seeded_wave_modes(*n_modes, *seed);
                gen_traveling_waves(*height, *width, *t_len, &modes, *dt)
            }
            DatasetSpec::LowRank {
                m,
                t_len,
                sigmas,
                frequencies,
                seed,
            } => gen_low_rank(*m, *t_len, sigmas, frequencies, *seed),
            DatasetSpec::RotatingBlobs {
                height,
                width,
                t_len,
                blobs,
                dt,
            } => gen_rotating_blobs(*height, *width, *t_len, blobs, *dt),
            DatasetSpec::File { path } => load_field_file(Path::new(path)),
        }
    }
}

/// Full description of one experiment; the unit that a config file maps to.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_placement")]
    pub placement: Placement,
    #[serde(default = "default_sensor_counts")]
    pub sensor_counts: Vec<usize>,
    #[serde(default = "default_alphas")]
    pub noise_alphas: Vec<f64>,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
    /// Cap on the gappy-POD basis rank; the effective rank is
    /// min(sensor count, r_max, numerical rank of the fitted basis).
    #[serde(default)]
    pub r_max: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden_size: usize,
    #[serde(default = "default_layers")]
    pub lstm_layers: usize,
    #[serde(default = "default_widths")]
    pub decoder_widths: Vec<usize>,
    #[serde(default = "default_fractions")]
    pub split_fractions: [f64; 3],
    /// Temporal-split parameters used by the forecast experiment.
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_val_len")]
    pub val_len: usize,
    #[serde(default = "default_horizon")]
    pub forecast_horizon: usize,
    #[serde(default = "default_runs")]
    pub forecast_runs: usize,
}

fn default_method() -> Method {
    Method::Shred
}
fn default_placement() -> Placement {
    Placement::Random
}
fn default_sensor_counts() -> Vec<usize> {
    vec![3]
}
fn default_alphas() -> Vec<f64> {
    vec![0.0]
}
fn default_lag() -> usize {
    50
}
fn default_trials() -> usize {
    32
}
fn default_hidden() -> usize {
    64
}
fn default_layers() -> usize {
    2
}
fn default_widths() -> Vec<usize> {
    vec![350, 400]
}
fn default_fractions() -> [f64; 3] {
    [0.7, 0.15, 0.15]
}
fn default_train_frac() -> f64 {
    0.85
}
fn default_val_len() -> usize {
    20
}
fn default_horizon() -> usize {
    25
}
fn default_runs() -> usize {
    16
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.sensor_counts.is_empty() || self.sensor_counts.iter().any(|&s| s < 1) {
            return Err(Error::Config("sensor counts must be >= 1".into()));
        }
        if self.noise_alphas.is_empty() || self.noise_alphas.iter().any(|&a| a < 0.0) {
            return Err(Error::Config("noise alphas must be nonnegative".into()));
        }
        if self.lag < 1 {
            return Err(Error::Config("lag must be >= 1".into()));
        }
        Ok(())
    }
}

/// One trained-and-evaluated reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub method: Method,
    pub placement: Placement,
    pub sensor_count: usize,
    pub alpha: f64,
    pub trial: usize,
    pub seed: u64,
    pub sensors: Vec<usize>,
    pub error: f64,
    pub wall_time_s: f64,
}

/// Median and quartiles of test error over the trials of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub method: Method,
    pub placement: Placement,
    pub sensor_count: usize,
    pub alpha: f64,
    pub n_trials: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Rows plus per-cell summaries from one sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResults {
    pub trials: Vec<TrialResult>,
    pub summaries: Vec<EnsembleSummary>,
}

/// Forecast experiment outcome: per-step relative errors for every run and
/// for the run-averaged (ensembled) state estimates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecastResult {
    pub horizon: usize,
    pub runs: usize,
    /// run x step
    pub shred_step_errors: Vec<Vec<f64>>,
    pub pod_step_errors: Vec<Vec<f64>>,
    pub shred_median: Vec<f64>,
    pub pod_median: Vec<f64>,
    pub ensembled_error: Vec<f64>,
}

/// Average relative reconstruction error over a set of states:
/// (1/T) sum_i ||xhat_i - x_i|| / ||x_i||.
pub fn reconstruction_error(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truths.len() || estimates.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} estimates vs {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    for (i, (xh, x)) in estimates.iter().zip(truths).enumerate() {
        if xh.len() != x.len() {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch at snapshot {}",
                i
            )));
        }
        let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateTruth { index: i });
        }
        let diff: f64 = xh
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        total += diff / norm;
    }
    Ok(total / truths.len() as f64)
}

/// Quantile by linear interpolation between order statistics; `sorted` must
/// be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed from a list of lattice coordinates.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

// lattice stream tags; data-facing streams never include the method so all
// methods in a cell see identical sensors, splits, and noise
const STREAM_NOISE: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_PLACE: u64 = 3;
const STREAM_MODEL: u64 = 4;
const STREAM_TRAIN: u64 = 5;

fn scale_windows(windows: &[Vec<f64>], scaler: &Scaler, n_sensors: usize) -> Vec<Vec<f64>> {
    windows
        .iter()
        .map(|w| {
            w.chunks(n_sensors)
                .flat_map(|m| scaler.apply(m))
                .collect()
        })
        .collect()
}

fn gather<T>(items: &[T], idx: &[usize]) -> Vec<T>
where
    T: Clone,
{
    idx.iter().map(|&i| items[i].clone()).collect()
}

fn fit_training_pod(
    snapshots: &[Vec<f64>],
    requested: usize,
    r_max: Option<usize>,
) -> Result<PodBasis> {
    let m = snapshots[0].len();
    let r = requested
        .min(r_max.unwrap_or(usize::MAX))
        .min(m)
        .min(snapshots.len())
        .max(1);
    let basis = fit_pod_snapshots(snapshots, r)?;
    // a singular selection matrix is useless downstream, so never keep
    // numerically dead modes
    let nr = basis.numerical_rank().max(1);
    if nr < basis.rank() {
        basis.truncated(nr)
    } else {
        Ok(basis)
    }
}

fn place_sensors(
    cfg: &ExperimentConfig,
    clean: &FieldSeries,
    train_snapshots: &[Vec<f64>],
    sensor_count: usize,
    seed: u64,
) -> Result<SensorSet> {
    match cfg.placement {
        Placement::Random => {
            random_place_sensors(clean.state_dim(), sensor_count, seed, clean.mask())
        }
        Placement::Qr => {
            let basis = fit_training_pod(train_snapshots, sensor_count, cfg.r_max)?;
            qr_place_sensors(&basis, sensor_count, clean.mask())
        }
    }
}

/// Runs one reconstruction trial for a (sensor count, alpha, trial index)
/// cell. Deterministic given the config and coordinates.
pub fn run_trial(
    cfg: &ExperimentConfig,
    clean: &FieldSeries,
    sensor_count: usize,
    alpha: f64,
    trial: usize,
) -> Result<TrialResult> {
    let start = Instant::now();
    let base = cfg.base_seed;
    let t = trial as u64;
    let sc = sensor_count as u64;
    let ab = alpha.to_bits();

    let noisy = add_noise(
        clean,
        &NoiseSpec {
            alpha,
            seed: mix_seed(&[base, STREAM_NOISE, ab, t]),
        },
        clean,
    )?;

    let n = clean.len();
    if n <= cfg.lag {
        return Err(Error::InvalidArgument(format!(
            "dataset of {} snapshots too short for lag {}",
            n, cfg.lag
        )));
    }
    let n_samples = n - cfg.lag;
    let split = split_interspersed(
        n_samples,
        cfg.split_fractions,
        mix_seed(&[base, STREAM_SPLIT, t]),
    )?;

    let train_times: Vec<usize> = split
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == SplitLabel::Train)
        .map(|(i, _)| i + cfg.lag)
        .collect();
    let train_snapshots: Vec<Vec<f64>> =
        train_times.iter().map(|&ti| noisy.snapshots()[ti].clone()).collect();

    let sensors = place_sensors(
        cfg,
        clean,
        &train_snapshots,
        sensor_count,
        mix_seed(&[base, STREAM_PLACE, sc, t]),
    )?;
    let measurements = sample_sensors(&noisy, &sensors)?;
    let windowed = make_windows(&measurements, &noisy, cfg.lag, &split)?;

    let test_idx: Vec<usize> = windowed
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == SplitLabel::Test)
        .map(|(i, _)| i)
        .collect();
    if test_idx.is_empty() {
        return Err(Error::InvalidArgument("empty test split".into()));
    }
    // estimates are always scored against the clean field
    let clean_truths: Vec<Vec<f64>> = test_idx
        .iter()
        .map(|&i| clean.snapshots()[windowed.target_times[i]].clone())
        .collect();

    let seed = mix_seed(&[base, STREAM_MODEL, cfg.method.tag(), sc, ab, t]);
    let estimates = match cfg.method {
        Method::Shred => {
            shred_estimates(cfg, &windowed, &measurements, &test_idx, seed)?
        }
        Method::Sdn => sdn_estimates(cfg, &windowed, &measurements, &test_idx, seed)?,
        Method::QrPod => {
            let basis = fit_training_pod(&train_snapshots, sensor_count, cfg.r_max)?;
            let mut out = Vec::with_capacity(test_idx.len());
            for &i in &test_idx {
                let y = &measurements.values[windowed.target_times[i]];
                out.push(gappy_reconstruct(&basis, &sensors, y)?);
            }
            out
        }
    };
    let error = reconstruction_error(&estimates, &clean_truths)?;
    Ok(TrialResult {
        method: cfg.method,
        placement: cfg.placement,
        sensor_count,
        alpha,
        trial,
        seed,
        sensors: sensors.indices,
        error,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn split_indices(windowed: &WindowedDataset, label: SplitLabel) -> Vec<usize> {
    windowed
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == label)
        .map(|(i, _)| i)
        .collect()
}

fn shred_estimates(
    cfg: &ExperimentConfig,
    windowed: &WindowedDataset,
    measurements: &crate::datasets::MeasurementSeries,
    test_idx: &[usize],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let s = windowed.n_sensors;
    let train_idx = split_indices(windowed, SplitLabel::Train);
    let val_idx = split_indices(windowed, SplitLabel::Validation);

    let meas_rows: Vec<&[f64]> = measurements.values.iter().map(|v| v.as_slice()).collect();
    let input_scaler = Scaler::fit(&meas_rows)?;
    let train_targets_raw: Vec<&[f64]> = train_idx
        .iter()
        .map(|&i| windowed.targets[i].as_slice())
        .collect();
    let target_scaler = Scaler::fit(&train_targets_raw)?;

    let scaled_windows = scale_windows(&windowed.windows, &input_scaler, s);
    let scale_targets = |idx: &[usize]| -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| target_scaler.apply(&windowed.targets[i]))
            .collect()
    };
    let train_x = gather(&scaled_windows, &train_idx);
    let val_x = gather(&scaled_windows, &val_idx);
    let train_y = scale_targets(&train_idx);
    let val_y = scale_targets(&val_idx);

    let arch = ShredArchitecture {
        n_sensors: s,
        state_dim: windowed.targets[0].len(),
        lag: windowed.lag,
        lstm_layers: cfg.lstm_layers,
        hidden_size: cfg.hidden_size,
        decoder_widths: cfg.decoder_widths.clone(),
    };
    let mut model = ShredModel::new(
        arch,
        input_scaler,
        target_scaler.clone(),
        measurements.sensors.indices.clone(),
        seed,
    );
    let train_cfg = TrainConfig {
        seed: mix_seed(&[cfg.train.seed, STREAM_TRAIN, seed]),
        ..cfg.train.clone()
    };
    train(&mut model, &train_x, &train_y, &val_x, &val_y, &train_cfg)?;

    let test_x = gather(&scaled_windows, test_idx);
    let scaled_out = model.predict_scaled_flat(&test_x)?;
    Ok(scaled_out.iter().map(|o| target_scaler.invert(o)).collect())
}

fn sdn_estimates(
    cfg: &ExperimentConfig,
    windowed: &WindowedDataset,
    measurements: &crate::datasets::MeasurementSeries,
    test_idx: &[usize],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let train_idx = split_indices(windowed, SplitLabel::Train);
    let val_idx = split_indices(windowed, SplitLabel::Validation);

    let meas_rows: Vec<&[f64]> = measurements.values.iter().map(|v| v.as_slice()).collect();
    let input_scaler = Scaler::fit(&meas_rows)?;
    let train_targets_raw: Vec<&[f64]> = train_idx
        .iter()
        .map(|&i| windowed.targets[i].as_slice())
        .collect();
    let target_scaler = Scaler::fit(&train_targets_raw)?;

    // the SDN sees only the measurement at the target time
    let inputs: Vec<Vec<f64>> = windowed
        .target_times
        .iter()
        .map(|&ti| input_scaler.apply(&measurements.values[ti]))
        .collect();
    let targets: Vec<Vec<f64>> = windowed
        .targets
        .iter()
        .map(|x| target_scaler.apply(x))
        .collect();

    let mut model = SdnModel::new(
        windowed.n_sensors,
        windowed.targets[0].len(),
        &cfg.decoder_widths,
        input_scaler,
        target_scaler.clone(),
        seed,
    );
    let train_cfg = TrainConfig {
        seed: mix_seed(&[cfg.train.seed, STREAM_TRAIN, seed]),
        ..cfg.train.clone()
    };
    train(
        &mut model,
        &gather(&inputs, &train_idx),
        &gather(&targets, &train_idx),
        &gather(&inputs, &val_idx),
        &gather(&targets, &val_idx),
        &train_cfg,
    )?;
    let raw_test: Vec<Vec<f64>> = test_idx
        .iter()
        .map(|&i| measurements.values[windowed.target_times[i]].clone())
        .collect();
    model.predict(&raw_test)
}

fn summarize_cell(
    method: Method,
    placement: Placement,
    sensor_count: usize,
    alpha: f64,
    errors: &mut [f64],
) -> EnsembleSummary {
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    EnsembleSummary {
        method,
        placement,
        sensor_count,
        alpha,
        n_trials: errors.len(),
        q25: quantile(errors, 0.25),
        median: quantile(errors, 0.5),
        q75: quantile(errors, 0.75),
    }
}

/// Runs `trials` reconstructions per (sensor count, alpha) cell and
/// summarizes each cell with median and quartiles.
pub fn run_ensemble(cfg: &ExperimentConfig, workers: usize) -> Result<SweepResults> {
    cfg.validate()?;
    let clean = cfg.dataset.realize()?;
    let mut jobs = Vec::new();
    for &sc in &cfg.sensor_counts {
        for &alpha in &cfg.noise_alphas {
            for trial in 0..cfg.trials {
                jobs.push((sc, alpha, trial));
            }
        }
    }
    let outcomes = map_items(jobs, workers, |(sc, alpha, trial)| {
        (
            sc,
            alpha,
            trial,
            run_trial(cfg, &clean, sc, alpha, trial),
        )
    });

    let mut trials = Vec::new();
    let mut summaries = Vec::new();
    for &sc in &cfg.sensor_counts {
        for &alpha in &cfg.noise_alphas {
            let mut errors = Vec::new();
            let mut failed_seeds = Vec::new();
            for (osc, oalpha, otrial, res) in &outcomes {
                if *osc != sc || *oalpha != alpha {
                    continue;
                }
                match res {
                    Ok(r) => {
                        errors.push(r.error);
                        trials.push(r.clone());
                    }
                    Err(_) => failed_seeds.push(mix_seed(&[
                        cfg.base_seed,
                        STREAM_MODEL,
                        cfg.method.tag(),
                        sc as u64,
                        alpha.to_bits(),
                        *otrial as u64,
                    ])),
                }
            }
            if errors.is_empty() {
                return Err(Error::CellFailure {
                    cell: format!(
                        "{}/{} sensors={} alpha={}",
                        cfg.method.name(),
                        cfg.placement.name(),
                        sc,
                        alpha
                    ),
                    seeds: failed_seeds,
                });
            }
            summaries.push(summarize_cell(cfg.method, cfg.placement, sc, alpha, &mut errors));
        }
    }
    Ok(SweepResults { trials, summaries })
}

/// Ensemble over the config's noise alphas; identical to [`run_ensemble`]
/// with noise injection driven by the alpha grid.
pub fn run_noise_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepResults> {
    run_ensemble(cfg, workers)
}

/// Per-step error of run-averaged state estimates.
pub fn ensembled_errors(
    per_run_estimates: &[Vec<Vec<f64>>],
    truths: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let runs = per_run_estimates.len();
    if runs == 0 {
        return Err(Error::InvalidArgument("no runs to ensemble".into()));
    }
    let horizon = truths.len();
    let mut out = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let dim = truths[step].len();
        let mut mean = vec![0.0; dim];
        for run in per_run_estimates {
            for (m, &v) in mean.iter_mut().zip(&run[step]) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= runs as f64;
        }
        out.push(reconstruction_error(&[mean], &[truths[step].clone()])?);
    }
    Ok(out)
}

struct ForecastRun {
    shred_errors: Vec<f64>,
    pod_errors: Vec<f64>,
    shred_estimates: Vec<Vec<f64>>,
}

fn run_forecast_once(
    cfg: &ExperimentConfig,
    clean: &FieldSeries,
    horizon: usize,
    run: usize,
) -> Result<ForecastRun> {
    let base = cfg.base_seed;
    let r = run as u64;
    let k = cfg.lag;
    let n = clean.len();
    let alpha = cfg.noise_alphas[0];
    let sensor_count = cfg.sensor_counts[0];

    let noisy = add_noise(
        clean,
        &NoiseSpec {
            alpha,
            seed: mix_seed(&[base, STREAM_NOISE, alpha.to_bits(), r]),
        },
        clean,
    )?;

    let n_samples = n - k;
    let train_len = (cfg.train_frac * n_samples as f64).floor() as usize;
    if train_len + cfg.val_len >= n_samples {
        return Err(Error::InvalidArgument(
            "temporal split leaves no test samples".into(),
        ));
    }
    let test_len = n_samples - train_len - cfg.val_len;
    if horizon > test_len {
        return Err(Error::InvalidArgument(format!(
            "horizon {} exceeds {} test samples",
            horizon, test_len
        )));
    }
    let split = split_temporal(
        n_samples,
        &[
            TemporalSegment {
                label: SplitLabel::Train,
                len: Some(train_len),
            },
            TemporalSegment {
                label: SplitLabel::Validation,
                len: Some(cfg.val_len),
            },
            TemporalSegment {
                label: SplitLabel::Test,
                len: None,
            },
        ],
    )?;
    // first snapshot index in the test segment
    let test_start = k + train_len + cfg.val_len;

    let train_times: Vec<usize> = (k..k + train_len).collect();
    let train_snapshots: Vec<Vec<f64>> =
        train_times.iter().map(|&ti| noisy.snapshots()[ti].clone()).collect();

    let sensors = place_sensors(
        cfg,
        clean,
        &train_snapshots,
        sensor_count,
        mix_seed(&[base, STREAM_PLACE, sensor_count as u64, r]),
    )?;
    let measurements = sample_sensors(&noisy, &sensors)?;
    let windowed = make_windows(&measurements, &noisy, k, &split)?;

    // SHRED reconstruction model on the temporal train/val segments
    let model_seed = mix_seed(&[base, STREAM_MODEL, Method::Shred.tag(), r]);
    let s = windowed.n_sensors;
    let train_idx = split_indices(&windowed, SplitLabel::Train);
    let val_idx = split_indices(&windowed, SplitLabel::Validation);

    let meas_rows: Vec<&[f64]> = measurements.values.iter().map(|v| v.as_slice()).collect();
    let input_scaler = Scaler::fit(&meas_rows)?;
    let train_targets_raw: Vec<&[f64]> = train_idx
        .iter()
        .map(|&i| windowed.targets[i].as_slice())
        .collect();
    let target_scaler = Scaler::fit(&train_targets_raw)?;
    let scaled_windows = scale_windows(&windowed.windows, &input_scaler, s);
    let scale_targets = |idx: &[usize]| -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| target_scaler.apply(&windowed.targets[i]))
            .collect()
    };
    let arch = ShredArchitecture {
        n_sensors: s,
        state_dim: clean.state_dim(),
        lag: k,
        lstm_layers: cfg.lstm_layers,
        hidden_size: cfg.hidden_size,
        decoder_widths: cfg.decoder_widths.clone(),
    };
    let mut shred = ShredModel::new(
        arch,
        input_scaler.clone(),
        target_scaler.clone(),
        sensors.indices.clone(),
        model_seed,
    );
    let train_cfg = TrainConfig {
        seed: mix_seed(&[cfg.train.seed, STREAM_TRAIN, model_seed]),
        ..cfg.train.clone()
    };
    train(
        &mut shred,
        &gather(&scaled_windows, &train_idx),
        &scale_targets(&train_idx),
        &gather(&scaled_windows, &val_idx),
        &scale_targets(&val_idx),
        &train_cfg,
    )?;

    // forecaster trained on measurements observed before the test segment
    let fc_seed = mix_seed(&[base, STREAM_MODEL, 7, r]);
    let prefix: Vec<Vec<f64>> = measurements.values[..test_start].to_vec();
    let pairs = forecaster_train_target(&prefix, k)?;
    let n_pairs = pairs.len();
    let fc_val = cfg.val_len.min(n_pairs.saturating_sub(1)).max(1);
    let flat = |w: &[Vec<f64>]| -> Vec<f64> {
        w.iter().flat_map(|m| input_scaler.apply(m)).collect()
    };
    let fc_x: Vec<Vec<f64>> = pairs.iter().map(|(w, _)| flat(w)).collect();
    let fc_y: Vec<Vec<f64>> = pairs.iter().map(|(_, t)| input_scaler.apply(t)).collect();
    let split_at = n_pairs - fc_val;
    let mut forecaster = ForecasterModel::new(
        s,
        k,
        cfg.lstm_layers,
        cfg.hidden_size,
        input_scaler.clone(),
        fc_seed,
    );
    let fc_train_cfg = TrainConfig {
        seed: mix_seed(&[cfg.train.seed, STREAM_TRAIN, fc_seed]),
        ..cfg.train.clone()
    };
    train(
        &mut forecaster,
        &fc_x[..split_at],
        &fc_y[..split_at],
        &fc_x[split_at..],
        &fc_y[split_at..],
        &fc_train_cfg,
    )?;

    // roll the sensors forward from the last observed window
    let seed_window: Vec<Vec<f64>> = measurements.values[test_start - k..test_start].to_vec();
    let forecasts = rollout(&forecaster, &seed_window, horizon)?;

    // gappy-POD baseline from the same forecasted measurements
    let basis = fit_training_pod(&train_snapshots, sensor_count, cfg.r_max)?;

    let mut extended = prefix;
    extended.extend(forecasts.iter().cloned());
    let mut shred_errors = Vec::with_capacity(horizon);
    let mut pod_errors = Vec::with_capacity(horizon);
    let mut shred_estimates = Vec::with_capacity(horizon);
    for j in 0..horizon {
        let t = test_start + j;
        let truth = &clean.snapshots()[t];
        let window: Vec<f64> = extended[t + 1 - k..=t]
            .iter()
            .flat_map(|m| input_scaler.apply(m))
            .collect();
        let scaled = shred.predict_scaled_flat(&[window])?;
        let xhat = target_scaler.invert(&scaled[0]);
        shred_errors.push(reconstruction_error(std::slice::from_ref(&xhat), std::slice::from_ref(truth))?);
        shred_estimates.push(xhat);

        let pod_hat = gappy_reconstruct(&basis, &sensors, &forecasts[j])?;
        pod_errors.push(reconstruction_error(&[pod_hat], std::slice::from_ref(truth))?);
    }
    Ok(ForecastRun {
        shred_errors,
        pod_errors,
        shred_estimates,
    })
}

/// Two-stage forecast experiment: each run trains a sensor forecaster and a
/// SHRED reconstructor, rolls the sensors forward, and scores SHRED against
/// gappy POD on the forecasted measurements. The ensembled forecast averages
/// the runs' state estimates per step.
pub fn run_forecast_experiment(
    cfg: &ExperimentConfig,
    horizon: usize,
    runs: usize,
    workers: usize,
) -> Result<ForecastResult> {
    cfg.validate()?;
    if runs < 1 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let clean = cfg.dataset.realize()?;
    let outcomes = map_items((0..runs).collect::<Vec<_>>(), workers, |run| {
        run_forecast_once(cfg, &clean, horizon, run)
    });
    let mut per_run = Vec::with_capacity(runs);
    for (run, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => per_run.push(r),
            Err(e) => {
                return Err(Error::CellFailure {
                    cell: format!("forecast run {}: {}", run, e),
                    seeds: vec![mix_seed(&[cfg.base_seed, STREAM_MODEL, 7, run as u64])],
                })
            }
        }
    }

    let test_start = {
        let n_samples = clean.len() - cfg.lag;
        let train_len = (cfg.train_frac * n_samples as f64).floor() as usize;
        cfg.lag + train_len + cfg.val_len
    };
    let truths: Vec<Vec<f64>> = (0..horizon)
        .map(|j| clean.snapshots()[test_start + j].clone())
        .collect();
    let estimates: Vec<Vec<Vec<f64>>> =
        per_run.iter().map(|r| r.shred_estimates.clone()).collect();
    let ensembled_error = ensembled_errors(&estimates, &truths)?;

    let per_step_median = |errs: &[Vec<f64>]| -> Vec<f64> {
        (0..horizon)
            .map(|j| {
                let mut col: Vec<f64> = errs.iter().map(|e| e[j]).collect();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                quantile(&col, 0.5)
            })
            .collect()
    };
    let shred_step_errors: Vec<Vec<f64>> =
        per_run.iter().map(|r| r.shred_errors.clone()).collect();
    let pod_step_errors: Vec<Vec<f64>> = per_run.iter().map(|r| r.pod_errors.clone()).collect();
    Ok(ForecastResult {
        horizon,
        runs,
        shred_median: per_step_median(&shred_step_errors),
        pod_median: per_step_median(&pod_step_errors),
        shred_step_errors,
        pod_step_errors,
        ensembled_error,
    })
}

/// One TrialResult per row, comma separated, sensor indices joined with ';'.
pub fn write_trials_csv(path: &Path, trials: &[TrialResult]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    writeln!(
        f,
        "method,placement,sensor_count,alpha,trial,seed,sensors,error,wall_time_s"
    )
    .map_err(io_err)?;
    for t in trials {
        let sensors = t
            .sensors
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            f,
            "{},{},{},{},{},{},{},{:.17e},{:.6}",
            t.method.name(),
            t.placement.name(),
            t.sensor_count,
            t.alpha,
            t.trial,
            t.seed,
            sensors,
            t.error,
            t.wall_time_s
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Summary document consumed by the plot command.
pub fn write_summaries_json(path: &Path, summaries: &[EnsembleSummary]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let json = serde_json::to_string_pretty(summaries).expect("summary serialization");
    std::fs::write(path, json).map_err(io_err)
}

pub fn load_summaries_json(path: &Path) -> Result<Vec<EnsembleSummary>> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let raw = std::fs::read_to_string(path).map_err(io_err)?;
    serde_json::from_str(&raw).map_err(|e| Error::Format {
        offset: 0,
        message: format!("bad summary document: {}", e),
    })
}

pub fn write_forecast_json(path: &Path, result: &ForecastResult) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let json = serde_json::to_string_pretty(result).expect("forecast serialization");
    std::fs::write(path, json).map_err(io_err)
}

pub fn load_forecast_json(path: &Path) -> Result<ForecastResult> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let raw = std::fs::read_to_string(path).map_err(io_err)?;
    serde_json::from_str(&raw).map_err(|e| Error::Format {
        offset: 0,
        message: format!("bad forecast document: {}", e),
    })
}
