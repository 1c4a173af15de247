//! Synthetic spatio-temporal field generation, gridded-field file I/O,
//! sensor sampling, noise injection, scaling, windowing, and splitting.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pod::SensorSet;

/// Temporally ordered snapshots over the valid locations of a (possibly
/// masked) spatial grid, in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    grid_shape: Vec<usize>,
    mask: Option<Vec<bool>>,
    snapshots: Vec<Vec<f64>>,
    dt: f64,
}

impl FieldSeries {
    pub fn new(
        grid_shape: Vec<usize>,
        mask: Option<Vec<bool>>,
        snapshots: Vec<Vec<f64>>,
        dt: f64,
    ) -> Result<Self> {
        let cells: usize = grid_shape.iter().product();
        if let Some(mask) = &mask {
            if mask.len() != cells {
                return Err(Error::InvalidArgument(format!(
                    "mask length {} does not match {} grid cells",
                    mask.len(),
                    cells
                )));
            }
        }
        let valid = mask
            .as_ref()
            .map_or(cells, |m| m.iter().filter(|&&b| b).count());
        if snapshots.is_empty() {
            return Err(Error::InvalidArgument("empty snapshot list".into()));
        }
        for (t, s) in snapshots.iter().enumerate() {
            if s.len() != valid {
                return Err(Error::InvalidArgument(format!(
                    "snapshot {} has length {} but {} valid locations",
                    t,
                    s.len(),
                    valid
                )));
            }
        }
        Ok(Self {
            grid_shape,
            mask,
            snapshots,
            dt,
        })
    }

    pub fn grid_shape(&self) -> &[usize] {
        &self.grid_shape
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn snapshots(&self) -> &[Vec<f64>] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.snapshots[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Restriction to a subset of snapshot times, keeping grid and mask.
    pub fn subset(&self, times: &[usize]) -> Result<FieldSeries> {
        let snaps: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| {
                self.snapshots
                    .get(t)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("time {} out of range", t)))
            })
            .collect::<Result<_>>()?;
        FieldSeries::new(self.grid_shape.clone(), self.mask.clone(), snaps, self.dt)
    }

    /// Expands a valid-location state vector onto the full grid, filling
    /// masked cells with quiet NaN.
    pub fn to_full_grid(&self, state: &[f64]) -> Result<Vec<f64>> {
        let cells: usize = self.grid_shape.iter().product();
        match &self.mask {
            None => {
                if state.len() != cells {
                    return Err(Error::InvalidArgument("state length mismatch".into()));
                }
                Ok(state.to_vec())
            }
            Some(mask) => {
                let mut out = vec![f64::NAN; cells];
                let mut it = state.iter();
                for (cell, &valid) in mask.iter().enumerate() {
                    if valid {
                        out[cell] = *it
                            .next()
                            .ok_or_else(|| Error::InvalidArgument("state too short".into()))?;
                    }
                }
                if it.next().is_some() {
                    return Err(Error::InvalidArgument("state too long".into()));
                }
                Ok(out)
            }
        }
    }
}

/// Sensor readings aligned with a [`FieldSeries`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    pub sensors: SensorSet,
    pub values: Vec<Vec<f64>>,
}

/// Gaussian noise scaled by the mean absolute value of a reference field.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitLabel {
    Train,
    Validation,
    Test,
}

/// Per-sample split assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub labels: Vec<SplitLabel>,
}

impl SplitSpec {
    pub fn count(&self, label: SplitLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn indices(&self, label: SplitLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Lag-window samples: each input is the flattened k-by-sensor window ending
/// at the target time.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    pub lag: usize,
    pub n_sensors: usize,
    /// Flattened windows, time-major: k rows of sensor readings.
    pub windows: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub labels: Vec<SplitLabel>,
    /// Snapshot time of each target.
    pub target_times: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// One cosine mode of a traveling-wave field.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaveMode {
    pub amplitude: f64,
    pub wavevector: [f64; 2],
    pub frequency: f64,
    pub phase: f64,
}

/// x(s, t) = sum_j a_j cos(kappa_j . s - omega_j t + phi_j) on an h x w grid.
pub fn gen_traveling_waves(
    height: usize,
    width: usize,
    t_len: usize,
    modes: &[WaveMode],
    dt: f64,
) -> Result<FieldSeries> {
    if t_len < 1 {
        return Err(Error::InvalidArgument("T must be >= 1".into()));
    }
    if modes.is_empty() {
        return Err(Error::InvalidArgument("empty mode list".into()));
    }
    let mut snapshots = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let time = t as f64 * dt;
        let mut snap = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                let mut v = 0.0;
                for m in modes {
                    let spatial = m.wavevector[0] * i as f64 + m.wavevector[1] * j as f64;
                    v += m.amplitude * (spatial - m.frequency * time + m.phase).cos();
                }
                snap.push(v);
            }
        }
        snapshots.push(snap);
    }
    FieldSeries::new(vec![height, width], None, snapshots, dt)
}

/// Seeded mode list with incommensurate frequencies and gently decaying
/// amplitudes, for desk-scale experiments.
pub fn seeded_wave_modes(count: usize, seed: u64) -> Vec<WaveMode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|j| WaveMode {
            amplitude: 1.0 / (1.0 + 0.35 * j as f64),
            wavevector: [
                rng.gen_range(0.15..0.9),
                rng.gen_range(0.15..0.9),
            ],
            frequency: rng.gen_range(0.05..0.5) * (1.0 + 0.13 * j as f64),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        })
        .collect()
}

/// X = U diag(sigma) V^T with a seeded orthonormal U and smooth sinusoidal
/// V columns; numerical rank is exactly the number of nonzero sigmas.
pub fn gen_low_rank(
    m: usize,
    t_len: usize,
    sigmas: &[f64],
    frequencies: &[f64],
    seed: u64,
) -> Result<FieldSeries> {
    let r = sigmas.len();
    if r == 0 || r != frequencies.len() {
        return Err(Error::InvalidArgument(
            "sigmas and frequencies must be nonempty and equal length".into(),
        ));
    }
    if r > m.min(t_len) {
        return Err(Error::InvalidArgument(format!(
            "rank {} exceeds min(m, T) = {}",
            r,
            m.min(t_len)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // orthonormal U via Gram-Schmidt on random columns
    let mut u: Vec<Vec<f64>> = Vec::with_capacity(r);
    while u.len() < r {
        let mut col: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for b in &u {
            let d: f64 = col.iter().zip(b).map(|(a, b)| a * b).sum();
            for (c, &bb) in col.iter_mut().zip(b) {
                *c -= d * bb;
            }
        }
        let nrm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            for c in col.iter_mut() {
                *c /= nrm;
            }
            u.push(col);
        }
    }
    let phases: Vec<f64> = (0..r)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let mut snapshots = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut snap = vec![0.0; m];
        for j in 0..r {
            let v = (std::f64::consts::TAU * frequencies[j] * t as f64 / t_len as f64
                + phases[j])
                .sin();
            let coeff = sigmas[j] * v;
            for (s, &uj) in snap.iter_mut().zip(&u[j]) {
                *s += coeff * uj;
            }
        }
        snapshots.push(snap);
    }
    FieldSeries::new(vec![m], None, snapshots, 1.0)
}

/// One Gaussian blob orbiting the grid center.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Blob {
    pub orbit_radius: f64,
    pub angular_rate: f64,
    pub width: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Sum of Gaussians whose centers orbit the grid center.
pub fn gen_rotating_blobs(
    height: usize,
    width: usize,
    t_len: usize,
    blobs: &[Blob],
    dt: f64,
) -> Result<FieldSeries> {
    if t_len < 1 || blobs.is_empty() {
        return Err(Error::InvalidArgument("need T >= 1 and >= 1 blob".into()));
    }
    if blobs.iter().any(|b| b.width <= 0.0) {
        return Err(Error::InvalidArgument("blob width must be positive".into()));
    }
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let mut snapshots = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let time = t as f64 * dt;
        let mut snap = Vec::with_capacity(height * width);
        let centers: Vec<(f64, f64)> = blobs
            .iter()
            .map(|b| {
                let th = b.phase + b.angular_rate * time;
                (cy + b.orbit_radius * th.sin(), cx + b.orbit_radius * th.cos())
            })
            .collect();
        for i in 0..height {
            for j in 0..width {
                let mut v = 0.0;
                for (b, &(by, bx)) in blobs.iter().zip(&centers) {
                    let d2 = (i as f64 - by).powi(2) + (j as f64 - bx).powi(2);
                    v += b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp();
                }
                snap.push(v);
            }
        }
        snapshots.push(snap);
    }
    FieldSeries::new(vec![height, width], None, snapshots, dt)
}

const FIELD_MAGIC: &[u8; 4] = b"FLDS";
const FIELD_VERSION: u32 = 1;

/// Writes a [`FieldSeries`] in the FLDS binary format (all integers
/// little-endian, payload 64-bit floats over valid locations).
pub fn save_field_file(series: &FieldSeries, path: &Path) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    buf.push(series.grid_shape.len() as u8);
    for &d in &series.grid_shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match &series.mask {
        None => buf.push(0),
        Some(mask) => {
            buf.push(1);
            let mut byte = 0u8;
            for (i, &b) in mask.iter().enumerate() {
                if b {
                    byte |= 1 << (i % 8);
                }
                if i % 8 == 7 {
                    buf.push(byte);
                    byte = 0;
                }
            }
            if mask.len() % 8 != 0 {
                buf.push(byte);
            }
        }
    }
    buf.extend_from_slice(&(series.snapshots.len() as u64).to_le_bytes());
    for snap in &series.snapshots {
        for &v in snap {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(io_err)?;
    f.write_all(&buf).map_err(io_err)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: u64,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if (self.data.len() as u64) < self.pos + n as u64 {
            return Err(Error::Format {
                offset: self.pos,
                message: format!("truncated while reading {}", what),
            });
        }
        let s = &self.data[self.pos as usize..self.pos as usize + n];
        self.pos += n as u64;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}

/// Reads a FLDS file; a malformed or truncated file yields a format error
/// with the byte offset and never a partial series.
pub fn load_field_file(path: &Path) -> Result<FieldSeries> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut data = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut data)
        .map_err(io_err)?;
    let mut cur = Cursor { data: &data, pos: 0 };

    let magic = cur.take(4, "magic")?;
    if magic != FIELD_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic".into(),
        });
    }
    let version = cur.u32("version")?;
    if version != FIELD_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {}", version),
        });
    }
    let ndims = cur.u8("dimension count")? as usize;
    let mut grid_shape = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        grid_shape.push(cur.u64("dimension")? as usize);
    }
    let cells: usize = grid_shape.iter().product();
    let mask_flag = cur.u8("mask flag")?;
    let mask = match mask_flag {
        0 => None,
        1 => {
            let nbytes = cells.div_ceil(8);
            let raw = cur.take(nbytes, "mask bits")?;
            let mut mask = Vec::with_capacity(cells);
            for i in 0..cells {
                mask.push(raw[i / 8] & (1 << (i % 8)) != 0);
            }
            Some(mask)
        }
        other => {
            return Err(Error::Format {
                offset: cur.pos - 1,
                message: format!("bad mask flag {}", other),
            })
        }
    };
    let valid = mask.as_ref().map_or(cells, |m| m.iter().filter(|&&b| b).count());
    let t_len = cur.u64("snapshot count")? as usize;
    let mut snapshots = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let raw = cur.take(valid * 8, "snapshot payload")?;
        let snap: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        snapshots.push(snap);
    }
    if cur.pos != data.len() as u64 {
        return Err(Error::Format {
            offset: cur.pos,
            message: "trailing bytes".into(),
        });
    }
    FieldSeries::new(grid_shape, mask, snapshots, 1.0)
}

/// Point sampling y_t[j] = x_t[sensors[j]].
pub fn sample_sensors(series: &FieldSeries, sensors: &SensorSet) -> Result<MeasurementSeries> {
    let m = series.state_dim();
    for &i in &sensors.indices {
        if i >= m {
            return Err(Error::InvalidArgument(format!(
                "sensor index {} outside the {} valid locations",
                i, m
            )));
        }
    }
    let values = series
        .snapshots()
        .iter()
        .map(|snap| sensors.indices.iter().map(|&i| snap[i]).collect())
        .collect();
    Ok(MeasurementSeries {
        sensors: sensors.clone(),
        values,
    })
}

fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // Box-Muller
    let u1: f64 = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    (r * th.cos(), r * th.sin())
}

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation
/// alpha * mean(|reference|).
pub fn add_noise(
    series: &FieldSeries,
    spec: &NoiseSpec,
    reference: &FieldSeries,
) -> Result<FieldSeries> {
    if spec.alpha < 0.0 {
        return Err(Error::InvalidArgument("alpha must be nonnegative".into()));
    }
    if spec.alpha == 0.0 {
        return Ok(series.clone());
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for snap in reference.snapshots() {
        for &v in snap {
            total += v.abs();
            count += 1;
        }
    }
    let std = spec.alpha * total / count as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pending: Option<f64> = None;
    let mut draw = |rng: &mut ChaCha8Rng| -> f64 {
        if let Some(v) = pending.take() {
            v
        } else {
            let (a, b) = gaussian_pair(rng);
            pending = Some(b);
            a
        }
    };
    let snapshots = series
        .snapshots()
        .iter()
        .map(|snap| snap.iter().map(|&v| v + std * draw(&mut rng)).collect())
        .collect();
    FieldSeries::new(
        series.grid_shape().to_vec(),
        series.mask().map(|m| m.to_vec()),
        snapshots,
        series.dt(),
    )
}

/// Builds the N - k lag-window samples with targets at times k .. N-1.
pub fn make_windows(
    measurements: &MeasurementSeries,
    states: &FieldSeries,
    k: usize,
    split: &SplitSpec,
) -> Result<WindowedDataset> {
    let n = states.len();
    if measurements.values.len() != n {
        return Err(Error::InvalidArgument(
            "measurement and state series lengths differ".into(),
        ));
    }
    if n <= k {
        return Err(Error::InvalidArgument(format!(
            "need more than k = {} snapshots, got {}",
            k, n
        )));
    }
    let n_samples = n - k;
    if split.labels.len() != n_samples {
        return Err(Error::InvalidArgument(format!(
            "split covers {} samples but there are {}",
            split.labels.len(),
            n_samples
        )));
    }
    let s = measurements.sensors.len();
    let mut windows = Vec::with_capacity(n_samples);
    let mut targets = Vec::with_capacity(n_samples);
    let mut target_times = Vec::with_capacity(n_samples);
    for t in k..n {
        let mut w = Vec::with_capacity(k * s);
        for ti in (t + 1 - k)..=t {
            w.extend_from_slice(&measurements.values[ti]);
        }
        windows.push(w);
        targets.push(states.snapshots()[t].clone());
        target_times.push(t);
    }
    Ok(WindowedDataset {
        lag: k,
        n_sensors: s,
        windows,
        targets,
        labels: split.labels.clone(),
        target_times,
    })
}

/// Uniformly random train/validation/test partition; exact counts come from
/// the fractions with largest-remainder rounding, ties to the lowest index.
pub fn split_interspersed(n_samples: usize, fractions: [f64; 3], seed: u64) -> Result<SplitSpec> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| f < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(
            "fractions must be nonnegative and sum to 1".into(),
        ));
    }
    if fractions[0] <= 0.0 {
        return Err(Error::InvalidArgument("train fraction must be positive".into()));
    }
    let raw: Vec<f64> = fractions.iter().map(|f| f * n_samples as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|&r| r.floor() as usize).collect();
    let mut rem: usize = n_samples - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .partial_cmp(&(raw[a] - raw[a].floor()))
            .unwrap()
            .then(a.cmp(&b))
    });
    for &i in &order {
        if rem == 0 {
            break;
        }
        counts[i] += 1;
        rem -= 1;
    }

    let mut indices: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n_samples).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let mut labels = vec![SplitLabel::Train; n_samples];
    for (pos, &idx) in indices.iter().enumerate() {
        labels[idx] = if pos < counts[0] {
            SplitLabel::Train
        } else if pos < counts[0] + counts[1] {
            SplitLabel::Validation
        } else {
            SplitLabel::Test
        };
    }
    Ok(SplitSpec { labels })
}

/// One contiguous segment of a temporal split; `len = None` means "all
/// remaining samples".
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TemporalSegment {
    pub label: SplitLabel,
    pub len: Option<usize>,
}

/// Contiguous-in-time split from an ordered segment layout.
pub fn split_temporal(n_samples: usize, layout: &[TemporalSegment]) -> Result<SplitSpec> {
    if layout.is_empty() {
        return Err(Error::InvalidArgument("empty temporal layout".into()));
    }
    let mut labels = Vec::with_capacity(n_samples);
    for (i, seg) in layout.iter().enumerate() {
        match seg.len {
            Some(len) => {
                if labels.len() + len > n_samples {
                    return Err(Error::InvalidArgument(format!(
                        "temporal segments overrun {} samples",
                        n_samples
                    )));
                }
                labels.extend(std::iter::repeat_n(seg.label, len));
            }
            None => {
                if i + 1 != layout.len() {
                    return Err(Error::InvalidArgument(
                        "open-ended segment must be last".into(),
                    ));
                }
                labels.extend(std::iter::repeat_n(seg.label, n_samples - labels.len()));
            }
        }
    }
    if labels.len() != n_samples {
        return Err(Error::InvalidArgument(format!(
            "temporal segments cover {} of {} samples",
            labels.len(),
            n_samples
        )));
    }
    Ok(SplitSpec { labels })
}

/// Per-feature affine map onto [0, 1], fit on training data only; constant
/// features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(samples: &[&[f64]]) -> Result<Scaler> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("cannot fit scaler on no samples".into()));
        }
        let d = samples[0].len();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for s in samples {
            if s.len() != d {
                return Err(Error::InvalidArgument("ragged samples".into()));
            }
            for (j, &v) in s.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Scaler { min, max })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    (v - self.min[j]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    self.min[j] + v * range
                } else {
                    self.min[j]
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{svd_thin, Matrix};
    use crate::pod::PlacementMethod;

    #[test]
    fn waves_static_when_frequency_zero() {
        let modes = [WaveMode {
            amplitude: 1.0,
            wavevector: [0.3, 0.5],
            frequency: 0.0,
            phase: 0.2,
        }];
        let f = gen_traveling_waves(4, 4, 5, &modes, 1.0).unwrap();
        for t in 1..5 {
            assert_eq!(f.snapshots()[t], f.snapshots()[0]);
        }
    }

    #[test]
    fn waves_amplitude_bound() {
        let modes = [WaveMode {
            amplitude: 2.5,
            wavevector: [0.4, 0.7],
            frequency: 0.3,
            phase: 1.0,
        }];
        let f = gen_traveling_waves(6, 6, 20, &modes, 1.0).unwrap();
        for snap in f.snapshots() {
            for &v in snap {
                assert!((-2.5 - 1e-12..=2.5 + 1e-12).contains(&v));
            }
        }
    }

    #[test]
    fn waves_two_modes_rank_at_most_four() {
        let modes = [
            WaveMode {
                amplitude: 1.0,
                wavevector: [0.3, 0.4],
                frequency: 0.21,
                phase: 0.0,
            },
            WaveMode {
                amplitude: 0.7,
                wavevector: [0.6, 0.2],
                frequency: 0.37 * std::f64::consts::SQRT_2,
                phase: 1.3,
            },
        ];
        let f = gen_traveling_waves(8, 8, 40, &modes, 1.0).unwrap();
        let x = Matrix::from_columns(f.snapshots()).unwrap();
        let svd = svd_thin(&x).unwrap();
        let smax = svd.singular_values[0];
        assert!(svd.singular_values[4] / smax < 1e-10, "{:?}", &svd.singular_values[..6]);
    }

    #[test]
    fn waves_reject_empty_modes() {
        assert!(gen_traveling_waves(4, 4, 5, &[], 1.0).is_err());
    }

    #[test]
    fn low_rank_rank_one_snapshots_parallel() {
        let f = gen_low_rank(10, 12, &[2.0], &[1.0], 3).unwrap();
        let s0 = &f.snapshots()[2];
        let s1 = &f.snapshots()[5];
        // cross products vanish for parallel vectors
        let dot: f64 = s0.iter().zip(s1).map(|(a, b)| a * b).sum();
        let n0: f64 = s0.iter().map(|v| v * v).sum();
        let n1: f64 = s1.iter().map(|v| v * v).sum();
        assert!((dot * dot - n0 * n1).abs() < 1e-12 * (n0 * n1).max(1.0));
    }

    #[test]
    fn low_rank_zero_sigma_is_zero_field() {
        let f = gen_low_rank(6, 8, &[0.0, 0.0], &[1.0, 2.0], 9).unwrap();
        for snap in f.snapshots() {
            assert!(snap.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn low_rank_numerical_rank_exact() {
        let f = gen_low_rank(30, 40, &[3.0, 1.0, 0.5], &[1.0, 2.0, 3.5], 7).unwrap();
        let x = Matrix::from_columns(f.snapshots()).unwrap();
        let svd = svd_thin(&x).unwrap();
        assert!(svd.singular_values[3] / svd.singular_values[0] < 1e-12);
        assert!(svd.singular_values[2] / svd.singular_values[0] > 1e-10);
    }

    #[test]
    fn blobs_static_when_rate_zero() {
        let blobs = [Blob {
            orbit_radius: 2.0,
            angular_rate: 0.0,
            width: 1.5,
            amplitude: 1.0,
            phase: 0.3,
        }];
        let f = gen_rotating_blobs(8, 8, 4, &blobs, 1.0).unwrap();
        for t in 1..4 {
            assert_eq!(f.snapshots()[t], f.snapshots()[0]);
        }
    }

    #[test]
    fn blobs_periodicity() {
        let rate = std::f64::consts::TAU / 16.0;
        let blobs = [Blob {
            orbit_radius: 2.5,
            angular_rate: rate,
            width: 1.2,
            amplitude: 0.8,
            phase: 0.0,
        }];
        let f = gen_rotating_blobs(10, 10, 17, &blobs, 1.0).unwrap();
        for (a, b) in f.snapshots()[0].iter().zip(&f.snapshots()[16]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn blobs_amplitude_linearity() {
        let base = Blob {
            orbit_radius: 2.0,
            angular_rate: 0.3,
            width: 1.0,
            amplitude: 0.5,
            phase: 0.1,
        };
        let doubled = Blob {
            amplitude: 1.0,
            ..base
        };
        let f1 = gen_rotating_blobs(6, 6, 3, &[base], 1.0).unwrap();
        let f2 = gen_rotating_blobs(6, 6, 3, &[doubled], 1.0).unwrap();
        for (s1, s2) in f1.snapshots().iter().zip(f2.snapshots()) {
            for (a, b) in s1.iter().zip(s2) {
                assert!((2.0 * a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn blobs_reject_nonpositive_width() {
        let b = Blob {
            orbit_radius: 1.0,
            angular_rate: 0.1,
            width: 0.0,
            amplitude: 1.0,
            phase: 0.0,
        };
        assert!(gen_rotating_blobs(4, 4, 2, &[b], 1.0).is_err());
    }

    #[test]
    fn field_file_round_trip() {
        let modes = seeded_wave_modes(3, 5);
        let f = gen_traveling_waves(5, 7, 9, &modes, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.flds");
        save_field_file(&f, &path).unwrap();
        let g = load_field_file(&path).unwrap();
        assert_eq!(f.grid_shape(), g.grid_shape());
        assert_eq!(f.snapshots(), g.snapshots());
        assert_eq!(f.mask(), g.mask());
    }

    #[test]
    fn field_file_masked_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mask: Vec<bool> = (0..20).map(|_| rng.gen_bool(0.7)).collect();
        let valid = mask.iter().filter(|&&b| b).count();
        let snaps: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..valid).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let f = FieldSeries::new(vec![4, 5], Some(mask), snaps, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("masked.flds");
        save_field_file(&f, &path).unwrap();
        let g = load_field_file(&path).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn field_file_truncation_is_format_error() {
        let modes = seeded_wave_modes(2, 1);
        let f = gen_traveling_waves(3, 3, 4, &modes, 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.flds");
        save_field_file(&f, &path).unwrap();
        let data = std::fs::read(&path).unwrap();
        std::fs::write(&path, &data[..data.len() - 5]).unwrap();
        match load_field_file(&path) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {:?}", other),
        }
    }

    #[test]
    fn sample_sensors_matches_indexing() {
        let modes = seeded_wave_modes(3, 11);
        let f = gen_traveling_waves(4, 4, 8, &modes, 1.0).unwrap();
        let sensors = SensorSet::new(vec![3, 0, 9], 16, PlacementMethod::User).unwrap();
        let meas = sample_sensors(&f, &sensors).unwrap();
        for (t, snap) in f.snapshots().iter().enumerate() {
            assert_eq!(meas.values[t], vec![snap[3], snap[0], snap[9]]);
        }
    }

    #[test]
    fn add_noise_alpha_zero_unchanged() {
        let modes = seeded_wave_modes(2, 3);
        let f = gen_traveling_waves(3, 3, 5, &modes, 1.0).unwrap();
        let g = add_noise(&f, &NoiseSpec { alpha: 0.0, seed: 1 }, &f).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn add_noise_empirical_std() {
        let snaps = vec![vec![1.0; 1000]; 1000]; // unit-constant field
        let f = FieldSeries::new(vec![1000], None, snaps, 1.0).unwrap();
        let g = add_noise(&f, &NoiseSpec { alpha: 1.0, seed: 2 }, &f).unwrap();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let n = 1_000_000.0;
        for snap in g.snapshots() {
            for &v in snap {
                let d = v - 1.0;
                sum += d;
                sumsq += d * d;
            }
        }
        let mean = sum / n;
        let std = (sumsq / n - mean * mean).sqrt();
        assert!((std - 1.0).abs() < 0.02, "std {}", std);
    }

    #[test]
    fn add_noise_deterministic() {
        let modes = seeded_wave_modes(2, 3);
        let f = gen_traveling_waves(3, 3, 5, &modes, 1.0).unwrap();
        let spec = NoiseSpec { alpha: 0.5, seed: 77 };
        assert_eq!(add_noise(&f, &spec, &f).unwrap(), add_noise(&f, &spec, &f).unwrap());
    }

    fn constant_measurements(n: usize, s: usize) -> MeasurementSeries {
        MeasurementSeries {
            sensors: SensorSet::new((0..s).collect(), s, PlacementMethod::User).unwrap(),
            values: (0..n).map(|t| vec![t as f64; s]).collect(),
        }
    }

    #[test]
    fn windows_boundary_single_sample() {
        let f = FieldSeries::new(vec![2], None, (0..4).map(|t| vec![t as f64, 0.0]).collect(), 1.0)
            .unwrap();
        let meas = constant_measurements(4, 2);
        let split = SplitSpec {
            labels: vec![SplitLabel::Train],
        };
        let w = make_windows(&meas, &f, 3, &split).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.target_times, vec![3]);
        // window holds measurements at times 1, 2, 3
        assert_eq!(w.windows[0], vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn windows_counts_and_targets() {
        let f = FieldSeries::new(vec![1], None, (0..5).map(|t| vec![t as f64]).collect(), 1.0)
            .unwrap();
        let meas = constant_measurements(5, 1);
        let split = SplitSpec {
            labels: vec![SplitLabel::Train; 3],
        };
        let w = make_windows(&meas, &f, 2, &split).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.target_times, vec![2, 3, 4]);
        for (i, t) in w.target_times.iter().enumerate() {
            assert_eq!(w.targets[i], vec![*t as f64]);
            // last window entry is the measurement at the target time
            assert_eq!(*w.windows[i].last().unwrap(), *t as f64);
        }
    }

    #[test]
    fn windows_reference_shape_check() {
        let n = 1667;
        let k = 100;
        let f = FieldSeries::new(vec![1], None, vec![vec![0.5]; n], 1.0).unwrap();
        let meas = constant_measurements(n, 1);
        let split = split_interspersed(n - k, [1100.0 / 1567.0, 234.0 / 1567.0, 233.0 / 1567.0], 1)
            .unwrap();
        let w = make_windows(&meas, &f, k, &split).unwrap();
        assert_eq!(w.len(), 1567);
    }

    #[test]
    fn windows_too_short_errors() {
        let f = FieldSeries::new(vec![1], None, vec![vec![0.0]; 3], 1.0).unwrap();
        let meas = constant_measurements(3, 1);
        let split = SplitSpec { labels: vec![] };
        assert!(make_windows(&meas, &f, 3, &split).is_err());
    }

    #[test]
    fn interspersed_all_train() {
        let s = split_interspersed(10, [1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!(s.count(SplitLabel::Train), 10);
    }

    #[test]
    fn interspersed_reference_counts() {
        let s = split_interspersed(
            1567,
            [1100.0 / 1567.0, 234.0 / 1567.0, 233.0 / 1567.0],
            42,
        )
        .unwrap();
        assert_eq!(s.count(SplitLabel::Train), 1100);
        assert_eq!(s.count(SplitLabel::Validation), 234);
        assert_eq!(s.count(SplitLabel::Test), 233);
    }

    #[test]
    fn interspersed_deterministic() {
        let a = split_interspersed(100, [0.7, 0.15, 0.15], 9).unwrap();
        let b = split_interspersed(100, [0.7, 0.15, 0.15], 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn temporal_turbulence_layout() {
        let layout = [
            TemporalSegment { label: SplitLabel::Train, len: Some(1000) },
            TemporalSegment { label: SplitLabel::Validation, len: Some(50) },
            TemporalSegment { label: SplitLabel::Train, len: Some(100) },
            TemporalSegment { label: SplitLabel::Test, len: None },
        ];
        let s = split_temporal(1567, &layout).unwrap();
        assert_eq!(s.count(SplitLabel::Train), 1100);
        assert_eq!(s.count(SplitLabel::Validation), 50);
        assert_eq!(s.count(SplitLabel::Test), 417);
        assert_eq!(s.labels[999], SplitLabel::Train);
        assert_eq!(s.labels[1000], SplitLabel::Validation);
        assert_eq!(s.labels[1050], SplitLabel::Train);
    }

    #[test]
    fn temporal_sst_layout() {
        // train 85%, then 20 validation, remainder test
        let n = 1348;
        let train = (0.85 * n as f64).floor() as usize;
        let layout = [
            TemporalSegment { label: SplitLabel::Train, len: Some(train) },
            TemporalSegment { label: SplitLabel::Validation, len: Some(20) },
            TemporalSegment { label: SplitLabel::Test, len: None },
        ];
        let s = split_temporal(n, &layout).unwrap();
        assert_eq!(s.count(SplitLabel::Train), train);
        assert_eq!(s.count(SplitLabel::Validation), 20);
        assert_eq!(s.count(SplitLabel::Test), n - train - 20);
    }

    #[test]
    fn temporal_overrun_errors() {
        let layout = [TemporalSegment {
            label: SplitLabel::Train,
            len: Some(11),
        }];
        assert!(split_temporal(10, &layout).is_err());
    }

    #[test]
    fn scaler_constant_feature() {
        let a = [2.0, 5.0];
        let b = [2.0, 7.0];
        let s = Scaler::fit(&[&a, &b]).unwrap();
        let scaled = s.apply(&[2.0, 6.0]);
        assert_eq!(scaled[0], 0.0);
        assert!((scaled[1] - 0.5).abs() < 1e-12);
        let back = s.invert(&scaled);
        assert_eq!(back[0], 2.0);
        assert!((back[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn scaler_hand_affine() {
        let a = [-2.0];
        let b = [2.0];
        let s = Scaler::fit(&[&a, &b]).unwrap();
        assert!((s.apply(&[0.0])[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scaler_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let s = Scaler::fit(&refs).unwrap();
        for r in &rows {
            let back = s.invert(&s.apply(r));
            for (a, b) in r.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
