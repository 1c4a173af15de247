//! POD basis fitting, sensor placement (pivoted-QR and random), and
//! gappy-POD full-state reconstruction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::FieldSeries;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, SINGULARITY_TOL};

/// Truncated POD basis: orthonormal spatial modes with their singular values.
#[derive(Debug, Clone)]
pub struct PodBasis {
    pub modes: Matrix,
    pub singular_values: Vec<f64>,
    pub mean_removed: bool,
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn state_dim(&self) -> usize {
        self.modes.rows()
    }

    /// Number of leading modes with singular value above the numerical-rank
    /// threshold relative to the largest.
    pub fn numerical_rank(&self) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .take_while(|&&s| s > 1e-10 * smax)
            .count()
    }

    /// Restriction to the leading `r` modes.
    pub fn truncated(&self, r: usize) -> Result<PodBasis> {
        if r < 1 || r > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "basis truncation rank {} out of range 1..={}",
                r,
                self.rank()
            )));
        }
        let mut modes = Matrix::zeros(self.modes.rows(), r);
        for j in 0..r {
            for i in 0..self.modes.rows() {
                modes.set(i, j, self.modes.get(i, j));
            }
        }
        Ok(PodBasis {
            modes,
            singular_values: self.singular_values[..r].to_vec(),
            mean_removed: self.mean_removed,
        })
    }
}

/// How a sensor set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMethod {
    QrPivot,
    Random,
    User,
}

/// Ordered distinct spatial indices; the order defines the measurement
/// vector layout (row order of the sensing matrix C).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorSet {
    pub indices: Vec<usize>,
    pub placement_method: PlacementMethod,
}

impl SensorSet {
    pub fn new(indices: Vec<usize>, m: usize, placement_method: PlacementMethod) -> Result<Self> {
        let mut seen = vec![false; m];
        for &i in &indices {
            if i >= m {
                return Err(Error::InvalidArgument(format!(
                    "sensor index {} out of bounds for state dimension {}",
                    i, m
                )));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!("duplicate sensor index {}", i)));
            }
            seen[i] = true;
        }
        Ok(Self {
            indices,
            placement_method,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Fits a rank-`r` POD basis to the training snapshots (columns of the data
/// matrix).
pub fn fit_pod(training_states: &FieldSeries, r: usize) -> Result<PodBasis> {
    let snapshots = training_states.snapshots();
    fit_pod_snapshots(snapshots, r)
}

/// Same as [`fit_pod`] but on a bare snapshot list.
pub fn fit_pod_snapshots(snapshots: &[Vec<f64>], r: usize) -> Result<PodBasis> {
    let n = snapshots.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no snapshots".into()));
    }
    let m = snapshots[0].len();
    if r < 1 || r > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "POD rank {} out of range 1..={}",
            r,
            m.min(n)
        )));
    }
    let x = Matrix::from_columns(snapshots)?;
    let svd = linalg::svd_thin(&x)?;
    let trunc = linalg::truncate(&svd, r)?;
    Ok(PodBasis {
        modes: trunc.u,
        singular_values: trunc.singular_values,
        mean_removed: false,
    })
}

fn unmasked_locations(m: usize, mask: Option<&[bool]>) -> Result<Vec<usize>> {
    match mask {
        None => Ok((0..m).collect()),
        Some(mask) => {
            if mask.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "mask length {} does not match state dimension {}",
                    mask.len(),
                    m
                )));
            }
            Ok((0..m).filter(|&i| mask[i]).collect())
        }
    }
}

/// Greedy sensor placement: the first `n_sensors` pivots of the pivoted QR
/// of modes^T, restricted to unmasked locations.
pub fn qr_place_sensors(
    basis: &PodBasis,
    n_sensors: usize,
    mask: Option<&[bool]>,
) -> Result<SensorSet> {
    let m = basis.state_dim();
    let available = unmasked_locations(m, mask)?;
    if n_sensors < 1 || n_sensors > available.len() {
        return Err(Error::InvalidArgument(format!(
            "{} sensors requested with {} available locations",
            n_sensors,
            available.len()
        )));
    }
    // columns of modes^T are locations; restrict to the unmasked ones
    let r = basis.rank();
    let mut mt = Matrix::zeros(r, available.len());
    for (jc, &loc) in available.iter().enumerate() {
        for i in 0..r {
            mt.set(i, jc, basis.modes.get(loc, i));
        }
    }
    let qr = linalg::qr_pivoted(&mt)?;
    let mut indices = Vec::with_capacity(n_sensors);
    for &p in qr.pivots.iter() {
        if indices.len() == n_sensors {
            break;
        }
        indices.push(available[p]);
    }
    // more sensors than pivots (n_sensors > r): extend greedily by the
    // remaining pivot ordering of the permutation
    if indices.len() < n_sensors {
        for &p in qr.pivots.iter() {
            let loc = available[p];
            if !indices.contains(&loc) {
                indices.push(loc);
                if indices.len() == n_sensors {
                    break;
                }
            }
        }
    }
    SensorSet::new(indices, m, PlacementMethod::QrPivot)
}

/// Uniform sample of `n_sensors` distinct unmasked locations.
pub fn random_place_sensors(
    m: usize,
    n_sensors: usize,
    seed: u64,
    mask: Option<&[bool]>,
) -> Result<SensorSet> {
    let available = unmasked_locations(m, mask)?;
    if n_sensors < 1 || n_sensors > available.len() {
        return Err(Error::InvalidArgument(format!(
            "{} sensors requested with {} available locations",
            n_sensors,
            available.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = available
        .choose_multiple(&mut rng, n_sensors)
        .copied()
        .collect();
    SensorSet::new(chosen, m, PlacementMethod::Random)
}

/// Gappy-POD estimate: U_r * (C U_r)^+ y (least squares when the sensor
/// count exceeds the basis rank).
pub fn gappy_reconstruct(basis: &PodBasis, sensors: &SensorSet, y: &[f64]) -> Result<Vec<f64>> {
    if sensors.is_empty() {
        return Err(Error::InvalidArgument("empty sensor set".into()));
    }
    if y.len() != sensors.len() {
        return Err(Error::InvalidArgument(format!(
            "measurement length {} does not match {} sensors",
            y.len(),
            sensors.len()
        )));
    }
    if sensors.len() < basis.rank() {
        return Err(Error::InvalidArgument(format!(
            "{} sensors cannot determine {} POD coefficients",
            sensors.len(),
            basis.rank()
        )));
    }
    let cu = basis.modes.select_rows(&sensors.indices)?;
    let b = linalg::solve_linear(&cu, y)?;
    basis.modes.matvec(&b)
}

/// Value of the log-determinant placement objective for a square selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlacementObjective {
    /// log|det(C U_r)| as a sum of log singular values.
    LogAbsDet(f64),
    /// Rank-deficient selection (determinant numerically zero).
    Singular,
}

/// Evaluates log|det(C U_r)| for a sensor selection with exactly r sensors.
pub fn placement_objective(basis: &PodBasis, sensors: &SensorSet) -> Result<PlacementObjective> {
    if sensors.len() != basis.rank() {
        return Err(Error::InvalidArgument(format!(
            "placement objective needs sensor count {} equal to rank {}",
            sensors.len(),
            basis.rank()
        )));
    }
    let cu = basis.modes.select_rows(&sensors.indices)?;
    let svd = linalg::svd_thin(&cu)?;
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(PlacementObjective::Singular);
    }
    let mut logdet = 0.0;
    for &s in &svd.singular_values {
        if s < SINGULARITY_TOL * smax {
            return Ok(PlacementObjective::Singular);
        }
        logdet += s.ln();
    }
    Ok(PlacementObjective::LogAbsDet(logdet))
}
