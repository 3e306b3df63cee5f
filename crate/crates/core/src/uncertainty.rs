//! Demand uncertainty: the ellipsoid Z_E plus the three polyhedra Z_P1 (per-
//! cell bounds), Z_P2 (per-interval totals), Z_P3 (total-demand factor Γ),
//! fitted from synthetic historical demand samples, with Mardia normality
//! diagnostics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemandMatrix, RecommendationIndex};
use crate::numeric;

/// Budget grid for ρ used throughout the experiments: the {50, 60, 70, 80,
/// 90, 95, 99} percentiles of the standard normal distribution.
pub const RHO_GRID: [f64; 7] = [0.0, 0.25, 0.52, 0.84, 1.28, 1.64, 2.33];

/// d = d̄ + D·z with ‖z‖₂ ≤ ρ (Z_E), per-cell bounds (Z_P1), per-interval
/// total bounds (Z_P2), and the Γ cap on total demand (Z_P3).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub n_times: usize,
    pub n_ods: usize,
    /// nominal demand, h-major over H × K
    pub d_bar: Vec<f64>,
    /// lower-triangular Cholesky factor of the (ridged) covariance, row-major
    pub cholesky_row_major: Vec<f64>,
    pub d_lower: Vec<f64>,
    pub d_upper: Vec<f64>,
    /// per-interval total bounds, length |H|
    pub interval_lower: Vec<f64>,
    pub interval_upper: Vec<f64>,
    pub gamma: f64,
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct RealizedDemand {
    pub demand: DemandMatrix,
    /// cells clamped up to zero: (h, k, value before clamping)
    pub clamped: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct SetMembership {
    pub in_ellipsoid: bool,
    pub ellipsoid_slack: f64,
    pub in_p1: bool,
    pub p1_slack: f64,
    pub in_p2: bool,
    pub p2_slack: f64,
    pub in_p3: bool,
    pub p3_slack: f64,
}

impl SetMembership {
    pub fn in_all(&self) -> bool {
        self.in_ellipsoid && self.in_p1 && self.in_p2 && self.in_p3
    }
}

impl UncertaintyModel {
    pub fn dim(&self) -> usize {
        self.d_bar.len()
    }

    /// D z
    pub fn apply_factor(&self, z: &[f64]) -> Vec<f64> {
        numeric::lower_mul(&self.cholesky_row_major, self.dim(), z)
    }

    /// entry (i, j) of the factor D
    #[inline]
    pub fn factor_entry(&self, i: usize, j: usize) -> f64 {
        self.cholesky_row_major[i * self.dim() + j]
    }

    /// per-interval sums of a cell vector (the S matrix applied to it)
    pub fn interval_sums(&self, cells: &[f64]) -> Vec<f64> {
        (0..self.n_times)
            .map(|h| cells[h * self.n_ods..(h + 1) * self.n_ods].iter().sum())
            .collect()
    }

    /// d = d̄ + Dz, clamped at zero with each clamp reported.
    pub fn realize(&self, z: &[f64], index: &RecommendationIndex) -> Result<RealizedDemand> {
        if z.len() != self.dim() {
            return Err(Error::InvalidUncertainty(format!(
                "perturbation has dimension {}, model has {}",
                z.len(),
                self.dim()
            )));
        }
        if index.n_cells() != self.dim()
            || index.n_times() != self.n_times
            || index.n_ods() != self.n_ods
        {
            return Err(Error::InvalidUncertainty(
                "index geometry does not match the model".into(),
            ));
        }
        let dz = self.apply_factor(z);
        let mut values = Vec::with_capacity(self.dim());
        let mut clamped = Vec::new();
        for (cell, (&base, &delta)) in self.d_bar.iter().zip(dz.iter()).enumerate() {
            let v = base + delta;
            if v < 0.0 {
                clamped.push((cell / self.n_ods, cell % self.n_ods, v));
                values.push(0.0);
            } else {
                values.push(v);
            }
        }
        Ok(RealizedDemand {
            demand: DemandMatrix::new(values, index)?,
            clamped,
        })
    }

    /// Slack of z against each of the four sets (nonnegative slack = inside).
    pub fn membership(&self, z: &[f64]) -> SetMembership {
        let tol = 1e-9;
        let norm: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ellipsoid_slack = self.rho - norm;

        let dz = self.apply_factor(z);
        let mut p1_slack = f64::INFINITY;
        for i in 0..self.dim() {
            p1_slack = p1_slack
                .min(self.d_upper[i] - self.d_bar[i] - dz[i])
                .min(dz[i] - (self.d_lower[i] - self.d_bar[i]));
        }
        let sdz = self.interval_sums(&dz);
        let sbar = self.interval_sums(&self.d_bar);
        let mut p2_slack = f64::INFINITY;
        for h in 0..self.n_times {
            p2_slack = p2_slack
                .min(self.interval_upper[h] - sbar[h] - sdz[h])
                .min(sdz[h] - (self.interval_lower[h] - sbar[h]));
        }
        let total_bar: f64 = self.d_bar.iter().sum();
        let total_dz: f64 = dz.iter().sum();
        let p3_slack = (self.gamma - 1.0) * total_bar - total_dz;

        SetMembership {
            in_ellipsoid: ellipsoid_slack >= -tol,
            ellipsoid_slack,
            in_p1: p1_slack >= -tol,
            p1_slack,
            in_p2: p2_slack >= -tol,
            p2_slack,
            in_p3: p3_slack >= -tol,
            p3_slack,
        }
    }
}

/// Synthetic historical demand: scale every cell of every baseline day by an
/// independently drawn retention factor (1 − u), u ~ U(leave_lo, leave_hi).
pub fn generate_synthetic_samples(
    baseline_days: &[DemandMatrix],
    leave_lo: f64,
    leave_hi: f64,
    seed: u64,
    index: &RecommendationIndex,
) -> Result<Vec<DemandMatrix>> {
    if baseline_days.is_empty() {
        return Err(Error::InvalidDemand("no baseline days given".into()));
    }
    if !(0.0..1.0).contains(&leave_lo) || !(0.0..1.0).contains(&leave_hi) || leave_lo > leave_hi {
        return Err(Error::InvalidDemand(
            "leave proportions must satisfy 0 ≤ lo ≤ hi < 1".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(baseline_days.len());
    for day in baseline_days {
        let values: Vec<f64> = day
            .as_slice()
            .iter()
            .map(|d| {
                let u = if leave_lo == leave_hi {
                    leave_lo
                } else {
                    rng.random_range(leave_lo..leave_hi)
                };
                d * (1.0 - u)
            })
            .collect();
        out.push(DemandMatrix::new(values, index)?);
    }
    Ok(out)
}

/// Γ as a percentile of the sampled total-demand distribution, relative to
/// the mean total (nearest-rank percentile).
pub fn gamma_from_percentile(samples: &[DemandMatrix], percentile: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidDemand("no samples".into()));
    }
    let mut totals: Vec<f64> = samples.iter().map(|s| s.total()).collect();
    totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean: f64 = totals.iter().sum::<f64>() / totals.len() as f64;
    if mean <= 0.0 {
        return Err(Error::InvalidDemand("zero total demand".into()));
    }
    let rank = ((percentile * totals.len() as f64).ceil() as usize).clamp(1, totals.len());
    Ok(totals[rank - 1] / mean)
}

/// Fit the model from samples: mean, ridged covariance Cholesky factor,
/// elementwise and per-interval min/max bounds. Bounds that collapse onto the
/// mean are widened by half a passenger to keep z = 0 strictly inside the
/// polyhedra.
pub fn fit(
    samples: &[DemandMatrix],
    rho: f64,
    gamma: f64,
    index: &RecommendationIndex,
) -> Result<UncertaintyModel> {
    if samples.len() < 2 {
        return Err(Error::InvalidUncertainty(
            "need at least 2 samples to fit".into(),
        ));
    }
    if rho < 0.0 {
        return Err(Error::InvalidUncertainty("rho must be nonnegative".into()));
    }
    if gamma < 1.0 {
        return Err(Error::InvalidUncertainty(
            "gamma must be at least 1 so the nominal demand stays feasible".into(),
        ));
    }
    let dim = index.n_cells();
    let n = samples.len() as f64;
    let mut d_bar = vec![0.0; dim];
    for s in samples {
        for (acc, v) in d_bar.iter_mut().zip(s.as_slice()) {
            *acc += v / n;
        }
    }

    let mut sigma = vec![0.0; dim * dim];
    for s in samples {
        let centered: Vec<f64> = s
            .as_slice()
            .iter()
            .zip(d_bar.iter())
            .map(|(v, m)| v - m)
            .collect();
        for i in 0..dim {
            for j in 0..dim {
                sigma[i * dim + j] += centered[i] * centered[j] / (n - 1.0);
            }
        }
    }

    // ridge until the factorization succeeds
    let trace: f64 = (0..dim).map(|i| sigma[i * dim + i]).sum();
    let mut ridge = if trace > 0.0 {
        1e-6 * trace / dim as f64
    } else {
        1e-6
    };
    let chol = loop {
        let mut ridged = sigma.clone();
        for i in 0..dim {
            ridged[i * dim + i] += ridge;
        }
        if let Some(l) = numeric::cholesky(&ridged, dim) {
            break l;
        }
        ridge *= 10.0;
        if ridge > 1e12 {
            return Err(Error::InvalidUncertainty(
                "covariance could not be made positive definite".into(),
            ));
        }
    };

    let mut d_lower = vec![f64::INFINITY; dim];
    let mut d_upper = vec![f64::NEG_INFINITY; dim];
    for s in samples {
        for (i, v) in s.as_slice().iter().enumerate() {
            d_lower[i] = d_lower[i].min(*v);
            d_upper[i] = d_upper[i].max(*v);
        }
    }
    for i in 0..dim {
        if d_upper[i] - d_lower[i] < 1e-12 {
            d_lower[i] -= 0.5;
            d_upper[i] += 0.5;
        }
    }

    let n_times = index.n_times();
    let n_ods = index.n_ods();
    let mut interval_lower = vec![f64::INFINITY; n_times];
    let mut interval_upper = vec![f64::NEG_INFINITY; n_times];
    for s in samples {
        for h in 0..n_times {
            let total: f64 = s.as_slice()[h * n_ods..(h + 1) * n_ods].iter().sum();
            interval_lower[h] = interval_lower[h].min(total);
            interval_upper[h] = interval_upper[h].max(total);
        }
    }
    for h in 0..n_times {
        if interval_upper[h] - interval_lower[h] < 1e-12 {
            interval_lower[h] -= 0.5;
            interval_upper[h] += 0.5;
        }
    }

    let model = UncertaintyModel {
        n_times,
        n_ods,
        d_bar,
        cholesky_row_major: chol,
        d_lower,
        d_upper,
        interval_lower,
        interval_upper,
        gamma,
        rho,
    };

    // the center must sit strictly inside the fitted
    // polyhedral bounds (Γ = 1 leaves Z_P3 supported exactly at the center).
    let center = model.membership(&vec![0.0; dim]);
    debug_assert!(center.p1_slack > 0.0 && center.p2_slack > 0.0 && center.p3_slack >= 0.0);
    Ok(model)
}

/// Mardia's multivariate skewness b₁ₚ and kurtosis b₂ₚ with asymptotic
/// p-values (χ² for skewness, two-sided normal for kurtosis).
#[derive(Clone, Copy, Debug)]
pub struct MardiaResult {
    pub dim: usize,
    pub n: usize,
    pub skewness: f64,
    pub kurtosis: f64,
    pub skewness_stat: f64,
    pub kurtosis_stat: f64,
    pub p_skewness: f64,
    pub p_kurtosis: f64,
}

pub fn mardia_statistics(vectors: &[Vec<f64>]) -> Result<MardiaResult> {
    let n = vectors.len();
    if n < 3 {
        return Err(Error::InvalidUncertainty(
            "Mardia statistics need at least 3 samples".into(),
        ));
    }
    let p = vectors[0].len();
    let nf = n as f64;
    let mut mean = vec![0.0; p];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / nf;
        }
    }
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(mean.iter()).map(|(x, m)| x - m).collect())
        .collect();
    // maximum-likelihood covariance
    let mut s = vec![0.0; p * p];
    for c in &centered {
        for i in 0..p {
            for j in 0..p {
                s[i * p + j] += c[i] * c[j] / nf;
            }
        }
    }
    let l = numeric::cholesky(&s, p).ok_or_else(|| {
        Error::InvalidUncertainty("singular covariance; reduce the tested dimension".into())
    })?;
    // G = X S⁻¹ Xᵀ via solves
    let sinv_x: Vec<Vec<f64>> = centered
        .iter()
        .map(|c| numeric::cholesky_solve(&l, p, c))
        .collect();
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for i in 0..n {
        let gii: f64 = centered[i].iter().zip(&sinv_x[i]).map(|(a, b)| a * b).sum();
        b2 += gii * gii / nf;
        for j in 0..n {
            let gij: f64 = centered[i].iter().zip(&sinv_x[j]).map(|(a, b)| a * b).sum();
            b1 += gij.powi(3) / (nf * nf);
        }
    }
    let pf = p as f64;
    let skewness_stat = nf * b1 / 6.0;
    let df = pf * (pf + 1.0) * (pf + 2.0) / 6.0;
    let p_skewness = numeric::chi2_sf(skewness_stat, df);
    let kurtosis_stat = (b2 - pf * (pf + 2.0)) * (nf / (8.0 * pf * (pf + 2.0))).sqrt();
    let p_kurtosis = 2.0 * (1.0 - numeric::norm_cdf(kurtosis_stat.abs()));
    Ok(MardiaResult {
        dim: p,
        n,
        skewness: b1,
        kurtosis: b2,
        skewness_stat,
        kurtosis_stat,
        p_skewness,
        p_kurtosis,
    })
}

/// Mardia diagnostics on demand samples, testing per-interval aggregated
/// totals (dimension |H|) whenever there are too few samples for the full
/// H × K dimension.
pub fn mardia_demand(samples: &[DemandMatrix], index: &RecommendationIndex) -> Result<MardiaResult> {
    let full_dim = index.n_cells();
    let vectors: Vec<Vec<f64>> = if samples.len() > full_dim {
        samples.iter().map(|s| s.as_slice().to_vec()).collect()
    } else {
        samples
            .iter()
            .map(|s| {
                (0..index.n_times())
                    .map(|h| {
                        s.as_slice()[h * index.n_ods()..(h + 1) * index.n_ods()]
                            .iter()
                            .sum()
                    })
                    .collect()
            })
            .collect()
    };
    mardia_statistics(&vectors)
}
