//! Clustered geometric mmWave MIMO channel model.
//!
//! Channels are sums of `N_C` clusters of `N_R` rays each. Every ray carries a
//! CN(0, 1) gain and departs/arrives at an angle drawn as its cluster mean
//! plus a Laplacian deviate. Arrays are half-wavelength-spaced ULAs. In the
//! broadband (OFDM) case cluster `i` lands on discrete delay tap `i`, giving
//! the per-subcarrier phase ramp `exp(-j 2π i k / N)`.

use rand::Rng;
use std::f64::consts::{PI, TAU};

use crate::error::{HbfError, Result};
use crate::linalg::{cx, scale, CMat, CVec};
use crate::rng::complex_gaussian;

/// Uniform linear array with half-wavelength element spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    pub num_elements: usize,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize) -> Result<Self> {
        if num_elements == 0 {
            return Err(HbfError::InvalidInput(
                "array must have at least one element".into(),
            ));
        }
        Ok(ArrayGeometry { num_elements })
    }
}

/// Gains and angles of every ray in a channel realization.
///
/// All per-ray arrays have shape `num_clusters x rays_per_cluster`; angles
/// are in radians.
#[derive(Debug, Clone)]
pub struct RayParams {
    pub gains: CMat,
    pub aod: Vec<Vec<f64>>,
    pub aoa: Vec<Vec<f64>>,
    pub mean_cluster_aod: Vec<f64>,
    pub mean_cluster_aoa: Vec<f64>,
    pub angular_spread_deg: f64,
}

impl RayParams {
    pub fn num_clusters(&self) -> usize {
        self.gains.nrows()
    }

    pub fn rays_per_cluster(&self) -> usize {
        self.gains.ncols()
    }

    /// Departure angles flattened in (cluster, ray) order.
    pub fn all_aod(&self) -> Vec<f64> {
        self.aod.iter().flatten().copied().collect()
    }

    /// Arrival angles flattened in (cluster, ray) order.
    pub fn all_aoa(&self) -> Vec<f64> {
        self.aoa.iter().flatten().copied().collect()
    }
}

/// Per-subcarrier channel matrices together with the rays that generated them.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub per_subcarrier: Vec<CMat>,
    pub rays: RayParams,
}

impl ChannelRealization {
    pub fn num_subcarriers(&self) -> usize {
        self.per_subcarrier.len()
    }

    pub fn n_rx(&self) -> usize {
        self.per_subcarrier[0].nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.per_subcarrier[0].ncols()
    }
}

/// Normalized ULA steering vector: entry `n` is `exp(j π n sin θ) / sqrt(M)`.
pub fn array_response(geom: &ArrayGeometry, angle: f64) -> CVec {
    let m = geom.num_elements;
    let norm = 1.0 / (m as f64).sqrt();
    CVec::from_fn(m, |n, _| {
        let phase = PI * n as f64 * angle.sin();
        cx(phase.cos() * norm, phase.sin() * norm)
    })
}

/// Zero-mean Laplacian deviate with scale `b` (standard deviation `b√2`).
fn laplacian(rng: &mut impl Rng, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let u: f64 = rng.gen::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Draw ray gains and angles.
///
/// Gains are i.i.d. CN(0, 1). Mean cluster angles are uniform on `[0, 2π)`;
/// per-ray angles add an untruncated Laplacian deviate whose standard
/// deviation equals `angular_spread_deg`.
pub fn draw_rays(
    rng: &mut impl Rng,
    num_clusters: usize,
    rays_per_cluster: usize,
    angular_spread_deg: f64,
) -> RayParams {
    assert!(num_clusters >= 1 && rays_per_cluster >= 1);
    // Scale b = σ/√2 so the deviate's standard deviation is the given spread.
    let scale_rad = angular_spread_deg.to_radians() / std::f64::consts::SQRT_2;
    let gains = CMat::from_fn(num_clusters, rays_per_cluster, |_, _| complex_gaussian(rng));
    let mean_cluster_aod: Vec<f64> = (0..num_clusters).map(|_| rng.gen::<f64>() * TAU).collect();
    let mean_cluster_aoa: Vec<f64> = (0..num_clusters).map(|_| rng.gen::<f64>() * TAU).collect();
    let mut aod = Vec::with_capacity(num_clusters);
    let mut aoa = Vec::with_capacity(num_clusters);
    for i in 0..num_clusters {
        aod.push(
            (0..rays_per_cluster)
                .map(|_| mean_cluster_aod[i] + laplacian(rng, scale_rad))
                .collect(),
        );
        aoa.push(
            (0..rays_per_cluster)
                .map(|_| mean_cluster_aoa[i] + laplacian(rng, scale_rad))
                .collect(),
        );
    }
    RayParams {
        gains,
        aod,
        aoa,
        mean_cluster_aod,
        mean_cluster_aoa,
        angular_spread_deg,
    }
}

/// Build the per-subcarrier channel matrices from ray parameters.
///
/// `H_k = sqrt(Nt Nr / (Nc Nr)) Σ_i Σ_j α_ij a_r(θ_ij^r) a_t(θ_ij^t)^H
/// exp(-j 2π i k / N)` with the cluster index `i` counted from zero. With a
/// single subcarrier the phase factor is 1 and the narrowband model results.
pub fn gen_channel(
    rays: &RayParams,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    num_subcarriers: usize,
) -> ChannelRealization {
    assert!(num_subcarriers >= 1);
    let n_t = tx.num_elements;
    let n_r = rx.num_elements;
    let nc = rays.num_clusters();
    let nr = rays.rays_per_cluster();
    let gain_norm = ((n_t * n_r) as f64 / (nc * nr) as f64).sqrt();

    // Per-cluster aggregates: the delay phase depends only on the cluster, so
    // the ray sum inside each cluster is shared by all subcarriers.
    let mut cluster_sums: Vec<CMat> = Vec::with_capacity(nc);
    for i in 0..nc {
        let mut acc = CMat::zeros(n_r, n_t);
        for j in 0..nr {
            let ar = array_response(rx, rays.aoa[i][j]);
            let at = array_response(tx, rays.aod[i][j]);
            acc += (&ar * at.adjoint()) * rays.gains[(i, j)];
        }
        cluster_sums.push(acc);
    }

    let per_subcarrier = (0..num_subcarriers)
        .map(|k| {
            let mut h = CMat::zeros(n_r, n_t);
            for (i, sum) in cluster_sums.iter().enumerate() {
                let phase = -TAU * (i as f64) * (k as f64) / num_subcarriers as f64;
                h += sum * cx(phase.cos(), phase.sin());
            }
            scale(&h, gain_norm)
        })
        .collect();

    ChannelRealization {
        per_subcarrier,
        rays: rays.clone(),
    }
}
