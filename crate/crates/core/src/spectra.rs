//! Spectral quantities of a single velocity class: density of states,
//! Wannier-Stark ladders, and the probe absorption spectrum.
//!
//! The absorption spectrum of a chain is the probe-site diagonal of the
//! resolvent of the non-Hermitian chain Hamiltonian (decay enters as
//! `-i Γ/2` on each site),
//!
//! ```text
//!     A(ν) = -Im G_pp(ν) / π,   G = (ν - H + i diag(Γ)/2)^{-1},
//! ```
//!
//! evaluated with a two-sided continued fraction that walks the tridiagonal
//! chain inward from both ends in O(n) per frequency. `A` is a sum of
//! Lorentzians centred on the Wannier-Stark levels, weighted by the probe
//! overlap of each mode, and integrates to one over the whole axis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eigensystem, ChainModel, LatticeParams};
use crate::peaks::{find_peaks, Peak};
use num_complex::Complex64;

/// Default relative prominence threshold for ladder peak picking.
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.05;
/// Default probe-weight floor below which a mode is dropped from a ladder.
pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-4;
/// Default Lorentzian broadening of the density of states, MHz.
pub const DEFAULT_DOS_BROADENING_MHZ: f64 = 3.0;
/// Default number of position samples for the density of states.
pub const DEFAULT_DOS_X_SAMPLES: usize = 2000;
/// Chains whose minimum band gap is below this are treated as gapless when
/// assigning ladder levels to bands, MHz.
pub const GAP_CLASSIFY_THRESHOLD_MHZ: f64 = 1.0;

// ---------------------------------------------------------------------------
// Frequency grid and spectrum containers
// ---------------------------------------------------------------------------

/// Uniform frequency grid, MHz, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub n: usize,
}

impl FrequencyGrid {
    pub fn new(f_min: f64, f_max: f64, n: usize) -> Result<Self> {
        if !(f_min.is_finite() && f_max.is_finite()) {
            return Err(Error::InvalidGrid("non-finite frequency bound".into()));
        }
        if f_min >= f_max {
            return Err(Error::InvalidGrid(format!(
                "empty frequency window [{f_min}, {f_max}]"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid needs at least 2 points, got {n}"
            )));
        }
        Ok(Self { f_min, f_max, n })
    }

    /// Grid step, MHz.
    pub fn step(&self) -> f64 {
        (self.f_max - self.f_min) / (self.n - 1) as f64
    }

    /// Materialized grid points.
    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n).map(|i| self.f_min + i as f64 * h).collect()
    }
}

/// Provenance attached to a computed spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    /// Lattice parameters, when the producer had them.
    pub params: Option<LatticeParams>,
    /// Velocity class, m/s, when the spectrum belongs to one.
    pub velocity_mps: Option<f64>,
    /// Grid the values were evaluated on.
    pub grid: FrequencyGrid,
}

/// A sampled spectrum over a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Frequencies, MHz; identical to `meta.grid.values()`.
    pub freq: Vec<f64>,
    /// Spectral values (units depend on the producer).
    pub value: Vec<f64>,
    pub meta: SpectrumMeta,
}

// ---------------------------------------------------------------------------
// Density of states
// ---------------------------------------------------------------------------

/// Unit-area Lorentzian with full width `w` at half maximum.
fn lorentzian(x: f64, w: f64) -> f64 {
    let hw = w / 2.0;
    (hw / std::f64::consts::PI) / (x * x + hw * hw)
}

/// Lorentzian-broadened density of states of the two Bloch bands, normalized
/// to unit trapezoid integral over the requested window.
///
/// Positions are sampled at `n_x_samples` midpoints of one half-wavelength
/// period (the full band period); `n_x_samples` must be at least 1000 so the
/// sampling error stays well below the broadening.
pub fn dos(
    params: &LatticeParams,
    grid: &FrequencyGrid,
    n_x_samples: usize,
    broadening: f64,
) -> Result<Spectrum> {
    if n_x_samples < 1000 {
        return Err(Error::InvalidGrid(format!(
            "density of states needs >= 1000 position samples, got {n_x_samples}"
        )));
    }
    if !(broadening.is_finite() && broadening > 0.0) {
        return Err(Error::InvalidParam {
            name: "broadening",
            message: format!("must be positive and finite, got {broadening}"),
        });
    }
    let period = params.lambda / 2.0;
    let mut levels = Vec::with_capacity(2 * n_x_samples);
    for j in 0..n_x_samples {
        let x = period * (j as f64 + 0.5) / n_x_samples as f64;
        let (lo, up) = crate::model::band_energies(params, x);
        levels.push(lo);
        levels.push(up);
    }
    let freq = grid.values();
    let raw: Vec<f64> = freq
        .par_iter()
        .map(|&nu| {
            levels.iter().map(|&e| lorentzian(nu - e, broadening)).sum::<f64>()
                / n_x_samples as f64
        })
        .collect();
    let h = grid.step();
    let mut integral = 0.0;
    for w in raw.windows(2) {
        integral += 0.5 * (w[0] + w[1]) * h;
    }
    if !(integral > 0.0) {
        return Err(Error::InvalidGrid(
            "density of states vanishes on the requested window".into(),
        ));
    }
    let value = raw.into_iter().map(|v| v / integral).collect();
    Ok(Spectrum {
        freq,
        value,
        meta: SpectrumMeta {
            params: Some(*params),
            velocity_mps: None,
            grid: *grid,
        },
    })
}

// ---------------------------------------------------------------------------
// Wannier-Stark levels
// ---------------------------------------------------------------------------

/// Band assignment of a ladder level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandLabel {
    /// Gap too small to separate ladders; one merged ladder.
    Single,
    Lower,
    Upper,
}

/// Probe-weighted Wannier-Stark levels of one tilted chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderPeaks {
    /// Level energies, ascending, MHz.
    pub energies: Vec<f64>,
    /// Probe-site overlap `|⟨probe|mode⟩|²` of each level.
    pub weights: Vec<f64>,
    /// Band each level belongs to.
    pub band: Vec<BandLabel>,
    /// Pooled median of adjacent within-band spacings, MHz; `None` when no
    /// band keeps two levels.
    pub spacing_estimate: Option<f64>,
}

/// Wannier-Stark levels with the default probe-weight floor.
pub fn wsl_levels(chain: &ChainModel) -> Result<LadderPeaks> {
    wsl_levels_with_floor(chain, DEFAULT_WEIGHT_FLOOR)
}

/// Diagonalize the chain and keep modes whose probe weight reaches `floor`.
///
/// An untilted chain has Bloch bands instead of ladders and is rejected.
/// When the band gap at the probe's parameters exceeds
/// [`GAP_CLASSIFY_THRESHOLD_MHZ`], each level is assigned to the band whose
/// sign matches its untilted energy expectation `E - F·⟨m⟩`; otherwise all
/// levels form a single merged ladder.
pub fn wsl_levels_with_floor(chain: &ChainModel, floor: f64) -> Result<LadderPeaks> {
    if chain.tilt_mhz == 0.0 {
        return Err(Error::LaddersUndefined);
    }
    if !(0.0..1.0).contains(&floor) {
        return Err(Error::InvalidParam {
            name: "weight_floor",
            message: format!("must lie in [0, 1), got {floor}"),
        });
    }
    let eig = eigensystem(chain)?;
    let probe = chain.probe_site;
    let (t1, t2) = chain.probe_couplings();
    let delta = chain.probe_delta();
    let min_gap = 2.0 * ((delta / 2.0).powi(2) + (t1 - t2).powi(2)).sqrt();
    let gap_open = min_gap > GAP_CLASSIFY_THRESHOLD_MHZ;

    let mut energies = Vec::new();
    let mut weights = Vec::new();
    let mut band = Vec::new();
    for (e, mode) in eig.energies.iter().zip(&eig.modes) {
        let w = mode[probe] * mode[probe];
        if w < floor {
            continue;
        }
        let label = if gap_open {
            // Expectation of the untilted part of the Hamiltonian: subtract
            // the tilt contribution F·⟨m⟩ from the eigenvalue.
            let mean_m: f64 = mode
                .iter()
                .zip(&chain.momentum_index)
                .map(|(c, &m)| c * c * m as f64)
                .sum();
            let chi = e - chain.tilt_mhz * mean_m;
            if chi >= 0.0 {
                BandLabel::Upper
            } else {
                BandLabel::Lower
            }
        } else {
            BandLabel::Single
        };
        energies.push(*e);
        weights.push(w);
        band.push(label);
    }

    let spacing_estimate = pooled_band_spacing(&energies, &band);
    Ok(LadderPeaks {
        energies,
        weights,
        band,
        spacing_estimate,
    })
}

/// Median of all adjacent energy differences taken within each band group.
fn pooled_band_spacing(energies: &[f64], band: &[BandLabel]) -> Option<f64> {
    let mut diffs = Vec::new();
    for label in [BandLabel::Single, BandLabel::Lower, BandLabel::Upper] {
        let group: Vec<f64> = energies
            .iter()
            .zip(band)
            .filter(|(_, b)| **b == label)
            .map(|(e, _)| *e)
            .collect();
        for w in group.windows(2) {
            diffs.push(w[1] - w[0]);
        }
    }
    median(&mut diffs)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite spacings"));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

// ---------------------------------------------------------------------------
// Absorption spectrum
// ---------------------------------------------------------------------------

/// Probe-site diagonal resolvent element `G_pp(ν)` of the decaying chain.
fn diagonal_resolvent(chain: &ChainModel, nu: f64) -> Result<Complex64> {
    let n = chain.n_sites;
    let p = chain.probe_site;
    // ν - onsite_j + i Γ_j / 2 for each site.
    let dres = |j: usize| Complex64::new(nu - chain.onsite[j], 0.5 * chain.linewidth[j]);
    let mut sigma_left = Complex64::ZERO;
    if p > 0 {
        let mut g = Complex64::ZERO; // continued fraction from the left edge
        for j in 0..p {
            let denom = dres(j)
                - if j == 0 {
                    Complex64::ZERO
                } else {
                    chain.coupling[j - 1].powi(2) * g
                };
            if denom.norm() == 0.0 {
                return Err(Error::ResolventBreakdown { freq_mhz: nu });
            }
            g = denom.inv();
        }
        sigma_left = chain.coupling[p - 1].powi(2) * g;
    }
    let mut sigma_right = Complex64::ZERO;
    if p + 1 < n {
        let mut g = Complex64::ZERO;
        for j in (p + 1..n).rev() {
            let denom = dres(j)
                - if j == n - 1 {
                    Complex64::ZERO
                } else {
                    chain.coupling[j].powi(2) * g
                };
            if denom.norm() == 0.0 {
                return Err(Error::ResolventBreakdown { freq_mhz: nu });
            }
            g = denom.inv();
        }
        sigma_right = chain.coupling[p].powi(2) * g;
    }
    let denom = dres(p) - sigma_left - sigma_right;
    if denom.norm() == 0.0 {
        return Err(Error::ResolventBreakdown { freq_mhz: nu });
    }
    Ok(denom.inv())
}

/// Single absorption value `-Im G_pp(ν)/π` (for callers that manage their own
/// frequency loop and parallelism).
pub(crate) fn absorption_values_at(chain: &ChainModel, nu: f64) -> Result<f64> {
    diagonal_resolvent(chain, nu).map(|g| -g.im / std::f64::consts::PI)
}

/// Check that a grid covers the spectral support of the chain: the band
/// window deduced from the probe-site parameters, padded by three times the
/// largest linewidth.
pub(crate) fn check_grid_covers_chain(chain: &ChainModel, grid: &FrequencyGrid) -> Result<()> {
    let (t1, t2) = chain.probe_couplings();
    let delta = chain.probe_delta();
    let edge = ((delta / 2.0).powi(2) + (t1 + t2).powi(2)).sqrt();
    let pad = 3.0 * chain.linewidth.iter().cloned().fold(0.0, f64::max);
    let need = edge + pad;
    if grid.f_min > -need || grid.f_max < need {
        return Err(Error::InvalidGrid(format!(
            "grid [{}, {}] MHz does not cover the spectral window ±{:.1} MHz",
            grid.f_min, grid.f_max, need
        )));
    }
    Ok(())
}

/// Probe absorption spectrum of one chain, `A(ν) = -Im G_pp(ν)/π`.
///
/// The grid must cover the band window of the chain (padded by the decay
/// width) so that no ladder line falls outside the computed range.
pub fn absorption_spectrum(chain: &ChainModel, grid: &FrequencyGrid) -> Result<Spectrum> {
    check_grid_covers_chain(chain, grid)?;
    let freq = grid.values();
    let value: Vec<f64> = freq
        .par_iter()
        .map(|&nu| diagonal_resolvent(chain, nu).map(|g| -g.im / std::f64::consts::PI))
        .collect::<Result<_>>()?;
    Ok(Spectrum {
        freq,
        value,
        meta: SpectrumMeta {
            params: None,
            velocity_mps: Some(chain.velocity_mps),
            grid: *grid,
        },
    })
}

// ---------------------------------------------------------------------------
// Spacing from spectra
// ---------------------------------------------------------------------------

/// Ladder spacing extracted from the peak comb of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingEstimate {
    /// Median adjacent peak distance, MHz.
    pub spacing_mhz: f64,
    /// The peaks the estimate is based on, ascending in frequency.
    pub peaks: Vec<Peak>,
}

/// Estimate the comb spacing of a spectrum from its prominent peaks.
///
/// Fails with [`Error::NoLadderResolved`] when fewer than two peaks clear the
/// prominence threshold (relative to the full signal range).
pub fn ladder_spacing(spectrum: &Spectrum, min_prominence: f64) -> Result<SpacingEstimate> {
    if !(0.0..=1.0).contains(&min_prominence) {
        return Err(Error::InvalidParam {
            name: "min_prominence",
            message: format!("must lie in [0, 1], got {min_prominence}"),
        });
    }
    let peaks = find_peaks(&spectrum.freq, &spectrum.value, min_prominence);
    if peaks.len() < 2 {
        return Err(Error::NoLadderResolved(format!(
            "{} peak(s) above prominence {min_prominence}; need at least 2",
            peaks.len()
        )));
    }
    let mut diffs: Vec<f64> = peaks.windows(2).map(|w| w[1].freq - w[0].freq).collect();
    let spacing_mhz = median(&mut diffs).expect("at least one difference");
    Ok(SpacingEstimate { spacing_mhz, peaks })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
