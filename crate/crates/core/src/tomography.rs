//! Velocity-scanning tomography: thermal ensembles, pump-burned spectral
//! holes, and the velocity-resolved difference maps they produce.
//!
//! A room-temperature vapour averages the single-class absorption over a
//! Gaussian velocity distribution, washing the Wannier-Stark combs out. A
//! velocity-selective pump burns a narrow Lorentzian hole into that
//! distribution at `v0 = lambda · delta_pump`; subtracting the pump-on from
//! the pump-off spectrum then isolates the classes inside the hole:
//!
//! ```text
//!     ΔA(ν) = Σ_i w_i · depth · L(v_i - v0) · A_i(ν),
//! ```
//!
//! term-by-term non-negative and exactly linear in the hole depth. Scanning
//! `v0` and stacking the difference spectra produces a map whose ridges are
//! the Wannier-Stark ladders of each velocity class; the module also tracks
//! those ridges into trajectories for the band-geometry analysis.
//!
//! Velocity integrals use a composite quadrature: a coarse trapezoid lattice
//! spanning ±4σ of the thermal distribution, refined by a fine window around
//! the hole so the Lorentzian is resolved by at least eight nodes per width.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_chain, ChainModel, LatticeParams, VelocityClass, DEFAULT_CHAIN_SITES};
use crate::peaks::find_peaks;
use crate::spectra::{FrequencyGrid, Spectrum, SpectrumMeta};

/// Full width at half maximum of the default thermal velocity distribution, m/s.
pub const DEFAULT_THERMAL_FWHM_MPS: f64 = 350.0;
/// Default full width of the pump-burned velocity hole, m/s.
pub const DEFAULT_HOLE_FWHM_MPS: f64 = 10.0;
/// Default relative depth of the hole.
pub const DEFAULT_HOLE_DEPTH: f64 = 0.8;
/// Default minimum fraction of map columns a tracked trajectory must span.
pub const DEFAULT_TRACK_MIN_OVERLAP: f64 = 0.15;
/// Peak-prominence threshold used when tracking ladder ridges across a map.
///
/// Difference maps are smooth in the scan direction but the side ladders are
/// slope-smeared by the velocity hole, which pushes their prominence well
/// below the threshold appropriate for a single sharp spectrum.  Quadrature
/// noise in the rendered maps sits many orders of magnitude lower, so a 1%
/// threshold is safely above noise while keeping the smeared ridges.
pub const TRACK_MIN_PROMINENCE: f64 = 0.01;
/// Rows a trajectory may coast without a matched peak before it is retired.
///
/// One or two rows cover a blend through a line crossing or a momentary dip
/// below prominence; anything longer means the line is gone, and keeping the
/// track alive would only let it latch onto an unrelated line later.
pub const MAX_TRACK_GAP_ROWS: usize = 2;

/// Coarse quadrature: nodes every sigma/COARSE_NODES_PER_SIGMA over ±4 sigma.
const COARSE_NODES_PER_SIGMA: usize = 24;
const COARSE_SIGMA_SPAN: f64 = 4.0;
/// Fine quadrature: nodes every fwhm/FINE_NODES_PER_FWHM over ±FINE_FWHM_SPAN
/// hole widths around the hole centre.
///
/// The fine step must be small against the narrowest spectral linewidth
/// divided by the side-ladder slope (1/λ in MHz per m/s), otherwise the
/// hole-smeared side ladders render as a picket fence of discrete comb lines
/// instead of a smooth ridge.  With the metastable-sublattice linewidth of
/// 0.1 MHz the side lines are ≈0.5 MHz wide, so 32 nodes per 10 m/s hole
/// width (0.31 m/s ≈ 0.39 MHz of comb motion) keeps the residual ripple of
/// the smeared ridge at the few-percent level.
const FINE_NODES_PER_FWHM: usize = 32;
const FINE_FWHM_SPAN: f64 = 6.0;

// ---------------------------------------------------------------------------
// Thermal distribution
// ---------------------------------------------------------------------------

/// Gaussian thermal velocity density, 1/(m/s).
pub fn thermal_weight(v: f64, sigma_v: f64) -> f64 {
    let z = v / sigma_v;
    (-0.5 * z * z).exp() / (sigma_v * (2.0 * std::f64::consts::PI).sqrt())
}

/// Discretized thermal velocity distribution: quadrature nodes and weights
/// that integrate the Gaussian density (weights sum to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalDist {
    /// Gaussian width parameter, m/s.
    pub sigma_v: f64,
    /// Quadrature nodes, strictly ascending, m/s.
    pub nodes: Vec<f64>,
    /// Trapezoid-times-density weights, normalized to unit sum.
    pub weights: Vec<f64>,
}

impl ThermalDist {
    /// Coarse lattice of nodes covering ±4 sigma.
    pub fn from_sigma(sigma_v: f64) -> Result<Self> {
        let nodes = coarse_nodes(sigma_v)?;
        Self::from_nodes(sigma_v, nodes)
    }

    /// As [`from_sigma`](Self::from_sigma), width given as a full width at
    /// half maximum.
    pub fn from_fwhm(fwhm: f64) -> Result<Self> {
        Self::from_sigma(sigma_from_fwhm(fwhm))
    }

    /// Coarse lattice plus a fine window around `v0` resolving a hole of
    /// width `hole_fwhm`; coarse nodes inside the window are dropped.
    pub fn refined(sigma_v: f64, v0: f64, hole_fwhm: f64) -> Result<Self> {
        if !(hole_fwhm.is_finite() && hole_fwhm > 0.0) {
            return Err(Error::InvalidParam {
                name: "hole_fwhm",
                message: format!("must be positive and finite, got {hole_fwhm}"),
            });
        }
        if !v0.is_finite() {
            return Err(Error::InvalidParam {
                name: "v0",
                message: "hole centre must be finite".into(),
            });
        }
        let coarse = coarse_nodes(sigma_v)?;
        Self::from_nodes(sigma_v, merge_fine_window(&coarse, v0, hole_fwhm))
    }

    /// Build from explicit nodes (at least two, strictly ascending).
    pub fn from_nodes(sigma_v: f64, nodes: Vec<f64>) -> Result<Self> {
        if !(sigma_v.is_finite() && sigma_v > 0.0) {
            return Err(Error::InvalidParam {
                name: "sigma_v",
                message: format!("must be positive and finite, got {sigma_v}"),
            });
        }
        if nodes.len() < 2 {
            return Err(Error::InvalidParam {
                name: "nodes",
                message: format!("need at least 2 quadrature nodes, got {}", nodes.len()),
            });
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam {
                name: "nodes",
                message: "non-finite quadrature node".into(),
            });
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParam {
                name: "nodes",
                message: "quadrature nodes must be strictly ascending".into(),
            });
        }
        let n = nodes.len();
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let cell = if i == 0 {
                (nodes[1] - nodes[0]) / 2.0
            } else if i == n - 1 {
                (nodes[n - 1] - nodes[n - 2]) / 2.0
            } else {
                (nodes[i + 1] - nodes[i - 1]) / 2.0
            };
            weights.push(cell * thermal_weight(nodes[i], sigma_v));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidParam {
                name: "nodes",
                message: "quadrature carries no thermal weight".into(),
            });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self {
            sigma_v,
            nodes,
            weights,
        })
    }
}

/// Gaussian sigma from a full width at half maximum.
pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * 2.0f64.ln()).sqrt())
}

fn coarse_nodes(sigma_v: f64) -> Result<Vec<f64>> {
    if !(sigma_v.is_finite() && sigma_v > 0.0) {
        return Err(Error::InvalidParam {
            name: "sigma_v",
            message: format!("must be positive and finite, got {sigma_v}"),
        });
    }
    let half = (COARSE_SIGMA_SPAN * COARSE_NODES_PER_SIGMA as f64).round() as i64;
    let step = sigma_v / COARSE_NODES_PER_SIGMA as f64;
    Ok((-half..=half).map(|j| j as f64 * step).collect())
}

/// Replace the coarse nodes inside the hole window with a fine lattice.
fn merge_fine_window(coarse: &[f64], v0: f64, hole_fwhm: f64) -> Vec<f64> {
    let span = FINE_FWHM_SPAN * hole_fwhm;
    let step = hole_fwhm / FINE_NODES_PER_FWHM as f64;
    let guard = step / 2.0;
    let (lo, hi) = (v0 - span, v0 + span);
    let mut merged: Vec<f64> = coarse
        .iter()
        .copied()
        .filter(|&v| v < lo - guard || v > hi + guard)
        .collect();
    let m = (FINE_FWHM_SPAN * FINE_NODES_PER_FWHM as f64).round() as i64;
    merged.extend((-m..=m).map(|j| v0 + j as f64 * step));
    merged.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
    merged
}

// ---------------------------------------------------------------------------
// Pump hole
// ---------------------------------------------------------------------------

/// Velocity-selective pump: detuning, the velocity class it addresses, and
/// the Lorentzian hole it burns into the thermal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSetting {
    /// Pump detuning, MHz.
    pub delta_pump_mhz: f64,
    /// Centre of the burned hole, `lambda · delta_pump`, m/s.
    pub v0_mps: f64,
    /// Full width at half maximum of the hole, m/s.
    pub hole_fwhm_mps: f64,
    /// Relative hole depth, in (0, 1].
    pub depth: f64,
}

impl PumpSetting {
    /// Build from the pump detuning; the addressed velocity follows from the
    /// Doppler condition.
    pub fn new(delta_pump_mhz: f64, hole_fwhm_mps: f64, depth: f64, lambda_m: f64) -> Result<Self> {
        if !(delta_pump_mhz.is_finite() && lambda_m.is_finite() && lambda_m > 0.0) {
            return Err(Error::InvalidParam {
                name: "delta_pump",
                message: "detuning and wavelength must be finite, wavelength positive".into(),
            });
        }
        if !(hole_fwhm_mps.is_finite() && hole_fwhm_mps > 0.0) {
            return Err(Error::InvalidParam {
                name: "hole_fwhm",
                message: format!("must be positive and finite, got {hole_fwhm_mps}"),
            });
        }
        if !(depth.is_finite() && depth > 0.0 && depth <= 1.0) {
            return Err(Error::InvalidParam {
                name: "depth",
                message: format!("must lie in (0, 1], got {depth}"),
            });
        }
        Ok(Self {
            delta_pump_mhz,
            v0_mps: delta_pump_mhz * 1e6 * lambda_m,
            hole_fwhm_mps,
            depth,
        })
    }

    /// Build from the velocity class to address; the detuning follows.
    pub fn from_center_velocity(
        v0_mps: f64,
        hole_fwhm_mps: f64,
        depth: f64,
        lambda_m: f64,
    ) -> Result<Self> {
        if !v0_mps.is_finite() {
            return Err(Error::InvalidParam {
                name: "v0",
                message: "hole centre must be finite".into(),
            });
        }
        Self::new(v0_mps / (lambda_m * 1e6), hole_fwhm_mps, depth, lambda_m)
    }

    /// Peak-normalized Lorentzian hole shape at velocity `v`, in [0, 1].
    pub fn hole_shape(&self, v: f64) -> f64 {
        let hw = self.hole_fwhm_mps / 2.0;
        hw * hw / ((v - self.v0_mps).powi(2) + hw * hw)
    }
}

/// Remaining population fraction at velocity `v` with the pump on:
/// `1 - depth · L(v - v0)`.
pub fn hole_profile(v: f64, pump: &PumpSetting) -> f64 {
    1.0 - pump.depth * pump.hole_shape(v)
}

// ---------------------------------------------------------------------------
// Ensemble and difference spectra
// ---------------------------------------------------------------------------

/// Serial absorption values for one chain (the parallelism lives one level
/// up, across velocity nodes).
fn absorption_values(chain: &ChainModel, freqs: &[f64]) -> Result<Vec<f64>> {
    freqs
        .iter()
        .map(|&nu| {
            crate::spectra::absorption_values_at(chain, nu)
        })
        .collect()
}

/// Absorption spectra of every quadrature node, in node order.
fn node_spectra(
    params: &LatticeParams,
    nodes: &[f64],
    grid: &FrequencyGrid,
    n_sites: usize,
) -> Result<Vec<Vec<f64>>> {
    let freqs = grid.values();
    nodes
        .par_iter()
        .map(|&v| {
            let chain = build_chain(params, &VelocityClass::new(v, params), n_sites)?;
            crate::spectra::check_grid_covers_chain(&chain, grid)?;
            absorption_values(&chain, &freqs)
        })
        .collect()
}

/// Require enough quadrature nodes across the hole to resolve it.
fn check_hole_resolved(dist: &ThermalDist, pump: &PumpSetting) -> Result<()> {
    let (lo, hi) = (
        pump.v0_mps - pump.hole_fwhm_mps,
        pump.v0_mps + pump.hole_fwhm_mps,
    );
    let inside = dist.nodes.iter().filter(|&&v| v >= lo && v <= hi).count();
    let need = 2 * FINE_NODES_PER_FWHM;
    if inside < need {
        return Err(Error::HoleUnderResolved(format!(
            "{inside} quadrature node(s) across the hole [{lo:.1}, {hi:.1}] m/s; need {need}"
        )));
    }
    Ok(())
}

/// Thermal-ensemble absorption spectrum, optionally with the pump on, using
/// the default chain length.
pub fn ensemble_spectrum(
    params: &LatticeParams,
    dist: &ThermalDist,
    pump: Option<&PumpSetting>,
    grid: &FrequencyGrid,
) -> Result<Spectrum> {
    ensemble_spectrum_with_sites(params, dist, pump, grid, DEFAULT_CHAIN_SITES)
}

/// As [`ensemble_spectrum`] with an explicit chain length.
pub fn ensemble_spectrum_with_sites(
    params: &LatticeParams,
    dist: &ThermalDist,
    pump: Option<&PumpSetting>,
    grid: &FrequencyGrid,
    n_sites: usize,
) -> Result<Spectrum> {
    if let Some(p) = pump {
        check_hole_resolved(dist, p)?;
    }
    let spectra = node_spectra(params, &dist.nodes, grid, n_sites)?;
    let mut value = vec![0.0; grid.n];
    for ((v, w), a) in dist.nodes.iter().zip(&dist.weights).zip(&spectra) {
        let h = pump.map_or(1.0, |p| hole_profile(*v, p));
        for (acc, s) in value.iter_mut().zip(a) {
            *acc += w * h * s;
        }
    }
    Ok(Spectrum {
        freq: grid.values(),
        value,
        meta: SpectrumMeta {
            params: Some(*params),
            velocity_mps: None,
            grid: *grid,
        },
    })
}

/// Pump-off minus pump-on ensemble spectrum, evaluated in the factored form
/// `Σ_i w_i · depth · L(v_i - v0) · A_i(ν)`: exactly linear in the hole
/// depth and non-negative term by term.
pub fn difference_spectrum(
    params: &LatticeParams,
    dist: &ThermalDist,
    pump: &PumpSetting,
    grid: &FrequencyGrid,
) -> Result<Spectrum> {
    difference_spectrum_with_sites(params, dist, pump, grid, DEFAULT_CHAIN_SITES)
}

/// As [`difference_spectrum`] with an explicit chain length.
pub fn difference_spectrum_with_sites(
    params: &LatticeParams,
    dist: &ThermalDist,
    pump: &PumpSetting,
    grid: &FrequencyGrid,
    n_sites: usize,
) -> Result<Spectrum> {
    check_hole_resolved(dist, pump)?;
    let spectra = node_spectra(params, &dist.nodes, grid, n_sites)?;
    let value = accumulate_difference(&dist.nodes, &dist.weights, &spectra, pump, grid.n);
    Ok(Spectrum {
        freq: grid.values(),
        value,
        meta: SpectrumMeta {
            params: Some(*params),
            velocity_mps: None,
            grid: *grid,
        },
    })
}

fn accumulate_difference(
    nodes: &[f64],
    weights: &[f64],
    spectra: &[Vec<f64>],
    pump: &PumpSetting,
    n_freq: usize,
) -> Vec<f64> {
    let mut value = vec![0.0; n_freq];
    for ((v, w), a) in nodes.iter().zip(weights).zip(spectra) {
        let factor = w * pump.depth * pump.hole_shape(*v);
        for (acc, s) in value.iter_mut().zip(a) {
            *acc += factor * s;
        }
    }
    value
}

// ---------------------------------------------------------------------------
// Velocity-frequency maps
// ---------------------------------------------------------------------------

/// Context a map carries for downstream analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub lambda_m: f64,
    pub params: LatticeParams,
    pub sigma_v: f64,
    pub hole_fwhm_mps: f64,
    pub depth: f64,
    pub n_sites: usize,
}

/// One ridge of a map: `(scan velocity, peak frequency)` samples of a single
/// Wannier-Stark line followed across columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderTrajectory {
    pub id: usize,
    pub points: Vec<(f64, f64)>,
}

/// A velocity-scanning tomography map: one difference spectrum per scanned
/// hole position, stacked into a matrix, plus the tracked ladder ridges.
#[derive(Debug, Clone, PartialEq)]
pub struct VstMap {
    /// Scanned hole-centre velocities, ascending, m/s; one map row each.
    pub v_axis: Vec<f64>,
    /// Frequency axis shared by all rows, MHz.
    pub f_axis: Vec<f64>,
    /// `data[i][j]`: difference absorption at `v_axis[i]`, `f_axis[j]`.
    pub data: Vec<Vec<f64>>,
    /// Ladder ridges tracked across the columns.
    pub ladders: Vec<LadderTrajectory>,
    pub meta: MapMeta,
}

/// Scan the pump across `v_scan` and stack the difference spectra, using the
/// default chain length.
pub fn vst_map(
    params: &LatticeParams,
    dist: &ThermalDist,
    pump_template: &PumpSetting,
    v_scan: &[f64],
    grid: &FrequencyGrid,
) -> Result<VstMap> {
    vst_map_with_sites(params, dist, pump_template, v_scan, grid, DEFAULT_CHAIN_SITES)
}

/// As [`vst_map`] with an explicit chain length.
///
/// The hole width and depth come from `pump_template`; its centre is
/// overridden by each scan velocity in turn. The spectra of the coarse
/// quadrature nodes in `dist` are computed once and shared by all columns
/// (they do not depend on the hole); only the fine window around each
/// column's hole is recomputed.
pub fn vst_map_with_sites(
    params: &LatticeParams,
    dist: &ThermalDist,
    pump_template: &PumpSetting,
    v_scan: &[f64],
    grid: &FrequencyGrid,
    n_sites: usize,
) -> Result<VstMap> {
    if v_scan.is_empty() {
        return Err(Error::InvalidParam {
            name: "v_scan",
            message: "scan needs at least one velocity".into(),
        });
    }
    if v_scan.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam {
            name: "v_scan",
            message: "non-finite scan velocity".into(),
        });
    }
    if v_scan.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam {
            name: "v_scan",
            message: "scan velocities must be strictly ascending".into(),
        });
    }
    let fwhm = pump_template.hole_fwhm_mps;
    let coarse_spectra = node_spectra(params, &dist.nodes, grid, n_sites)?;

    let rows: Vec<Vec<f64>> = v_scan
        .par_iter()
        .map(|&v0| -> Result<Vec<f64>> {
            let pump =
                PumpSetting::from_center_velocity(v0, fwhm, pump_template.depth, params.lambda)?;
            let merged = merge_fine_window(&dist.nodes, v0, fwhm);
            let refined = ThermalDist::from_nodes(dist.sigma_v, merged)?;
            check_hole_resolved(&refined, &pump)?;
            // Reuse coarse node spectra by position; compute the fine ones.
            let span = FINE_FWHM_SPAN * fwhm;
            let mut spectra: Vec<Vec<f64>> = Vec::with_capacity(refined.nodes.len());
            let mut coarse_iter = dist.nodes.iter().zip(&coarse_spectra).peekable();
            for &v in &refined.nodes {
                if (v - v0).abs() <= span + 1e-9 {
                    let chain = build_chain(params, &VelocityClass::new(v, params), n_sites)?;
                    spectra.push(absorption_values(&chain, &refined_freqs(grid))?);
                } else {
                    // Coarse nodes keep their original positions in order.
                    let (_, s) = loop {
                        match coarse_iter.next() {
                            Some((cv, s)) if (*cv - v).abs() < 1e-12 => break (cv, s),
                            Some(_) => continue,
                            None => {
                                return Err(Error::InvalidParam {
                                    name: "dist",
                                    message: "coarse node bookkeeping failed".into(),
                                })
                            }
                        }
                    };
                    spectra.push(s.clone());
                }
            }
            Ok(accumulate_difference(
                &refined.nodes,
                &refined.weights,
                &spectra,
                &pump,
                grid.n,
            ))
        })
        .collect::<Result<_>>()?;

    let mut map = VstMap {
        v_axis: v_scan.to_vec(),
        f_axis: grid.values(),
        data: rows,
        ladders: Vec::new(),
        meta: MapMeta {
            lambda_m: params.lambda,
            params: *params,
            sigma_v: dist.sigma_v,
            hole_fwhm_mps: fwhm,
            depth: pump_template.depth,
            n_sites,
        },
    };
    map.ladders = track_ladder(&map, DEFAULT_TRACK_MIN_OVERLAP)?;
    Ok(map)
}

fn refined_freqs(grid: &FrequencyGrid) -> Vec<f64> {
    grid.values()
}

// ---------------------------------------------------------------------------
// Ladder tracking
// ---------------------------------------------------------------------------

/// Link the peaks of successive map rows into ladder trajectories.
///
/// Rows are scanned in ascending velocity. Each trajectory predicts where its
/// line should sit in the next row by linear extrapolation of its own recent
/// motion; prominent peaks are then matched one-to-one to the nearest
/// prediction within 0.6 of the local comb spacing. Prediction is what lets
/// two rungs of opposite bands pass through a crossing without exchanging
/// identity: near the crossing both peaks lie close to both tracks, but each
/// track's extrapolated position singles out its own continuation. A track
/// that finds no peak (its line momentarily blended into a neighbour or
/// dropped below prominence) coasts on its prediction for up to
/// [`MAX_TRACK_GAP_ROWS`] rows and is retired afterwards, so a stale track
/// cannot capture an unrelated line that drifts past much later. Leftover
/// peaks seed new trajectories. Trajectories shorter than
/// `min_overlap_fraction` of the scan (and never fewer than 3 points) are
/// discarded.
pub fn track_ladder(map: &VstMap, min_overlap_fraction: f64) -> Result<Vec<LadderTrajectory>> {
    if !(0.0..=1.0).contains(&min_overlap_fraction) {
        return Err(Error::InvalidParam {
            name: "min_overlap_fraction",
            message: format!("must lie in [0, 1], got {min_overlap_fraction}"),
        });
    }
    let n_rows = map.v_axis.len();
    struct Active {
        last: (f64, f64),
        prev: Option<(f64, f64)>,
        missed: usize,
        points: Vec<(f64, f64)>,
    }
    impl Active {
        fn predict(&self, v: f64) -> f64 {
            match self.prev {
                Some((pv, pf)) if self.last.0 > pv => {
                    self.last.1 + (self.last.1 - pf) / (self.last.0 - pv) * (v - self.last.0)
                }
                _ => self.last.1,
            }
        }
    }
    let mut active: Vec<Active> = Vec::new();
    let mut retired: Vec<Vec<(f64, f64)>> = Vec::new();

    for (row, &v) in map.data.iter().zip(&map.v_axis) {
        let peaks = find_peaks(&map.f_axis, row, TRACK_MIN_PROMINENCE);
        let window = 0.6 * local_spacing(map, v);

        // Candidate links sorted by distance to prediction; greedy one-to-one.
        let preds: Vec<f64> = active.iter().map(|t| t.predict(v)).collect();
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (pi, p) in peaks.iter().enumerate() {
            for (ti, pred) in preds.iter().enumerate() {
                let d = (p.freq - pred).abs();
                if d <= window {
                    cands.push((d, ti, pi));
                }
            }
        }
        cands.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut taken_t = vec![false; active.len()];
        let mut taken_p = vec![false; peaks.len()];
        for (_, ti, pi) in cands {
            if taken_t[ti] || taken_p[pi] {
                continue;
            }
            taken_t[ti] = true;
            taken_p[pi] = true;
            let t = &mut active[ti];
            t.prev = Some(t.last);
            t.last = (v, peaks[pi].freq);
            t.missed = 0;
            t.points.push((v, peaks[pi].freq));
        }
        // Unmatched tracks coast; retire them once the gap grows too long.
        for (ti, t) in active.iter_mut().enumerate() {
            if !taken_t[ti] {
                t.missed += 1;
            }
        }
        let mut still = Vec::with_capacity(active.len());
        for t in active {
            if t.missed > MAX_TRACK_GAP_ROWS {
                retired.push(t.points);
            } else {
                still.push(t);
            }
        }
        active = still;
        for (pi, p) in peaks.iter().enumerate() {
            if !taken_p[pi] {
                active.push(Active {
                    last: (v, p.freq),
                    prev: None,
                    missed: 0,
                    points: vec![(v, p.freq)],
                });
            }
        }
    }
    retired.extend(active.into_iter().map(|t| t.points));

    let min_points = ((min_overlap_fraction * n_rows as f64).ceil() as usize).max(3);
    let mut kept: Vec<Vec<(f64, f64)>> = retired
        .into_iter()
        .filter(|t| t.len() >= min_points)
        .collect();
    // Deterministic order: by first velocity, then by starting frequency.
    kept.sort_by(|a, b| {
        a[0].partial_cmp(&b[0]).expect("finite trajectory points")
    });
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(id, points)| LadderTrajectory { id, points })
        .collect())
}

/// Comb spacing for the linking window: the median adjacent peak distance of
/// this row when it has one, the previous row's otherwise, and the
/// theoretical ladder spacing of the scanned class as a last resort.
/// Per-band ladder spacing predicted by the map's own lattice parameters.
///
/// This sets the scale of the linking window.  A median of measured peak
/// separations is unreliable here: faint residual comb lines from the
/// velocity quadrature can sit a few MHz apart and would collapse the
/// estimate far below the true ladder spacing, severing the moving ridges.
fn local_spacing(map: &VstMap, v: f64) -> f64 {
    let per_band = if map.meta.params.min_gap_mhz() > crate::spectra::GAP_CLASSIFY_THRESHOLD_MHZ {
        2.0
    } else {
        1.0
    };
    per_band * v / map.meta.lambda_m * 1e-6
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_LAMBDA_M;
    use crate::spectra::absorption_spectrum;

    fn gapless() -> LatticeParams {
        LatticeParams::with_defaults(73.0, 73.0, 0.0).unwrap()
    }

    #[test]
    fn thermal_dist_is_normalized_gaussian_quadrature() {
        let dist = ThermalDist::from_fwhm(DEFAULT_THERMAL_FWHM_MPS).unwrap();
        // sigma = fwhm / (2 sqrt(2 ln 2)) for a Gaussian.
        assert!((dist.sigma_v - 148.631_315).abs() < 1e-4);
        let sum: f64 = dist.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(dist.weights.iter().all(|&w| w >= 0.0));
        // Symmetric node lattice over ±4 sigma.
        let n = dist.nodes.len();
        assert_eq!(n, 2 * 4 * 24 + 1);
        for i in 0..n {
            assert!((dist.nodes[i] + dist.nodes[n - 1 - i]).abs() < 1e-9);
        }
        assert!((dist.nodes[n - 1] - 4.0 * dist.sigma_v).abs() < 1e-9);
        // Density value at the peak of the default distribution.
        let peak = thermal_weight(0.0, dist.sigma_v);
        assert!((peak - 2.6839e-3).abs() < 1e-6, "peak density {peak}");
        // Quadrature reproduces Gaussian moments: mean 0, variance sigma².
        let mean: f64 = dist.nodes.iter().zip(&dist.weights).map(|(v, w)| v * w).sum();
        assert!(mean.abs() < 1e-10);
        let var: f64 = dist
            .nodes
            .iter()
            .zip(&dist.weights)
            .map(|(v, w)| v * v * w)
            .sum();
        let rel = (var - dist.sigma_v.powi(2)).abs() / dist.sigma_v.powi(2);
        // Truncating at ±4 sigma removes 8·φ(4) ≈ 1.07e-3 of the variance.
        assert!(rel < 2e-3, "variance off by {rel}");
    }

    #[test]
    fn refined_dist_resolves_the_hole_window() {
        let sigma = sigma_from_fwhm(350.0);
        let dist = ThermalDist::refined(sigma, 300.0, 10.0).unwrap();
        let sum: f64 = dist.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(dist.nodes.windows(2).all(|w| w[1] > w[0]));
        // Inside the window the step is fwhm/32; outside it stays coarse.
        let step_fine = 10.0 / 32.0;
        for w in dist.nodes.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            if (mid - 300.0).abs() < 55.0 {
                assert!(w[1] - w[0] <= step_fine + 1e-9, "coarse gap at {mid}");
            }
        }
        let inside = dist
            .nodes
            .iter()
            .filter(|&&v| (v - 300.0).abs() <= 10.0)
            .count();
        assert!(inside >= 16, "{inside} nodes across the hole");
    }

    #[test]
    fn dist_construction_rejects_bad_input() {
        assert!(ThermalDist::from_sigma(0.0).is_err());
        assert!(ThermalDist::from_sigma(f64::NAN).is_err());
        assert!(ThermalDist::from_nodes(100.0, vec![0.0]).is_err());
        assert!(ThermalDist::from_nodes(100.0, vec![0.0, 0.0]).is_err());
        assert!(ThermalDist::from_nodes(100.0, vec![1.0, -1.0]).is_err());
        assert!(ThermalDist::refined(100.0, 300.0, 0.0).is_err());
    }

    #[test]
    fn pump_setting_links_detuning_and_velocity() {
        let p = PumpSetting::new(377.2, 10.0, 0.8, DEFAULT_LAMBDA_M).unwrap();
        assert!((p.v0_mps - 377.2e6 * DEFAULT_LAMBDA_M).abs() < 1e-9);
        assert!((p.v0_mps - 299.87).abs() < 0.01);
        let q = PumpSetting::from_center_velocity(p.v0_mps, 10.0, 0.8, DEFAULT_LAMBDA_M).unwrap();
        assert!((q.delta_pump_mhz - 377.2).abs() < 1e-9);
        assert!(PumpSetting::new(100.0, -1.0, 0.8, DEFAULT_LAMBDA_M).is_err());
        assert!(PumpSetting::new(100.0, 10.0, 0.0, DEFAULT_LAMBDA_M).is_err());
        assert!(PumpSetting::new(100.0, 10.0, 1.1, DEFAULT_LAMBDA_M).is_err());
    }

    #[test]
    fn hole_profile_shape() {
        let p = PumpSetting::from_center_velocity(250.0, 10.0, 0.8, DEFAULT_LAMBDA_M).unwrap();
        assert!((hole_profile(250.0, &p) - 0.2).abs() < 1e-12);
        // Half depth at half width from the centre.
        assert!((hole_profile(255.0, &p) - 0.6).abs() < 1e-12);
        assert!(hole_profile(1000.0, &p) > 0.999);
        for v in [-100.0, 0.0, 245.0, 250.0, 260.0, 400.0] {
            let h = hole_profile(v, &p);
            assert!(h >= 0.2 - 1e-12 && h <= 1.0);
        }
    }

    #[test]
    fn ensemble_is_the_weighted_node_average() {
        let p = gapless();
        let grid = FrequencyGrid::new(-400.0, 400.0, 801).unwrap();
        let dist = ThermalDist::from_nodes(150.0, vec![100.0, 220.0, 340.0]).unwrap();
        let spec = ensemble_spectrum_with_sites(&p, &dist, None, &grid, 61).unwrap();
        // Independent assembly from single-class spectra.
        let mut expect = vec![0.0; grid.n];
        for (v, w) in dist.nodes.iter().zip(&dist.weights) {
            let chain = build_chain(&p, &VelocityClass::new(*v, &p), 61).unwrap();
            let a = absorption_spectrum(&chain, &grid).unwrap();
            for (acc, s) in expect.iter_mut().zip(&a.value) {
                *acc += w * s;
            }
        }
        for (a, b) in spec.value.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn difference_matches_off_minus_on_and_is_depth_linear() {
        let p = gapless();
        let grid = FrequencyGrid::new(-400.0, 400.0, 801).unwrap();
        let sigma = 80.0;
        let dist = ThermalDist::refined(sigma, 250.0, 10.0).unwrap();
        let pump = PumpSetting::from_center_velocity(250.0, 10.0, 0.9, DEFAULT_LAMBDA_M).unwrap();
        let n_sites = 61;

        let diff = difference_spectrum_with_sites(&p, &dist, &pump, &grid, n_sites).unwrap();
        let off = ensemble_spectrum_with_sites(&p, &dist, None, &grid, n_sites).unwrap();
        let on = ensemble_spectrum_with_sites(&p, &dist, Some(&pump), &grid, n_sites).unwrap();
        let scale = off.value.iter().cloned().fold(0.0, f64::max);
        for ((d, o), f) in diff.value.iter().zip(&on.value).zip(&off.value) {
            assert!((d - (f - o)).abs() < 1e-12 * scale.max(1.0));
            assert!(*d >= -1e-15);
        }
        // Exact linearity in depth: depth 0.9 = 3 x depth 0.3.
        let pump_weak =
            PumpSetting::from_center_velocity(250.0, 10.0, 0.3, DEFAULT_LAMBDA_M).unwrap();
        let weak = difference_spectrum_with_sites(&p, &dist, &pump_weak, &grid, n_sites).unwrap();
        for (d, w) in diff.value.iter().zip(&weak.value) {
            assert!((d - 3.0 * w).abs() < 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn under_resolved_hole_is_rejected() {
        let p = gapless();
        let grid = FrequencyGrid::new(-400.0, 400.0, 401).unwrap();
        // Coarse-only lattice: ~1 node per 6.2 m/s against a 5 m/s hole.
        let dist = ThermalDist::from_fwhm(350.0).unwrap();
        let pump = PumpSetting::from_center_velocity(250.0, 5.0, 0.8, DEFAULT_LAMBDA_M).unwrap();
        let r = difference_spectrum_with_sites(&p, &dist, &pump, &grid, 21);
        assert!(matches!(r, Err(Error::HoleUnderResolved(_))));
        // A hole centred far outside the thermal support has no nodes at all.
        let far = PumpSetting::from_center_velocity(5000.0, 10.0, 0.8, DEFAULT_LAMBDA_M).unwrap();
        let refined = ThermalDist::refined(dist.sigma_v, 250.0, 10.0).unwrap();
        assert!(matches!(
            difference_spectrum_with_sites(&p, &refined, &far, &grid, 21),
            Err(Error::HoleUnderResolved(_))
        ));
    }

    #[test]
    fn difference_spectrum_selects_the_addressed_class() {
        let p = gapless();
        // Compare over the band-coverage window of the addressed class.  The
        // side ladders at ±v0/λ lie outside it; those are slope-smeared by
        // the finite hole width (each ladder moves by 1/λ per m/s of
        // velocity spread), so only the central structure admits a pointwise
        // match against the sharp single-class spectrum.
        let grid = FrequencyGrid::new(-200.0, 200.0, 801).unwrap();
        let v0 = 250.0;
        let dist = ThermalDist::refined(150.0, v0, 10.0).unwrap();
        let pump = PumpSetting::from_center_velocity(v0, 10.0, 0.8, DEFAULT_LAMBDA_M).unwrap();
        let diff = difference_spectrum_with_sites(&p, &dist, &pump, &grid, 101).unwrap();
        let chain = build_chain(&p, &VelocityClass::new(v0, &p), 101).unwrap();
        let single = absorption_spectrum(&chain, &grid).unwrap();
        // Both normalized to unit integral over the window, then compared
        // in L².
        let h = grid.step();
        let norm = |v: &[f64]| -> Vec<f64> {
            let m: f64 = v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum();
            v.iter().map(|x| x / m).collect()
        };
        let a = norm(&diff.value);
        let b = norm(&single.value);
        let l2 = |u: &[f64], w: &[f64]| -> f64 {
            u.iter().zip(w).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let rel = l2(&a, &b) / l2(&b, &vec![0.0; b.len()]);
        assert!(rel < 0.05, "difference spectrum strays from the class: {rel}");
        // Dominant peaks coincide.
        let pa = find_peaks(&diff.freq, &diff.value, 0.2);
        let pb = find_peaks(&single.freq, &single.value, 0.2);
        assert!(!pa.is_empty() && !pb.is_empty());
        assert!((pa[0].freq - pb[0].freq).abs() < 1.0);
    }

    #[test]
    fn map_assembly_tracks_ladder_ridges() {
        let p = gapless();
        let grid = FrequencyGrid::new(-500.0, 500.0, 1001).unwrap();
        // Scan velocities must sit well inside the thermal support; columns
        // in the far Gaussian tail are dominated by quadrature residue.
        let dist = ThermalDist::from_fwhm(DEFAULT_THERMAL_FWHM_MPS).unwrap();
        let pump = PumpSetting::from_center_velocity(150.0, 8.0, 0.8, DEFAULT_LAMBDA_M).unwrap();
        let scan = [150.0, 200.0, 250.0, 300.0];
        let map = vst_map_with_sites(&p, &dist, &pump, &scan, &grid, 61).unwrap();
        assert_eq!(map.v_axis, scan);
        assert_eq!(map.data.len(), 4);
        assert!(map.data.iter().all(|r| r.len() == grid.n));
        assert_eq!(map.meta.n_sites, 61);
        assert!(!map.ladders.is_empty());
        // The central ladder line stays at zero frequency for every scan
        // velocity of the symmetric lattice.
        let central = map
            .ladders
            .iter()
            .find(|t| t.points.iter().all(|(_, f)| f.abs() < 2.0))
            .expect("central trajectory");
        assert_eq!(central.points.len(), 4);
        // Some tracked ridge moves by one Bloch frequency per band:
        // slope ≈ 1/lambda in MHz per m/s.  (At this deliberately coarse
        // thermal quadrature the tracker may also pick up faint stationary
        // comb lines from the coarse velocity nodes, so we look for the
        // moving ridge rather than taking the first high-frequency one.)
        let expect = 1.0 / DEFAULT_LAMBDA_M * 1e-6;
        let side_slope = map
            .ladders
            .iter()
            .filter(|t| t.points.len() >= 3 && t.points[0].1 > 50.0)
            .map(|t| fit_slope(&t.points))
            .min_by(|a, b| {
                (a - expect)
                    .abs()
                    .partial_cmp(&(b - expect).abs())
                    .expect("finite slopes")
            })
            .expect("side trajectory");
        assert!(
            (side_slope - expect).abs() / expect < 0.05,
            "side slope {side_slope} vs {expect}"
        );
        // Determinism across runs (exercises the parallel assembly).
        let again = vst_map_with_sites(&p, &dist, &pump, &scan, &grid, 61).unwrap();
        assert_eq!(map.data, again.data);
        assert_eq!(map.ladders, again.ladders);
    }

    fn fit_slope(points: &[(f64, f64)]) -> f64 {
        let n = points.len() as f64;
        let sx: f64 = points.iter().map(|p| p.0).sum();
        let sy: f64 = points.iter().map(|p| p.1).sum();
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn synthetic_comb_is_tracked_line_by_line() {
        // Hand-built map: Lorentzian combs at (n + 0.3) · s(v), s = 1.2 v.
        // The scan step is small enough that each line moves much less than
        // the comb spacing between rows, as in a real scan.
        let f_axis: Vec<f64> = (0..2001).map(|i| -500.0 + 0.5 * i as f64).collect();
        let v_axis: Vec<f64> = (0..7).map(|i| 100.0 + 10.0 * i as f64).collect();
        let mut data = Vec::new();
        for &v in &v_axis {
            let s = 1.2 * v;
            let row: Vec<f64> = f_axis
                .iter()
                .map(|&f| {
                    let mut y = 0.0;
                    for n in -2i32..=2 {
                        let c = (n as f64 + 0.3) * s;
                        let h = (-0.18 * (n as f64).powi(2)).exp();
                        y += h * 9.0 / ((f - c).powi(2) + 9.0);
                    }
                    y
                })
                .collect();
            data.push(row);
        }
        let map = VstMap {
            v_axis: v_axis.clone(),
            f_axis,
            data,
            ladders: Vec::new(),
            meta: MapMeta {
                lambda_m: DEFAULT_LAMBDA_M,
                params: gapless(),
                sigma_v: 100.0,
                hole_fwhm_mps: 10.0,
                depth: 0.8,
                n_sites: 61,
            },
        };
        let trajs = track_ladder(&map, 0.3).unwrap();
        assert_eq!(trajs.len(), 5, "got {} trajectories", trajs.len());
        for t in &trajs {
            // Every trajectory follows one comb index n: f/(1.2 v) - 0.3 constant.
            let ns: Vec<f64> = t
                .points
                .iter()
                .map(|(v, f)| f / (1.2 * v) - 0.3)
                .collect();
            let n0 = ns[0].round();
            for n in &ns {
                assert!((n - n0).abs() < 0.1, "trajectory hops lines: {ns:?}");
            }
        }
        assert!(matches!(
            track_ladder(&map, 1.5),
            Err(Error::InvalidParam { .. })
        ));
    }

    #[test]
    fn map_rejects_bad_scans() {
        let p = gapless();
        let grid = FrequencyGrid::new(-400.0, 400.0, 401).unwrap();
        let dist = ThermalDist::from_sigma(60.0).unwrap();
        let pump = PumpSetting::from_center_velocity(150.0, 8.0, 0.8, DEFAULT_LAMBDA_M).unwrap();
        assert!(matches!(
            vst_map_with_sites(&p, &dist, &pump, &[], &grid, 21),
            Err(Error::InvalidParam { .. })
        ));
        assert!(matches!(
            vst_map_with_sites(&p, &dist, &pump, &[200.0, 150.0], &grid, 21),
            Err(Error::InvalidParam { .. })
        ));
    }
}
