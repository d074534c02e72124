//! Two-band lattice model of timed Dicke states coupled by a bichromatic drive.
//!
//! The lattice lives in momentum space: site `m` is a collective excitation
//! carrying `m` photon recoils, alternating between the excited sublattice `a`
//! (even `m`) and the metastable sublattice `b` (odd `m`). Nearest neighbours
//! are coupled by the two drive Rabi frequencies `t1` (even → odd bond) and
//! `t2` (odd → even bond), and the sublattices are split by `delta`.
//!
//! In the position representation the untilted model reduces to a 2x2 Bloch
//! Hamiltonian
//!
//! ```text
//!     H(x) = [ delta/2              t1 e^{ikx} + t2 e^{-ikx} ]
//!            [ t1 e^{-ikx} + t2 e^{ikx}            -delta/2  ]
//! ```
//!
//! with k = 2π/lambda, whose two bands ∓sqrt((delta/2)² + |f(x)|²) are
//! periodic in `x` with period lambda/2.
//!
//! An atom moving at `v_x` sees each site Doppler-shifted by `m·v_x/lambda`,
//! which tilts the chain linearly and turns the bands into Wannier-Stark
//! ladders. All energies throughout the crate are ordinary frequencies in MHz;
//! angular-frequency expressions are divided by 2π at the boundary.

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drive wavelength default, metres (Rb D1 line).
pub const DEFAULT_LAMBDA_M: f64 = 794.98e-9;
/// Excited-sublattice linewidth default, MHz.
pub const DEFAULT_GAMMA_A_MHZ: f64 = 6.0;
/// Metastable-sublattice linewidth default, MHz.
pub const DEFAULT_GAMMA_B_MHZ: f64 = 0.1;
/// Gap below which two band energies count as degenerate, MHz.
pub const DEFAULT_DEGENERACY_TOL_MHZ: f64 = 1e-9;
/// Default chain length; large enough that edge effects on the probe site are
/// negligible for every velocity used in practice.
pub const DEFAULT_CHAIN_SITES: usize = 201;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Static lattice parameters. Energies in MHz, `lambda` in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    /// Even-bond coupling (Rabi frequency of the first drive component), MHz.
    pub t1: f64,
    /// Odd-bond coupling (Rabi frequency of the second drive component), MHz.
    pub t2: f64,
    /// Sublattice splitting, MHz; `+delta/2` on `a` sites, `-delta/2` on `b`.
    pub delta: f64,
    /// Drive wavelength, metres.
    pub lambda: f64,
    /// Decay linewidth of `a` sites (full width of the resulting Lorentzian), MHz.
    pub gamma_a: f64,
    /// Decay linewidth of `b` sites, MHz.
    pub gamma_b: f64,
}

impl LatticeParams {
    /// Validated constructor. Couplings must be non-negative and not both zero,
    /// `lambda` and `gamma_a` strictly positive, `gamma_b` non-negative.
    pub fn new(
        t1: f64,
        t2: f64,
        delta: f64,
        lambda: f64,
        gamma_a: f64,
        gamma_b: f64,
    ) -> Result<Self> {
        let finite = |name: &'static str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParam {
                    name,
                    message: format!("must be finite, got {v}"),
                })
            }
        };
        finite("t1", t1)?;
        finite("t2", t2)?;
        finite("delta", delta)?;
        finite("lambda", lambda)?;
        finite("gamma_a", gamma_a)?;
        finite("gamma_b", gamma_b)?;
        if t1 < 0.0 {
            return Err(Error::InvalidParam {
                name: "t1",
                message: format!("coupling must be non-negative, got {t1}"),
            });
        }
        if t2 < 0.0 {
            return Err(Error::InvalidParam {
                name: "t2",
                message: format!("coupling must be non-negative, got {t2}"),
            });
        }
        if t1 == 0.0 && t2 == 0.0 {
            return Err(Error::InvalidParam {
                name: "t1",
                message: "couplings t1 and t2 must not both vanish".into(),
            });
        }
        if lambda <= 0.0 {
            return Err(Error::InvalidParam {
                name: "lambda",
                message: format!("wavelength must be positive, got {lambda}"),
            });
        }
        if gamma_a <= 0.0 {
            return Err(Error::InvalidParam {
                name: "gamma_a",
                message: format!("excited-state linewidth must be positive, got {gamma_a}"),
            });
        }
        if gamma_b < 0.0 {
            return Err(Error::InvalidParam {
                name: "gamma_b",
                message: format!("linewidth must be non-negative, got {gamma_b}"),
            });
        }
        Ok(Self {
            t1,
            t2,
            delta,
            lambda,
            gamma_a,
            gamma_b,
        })
    }

    /// Constructor with the default wavelength and linewidths.
    pub fn with_defaults(t1: f64, t2: f64, delta: f64) -> Result<Self> {
        Self::new(
            t1,
            t2,
            delta,
            DEFAULT_LAMBDA_M,
            DEFAULT_GAMMA_A_MHZ,
            DEFAULT_GAMMA_B_MHZ,
        )
    }

    /// Lattice wave vector k = 2π/lambda, 1/m.
    pub fn wave_vector(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda
    }

    /// Minimum direct band gap over the Brillouin zone,
    /// `2·sqrt((delta/2)² + (t1 - t2)²)`, MHz.
    pub fn min_gap_mhz(&self) -> f64 {
        2.0 * ((self.delta / 2.0).powi(2) + (self.t1 - self.t2).powi(2)).sqrt()
    }

    /// Maximum band energy magnitude `sqrt((delta/2)² + (t1 + t2)²)`, MHz.
    pub fn band_edge_mhz(&self) -> f64 {
        ((self.delta / 2.0).powi(2) + (self.t1 + self.t2).powi(2)).sqrt()
    }
}

/// Which of the two sublattices a chain site belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sublattice {
    /// Excited state, even momentum index, linewidth `gamma_a`.
    A,
    /// Metastable state, odd momentum index, linewidth `gamma_b`.
    B,
}

/// Band selector for eigenvector and phase computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    /// The `-sqrt(...)` branch.
    Lower,
    /// The `+sqrt(...)` branch.
    Upper,
}

// ---------------------------------------------------------------------------
// Velocity class
// ---------------------------------------------------------------------------

/// One velocity class of the atomic ensemble, with its derived Bloch
/// frequencies (ordinary MHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityClass {
    /// Velocity component along the lattice, m/s.
    pub v_x: f64,
    /// Wavelength used for the conversions, metres.
    pub lambda: f64,
}

impl VelocityClass {
    /// Build from a velocity and the lattice it moves through.
    pub fn new(v_x: f64, params: &LatticeParams) -> Self {
        Self {
            v_x,
            lambda: params.lambda,
        }
    }

    /// Ladder spacing of the merged single band, `v_x/lambda`, MHz.
    pub fn bloch_freq_single_mhz(&self) -> f64 {
        self.v_x / self.lambda * 1e-6
    }

    /// Ladder spacing per band when the gap is open, `2 v_x/lambda`, MHz.
    pub fn bloch_freq_two_band_mhz(&self) -> f64 {
        2.0 * self.bloch_freq_single_mhz()
    }

    /// Time to cross one real-space Brillouin zone, `lambda / v_x`, seconds.
    /// Infinite for a stationary atom.
    pub fn bloch_period_s(&self) -> f64 {
        self.lambda / self.v_x
    }
}

// ---------------------------------------------------------------------------
// Bloch Hamiltonian and bands
// ---------------------------------------------------------------------------

/// Off-diagonal coupling `f(x) = t1 e^{ikx} + t2 e^{-ikx}`.
fn coupling_f(params: &LatticeParams, x: f64) -> Complex64 {
    let kx = params.wave_vector() * x;
    let e = Complex64::from_polar(1.0, kx);
    params.t1 * e + params.t2 * e.conj()
}

/// The 2x2 Bloch Hamiltonian at real-space position `x` (metres). Hermitian,
/// entries in MHz.
pub fn bloch_hamiltonian(params: &LatticeParams, x: f64) -> Matrix2<Complex64> {
    let f = coupling_f(params, x);
    let d = Complex64::new(params.delta / 2.0, 0.0);
    Matrix2::new(d, f, f.conj(), -d)
}

/// Band energies `(lower, upper) = ∓sqrt((delta/2)² + |f(x)|²)` at `x`, MHz.
pub fn band_energies(params: &LatticeParams, x: f64) -> (f64, f64) {
    let f = coupling_f(params, x);
    let r = ((params.delta / 2.0).powi(2) + f.norm_sqr()).sqrt();
    (-r, r)
}

/// Normalized eigenvector of the Bloch Hamiltonian at `x` for the requested
/// band, using the default degeneracy tolerance.
///
/// Gauge: the first (sublattice `a`) component is made real and non-negative;
/// when it vanishes the second component is made real and positive instead.
pub fn band_eigenvector(params: &LatticeParams, x: f64, band: Band) -> Result<Vector2<Complex64>> {
    band_eigenvector_with_tol(params, x, band, DEFAULT_DEGENERACY_TOL_MHZ)
}

/// As [`band_eigenvector`] with an explicit degeneracy tolerance (MHz on the
/// direct gap).
pub fn band_eigenvector_with_tol(
    params: &LatticeParams,
    x: f64,
    band: Band,
    degeneracy_tol: f64,
) -> Result<Vector2<Complex64>> {
    let f = coupling_f(params, x);
    let d = params.delta / 2.0;
    let r = (d * d + f.norm_sqr()).sqrt();
    if 2.0 * r <= degeneracy_tol {
        return Err(Error::Degenerate { x, gap: 2.0 * r });
    }
    let e = match band {
        Band::Lower => -r,
        Band::Upper => r,
    };
    // Two algebraically equivalent eigenvector forms; pick the better
    // conditioned one (larger norm before normalization).
    let cand_a = Vector2::new(f, Complex64::new(e - d, 0.0));
    let cand_b = Vector2::new(Complex64::new(e + d, 0.0), f.conj());
    let mut v = if cand_a.norm() >= cand_b.norm() {
        cand_a
    } else {
        cand_b
    };
    v /= Complex64::new(v.norm(), 0.0);
    // Gauge fixing.
    let anchor = if v[0].norm() > 1e-12 { v[0] } else { v[1] };
    let phase = anchor / anchor.norm();
    v /= phase;
    Ok(v)
}

// ---------------------------------------------------------------------------
// Tilted chain
// ---------------------------------------------------------------------------

/// The momentum-space chain seen by one velocity class: a tridiagonal
/// tight-binding model with a linear Doppler tilt and per-site decay.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    /// Number of sites (odd, probe in the middle).
    pub n_sites: usize,
    /// Photon-recoil index of each site, `0` at the probe.
    pub momentum_index: Vec<i64>,
    /// Site energies `m·v_x/lambda ± delta/2`, MHz.
    pub onsite: Vec<f64>,
    /// Nearest-neighbour couplings, `t1` after even sites and `t2` after odd
    /// ones; length `n_sites - 1`.
    pub coupling: Vec<f64>,
    /// Sublattice of each site.
    pub sublattice: Vec<Sublattice>,
    /// Per-site decay linewidth (Lorentzian full width), MHz.
    pub linewidth: Vec<f64>,
    /// Index of the probed site, `m = 0`.
    pub probe_site: usize,
    /// Doppler tilt per site, `v_x/lambda`, MHz.
    pub tilt_mhz: f64,
    /// Velocity this chain was built for, m/s.
    pub velocity_mps: f64,
}

/// Build the Doppler-tilted chain for one velocity class.
///
/// `n_sites` must be odd and at least 11 so the probe sits on an `a` site in
/// the middle with several unit cells on either side.
pub fn build_chain(
    params: &LatticeParams,
    velocity: &VelocityClass,
    n_sites: usize,
) -> Result<ChainModel> {
    if n_sites < 11 || n_sites % 2 == 0 {
        return Err(Error::InvalidModel(format!(
            "chain needs an odd site count >= 11, got {n_sites}"
        )));
    }
    let rel = (velocity.lambda - params.lambda).abs() / params.lambda;
    if rel > 1e-12 {
        return Err(Error::InvalidModel(format!(
            "velocity class wavelength {} m disagrees with lattice wavelength {} m",
            velocity.lambda, params.lambda
        )));
    }
    let half = (n_sites as i64 - 1) / 2;
    let tilt = velocity.bloch_freq_single_mhz();
    let mut momentum_index = Vec::with_capacity(n_sites);
    let mut onsite = Vec::with_capacity(n_sites);
    let mut sublattice = Vec::with_capacity(n_sites);
    let mut linewidth = Vec::with_capacity(n_sites);
    let mut coupling = Vec::with_capacity(n_sites - 1);
    for m in -half..=half {
        let on_a = m.rem_euclid(2) == 0;
        momentum_index.push(m);
        sublattice.push(if on_a { Sublattice::A } else { Sublattice::B });
        onsite.push(m as f64 * tilt + if on_a { params.delta / 2.0 } else { -params.delta / 2.0 });
        linewidth.push(if on_a { params.gamma_a } else { params.gamma_b });
        if m < half {
            coupling.push(if on_a { params.t1 } else { params.t2 });
        }
    }
    Ok(ChainModel {
        n_sites,
        momentum_index,
        onsite,
        coupling,
        sublattice,
        linewidth,
        probe_site: half as usize,
        tilt_mhz: tilt,
        velocity_mps: velocity.v_x,
    })
}

impl ChainModel {
    /// Assemble a chain directly from site data (mainly for tests and custom
    /// geometries). Momentum indices and sublattices are assigned relative to
    /// the probe site.
    pub fn from_parts(
        onsite: Vec<f64>,
        coupling: Vec<f64>,
        linewidth: Vec<f64>,
        probe_site: usize,
        tilt_mhz: f64,
        velocity_mps: f64,
    ) -> Result<Self> {
        let n = onsite.len();
        if n == 0 {
            return Err(Error::InvalidModel("chain needs at least one site".into()));
        }
        if coupling.len() + 1 != n || linewidth.len() != n {
            return Err(Error::InvalidModel(format!(
                "inconsistent lengths: {n} sites, {} couplings, {} linewidths",
                coupling.len(),
                linewidth.len()
            )));
        }
        if probe_site >= n {
            return Err(Error::InvalidModel(format!(
                "probe site {probe_site} outside chain of {n} sites"
            )));
        }
        if onsite
            .iter()
            .chain(coupling.iter())
            .chain(linewidth.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidModel("non-finite chain entry".into()));
        }
        if linewidth.iter().any(|&g| g < 0.0) {
            return Err(Error::InvalidModel("negative linewidth".into()));
        }
        let momentum_index: Vec<i64> = (0..n).map(|i| i as i64 - probe_site as i64).collect();
        let sublattice = momentum_index
            .iter()
            .map(|m| {
                if m.rem_euclid(2) == 0 {
                    Sublattice::A
                } else {
                    Sublattice::B
                }
            })
            .collect();
        Ok(Self {
            n_sites: n,
            momentum_index,
            onsite,
            coupling,
            sublattice,
            linewidth,
            probe_site,
            tilt_mhz,
            velocity_mps,
        })
    }

    /// Dense Hermitian part of the chain Hamiltonian (no decay), MHz.
    pub fn hamiltonian_dense(&self) -> DMatrix<f64> {
        let n = self.n_sites;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = self.onsite[i];
            if i + 1 < n {
                h[(i, i + 1)] = self.coupling[i];
                h[(i + 1, i)] = self.coupling[i];
            }
        }
        h
    }

    /// Couplings straddling the probe site: `(t1, t2)` for chains built by
    /// [`build_chain`]; zeros when the corresponding bond does not exist.
    pub fn probe_couplings(&self) -> (f64, f64) {
        let t1 = self.coupling.get(self.probe_site).copied().unwrap_or(0.0);
        let t2 = if self.probe_site > 0 {
            self.coupling[self.probe_site - 1]
        } else {
            0.0
        };
        (t1, t2)
    }

    /// Sublattice splitting recovered from the probe site energy.
    pub fn probe_delta(&self) -> f64 {
        2.0 * self.onsite[self.probe_site]
    }
}

// ---------------------------------------------------------------------------
// Dense eigensystem
// ---------------------------------------------------------------------------

/// Eigenvalues and eigenvectors of the Hermitian part of a chain.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Eigenvalues in ascending order, MHz.
    pub energies: Vec<f64>,
    /// `modes[n][site]`: orthonormal real eigenvectors matching `energies`.
    pub modes: Vec<Vec<f64>>,
}

/// Diagonalize the Hermitian part of the chain.
///
/// Output order and eigenvector signs are fixed deterministically: energies
/// ascend, and each mode's largest-magnitude component is made positive.
pub fn eigensystem(chain: &ChainModel) -> Result<EigenSystem> {
    let h = chain.hamiltonian_dense();
    let eig = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::EigenFailed("symmetric QR did not converge".into()))?;
    let n = chain.n_sites;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("eigenvalues are ordered")
    });
    let mut energies = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    for &idx in &order {
        let e = eig.eigenvalues[idx];
        if !e.is_finite() {
            return Err(Error::EigenFailed(format!("non-finite eigenvalue {e}")));
        }
        let col = eig.eigenvectors.column(idx);
        let mut mode: Vec<f64> = col.iter().copied().collect();
        if mode.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenFailed("non-finite eigenvector entry".into()));
        }
        // Deterministic sign: largest-|.| component (first among ties) positive.
        let mut anchor = 0;
        for (i, v) in mode.iter().enumerate() {
            if v.abs() > mode[anchor].abs() {
                anchor = i;
            }
        }
        if mode[anchor] < 0.0 {
            for v in &mut mode {
                *v = -*v;
            }
        }
        energies.push(e);
        modes.push(mode);
    }
    Ok(EigenSystem { energies, modes })
}

// ---------------------------------------------------------------------------
// Drive modulation path
// ---------------------------------------------------------------------------

/// One-parameter family of lattices traced as the drive phase parameter `eta`
/// runs over its period of 8:
///
/// ```text
///     t1(eta) = a (1 - r sin(π eta / 4))
///     t2(eta) = a (1 + r sin(π eta / 4))
///     delta(eta) = b cos(π eta / 4) + u
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpPath {
    /// Mean coupling, MHz; positive.
    pub a: f64,
    /// Relative coupling modulation depth, `0 <= r < 1`.
    pub r: f64,
    /// Splitting modulation amplitude, MHz.
    pub b: f64,
    /// Splitting offset, MHz.
    pub u: f64,
}

impl PumpPath {
    /// Validated constructor.
    pub fn new(a: f64, r: f64, b: f64, u: f64) -> Result<Self> {
        if !(a.is_finite() && r.is_finite() && b.is_finite() && u.is_finite()) {
            return Err(Error::InvalidParam {
                name: "path",
                message: "path parameters must be finite".into(),
            });
        }
        if a <= 0.0 {
            return Err(Error::InvalidParam {
                name: "a",
                message: format!("mean coupling must be positive, got {a}"),
            });
        }
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidParam {
                name: "r",
                message: format!("modulation depth must satisfy 0 <= r < 1, got {r}"),
            });
        }
        Ok(Self { a, r, b, u })
    }

    /// Minimum two-dimensional gap over `(x, eta)`, MHz. The gap at fixed
    /// `eta` is `2 sqrt((delta/2)² + (t1-t2)²)`; this scans `eta` densely.
    pub fn min_gap_2d_mhz(&self) -> f64 {
        let mut min = f64::INFINITY;
        let n = 2048;
        for j in 0..n {
            let eta = 8.0 * j as f64 / n as f64;
            let p = h2_params(self, eta);
            min = min.min(p.min_gap_mhz());
        }
        min
    }
}

/// Lattice parameters at one point of the modulation path, using the default
/// wavelength and linewidths.
pub fn h2_params(path: &PumpPath, eta: f64) -> LatticeParams {
    h2_params_with(
        path,
        eta,
        DEFAULT_LAMBDA_M,
        DEFAULT_GAMMA_A_MHZ,
        DEFAULT_GAMMA_B_MHZ,
    )
}

/// As [`h2_params`] with explicit wavelength and linewidths.
pub fn h2_params_with(
    path: &PumpPath,
    eta: f64,
    lambda: f64,
    gamma_a: f64,
    gamma_b: f64,
) -> LatticeParams {
    let phase = std::f64::consts::PI * eta / 4.0;
    let s = phase.sin();
    LatticeParams {
        t1: path.a * (1.0 - path.r * s),
        t2: path.a * (1.0 + path.r * s),
        delta: path.b * phase.cos() + path.u,
        lambda,
        gamma_a,
        gamma_b,
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gapless() -> LatticeParams {
        LatticeParams::with_defaults(73.0, 73.0, 0.0).unwrap()
    }

    fn gapped() -> LatticeParams {
        LatticeParams::with_defaults(101.0, 36.0, -71.0).unwrap()
    }

    #[test]
    fn params_validation_rejects_bad_domains() {
        assert!(matches!(
            LatticeParams::with_defaults(-1.0, 73.0, 0.0),
            Err(Error::InvalidParam { name: "t1", .. })
        ));
        assert!(matches!(
            LatticeParams::with_defaults(0.0, 0.0, 10.0),
            Err(Error::InvalidParam { name: "t1", .. })
        ));
        assert!(matches!(
            LatticeParams::new(73.0, 73.0, 0.0, 0.0, 6.0, 0.1),
            Err(Error::InvalidParam { name: "lambda", .. })
        ));
        assert!(matches!(
            LatticeParams::new(73.0, 73.0, 0.0, DEFAULT_LAMBDA_M, 0.0, 0.1),
            Err(Error::InvalidParam { name: "gamma_a", .. })
        ));
        assert!(matches!(
            LatticeParams::new(73.0, 73.0, 0.0, DEFAULT_LAMBDA_M, 6.0, -0.1),
            Err(Error::InvalidParam { name: "gamma_b", .. })
        ));
        assert!(LatticeParams::with_defaults(101.0, 36.0, -71.0).is_ok());
    }

    #[test]
    fn bloch_hamiltonian_is_hermitian_with_expected_couplings() {
        let p = gapped();
        let h0 = bloch_hamiltonian(&p, 0.0);
        // At x = 0 the off-diagonal is t1 + t2, real.
        assert!((h0[(0, 1)].re - (p.t1 + p.t2)).abs() < 1e-12);
        assert!(h0[(0, 1)].im.abs() < 1e-12);
        assert!((h0[(0, 0)].re - p.delta / 2.0).abs() < 1e-12);
        // At kx = π/2 (x = lambda/4) the magnitude drops to |t1 - t2|.
        let hq = bloch_hamiltonian(&p, p.lambda / 4.0);
        assert!((hq[(0, 1)].norm() - (p.t1 - p.t2).abs()).abs() < 1e-9);
        for x in [0.0, 1.3e-7, p.lambda / 3.0, 0.9 * p.lambda] {
            let h = bloch_hamiltonian(&p, x);
            assert!((h[(0, 1)] - h[(1, 0)].conj()).norm() < 1e-12);
            assert!(h[(0, 0)].im.abs() < 1e-15 && h[(1, 1)].im.abs() < 1e-15);
        }
    }

    #[test]
    fn band_energies_match_dense_hermitian_diagonalization() {
        // Independent route: numerical eigenvalues of the assembled 2x2 matrix.
        for p in [gapless(), gapped()] {
            for j in 0..40 {
                let x = p.lambda * j as f64 / 40.0;
                let (lo, up) = band_energies(&p, x);
                let eig = nalgebra::SymmetricEigen::new(bloch_hamiltonian(&p, x));
                let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1]];
                ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert!((lo - ev[0]).abs() < 1e-9, "lower band off at x={x}");
                assert!((up - ev[1]).abs() < 1e-9, "upper band off at x={x}");
            }
        }
    }

    #[test]
    fn band_extrema_match_closed_forms_over_dense_sweep() {
        let p = gapped();
        let mut min_gap = f64::INFINITY;
        let mut max_e = 0.0f64;
        let n = 100_000;
        for j in 0..n {
            let x = p.lambda / 2.0 * j as f64 / n as f64;
            let (lo, up) = band_energies(&p, x);
            min_gap = min_gap.min(up - lo);
            max_e = max_e.max(up);
        }
        assert!((min_gap - p.min_gap_mhz()).abs() / p.min_gap_mhz() < 1e-6);
        assert!((max_e - p.band_edge_mhz()).abs() / p.band_edge_mhz() < 1e-6);
        // Frozen values for the gapped benchmark set: gap 148.125, edge 141.525.
        assert!((p.min_gap_mhz() - 148.124_945).abs() < 1e-3);
        assert!((p.band_edge_mhz() - 141.524_927).abs() < 1e-3);
    }

    #[test]
    fn gapless_bands_touch_at_quarter_wavelength() {
        let p = gapless();
        let x = p.lambda / 4.0;
        let (lo, up) = band_energies(&p, x);
        assert!(up - lo < 1e-7, "gap {} should close", up - lo);
        assert!(matches!(
            band_eigenvector(&p, x, Band::Lower),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn band_periodicity_is_half_wavelength() {
        for p in [gapless(), gapped()] {
            for j in 0..25 {
                let x = p.lambda * (0.031 + j as f64 / 25.0);
                let (lo1, up1) = band_energies(&p, x);
                let (lo2, up2) = band_energies(&p, x + p.lambda / 2.0);
                assert!((lo1 - lo2).abs() < 1e-9 && (up1 - up2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn eigenvector_atomic_limit_and_gauge() {
        // delta = 0, t2 = 0: lower band is (1, -e^{-ikx})/sqrt(2) up to gauge.
        let p = LatticeParams::with_defaults(50.0, 0.0, 0.0).unwrap();
        for x in [0.0, 1e-7, 3.7e-7] {
            let v = band_eigenvector(&p, x, Band::Lower).unwrap();
            let kx = p.wave_vector() * x;
            let reference = Vector2::new(
                Complex64::new(1.0, 0.0),
                -Complex64::from_polar(1.0, -kx),
            ) / Complex64::new(2.0f64.sqrt(), 0.0);
            let overlap = (v.adjoint() * reference)[(0, 0)].norm();
            assert!((overlap - 1.0).abs() < 1e-10, "overlap {overlap} at x={x}");
            assert!(v[0].im.abs() < 1e-12 && v[0].re > 0.0, "gauge anchor broken");
        }
    }

    #[test]
    fn eigenvectors_solve_the_bloch_problem() {
        for p in [gapless(), gapped()] {
            for j in 0..30 {
                let x = p.lambda * (j as f64 + 0.13) / 30.0;
                for band in [Band::Lower, Band::Upper] {
                    let v = match band_eigenvector(&p, x, band) {
                        Ok(v) => v,
                        Err(Error::Degenerate { .. }) => continue,
                        Err(e) => panic!("unexpected error {e}"),
                    };
                    let (lo, up) = band_energies(&p, x);
                    let e = if band == Band::Lower { lo } else { up };
                    let residual = (bloch_hamiltonian(&p, x) * v
                        - v * Complex64::new(e, 0.0))
                    .norm();
                    assert!(residual < 1e-10, "residual {residual} at x={x}");
                    assert!((v.norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn chain_untilted_uniform_case() {
        let p = gapless();
        let vel = VelocityClass::new(0.0, &p);
        let chain = build_chain(&p, &vel, 21).unwrap();
        assert_eq!(chain.probe_site, 10);
        assert_eq!(chain.momentum_index[10], 0);
        assert_eq!(chain.sublattice[10], Sublattice::A);
        assert!(chain.onsite.iter().all(|&e| e == 0.0));
        assert!(chain.coupling.iter().all(|&c| c == 73.0));
        assert_eq!(chain.linewidth[10], DEFAULT_GAMMA_A_MHZ);
        assert_eq!(chain.linewidth[11], DEFAULT_GAMMA_B_MHZ);
    }

    #[test]
    fn chain_tilt_matches_doppler_shift_per_site() {
        let p = LatticeParams::new(73.0, 73.0, 0.0, 795e-9, 6.0, 0.1).unwrap();
        let vel = VelocityClass::new(100.0, &p);
        let chain = build_chain(&p, &vel, 21).unwrap();
        let expected = 100.0 / 795e-9 * 1e-6; // ≈ 125.786 MHz
        assert!((chain.tilt_mhz - expected).abs() < 1e-9);
        assert!((expected - 125.786_16).abs() < 1e-2);
        for i in 0..20 {
            assert!((chain.onsite[i + 1] - chain.onsite[i] - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn chain_gapped_onsite_pattern() {
        let p = gapped();
        let vel = VelocityClass::new(0.0, &p);
        let chain = build_chain(&p, &vel, 11).unwrap();
        // a sites carry +delta/2 = -35.5 (delta negative), b sites +35.5.
        for (i, &m) in chain.momentum_index.iter().enumerate() {
            let expect = if m.rem_euclid(2) == 0 { -35.5 } else { 35.5 };
            assert!((chain.onsite[i] - expect).abs() < 1e-12, "site {m}");
        }
        // Bond after the probe (even site) is t1, before it t2.
        assert_eq!(chain.probe_couplings(), (101.0, 36.0));
        assert!((chain.probe_delta() - (-71.0)).abs() < 1e-12);
    }

    #[test]
    fn chain_rejects_bad_sizes() {
        let p = gapless();
        let vel = VelocityClass::new(0.0, &p);
        assert!(build_chain(&p, &vel, 20).is_err());
        assert!(build_chain(&p, &vel, 9).is_err());
        assert!(build_chain(&p, &vel, 11).is_ok());
    }

    #[test]
    fn eigensystem_three_site_uniform_chain() {
        // Exact spectrum of a 3-site uniform chain: -sqrt(2) t, 0, +sqrt(2) t.
        let t = 10.0;
        let chain = ChainModel::from_parts(
            vec![0.0; 3],
            vec![t; 2],
            vec![6.0; 3],
            1,
            0.0,
            0.0,
        )
        .unwrap();
        let eig = eigensystem(&chain).unwrap();
        let expect = [-t * 2.0f64.sqrt(), 0.0, t * 2.0f64.sqrt()];
        for (e, want) in eig.energies.iter().zip(expect) {
            assert!((e - want).abs() < 1e-10, "{e} vs {want}");
        }
    }

    #[test]
    fn eigensystem_orthonormal_and_reconstructs() {
        let p = gapped();
        let vel = VelocityClass::new(150.0, &p);
        let chain = build_chain(&p, &vel, 201).unwrap();
        let eig = eigensystem(&chain).unwrap();
        let n = chain.n_sites;
        // Orthonormality.
        let mut max_dev = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let dot: f64 = eig.modes[i]
                    .iter()
                    .zip(&eig.modes[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((dot - want).abs());
            }
        }
        assert!(max_dev < 1e-10, "orthonormality deviation {max_dev}");
        // Reconstruction V Λ V^T against the assembled matrix.
        let h = chain.hamiltonian_dense();
        let mut recon = DMatrix::zeros(n, n);
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    recon[(i, j)] += eig.energies[k] * eig.modes[k][i] * eig.modes[k][j];
                }
            }
        }
        let rel = (&recon - &h).norm() / h.norm();
        assert!(rel < 1e-8, "reconstruction error {rel}");
        // Untilted eigenvalues stay inside the band range.
        let chain0 = build_chain(&p, &VelocityClass::new(0.0, &p), 201).unwrap();
        let eig0 = eigensystem(&chain0).unwrap();
        let edge = p.band_edge_mhz() + 1e-6;
        assert!(eig0.energies.iter().all(|e| e.abs() <= edge));
    }

    #[test]
    fn interior_ladder_spacing_matches_bloch_frequency() {
        // Gapless chain: Wannier-Stark spectrum with spacing v/lambda; probe-
        // weighted interior modes reproduce it to high accuracy.
        let p = gapless();
        let vel = VelocityClass::new(200.0, &p);
        let chain = build_chain(&p, &vel, 201).unwrap();
        let eig = eigensystem(&chain).unwrap();
        let f = vel.bloch_freq_single_mhz();
        let probe = chain.probe_site;
        let kept: Vec<f64> = eig
            .energies
            .iter()
            .zip(&eig.modes)
            .filter(|(_, m)| m[probe] * m[probe] >= 1e-4)
            .map(|(e, _)| *e)
            .collect();
        assert!(kept.len() >= 3, "too few weighted modes: {}", kept.len());
        for w in kept.windows(2) {
            let rel = ((w[1] - w[0]) - f).abs() / f;
            assert!(rel < 1e-6, "spacing {} vs {}", w[1] - w[0], f);
        }
    }

    #[test]
    fn velocity_class_derived_frequencies() {
        let p = gapless();
        let v = VelocityClass::new(100.0, &p);
        let single = 100.0 / DEFAULT_LAMBDA_M * 1e-6;
        assert!((v.bloch_freq_single_mhz() - single).abs() < 1e-9);
        assert!((v.bloch_freq_two_band_mhz() - 2.0 * single).abs() < 1e-9);
        assert!((v.bloch_period_s() - DEFAULT_LAMBDA_M / 100.0).abs() < 1e-20);
        let still = VelocityClass::new(0.0, &p);
        assert_eq!(still.bloch_freq_single_mhz(), 0.0);
        assert_eq!(still.bloch_freq_two_band_mhz(), 0.0);
        assert!(still.bloch_period_s().is_infinite());
    }

    #[test]
    fn modulation_path_benchmark_points() {
        let path = PumpPath::new(68.0, 2.0 / 3.0, 100.0, 0.0).unwrap();
        let p0 = h2_params(&path, 0.0);
        assert!((p0.t1 - 68.0).abs() < 1e-12 && (p0.t2 - 68.0).abs() < 1e-12);
        assert!((p0.delta - 100.0).abs() < 1e-12);
        let p2 = h2_params(&path, 2.0);
        assert!((p2.t1 - 68.0 / 3.0).abs() < 1e-9);
        assert!((p2.t2 - 68.0 * 5.0 / 3.0).abs() < 1e-9);
        assert!(p2.delta.abs() < 1e-12);
        let p6 = h2_params(&path, 6.0);
        assert!((p6.t1 - 68.0 * 5.0 / 3.0).abs() < 1e-9);
        assert!((p6.t2 - 68.0 / 3.0).abs() < 1e-9);
        assert!(p6.delta.abs() < 1e-12);
        let trivial = PumpPath::new(68.0, 2.0 / 3.0, 12.5, 87.5).unwrap();
        let q0 = h2_params(&trivial, 0.0);
        assert!((q0.delta - 100.0).abs() < 1e-12);
        let q4 = h2_params(&trivial, 4.0);
        assert!((q4.delta - 75.0).abs() < 1e-12);
    }

    #[test]
    fn modulation_path_rejects_bad_domains() {
        assert!(PumpPath::new(0.0, 0.5, 10.0, 0.0).is_err());
        assert!(PumpPath::new(68.0, 1.0, 10.0, 0.0).is_err());
        assert!(PumpPath::new(68.0, -0.1, 10.0, 0.0).is_err());
        assert!(PumpPath::new(68.0, 0.99, 10.0, 0.0).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_bloch_hermitian_and_halfwave_periodic(
            t1 in 1.0f64..150.0,
            t2 in 1.0f64..150.0,
            delta in -150.0f64..150.0,
            frac in 0.0f64..1.0,
        ) {
            let p = LatticeParams::with_defaults(t1, t2, delta).unwrap();
            let x = frac * p.lambda;
            let h = bloch_hamiltonian(&p, x);
            prop_assert!((h[(0, 1)] - h[(1, 0)].conj()).norm() < 1e-10);
            let (lo1, up1) = band_energies(&p, x);
            let (lo2, up2) = band_energies(&p, x + p.lambda / 2.0);
            prop_assert!((lo1 - lo2).abs() < 1e-8);
            prop_assert!((up1 - up2).abs() < 1e-8);
            // Chiral symmetry of the delta = 0 model: bands are mirror images.
            let p0 = LatticeParams::with_defaults(t1, t2, 0.0).unwrap();
            let (lo0, up0) = band_energies(&p0, x);
            prop_assert!((lo0 + up0).abs() < 1e-9);
        }

        #[test]
        fn prop_chain_tilt_linear_in_velocity(
            v in 1.0f64..500.0,
            scale in 1.0f64..4.0,
        ) {
            let p = gapless();
            let c1 = build_chain(&p, &VelocityClass::new(v, &p), 21).unwrap();
            let c2 = build_chain(&p, &VelocityClass::new(scale * v, &p), 21).unwrap();
            let rel = (c2.tilt_mhz - scale * c1.tilt_mhz).abs() / c2.tilt_mhz;
            prop_assert!(rel < 1e-12);
        }

        #[test]
        fn prop_modulation_period_and_mirror(
            a in 10.0f64..150.0,
            r in 0.0f64..0.95,
            b in -150.0f64..150.0,
            u in -150.0f64..150.0,
            eta in 0.0f64..8.0,
        ) {
            let path = PumpPath::new(a, r, b, u).unwrap();
            let p = h2_params(&path, eta);
            let q = h2_params(&path, eta + 8.0);
            prop_assert!((p.t1 - q.t1).abs() < 1e-9);
            prop_assert!((p.t2 - q.t2).abs() < 1e-9);
            prop_assert!((p.delta - q.delta).abs() < 1e-9);
            // Couplings are mirror images about the mean.
            prop_assert!(((p.t1 - a) + (p.t2 - a)).abs() < 1e-9);
        }
    }
}
