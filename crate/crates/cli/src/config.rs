//! Strict TOML run configuration.
//!
//! One document describes one run: a `command` plus the parameter blocks that
//! command consumes. The schema is closed — unknown keys are fatal, and a
//! block that the selected command does not read is rejected rather than
//! silently ignored, so a shipped config can never drift out of sync with
//! what was actually computed. `resolve` fills every optional field with its
//! documented default and returns a fully explicit config; the resolved form
//! is what gets echoed into the run's metadata record, and serializing it and
//! parsing the result reproduces it exactly.

use serde::{Deserialize, Serialize};
use slvst_core::model::{
    LatticeParams, PumpPath, DEFAULT_CHAIN_SITES, DEFAULT_GAMMA_A_MHZ, DEFAULT_GAMMA_B_MHZ,
    DEFAULT_LAMBDA_M,
};
use slvst_core::spectra::FrequencyGrid;
use slvst_core::tomography::{
    DEFAULT_HOLE_DEPTH, DEFAULT_HOLE_FWHM_MPS, DEFAULT_THERMAL_FWHM_MPS,
};

use crate::CliError;

// ---------------------------------------------------------------------------
// Defaults
// ---------------------------------------------------------------------------

/// Default frequency window, MHz.
pub const DEFAULT_GRID_MIN_MHZ: f64 = -500.0;
/// Default frequency window, MHz.
pub const DEFAULT_GRID_MAX_MHZ: f64 = 500.0;
/// Default number of frequency samples.
pub const DEFAULT_GRID_POINTS: usize = 2001;
/// Default Brillouin-zone sampling of a Wilson loop.
pub const DEFAULT_ZAK_POINTS: usize = 512;
/// Default plaquette grid (per axis) of the field-sum invariant.
pub const DEFAULT_PLAQUETTE_NX: usize = 48;
/// Default plaquette grid along the modulation axis.
pub const DEFAULT_PLAQUETTE_NETA: usize = 48;
/// Default output directory, relative to the working directory.
pub const DEFAULT_OUTPUT_DIR: &str = "out";

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

/// The pipeline a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Density of states of the stationary lattice.
    Dos,
    /// Wannier-Stark level table at one velocity.
    Wsl,
    /// Absorption spectrum of one velocity class.
    Absorb,
    /// Velocity-scanned difference-spectrum map.
    VstMap,
    /// Geometric band phase, by Wilson loop or by ladder slopes.
    Zak,
    /// Plaquette-sum band invariant of a modulation cycle.
    Chern,
    /// Ladder-comb winding invariant read off nine scanned maps.
    Winding,
}

impl Command {
    /// The name used in config files and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            Command::Dos => "dos",
            Command::Wsl => "wsl",
            Command::Absorb => "absorb",
            Command::VstMap => "vst-map",
            Command::Zak => "zak",
            Command::Chern => "chern",
            Command::Winding => "winding",
        }
    }
}

/// Static lattice block. `t1`, `t2`, `delta` are required; wavelength and
/// linewidths default to the rubidium D1 values used throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub t1: f64,
    pub t2: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_b: Option<f64>,
}

/// Frequency window block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub min_mhz: f64,
    pub max_mhz: f64,
    pub points: usize,
}

/// Velocity/scan block. Which fields are required depends on the command:
/// `wsl` and `absorb` take a single `v_mps`; `vst-map` (and the slope route
/// of `zak`) take the `v_min_mps`/`v_max_mps`/`steps` range; `winding` takes
/// `v_ref_mps`. Fields the command does not read must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_min_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_ref_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_sites: Option<usize>,
}

/// Thermal velocity distribution block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalBlock {
    pub fwhm_mps: f64,
}

/// Velocity-selective pump block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hole_fwhm_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
}

/// Modulation-cycle block for the topology commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathBlock {
    pub a: f64,
    pub r: f64,
    pub b: f64,
    pub u: f64,
}

/// Band selector used by the topology blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandChoice {
    Lower,
    Upper,
}

impl BandChoice {
    pub fn to_band(self) -> slvst_core::model::Band {
        match self {
            BandChoice::Lower => slvst_core::model::Band::Lower,
            BandChoice::Upper => slvst_core::model::Band::Upper,
        }
    }
}

/// How the `zak` command obtains the phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZakRoute {
    /// Discrete Wilson loop over the Brillouin zone.
    Wilson,
    /// Slope fit of ladder trajectories on a synthesized scan map.
    Slope,
}

/// Options of the `zak` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZakBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<BandChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<ZakRoute>,
}

/// Options of the `chern` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChernBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<BandChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neta: Option<usize>,
}

/// Output destination and format flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlay: Option<bool>,
}

/// One full run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pump: Option<PumpBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zak: Option<ZakBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chern: Option<ChernBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
}

// ---------------------------------------------------------------------------
// Parsing and validation
// ---------------------------------------------------------------------------

/// Parse a config document. Syntax errors carry the position reported by the
/// TOML parser; unknown keys are named in the message.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    validate(&config)?;
    Ok(config)
}

/// Serialize a config back to the canonical document form.
pub fn serialize_config(config: &RunConfig) -> Result<String, CliError> {
    toml::to_string_pretty(config).map_err(|e| CliError::Config(e.to_string()))
}

fn err(message: String) -> CliError {
    CliError::Config(message)
}

/// Block-level checks: every block the command reads is present (or has a
/// default), every block it does not read is absent, and within the scan
/// block only the fields the command uses are set.
fn validate(config: &RunConfig) -> Result<(), CliError> {
    let cmd = config.command;
    let name = cmd.name();

    let require = |present: bool, block: &str| -> Result<(), CliError> {
        if present {
            Ok(())
        } else {
            Err(err(format!("command `{name}` requires a `[{block}]` block")))
        }
    };
    let forbid = |present: bool, block: &str| -> Result<(), CliError> {
        if present {
            Err(err(format!("block `[{block}]` is not used by command `{name}`")))
        } else {
            Ok(())
        }
    };

    let uses_lattice = matches!(
        cmd,
        Command::Dos | Command::Wsl | Command::Absorb | Command::VstMap | Command::Zak
    );
    let uses_path = matches!(cmd, Command::Chern | Command::Winding);
    if uses_lattice {
        require(config.lattice.is_some(), "lattice")?;
    } else {
        forbid(config.lattice.is_some(), "lattice")?;
    }
    if uses_path {
        require(config.path.is_some(), "path")?;
    } else {
        forbid(config.path.is_some(), "path")?;
    }

    let zak_route = config
        .zak
        .as_ref()
        .and_then(|z| z.method)
        .unwrap_or(ZakRoute::Wilson);
    let uses_grid = matches!(cmd, Command::Dos | Command::Absorb | Command::VstMap | Command::Winding)
        || (cmd == Command::Zak && zak_route == ZakRoute::Slope);
    let uses_ensemble = matches!(cmd, Command::VstMap | Command::Winding)
        || (cmd == Command::Zak && zak_route == ZakRoute::Slope);
    if !uses_grid {
        forbid(config.grid.is_some(), "grid")?;
    }
    if !uses_ensemble {
        forbid(config.thermal.is_some(), "thermal")?;
        forbid(config.pump.is_some(), "pump")?;
    }

    if cmd != Command::Zak {
        forbid(config.zak.is_some(), "zak")?;
    }
    if cmd != Command::Chern {
        forbid(config.chern.is_some(), "chern")?;
    }

    // Scan block: required form per command, all other fields rejected.
    let scan_fields: &[&str] = match cmd {
        Command::Wsl | Command::Absorb => &["v_mps", "n_sites"],
        Command::VstMap => &["v_min_mps", "v_max_mps", "steps", "n_sites"],
        Command::Winding => &["v_ref_mps", "n_sites"],
        Command::Zak if zak_route == ZakRoute::Slope => {
            &["v_min_mps", "v_max_mps", "steps", "n_sites"]
        }
        _ => &[],
    };
    if scan_fields.is_empty() {
        forbid(config.scan.is_some(), "scan")?;
    } else {
        let scan = config
            .scan
            .as_ref()
            .ok_or_else(|| err(format!("command `{name}` requires a `[scan]` block")))?;
        let set: &[(&str, bool)] = &[
            ("v_mps", scan.v_mps.is_some()),
            ("v_min_mps", scan.v_min_mps.is_some()),
            ("v_max_mps", scan.v_max_mps.is_some()),
            ("steps", scan.steps.is_some()),
            ("v_ref_mps", scan.v_ref_mps.is_some()),
            ("n_sites", scan.n_sites.is_some()),
        ];
        for &(field, present) in set {
            let allowed = scan_fields.contains(&field);
            if present && !allowed {
                return Err(err(format!(
                    "scan key `{field}` is not used by command `{name}`"
                )));
            }
            if !present && allowed && field != "n_sites" {
                return Err(err(format!(
                    "command `{name}` requires scan key `{field}`"
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Resolution (defaults)
// ---------------------------------------------------------------------------

impl RunConfig {
    /// Fill every optional field and insert every defaulted block the command
    /// reads. The result re-validates and is what the metadata record echoes.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        validate(self)?;
        let mut c = self.clone();
        if let Some(l) = &mut c.lattice {
            l.lambda_m.get_or_insert(DEFAULT_LAMBDA_M);
            l.gamma_a.get_or_insert(DEFAULT_GAMMA_A_MHZ);
            l.gamma_b.get_or_insert(DEFAULT_GAMMA_B_MHZ);
        }
        let zak_route = c
            .zak
            .as_ref()
            .and_then(|z| z.method)
            .unwrap_or(ZakRoute::Wilson);
        let uses_grid = matches!(
            c.command,
            Command::Dos | Command::Absorb | Command::VstMap | Command::Winding
        ) || (c.command == Command::Zak && zak_route == ZakRoute::Slope);
        if uses_grid {
            c.grid.get_or_insert(GridBlock {
                min_mhz: DEFAULT_GRID_MIN_MHZ,
                max_mhz: DEFAULT_GRID_MAX_MHZ,
                points: DEFAULT_GRID_POINTS,
            });
        }
        let uses_ensemble = matches!(c.command, Command::VstMap | Command::Winding)
            || (c.command == Command::Zak && zak_route == ZakRoute::Slope);
        if uses_ensemble {
            c.thermal
                .get_or_insert(ThermalBlock { fwhm_mps: DEFAULT_THERMAL_FWHM_MPS });
            let pump = c.pump.get_or_insert(PumpBlock { hole_fwhm_mps: None, depth: None });
            pump.hole_fwhm_mps.get_or_insert(DEFAULT_HOLE_FWHM_MPS);
            pump.depth.get_or_insert(DEFAULT_HOLE_DEPTH);
        }
        if let Some(scan) = &mut c.scan {
            scan.n_sites.get_or_insert(DEFAULT_CHAIN_SITES);
        }
        if c.command == Command::Zak {
            let z = c.zak.get_or_insert(ZakBlock { band: None, n_points: None, method: None });
            z.band.get_or_insert(BandChoice::Lower);
            z.n_points.get_or_insert(DEFAULT_ZAK_POINTS);
            z.method.get_or_insert(ZakRoute::Wilson);
        }
        if c.command == Command::Chern {
            let b = c.chern.get_or_insert(ChernBlock { band: None, nx: None, neta: None });
            b.band.get_or_insert(BandChoice::Lower);
            b.nx.get_or_insert(DEFAULT_PLAQUETTE_NX);
            b.neta.get_or_insert(DEFAULT_PLAQUETTE_NETA);
        }
        let out = c.output.get_or_insert(OutputBlock { dir: None, svg: None, overlay: None });
        out.dir.get_or_insert_with(|| DEFAULT_OUTPUT_DIR.to_string());
        out.svg.get_or_insert(true);
        out.overlay.get_or_insert(false);
        validate(&c)?;
        Ok(c)
    }

    /// Lattice parameters of a resolved config.
    pub fn lattice_params(&self) -> Result<LatticeParams, CliError> {
        let l = self
            .lattice
            .as_ref()
            .ok_or_else(|| err("missing `[lattice]` block".into()))?;
        LatticeParams::new(
            l.t1,
            l.t2,
            l.delta,
            l.lambda_m.unwrap_or(DEFAULT_LAMBDA_M),
            l.gamma_a.unwrap_or(DEFAULT_GAMMA_A_MHZ),
            l.gamma_b.unwrap_or(DEFAULT_GAMMA_B_MHZ),
        )
        .map_err(CliError::Core)
    }

    /// Frequency grid of a resolved config.
    pub fn frequency_grid(&self) -> Result<FrequencyGrid, CliError> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| err("missing `[grid]` block".into()))?;
        FrequencyGrid::new(g.min_mhz, g.max_mhz, g.points).map_err(CliError::Core)
    }

    /// Modulation cycle of a resolved config.
    pub fn pump_path(&self) -> Result<PumpPath, CliError> {
        let p = self
            .path
            .as_ref()
            .ok_or_else(|| err("missing `[path]` block".into()))?;
        PumpPath::new(p.a, p.r, p.b, p.u).map_err(CliError::Core)
    }

    /// The ascending scan velocities of a resolved range config.
    pub fn scan_velocities(&self) -> Result<Vec<f64>, CliError> {
        let s = self
            .scan
            .as_ref()
            .ok_or_else(|| err("missing `[scan]` block".into()))?;
        let (lo, hi, n) = match (s.v_min_mps, s.v_max_mps, s.steps) {
            (Some(lo), Some(hi), Some(n)) => (lo, hi, n),
            _ => return Err(err("scan range needs `v_min_mps`, `v_max_mps`, `steps`".into())),
        };
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(err(format!("empty scan range [{lo}, {hi}]")));
        }
        if n < 2 {
            return Err(err(format!("scan needs at least 2 steps, got {n}")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        Ok((0..n).map(|i| lo + i as f64 * h).collect())
    }
}

// ===========================================================================
