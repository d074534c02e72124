//! Run orchestration: resolve the config, dispatch to the pipeline the
//! command names, write every artifact, and record the run's metadata.
//!
//! Each run leaves a `meta.toml` next to its outputs containing the fully
//! resolved config (defaults included), the crate version, and the wall
//! time, so any result file can be traced back to exactly what produced it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use slvst_core::model::{
    build_chain, h2_params, LatticeParams, VelocityClass,
};
use slvst_core::spectra::{
    absorption_spectrum, dos, ladder_spacing, wsl_levels, DEFAULT_DOS_BROADENING_MHZ,
    DEFAULT_DOS_X_SAMPLES, DEFAULT_MIN_PROMINENCE, GAP_CLASSIFY_THRESHOLD_MHZ,
};
use slvst_core::tomography::{PumpSetting, ThermalDist, VstMap};
use slvst_core::topology::{
    chern_fhs_band, split_trajectories_by_band, zak_from_slope, zak_wilson, winding_from_wsl,
    ChernDiagnostics,
};
use toml::Value;

use crate::config::{Command, RunConfig, ZakRoute};
use crate::csv::{write_levels_csv, write_map_csv, write_matrix_csv, write_spectrum_csv};
use crate::svg::{render_heatmap_svg, TheoryLine};
use crate::{io_err, CliError};

/// Command-line overrides applied on top of the config document.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory override (`--out`).
    pub out_dir: Option<PathBuf>,
    /// Force the theory overlay on (`--overlay-theory`).
    pub overlay: bool,
}

/// What a completed run produced.
#[derive(Debug)]
pub struct RunOutcome {
    /// Scalar results, echoed to stdout and into the metadata record.
    pub summary: toml::Table,
    /// Every file written, metadata record last.
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    version: &'a str,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct MetaRecord<'a> {
    run: RunInfo<'a>,
    summary: &'a toml::Table,
    config: &'a RunConfig,
}

/// Execute a parsed config. The config is resolved (defaults filled) first;
/// the resolved form is what the metadata record echoes.
pub fn run(config: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let resolved = config.resolve()?;
    let out_block = resolved.output.clone().expect("resolved config has output");
    let dir = opts
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(out_block.dir.as_deref().unwrap_or("out")));
    std::fs::create_dir_all(&dir).map_err(io_err(&*dir))?;
    let overlay = opts.overlay || out_block.overlay.unwrap_or(false);
    let svg = out_block.svg.unwrap_or(true);

    let mut summary = toml::Table::new();
    let mut files = Vec::new();
    match resolved.command {
        Command::Dos => run_dos(&resolved, &dir, &mut summary, &mut files)?,
        Command::Wsl => run_wsl(&resolved, &dir, &mut summary, &mut files)?,
        Command::Absorb => run_absorb(&resolved, &dir, &mut summary, &mut files)?,
        Command::VstMap => {
            let map = synthesize_map(&resolved)?;
            describe_map(&map, &mut summary);
            write_map_outputs(&map, &dir, svg, overlay, &mut files)?;
        }
        Command::Zak => run_zak(&resolved, &dir, svg, overlay, &mut summary, &mut files)?,
        Command::Chern => run_chern(&resolved, &mut summary)?,
        Command::Winding => run_winding(&resolved, &dir, &mut summary, &mut files)?,
    }

    let meta = MetaRecord {
        run: RunInfo {
            command: resolved.command.name(),
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        summary: &summary,
        config: &resolved,
    };
    let meta_path = dir.join("meta.toml");
    let text = toml::to_string_pretty(&meta).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(&meta_path, text).map_err(io_err(&*meta_path))?;
    files.push(meta_path);

    Ok(RunOutcome { summary, files })
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

fn run_dos(
    c: &RunConfig,
    dir: &Path,
    summary: &mut toml::Table,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let params = c.lattice_params()?;
    let grid = c.frequency_grid()?;
    let spec = dos(&params, &grid, DEFAULT_DOS_X_SAMPLES, DEFAULT_DOS_BROADENING_MHZ)?;
    let path = dir.join("dos.csv");
    write_spectrum_csv(&spec, &path)?;
    files.push(path);
    summary.insert("points".into(), Value::Integer(grid.n as i64));
    summary.insert("gap_mhz".into(), Value::Float(params.min_gap_mhz()));
    summary.insert("band_edge_mhz".into(), Value::Float(params.band_edge_mhz()));
    Ok(())
}

fn single_velocity(c: &RunConfig) -> Result<f64, CliError> {
    c.scan
        .as_ref()
        .and_then(|s| s.v_mps)
        .ok_or_else(|| CliError::Config("missing scan key `v_mps`".into()))
}

fn chain_sites(c: &RunConfig) -> usize {
    c.scan
        .as_ref()
        .and_then(|s| s.n_sites)
        .unwrap_or(slvst_core::model::DEFAULT_CHAIN_SITES)
}

fn run_wsl(
    c: &RunConfig,
    dir: &Path,
    summary: &mut toml::Table,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let params = c.lattice_params()?;
    let v = single_velocity(c)?;
    let class = VelocityClass::new(v, &params);
    let chain = build_chain(&params, &class, chain_sites(c))?;
    let levels = wsl_levels(&chain)?;
    let path = dir.join("levels.csv");
    write_levels_csv(&levels, &path)?;
    files.push(path);
    summary.insert("n_levels".into(), Value::Integer(levels.energies.len() as i64));
    if let Some(s) = levels.spacing_estimate {
        summary.insert("spacing_mhz".into(), Value::Float(s));
    }
    summary.insert(
        "bloch_single_mhz".into(),
        Value::Float(class.bloch_freq_single_mhz()),
    );
    summary.insert(
        "bloch_two_band_mhz".into(),
        Value::Float(class.bloch_freq_two_band_mhz()),
    );
    Ok(())
}

fn run_absorb(
    c: &RunConfig,
    dir: &Path,
    summary: &mut toml::Table,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let params = c.lattice_params()?;
    let grid = c.frequency_grid()?;
    let v = single_velocity(c)?;
    let chain = build_chain(&params, &VelocityClass::new(v, &params), chain_sites(c))?;
    let spec = absorption_spectrum(&chain, &grid)?;
    let path = dir.join("spectrum.csv");
    write_spectrum_csv(&spec, &path)?;
    files.push(path);
    summary.insert("points".into(), Value::Integer(grid.n as i64));
    if let Ok(est) = ladder_spacing(&spec, DEFAULT_MIN_PROMINENCE) {
        summary.insert("spacing_mhz".into(), Value::Float(est.spacing_mhz));
        summary.insert("n_peaks".into(), Value::Integer(est.peaks.len() as i64));
    }
    Ok(())
}

/// The shared map-synthesis path of `vst-map` and the slope route of `zak`.
fn synthesize_map(c: &RunConfig) -> Result<VstMap, CliError> {
    let params = c.lattice_params()?;
    let grid = c.frequency_grid()?;
    let vs = c.scan_velocities()?;
    let thermal = c
        .thermal
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `[thermal]` block".into()))?;
    let pump_block = c
        .pump
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `[pump]` block".into()))?;
    let dist = ThermalDist::from_fwhm(thermal.fwhm_mps)?;
    let pump = PumpSetting::from_center_velocity(
        vs[0],
        pump_block
            .hole_fwhm_mps
            .unwrap_or(slvst_core::tomography::DEFAULT_HOLE_FWHM_MPS),
        pump_block
            .depth
            .unwrap_or(slvst_core::tomography::DEFAULT_HOLE_DEPTH),
        params.lambda,
    )?;
    Ok(slvst_core::tomography::vst_map_with_sites(
        &params,
        &dist,
        &pump,
        &vs,
        &grid,
        chain_sites(c),
    )?)
}

fn describe_map(map: &VstMap, summary: &mut toml::Table) {
    let max = map.data.iter().flatten().fold(0.0_f64, |m, &v| m.max(v));
    summary.insert("rows".into(), Value::Integer(map.v_axis.len() as i64));
    summary.insert("cols".into(), Value::Integer(map.f_axis.len() as i64));
    summary.insert("n_ladders".into(), Value::Integer(map.ladders.len() as i64));
    summary.insert("max_value".into(), Value::Float(max));
}

fn write_map_outputs(
    map: &VstMap,
    dir: &Path,
    svg: bool,
    overlay: bool,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let matrix = dir.join("map.csv");
    let traj = dir.join("trajectories.csv");
    write_map_csv(map, &matrix, &traj)?;
    files.push(matrix);
    files.push(traj);
    if svg {
        let lines = if overlay {
            theory_overlay(&map.meta.params, &map.v_axis, &map.f_axis)?
        } else {
            Vec::new()
        };
        let path = dir.join("map.svg");
        render_heatmap_svg(map, &lines, &path)?;
        files.push(path);
    }
    Ok(())
}

/// Predicted ladder lines `E_n(v) = E_band + (n + θ/2π) · 2v/λ` for a gapped
/// lattice (one set per band, each anchored at the band's mean energy), or
/// the merged comb `E_n(v) = n · v/λ` when the gap is closed.
fn theory_overlay(
    params: &LatticeParams,
    v_axis: &[f64],
    f_axis: &[f64],
) -> Result<Vec<TheoryLine>, CliError> {
    let n_samples = 2048;
    let period = params.lambda / 2.0;
    let (mut mean_lo, mut mean_up) = (0.0, 0.0);
    for j in 0..n_samples {
        let x = period * (j as f64 + 0.5) / n_samples as f64;
        let (lo, up) = slvst_core::model::band_energies(params, x);
        mean_lo += lo;
        mean_up += up;
    }
    mean_lo /= n_samples as f64;
    mean_up /= n_samples as f64;

    let f_abs = f_axis.iter().fold(0.0_f64, |m, &f| m.max(f.abs()));
    let v_hi = v_axis.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let mut lines = Vec::new();
    if params.min_gap_mhz() > GAP_CLASSIFY_THRESHOLD_MHZ {
        let per_rung = 2.0 / (params.lambda * 1e6);
        // Enough rungs that the comb fills the window over the outer
        // three-quarters of the scan; inner lines are clipped anyway.
        let s_ref = per_rung * (v_hi / 4.0).max(1e-9);
        for (band, anchor) in [
            (slvst_core::model::Band::Lower, mean_lo),
            (slvst_core::model::Band::Upper, mean_up),
        ] {
            let theta = zak_wilson(params, band, 2048)?.theta;
            let n_max = (((f_abs + anchor.abs()) / s_ref).ceil() as i64 + 1).min(60);
            for n in -n_max..=n_max {
                lines.push(TheoryLine {
                    offset_mhz: anchor,
                    slope_mhz_per_mps: (n as f64 + theta / std::f64::consts::TAU) * per_rung,
                });
            }
        }
    } else {
        let per_rung = 1.0 / (params.lambda * 1e6);
        let anchor = (mean_lo + mean_up) / 2.0;
        let s_ref = per_rung * (v_hi / 4.0).max(1e-9);
        let n_max = (((f_abs + anchor.abs()) / s_ref).ceil() as i64 + 1).min(60);
        for n in -n_max..=n_max {
            lines.push(TheoryLine {
                offset_mhz: anchor,
                slope_mhz_per_mps: n as f64 * per_rung,
            });
        }
    }
    Ok(lines)
}

fn run_zak(
    c: &RunConfig,
    dir: &Path,
    svg: bool,
    overlay: bool,
    summary: &mut toml::Table,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let block = c.zak.clone().unwrap_or(crate::config::ZakBlock {
        band: None,
        n_points: None,
        method: None,
    });
    let band = block.band.unwrap_or(crate::config::BandChoice::Lower);
    let route = block.method.unwrap_or(ZakRoute::Wilson);
    let z = match route {
        ZakRoute::Wilson => {
            let params = c.lattice_params()?;
            let n = block.n_points.unwrap_or(crate::config::DEFAULT_ZAK_POINTS);
            zak_wilson(&params, band.to_band(), n)?
        }
        ZakRoute::Slope => {
            let params = c.lattice_params()?;
            let map = synthesize_map(c)?;
            write_map_outputs(&map, dir, svg, overlay, files)?;
            let (lower, upper) = split_trajectories_by_band(&map.ladders);
            summary.insert("n_lower_trajectories".into(), Value::Integer(lower.len() as i64));
            summary.insert("n_upper_trajectories".into(), Value::Integer(upper.len() as i64));
            let set = match band {
                crate::config::BandChoice::Lower => lower,
                crate::config::BandChoice::Upper => upper,
            };
            zak_from_slope(&set, params.lambda)?
        }
    };
    summary.insert("theta_rad".into(), Value::Float(z.theta));
    summary.insert("uncertainty_rad".into(), Value::Float(z.uncertainty));
    summary.insert("band".into(), Value::String(format!("{:?}", z.band).to_lowercase()));
    summary.insert(
        "method".into(),
        Value::String(match z.method {
            slvst_core::topology::ZakMethod::Wilson => "wilson".into(),
            slvst_core::topology::ZakMethod::Slope => "slope".into(),
        }),
    );
    Ok(())
}

fn run_chern(c: &RunConfig, summary: &mut toml::Table) -> Result<(), CliError> {
    let path = c.pump_path()?;
    let block = c.chern.clone().unwrap_or(crate::config::ChernBlock {
        band: None,
        nx: None,
        neta: None,
    });
    let band = block.band.unwrap_or(crate::config::BandChoice::Lower);
    let nx = block.nx.unwrap_or(crate::config::DEFAULT_PLAQUETTE_NX);
    let neta = block.neta.unwrap_or(crate::config::DEFAULT_PLAQUETTE_NETA);
    let r = chern_fhs_band(&path, band.to_band(), nx, neta)?;
    summary.insert("c".into(), Value::Integer(r.c));
    summary.insert("method".into(), Value::String("fhs".into()));
    summary.insert(
        "band".into(),
        Value::String(match band {
            crate::config::BandChoice::Lower => "lower".into(),
            crate::config::BandChoice::Upper => "upper".into(),
        }),
    );
    if let ChernDiagnostics::PlaquetteField {
        max_abs_field_rad,
        integer_residual,
    } = r.diagnostics
    {
        summary.insert("max_abs_field_rad".into(), Value::Float(max_abs_field_rad));
        summary.insert("integer_residual".into(), Value::Float(integer_residual));
    }
    Ok(())
}

fn run_winding(
    c: &RunConfig,
    dir: &Path,
    summary: &mut toml::Table,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let path = c.pump_path()?;
    let grid = c.frequency_grid()?;
    let v_ref = c
        .scan
        .as_ref()
        .and_then(|s| s.v_ref_mps)
        .ok_or_else(|| CliError::Config("missing scan key `v_ref_mps`".into()))?;
    let thermal = c
        .thermal
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `[thermal]` block".into()))?;
    let pump_block = c
        .pump
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `[pump]` block".into()))?;
    let dist = ThermalDist::from_fwhm(thermal.fwhm_mps)?;
    let n_sites = chain_sites(c);

    let mut maps = Vec::with_capacity(9);
    for k in 0..9 {
        let pk = h2_params(&path, k as f64);
        let pump = PumpSetting::from_center_velocity(
            v_ref,
            pump_block
                .hole_fwhm_mps
                .unwrap_or(slvst_core::tomography::DEFAULT_HOLE_FWHM_MPS),
            pump_block
                .depth
                .unwrap_or(slvst_core::tomography::DEFAULT_HOLE_DEPTH),
            pk.lambda,
        )?;
        maps.push(slvst_core::tomography::vst_map_with_sites(
            &pk,
            &dist,
            &pump,
            &[v_ref],
            &grid,
            n_sites,
        )?);
    }
    let r = winding_from_wsl(&maps, v_ref)?;

    let eta_axis: Vec<f64> = (0..9).map(|k| k as f64).collect();
    let rows: Vec<Vec<f64>> = maps.iter().map(|m| m.data[0].clone()).collect();
    let combs = dir.join("combs.csv");
    write_matrix_csv(&eta_axis, &maps[0].f_axis, &rows, &combs)?;
    files.push(combs);

    summary.insert("c".into(), Value::Integer(r.c));
    summary.insert("method".into(), Value::String("winding".into()));
    if let ChernDiagnostics::LadderDisplacement {
        total_mhz,
        spacing_mhz,
    } = r.diagnostics
    {
        summary.insert("total_mhz".into(), Value::Float(total_mhz));
        summary.insert("spacing_mhz".into(), Value::Float(spacing_mhz));
    }
    Ok(())
}

// ===========================================================================
