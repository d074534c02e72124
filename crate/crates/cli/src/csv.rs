//! Deterministic CSV serialization.
//!
//! Values are written with the shortest decimal representation that parses
//! back to the identical float, so files are byte-identical across runs of
//! the same config and safe to diff. Every file ends in a newline.

use std::fs;
use std::path::Path;

use slvst_core::spectra::{BandLabel, LadderPeaks, Spectrum};
use slvst_core::tomography::VstMap;

use crate::{io_err, CliError};

/// Shortest round-trip decimal form of a value.
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// One value per grid point: `freq_mhz,value`.
pub fn write_spectrum_csv(spec: &Spectrum, path: &Path) -> Result<(), CliError> {
    let mut out = String::with_capacity(24 * (spec.freq.len() + 1));
    out.push_str("freq_mhz,value\n");
    for (f, v) in spec.freq.iter().zip(&spec.value) {
        out.push_str(&fmt(*f));
        out.push(',');
        out.push_str(&fmt(*v));
        out.push('\n');
    }
    write(path, &out)
}

/// Level table of a tilted chain: `energy_mhz,weight,band`.
pub fn write_levels_csv(levels: &LadderPeaks, path: &Path) -> Result<(), CliError> {
    let mut out = String::with_capacity(32 * (levels.energies.len() + 1));
    out.push_str("energy_mhz,weight,band\n");
    for ((e, w), b) in levels.energies.iter().zip(&levels.weights).zip(&levels.band) {
        let band = match b {
            BandLabel::Single => "single",
            BandLabel::Lower => "lower",
            BandLabel::Upper => "upper",
        };
        out.push_str(&fmt(*e));
        out.push(',');
        out.push_str(&fmt(*w));
        out.push(',');
        out.push_str(band);
        out.push('\n');
    }
    write(path, &out)
}

/// A labelled matrix: the first row is the column axis (behind an empty
/// corner cell), the first column the row axis.
pub fn write_matrix_csv(
    row_axis: &[f64],
    col_axis: &[f64],
    data: &[Vec<f64>],
    path: &Path,
) -> Result<(), CliError> {
    let mut out = String::with_capacity(16 * (col_axis.len() + 1) * (row_axis.len() + 1));
    for c in col_axis {
        out.push(',');
        out.push_str(&fmt(*c));
    }
    out.push('\n');
    for (r, row) in row_axis.iter().zip(data) {
        out.push_str(&fmt(*r));
        for v in row {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push('\n');
    }
    write(path, &out)
}

/// The two files of a scanned map: the data matrix (frequency axis across,
/// velocity axis down) and the tracked ridges as `ladder_id,v_mps,energy_mhz`.
pub fn write_map_csv(map: &VstMap, matrix_path: &Path, traj_path: &Path) -> Result<(), CliError> {
    write_matrix_csv(&map.v_axis, &map.f_axis, &map.data, matrix_path)?;
    let mut out = String::with_capacity(32 * (map.ladders.len() * 8 + 1));
    out.push_str("ladder_id,v_mps,energy_mhz\n");
    for t in &map.ladders {
        for (v, e) in &t.points {
            out.push_str(&t.id.to_string());
            out.push(',');
            out.push_str(&fmt(*v));
            out.push(',');
            out.push_str(&fmt(*e));
            out.push('\n');
        }
    }
    write(traj_path, &out)
}

// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use slvst_core::model::LatticeParams;
    use slvst_core::spectra::{FrequencyGrid, SpectrumMeta};
    use slvst_core::tomography::{LadderTrajectory, MapMeta};

    fn spectrum3() -> Spectrum {
        let grid = FrequencyGrid::new(-1.0, 1.0, 3).unwrap();
        Spectrum {
            freq: grid.values(),
            value: vec![0.25, 1.0 / 3.0, 0.125],
            meta: SpectrumMeta {
                params: None,
                velocity_mps: None,
                grid,
            },
        }
    }

    #[test]
    fn spectrum_file_is_header_plus_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_spectrum_csv(&spectrum3(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "freq_mhz,value\n-1,0.25\n0,0.3333333333333333\n1,0.125\n"
        );
    }

    #[test]
    fn rewrites_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_spectrum_csv(&spectrum3(), &a).unwrap();
        write_spectrum_csv(&spectrum3(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn values_round_trip_through_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let spec = spectrum3();
        write_spectrum_csv(&spec, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for (line, (f, v)) in text.lines().skip(1).zip(spec.freq.iter().zip(&spec.value)) {
            let (a, b) = line.split_once(',').unwrap();
            assert_eq!(a.parse::<f64>().unwrap(), *f);
            assert_eq!(b.parse::<f64>().unwrap(), *v);
        }
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let e = write_spectrum_csv(&spectrum3(), Path::new("/nonexistent-dir/s.csv")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent-dir/s.csv"), "{e}");
    }

    fn map2x3() -> VstMap {
        VstMap {
            v_axis: vec![100.0, 200.0],
            f_axis: vec![-5.0, 0.0, 5.0],
            data: vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            ladders: vec![LadderTrajectory {
                id: 0,
                points: vec![(100.0, -2.5), (200.0, -5.0)],
            }],
            meta: MapMeta {
                lambda_m: 794.98e-9,
                params: LatticeParams::with_defaults(73.0, 73.0, 0.0).unwrap(),
                sigma_v: 150.0,
                hole_fwhm_mps: 10.0,
                depth: 0.8,
                n_sites: 61,
            },
        }
    }

    #[test]
    fn matrix_file_prepends_both_axes() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("map.csv");
        let t = dir.path().join("traj.csv");
        write_map_csv(&map2x3(), &m, &t).unwrap();
        let text = std::fs::read_to_string(&m).unwrap();
        // A 2x3 map becomes 3 lines of 4 columns.
        assert_eq!(text, ",-5,0,5\n100,1,2,3\n200,4,5,6\n");
        assert!(text.lines().all(|l| l.split(',').count() == 4));
    }

    #[test]
    fn trajectory_file_lists_points_under_header() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("map.csv");
        let t = dir.path().join("traj.csv");
        write_map_csv(&map2x3(), &m, &t).unwrap();
        let text = std::fs::read_to_string(&t).unwrap();
        assert_eq!(text, "ladder_id,v_mps,energy_mhz\n0,100,-2.5\n0,200,-5\n");
    }

    #[test]
    fn empty_trajectories_leave_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut map = map2x3();
        map.ladders.clear();
        let m = dir.path().join("map.csv");
        let t = dir.path().join("traj.csv");
        write_map_csv(&map, &m, &t).unwrap();
        assert_eq!(
            std::fs::read_to_string(&t).unwrap(),
            "ladder_id,v_mps,energy_mhz\n"
        );
    }
}
