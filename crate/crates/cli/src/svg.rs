//! Static SVG heatmap of a scanned map.
//!
//! One rectangle per map cell, velocity across, detuning up, with a linear
//! color scale normalized to the map maximum. Every coordinate is written
//! with fixed precision and the palette is a fixed lookup, so renders of the
//! same map are byte-identical — the file can be diffed, not just viewed.
//! Optional dashed overlay lines mark theoretically predicted ladder
//! positions `E(v) = offset + slope·v`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use slvst_core::tomography::VstMap;

use crate::{io_err, CliError};

/// One dashed theory line in data coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryLine {
    /// Energy at zero velocity, MHz.
    pub offset_mhz: f64,
    /// Energy change per scan velocity, MHz/(m/s).
    pub slope_mhz_per_mps: f64,
}

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 620.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 25.0;
const MARGIN_T: f64 = 25.0;
const MARGIN_B: f64 = 60.0;

/// Five-stop perceptual ramp, dark to bright.
const STOPS: [(f64, [f64; 3]); 5] = [
    (0.00, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.50, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.00, [253.0, 231.0, 37.0]),
];

/// Linear interpolation through the palette stops.
fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mut rgb = STOPS[STOPS.len() - 1].1;
    for w in STOPS.windows(2) {
        let ((t0, c0), (t1, c1)) = (w[0], w[1]);
        if t <= t1 {
            let u = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            rgb = [
                c0[0] + u * (c1[0] - c0[0]),
                c0[1] + u * (c1[1] - c0[1]),
                c0[2] + u * (c1[2] - c0[2]),
            ];
            break;
        }
    }
    format!(
        "#{:02x}{:02x}{:02x}",
        rgb[0].round() as u8,
        rgb[1].round() as u8,
        rgb[2].round() as u8
    )
}

/// Evenly spread tick indices over an axis of length `n`.
fn tick_indices(n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..5).map(|k| k * (n - 1) / 4).collect();
    idx.dedup();
    idx
}

/// Render `map` to `path`. Overlay lines are clipped to the plot area and
/// drawn dashed on top of the data.
pub fn render_heatmap_svg(
    map: &VstMap,
    overlay: &[TheoryLine],
    path: &Path,
) -> Result<(), CliError> {
    if map.v_axis.is_empty() || map.f_axis.is_empty() {
        return Err(CliError::Config("cannot render an empty map".into()));
    }
    let n_v = map.v_axis.len();
    let n_f = map.f_axis.len();
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let cw = pw / n_v as f64;
    let ch = ph / n_f as f64;
    let max = map
        .data
        .iter()
        .flatten()
        .fold(0.0_f64, |m, &v| m.max(v));

    let mut s = String::with_capacity(64 * n_v * n_f);
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH:.0}\" height=\"{HEIGHT:.0}\" viewBox=\"0 0 {WIDTH:.0} {HEIGHT:.0}\">"
    );
    let _ = writeln!(
        s,
        "<clipPath id=\"plot\"><rect x=\"{MARGIN_L:.2}\" y=\"{MARGIN_T:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\"/></clipPath>"
    );

    // Data cells, column-major in velocity, highest frequency on top.
    for (i, _) in map.v_axis.iter().enumerate() {
        let x = MARGIN_L + i as f64 * cw;
        for (j, _) in map.f_axis.iter().enumerate() {
            let y = MARGIN_T + (n_f - 1 - j) as f64 * ch;
            let t = if max > 0.0 { map.data[i][j] / max } else { 0.0 };
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                cw + 0.05,
                ch + 0.05,
                color(t)
            );
        }
    }

    // Overlay lines in data coordinates, mapped through the cell centres.
    if !overlay.is_empty() && n_v > 1 && n_f > 1 {
        let v0 = map.v_axis[0];
        let v1 = map.v_axis[n_v - 1];
        let f0 = map.f_axis[0];
        let f1 = map.f_axis[n_f - 1];
        let y_of = |e: f64| {
            let jf = (e - f0) / (f1 - f0) * (n_f - 1) as f64;
            MARGIN_T + (n_f as f64 - 0.5 - jf) * ch
        };
        s.push_str("<g clip-path=\"url(#plot)\" stroke=\"#ffffff\" stroke-opacity=\"0.85\" stroke-width=\"1.2\" stroke-dasharray=\"6 4\">\n");
        for line in overlay {
            let x_a = MARGIN_L + 0.5 * cw;
            let x_b = MARGIN_L + (n_v as f64 - 0.5) * cw;
            let y_a = y_of(line.offset_mhz + line.slope_mhz_per_mps * v0);
            let y_b = y_of(line.offset_mhz + line.slope_mhz_per_mps * v1);
            let _ = writeln!(
                s,
                "<line x1=\"{x_a:.2}\" y1=\"{y_a:.2}\" x2=\"{x_b:.2}\" y2=\"{y_b:.2}\"/>"
            );
        }
        s.push_str("</g>\n");
    }

    // Frame and ticks.
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN_L:.2}\" y=\"{MARGIN_T:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>"
    );
    s.push_str("<g font-family=\"sans-serif\" font-size=\"13\" fill=\"#000000\">\n");
    for i in tick_indices(n_v) {
        let x = MARGIN_L + (i as f64 + 0.5) * cw;
        let y = HEIGHT - MARGIN_B;
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#000000\" stroke-width=\"1\"/>",
            y + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{:.0}</text>",
            y + 20.0,
            map.v_axis[i]
        );
    }
    for j in tick_indices(n_f) {
        let y = MARGIN_T + (n_f as f64 - 0.5 - j as f64) * ch;
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{MARGIN_L:.2}\" y2=\"{y:.2}\" stroke=\"#000000\" stroke-width=\"1\"/>",
            MARGIN_L - 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{:.0}</text>",
            MARGIN_L - 9.0,
            y + 4.0,
            map.f_axis[j]
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">velocity (m/s)</text>",
        MARGIN_L + pw / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        s,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\">detuning (MHz)</text>",
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    );
    s.push_str("</g>\n</svg>\n");

    fs::write(path, s).map_err(io_err(path))
}

// ===========================================================================
