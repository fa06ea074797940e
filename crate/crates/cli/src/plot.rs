//! Orthographic SVG rendering of a trajectory CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::artifact::Header;
use crate::error::CliError;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// Per-vortex tracks `tracks[i][k]` read from the `x{i},y{i},z{i}` columns.
pub fn read_tracks(path: &Path) -> Result<Vec<Vec<[f64; 3]>>, CliError> {
    let csv_err = |e: csv::Error| CliError::Csv(format!("{}: {e}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: String| headers.iter().position(|h| h == name);
    let mut cols = Vec::new();
    while let (Some(x), Some(y), Some(z)) = (
        col(format!("x{}", cols.len())),
        col(format!("y{}", cols.len())),
        col(format!("z{}", cols.len())),
    ) {
        cols.push([x, y, z]);
    }
    if cols.is_empty() {
        return Err(CliError::Csv(format!(
            "{}: no x0,y0,z0 columns",
            path.display()
        )));
    }
    let mut tracks = vec![Vec::new(); cols.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (i, c) in cols.iter().enumerate() {
            let mut p = [0.0; 3];
            for (a, &j) in c.iter().enumerate() {
                p[a] = rec.get(j).unwrap_or("").trim().parse().map_err(|_| {
                    CliError::Csv(format!(
                        "{}: row {}: bad number in column {}",
                        path.display(),
                        row + 1,
                        &headers[j]
                    ))
                })?;
            }
            tracks[i].push(p);
        }
    }
    Ok(tracks)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(a, a).sqrt();
    (n > 1e-12 && n.is_finite()).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

/// Screen basis `(right, up, view)` for the viewing direction.
fn view_basis(view: [f64; 3]) -> Result<[[f64; 3]; 3], CliError> {
    let v = normalized(view)
        .ok_or_else(|| CliError::Config("plot.view: must be a nonzero vector".into()))?;
    let world_up = if v[2].abs() < 0.99 {
        [0.0, 0.0, 1.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let up = normalized({
        let s = dot(world_up, v);
        [
            world_up[0] - s * v[0],
            world_up[1] - s * v[1],
            world_up[2] - s * v[2],
        ]
    })
    .expect("world_up is not parallel to v");
    Ok([cross(up, v), up, v])
}

/// Back-hemisphere segments are dashed and faded.
pub fn render(
    tracks: &[Vec<[f64; 3]>],
    size: u32,
    view: [f64; 3],
    header: &Header,
    input: &Path,
) -> Result<String, CliError> {
    let [right, up, v] = view_basis(view)?;
    let s = size as f64;
    let (c, r) = (s / 2.0, 0.45 * s);
    let screen = |p: [f64; 3]| (c + r * dot(p, right), c - r * dot(p, up));
    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        w,
        "<!-- {} {} config_sha256 {} command {} input {} -->",
        header.tool,
        header.version,
        header.config_sha256,
        header.command,
        input.display()
    );
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(w, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        w,
        r##"<circle cx="{c:.2}" cy="{c:.2}" r="{r:.2}" fill="#f4f4f4" stroke="#444444" stroke-width="1"/>"##
    );
    for (i, track) in tracks.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut run: Vec<(f64, f64)> = Vec::new();
        let mut front = None;
        let flush = |run: &mut Vec<(f64, f64)>, front: bool, w: &mut String| {
            if run.len() >= 2 {
                let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let style = if front {
                    ""
                } else {
                    r#" stroke-dasharray="3,3" stroke-opacity="0.35""#
                };
                let _ = writeln!(
                    w,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{style}/>"#,
                    pts.join(" ")
                );
            }
            run.clear();
        };
        for &p in track {
            let f = dot(p, v) >= 0.0;
            let q = screen(p);
            if front.is_some_and(|g| g != f) {
                // keep the polyline connected across the rim
                let last = *run.last().expect("run is non-empty when front is set");
                flush(&mut run, front.unwrap(), w);
                run.push(last);
            }
            front = Some(f);
            run.push(q);
        }
        if let Some(f) = front {
            flush(&mut run, f, w);
        }
        if let Some(&p0) = track.first() {
            let (x, y) = screen(p0);
            let opacity = if dot(p0, v) >= 0.0 { 1.0 } else { 0.35 };
            let _ = writeln!(
                w,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}" fill-opacity="{opacity}"/>"#
            );
        }
    }
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}
