//! Figure data and SVG renderings.
//!
//! `fig2_scatter.csv` holds `log(1 + estimate)` against `log(1 + truth)` of
//! the Bifurcating Model's survival estimates for every validation user.
//! `fig3_density.csv` holds Gaussian kernel densities of the Monte-Carlo
//! samples of one seeded user per game, with survival min-max rescaled per
//! game over all of that game's samples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::output::{ensure_dir, num, write_csv, FIGURES_DIR};
use super::{ExperimentOutput, ModelKind};
use crate::dataprep::features::interpolated_quantile;
use crate::error::{Error, Result};
use crate::models::EstimateDistribution;
use crate::seed;

pub const SCATTER_CSV: &str = "fig2_scatter.csv";
pub const SCATTER_SVG: &str = "fig2_scatter.svg";
pub const DENSITY_CSV: &str = "fig3_density.csv";
pub const SAMPLES_CSV: &str = "fig3_samples.csv";
pub const DENSITY_SVG: &str = "fig3_density.svg";

/// Points on each density grid.
pub const DENSITY_POINTS: usize = 401;
/// The grid extends this many bandwidths beyond the extreme samples.
const GRID_REACH: f64 = 5.0;
/// Bandwidth used when the samples have no spread.
const MIN_BANDWIDTH: f64 = 1e-3;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Silverman's rule `0.9·min(σ, IQR/1.34)·n^(-1/5)`, with fallbacks for
/// degenerate spreads.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let (_, sd) = crate::dataprep::mean_std(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = interpolated_quantile(&sorted, 0.75) - interpolated_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        MIN_BANDWIDTH
    }
}

/// Gaussian kernel density on an evenly spaced grid covering the samples.
pub fn kde(samples: &[f64], points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.is_empty() || points < 2 {
        return Err(Error::invalid("density needs samples and at least two grid points"));
    }
    let h = silverman_bandwidth(samples);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - GRID_REACH * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + GRID_REACH * h;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let xs: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let ds = xs
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok((xs, ds))
}

/// Trapezoid rule over a grid.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

fn game_name(names: &BTreeMap<usize, String>, g: usize) -> String {
    names.get(&g).cloned().unwrap_or_else(|| format!("game-{g}"))
}

struct McUser<'a> {
    user_id: &'a str,
    dist: &'a EstimateDistribution,
}

/// Writes both figures from the Experiment 3 output.
pub fn emit_figures(
    exp3: &ExperimentOutput,
    names: &BTreeMap<usize, String>,
    seed_value: u64,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let bm: Vec<_> = exp3.predictions.iter().filter(|p| p.model == ModelKind::Bm).collect();
    if bm.is_empty() || bm.iter().any(|p| p.predictions.mc.is_none()) {
        return Err(Error::invalid(
            "figures need Monte-Carlo predictions of the Bifurcating Model",
        ));
    }
    let fig_dir = dir.join(FIGURES_DIR);
    ensure_dir(&fig_dir)?;
    let mut written = Vec::new();

    let mut scatter_rows = Vec::new();
    let mut points: Vec<(usize, f64, f64)> = Vec::new();
    let mut per_game: BTreeMap<usize, Vec<McUser<'_>>> = BTreeMap::new();
    for fp in &bm {
        let mc = fp.predictions.mc.as_ref().expect("checked");
        for (i, draw) in mc.iter().enumerate().take(fp.user_ids.len()) {
            let est = draw.survival_point.max(0.0).ln_1p();
            let truth = fp.survival_truth[i].ln_1p();
            scatter_rows.push(vec![
                fp.games[i].to_string(),
                game_name(names, fp.games[i]),
                fp.user_ids[i].clone(),
                fp.fold.to_string(),
                num(est),
                num(truth),
            ]);
            points.push((fp.games[i], truth, est));
            per_game.entry(fp.games[i]).or_default().push(McUser {
                user_id: &fp.user_ids[i],
                dist: &mc[i],
            });
        }
    }
    let p = fig_dir.join(SCATTER_CSV);
    write_csv(
        &p,
        &["game_id", "game", "user_id", "fold", "log_estimate", "log_truth"],
        &scatter_rows,
    )?;
    written.push(p);
    let p = fig_dir.join(SCATTER_SVG);
    fs::write(&p, scatter_svg(&points, names)).map_err(|e| Error::io(&p, e))?;
    written.push(p);

    let mut density_rows = Vec::new();
    let mut sample_rows = Vec::new();
    let mut curves = Vec::new();
    for (&g, users) in per_game.iter_mut() {
        users.sort_by(|a, b| a.user_id.cmp(b.user_id));
        let lo = users
            .iter()
            .flat_map(|u| u.dist.survival_samples.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let hi = users
            .iter()
            .flat_map(|u| u.dist.survival_samples.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let pick = seed::rng_for(seed_value, "fig3", &[g as u64]).random_range(0..users.len());
        let user = &users[pick];
        let rescaled: Vec<f64> = user.dist.survival_samples.iter().map(|s| (s - lo) / span).collect();
        for (k, (s, c)) in user
            .dist
            .survival_samples
            .iter()
            .zip(&user.dist.churn_samples)
            .enumerate()
        {
            sample_rows.push(vec![
                g.to_string(),
                user.user_id.to_string(),
                k.to_string(),
                num(*s),
                num(rescaled[k]),
                num(*c),
            ]);
        }
        let mut pair = Vec::new();
        for (variable, samples) in [("survival", &rescaled), ("churn", &user.dist.churn_samples)] {
            let (xs, ds) = kde(samples, DENSITY_POINTS)?;
            for (x, d) in xs.iter().zip(&ds) {
                density_rows.push(vec![
                    g.to_string(),
                    game_name(names, g),
                    user.user_id.to_string(),
                    variable.to_string(),
                    num(*x),
                    num(*d),
                ]);
            }
            pair.push((xs, ds));
        }
        curves.push((g, user.user_id.to_string(), pair));
    }
    let p = fig_dir.join(SAMPLES_CSV);
    write_csv(
        &p,
        &["game_id", "user_id", "sample", "survival", "survival_rescaled", "churn"],
        &sample_rows,
    )?;
    written.push(p);
    let p = fig_dir.join(DENSITY_CSV);
    write_csv(
        &p,
        &["game_id", "game", "user_id", "variable", "x", "density"],
        &density_rows,
    )?;
    written.push(p);
    let p = fig_dir.join(DENSITY_SVG);
    fs::write(&p, density_svg(&curves, names)).map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

fn svg_header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn scatter_svg(points: &[(usize, f64, f64)], names: &BTreeMap<usize, String>) -> String {
    let (w, h, m) = (560.0, 520.0, 50.0);
    let max = points.iter().flat_map(|p| [p.1, p.2]).fold(1.0_f64, f64::max).ceil();
    let sx = |v: f64| m + v / max * (w - 2.0 * m - 100.0);
    let sy = |v: f64| h - m - v / max * (h - 2.0 * m);
    let mut s = svg_header(w, h);
    let _ = writeln!(
        s,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
        sx(0.0),
        sy(0.0),
        sx(max),
        sy(max)
    );
    for &(g, truth, est) in points {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.5\" fill=\"{}\" fill-opacity=\"0.35\"/>",
            sx(truth),
            sy(est),
            PALETTE[g % PALETTE.len()]
        );
    }
    axes(
        &mut s,
        m,
        w - m - 100.0,
        h - m,
        m,
        max,
        "log(1 + survival truth)",
        "log(1 + survival estimate)",
        &sx,
        &sy,
    );
    let games: std::collections::BTreeSet<usize> = points.iter().map(|p| p.0).collect();
    for (i, g) in games.iter().enumerate() {
        let y = m + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            w - m - 85.0,
            y,
            PALETTE[g % PALETTE.len()],
            w - m - 70.0,
            y + 9.0,
            game_name(names, *g)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[allow(clippy::too_many_arguments)]
fn axes(
    s: &mut String,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    max: f64,
    xlabel: &str,
    ylabel: &str,
    sx: &dyn Fn(f64) -> f64,
    sy: &dyn Fn(f64) -> f64,
) {
    let _ = writeln!(
        s,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    let ticks = max as usize;
    for t in 0..=ticks {
        let v = t as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{t}</text><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{t}</text>",
            sx(v),
            y0 + 14.0,
            x0 - 4.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{xlabel}</text>\
         <text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{ylabel}</text>",
        (x0 + x1) / 2.0,
        y0 + 32.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

type Curves = Vec<(usize, String, Vec<(Vec<f64>, Vec<f64>)>)>;

fn density_svg(curves: &Curves, names: &BTreeMap<usize, String>) -> String {
    let (pw, ph, cols) = (300.0, 200.0, 3usize);
    let rows = curves.len().div_ceil(cols).max(1);
    let mut s = svg_header(pw * cols as f64, ph * rows as f64 + 20.0);
    let _ = writeln!(
        s,
        "<text x=\"10\" y=\"14\"><tspan fill=\"{}\">survival (rescaled)</tspan> <tspan fill=\"{}\">churn probability</tspan></text>",
        PALETTE[0], PALETTE[1]
    );
    for (i, (g, user, pair)) in curves.iter().enumerate() {
        let ox = pw * (i % cols) as f64;
        let oy = 20.0 + ph * (i / cols) as f64;
        let (l, r, t, b) = (ox + 30.0, ox + pw - 10.0, oy + 20.0, oy + ph - 25.0);
        let (xmin, xmax) = (-0.1, 1.1);
        let dmax = pair
            .iter()
            .flat_map(|(_, d)| d.iter().copied())
            .fold(f64::MIN_POSITIVE, f64::max);
        let _ = writeln!(
            s,
            "<text x=\"{l:.1}\" y=\"{:.1}\">{} ({user})</text>\
             <line x1=\"{l:.1}\" y1=\"{b:.1}\" x2=\"{r:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>\
             <text x=\"{l:.1}\" y=\"{:.1}\">0</text><text x=\"{:.1}\" y=\"{:.1}\">1</text>",
            oy + 12.0,
            game_name(names, *g),
            b + 14.0,
            l + (1.0 - xmin) / (xmax - xmin) * (r - l) - 3.0,
            b + 14.0
        );
        for (k, (xs, ds)) in pair.iter().enumerate() {
            let pts: Vec<String> = xs
                .iter()
                .zip(ds)
                .filter(|(x, _)| (xmin..=xmax).contains(*x))
                .map(|(x, d)| {
                    format!(
                        "{:.2},{:.2}",
                        l + (x - xmin) / (xmax - xmin) * (r - l),
                        b - d / dmax * (b - t)
                    )
                })
                .collect();
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
                PALETTE[k],
                pts.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
