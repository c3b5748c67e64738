//! Static SVG figures from a finished run directory.

use std::path::{Path, PathBuf};

use beamtrack_core::tracker::Snapshot;
use beamtrack_core::SpeedClass;
use plotters::prelude::*;

use crate::error::{CliError, Result};
use crate::records::{read_episode_csv, speed_name};
use crate::run::{episode_stem, EpisodeStatus, Manifest};

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Plot(e.to_string())
}

/// Seed-averaged per-slot curves for one (variant, speed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurves {
    pub variant: String,
    pub speed: SpeedClass,
    pub seeds: usize,
    /// Trailing-window mean of the hit rate.
    pub accuracy: Vec<f64>,
    /// Per-slot mean overhead.
    pub overhead: Vec<f64>,
    /// Trailing-window mean of the RSRP gap, dB.
    pub rsrp_error_db: Vec<f64>,
}

/// Mean of `xs[t + 1 - w ..= t]`, shortened at the start.
pub fn trailing_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for t in 0..xs.len() {
        sum += xs[t];
        if t >= window {
            sum -= xs[t - window];
        }
        out.push(sum / (t + 1).min(window) as f64);
    }
    out
}

pub fn convergence_curves(run_dir: &Path) -> Result<Vec<ConvergenceCurves>> {
    let manifest = Manifest::load(run_dir)?;
    let horizon = manifest.horizon as usize;
    let mut curves = Vec::new();
    for variant in &manifest.variants {
        for &speed in &manifest.speeds {
            let mut hit = vec![0.0; horizon];
            let mut overhead = vec![0.0; horizon];
            let mut gap = vec![0.0; horizon];
            let mut seeds = 0;
            for e in manifest.episodes.iter().filter(|e| {
                e.variant == variant.name && e.speed == speed && e.status == EpisodeStatus::Ok
            }) {
                let Some(file) = &e.file else { continue };
                let rows = read_episode_csv(&run_dir.join(file))?;
                if rows.len() != horizon {
                    return Err(CliError::Artifact(format!(
                        "{file}: {} slots, expected {horizon}",
                        rows.len()
                    )));
                }
                for (t, r) in rows.iter().enumerate() {
                    hit[t] += f64::from(u8::from(r.chosen == r.true_best));
                    overhead[t] += r.beamset_size as f64 / manifest.num_beams as f64;
                    gap[t] += r.best_rsrp_db - r.chosen_rsrp_db;
                }
                seeds += 1;
            }
            if seeds == 0 {
                continue;
            }
            let avg = |v: Vec<f64>| v.into_iter().map(|x| x / seeds as f64).collect::<Vec<_>>();
            curves.push(ConvergenceCurves {
                variant: variant.name.clone(),
                speed,
                seeds,
                accuracy: trailing_mean(&avg(hit), manifest.rolling_window),
                overhead: avg(overhead),
                rsrp_error_db: trailing_mean(&avg(gap), manifest.rolling_window),
            });
        }
    }
    Ok(curves)
}

fn speed_color(speed: SpeedClass) -> RGBColor {
    match speed {
        SpeedClass::Slow => RGBColor(31, 119, 180),
        SpeedClass::Medium => RGBColor(255, 127, 14),
        SpeedClass::Fast => RGBColor(214, 39, 40),
    }
}

/// One three-panel figure per variant (`plots/convergence_<variant>.svg`).
pub fn plot_convergence(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let curves = convergence_curves(run_dir)?;
    if curves.is_empty() {
        return Err(CliError::Artifact(format!(
            "{}: no completed episodes",
            run_dir.display()
        )));
    }
    let out = run_dir.join("plots");
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut variants: Vec<&str> = Vec::new();
    for c in &curves {
        if !variants.contains(&c.variant.as_str()) {
            variants.push(&c.variant);
        }
    }
    let mut written = Vec::new();
    for variant in variants {
        let cells: Vec<&ConvergenceCurves> =
            curves.iter().filter(|c| c.variant == variant).collect();
        let path = out.join(format!("convergence_{variant}.svg"));
        draw_convergence(&path, variant, &cells)?;
        written.push(path);
    }
    Ok(written)
}

fn draw_convergence(path: &Path, variant: &str, cells: &[&ConvergenceCurves]) -> Result<()> {
    {
        let root = SVGBackend::new(path, (900, 960)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let panels = root.split_evenly((3, 1));
        type Pick = fn(&ConvergenceCurves) -> &[f64];
        let specs: [(&str, Pick); 3] = [
            ("accuracy (rolling)", |c| &c.accuracy),
            ("overhead", |c| &c.overhead),
            ("RSRP error, dB (rolling)", |c| &c.rsrp_error_db),
        ];
        for (panel, (label, pick)) in panels.iter().zip(specs) {
            let horizon = cells
                .iter()
                .map(|c| pick(c).len())
                .max()
                .unwrap_or(1)
                .max(2);
            let hi = cells
                .iter()
                .flat_map(|c| pick(c).iter().copied())
                .fold(0.0f64, f64::max);
            let y_hi = if hi > 0.0 { hi * 1.05 } else { 1.0 };
            let mut chart = ChartBuilder::on(panel)
                .caption(format!("{variant}: {label}"), ("sans-serif", 18))
                .margin(10)
                .x_label_area_size(35)
                .y_label_area_size(55)
                .build_cartesian_2d(0f64..(horizon - 1) as f64, 0f64..y_hi)
                .map_err(plot_err)?;
            chart
                .configure_mesh()
                .x_desc("slot")
                .y_desc(label)
                .draw()
                .map_err(plot_err)?;
            for c in cells {
                let color = speed_color(c.speed);
                chart
                    .draw_series(LineSeries::new(
                        pick(c).iter().enumerate().map(|(t, &y)| (t as f64, y)),
                        color.stroke_width(2),
                    ))
                    .map_err(plot_err)?
                    .label(format!("{} ({} seeds)", speed_name(c.speed), c.seeds))
                    .legend(move |(x, y)| {
                        PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
                    });
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    Ok(())
}

/// Which logged episodes to draw; `None` fields match everything.
#[derive(Debug, Clone, Default)]
pub struct LandscapeFilter {
    pub variant: Option<String>,
    pub speed: Option<SpeedClass>,
    pub seed: Option<u64>,
}

pub fn load_snapshots(path: &Path) -> Result<Vec<Snapshot>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Three heatmaps per (episode, slot): single-beam EI with the sampled beams
/// circled, posterior mean with the predicted best crossed, true RSRP with
/// the true best crossed. Every requested slot must be logged in at least
/// one selected episode.
pub fn plot_landscapes(
    run_dir: &Path,
    slots: &[u64],
    filter: &LandscapeFilter,
) -> Result<Vec<PathBuf>> {
    let manifest = Manifest::load(run_dir)?;
    let out = run_dir.join("plots");
    let mut logged: Vec<(String, Vec<Snapshot>)> = Vec::new();
    for e in &manifest.episodes {
        let selected = filter.variant.as_ref().is_none_or(|v| *v == e.variant)
            && filter.speed.is_none_or(|s| s == e.speed)
            && filter.seed.is_none_or(|s| s == e.seed);
        if let (true, Some(file)) = (selected, &e.snapshots) {
            logged.push((
                episode_stem(&e.variant, e.speed, e.seed),
                load_snapshots(&run_dir.join(file))?,
            ));
        }
    }
    if logged.is_empty() {
        return Err(CliError::Artifact(
            "no selected episode logged snapshots (set bayes_opt.snapshot_slots in the config)"
                .into(),
        ));
    }
    for &slot in slots {
        if !logged
            .iter()
            .any(|(_, snaps)| snaps.iter().any(|s| s.slot == slot))
        {
            let mut available: Vec<u64> = logged
                .iter()
                .flat_map(|(_, s)| s.iter().map(|s| s.slot))
                .collect();
            available.sort_unstable();
            available.dedup();
            return Err(CliError::Artifact(format!(
                "slot {slot} was not logged; logged slots: {available:?}"
            )));
        }
    }
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let (h, v) = (manifest.n_azimuth, manifest.n_elevation);
    let mut written = Vec::new();
    for (stem, snaps) in &logged {
        for snap in snaps.iter().filter(|s| slots.contains(&s.slot)) {
            let path = out.join(format!("landscape_{stem}_slot{}.svg", snap.slot));
            draw_landscape(&path, snap, h, v)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Linear blend through dark blue, teal and yellow.
fn colormap(x: f64) -> RGBColor {
    let stops = [
        (68.0, 1.0, 84.0),
        (33.0, 145.0, 140.0),
        (253.0, 231.0, 37.0),
    ];
    let x = x.clamp(0.0, 1.0) * 2.0;
    let i = (x.floor() as usize).min(1);
    let f = x - i as f64;
    let (a, b) = (stops[i], stops[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    RGBColor(mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn draw_landscape(path: &Path, snap: &Snapshot, h: usize, v: usize) -> Result<()> {
    let root = SVGBackend::new(path, (1500, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let panels = root.split_evenly((1, 3));
    let db_range = |xs: &[f64]| {
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = xs
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .max(hi - 30.0);
        (lo, hi)
    };
    let ei_hi = snap
        .expected_improvement
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let specs = [
        (
            "expected improvement",
            &snap.expected_improvement,
            (0.0, ei_hi),
            snap.sampled.clone(),
            false,
        ),
        (
            "posterior mean, dB",
            &snap.posterior_mean,
            db_range(&snap.posterior_mean),
            vec![snap.predicted_best],
            true,
        ),
        (
            "true RSRP, dB",
            &snap.true_rsrp_db,
            db_range(&snap.true_rsrp_db),
            vec![snap.true_best],
            true,
        ),
    ];
    for (panel, (title, values, (lo, hi), marks, cross)) in panels.iter().zip(specs) {
        if values.len() != h * v {
            return Err(CliError::Artifact(format!(
                "snapshot at slot {} has {} values for a {h}x{v} grid",
                snap.slot,
                values.len()
            )));
        }
        let mut chart = ChartBuilder::on(panel)
            .caption(format!("slot {}: {title}", snap.slot), ("sans-serif", 16))
            .margin(10)
            .x_label_area_size(35)
            .y_label_area_size(40)
            .build_cartesian_2d(0f64..h as f64, 0f64..v as f64)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .disable_mesh()
            .x_desc("azimuth index")
            .y_desc("elevation index")
            .draw()
            .map_err(plot_err)?;
        let span = if hi > lo { hi - lo } else { 1.0 };
        chart
            .draw_series(values.iter().enumerate().map(|(i, &z)| {
                let (x, y) = ((i % h) as f64, (i / h) as f64);
                Rectangle::new(
                    [(x, y), (x + 1.0, y + 1.0)],
                    colormap((z - lo) / span).filled(),
                )
            }))
            .map_err(plot_err)?;
        let centre = |b: usize| ((b % h) as f64 + 0.5, (b / h) as f64 + 0.5);
        if cross {
            chart
                .draw_series(
                    marks
                        .iter()
                        .map(|&b| Cross::new(centre(b), 7, RED.stroke_width(3))),
                )
                .map_err(plot_err)?;
        } else {
            chart
                .draw_series(
                    marks
                        .iter()
                        .map(|&b| Circle::new(centre(b), 6, RED.stroke_width(2))),
                )
                .map_err(plot_err)?;
        }
    }
    root.present().map_err(plot_err)
}
