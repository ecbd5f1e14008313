use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use plotters::prelude::*;

/// Columns drawn, one figure each.
const FIGURES: [(&str, &str); 6] = [
    ("test_return", "greedy test return"),
    ("train_return", "training return"),
    ("critic_loss", "critic loss"),
    ("efficiency_loss", "efficiency loss"),
    ("entropy", "policy entropy"),
    ("mean_shaped_reward", "mean shaped reward"),
];

struct Run {
    variant: String,
    m: String,
    columns: BTreeMap<String, Vec<Option<f64>>>,
}

fn read_run(path: &Path, expected: &mut Option<csv::StringRecord>) -> anyhow::Result<Run> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = r.headers()?.clone();
    match expected {
        Some(h) if *h != headers => bail!("{}: columns differ from the first CSV", path.display()),
        Some(_) => {}
        None => *expected = Some(headers.clone()),
    }
    for need in ["variant", "m", "env_steps"] {
        if !headers.iter().any(|h| h == need) {
            bail!("{}: missing column `{need}`", path.display());
        }
    }
    let mut columns: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut variant = String::new();
    let mut m = String::new();
    for rec in r.records() {
        let rec = rec.with_context(|| path.display().to_string())?;
        for (h, v) in headers.iter().zip(rec.iter()) {
            match h {
                "variant" => variant = v.to_string(),
                "m" => m = v.to_string(),
                _ => columns.entry(h.to_string()).or_default().push(v.parse::<f64>().ok()),
            }
        }
    }
    Ok(Run { variant, m, columns })
}

/// `(step, mean, 95% half-width)` points.
type Band = Vec<(f64, f64, f64)>;

/// Mean and 95% half-width per step over the runs of one group.
fn band(runs: &[&Run], column: &str) -> Band {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for run in runs {
        let (Some(steps), Some(vals)) = (run.columns.get("env_steps"), run.columns.get(column)) else {
            continue;
        };
        for (s, v) in steps.iter().zip(vals) {
            if let (Some(s), Some(v)) = (s, v) {
                if v.is_finite() {
                    by_step.entry(*s as u64).or_default().push(*v);
                }
            }
        }
    }
    by_step
        .into_iter()
        .map(|(s, v)| {
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let half = if v.len() < 2 {
                0.0
            } else {
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
                1.96 * (var / k).sqrt()
            };
            (s as f64, mean, half)
        })
        .collect()
}

fn labels(runs: &[Run]) -> Vec<String> {
    let variants: std::collections::BTreeSet<&str> = runs.iter().map(|r| r.variant.as_str()).collect();
    let ms: std::collections::BTreeSet<&str> = runs.iter().map(|r| r.m.as_str()).collect();
    runs.iter()
        .map(|r| match (variants.len() > 1, ms.len() > 1) {
            (true, true) => format!("{} m={}", r.variant, r.m),
            (false, true) => format!("m={}", r.m),
            _ => r.variant.clone(),
        })
        .collect()
}

/// One SVG per metric with a mean curve and 95% band per group of runs.
/// Runs are grouped by variant and `m`.
pub fn plot(csvs: &[PathBuf], out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut header = None;
    let runs = csvs
        .iter()
        .map(|p| read_run(p, &mut header))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let labels = labels(&runs);
    let mut groups: BTreeMap<&str, Vec<&Run>> = BTreeMap::new();
    for (run, label) in runs.iter().zip(&labels) {
        groups.entry(label).or_default().push(run);
    }
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut written = Vec::new();
    for (column, title) in FIGURES {
        let curves: Vec<(&str, Band)> = groups
            .iter()
            .map(|(label, runs)| (*label, band(runs, column)))
            .filter(|(_, b)| !b.is_empty())
            .collect();
        if curves.is_empty() {
            continue;
        }
        let path = out.join(format!("{column}.svg"));
        draw(&path, title, &curves).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        written.push(path);
    }
    if written.is_empty() {
        bail!("no plottable values in the given CSVs");
    }
    Ok(written)
}

fn draw(path: &Path, title: &str, curves: &[(&str, Band)]) -> Result<(), Box<dyn std::error::Error>> {
    let pts = curves.iter().flat_map(|(_, c)| c.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, m, h) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - h);
        y1 = y1.max(m + h);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6);
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))?;
    chart
        .configure_mesh()
        .x_desc("environment steps")
        .y_desc(title)
        .draw()?;
    for (k, (label, c)) in curves.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let mut outline: Vec<(f64, f64)> = c.iter().map(|&(x, m, h)| (x, m + h)).collect();
        outline.extend(c.iter().rev().map(|&(x, m, h)| (x, m - h)));
        chart.draw_series(std::iter::once(Polygon::new(outline, color.mix(0.2).filled())))?;
        chart
            .draw_series(LineSeries::new(c.iter().map(|&(x, m, _)| (x, m)), color.stroke_width(2)))?
            .label(*label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.85))
        .draw()?;
    root.present()?;
    Ok(())
}
