use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::bootstrap::{BootstrapOutcome, EvaluationReport, Summary};
use super::deviation::DeviationMap;
use super::metrics::EffectSizeResult;
use crate::error::Result;

pub fn write_report_json(report: &EvaluationReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `method,repeat,auc`, one row per method and repeat.
pub fn write_auc_csv<W: Write>(report: &EvaluationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "repeat", "auc"])?;
    for m in &report.methods {
        for (r, auc) in m.aucs.iter().enumerate() {
            w.write_record([m.method.to_string(), r.to_string(), auc.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `subject_id,group,D_MSE,e_0..e_{n-1}`.
pub fn write_deviations_csv<W: Write>(maps: &[DeviationMap], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let regions = maps.first().map_or(0, |m| m.errors.len());
    let mut header = vec!["subject_id".to_string(), "group".into(), "D_MSE".into()];
    header.extend((0..regions).map(|i| format!("e_{i}")));
    w.write_record(&header)?;
    for m in maps {
        let mut row = vec![m.subject_id.clone(), m.group.to_string(), m.d_mse.to_string()];
        row.extend(m.errors.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `region,d,ci_low,ci_high,selected`.
pub fn write_effect_sizes_csv<W: Write>(effects: &[EffectSizeResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "d", "ci_low", "ci_high", "selected"])?;
    for e in effects {
        w.write_record([
            e.region.to_string(),
            e.d.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            e.selected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const PLOT_HEIGHT: f64 = 320.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const LEFT: f64 = 70.0;
const SLOT: f64 = 110.0;
const BOX_W: f64 = 34.0;

fn whiskers(s: &Summary) -> (f64, f64) {
    let iqr = s.q3 - s.q1;
    (s.min.max(s.q1 - 1.5 * iqr), s.max.min(s.q3 + 1.5 * iqr))
}

/// Box plot of pooled subject D_MSE, one HC and one AD box per method.
/// Whiskers stop at the most extreme value within 1.5 IQR of the box.
pub fn boxplot_svg(report: &EvaluationReport) -> String {
    let width = LEFT + SLOT * report.methods.len().max(1) as f64 + 20.0;
    let height = TOP + PLOT_HEIGHT + BOTTOM;
    let top_value = report
        .methods
        .iter()
        .flat_map(|m| [whiskers(&m.hc_deviation).1, whiskers(&m.ad_deviation).1])
        .fold(0.0f64, f64::max);
    let top_value = if top_value > 0.0 { top_value * 1.05 } else { 1.0 };
    let y = |v: f64| TOP + PLOT_HEIGHT * (1.0 - v / top_value);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="#333"/>"##,
        TOP + PLOT_HEIGHT
    );
    for k in 0..=4 {
        let v = top_value * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            LEFT - 6.0,
            y(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">D_MSE</text>"#,
        TOP + PLOT_HEIGHT / 2.0,
        TOP + PLOT_HEIGHT / 2.0
    );
    for (i, m) in report.methods.iter().enumerate() {
        let centre = LEFT + SLOT * (i as f64 + 0.5);
        for (j, (group, summary, fill)) in
            [("HC", &m.hc_deviation, "#8ecae6"), ("AD", &m.ad_deviation, "#fb8500")].into_iter().enumerate()
        {
            let x = centre + if j == 0 { -BOX_W - 4.0 } else { 4.0 };
            let mid = x + BOX_W / 2.0;
            let (lo, hi) = whiskers(summary);
            let attrs = format!(r#"data-method="{}" data-group="{group}""#, m.method);
            let _ = writeln!(
                s,
                r##"<line class="whisker" {attrs} x1="{mid:.2}" y1="{:.2}" x2="{mid:.2}" y2="{:.2}" stroke="#333"/>"##,
                y(lo),
                y(hi)
            );
            let _ = writeln!(
                s,
                r##"<rect class="box" {attrs} x="{x:.2}" y="{:.2}" width="{BOX_W}" height="{:.2}" fill="{fill}" stroke="#333"/>"##,
                y(summary.q3),
                (y(summary.q1) - y(summary.q3)).max(0.0)
            );
            let _ = writeln!(
                s,
                r##"<line class="median" {attrs} data-value="{}" x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000" stroke-width="2"/>"##,
                summary.median,
                y(summary.median),
                x + BOX_W,
                y(summary.median)
            );
            let _ = writeln!(
                s,
                r#"<text x="{mid:.2}" y="{:.2}" text-anchor="middle">{group}</text>"#,
                TOP + PLOT_HEIGHT + 16.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{centre:.2}" y="{:.2}" text-anchor="middle" font-weight="bold">{}</text>"#,
            TOP + PLOT_HEIGHT + 36.0,
            m.method
        );
    }
    s.push_str("</svg>\n");
    s
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `report.json`, `auc_per_repeat.csv`, `boxplot.svg` and, per
/// method, `<METHOD>/deviations.csv` and `<METHOD>/effect_sizes.csv`.
/// Returns the written paths.
pub fn write_outputs(outcome: &BootstrapOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let report_path = dir.join("report.json");
    write_report_json(&outcome.report, &report_path)?;
    written.push(report_path);
    let auc_path = dir.join("auc_per_repeat.csv");
    write_auc_csv(&outcome.report, create(&auc_path)?)?;
    written.push(auc_path);
    let svg_path = dir.join("boxplot.svg");
    fs::write(&svg_path, boxplot_svg(&outcome.report))?;
    written.push(svg_path);
    for (method, maps) in &outcome.deviations {
        let sub = dir.join(method.name());
        fs::create_dir_all(&sub)?;
        let dev = sub.join("deviations.csv");
        write_deviations_csv(maps, create(&dev)?)?;
        written.push(dev);
        if let Some(m) = outcome.report.methods.iter().find(|m| m.method == *method) {
            let eff = sub.join("effect_sizes.csv");
            write_effect_sizes_csv(&m.effect_sizes, create(&eff)?)?;
            written.push(eff);
        }
    }
    Ok(written)
}
