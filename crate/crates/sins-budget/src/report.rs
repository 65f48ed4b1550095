//! Report writers: machine-readable CSV, a human-readable text summary, and
//! standalone SVG bar charts. All writers format numbers deterministically so
//! repeated runs produce byte-identical artifacts.

use std::io::Write;

use crate::decomposition::{BudgetReport, OutputDef};
use crate::earth::Earth;
use crate::error::{Error, Result};
use crate::montecarlo::McCompareRow;

/// Multiplier (and unit label) applied to a sigma before display.
#[derive(Debug, Clone)]
pub struct DisplayScale {
    pub unit: String,
    pub factor: f64,
}

const RAD_TO_ARCSEC: f64 = 648_000.0 / std::f64::consts::PI;

/// Scales for the machine CSV: SI throughout, except latitude/longitude
/// errors which are mapped to metres along the local meridian/parallel so
/// the position numbers are comparable across outputs.
pub fn csv_scales(outputs: &[OutputDef], lat: f64, h: f64, earth: &Earth) -> Vec<DisplayScale> {
    let (rm, rn) = earth.radii(lat);
    outputs
        .iter()
        .map(|o| match o.label.as_str() {
            "pos_lat" => DisplayScale { unit: "m".into(), factor: rm + h },
            "pos_lon" => DisplayScale { unit: "m".into(), factor: (rn + h) * lat.cos() },
            "pos_h" => DisplayScale { unit: "m".into(), factor: 1.0 },
            l if l.starts_with("att") => DisplayScale { unit: "rad".into(), factor: 1.0 },
            _ => DisplayScale { unit: "m/s".into(), factor: 1.0 },
        })
        .collect()
}

/// Scales for human-facing output: attitude in arcseconds, the rest as in
/// the CSV.
pub fn human_scales(outputs: &[OutputDef], lat: f64, h: f64, earth: &Earth) -> Vec<DisplayScale> {
    csv_scales(outputs, lat, h, earth)
        .into_iter()
        .zip(outputs)
        .map(|(s, o)| {
            if o.label.starts_with("att") {
                DisplayScale { unit: "arcsec".into(), factor: RAD_TO_ARCSEC }
            } else {
                s
            }
        })
        .collect()
}

fn check_scales(report: &BudgetReport, scales: &[DisplayScale]) -> Result<()> {
    if scales.len() != report.outputs.len() {
        return Err(Error::Dimension(format!(
            "{} display scales for {} outputs",
            scales.len(),
            report.outputs.len()
        )));
    }
    Ok(())
}

/// `budget.csv`: one row per (epoch, output, source).
pub fn write_budget_csv<W: Write>(
    reports: &[BudgetReport],
    scales: &[DisplayScale],
    mut out: W,
) -> Result<()> {
    writeln!(out, "epoch,output,source,sigma,share")?;
    for report in reports {
        check_scales(report, scales)?;
        for (oi, o) in report.outputs.iter().enumerate() {
            for (si, source) in report.sources.iter().enumerate() {
                let e = &report.entries[si][oi];
                writeln!(
                    out,
                    "{},{},{},{:.12e},{:.9}",
                    report.epoch,
                    o.label,
                    source,
                    e.sigma * scales[oi].factor,
                    e.share
                )?;
            }
        }
    }
    Ok(())
}

/// `mc_compare.csv`: one row per (source, output) chi-square verdict.
pub fn write_mc_csv<W: Write>(rows: &[McCompareRow], mut out: W) -> Result<()> {
    writeln!(out, "source,output,analytic_var,mc_var,ratio,status")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.12e},{:.12e},{:.9},{}",
            r.source, r.output, r.analytic_var, r.mc_var, r.ratio, r.status
        )?;
    }
    Ok(())
}

/// Human-readable summary: configuration echo, total sigma time series, and
/// the per-source table at the final epoch.
pub fn write_budget_txt<W: Write>(
    reports: &[BudgetReport],
    scales: &[DisplayScale],
    audit: &[(String, String)],
    mut out: W,
) -> Result<()> {
    let last = reports
        .last()
        .ok_or_else(|| Error::InvalidArgument("no budget epochs to report".into()))?;
    check_scales(last, scales)?;

    writeln!(out, "error budget report")?;
    writeln!(out, "===================")?;
    writeln!(out)?;
    writeln!(out, "configuration")?;
    writeln!(out, "-------------")?;
    for (name, raw) in audit {
        writeln!(out, "  {name:<28} {raw}")?;
    }
    writeln!(out)?;

    writeln!(out, "total 1-sigma error vs time")?;
    writeln!(out, "---------------------------")?;
    write!(out, "  {:>8}", "epoch_s")?;
    for (oi, o) in last.outputs.iter().enumerate() {
        write!(out, "  {:>14}", format!("{} [{}]", o.label, scales[oi].unit))?;
    }
    writeln!(out)?;
    for report in reports {
        check_scales(report, scales)?;
        write!(out, "  {:>8}", report.epoch)?;
        for oi in 0..report.outputs.len() {
            write!(out, "  {:>14.5e}", report.total_sigma(oi) * scales[oi].factor)?;
        }
        writeln!(out)?;
    }
    writeln!(out)?;

    writeln!(out, "contribution by source at t = {} s", last.epoch)?;
    writeln!(out, "----------------------------------{}", "")?;
    for (oi, o) in last.outputs.iter().enumerate() {
        let total = last.total_sigma(oi) * scales[oi].factor;
        writeln!(out)?;
        writeln!(
            out,
            "  {} — total {:.5e} {}",
            o.label, total, scales[oi].unit
        )?;
        // Sources in descending share so the dominant terms lead.
        let mut order: Vec<usize> = (0..last.sources.len()).collect();
        order.sort_by(|&a, &b| {
            last.entries[b][oi]
                .share
                .partial_cmp(&last.entries[a][oi].share)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for si in order {
            let e = &last.entries[si][oi];
            if e.share < 5e-4 {
                continue;
            }
            writeln!(
                out,
                "    {:<16} {:>12.5e} {}  {:>5.1}%",
                last.sources[si],
                e.sigma * scales[oi].factor,
                scales[oi].unit,
                e.share * 100.0
            )?;
        }
    }
    Ok(())
}

const SVG_COLORS: &[&str] = &["#4878cf", "#ee854a", "#6acc65", "#d65f5f", "#956cb4"];

/// Grouped horizontal bar chart of variance shares at the final epoch for a
/// subset of outputs (one chart per output class).
pub fn write_budget_svg<W: Write>(
    report: &BudgetReport,
    output_labels: &[&str],
    title: &str,
    mut out: W,
) -> Result<()> {
    let cols: Vec<usize> = output_labels
        .iter()
        .map(|l| {
            report
                .output_index(l)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown output '{l}'")))
        })
        .collect::<Result<_>>()?;
    // Keep only sources that contribute somewhere in this class.
    let rows: Vec<usize> = (0..report.sources.len())
        .filter(|&si| cols.iter().any(|&oi| report.entries[si][oi].share >= 5e-4))
        .collect();

    let bar_h = 10.0;
    let group_gap = 8.0;
    let group_h = bar_h * cols.len() as f64 + group_gap;
    let left = 150.0;
    let top = 60.0;
    let plot_w = 420.0;
    let width = left + plot_w + 30.0;
    let height = top + group_h * rows.len() as f64 + 30.0;

    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"11\">"
    )?;
    writeln!(out, "<text x=\"{left}\" y=\"20\" font-size=\"14\">{title}</text>")?;
    writeln!(
        out,
        "<text x=\"{left}\" y=\"38\" fill=\"#555\">variance share at t = {} s</text>",
        report.epoch
    )?;
    // Legend.
    for (ci, &oi) in cols.iter().enumerate() {
        let x = left + 120.0 * ci as f64;
        let color = SVG_COLORS[ci % SVG_COLORS.len()];
        writeln!(
            out,
            "<rect x=\"{x}\" y=\"44\" width=\"10\" height=\"10\" fill=\"{color}\"/>"
        )?;
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"53\">{}</text>",
            x + 14.0,
            report.outputs[oi].label
        )?;
    }
    // Axis line at share = 0 and gridline at 100%.
    writeln!(
        out,
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{:.1}\" stroke=\"#999\"/>",
        height - 25.0
    )?;
    writeln!(
        out,
        "<line x1=\"{:.1}\" y1=\"{top}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#ddd\" \
         stroke-dasharray=\"3 3\"/>",
        left + plot_w,
        left + plot_w,
        height - 25.0
    )?;
    for (ri, &si) in rows.iter().enumerate() {
        let y0 = top + group_h * ri as f64;
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            left - 6.0,
            y0 + group_h / 2.0,
            report.sources[si]
        )?;
        for (ci, &oi) in cols.iter().enumerate() {
            let share = report.entries[si][oi].share.clamp(0.0, 1.0);
            let w = plot_w * share;
            let y = y0 + bar_h * ci as f64;
            let color = SVG_COLORS[ci % SVG_COLORS.len()];
            writeln!(
                out,
                "<rect x=\"{left}\" y=\"{y:.1}\" width=\"{w:.2}\" height=\"{:.1}\" \
                 fill=\"{color}\"><title>{}: {:.2}%</title></rect>",
                bar_h - 1.0,
                report.sources[si],
                share * 100.0
            )?;
        }
    }
    writeln!(
        out,
        "<text x=\"{left}\" y=\"{:.1}\" fill=\"#555\">bar length = share of output variance \
         (full width = 100%)</text>",
        height - 8.0
    )?;
    writeln!(out, "</svg>")?;
    Ok(())
}

/// Output-class partition of the default outputs, for one chart per class.
pub fn output_classes(outputs: &[OutputDef]) -> Vec<(&'static str, Vec<&str>)> {
    let mut classes: Vec<(&'static str, Vec<&str>)> = vec![
        ("attitude", Vec::new()),
        ("velocity", Vec::new()),
        ("position", Vec::new()),
    ];
    for o in outputs {
        let idx = if o.label.starts_with("att") {
            0
        } else if o.label.starts_with("vel") {
            1
        } else {
            2
        };
        classes[idx].1.push(o.label.as_str());
    }
    classes.retain(|(_, v)| !v.is_empty());
    classes
}
