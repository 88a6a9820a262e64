//! Minimal SVG charts of the summary table.

use std::fmt::Write;

use super::{ExperimentConfig, SummaryRow};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        lo.abs().max(1.0) * 0.05
    };
    (lo - pad, hi + pad)
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str, y: (f64, f64)) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#,
        W / 2.0
    );
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = write!(
        out,
        r#"<path d="M{x0} {y1} V{y0} H{x1}" stroke="black" fill="none"/>"#
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0
    );
    let _ = write!(
        out,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        (y0 + y1) / 2.0
    );
    for i in 0..=4 {
        let v = y.0 + (y.1 - y.0) * i as f64 / 4.0;
        let py = y0 - (y0 - y1) * i as f64 / 4.0;
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{v:.3e}</text>"#,
            x0 - 4.0,
            py + 4.0
        );
    }
}

fn legend(out: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 16.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = write!(
            out,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{name}</text>"#,
            y,
            COLORS[i % COLORS.len()],
            x + 14.0,
            y + 9.0
        );
    }
}

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let x = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let y = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |v: f64| LEFT + (v - x.0) / (x.1 - x.0) * (W - RIGHT - LEFT);
    let sy = |v: f64| H - BOTTOM - (v - y.0) / (y.1 - y.0) * (H - BOTTOM - TOP);
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label, y);
    let mut ticks: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#,
            sx(t),
            H - BOTTOM + 16.0
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let _ = write!(
            out,
            r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (px, py) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = write!(out, r#"<circle cx="{px}" cy="{py}" r="3" fill="{color}"/>"#);
        }
    }
    legend(
        &mut out,
        &series.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
    );
    out.push_str("</svg>\n");
    out
}

fn bar_chart(title: &str, groups: &[&str], series: &[(String, Vec<f64>)]) -> String {
    let y = range(series.iter().flat_map(|s| s.1.iter().copied()).chain([0.0]));
    let y = (0.0, y.1);
    let sy = |v: f64| H - BOTTOM - (v - y.0) / (y.1 - y.0) * (H - BOTTOM - TOP);
    let mut out = String::new();
    frame(&mut out, title, "percentile", "UL rate (bit/s)", y);
    let slot = (W - RIGHT - LEFT) / groups.len().max(1) as f64;
    let bar = slot * 0.8 / series.len().max(1) as f64;
    for (g, label) in groups.iter().enumerate() {
        let gx = LEFT + slot * g as f64 + slot * 0.1;
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#,
            gx + slot * 0.4,
            H - BOTTOM + 16.0
        );
        for (i, (_, values)) in series.iter().enumerate() {
            let v = values
                .get(g)
                .copied()
                .filter(|v| v.is_finite())
                .unwrap_or(0.0);
            let top = sy(v);
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}" fill="{}"/>"#,
                gx + bar * i as f64,
                (H - BOTTOM - top).max(0.0),
                COLORS[i % COLORS.len()]
            );
        }
    }
    legend(
        &mut out,
        &series.iter().map(|s| s.0.clone()).collect::<Vec<_>>(),
    );
    out.push_str("</svg>\n");
    out
}

/// File names and contents of the summary charts.
pub(super) fn charts(cfg: &ExperimentConfig, rows: &[SummaryRow]) -> Vec<(String, String)> {
    let per_scheme = |f: fn(&SummaryRow) -> f64| -> Vec<Series> {
        cfg.schemes
            .iter()
            .map(|&id| Series {
                name: id.to_string(),
                points: rows
                    .iter()
                    .filter(|r| r.scheme == id)
                    .map(|r| (r.n_sbs as f64, f(r)))
                    .collect(),
            })
            .collect()
    };
    let mut out = vec![
        (
            "latency_vs_sbs.svg".to_string(),
            line_chart(
                "Sum latency",
                "number of SBSs",
                "latency (s)",
                &per_scheme(|r| r.sum_latency_mean),
            ),
        ),
        (
            "ee_vs_sbs.svg".to_string(),
            line_chart(
                "UL energy efficiency",
                "number of SBSs",
                "bit/J",
                &per_scheme(|r| r.energy_efficiency_mean),
            ),
        ),
        (
            "jain_ul_vs_sbs.svg".to_string(),
            line_chart(
                "UL latency fairness",
                "number of SBSs",
                "Jain index",
                &per_scheme(|r| r.jain_ul_mean),
            ),
        ),
    ];
    if let Some(&last) = cfg.sweep_points().last() {
        let series: Vec<(String, Vec<f64>)> = rows
            .iter()
            .filter(|r| r.n_sbs == last)
            .map(|r| {
                (
                    r.scheme.to_string(),
                    vec![
                        r.rate_p10_mean,
                        r.rate_p20_mean,
                        r.rate_p50_mean,
                        r.rate_p80_mean,
                        r.rate_p90_mean,
                    ],
                )
            })
            .collect();
        out.push((
            "rate_percentiles.svg".to_string(),
            bar_chart(
                &format!("UL rate percentiles, {last} SBSs"),
                &["10th", "20th", "50th", "80th", "90th"],
                &series,
            ),
        ));
    }
    out
}
