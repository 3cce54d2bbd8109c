use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{paired_ci, EvalReport};

/// Paired CI of a variant's mAUROC minus the baseline's on the same (dataset, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRow {
    pub variant: String,
    /// `weighted` or `unweighted`
    pub metric: String,
    /// `pooled` or a dataset name.
    pub scope: String,
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Variants keep their first-appearance order; pooled rows precede per-dataset ones.
pub fn ci_table(reports: &[EvalReport], baseline: &str) -> Vec<CiRow> {
    let key = |r: &EvalReport| (r.meta.dataset.clone(), r.meta.seed);
    let base: BTreeMap<(String, u64), &EvalReport> = reports
        .iter()
        .filter(|r| r.meta.variant == baseline)
        .map(|r| (key(r), r))
        .collect();
    let mut variants: Vec<&str> = Vec::new();
    let mut datasets: Vec<&str> = Vec::new();
    for r in reports {
        if !variants.contains(&r.meta.variant.as_str()) {
            variants.push(&r.meta.variant);
        }
        if !datasets.contains(&r.meta.dataset.as_str()) {
            datasets.push(&r.meta.dataset);
        }
    }
    let mut rows = Vec::new();
    for variant in variants {
        for metric in ["weighted", "unweighted"] {
            let value = |r: &EvalReport| match metric {
                "weighted" => r.mauroc_weighted,
                _ => r.mauroc_unweighted,
            };
            let deltas: Vec<(String, f64)> = reports
                .iter()
                .filter(|r| r.meta.variant == variant)
                .filter_map(|r| {
                    base.get(&key(r))
                        .map(|b| (r.meta.dataset.clone(), value(r) - value(b)))
                })
                .collect();
            let mut push = |scope: &str, d: Vec<f64>| {
                if let Ok((low, high)) = paired_ci(&d, 0.95) {
                    rows.push(CiRow {
                        variant: variant.to_string(),
                        metric: metric.to_string(),
                        scope: scope.to_string(),
                        n: d.len(),
                        mean: d.iter().sum::<f64>() / d.len() as f64,
                        low,
                        high,
                    });
                }
            };
            push("pooled", deltas.iter().map(|(_, d)| *d).collect());
            for ds in &datasets {
                push(
                    ds,
                    deltas
                        .iter()
                        .filter(|(n, _)| n == ds)
                        .map(|(_, d)| *d)
                        .collect(),
                );
            }
        }
    }
    rows
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// `dataset,variant,seed,weighted_mauroc,unweighted_mauroc,mask_violation_rate,auroc_<event>...`
/// with per-class columns over the union of events (sorted); blank where undefined.
pub fn write_report_csv<W: Write>(reports: &[EvalReport], sink: W) -> csv::Result<()> {
    let events: BTreeSet<&str> = reports
        .iter()
        .flat_map(|r| r.classes.iter().map(|c| c.event.as_str()))
        .collect();
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = [
        "dataset",
        "variant",
        "seed",
        "weighted_mauroc",
        "unweighted_mauroc",
        "mask_violation_rate",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(events.iter().map(|e| format!("auroc_{e}")));
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.meta.dataset.clone(),
            r.meta.variant.clone(),
            r.meta.seed.to_string(),
            num(r.mauroc_weighted),
            num(r.mauroc_unweighted),
            num(r.mask_violation_rate),
        ];
        row.extend(
            events
                .iter()
                .map(|e| r.auroc(e).map(num).unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ci_csv<W: Write>(rows: &[CiRow], sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "variant",
        "metric",
        "scope",
        "n",
        "mean_delta",
        "ci_low",
        "ci_high",
    ])?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.metric.clone(),
            r.scope.clone(),
            r.n.to_string(),
            num(r.mean),
            num(r.low),
            num(r.high),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Two panels (weighted, unweighted) of pooled CIs against the baseline, one
/// row per variant, with a dashed zero line.
pub fn render_svg(rows: &[CiRow], baseline: &str) -> String {
    let pooled: Vec<&CiRow> = rows
        .iter()
        .filter(|r| r.scope == "pooled" && r.variant != baseline)
        .collect();
    let mut variants: Vec<&str> = Vec::new();
    for r in &pooled {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
    }
    let extent = pooled
        .iter()
        .flat_map(|r| [r.low.abs(), r.high.abs()])
        .fold(0.0f64, f64::max)
        .max(1e-3)
        * 1.1;
    let (panel_w, row_h, label_w, top) = (320.0, 28.0, 130.0, 40.0);
    let height = top + row_h * variants.len().max(1) as f64 + 40.0;
    let width = label_w + 2.0 * panel_w + 40.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"##
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="white"/>"##);
    for (p, metric) in ["weighted", "unweighted"].iter().enumerate() {
        let x0 = label_w + p as f64 * (panel_w + 20.0);
        let x = |v: f64| x0 + (v + extent) / (2.0 * extent) * panel_w;
        let bottom = top + row_h * variants.len().max(1) as f64;
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="20" text-anchor="middle">{metric} mAUROC delta vs {baseline}</text>"##,
            x0 + panel_w / 2.0
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{x0:.1}" y="{top:.1}" width="{panel_w:.1}" height="{:.1}" fill="none" stroke="#999"/>"##,
            bottom - top
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{0:.1}" y1="{top:.1}" x2="{0:.1}" y2="{bottom:.1}" stroke="#444" stroke-dasharray="4 3"/>"##,
            x(0.0)
        );
        for (v, label) in [
            (-extent, format!("{:.4}", -extent)),
            (extent, format!("{extent:.4}")),
        ] {
            let _ = writeln!(
                svg,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#666">{label}</text>"##,
                x(v),
                bottom + 16.0
            );
        }
        for (i, variant) in variants.iter().enumerate() {
            let y = top + row_h * (i as f64 + 0.5);
            if p == 0 {
                let _ = writeln!(
                    svg,
                    r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{variant}</text>"##,
                    label_w - 10.0,
                    y + 4.0
                );
            }
            if let Some(r) = pooled
                .iter()
                .find(|r| r.variant == *variant && r.metric == *metric)
            {
                let _ = writeln!(
                    svg,
                    r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#1f5fa8" stroke-width="2"/>"##,
                    x(r.low),
                    x(r.high)
                );
                let _ = writeln!(
                    svg,
                    r##"<circle cx="{:.1}" cy="{y:.1}" r="4" fill="#1f5fa8"/>"##,
                    x(r.mean)
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ClassScore, RunMeta};

    fn report(dataset: &str, variant: &str, seed: u64, u: f64) -> EvalReport {
        EvalReport {
            meta: RunMeta {
                dataset: dataset.into(),
                variant: variant.into(),
                seed,
            },
            classes: vec![ClassScore {
                event: "a".into(),
                support: 3,
                auroc: Some(u),
            }],
            mauroc_unweighted: u,
            mauroc_weighted: u,
            mask_violation_rate: 0.0,
            samples: 10,
        }
    }

    #[test]
    fn ci_rows_pair_by_dataset_and_seed() {
        let reports = vec![
            report("d1", "BASELINE", 1, 0.80),
            report("d1", "BASELINE", 2, 0.82),
            report("d1", "M-S", 1, 0.81),
            report("d1", "M-S", 2, 0.84),
        ];
        let rows = ci_table(&reports, "BASELINE");
        let ms: Vec<&CiRow> = rows.iter().filter(|r| r.variant == "M-S").collect();
        assert_eq!(ms.len(), 4);
        assert_eq!(ms[0].scope, "pooled");
        assert!((ms[0].mean - 0.015).abs() < 1e-12);
        let base = rows.iter().find(|r| r.variant == "BASELINE").unwrap();
        assert_eq!((base.low, base.high), (0.0, 0.0));

        let mut out = Vec::new();
        write_ci_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("variant,metric,scope,n,mean_delta,ci_low,ci_high\n"));
        let svg = render_svg(&rows, "BASELINE");
        assert!(svg.contains(">M-S</text>") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn report_csv_has_union_columns() {
        let mut b = report("d2", "M-S", 1, 0.9);
        b.classes.push(ClassScore {
            event: "z".into(),
            support: 0,
            auroc: None,
        });
        let mut out = Vec::new();
        write_report_csv(&[report("d1", "M-S", 1, 0.5), b], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "dataset,variant,seed,weighted_mauroc,unweighted_mauroc,mask_violation_rate,auroc_a,auroc_z\n\
             d1,M-S,1,0.500000,0.500000,0.000000,0.500000,\n\
             d2,M-S,1,0.900000,0.900000,0.000000,0.900000,\n"
        );
    }
}
