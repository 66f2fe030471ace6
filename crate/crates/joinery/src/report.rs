//! Experiment reports as CSV, markdown tables and SVG bar charts. Output is
//! a pure function of the reports, so reruns are byte-identical.

use std::fmt::Write as _;

use joinery_core::eval::{ExperimentReport, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Rollouts,
    Md,
    Svg,
}

pub fn render(reports: &[ExperimentReport], format: Format) -> String {
    match format {
        Format::Csv => summary_csv(reports),
        Format::Rollouts => rollouts_csv(reports),
        Format::Md => markdown(reports),
        Format::Svg => svg(reports),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per experiment and offset, then one `total` row per experiment.
pub fn summary_csv(reports: &[ExperimentReport]) -> String {
    let mut s = String::from("label,offset_mm,avg_sr,sem,per_model,protective_stops,timeouts\n");
    for r in reports {
        for o in &r.offsets {
            let per: Vec<String> = o.per_model.iter().map(|v| format!("{v:.2}")).collect();
            let _ = writeln!(
                s,
                "{},{},{:.2},{:.2},{},{},{}",
                quote(&r.label),
                o.offset_mm,
                o.avg_sr,
                o.sem,
                per.join(";"),
                o.protective_stops,
                o.timeouts
            );
        }
        let _ = writeln!(s, "{},total,{:.2},,,,", quote(&r.label), r.avg_total_sr);
    }
    s
}

pub fn rollouts_csv(reports: &[ExperimentReport]) -> String {
    let mut s = String::from("label,model,offset_mm,repeat,seed,signed_offset,outcome,steps,inferences,depth,duration\n");
    for r in reports {
        for x in &r.rollouts {
            let outcome = match x.result.outcome {
                Outcome::Success => "success",
                Outcome::ProtectiveStop => "protective_stop",
                Outcome::Timeout => "timeout",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{:.3},{:.3}",
                quote(&r.label),
                x.model,
                x.offset_mm,
                x.repeat,
                x.seed,
                x.result.offset,
                outcome,
                x.result.steps,
                x.result.inferences,
                x.result.depth,
                x.result.duration
            );
        }
    }
    s
}

/// Offsets of the first report, then any others in order of appearance.
fn offset_columns(reports: &[ExperimentReport]) -> Vec<f64> {
    let mut cols: Vec<f64> = Vec::new();
    for o in reports.iter().flat_map(|r| &r.offsets) {
        if !cols.contains(&o.offset_mm) {
            cols.push(o.offset_mm);
        }
    }
    cols
}

/// Success rate ± SEM per offset, plus the average.
pub fn markdown(reports: &[ExperimentReport]) -> String {
    let cols = offset_columns(reports);
    let mut s = String::from("| Experiment |");
    for c in &cols {
        let _ = write!(s, " SR {c} mm |");
    }
    s.push_str(" Avg total |\n|---|");
    s.push_str(&"---:|".repeat(cols.len() + 1));
    s.push('\n');
    for r in reports {
        let _ = write!(s, "| {} |", r.label.replace('|', "\\|"));
        for c in &cols {
            match r.offsets.iter().find(|o| o.offset_mm == *c) {
                Some(o) => {
                    let _ = write!(s, " {:.1} ± {:.1} |", o.avg_sr, o.sem);
                }
                None => s.push_str(" – |"),
            }
        }
        let _ = writeln!(s, " {:.1} |", r.avg_total_sr);
    }
    s
}

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

/// Grouped bars: one group per offset, one bar per experiment, SEM whiskers.
pub fn svg(reports: &[ExperimentReport]) -> String {
    let cols = offset_columns(reports);
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (50.0, 160.0, 20.0, 40.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let y = |sr: f64| top + plot_h * (1.0 - sr.clamp(0.0, 100.0) / 100.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for tick in (0..=100).step_by(25) {
        let ty = y(tick as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{ty}" x2="{}" y2="{ty}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{tick}</text>"##,
            left + plot_w,
            left - 4.0,
            ty + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">success rate (%)</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    let group_w = if cols.is_empty() { plot_w } else { plot_w / cols.len() as f64 };
    let bar_w = group_w * 0.8 / reports.len().max(1) as f64;
    for (ci, c) in cols.iter().enumerate() {
        let gx = left + group_w * ci as f64 + group_w * 0.1;
        for (ri, r) in reports.iter().enumerate() {
            let Some(o) = r.offsets.iter().find(|o| o.offset_mm == *c) else { continue };
            let x = gx + bar_w * ri as f64;
            let top_y = y(o.avg_sr);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{top_y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                bar_w * 0.9,
                top + plot_h - top_y,
                PALETTE[ri % PALETTE.len()]
            );
            let cx = x + bar_w * 0.45;
            let (lo, hi) = (y(o.avg_sr - o.sem), y(o.avg_sr + o.sem));
            let _ = writeln!(
                s,
                r#"<path d="M{cx:.2} {lo:.2}V{hi:.2}M{:.2} {lo:.2}h{:.2}M{:.2} {hi:.2}h{:.2}" stroke="black" fill="none"/>"#,
                cx - 3.0,
                6.0,
                cx - 3.0,
                6.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{c} mm</text>"#,
            left + group_w * (ci as f64 + 0.5),
            top + plot_h + 16.0
        );
    }
    for (ri, r) in reports.iter().enumerate() {
        let ly = top + 14.0 * ri as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{ly}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            w - right + 10.0,
            PALETTE[ri % PALETTE.len()],
            w - right + 24.0,
            ly + 9.0,
            escape(&r.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
