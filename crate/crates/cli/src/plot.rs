use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 180.0;
const PAD: f64 = 24.0;

/// One labelled trace with an optional highlighted span.
pub struct Panel<'a> {
    pub label: &'a str,
    pub samples: &'a [f64],
    pub highlight: Option<(usize, usize)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Stacked panels sharing one amplitude scale, so equal traces draw
/// identical polylines.
pub fn stacked_svg(title: &str, sample_rate_hz: f64, panels: &[Panel]) -> String {
    let (lo, hi) = panels
        .iter()
        .flat_map(|p| p.samples.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let plot_w = WIDTH - 2.0 * PAD;
    let plot_h = PANEL_HEIGHT - 2.0 * PAD;
    let height = PAD + PANEL_HEIGHT * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="16" font-family="sans-serif" font-size="13">{}</text>"#,
        escape(title)
    );
    for (k, p) in panels.iter().enumerate() {
        let n = p.samples.len().max(2);
        let x = |i: usize| PAD + plot_w * i as f64 / (n - 1) as f64;
        let y = |v: f64| PAD + plot_h * (hi - v) / (hi - lo);
        let _ = writeln!(out, r#"<g transform="translate(0,{})">"#, PAD + PANEL_HEIGHT * k as f64);
        let _ = writeln!(
            out,
            r##"<rect x="{PAD}" y="{PAD}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#bbb"/>"##
        );
        if let Some((start, len)) = p.highlight {
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{PAD}" width="{:.2}" height="{plot_h}" fill="#fde0dc"/>"##,
                x(start),
                (x(start + len) - x(start)).max(1.0)
            );
        }
        let points: Vec<String> = p
            .samples
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline fill="none" stroke="#1f4e79" stroke-width="1" points="{}"/>"##,
            points.join(" ")
        );
        let duration = p.samples.len() as f64 / sample_rate_hz;
        let _ = writeln!(
            out,
            r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="11">{} (0 to {duration:.2} s)</text>"#,
            PAD - 6.0,
            escape(p.label)
        );
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

/// `index,time_s,<label>...` with one row per sample.
pub fn traces_csv(sample_rate_hz: f64, panels: &[Panel]) -> String {
    let mut out = String::from("index,time_s");
    for p in panels {
        out.push(',');
        out.push_str(p.label);
    }
    out.push('\n');
    let n = panels.iter().map(|p| p.samples.len()).max().unwrap_or(0);
    for i in 0..n {
        let _ = write!(out, "{i},{}", i as f64 / sample_rate_hz);
        for p in panels {
            match p.samples.get(i) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
