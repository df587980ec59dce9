use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        out,
        r#"<path d="M{m:.1} {t:.1} V{b:.1} H{r:.1}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN / 2.0,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN / 2.0
    );
}

fn y_ticks(out: &mut String, lo: f64, hi: f64, sy: &dyn Fn(f64) -> f64) {
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            sy(v) + 4.0,
            format_tick(v)
        );
    }
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

/// Line chart of several series sharing both axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y.iter().copied()));
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 1.5 * MARGIN;
    let sx = |v: f64| MARGIN + (v - x0) / (x1 - x0) * plot_w;
    let sy = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * plot_h;

    let mut out = String::new();
    header(&mut out, title, x_label, y_label);
    y_ticks(&mut out, y0, y1, &sy);
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{}</text>"#,
            sx(v),
            HEIGHT - MARGIN + 16.0,
            format_tick(v)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (k, (&x, &y)) in s.x.iter().zip(&s.y).filter(|(_, y)| y.is_finite()).enumerate() {
            let _ = write!(d, "{}{:.1} {:.1}", if k == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = writeln!(out, r#"<path d="{d}" stroke="{color}" stroke-width="1.5" fill="none"/>"#);
        let ly = MARGIN / 2.0 + 14.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN / 2.0 - 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart; `None` values are drawn as a marked gap.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, Option<f64>)]) -> String {
    let (_, y1) = bounds(bars.iter().filter_map(|b| b.1).chain([0.0]));
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 1.5 * MARGIN;
    let sy = |v: f64| HEIGHT - MARGIN - v / y1 * plot_h;
    let slot = plot_w / bars.len().max(1) as f64;

    let mut out = String::new();
    header(&mut out, title, "", y_label);
    y_ticks(&mut out, 0.0, y1, &sy);
    for (i, (label, value)) in bars.iter().enumerate() {
        let x = MARGIN + slot * i as f64;
        let cx = x + slot / 2.0;
        match value {
            Some(v) => {
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                    x + slot * 0.15,
                    sy(*v),
                    slot * 0.7,
                    (HEIGHT - MARGIN - sy(*v)).max(0.0),
                    COLORS[0]
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">n/a</text>"#,
                    HEIGHT - MARGIN - 4.0
                );
            }
        }
        let ly = HEIGHT - MARGIN + 12.0;
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{ly:.1}" font-size="9" text-anchor="end" transform="rotate(-30 {cx:.1} {ly:.1})">{}</text>"#,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
