//! Minimal SVG line plots for the comparison artifacts.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x0, x1) = bounds(all.iter().map(|p| p.0));
    let (y0, y1) = bounds(all.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0).max(1e-12) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0).max(1e-12) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    ));
    svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
    svg.push_str(&format!(
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15" font-family="sans-serif">{}</text>"#,
        W / 2.0,
        title
    ));
    // Axes.
    svg.push_str(&format!(
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    svg.push_str(&format!(
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" font-family="sans-serif">{}</text>"#,
        W / 2.0,
        H - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        r#"<text x="16" y="{}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        y_label
    ));
    // Tick labels at the corners of the data range.
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-size="10" font-family="sans-serif">{x:.3}</text>"#,
            sx(x),
            H - MARGIN + 16.0
        ));
    }
    for y in [y0, y1] {
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="end" font-size="10" font-family="sans-serif">{y:.2}</text>"#,
            MARGIN - 6.0,
            sy(y) + 4.0
        ));
    }
    // Series.
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if s.points.len() > 1 {
            let d: Vec<String> = s.points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
            svg.push_str(&format!(
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                d.join(" ")
            ));
        }
        for (x, y) in &s.points {
            svg.push_str(&format!(
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.4" fill="{color}"/>"#,
                sx(*x),
                sy(*y)
            ));
        }
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif" fill="{color}">{}</text>"#,
            W - MARGIN + 4.0,
            MARGIN + 16.0 * i as f64,
            s.label
        ));
    }
    svg.push_str("</svg>");
    svg
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_svg() {
        let s = line_plot(
            "t",
            "x",
            "y",
            &[Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] }],
        );
        assert!(s.starts_with("<svg"));
        assert!(s.ends_with("</svg>"));
        assert!(s.contains("polyline"));
    }

    #[test]
    fn degenerate_ranges_do_not_nan() {
        let s = line_plot("t", "x", "y", &[Series { label: "a".into(), points: vec![(1.0, 1.0)] }]);
        assert!(!s.contains("NaN"));
    }
}
