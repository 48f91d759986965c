use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static line chart of the strategy and benchmark equity curves.
pub fn equity_svg(title: &str, timestamps: &[String], strategy: &[f64], benchmark: &[f64]) -> String {
    let finite = strategy.iter().chain(benchmark).copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0), lo.max(0.0) + 1.0) };
    let n = strategy.len().max(benchmark.len()).max(2);
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let points = |vals: &[f64]| {
        vals.iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="white"/>"##);
    let _ = writeln!(
        s,
        r##"<text x="{}" y="25" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"##,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for (v, anchor_y) in [(hi, MARGIN + 4.0), (lo, HEIGHT - MARGIN)] {
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{anchor_y}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"##,
            MARGIN - 4.0
        );
    }
    if let (Some(first), Some(last)) = (timestamps.first(), timestamps.last()) {
        let ty = HEIGHT - MARGIN + 16.0;
        let _ = writeln!(
            s,
            r##"<text x="{MARGIN}" y="{ty}" font-family="sans-serif" font-size="11">{}</text>"##,
            escape(first)
        );
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{ty}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"##,
            WIDTH - MARGIN,
            escape(last)
        );
    }
    for (vals, color, name, row) in [(strategy, "#1f77b4", "strategy", 0.0), (benchmark, "#ff7f0e", "benchmark", 1.0)] {
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##,
            points(vals)
        );
        let ly = MARGIN + 14.0 + 16.0 * row;
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{name}</text>"##,
            MARGIN + 8.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_both_series() {
        let ts: Vec<String> = ["2020-01", "2020-02", "2020-03"].iter().map(|s| s.to_string()).collect();
        let svg = equity_svg("a<b", &ts, &[1.0, 1.1, 1.2], &[1.0, 0.9, 1.0]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("2020-03"));
    }

    #[test]
    fn flat_series_does_not_divide_by_zero() {
        let svg = equity_svg("flat", &[], &[1.0, 1.0], &[1.0, 1.0]);
        assert!(!svg.contains("NaN"));
    }
}
