//! Minimal SVG line plot of the profile series.

use std::fmt::Write as _;

const STYLES: [&str; 4] = ["solid", "dotted", "dashed", "dashdot"];
const COLOURS: [&str; 6] = ["#1f4e9a", "#b2321f", "#2d7d32", "#7b3fa0", "#a66a00", "#333333"];

pub fn style_name(i: usize) -> &'static str {
    STYLES[i % STYLES.len()]
}

fn dasharray(style: &str) -> &'static str {
    match style {
        "dotted" => " stroke-dasharray=\"2,4\"",
        "dashed" => " stroke-dasharray=\"8,5\"",
        "dashdot" => " stroke-dasharray=\"9,4,2,4\"",
        _ => "",
    }
}

/// Rows come sorted by lambda; a repeated lambda marks a jump, where the
/// polyline is broken.
pub fn render(rows: &[(f64, Vec<f64>)], specials: &[f64], g_bounds: (f64, f64), title: &str) -> String {
    let (w, h) = (720.0, 440.0);
    let (ml, mr, mt, mb) = (60.0, 150.0, 30.0, 45.0);
    let n = rows.first().map_or(0, |r| r.1.len());
    let lmax = rows.last().map_or(1.0, |r| r.0).max(1e-12);
    let (glo, ghi) = if g_bounds.1 > g_bounds.0 { g_bounds } else { (0.0, 1.0) };
    let pad = 0.05 * (ghi - glo);
    let (ylo, yhi) = (glo - pad, ghi + pad);
    let px = |l: f64| ml + (w - ml - mr) * l / lmax;
    let py = |v: f64| mt + (h - mt - mb) * (yhi - v) / (yhi - ylo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{ml}\" y=\"18\">{}</text>", escape(title));
    let (x0, x1, y0, y1) = (px(0.0), px(lmax), py(ylo), py(yhi));
    let _ = writeln!(
        s,
        "<path d=\"M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}\" fill=\"none\" stroke=\"black\"/>"
    );
    for k in 0..=5 {
        let l = lmax * k as f64 / 5.0;
        let x = px(l);
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", y0 + 4.0);
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{l:.3}</text>", y0 + 17.0);
        let v = glo + (ghi - glo) * k as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(s, "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{x0:.2}\" y2=\"{y:.2}\" stroke=\"black\"/>", x0 - 4.0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{v:.3}</text>", x0 - 7.0, y + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">lambda</text>", (x0 + x1) / 2.0, h - 8.0);
    for &l in specials.iter().filter(|l| **l > 0.0 && **l <= lmax) {
        let x = px(l);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{y0:.2}\" x2=\"{x:.2}\" y2=\"{y1:.2}\" stroke=\"#bbbbbb\" stroke-width=\"0.6\"/>"
        );
    }
    for i in 0..n {
        let style = style_name(i);
        let colour = COLOURS[i % COLOURS.len()];
        let mut d = String::new();
        let mut prev: Option<f64> = None;
        for (l, v) in rows {
            let cmd = if prev == Some(*l) || prev.is_none() { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", px(*l), py(v[i]));
            prev = Some(*l);
        }
        let _ = writeln!(
            s,
            "<path class=\"series\" data-series=\"c{}\" d=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.6\"{}/>",
            i + 1,
            d.trim_end(),
            dasharray(style)
        );
        let ly = mt + 20.0 + 20.0 * i as f64;
        let lx = w - mr + 15.0;
        let _ = writeln!(
            s,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{colour}\" stroke-width=\"1.6\"{}/>",
            lx + 30.0,
            dasharray(style)
        );
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\">c{} (O{})</text>", lx + 36.0, ly + 4.0, i + 1, i + 1);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jumps_break_the_polyline() {
        let rows = vec![
            (0.0, vec![0.1]),
            (0.5, vec![0.1]),
            (0.5, vec![0.9]),
            (1.0, vec![0.9]),
        ];
        let s = render(&rows, &[0.5], (0.0, 1.0), "t");
        let d = s.lines().find(|l| l.contains("class=\"series\"")).unwrap();
        assert_eq!(d.matches('M').count(), 2);
        assert_eq!(d.matches('L').count(), 2);
    }
}
