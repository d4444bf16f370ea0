//! Self-contained SVG renderings of study results.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::harness::{FanPanel, Histogram, LorenzBand, StudyResult};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    log_x: bool,
}

impl Frame {
    fn new(
        xs: impl Iterator<Item = f64> + Clone,
        ys: impl Iterator<Item = f64> + Clone,
        log_x: bool,
    ) -> Self {
        let fin = |it: &mut dyn Iterator<Item = f64>| {
            it.filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                    (a.min(v), b.max(v))
                })
        };
        let (mut x0, mut x1) = fin(&mut xs.clone());
        let (mut y0, mut y1) = fin(&mut ys.clone());
        if log_x {
            x0 = x0.max(f64::MIN_POSITIVE).log10();
            x1 = x1.max(f64::MIN_POSITIVE).log10();
        }
        if !(x1 > x0) {
            x1 = x0 + 1.0;
        }
        if !(y1 > y0) {
            y0 -= 0.5;
            y1 += 0.5;
        }
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        Frame {
            x0,
            x1,
            y0,
            y1,
            log_x,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let x = if self.log_x { x.log10() } else { x };
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        let y = y.clamp(self.y0, self.y1);
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn header(title: &str, f: &Frame, xlabel: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let xl = |v: f64| {
        if f.log_x {
            format!("{:.3}", 10f64.powf(v))
        } else {
            format!("{v:.3}")
        }
    };
    let _ = writeln!(
        s,
        "<text x=\"{PAD}\" y=\"{}\">{}</text>",
        H - PAD + 16.0,
        xl(f.x0)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
        W - PAD,
        H - PAD + 16.0,
        xl(f.x1)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        H - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.4}</text>",
        PAD - 4.0,
        H - PAD,
        f.y0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.4}</text>",
        PAD - 4.0,
        PAD + 10.0,
        f.y1
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn polyline(f: &Frame, pts: &[(f64, f64)], color: &str, dash: bool) -> String {
    let d: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect();
    let dash = if dash {
        " stroke-dasharray=\"4 3\""
    } else {
        ""
    };
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>\n",
        d.join(" ")
    )
}

fn band(f: &Frame, lo: &[(f64, f64)], hi: &[(f64, f64)], color: &str, opacity: f64) -> String {
    let mut pts: Vec<String> = hi
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect();
    pts.extend(
        lo.iter()
            .rev()
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))),
    );
    format!(
        "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"{opacity}\" stroke=\"none\"/>\n",
        pts.join(" ")
    )
}

pub fn render_fan(p: &FanPanel) -> String {
    let xs = p.points.iter().map(|q| q.m as f64);
    let ys = p.points.iter().flat_map(|q| [q.lo90, q.hi90, 0.0]);
    let f = Frame::new(xs, ys, true);
    let get = |g: fn(&crate::harness::FanPoint) -> f64| {
        p.points
            .iter()
            .map(|q| (q.m as f64, g(q)))
            .collect::<Vec<_>>()
    };
    let mut s = header(
        &format!("({}) {}  n = {}", p.panel, p.title, p.param),
        &f,
        "m (log scale)",
    );
    s += &band(&f, &get(|q| q.lo90), &get(|q| q.hi90), COLORS[0], 0.2);
    s += &band(&f, &get(|q| q.lo50), &get(|q| q.hi50), COLORS[0], 0.4);
    s += &polyline(&f, &get(|q| q.mean), COLORS[0], false);
    let first = p.points.first().map_or(1.0, |q| q.m as f64);
    let last = p.points.last().map_or(1.0, |q| q.m as f64);
    s += &polyline(&f, &[(first, 0.0), (last, 0.0)], "#000", true);
    if let Some(m) = p.detection_time {
        let x = f.px(m as f64);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{PAD}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"blue\"/>",
            H - PAD
        );
    }
    s + "</svg>\n"
}

pub fn render_lorenz(a: f64, arms: &[&LorenzBand]) -> String {
    let xs = arms.iter().flat_map(|l| l.points.iter().map(|p| p.0));
    let f = Frame::new(xs.clone(), [0.0, 1.0].into_iter(), true);
    let mut s = header(
        &format!("Lorenz-type concentration, a = {a}"),
        &f,
        "p (log scale)",
    );
    for (k, l) in arms.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        let lo: Vec<_> = l.points.iter().map(|p| (p.0, p.2)).collect();
        let hi: Vec<_> = l.points.iter().map(|p| (p.0, p.3)).collect();
        s += &band(&f, &lo, &hi, c, 0.25);
        s += &polyline(
            &f,
            &l.points.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>(),
            c,
            false,
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{c}\">{}</text>",
            PAD + 8.0,
            PAD + 16.0 * (k + 1) as f64,
            escape(&l.arm)
        );
    }
    let diag: Vec<(f64, f64)> = arms
        .first()
        .map_or(vec![], |l| l.points.iter().map(|p| (p.0, p.0)).collect());
    s += &polyline(&f, &diag, "#000", true);
    s + "</svg>\n"
}

pub fn render_histogram(a: f64, arms: &[&Histogram]) -> String {
    let xs = arms
        .iter()
        .flat_map(|h| h.bins.iter().flat_map(|b| [b.0, b.1]));
    let ys = arms
        .iter()
        .flat_map(|h| h.bins.iter().map(|b| b.2 as f64))
        .chain([0.0]);
    let f = Frame::new(xs, ys, false);
    let mut s = header(
        &format!("log10(r_hat / r), a = {a}"),
        &f,
        "log10(r_hat / r)",
    );
    for (k, h) in arms.iter().enumerate() {
        let c = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = h
            .bins
            .iter()
            .flat_map(|b| [(b.0, b.2 as f64), (b.1, b.2 as f64)])
            .collect();
        s += &polyline(&f, &pts, c, false);
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{c}\" text-anchor=\"end\">{}</text>",
            W - PAD - 8.0,
            PAD + 16.0 * (k + 1) as f64,
            escape(&h.arm)
        );
    }
    s + "</svg>\n"
}

fn params<T>(items: &[T], get: impl Fn(&T) -> f64) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::new();
    for it in items {
        let p = get(it);
        if !v.contains(&p) {
            v.push(p);
        }
    }
    v
}

/// All SVG files for a result, relative to the study directory.
pub fn render_all(result: &StudyResult) -> Vec<(PathBuf, String)> {
    let mut out = Vec::new();
    for p in &result.fans {
        out.push((
            PathBuf::from(format!("plots/fan_{}.svg", p.panel)),
            render_fan(p),
        ));
    }
    for a in params(&result.lorenz, |l| l.param) {
        let arms: Vec<&LorenzBand> = result.lorenz.iter().filter(|l| l.param == a).collect();
        out.push((
            PathBuf::from(format!("plots/lorenz_a{a}.svg")),
            render_lorenz(a, &arms),
        ));
    }
    for a in params(&result.histograms, |h| h.param) {
        let arms: Vec<&Histogram> = result.histograms.iter().filter(|h| h.param == a).collect();
        out.push((
            PathBuf::from(format!("plots/histogram_a{a}.svg")),
            render_histogram(a, &arms),
        ));
    }
    out
}
