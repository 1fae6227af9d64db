//! Hand-rolled SVG output: vertex-value renderings for presets with a
//! planar embedding, and log-scale decay plots for experiment series.

use std::fmt::Write;

/// Planar realization of a preset: pure contractions with ratio `ratio`
/// toward `fix[i]`, so positions follow from the address alone.
pub struct Embedding {
    ratio: f64,
    fix: Vec<(f64, f64)>,
}

const SQ3: f64 = 1.732_050_807_568_877_2;

/// Embeddings for the presets that ship coordinates.
pub fn embedding(name: &str) -> Option<Embedding> {
    let tri = [(0.0, 0.0), (1.0, 0.0), (0.5, SQ3 / 2.0)];
    match name {
        "sg" | "bilateral-sg" => Some(Embedding {
            ratio: 0.5,
            fix: tri.to_vec(),
        }),
        "sg3" => {
            let mid = |a: (f64, f64), b: (f64, f64)| ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
            Some(Embedding {
                ratio: 1.0 / 3.0,
                fix: vec![
                    tri[0],
                    tri[1],
                    tri[2],
                    mid(tri[0], tri[1]),
                    mid(tri[1], tri[2]),
                    mid(tri[0], tri[2]),
                ],
            })
        }
        "vicsek" => Some(Embedding {
            ratio: 1.0 / 3.0,
            fix: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)],
        }),
        _ => None,
    }
}

impl Embedding {
    /// Image of corner `c` under the composition the word spells.
    pub fn position(&self, word: &[u8], corner: usize) -> (f64, f64) {
        let (mut x, mut y) = self.fix[corner];
        for &l in word.iter().rev() {
            let (fx, fy) = self.fix[l as usize];
            x = self.ratio * x + (1.0 - self.ratio) * fx;
            y = self.ratio * y + (1.0 - self.ratio) * fy;
        }
        (x, y)
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Diverging blue-beige-red map on [0, 1].
fn color(t: f64) -> String {
    let stops = [(0x2c, 0x7b, 0xb6), (0xff, 0xff, 0xbf), (0xd7, 0x19, 0x1c)];
    let t = t.clamp(0.0, 1.0);
    let (lo, hi, s) = if t < 0.5 {
        (stops[0], stops[1], t * 2.0)
    } else {
        (stops[1], stops[2], t * 2.0 - 1.0)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(lo.0 as f64, hi.0 as f64, s).round() as u8,
        lerp(lo.1 as f64, hi.1 as f64, s).round() as u8,
        lerp(lo.2 as f64, hi.2 as f64, s).round() as u8
    )
}

/// Render vertex values at their embedded positions, with the cell edges
/// underneath. Points carry (position, value, address label).
pub fn vertex_svg(
    level: usize,
    points: &[((f64, f64), f64, String)],
    edges: &[((f64, f64), (f64, f64))],
) -> String {
    let width = 640.0;
    let margin = 28.0;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &((x, y), _, _) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let span_x = (x1 - x0).max(1e-9);
    let span_y = (y1 - y0).max(1e-9);
    let scale = (width - 2.0 * margin) / span_x;
    let height = span_y * scale + 2.0 * margin + 22.0;
    let px = |x: f64| margin + (x - x0) * scale;
    let py = |y: f64| margin + (y1 - y) * scale;

    let (mut vmin, mut vmax) = (f64::MAX, f64::MIN);
    for &(_, v, _) in points {
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let span_v = vmax - vmin;
    let radius = (16.0 * 0.55_f64.powi(level as i32)).clamp(1.6, 7.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for &((ax, ay), (bx, by)) in edges {
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#b0b0b0\" stroke-width=\"0.5\"/>",
            px(ax),
            py(ay),
            px(bx),
            py(by)
        );
    }
    for ((x, y), v, label) in points {
        let t = if span_v > 0.0 { (v - vmin) / span_v } else { 0.5 };
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"{}\"><title>{} {:.6e}</title></circle>",
            px(*x),
            py(*y),
            radius,
            color(t),
            label,
            v
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{margin:.0}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">min {vmin:.6e} max {vmax:.6e}</text>",
        height - 8.0
    );
    s.push_str("</svg>\n");
    s
}

/// Log-scale decay plot of one experiment series. Returns `None` when
/// fewer than two points are positive.
pub fn series_svg(label: &str, points: &[(usize, f64)]) -> Option<String> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, v)| v > 0.0 && v.is_finite())
        .map(|&(m, v)| (m as f64, v.log10()))
        .collect();
    if data.len() < 2 {
        return None;
    }
    let (width, height) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (64.0, 16.0, 30.0, 44.0);
    let xmin = data.first().map(|p| p.0).unwrap_or(0.0);
    let xmax = data.last().map(|p| p.0).unwrap_or(1.0);
    let (xmin, xmax) = if xmax > xmin { (xmin, xmax) } else { (xmin - 0.5, xmax + 0.5) };
    let mut ymin = f64::MAX;
    let mut ymax = f64::MIN;
    for &(_, y) in &data {
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if ymax - ymin < 1e-9 {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let sx = |x: f64| ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
    let sy = |y: f64| height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{ml:.0}\" y=\"18\" font-family=\"monospace\" font-size=\"12\">{label} (log10 scale)</text>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{ml:.0}\" y1=\"{:.2}\" x2=\"{ml:.0}\" y2=\"{mt:.0}\" stroke=\"black\" stroke-width=\"1\"/>",
        height - mb
    );
    let _ = writeln!(
        s,
        "<line x1=\"{ml:.0}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
        height - mb,
        width - mr,
        height - mb
    );
    let xstep = (((xmax - xmin) / 10.0).ceil() as usize).max(1);
    let mut m = xmin.ceil() as i64;
    while m as f64 <= xmax {
        let x = sx(m as f64);
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"black\" stroke-width=\"1\"/>",
            height - mb,
            height - mb + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{m}</text>",
            height - mb + 18.0
        );
        m += xstep as i64;
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">m</text>",
        (ml + width - mr) / 2.0,
        height - 8.0
    );
    let klo = ymin.ceil() as i64;
    let khi = ymax.floor() as i64;
    if klo <= khi {
        for k in klo..=khi {
            let y = sy(k as f64);
            let _ = writeln!(
                s,
                "<line x1=\"{ml:.0}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#d8d8d8\" stroke-width=\"0.6\"/>",
                width - mr
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">1e{k}</text>",
                ml - 6.0,
                y + 4.0
            );
        }
    } else {
        for y in [ymin, ymax] {
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">1e{y:.2}</text>",
                ml - 6.0,
                sy(y) + 4.0
            );
        }
    }
    let mut path = String::new();
    for (x, y) in &data {
        let _ = write!(path, "{:.2},{:.2} ", sx(*x), sy(*y));
    }
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>",
        path.trim_end()
    );
    for (x, y) in &data {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>",
            sx(*x),
            sy(*y)
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}
