//! Minimal SVG plotting: line series with optional std bands and stacked
//! area charts. Hand-rolled so the output bytes are a pure function of
//! the input data.

use std::io::Write;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#d62728", "#7f7f7f", "#2ca02c", "#9467bd",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional symmetric band half-width per point (a std envelope).
    pub band: Option<Vec<f64>>,
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_L + (v - self.x_min) / span * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_B - (v - self.y_min) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn open_svg(title: &str, x_label: &str, y_label: &str, frame: &Frame) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        title
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 14.0,
        x_label
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" \
         transform=\"rotate(-90 16 {})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        y_label
    ));
    // axes and ticks
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_L,
        MARGIN_T,
        MARGIN_L,
        HEIGHT - MARGIN_B
    ));
    for i in 0..=4 {
        let xv = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0;
        let yv = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
            frame.x(xv),
            HEIGHT - MARGIN_B + 16.0,
            fmt(xv)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
            MARGIN_L - 6.0,
            frame.y(yv) + 3.0,
            fmt(yv)
        ));
    }
    s
}

/// Line plot with one polyline per series and optional shaded std bands.
pub fn write_line_plot(
    series: &[Series],
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> std::io::Result<()> {
    let xs: Vec<f64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for (i, p) in s.points.iter().enumerate() {
            let band = s.band.as_ref().map(|b| b[i]).unwrap_or(0.0);
            ys.push(p.1 - band);
            ys.push(p.1 + band);
        }
    }
    let frame = Frame {
        x_min: xs.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0),
        x_max: xs
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1.0),
        y_min: ys.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0),
        y_max: ys
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1e-6)
            * 1.05,
    };
    let mut svg = open_svg(title, x_label, y_label, &frame);

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if let Some(band) = &s.band {
            let mut pts: Vec<String> = s
                .points
                .iter()
                .zip(band)
                .map(|(p, b)| format!("{},{}", fmt(frame.x(p.0)), fmt(frame.y(p.1 + b))))
                .collect();
            for (p, b) in s.points.iter().zip(band).rev() {
                pts.push(format!("{},{}", fmt(frame.x(p.0)), fmt(frame.y(p.1 - b))));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" opacity=\"0.15\"/>\n",
                pts.join(" "),
                color
            ));
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{},{}", fmt(frame.x(p.0)), fmt(frame.y(p.1))))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            pts.join(" "),
            color
        ));
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            WIDTH - MARGIN_R - 150.0,
            MARGIN_T + 18.0 * si as f64,
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            WIDTH - MARGIN_R - 132.0,
            MARGIN_T + 18.0 * si as f64 + 10.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

/// Stacked area chart: `stacks[i]` holds the per-x masses of category
/// `labels[i]`; masses stack bottom-up in the given order.
pub fn write_stacked_area(
    x: &[f64],
    stacks: &[Vec<f64>],
    labels: &[&str],
    title: &str,
    x_label: &str,
    path: &Path,
) -> std::io::Result<()> {
    assert_eq!(stacks.len(), labels.len());
    let frame = Frame {
        x_min: x.iter().cloned().fold(f64::INFINITY, f64::min),
        x_max: x.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(1.0),
        y_min: 0.0,
        y_max: 1.0,
    };
    let mut svg = open_svg(title, x_label, "probability mass", &frame);
    let mut base = vec![0.0f64; x.len()];
    for (si, stack) in stacks.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let top: Vec<f64> = base.iter().zip(stack).map(|(b, m)| b + m).collect();
        let mut pts: Vec<String> = x
            .iter()
            .zip(&top)
            .map(|(&xv, &yv)| format!("{},{}", fmt(frame.x(xv)), fmt(frame.y(yv))))
            .collect();
        for (&xv, &yv) in x.iter().zip(&base).rev() {
            pts.push(format!("{},{}", fmt(frame.x(xv)), fmt(frame.y(yv))));
        }
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{}\" opacity=\"0.75\" stroke=\"{}\"/>\n",
            pts.join(" "),
            color,
            color
        ));
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            WIDTH - MARGIN_R - 150.0,
            MARGIN_T + 18.0 * si as f64,
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            WIDTH - MARGIN_R - 132.0,
            MARGIN_T + 18.0 * si as f64 + 10.0,
            labels[si]
        ));
        base = top;
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

fn write_file(path: &Path, content: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(content.as_bytes())?;
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_deterministic_valid_svg() {
        let series = vec![
            Series {
                label: "soft".into(),
                points: vec![(0.0, 3.0), (1.0, 2.0), (2.0, 0.5)],
                band: Some(vec![0.2, 0.1, 0.05]),
            },
            Series {
                label: "discrete".into(),
                points: vec![(0.0, 2.8), (1.0, 2.1), (2.0, 0.4)],
                band: None,
            },
        ];
        let p1 = std::env::temp_dir().join("latentlab_svg_a.svg");
        let p2 = std::env::temp_dir().join("latentlab_svg_b.svg");
        write_line_plot(&series, "entropy by layer", "layer", "entropy (nats)", &p1).unwrap();
        write_line_plot(&series, "entropy by layer", "layer", "entropy (nats)", &p2).unwrap();
        let a = std::fs::read(&p1).unwrap();
        let b = std::fs::read(&p2).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<polyline").count(), 2);
        std::fs::remove_file(&p1).unwrap();
        std::fs::remove_file(&p2).unwrap();
    }

    #[test]
    fn stacked_area_stacks_to_one() {
        let x = vec![1.0, 2.0, 3.0];
        let stacks = vec![
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.3, 0.2],
            vec![0.2, 0.2, 0.3],
            vec![0.1, 0.2, 0.3],
        ];
        let labels = vec!["correct_next", "wrong_neighbor", "target", "other"];
        let p = std::env::temp_dir().join("latentlab_svg_stack.svg");
        write_stacked_area(&x, &stacks, &labels, "belief", "step", &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.matches("<polygon").count(), 4);
        std::fs::remove_file(&p).unwrap();
    }
}
