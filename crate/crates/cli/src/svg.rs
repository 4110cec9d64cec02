//! Minimal SVG line and band charts.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub enum Layer {
    /// Filled region between `lower` and `upper`.
    Band {
        x: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        fill: &'static str,
        label: Option<String>,
    },
    Line {
        x: Vec<f64>,
        y: Vec<f64>,
        stroke: &'static str,
        dashed: bool,
        label: Option<String>,
    },
    Points {
        x: Vec<f64>,
        y: Vec<f64>,
        fill: &'static str,
        label: Option<String>,
    },
}

impl Layer {
    fn xs(&self) -> &[f64] {
        match self {
            Layer::Band { x, .. } | Layer::Line { x, .. } | Layer::Points { x, .. } => x,
        }
    }

    fn y_max(&self) -> f64 {
        let ys: &[f64] = match self {
            Layer::Band { upper, .. } => upper,
            Layer::Line { y, .. } | Layer::Points { y, .. } => y,
        };
        ys.iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
    }

    fn legend(&self) -> Option<(&str, &'static str)> {
        match self {
            Layer::Band { label, fill, .. } => label.as_deref().map(|l| (l, *fill)),
            Layer::Line { label, stroke, .. } => label.as_deref().map(|l| (l, *stroke)),
            Layer::Points { label, fill, .. } => label.as_deref().map(|l| (l, *fill)),
        }
    }
}

pub struct Chart {
    pub title: String,
    pub y_label: String,
    /// Tick positions on the x axis with their labels.
    pub x_ticks: Vec<(f64, String)>,
    /// Multiply y values by this for tick labels (100 for percent).
    pub y_scale: f64,
    pub layers: Vec<Layer>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - y / self.y1 * (HEIGHT - TOP - BOTTOM)
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let xs = self.layers.iter().flat_map(|l| l.xs().iter().copied());
        let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(x), b.max(x))
        });
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        let top = self.layers.iter().map(Layer::y_max).fold(0.0, f64::max);
        let step = nice_step(if top > 0.0 { top } else { 1.0 } / 5.0);
        let y1 = (top / step).ceil().max(1.0) * step;
        let f = Frame { x0, x1, y1 };

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );

        // Axes and grid.
        let (bx, by) = (f.px(x0), f.py(0.0));
        let _ = writeln!(
            s,
            r##"<path d="M{bx:.1},{:.1} V{by:.1} H{:.1}" stroke="#333" fill="none"/>"##,
            f.py(y1),
            f.px(x1)
        );
        let mut v = 0.0;
        while v <= y1 * (1.0 + 1e-9) {
            let y = f.py(v);
            let _ = writeln!(
                s,
                r##"<line x1="{bx:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                f.px(x1),
                bx - 6.0,
                y + 4.0,
                tick_label(v * self.y_scale, step * self.y_scale)
            );
            v += step;
        }
        for (x, label) in &self.x_ticks {
            if *x < x0 || *x > x1 {
                continue;
            }
            let px = f.px(*x);
            let _ = writeln!(
                s,
                r##"<line x1="{px:.1}" y1="{by:.1}" x2="{px:.1}" y2="{:.1}" stroke="#333"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                by + 5.0,
                by + 18.0,
                escape(label)
            );
        }
        let _ = writeln!(
            s,
            r#"<text transform="translate(16,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (TOP + HEIGHT - BOTTOM) / 2.0,
            escape(&self.y_label)
        );

        for layer in &self.layers {
            match layer {
                Layer::Band {
                    x,
                    lower,
                    upper,
                    fill,
                    ..
                } => {
                    let mut d = String::new();
                    for (k, (x, u)) in x.iter().zip(upper).enumerate() {
                        let _ = write!(
                            d,
                            "{}{:.2},{:.2} ",
                            if k == 0 { "M" } else { "L" },
                            f.px(*x),
                            f.py(*u)
                        );
                    }
                    for (x, l) in x.iter().zip(lower).rev() {
                        let _ = write!(d, "L{:.2},{:.2} ", f.px(*x), f.py(*l));
                    }
                    let _ = writeln!(
                        s,
                        r#"<path class="band" d="{}Z" fill="{fill}" fill-opacity="0.5" stroke="none"/>"#,
                        d
                    );
                }
                Layer::Line {
                    x,
                    y,
                    stroke,
                    dashed,
                    ..
                } => {
                    let pts: Vec<String> = x
                        .iter()
                        .zip(y)
                        .map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y)))
                        .collect();
                    let dash = if *dashed {
                        r#" stroke-dasharray="5,3""#
                    } else {
                        ""
                    };
                    let _ = writeln!(
                        s,
                        r#"<polyline class="line" points="{}" fill="none" stroke="{stroke}" stroke-width="1.6"{dash}/>"#,
                        pts.join(" ")
                    );
                }
                Layer::Points { x, y, fill, .. } => {
                    for (x, y) in x.iter().zip(y) {
                        let _ = writeln!(
                            s,
                            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="2.5" fill="{fill}"/>"#,
                            f.px(*x),
                            f.py(*y)
                        );
                    }
                }
            }
        }

        let mut ly = TOP + 8.0;
        for (label, color) in self.layers.iter().filter_map(Layer::legend) {
            let lx = WIDTH - RIGHT - 220.0;
            let _ = writeln!(
                s,
                r#"<rect x="{lx:.1}" y="{:.1}" width="14" height="8" fill="{color}"/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
                ly - 8.0,
                lx + 20.0,
                escape(label)
            );
            ly += 16.0;
        }
        s.push_str("</svg>\n");
        s
    }
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.digits$}")
}

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart() -> Chart {
        Chart {
            title: "a < b".into(),
            y_label: "Y".into(),
            x_ticks: vec![(1.0, "Mar 1".into()), (99.0, "off".into())],
            y_scale: 100.0,
            layers: vec![
                Layer::Band {
                    x: vec![1.0, 2.0, 3.0],
                    lower: vec![0.0, 0.01, 0.0],
                    upper: vec![0.01, 0.03, 0.02],
                    fill: "#bbb",
                    label: Some("95%".into()),
                },
                Layer::Line {
                    x: vec![1.0, 2.0, 3.0],
                    y: vec![0.005, 0.02, 0.01],
                    stroke: "black",
                    dashed: false,
                    label: None,
                },
                Layer::Points {
                    x: vec![1.0, 2.0],
                    y: vec![0.004, 0.021],
                    fill: "red",
                    label: Some("observed".into()),
                },
            ],
        }
    }

    #[test]
    fn renders_each_layer() {
        let s = chart().render();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches(r#"class="band""#).count(), 1);
        assert_eq!(s.matches(r#"class="line""#).count(), 1);
        assert_eq!(s.matches(r#"class="point""#).count(), 2);
        assert!(s.contains("a &lt; b"));
        assert!(s.contains("Mar 1") && !s.contains(">off<"));
        let opens = s.matches('<').count();
        let closes = s.matches('>').count();
        assert_eq!(opens, closes);
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_step(0.0042), 0.005);
        assert_eq!(nice_step(0.011), 0.02);
        assert_eq!(tick_label(2.5, 0.5), "2.5");
        assert_eq!(tick_label(3.0, 1.0), "3");
    }

    #[test]
    fn empty_chart_still_renders() {
        let c = Chart {
            title: String::new(),
            y_label: String::new(),
            x_ticks: vec![],
            y_scale: 1.0,
            layers: vec![],
        };
        assert!(c.render().contains("</svg>"));
    }
}
