//! Minimal SVG line plots with logarithmic axes.

use std::fmt::Write as _;

use super::table::Table;

const WIDTH: f64 = 680.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: usize,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0, log };
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil().max(lo + 1.0);
        } else {
            lo = lo.min(0.0);
            hi = if hi > lo { hi * 1.1 } else { lo + 1.0 };
        }
        Axis { lo, hi, log }
    }

    /// Position in `[0, 1]`, or `None` for values a log axis cannot show.
    fn unit(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some((v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i32..=self.hi as i32).map(|k| (10f64.powi(k), format!("1e{k}"))).collect()
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

/// Renders the plot. Output depends only on the plot description.
pub fn render(plot: &Plot) -> String {
    let xs = Axis::fit(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), true);
    let ys = Axis::fit(plot.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), plot.log_y);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |v: f64| xs.unit(v).map(|u| LEFT + u * pw);
    let py = |v: f64| ys.unit(v).map(|u| TOP + (1.0 - u) * ph);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.3}" y="24" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&plot.title));
    for (v, label) in xs.ticks() {
        let x = px(v).expect("tick on axis");
        let _ = writeln!(s, r##"<line x1="{x:.3}" y1="{TOP}" x2="{x:.3}" y2="{:.3}" stroke="#dddddd"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{label}</text>"#, TOP + ph + 18.0);
    }
    for (v, label) in ys.ticks() {
        let y = py(v).expect("tick on axis");
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.3}" x2="{:.3}" y2="{y:.3}" stroke="#dddddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.3}" height="{ph:.3}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 16.0, escape(&plot.x_label));
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.3}" text-anchor="middle" transform="rotate(-90 20 {:.3})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );
    for (k, series) in plot.series.iter().enumerate() {
        let color = PALETTE[series.color % PALETTE.len()];
        let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = series
            .points
            .iter()
            .filter_map(|&(x, y)| Some(format!("{:.3},{:.3}", px(x)?, py(y)?)))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8"{dash} points="{}"/>"#, pts.join(" "));
            if !series.dashed {
                for p in &pts {
                    let (x, y) = p.split_once(',').expect("formatted pair");
                    let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
                }
            }
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.3}" y1="{ly:.3}" x2="{:.3}" y2="{ly:.3}" stroke="{color}" stroke-width="1.8"{dash}/>"#, lx + 24.0);
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&series.label));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Estimator, energy error and an `N^{-1/2}` guide against DOFs.
pub fn convergence_plot(table: &Table, title: &str) -> Plot {
    let eta = table.pairs("dofs", "eta_h");
    let err = table.pairs("dofs", "energy_error");
    let mut series = vec![Series {
        label: "eta_h".into(),
        points: eta.clone(),
        color: 0,
        dashed: false,
    }];
    if !err.is_empty() {
        series.push(Series {
            label: "energy error".into(),
            points: err,
            color: 1,
            dashed: false,
        });
    }
    if let (Some(&(d0, e0)), Some(&(d1, _))) = (eta.first(), eta.last()) {
        series.push(Series {
            label: "slope -1/2".into(),
            points: vec![(d0, e0), (d1, e0 * (d1 / d0).powf(-0.5))],
            color: 7,
            dashed: true,
        });
    }
    Plot {
        title: title.into(),
        x_label: "DoFs".into(),
        y_label: "estimator / error".into(),
        log_y: true,
        series,
    }
}

pub fn efficiency_plot(table: &Table, title: &str) -> Plot {
    Plot {
        title: title.into(),
        x_label: "DoFs".into(),
        y_label: "efficiency index".into(),
        log_y: false,
        series: vec![Series {
            label: "eta_h / error".into(),
            points: table.pairs("dofs", "eff_index"),
            color: 2,
            dashed: false,
        }],
    }
}

/// One colour per run: estimator solid, energy error dashed.
pub fn overlay_plot(runs: &[(String, Table)]) -> Plot {
    let mut series = Vec::new();
    for (k, (label, table)) in runs.iter().enumerate() {
        series.push(Series {
            label: format!("{label} eta_h"),
            points: table.pairs("dofs", "eta_h"),
            color: k,
            dashed: false,
        });
        let err = table.pairs("dofs", "energy_error");
        if !err.is_empty() {
            series.push(Series {
                label: format!("{label} error"),
                points: err,
                color: k,
                dashed: true,
            });
        }
    }
    Plot {
        title: "Comparison".into(),
        x_label: "DoFs".into(),
        y_label: "estimator / error".into(),
        log_y: true,
        series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table::parse("dofs,eta_h,energy_error,eff_index\n100,1e0,5e-1,2e0\n400,5e-1,2.5e-1,2e0\n1600,2.5e-1,,\n").unwrap()
    }

    #[test]
    fn plot_is_a_function_of_the_table() {
        let t = table();
        let a = render(&convergence_plot(&t, "ex"));
        let b = render(&convergence_plot(&Table::parse(&t.to_csv()).unwrap(), "ex"));
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 3);
    }

    #[test]
    fn log_axis_spans_whole_decades() {
        let ax = Axis::fit([100.0, 1600.0].into_iter(), true);
        assert_eq!((ax.lo, ax.hi), (2.0, 4.0));
        assert_eq!(ax.unit(100.0), Some(0.0));
        assert_eq!(ax.unit(0.0), None);
    }

    #[test]
    fn empty_series_still_renders() {
        let t = Table::parse("dofs,eta_h,energy_error,eff_index\n100,1e0,,\n").unwrap();
        let s = render(&efficiency_plot(&t, "none"));
        assert!(!s.contains("<polyline"));
    }
}
