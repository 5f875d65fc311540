//! Plot data: aggregated CSVs and small SVG charts derived from run outputs.
//! Output bytes depend only on the input files.

use crate::aggregate::AggRow;
use std::collections::BTreeMap;
use std::fmt::Write;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Mean training return per episode across the runs of each group, with a
/// trailing moving average of width `window`.
pub fn convergence(groups: &BTreeMap<String, Vec<Vec<f64>>>, window: usize) -> (String, Vec<Series>) {
    let mut csv = String::from("group,episode,mean_return,smoothed_return\n");
    let mut series = Vec::new();
    for (group, runs) in groups {
        let len = runs.iter().map(Vec::len).min().unwrap_or(0);
        let means: Vec<f64> = (0..len)
            .map(|e| runs.iter().map(|r| r[e]).sum::<f64>() / runs.len() as f64)
            .collect();
        let mut points = Vec::with_capacity(len);
        for (e, m) in means.iter().enumerate() {
            let lo = (e + 1).saturating_sub(window.max(1));
            let sm = means[lo..=e].iter().sum::<f64>() / (e + 1 - lo) as f64;
            writeln!(csv, "{group},{e},{m},{sm}").unwrap();
            points.push((e as f64, sm));
        }
        series.push(Series {
            label: group.clone(),
            points,
        });
    }
    (csv, series)
}

/// Parses a metrics CSV into its `return` column.
pub fn returns_column(csv: &str) -> Result<Vec<f64>, String> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or("empty metrics file")?;
    let col = header
        .split(',')
        .position(|h| h == "return")
        .ok_or("metrics file has no return column")?;
    lines
        .map(|l| {
            l.split(',')
                .nth(col)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| format!("bad metrics row `{l}`"))
        })
        .collect()
}

/// Retention against ratio, one series per lg λ.
pub fn surface_series(csv: &str) -> Result<Vec<Series>, String> {
    let mut by_lambda: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for l in csv.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() < 4 {
            return Err(format!("bad surface row `{l}`"));
        }
        let ratio: f64 = f[0].parse().map_err(|_| format!("bad ratio in `{l}`"))?;
        let ret: f64 = f[3].parse().map_err(|_| format!("bad retention in `{l}`"))?;
        by_lambda.entry(f[1].to_string()).or_default().push((ratio, ret));
    }
    Ok(by_lambda
        .into_iter()
        .map(|(lg, points)| Series {
            label: format!("lg lambda {lg}"),
            points,
        })
        .collect())
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn axes(s: &mut String, x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (PAD, W - PAD / 2.0, H - PAD, PAD);
    writeln!(s, r#"<path d="M{x0} {y1}V{y0}H{x1}" stroke="black" fill="none"/>"#).unwrap();
    for (v, px) in [(x.0, x0), (x.1, x1)] {
        writeln!(s, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, y0 + 15.0, tick(v)).unwrap();
    }
    for (v, py) in [(y.0, y0), (y.1, y1)] {
        writeln!(s, r#"<text x="{}" y="{py}" text-anchor="end">{}</text>"#, x0 - 5.0, tick(v)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 20.0, escape(xlabel)).unwrap();
    writeln!(
        s,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(ylabel)
    )
    .unwrap();
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xr = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let mut s = header(title);
    axes(&mut s, xr, yr, xlabel, ylabel);
    let px = |x: f64| PAD + (x - xr.0) / (xr.1 - xr.0) * (W - 1.5 * PAD);
    let py = |y: f64| H - PAD - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * PAD);
    for (i, se) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for &(x, y) in se.points.iter().filter(|p| p.1.is_finite()) {
            let cmd = if d.is_empty() { 'M' } else { 'L' };
            write!(d, "{cmd}{:.2} {:.2}", px(x), py(y)).unwrap();
        }
        writeln!(s, r#"<path d="{d}" stroke="{color}" fill="none" stroke-width="1.5"/>"#).unwrap();
        let ly = PAD + 14.0 * i as f64;
        writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            W - PAD * 2.5,
            escape(&se.label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// One bar per group for `metric`, with a ±std whisker.
pub fn bar_chart(title: &str, metric: &str, rows: &[AggRow]) -> String {
    let rows: Vec<&AggRow> = rows.iter().filter(|r| r.metric == metric).collect();
    let yr = range(
        rows.iter()
            .flat_map(|r| [r.mean - r.std, r.mean + r.std])
            .chain(std::iter::once(0.0)),
    );
    let mut s = header(title);
    axes(&mut s, (0.0, rows.len() as f64), yr, "group", metric);
    let py = |y: f64| H - PAD - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * PAD);
    let slot = (W - 1.5 * PAD) / rows.len().max(1) as f64;
    for (i, r) in rows.iter().enumerate() {
        let x = PAD + slot * (i as f64 + 0.15);
        let (top, base) = (py(r.mean.max(0.0)), py(r.mean.min(0.0)));
        let color = COLORS[i % COLORS.len()];
        writeln!(
            s,
            r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            slot * 0.7,
            base - top
        )
        .unwrap();
        let cx = x + slot * 0.35;
        writeln!(
            s,
            r#"<path d="M{cx:.2} {:.2}V{:.2}" stroke="black"/>"#,
            py(r.mean - r.std),
            py(r.mean + r.std)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle" font-size="9">{}</text>"#,
            H - PAD + 28.0 + 10.0 * (i % 2) as f64,
            escape(&r.group)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
