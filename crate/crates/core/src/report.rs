//! Loss curves as a self-contained SVG document.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::training::History;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 56.0;
const TICKS: usize = 5;

const TRAIN_COLOR: &str = "#1f77b4";
const VAL_COLOR: &str = "#ff7f0e";

struct Frame {
    epoch_lo: f64,
    epoch_hi: f64,
    loss_lo: f64,
    loss_hi: f64,
}

impl Frame {
    fn x(&self, epoch: f64) -> f64 {
        let span = self.epoch_hi - self.epoch_lo;
        if span == 0.0 {
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0
        } else {
            LEFT + (epoch - self.epoch_lo) / span * (WIDTH - LEFT - RIGHT)
        }
    }

    fn y(&self, loss: f64) -> f64 {
        let plot = HEIGHT - TOP - BOTTOM;
        TOP + (self.loss_hi - loss) / (self.loss_hi - self.loss_lo) * plot
    }
}

fn polyline(out: &mut String, frame: &Frame, points: impl Iterator<Item = (f64, f64)>, color: &str, label: &str) {
    let coords: Vec<String> = points
        .map(|(e, l)| format!("{:.2},{:.2}", frame.x(e), frame.y(l)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{label}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
        coords.join(" ")
    );
}

/// Train and validation loss against epoch with axes, ticks and legend.
pub fn loss_curve_svg(history: &History) -> Result<String> {
    if history.is_empty() {
        return Err(Error::Validation("history has no records to plot".into()));
    }
    let recs = &history.records;
    let losses = recs.iter().flat_map(|r| [r.train_loss, r.val_loss]);
    let (mut lo, mut hi) = losses.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    lo = lo.min(0.0);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let frame = Frame {
        epoch_lo: recs[0].epoch as f64,
        epoch_hi: recs[recs.len() - 1].epoch as f64,
        loss_lo: lo,
        loss_hi: hi,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="26" text-anchor="middle" font-size="15">Loss vs Validation Loss</text>"#,
        WIDTH / 2.0
    );
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y1:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#);

    for i in 0..TICKS {
        let loss = lo + (hi - lo) * i as f64 / (TICKS - 1) as f64;
        let y = frame.y(loss);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{loss:.3}</text>"#,
            x0 - 7.0,
            y + 4.0
        );
    }
    let span = recs[recs.len() - 1].epoch - recs[0].epoch;
    let step = span.div_ceil(TICKS).max(1);
    for epoch in (recs[0].epoch..=recs[recs.len() - 1].epoch).step_by(step) {
        let x = frame.x(epoch as f64);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y1:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y1 + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{epoch}</text>"#, y1 + 18.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Epoch</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">Loss</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    polyline(&mut s, &frame, recs.iter().map(|r| (r.epoch as f64, r.train_loss)), TRAIN_COLOR, "train_loss");
    polyline(&mut s, &frame, recs.iter().map(|r| (r.epoch as f64, r.val_loss)), VAL_COLOR, "val_loss");

    let lx = x1 - 150.0;
    for (i, (color, label)) in [(TRAIN_COLOR, "loss"), (VAL_COLOR, "val_loss")].iter().enumerate() {
        let ly = y0 + 12.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, lx + 30.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}
