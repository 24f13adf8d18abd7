//! Plain-text summaries and minimal SVG charts of pruning runs.

use std::fmt::Write;

use crate::cluster::MssCurve;
use crate::knee::KneeResult;
use crate::planner::PruneOutcome;

/// Accuracy of the model before and after pruning, on the same data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyPair {
    pub base: f64,
    pub pruned: f64,
}

impl AccuracyPair {
    /// Change in percentage points.
    pub fn delta_points(&self) -> f64 {
        100.0 * (self.pruned - self.base)
    }
}

pub fn summary(outcome: &PruneOutcome, acc: AccuracyPair) -> String {
    let mut s = String::new();
    let remaining = 100.0 * outcome.flops_after as f64 / outcome.flops_before.max(1) as f64;
    writeln!(s, "base_accuracy={:.6}", acc.base).unwrap();
    writeln!(s, "pruned_accuracy={:.6}", acc.pruned).unwrap();
    writeln!(s, "delta_accuracy_points={:.4}", acc.delta_points()).unwrap();
    writeln!(s, "flops_before={}", outcome.flops_before).unwrap();
    writeln!(s, "flops_after={}", outcome.flops_after).unwrap();
    writeln!(s, "remaining_flops_percent={remaining:.4}").unwrap();
    writeln!(s, "speedup={:.4}", outcome.speedup()).unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:>5}  {:>6}  {:>6}  {:>14}  {:>14}  note",
        "layer", "N", "k", "flops_before", "flops_after"
    )
    .unwrap();
    for r in &outcome.reports {
        let note = match (&r.warning, r.knee.as_ref().and_then(|k| k.k_prime)) {
            (Some(w), _) => format!("kept all: {w}"),
            (None, Some(k)) => format!("knee at k={k}"),
            (None, None) => String::new(),
        };
        writeln!(
            s,
            "{:>5}  {:>6}  {:>6}  {:>14}  {:>14}  {note}",
            r.layer_id, r.n_components, r.k_selected, r.flops_before, r.flops_after
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "config:").unwrap();
    for (k, v) in &outcome.config {
        writeln!(s, "  {k}={v}").unwrap();
    }
    s
}

/// Line chart of an MSS curve, its polynomial fit, and the knee.
pub fn mss_svg(curve: &MssCurve, knee: Option<&KneeResult>) -> String {
    const W: f64 = 480.0;
    const H: f64 = 300.0;
    const M: f64 = 40.0;
    let ks = curve.ks();
    let ys = curve.scores();
    let mut all: Vec<f64> = ys.clone();
    if let Some(k) = knee {
        all.extend(&k.fitted);
    }
    let (x0, x1) = (ks[0] as f64, *ks.last().unwrap() as f64);
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let yspan = if hi > lo { hi - lo } else { 1.0 };
    let px = |x: f64| M + (x - x0) / xspan * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - lo) / yspan * (H - 2.0 * M);
    let points = |vals: &[f64]| {
        ks.iter()
            .zip(vals)
            .map(|(&k, &y)| format!("{:.2},{:.2}", px(k as f64), py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{M},{M} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = H - M,
        r = W - M
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{M}" y="{t}" font-size="12">layer {} MSS, k = {x0}..{x1}, MSS {lo:.4}..{hi:.4}</text>"#,
        curve.layer_id,
        t = M - 12.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        points(&ys)
    )
    .unwrap();
    if let Some(k) = knee {
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="gray" stroke-dasharray="4 3"/>"#,
            points(&k.fitted)
        )
        .unwrap();
        if let Some(kp) = k.k_prime {
            let y = curve.entries[&kp];
            writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="crimson"/>"#,
                px(kp as f64),
                py(y)
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="crimson">k={kp}</text>"#,
                px(kp as f64) + 6.0,
                py(y) + 14.0
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
