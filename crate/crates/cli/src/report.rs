//! Summary statistics and plot-ready tables for closed-loop traces.

use padloop_core::controller::NULL_STIMULUS_ID;
use padloop_core::data::io::{csv_line, fmt_f64, Preamble};
use padloop_core::sim::LoopTrace;
use padloop_core::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub name: String,
    pub control: bool,
    pub seed: u64,
    pub steps: usize,
    pub mean_q: f64,
    pub mean_q_est: f64,
    pub frac_q_at_least: f64,
    pub q_r: f64,
    pub stimuli_nonnull: usize,
    pub stimuli_distinct: usize,
}

pub fn summarize(name: &str, trace: &LoopTrace, q_r: f64) -> TraceSummary {
    let n = trace.steps.len();
    let mean_q_est = if n == 0 {
        f64::NAN
    } else {
        trace.steps.iter().map(|s| s.qot_post.mean).sum::<f64>() / n as f64
    };
    let mut ids: Vec<u32> = trace
        .steps
        .iter()
        .map(|s| s.stimulus_id)
        .filter(|&id| id != NULL_STIMULUS_ID)
        .collect();
    let nonnull = ids.len();
    ids.sort_unstable();
    ids.dedup();
    TraceSummary {
        name: name.to_string(),
        control: trace.meta.control_enabled,
        seed: trace.meta.seed,
        steps: n,
        mean_q: trace.mean_q(),
        mean_q_est,
        frac_q_at_least: trace.frac_at_least(q_r),
        q_r,
        stimuli_nonnull: nonnull,
        stimuli_distinct: ids.len(),
    }
}

/// First minus second, for the paired comparison row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDiff {
    pub mean_q: f64,
    pub mean_q_est: f64,
    pub frac_q_at_least: f64,
}

pub fn paired(a: &TraceSummary, b: &TraceSummary) -> PairedDiff {
    PairedDiff {
        mean_q: a.mean_q - b.mean_q,
        mean_q_est: a.mean_q_est - b.mean_q_est,
        frac_q_at_least: a.frac_q_at_least - b.frac_q_at_least,
    }
}

const SUMMARY_HEADER: [&str; 11] = [
    "row",
    "trace",
    "control",
    "seed",
    "steps",
    "mean_q",
    "mean_q_est",
    "frac_q_at_least",
    "q_r",
    "stimuli_nonnull",
    "stimuli_distinct",
];

pub fn summary_csv(rows: &[TraceSummary]) -> Result<String> {
    let diff = (rows.len() == 2).then(|| paired(&rows[0], &rows[1]));
    let n = rows.len() + usize::from(diff.is_some());
    let mut s = Preamble::render("report", &[("rows", n.to_string())]);
    s += &csv_line(SUMMARY_HEADER.map(String::from))?;
    for r in rows {
        s += &csv_line([
            "trace".to_string(),
            r.name.clone(),
            if r.control { "on" } else { "off" }.to_string(),
            r.seed.to_string(),
            r.steps.to_string(),
            fmt_f64(r.mean_q),
            fmt_f64(r.mean_q_est),
            fmt_f64(r.frac_q_at_least),
            fmt_f64(r.q_r),
            r.stimuli_nonnull.to_string(),
            r.stimuli_distinct.to_string(),
        ])?;
    }
    if let Some(d) = diff {
        s += &csv_line([
            "paired".to_string(),
            format!("{} - {}", rows[0].name, rows[1].name),
            String::new(),
            String::new(),
            String::new(),
            fmt_f64(d.mean_q),
            fmt_f64(d.mean_q_est),
            fmt_f64(d.frac_q_at_least),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    Ok(s)
}

/// One row per step and trace: true and estimated QoT with a two-sigma band.
pub fn steps_csv(traces: &[(String, &LoopTrace)]) -> Result<String> {
    let n: usize = traces.iter().map(|(_, t)| t.steps.len()).sum();
    let mut s = Preamble::render("report-steps", &[("rows", n.to_string())]);
    let header = [
        "trace", "k", "q_true", "q_mean", "q_lo", "q_hi", "prob", "eps", "gate", "stimulus_id",
    ];
    s += &csv_line(header.map(String::from))?;
    for (name, t) in traces {
        for st in &t.steps {
            let sd = st.qot_post.var.max(0.0).sqrt();
            s += &csv_line([
                name.clone(),
                st.k.to_string(),
                fmt_f64(st.q_true),
                fmt_f64(st.qot_post.mean),
                fmt_f64(st.qot_post.mean - 2.0 * sd),
                fmt_f64(st.qot_post.mean + 2.0 * sd),
                fmt_f64(st.prob),
                fmt_f64(st.eps),
                st.gate.to_string(),
                st.stimulus_id.to_string(),
            ])?;
        }
    }
    Ok(s)
}
