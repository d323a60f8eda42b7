use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::datasets::{ElicitationDataset, InductionDataset};
use super::io::{
    csv_line, fmt_f64, load_json, parse_err, parse_f64, read_csv_body, read_text, save_json, split_preamble,
    write_atomic, Preamble,
};
use crate::error::{Error, Result};
use crate::gp::pad::{PadPosterior, PAD_DIMS};
use crate::gp::perf::QotPosterior;
use crate::signal::FeatureMode;
use crate::sim::{LoopMeta, LoopTrace, TraceStep};

pub const PAD_NAMES: [&str; 3] = ["pleasure", "arousal", "dominance"];

fn mode_of(path: &Path, pre: &Preamble) -> Result<FeatureMode> {
    let m = pre.get(path, "mode")?;
    m.parse().map_err(|_| parse_err(path, 1, "mode", format!("unknown feature mode `{m}`")))
}

fn elicitation_header(mode: FeatureMode) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend(mode.feature_names());
    h.extend(PAD_NAMES.iter().map(|s| s.to_string()));
    h
}

fn induction_header(mode: FeatureMode) -> Vec<String> {
    let mut h = vec!["trial".to_string()];
    h.extend(mode.feature_names());
    h.push("q".into());
    h.extend(PAD_NAMES.iter().map(|s| format!("{s}_true")));
    h
}

fn row_values(m: &DMatrix<f64>, r: usize) -> impl Iterator<Item = String> + '_ {
    (0..m.ncols()).map(move |c| fmt_f64(m[(r, c)]))
}

pub fn elicitation_to_string(d: &ElicitationDataset) -> Result<String> {
    d.validate()?;
    let mut s = Preamble::render(
        "elicitation",
        &[("mode", d.mode.as_str().to_string()), ("rows", d.len().to_string())],
    );
    s += &csv_line(elicitation_header(d.mode))?;
    for r in 0..d.len() {
        let fields = std::iter::once(d.ids[r].clone())
            .chain(row_values(&d.features, r))
            .chain(row_values(&d.labels, r));
        s += &csv_line(fields)?;
    }
    Ok(s)
}

pub fn save_elicitation(path: &Path, d: &ElicitationDataset) -> Result<()> {
    write_atomic(path, elicitation_to_string(d)?.as_bytes())
}

pub fn parse_elicitation(path: &Path, text: &str) -> Result<ElicitationDataset> {
    let (pre, body) = split_preamble(path, text, "elicitation")?;
    let mode = mode_of(path, &pre)?;
    let rows = pre.get_usize(path, "rows")?;
    let header = elicitation_header(mode);
    let dim = mode.dim();
    let mut ids = Vec::with_capacity(rows);
    let mut feats = Vec::with_capacity(rows * dim);
    let mut labels = Vec::with_capacity(rows * PAD_DIMS);
    read_csv_body(path, body, &header, rows, |line, rec| {
        ids.push(rec[0].to_string());
        for c in 1..=dim {
            feats.push(parse_f64(path, line, &header[c], &rec[c])?);
        }
        for c in dim + 1..dim + 1 + PAD_DIMS {
            labels.push(parse_f64(path, line, &header[c], &rec[c])?);
        }
        Ok(())
    })?;
    let d = ElicitationDataset {
        mode,
        ids,
        features: DMatrix::from_row_slice(rows, dim, &feats),
        labels: DMatrix::from_row_slice(rows, PAD_DIMS, &labels),
    };
    d.validate().map_err(|e| parse_err(path, 0, "dataset", e.to_string()))?;
    Ok(d)
}

pub fn load_elicitation(path: &Path) -> Result<ElicitationDataset> {
    parse_elicitation(path, &read_text(path)?)
}

pub fn induction_to_string(d: &InductionDataset) -> Result<String> {
    d.validate()?;
    let mut s = Preamble::render(
        "induction",
        &[("mode", d.mode.as_str().to_string()), ("rows", d.len().to_string())],
    );
    s += &csv_line(induction_header(d.mode))?;
    for r in 0..d.len() {
        let fields = std::iter::once(d.trials[r].to_string())
            .chain(row_values(&d.features, r))
            .chain(std::iter::once(fmt_f64(d.qot[r])))
            .chain(row_values(&d.pad_true, r));
        s += &csv_line(fields)?;
    }
    Ok(s)
}

pub fn save_induction(path: &Path, d: &InductionDataset) -> Result<()> {
    write_atomic(path, induction_to_string(d)?.as_bytes())
}

pub fn parse_induction(path: &Path, text: &str) -> Result<InductionDataset> {
    let (pre, body) = split_preamble(path, text, "induction")?;
    let mode = mode_of(path, &pre)?;
    let rows = pre.get_usize(path, "rows")?;
    let header = induction_header(mode);
    let dim = mode.dim();
    let mut trials = Vec::with_capacity(rows);
    let mut feats = Vec::with_capacity(rows * dim);
    let mut qot = Vec::with_capacity(rows);
    let mut pad = Vec::with_capacity(rows * PAD_DIMS);
    read_csv_body(path, body, &header, rows, |line, rec| {
        trials.push(
            rec[0]
                .parse()
                .map_err(|_| parse_err(path, line, "trial", format!("`{}` is not an integer", &rec[0])))?,
        );
        for c in 1..=dim {
            feats.push(parse_f64(path, line, &header[c], &rec[c])?);
        }
        qot.push(parse_f64(path, line, "q", &rec[dim + 1])?);
        for c in dim + 2..dim + 2 + PAD_DIMS {
            pad.push(parse_f64(path, line, &header[c], &rec[c])?);
        }
        Ok(())
    })?;
    let d = InductionDataset {
        mode,
        trials,
        features: DMatrix::from_row_slice(rows, dim, &feats),
        qot,
        pad_true: DMatrix::from_row_slice(rows, PAD_DIMS, &pad),
    };
    d.validate().map_err(|e| parse_err(path, 0, "dataset", e.to_string()))?;
    Ok(d)
}

pub fn load_induction(path: &Path) -> Result<InductionDataset> {
    parse_induction(path, &read_text(path)?)
}

/// Bare feature rows, the input of a prediction run.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub mode: FeatureMode,
    pub ids: Vec<String>,
    pub features: DMatrix<f64>,
}

fn features_header(mode: FeatureMode) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend(mode.feature_names());
    h
}

pub fn features_to_string(t: &FeatureTable) -> Result<String> {
    if t.features.nrows() != t.ids.len() || t.features.ncols() != t.mode.dim() {
        return Err(Error::invalid("feature table shape does not match its ids and mode"));
    }
    let mut s = Preamble::render(
        "features",
        &[("mode", t.mode.as_str().to_string()), ("rows", t.ids.len().to_string())],
    );
    s += &csv_line(features_header(t.mode))?;
    for r in 0..t.ids.len() {
        s += &csv_line(std::iter::once(t.ids[r].clone()).chain(row_values(&t.features, r)))?;
    }
    Ok(s)
}

pub fn save_features(path: &Path, t: &FeatureTable) -> Result<()> {
    write_atomic(path, features_to_string(t)?.as_bytes())
}

pub fn parse_features(path: &Path, text: &str) -> Result<FeatureTable> {
    let (pre, body) = split_preamble(path, text, "features")?;
    let mode = mode_of(path, &pre)?;
    let rows = pre.get_usize(path, "rows")?;
    let header = features_header(mode);
    let dim = mode.dim();
    let mut ids = Vec::with_capacity(rows);
    let mut feats = Vec::with_capacity(rows * dim);
    read_csv_body(path, body, &header, rows, |line, rec| {
        ids.push(rec[0].to_string());
        for c in 1..=dim {
            let v = parse_f64(path, line, &header[c], &rec[c])?;
            if !v.is_finite() {
                return Err(parse_err(path, line, header[c].clone(), "not finite"));
            }
            feats.push(v);
        }
        Ok(())
    })?;
    Ok(FeatureTable {
        mode,
        ids,
        features: DMatrix::from_row_slice(rows, dim, &feats),
    })
}

/// Loads feature rows from a `features`, `elicitation` or `induction` file.
pub fn load_feature_rows(path: &Path) -> Result<FeatureTable> {
    let text = read_text(path)?;
    let kind = text.split_whitespace().nth(2).unwrap_or_default();
    match kind {
        "elicitation" => {
            let d = parse_elicitation(path, &text)?;
            Ok(FeatureTable {
                mode: d.mode,
                ids: d.ids,
                features: d.features,
            })
        }
        "induction" => {
            let d = parse_induction(path, &text)?;
            Ok(FeatureTable {
                mode: d.mode,
                ids: d.trials.iter().map(|t| t.to_string()).collect(),
                features: d.features,
            })
        }
        _ => parse_features(path, &text),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub pad: PadPosterior,
    pub qot: QotPosterior,
    pub prob: f64,
}

pub fn predictions_header() -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend(PAD_NAMES.iter().map(|s| format!("{s}_mean")));
    h.extend(PAD_NAMES.iter().map(|s| format!("{s}_var")));
    h.extend(["q_mean", "q_var", "prob"].map(String::from));
    h
}

pub fn predictions_to_string(rows: &[Prediction], q_r: f64) -> Result<String> {
    let mut s = Preamble::render("predictions", &[("rows", rows.len().to_string()), ("q_r", fmt_f64(q_r))]);
    s += &csv_line(predictions_header())?;
    for p in rows {
        let mut f = vec![p.id.clone()];
        f.extend(p.pad.mean.iter().chain(&p.pad.var).map(|v| fmt_f64(*v)));
        f.extend([p.qot.mean, p.qot.var, p.prob].map(fmt_f64));
        s += &csv_line(f)?;
    }
    Ok(s)
}

pub fn parse_predictions(path: &Path, text: &str) -> Result<Vec<Prediction>> {
    let (pre, body) = split_preamble(path, text, "predictions")?;
    let rows = pre.get_usize(path, "rows")?;
    let header = predictions_header();
    let mut out = Vec::with_capacity(rows);
    read_csv_body(path, body, &header, rows, |line, rec| {
        let num = |c: usize| parse_f64(path, line, &header[c], &rec[c]);
        out.push(Prediction {
            id: rec[0].to_string(),
            pad: PadPosterior {
                mean: [num(1)?, num(2)?, num(3)?],
                var: [num(4)?, num(5)?, num(6)?],
            },
            qot: QotPosterior {
                mean: num(7)?,
                var: num(8)?,
            },
            prob: num(9)?,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Column schema of the trace CSV, after `k`:
/// true PAD and fatigue, PAD posterior means and variances, QoT posterior,
/// `P{q >= q_r}`, the true QoT, errors, gate, stimulus and the features.
pub fn trace_header(mode: FeatureMode) -> Vec<String> {
    let mut h: Vec<String> = vec!["k".into()];
    h.extend(PAD_NAMES.iter().map(|s| format!("{s}_true")));
    h.push("fatigue".into());
    h.extend(PAD_NAMES.iter().map(|s| format!("{s}_mean")));
    h.extend(PAD_NAMES.iter().map(|s| format!("{s}_var")));
    for s in ["q_mean", "q_var", "prob", "q_true", "eps", "delta", "gate", "stimulus_id"] {
        h.push(s.into());
    }
    h.extend(mode.feature_names());
    h
}

const TRACE_FIXED: usize = 19;

/// JSON sidecar written next to a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub meta: LoopMeta,
    pub q_r: f64,
    pub beta_r: f64,
    /// Free-form configuration snapshot.
    pub configs: serde_json::Value,
}

pub fn sidecar_path(trace: &Path) -> PathBuf {
    let mut s = trace.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn trace_to_string(t: &LoopTrace) -> Result<String> {
    let mode: FeatureMode = t.meta.feature_mode.parse()?;
    let mut s = Preamble::render(
        "trace",
        &[("mode", mode.as_str().to_string()), ("rows", t.steps.len().to_string())],
    );
    s += &csv_line(trace_header(mode))?;
    for st in &t.steps {
        if st.features.len() != mode.dim() {
            return Err(Error::invalid(format!("step {} has {} features", st.k, st.features.len())));
        }
        let mut f = vec![st.k.to_string()];
        f.extend(st.pad_true.iter().map(|v| fmt_f64(*v)));
        f.push(fmt_f64(st.fatigue));
        f.extend(st.pad_post.mean.iter().map(|v| fmt_f64(*v)));
        f.extend(st.pad_post.var.iter().map(|v| fmt_f64(*v)));
        for v in [st.qot_post.mean, st.qot_post.var, st.prob, st.q_true, st.eps, st.delta] {
            f.push(fmt_f64(v));
        }
        f.push(st.gate.to_string());
        f.push(st.stimulus_id.to_string());
        f.extend(st.features.iter().map(|v| fmt_f64(*v)));
        s += &csv_line(f)?;
    }
    Ok(s)
}

pub fn save_trace(path: &Path, t: &LoopTrace, sidecar: &TraceSidecar) -> Result<()> {
    write_atomic(path, trace_to_string(t)?.as_bytes())?;
    save_json(&sidecar_path(path), "trace-meta", sidecar)
}

pub fn parse_trace_csv(path: &Path, text: &str) -> Result<(FeatureMode, Vec<TraceStep>)> {
    let (pre, body) = split_preamble(path, text, "trace")?;
    let mode = mode_of(path, &pre)?;
    let rows = pre.get_usize(path, "rows")?;
    let header = trace_header(mode);
    let mut steps = Vec::with_capacity(rows);
    read_csv_body(path, body, &header, rows, |line, rec| {
        let num = |c: usize| parse_f64(path, line, &header[c], &rec[c]);
        let int = |c: usize| -> Result<u64> {
            rec[c]
                .parse()
                .map_err(|_| parse_err(path, line, header[c].clone(), format!("`{}` is not an integer", &rec[c])))
        };
        let gate = int(17)?;
        if gate > 1 {
            return Err(parse_err(path, line, "gate", "gate must be 0 or 1"));
        }
        let stimulus = int(18)?;
        steps.push(TraceStep {
            k: int(0)?,
            pad_true: [num(1)?, num(2)?, num(3)?],
            fatigue: num(4)?,
            pad_post: PadPosterior {
                mean: [num(5)?, num(6)?, num(7)?],
                var: [num(8)?, num(9)?, num(10)?],
            },
            qot_post: QotPosterior {
                mean: num(11)?,
                var: num(12)?,
            },
            prob: num(13)?,
            q_true: num(14)?,
            eps: num(15)?,
            delta: num(16)?,
            gate: gate as u8,
            stimulus_id: u32::try_from(stimulus)
                .map_err(|_| parse_err(path, line, "stimulus_id", "out of range"))?,
            features: (TRACE_FIXED..TRACE_FIXED + mode.dim()).map(num).collect::<Result<_>>()?,
        });
        Ok(())
    })?;
    Ok((mode, steps))
}

/// Reads a trace and its sidecar.
pub fn load_trace(path: &Path) -> Result<(LoopTrace, TraceSidecar)> {
    let (mode, steps) = parse_trace_csv(path, &read_text(path)?)?;
    let side: TraceSidecar = load_json(&sidecar_path(path), "trace-meta")?;
    if side.meta.feature_mode != mode.as_str() {
        return Err(parse_err(path, 1, "mode", "trace and sidecar disagree on the feature mode"));
    }
    if let Some((i, s)) = steps.iter().enumerate().find(|(i, s)| s.k != *i as u64) {
        return Err(parse_err(path, i + 3, "k", format!("step index {} out of sequence", s.k)));
    }
    Ok((
        LoopTrace {
            meta: side.meta.clone(),
            steps,
        },
        side,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_round_trip_and_empty() {
        let p = Path::new("f.csv");
        let t = FeatureTable {
            mode: FeatureMode::Eeg,
            ids: vec!["a".into(), "b,c".into()],
            features: DMatrix::from_fn(2, 14, |r, c| 1.0 + 0.1 * (r * 14 + c) as f64 / 3.0),
        };
        assert_eq!(parse_features(p, &features_to_string(&t).unwrap()).unwrap(), t);
        let empty = FeatureTable {
            mode: FeatureMode::Bands,
            ids: vec![],
            features: DMatrix::zeros(0, 56),
        };
        assert_eq!(parse_features(p, &features_to_string(&empty).unwrap()).unwrap(), empty);
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![Prediction {
            id: "w1".into(),
            pad: PadPosterior {
                mean: [4.1, 5.0, 6.25],
                var: [0.1, 0.2, 1e-9],
            },
            qot: QotPosterior {
                mean: 0.3333333333333333,
                var: 0.0123,
            },
            prob: 0.42,
        }];
        let s = predictions_to_string(&rows, 0.35).unwrap();
        assert_eq!(parse_predictions(Path::new("p.csv"), &s).unwrap(), rows);
        let s = predictions_to_string(&[], 0.35).unwrap();
        assert_eq!(s.lines().count(), 2);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let t = FeatureTable {
            mode: FeatureMode::Eeg,
            ids: vec![],
            features: DMatrix::zeros(0, 14),
        };
        let s = features_to_string(&t).unwrap();
        assert!(parse_elicitation(Path::new("x"), &s).is_err());
    }
}
