//! Turns scenario traces into labeled node-feature samples: one 39x10 matrix
//! per time index with sliding-window statistics, assembled into the fixed
//! dataset recipe and split 2:1 into train and test.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::ScenarioTrace;
use crate::error::{Error, Result};

/// Feature columns per node, in order: Vmag, Vang, excitation voltage, power
/// angle, P, Q, mean(Vmag), var(Vmag), mean(Vang), var(Vang).
pub const FEATURE_COLUMNS: usize = 10;

/// Default sliding window length (samples, centered).
pub const DEFAULT_WINDOW: usize = 5;

/// Node-feature matrix of one sample; rows follow the bus order of the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureMatrix(pub DMatrix<f64>);

impl NodeFeatureMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn row_vec(&self, node: usize) -> Vec<f64> {
        self.0.row(node).iter().copied().collect()
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario: usize,
    pub time_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: NodeFeatureMatrix,
    /// 1 while the fault is applied, else 0.
    pub label: u8,
    pub provenance: Provenance,
}

/// Ordered sample sequence (scenario order, then time order).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

/// Train/test assignment over dataset positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Mean and population standard deviation per feature column, fitted on the
/// training split and applied everywhere before the model sees data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, features: &NodeFeatureMatrix) -> DMatrix<f64> {
        let mut out = features.0.clone();
        for c in 0..out.ncols() {
            for r in 0..out.nrows() {
                out[(r, c)] = (out[(r, c)] - self.mean[c]) / self.std[c];
            }
        }
        out
    }
}

/// Windowed node features at one time index. Instantaneous columns come from
/// `t_index`; the mean/variance columns use the centered window, truncated at
/// the series boundaries, with population variance.
pub fn window_features(
    trace: &ScenarioTrace,
    t_index: usize,
    window: usize,
) -> Result<NodeFeatureMatrix> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "window must be odd and positive, got {window}"
        )));
    }
    let len = trace.len();
    if t_index >= len {
        return Err(Error::TimeIndexOutOfRange { index: t_index, len });
    }
    let half = window / 2;
    let lo = t_index.saturating_sub(half);
    let hi = (t_index + half).min(len - 1);
    let span = (hi - lo + 1) as f64;

    let stats = |series: &[f64]| -> (f64, f64) {
        let mean = series[lo..=hi].iter().sum::<f64>() / span;
        let var = series[lo..=hi]
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / span;
        (mean, var)
    };

    let n = trace.bus_count();
    let mut m = DMatrix::zeros(n, FEATURE_COLUMNS);
    for b in 0..n {
        m[(b, 0)] = trace.bus_voltage_magnitude[b][t_index];
        m[(b, 1)] = trace.bus_voltage_angle[b][t_index];
        m[(b, 4)] = trace.bus_active_injection[b][t_index];
        m[(b, 5)] = trace.bus_reactive_injection[b][t_index];
        let (mean_mag, var_mag) = stats(&trace.bus_voltage_magnitude[b]);
        let (mean_ang, var_ang) = stats(&trace.bus_voltage_angle[b]);
        m[(b, 6)] = mean_mag;
        m[(b, 7)] = var_mag;
        m[(b, 8)] = mean_ang;
        m[(b, 9)] = var_ang;
    }
    // machine quantities land on their terminal bus; other rows stay zero
    for (g, &bus) in trace.generator_bus.iter().enumerate() {
        m[(bus, 2)] = trace.emf_magnitude[g][t_index];
        m[(bus, 3)] = trace.rotor_angle[g][t_index];
    }
    Ok(NodeFeatureMatrix(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleConfig {
    /// Sliding window length.
    pub window: usize,
    /// Position (in the trace list) of the scenario that donates the
    /// post-clearing label-0 samples.
    pub negative_scenario: usize,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            window: DEFAULT_WINDOW,
            negative_scenario: 2,
        }
    }
}

/// Assemble the labeled dataset from a scenario set.
///
/// Label-1 samples are every fault-on index of every trace; label-0 samples
/// run from the clearing index of the designated scenario to its horizon.
/// The clearing sample of that scenario therefore appears twice, once per
/// class, which is what the fixed sample counts require. Counts are checked
/// against the fault-spec arithmetic and any drift is a hard error.
pub fn assemble_dataset(traces: &[ScenarioTrace], config: &AssembleConfig) -> Result<Dataset> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("scenario trace list".into()));
    }
    if config.negative_scenario >= traces.len() {
        return Err(Error::InvalidArgument(format!(
            "negative scenario {} out of range for {} traces",
            config.negative_scenario,
            traces.len()
        )));
    }
    let len0 = traces[0].len();
    let buses = traces[0].bus_count();
    for (s, t) in traces.iter().enumerate() {
        if t.len() != len0 || t.bus_count() != buses {
            return Err(Error::RecipeMismatch(format!(
                "trace {s} shape differs from trace 0"
            )));
        }
    }

    let expected_positive: usize = traces
        .iter()
        .map(|t| t.fault.clearing_index() - t.fault.start_index())
        .sum();
    let neg_trace = &traces[config.negative_scenario];
    let expected_negative = (len0 - 1) - neg_trace.fault.clearing_index() + 1;

    let mut samples = Vec::with_capacity(expected_positive + expected_negative);
    for (s, trace) in traces.iter().enumerate() {
        for t_index in 0..trace.len() {
            if trace.fault.is_fault_on(t_index) {
                samples.push(Sample {
                    features: window_features(trace, t_index, config.window)?,
                    label: 1,
                    provenance: Provenance {
                        scenario: s,
                        time_index: t_index,
                    },
                });
            }
        }
        if s == config.negative_scenario {
            for t_index in trace.fault.clearing_index()..trace.len() {
                samples.push(Sample {
                    features: window_features(trace, t_index, config.window)?,
                    label: 0,
                    provenance: Provenance {
                        scenario: s,
                        time_index: t_index,
                    },
                });
            }
        }
    }

    let positives = samples.iter().filter(|s| s.label == 1).count();
    let negatives = samples.len() - positives;
    if positives != expected_positive || negatives != expected_negative {
        return Err(Error::RecipeMismatch(format!(
            "expected {expected_positive} positives / {expected_negative} negatives, \
             assembled {positives} / {negatives}"
        )));
    }
    Ok(Dataset { samples })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// One JSON object per line: provenance, label, row-major features.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for sample in &self.samples {
            let line = SampleLine {
                scenario: sample.provenance.scenario,
                time_index: sample.provenance.time_index,
                label: sample.label,
                nodes: sample.features.nodes(),
                features: sample
                    .features
                    .0
                    .row_iter()
                    .flat_map(|r| r.iter().copied().collect::<Vec<f64>>())
                    .collect(),
            };
            serde_json::to_writer(&mut w, &line)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Dataset> {
        let mut samples = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SampleLine = serde_json::from_str(&line)?;
            if parsed.features.len() != parsed.nodes * FEATURE_COLUMNS {
                return Err(Error::ShapeMismatch(format!(
                    "sample carries {} floats for {} nodes",
                    parsed.features.len(),
                    parsed.nodes
                )));
            }
            let matrix = DMatrix::from_row_slice(parsed.nodes, FEATURE_COLUMNS, &parsed.features);
            samples.push(Sample {
                features: NodeFeatureMatrix(matrix),
                label: parsed.label,
                provenance: Provenance {
                    scenario: parsed.scenario,
                    time_index: parsed.time_index,
                },
            });
        }
        Ok(Dataset { samples })
    }
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    scenario: usize,
    time_index: usize,
    label: u8,
    nodes: usize,
    features: Vec<f64>,
}

/// Deterministic 2:1 split: of every consecutive triple the first two train
/// and the third tests; a trailing partial group trains.
pub fn split_dataset(dataset: &Dataset) -> Split {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..dataset.len() {
        if i % 3 == 2 {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    Split { train, test }
}

/// Fit per-column standardization over the given sample positions.
pub fn fit_standardization(dataset: &Dataset, indices: &[usize]) -> Standardization {
    let mut mean = vec![0.0; FEATURE_COLUMNS];
    let mut count = 0usize;
    for &i in indices {
        let m = &dataset.samples[i].features.0;
        for c in 0..FEATURE_COLUMNS {
            for r in 0..m.nrows() {
                mean[c] += m[(r, c)];
            }
        }
        count += m.nrows();
    }
    for c in 0..FEATURE_COLUMNS {
        mean[c] /= count as f64;
    }
    let mut var = vec![0.0; FEATURE_COLUMNS];
    for &i in indices {
        let m = &dataset.samples[i].features.0;
        for c in 0..FEATURE_COLUMNS {
            for r in 0..m.nrows() {
                let d = m[(r, c)] - mean[c];
                var[c] += d * d;
            }
        }
    }
    let std = var
        .iter()
        .map(|v| {
            let s = (v / count as f64).sqrt();
            if s < 1e-12 {
                1.0
            } else {
                s
            }
        })
        .collect();
    Standardization { mean, std }
}
