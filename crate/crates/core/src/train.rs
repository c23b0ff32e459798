//! Spike trains, labels and triplets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splines::Basis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    #[inline]
    pub fn complement(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::A
        } else {
            Label::B
        }
    }

    pub const BOTH: [Label; 2] = [Label::A, Label::B];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub spikes: Vec<f64>,
    pub window_end: f64,
}

impl SpikeTrain {
    pub fn new(spikes: Vec<f64>, window_end: f64) -> Result<Self> {
        let t = Self { spikes, window_end };
        t.validate()?;
        Ok(t)
    }

    pub fn empty(window_end: f64) -> Self {
        Self { spikes: Vec::new(), window_end }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_end > 0.0 && self.window_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("window end must be positive, got {}", self.window_end)));
        }
        let mut prev = 0.0;
        for (j, &s) in self.spikes.iter().enumerate() {
            if !(s > prev) {
                return Err(Error::InvalidParameter(format!(
                    "spike {j} at {s} is not strictly after the previous time {prev}"
                )));
            }
            prev = s;
        }
        if prev > self.window_end {
            return Err(Error::InvalidParameter(format!(
                "spike at {prev} lies beyond the window end {}",
                self.window_end
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn isis(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.spikes
            .iter()
            .map(|&s| {
                let x = s - prev;
                prev = s;
                x
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrain {
    pub train: SpikeTrain,
    pub labels: Vec<Label>,
}

impl LabeledTrain {
    pub fn switches(&self) -> usize {
        self.labels.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub window_end: f64,
    pub a_trials: Vec<SpikeTrain>,
    pub b_trials: Vec<SpikeTrain>,
    pub ab_trials: Vec<SpikeTrain>,
}

/// Experimental condition of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    A,
    B,
    AB,
}

impl Triplet {
    /// Checks every train and that each condition has at least `min_trials` trials.
    pub fn validate(&self, min_trials: usize) -> Result<()> {
        for (name, trials) in [("A", &self.a_trials), ("B", &self.b_trials), ("AB", &self.ab_trials)] {
            if trials.len() < min_trials {
                return Err(Error::InvalidParameter(format!(
                    "condition {name} has {} trials, at least {min_trials} required",
                    trials.len()
                )));
            }
            for (i, t) in trials.iter().enumerate() {
                if t.window_end != self.window_end {
                    return Err(Error::InvalidParameter(format!(
                        "condition {name} trial {i} has window end {} but the triplet uses {}",
                        t.window_end, self.window_end
                    )));
                }
                t.validate()
                    .map_err(|e| Error::InvalidParameter(format!("condition {name} trial {i}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn trials(&self, c: Condition) -> &[SpikeTrain] {
        match c {
            Condition::A => &self.a_trials,
            Condition::B => &self.b_trials,
            Condition::AB => &self.ab_trials,
        }
    }

    /// All trains in the canonical order A, B, AB.
    pub fn all_trains(&self) -> impl Iterator<Item = (Condition, &SpikeTrain)> {
        self.a_trials
            .iter()
            .map(|t| (Condition::A, t))
            .chain(self.b_trials.iter().map(|t| (Condition::B, t)))
            .chain(self.ab_trials.iter().map(|t| (Condition::AB, t)))
    }

    pub fn n_trains(&self) -> usize {
        self.a_trials.len() + self.b_trials.len() + self.ab_trials.len()
    }
}

/// A train with its basis rows evaluated once, for repeated likelihood calls.
///
/// Row `j` of `rows` is b(s_{j-1}) with s_0 = 0; `last_row` is b(s_n).
#[derive(Debug, Clone)]
pub struct PreparedTrain {
    pub isi: Vec<f64>,
    pub rows: Vec<f64>,
    pub dim: usize,
    pub horizon: f64,
    pub last_row: Vec<f64>,
}

impl PreparedTrain {
    pub fn new(train: &SpikeTrain, basis: &Basis) -> Result<Self> {
        let dim = basis.dim();
        let n = train.len();
        let mut rows = vec![0.0; n * dim];
        let mut prev = 0.0;
        let mut isi = Vec::with_capacity(n);
        for (j, &s) in train.spikes.iter().enumerate() {
            let x = s - prev;
            if !(x > 0.0) {
                return Err(Error::NonPositiveIsi(x));
            }
            basis.eval_into(prev, &mut rows[j * dim..(j + 1) * dim])?;
            isi.push(x);
            prev = s;
        }
        let last_row = basis.eval(prev)?;
        Ok(Self { isi, rows, dim, horizon: train.window_end - prev, last_row })
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.isi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.isi.is_empty()
    }
}
