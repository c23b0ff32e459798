use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spikerace::mcmc::PosteriorDraws;
use spikerace::train::{Label, SpikeTrain, Triplet};

use crate::config::sha256_hex;
use crate::error::{CliError, Result};

/// On-disk triplet: spike times in seconds, one array per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub window_end: f64,
    pub a_trials: Vec<Vec<f64>>,
    pub b_trials: Vec<Vec<f64>>,
    pub ab_trials: Vec<Vec<f64>>,
}

impl TripletFile {
    pub fn from_triplet(t: &Triplet) -> Self {
        let times = |v: &[SpikeTrain]| v.iter().map(|s| s.spikes.clone()).collect();
        Self {
            config_hash: None,
            seed: None,
            window_end: t.window_end,
            a_trials: times(&t.a_trials),
            b_trials: times(&t.b_trials),
            ab_trials: times(&t.ab_trials),
        }
    }

    /// Builds and checks the triplet: times strictly increasing inside
    /// `(0, window_end]`.
    pub fn into_triplet(self) -> spikerace::Result<Triplet> {
        let w = self.window_end;
        if !(w > 0.0 && w.is_finite()) {
            return Err(spikerace::Error::InvalidParameter(format!("window_end must be positive, got {w}")));
        }
        let trains = |name: &str, v: Vec<Vec<f64>>| {
            v.into_iter()
                .enumerate()
                .map(|(i, s)| {
                    SpikeTrain::new(s, w).map_err(|e| {
                        spikerace::Error::InvalidParameter(format!("{name} trial {i}: {e}"))
                    })
                })
                .collect::<spikerace::Result<Vec<_>>>()
        };
        let t = Triplet {
            window_end: w,
            a_trials: trains("a_trials", self.a_trials)?,
            b_trials: trains("b_trials", self.b_trials)?,
            ab_trials: trains("ab_trials", self.ab_trials)?,
        };
        t.validate(0)?;
        Ok(t)
    }
}

/// Reads a triplet file and returns it with the SHA-256 of its bytes.
pub fn load_triplet(path: &Path) -> Result<(Triplet, String)> {
    let input = |msg: String| CliError::Input { path: path.to_path_buf(), msg };
    let bytes = fs::read(path).map_err(|e| input(e.to_string()))?;
    let file: TripletFile = serde_json::from_slice(&bytes).map_err(|e| input(e.to_string()))?;
    let t = file.into_triplet().map_err(|e| input(e.to_string()))?;
    Ok((t, sha256_hex(&bytes)))
}

/// Provenance fields placed first in every JSON output.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub config_hash: &'a str,
    pub seed: u64,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Output { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Output { path: path.to_path_buf(), source: e })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// Column names of the draws table.
pub fn draw_columns(d: &PosteriorDraws) -> Vec<String> {
    let mut cols = Vec::new();
    cols.extend(d.set_names.iter().map(|n| format!("I_{n}")));
    cols.extend(d.set_names.iter().map(|n| format!("sigma_{n}")));
    if d.draws.first().is_some_and(|x| x.delta.is_some()) {
        cols.push("delta".into());
    }
    for (k, n) in d.set_names.iter().enumerate() {
        let dim = d.draws.first().map_or(0, |x| x.sets[k].phi.len());
        cols.extend((1..=dim).map(|j| format!("phi_{n}_{j}")));
    }
    cols.extend(d.set_names.iter().map(|n| format!("tau_{n}")));
    cols.extend((1..=d.n_trains).map(|i| format!("lml_train_{i}")));
    cols
}

/// CSV of the stored draws, preceded by a `#` provenance line. Floats use
/// the shortest representation that round-trips.
pub fn draws_csv(d: &PosteriorDraws, config_hash: &str, seed: u64) -> Vec<u8> {
    let mut out = format!("# config_hash={config_hash} seed={seed} model={}\n", d.model).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(draw_columns(d)).expect("in-memory write");
        for x in &d.draws {
            let mut row: Vec<String> = Vec::new();
            row.extend(x.sets.iter().map(|s| s.current.to_string()));
            row.extend(x.sets.iter().map(|s| s.sigma.to_string()));
            if let Some(delta) = x.delta {
                row.push(delta.to_string());
            }
            for s in &x.sets {
                row.extend(s.phi.iter().map(f64::to_string));
            }
            row.extend(x.tau.iter().map(f64::to_string));
            row.extend(x.train_loglik.iter().map(f64::to_string));
            w.write_record(&row).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    out
}

/// Run-length code of a label sequence, e.g. `A3B1A2`.
pub fn run_length(labels: &[Label]) -> String {
    let mut s = String::new();
    let mut i = 0;
    while i < labels.len() {
        let j = labels[i..].iter().position(|l| *l != labels[i]).map_or(labels.len(), |k| i + k);
        s.push(if labels[i] == Label::A { 'A' } else { 'B' });
        s.push_str(&(j - i).to_string());
        i = j;
    }
    s
}

#[derive(Serialize)]
pub struct LabelsFile {
    pub model: String,
    /// Indices of the race trains within the AB condition.
    pub trains: Vec<usize>,
    /// One run-length string per race train, per stored draw.
    pub draws: Vec<Vec<String>>,
}

pub fn labels_file(d: &PosteriorDraws) -> Option<LabelsFile> {
    let n = d.draws.first()?.labels.len();
    if n == 0 {
        return None;
    }
    Some(LabelsFile {
        model: d.model.clone(),
        trains: (0..n).collect(),
        draws: d.draws.iter().map(|x| x.labels.iter().map(|l| run_length(l)).collect()).collect(),
    })
}
