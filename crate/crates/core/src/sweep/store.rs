use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::partition_name;
use crate::error::{Error, Result};
use crate::fss::{Observable, Series};
use crate::mps::MpsState;
use crate::observables::{EngineKind, ObservablePoint};

/// One measured grid point, one JSON object per line in the partition log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRecord {
    pub plan_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub code_version: String,
    pub variant: String,
    pub jz: f64,
    pub spin: u32,
    pub length: usize,
    pub d: f64,
    pub d_index: i64,
    pub grid_step: f64,
    pub delta: f64,
    pub engine: EngineKind,
    pub epsilon: f64,
    pub energy: f64,
    pub fidelity: f64,
    pub infidelity: f64,
    pub chi_f: f64,
    pub entropy: f64,
    pub entropy_derivative: f64,
    pub max_bond: usize,
    pub converged: bool,
    pub bond_cap_reached: bool,
    pub max_truncation_error: f64,
    pub sweeps: usize,
}

/// A grid point whose solve failed; kept in a separate log and retried on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPoint {
    pub plan_id: String,
    pub timestamp: u64,
    pub status: String,
    pub variant: String,
    pub spin: u32,
    pub length: usize,
    pub d: f64,
    pub d_index: i64,
    pub grid_step: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub error: String,
}

/// Uniqueness key of a record. The coupling enters as an integer number of nano-units.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub variant: String,
    pub spin: u32,
    pub length: usize,
    pub d_nano: i64,
    pub delta_bits: u64,
    pub epsilon_bits: u64,
}

pub fn coupling_nano(d_index: i64, grid_step: f64) -> i64 {
    (d_index as f64 * grid_step * 1e9).round() as i64
}

impl SweepRecord {
    pub fn from_point(point: &ObservablePoint, plan_id: &str, d_index: i64, grid_step: f64) -> Self {
        SweepRecord {
            plan_id: plan_id.to_string(),
            timestamp: now(),
            code_version: crate::CODE_VERSION.to_string(),
            variant: point.spec.variant.label(),
            jz: point.spec.variant.jz(),
            spin: point.spec.spin.value(),
            length: point.spec.length,
            d: point.spec.d,
            d_index,
            grid_step,
            delta: point.delta,
            engine: point.engine,
            epsilon: point.quality.epsilon,
            energy: point.energy,
            fidelity: point.fidelity,
            infidelity: point.infidelity,
            chi_f: point.chi_f,
            entropy: point.entropy,
            entropy_derivative: point.entropy_derivative,
            max_bond: point.quality.max_bond,
            converged: point.quality.converged,
            bond_cap_reached: point.quality.bond_cap_reached,
            max_truncation_error: point.quality.max_truncation_error,
            sweeps: point.quality.sweeps,
        }
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            variant: self.variant.clone(),
            spin: self.spin,
            length: self.length,
            d_nano: coupling_nano(self.d_index, self.grid_step),
            delta_bits: self.delta.to_bits(),
            epsilon_bits: self.epsilon.to_bits(),
        }
    }

    pub fn partition(&self) -> String {
        partition_name(&self.variant, self.spin, self.length)
    }

    pub fn value(&self, observable: Observable) -> f64 {
        match observable {
            Observable::ChiF => self.chi_f,
            Observable::SPrime => self.entropy_derivative,
            Observable::Entropy => self.entropy,
            Observable::Infidelity => self.infidelity,
            Observable::Energy => self.energy,
        }
    }

    /// Copy with the timestamp cleared, for comparisons between runs.
    pub fn without_timestamp(&self) -> SweepRecord {
        SweepRecord { timestamp: 0, ..self.clone() }
    }
}

pub(crate) fn now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Directory-backed store: `records/<partition>.jsonl` (append-only),
/// `failures/<partition>.jsonl` and `checkpoints/<partition>/<d_index>.mps`.
#[derive(Debug, Clone)]
pub struct RecordStore {
    root: PathBuf,
}

impl RecordStore {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("records"))?;
        fs::create_dir_all(root.join("failures"))?;
        Ok(RecordStore { root: root.to_path_buf() })
    }

    /// Open an existing store without creating anything.
    pub fn open_existing(root: &Path) -> Result<Self> {
        if !root.join("records").is_dir() {
            return Err(Error::MissingData(format!("no record store at {}", root.display())));
        }
        Ok(RecordStore { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn log_path(&self, partition: &str) -> PathBuf {
        self.root.join("records").join(format!("{partition}.jsonl"))
    }

    fn failure_path(&self, partition: &str) -> PathBuf {
        self.root.join("failures").join(format!("{partition}.jsonl"))
    }

    fn checkpoint_dir(&self, partition: &str) -> PathBuf {
        self.root.join("checkpoints").join(partition)
    }

    /// Append one record to its partition log. A torn final line left by an
    /// interrupted writer is cut off first.
    pub fn append(&self, record: &SweepRecord) -> Result<()> {
        append_line(&self.log_path(&record.partition()), &serde_json::to_string(record)?)
    }

    pub fn append_failure(&self, failure: &FailedPoint) -> Result<()> {
        let partition = partition_name(&failure.variant, failure.spin, failure.length);
        append_line(&self.failure_path(&partition), &serde_json::to_string(failure)?)
    }

    pub fn partitions(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("records"))? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem() {
                    out.push(stem.to_string_lossy().into_owned());
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn load_partition(&self, partition: &str) -> Result<Vec<SweepRecord>> {
        read_lines(&self.log_path(partition))
    }

    pub fn load_failures(&self, partition: &str) -> Result<Vec<FailedPoint>> {
        read_lines(&self.failure_path(partition))
    }

    /// Every record in the store; a repeated key is an error.
    pub fn load_all(&self) -> Result<Vec<SweepRecord>> {
        let mut out = Vec::new();
        for p in self.partitions()? {
            out.extend(self.load_partition(&p)?);
        }
        check_unique(&out)?;
        Ok(out)
    }

    pub fn save_checkpoint(&self, partition: &str, d_index: i64, state: &MpsState) -> Result<()> {
        let dir = self.checkpoint_dir(partition);
        fs::create_dir_all(&dir)?;
        let tmp = dir.join(format!("{d_index}.mps.tmp"));
        state.save(&tmp)?;
        fs::rename(&tmp, dir.join(format!("{d_index}.mps")))?;
        Ok(())
    }

    pub fn load_checkpoint(&self, partition: &str, d_index: i64) -> Result<Option<MpsState>> {
        let path = self.checkpoint_dir(partition).join(format!("{d_index}.mps"));
        if !path.exists() {
            return Ok(None);
        }
        MpsState::load(&path).map(Some)
    }

    /// Remove checkpoints of this partition other than those listed.
    pub fn prune_checkpoints(&self, partition: &str, keep: &[i64]) -> Result<()> {
        let dir = self.checkpoint_dir(partition);
        if !dir.is_dir() {
            return Ok(());
        }
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let index = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".mps"))
                .and_then(|n| n.parse::<i64>().ok());
            if let Some(i) = index {
                if !keep.contains(&i) {
                    fs::remove_file(&path)?;
                }
            }
        }
        Ok(())
    }

    /// Write every record, sorted by key, to `compact.csv` and return its path.
    pub fn compact(&self) -> Result<PathBuf> {
        let path = self.root.join("compact.csv");
        write_csv(&sorted(self.load_all()?), &path)?;
        Ok(path)
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    repair_tail(path)?;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.write_all(b"\n")?;
    f.sync_data()?;
    Ok(())
}

fn repair_tail(path: &Path) -> Result<()> {
    let Ok(bytes) = fs::read(path) else { return Ok(()) };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map(|i| i + 1).unwrap_or(0);
    let f = OpenOptions::new().write(true).open(path)?;
    f.set_len(keep as u64)?;
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    let mut lines = BufReader::new(file).lines().peekable();
    let mut number = 0;
    while let Some(line) = lines.next() {
        let line = line?;
        number += 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            // a torn final line from an interrupted append
            Err(_) if lines.peek().is_none() => break,
            Err(e) => {
                return Err(Error::Parse { path: path.to_path_buf(), message: format!("line {number}: {e}") })
            }
        }
    }
    Ok(out)
}

pub fn check_unique(records: &[SweepRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.key()) {
            return Err(Error::DuplicateKey(format!(
                "{} S={} L={} D={} delta={} epsilon={}",
                r.variant, r.spin, r.length, r.d, r.delta, r.epsilon
            )));
        }
    }
    Ok(())
}

pub fn sorted(mut records: Vec<SweepRecord>) -> Vec<SweepRecord> {
    records.sort_by(|a, b| a.key().cmp(&b.key()));
    records
}

pub fn write_csv(records: &[SweepRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// D-sorted series of one observable for `(variant, S, L)`. Where several
/// records share a coupling, the one with the smallest epsilon wins (exact
/// diagonalization counts as zero), then the smallest delta.
pub fn load_series(
    records: &[SweepRecord],
    variant_label: &str,
    spin: u32,
    length: usize,
    observable: Observable,
) -> Result<Series> {
    let mut best: BTreeMap<i64, &SweepRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| r.variant == variant_label && r.spin == spin && r.length == length) {
        let k = coupling_nano(r.d_index, r.grid_step);
        let better = match best.get(&k) {
            None => true,
            Some(cur) => (r.epsilon, r.delta) < (cur.epsilon, cur.delta),
        };
        if better {
            best.insert(k, r);
        }
    }
    if best.is_empty() {
        return Err(Error::MissingData(format!(
            "no records for variant {variant_label}, S = {spin}, L = {length}, observable {observable}"
        )));
    }
    Series::new(length, observable, best.values().map(|r| (r.d, r.value(observable))).collect())
}
