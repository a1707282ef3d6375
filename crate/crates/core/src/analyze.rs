//! Declarative analysis of a record store: peaks per size, crossings between
//! sizes, scaling fits, classification and central-charge checks.
//!
//! ```toml
//! id = "s2-sprime"
//! variant = "u"
//! spin = 2
//! observable = "s-prime"
//! crossing_step = 32
//!
//! [[fit]]
//! label = "positions"
//! model = "SPRIME_POS_BKT"
//! quantity = "peak-position"
//! lengths = [160, 512]
//! pins = { d = 0.0, e = 0.0 }
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt12;
use crate::fss::{
    self, central_charge_from_fits, chi_height_extrapolate_with, classify_transition, crossing_point_with,
    find_peak_with, fit_curve, fit_rows, fit_scaling, CentralCharge, ChiHeightKind, CrossingOptions, FitOptions,
    FitResult, Observable, PeakEstimate, PeakOptions, ScalingModel, Series, TransitionKind,
};
use crate::model::ModelVariant;
use crate::sweep::{load_series, RecordStore, SweepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    PeakPosition,
    PeakHeight,
    /// `D_x(L, L + crossing_step)`, keyed by the smaller size.
    Crossing,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::PeakPosition => "peak-position",
            Quantity::PeakHeight => "peak-height",
            Quantity::Crossing => "crossing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub label: String,
    pub model: ScalingModel,
    pub quantity: Quantity,
    /// Inclusive `[L_min, L_max]`; all sizes when absent.
    #[serde(default)]
    pub lengths: Option<[usize; 2]>,
    #[serde(default)]
    pub pins: BTreeMap<String, f64>,
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub starts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySpec {
    #[serde(default)]
    pub lengths: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentralChargeSpec {
    pub height_fit: String,
    pub position_fit: String,
    pub kind: TransitionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiHeightSpec {
    pub kind: ChiHeightKind,
    #[serde(default)]
    pub lengths: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub id: String,
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default)]
    pub jz: Option<f64>,
    pub spin: u32,
    /// Sizes to analyse; every size present in the store when absent.
    #[serde(default)]
    pub lengths: Option<Vec<usize>>,
    #[serde(default = "default_observable")]
    pub observable: Observable,
    /// Where to look for the raw maximum.
    #[serde(default)]
    pub bracket: Option<[f64; 2]>,
    #[serde(default)]
    pub peak: PeakOptions,
    #[serde(default)]
    pub crossing_step: Option<usize>,
    #[serde(default)]
    pub crossing_range: Option<[f64; 2]>,
    #[serde(default, rename = "fit")]
    pub fits: Vec<FitSpec>,
    #[serde(default)]
    pub classify: Option<ClassifySpec>,
    #[serde(default)]
    pub central_charge: Option<CentralChargeSpec>,
    #[serde(default)]
    pub chi_height: Option<ChiHeightSpec>,
}

fn default_variant() -> String {
    "u".into()
}

fn default_observable() -> Observable {
    Observable::SPrime
}

impl AnalysisSpec {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("analysis spec serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRow {
    pub length_a: usize,
    pub length_b: usize,
    pub crossing: Option<f64>,
    pub error: Option<String>,
}

/// `D_p >= D_x` for both sizes of a crossing pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardRow {
    pub length_a: usize,
    pub length_b: usize,
    pub crossing: f64,
    pub peak_a: f64,
    pub peak_b: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub label: String,
    pub quantity: Quantity,
    pub data: Vec<(f64, f64)>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    /// `None` when ambiguous.
    pub kind: Option<TransitionKind>,
    pub p: f64,
    pub sigma: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub id: String,
    pub variant: String,
    pub spin: u32,
    pub observable: Observable,
    pub peaks: Vec<PeakEstimate>,
    pub crossings: Vec<CrossingRow>,
    pub guard: Vec<GuardRow>,
    pub fits: Vec<NamedFit>,
    pub classification: Option<ClassificationOutcome>,
    pub central_charge: Option<CentralCharge>,
    pub chi_height: Option<FitResult>,
}

impl AnalysisReport {
    pub fn fit(&self, label: &str) -> Option<&FitResult> {
        self.fits.iter().find(|f| f.label == label).map(|f| &f.fit)
    }

    pub fn guard_holds(&self) -> bool {
        self.guard.iter().all(|g| g.holds)
    }
}

fn in_range(l: usize, range: Option<[usize; 2]>) -> bool {
    range.is_none_or(|[lo, hi]| l >= lo && l <= hi)
}

/// Runs the analysis against the records of `store`. The store is only read.
pub fn run_analysis(store: &RecordStore, spec: &AnalysisSpec) -> Result<AnalysisReport> {
    analyze_records(&store.load_all()?, spec)
}

pub fn analyze_records(records: &[SweepRecord], spec: &AnalysisSpec) -> Result<AnalysisReport> {
    let label = ModelVariant::from_tag(&spec.variant, spec.jz)?.label();
    let lengths: Vec<usize> = match &spec.lengths {
        Some(ls) => {
            let mut ls = ls.clone();
            ls.sort_unstable();
            ls.dedup();
            ls
        }
        None => {
            let mut ls: Vec<usize> =
                records.iter().filter(|r| r.variant == label && r.spin == spec.spin).map(|r| r.length).collect();
            ls.sort_unstable();
            ls.dedup();
            ls
        }
    };
    if lengths.is_empty() {
        return Err(Error::MissingData(format!(
            "no records for variant {label}, S = {}, observable {}",
            spec.spin, spec.observable
        )));
    }
    let series: Vec<Series> = lengths
        .iter()
        .map(|&l| load_series(records, &label, spec.spin, l, spec.observable))
        .collect::<Result<_>>()?;

    let bracket = spec.bracket.map(|[a, b]| (a, b));
    let mut peaks = Vec::with_capacity(series.len());
    for s in &series {
        let p = find_peak_with(s, bracket, &spec.peak).map_err(|e| {
            Error::MissingData(format!("no peak for S = {}, L = {}, observable {}: {e}", spec.spin, s.length, s.observable))
        })?;
        peaks.push(p);
    }
    let peak_of = |l: usize| peaks.iter().find(|p| p.length == l);

    let mut crossings = Vec::new();
    let mut guard = Vec::new();
    if let Some(step) = spec.crossing_step {
        let opts = CrossingOptions { range: spec.crossing_range.map(|[a, b]| (a, b)), ..CrossingOptions::default() };
        for (i, a) in series.iter().enumerate() {
            let Some(b) = series[i + 1..].iter().find(|s| s.length == a.length + step) else { continue };
            let row = match crossing_point_with(a, b, &opts) {
                Ok(x) => CrossingRow { length_a: a.length, length_b: b.length, crossing: Some(x), error: None },
                Err(e) => CrossingRow { length_a: a.length, length_b: b.length, crossing: None, error: Some(e.to_string()) },
            };
            if let (Some(x), Some(pa), Some(pb)) = (row.crossing, peak_of(a.length), peak_of(b.length)) {
                guard.push(GuardRow {
                    length_a: a.length,
                    length_b: b.length,
                    crossing: x,
                    peak_a: pa.position,
                    peak_b: pb.position,
                    holds: pa.position >= x && pb.position >= x,
                });
            }
            crossings.push(row);
        }
    }

    let quantity_data = |q: Quantity, range: Option<[usize; 2]>| -> Vec<(f64, f64)> {
        match q {
            Quantity::PeakPosition => {
                peaks.iter().filter(|p| in_range(p.length, range)).map(|p| (p.length as f64, p.position)).collect()
            }
            Quantity::PeakHeight => {
                peaks.iter().filter(|p| in_range(p.length, range)).map(|p| (p.length as f64, p.height)).collect()
            }
            Quantity::Crossing => crossings
                .iter()
                .filter(|c| in_range(c.length_a, range))
                .filter_map(|c| c.crossing.map(|x| (c.length_a as f64, x)))
                .collect(),
        }
    };

    let mut fits = Vec::new();
    for f in &spec.fits {
        let data = quantity_data(f.quantity, f.lengths);
        let init = match &f.init {
            Some(v) => v.clone(),
            None => f.model.initial_guess(&data)?,
        };
        let mut opts = FitOptions { pins: f.pins.iter().map(|(k, v)| (k.clone(), *v)).collect(), ..FitOptions::default() };
        if let Some(n) = f.starts {
            opts.starts = n;
        }
        let fit = fit_scaling(f.model, &data, &init, &opts)?;
        fits.push(NamedFit { label: f.label.clone(), quantity: f.quantity, data, fit });
    }

    let classification = match &spec.classify {
        None => None,
        Some(c) => Some(match classify_transition(&quantity_data(Quantity::PeakHeight, c.lengths)) {
            Ok(cl) => ClassificationOutcome { kind: Some(cl.kind), p: cl.p, sigma: cl.sigma, warnings: cl.warnings },
            Err(Error::Ambiguous { p, sigma }) => ClassificationOutcome { kind: None, p, sigma, warnings: Vec::new() },
            Err(e) => return Err(e),
        }),
    };

    let central_charge = match &spec.central_charge {
        None => None,
        Some(c) => {
            let find = |l: &str| {
                fits.iter()
                    .find(|f| f.label == l)
                    .map(|f| &f.fit)
                    .ok_or_else(|| Error::InvalidInput(format!("central_charge refers to unknown fit '{l}'")))
            };
            Some(central_charge_from_fits(find(&c.height_fit)?, find(&c.position_fit)?, c.kind)?)
        }
    };

    let chi_height = match &spec.chi_height {
        None => None,
        Some(c) => Some(chi_height_extrapolate_with(
            &quantity_data(Quantity::PeakHeight, c.lengths),
            c.kind,
            &FitOptions::default(),
        )?),
    };

    Ok(AnalysisReport {
        id: spec.id.clone(),
        variant: label,
        spin: spec.spin,
        observable: spec.observable,
        peaks,
        crossings,
        guard,
        fits,
        classification,
        central_charge,
        chi_height,
    })
}

fn opt12(x: Option<f64>) -> String {
    x.map(fmt12).unwrap_or_else(|| "-".into())
}

pub fn report_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "analysis {} : variant {}, S = {}, observable {}", report.id, report.variant, report.spin, report.observable);
    let _ = writeln!(out, "\npeaks");
    for p in &report.peaks {
        let _ = writeln!(out, "  L = {:<6} D_p = {}  height = {}  ({} samples)", p.length, fmt12(p.position), fmt12(p.height), p.samples);
    }
    if !report.crossings.is_empty() {
        let _ = writeln!(out, "\ncrossings");
        for c in &report.crossings {
            let note = c.error.as_deref().map(|e| format!("  [{e}]")).unwrap_or_default();
            let _ = writeln!(out, "  L = {} / {}  D_x = {}{note}", c.length_a, c.length_b, opt12(c.crossing));
        }
        for g in &report.guard {
            let verdict = if g.holds { "ok" } else { "VIOLATED" };
            let _ = writeln!(out, "  guard L = {} / {}: D_p = {}, {} >= D_x = {} {verdict}", g.length_a, g.length_b, fmt12(g.peak_a), fmt12(g.peak_b), fmt12(g.crossing));
        }
    }
    for f in &report.fits {
        let _ = writeln!(out);
        out.push_str(&fss::fit_report_text(&format!("{} ({})", f.label, f.quantity.as_str()), &f.fit));
        if let (ScalingModel::SprimePosBkt | ScalingModel::SprimePosIog, Some(dc), Some(b)) =
            (f.fit.model, f.fit.param("D_c"), f.fit.param("b"))
        {
            let shifted = if f.fit.model == ScalingModel::SprimePosBkt { dc + b * b / 36.0 } else { dc + 2.0 * b / 9.0 };
            let _ = writeln!(out, "  chi_F peak shift estimate (not checked) = {}", fmt12(shifted));
        }
    }
    if let Some(c) = &report.classification {
        let label = c.kind.map(|k| k.as_str()).unwrap_or("AMBIGUOUS");
        let _ = writeln!(out, "\nclassification: {label}  p = {} +/- {}", fmt12(c.p), fmt12(c.sigma));
        for w in &c.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
    }
    if let Some(c) = &report.central_charge {
        let _ = writeln!(out, "\ncentral charge c = {} +/- {}", fmt12(c.value), fmt12(c.uncertainty));
    }
    if let Some(f) = &report.chi_height {
        let _ = writeln!(out);
        out.push_str(&fss::fit_report_text("chi_F peak height", f));
    }
    out
}

#[derive(Serialize)]
struct PeakRow {
    length: usize,
    position: f64,
    height: f64,
    window_lo: f64,
    window_hi: f64,
    samples: usize,
    method: String,
}

/// Writes `report.txt`, `report.json`, `peaks.csv`, `crossings.csv`,
/// `fits.csv` and one `curve_<label>.csv` per fit. Returns the paths written.
pub fn write_report(report: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("report.txt");
    std::fs::write(&path, report_text(report))?;
    written.push(path);
    let path = dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?)?;
    written.push(path);

    let rows: Vec<PeakRow> = report
        .peaks
        .iter()
        .map(|p| PeakRow {
            length: p.length,
            position: p.position,
            height: p.height,
            window_lo: p.window[0],
            window_hi: p.window[1],
            samples: p.samples,
            method: p.method.to_string(),
        })
        .collect();
    let path = dir.join("peaks.csv");
    fss::write_rows(&path, &rows)?;
    written.push(path);

    let path = dir.join("crossings.csv");
    fss::write_rows(&path, &report.crossings)?;
    written.push(path);

    let rows: Vec<_> = report.fits.iter().flat_map(|f| fit_rows(&f.label, &f.fit)).collect();
    let path = dir.join("fits.csv");
    fss::write_rows(&path, &rows)?;
    written.push(path);

    for f in &report.fits {
        let safe: String = f.label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
        let path = dir.join(format!("curve_{safe}.csv"));
        fss::write_rows(&path, &fit_curve(&f.fit, &f.data))?;
        written.push(path);
    }
    Ok(written)
}
