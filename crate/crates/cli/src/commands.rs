//! Subcommand implementations. Each returns the human and machine renderings
//! of one report built from the same values.

use std::fmt::Write as _;
use std::path::Path;

use process_rule::channels::{validate_instrument, Instrument, CHANNEL_TOL};
use process_rule::gleason::{reconstruct_process_with, FrameOracle, ReconstructOptions, ORACLE_TOL};
use process_rule::process::{
    marginal_prob, prob_table, update_process, validate_process_with, ProcessMatrix,
    ProcessTolerances, Scenario, DEFAULT_TRIALS,
};
use process_rule::sampler::compare_with_process;
use process_rule::superop::verify_methods_lemmas;
use serde::Serialize;

use crate::document::{to_matrix, InstrumentDoc, Loaded, ScenarioDocument};
use crate::error::{exit, CliError};

/// Analytic agreement required between the trace rule and sequential sampling predictions.
pub const ANALYTIC_TOL: f64 = 1e-10;

/// Settings shared by all subcommands. `None` picks the per-command default.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    pub seed: u64,
    pub trials: Option<usize>,
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Output {
    pub human: String,
    pub machine: String,
    pub status: i32,
}

impl Output {
    fn new<T: Serialize>(human: String, report: &T, pass: bool) -> Self {
        let mut machine = serde_json::to_string_pretty(report).expect("reports always serialize");
        machine.push('\n');
        Self {
            human,
            machine,
            status: if pass { exit::OK } else { exit::VALIDITY },
        }
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small or large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn read_document(path: &Path) -> Result<ScenarioDocument, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioDocument::from_json(&text)
}

fn require_process(loaded: &Loaded) -> Result<&ProcessMatrix, CliError> {
    loaded.process.as_ref().ok_or_else(|| CliError::Parse {
        location: "process".into(),
        message: "this command needs a process".into(),
    })
}

fn region_list(w: &ProcessMatrix) -> String {
    w.regions()
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Serialize)]
struct InstrumentCheck {
    name: String,
    region: String,
    element_min_eigenvalues: Vec<f64>,
    element_cp: Vec<bool>,
    trace_preservation_defect: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ProcessCheck {
    regions: Vec<String>,
    psd_margin: f64,
    hermiticity_defect: f64,
    normalization_defect: f64,
    trace_defect: f64,
    trials: usize,
    psd_pass: bool,
    normalization_pass: bool,
    trace_pass: bool,
    pass: bool,
}

#[derive(Serialize)]
struct ValidateReport {
    instruments: Vec<InstrumentCheck>,
    process: Option<ProcessCheck>,
    pass: bool,
}

pub fn validate(doc: &ScenarioDocument, s: &Settings) -> Result<Output, CliError> {
    let loaded = doc.load(s.tol)?;
    let tol = s.tol.unwrap_or(CHANNEL_TOL);
    let mut instruments = Vec::new();
    for (name, inst) in &loaded.instruments {
        let r = validate_instrument(inst, tol).map_err(|e| CliError::core(name.as_str(), e))?;
        instruments.push(InstrumentCheck {
            name: name.clone(),
            region: inst.region().label().to_string(),
            element_min_eigenvalues: r.element_min_eigenvalues,
            element_cp: r.element_cp,
            trace_preservation_defect: r.trace_preservation_defect,
            pass: r.pass,
        });
    }
    let process = match &loaded.process {
        None => None,
        Some(w) => {
            let tolerances = s.tol.map_or_else(ProcessTolerances::default, |t| ProcessTolerances {
                psd: t,
                normalization: t,
                trace: t,
            });
            let trials = s.trials.unwrap_or(DEFAULT_TRIALS);
            let r = validate_process_with(w, trials, s.seed, &tolerances)
                .map_err(|e| CliError::core("process", e))?;
            Some(ProcessCheck {
                regions: w.regions().iter().map(|r| r.label().to_string()).collect(),
                psd_margin: r.psd_margin,
                hermiticity_defect: r.hermiticity_defect,
                normalization_defect: r.normalization_defect,
                trace_defect: r.trace_defect,
                trials: r.trials,
                psd_pass: r.psd_pass,
                normalization_pass: r.normalization_pass,
                trace_pass: r.trace_pass,
                pass: r.pass,
            })
        }
    };
    let pass = instruments.iter().all(|c| c.pass) && process.as_ref().is_none_or(|p| p.pass);

    let mut h = String::new();
    for (c, (_, inst)) in instruments.iter().zip(&loaded.instruments) {
        writeln!(h, "instrument {} on {}: {}", c.name, inst.region(), verdict(c.pass)).unwrap();
        for (label, (min, cp)) in inst
            .labels()
            .iter()
            .zip(c.element_min_eigenvalues.iter().zip(&c.element_cp))
        {
            writeln!(h, "  outcome {label}: min Choi eigenvalue {} ({})", num(*min), verdict(*cp)).unwrap();
        }
        writeln!(h, "  trace-preservation defect {}", num(c.trace_preservation_defect)).unwrap();
    }
    if let (Some(p), Some(w)) = (&process, &loaded.process) {
        writeln!(h, "process on {}: {}", region_list(w), verdict(p.pass)).unwrap();
        writeln!(h, "  psd margin {} ({})", num(p.psd_margin), verdict(p.psd_pass)).unwrap();
        writeln!(h, "  hermiticity defect {}", num(p.hermiticity_defect)).unwrap();
        writeln!(
            h,
            "  normalization defect {} over {} random tuples ({})",
            num(p.normalization_defect),
            p.trials,
            verdict(p.normalization_pass)
        )
        .unwrap();
        writeln!(h, "  trace defect {} ({})", num(p.trace_defect), verdict(p.trace_pass)).unwrap();
    }
    writeln!(h, "overall: {}", verdict(pass)).unwrap();

    let report = ValidateReport {
        instruments,
        process,
        pass,
    };
    Ok(Output::new(h, &report, pass))
}

#[derive(Serialize)]
struct ProbEntry {
    outcome: Vec<String>,
    probability: f64,
}

#[derive(Serialize)]
struct ProbReport {
    regions: Vec<String>,
    instruments: Vec<String>,
    table: Vec<ProbEntry>,
    total: f64,
}

pub fn prob(doc: &ScenarioDocument, s: &Settings) -> Result<Output, CliError> {
    let loaded = doc.load(s.tol)?;
    let w = require_process(&loaded)?;
    let instruments: Vec<Instrument> = loaded.instruments.iter().map(|(_, i)| i.clone()).collect();
    let scenario =
        Scenario::new(instruments, Some(w.clone())).map_err(|e| CliError::core("scenario", e))?;
    let table = prob_table(&scenario).map_err(|e| CliError::core("prob", e))?;

    // instrument names in the process's region order
    let names: Vec<String> = scenario
        .instruments()
        .iter()
        .map(|inst| {
            loaded
                .instruments
                .iter()
                .find(|(_, i)| i.region() == inst.region())
                .map(|(n, _)| n.clone())
                .unwrap_or_default()
        })
        .collect();
    let report = ProbReport {
        regions: table.regions.clone(),
        instruments: names,
        table: table
            .entries
            .iter()
            .map(|(o, p)| ProbEntry {
                outcome: o.clone(),
                probability: *p,
            })
            .collect(),
        total: table.total(),
    };

    let mut h = String::new();
    writeln!(h, "regions: {}", report.regions.join(" ")).unwrap();
    writeln!(h, "instruments: {}", report.instruments.join(" ")).unwrap();
    for e in &report.table {
        writeln!(h, "P({}) = {}", e.outcome.join(", "), num(e.probability)).unwrap();
    }
    writeln!(h, "total = {}", num(report.total)).unwrap();
    Ok(Output::new(h, &report, true))
}

#[derive(Serialize)]
struct UpdateReport {
    region: String,
    instrument: String,
    outcome: String,
    probability: f64,
    document: ScenarioDocument,
}

pub fn update(
    doc: &ScenarioDocument,
    s: &Settings,
    region: &str,
    outcome: &str,
    instrument: Option<&str>,
) -> Result<Output, CliError> {
    let loaded = doc.load(s.tol)?;
    let w = require_process(&loaded)?;
    let index = w
        .region_index(region)
        .ok_or_else(|| CliError::Usage(format!("the process has no region {region:?}")))?;
    let candidates: Vec<&(String, Instrument)> = loaded
        .instruments
        .iter()
        .filter(|(n, i)| {
            i.region().label() == region
                && instrument.is_none_or(|want| want == n)
                && i.outcome(outcome).is_some()
        })
        .collect();
    let (name, inst) = match candidates.as_slice() {
        [one] => *one,
        [] => {
            return Err(CliError::Usage(format!(
                "no instrument on {region} has outcome {outcome:?}"
            )))
        }
        _ => {
            return Err(CliError::Usage(format!(
                "several instruments on {region} have outcome {outcome:?}; pick one with --instrument"
            )))
        }
    };
    let m = inst.outcome(outcome).expect("filtered on this outcome");
    let updated = update_process(w, index, m).map_err(|e| CliError::core("update", e))?;
    let probability = marginal_prob(w, index, m).map_err(|e| CliError::core("update", e))?.value;

    let kept: Vec<InstrumentDoc> = doc
        .instruments
        .iter()
        .filter(|i| i.region != region)
        .cloned()
        .collect();
    let document = ScenarioDocument::from_process(&updated, kept);
    let mut h = String::new();
    writeln!(
        h,
        "conditioned on {region} = {outcome} (instrument {name}), probability {}",
        num(probability)
    )
    .unwrap();
    writeln!(h, "updated process on {}:", region_list(&updated)).unwrap();
    h.push_str(&document.to_json());
    let report = UpdateReport {
        region: region.to_string(),
        instrument: name.clone(),
        outcome: outcome.to_string(),
        probability,
        document,
    };
    Ok(Output::new(h, &report, true))
}

#[derive(Serialize)]
struct ReconstructReport {
    shots: Option<u64>,
    seed: u64,
    /// Frobenius distance from the document's process.
    deviation: f64,
    document: ScenarioDocument,
}

pub fn reconstruct(doc: &ScenarioDocument, s: &Settings, shots: Option<u64>) -> Result<Output, CliError> {
    let loaded = doc.load(s.tol)?;
    let w = require_process(&loaded)?;
    let oracle = match shots {
        None => FrameOracle::from_process(w.clone()),
        Some(n) => FrameOracle::sampled(w.clone(), n, s.seed),
    };
    let defaults = ReconstructOptions::default();
    let opts = ReconstructOptions {
        tol: s.tol.unwrap_or(ORACLE_TOL),
        check_trials: s.trials.unwrap_or(defaults.check_trials),
        seed: s.seed,
        ..defaults
    };
    let rebuilt = reconstruct_process_with(&oracle, &opts).map_err(|e| CliError::core("reconstruct", e))?;
    let deviation = rebuilt.matrix().distance(w.matrix());
    let document = ScenarioDocument::from_process(&rebuilt, doc.instruments.clone());

    let mut h = String::new();
    match shots {
        None => writeln!(h, "reconstructed from exact probabilities").unwrap(),
        Some(n) => writeln!(h, "reconstructed from {n} shots per query (seed {})", s.seed).unwrap(),
    }
    writeln!(h, "Frobenius distance to the declared process {}", num(deviation)).unwrap();
    h.push_str(&document.to_json());
    let report = ReconstructReport {
        shots,
        seed: s.seed,
        deviation,
        document,
    };
    Ok(Output::new(h, &report, true))
}

#[derive(Serialize)]
struct LemmasReport {
    dim: usize,
    trials: usize,
    seed: u64,
    swap_deviation: f64,
    completeness_deviation: f64,
    inner_product_deviation: f64,
    pass: bool,
}

pub fn lemmas(dim: usize, s: &Settings) -> Result<Output, CliError> {
    let r = verify_methods_lemmas(dim, s.trials.unwrap_or(50), s.seed)
        .map_err(|e| CliError::core("lemmas", e))?;
    let mut h = String::new();
    writeln!(h, "dimension {}, {} map pairs, seed {}", r.dim, r.trials, r.seed).unwrap();
    writeln!(h, "swap decomposition deviation {}", num(r.swap_deviation)).unwrap();
    writeln!(h, "completeness deviation {}", num(r.completeness_deviation)).unwrap();
    writeln!(h, "inner product deviation {}", num(r.inner_product_deviation)).unwrap();
    writeln!(h, "overall: {}", verdict(r.pass)).unwrap();
    let report = LemmasReport {
        dim: r.dim,
        trials: r.trials,
        seed: r.seed,
        swap_deviation: r.swap_deviation,
        completeness_deviation: r.completeness_deviation,
        inner_product_deviation: r.inner_product_deviation,
        pass: r.pass,
    };
    Ok(Output::new(h, &report, r.pass))
}

#[derive(Serialize)]
struct SampleEntryOut {
    outcome: Vec<String>,
    count: u64,
    frequency: f64,
    predicted: f64,
    std_error: f64,
    z_score: f64,
}

#[derive(Serialize)]
struct SampleOut {
    regions: Vec<String>,
    seed: u64,
    samples: u64,
    analytic_deviation: f64,
    max_abs_z: f64,
    flagged: usize,
    pass: bool,
    entries: Vec<SampleEntryOut>,
}

pub fn sample(doc: &ScenarioDocument, s: &Settings, n: u64) -> Result<Output, CliError> {
    let loaded = doc.load(s.tol)?;
    let rho_doc = doc
        .process
        .as_ref()
        .and_then(|p| p.chain_state())
        .ok_or_else(|| CliError::Parse {
            location: "process".into(),
            message: "sampling needs a state, identity_channel or sequential process".into(),
        })?;
    let rho = to_matrix(rho_doc, "process.rho")?;
    let mut chain = Vec::with_capacity(loaded.regions.len());
    for r in &loaded.regions {
        let mut on_region = loaded.instruments.iter().filter(|(_, i)| i.region() == r);
        match (on_region.next(), on_region.next()) {
            (Some((_, inst)), None) => chain.push(inst.clone()),
            _ => {
                return Err(CliError::core(
                    "sample",
                    process_rule::Error::Composition(format!("need exactly one instrument on {r}")),
                ))
            }
        }
    }
    let r = compare_with_process(&rho, &chain, n, s.seed).map_err(|e| CliError::core("sample", e))?;
    let analytic_deviation = r.analytic_deviation.unwrap_or(0.0);
    let flagged = r.flagged().count();
    let pass = flagged == 0 && analytic_deviation <= ANALYTIC_TOL;

    let report = SampleOut {
        regions: loaded.regions.iter().map(|r| r.label().to_string()).collect(),
        seed: r.seed,
        samples: r.samples,
        analytic_deviation,
        max_abs_z: r.max_abs_z(),
        flagged,
        pass,
        entries: r
            .entries
            .iter()
            .map(|e| SampleEntryOut {
                outcome: e.outcome.clone(),
                count: e.count,
                frequency: e.frequency,
                predicted: e.predicted,
                std_error: e.std_error,
                z_score: e.z_score,
            })
            .collect(),
    };

    let mut h = String::new();
    writeln!(h, "{} runs over {} (seed {})", report.samples, report.regions.join(" "), report.seed).unwrap();
    writeln!(h, "analytic deviation {}", num(report.analytic_deviation)).unwrap();
    for e in &report.entries {
        writeln!(
            h,
            "({}) count {} frequency {} predicted {} std error {} z {}",
            e.outcome.join(", "),
            e.count,
            num(e.frequency),
            num(e.predicted),
            num(e.std_error),
            num(e.z_score)
        )
        .unwrap();
    }
    writeln!(h, "max |z| {}, {} flagged", num(report.max_abs_z), report.flagged).unwrap();
    writeln!(h, "overall: {}", verdict(pass)).unwrap();
    Ok(Output::new(h, &report, pass))
}
