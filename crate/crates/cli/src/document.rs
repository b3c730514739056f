//! JSON scenario documents.
//!
//! Complex numbers are `[re, im]` pairs and matrices are row-major nested
//! arrays. Unknown fields are rejected everywhere.

use std::collections::HashSet;

use process_rule::channels::{Instrument, QuantumMap, Region, CHANNEL_TOL};
use process_rule::process::{
    identity_channel_process, sequential_process, spacelike_process, state_process, ProcessMatrix,
};
use process_rule::tensor::{ComplexMatrix, C64};
use process_rule::Error;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const VERSION: u32 = 1;

pub type MatrixDoc = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub version: u32,
    pub regions: Vec<RegionDoc>,
    #[serde(default)]
    pub instruments: Vec<InstrumentDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDoc {
    pub label: String,
    pub d_in: usize,
    pub d_out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentDoc {
    pub name: String,
    pub region: String,
    pub outcomes: Vec<OutcomeDoc>,
}

/// One outcome, given by exactly one of `kraus` or `choi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeDoc {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<MatrixDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choi: Option<MatrixDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateArg {
    pub rho: MatrixDoc,
}

/// A process matrix given directly or by a constructor. Constructors take
/// their dimensions from the declared regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessDoc {
    Matrix(MatrixDoc),
    State(StateArg),
    IdentityChannel(StateArg),
    Spacelike(StateArg),
    Sequential(StateArg),
}

impl ProcessDoc {
    /// Initial state of a chain-shaped process.
    pub fn chain_state(&self) -> Option<&MatrixDoc> {
        match self {
            Self::State(a) | Self::IdentityChannel(a) | Self::Sequential(a) => Some(&a.rho),
            Self::Matrix(_) | Self::Spacelike(_) => None,
        }
    }
}

/// A document turned into library objects.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub regions: Vec<Region>,
    /// `(name, instrument)` in document order.
    pub instruments: Vec<(String, Instrument)>,
    pub process: Option<ProcessMatrix>,
}

impl Loaded {
    pub fn region(&self, label: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.label() == label)
    }
}

impl ScenarioDocument {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| CliError::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if doc.version != VERSION {
            return Err(parse_error(
                "version",
                format!("unsupported version {} (expected {VERSION})", doc.version),
            ));
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents always serialize");
        s.push('\n');
        s
    }

    /// Builds regions, instruments and the process. Structural problems are
    /// parse errors; objects that fail library checks keep their own error.
    pub fn load(&self, tol: Option<f64>) -> Result<Loaded, CliError> {
        let tol = tol.unwrap_or(CHANNEL_TOL);
        let mut seen = HashSet::new();
        let mut regions = Vec::with_capacity(self.regions.len());
        for (i, r) in self.regions.iter().enumerate() {
            let at = format!("regions[{i}]");
            if !seen.insert(r.label.as_str()) {
                return Err(parse_error(&at, format!("duplicate region label {:?}", r.label)));
            }
            regions.push(Region::new(r.label.clone(), r.d_in, r.d_out).map_err(|e| structural(&at, e))?);
        }
        let find = |label: &str, at: &str| {
            regions
                .iter()
                .find(|r| r.label() == label)
                .cloned()
                .ok_or_else(|| parse_error(at, format!("undeclared region {label:?}")))
        };

        let mut names = HashSet::new();
        let mut instruments = Vec::with_capacity(self.instruments.len());
        for (i, inst) in self.instruments.iter().enumerate() {
            let at = format!("instruments[{i}]");
            if !names.insert(inst.name.as_str()) {
                return Err(parse_error(&at, format!("duplicate instrument name {:?}", inst.name)));
            }
            let region = find(&inst.region, &format!("{at}.region"))?;
            let mut outcomes = Vec::with_capacity(inst.outcomes.len());
            for (k, o) in inst.outcomes.iter().enumerate() {
                let at = format!("{at}.outcomes[{k}]");
                outcomes.push((o.label.clone(), outcome_map(o, &region, tol, &at)?));
            }
            let instrument = Instrument::new(region, outcomes).map_err(|e| structural(&at, e))?;
            instruments.push((inst.name.clone(), instrument));
        }

        let process = self
            .process
            .as_ref()
            .map(|p| build_process(p, &regions))
            .transpose()?;
        Ok(Loaded {
            regions,
            instruments,
            process,
        })
    }

    /// Document holding `process` as an explicit matrix on its regions,
    /// together with the given instruments.
    pub fn from_process(process: &ProcessMatrix, instruments: Vec<InstrumentDoc>) -> Self {
        Self {
            version: VERSION,
            regions: process.regions().iter().map(region_doc).collect(),
            instruments,
            process: Some(ProcessDoc::Matrix(matrix_doc(process.matrix()))),
        }
    }
}

pub fn region_doc(r: &Region) -> RegionDoc {
    RegionDoc {
        label: r.label().to_string(),
        d_in: r.d_in(),
        d_out: r.d_out(),
    }
}

pub fn matrix_doc(m: &ComplexMatrix) -> MatrixDoc {
    m.to_rows()
        .into_iter()
        .map(|row| row.into_iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

pub fn to_matrix(m: &MatrixDoc, at: &str) -> Result<ComplexMatrix, CliError> {
    let rows: Vec<Vec<C64>> = m
        .iter()
        .map(|row| row.iter().map(|&[re, im]| C64::new(re, im)).collect())
        .collect();
    ComplexMatrix::from_rows(&rows).map_err(|e| structural(at, e))
}

fn outcome_map(o: &OutcomeDoc, region: &Region, tol: f64, at: &str) -> Result<QuantumMap, CliError> {
    match (&o.kraus, &o.choi) {
        (Some(kraus), None) => {
            let ops = kraus
                .iter()
                .enumerate()
                .map(|(j, k)| to_matrix(k, &format!("{at}.kraus[{j}]")))
                .collect::<Result<Vec<_>, _>>()?;
            QuantumMap::from_kraus_with_tol(region.clone(), ops, tol).map_err(|e| structural(at, e))
        }
        (None, Some(choi)) => {
            let m = to_matrix(choi, &format!("{at}.choi"))?;
            QuantumMap::from_choi_with_tol(region.clone(), m, tol).map_err(|e| structural(at, e))
        }
        _ => Err(parse_error(at, "give exactly one of \"kraus\" or \"choi\"".to_string())),
    }
}

fn build_process(p: &ProcessDoc, regions: &[Region]) -> Result<ProcessMatrix, CliError> {
    let at = "process";
    let rho = |a: &StateArg| to_matrix(&a.rho, "process.rho");
    let built = match p {
        ProcessDoc::Matrix(m) => {
            return ProcessMatrix::new(regions.to_vec(), to_matrix(m, at)?).map_err(|e| structural(at, e))
        }
        ProcessDoc::Sequential(a) => {
            return sequential_process(&rho(a)?, regions).map_err(|e| structural(at, e))
        }
        ProcessDoc::State(a) => state_process(&rho(a)?),
        ProcessDoc::IdentityChannel(a) => {
            let b_out = regions.get(1).map_or(0, Region::d_out);
            identity_channel_process(&rho(a)?, b_out)
        }
        ProcessDoc::Spacelike(a) => {
            let d = |k: usize| regions.get(k).map_or(0, Region::d_in);
            spacelike_process(&rho(a)?, d(0), d(1))
        }
    }
    .map_err(|e| structural(at, e))?;

    // constructors label their regions A, B; adopt the declared labels
    let shapes = |rs: &[Region]| rs.iter().map(|r| (r.d_in(), r.d_out())).collect::<Vec<_>>();
    if shapes(built.regions()) != shapes(regions) {
        let want: Vec<String> = built.regions().iter().map(|r| format!("({}, {})", r.d_in(), r.d_out())).collect();
        return Err(parse_error(
            at,
            format!("constructor needs regions with (d_in, d_out) = {}", want.join(", ")),
        ));
    }
    ProcessMatrix::new(regions.to_vec(), built.matrix().clone()).map_err(|e| structural(at, e))
}

fn parse_error(at: &str, message: String) -> CliError {
    CliError::Parse {
        location: at.to_string(),
        message,
    }
}

/// Shape problems while loading are document errors; everything else keeps
/// its library classification.
fn structural(at: &str, e: Error) -> CliError {
    match e {
        Error::Shape(m) | Error::Size(m) => parse_error(at, m),
        other => CliError::Core {
            context: at.to_string(),
            source: other,
        },
    }
}
