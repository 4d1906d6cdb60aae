//! Serializable inequality reports and CSV emission for batch runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which inequality a report certifies or refutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    W1I,
    W2I,
    W1H,
    W2H,
    HI,
    AlphaTvI,
    LambdaMaxBound,
    Cheeger,
    Tp,
    BobkovGotze,
    TiltingMgf,
    PhiSobolev,
    Thm51a,
    Thm51c,
    Theorem11,
}

impl ReportKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportKind::W1I => "w1i",
            ReportKind::W2I => "w2i",
            ReportKind::W1H => "w1h",
            ReportKind::W2H => "w2h",
            ReportKind::HI => "hi",
            ReportKind::AlphaTvI => "alpha_tv_i",
            ReportKind::LambdaMaxBound => "lambda_max_bound",
            ReportKind::Cheeger => "cheeger",
            ReportKind::Tp => "tp",
            ReportKind::BobkovGotze => "bobkov_gotze",
            ReportKind::TiltingMgf => "tilting_mgf",
            ReportKind::PhiSobolev => "phi_sobolev",
            ReportKind::Thm51a => "thm51a",
            ReportKind::Thm51c => "thm51c",
            ReportKind::Theorem11 => "theorem11",
        }
    }
}

/// The object achieving the reported worst margin.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// A density against the fixture's stationary measure.
    Density { f: Vec<f64> },
    /// A test function (e.g. the unit-variance eigen-direction).
    Function { g: Vec<f64> },
    /// A family pair together with the tilt parameter.
    PairLambda {
        u: Vec<f64>,
        v: Vec<f64>,
        lambda: f64,
    },
    None,
}

/// Outcome of a batch inequality check.
///
/// `worst_margin <= 0` means the inequality held over everything tested; the
/// witness re-evaluates to `worst_margin` within 1e-9 under the producing
/// operation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    pub kind: ReportKind,
    /// Constants the inequality was tested at (meaning depends on `kind`).
    pub constants: Vec<f64>,
    pub worst_margin: f64,
    pub witness: Witness,
    pub n_samples: usize,
    /// Margin tolerance the verdict used.
    pub tolerance: f64,
    pub holds: bool,
    /// Caveats such as the sampled-(A2) flag for custom families.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
}

impl InequalityReport {
    pub fn new(
        kind: ReportKind,
        constants: Vec<f64>,
        worst_margin: f64,
        witness: Witness,
        n_samples: usize,
        tolerance: f64,
    ) -> Self {
        Self {
            kind,
            constants,
            worst_margin,
            witness,
            n_samples,
            tolerance,
            holds: worst_margin <= tolerance,
            caveats: Vec::new(),
        }
    }

    pub fn with_caveat(mut self, caveat: impl Into<String>) -> Self {
        self.caveats.push(caveat.into());
        self
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// One row per (fixture, kind, margin, witness-id) with a mandatory header.
pub fn write_reports_csv<W: Write>(
    out: &mut W,
    rows: &[(String, &InequalityReport)],
) -> Result<()> {
    writeln!(
        out,
        "fixture,kind,constants,worst_margin,holds,n_samples,tolerance,witness_id"
    )
    .map_err(|e| Error::Parse(e.to_string()))?;
    for (idx, (fixture, rep)) in rows.iter().enumerate() {
        let consts = rep
            .constants
            .iter()
            .map(|c| format!("{c:.12e}"))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{},{},{},{:.12e},{},{},{:.3e},w{}",
            csv_field(fixture),
            rep.kind.as_str(),
            csv_field(&consts),
            rep.worst_margin,
            rep.holds,
            rep.n_samples,
            rep.tolerance,
            idx
        )
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    Ok(())
}

/// RFC-4180 style quoting: wrap when the field contains a comma or quote.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_roundtrip() {
        let rep = InequalityReport::new(
            ReportKind::W1I,
            vec![0.25],
            -1.5e-9,
            Witness::Density { f: vec![2.0, 0.0] },
            120,
            1e-8,
        )
        .with_caveat("a2 sampled, not proven");
        let text = rep.to_json().unwrap();
        let back = InequalityReport::from_json(&text).unwrap();
        assert_eq!(back.kind, ReportKind::W1I);
        assert!(back.holds);
        assert_eq!(back.caveats.len(), 1);
        // deterministic re-serialization (hash-equivalent round trip)
        assert_eq!(text, back.to_json().unwrap());
    }

    #[test]
    fn csv_has_header_and_quoting() {
        let rep =
            InequalityReport::new(ReportKind::Cheeger, vec![1.0, 2.0], 0.5, Witness::None, 3, 1e-9);
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[("fix,ture".into(), &rep)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("fixture,kind"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("\"fix,ture\",cheeger"));
        assert!(row.contains("false"));
    }
}
