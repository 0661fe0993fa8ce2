//! CSV series for offline plotting.
//!
//! | kind | file | header |
//! |------|------|--------|
//! | `lln` | `lln_curve.csv` | `N,median_distance,max_distance` |
//! | `rate` | `integrand.csv` | `t,x,integrand` |
//! | `ldp` | `cost_vs_N.csv` | `N,cost_mean,cost_std,J` |

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rankflow_core::ldp_probe::{LdpReport, LlnReport};
use rankflow_core::rate::RateReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Lln,
    Rate,
    Ldp,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            Self::Lln => "lln_curve.csv",
            Self::Rate => "integrand.csv",
            Self::Ldp => "cost_vs_N.csv",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lln => "lln",
            Self::Rate => "rate",
            Self::Ldp => "ldp",
        })
    }
}

impl FromStr for PlotKind {
    type Err = PlotError;

    fn from_str(s: &str) -> Result<Self, PlotError> {
        match s {
            "lln" => Ok(Self::Lln),
            "rate" => Ok(Self::Rate),
            "ldp" => Ok(Self::Ldp),
            other => Err(PlotError::UnknownKind(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PlotSource<'a> {
    Lln(&'a LlnReport),
    Rate(&'a RateReport),
    Ldp(&'a LdpReport),
}

impl PlotSource<'_> {
    fn kind(&self) -> PlotKind {
        match self {
            Self::Lln(_) => PlotKind::Lln,
            Self::Rate(_) => PlotKind::Rate,
            Self::Ldp(_) => PlotKind::Ldp,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("unknown plot kind `{0}` (expected lln, rate or ldp)")]
    UnknownKind(String),
    #[error("plot kind {requested} does not match a {given} report")]
    Mismatch { requested: PlotKind, given: PlotKind },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Writes the series for `kind` into `dir`, returning the file names written.
pub fn emit_plotdata(source: PlotSource<'_>, kind: PlotKind, dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    if source.kind() != kind {
        return Err(PlotError::Mismatch {
            requested: kind,
            given: source.kind(),
        });
    }
    let mut buf = Vec::new();
    let io = |source| PlotError::Io {
        path: dir.join(kind.file_name()),
        source,
    };
    match source {
        PlotSource::Lln(rep) => {
            writeln!(buf, "N,median_distance,max_distance").map_err(io)?;
            for e in &rep.entries {
                writeln!(buf, "{},{},{}", e.n, e.median_distance, e.max_distance).map_err(io)?;
            }
        }
        PlotSource::Rate(rep) => rep.write_integrand_csv(&mut buf).map_err(io)?,
        PlotSource::Ldp(rep) => {
            writeln!(buf, "N,cost_mean,cost_std,J").map_err(io)?;
            for e in &rep.entries {
                writeln!(buf, "{},{},{},{}", e.n, e.cost_mean, e.cost_std, rep.j).map_err(io)?;
            }
        }
    }
    fs::write(dir.join(kind.file_name()), buf).map_err(io)?;
    Ok(vec![PathBuf::from(kind.file_name())])
}
