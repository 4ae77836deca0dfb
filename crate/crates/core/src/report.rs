use std::fmt;

use serde::Serialize;

/// One violated invariant, located by the entity it concerns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    /// Field path or index of the offending entity, e.g. `ellipsoids[2]` or `segment 0`.
    pub entity: String,
    pub message: String,
    /// Measured quantity behind the finding (a barrier value, an eigenvalue, ...).
    pub margin: Option<f64>,
}

/// Collected findings of a validator. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entity: impl Into<String>, message: impl Into<String>, margin: Option<f64>) {
        self.findings.push(Finding {
            entity: entity.into(),
            message: message.into(),
            margin,
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.findings.extend(other.findings);
    }

    /// Prefixes every entity path, used when nesting reports.
    pub fn scoped(mut self, prefix: &str) -> Self {
        for f in &mut self.findings {
            f.entity = format!("{prefix}.{}", f.entity);
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", finding.entity, finding.message)?;
            if let Some(m) = finding.margin {
                write!(f, " (margin {m:e})")?;
            }
        }
        Ok(())
    }
}
