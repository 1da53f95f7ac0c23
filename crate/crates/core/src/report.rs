//! Validation reports shared by every validator in the crate.
//!
//! Violations are data, not failures: validators always return a report and
//! callers decide whether errors are fatal. Warnings never are.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Violation {
    /// Id of the offending item (stage, node, service, sample, config).
    pub subject: String,
    /// Short stable rule code, e.g. `distributed-input-location`.
    pub rule: String,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn error(&mut self, subject: impl Into<String>, rule: &str, message: impl Into<String>) {
        self.push(subject.into(), rule, Severity::Error, message.into());
    }

    pub fn warning(&mut self, subject: impl Into<String>, rule: &str, message: impl Into<String>) {
        self.push(subject.into(), rule, Severity::Warning, message.into());
    }

    fn push(&mut self, subject: String, rule: &str, severity: Severity, message: String) {
        self.violations.push(Violation {
            subject,
            rule: rule.to_string(),
            severity,
            message,
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    /// Sort by subject, then rule, so output is independent of discovery order.
    pub fn sorted(mut self) -> Self {
        self.violations.sort();
        self
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.violations.iter().any(|v| v.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Warning)
    }

    pub fn subjects(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.subject.as_str()).collect()
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{level}[{}] {}: {}", self.rule, self.subject, self.message)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}
