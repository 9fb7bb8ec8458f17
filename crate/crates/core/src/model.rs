//! Chain model definition, parsing, validation, and tie handling.
//!
//! A model consists of named states, a vector of positive mean sojourn
//! times, and an embedded one-step transition matrix with a zero
//! diagonal and rows summing to 1. Models are read from a line-oriented
//! text format in which every number may be a decimal (`0.5`) or a
//! fraction (`1/2`); the source token of each entry is kept so reports
//! and drawings can show probabilities exactly as written.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

/// Tolerance for row sums at validation time.
const ROW_SUM_TOL: f64 = 1e-9;

/// Identifies a state by its 0-based position in a model's state list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(usize);

impl StateId {
    pub fn new(index: usize) -> Self {
        StateId(index)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

/// Where in the model an issue was found. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locator {
    Model,
    Row(usize),
    Cell(usize, usize),
    Sojourn(usize),
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locator::Model => write!(f, "model"),
            Locator::Row(i) => write!(f, "row {i}"),
            Locator::Cell(i, j) => write!(f, "({i},{j})"),
            Locator::Sojourn(i) => write!(f, "sojourn {i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Issue {
    pub severity: Severity,
    pub locator: Locator,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.severity, self.locator, self.message)
    }
}

/// Outcome of validating a model: `ok()` is true exactly when no
/// error-severity issue is present. Tie warnings never affect `ok()`.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.error_count() == 0
    }

    pub fn issues(&self) -> &[Issue] {
        &self.issues
    }

    pub fn error_count(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Error)
            .count()
    }

    /// Number of rows whose maximum entry is attained in more than one
    /// column. These are the only warnings a report can carry.
    pub fn tie_warning_count(&self) -> usize {
        self.issues
            .iter()
            .filter(|i| i.severity == Severity::Warning)
            .count()
    }

    fn error(&mut self, locator: Locator, message: String) {
        self.issues.push(Issue {
            severity: Severity::Error,
            locator,
            message,
        });
    }

    fn warning(&mut self, locator: Locator, message: String) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            locator,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}, token {token}: {message}")]
    Syntax {
        line: usize,
        token: usize,
        message: String,
    },
    #[error("line {line}: {message}")]
    Dimension { line: usize, message: String },
    #[error("model failed validation:\n{0}")]
    Invalid(ValidationReport),
}

/// A row whose maximum probability is attained in more than one column.
#[derive(Debug, Clone, Error)]
#[error("state {name}: row maximum is attained in more than one column")]
pub struct TieError {
    pub state: StateId,
    pub name: String,
}

/// A parsed but not yet validated model. Produced by [`parse_raw`] so
/// that validation findings can be reported instead of rejected.
#[derive(Debug, Clone)]
pub struct RawModel {
    pub names: Vec<String>,
    pub sojourn: Vec<f64>,
    /// Row-major `n*n` transition entries.
    pub trans: Vec<f64>,
    pub sojourn_tokens: Vec<String>,
    pub trans_tokens: Vec<String>,
}

impl RawModel {
    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> ValidationReport {
        run_checks(&self.names, &self.sojourn, &self.trans)
    }

    /// Validates and, on success, renormalizes every row to sum 1 in
    /// working precision, producing a usable model.
    pub fn into_model(self) -> Result<ChainModel, ModelError> {
        let report = self.validate();
        if !report.ok() {
            return Err(ModelError::Invalid(report));
        }
        let RawModel {
            names,
            sojourn,
            mut trans,
            sojourn_tokens,
            trans_tokens,
        } = self;
        let n = names.len();
        for i in 0..n {
            renormalize_row(&mut trans[i * n..(i + 1) * n]);
        }
        Ok(ChainModel {
            names,
            sojourn,
            trans,
            sojourn_tokens,
            trans_tokens,
        })
    }
}

/// A validated chain model. Rows of `trans` sum to 1 in working
/// precision, the diagonal is exactly zero, and all sojourn times are
/// positive. Values are immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    names: Vec<String>,
    sojourn: Vec<f64>,
    trans: Vec<f64>,
    sojourn_tokens: Vec<String>,
    trans_tokens: Vec<String>,
}

impl ChainModel {
    /// Builds a model from plain values. Entry tokens for reports are
    /// generated from the values; rows are renormalized after the
    /// checks pass.
    pub fn new(
        names: Vec<String>,
        sojourn: Vec<f64>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let n = names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::Dimension {
                    line: 0,
                    message: format!("matrix row {i} has {} entries, expected {n}", row.len()),
                });
            }
        }
        if rows.len() != n {
            return Err(ModelError::Dimension {
                line: 0,
                message: format!("matrix has {} rows, expected {n}", rows.len()),
            });
        }
        let trans: Vec<f64> = rows.into_iter().flatten().collect();
        let raw = RawModel {
            sojourn_tokens: sojourn.iter().map(|v| format!("{v}")).collect(),
            trans_tokens: trans.iter().map(|v| format!("{v}")).collect(),
            names,
            sojourn,
            trans,
        };
        raw.into_model()
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = StateId> {
        (0..self.n()).map(StateId::new)
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.names[s.index()]
    }

    pub fn state_names(&self) -> &[String] {
        &self.names
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.names.iter().position(|n| n == name).map(StateId::new)
    }

    pub fn sojourn_time(&self, s: StateId) -> f64 {
        self.sojourn[s.index()]
    }

    pub fn sojourn_times(&self) -> &[f64] {
        &self.sojourn
    }

    /// Row-major `n*n` transition entries.
    pub fn trans(&self) -> &[f64] {
        &self.trans
    }

    pub fn prob(&self, from: StateId, to: StateId) -> f64 {
        self.trans[from.index() * self.n() + to.index()]
    }

    pub fn row(&self, from: StateId) -> &[f64] {
        let n = self.n();
        &self.trans[from.index() * n..(from.index() + 1) * n]
    }

    /// The transition entry exactly as written in the source file
    /// (or formatted from the value for programmatic models).
    pub fn trans_token(&self, from: StateId, to: StateId) -> &str {
        &self.trans_tokens[from.index() * self.n() + to.index()]
    }

    pub fn sojourn_token(&self, s: StateId) -> &str {
        &self.sojourn_tokens[s.index()]
    }

    /// Re-runs all checks. Construction guarantees no errors, so the
    /// report only carries tie warnings, one per row with a tied
    /// maximum.
    pub fn validate(&self) -> ValidationReport {
        run_checks(&self.names, &self.sojourn, &self.trans)
    }

    /// Column of the strict maximum of the row of `s`. Never returns
    /// `s` itself: the diagonal is zero while some entry is positive.
    pub fn row_max_successor(&self, s: StateId) -> Result<StateId, TieError> {
        let row = self.row(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut hits = row.iter().enumerate().filter(|(_, &p)| p == max);
        let (argmax, _) = hits.next().expect("row is non-empty");
        if hits.next().is_some() {
            return Err(TieError {
                state: s,
                name: self.state_name(s).to_string(),
            });
        }
        Ok(StateId::new(argmax))
    }

    /// Breaks tied row maxima deterministically: the k-th tied cell of
    /// a row (left to right, k starting at 0) gains `magnitude * (k+1)`
    /// and the row is renormalized, making the rightmost formerly-tied
    /// cell the strict maximum. Rows without a tied maximum are
    /// returned unchanged.
    ///
    /// # Panics
    ///
    /// Panics unless `0 < magnitude < 1e-3`.
    pub fn perturb_ties(&self, magnitude: f64) -> ChainModel {
        assert!(
            magnitude > 0.0 && magnitude < 1e-3,
            "perturbation magnitude must lie in (0, 1e-3), got {magnitude}"
        );
        let n = self.n();
        let mut out = self.clone();
        for i in 0..n {
            let row = &mut out.trans[i * n..(i + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = (0..n).filter(|&j| row[j] == max).collect();
            if tied.len() < 2 {
                continue;
            }
            for (k, &j) in tied.iter().enumerate() {
                row[j] += magnitude * (k + 1) as f64;
            }
            renormalize_row(row);
            for (j, &p) in row.iter().enumerate() {
                out.trans_tokens[i * n + j] = format!("{p}");
            }
        }
        out
    }

    /// Serializes the model in the file format, emitting each entry's
    /// source token. Parsing the result reproduces this model.
    pub fn to_text(&self) -> String {
        let n = self.n();
        let mut out = String::new();
        out.push_str(&format!("states: {}\n", self.names.join(" ")));
        out.push_str(&format!("sojourn: {}\n", self.sojourn_tokens.join(" ")));
        out.push_str("matrix:\n");
        for i in 0..n {
            let row: Vec<&str> = (0..n)
                .map(|j| self.trans_tokens[i * n + j].as_str())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn renormalize_row(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
}

/// All invariant checks shared by parsing, construction, and
/// re-validation. Works on raw parts so violations can be enumerated
/// rather than rejected.
fn run_checks(names: &[String], sojourn: &[f64], trans: &[f64]) -> ValidationReport {
    let n = names.len();
    let mut report = ValidationReport::default();

    if n < 2 {
        report.error(
            Locator::Model,
            format!("a model needs at least 2 states, got {n}"),
        );
    }
    let mut seen = HashSet::new();
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            report.error(Locator::Model, format!("state {i} has an invalid name"));
        }
        if !seen.insert(name.as_str()) {
            report.error(Locator::Model, format!("duplicate state name '{name}'"));
        }
    }
    if sojourn.len() != n || trans.len() != n * n {
        report.error(
            Locator::Model,
            format!(
                "dimension mismatch: {} states, {} sojourn entries, {} matrix entries",
                n,
                sojourn.len(),
                trans.len()
            ),
        );
        return report;
    }

    for (i, &t) in sojourn.iter().enumerate() {
        if !t.is_finite() || t <= 0.0 {
            report.error(
                Locator::Sojourn(i),
                format!("sojourn time must be positive and finite, got {t}"),
            );
        }
    }

    for i in 0..n {
        let row = &trans[i * n..(i + 1) * n];
        for (j, &p) in row.iter().enumerate() {
            if !p.is_finite() {
                report.error(Locator::Cell(i, j), format!("entry is not finite: {p}"));
            } else if p < 0.0 {
                report.error(Locator::Cell(i, j), format!("negative entry {p}"));
            } else if p > 1.0 {
                report.error(Locator::Cell(i, j), format!("entry {p} exceeds 1"));
            }
            if i == j && p != 0.0 {
                report.error(
                    Locator::Cell(i, j),
                    format!("nonzero diagonal at ({i},{i})"),
                );
            }
        }
        let sum: f64 = row.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOL {
            report.error(
                Locator::Row(i),
                format!("row sum {sum} outside 1 \u{b1} {ROW_SUM_TOL:e}"),
            );
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > 0.0 {
            let tied: Vec<usize> = (0..n).filter(|&j| row[j] == max).collect();
            if tied.len() > 1 {
                let cols = tied
                    .iter()
                    .map(|j| j.to_string())
                    .collect::<Vec<_>>()
                    .join(", ");
                report.warning(
                    Locator::Row(i),
                    format!("maximum {max} is tied across columns {cols}"),
                );
            }
        }
    }
    report
}

/// Parses the model file format without enforcing numeric invariants;
/// only syntax and dimensions are checked. Blank lines and lines whose
/// first non-blank character is `#` are ignored.
pub fn parse_raw(text: &str) -> Result<RawModel, ModelError> {
    let mut names: Option<(usize, Vec<String>)> = None;
    let mut sojourn: Option<(Vec<f64>, Vec<String>)> = None;
    let mut matrix_at: Option<usize> = None;
    let mut rows: Vec<f64> = Vec::new();
    let mut row_tokens: Vec<String> = Vec::new();
    let mut rows_read = 0usize;
    let mut last_line = 0usize;

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }

        if names.is_none() {
            let rest = line
                .strip_prefix("states:")
                .ok_or_else(|| ModelError::Syntax {
                    line: lineno,
                    token: 1,
                    message: "expected 'states:' as the first significant line".into(),
                })?;
            let list: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            if list.len() < 2 {
                return Err(ModelError::Dimension {
                    line: lineno,
                    message: format!(
                        "a model needs at least 2 states, got {} (a zero-diagonal row cannot sum to 1 otherwise)",
                        list.len()
                    ),
                });
            }
            let mut seen = HashSet::new();
            for (t, name) in list.iter().enumerate() {
                if !seen.insert(name.as_str()) {
                    return Err(ModelError::Syntax {
                        line: lineno,
                        token: t + 2,
                        message: format!("duplicate state name '{name}'"),
                    });
                }
            }
            names = Some((lineno, list));
            continue;
        }
        let n = names.as_ref().map(|(_, l)| l.len()).unwrap_or(0);

        if matrix_at.is_some() && rows_read < n {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != n {
                return Err(ModelError::Dimension {
                    line: lineno,
                    message: format!(
                        "matrix row {} has {} entries, expected {}",
                        rows_read, // 0-based row index
                        tokens.len(),
                        n
                    ),
                });
            }
            for (t, tok) in tokens.iter().enumerate() {
                let v = parse_number(tok).map_err(|message| ModelError::Syntax {
                    line: lineno,
                    token: t + 1,
                    message,
                })?;
                rows.push(v);
                row_tokens.push(tok.to_string());
            }
            rows_read += 1;
            continue;
        }

        if let Some(rest) = line.strip_prefix("sojourn:") {
            if sojourn.is_some() {
                return Err(ModelError::Syntax {
                    line: lineno,
                    token: 1,
                    message: "duplicate 'sojourn:' section".into(),
                });
            }
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            if tokens.len() != n {
                return Err(ModelError::Dimension {
                    line: lineno,
                    message: format!("sojourn has {} entries, expected {}", tokens.len(), n),
                });
            }
            let mut values = Vec::with_capacity(n);
            for (t, tok) in tokens.iter().enumerate() {
                let v = parse_number(tok).map_err(|message| ModelError::Syntax {
                    line: lineno,
                    token: t + 2,
                    message,
                })?;
                values.push(v);
            }
            sojourn = Some((values, tokens.iter().map(|t| t.to_string()).collect()));
            continue;
        }

        if line == "matrix:" {
            if matrix_at.is_some() {
                return Err(ModelError::Syntax {
                    line: lineno,
                    token: 1,
                    message: "duplicate 'matrix:' section".into(),
                });
            }
            matrix_at = Some(lineno);
            continue;
        }
        if line.starts_with("matrix:") {
            return Err(ModelError::Syntax {
                line: lineno,
                token: 2,
                message: "matrix entries start on the line after 'matrix:'".into(),
            });
        }
        if line.starts_with("states:") {
            return Err(ModelError::Syntax {
                line: lineno,
                token: 1,
                message: "duplicate 'states:' section".into(),
            });
        }
        return Err(ModelError::Syntax {
            line: lineno,
            token: 1,
            message: format!("unrecognized line '{line}'"),
        });
    }

    let (_, names) = names.ok_or(ModelError::Syntax {
        line: last_line + 1,
        token: 1,
        message: "missing 'states:' section".into(),
    })?;
    let n = names.len();
    let (sojourn, sojourn_tokens) = sojourn.ok_or(ModelError::Syntax {
        line: last_line + 1,
        token: 1,
        message: "missing 'sojourn:' section".into(),
    })?;
    if matrix_at.is_none() {
        return Err(ModelError::Syntax {
            line: last_line + 1,
            token: 1,
            message: "missing 'matrix:' section".into(),
        });
    }
    if rows_read != n {
        return Err(ModelError::Dimension {
            line: last_line,
            message: format!("matrix has {rows_read} rows, expected {n}"),
        });
    }

    Ok(RawModel {
        names,
        sojourn,
        trans: rows,
        sojourn_tokens,
        trans_tokens: row_tokens,
    })
}

/// Parses and validates a model file, renormalizing rows on success.
pub fn parse_model(text: &str) -> Result<ChainModel, ModelError> {
    parse_raw(text)?.into_model()
}

/// A number token: a decimal like `10` or `0.5`, or a fraction `a/b`
/// evaluated as one division in full precision.
fn parse_number(tok: &str) -> Result<f64, String> {
    let value = if let Some((num, den)) = tok.split_once('/') {
        let num: f64 = num
            .parse()
            .map_err(|_| format!("invalid numerator in '{tok}'"))?;
        let den: f64 = den
            .parse()
            .map_err(|_| format!("invalid denominator in '{tok}'"))?;
        if den == 0.0 {
            return Err(format!("zero denominator in '{tok}'"));
        }
        num / den
    } else {
        tok.parse().map_err(|_| format!("invalid number '{tok}'"))?
    };
    if !value.is_finite() {
        return Err(format!("number '{tok}' is not finite"));
    }
    Ok(value)
}
