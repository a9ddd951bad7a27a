//! JSON problem files.
//!
//! Matrices are nested arrays of rows; vectors are flat arrays (a bare number
//! is a vector of length one). An entry is a bare number when real and a
//! two-element `[re, im]` array when complex. Numbers are written in the
//! shortest form that parses back to the same `f64`.

use std::str::FromStr;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bvp::{BoundaryValueProblem, SolveOptions, Strategy, DEFAULT_THETA};
use crate::error::BvpError;
use crate::linalg::{ComplexMatrix, C64};
use crate::pencil::{DecomposeOptions, MatrixPencil, WeierstrassForm};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: &str, message: impl Into<String>) -> ProblemError {
    ProblemError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Solver strategy requested by the user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StrategyChoice {
    #[default]
    Auto,
    Fixed(Strategy),
}

impl FromStr for StrategyChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "auto" => Self::Auto,
            "lsq" => Self::Fixed(Strategy::LeastSquares),
            "regularized" => Self::Fixed(Strategy::Regularized),
            "pinv" => Self::Fixed(Strategy::PseudoinverseSolve),
            "minnorm" => Self::Fixed(Strategy::MinNorm),
            "exact" => Self::Fixed(Strategy::ExactSolve),
            other => {
                return Err(format!(
                    "unknown strategy `{other}` (expected auto, lsq, regularized, pinv, minnorm or exact)"
                ))
            }
        })
    }
}

impl StrategyChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::Auto => "auto",
            Self::Fixed(s) => s.name(),
        }
    }
}

/// A canonical form supplied in the problem file.
#[derive(Clone, Debug, PartialEq)]
pub enum WcfSpec {
    /// All blocks given: `P`, `Q`, `J_p`, `H_q`.
    Full {
        left: ComplexMatrix,
        right: ComplexMatrix,
        jp: ComplexMatrix,
        hq: ComplexMatrix,
    },
    /// Only `(Q_p, J_p)`; the infinite part is computed.
    FinitePart {
        qp: ComplexMatrix,
        jp: ComplexMatrix,
    },
}

impl WcfSpec {
    pub fn resolve(&self, pencil: &MatrixPencil) -> crate::Result<WeierstrassForm> {
        match self {
            Self::Full {
                left,
                right,
                jp,
                hq,
            } => WeierstrassForm::from_parts(left.clone(), right.clone(), jp.clone(), hq.clone()),
            Self::FinitePart { qp, jp } => {
                WeierstrassForm::with_finite_part(pencil, qp.clone(), jp.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemOptions {
    pub theta: f64,
    pub tol: Option<f64>,
    pub seed: u64,
    pub strategy: StrategyChoice,
    pub e: Option<ComplexMatrix>,
    pub wcf: Option<WcfSpec>,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            tol: None,
            seed: 0,
            strategy: StrategyChoice::Auto,
            e: None,
            wcf: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemFile {
    pub f: ComplexMatrix,
    pub g: ComplexMatrix,
    pub a1: ComplexMatrix,
    pub a2: ComplexMatrix,
    pub b1: ComplexMatrix,
    pub b2: ComplexMatrix,
    pub n: usize,
    pub options: ProblemOptions,
}

fn parse_entry(v: &Value, field: &str) -> Result<C64, ProblemError> {
    let num = |x: &Value, f: &str| -> Result<f64, ProblemError> {
        let n = x
            .as_f64()
            .ok_or_else(|| field_err(f, format!("expected a number, found {x}")))?;
        if !n.is_finite() {
            return Err(field_err(f, "entry is not finite"));
        }
        Ok(n)
    };
    match v {
        Value::Number(_) => Ok(C64::new(num(v, field)?, 0.0)),
        Value::Array(parts) if parts.len() == 2 => Ok(C64::new(
            num(&parts[0], &format!("{field}[0]"))?,
            num(&parts[1], &format!("{field}[1]"))?,
        )),
        _ => Err(field_err(
            field,
            format!("expected a number or a [re, im] pair, found {v}"),
        )),
    }
}

/// Nested rows. An empty array is a matrix with no rows and `empty_cols`
/// columns.
fn parse_matrix(v: &Value, field: &str, empty_cols: usize) -> Result<ComplexMatrix, ProblemError> {
    let rows = v
        .as_array()
        .ok_or_else(|| field_err(field, "expected an array of rows"))?;
    if rows.is_empty() {
        return Ok(ComplexMatrix::zeros(0, empty_cols));
    }
    let mut data = Vec::new();
    let mut cols = None;
    for (i, row) in rows.iter().enumerate() {
        let rf = format!("{field}[{i}]");
        let entries = row
            .as_array()
            .ok_or_else(|| field_err(&rf, "expected a row array"))?;
        match cols {
            None => cols = Some(entries.len()),
            Some(c) if c != entries.len() => {
                return Err(field_err(
                    &rf,
                    format!("row has {} entries, previous rows have {c}", entries.len()),
                ))
            }
            _ => {}
        }
        for (j, e) in entries.iter().enumerate() {
            data.push(parse_entry(e, &format!("{rf}[{j}]"))?);
        }
    }
    let cols = cols.unwrap_or(0);
    Ok(ComplexMatrix::from_fn(rows.len(), cols, |i, j| {
        data[i * cols + j]
    }))
}

/// Flat array of entries, or a single bare number.
fn parse_vector(v: &Value, field: &str) -> Result<ComplexMatrix, ProblemError> {
    let entries: Vec<C64> = match v {
        Value::Number(_) => vec![parse_entry(v, field)?],
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, e)| parse_entry(e, &format!("{field}[{i}]")))
            .collect::<Result<_, _>>()?,
        _ => return Err(field_err(field, "expected an array of entries or a number")),
    };
    Ok(ComplexMatrix::column_vector(&entries))
}

fn require<'a>(
    obj: &'a Map<String, Value>,
    key: &str,
    prefix: &str,
) -> Result<&'a Value, ProblemError> {
    obj.get(key)
        .ok_or_else(|| field_err(&format!("{prefix}{key}"), "missing"))
}

fn expect_shape(
    m: &ComplexMatrix,
    field: &str,
    rows: Option<usize>,
    cols: Option<usize>,
) -> Result<(), ProblemError> {
    if rows.is_some_and(|r| r != m.rows()) || cols.is_some_and(|c| c != m.cols()) {
        let show = |x: Option<usize>| x.map_or("any".to_string(), |v| v.to_string());
        return Err(field_err(
            field,
            format!(
                "has shape {}x{}, expected {}x{}",
                m.rows(),
                m.cols(),
                show(rows),
                show(cols)
            ),
        ));
    }
    Ok(())
}

fn parse_wcf(v: &Value, m: usize) -> Result<WcfSpec, ProblemError> {
    let obj = v
        .as_object()
        .ok_or_else(|| field_err("options.wcf", "expected an object"))?;
    let pre = "options.wcf.";
    if obj.contains_key("P") || obj.contains_key("Q") {
        let count = |key: &str| -> Result<usize, ProblemError> {
            require(obj, key, pre)?
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| field_err(&format!("{pre}{key}"), "expected a non-negative integer"))
        };
        let (p, q) = (count("p")?, count("q")?);
        if p + q != m {
            return Err(field_err(
                "options.wcf",
                format!("p + q = {} does not equal the pencil size {m}", p + q),
            ));
        }
        let left = parse_matrix(require(obj, "P", pre)?, "options.wcf.P", m)?;
        let right = parse_matrix(require(obj, "Q", pre)?, "options.wcf.Q", m)?;
        let jp = parse_matrix(require(obj, "Jp", pre)?, "options.wcf.Jp", p)?;
        let hq = parse_matrix(require(obj, "Hq", pre)?, "options.wcf.Hq", q)?;
        expect_shape(&left, "options.wcf.P", Some(m), Some(m))?;
        expect_shape(&right, "options.wcf.Q", Some(m), Some(m))?;
        expect_shape(&jp, "options.wcf.Jp", Some(p), Some(p))?;
        expect_shape(&hq, "options.wcf.Hq", Some(q), Some(q))?;
        Ok(WcfSpec::Full {
            left,
            right,
            jp,
            hq,
        })
    } else {
        let qp = parse_matrix(require(obj, "Qp", pre)?, "options.wcf.Qp", 0)?;
        expect_shape(&qp, "options.wcf.Qp", Some(m), None)?;
        let p = qp.cols();
        let jp = parse_matrix(require(obj, "Jp", pre)?, "options.wcf.Jp", p)?;
        expect_shape(&jp, "options.wcf.Jp", Some(p), Some(p))?;
        Ok(WcfSpec::FinitePart { qp, jp })
    }
}

fn parse_options(v: Option<&Value>, m: usize) -> Result<ProblemOptions, ProblemError> {
    let mut out = ProblemOptions::default();
    let Some(v) = v else {
        return Ok(out);
    };
    let obj = v
        .as_object()
        .ok_or_else(|| field_err("options", "expected an object"))?;
    for key in obj.keys() {
        if !["theta", "tol", "seed", "strategy", "E", "wcf"].contains(&key.as_str()) {
            return Err(field_err(&format!("options.{key}"), "unknown option"));
        }
    }
    let positive = |key: &str| -> Result<Option<f64>, ProblemError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(x) => match x.as_f64() {
                Some(t) if t.is_finite() && t >= 0.0 => Ok(Some(t)),
                _ => Err(field_err(
                    &format!("options.{key}"),
                    "expected a finite non-negative number",
                )),
            },
        }
    };
    if let Some(t) = positive("theta")? {
        out.theta = t;
    }
    out.tol = positive("tol")?;
    if let Some(s) = obj.get("seed") {
        out.seed = s
            .as_u64()
            .ok_or_else(|| field_err("options.seed", "expected a non-negative integer"))?;
    }
    if let Some(s) = obj.get("strategy") {
        let name = s
            .as_str()
            .ok_or_else(|| field_err("options.strategy", "expected a string"))?;
        out.strategy = name
            .parse()
            .map_err(|e: String| field_err("options.strategy", e))?;
    }
    if let Some(e) = obj.get("E") {
        out.e = Some(parse_matrix(e, "options.E", 0)?);
    }
    if let Some(w) = obj.get("wcf") {
        out.wcf = Some(parse_wcf(w, m)?);
    }
    Ok(out)
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        let root: Value = serde_json::from_str(text).map_err(|e| ProblemError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_value(&root)
    }

    pub fn from_value(root: &Value) -> Result<Self, ProblemError> {
        let obj = root
            .as_object()
            .ok_or_else(|| field_err("<root>", "expected a JSON object"))?;
        for key in obj.keys() {
            if !["F", "G", "A1", "A2", "B1", "B2", "N", "options"].contains(&key.as_str()) {
                return Err(field_err(key, "unknown field"));
            }
        }
        let f = parse_matrix(require(obj, "F", "")?, "F", 0)?;
        let m = f.rows();
        if m == 0 {
            return Err(field_err("F", "pencil must have size at least 1"));
        }
        expect_shape(&f, "F", Some(m), Some(m))?;
        let g = parse_matrix(require(obj, "G", "")?, "G", m)?;
        expect_shape(&g, "G", Some(m), Some(m))?;
        let a1 = parse_matrix(require(obj, "A1", "")?, "A1", m)?;
        expect_shape(&a1, "A1", None, Some(m))?;
        let a2 = parse_matrix(require(obj, "A2", "")?, "A2", m)?;
        expect_shape(&a2, "A2", None, Some(m))?;
        let b1 = parse_vector(require(obj, "B1", "")?, "B1")?;
        expect_shape(&b1, "B1", Some(a1.rows()), Some(1))?;
        let b2 = parse_vector(require(obj, "B2", "")?, "B2")?;
        expect_shape(&b2, "B2", Some(a2.rows()), Some(1))?;
        let n = require(obj, "N", "")?
            .as_u64()
            .filter(|&n| n >= 1)
            .ok_or_else(|| field_err("N", "expected an integer >= 1"))? as usize;
        let options = parse_options(obj.get("options"), m)?;
        if let Some(e) = &options.e {
            if let Some(WcfSpec::Full { jp, .. } | WcfSpec::FinitePart { jp, .. }) = &options.wcf {
                expect_shape(e, "options.E", None, Some(jp.rows()))?;
            }
        }
        Ok(Self {
            f,
            g,
            a1,
            a2,
            b1,
            b2,
            n,
            options,
        })
    }

    pub fn to_value(&self) -> Value {
        let mut opts = Map::new();
        opts.insert("theta".into(), number(self.options.theta));
        opts.insert("tol".into(), self.options.tol.map_or(Value::Null, number));
        opts.insert("seed".into(), json!(self.options.seed));
        opts.insert("strategy".into(), json!(self.options.strategy.name()));
        if let Some(e) = &self.options.e {
            opts.insert("E".into(), matrix_value(e));
        }
        match &self.options.wcf {
            Some(WcfSpec::Full {
                left,
                right,
                jp,
                hq,
            }) => {
                opts.insert(
                    "wcf".into(),
                    json!({
                        "P": matrix_value(left),
                        "Q": matrix_value(right),
                        "Jp": matrix_value(jp),
                        "Hq": matrix_value(hq),
                        "p": jp.rows(),
                        "q": hq.rows(),
                    }),
                );
            }
            Some(WcfSpec::FinitePart { qp, jp }) => {
                opts.insert(
                    "wcf".into(),
                    json!({ "Qp": matrix_value(qp), "Jp": matrix_value(jp) }),
                );
            }
            None => {}
        }
        json!({
            "F": matrix_value(&self.f),
            "G": matrix_value(&self.g),
            "A1": matrix_value(&self.a1),
            "A2": matrix_value(&self.a2),
            "B1": vector_value(&self.b1),
            "B2": vector_value(&self.b2),
            "N": self.n,
            "options": Value::Object(opts),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("values are finite")
    }

    pub fn pencil(&self) -> crate::Result<MatrixPencil> {
        MatrixPencil::new(self.f.clone(), self.g.clone())
    }

    pub fn bvp(&self) -> crate::Result<BoundaryValueProblem> {
        BoundaryValueProblem::new(
            self.pencil()?,
            self.a1.clone(),
            self.b1.clone(),
            self.a2.clone(),
            self.b2.clone(),
            self.n,
        )
    }

    /// Solver options from the file, resolving an injected canonical form
    /// against the pencil.
    pub fn solve_options(&self) -> crate::Result<SolveOptions> {
        let wcf = match &self.options.wcf {
            Some(spec) => Some(spec.resolve(&self.pencil()?)?),
            None => None,
        };
        if let (Some(e), Some(w)) = (&self.options.e, &wcf) {
            if e.cols() != w.p {
                return Err(BvpError::DimensionMismatch(format!(
                    "options.E has {} columns, expected p = {}",
                    e.cols(),
                    w.p
                )));
            }
        }
        Ok(SolveOptions {
            tol: self.options.tol,
            theta: self.options.theta,
            e: self.options.e.clone(),
            strategy: match self.options.strategy {
                StrategyChoice::Auto => None,
                StrategyChoice::Fixed(s) => Some(s),
            },
            wcf,
            decompose: DecomposeOptions {
                seed: self.options.seed,
                ..DecomposeOptions::default()
            },
        })
    }
}

/// A finite `f64` as a JSON number.
pub fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Bare number for a real entry (including sign of zero), `[re, im]` otherwise.
pub fn entry_value(z: C64) -> Value {
    if z.im.to_bits() == 0 {
        number(z.re)
    } else {
        json!([number(z.re), number(z.im)])
    }
}

pub fn matrix_value(m: &ComplexMatrix) -> Value {
    Value::Array(
        (0..m.rows())
            .map(|i| Value::Array(m.row(i).iter().copied().map(entry_value).collect()))
            .collect(),
    )
}

/// Flat array of the entries of a column vector.
pub fn vector_value(v: &ComplexMatrix) -> Value {
    Value::Array(v.as_slice().iter().copied().map(entry_value).collect())
}
