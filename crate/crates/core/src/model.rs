//! Parameter-dependent matrices and the continuous-time LPV state-space model.
//!
//! A model is
//!
//! ```text
//! dx/dt = A(p) x + B(p) u
//!     y = C(p) x + D(p) u
//! ```
//!
//! where every matrix is a multivariate polynomial in the scheduling vector
//! `p`, which ranges over a closed box.
//!
//! The model file is JSON:
//!
//! ```json
//! {
//!   "nx": 1, "nu": 1, "ny": 1, "np": 1,
//!   "domain": { "lower": [0.0], "upper": [1.0] },
//!   "A": [ { "exponents": [1], "coeff": [[-1.0]] } ],
//!   "B": [ { "exponents": [0], "coeff": [[1.0]] } ],
//!   "C": [ { "exponents": [0], "coeff": [[1.0]] } ]
//! }
//! ```
//!
//! An omitted matrix key is the zero matrix of the right shape.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Closed box `[lower_1, upper_1] x ... x [lower_np, upper_np]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SchedulingDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain(
                "scheduling dimension must be at least 1".into(),
            ));
        }
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "domain lower has {} entries but upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "bounds of p{} must be finite",
                    i + 1
                )));
            }
            if lo > hi {
                return Err(Error::InvalidDomain(format!(
                    "lower bound {lo} exceeds upper bound {hi} for p{}",
                    i + 1
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Closed-box membership.
    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        if p.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "scheduling point has {} entries, domain has {}",
                p.len(),
                self.dim()
            )));
        }
        Ok(p
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi))
    }

    /// Like [`contains`](Self::contains) but turns a miss into a domain error.
    pub fn require(&self, p: &[f64]) -> Result<()> {
        if self.contains(p)? {
            Ok(())
        } else {
            Err(Error::Domain {
                p: p.to_vec(),
                step: None,
            })
        }
    }

    /// All `2^np` corners. Corner `m` takes the upper bound in dimension `i`
    /// when bit `i` of `m` is set.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.upper[i]
                        } else {
                            self.lower[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Endpoint-inclusive uniform grid with `per_dim` points per axis, in
    /// row-major order (first coordinate varies slowest).
    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let n = self.dim();
        let axes: Vec<Vec<f64>> = (0..n)
            .map(|i| linspace(self.lower[i], self.upper[i], per_dim))
            .collect();
        let total = per_dim.pow(n as u32);
        let mut out = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut point = vec![0.0; n];
            for i in (0..n).rev() {
                point[i] = axes[i][rem % per_dim];
                rem /= per_dim;
            }
            out.push(point);
        }
        out
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|j| {
            if j == n - 1 {
                hi
            } else {
                lo + (hi - lo) * j as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// One monomial term `coeff * p_1^e_1 * ... * p_np^e_np`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coeff: DMatrix<f64>,
}

/// Matrix-valued polynomial in the scheduling vector.
///
/// Terms are kept in canonical form: unique exponent vectors, sorted
/// lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct PMatrixFunction {
    rows: usize,
    cols: usize,
    n_p: usize,
    terms: Vec<Term>,
}

impl PMatrixFunction {
    /// Builds a canonical function; terms with equal exponents are summed.
    pub fn new(rows: usize, cols: usize, n_p: usize, terms: Vec<Term>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(
                "matrix functions need at least one row and column".into(),
            ));
        }
        let mut merged: BTreeMap<Vec<u32>, DMatrix<f64>> = BTreeMap::new();
        for term in terms {
            if term.exponents.len() != n_p {
                return Err(Error::Dimension(format!(
                    "exponent vector {:?} has length {}, expected n_p = {n_p}",
                    term.exponents,
                    term.exponents.len()
                )));
            }
            if term.coeff.shape() != (rows, cols) {
                return Err(Error::Dimension(format!(
                    "coefficient is {}x{}, expected {rows}x{cols}",
                    term.coeff.nrows(),
                    term.coeff.ncols()
                )));
            }
            match merged.get_mut(&term.exponents) {
                Some(acc) => *acc += term.coeff,
                None => {
                    merged.insert(term.exponents, term.coeff);
                }
            }
        }
        let terms = merged
            .into_iter()
            .map(|(exponents, coeff)| Term { exponents, coeff })
            .collect();
        Ok(Self {
            rows,
            cols,
            n_p,
            terms,
        })
    }

    pub fn zero(rows: usize, cols: usize, n_p: usize) -> Self {
        Self {
            rows,
            cols,
            n_p,
            terms: Vec::new(),
        }
    }

    /// A parameter-independent matrix.
    pub fn constant(m: DMatrix<f64>, n_p: usize) -> Self {
        let (rows, cols) = m.shape();
        Self {
            rows,
            cols,
            n_p,
            terms: vec![Term {
                exponents: vec![0; n_p],
                coeff: m,
            }],
        }
    }

    /// `m0 + sum_i p_i * m_i`.
    pub fn affine(m0: DMatrix<f64>, slopes: Vec<DMatrix<f64>>) -> Result<Self> {
        let n_p = slopes.len();
        let (rows, cols) = m0.shape();
        let mut terms = vec![Term {
            exponents: vec![0; n_p],
            coeff: m0,
        }];
        for (i, m) in slopes.into_iter().enumerate() {
            let mut exponents = vec![0; n_p];
            exponents[i] = 1;
            terms.push(Term {
                exponents,
                coeff: m,
            });
        }
        Self::new(rows, cols, n_p, terms)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// True when every term has an all-zero exponent vector.
    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.exponents.iter().all(|&e| e == 0))
    }

    /// Plain monomial summation; `0^0 = 1`.
    pub fn eval(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        if p.len() != self.n_p {
            return Err(Error::Dimension(format!(
                "scheduling point has {} entries, matrix function expects {}",
                p.len(),
                self.n_p
            )));
        }
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for term in &self.terms {
            let weight: f64 = term
                .exponents
                .iter()
                .zip(p)
                .map(|(&e, &v)| v.powi(e as i32))
                .product();
            out += &term.coeff * weight;
        }
        Ok(out)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    exponents: t.exponents.clone(),
                    coeff: &t.coeff * alpha,
                })
                .collect(),
            ..self.clone()
        }
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|t| {
                    json!({
                        "exponents": t.exponents,
                        "coeff": matrix_to_rows(&t.coeff),
                    })
                })
                .collect(),
        )
    }
}

/// Evaluate a matrix function at a frozen scheduling point.
pub fn eval_pmatrix(f: &PMatrixFunction, p: &[f64]) -> Result<DMatrix<f64>> {
    f.eval(p)
}

/// `A(p), B(p), C(p), D(p)` at one scheduling point.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Continuous-time LPV state-space model.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvStateSpace {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    n_p: usize,
    a: PMatrixFunction,
    b: PMatrixFunction,
    c: PMatrixFunction,
    d: PMatrixFunction,
    domain: SchedulingDomain,
}

impl LpvStateSpace {
    pub fn new(
        a: PMatrixFunction,
        b: PMatrixFunction,
        c: PMatrixFunction,
        d: PMatrixFunction,
        domain: SchedulingDomain,
    ) -> Result<Self> {
        let n_x = a.rows();
        let n_u = b.cols();
        let n_y = c.rows();
        let n_p = domain.dim();
        let expect = |name: &str, f: &PMatrixFunction, r: usize, c: usize| {
            if f.rows() != r || f.cols() != c {
                Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {r}x{c}",
                    f.rows(),
                    f.cols()
                )))
            } else if f.n_p() != n_p {
                Err(Error::Dimension(format!(
                    "{name} depends on {} scheduling variables, domain has {n_p}",
                    f.n_p()
                )))
            } else {
                Ok(())
            }
        };
        expect("A", &a, n_x, n_x)?;
        expect("B", &b, n_x, n_u)?;
        expect("C", &c, n_y, n_x)?;
        expect("D", &d, n_y, n_u)?;
        Ok(Self {
            n_x,
            n_u,
            n_y,
            n_p,
            a,
            b,
            c,
            d,
            domain,
        })
    }

    /// LTI model (all matrices constant) over the given domain.
    pub fn constant(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        domain: SchedulingDomain,
    ) -> Result<Self> {
        let n_p = domain.dim();
        Self::new(
            PMatrixFunction::constant(a, n_p),
            PMatrixFunction::constant(b, n_p),
            PMatrixFunction::constant(c, n_p),
            PMatrixFunction::constant(d, n_p),
            domain,
        )
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn n_u(&self) -> usize {
        self.n_u
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_p(&self) -> usize {
        self.n_p
    }
    pub fn a(&self) -> &PMatrixFunction {
        &self.a
    }
    pub fn b(&self) -> &PMatrixFunction {
        &self.b
    }
    pub fn c(&self) -> &PMatrixFunction {
        &self.c
    }
    pub fn d(&self) -> &PMatrixFunction {
        &self.d
    }
    pub fn domain(&self) -> &SchedulingDomain {
        &self.domain
    }

    /// True when no matrix depends on `p`.
    pub fn is_constant(&self) -> bool {
        [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .all(|f| f.is_constant())
    }

    /// Evaluates all four matrices. Does not check domain membership.
    pub fn matrices_at(&self, p: &[f64]) -> Result<FrozenMatrices> {
        Ok(FrozenMatrices {
            a: self.a.eval(p)?,
            b: self.b.eval(p)?,
            c: self.c.eval(p)?,
            d: self.d.eval(p)?,
        })
    }

    /// Evaluates all four matrices after checking `p` against the domain.
    pub fn frozen(&self, p: &[f64]) -> Result<FrozenMatrices> {
        self.domain.require(p)?;
        self.matrices_at(p)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "nx": self.n_x,
            "nu": self.n_u,
            "ny": self.n_y,
            "np": self.n_p,
            "domain": {
                "lower": self.domain.lower,
                "upper": self.domain.upper,
            },
            "A": self.a.to_json(),
            "B": self.b.to_json(),
            "C": self.c.to_json(),
            "D": self.d.to_json(),
        })
    }
}

/// Validates `p` against the scheduling box.
pub fn validate_point(domain: &SchedulingDomain, p: &[f64]) -> Result<bool> {
    domain.contains(p)
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Parses a model file. See the module docs for the format.
pub fn parse_model(text: &str) -> Result<LpvStateSpace> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = root
        .as_object()
        .ok_or_else(|| shape_error("top level must be a JSON object"))?;

    let n_x = get_dim(obj, "nx")?;
    let n_u = get_dim(obj, "nu")?;
    let n_y = get_dim(obj, "ny")?;
    let n_p = get_dim(obj, "np")?;

    let domain = obj
        .get("domain")
        .ok_or_else(|| Error::MissingField("domain".into()))?
        .as_object()
        .ok_or_else(|| shape_error("`domain` must be an object"))?;
    let lower = get_real_list(domain, "domain.lower", "lower")?;
    let upper = get_real_list(domain, "domain.upper", "upper")?;
    if lower.len() != n_p || upper.len() != n_p {
        return Err(Error::Dimension(format!(
            "domain bounds have lengths {} and {}, expected np = {n_p}",
            lower.len(),
            upper.len()
        )));
    }
    let domain = SchedulingDomain::new(lower, upper)?;

    let a = get_pmatrix(obj, "A", n_x, n_x, n_p)?;
    let b = get_pmatrix(obj, "B", n_x, n_u, n_p)?;
    let c = get_pmatrix(obj, "C", n_y, n_x, n_p)?;
    let d = get_pmatrix(obj, "D", n_y, n_u, n_p)?;
    LpvStateSpace::new(a, b, c, d, domain)
}

/// Pretty JSON in the model file format (canonical term order).
pub fn serialize_model(model: &LpvStateSpace) -> String {
    serde_json::to_string_pretty(&model.to_json()).expect("model JSON is always serializable")
}

fn shape_error(message: &str) -> Error {
    Error::Parse {
        line: 0,
        column: 0,
        message: message.to_string(),
    }
}

fn get_dim(obj: &Map<String, Value>, key: &str) -> Result<usize> {
    let v = obj
        .get(key)
        .ok_or_else(|| Error::MissingField(key.into()))?;
    match v.as_u64() {
        Some(n) if n >= 1 => Ok(n as usize),
        _ => Err(shape_error(&format!(
            "`{key}` must be a positive integer, got {v}"
        ))),
    }
}

fn get_real_list(obj: &Map<String, Value>, path: &str, key: &str) -> Result<Vec<f64>> {
    obj.get(key)
        .ok_or_else(|| Error::MissingField(path.into()))?
        .as_array()
        .ok_or_else(|| shape_error(&format!("`{path}` must be an array of numbers")))?
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| shape_error(&format!("`{path}` contains non-number {v}")))
        })
        .collect()
}

fn get_pmatrix(
    obj: &Map<String, Value>,
    key: &str,
    rows: usize,
    cols: usize,
    n_p: usize,
) -> Result<PMatrixFunction> {
    let Some(list) = obj.get(key) else {
        return Ok(PMatrixFunction::zero(rows, cols, n_p));
    };
    let list = list
        .as_array()
        .ok_or_else(|| shape_error(&format!("`{key}` must be a list of terms")))?;
    let mut terms = Vec::with_capacity(list.len());
    for (idx, term) in list.iter().enumerate() {
        let here = format!("{key}[{idx}]");
        let term = term
            .as_object()
            .ok_or_else(|| shape_error(&format!("`{here}` must be an object")))?;
        let exponents = term
            .get("exponents")
            .ok_or_else(|| Error::MissingField(format!("{here}.exponents")))?
            .as_array()
            .ok_or_else(|| shape_error(&format!("`{here}.exponents` must be an array")))?
            .iter()
            .map(|e| {
                e.as_u64()
                    .and_then(|e| u32::try_from(e).ok())
                    .ok_or_else(|| {
                        shape_error(&format!(
                            "`{here}.exponents` entries must be non-negative integers, got {e}"
                        ))
                    })
            })
            .collect::<Result<Vec<u32>>>()?;
        let coeff_rows = term
            .get("coeff")
            .ok_or_else(|| Error::MissingField(format!("{here}.coeff")))?
            .as_array()
            .ok_or_else(|| shape_error(&format!("`{here}.coeff` must be a list of rows")))?;
        let mut data = Vec::with_capacity(rows * cols);
        for row in coeff_rows {
            let row = row
                .as_array()
                .ok_or_else(|| shape_error(&format!("`{here}.coeff` rows must be arrays")))?;
            if row.len() != cols {
                return Err(Error::Dimension(format!(
                    "{here} has a row of length {}, expected {cols} ({key} is {rows}x{cols})",
                    row.len()
                )));
            }
            for v in row {
                data.push(v.as_f64().ok_or_else(|| {
                    shape_error(&format!("`{here}.coeff` contains non-number {v}"))
                })?);
            }
        }
        if coeff_rows.len() != rows {
            return Err(Error::Dimension(format!(
                "{here} has {} rows, expected {rows} ({key} is {rows}x{cols})",
                coeff_rows.len()
            )));
        }
        if exponents.len() != n_p {
            return Err(Error::Dimension(format!(
                "{here}.exponents has length {}, expected np = {n_p}",
                exponents.len()
            )));
        }
        terms.push(Term {
            exponents,
            coeff: DMatrix::from_row_slice(rows, cols, &data),
        });
    }
    PMatrixFunction::new(rows, cols, n_p, terms)
}
