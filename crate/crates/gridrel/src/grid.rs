//! Grid case ingestion and construction of the reliability polytope
//! `{p : W p <= b}` from the DC power-flow model.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{GaussError, HalfspaceConstraint, NominalGaussian};

/// Replacement for absent or infinite generation limits, in per-unit.
/// Rows carrying it are flagged vacuous but kept for index stability.
pub const SENTINEL_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("case schema violation: {0}")]
    Schema(String),
    #[error("duplicate bus id {0}")]
    DuplicateBus(i64),
    #[error("line references unknown bus id {0}")]
    UnknownBus(i64),
    #[error("no slack bus")]
    NoSlack,
    #[error("multiple slack buses: {0} and {1}")]
    MultipleSlack(i64, i64),
    #[error("line {from}-{to} has non-positive susceptance {value}")]
    BadSusceptance { from: i64, to: i64, value: f64 },
    #[error("line {from}-{to} has non-positive angle limit {value}")]
    BadAngleLimit { from: i64, to: i64, value: f64 },
    #[error("bus {id} violates p_min <= p_mean <= p_max ({min} / {mean} / {max})")]
    BadLimits { id: i64, min: f64, mean: f64, max: f64 },
    #[error("grid graph is disconnected (bus {0} unreachable from slack)")]
    Disconnected(i64),
    #[error("case needs at least 2 buses and 1 line (got n={n}, m={m})")]
    TooSmall { n: usize, m: usize },
    #[error("line {from}-{to} connects a bus to itself")]
    SelfLoop { from: i64, to: i64 },
    #[error("reduced admittance matrix is singular")]
    SingularReduced,
    #[error(transparent)]
    Gauss(#[from] GaussError),
    #[error("polytope csv: {0}")]
    PolytopeCsv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Slack,
    Generator,
    Load,
}

#[derive(Debug, Clone)]
pub struct Bus {
    pub id: i64,
    pub kind: BusKind,
    pub p_mean: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Lower/upper limit came from the sentinel (absent in the document).
    pub min_vacuous: bool,
    pub max_vacuous: bool,
}

#[derive(Debug, Clone)]
pub struct Line {
    /// Positions in the bus vector.
    pub from: usize,
    pub to: usize,
    pub from_id: i64,
    pub to_id: i64,
    pub susceptance: f64,
    pub theta_max: f64,
}

/// Reference-run metadata optionally shipped with a case fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceRun {
    pub theta_max: f64,
    pub sigma_scale: f64,
    pub pi: f64,
    pub method: String,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    /// Generator standard deviation as a fraction of |p_mean|.
    pub sigma_scale: f64,
    pub provenance: Option<String>,
    pub reference: Option<ReferenceRun>,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    /// Position of the slack bus.
    pub slack: usize,
}

// ---- case document (wire schema) -------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct BusDoc {
    id: i64,
    kind: BusKind,
    p_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LineDoc {
    from: i64,
    to: i64,
    susceptance: f64,
    theta_max: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseDoc {
    name: String,
    base_mva: f64,
    sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<ReferenceRun>,
    buses: Vec<BusDoc>,
    lines: Vec<LineDoc>,
}

/// Parse and validate a case document.
pub fn load_case<R: Read>(source: R) -> Result<GridCase, GridError> {
    let doc: CaseDoc =
        serde_json::from_reader(source).map_err(|e| GridError::Schema(e.to_string()))?;
    case_from_doc(doc)
}

pub fn load_case_str(source: &str) -> Result<GridCase, GridError> {
    let doc: CaseDoc =
        serde_json::from_str(source).map_err(|e| GridError::Schema(e.to_string()))?;
    case_from_doc(doc)
}

fn case_from_doc(doc: CaseDoc) -> Result<GridCase, GridError> {
    let mut buses = Vec::with_capacity(doc.buses.len());
    let mut slack: Option<(usize, i64)> = None;
    for (pos, b) in doc.buses.iter().enumerate() {
        if doc.buses[..pos].iter().any(|o| o.id == b.id) {
            return Err(GridError::DuplicateBus(b.id));
        }
        if b.kind == BusKind::Slack {
            if let Some((_, prev)) = slack {
                return Err(GridError::MultipleSlack(prev, b.id));
            }
            slack = Some((pos, b.id));
        }
        let sanitize = |v: Option<f64>, fallback: f64| match v {
            Some(x) if x.is_finite() => (x, false),
            _ => (fallback, true),
        };
        let (p_min, min_vacuous) = sanitize(b.p_min, -SENTINEL_LIMIT);
        let (p_max, max_vacuous) = sanitize(b.p_max, SENTINEL_LIMIT);
        if !(p_min <= b.p_mean && b.p_mean <= p_max) {
            return Err(GridError::BadLimits {
                id: b.id,
                min: p_min,
                mean: b.p_mean,
                max: p_max,
            });
        }
        buses.push(Bus {
            id: b.id,
            kind: b.kind,
            p_mean: b.p_mean,
            p_min,
            p_max,
            min_vacuous,
            max_vacuous,
        });
    }
    let (slack, _) = slack.ok_or(GridError::NoSlack)?;

    let find = |id: i64| -> Result<usize, GridError> {
        buses.iter().position(|b| b.id == id).ok_or(GridError::UnknownBus(id))
    };
    let mut lines = Vec::with_capacity(doc.lines.len());
    for l in &doc.lines {
        if l.from == l.to {
            return Err(GridError::SelfLoop { from: l.from, to: l.to });
        }
        if !(l.susceptance > 0.0) || !l.susceptance.is_finite() {
            return Err(GridError::BadSusceptance {
                from: l.from,
                to: l.to,
                value: l.susceptance,
            });
        }
        if !(l.theta_max > 0.0) || !l.theta_max.is_finite() {
            return Err(GridError::BadAngleLimit { from: l.from, to: l.to, value: l.theta_max });
        }
        lines.push(Line {
            from: find(l.from)?,
            to: find(l.to)?,
            from_id: l.from,
            to_id: l.to,
            susceptance: l.susceptance,
            theta_max: l.theta_max,
        });
    }

    let (n, m) = (buses.len(), lines.len());
    if n < 2 || m < 1 {
        return Err(GridError::TooSmall { n, m });
    }

    // connectivity from the slack bus
    let mut seen = vec![false; n];
    let mut stack = vec![slack];
    seen[slack] = true;
    while let Some(i) = stack.pop() {
        for l in &lines {
            for (a, b) in [(l.from, l.to), (l.to, l.from)] {
                if a == i && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
    }
    if let Some(pos) = seen.iter().position(|&s| !s) {
        return Err(GridError::Disconnected(buses[pos].id));
    }

    Ok(GridCase {
        name: doc.name,
        base_mva: doc.base_mva,
        sigma_scale: doc.sigma,
        provenance: doc.provenance,
        reference: doc.reference,
        buses,
        lines,
        slack,
    })
}

impl GridCase {
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn m(&self) -> usize {
        self.lines.len()
    }

    /// Replace every line's angle limit uniformly (benchmark sweeps).
    pub fn with_theta_max(mut self, theta: f64) -> Self {
        for l in &mut self.lines {
            l.theta_max = theta;
        }
        self
    }

    pub fn mean_injection(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.buses.iter().map(|b| b.p_mean))
    }

    /// Nominal Gaussian: diagonal covariance with std `scale * |p_mean|`
    /// on generator buses; loads and the slack are deterministic.
    pub fn nominal(&self, scale: f64) -> Result<NominalGaussian, GaussError> {
        let n = self.n();
        let mut sigma = DMatrix::zeros(n, n);
        for (i, b) in self.buses.iter().enumerate() {
            if b.kind == BusKind::Generator {
                let sd = scale * b.p_mean.abs();
                sigma[(i, i)] = sd * sd;
            }
        }
        NominalGaussian::new(self.mean_injection(), sigma, Some(self.slack))
    }
}

// ---- network matrices -------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NetworkMatrices {
    /// Incidence matrix, m x n; the smaller-index endpoint gets +1.
    pub a: DMatrix<f64>,
    /// Weighted Laplacian (admittance matrix), n x n.
    pub b: DMatrix<f64>,
    /// Moore-Penrose pseudo-inverse of `b`.
    pub bdag: DMatrix<f64>,
    /// Slack-reduction matrix.
    pub c: DMatrix<f64>,
}

/// Assemble A, B, its pseudo-inverse, and the slack-reduction matrix C.
///
/// The pseudo-inverse comes from the symmetric eigendecomposition with an
/// eigenvalue cutoff of `1e-9 * lambda_max`, so `B Bdag B = B` holds on
/// any connected case.
pub fn build_matrices(case: &GridCase) -> Result<NetworkMatrices, GridError> {
    let (n, m) = (case.n(), case.m());
    let mut a = DMatrix::zeros(m, n);
    let mut b = DMatrix::zeros(n, n);
    for (k, l) in case.lines.iter().enumerate() {
        let (lo, hi) = if l.from < l.to { (l.from, l.to) } else { (l.to, l.from) };
        a[(k, lo)] = 1.0;
        a[(k, hi)] = -1.0;
        b[(l.from, l.to)] -= l.susceptance;
        b[(l.to, l.from)] -= l.susceptance;
        b[(l.from, l.from)] += l.susceptance;
        b[(l.to, l.to)] += l.susceptance;
    }

    let sym = nalgebra::SymmetricEigen::new(b.clone());
    let lambda_max = sym.eigenvalues.amax();
    let cutoff = 1e-9 * lambda_max;
    let mut bdag = DMatrix::zeros(n, n);
    let mut positive = 0;
    for (k, &lam) in sym.eigenvalues.iter().enumerate() {
        if lam > cutoff {
            positive += 1;
            let v = sym.eigenvectors.column(k);
            bdag += (1.0 / lam) * &v * v.transpose();
        }
    }
    // a connected Laplacian has exactly one zero eigenvalue
    if positive + 1 != n {
        return Err(GridError::SingularReduced);
    }

    // effective injection: non-slack buses pass through, the slack bus
    // absorbs the total imbalance, so C p is balanced for every p
    let mut c = DMatrix::identity(n, n);
    let s = case.slack;
    c[(s, s)] = 0.0;
    for i in 0..n {
        if i != s {
            c[(s, i)] = -1.0;
        }
    }

    Ok(NetworkMatrices { a, b, bdag, c })
}

// ---- reliability polytope ---------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    AnglePos,
    AngleNeg,
    GenUpper,
    GenLower,
}

impl RowKind {
    fn tag(self) -> &'static str {
        match self {
            RowKind::AnglePos => "angle+",
            RowKind::AngleNeg => "angle-",
            RowKind::GenUpper => "gen_upper",
            RowKind::GenLower => "gen_lower",
        }
    }
}

/// Per-row provenance: which line or bus the constraint came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowLabel {
    pub kind: RowKind,
    /// Line index (angle rows) or bus index (generation rows).
    pub element: usize,
    /// Display identity, e.g. "1-2" for a line or "5" for a bus.
    pub element_id: String,
    /// Sentinel-limit row: kept for index stability, never sampled.
    pub vacuous: bool,
    /// All coefficients are (numerically) zero.
    pub zero_row: bool,
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.tag(), self.element_id)?;
        if self.vacuous {
            write!(f, ":vacuous")?;
        }
        if self.zero_row {
            write!(f, ":zero")?;
        }
        Ok(())
    }
}

impl FromStr for RowLabel {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split(':');
        let kind = match parts.next() {
            Some("angle+") => RowKind::AnglePos,
            Some("angle-") => RowKind::AngleNeg,
            Some("gen_upper") => RowKind::GenUpper,
            Some("gen_lower") => RowKind::GenLower,
            other => {
                return Err(GridError::PolytopeCsv(format!("bad row label kind {other:?}")))
            }
        };
        let element_id = parts
            .next()
            .ok_or_else(|| GridError::PolytopeCsv(format!("row label missing element: {s}")))?
            .to_string();
        let mut vacuous = false;
        let mut zero_row = false;
        for flag in parts {
            match flag {
                "vacuous" => vacuous = true,
                "zero" => zero_row = true,
                other => {
                    return Err(GridError::PolytopeCsv(format!("bad row label flag {other:?}")))
                }
            }
        }
        Ok(RowLabel { kind, element: 0, element_id, vacuous, zero_row })
    }
}

#[derive(Debug, Clone)]
pub struct ReliabilityPolytope {
    /// J x n constraint matrix, rows in block order
    /// `(A Bdag C, -A Bdag C, C, -C)`.
    pub w: DMatrix<f64>,
    /// Right-hand sides `(theta_max, theta_max, p_max, -p_min)`.
    pub b: DVector<f64>,
    pub labels: Vec<RowLabel>,
}

/// Build the reliability polytope from the network matrices.
///
/// The lower-limit block stores rows `-C` with right-hand side `-p_min`,
/// so `p >= p_min` reads `-C p <= -p_min`.
pub fn build_polytope(mats: &NetworkMatrices, case: &GridCase) -> ReliabilityPolytope {
    let (n, m) = (case.n(), case.m());
    let j = 2 * m + 2 * n;
    let mut w = DMatrix::zeros(j, n);
    let mut b = DVector::zeros(j);
    let mut labels = Vec::with_capacity(j);

    let flow = &mats.a * &mats.bdag * &mats.c;
    for (k, l) in case.lines.iter().enumerate() {
        let id = format!("{}-{}", l.from_id, l.to_id);
        w.row_mut(k).copy_from(&flow.row(k));
        b[k] = l.theta_max;
        labels.push(label(RowKind::AnglePos, k, &id, false, flow.row(k).amax() < 1e-12));
    }
    for (k, l) in case.lines.iter().enumerate() {
        let id = format!("{}-{}", l.from_id, l.to_id);
        w.row_mut(m + k).copy_from(&(-flow.row(k)));
        b[m + k] = l.theta_max;
        labels.push(label(RowKind::AngleNeg, k, &id, false, flow.row(k).amax() < 1e-12));
    }
    for (i, bus) in case.buses.iter().enumerate() {
        let row = 2 * m + i;
        w.row_mut(row).copy_from(&mats.c.row(i));
        b[row] = bus.p_max;
        labels.push(label(RowKind::GenUpper, i, &bus.id.to_string(), bus.max_vacuous, false));
    }
    for (i, bus) in case.buses.iter().enumerate() {
        let row = 2 * m + n + i;
        w.row_mut(row).copy_from(&(-mats.c.row(i)));
        b[row] = -bus.p_min;
        labels.push(label(RowKind::GenLower, i, &bus.id.to_string(), bus.min_vacuous, false));
    }

    ReliabilityPolytope { w, b, labels }
}

fn label(kind: RowKind, element: usize, id: &str, vacuous: bool, zero_row: bool) -> RowLabel {
    RowLabel { kind, element, element_id: id.to_string(), vacuous, zero_row }
}

impl ReliabilityPolytope {
    pub fn row_count(&self) -> usize {
        self.w.nrows()
    }

    /// Membership test `W p <= b`.
    pub fn contains(&self, p: &DVector<f64>) -> bool {
        (0..self.w.nrows()).all(|i| self.w.row(i).transpose().dot(p) <= self.b[i])
    }

    /// Per-row half-space constraints under the nominal Gaussian.
    /// Sentinel rows keep their slot with tail probability forced to 0.
    pub fn constraints(
        &self,
        g: &NominalGaussian,
    ) -> Result<Vec<HalfspaceConstraint>, GaussError> {
        let mut out = Vec::with_capacity(self.row_count());
        for i in 0..self.row_count() {
            let omega = self.w.row(i).transpose();
            let mut c = g.tail_probability(&omega, self.b[i])?;
            if self.labels[i].vacuous {
                c.tail_prob = 0.0;
                c.log_tail = f64::NEG_INFINITY;
                c.beta = f64::INFINITY;
            }
            out.push(c);
        }
        Ok(out)
    }
}

// ---- polytope CSV export ----------------------------------------------------

/// Write the polytope as CSV with header `row_label, b, w_1..w_n`.
pub fn write_polytope_csv<W: Write>(
    poly: &ReliabilityPolytope,
    out: W,
) -> Result<(), GridError> {
    let n = poly.w.ncols();
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["row_label".to_string(), "b".to_string()];
    header.extend((1..=n).map(|i| format!("w_{i}")));
    wtr.write_record(&header).map_err(|e| GridError::PolytopeCsv(e.to_string()))?;
    for i in 0..poly.row_count() {
        let mut rec = vec![poly.labels[i].to_string(), crate::export::fmt_float(poly.b[i])];
        rec.extend((0..n).map(|j| crate::export::fmt_float(poly.w[(i, j)])));
        wtr.write_record(&rec).map_err(|e| GridError::PolytopeCsv(e.to_string()))?;
    }
    wtr.flush().map_err(|e| GridError::PolytopeCsv(e.to_string()))?;
    Ok(())
}

/// Parse a polytope CSV produced by [`write_polytope_csv`].
pub fn read_polytope_csv<R: Read>(input: R) -> Result<ReliabilityPolytope, GridError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| GridError::PolytopeCsv(e.to_string()))?.clone();
    if headers.len() < 3 || &headers[0] != "row_label" || &headers[1] != "b" {
        return Err(GridError::PolytopeCsv("unexpected header".into()));
    }
    let n = headers.len() - 2;
    let mut rows: Vec<(RowLabel, f64, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| GridError::PolytopeCsv(e.to_string()))?;
        let label: RowLabel = rec[0].parse()?;
        let b: f64 = rec[1].parse().map_err(|e| GridError::PolytopeCsv(format!("{e}")))?;
        let coeffs = (0..n)
            .map(|j| rec[j + 2].parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GridError::PolytopeCsv(format!("{e}")))?;
        rows.push((label, b, coeffs));
    }
    let j = rows.len();
    let mut w = DMatrix::zeros(j, n);
    let mut b = DVector::zeros(j);
    let mut labels = Vec::with_capacity(j);
    for (i, (lab, bi, coeffs)) in rows.into_iter().enumerate() {
        for (jj, v) in coeffs.into_iter().enumerate() {
            w[(i, jj)] = v;
        }
        b[i] = bi;
        labels.push(lab);
    }
    Ok(ReliabilityPolytope { w, b, labels })
}
