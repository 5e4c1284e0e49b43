//! Node tables, edge lists and dyad-level design matrices.
//!
//! Dyads are unordered pairs `(i, j)` with `i < j`, stored in lexicographic
//! order. Within a stored dyad, `w_ij` is the regressor vector with `i` as the
//! ego and `w_ji` the one with `j` as the ego.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Gram matrices with a condition number above this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{0}: no data rows")]
    NoDataRows(PathBuf),
    #[error("{path}:{line}: duplicate node id \"{id}\"")]
    DuplicateId { path: PathBuf, line: u64, id: String },
    #[error("{path}:{line}: unknown node id \"{id}\"")]
    UnknownId { path: PathBuf, line: u64, id: String },
    #[error("{path}:{line}: self-link on node \"{id}\"")]
    SelfLinkInFile { path: PathBuf, line: u64, id: String },
    #[error("self-link on node {0}")]
    SelfLink(usize),
    #[error("node index {index} out of range for a network of {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("at least 2 nodes are required, got {0}")]
    TooFewNodes(usize),
    #[error("unknown covariate column \"{0}\"")]
    UnknownColumn(String),
    #[error("invalid transform \"{0}\"")]
    InvalidTransform(String),
    #[error("at least one regressor transform is required")]
    NoTransforms,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Per-node covariates, one row per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    ids: Vec<String>,
    column_names: Vec<String>,
    values: Vec<f64>,
}

impl NodeTable {
    pub fn new(
        ids: Vec<String>,
        column_names: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        if ids.len() != rows.len() {
            return Err(DataError::Dimension(format!(
                "{} ids but {} covariate rows",
                ids.len(),
                rows.len()
            )));
        }
        if ids.len() < 2 {
            return Err(DataError::TooFewNodes(ids.len()));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(DataError::Parse {
                    path: PathBuf::new(),
                    line: 0,
                    message: format!("duplicate node id \"{id}\""),
                });
            }
        }
        let k = column_names.len();
        let mut values = Vec::with_capacity(ids.len() * k);
        for (row, id) in rows.iter().zip(&ids) {
            if row.len() != k {
                return Err(DataError::Dimension(format!(
                    "row for node {id} has {} values, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite(format!("covariates of node {id}")));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { ids, column_names, values })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn n_columns(&self) -> usize {
        self.column_names.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn value(&self, node: usize, column: usize) -> f64 {
        self.values[node * self.column_names.len() + column]
    }

    pub fn row(&self, node: usize) -> &[f64] {
        let k = self.column_names.len();
        &self.values[node * k..(node + 1) * k]
    }

    fn index_of(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, err: csv::Error) -> DataError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => io_err(path, e),
        other => DataError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a node CSV: header row, first column the node id, remaining columns numeric.
pub fn load_nodes(path: impl AsRef<Path>) -> Result<NodeTable, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.is_empty() {
        return Err(DataError::NoDataRows(path.to_path_buf()));
    }
    let column_names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let width = header.len();

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != width {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let id = record[0].to_owned();
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId { path: path.to_path_buf(), line, id });
        }
        let mut row = Vec::with_capacity(width - 1);
        for (c, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("non-numeric value \"{cell}\" in column \"{}\"", &header[c]),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("non-finite value in column \"{}\"", &header[c]),
                });
            }
            row.push(v);
        }
        ids.push(id);
        rows.push(row);
    }
    if ids.is_empty() {
        return Err(DataError::NoDataRows(path.to_path_buf()));
    }
    NodeTable::new(ids, column_names, rows)
}

/// An undirected network; only pairs with `i < j` are stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    n: usize,
    links: BTreeSet<(usize, usize)>,
}

impl Network {
    pub fn new(n: usize) -> Self {
        Self { n, links: BTreeSet::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add_link(&mut self, i: usize, j: usize) -> Result<(), DataError> {
        if i == j {
            return Err(DataError::SelfLink(i));
        }
        for index in [i, j] {
            if index >= self.n {
                return Err(DataError::NodeOutOfRange { index, n: self.n });
            }
        }
        self.links.insert((i.min(j), i.max(j)));
        Ok(())
    }

    pub fn has_link(&self, i: usize, j: usize) -> bool {
        self.links.contains(&(i.min(j), i.max(j)))
    }

    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.iter().copied()
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Builds a network from per-dyad outcomes aligned with `design.dyads()`.
    pub fn from_outcomes(design: &DyadDesign, y: &[bool]) -> Self {
        let links = design
            .dyads()
            .iter()
            .zip(y)
            .filter(|(_, &linked)| linked)
            .map(|(&d, _)| d)
            .collect();
        Self { n: design.n_nodes(), links }
    }

    /// Link indicators aligned with `design.dyads()`.
    pub fn outcomes(&self, design: &DyadDesign) -> Vec<bool> {
        design.dyads().iter().map(|&(i, j)| self.links.contains(&(i, j))).collect()
    }
}

/// Reads an edge CSV of node-id pairs. A first row that names no known nodes and
/// is not numeric is taken as a header.
pub fn load_edges(path: impl AsRef<Path>, nodes: &NodeTable) -> Result<Network, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let index = nodes.index_of();
    let mut net = Network::new(nodes.n());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(row as u64 + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 2 id columns, found {}", record.len()),
            });
        }
        if row == 0 {
            let known = record.iter().any(|f| index.contains_key(f));
            let numeric = record.iter().all(|f| f.parse::<f64>().is_ok());
            if !known && !numeric {
                continue;
            }
        }
        let mut ends = [0usize; 2];
        for (slot, field) in ends.iter_mut().zip(record.iter()) {
            *slot = *index.get(field).ok_or_else(|| DataError::UnknownId {
                path: path.to_path_buf(),
                line,
                id: field.to_owned(),
            })?;
        }
        if ends[0] == ends[1] {
            return Err(DataError::SelfLinkInFile {
                path: path.to_path_buf(),
                line,
                id: record[0].to_owned(),
            });
        }
        net.add_link(ends[0], ends[1])?;
    }
    Ok(net)
}

/// How a regressor column is formed from the two endpoints' covariates.
///
/// For the ordered pair (ego `i`, alter `j`):
/// `abs_diff` = |x_i - x_j|, `equal_indicator` = 1[x_i = x_j], `sum` = x_i + x_j,
/// `alter_value` = x_j, `ego_value` = x_i, `weighted_mix` = w_own x_i + w_other x_j.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorTransform {
    Intercept,
    AbsDiff(String),
    EqualIndicator(String),
    AlterValue(String),
    EgoValue(String),
    WeightedMix { column: String, w_own: f64, w_other: f64 },
    Sum(String),
}

impl RegressorTransform {
    pub fn column(&self) -> Option<&str> {
        match self {
            Self::Intercept => None,
            Self::AbsDiff(c)
            | Self::EqualIndicator(c)
            | Self::AlterValue(c)
            | Self::EgoValue(c)
            | Self::Sum(c) => Some(c),
            Self::WeightedMix { column, .. } => Some(column),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            Self::Intercept | Self::AbsDiff(_) | Self::EqualIndicator(_) | Self::Sum(_) => true,
            Self::AlterValue(_) | Self::EgoValue(_) => false,
            Self::WeightedMix { w_own, w_other, .. } => w_own == w_other,
        }
    }

    fn apply(&self, ego: f64, alter: f64) -> f64 {
        match self {
            Self::Intercept => 1.0,
            Self::AbsDiff(_) => (ego - alter).abs(),
            Self::EqualIndicator(_) => {
                if ego == alter {
                    1.0
                } else {
                    0.0
                }
            }
            Self::AlterValue(_) => alter,
            Self::EgoValue(_) => ego,
            Self::WeightedMix { w_own, w_other, .. } => w_own * ego + w_other * alter,
            Self::Sum(_) => ego + alter,
        }
    }
}

impl fmt::Display for RegressorTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Intercept => write!(f, "intercept"),
            Self::AbsDiff(c) => write!(f, "abs_diff:{c}"),
            Self::EqualIndicator(c) => write!(f, "equal_indicator:{c}"),
            Self::AlterValue(c) => write!(f, "alter_value:{c}"),
            Self::EgoValue(c) => write!(f, "ego_value:{c}"),
            Self::WeightedMix { column, w_own, w_other } => {
                write!(f, "weighted_mix:{column}:{w_own}:{w_other}")
            }
            Self::Sum(c) => write!(f, "sum:{c}"),
        }
    }
}

impl FromStr for RegressorTransform {
    type Err = DataError;

    /// Parses `kind:column[:w_own:w_other]`, or the bare `intercept`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::InvalidTransform(s.to_owned());
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let column = |parts: &[&str]| -> Result<String, DataError> {
            match parts.get(1) {
                Some(c) if !c.is_empty() => Ok((*c).to_owned()),
                _ => Err(bad()),
            }
        };
        let t = match parts[0] {
            "intercept" if parts.len() == 1 => Self::Intercept,
            "abs_diff" if parts.len() == 2 => Self::AbsDiff(column(&parts)?),
            "equal_indicator" if parts.len() == 2 => Self::EqualIndicator(column(&parts)?),
            "alter_value" if parts.len() == 2 => Self::AlterValue(column(&parts)?),
            "ego_value" if parts.len() == 2 => Self::EgoValue(column(&parts)?),
            "sum" if parts.len() == 2 => Self::Sum(column(&parts)?),
            "weighted_mix" if parts.len() == 4 => {
                let w_own: f64 = parts[2].parse().map_err(|_| bad())?;
                let w_other: f64 = parts[3].parse().map_err(|_| bad())?;
                if !w_own.is_finite() || !w_other.is_finite() {
                    return Err(bad());
                }
                Self::WeightedMix { column: column(&parts)?, w_own, w_other }
            }
            _ => return Err(bad()),
        };
        Ok(t)
    }
}

/// Number of unordered pairs among `n` nodes.
pub fn dyad_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the unordered pair `(i, j)`, `i < j`, in lexicographic dyad order.
pub fn dyad_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Regressor pairs `(w_ij, w_ji)` for every unordered pair of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadDesign {
    n: usize,
    k: usize,
    dyads: Vec<(usize, usize)>,
    w_ij: Vec<f64>,
    w_ji: Vec<f64>,
    symmetric: Vec<bool>,
    names: Vec<String>,
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dyad_count(n));
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

impl DyadDesign {
    /// Builds a design from per-dyad rows given in lexicographic dyad order.
    ///
    /// A column is flagged symmetric when `w_ij` and `w_ji` agree on every dyad.
    pub fn from_pairs(
        n: usize,
        names: Vec<String>,
        w_ij: Vec<Vec<f64>>,
        w_ji: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        if n < 2 {
            return Err(DataError::TooFewNodes(n));
        }
        let k = names.len();
        let big_n = dyad_count(n);
        if w_ij.len() != big_n || w_ji.len() != big_n {
            return Err(DataError::Dimension(format!(
                "expected {big_n} dyad rows, got {} and {}",
                w_ij.len(),
                w_ji.len()
            )));
        }
        if k == 0 {
            return Err(DataError::NoTransforms);
        }
        let flat = |rows: Vec<Vec<f64>>| -> Result<Vec<f64>, DataError> {
            let mut out = Vec::with_capacity(big_n * k);
            for row in rows {
                if row.len() != k {
                    return Err(DataError::Dimension(format!(
                        "dyad row has {} entries, expected {k}",
                        row.len()
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(DataError::NonFinite("dyad regressors".into()));
                }
                out.extend(row);
            }
            Ok(out)
        };
        let w_ij = flat(w_ij)?;
        let w_ji = flat(w_ji)?;
        let symmetric = (0..k)
            .map(|c| (0..big_n).all(|d| w_ij[d * k + c] == w_ji[d * k + c]))
            .collect();
        Ok(Self { n, k, dyads: all_pairs(n), w_ij, w_ji, symmetric, names })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_dyads(&self) -> usize {
        self.dyads.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dyads(&self) -> &[(usize, usize)] {
        &self.dyads
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn symmetric_columns(&self) -> &[bool] {
        &self.symmetric
    }

    pub fn is_fully_symmetric(&self) -> bool {
        self.symmetric.iter().all(|&s| s)
    }

    #[inline]
    pub fn w_ij(&self, dyad: usize) -> &[f64] {
        &self.w_ij[dyad * self.k..(dyad + 1) * self.k]
    }

    #[inline]
    pub fn w_ji(&self, dyad: usize) -> &[f64] {
        &self.w_ji[dyad * self.k..(dyad + 1) * self.k]
    }

    /// Design whose two rows are both the average `(w_ij + w_ji) / 2`.
    pub fn symmetrized(&self) -> Self {
        let avg: Vec<f64> = self
            .w_ij
            .iter()
            .zip(&self.w_ji)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        Self {
            w_ij: avg.clone(),
            w_ji: avg,
            symmetric: vec![true; self.k],
            ..self.clone()
        }
    }

    /// Exchanges `w_ij` and `w_ji` on the selected dyads. Symmetry flags are unchanged.
    pub fn with_swapped(&self, swap: &[bool]) -> Self {
        let mut out = self.clone();
        let k = self.k;
        for (d, _) in swap.iter().enumerate().filter(|(_, &s)| s) {
            for c in 0..k {
                out.w_ij[d * k + c] = self.w_ji[d * k + c];
                out.w_ji[d * k + c] = self.w_ij[d * k + c];
            }
        }
        out
    }
}

/// Applies regressor transforms to every unordered pair of nodes.
pub fn build_design(
    nodes: &NodeTable,
    transforms: &[RegressorTransform],
) -> Result<DyadDesign, DataError> {
    if transforms.is_empty() {
        return Err(DataError::NoTransforms);
    }
    let mut cols = Vec::with_capacity(transforms.len());
    for t in transforms {
        if let RegressorTransform::WeightedMix { w_own, w_other, .. } = t {
            if !w_own.is_finite() || !w_other.is_finite() {
                return Err(DataError::InvalidTransform(t.to_string()));
            }
        }
        let col = match t.column() {
            Some(name) => Some(
                nodes
                    .column_index(name)
                    .ok_or_else(|| DataError::UnknownColumn(name.to_owned()))?,
            ),
            None => None,
        };
        cols.push(col);
    }
    let n = nodes.n();
    let k = transforms.len();
    let dyads = all_pairs(n);
    let mut w_ij = Vec::with_capacity(dyads.len() * k);
    let mut w_ji = Vec::with_capacity(dyads.len() * k);
    for &(i, j) in &dyads {
        for (t, col) in transforms.iter().zip(&cols) {
            let (xi, xj) = match col {
                Some(c) => (nodes.value(i, *c), nodes.value(j, *c)),
                None => (0.0, 0.0),
            };
            w_ij.push(t.apply(xi, xj));
            w_ji.push(t.apply(xj, xi));
        }
    }
    Ok(DyadDesign {
        n,
        k,
        dyads,
        w_ij,
        w_ji,
        symmetric: transforms.iter().map(RegressorTransform::is_symmetric).collect(),
        names: transforms.iter().map(ToString::to_string).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentificationReason {
    AllSymmetric,
    SymmetricPairExists,
    AsymmetricWith3PlusValues,
    NotIdentifiedBinaryAsymmetric,
    SingularMomentMatrix,
}

impl fmt::Display for IdentificationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::AllSymmetric => "all_symmetric",
            Self::SymmetricPairExists => "symmetric_pair_exists",
            Self::AsymmetricWith3PlusValues => "asymmetric_with_3plus_values",
            Self::NotIdentifiedBinaryAsymmetric => "not_identified_binary_asymmetric",
            Self::SingularMomentMatrix => "singular_moment_matrix",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationReport {
    pub identified: bool,
    pub reason: IdentificationReason,
    pub gram_condition_ij: f64,
    pub gram_condition_ji: f64,
    /// `(column index, distinct values over w_ij and w_ji)` for each asymmetric column.
    pub distinct_value_counts: Vec<(usize, usize)>,
}

fn gram_condition<'a>(design: &'a DyadDesign, pick: impl Fn(usize) -> &'a [f64]) -> f64 {
    let k = design.k();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    for d in 0..design.n_dyads() {
        let w = pick(d);
        for r in 0..k {
            for c in 0..k {
                gram[(r, c)] += w[r] * w[c];
            }
        }
    }
    gram /= design.n_dyads() as f64;
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Checks sample moment nonsingularity and the distinct-value condition for
/// asymmetric regressors.
pub fn check_identification(design: &DyadDesign) -> IdentificationReport {
    let gram_condition_ij = gram_condition(design, |d| design.w_ij(d));
    let gram_condition_ji = gram_condition(design, |d| design.w_ji(d));
    let asymmetric: Vec<usize> = (0..design.k())
        .filter(|&c| !design.symmetric_columns()[c])
        .collect();
    let distinct_value_counts: Vec<(usize, usize)> = asymmetric
        .iter()
        .map(|&c| {
            let mut values = HashSet::new();
            for d in 0..design.n_dyads() {
                // +0.0 folds -0.0 onto 0.0
                values.insert((design.w_ij(d)[c] + 0.0).to_bits());
                values.insert((design.w_ji(d)[c] + 0.0).to_bits());
            }
            (c, values.len())
        })
        .collect();

    let (identified, reason) = if !(gram_condition_ij <= SINGULAR_CONDITION
        && gram_condition_ji <= SINGULAR_CONDITION)
    {
        (false, IdentificationReason::SingularMomentMatrix)
    } else if asymmetric.is_empty() {
        (true, IdentificationReason::AllSymmetric)
    } else if (0..design.n_dyads()).any(|d| design.w_ij(d) == design.w_ji(d)) {
        (true, IdentificationReason::SymmetricPairExists)
    } else if distinct_value_counts.iter().all(|&(_, count)| count >= 3) {
        (true, IdentificationReason::AsymmetricWith3PlusValues)
    } else {
        (false, IdentificationReason::NotIdentifiedBinaryAsymmetric)
    };
    IdentificationReport {
        identified,
        reason,
        gram_condition_ij,
        gram_condition_ji,
        distinct_value_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn income_nodes(values: &[f64]) -> NodeTable {
        NodeTable::new(
            (1..=values.len()).map(|i| i.to_string()).collect(),
            vec!["income".into()],
            values.iter().map(|&v| vec![v]).collect(),
        )
        .unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_node_csv() {
        let f = write_tmp("id,income\n1,10\n2,20.5\n3,-3\n");
        let nodes = load_nodes(f.path()).unwrap();
        assert_eq!(nodes.n(), 3);
        assert_eq!(nodes.n_columns(), 1);
        assert_eq!(nodes.value(1, 0), 20.5);
    }

    #[test]
    fn node_csv_errors() {
        let dup = write_tmp("id,income\n7,1\n7,2\n");
        let err = load_nodes(dup.path()).unwrap_err().to_string();
        assert!(err.contains("duplicate node id"), "{err}");

        let empty = write_tmp("");
        let err = load_nodes(empty.path()).unwrap_err().to_string();
        assert!(err.contains("no data rows"), "{err}");

        let header_only = write_tmp("id,income\n");
        assert!(load_nodes(header_only.path()).is_err());

        let ragged = write_tmp("id,income,age\n1,2,3\n2,4\n");
        let err = load_nodes(ragged.path()).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");

        let text = write_tmp("id,income\n1,abc\n2,3\n");
        let err = load_nodes(text.path()).unwrap_err().to_string();
        assert!(err.contains("non-numeric"), "{err}");

        assert!(load_nodes("/nonexistent/nodes.csv").is_err());
    }

    #[test]
    fn edges_normalize_and_collapse() {
        let nodes = income_nodes(&[1.0, 2.0, 3.0]);
        let f = write_tmp("2,1\n1,3\n3,1\n");
        let net = load_edges(f.path(), &nodes).unwrap();
        assert_eq!(net.links().collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);

        let with_header = write_tmp("from,to\n1,2\n2,1\n");
        let net = load_edges(with_header.path(), &nodes).unwrap();
        assert_eq!(net.n_links(), 1);
    }

    #[test]
    fn edge_errors() {
        let nodes = NodeTable::new(
            vec!["1".into(), "2".into(), "3".into(), "4".into()],
            vec!["x".into()],
            vec![vec![0.0]; 4],
        )
        .unwrap();
        let selfie = write_tmp("1,2\n4,4\n");
        let err = load_edges(selfie.path(), &nodes).unwrap_err().to_string();
        assert!(err.contains("self-link"), "{err}");
        let unknown = write_tmp("1,9\n");
        let err = load_edges(unknown.path(), &nodes).unwrap_err().to_string();
        assert!(err.contains("unknown node id"), "{err}");
    }

    #[test]
    fn network_rejects_bad_links() {
        let mut net = Network::new(3);
        assert!(net.add_link(1, 1).is_err());
        assert!(net.add_link(0, 3).is_err());
        net.add_link(2, 0).unwrap();
        assert!(net.has_link(0, 2));
    }

    #[test]
    fn abs_diff_design() {
        let nodes = income_nodes(&[1.0, 4.0, 6.0]);
        let d = build_design(&nodes, &[RegressorTransform::AbsDiff("income".into())]).unwrap();
        assert_eq!(d.n_dyads(), 3);
        let col: Vec<f64> = (0..3).map(|i| d.w_ij(i)[0]).collect();
        assert_eq!(col, vec![3.0, 5.0, 2.0]);
        for i in 0..3 {
            assert_eq!(d.w_ij(i), d.w_ji(i));
        }
        assert!(d.is_fully_symmetric());
    }

    #[test]
    fn alter_value_design() {
        let nodes = income_nodes(&[10.0, 20.0]);
        let d = build_design(&nodes, &[RegressorTransform::AlterValue("income".into())]).unwrap();
        assert_eq!(d.w_ij(0), &[20.0]);
        assert_eq!(d.w_ji(0), &[10.0]);
        assert!(!d.is_fully_symmetric());
    }

    #[test]
    fn twenty_nodes_give_190_dyads() {
        let nodes = income_nodes(&(0..20).map(f64::from).collect::<Vec<_>>());
        let d = build_design(&nodes, &[RegressorTransform::Intercept]).unwrap();
        assert_eq!(d.n_dyads(), 190);
    }

    #[test]
    fn dyad_count_exhaustive() {
        for n in 2..=100 {
            let nodes = income_nodes(&vec![0.0; n]);
            let d = build_design(&nodes, &[RegressorTransform::Intercept]).unwrap();
            assert_eq!(d.n_dyads(), n * (n - 1) / 2);
            let mut seen = HashSet::new();
            for (idx, &(i, j)) in d.dyads().iter().enumerate() {
                assert!(i < j);
                assert!(seen.insert((i, j)));
                assert_eq!(dyad_index(n, i, j), idx);
            }
        }
    }

    #[test]
    fn design_errors() {
        let nodes = income_nodes(&[1.0, 2.0]);
        assert!(matches!(
            build_design(&nodes, &[RegressorTransform::AbsDiff("age".into())]),
            Err(DataError::UnknownColumn(_))
        ));
        assert!(matches!(build_design(&nodes, &[]), Err(DataError::NoTransforms)));
        let bad = RegressorTransform::WeightedMix {
            column: "income".into(),
            w_own: f64::NAN,
            w_other: 0.3,
        };
        assert!(build_design(&nodes, &[bad]).is_err());
    }

    #[test]
    fn transform_parsing() {
        let t: RegressorTransform = "weighted_mix:income:0.7:0.3".parse().unwrap();
        assert_eq!(
            t,
            RegressorTransform::WeightedMix { column: "income".into(), w_own: 0.7, w_other: 0.3 }
        );
        assert!(!t.is_symmetric());
        assert_eq!(t.to_string().parse::<RegressorTransform>().unwrap(), t);
        assert_eq!("intercept".parse::<RegressorTransform>().unwrap(), RegressorTransform::Intercept);
        assert!("abs_diff".parse::<RegressorTransform>().is_err());
        assert!("squiggle:x".parse::<RegressorTransform>().is_err());
        assert!("weighted_mix:x:0.5".parse::<RegressorTransform>().is_err());
        let sym: RegressorTransform = "weighted_mix:x:0.5:0.5".parse().unwrap();
        assert!(sym.is_symmetric());
    }

    fn pair_design(pairs: &[(f64, f64)]) -> DyadDesign {
        // Smallest n whose dyad count covers the pairs exactly.
        let n = (2..).find(|&n| dyad_count(n) == pairs.len()).unwrap();
        DyadDesign::from_pairs(
            n,
            vec!["intercept".into(), "w1".into()],
            pairs.iter().map(|&(a, _)| vec![1.0, a]).collect(),
            pairs.iter().map(|&(_, b)| vec![1.0, b]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn binary_asymmetric_not_identified() {
        let d = pair_design(&[(0.0, 1.0), (1.0, 0.0), (0.0, 1.0)]);
        let r = check_identification(&d);
        assert!(!r.identified);
        assert_eq!(r.reason, IdentificationReason::NotIdentifiedBinaryAsymmetric);
        assert_eq!(r.distinct_value_counts, vec![(1, 2)]);
    }

    #[test]
    fn three_valued_asymmetric_identified() {
        let d = pair_design(&[
            (0.0, 1.0),
            (0.0, 2.0),
            (1.0, 2.0),
            (2.0, 0.0),
            (1.0, 0.0),
            (2.0, 1.0),
        ]);
        let r = check_identification(&d);
        assert!(r.identified);
        assert_eq!(r.reason, IdentificationReason::AsymmetricWith3PlusValues);
    }

    #[test]
    fn symmetric_pair_rescues_binary() {
        let d = pair_design(&[(0.0, 1.0), (1.0, 1.0), (1.0, 0.0)]);
        let r = check_identification(&d);
        assert!(r.identified);
        assert_eq!(r.reason, IdentificationReason::SymmetricPairExists);
    }

    #[test]
    fn all_symmetric_and_singular() {
        let nodes = income_nodes(&[1.0, 4.0, 6.0, 2.5]);
        let d = build_design(&nodes, &[RegressorTransform::AbsDiff("income".into())]).unwrap();
        let r = check_identification(&d);
        assert_eq!(r.reason, IdentificationReason::AllSymmetric);
        assert!(r.identified);

        let d = build_design(
            &nodes,
            &[RegressorTransform::Intercept, RegressorTransform::Intercept],
        )
        .unwrap();
        let r = check_identification(&d);
        assert!(!r.identified);
        assert_eq!(r.reason, IdentificationReason::SingularMomentMatrix);
    }
}
