//! Complete databases, projection and sufficient statistics.
//!
//! Data are stored column-wise. Discrete values are state indices into the
//! variable's state list; continuous values are finite reals. Every case is
//! complete: there is no representation for a missing value.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{Domain, VariableKind};
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Discrete(Vec<usize>),
    Continuous(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Discrete(v) => v.len(),
            Column::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, l: usize) -> Value {
        match self {
            Column::Discrete(v) => Value::State(v[l]),
            Column::Continuous(v) => Value::Real(v[l]),
        }
    }
}

/// One cell of a case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    State(usize),
    Real(f64),
}

/// An ordered list of complete cases over a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    schema: Domain,
    columns: Vec<Column>,
    m: usize,
}

impl Database {
    pub fn new(schema: Domain, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.len(),
                found: columns.len(),
            });
        }
        let m = columns.first().map_or(0, Column::len);
        for (var, col) in schema.variables().iter().zip(&columns) {
            if col.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: col.len(),
                });
            }
            match (var.kind(), col) {
                (VariableKind::Discrete { states }, Column::Discrete(v)) => {
                    if let Some(&bad) = v.iter().find(|&&k| k >= states.len()) {
                        return Err(Error::TypeMismatch(format!(
                            "state index {bad} out of range for `{}`",
                            var.name()
                        )));
                    }
                }
                (VariableKind::Continuous, Column::Continuous(v)) => {
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::TypeMismatch(format!(
                            "non-finite value in `{}`",
                            var.name()
                        )));
                    }
                }
                _ => {
                    return Err(Error::TypeMismatch(format!(
                        "column kind does not match variable `{}`",
                        var.name()
                    )))
                }
            }
        }
        Ok(Self { schema, columns, m })
    }

    /// A database with no cases.
    pub fn empty(schema: Domain) -> Self {
        let columns = schema
            .variables()
            .iter()
            .map(|v| {
                if v.is_discrete() {
                    Column::Discrete(Vec::new())
                } else {
                    Column::Continuous(Vec::new())
                }
            })
            .collect();
        Self {
            schema,
            columns,
            m: 0,
        }
    }

    /// Builds a database from row-major cases.
    pub fn from_cases(schema: Domain, cases: &[Vec<Value>]) -> Result<Self> {
        let mut db = Self::empty(schema);
        for case in cases {
            db.push_case(case)?;
        }
        Ok(db)
    }

    /// Convenience for all-discrete data given as state indices.
    pub fn from_states(schema: Domain, cases: &[Vec<usize>]) -> Result<Self> {
        let rows: Vec<Vec<Value>> = cases
            .iter()
            .map(|c| c.iter().map(|&k| Value::State(k)).collect())
            .collect();
        Self::from_cases(schema, &rows)
    }

    /// Convenience for all-continuous data.
    pub fn from_reals(schema: Domain, cases: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Value>> = cases
            .iter()
            .map(|c| c.iter().map(|&x| Value::Real(x)).collect())
            .collect();
        Self::from_cases(schema, &rows)
    }

    fn push_case(&mut self, case: &[Value]) -> Result<()> {
        if case.len() != self.schema.len() {
            return Err(Error::DimensionMismatch {
                expected: self.schema.len(),
                found: case.len(),
            });
        }
        for ((var, col), value) in self.schema.variables().iter().zip(&self.columns).zip(case) {
            match (col, value) {
                (Column::Discrete(_), Value::State(k)) if *k < var.arity().unwrap() => {}
                (Column::Continuous(_), Value::Real(x)) if x.is_finite() => {}
                _ => {
                    return Err(Error::TypeMismatch(format!(
                        "invalid value {value:?} for `{}`",
                        var.name()
                    )))
                }
            }
        }
        for (col, value) in self.columns.iter_mut().zip(case) {
            match (col, value) {
                (Column::Discrete(v), Value::State(k)) => v.push(*k),
                (Column::Continuous(v), Value::Real(x)) => v.push(*x),
                _ => unreachable!(),
            }
        }
        self.m += 1;
        Ok(())
    }

    /// Copy of this database with `case` appended.
    pub fn with_case(&self, case: &[Value]) -> Result<Self> {
        let mut db = self.clone();
        db.push_case(case)?;
        Ok(db)
    }

    pub fn schema(&self) -> &Domain {
        &self.schema
    }

    /// Number of cases.
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn discrete_column(&self, i: usize) -> Result<&[usize]> {
        match &self.columns[i] {
            Column::Discrete(v) => Ok(v),
            Column::Continuous(_) => Err(Error::TypeMismatch(format!(
                "`{}` is continuous",
                self.schema.variable(i).name()
            ))),
        }
    }

    pub fn continuous_column(&self, i: usize) -> Result<&[f64]> {
        match &self.columns[i] {
            Column::Continuous(v) => Ok(v),
            Column::Discrete(_) => Err(Error::TypeMismatch(format!(
                "`{}` is discrete",
                self.schema.variable(i).name()
            ))),
        }
    }

    pub fn case(&self, l: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.value(l)).collect()
    }

    pub fn cases(&self) -> impl Iterator<Item = Vec<Value>> + '_ {
        (0..self.m).map(|l| self.case(l))
    }

    /// Restriction to the variables `subset`, in the order given. Keeps every
    /// case, in order.
    pub fn project(&self, subset: &[usize]) -> Result<Self> {
        let schema = self.schema.select(subset)?;
        let columns = subset.iter().map(|&i| self.columns[i].clone()).collect();
        Ok(Self {
            schema,
            columns,
            m: self.m,
        })
    }

    pub fn project_names(&self, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.schema.require_index(n))
            .collect::<Result<Vec<_>>>()?;
        self.project(&idx)
    }

    /// Cases whose indices are listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Discrete(v) => Column::Discrete(rows.iter().map(|&l| v[l]).collect()),
                Column::Continuous(v) => Column::Continuous(rows.iter().map(|&l| v[l]).collect()),
            })
            .collect();
        Self {
            schema: self.schema.clone(),
            columns,
            m: rows.len(),
        }
    }

    /// Joint configuration index of the discrete variables `vars` in every
    /// case, mixed radix with `vars[0]` as the fastest-varying digit.
    pub fn configuration_indices(&self, vars: &[usize]) -> Result<Vec<usize>> {
        let mut out = vec![0usize; self.m];
        let mut stride = 1usize;
        for &v in vars {
            let col = self.discrete_column(v)?;
            let r = self.schema.variable(v).arity().unwrap();
            for (o, &k) in out.iter_mut().zip(col) {
                *o += k * stride;
            }
            stride *= r;
        }
        Ok(out)
    }

    /// Occurrence counts of every joint configuration of `vars` (mixed radix,
    /// `vars[0]` fastest).
    pub fn joint_counts(&self, vars: &[usize]) -> Result<Vec<u64>> {
        let size = configuration_count(&self.schema, vars)?;
        let mut counts = vec![0u64; size];
        for j in self.configuration_indices(vars)? {
            counts[j] += 1;
        }
        Ok(counts)
    }
}

/// Number of joint configurations of the discrete variables `vars`.
pub fn configuration_count(domain: &Domain, vars: &[usize]) -> Result<usize> {
    vars.iter().try_fold(1usize, |acc, &v| {
        let var = domain.variables().get(v).ok_or(Error::IndexOutOfRange(v))?;
        let r = var
            .arity()
            .ok_or_else(|| Error::TypeMismatch(format!("`{}` is continuous", var.name())))?;
        acc.checked_mul(r)
            .ok_or_else(|| Error::TypeMismatch("configuration space overflows".into()))
    })
}

/// Decodes a mixed-radix configuration index into per-variable states.
pub fn decode_configuration(domain: &Domain, vars: &[usize], mut j: usize) -> Vec<usize> {
    vars.iter()
        .map(|&v| {
            let r = domain.variable(v).arity().unwrap();
            let k = j % r;
            j /= r;
            k
        })
        .collect()
}

/// Counts `N_ijk` for one child and its parent set.
///
/// Parent configurations `j` use the mixed-radix convention of
/// [`Database::configuration_indices`] over the parents sorted by index, so
/// the lowest-indexed parent varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteCounts {
    pub child: usize,
    pub parents: Vec<usize>,
    /// States of the child, `r_i`.
    pub arity: usize,
    /// Parent configurations, `q_i`.
    pub configurations: usize,
    /// Row-major `q_i × r_i`.
    pub counts: Vec<u64>,
}

impl DiscreteCounts {
    pub fn get(&self, j: usize, k: usize) -> u64 {
        self.counts[j * self.arity + k]
    }

    pub fn row(&self, j: usize) -> &[u64] {
        &self.counts[j * self.arity..(j + 1) * self.arity]
    }

    /// `N_ij`.
    pub fn row_total(&self, j: usize) -> u64 {
        self.row(j).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn discrete_counts(d: &Database, child: usize, parents: &[usize]) -> Result<DiscreteCounts> {
    let mut parents = parents.to_vec();
    parents.sort_unstable();
    parents.dedup();
    if parents.contains(&child) {
        return Err(Error::CyclicGraph);
    }
    let schema = d.schema();
    let arity = configuration_count(schema, &[child])?;
    let configurations = configuration_count(schema, &parents)?;
    let js = d.configuration_indices(&parents)?;
    let ks = d.discrete_column(child)?;
    let mut counts = vec![0u64; configurations * arity];
    for (&j, &k) in js.iter().zip(ks) {
        counts[j * arity + k] += 1;
    }
    Ok(DiscreteCounts {
        child,
        parents,
        arity,
        configurations,
        counts,
    })
}

/// Sample mean and (unnormalized) scatter matrix of an all-continuous database.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub m: usize,
    pub mean: DVector<f64>,
    /// `Σ_l (x_l − x̄)(x_l − x̄)'`.
    pub scatter: DMatrix<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Statistics of the variables `idx` alone.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        Self {
            m: self.m,
            mean: DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i])),
            scatter: crate::numeric::submatrix(&self.scatter, idx),
        }
    }
}

/// Mean and scatter, accumulated with compensated sums.
///
/// The mean is formed as `x₁ + Σ(x_l − x₁)/m`, so identical cases give a zero
/// scatter exactly. Each entry depends only on its own columns, which makes
/// the statistics of a projection bit-identical to the corresponding
/// sub-block.
pub fn gaussian_stats(d: &Database) -> Result<GaussianStats> {
    let n = d.schema().len();
    let cols = (0..n)
        .map(|i| d.continuous_column(i))
        .collect::<Result<Vec<_>>>()?;
    let m = d.len();
    let mut mean = DVector::zeros(n);
    if m > 0 {
        for (i, col) in cols.iter().enumerate() {
            let shift = col[0];
            let mut s = CompensatedSum::default();
            for &x in col.iter() {
                s.add(x - shift);
            }
            mean[i] = shift + s.value() / m as f64;
        }
    }
    let mut scatter = DMatrix::zeros(n, n);
    if m > 1 {
        for i in 0..n {
            for j in 0..=i {
                let mut s = CompensatedSum::default();
                for (a, b) in cols[i].iter().zip(cols[j]) {
                    s.add((a - mean[i]) * (b - mean[j]));
                }
                scatter[(i, j)] = s.value();
                scatter[(j, i)] = s.value();
            }
        }
    }
    Ok(GaussianStats { m, mean, scatter })
}

/// Reads a CSV file whose header names the schema variables in any order.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &Domain) -> Result<Database> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Domain) -> Result<Database> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::HeaderMismatch {
                line: 1,
                detail: "missing header row".into(),
            })
        }
    };
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (col, name) in names.iter().enumerate() {
        if schema.index_of(name).is_none() {
            return Err(Error::HeaderMismatch {
                line: 1,
                detail: format!("unexpected column `{name}`"),
            });
        }
        if position.insert(name, col).is_some() {
            return Err(Error::HeaderMismatch {
                line: 1,
                detail: format!("duplicate column `{name}`"),
            });
        }
    }
    if let Some(missing) = schema.names().find(|n| !position.contains_key(n)) {
        return Err(Error::HeaderMismatch {
            line: 1,
            detail: format!("missing column `{missing}`"),
        });
    }
    let field_of: Vec<usize> = schema.names().map(|n| position[n]).collect();

    let mut db = Database::empty(schema.clone());
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(Error::RaggedRow {
                line,
                expected: names.len(),
                found: record.len(),
            });
        }
        for ((var, col), &field) in schema
            .variables()
            .iter()
            .zip(db.columns.iter_mut())
            .zip(&field_of)
        {
            let raw = record[field].trim();
            if raw.is_empty() {
                return Err(Error::MissingValue {
                    line,
                    variable: var.name().to_string(),
                });
            }
            match col {
                Column::Discrete(v) => {
                    let k = var.state_index(raw).ok_or_else(|| Error::UnknownState {
                        line,
                        variable: var.name().to_string(),
                        value: raw.to_string(),
                    })?;
                    v.push(k);
                }
                Column::Continuous(v) => {
                    let x: f64 = raw
                        .parse()
                        .ok()
                        .filter(|x: &f64| x.is_finite())
                        .ok_or_else(|| Error::MalformedNumber {
                            line,
                            variable: var.name().to_string(),
                            value: raw.to_string(),
                        })?;
                    v.push(x);
                }
            }
        }
        db.m += 1;
    }
    Ok(db)
}

/// Writes the database as CSV, header in schema order. Reals use the
/// shortest representation that parses back to the same value.
pub fn write_csv<W: Write>(d: &Database, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(d.schema().names())?;
    for l in 0..d.len() {
        let row: Vec<String> = d
            .schema()
            .variables()
            .iter()
            .zip(&d.columns)
            .map(|(var, col)| match col {
                Column::Discrete(v) => var.states().unwrap()[v[l]].clone(),
                Column::Continuous(v) => format!("{}", v[l]),
            })
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Variable;

    fn three() -> Domain {
        Domain::new(vec![
            Variable::with_arity("x1", 2).unwrap(),
            Variable::with_arity("x2", 2).unwrap(),
            Variable::with_arity("x3", 2).unwrap(),
        ])
        .unwrap()
    }

    fn worked_example() -> Database {
        read_csv("x1,x2,x3\n1,2,1\n2,2,1\n".as_bytes(), &three()).unwrap()
    }

    #[test]
    fn loads_worked_example() {
        let d = worked_example();
        assert_eq!(d.len(), 2);
        assert_eq!(d.case(0), vec![Value::State(0), Value::State(1), Value::State(0)]);
        assert_eq!(d.case(1), vec![Value::State(1), Value::State(1), Value::State(0)]);
    }

    #[test]
    fn header_is_order_insensitive() {
        let d = read_csv("x3,x1,x2\n1,1,2\n1,2,2\n".as_bytes(), &three()).unwrap();
        assert_eq!(d, worked_example());
    }

    #[test]
    fn header_only_is_empty_database() {
        let d = read_csv("x1,x2,x3\n".as_bytes(), &three()).unwrap();
        assert_eq!(d.len(), 0);
    }

    #[test]
    fn csv_errors() {
        let blank = read_csv("x1,x2,x3\n1,2,1\n1,,2\n".as_bytes(), &three());
        assert!(matches!(blank, Err(Error::MissingValue { line: 3, .. })));
        let unknown = read_csv("x1,x2,x3\n1,3,1\n".as_bytes(), &three());
        assert!(matches!(unknown, Err(Error::UnknownState { line: 2, .. })));
        let header = read_csv("x1,x2,x4\n".as_bytes(), &three());
        assert!(matches!(header, Err(Error::HeaderMismatch { .. })));
        let short = read_csv("x1,x2\n".as_bytes(), &three());
        assert!(matches!(short, Err(Error::HeaderMismatch { .. })));
        let c = Domain::continuous(1);
        let bad = read_csv("x1\n1.5\nabc\n".as_bytes(), &c);
        assert!(matches!(bad, Err(Error::MalformedNumber { line: 3, .. })));
        let nan = read_csv("x1\nNaN\n".as_bytes(), &c);
        assert!(matches!(nan, Err(Error::MalformedNumber { .. })));
    }

    #[test]
    fn projection_of_worked_example() {
        let d = worked_example();
        let p = d.project(&[0, 1]).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.case(0), vec![Value::State(0), Value::State(1)]);
        assert_eq!(p.case(1), vec![Value::State(1), Value::State(1)]);
        assert_eq!(d.project(&[0, 1, 2]).unwrap(), d);
        let e = Database::empty(three()).project(&[2]).unwrap();
        assert_eq!(e.len(), 0);
        assert!(matches!(
            d.project_names(&["x9"]),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn counts() {
        let d = worked_example();
        let c = discrete_counts(&d, 2, &[1]).unwrap();
        // x2 = 2 is configuration j = 1; x3 = 1 is k = 0.
        assert_eq!(c.get(1, 0), 2);
        assert_eq!(c.total(), 2);

        let x = Domain::binary(1);
        let d = Database::from_states(x.clone(), &[vec![0], vec![0], vec![1]]).unwrap();
        let c = discrete_counts(&d, 0, &[]).unwrap();
        assert_eq!(c.counts, vec![2, 1]);

        let empty = discrete_counts(&Database::empty(x), 0, &[]).unwrap();
        assert_eq!(empty.counts, vec![0, 0]);

        let cont = Database::empty(Domain::continuous(1));
        assert!(matches!(
            discrete_counts(&cont, 0, &[]),
            Err(Error::TypeMismatch(_))
        ));
    }

    #[test]
    fn mixed_radix_lowest_parent_fastest() {
        let dom = Domain::new(vec![
            Variable::with_arity("a", 2).unwrap(),
            Variable::with_arity("b", 3).unwrap(),
            Variable::with_arity("c", 2).unwrap(),
        ])
        .unwrap();
        let d = Database::from_states(dom, &[vec![1, 2, 0]]).unwrap();
        let c = discrete_counts(&d, 2, &[1, 0]).unwrap();
        assert_eq!(c.parents, vec![0, 1]);
        assert_eq!(c.configurations, 6);
        // j = a + 2·b = 1 + 4.
        assert_eq!(c.get(5, 0), 1);
    }

    #[test]
    fn gaussian_stats_examples() {
        let one = Database::from_reals(Domain::continuous(2), &[vec![1.5, -2.0]]).unwrap();
        let s = gaussian_stats(&one).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.5, -2.0]);
        assert_eq!(s.scatter, DMatrix::zeros(2, 2));

        let two = Database::from_reals(Domain::continuous(1), &[vec![0.0], vec![2.0]]).unwrap();
        let s = gaussian_stats(&two).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.scatter[(0, 0)], 2.0);

        let dup = Database::from_reals(Domain::continuous(2), &vec![vec![0.1, 0.7]; 7]).unwrap();
        let s = gaussian_stats(&dup).unwrap();
        assert_eq!(s.scatter, DMatrix::zeros(2, 2));

        let disc = Database::empty(Domain::binary(1));
        assert!(matches!(gaussian_stats(&disc), Err(Error::TypeMismatch(_))));
    }

    #[test]
    fn csv_round_trip_preserves_reals() {
        let d = Database::from_reals(
            Domain::continuous(2),
            &[vec![0.1, 1e-300], vec![-3.25, std::f64::consts::PI]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), d.schema()).unwrap();
        assert_eq!(back, d);
    }
}
