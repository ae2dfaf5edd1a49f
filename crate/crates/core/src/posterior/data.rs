//! Tables of counts, probabilities and discrepancies indexed by
//! (design point, outcome category).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for the validity checks on distributions and discrepancies.
pub const VALIDITY_TOL: f64 = 1e-9;

/// Dense row-major `rows × cols` table of reals. Rows are design points,
/// columns are outcome categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Table {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Table {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "table of shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidData("ragged table rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Design-major vectorization: all outcomes of design 0, then design 1, ...
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Elementwise product, e.g. `p = d ∘ p̃`.
    pub fn hadamard(&self, other: &Table) -> Table {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Table {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for Table {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<Table> for Vec<Vec<f64>> {
    fn from(t: Table) -> Self {
        t.to_rows()
    }
}

/// Nonnegative integer counts `n_j(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u64>>", into = "Vec<Vec<u64>>")]
pub struct CountTable {
    rows: usize,
    cols: usize,
    values: Vec<u64>,
}

impl CountTable {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0; rows * cols],
        }
    }

    pub fn new(rows: usize, cols: usize, values: Vec<u64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidData(format!(
                "count table of shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidData("ragged count rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.values[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u64) {
        self.values[row * self.cols + col] = value;
    }

    pub fn add(&mut self, row: usize, col: usize, value: u64) {
        self.values[row * self.cols + col] += value;
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.values
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.row(row).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.values.chunks(self.cols.max(1)).map(<[u64]>::to_vec).collect()
    }

    /// Cellwise sum of two count tables of equal shape.
    pub fn merged(&self, other: &CountTable) -> Result<CountTable> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::InvalidData("count tables differ in shape".into()));
        }
        Ok(CountTable {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }
}

impl TryFrom<Vec<Vec<u64>>> for CountTable {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<CountTable> for Vec<Vec<u64>> {
    fn from(t: CountTable) -> Self {
        t.to_rows()
    }
}

/// True iff every entry is ≥ −tol and every row sums to 1 within `tol`.
pub fn validate_distribution(p: &Table, tol: f64) -> bool {
    if !p.is_finite() || p.cols() == 0 {
        return false;
    }
    (0..p.rows()).all(|j| {
        let row = p.row(j);
        row.iter().all(|&v| v >= -tol) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
    })
}

/// True iff `d ≥ −tol` entrywise and each row satisfies `|Σ_i d_j(i) p_j(i) − 1| ≤ tol`.
pub fn validate_discrepancy(d: &Table, p: &Table, tol: f64) -> bool {
    if (d.rows(), d.cols()) != (p.rows(), p.cols()) || !d.is_finite() {
        return false;
    }
    (0..d.rows()).all(|j| {
        let dr = d.row(j);
        let pr = p.row(j);
        dr.iter().all(|&v| v >= -tol)
            && (dr.iter().zip(pr).map(|(a, b)| a * b).sum::<f64>() - 1.0).abs() <= tol
    })
}

/// A table whose rows are valid distributions (`p_j` or `p̃_j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Table", into = "Table")]
pub struct ProbTable(Table);

impl ProbTable {
    pub fn new(values: Table) -> Result<Self> {
        if !validate_distribution(&values, VALIDITY_TOL) {
            return Err(Error::InvalidData(
                "rows must be nonnegative and sum to one".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn uniform(s: usize, m: usize) -> Self {
        Self(Table::filled(s, m, 1.0 / m as f64))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Table::from_rows(rows)?)
    }

    pub fn table(&self) -> &Table {
        &self.0
    }

    pub fn into_table(self) -> Table {
        self.0
    }
}

impl std::ops::Deref for ProbTable {
    type Target = Table;

    fn deref(&self) -> &Table {
        &self.0
    }
}

impl TryFrom<Table> for ProbTable {
    type Error = Error;

    fn try_from(t: Table) -> Result<Self> {
        Self::new(t)
    }
}

impl From<ProbTable> for Table {
    fn from(p: ProbTable) -> Self {
        p.0
    }
}

/// Likelihood-ratio table `d_j(i)`, valid with respect to a companion [`ProbTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyTable(Table);

impl DiscrepancyTable {
    pub fn new(values: Table, reference: &ProbTable) -> Result<Self> {
        if !validate_discrepancy(&values, reference, VALIDITY_TOL) {
            return Err(Error::InvalidData(
                "discrepancy must be nonnegative with sum_i d(i) p(i) = 1 per row".into(),
            ));
        }
        Ok(Self(values))
    }

    /// `d = p / p̃` componentwise. Entries with `p̃ = 0` are set to 1.
    pub fn from_ratio(p: &Table, p_tilde: &Table) -> Self {
        let values = p
            .as_slice()
            .iter()
            .zip(p_tilde.as_slice())
            .map(|(&a, &b)| if b > 0.0 { a / b } else { 1.0 })
            .collect();
        Self(Table::new(p.rows(), p.cols(), values).expect("same shape"))
    }

    pub fn ones(s: usize, m: usize) -> Self {
        Self(Table::filled(s, m, 1.0))
    }

    pub fn table(&self) -> &Table {
        &self.0
    }
}

impl std::ops::Deref for DiscrepancyTable {
    type Target = Table;

    fn deref(&self) -> &Table {
        &self.0
    }
}

/// Observed real-system counts and simulation counts over `s` design
/// points and `m` outcome categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemData {
    design_coords: Vec<f64>,
    real_counts: CountTable,
    sim_counts: CountTable,
}

impl ProblemData {
    pub fn new(design_coords: Vec<f64>, real_counts: CountTable, sim_counts: CountTable) -> Result<Self> {
        let s = design_coords.len();
        if s == 0 {
            return Err(Error::InvalidData("need at least one design point".into()));
        }
        let m = real_counts.cols();
        if m < 2 {
            return Err(Error::InvalidData(format!(
                "need at least two outcome categories, got {m}"
            )));
        }
        if (real_counts.rows(), real_counts.cols()) != (s, m)
            || (sim_counts.rows(), sim_counts.cols()) != (s, m)
        {
            return Err(Error::InvalidData(format!(
                "count tables must both be {s}x{m}"
            )));
        }
        if design_coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("design coordinates must be finite".into()));
        }
        for a in 0..s {
            for b in a + 1..s {
                if design_coords[a] == design_coords[b] {
                    return Err(Error::InvalidData(format!(
                        "design coordinates {a} and {b} coincide ({})",
                        design_coords[a]
                    )));
                }
            }
        }
        Ok(Self {
            design_coords,
            real_counts,
            sim_counts,
        })
    }

    pub fn s(&self) -> usize {
        self.design_coords.len()
    }

    pub fn m(&self) -> usize {
        self.real_counts.cols()
    }

    pub fn design_coords(&self) -> &[f64] {
        &self.design_coords
    }

    pub fn real_counts(&self) -> &CountTable {
        &self.real_counts
    }

    pub fn sim_counts(&self) -> &CountTable {
        &self.sim_counts
    }

    /// `n_j`
    pub fn real_total(&self, j: usize) -> u64 {
        self.real_counts.row_total(j)
    }

    /// `ñ_j`
    pub fn sim_total(&self, j: usize) -> u64 {
        self.sim_counts.row_total(j)
    }

    pub fn with_real_counts(&self, real_counts: CountTable) -> Result<Self> {
        Self::new(self.design_coords.clone(), real_counts, self.sim_counts.clone())
    }

    pub fn with_sim_counts(&self, sim_counts: CountTable) -> Result<Self> {
        Self::new(self.design_coords.clone(), self.real_counts.clone(), sim_counts)
    }

    /// Empirical frequencies `(n_j(i) + a) / (n_j + m a)`.
    pub fn smoothed_real_frequencies(&self, a: f64) -> Table {
        smoothed(&self.real_counts, a)
    }

    pub fn smoothed_sim_frequencies(&self, a: f64) -> Table {
        smoothed(&self.sim_counts, a)
    }
}

fn smoothed(counts: &CountTable, a: f64) -> Table {
    let (s, m) = (counts.rows(), counts.cols());
    let mut out = Table::filled(s, m, 0.0);
    for j in 0..s {
        let total = counts.row_total(j) as f64 + m as f64 * a;
        for i in 0..m {
            let v = if total > 0.0 {
                (counts.get(j, i) as f64 + a) / total
            } else {
                1.0 / m as f64
            };
            out.set(j, i, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[f64]]) -> Table {
        Table::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn distribution_checks() {
        assert!(validate_distribution(&Table::filled(3, 4, 0.25), 1e-9));
        assert!(!validate_distribution(&table(&[&[0.7, 0.4]]), 1e-9));
        assert!(validate_distribution(&table(&[&[1.0, 0.0]]), 1e-9));
        assert!(!validate_distribution(&table(&[&[1.5, -0.5]]), 1e-9));
        assert!(!validate_distribution(&table(&[&[f64::NAN, 1.0]]), 1e-9));
    }

    #[test]
    fn discrepancy_checks() {
        let p = table(&[&[0.5, 0.5]]);
        assert!(validate_discrepancy(&Table::filled(1, 2, 1.0), &p, 1e-9));
        assert!(validate_discrepancy(&table(&[&[2.0, 0.0]]), &p, 1e-9));
        assert!(!validate_discrepancy(&table(&[&[2.0, 2.0]]), &p, 1e-9));
        let q = table(&[&[0.1, 0.2, 0.7]]);
        assert!(validate_discrepancy(&Table::filled(1, 3, 1.0), &q, 1e-9));
        assert!(!validate_discrepancy(&table(&[&[-1.0, 1.0, 1.0]]), &q, 1e-9));
    }

    #[test]
    fn problem_data_rejects_bad_shapes() {
        let c = CountTable::zeros(2, 3);
        assert!(ProblemData::new(vec![0.0, 1.0], c.clone(), c.clone()).is_ok());
        assert!(ProblemData::new(vec![0.0, 0.0], c.clone(), c.clone()).is_err());
        assert!(ProblemData::new(vec![0.0], c.clone(), c.clone()).is_err());
        assert!(ProblemData::new(vec![0.0, f64::INFINITY], c.clone(), c.clone()).is_err());
        let one = CountTable::zeros(2, 1);
        assert!(ProblemData::new(vec![0.0, 1.0], one.clone(), one).is_err());
        assert!(ProblemData::new(vec![], CountTable::zeros(0, 3), CountTable::zeros(0, 3)).is_err());
    }

    #[test]
    fn totals_are_derived() {
        let real = CountTable::from_rows(&[vec![1, 2, 3], vec![0, 0, 4]]).unwrap();
        let sim = CountTable::from_rows(&[vec![5, 5, 0], vec![1, 1, 1]]).unwrap();
        let data = ProblemData::new(vec![5.0, 6.0], real, sim).unwrap();
        assert_eq!(data.real_total(0), 6);
        assert_eq!(data.real_total(1), 4);
        assert_eq!(data.sim_total(0), 10);
        let f = data.smoothed_real_frequencies(1.0);
        assert!((f.get(1, 2) - 5.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn table_serde_as_rows() {
        let t = table(&[&[0.25, 0.75], &[0.5, 0.5]]);
        let rows: Vec<Vec<f64>> = t.clone().into();
        assert_eq!(Table::try_from(rows).unwrap(), t);
    }
}
