//! Exact finite-alphabet probability tables and the information measures
//! built on them.
//!
//! Every measure is reported in bits. Tables are dense and validated on
//! construction: entries must be finite and non-negative and must sum to one
//! within [`SUM_TOL`]. Inputs outside tolerance are rejected rather than
//! renormalized; the `normalized` constructors exist for weights derived
//! inside the crate (posteriors, perturbations) where renormalization is the
//! intended operation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of every table accepted from a caller.
pub const SUM_TOL: f64 = 1e-12;

fn check_entries(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::validation(format!("{what}: empty table")));
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::validation(format!(
                "{what}: entry {i} is {v}, expected a finite non-negative probability"
            )));
        }
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(Error::validation(format!(
            "{what}: entries sum to {total:.17}, expected 1 within {SUM_TOL:e}"
        )));
    }
    Ok(())
}

fn normalize_weights(mut values: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::validation(format!("{what}: empty table")));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation(format!(
            "{what}: weights must be finite and non-negative"
        )));
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Err(Error::validation(format!("{what}: weights sum to zero")));
    }
    values.iter_mut().for_each(|v| *v /= total);
    Ok(values)
}

/// `-Σ p log2 p` over a raw slice, with `0·log 0 = 0`.
pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Mutual information of a row-major `rows × cols` joint table.
pub(crate) fn mi_of(table: &[f64], rows: usize, cols: usize) -> f64 {
    debug_assert_eq!(table.len(), rows * cols);
    let mut row_m = vec![0.0; rows];
    let mut col_m = vec![0.0; cols];
    for a in 0..rows {
        for b in 0..cols {
            let v = table[a * cols + b];
            row_m[a] += v;
            col_m[b] += v;
        }
    }
    let mut total = 0.0;
    for a in 0..rows {
        for b in 0..cols {
            let v = table[a * cols + b];
            if v > 0.0 {
                total += v * (v / (row_m[a] * col_m[b])).log2();
            }
        }
    }
    total.max(0.0)
}

/// A probability mass function over `{0, …, n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_entries(&probs, "pmf")?;
        Ok(Pmf { probs })
    }

    /// Builds a pmf by dividing non-negative weights by their sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        Ok(Pmf {
            probs: normalize_weights(weights, "pmf")?,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("pmf: alphabet size must be >= 1"));
        }
        Ok(Pmf {
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn point(n: usize, at: usize) -> Result<Self> {
        if at >= n {
            return Err(Error::validation(format!(
                "pmf: point mass index {at} outside alphabet of size {n}"
            )));
        }
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Ok(Pmf { probs })
    }

    /// `[1 - p, p]`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("bernoulli parameter {p} not in [0,1]")));
        }
        Ok(Pmf {
            probs: vec![1.0 - p, p],
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Pmf::new(value)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.probs
    }
}

fn rows_to_flat(rows: Vec<Vec<f64>>, what: &str) -> Result<(usize, usize, Vec<f64>)> {
    let n_rows = rows.len();
    if n_rows == 0 {
        return Err(Error::validation(format!("{what}: no rows")));
    }
    let n_cols = rows[0].len();
    if n_cols == 0 {
        return Err(Error::validation(format!("{what}: empty rows")));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != n_cols) {
        return Err(Error::validation(format!(
            "{what}: row {bad} has length {}, expected {n_cols}",
            rows[bad].len()
        )));
    }
    Ok((n_rows, n_cols, rows.into_iter().flatten().collect()))
}

/// Joint pmf over a pair `(A, B)`, stored row-major (`a` indexes rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct JointPmf2 {
    rows: usize,
    cols: usize,
    table: Vec<f64>,
}

impl JointPmf2 {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let (r, c, table) = rows_to_flat(rows, "joint pmf")?;
        Self::from_flat(r, c, table)
    }

    pub fn from_flat(rows: usize, cols: usize, table: Vec<f64>) -> Result<Self> {
        if rows * cols != table.len() || rows == 0 || cols == 0 {
            return Err(Error::validation(format!(
                "joint pmf: {} entries do not fill a {rows}x{cols} table",
                table.len()
            )));
        }
        check_entries(&table, "joint pmf")?;
        Ok(JointPmf2 { rows, cols, table })
    }

    pub fn normalized_flat(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows * cols != weights.len() || rows == 0 || cols == 0 {
            return Err(Error::validation(format!(
                "joint pmf: {} entries do not fill a {rows}x{cols} table",
                weights.len()
            )));
        }
        Ok(JointPmf2 {
            rows,
            cols,
            table: normalize_weights(weights, "joint pmf")?,
        })
    }

    /// The independent coupling `P(a)·P(b)`.
    pub fn product(a: &Pmf, b: &Pmf) -> Self {
        let table = a
            .probs()
            .iter()
            .flat_map(|&pa| b.probs().iter().map(move |&pb| pa * pb))
            .collect();
        JointPmf2 {
            rows: a.alphabet_size(),
            cols: b.alphabet_size(),
            table,
        }
    }

    /// Joint of an input marginal pushed through a channel: `P(a)·P(b|a)`.
    pub fn from_channel(input: &Pmf, channel: &PrivacyMapping) -> Result<Self> {
        if input.alphabet_size() != channel.inputs() {
            return Err(Error::validation(format!(
                "channel expects {} inputs, marginal has {}",
                channel.inputs(),
                input.alphabet_size()
            )));
        }
        let cols = channel.outputs();
        let mut table = Vec::with_capacity(input.alphabet_size() * cols);
        for (a, &pa) in input.probs().iter().enumerate() {
            table.extend(channel.row(a).iter().map(|&c| pa * c));
        }
        Ok(JointPmf2 {
            rows: input.alphabet_size(),
            cols,
            table,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.table[a * self.cols + b]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.table
    }

    pub fn marginal_a(&self) -> Pmf {
        let probs = self.table.chunks(self.cols).map(|r| r.iter().sum()).collect();
        Pmf { probs }
    }

    pub fn marginal_b(&self) -> Pmf {
        let mut probs = vec![0.0; self.cols];
        for row in self.table.chunks(self.cols) {
            for (acc, v) in probs.iter_mut().zip(row) {
                *acc += v;
            }
        }
        Pmf { probs }
    }

    pub fn transpose(&self) -> Self {
        let mut table = vec![0.0; self.table.len()];
        for a in 0..self.rows {
            for b in 0..self.cols {
                table[b * self.rows + a] = self.get(a, b);
            }
        }
        JointPmf2 {
            rows: self.cols,
            cols: self.rows,
            table,
        }
    }

    /// `P(b | a)` as a channel from `A` to `B`. Rows with zero mass become
    /// uniform so the result stays row-stochastic.
    pub fn conditional_b_given_a(&self) -> PrivacyMapping {
        let mut rows = Vec::with_capacity(self.table.len());
        for row in self.table.chunks(self.cols) {
            let m: f64 = row.iter().sum();
            if m > 0.0 {
                rows.extend(row.iter().map(|v| v / m));
            } else {
                rows.extend(std::iter::repeat_n(1.0 / self.cols as f64, self.cols));
            }
        }
        PrivacyMapping {
            inputs: self.rows,
            outputs: self.cols,
            rows,
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for JointPmf2 {
    type Error = Error;

    fn try_from(value: Vec<Vec<f64>>) -> Result<Self> {
        JointPmf2::new(value)
    }
}

impl From<JointPmf2> for Vec<Vec<f64>> {
    fn from(j: JointPmf2) -> Self {
        j.table.chunks(j.cols).map(|r| r.to_vec()).collect()
    }
}

/// Joint pmf over a triple, index order `(a, b, c)` with `c` fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Vec<f64>>>", into = "Vec<Vec<Vec<f64>>>")]
pub struct JointPmf3 {
    dims: [usize; 3],
    table: Vec<f64>,
}

impl JointPmf3 {
    pub fn new(nested: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n0 = nested.len();
        let n1 = nested.first().map_or(0, |m| m.len());
        let n2 = nested.first().and_then(|m| m.first()).map_or(0, |r| r.len());
        let mut table = Vec::with_capacity(n0 * n1 * n2);
        for (a, m) in nested.into_iter().enumerate() {
            if m.len() != n1 {
                return Err(Error::validation(format!(
                    "joint3: slice {a} has {} rows, expected {n1}",
                    m.len()
                )));
            }
            for (b, r) in m.into_iter().enumerate() {
                if r.len() != n2 {
                    return Err(Error::validation(format!(
                        "joint3: row ({a},{b}) has length {}, expected {n2}",
                        r.len()
                    )));
                }
                table.extend(r);
            }
        }
        Self::from_flat([n0, n1, n2], table)
    }

    pub fn from_flat(dims: [usize; 3], table: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) || dims.iter().product::<usize>() != table.len() {
            return Err(Error::validation(format!(
                "joint3: {} entries do not fill dims {dims:?}",
                table.len()
            )));
        }
        check_entries(&table, "joint3")?;
        Ok(JointPmf3 { dims, table })
    }

    pub fn normalized_flat(dims: [usize; 3], weights: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) || dims.iter().product::<usize>() != weights.len() {
            return Err(Error::validation(format!(
                "joint3: {} entries do not fill dims {dims:?}",
                weights.len()
            )));
        }
        Ok(JointPmf3 {
            dims,
            table: normalize_weights(weights, "joint3")?,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.table[(a * self.dims[1] + b) * self.dims[2] + c]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.table
    }

    /// Reorders the axes: `order[k]` is the source axis placed at position `k`.
    pub fn permute(&self, order: [usize; 3]) -> Self {
        let mut sorted = order;
        sorted.sort_unstable();
        assert_eq!(sorted, [0, 1, 2], "permute: order must be a permutation");
        let dims = [self.dims[order[0]], self.dims[order[1]], self.dims[order[2]]];
        let mut table = vec![0.0; self.table.len()];
        for a in 0..self.dims[0] {
            for b in 0..self.dims[1] {
                for c in 0..self.dims[2] {
                    let src = [a, b, c];
                    let (i, j, k) = (src[order[0]], src[order[1]], src[order[2]]);
                    table[(i * dims[1] + j) * dims[2] + k] = self.get(a, b, c);
                }
            }
        }
        JointPmf3 { dims, table }
    }

    /// Marginal over the two axes other than `drop`, in their original order.
    pub fn marginal_pair(&self, drop: usize) -> JointPmf2 {
        let keep: Vec<usize> = (0..3).filter(|&k| k != drop).collect();
        let (r, c) = (self.dims[keep[0]], self.dims[keep[1]]);
        let mut table = vec![0.0; r * c];
        for a in 0..self.dims[0] {
            for b in 0..self.dims[1] {
                for z in 0..self.dims[2] {
                    let idx = [a, b, z];
                    table[idx[keep[0]] * c + idx[keep[1]]] += self.get(a, b, z);
                }
            }
        }
        JointPmf2 {
            rows: r,
            cols: c,
            table,
        }
    }

    pub fn marginal(&self, axis: usize) -> Pmf {
        let mut probs = vec![0.0; self.dims[axis]];
        for a in 0..self.dims[0] {
            for b in 0..self.dims[1] {
                for c in 0..self.dims[2] {
                    probs[[a, b, c][axis]] += self.get(a, b, c);
                }
            }
        }
        Pmf { probs }
    }

    /// Joint of axis `a` against the pair `(b, c)` flattened as `b * |C| + c`.
    pub fn group_bc(&self) -> JointPmf2 {
        JointPmf2 {
            rows: self.dims[0],
            cols: self.dims[1] * self.dims[2],
            table: self.table.clone(),
        }
    }
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for JointPmf3 {
    type Error = Error;

    fn try_from(value: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        JointPmf3::new(value)
    }
}

impl From<JointPmf3> for Vec<Vec<Vec<f64>>> {
    fn from(j: JointPmf3) -> Self {
        let [_, n1, n2] = j.dims;
        j.table
            .chunks(n1 * n2)
            .map(|m| m.chunks(n2).map(|r| r.to_vec()).collect())
            .collect()
    }
}

/// A row-stochastic channel `P(Y | X)`; row `x` is the output law given `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PrivacyMapping {
    inputs: usize,
    outputs: usize,
    rows: Vec<f64>,
}

impl PrivacyMapping {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let (r, c, flat) = rows_to_flat(rows, "privacy mapping")?;
        Self::from_flat(r, c, flat)
    }

    pub fn from_flat(inputs: usize, outputs: usize, rows: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 || inputs * outputs != rows.len() {
            return Err(Error::validation(format!(
                "privacy mapping: {} entries do not fill {inputs}x{outputs}",
                rows.len()
            )));
        }
        for (x, row) in rows.chunks(outputs).enumerate() {
            check_entries(row, &format!("privacy mapping row {x}"))?;
        }
        Ok(PrivacyMapping {
            inputs,
            outputs,
            rows,
        })
    }

    /// Row-normalizes non-negative weights.
    pub fn normalized_flat(inputs: usize, outputs: usize, weights: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 || inputs * outputs != weights.len() {
            return Err(Error::validation(format!(
                "privacy mapping: {} entries do not fill {inputs}x{outputs}",
                weights.len()
            )));
        }
        let mut rows = Vec::with_capacity(weights.len());
        for (x, row) in weights.chunks(outputs).enumerate() {
            rows.extend(normalize_weights(row.to_vec(), &format!("privacy mapping row {x}"))?);
        }
        Ok(PrivacyMapping {
            inputs,
            outputs,
            rows,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            rows[i * n + i] = 1.0;
        }
        PrivacyMapping {
            inputs: n,
            outputs: n,
            rows,
        }
    }

    /// Every input maps to output `y` with certainty.
    pub fn constant(inputs: usize, outputs: usize, y: usize) -> Result<Self> {
        if y >= outputs {
            return Err(Error::validation(format!(
                "constant mapping: output {y} outside alphabet of size {outputs}"
            )));
        }
        let mut rows = vec![0.0; inputs * outputs];
        for x in 0..inputs {
            rows[x * outputs + y] = 1.0;
        }
        PrivacyMapping::from_flat(inputs, outputs, rows)
    }

    /// Binary symmetric channel with crossover probability `flip`.
    pub fn bsc(flip: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip) {
            return Err(Error::validation(format!("bsc crossover {flip} not in [0,1]")));
        }
        Ok(PrivacyMapping {
            inputs: 2,
            outputs: 2,
            rows: vec![1.0 - flip, flip, flip, 1.0 - flip],
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x * self.outputs..(x + 1) * self.outputs]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.rows[x * self.outputs + y]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.rows
    }

    /// Output marginal `Σ_x P(x) P(y|x)`.
    pub fn push_forward(&self, input: &Pmf) -> Result<Pmf> {
        Ok(JointPmf2::from_channel(input, self)?.marginal_b())
    }

    /// Channel to the product alphabet `(y1, y2)` (flattened `y1 * |Y2| + y2`)
    /// whose two outputs are conditionally independent given the input.
    pub fn tensor(&self, other: &PrivacyMapping) -> Result<PrivacyMapping> {
        if self.inputs != other.inputs {
            return Err(Error::validation(format!(
                "tensor: input alphabets differ ({} vs {})",
                self.inputs, other.inputs
            )));
        }
        let outputs = self.outputs * other.outputs;
        let mut rows = Vec::with_capacity(self.inputs * outputs);
        for x in 0..self.inputs {
            for &a in self.row(x) {
                rows.extend(other.row(x).iter().map(|&b| a * b));
            }
        }
        Ok(PrivacyMapping {
            inputs: self.inputs,
            outputs,
            rows,
        })
    }

    /// Channel composition `X → Y → W`.
    pub fn then(&self, next: &PrivacyMapping) -> Result<PrivacyMapping> {
        if self.outputs != next.inputs {
            return Err(Error::validation(format!(
                "compose: output alphabet {} does not feed input alphabet {}",
                self.outputs, next.inputs
            )));
        }
        let mut rows = vec![0.0; self.inputs * next.outputs];
        for x in 0..self.inputs {
            for (y, &p) in self.row(x).iter().enumerate() {
                for (w, &q) in next.row(y).iter().enumerate() {
                    rows[x * next.outputs + w] += p * q;
                }
            }
        }
        Ok(PrivacyMapping {
            inputs: self.inputs,
            outputs: next.outputs,
            rows,
        })
    }

    /// Relabels outputs: output `y` becomes `perm[y]`.
    pub fn relabel_outputs(&self, perm: &[usize]) -> Result<PrivacyMapping> {
        if perm.len() != self.outputs {
            return Err(Error::validation("relabel: permutation length mismatch"));
        }
        let mut rows = vec![0.0; self.rows.len()];
        for x in 0..self.inputs {
            for y in 0..self.outputs {
                rows[x * self.outputs + perm[y]] = self.get(x, y);
            }
        }
        Ok(PrivacyMapping {
            inputs: self.inputs,
            outputs: self.outputs,
            rows,
        })
    }
}

impl TryFrom<Vec<Vec<f64>>> for PrivacyMapping {
    type Error = Error;

    fn try_from(value: Vec<Vec<f64>>) -> Result<Self> {
        PrivacyMapping::new(value)
    }
}

impl From<PrivacyMapping> for Vec<Vec<f64>> {
    fn from(m: PrivacyMapping) -> Self {
        m.rows.chunks(m.outputs).map(|r| r.to_vec()).collect()
    }
}

/// Shannon entropy in bits.
pub fn entropy(p: &Pmf) -> f64 {
    entropy_of(p.probs())
}

/// `D(p ‖ q)` in bits. Mass of `p` outside the support of `q` is reported as
/// [`Error::InfiniteDivergence`].
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    kl_of(p.probs(), q.probs())
}

pub(crate) fn kl_of(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::validation(format!(
            "kl divergence: alphabet sizes differ ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::InfiniteDivergence);
            }
            total += pi * (pi / qi).log2();
        }
    }
    Ok(total.max(0.0))
}

/// `I(A; B)` in bits.
pub fn mutual_information(j: &JointPmf2) -> f64 {
    mi_of(j.as_flat(), j.rows(), j.cols())
}

/// `H(A | B) = H(A, B) - H(B)` where `A` indexes rows.
pub fn conditional_entropy(j: &JointPmf2) -> f64 {
    (entropy_of(j.as_flat()) - entropy_of(j.marginal_b().probs())).max(0.0)
}

/// `I(X; Y | Z)` for a joint indexed `(x, y, z)`, evaluated as the
/// `P(z)`-weighted divergence of each conditional joint from the product of
/// its conditional marginals.
pub fn conditional_mutual_information(j: &JointPmf3) -> f64 {
    cmi_per_z(j).iter().sum::<f64>().max(0.0)
}

/// Per-`z` terms `P(z) · D(P(X,Y|z) ‖ P(X|z) P(Y|z))`.
pub(crate) fn cmi_per_z(j: &JointPmf3) -> Vec<f64> {
    let [nx, ny, nz] = j.dims();
    let mut out = Vec::with_capacity(nz);
    let mut slice = vec![0.0; nx * ny];
    for z in 0..nz {
        let mut pz = 0.0;
        for x in 0..nx {
            for y in 0..ny {
                let v = j.get(x, y, z);
                slice[x * ny + y] = v;
                pz += v;
            }
        }
        if pz <= 0.0 {
            out.push(0.0);
            continue;
        }
        // mi_of is scale-covariant: I(slice / pz) * pz.
        slice.iter_mut().for_each(|v| *v /= pz);
        out.push(pz * mi_of(&slice, nx, ny));
    }
    out
}

/// Composes `P(s, x)` with a privacy mapping into `P(s, x, y) = P(s,x) P(y|x)`.
pub fn markov_compose(p_sx: &JointPmf2, map: &PrivacyMapping) -> Result<JointPmf3> {
    if map.inputs() != p_sx.cols() {
        return Err(Error::validation(format!(
            "markov compose: mapping expects {} inputs, joint has X alphabet {}",
            map.inputs(),
            p_sx.cols()
        )));
    }
    let (ns, nx, ny) = (p_sx.rows(), p_sx.cols(), map.outputs());
    let mut table = Vec::with_capacity(ns * nx * ny);
    for s in 0..ns {
        for x in 0..nx {
            let p = p_sx.get(s, x);
            table.extend(map.row(x).iter().map(|&c| p * c));
        }
    }
    Ok(JointPmf3 {
        dims: [ns, nx, ny],
        table,
    })
}
