//! Pointwise tensor algebra over jet components: metric assembly,
//! inversion, index manipulation, covariant differentiation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::{self, Expression};
use crate::jets::Jet;

/// Index position of one tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Up,
    Down,
}

/// Declared symmetry of a pair of slots, spot-checked in debug builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymTag {
    Sym(usize, usize),
    Antisym(usize, usize),
}

/// A pointwise tensor of uniform slot dimension whose components are jets
/// sharing one chart dimension and truncation order.
#[derive(Clone)]
pub struct TensorJet {
    dim: usize,
    order: usize,
    valence: Vec<Slot>,
    comps: Vec<Jet>,
    tags: Vec<SymTag>,
}

impl fmt::Debug for TensorJet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorJet")
            .field("dim", &self.dim)
            .field("order", &self.order)
            .field("valence", &self.valence)
            .field("components", &self.comps.len())
            .finish()
    }
}

impl TensorJet {
    /// Build from a component function over index tuples.
    pub fn from_fn<F>(dim: usize, valence: Vec<Slot>, order: usize, mut f: F) -> TensorJet
    where
        F: FnMut(&[usize]) -> Jet,
    {
        let rank = valence.len();
        let total = dim.pow(rank as u32);
        let mut comps = Vec::with_capacity(total);
        let mut idx = vec![0usize; rank];
        for _ in 0..total {
            let jet = f(&idx);
            assert_eq!(jet.dim(), dim, "component jet dim mismatch");
            assert_eq!(jet.order(), order, "component jet order mismatch");
            comps.push(jet);
            increment(&mut idx, dim);
        }
        TensorJet {
            dim,
            order,
            valence,
            comps,
            tags: Vec::new(),
        }
    }

    pub(crate) fn from_components(
        dim: usize,
        valence: Vec<Slot>,
        order: usize,
        comps: Vec<Jet>,
    ) -> TensorJet {
        debug_assert_eq!(comps.len(), dim.pow(valence.len() as u32));
        debug_assert!(comps.iter().all(|j| j.dim() == dim && j.order() == order));
        TensorJet {
            dim,
            order,
            valence,
            comps,
            tags: Vec::new(),
        }
    }

    /// Wrap a single jet as a rank-0 tensor.
    pub fn scalar(jet: Jet) -> TensorJet {
        TensorJet {
            dim: jet.dim(),
            order: jet.order(),
            valence: Vec::new(),
            comps: vec![jet],
            tags: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Remaining usable jet order shared by all components.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rank(&self) -> usize {
        self.valence.len()
    }

    pub fn valence(&self) -> &[Slot] {
        &self.valence
    }

    pub fn tags(&self) -> &[SymTag] {
        &self.tags
    }

    /// Attach symmetry tags; in debug builds a few component pairs are
    /// spot-checked against each declared symmetry.
    pub fn with_tags(mut self, tags: Vec<SymTag>) -> TensorJet {
        #[cfg(debug_assertions)]
        for tag in &tags {
            let res = self.symmetry_residual(*tag, 4);
            debug_assert!(
                res <= 1e-8 * (1.0 + self.max_abs_coeff()),
                "declared symmetry {tag:?} violated: residual {res}"
            );
        }
        self.tags = tags;
        self
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.comps[self.flat(idx)]
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        let mut p = 0;
        for &i in idx {
            debug_assert!(i < self.dim);
            p = p * self.dim + i;
        }
        p
    }

    pub fn components(&self) -> &[Jet] {
        &self.comps
    }

    /// Largest |coefficient| over all components.
    pub fn max_abs_coeff(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|j| j.coeffs().iter())
            .fold(0.0f64, |m, c| m.max(c.abs()))
    }

    /// Worst-case coefficient residual of a declared symmetry over sampled
    /// index tuples (all tuples when `samples` is 0).
    pub fn symmetry_residual(&self, tag: SymTag, samples: usize) -> f64 {
        let (a, b, sign) = match tag {
            SymTag::Sym(a, b) => (a, b, 1.0),
            SymTag::Antisym(a, b) => (a, b, -1.0),
        };
        let total = self.comps.len();
        let step = if samples == 0 {
            1
        } else {
            (total / samples).max(1)
        };
        let rank = self.rank();
        let mut worst = 0.0f64;
        let mut idx = vec![0usize; rank];
        let mut flatpos = 0usize;
        while flatpos < total {
            decode(flatpos, self.dim, &mut idx);
            let mut swapped = idx.clone();
            swapped.swap(a, b);
            let lhs = &self.comps[flatpos];
            let rhs = self.get(&swapped);
            for (x, y) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                worst = worst.max((x - sign * y).abs());
            }
            flatpos += step;
        }
        worst
    }

    /// Truncate every component to the given order.
    pub fn truncated(&self, order: usize) -> Result<TensorJet> {
        if order == self.order {
            return Ok(self.clone());
        }
        let mut comps = Vec::with_capacity(self.comps.len());
        for jet in &self.comps {
            comps.push(jet.truncated(order)?);
        }
        Ok(TensorJet {
            dim: self.dim,
            order,
            valence: self.valence.clone(),
            comps,
            tags: self.tags.clone(),
        })
    }

    fn check_compatible(&self, other: &TensorJet) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch(self.dim, other.dim));
        }
        if self.valence != other.valence {
            return Err(Error::InvalidContraction(format!(
                "valence mismatch: {:?} vs {:?}",
                self.valence, other.valence
            )));
        }
        Ok(())
    }

    /// Componentwise sum; operands are aligned to the smaller order.
    pub fn add(&self, other: &TensorJet) -> Result<TensorJet> {
        self.check_compatible(other)?;
        let order = self.order.min(other.order);
        let a = self.truncated(order)?;
        let b = other.truncated(order)?;
        let comps = a
            .comps
            .iter()
            .zip(&b.comps)
            .map(|(x, y)| x.try_add(y))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorJet {
            dim: self.dim,
            order,
            valence: self.valence.clone(),
            comps,
            tags: Vec::new(),
        })
    }

    pub fn sub(&self, other: &TensorJet) -> Result<TensorJet> {
        self.check_compatible(other)?;
        let order = self.order.min(other.order);
        let a = self.truncated(order)?;
        let b = other.truncated(order)?;
        let comps = a
            .comps
            .iter()
            .zip(&b.comps)
            .map(|(x, y)| x.try_sub(y))
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorJet {
            dim: self.dim,
            order,
            valence: self.valence.clone(),
            comps,
            tags: Vec::new(),
        })
    }

    pub fn scale(&self, s: f64) -> TensorJet {
        TensorJet {
            dim: self.dim,
            order: self.order,
            valence: self.valence.clone(),
            comps: self.comps.iter().map(|j| j.scale(s)).collect(),
            tags: self.tags.clone(),
        }
    }
}

/// Borrow `t` when it already has the target order, otherwise own a
/// truncated copy. Keeps the contraction paths from cloning full tensors.
pub(crate) fn at_order(t: &TensorJet, order: usize) -> Result<std::borrow::Cow<'_, TensorJet>> {
    Ok(if t.order() == order {
        std::borrow::Cow::Borrowed(t)
    } else {
        std::borrow::Cow::Owned(t.truncated(order)?)
    })
}

fn increment(idx: &mut [usize], dim: usize) {
    for slot in (0..idx.len()).rev() {
        idx[slot] += 1;
        if idx[slot] < dim {
            return;
        }
        idx[slot] = 0;
    }
}

fn decode(mut flat: usize, dim: usize, idx: &mut [usize]) {
    for slot in (0..idx.len()).rev() {
        idx[slot] = flat % dim;
        flat /= dim;
    }
}

/// Contraction of two slots. Opposite-position slots are traced directly;
/// same-position slots require the metric (both up) or its inverse (both
/// down) to pair them. Remaining slots keep their order.
pub fn contract(
    t: &TensorJet,
    slot_a: usize,
    slot_b: usize,
    metric: Option<&TensorJet>,
) -> Result<TensorJet> {
    let rank = t.rank();
    if slot_a >= rank {
        return Err(Error::SlotOutOfRange { slot: slot_a, rank });
    }
    if slot_b >= rank {
        return Err(Error::SlotOutOfRange { slot: slot_b, rank });
    }
    if slot_a == slot_b {
        return Err(Error::InvalidContraction("slots must be distinct".into()));
    }
    let (a, b) = (slot_a.min(slot_b), slot_a.max(slot_b));
    let same_position = t.valence[a] == t.valence[b];
    if same_position {
        let m = metric.ok_or_else(|| {
            Error::InvalidContraction(
                "same-position slots need a metric or inverse metric".into(),
            )
        })?;
        let want = match t.valence[a] {
            Slot::Up => Slot::Down,
            Slot::Down => Slot::Up,
        };
        if m.valence() != [want, want] {
            return Err(Error::InvalidContraction(format!(
                "pairing tensor must have valence [{want:?}, {want:?}]"
            )));
        }
        contract_with_pairing(t, a, b, m)
    } else {
        if metric.is_some() {
            return Err(Error::InvalidContraction(
                "metric supplied for an up-down contraction".into(),
            ));
        }
        contract_direct(t, a, b)
    }
}

fn contracted_valence(t: &TensorJet, a: usize, b: usize) -> Vec<Slot> {
    t.valence
        .iter()
        .enumerate()
        .filter(|(s, _)| *s != a && *s != b)
        .map(|(_, v)| *v)
        .collect()
}

fn contract_direct(t: &TensorJet, a: usize, b: usize) -> Result<TensorJet> {
    let dim = t.dim;
    let out_valence = contracted_valence(t, a, b);
    let out_rank = out_valence.len();
    let zero = t.comps[0].zero_like();
    let ncoef = zero.coeffs().len();
    let total = dim.pow(out_rank as u32);
    let mut comps = Vec::with_capacity(total);
    let mut idx = vec![0usize; out_rank];
    let mut full = vec![0usize; t.rank()];
    for _ in 0..total {
        let mut w = 0;
        for s in 0..t.rank() {
            if s != a && s != b {
                full[s] = idx[w];
                w += 1;
            }
        }
        let mut acc = vec![0.0; ncoef];
        for m in 0..dim {
            full[a] = m;
            full[b] = m;
            t.get(&full).add_scaled_into(1.0, &mut acc);
        }
        comps.push(Jet::from_coeffs(zero.space().clone(), acc));
        increment(&mut idx, dim);
    }
    Ok(TensorJet::from_components(dim, out_valence, t.order, comps))
}

fn contract_with_pairing(t: &TensorJet, a: usize, b: usize, m: &TensorJet) -> Result<TensorJet> {
    let dim = t.dim;
    let order = t.order.min(m.order);
    let t = at_order(t, order)?;
    let m = at_order(m, order)?;
    let out_valence = contracted_valence(&t, a, b);
    let out_rank = out_valence.len();
    let zero = t.comps[0].zero_like();
    let ncoef = zero.coeffs().len();
    let total = dim.pow(out_rank as u32);
    let mut comps = Vec::with_capacity(total);
    let mut idx = vec![0usize; out_rank];
    let mut full = vec![0usize; t.rank()];
    for _ in 0..total {
        let mut w = 0;
        for s in 0..t.rank() {
            if s != a && s != b {
                full[s] = idx[w];
                w += 1;
            }
        }
        let mut acc = vec![0.0; ncoef];
        for p in 0..dim {
            full[a] = p;
            for q in 0..dim {
                full[b] = q;
                t.get(&full).mul_acc_into(m.get(&[p, q]), 1.0, &mut acc);
            }
        }
        comps.push(Jet::from_coeffs(zero.space().clone(), acc));
        increment(&mut idx, dim);
    }
    Ok(TensorJet::from_components(dim, out_valence, order, comps))
}

/// Contract one slot of `t` with a rank-2 pairing tensor, leaving the slot
/// in place with flipped position (index raising/lowering).
pub fn flip_slot(t: &TensorJet, slot: usize, pairing: &TensorJet) -> Result<TensorJet> {
    let rank = t.rank();
    if slot >= rank {
        return Err(Error::SlotOutOfRange { slot, rank });
    }
    let order = t.order.min(pairing.order());
    let tt = at_order(t, order)?;
    let pp = at_order(pairing, order)?;
    let new_pos = match tt.valence[slot] {
        Slot::Up => Slot::Down,
        Slot::Down => Slot::Up,
    };
    let mut valence = tt.valence.clone();
    valence[slot] = new_pos;
    let dim = tt.dim;
    let zero = tt.comps[0].zero_like();
    let ncoef = zero.coeffs().len();
    let total = tt.comps.len();
    let mut comps = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    let mut full = vec![0usize; rank];
    for flat in 0..total {
        decode(flat, dim, &mut idx);
        full.copy_from_slice(&idx);
        let mut acc = vec![0.0; ncoef];
        for m in 0..dim {
            full[slot] = m;
            tt.get(&full).mul_acc_into(pp.get(&[idx[slot], m]), 1.0, &mut acc);
        }
        comps.push(Jet::from_coeffs(zero.space().clone(), acc));
    }
    Ok(TensorJet::from_components(dim, valence, order, comps))
}

/// Covariant derivative with the extra down slot appended last; the output
/// order drops by one.
pub fn covariant_derivative(t: &TensorJet, gamma: &TensorJet) -> Result<TensorJet> {
    if t.order == 0 {
        return Err(Error::InsufficientOrder { need: 1, have: 0 });
    }
    if gamma.valence() != [Slot::Up, Slot::Down, Slot::Down] {
        return Err(Error::InvalidContraction(
            "connection coefficients must have valence [Up, Down, Down]".into(),
        ));
    }
    let out_order = t.order - 1;
    if gamma.order() < out_order {
        return Err(Error::InsufficientOrder {
            need: out_order,
            have: gamma.order(),
        });
    }
    let gm = at_order(gamma, out_order)?;
    let t_low = at_order(t, out_order)?;
    let dim = t.dim;
    let rank = t.rank();
    let mut valence = t.valence.clone();
    valence.push(Slot::Down);
    let total = dim.pow((rank + 1) as u32);
    let space = crate::jets::space(dim, out_order);
    let ncoef = space.len();
    let mut comps = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank + 1];
    let mut full = vec![0usize; rank];
    for flat in 0..total {
        decode(flat, dim, &mut idx);
        let k = idx[rank];
        full.copy_from_slice(&idx[..rank]);
        let mut acc = vec![0.0; ncoef];
        t.get(&full).deriv_acc_into(k, 1.0, &mut acc);
        for s in 0..rank {
            let a = full[s];
            let sign = match t.valence[s] {
                Slot::Up => 1.0,
                Slot::Down => -1.0,
            };
            for m in 0..dim {
                full[s] = m;
                let tc = t_low.get(&full);
                full[s] = a;
                // up slot: +Γ^a_{km} T^{…m…};  down slot: −Γ^m_{ka} T_{…m…}
                let gc = match t.valence[s] {
                    Slot::Up => gm.get(&[a, k, m]),
                    Slot::Down => gm.get(&[m, k, a]),
                };
                gc.mul_acc_into(tc, sign, &mut acc);
            }
        }
        comps.push(Jet::from_coeffs(space.clone(), acc));
    }
    Ok(TensorJet::from_components(dim, valence, out_order, comps))
}

// ---------------------------------------------------------------------------
// Small dense f64 linear algebra for constant-term matrices (n ≤ 6)
// ---------------------------------------------------------------------------

/// Cholesky-based positive definiteness test.
pub(crate) fn is_positive_definite(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 {
                    return false;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    true
}

/// Gauss–Jordan inverse with partial pivoting.
pub(crate) fn invert_const(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut inv = vec![vec![0.0; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if aug[r][col].abs() > aug[pivot][col].abs() {
                pivot = r;
            }
        }
        if aug[pivot][col].abs() < 1e-14 {
            return Err(Error::SingularMatrix);
        }
        aug.swap(col, pivot);
        inv.swap(col, pivot);
        let d = aug[col][col];
        for k in 0..n {
            aug[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug[r][col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                aug[r][k] -= f * aug[col][k];
                inv[r][k] -= f * inv[col][k];
            }
        }
    }
    Ok(inv)
}

/// Determinant of an f64 matrix via LU with partial pivoting.
pub(crate) fn det_const(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[pivot][col].abs() {
                pivot = r;
            }
        }
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(col, pivot);
            det = -det;
        }
        det *= m[col][col];
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for k in col..n {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    det
}

/// Constant-term matrix of a rank-2 tensor.
pub fn constant_matrix(t: &TensorJet) -> Vec<Vec<f64>> {
    let n = t.dim();
    (0..n)
        .map(|i| (0..n).map(|j| t.get(&[i, j]).value()).collect())
        .collect()
}

// ---------------------------------------------------------------------------
// Metric specification
// ---------------------------------------------------------------------------

/// How the metric components are described.
#[derive(Debug, Clone)]
pub enum MetricKind {
    /// Symmetric component grid; `components[triangle(i, j)]` holds g_ij
    /// for i ≤ j in row-major upper-triangle order.
    Explicit { components: Vec<Expression> },
    /// g = e^{2φ}·δ for a scalar conformal factor φ.
    ConformallyFlat { phi: Expression },
    /// A named builtin family, to be expanded by the model registry.
    Builtin {
        name: String,
        phi_src: Option<String>,
    },
}

/// A chart description of a Riemannian metric.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub dim: usize,
    pub kind: MetricKind,
    /// Per-coordinate period lengths when the chart is a torus.
    pub periods: Option<Vec<f64>>,
    pub params: BTreeMap<String, f64>,
    /// Identifier used in reports.
    pub label: String,
}

/// Upper-triangle index for i ≤ j in a dim × dim symmetric grid.
pub fn triangle(i: usize, j: usize, dim: usize) -> usize {
    debug_assert!(i <= j && j < dim);
    i * dim - i * (i + 1) / 2 + j
}

impl MetricSpec {
    pub fn explicit(
        dim: usize,
        components: Vec<Expression>,
        params: BTreeMap<String, f64>,
        label: impl Into<String>,
    ) -> Result<MetricSpec> {
        if components.len() != dim * (dim + 1) / 2 {
            return Err(Error::InvalidSpec(format!(
                "expected {} upper-triangle components for dim {dim}, got {}",
                dim * (dim + 1) / 2,
                components.len()
            )));
        }
        Ok(MetricSpec {
            dim,
            kind: MetricKind::Explicit { components },
            periods: None,
            params,
            label: label.into(),
        })
    }

    pub fn conformally_flat(
        dim: usize,
        phi: Expression,
        params: BTreeMap<String, f64>,
        label: impl Into<String>,
    ) -> MetricSpec {
        MetricSpec {
            dim,
            kind: MetricKind::ConformallyFlat { phi },
            periods: None,
            params,
            label: label.into(),
        }
    }

    pub fn with_periods(mut self, periods: Vec<f64>) -> MetricSpec {
        self.periods = Some(periods);
        self
    }

    pub fn is_builtin(&self) -> bool {
        matches!(self.kind, MetricKind::Builtin { .. })
    }

    /// Check structural consistency: period count and bound parameters.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > crate::jets::MAX_DIM {
            return Err(Error::InvalidSpec(format!(
                "dimension {} out of range",
                self.dim
            )));
        }
        if let Some(p) = &self.periods {
            if p.len() != self.dim {
                return Err(Error::InvalidSpec(format!(
                    "{} periods for dimension {}",
                    p.len(),
                    self.dim
                )));
            }
            if p.iter().any(|&l| !(l > 0.0)) {
                return Err(Error::InvalidSpec("periods must be positive".into()));
            }
        }
        let exprs: Vec<&Expression> = match &self.kind {
            MetricKind::Explicit { components } => components.iter().collect(),
            MetricKind::ConformallyFlat { phi } => vec![phi],
            MetricKind::Builtin { .. } => Vec::new(),
        };
        for e in exprs {
            for name in e.param_names() {
                if !self.params.contains_key(&name) {
                    return Err(Error::UnboundParam(name));
                }
            }
        }
        Ok(())
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<MetricSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        MetricSpec::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, label: &str) -> Result<MetricSpec> {
        let raw: RawSpec = toml::from_str(text)
            .map_err(|e| Error::InvalidSpec(format!("TOML error: {e}")))?;
        raw.into_spec(label)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    dim: usize,
    kind: String,
    name: Option<String>,
    phi: Option<String>,
    periods: Option<Vec<f64>>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    #[serde(default)]
    components: BTreeMap<String, String>,
}

impl RawSpec {
    fn into_spec(self, label: &str) -> Result<MetricSpec> {
        let dim = self.dim;
        let kind = match self.kind.as_str() {
            "explicit" => {
                let mut components = Vec::with_capacity(dim * (dim + 1) / 2);
                for i in 0..dim {
                    for j in i..dim {
                        let key = format!("g{}{}", i + 1, j + 1);
                        let src = self.components.get(&key).map(String::as_str).unwrap_or("0");
                        let e = expr::parse(src, dim).map_err(|err| {
                            Error::InvalidSpec(format!("component {key}: {err}"))
                        })?;
                        components.push(e);
                    }
                }
                for key in self.components.keys() {
                    if !valid_component_key(key, dim) {
                        return Err(Error::InvalidSpec(format!(
                            "unexpected component key `{key}` (use g<i><j> with 1 ≤ i ≤ j ≤ {dim})"
                        )));
                    }
                }
                MetricKind::Explicit { components }
            }
            "conformally_flat" => {
                let src = self.phi.as_deref().ok_or_else(|| {
                    Error::InvalidSpec("conformally_flat spec needs a `phi` expression".into())
                })?;
                let phi = expr::parse(src, dim)
                    .map_err(|err| Error::InvalidSpec(format!("phi: {err}")))?;
                MetricKind::ConformallyFlat { phi }
            }
            "builtin" => {
                let name = self.name.clone().ok_or_else(|| {
                    Error::InvalidSpec("builtin spec needs a `name` field".into())
                })?;
                MetricKind::Builtin {
                    name,
                    phi_src: self.phi.clone(),
                }
            }
            other => {
                return Err(Error::InvalidSpec(format!(
                    "unknown kind `{other}` (expected explicit | conformally_flat | builtin)"
                )))
            }
        };
        let spec = MetricSpec {
            dim,
            kind,
            periods: self.periods,
            params: self.params,
            label: label.to_string(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn valid_component_key(key: &str, dim: usize) -> bool {
    let bytes = key.as_bytes();
    if bytes.len() != 3 || bytes[0] != b'g' {
        return false;
    }
    let i = (bytes[1] as char).to_digit(10);
    let j = (bytes[2] as char).to_digit(10);
    match (i, j) {
        (Some(i), Some(j)) => {
            let (i, j) = (i as usize, j as usize);
            (1..=dim).contains(&i) && (1..=dim).contains(&j) && i <= j
        }
        _ => false,
    }
}

/// Evaluate the metric components of `spec` as a symmetric dd tensor of
/// jets about `base`. The constant-term matrix must be positive definite.
pub fn metric_jets(spec: &MetricSpec, base: &[f64], order: usize) -> Result<TensorJet> {
    if base.len() != spec.dim {
        return Err(Error::DimMismatch(base.len(), spec.dim));
    }
    if order < 2 {
        return Err(Error::InsufficientOrder {
            need: 2,
            have: order,
        });
    }
    let dim = spec.dim;
    let mut upper: Vec<Jet> = Vec::with_capacity(dim * (dim + 1) / 2);
    match &spec.kind {
        MetricKind::Explicit { components } => {
            for e in components {
                upper.push(e.eval_jet(base, order, &spec.params)?);
            }
        }
        MetricKind::ConformallyFlat { phi } => {
            let conformal = phi
                .eval_jet(base, order, &spec.params)?
                .scale(2.0)
                .exp();
            let zero = conformal.zero_like();
            for i in 0..dim {
                for j in i..dim {
                    upper.push(if i == j { conformal.clone() } else { zero.clone() });
                }
            }
        }
        MetricKind::Builtin { name, .. } => {
            return Err(Error::UnresolvedBuiltin(name.clone()));
        }
    }
    let g = TensorJet::from_fn(dim, vec![Slot::Down, Slot::Down], order, |idx| {
        let (i, j) = (idx[0].min(idx[1]), idx[0].max(idx[1]));
        upper[triangle(i, j, dim)].clone()
    });
    if !is_positive_definite(&constant_matrix(&g)) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(g.with_tags(vec![SymTag::Sym(0, 1)]))
}

/// Inverse metric as a uu tensor: g·g⁻¹ = δ up to the truncation order.
///
/// Diagonal metrics invert componentwise; the general case uses the
/// constant-term inverse plus a Neumann series on the nilpotent part.
pub fn inverse_metric(g: &TensorJet) -> Result<TensorJet> {
    if g.valence() != [Slot::Down, Slot::Down] {
        return Err(Error::InvalidContraction(
            "inverse_metric expects a dd tensor".into(),
        ));
    }
    let n = g.dim();
    let order = g.order();

    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || g.get(&[i, j]).is_zero()));
    if diagonal {
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            diag.push(g.get(&[i, i]).recip().map_err(|_| Error::SingularMatrix)?);
        }
        let zero = diag[0].zero_like();
        let inv = TensorJet::from_fn(n, vec![Slot::Up, Slot::Up], order, |idx| {
            if idx[0] == idx[1] {
                diag[idx[0]].clone()
            } else {
                zero.clone()
            }
        });
        return Ok(inv.with_tags(vec![SymTag::Sym(0, 1)]));
    }

    let g0 = constant_matrix(g);
    let inv0 = invert_const(&g0)?;

    // M = g0⁻¹·g − I has nilpotent entries; (I + M)⁻¹ by Horner.
    let zero = g.comps[0].zero_like();
    let space = zero.space().clone();
    let ncoef = zero.coeffs().len();
    let mut m = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = vec![0.0; ncoef];
            for k in 0..n {
                g.get(&[k, j]).add_scaled_into(inv0[i][k], &mut acc);
            }
            if i == j {
                acc[0] -= 1.0;
            }
            m.push(Jet::from_coeffs(space.clone(), acc));
        }
    }
    let ident = |i: usize, j: usize| {
        if i == j {
            zero.constant_like(1.0)
        } else {
            zero.clone()
        }
    };
    let mut series: Vec<Jet> = (0..n * n).map(|p| ident(p / n, p % n)).collect();
    for _ in 0..order {
        let mut next = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = vec![0.0; ncoef];
                if i == j {
                    acc[0] = 1.0;
                }
                for k in 0..n {
                    m[i * n + k].mul_acc_into(&series[k * n + j], -1.0, &mut acc);
                }
                next.push(Jet::from_coeffs(space.clone(), acc));
            }
        }
        series = next;
    }
    // g⁻¹ = (I + M)⁻¹ g0⁻¹, then symmetrize to kill roundoff skew.
    let mut inv = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = vec![0.0; ncoef];
            for k in 0..n {
                series[i * n + k].add_scaled_into(inv0[k][j], &mut acc);
            }
            inv.push(Jet::from_coeffs(space.clone(), acc));
        }
    }
    let out = TensorJet::from_fn(n, vec![Slot::Up, Slot::Up], order, |idx| {
        let a = &inv[idx[0] * n + idx[1]];
        let b = &inv[idx[1] * n + idx[0]];
        a.try_add(b).expect("same space").scale(0.5)
    });
    Ok(out.with_tags(vec![SymTag::Sym(0, 1)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets;

    fn no_params() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    fn flat_spec(dim: usize) -> MetricSpec {
        let mut comps = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                comps.push(expr::parse(if i == j { "1" } else { "0" }, dim).unwrap());
            }
        }
        MetricSpec::explicit(dim, comps, no_params(), "flat").unwrap()
    }

    fn max_coeff_dev(t: &TensorJet, f: impl Fn(&[usize]) -> f64) -> f64 {
        let mut worst = 0.0f64;
        let rank = t.rank();
        let mut idx = vec![0usize; rank];
        for p in 0..t.components().len() {
            decode(p, t.dim(), &mut idx);
            let expect = f(&idx);
            let jet = &t.components()[p];
            worst = worst.max((jet.value() - expect).abs());
            for c in &jet.coeffs()[1..] {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    #[test]
    fn flat_metric_is_identity() {
        let g = metric_jets(&flat_spec(3), &[0.1, -0.2, 0.4], 2).unwrap();
        let dev = max_coeff_dev(&g, |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 });
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn zero_conformal_factor_is_identity() {
        let phi = expr::parse("0*x1", 2).unwrap();
        let spec = MetricSpec::conformally_flat(2, phi, no_params(), "trivial");
        let g = metric_jets(&spec, &[0.3, 0.7], 3).unwrap();
        let dev = max_coeff_dev(&g, |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 });
        assert!(dev < 1e-15);
    }

    #[test]
    fn non_positive_definite_rejected() {
        let comps = vec![
            expr::parse("-1", 2).unwrap(),
            expr::parse("0", 2).unwrap(),
            expr::parse("1", 2).unwrap(),
        ];
        let spec = MetricSpec::explicit(2, comps, no_params(), "bad").unwrap();
        assert!(matches!(
            metric_jets(&spec, &[0.0, 0.0], 2),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn builtin_kind_needs_resolution() {
        let spec = MetricSpec {
            dim: 4,
            kind: MetricKind::Builtin {
                name: "round_sphere".into(),
                phi_src: None,
            },
            periods: None,
            params: no_params(),
            label: "b".into(),
        };
        assert!(matches!(
            metric_jets(&spec, &[0.0; 4], 2),
            Err(Error::UnresolvedBuiltin(_))
        ));
    }

    #[test]
    fn inverse_of_identity_and_diag() {
        let g = metric_jets(&flat_spec(4), &[0.0; 4], 2).unwrap();
        let inv = inverse_metric(&g).unwrap();
        let dev = max_coeff_dev(&inv, |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 });
        assert_eq!(dev, 0.0);

        let comps = vec![
            expr::parse("2 + x1^2", 2).unwrap(),
            expr::parse("0", 2).unwrap(),
            expr::parse("exp(x2)", 2).unwrap(),
        ];
        let spec = MetricSpec::explicit(2, comps, no_params(), "diag").unwrap();
        let g = metric_jets(&spec, &[0.2, -0.1], 4).unwrap();
        let inv = inverse_metric(&g).unwrap();
        let prod = flip_slot(&g, 1, &inv).unwrap(); // g_ik g^kj = δ_i^j
        let dev = max_coeff_dev(&prod, |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 });
        assert!(dev < 1e-13, "dev {dev}");
    }

    #[test]
    fn inverse_round_trip_dense() {
        // random-ish SPD-perturbed dense metric
        let dim = 3;
        let entries = [
            ("1 + 0.2*sin(x1 + x2)", 0, 0),
            ("0.1*cos(x2)*x3", 0, 1),
            ("0.05*x1*x2", 0, 2),
            ("1 + 0.1*x3^2", 1, 1),
            ("0.08*sin(x3)", 1, 2),
            ("1 + 0.15*cos(x1)", 2, 2),
        ];
        let comps = entries
            .iter()
            .map(|(s, _, _)| expr::parse(s, dim).unwrap())
            .collect();
        let spec = MetricSpec::explicit(dim, comps, no_params(), "dense").unwrap();
        let g = metric_jets(&spec, &[0.3, -0.4, 0.2], 4).unwrap();
        let inv = inverse_metric(&g).unwrap();
        let prod = flip_slot(&g, 1, &inv).unwrap();
        let dev = max_coeff_dev(&prod, |idx| if idx[0] == idx[1] { 1.0 } else { 0.0 });
        assert!(dev < 1e-12, "dev {dev}");
    }

    #[test]
    fn trace_of_delta_is_dim() {
        let n = 4;
        let one = Jet::constant(1.0, n, 2);
        let zero = one.zero_like();
        let delta = TensorJet::from_fn(n, vec![Slot::Up, Slot::Down], 2, |idx| {
            if idx[0] == idx[1] {
                one.clone()
            } else {
                zero.clone()
            }
        });
        let tr = contract(&delta, 0, 1, None).unwrap();
        assert_eq!(tr.rank(), 0);
        assert_eq!(tr.get(&[]).value(), n as f64);
    }

    #[test]
    fn metric_traced_against_inverse_is_dim() {
        let g = metric_jets(&flat_spec(4), &[0.0; 4], 2).unwrap();
        let inv = inverse_metric(&g).unwrap();
        let tr = contract(&g, 0, 1, Some(&inv)).unwrap();
        assert!((tr.get(&[]).value() - 4.0).abs() < 1e-14);
        // same-position contraction without a pairing tensor is rejected
        assert!(contract(&g, 0, 1, None).is_err());
    }

    #[test]
    fn scalar_covariant_derivative_is_gradient() {
        let n = 2;
        let order = 3;
        let e = expr::parse("sin(x1)*x2", n).unwrap();
        let f = e.eval_jet(&[0.4, 0.8], order, &no_params()).unwrap();
        let zero3 = Jet::constant(0.0, n, order - 1);
        let gamma = TensorJet::from_fn(n, vec![Slot::Up, Slot::Down, Slot::Down], order - 1, |_| {
            zero3.clone()
        });
        let grad = covariant_derivative(&TensorJet::scalar(f.clone()), &gamma).unwrap();
        for k in 0..n {
            let expect = f.deriv(k).unwrap();
            assert_eq!(grad.get(&[k]).coeffs(), expect.coeffs());
        }
    }

    #[test]
    fn toml_round_trip_explicit() {
        let text = r#"
dim = 2
kind = "explicit"

[components]
g11 = "1 + a*x1^2"
g22 = "1"

[params]
a = 0.5
"#;
        let spec = MetricSpec::from_toml_str(text, "inline").unwrap();
        assert_eq!(spec.dim, 2);
        let g = metric_jets(&spec, &[0.3, 0.0], 2).unwrap();
        assert!((g.get(&[0, 0]).value() - (1.0 + 0.5 * 0.09)).abs() < 1e-15);
        assert_eq!(g.get(&[0, 1]).value(), 0.0);
    }

    #[test]
    fn toml_errors() {
        assert!(MetricSpec::from_toml_str("dim = 2", "x").is_err());
        let bad_kind = "dim = 2\nkind = \"weird\"\n";
        assert!(matches!(
            MetricSpec::from_toml_str(bad_kind, "x"),
            Err(Error::InvalidSpec(_))
        ));
        let bad_key = "dim = 2\nkind = \"explicit\"\n[components]\ng13 = \"1\"\n";
        assert!(MetricSpec::from_toml_str(bad_key, "x").is_err());
        let unbound = "dim = 2\nkind = \"conformally_flat\"\nphi = \"a*sin(x1)\"\n";
        assert!(matches!(
            MetricSpec::from_toml_str(unbound, "x"),
            Err(Error::UnboundParam(_))
        ));
    }

    #[test]
    fn contract_is_linear_and_commutes_with_truncation() {
        let comps = vec![
            expr::parse("1 + 0.3*sin(x1)*x2", 2).unwrap(),
            expr::parse("0.1*cos(x2)", 2).unwrap(),
            expr::parse("1 + 0.2*x1^2", 2).unwrap(),
        ];
        let spec = MetricSpec::explicit(2, comps, no_params(), "t").unwrap();
        let g = metric_jets(&spec, &[0.4, -0.3], 4).unwrap();
        let inv = inverse_metric(&g).unwrap();
        // linearity: tr(aX + Y) = a·tr X + tr Y against the inverse metric
        let x = g.scale(1.7);
        let sum = x.add(&inv_pairing_dummy(&g)).unwrap();
        let lhs = contract(&sum, 0, 1, Some(&inv)).unwrap();
        let rhs = contract(&x, 0, 1, Some(&inv))
            .unwrap()
            .add(&contract(&inv_pairing_dummy(&g), 0, 1, Some(&inv)).unwrap())
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs_coeff() < 1e-13);
        // truncation commutes: truncate(contract) = contract(truncate)
        let a = contract(&g, 0, 1, Some(&inv)).unwrap().truncated(2).unwrap();
        let b = contract(&g.truncated(2).unwrap(), 0, 1, Some(&inv.truncated(2).unwrap())).unwrap();
        assert!(a.sub(&b).unwrap().max_abs_coeff() < 1e-15);
        // slot errors
        assert!(matches!(
            contract(&g, 0, 5, Some(&inv)),
            Err(Error::SlotOutOfRange { .. })
        ));
        assert!(contract(&g, 1, 1, Some(&inv)).is_err());
    }

    fn inv_pairing_dummy(g: &TensorJet) -> TensorJet {
        g.scale(0.6)
    }

    #[test]
    fn jet_space_sizes() {
        assert_eq!(jets::space(6, 6).len(), 924);
        assert_eq!(jets::space(4, 4).len(), 70);
    }
}
