//! Truncated multivariate Taylor-series arithmetic ("jets").
//!
//! A [`Jet`] stores the coefficients of a total-degree-truncated Taylor
//! expansion Σ c_α (x − x₀)^α of a scalar quantity about a base point, in
//! graded-lexicographic multi-index order. Arithmetic and elementary
//! functions act on the coefficient vectors, so mixed partial derivatives
//! of arbitrary composed expressions come out exact to roundoff.
//!
//! All coefficient bookkeeping for a given (dim, order) pair lives in a
//! shared [`JetSpace`]: the multi-index list, the Cauchy-product pair
//! table, and per-axis differentiation tables. Spaces are cached globally;
//! jets hold an `Arc` to theirs, so operations never rebuild tables.
//!
//! Jets are immutable values: every operation returns a new jet, and jets
//! are freely shareable across threads.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use once_cell::sync::Lazy;

use crate::error::{Error, Result};

/// Maximum chart dimension supported by the dense tables.
pub const MAX_DIM: usize = 8;
/// Maximum truncation order supported by the dense tables.
pub const MAX_ORDER: usize = 12;

/// Jets with a constant term smaller than this cannot be divided by.
pub const DIV_EPS: f64 = 1e-300;

/// A multi-index padded to `MAX_DIM` entries; only the first `dim` are used.
pub(crate) type MIdx = [u8; MAX_DIM];

/// Truncated-product lookup: for each target coefficient `k`,
/// `pairs[start[k]..start[k+1]]` lists the (i, j) source positions with
/// index(i) + index(j) = index(k).
struct MulTable {
    start: Vec<u32>,
    pairs: Vec<(u32, u32)>,
}

/// Shared coefficient layout and operation tables for one (dim, order).
pub struct JetSpace {
    dim: usize,
    order: usize,
    /// All multi-indices with |α| ≤ order, graded-lex (degree-major).
    indices: Vec<MIdx>,
    pos: HashMap<MIdx, u32>,
    mul: MulTable,
    /// Per axis: for each position in the order−1 layout, the source
    /// position in this layout and the multiplying factor (αᵢ + 1).
    deriv: Vec<Vec<(u32, f64)>>,
    /// The space of the same dimension and one order lower.
    lower: Option<Arc<JetSpace>>,
}

fn enumerate_degree(dim: usize, degree: u8, out: &mut Vec<MIdx>) {
    fn rec(dim: usize, slot: usize, remaining: u8, cur: &mut MIdx, out: &mut Vec<MIdx>) {
        if slot == dim - 1 {
            cur[slot] = remaining;
            out.push(*cur);
            cur[slot] = 0;
            return;
        }
        for v in (0..=remaining).rev() {
            cur[slot] = v;
            rec(dim, slot + 1, remaining - v, cur, out);
        }
        cur[slot] = 0;
    }
    let mut cur = [0u8; MAX_DIM];
    rec(dim, 0, degree, &mut cur, out);
}

impl JetSpace {
    fn build(dim: usize, order: usize, lower: Option<Arc<JetSpace>>) -> JetSpace {
        assert!(
            (1..=MAX_DIM).contains(&dim) && order <= MAX_ORDER,
            "jet space out of supported range: dim {dim} (max {MAX_DIM}), order {order} (max {MAX_ORDER})"
        );
        let mut indices = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for d in 0..=order {
            degree_start.push(indices.len());
            enumerate_degree(dim, d as u8, &mut indices);
        }
        degree_start.push(indices.len());

        let mut pos = HashMap::with_capacity(indices.len());
        for (p, idx) in indices.iter().enumerate() {
            pos.insert(*idx, p as u32);
        }

        // Cauchy-product table, grouped by target coefficient.
        let mut start = Vec::with_capacity(indices.len() + 1);
        let mut pairs = Vec::new();
        for gamma in &indices {
            start.push(pairs.len() as u32);
            let mut alpha = [0u8; MAX_DIM];
            loop {
                let mut beta = [0u8; MAX_DIM];
                for k in 0..dim {
                    beta[k] = gamma[k] - alpha[k];
                }
                pairs.push((pos[&alpha], pos[&beta]));
                // odometer over alpha ≤ gamma componentwise
                let mut k = 0;
                loop {
                    if k == dim {
                        break;
                    }
                    if alpha[k] < gamma[k] {
                        alpha[k] += 1;
                        break;
                    }
                    alpha[k] = 0;
                    k += 1;
                }
                if k == dim {
                    break;
                }
            }
        }
        start.push(pairs.len() as u32);

        // Differentiation tables map into the order−1 layout, which by the
        // graded ordering is a prefix of this one.
        let mut deriv = Vec::with_capacity(dim);
        let n_lower = if order == 0 {
            0
        } else {
            degree_start[order]
        };
        for axis in 0..dim {
            let mut table = Vec::with_capacity(n_lower);
            for beta in &indices[..n_lower] {
                let mut src = *beta;
                src[axis] += 1;
                table.push((pos[&src], (beta[axis] + 1) as f64));
            }
            deriv.push(table);
        }

        JetSpace {
            dim,
            order,
            indices,
            pos,
            mul: MulTable { start, pairs },
            deriv,
            lower,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored coefficients, C(dim + order, dim).
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-indices in storage order (entries beyond `dim` are zero).
    pub(crate) fn indices(&self) -> &[MIdx] {
        &self.indices
    }

    pub(crate) fn position_of(&self, idx: &MIdx) -> Option<u32> {
        self.pos.get(idx).copied()
    }

    fn position(&self, alpha: &[usize]) -> Option<u32> {
        if alpha.len() != self.dim {
            return None;
        }
        let mut key = [0u8; MAX_DIM];
        for (k, &a) in alpha.iter().enumerate() {
            if a > MAX_ORDER {
                return None;
            }
            key[k] = a as u8;
        }
        self.pos.get(&key).copied()
    }
}

static REGISTRY: Lazy<RwLock<HashMap<(usize, usize), Arc<JetSpace>>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// Fetch (building and caching on first use) the space for (dim, order).
pub fn space(dim: usize, order: usize) -> Arc<JetSpace> {
    if let Some(sp) = REGISTRY.read().unwrap().get(&(dim, order)) {
        return Arc::clone(sp);
    }
    // Build the whole chain down to order 0 so `lower` links are available.
    let mut registry = REGISTRY.write().unwrap();
    let mut lower: Option<Arc<JetSpace>> = None;
    for o in 0..=order {
        let sp = match registry.get(&(dim, o)) {
            Some(sp) => Arc::clone(sp),
            None => {
                let built = Arc::new(JetSpace::build(dim, o, lower.take()));
                registry.insert((dim, o), Arc::clone(&built));
                built
            }
        };
        lower = Some(sp);
    }
    lower.unwrap()
}

/// A truncated multivariate Taylor expansion at a point.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
    /// True when every stored coefficient is exactly zero; lets the
    /// contraction-heavy tensor code skip whole products.
    zero: bool,
    /// True when only the constant term may be nonzero; multiplication by
    /// such a jet degenerates to scaling.
    constant: bool,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.space.dim)
            .field("order", &self.space.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

fn finish(space: Arc<JetSpace>, coeffs: Vec<f64>) -> Jet {
    let constant = coeffs[1..].iter().all(|&c| c == 0.0);
    let zero = constant && coeffs[0] == 0.0;
    Jet {
        space,
        coeffs,
        zero,
        constant,
    }
}

impl Jet {
    /// The jet of the constant function `c`.
    pub fn constant(c: f64, dim: usize, order: usize) -> Jet {
        Jet::constant_in(&space(dim, order), c)
    }

    pub(crate) fn constant_in(sp: &Arc<JetSpace>, c: f64) -> Jet {
        let mut coeffs = vec![0.0; sp.len()];
        coeffs[0] = c;
        Jet {
            space: Arc::clone(sp),
            coeffs,
            zero: c == 0.0,
            constant: true,
        }
    }

    /// A zero jet in the same space as `self`.
    pub fn zero_like(&self) -> Jet {
        Jet {
            space: Arc::clone(&self.space),
            coeffs: vec![0.0; self.space.len()],
            zero: true,
            constant: true,
        }
    }

    /// A constant jet in the same space as `self`.
    pub fn constant_like(&self, c: f64) -> Jet {
        Jet::constant_in(&self.space, c)
    }

    /// The jet of the coordinate function xᵢ with the given base value.
    pub fn variable(i: usize, value: f64, dim: usize, order: usize) -> Result<Jet> {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, dim });
        }
        if order == 0 {
            return Err(Error::InsufficientOrder { need: 1, have: 0 });
        }
        let sp = space(dim, order);
        let mut coeffs = vec![0.0; sp.len()];
        coeffs[0] = value;
        // degree-1 block starts at position 1; axis i sits at offset i
        // because degree-1 indices are enumerated e_0, e_1, …, e_{dim−1}.
        coeffs[1 + i] = 1.0;
        Ok(finish(sp, coeffs))
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub(crate) fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    /// Value of the modeled function at the base point.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Raw coefficient access in storage order.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub(crate) fn from_coeffs(sp: Arc<JetSpace>, coeffs: Vec<f64>) -> Jet {
        assert_eq!(coeffs.len(), sp.len());
        finish(sp, coeffs)
    }

    /// True when every stored coefficient is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Taylor coefficient c_α; zero for |α| beyond the truncation order.
    pub fn coeff(&self, alpha: &[usize]) -> f64 {
        assert_eq!(alpha.len(), self.dim(), "multi-index length != dim");
        match self.space.position(alpha) {
            Some(p) => self.coeffs[p as usize],
            None => 0.0,
        }
    }

    /// Mixed partial derivative ∂^α at the base point, i.e. α!·c_α.
    pub fn partial(&self, alpha: &[usize]) -> Result<f64> {
        if alpha.len() != self.dim() {
            return Err(Error::DimMismatch(alpha.len(), self.dim()));
        }
        let total: usize = alpha.iter().sum();
        if total > self.order() {
            return Err(Error::InsufficientOrder {
                need: total,
                have: self.order(),
            });
        }
        let p = self
            .space
            .position(alpha)
            .expect("index within order must be present");
        let mut fact = 1.0;
        for &a in alpha {
            for k in 2..=a {
                fact *= k as f64;
            }
        }
        Ok(fact * self.coeffs[p as usize])
    }

    /// Jet of the partial derivative ∂ᵢ, one order lower.
    pub fn deriv(&self, axis: usize) -> Result<Jet> {
        if axis >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: axis,
                dim: self.dim(),
            });
        }
        if self.order() == 0 {
            return Err(Error::InsufficientOrder { need: 1, have: 0 });
        }
        let lower = self.space.lower.as_ref().expect("order ≥ 1 has lower space");
        let table = &self.space.deriv[axis];
        let mut coeffs = Vec::with_capacity(lower.len());
        for &(src, factor) in table {
            coeffs.push(factor * self.coeffs[src as usize]);
        }
        Ok(finish(Arc::clone(lower), coeffs))
    }

    /// Discard all coefficients of total degree above `order`.
    pub fn truncated(&self, order: usize) -> Result<Jet> {
        if order > self.order() {
            return Err(Error::InsufficientOrder {
                need: order,
                have: self.order(),
            });
        }
        if order == self.order() {
            return Ok(self.clone());
        }
        let mut sp = Arc::clone(&self.space);
        while sp.order() > order {
            let lower = Arc::clone(sp.lower.as_ref().expect("chain reaches order 0"));
            sp = lower;
        }
        let coeffs = self.coeffs[..sp.len()].to_vec();
        Ok(finish(sp, coeffs))
    }

    fn check_same_space(&self, other: &Jet) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch(self.dim(), other.dim()));
        }
        if self.order() != other.order() {
            return Err(Error::OrderMismatch(self.order(), other.order()));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Jet) -> Result<Jet> {
        self.check_same_space(other)?;
        if self.zero {
            return Ok(other.clone());
        }
        if other.zero {
            return Ok(self.clone());
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(finish(Arc::clone(&self.space), coeffs))
    }

    pub fn try_sub(&self, other: &Jet) -> Result<Jet> {
        self.check_same_space(other)?;
        if other.zero {
            return Ok(self.clone());
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(finish(Arc::clone(&self.space), coeffs))
    }

    /// Truncated Cauchy product: c_γ = Σ_{α+β=γ} a_α b_β.
    pub fn try_mul(&self, other: &Jet) -> Result<Jet> {
        self.check_same_space(other)?;
        if self.zero || other.zero {
            return Ok(self.zero_like());
        }
        if self.constant {
            return Ok(other.scale(self.coeffs[0]));
        }
        if other.constant {
            return Ok(self.scale(other.coeffs[0]));
        }
        let table = &self.space.mul;
        let a = &self.coeffs[..];
        let b = &other.coeffs[..];
        let mut coeffs = Vec::with_capacity(self.space.len());
        for k in 0..self.space.len() {
            let lo = table.start[k] as usize;
            let hi = table.start[k + 1] as usize;
            let mut acc = 0.0;
            for &(i, j) in &table.pairs[lo..hi] {
                acc += a[i as usize] * b[j as usize];
            }
            coeffs.push(acc);
        }
        Ok(finish(Arc::clone(&self.space), coeffs))
    }

    pub fn try_div(&self, other: &Jet) -> Result<Jet> {
        self.try_div_with_threshold(other, DIV_EPS)
    }

    /// Division with a caller-chosen singularity threshold on the
    /// divisor's constant term.
    pub fn try_div_with_threshold(&self, other: &Jet, threshold: f64) -> Result<Jet> {
        self.check_same_space(other)?;
        if other.value().abs() < threshold {
            return Err(Error::DivisionByZero);
        }
        self.try_mul(&other.recip()?)
    }

    /// Fused multiply-accumulate: acc[k] += factor·(self·other)[k]. The
    /// accumulator must have this jet's coefficient length; used by the
    /// tensor contraction loops to avoid per-term allocation.
    pub(crate) fn mul_acc_into(&self, other: &Jet, factor: f64, acc: &mut [f64]) {
        debug_assert_eq!(self.dim(), other.dim());
        debug_assert_eq!(self.order(), other.order());
        debug_assert_eq!(acc.len(), self.space.len());
        if self.zero || other.zero {
            return;
        }
        if self.constant {
            other.add_scaled_into(factor * self.coeffs[0], acc);
            return;
        }
        if other.constant {
            self.add_scaled_into(factor * other.coeffs[0], acc);
            return;
        }
        let table = &self.space.mul;
        let a = &self.coeffs[..];
        let b = &other.coeffs[..];
        for (k, slot) in acc.iter_mut().enumerate() {
            let lo = table.start[k] as usize;
            let hi = table.start[k + 1] as usize;
            let mut s = 0.0;
            for &(i, j) in &table.pairs[lo..hi] {
                s += a[i as usize] * b[j as usize];
            }
            *slot += factor * s;
        }
    }

    /// acc[k] += factor·(∂_axis self)[k]; the accumulator lives one order
    /// below this jet.
    pub(crate) fn deriv_acc_into(&self, axis: usize, factor: f64, acc: &mut [f64]) {
        debug_assert!(axis < self.dim() && self.order() >= 1);
        if self.zero {
            return;
        }
        let table = &self.space.deriv[axis];
        debug_assert_eq!(acc.len(), table.len());
        for (slot, &(src, f)) in acc.iter_mut().zip(table) {
            *slot += factor * f * self.coeffs[src as usize];
        }
    }

    /// acc[k] += factor·self[k].
    pub(crate) fn add_scaled_into(&self, factor: f64, acc: &mut [f64]) {
        debug_assert_eq!(acc.len(), self.coeffs.len());
        if self.zero {
            return;
        }
        for (slot, c) in acc.iter_mut().zip(&self.coeffs) {
            *slot += factor * c;
        }
    }

    /// Multiply every coefficient by a scalar.
    pub fn scale(&self, s: f64) -> Jet {
        if self.zero {
            return self.clone();
        }
        let coeffs = self.coeffs.iter().map(|c| c * s).collect();
        finish(Arc::clone(&self.space), coeffs)
    }

    /// Add a scalar to the constant term.
    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] += s;
        finish(Arc::clone(&self.space), coeffs)
    }

    /// `self` with the constant term zeroed; the nilpotent part used for
    /// series composition.
    fn nilpotent_part(&self) -> Jet {
        let mut coeffs = self.coeffs.clone();
        coeffs[0] = 0.0;
        finish(Arc::clone(&self.space), coeffs)
    }

    /// Horner evaluation of Σ t_k z^k with z the nilpotent part of `self`.
    fn compose_series(&self, t: &[f64]) -> Jet {
        let order = self.order();
        debug_assert_eq!(t.len(), order + 1);
        if order == 0 {
            return self.constant_like(t[0]);
        }
        let z = self.nilpotent_part();
        let mut res = self.constant_like(t[order]);
        for k in (0..order).rev() {
            res = res.try_mul(&z).expect("same space").add_scalar(t[k]);
        }
        res
    }

    /// 1 / self; requires a nonvanishing constant term.
    pub fn recip(&self) -> Result<Jet> {
        let c = self.value();
        if c.abs() < DIV_EPS {
            return Err(Error::DivisionByZero);
        }
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut cur = 1.0 / c;
        for _ in 0..=self.order() {
            t.push(cur);
            cur *= -1.0 / c;
        }
        Ok(self.compose_series(&t))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut cur = e;
        for k in 0..=self.order() {
            if k > 0 {
                cur /= k as f64;
            }
            t.push(cur);
        }
        self.compose_series(&t)
    }

    pub fn ln(&self) -> Result<Jet> {
        let c = self.value();
        if c <= 0.0 {
            return Err(Error::Domain(format!(
                "log of non-positive constant term {c}"
            )));
        }
        let mut t = Vec::with_capacity(self.order() + 1);
        t.push(c.ln());
        let mut pw = 1.0;
        for k in 1..=self.order() {
            pw *= c;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t.push(sign / (k as f64 * pw));
        }
        Ok(self.compose_series(&t))
    }

    pub fn sqrt(&self) -> Result<Jet> {
        let c = self.value();
        if c <= 0.0 {
            return Err(Error::Domain(format!(
                "sqrt of non-positive constant term {c}"
            )));
        }
        let root = c.sqrt();
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0; // C(1/2, k)
        let mut pw = root; // c^{1/2 − k}
        for k in 0..=self.order() {
            if k > 0 {
                binom *= (0.5 - (k - 1) as f64) / k as f64;
                pw /= c;
            }
            t.push(binom * pw);
        }
        Ok(self.compose_series(&t))
    }

    pub fn sin(&self) -> Jet {
        self.trig(true)
    }

    pub fn cos(&self) -> Jet {
        self.trig(false)
    }

    fn trig(&self, sine: bool) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = if sine {
            [s, c, -s, -c]
        } else {
            [c, -s, -c, s]
        };
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut fact = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                fact *= k as f64;
            }
            t.push(cycle[k % 4] / fact);
        }
        self.compose_series(&t)
    }

    /// Integer power; negative exponents require an invertible constant term.
    pub fn powi(&self, k: i32) -> Result<Jet> {
        if k < 0 {
            return self.powi(-k)?.recip();
        }
        let mut res = self.constant_like(1.0);
        let mut base = self.clone();
        let mut e = k as u32;
        while e > 0 {
            if e & 1 == 1 {
                res = res.try_mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.try_mul(&base)?;
            }
        }
        Ok(res)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl std::ops::$trait<&Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                self.$checked(rhs).expect("jet dim/order mismatch")
            }
        }
        impl std::ops::$trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl std::ops::$trait<&Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
        impl std::ops::$trait<Jet> for &Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, try_add);
forward_binop!(Sub, sub, try_sub);
forward_binop!(Mul, mul, try_mul);
forward_binop!(Div, div, try_div);

impl std::ops::Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl std::ops::Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl std::ops::Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl std::ops::Mul<&Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: &Jet) -> Jet {
        j.scale(self)
    }
}
