//! The curvature stack at a point: Christoffel symbols, Riemann, Ricci,
//! scalar curvature, Schouten, Weyl, Bach, and the Laplacian.
//!
//! Conventions, fixed once and validated by the verification suites:
//!
//! * R^i_{jkl} = ∂_k Γ^i_{lj} − ∂_l Γ^i_{kj} + Γ^i_{km}Γ^m_{lj} − Γ^i_{lm}Γ^m_{kj},
//!   lowered on the first slot, so the unit round sphere has R = n(n−1) > 0
//!   and a conformally flat metric satisfies
//!   Rm_{ijkl} = P_{ik}g_{jl} − P_{il}g_{jk} − P_{jk}g_{il} + P_{jl}g_{ik}.
//! * Δ = −∇^i∇_i is the positive (geometer's) Laplacian.

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::tensor::{
    contract, covariant_derivative, flip_slot, inverse_metric, metric_jets, MetricSpec, Slot,
    SymTag, TensorJet,
};

/// Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij}); valence udd,
/// symmetric in the two lower slots, one order below the metric.
pub fn christoffel(g: &TensorJet, g_inv: &TensorJet) -> Result<TensorJet> {
    if g.order() == 0 {
        return Err(Error::InsufficientOrder { need: 1, have: 0 });
    }
    let n = g.dim();
    let out_order = g.order() - 1;
    let ginv = crate::tensor::at_order(g_inv, out_order.min(g_inv.order()))?;
    if ginv.order() < out_order {
        return Err(Error::InsufficientOrder {
            need: out_order,
            have: ginv.order(),
        });
    }

    // D_{ijl} = ∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij}, symmetric in (i, j);
    // only the i ≤ j entries are read below
    let lower = crate::jets::space(n, out_order);
    let nlow = lower.len();
    let zero_low = Jet::constant_in(&lower, 0.0);
    let mut d = vec![zero_low.clone(); n * n * n];
    for i in 0..n {
        for j in i..n {
            for l in 0..n {
                let mut acc = vec![0.0; nlow];
                g.get(&[j, l]).deriv_acc_into(i, 1.0, &mut acc);
                g.get(&[i, l]).deriv_acc_into(j, 1.0, &mut acc);
                g.get(&[i, j]).deriv_acc_into(l, -1.0, &mut acc);
                d[(i * n + j) * n + l] = Jet::from_coeffs(lower.clone(), acc);
            }
        }
    }
    let zero = zero_low;
    let space = zero.space().clone();
    let ncoef = zero.coeffs().len();
    // symmetric in (i, j): fill the upper triangle and mirror
    let mut comps = vec![zero; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let mut acc = vec![0.0; ncoef];
                for l in 0..n {
                    ginv.get(&[k, l]).mul_acc_into(&d[(i * n + j) * n + l], 0.5, &mut acc);
                }
                let jet = Jet::from_coeffs(space.clone(), acc);
                if i != j {
                    comps[(k * n + j) * n + i] = jet.clone();
                }
                comps[(k * n + i) * n + j] = jet;
            }
        }
    }
    let gamma = TensorJet::from_components(
        n,
        vec![Slot::Up, Slot::Down, Slot::Down],
        out_order,
        comps,
    );
    Ok(gamma.with_tags(vec![SymTag::Sym(1, 2)]))
}

/// Lowered Riemann tensor Rm_{ijkl}, two orders below the metric.
pub fn riemann(gamma: &TensorJet, g: &TensorJet) -> Result<TensorJet> {
    if gamma.order() == 0 {
        return Err(Error::InsufficientOrder { need: 1, have: 0 });
    }
    let n = gamma.dim();
    let out_order = gamma.order() - 1;
    let gm = crate::tensor::at_order(gamma, out_order)?;
    let gl = crate::tensor::at_order(g, out_order)?;
    let zero_jet = gm.get(&[0, 0, 0]).zero_like();

    // upper Riemann R^i_{jkl}, antisymmetric in (k, l)
    let space = zero_jet.space().clone();
    let ncoef = zero_jet.coeffs().len();
    let mut upper = vec![zero_jet.clone(); n * n * n * n];
    let flat4 = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in (k + 1)..n {
                    let mut acc = vec![0.0; ncoef];
                    gamma.get(&[i, l, j]).deriv_acc_into(k, 1.0, &mut acc);
                    gamma.get(&[i, k, j]).deriv_acc_into(l, -1.0, &mut acc);
                    for m in 0..n {
                        gm.get(&[i, k, m]).mul_acc_into(gm.get(&[m, l, j]), 1.0, &mut acc);
                        gm.get(&[i, l, m]).mul_acc_into(gm.get(&[m, k, j]), -1.0, &mut acc);
                    }
                    let jet = Jet::from_coeffs(space.clone(), acc);
                    upper[flat4(i, j, l, k)] = -&jet;
                    upper[flat4(i, j, k, l)] = jet;
                }
            }
        }
    }

    let mut comps = Vec::with_capacity(n * n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = vec![0.0; ncoef];
                    for m in 0..n {
                        gl.get(&[i, m]).mul_acc_into(&upper[flat4(m, j, k, l)], 1.0, &mut acc);
                    }
                    comps.push(Jet::from_coeffs(space.clone(), acc));
                }
            }
        }
    }
    let rm = TensorJet::from_components(
        n,
        vec![Slot::Down, Slot::Down, Slot::Down, Slot::Down],
        out_order,
        comps,
    );
    Ok(rm.with_tags(vec![SymTag::Antisym(0, 1), SymTag::Antisym(2, 3)]))
}

/// Ricci tensor (the (1,3)-trace of Riemann) and scalar curvature.
pub fn ricci_scalar(rm: &TensorJet, g_inv: &TensorJet) -> Result<(TensorJet, Jet)> {
    let ric = contract(rm, 0, 2, Some(g_inv))?;
    let r = contract(&ric, 0, 1, Some(g_inv))?;
    Ok((ric.with_tags(vec![SymTag::Sym(0, 1)]), r.get(&[]).clone()))
}

/// Ricci directly from the connection coefficients, bypassing the rank-4
/// Riemann tensor; used by the lattice-sampling path and cross-checked
/// against [`ricci_scalar`] in the suites.
pub fn ricci_from_christoffel(gamma: &TensorJet) -> Result<TensorJet> {
    if gamma.order() == 0 {
        return Err(Error::InsufficientOrder { need: 1, have: 0 });
    }
    let n = gamma.dim();
    let out_order = gamma.order() - 1;
    let gm = crate::tensor::at_order(gamma, out_order)?;
    let zero = gm.get(&[0, 0, 0]).zero_like();
    // c_m = Γ^i_{im}
    let mut c = Vec::with_capacity(n);
    let mut c_low = Vec::with_capacity(n);
    for m in 0..n {
        let mut acc = gamma.get(&[0, 0, m]).clone();
        for i in 1..n {
            acc = acc.try_add(gamma.get(&[i, i, m]))?;
        }
        c_low.push(acc.truncated(out_order)?);
        c.push(acc);
    }
    let space = zero.space().clone();
    let ncoef = zero.coeffs().len();
    let mut comps = Vec::with_capacity(n * n);
    for j in 0..n {
        for l in 0..n {
            // ∂_i Γ^i_{lj} − ∂_l Γ^i_{ij} + Γ^i_{im}Γ^m_{lj} − Γ^i_{lm}Γ^m_{ij}
            let mut acc = vec![0.0; ncoef];
            for i in 0..n {
                gamma.get(&[i, l, j]).deriv_acc_into(i, 1.0, &mut acc);
            }
            c[j].deriv_acc_into(l, -1.0, &mut acc);
            for m in 0..n {
                c_low[m].mul_acc_into(gm.get(&[m, l, j]), 1.0, &mut acc);
                for i in 0..n {
                    gm.get(&[i, l, m]).mul_acc_into(gm.get(&[m, i, j]), -1.0, &mut acc);
                }
            }
            comps.push(Jet::from_coeffs(space.clone(), acc));
        }
    }
    Ok(TensorJet::from_components(
        n,
        vec![Slot::Down, Slot::Down],
        out_order,
        comps,
    ))
}

/// Schouten tensor P = (Ric − J g)/(n − 2) with trace J = R/(2(n−1)).
pub fn schouten(ric: &TensorJet, r: &Jet, g: &TensorJet, n: usize) -> Result<(TensorJet, Jet)> {
    if n < 3 {
        return Err(Error::UnsupportedDim {
            n,
            reason: "Schouten tensor needs n ≥ 3",
        });
    }
    let j = r.scale(1.0 / (2.0 * (n as f64 - 1.0)));
    let order = ric.order();
    let gt = crate::tensor::at_order(g, order.min(g.order()))?;
    let zero = j.zero_like();
    let p = TensorJet::from_fn(n, vec![Slot::Down, Slot::Down], order, |idx| {
        let gc = gt.get(idx);
        let jg = if gc.is_zero() || j.is_zero() {
            zero.clone()
        } else {
            j.try_mul(gc).expect("same space")
        };
        ric.get(idx)
            .try_sub(&jg)
            .expect("same space")
            .scale(1.0 / (n as f64 - 2.0))
    });
    Ok((p.with_tags(vec![SymTag::Sym(0, 1)]), j))
}

/// Weyl tensor: Riemann minus its Schouten/metric part. Vanishes exactly
/// when the metric is conformally flat (n ≥ 4).
pub fn weyl(rm: &TensorJet, p: &TensorJet, g: &TensorJet) -> Result<TensorJet> {
    let n = rm.dim();
    let order = rm.order().min(p.order());
    let rmt = crate::tensor::at_order(rm, order)?;
    let pt = crate::tensor::at_order(p, order)?;
    let gt = crate::tensor::at_order(g, order)?;
    let zero = pt.get(&[0, 0]).zero_like();
    let space = zero.space().clone();
    let mut comps = Vec::with_capacity(n * n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = rmt.get(&[i, j, k, l]).coeffs().to_vec();
                    // − (P_ik g_jl − P_il g_jk − P_jk g_il + P_jl g_ik)
                    pt.get(&[i, k]).mul_acc_into(gt.get(&[j, l]), -1.0, &mut acc);
                    pt.get(&[i, l]).mul_acc_into(gt.get(&[j, k]), 1.0, &mut acc);
                    pt.get(&[j, k]).mul_acc_into(gt.get(&[i, l]), 1.0, &mut acc);
                    pt.get(&[j, l]).mul_acc_into(gt.get(&[i, k]), -1.0, &mut acc);
                    comps.push(Jet::from_coeffs(space.clone(), acc));
                }
            }
        }
    }
    let w = TensorJet::from_components(
        n,
        vec![Slot::Down, Slot::Down, Slot::Down, Slot::Down],
        order,
        comps,
    );
    Ok(w.with_tags(vec![SymTag::Antisym(0, 1), SymTag::Antisym(2, 3)]))
}

/// B_ij = ∇^k∇_k P_ij − ∇^k∇_j P_ik − P^kl W_kijl, taken literally in the
/// written derivative order; two orders below P.
pub fn bach(
    p: &TensorJet,
    w: &TensorJet,
    gamma: &TensorJet,
    g_inv: &TensorJet,
) -> Result<TensorJet> {
    if p.order() < 2 {
        return Err(Error::InsufficientOrder {
            need: 2,
            have: p.order(),
        });
    }
    let n = p.dim();
    // second covariant derivative S_{ijkl} = ∇_l ∇_k P_{ij}
    let s1 = covariant_derivative(p, gamma)?;
    let s2 = covariant_derivative(&s1, gamma)?;
    let term1 = contract(&s2, 2, 3, Some(g_inv))?;
    let term2 = contract(&s2, 1, 3, Some(g_inv))?;

    let order = term1.order().min(w.order());
    let p_up = flip_slot(&flip_slot(p, 0, g_inv)?, 1, g_inv)?.truncated(order)?;
    let wt = crate::tensor::at_order(w, order)?;
    let zero = p_up.get(&[0, 0]).zero_like();
    let space = zero.space().clone();
    let ncoef = zero.coeffs().len();
    let mut comps = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = vec![0.0; ncoef];
            for k in 0..n {
                for l in 0..n {
                    p_up.get(&[k, l]).mul_acc_into(wt.get(&[k, i, j, l]), 1.0, &mut acc);
                }
            }
            comps.push(Jet::from_coeffs(space.clone(), acc));
        }
    }
    let term3 = TensorJet::from_components(n, vec![Slot::Down, Slot::Down], order, comps);
    term1.sub(&term2)?.sub(&term3)
}

/// Covariant Hessian ∇∇f of a scalar (valence dd).
pub fn hessian(f: &Jet, gamma: &TensorJet) -> Result<TensorJet> {
    let grad = covariant_derivative(&TensorJet::scalar(f.clone()), gamma)?;
    covariant_derivative(&grad, gamma)
}

/// Δf = −g^{ij}(∂_i∂_j f − Γ^k_{ij} ∂_k f); the POSITIVE Laplacian, two
/// orders below f.
pub fn laplacian(f: &Jet, gamma: &TensorJet, g_inv: &TensorJet) -> Result<Jet> {
    if f.order() < 2 {
        return Err(Error::InsufficientOrder {
            need: 2,
            have: f.order(),
        });
    }
    let hess = hessian(f, gamma)?;
    let tr = contract(&hess, 0, 1, Some(g_inv))?;
    Ok(tr.get(&[]).scale(-1.0))
}

/// Covariant divergence of a vector field: ∇_i V^i.
pub fn divergence(v: &TensorJet, gamma: &TensorJet) -> Result<Jet> {
    if v.valence() != [Slot::Up] {
        return Err(Error::InvalidContraction(
            "divergence expects a single up slot".into(),
        ));
    }
    let dv = covariant_derivative(v, gamma)?;
    Ok(contract(&dv, 0, 1, None)?.get(&[]).clone())
}

fn cached_truncation<'a>(
    t: &'a TensorJet,
    order: usize,
    cache: &'a [std::sync::OnceLock<TensorJet>; 8],
) -> Result<&'a TensorJet> {
    if order == t.order() {
        return Ok(t);
    }
    if order > t.order() {
        return Err(Error::InsufficientOrder {
            need: order,
            have: t.order(),
        });
    }
    if cache[order].get().is_none() {
        let truncated = t.truncated(order)?;
        let _ = cache[order].set(truncated);
    }
    Ok(cache[order].get().expect("just set"))
}

/// All derived geometric quantities at one point.
///
/// The full constructor populates everything the dimension and order
/// allow; the light constructor (used by lattice sampling) skips the
/// rank-4 tensors and takes Ricci straight from the connection.
pub struct CurvatureBundle {
    n: usize,
    base: Vec<f64>,
    g: TensorJet,
    g_inv: TensorJet,
    gamma: TensorJet,
    rm: Option<TensorJet>,
    ric: TensorJet,
    r: Jet,
    p: Option<TensorJet>,
    j: Jet,
    w: Option<TensorJet>,
    b: Option<TensorJet>,
    p_up: std::sync::OnceLock<TensorJet>,
    gamma_cache: [std::sync::OnceLock<TensorJet>; 8],
    g_inv_cache: [std::sync::OnceLock<TensorJet>; 8],
}

impl CurvatureBundle {
    pub fn build(spec: &MetricSpec, base: &[f64], order: usize) -> Result<CurvatureBundle> {
        let g = metric_jets(spec, base, order)?;
        Self::from_metric(g, base.to_vec())
    }

    /// Build the full stack from already-evaluated metric jets.
    pub fn from_metric(g: TensorJet, base: Vec<f64>) -> Result<CurvatureBundle> {
        let n = g.dim();
        let g_inv = inverse_metric(&g)?;
        let gamma = christoffel(&g, &g_inv)?;
        let rm = riemann(&gamma, &g)?;
        let (ric, r) = ricci_scalar(&rm, &g_inv)?;
        let j = r.scale(1.0 / (2.0 * (n as f64 - 1.0)));
        let (p, w, b) = if n >= 3 {
            let (p, _) = schouten(&ric, &r, &g, n)?;
            let (w, b) = if n >= 4 {
                let w = weyl(&rm, &p, &g)?;
                let b = if p.order() >= 2 {
                    Some(bach(&p, &w, &gamma, &g_inv)?)
                } else {
                    None
                };
                (Some(w), b)
            } else {
                (None, None)
            };
            (Some(p), w, b)
        } else {
            (None, None, None)
        };
        Ok(CurvatureBundle {
            n,
            base,
            g,
            g_inv,
            gamma,
            rm: Some(rm),
            ric,
            r,
            p,
            j,
            w,
            b,
            p_up: std::sync::OnceLock::new(),
            gamma_cache: Default::default(),
            g_inv_cache: Default::default(),
        })
    }

    /// Cheap bundle for lattice sampling: no Riemann/Weyl/Bach, Ricci from
    /// the connection, inverse metric one order lower.
    pub fn light(spec: &MetricSpec, base: &[f64], order: usize) -> Result<CurvatureBundle> {
        let g = metric_jets(spec, base, order)?;
        let n = g.dim();
        let g_inv = inverse_metric(&g.truncated(order - 1)?)?;
        let gamma = christoffel(&g, &g_inv)?;
        let ric = ricci_from_christoffel(&gamma)?;
        let r_t = contract(&ric, 0, 1, Some(&g_inv))?;
        let r = r_t.get(&[]).clone();
        let j = r.scale(1.0 / (2.0 * (n as f64 - 1.0)));
        let p = if n >= 3 {
            Some(schouten(&ric, &r, &g, n)?.0)
        } else {
            None
        };
        Ok(CurvatureBundle {
            n,
            base: base.to_vec(),
            g,
            g_inv,
            gamma,
            rm: None,
            ric,
            r,
            p,
            j,
            w: None,
            b: None,
            p_up: std::sync::OnceLock::new(),
            gamma_cache: Default::default(),
            g_inv_cache: Default::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn g(&self) -> &TensorJet {
        &self.g
    }

    pub fn g_inv(&self) -> &TensorJet {
        &self.g_inv
    }

    pub fn gamma(&self) -> &TensorJet {
        &self.gamma
    }

    pub fn rm(&self) -> Option<&TensorJet> {
        self.rm.as_ref()
    }

    pub fn ric(&self) -> &TensorJet {
        &self.ric
    }

    pub fn r(&self) -> &Jet {
        &self.r
    }

    pub fn p(&self) -> Option<&TensorJet> {
        self.p.as_ref()
    }

    pub fn j(&self) -> &Jet {
        &self.j
    }

    pub fn w(&self) -> Option<&TensorJet> {
        self.w.as_ref()
    }

    pub fn b(&self) -> Option<&TensorJet> {
        self.b.as_ref()
    }

    /// Connection coefficients truncated to `order`, cached per order.
    pub fn gamma_at(&self, order: usize) -> Result<&TensorJet> {
        cached_truncation(&self.gamma, order, &self.gamma_cache)
    }

    /// Inverse metric truncated to `order`, cached per order.
    pub fn g_inv_at(&self, order: usize) -> Result<&TensorJet> {
        cached_truncation(&self.g_inv, order, &self.g_inv_cache)
    }

    /// Δf through the cached truncations; avoids re-truncating Γ and g⁻¹
    /// on every call, which matters inside lattice loops.
    pub fn laplacian(&self, f: &Jet) -> Result<Jet> {
        if f.order() < 2 {
            return Err(Error::InsufficientOrder {
                need: 2,
                have: f.order(),
            });
        }
        let hess = self.hessian(f)?;
        let o2 = f.order() - 2;
        let tr = contract(&hess, 0, 1, Some(self.g_inv_at(o2)?))?;
        Ok(tr.get(&[]).scale(-1.0))
    }

    /// Covariant Hessian ∇∇f through the cached truncations.
    pub fn hessian(&self, f: &Jet) -> Result<TensorJet> {
        if f.order() < 2 {
            return Err(Error::InsufficientOrder {
                need: 2,
                have: f.order(),
            });
        }
        let o1 = f.order() - 1;
        let grad = covariant_derivative(&TensorJet::scalar(f.clone()), self.gamma_at(o1)?)?;
        covariant_derivative(&grad, self.gamma_at(o1.saturating_sub(1))?)
    }

    /// Covariant derivative with the connection truncated from the cache.
    pub fn covd(&self, t: &TensorJet) -> Result<TensorJet> {
        if t.order() == 0 {
            return Err(Error::InsufficientOrder { need: 1, have: 0 });
        }
        covariant_derivative(t, self.gamma_at(t.order() - 1)?)
    }

    /// Covariant divergence of a vector through the cache.
    pub fn divergence(&self, v: &TensorJet) -> Result<Jet> {
        if v.order() == 0 {
            return Err(Error::InsufficientOrder { need: 1, have: 0 });
        }
        divergence(v, self.gamma_at(v.order() - 1)?)
    }

    /// Schouten tensor with both slots raised, computed once per bundle.
    pub fn p_raised(&self) -> Result<&TensorJet> {
        let p = self.p().ok_or(Error::MissingQuantity("Schouten tensor"))?;
        if let Some(cached) = self.p_up.get() {
            return Ok(cached);
        }
        let raised = flip_slot(&flip_slot(p, 0, &self.g_inv)?, 1, &self.g_inv)?;
        Ok(self.p_up.get_or_init(|| raised))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr;
    use std::collections::BTreeMap;

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

    fn sphere_spec(dim: usize) -> MetricSpec {
        // unit round sphere, stereographic chart: g = 4/(1+|x|²)² δ
        let norm: Vec<String> = (1..=dim).map(|k| format!("x{k}^2")).collect();
        let conf = format!("4/((1 + {})^2)", norm.join(" + "));
        let mut comps = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                let src = if i == j { conf.clone() } else { "0".to_string() };
                comps.push(expr::parse(&src, dim).unwrap());
            }
        }
        MetricSpec::explicit(dim, comps, no_params(), "unit_sphere").unwrap()
    }

    fn conf_flat_spec(dim: usize, phi_src: &str, a: f64) -> MetricSpec {
        let phi = expr::parse(phi_src, dim).unwrap();
        let mut params = no_params();
        params.insert("a".into(), a);
        MetricSpec::conformally_flat(dim, phi, params, "conf_flat")
    }

    fn wiggly_spec(dim: usize, eps: f64) -> MetricSpec {
        // dense non-conformally-flat perturbation of the flat metric
        let mut comps = Vec::new();
        for i in 0..dim {
            for j in i..dim {
                let (p, q) = (i % dim + 1, (i + j) % dim + 1);
                let src = if i == j {
                    format!("1 + {eps}*sin(x{p} + 2*x{q})")
                } else {
                    format!("{eps}*cos(2*x{p})*sin(x{q})")
                };
                comps.push(expr::parse(&src, dim).unwrap());
            }
        }
        MetricSpec::explicit(dim, comps, no_params(), "wiggly").unwrap()
    }

    fn max_abs(t: &TensorJet) -> f64 {
        t.max_abs_coeff()
    }

    #[test]
    fn flat_curvature_vanishes() {
        let b = CurvatureBundle::build(&flat_spec(3), &[0.3, -0.2, 0.9], 3).unwrap();
        assert_eq!(max_abs(b.gamma()), 0.0);
        assert_eq!(max_abs(b.rm().unwrap()), 0.0);
        assert_eq!(b.r().value(), 0.0);
    }

    #[test]
    fn unit_sphere_scalar_and_ricci() {
        for (dim, pt) in [(4usize, [0.0; 4]), (4, [0.2, -0.1, 0.3, 0.05])] {
            let b = CurvatureBundle::build(&sphere_spec(dim), &pt, 4).unwrap();
            let expect_r = (dim * (dim - 1)) as f64;
            assert!(
                (b.r().value() - expect_r).abs() < 1e-9,
                "R = {} at {pt:?}",
                b.r().value()
            );
            // Ric = (n−1) g
            let dev = b
                .ric()
                .sub(&b.g().scale(dim as f64 - 1.0))
                .unwrap()
                .max_abs_coeff();
            assert!(dev < 1e-8, "Ric − 3g dev {dev}");
        }
    }

    #[test]
    fn conformal_christoffel_closed_form() {
        // Γ^k_{ij} = δ^k_i φ_j + δ^k_j φ_i − δ_ij δ^{kl} φ_l
        let spec = conf_flat_spec(3, "a*sin(x1)*cos(x2) + 0.2*x3^2", 0.4);
        let base = [0.3, -0.5, 0.2];
        let order = 4;
        let g = metric_jets(&spec, &base, order).unwrap();
        let g_inv = inverse_metric(&g).unwrap();
        let gamma = christoffel(&g, &g_inv).unwrap();
        let phi = match &spec.kind {
            crate::tensor::MetricKind::ConformallyFlat { phi } => {
                phi.eval_jet(&base, order, &spec.params).unwrap()
            }
            _ => unreachable!(),
        };
        let dphi: Vec<Jet> = (0..3).map(|k| phi.deriv(k).unwrap()).collect();
        let mut worst = 0.0f64;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut expect = dphi[0].zero_like();
                    if k == i {
                        expect = expect.try_add(&dphi[j]).unwrap();
                    }
                    if k == j {
                        expect = expect.try_add(&dphi[i]).unwrap();
                    }
                    if i == j {
                        expect = expect.try_sub(&dphi[k]).unwrap();
                    }
                    let got = gamma.get(&[k, i, j]);
                    for (x, y) in got.coeffs().iter().zip(expect.coeffs()) {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-11, "worst {worst}");
    }

    #[test]
    fn metricity() {
        let spec = wiggly_spec(3, 0.2);
        let b = CurvatureBundle::build(&spec, &[0.4, -0.1, 0.7], 4).unwrap();
        let nabla_g = covariant_derivative(b.g(), b.gamma()).unwrap();
        assert!(max_abs(&nabla_g) < 1e-11, "∇g = {}", max_abs(&nabla_g));
    }

    #[test]
    fn gaussian_curvature_two_dim() {
        // n = 2, g = e^{2φ}δ: R = −2 e^{−2φ} (φ_11 + φ_22)
        let spec = conf_flat_spec(2, "a*sin(x1)*cos(2*x2)", 0.35);
        for pt in [[0.0, 0.0], [0.7, -0.4], [1.2, 0.5]] {
            let b = CurvatureBundle::build(&spec, &pt, 2).unwrap();
            let phi = match &spec.kind {
                crate::tensor::MetricKind::ConformallyFlat { phi } => phi,
                _ => unreachable!(),
            };
            let pj = phi.eval_jet(&pt, 2, &spec.params).unwrap();
            let lap0 = pj.partial(&[2, 0]).unwrap() + pj.partial(&[0, 2]).unwrap();
            let expect = -2.0 * (-2.0 * pj.value()).exp() * lap0;
            assert!(
                (b.r().value() - expect).abs() < 1e-11,
                "R {} vs {expect}",
                b.r().value()
            );
        }
    }

    #[test]
    fn riemann_symmetries_and_first_bianchi() {
        let spec = wiggly_spec(4, 0.15);
        let b = CurvatureBundle::build(&spec, &[0.2, 0.5, -0.3, 0.1], 4).unwrap();
        let rm = b.rm().unwrap();
        let scale = max_abs(rm).max(1.0);
        assert!(rm.symmetry_residual(SymTag::Antisym(0, 1), 0) < 1e-10 * scale);
        assert!(rm.symmetry_residual(SymTag::Antisym(2, 3), 0) < 1e-10 * scale);
        // pair swap and first Bianchi
        let n = 4;
        let mut pair = 0.0f64;
        let mut bianchi = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let a = rm.get(&[i, j, k, l]).value();
                        pair = pair.max((a - rm.get(&[k, l, i, j]).value()).abs());
                        let cyc = a
                            + rm.get(&[i, k, l, j]).value()
                            + rm.get(&[i, l, j, k]).value();
                        bianchi = bianchi.max(cyc.abs());
                    }
                }
            }
        }
        assert!(pair < 1e-10 * scale, "pair swap {pair}");
        assert!(bianchi < 1e-10 * scale, "bianchi {bianchi}");
    }

    #[test]
    fn ricci_paths_agree() {
        let spec = wiggly_spec(3, 0.25);
        let base = [0.1, -0.6, 0.4];
        let g = metric_jets(&spec, &base, 4).unwrap();
        let g_inv = inverse_metric(&g).unwrap();
        let gamma = christoffel(&g, &g_inv).unwrap();
        let rm = riemann(&gamma, &g).unwrap();
        let (ric, _) = ricci_scalar(&rm, &g_inv).unwrap();
        let ric2 = ricci_from_christoffel(&gamma).unwrap();
        let dev = ric.sub(&ric2).unwrap().max_abs_coeff();
        assert!(dev < 1e-11, "dev {dev}");
    }

    #[test]
    fn schouten_on_spheres_and_flat() {
        let b = CurvatureBundle::build(&sphere_spec(4), &[0.0; 4], 4).unwrap();
        assert!((b.j().value() - 2.0).abs() < 1e-10);
        let dev = b.p().unwrap().sub(&b.g().scale(0.5)).unwrap().max_abs_coeff();
        assert!(dev < 1e-9, "P − g/2 dev {dev}");

        let b6 = CurvatureBundle::build(&sphere_spec(6), &[0.1, 0.0, -0.2, 0.0, 0.05, 0.0], 4).unwrap();
        assert!((b6.j().value() - 3.0).abs() < 1e-9);
        let dev6 = b6.p().unwrap().sub(&b6.g().scale(0.5)).unwrap().max_abs_coeff();
        assert!(dev6 < 1e-8, "dev {dev6}");

        let bf = CurvatureBundle::build(&flat_spec(4), &[0.0; 4], 4).unwrap();
        assert_eq!(max_abs(bf.p().unwrap()), 0.0);
        assert_eq!(bf.j().value(), 0.0);

        // n = 2 has no Schouten tensor
        let b2 = CurvatureBundle::build(&flat_spec(2), &[0.0; 2], 2).unwrap();
        assert!(b2.p().is_none());
        assert!(matches!(
            schouten(b2.ric(), b2.r(), b2.g(), 2),
            Err(Error::UnsupportedDim { .. })
        ));
    }

    #[test]
    fn schouten_trace_is_j() {
        let spec = wiggly_spec(4, 0.2);
        let b = CurvatureBundle::build(&spec, &[0.3, 0.1, -0.2, 0.6], 4).unwrap();
        let tr = contract(b.p().unwrap(), 0, 1, Some(b.g_inv())).unwrap();
        let dev: f64 = tr
            .get(&[])
            .coeffs()
            .iter()
            .zip(b.j().truncated(tr.order()).unwrap().coeffs())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12, "trace dev {dev}");
    }

    #[test]
    fn weyl_vanishes_iff_conformally_flat() {
        let spec = conf_flat_spec(4, "a*sin(x1)*cos(x2) + 0.1*sin(x3 + x4)", 0.3);
        let b = CurvatureBundle::build(&spec, &[0.2, -0.1, 0.5, 0.3], 4).unwrap();
        assert!(max_abs(b.w().unwrap()) < 1e-10, "W = {}", max_abs(b.w().unwrap()));

        let bs = CurvatureBundle::build(&sphere_spec(4), &[0.1, 0.2, 0.0, -0.1], 4).unwrap();
        assert!(max_abs(bs.w().unwrap()) < 1e-9);

        let bw = CurvatureBundle::build(&wiggly_spec(4, 0.1), &[0.4, 0.0, -0.3, 0.2], 4).unwrap();
        assert!(max_abs(bw.w().unwrap()) > 1e-4, "perturbed flat should have W ≠ 0");
    }

    #[test]
    fn weyl_is_trace_free() {
        let spec = wiggly_spec(4, 0.15);
        let b = CurvatureBundle::build(&spec, &[0.1, 0.3, -0.4, 0.2], 4).unwrap();
        let w = b.w().unwrap();
        let scale = max_abs(w).max(1.0);
        for (a, bslot) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            let tr = contract(w, a, bslot, Some(b.g_inv())).unwrap();
            assert!(
                tr.max_abs_coeff() < 1e-10 * scale,
                "trace ({a},{bslot}) = {}",
                tr.max_abs_coeff()
            );
        }
    }

    #[test]
    fn bach_vanishes_where_it_should() {
        let bf = CurvatureBundle::build(&flat_spec(4), &[0.0; 4], 4).unwrap();
        assert_eq!(max_abs(bf.b().unwrap()), 0.0);

        let spec = conf_flat_spec(4, "a*cos(x1 + x2) + 0.15*sin(2*x3)*cos(x4)", 0.25);
        let b = CurvatureBundle::build(&spec, &[0.3, -0.2, 0.1, 0.4], 4).unwrap();
        assert!(max_abs(b.b().unwrap()) < 1e-9, "B = {}", max_abs(b.b().unwrap()));

        let bs = CurvatureBundle::build(&sphere_spec(6), &[0.0; 6], 6).unwrap();
        assert!(max_abs(bs.b().unwrap()) < 1e-8, "B(S⁶) = {}", max_abs(bs.b().unwrap()));
    }

    #[test]
    fn bach_symmetric() {
        let spec = wiggly_spec(4, 0.12);
        let b = CurvatureBundle::build(&spec, &[0.2, 0.4, -0.1, 0.3], 4).unwrap();
        let bt = b.b().unwrap();
        let res = bt.symmetry_residual(SymTag::Sym(0, 1), 0);
        assert!(res < 1e-9 * (1.0 + max_abs(bt)), "asym {res}");
    }

    #[test]
    fn contracted_bianchi_for_schouten() {
        // ∇^i P_{ij} = ∇_j J
        let spec = wiggly_spec(4, 0.18);
        let b = CurvatureBundle::build(&spec, &[0.25, -0.35, 0.15, 0.05], 4).unwrap();
        let dp = covariant_derivative(b.p().unwrap(), b.gamma()).unwrap();
        let div = contract(&dp, 0, 2, Some(b.g_inv())).unwrap();
        let dj = covariant_derivative(&TensorJet::scalar(b.j().clone()), b.gamma()).unwrap();
        let dev = div.sub(&dj).unwrap().max_abs_coeff();
        assert!(dev < 1e-9, "dev {dev}");
    }

    #[test]
    fn laplacian_sign_and_leibniz() {
        // flat metric: Δ sin(x₁) = sin(x₁)
        let bf = CurvatureBundle::build(&flat_spec(2), &[0.4, 0.0], 4).unwrap();
        let f = expr::parse("sin(x1)", 2)
            .unwrap()
            .eval_jet(&[0.4, 0.0], 4, &no_params())
            .unwrap();
        let lap = bf.laplacian(&f).unwrap();
        let expect = f.truncated(2).unwrap();
        let dev: f64 = lap
            .coeffs()
            .iter()
            .zip(expect.coeffs())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-13, "dev {dev}");

        // constant → 0
        let c = Jet::constant(3.5, 2, 4);
        assert!(bf.laplacian(&c).unwrap().is_zero());

        // Δ(fh) − fΔh − hΔf + 2⟨∇f, ∇h⟩ = 0
        let spec = wiggly_spec(3, 0.2);
        let base = [0.3, 0.2, -0.4];
        let b = CurvatureBundle::build(&spec, &base, 4).unwrap();
        let f = expr::parse("sin(x1)*x2", 3)
            .unwrap()
            .eval_jet(&base, 4, &no_params())
            .unwrap();
        let h = expr::parse("exp(x3) + cos(x2)", 3)
            .unwrap()
            .eval_jet(&base, 4, &no_params())
            .unwrap();
        let lhs = b.laplacian(&f.try_mul(&h).unwrap()).unwrap();
        let f2 = f.truncated(2).unwrap();
        let h2 = h.truncated(2).unwrap();
        let mut rhs = f2.try_mul(&b.laplacian(&h).unwrap()).unwrap();
        rhs = rhs.try_add(&h2.try_mul(&b.laplacian(&f).unwrap()).unwrap()).unwrap();
        // ⟨∇f, ∇h⟩ = g^{ij} ∂_i f ∂_j h
        let mut pairing = lhs.zero_like();
        for i in 0..3 {
            for j in 0..3 {
                let gij = b.g_inv().get(&[i, j]).truncated(2).unwrap();
                if gij.is_zero() {
                    continue;
                }
                let term = gij
                    .try_mul(&f.deriv(i).unwrap().truncated(2).unwrap())
                    .unwrap()
                    .try_mul(&h.deriv(j).unwrap().truncated(2).unwrap())
                    .unwrap();
                pairing = pairing.try_add(&term).unwrap();
            }
        }
        rhs = rhs.try_sub(&pairing.scale(2.0)).unwrap();
        let dev: f64 = lhs
            .coeffs()
            .iter()
            .zip(rhs.coeffs())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10, "Leibniz residual {dev}");
    }

    #[test]
    fn hessian_is_symmetric() {
        let spec = wiggly_spec(3, 0.2);
        let base = [0.1, 0.5, -0.2];
        let b = CurvatureBundle::build(&spec, &base, 4).unwrap();
        let f = expr::parse("exp(x1)*sin(x2) + x3^3", 3)
            .unwrap()
            .eval_jet(&base, 4, &no_params())
            .unwrap();
        let hess = hessian(&f, b.gamma()).unwrap();
        let res = hess.symmetry_residual(SymTag::Sym(0, 1), 0);
        assert!(res < 1e-11 * (1.0 + hess.max_abs_coeff()), "res {res}");
    }

    #[test]
    fn light_bundle_matches_full() {
        let spec = wiggly_spec(4, 0.2);
        let base = [0.3, -0.1, 0.45, 0.2];
        let full = CurvatureBundle::build(&spec, &base, 4).unwrap();
        let light = CurvatureBundle::light(&spec, &base, 4).unwrap();
        assert!(light.rm().is_none());
        let dev = full
            .ric()
            .sub(light.ric())
            .unwrap()
            .max_abs_coeff();
        assert!(dev < 1e-11, "ric dev {dev}");
        let jdev: f64 = full
            .j()
            .truncated(light.j().order())
            .unwrap()
            .coeffs()
            .iter()
            .zip(light.j().coeffs())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(jdev < 1e-11, "J dev {jdev}");
    }
}
