//! Q-curvature via the holographic volume-coefficient formula, the direct
//! curvature expressions, and the conformally-flat identity chain
//! (σ_k, Pfaffian, determinant expansion of the x²-polynomial family).
//!
//! The central identity, checked pointwise by the verification suites:
//!
//! ```text
//! 2n c_{n/2} Q = n v^{(n)} + Σ_{k=1}^{n/2−1} (n−2k) p*_{2k} v^{(n−2k)}
//! ```
//!
//! with c_{n/2} = (−1)^{n/2} [2ⁿ (n/2)! (n/2−1)!]⁻¹, the v^{(2k)} the
//! volume coefficients of the associated Poincaré metric, and p_{2k} the
//! expansion operators of harmonic functions for that metric. Both sides
//! are computed from entirely different expressions, so their agreement
//! exercises the whole curvature stack.

use crate::curvature::CurvatureBundle;
use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::tensor::{
    constant_matrix, contract, covariant_derivative, det_const, flip_slot, invert_const, Slot,
    TensorJet,
};

fn factorial(k: usize) -> f64 {
    (2..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// c_{n/2} = (−1)^{n/2} [2ⁿ (n/2)! (n/2−1)!]⁻¹; c₁ = −1/4, c₂ = 1/32,
/// c₃ = −1/768.
pub fn c_half(n: usize) -> f64 {
    let h = n / 2;
    let sign = if h % 2 == 0 { 1.0 } else { -1.0 };
    sign / (2f64.powi(n as i32) * factorial(h) * factorial(h - 1))
}

fn check_even_dim(n: usize) -> Result<()> {
    if matches!(n, 2 | 4 | 6) {
        Ok(())
    } else {
        Err(Error::UnsupportedDim {
            n,
            reason: "Q-curvature paths support n ∈ {2, 4, 6}",
        })
    }
}

/// Metric jet order used by default for each supported dimension.
pub fn default_order(n: usize) -> usize {
    n.max(2)
}

/// Add two scalar jets after truncating both to the smaller order.
fn acc(a: &Jet, b: &Jet) -> Jet {
    let order = a.order().min(b.order());
    let at = a.truncated(order).expect("min order");
    let bt = b.truncated(order).expect("min order");
    at.try_add(&bt).expect("same space")
}

/// Multiply two scalar jets after truncating both to the smaller order.
fn mul(a: &Jet, b: &Jet) -> Jet {
    let order = a.order().min(b.order());
    let at = a.truncated(order).expect("min order");
    let bt = b.truncated(order).expect("min order");
    at.try_mul(&bt).expect("same space")
}

// ---------------------------------------------------------------------------
// Endomorphism helpers for A = g⁻¹P
// ---------------------------------------------------------------------------

fn endo(p: &TensorJet, g_inv: &TensorJet) -> Result<TensorJet> {
    flip_slot(p, 0, g_inv)
}

fn endo_mul(a: &TensorJet, b: &TensorJet) -> TensorJet {
    let n = a.dim();
    let order = a.order().min(b.order());
    let at = crate::tensor::at_order(a, order).expect("min order");
    let bt = crate::tensor::at_order(b, order).expect("min order");
    let zero = at.get(&[0, 0]).zero_like();
    let space = zero.space().clone();
    let ncoef = zero.coeffs().len();
    let mut comps = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = vec![0.0; ncoef];
            for k in 0..n {
                at.get(&[i, k]).mul_acc_into(bt.get(&[k, j]), 1.0, &mut acc);
            }
            comps.push(Jet::from_coeffs(space.clone(), acc));
        }
    }
    TensorJet::from_components(n, vec![Slot::Up, Slot::Down], order, comps)
}

fn endo_trace(a: &TensorJet) -> Jet {
    let n = a.dim();
    let mut s = a.get(&[0, 0]).clone();
    for i in 1..n {
        s = s.try_add(a.get(&[i, i])).expect("same space");
    }
    s
}

/// |P|² = tr((g⁻¹P)²) and tr P³ = tr((g⁻¹P)³) as scalar jets.
fn p_norms(bundle: &CurvatureBundle) -> Result<(Jet, Jet)> {
    let p = bundle
        .p()
        .ok_or(Error::MissingQuantity("Schouten tensor"))?;
    let a = endo(p, bundle.g_inv())?;
    let a2 = endo_mul(&a, &a);
    let a3 = endo_mul(&a2, &a);
    Ok((endo_trace(&a2), endo_trace(&a3)))
}

// ---------------------------------------------------------------------------
// Volume coefficients
// ---------------------------------------------------------------------------

/// v^(0), v^(2), …, v^(n) as scalar jets:
/// v^(2) = −J/2, v^(4) = (J² − |P|²)/8,
/// v^(6) = (−(2/(n−4)) P^{ij}B_{ij} + 3J|P|² − J³ − 2 tr P³)/48.
pub fn v_coefficients(bundle: &CurvatureBundle) -> Result<Vec<Jet>> {
    let n = bundle.n();
    check_even_dim(n)?;
    let j = bundle.j();
    let mut v = vec![j.constant_like(1.0), j.scale(-0.5)];
    if n >= 4 {
        let (p2norm, p3tr) = p_norms(bundle)?;
        let j2 = mul(j, j);
        v.push(acc(&j2, &p2norm.scale(-1.0)).scale(1.0 / 8.0));
        if n == 6 {
            let b = bundle
                .b()
                .ok_or(Error::MissingQuantity("Bach tensor (build at order ≥ 6)"))?;
            let p_up = bundle.p_raised()?;
            let mut pb = p_up.get(&[0, 0]).zero_like();
            for i in 0..n {
                for k in 0..n {
                    let value = mul(p_up.get(&[i, k]), b.get(&[i, k]));
                    pb = acc(&pb, &value);
                }
            }
            let coef = 2.0 / (n as f64 - 4.0);
            let mut v6 = pb.scale(-coef);
            v6 = acc(&v6, &mul(j, &p2norm).scale(3.0));
            v6 = acc(&v6, &mul(&j2, j).scale(-1.0));
            v6 = acc(&v6, &p3tr.scale(-2.0));
            v.push(v6.scale(1.0 / 48.0));
        }
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Expansion operators p₂, p₄ and their formal adjoints
// ---------------------------------------------------------------------------

/// p₂f = −Δf / (2(n−2)).
pub fn p2_apply(f: &Jet, bundle: &CurvatureBundle) -> Result<Jet> {
    let n = bundle.n();
    if n < 4 {
        return Err(Error::UnsupportedDim {
            n,
            reason: "p₂ needs n ≥ 4",
        });
    }
    Ok(bundle.laplacian(f)?.scale(-1.0 / (2.0 * (n as f64 - 2.0))))
}

/// p₂ is formally self-adjoint: p₂*v = −Δv / (2(n−2)).
pub fn p2_adjoint(v: &Jet, bundle: &CurvatureBundle) -> Result<Jet> {
    p2_apply(v, bundle)
}

fn p4_guard(bundle: &CurvatureBundle) -> Result<f64> {
    let n = bundle.n();
    if n != 6 {
        return Err(Error::UnsupportedDim {
            n,
            reason: "p₄ is only defined here for n = 6 (the 1/(n−4) factor)",
        });
    }
    let nf = n as f64;
    Ok(8.0 * (nf - 2.0) * (nf - 4.0))
}

/// Gradient with the index raised: J^{,i} = g^{ij} ∂_j J.
fn raised_gradient(f: &Jet, bundle: &CurvatureBundle) -> Result<TensorJet> {
    let o1 = f.order() - 1;
    let grad = covariant_derivative(&TensorJet::scalar(f.clone()), bundle.gamma_at(o1)?)?;
    flip_slot(&grad, 0, bundle.g_inv_at(o1.min(bundle.g_inv().order()))?)
}

/// p₄f = [Δ²f + 2JΔf + 2(n−2) P^{ij}∇_i∇_j f + (n−2) J^{,i}∇_i f] / (8(n−2)(n−4)).
pub fn p4_apply(f: &Jet, bundle: &CurvatureBundle) -> Result<Jet> {
    let denom = p4_guard(bundle)?;
    let n = bundle.n();
    let nf = n as f64;
    let lap = bundle.laplacian(f)?;
    let mut total = bundle.laplacian(&lap)?; // Δ²f
    total = acc(&total, &mul(bundle.j(), &lap).scale(2.0));

    let p_up = bundle.p_raised()?;
    let hess = bundle.hessian(f)?;
    let mut phess = lap.zero_like();
    for i in 0..n {
        for k in 0..n {
            let x = p_up.get(&[i, k]);
            let y = hess.get(&[i, k]);
            if x.is_zero() || y.is_zero() {
                continue;
            }
            phess = acc(&phess, &mul(x, y));
        }
    }
    total = acc(&total, &phess.scale(2.0 * (nf - 2.0)));

    let jg = raised_gradient(bundle.j(), bundle)?;
    let mut jdot = lap.zero_like();
    for i in 0..n {
        let x = jg.get(&[i]);
        if x.is_zero() {
            continue;
        }
        jdot = acc(&jdot, &mul(x, &f.deriv(i)?));
    }
    total = acc(&total, &jdot.scale(nf - 2.0));
    Ok(total.scale(1.0 / denom))
}

/// p₄*v = [Δ²v + 2Δ(Jv) + 2(n−2) ∇_j∇_i(P^{ij}v) − (n−2) ∇_i(J^{,i}v)]
///        / (8(n−2)(n−4)),
/// the integration-by-parts expansion of the formal adjoint.
pub fn p4_adjoint(v: &Jet, bundle: &CurvatureBundle) -> Result<Jet> {
    let denom = p4_guard(bundle)?;
    let n = bundle.n();
    let nf = n as f64;
    let lap = bundle.laplacian(v)?;
    let mut total = bundle.laplacian(&lap)?; // Δ²v
    total = acc(&total, &bundle.laplacian(&mul(bundle.j(), v))?.scale(2.0));

    // double covariant divergence of P^{ij} v
    let p_up = bundle.p_raised()?;
    let order = p_up.order().min(v.order());
    let vt = v.truncated(order)?;
    let pv = TensorJet::from_fn(n, vec![Slot::Up, Slot::Up], order, |idx| {
        let x = p_up.get(idx);
        if x.is_zero() || vt.is_zero() {
            x.zero_like()
        } else {
            x.truncated(order).expect("min").try_mul(&vt).expect("same space")
        }
    });
    let first = contract(&bundle.covd(&pv)?, 0, 2, None)?;
    let double_div = bundle.divergence(&first)?;
    total = acc(&total, &double_div.scale(2.0 * (nf - 2.0)));

    // divergence of J^{,i} v
    let jg = raised_gradient(bundle.j(), bundle)?;
    let order = jg.order().min(v.order());
    let vt = v.truncated(order)?;
    let jv = TensorJet::from_fn(n, vec![Slot::Up], order, |idx| {
        let x = jg.get(idx);
        if x.is_zero() || vt.is_zero() {
            x.zero_like()
        } else {
            x.truncated(order).expect("min").try_mul(&vt).expect("same space")
        }
    });
    let div_jv = bundle.divergence(&jv)?;
    total = acc(&total, &div_jv.scale(-(nf - 2.0)));
    Ok(total.scale(1.0 / denom))
}

// ---------------------------------------------------------------------------
// Q-curvature assembly
// ---------------------------------------------------------------------------

/// Structured per-point output of the holographic evaluation.
#[derive(Debug, Clone)]
pub struct HolographicData {
    pub n: usize,
    pub c_half: f64,
    /// v^(0), v^(2), …, v^(n) values at the point.
    pub v: Vec<f64>,
    /// Σ (n−2k) p*_{2k} v^{(n−2k)} at the point.
    pub divergence_term: f64,
    /// Σ 2k p*_{2k} v^{(n−2k)} at the point; also a pure divergence, so it
    /// integrates to zero on closed manifolds.
    pub divergence_dual: f64,
    pub q_holographic: f64,
    pub q_direct: f64,
}

struct Assembly {
    v: Vec<Jet>,
    divergence_term: f64,
    divergence_dual: f64,
    q_holographic: f64,
}

fn assemble(bundle: &CurvatureBundle) -> Result<Assembly> {
    let n = bundle.n();
    check_even_dim(n)?;
    let v = v_coefficients(bundle)?;
    let (divergence_term, divergence_dual) = match n {
        2 => (0.0, 0.0),
        4 => {
            let t = p2_adjoint(&v[1], bundle)?.value();
            (2.0 * t, 2.0 * t)
        }
        6 => {
            let a = p2_adjoint(&v[2], bundle)?.value();
            let b = p4_adjoint(&v[1], bundle)?.value();
            (4.0 * a + 2.0 * b, 2.0 * a + 4.0 * b)
        }
        _ => unreachable!(),
    };
    let inv = 1.0 / (2.0 * n as f64 * c_half(n));
    // + 0.0 normalizes the negative zero the sign of c_{n/2} can produce
    let q_holographic = inv * (n as f64 * v[n / 2].value() + divergence_term) + 0.0;
    Ok(Assembly {
        v,
        divergence_term,
        divergence_dual,
        q_holographic,
    })
}

/// Q from the holographic formula (the constant term of the assembled jet).
pub fn q_holographic(bundle: &CurvatureBundle) -> Result<f64> {
    Ok(assemble(bundle)?.q_holographic)
}

/// Q from the displayed curvature expressions:
/// n=2: R/2; n=4: 2(J² − |P|²) + ΔJ;
/// n=6: 8P^{ij}B_{ij} + 16 tr P³ − 24 J|P|² + 8J³
///      + Δ²J + 4Δ(J²) + 8(P^{ij}J_{,i})_{,j} − 4Δ(|P|²).
pub fn q_direct(bundle: &CurvatureBundle) -> Result<f64> {
    let n = bundle.n();
    check_even_dim(n)?;
    match n {
        2 => Ok(0.5 * bundle.r().value()),
        4 => {
            let (p2norm, _) = p_norms(bundle)?;
            let j = bundle.j();
            let alg = 2.0 * (j.value() * j.value() - p2norm.value());
            let lap_j = bundle.laplacian(j)?.value();
            Ok(alg + lap_j)
        }
        6 => {
            let (p2norm, p3tr) = p_norms(bundle)?;
            let j = bundle.j();
            let b = bundle
                .b()
                .ok_or(Error::MissingQuantity("Bach tensor (build at order ≥ 6)"))?;
            let p_up = bundle.p_raised()?;
            let mut pb = 0.0;
            for i in 0..n {
                for k in 0..n {
                    pb += p_up.get(&[i, k]).value() * b.get(&[i, k]).value();
                }
            }
            let jv = j.value();
            let alg = 8.0 * pb + 16.0 * p3tr.value() - 24.0 * jv * p2norm.value()
                + 8.0 * jv * jv * jv;

            let lap_j = bundle.laplacian(j)?;
            let lap2_j = bundle.laplacian(&lap_j)?.value();
            let lap_j2 = bundle.laplacian(&mul(j, j))?.value();
            let lap_p2 = bundle.laplacian(&p2norm)?.value();

            // (P^{ij} J_{,i})_{,j}: covariant divergence of V^j = P^{ij} ∂_i J
            let order = p_up.order().min(j.order() - 1);
            let zero = Jet::constant(0.0, n, order);
            let mut vcomp = vec![zero.clone(); n];
            for jslot in 0..n {
                let mut s = zero.clone();
                for i in 0..n {
                    let x = p_up.get(&[i, jslot]);
                    if x.is_zero() {
                        continue;
                    }
                    s = acc(&s, &mul(x, &j.deriv(i)?));
                }
                vcomp[jslot] = s;
            }
            let v_t = TensorJet::from_fn(n, vec![Slot::Up], order, |idx| vcomp[idx[0]].clone());
            let div_pj = bundle.divergence(&v_t)?.value();

            Ok(alg + lap2_j + 4.0 * lap_j2 + 8.0 * div_pj - 4.0 * lap_p2)
        }
        _ => unreachable!(),
    }
}

/// Evaluate everything at once from a full bundle.
pub fn evaluate(bundle: &CurvatureBundle) -> Result<HolographicData> {
    let n = bundle.n();
    let asm = assemble(bundle)?;
    let q_direct = q_direct(bundle)?;
    Ok(HolographicData {
        n,
        c_half: c_half(n),
        v: asm.v.iter().map(|j| j.value()).collect(),
        divergence_term: asm.divergence_term,
        divergence_dual: asm.divergence_dual,
        q_holographic: asm.q_holographic,
        q_direct,
    })
}

/// Per-point sample for lattice quadrature: Q, the top volume coefficient,
/// the two divergence combinations, and the volume density √det g.
#[derive(Debug, Clone, Copy)]
pub struct PointSample {
    pub q: f64,
    pub v_top: f64,
    pub divergence_term: f64,
    pub divergence_dual: f64,
    pub density: f64,
}

/// Sample the holographic quantities at one chart point. Dimensions 2 and
/// 4 use the light curvature path; n = 6 needs the full stack.
pub fn sample_point(
    spec: &crate::tensor::MetricSpec,
    point: &[f64],
    order: usize,
) -> Result<PointSample> {
    let n = spec.dim;
    check_even_dim(n)?;
    let bundle = if n <= 4 {
        CurvatureBundle::light(spec, point, order)?
    } else {
        CurvatureBundle::build(spec, point, order)?
    };
    let asm = assemble(&bundle)?;
    let density = det_const(&constant_matrix(bundle.g())).sqrt();
    Ok(PointSample {
        q: asm.q_holographic,
        v_top: asm.v[n / 2].value(),
        divergence_term: asm.divergence_term,
        divergence_dual: asm.divergence_dual,
        density,
    })
}

// ---------------------------------------------------------------------------
// Elementary symmetric functions of g⁻¹P
// ---------------------------------------------------------------------------

/// σ_k of the endomorphism g⁻¹P via the trace (Newton) recursion
/// e_k = (1/k) Σ_{m=1}^{k} (−1)^{m−1} e_{k−m} tr(A^m).
pub fn sigma_elementary(p: &TensorJet, g_inv: &TensorJet, k: usize) -> Result<Jet> {
    let n = p.dim();
    if k > n {
        return Err(Error::IndexOutOfRange { index: k, dim: n });
    }
    let a = endo(p, g_inv)?;
    let one = a.get(&[0, 0]).constant_like(1.0);
    if k == 0 {
        return Ok(one);
    }
    let mut traces = Vec::with_capacity(k);
    let mut power = a.clone();
    traces.push(endo_trace(&power));
    for _ in 1..k {
        power = endo_mul(&power, &a);
        traces.push(endo_trace(&power));
    }
    let mut e: Vec<Jet> = vec![one];
    for m in 1..=k {
        let mut s = e[0].zero_like();
        for i in 1..=m {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s = acc(&s, &mul(&e[m - i], &traces[i - 1]).scale(sign));
        }
        e.push(s.scale(1.0 / m as f64));
    }
    Ok(e.pop().expect("k ≥ 1"))
}

// ---------------------------------------------------------------------------
// Pfaffian
// ---------------------------------------------------------------------------

fn permutations_with_sign(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    fn rec(items: &mut Vec<usize>, k: usize, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if k == items.len() {
            out.push((items.clone(), sign));
            return;
        }
        for i in k..items.len() {
            let s = if i == k { sign } else { -sign };
            items.swap(k, i);
            rec(items, k + 1, s, out);
            items.swap(k, i);
        }
    }
    rec(&mut items, 0, 1.0, &mut out);
    out
}

/// Pfaffian of the metric at the point, by the direct permutation double
/// sum 2ⁿ(n/2)! Pff = μ^{i…} μ^{j…} R_{i₁i₂j₁j₂} ⋯ with
/// μ^{i₁…iₙ} = ε_{i₁…iₙ}/√det g.
pub fn pfaffian(rm: &TensorJet, g: &TensorJet) -> Result<f64> {
    let n = rm.dim();
    check_even_dim(n)?;
    let det = det_const(&constant_matrix(g));
    if det <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    // constant values of the lowered Riemann tensor
    let mut rv = vec![0.0; n * n * n * n];
    let mut idx = vec![0usize; 4];
    for (pos, slot) in rv.iter_mut().enumerate() {
        let mut f = pos;
        for s in (0..4).rev() {
            idx[s] = f % n;
            f /= n;
        }
        *slot = rm.get(&idx).value();
    }
    let flat4 = |i: usize, j: usize, k: usize, l: usize| ((i * n + j) * n + k) * n + l;
    let perms = permutations_with_sign(n);
    let mut total = 0.0;
    for (sigma, s_sign) in &perms {
        for (tau, t_sign) in &perms {
            let mut prod = s_sign * t_sign;
            for a in 0..n / 2 {
                prod *= rv[flat4(sigma[2 * a], sigma[2 * a + 1], tau[2 * a], tau[2 * a + 1])];
                if prod == 0.0 {
                    break;
                }
            }
            total += prod;
        }
    }
    let h = n / 2;
    Ok(total / (det * 2f64.powi(n as i32) * factorial(h)))
}

// ---------------------------------------------------------------------------
// Conformally flat expansion of the metric family in x²
// ---------------------------------------------------------------------------

/// The x²-polynomial metric family g − P x² + ¼ P g⁻¹P x⁴ evaluated at the
/// point, together with the volume coefficients recovered from its
/// determinant expansion (det g_x / det g)^{1/2}.
#[derive(Debug, Clone)]
pub struct GxExpansion {
    /// Matrix coefficients of the family in powers of x²: [g, −P, ¼ P g⁻¹ P].
    pub coeff: [Vec<Vec<f64>>; 3],
    /// v^(0), v^(2), …, v^(n) from the determinant expansion.
    pub v: Vec<f64>,
}

/// Determinant-expansion route to the volume coefficients. Intended for
/// conformally flat metrics, where the family terminates at x⁴; the
/// computation itself is total.
pub fn gx_conformally_flat(p: &TensorJet, g: &TensorJet, n: usize) -> Result<GxExpansion> {
    check_even_dim(n)?;
    let gv = constant_matrix(g);
    let pv = constant_matrix(p);
    let ginv = invert_const(&gv)?;
    // ¼ P g⁻¹ P
    let mut quart = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    s += pv[i][k] * ginv[k][l] * pv[l][j];
                }
            }
            quart[i][j] = 0.25 * s;
        }
    }
    // entries as univariate series in s = x², truncated at s^{n/2}
    let half = n / 2;
    let entry = |i: usize, j: usize| -> Jet {
        let mut coeffs = vec![0.0; half + 1];
        coeffs[0] = gv[i][j];
        if half >= 1 {
            coeffs[1] = -pv[i][j];
        }
        if half >= 2 {
            coeffs[2] = quart[i][j];
        }
        let sp = crate::jets::space(1, half);
        Jet::from_coeffs(sp, coeffs)
    };
    let zero = Jet::constant(0.0, 1, half);
    let mut det = zero.clone();
    for (perm, sign) in permutations_with_sign(n) {
        let mut prod = zero.constant_like(sign);
        for (i, &pi) in perm.iter().enumerate() {
            prod = prod.try_mul(&entry(i, pi))?;
            if prod.is_zero() {
                break;
            }
        }
        det = det.try_add(&prod)?;
    }
    let ratio = det.scale(1.0 / det_const(&gv));
    let series = ratio.sqrt()?;
    let v = (0..=half).map(|k| series.coeff(&[k])).collect();
    Ok(GxExpansion {
        coeff: [gv, pv.iter().map(|row| row.iter().map(|x| -x).collect()).collect(), quart],
        v,
    })
}
