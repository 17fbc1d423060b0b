//! Centralized tolerances for every verification suite. Pointwise checks
//! use the hybrid residual |a−b|/(1+max(|a|,|b|)) unless noted; lattice
//! integrals scale by the computed torus volume.

/// Sphere Q values (Q(S⁴) = 6, Q(S⁶) = 120), hybrid.
pub const Q_SPHERE: f64 = 1e-7;

/// Agreement of the holographic and direct Q paths, hybrid.
pub const Q_CONSISTENCY: f64 = 1e-6;

/// Determinant-route v^(2k) vs (−2)^{−k}σ_k(P), absolute.
pub const FLAT_V_SIGMA: f64 = 1e-10;

/// Determinant-route v^(2k) vs displayed-formula v^(2k), absolute.
pub const FLAT_V_CROSS: f64 = 1e-9;

/// Pfaffian chain identities, relative (hybrid).
pub const PFAFFIAN_REL: f64 = 1e-8;

/// Adjointness pairing |∫(pf)v − ∫f(p*v)|, × volume.
pub const ADJOINTNESS: f64 = 1e-6;

/// Divergence integrals ∫p*v dv and the weighted divergence sums, × volume.
pub const DIVERGENCE_INTEGRAL: f64 = 1e-6;

/// Global identity 2c_{n/2}∫Q dv = ∫v^(n) dv, hybrid; and ∫Q dv = 0 and
/// conformal invariance of ∫Q dv, × volume.
pub const GLOBAL_IDENTITY: f64 = 1e-6;

/// Curvature stack gates (metricity, Riemann symmetries, first Bianchi,
/// contracted Bianchi for Schouten, Weyl traces, W = B = 0 when
/// conformally flat), absolute on max |coefficient|.
pub const CURVATURE_GATES: f64 = 1e-9;

/// Hessian symmetry of scalars, absolute.
pub const HESSIAN_SYMMETRY: f64 = 1e-11;

/// Metricity ∇g = 0 in the unit-scale random-metric tests, absolute.
pub const METRICITY: f64 = 1e-11;

/// Jet ring axioms, relative to the coefficient scale.
pub const RING_AXIOMS: f64 = 1e-13;

/// Jet partials vs hand-computed analytic partials, hybrid.
pub const PARTIAL_ANALYTIC: f64 = 1e-10;

/// Jet partials vs 4th-order central finite differences (step 1e−2), hybrid.
pub const PARTIAL_FD: f64 = 1e-6;

/// Finite-difference step for the cross-check above.
pub const FD_STEP: f64 = 1e-2;

/// Elementary-function identities (sin² + cos² = 1 and friends), absolute.
pub const ELEMENTARY_IDENTITIES: f64 = 1e-12;

/// Default pointwise tolerance for CLI eval consistency reporting, hybrid.
pub const POINTWISE_DEFAULT: f64 = 1e-8;

/// Lattice refinement stability of smooth periodic integrals, relative.
pub const GRID_REFINEMENT: f64 = 1e-9;
