//! Uniform-lattice quadrature over flat-chart tori (rectangle rule,
//! spectrally accurate for smooth periodic integrands) and the global
//! Q-curvature integrals built on it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::holographic::{self, c_half};
use crate::tensor::MetricSpec;

/// A uniform sampling lattice: `m` points per axis over one period box.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub m: usize,
    pub periods: Vec<f64>,
}

impl GridSpec {
    pub fn new(m: usize, periods: Vec<f64>) -> Result<GridSpec> {
        if m < 4 {
            return Err(Error::InvalidSpec(format!("grid needs m ≥ 4, got {m}")));
        }
        if periods.is_empty() || periods.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidSpec("periods must be positive".into()));
        }
        Ok(GridSpec { m, periods })
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn total_points(&self) -> u64 {
        (self.m as u64).pow(self.dim() as u32)
    }

    /// Weight of one lattice cell: Π periodsᵢ / m.
    pub fn cell_weight(&self) -> f64 {
        self.periods.iter().map(|p| p / self.m as f64).product()
    }

    fn decode(&self, mut index: u64, out: &mut [f64]) {
        let m = self.m as u64;
        for axis in (0..self.dim()).rev() {
            let k = index % m;
            index /= m;
            out[axis] = self.periods[axis] * (k as f64) / self.m as f64;
        }
    }
}

/// Lattice-point and n = 6 gating for the global suites.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max_points: u64,
    /// n = 6 lattice integrals cost an order-6 jet pipeline per point and
    /// are excluded unless explicitly enabled.
    pub allow_n6: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_points: 2_000_000,
            allow_n6: false,
        }
    }
}

impl Budget {
    fn check(&self, grid: &GridSpec) -> Result<()> {
        let points = grid.total_points();
        if points > self.max_points {
            return Err(Error::BudgetExceeded {
                points,
                budget: self.max_points,
            });
        }
        Ok(())
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n >= 6 && !self.allow_n6 {
            return Err(Error::BudgetExceeded {
                points: u64::MAX,
                budget: self.max_points,
            });
        }
        Ok(())
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Evaluate `f` at every lattice point (in parallel, deterministic order).
pub fn map_lattice<T, F>(grid: &GridSpec, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[f64]) -> Result<T> + Sync,
{
    let dim = grid.dim();
    (0..grid.total_points())
        .into_par_iter()
        .map(|index| {
            let mut pt = vec![0.0; dim];
            grid.decode(index, &mut pt);
            f(&pt)
        })
        .collect()
}

/// Rectangle-rule integral of a smooth periodic sampler over the box.
pub fn integrate_periodic<F>(grid: &GridSpec, budget: &Budget, sampler: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    budget.check(grid)?;
    let values = map_lattice(grid, sampler)?;
    Ok(pairwise_sum(&values) * grid.cell_weight())
}

/// Global Q-curvature integrals over a periodic metric.
#[derive(Debug, Clone, Copy)]
pub struct TotalQ {
    pub n: usize,
    pub m: usize,
    /// ∫ Q dv_g
    pub int_q: f64,
    /// ∫ v^{(n)} dv_g
    pub int_v_top: f64,
    /// ∫ Σ (n−2k) p*_{2k} v^{(n−2k)} dv_g, a pure divergence (≈ 0)
    pub int_divergence: f64,
    /// ∫ Σ 2k p*_{2k} v^{(n−2k)} dv_g, a pure divergence (≈ 0)
    pub int_divergence_dual: f64,
    /// ∫ dv_g
    pub volume: f64,
    /// |2 c_{n/2} ∫Q − ∫v^{(n)}|
    pub global_identity_residual: f64,
}

/// Integrate Q·dv, v^{(n)}·dv and the divergence combinations over the
/// torus declared by the spec's periods.
pub fn total_q(spec: &MetricSpec, m: usize, budget: &Budget) -> Result<TotalQ> {
    let n = spec.dim;
    budget.check_dim(n)?;
    let periods = spec
        .periods
        .clone()
        .ok_or_else(|| Error::InvalidSpec("metric spec declares no periods".into()))?;
    let grid = GridSpec::new(m, periods)?;
    budget.check(&grid)?;
    let order = holographic::default_order(n);
    let samples = map_lattice(&grid, |pt| holographic::sample_point(spec, pt, order))?;
    let w = grid.cell_weight();
    let collect = |f: &dyn Fn(&holographic::PointSample) -> f64| -> f64 {
        let vals: Vec<f64> = samples.iter().map(f).collect();
        pairwise_sum(&vals) * w
    };
    let int_q = collect(&|s| s.q * s.density);
    let int_v_top = collect(&|s| s.v_top * s.density);
    let int_divergence = collect(&|s| s.divergence_term * s.density);
    let int_divergence_dual = collect(&|s| s.divergence_dual * s.density);
    let volume = collect(&|s| s.density);
    Ok(TotalQ {
        n,
        m,
        int_q,
        int_v_top,
        int_divergence,
        int_divergence_dual,
        volume,
        global_identity_residual: (2.0 * c_half(n) * int_q - int_v_top).abs(),
    })
}
