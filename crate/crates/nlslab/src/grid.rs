//! Radial discretization of d-dimensional radial functions.
//!
//! Fields are sampled on the offset nodes r_j = (j+1/2) h, h = R_max/N, so
//! the singular potential a/r^2 is never evaluated at the origin.  Integrals
//! over R^d reduce to omega_{d-1} * sum_j f(r_j) r_j^{d-1} h.  Everything
//! linear acts through the reduced representation v = r^{(d-1)/2} u, under
//! which the radial Laplacian becomes d^2/dr^2 minus a centrifugal term
//! (d-1)(d-3)/(4 r^2).  The canonical discrete Hamiltonian (Hardy form,
//! elliptic solves, time stepping) is the symmetric second-difference
//! Laplacian plus the a_eff/r^2 diagonal; sine-basis spectral transforms
//! back smoothing and differentiation utilities.

use crate::params::ProblemSpec;
use crate::transform::SinePlan;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Fraction of the Hardy form allowed to come from the innermost node before
/// the origin is declared under-resolved.
const ORIGIN_FRACTION_CAP: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("grid requires 3 <= d <= 6, got {0}")]
    BadDimension(u32),
    #[error("grid requires at least 8 nodes and positive radius")]
    BadShape,
    #[error("field contains non-finite samples")]
    NonFinite,
    #[error("origin under-resolved: innermost node carries fraction {fraction:.3e} of the Hardy form")]
    OriginIllConditioned { fraction: f64 },
    #[error("field dimension {field} does not match grid dimension {grid}")]
    DimensionMismatch { field: usize, grid: usize },
}

fn gamma_half(d: u32) -> f64 {
    // Gamma(d/2) for the supported dimensions.
    match d {
        3 => PI.sqrt() / 2.0,
        4 => 1.0,
        5 => 0.75 * PI.sqrt(),
        6 => 2.0,
        _ => unreachable!("dimension validated at grid construction"),
    }
}

/// Offset radial grid with quadrature weights and a cached spectral plan.
pub struct RadialGrid {
    d: u32,
    n: usize,
    r_max: f64,
    h: f64,
    omega: f64,
    nodes: Vec<f64>,
    /// omega_{d-1} * r_j^{d-1} * h.
    weights: Vec<f64>,
    plan: SinePlan,
}

impl RadialGrid {
    pub fn new(d: u32, n: usize, r_max: f64) -> Result<Arc<Self>, GridError> {
        if !(3..=6).contains(&d) {
            return Err(GridError::BadDimension(d));
        }
        if n < 8 || !(r_max > 0.0) {
            return Err(GridError::BadShape);
        }
        let h = r_max / n as f64;
        let omega = 2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d);
        let nodes: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) * h).collect();
        let weights: Vec<f64> = nodes
            .iter()
            .map(|&r| omega * r.powi(d as i32 - 1) * h)
            .collect();
        Ok(Arc::new(RadialGrid {
            d,
            n,
            r_max,
            h,
            omega,
            nodes,
            weights,
            plan: SinePlan::new(n),
        }))
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Centrifugal constant (d-1)(d-3)/4 of the reduced representation.
    pub fn centrifugal(&self) -> f64 {
        let d = self.d as f64;
        (d - 1.0) * (d - 3.0) / 4.0
    }

    /// Reduction exponent (d-1)/2.
    pub fn reduction_power(&self) -> f64 {
        (self.d as f64 - 1.0) / 2.0
    }

    /// Eigenvalue (k pi / R)^2 of -d^2/dr^2 on sine mode k.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let kp = k as f64 * PI / self.r_max;
        kp * kp
    }

    pub(crate) fn plan(&self) -> &SinePlan {
        &self.plan
    }
}

impl std::fmt::Debug for RadialGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialGrid")
            .field("d", &self.d)
            .field("n", &self.n)
            .field("r_max", &self.r_max)
            .finish()
    }
}

/// Conserved/monitored functionals of a field.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Observables {
    /// M(u) = ||u||_{L^2}^2.
    pub mass: f64,
    /// E_a(u) = kinetic_a/2 + mu/(alpha+2) * lp.
    pub energy: f64,
    /// Q(u) = ||u||^2 in the Hardy form (gradient plus a/r^2 term).
    pub kinetic_a: f64,
    /// ||u||_{L^{alpha+2}}^{alpha+2}.
    pub lp: f64,
}

impl Observables {
    pub fn zero() -> Self {
        Observables {
            mass: 0.0,
            energy: 0.0,
            kinetic_a: 0.0,
            lp: 0.0,
        }
    }
}

/// Complex samples of a radial function u(|x|).
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<Complex64>,
}

/// Samples of the reduced function v = r^{(d-1)/2} u.
#[derive(Debug, Clone)]
pub struct ReducedField {
    grid: Arc<RadialGrid>,
    values: Vec<Complex64>,
}

impl RadialField {
    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        RadialField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        RadialField { grid, values }
    }

    pub fn from_real_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    /// amplitude * exp(-(r/width)^2).
    pub fn gaussian(grid: Arc<RadialGrid>, amplitude: f64, width: f64) -> Self {
        Self::from_real_fn(grid, |r| amplitude * (-(r / width).powi(2)).exp())
    }

    pub fn from_values(grid: Arc<RadialGrid>, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::DimensionMismatch {
                field: values.len(),
                grid: grid.len(),
            });
        }
        Ok(RadialField { grid, values })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn is_valid(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, c: Complex64) {
        for z in &mut self.values {
            *z *= c;
        }
    }

    /// M(u) = omega_{d-1} sum |u_j|^2 r_j^{d-1} h.
    pub fn mass(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(z, &w)| z.norm_sqr() * w)
            .sum()
    }

    /// ||u||_{L^p}^p.
    pub fn lp_pow(&self, p: f64) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(z, &w)| z.norm().powf(p) * w)
            .sum()
    }

    /// ||u||_{L^p}.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0);
        self.lp_pow(p).powf(1.0 / p)
    }

    /// L^2 distance to another field on the same grid.
    pub fn l2_distance(&self, other: &RadialField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.grid.weights())
            .map(|((x, y), &w)| (x - y).norm_sqr() * w)
            .sum::<f64>()
            .sqrt()
    }

    /// Fraction of the mass carried by the outer 10% of the domain.
    pub fn boundary_mass_fraction(&self) -> f64 {
        let total = self.mass();
        if total == 0.0 {
            return 0.0;
        }
        let cut = 0.9 * self.grid.r_max();
        let outer: f64 = self
            .values
            .iter()
            .zip(self.grid.nodes())
            .zip(self.grid.weights())
            .filter(|((_, &r), _)| r > cut)
            .map(|((z, _), &w)| z.norm_sqr() * w)
            .sum();
        outer / total
    }

    pub fn to_reduced(&self) -> ReducedField {
        let nu = self.grid.reduction_power();
        let values = self
            .values
            .iter()
            .zip(self.grid.nodes())
            .map(|(z, &r)| z * r.powf(nu))
            .collect();
        ReducedField {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// Hardy quadratic form Q(u) = int |grad u|^2 + a |u|^2 / r^2 dx.
    ///
    /// Evaluated as the quadratic form of the discrete reduced Hamiltonian
    /// (the same operator the integrator exponentiates), so that conservation
    /// monitors see exactly what the dynamics conserves:
    /// omega * (h <v, A v> + a_eff * h sum |v_j|^2/r_j^2),
    /// with A the Dirichlet difference Laplacian and a_eff = a + (d-1)(d-3)/4.
    pub fn hardy_form(&self, a: f64) -> Result<f64, GridError> {
        if !self.is_valid() {
            return Err(GridError::NonFinite);
        }
        let grid = &self.grid;
        let v = self.to_reduced();
        let h = grid.h();
        let n = grid.len();
        // h <v, A v> = (1/h) [ sum |v_{j+1}-v_j|^2 + 2|v_0|^2 + 2|v_{N-1}|^2 ].
        let mut kin = 2.0 * (v.values[0].norm_sqr() + v.values[n - 1].norm_sqr());
        for j in 0..n - 1 {
            kin += (v.values[j + 1] - v.values[j]).norm_sqr();
        }
        kin /= h;
        let a_eff = a + grid.centrifugal();
        let mut pot = 0.0;
        let mut inner = 0.0;
        for (j, (z, &r)) in v.values.iter().zip(grid.nodes()).enumerate() {
            let term = z.norm_sqr() / (r * r) * h;
            pot += term;
            if j == 0 {
                inner = term;
            }
        }
        let total = kin + a_eff.abs() * pot;
        if total > 0.0 {
            let fraction = a_eff.abs() * inner / total;
            if fraction > ORIGIN_FRACTION_CAP {
                return Err(GridError::OriginIllConditioned { fraction });
            }
        }
        Ok(grid.omega() * (kin + a_eff * pot))
    }

    /// All four observables of the spec's energy definition.
    pub fn energy(&self, spec: &ProblemSpec) -> Result<Observables, GridError> {
        let mass = self.mass();
        if mass == 0.0 {
            return Ok(Observables::zero());
        }
        let kinetic_a = self.hardy_form(spec.a)?;
        let lp = self.lp_pow(spec.alpha + 2.0);
        let energy = 0.5 * kinetic_a + spec.mu.mu() / (spec.alpha + 2.0) * lp;
        Ok(Observables {
            mass,
            energy,
            kinetic_a,
            lp,
        })
    }

    /// Radial derivative u_r at the nodes, via the spectral derivative of the
    /// reduced field: u_r = (v' - nu v / r) / r^nu.
    pub fn radial_derivative(&self) -> Vec<Complex64> {
        let grid = &self.grid;
        let nu = grid.reduction_power();
        let v = self.to_reduced();
        let plan = grid.plan();
        let sums = plan.sine_sums(&v.values);
        let b: Vec<Complex64> = sums
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let k = i + 1;
                s * plan.mode_norm(k) * (k as f64 * PI / grid.r_max())
            })
            .collect();
        let vprime = plan.eval_cosine(&b);
        (0..grid.len())
            .map(|j| {
                let r = grid.nodes()[j];
                (vprime[j] - v.values[j] * (nu / r)) / r.powf(nu)
            })
            .collect()
    }

    /// Cubic (Catmull-Rom) interpolation of the field at radius `x`, with
    /// even extension through the origin and zero beyond R_max.
    pub fn interpolate(&self, x: f64) -> Complex64 {
        let grid = &self.grid;
        let h = grid.h();
        let n = grid.len() as isize;
        if x >= grid.r_max() {
            return Complex64::new(0.0, 0.0);
        }
        let t = x / h - 0.5;
        let j0 = t.floor() as isize;
        let frac = t - j0 as f64;
        let sample = |j: isize| -> Complex64 {
            if j < 0 {
                // Even extension: node -1-j mirrors node j.
                let m = -1 - j;
                if m < n {
                    self.values[m as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            } else if j < n {
                self.values[j as usize]
            } else {
                Complex64::new(0.0, 0.0)
            }
        };
        let p0 = sample(j0 - 1);
        let p1 = sample(j0);
        let p2 = sample(j0 + 1);
        let p3 = sample(j0 + 2);
        let t2 = frac * frac;
        let t3 = t2 * frac;
        0.5 * ((p1 * 2.0)
            + (p2 - p0) * frac
            + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
            + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
    }

    /// The scaling u -> lambda^{2/alpha} u(lambda .), resampled onto the same
    /// grid.  Returns the scaled field together with the fraction of mass the
    /// rescale pushed outside the domain (nonzero only for lambda < 1).
    pub fn apply_scaling(&self, lambda: f64, spec: &ProblemSpec) -> (RadialField, f64) {
        assert!(lambda > 0.0);
        let amp = lambda.powf(2.0 / spec.alpha);
        let values: Vec<Complex64> = self
            .grid
            .nodes()
            .iter()
            .map(|&r| self.interpolate(lambda * r) * amp)
            .collect();
        let total = self.mass();
        let leak = if lambda >= 1.0 || total == 0.0 {
            0.0
        } else {
            let cut = lambda * self.grid.r_max();
            let outside: f64 = self
                .values
                .iter()
                .zip(self.grid.nodes())
                .zip(self.grid.weights())
                .filter(|((_, &r), _)| r > cut)
                .map(|((z, _), &w)| z.norm_sqr() * w)
                .sum();
            outside / total
        };
        (
            RadialField {
                grid: Arc::clone(&self.grid),
                values,
            },
            leak,
        )
    }
}

impl ReducedField {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Effective coupling in the reduced representation.
    pub fn a_eff(&self, a: f64) -> f64 {
        a + self.grid.centrifugal()
    }

    pub fn from_reduced(&self) -> RadialField {
        let nu = self.grid.reduction_power();
        let values = self
            .values
            .iter()
            .zip(self.grid.nodes())
            .map(|(z, &r)| z / r.powf(nu))
            .collect();
        RadialField {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// Discrete L^2 norm on [0, R]: sqrt(h sum |v_j|^2).
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.h();
        self.values
            .iter()
            .map(|z| z.norm_sqr() * h)
            .sum::<f64>()
            .sqrt()
    }

    /// Exact free flow e^{i tau d^2/dr^2}: each sine mode picks up the phase
    /// e^{-i tau (k pi / R)^2}.  Unitary in the discrete L^2 norm.
    pub fn laplacian_halfstep(&self, tau: f64) -> ReducedField {
        let grid = &self.grid;
        let plan = grid.plan();
        let sums = plan.sine_sums(&self.values);
        let b: Vec<Complex64> = sums
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let k = i + 1;
                let phase = Complex64::from_polar(1.0, -tau * grid.eigenvalue(k));
                s * plan.mode_norm(k) * phase
            })
            .collect();
        ReducedField {
            grid: Arc::clone(&self.grid),
            values: plan.eval_sine(&b),
        }
    }

    /// Applies the discrete reduced Hamiltonian H = A + a_eff/r^2, where A is
    /// the second-difference Laplacian with Dirichlet values at r = 0 and R
    /// enforced by odd reflection through the half-offset boundary nodes.
    /// This is the operator whose quadratic form `hardy_form` evaluates and
    /// whose flow `cayley_step` integrates.
    pub fn apply_hamiltonian(&self, a: f64) -> ReducedField {
        let grid = &self.grid;
        let n = grid.len();
        let h = grid.h();
        let inv_h2 = 1.0 / (h * h);
        let a_eff = self.a_eff(a);
        let v = &self.values;
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let left = if j == 0 { -v[0] } else { v[j - 1] };
            let right = if j == n - 1 { -v[n - 1] } else { v[j + 1] };
            let r = grid.nodes()[j];
            out.push((v[j] * 2.0 - left - right) * inv_h2 + v[j] * (a_eff / (r * r)));
        }
        ReducedField {
            grid: Arc::clone(&self.grid),
            values: out,
        }
    }

    /// One Crank-Nicolson step of i v_t = H v with the full linear Hamiltonian
    /// (difference Laplacian plus inverse-square potential):
    /// (I + i tau/2 H) v_new = (I - i tau/2 H) v.
    ///
    /// The Cayley transform of a symmetric H is exactly unitary, so mass is
    /// conserved to solver roundoff, and since it commutes with H the linear
    /// energy <v, Hv> is conserved exactly -- stiff near-origin modes pick up
    /// bounded phase errors instead of destabilizing the step.
    pub fn cayley_step(&self, tau: f64, a: f64) -> ReducedField {
        let grid = &self.grid;
        let n = grid.len();
        let h = grid.h();
        let inv_h2 = 1.0 / (h * h);
        let a_eff = self.a_eff(a);
        let i_theta = Complex64::new(0.0, 0.5 * tau);
        let off = -i_theta * inv_h2;
        let hv = self.apply_hamiltonian(a);
        let rhs: Vec<Complex64> = self
            .values
            .iter()
            .zip(&hv.values)
            .map(|(v, hv)| v - i_theta * hv)
            .collect();
        let diag = |j: usize| -> Complex64 {
            let lap = if j == 0 || j == n - 1 { 3.0 } else { 2.0 };
            let r = grid.nodes()[j];
            Complex64::new(1.0, 0.0) + i_theta * (lap * inv_h2 + a_eff / (r * r))
        };
        // Thomas algorithm; (I + i tau/2 H) has |diag| >= 1 so no pivoting.
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        c[0] = off / diag(0);
        out[0] = rhs[0] / diag(0);
        for j in 1..n {
            let m = diag(j) - off * c[j - 1];
            if j < n - 1 {
                c[j] = off / m;
            }
            out[j] = (rhs[j] - off * out[j - 1]) / m;
        }
        for j in (0..n - 1).rev() {
            let next = out[j + 1];
            out[j] -= c[j] * next;
        }
        ReducedField {
            grid: Arc::clone(&self.grid),
            values: out,
        }
    }

    /// Applies the reduced operator -d^2/dr^2 + a_eff/r^2 spectrally.
    pub fn apply_operator(&self, a: f64) -> ReducedField {
        let grid = &self.grid;
        let plan = grid.plan();
        let sums = plan.sine_sums(&self.values);
        let b: Vec<Complex64> = sums
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let k = i + 1;
                s * plan.mode_norm(k) * grid.eigenvalue(k)
            })
            .collect();
        let mut out = plan.eval_sine(&b);
        let a_eff = self.a_eff(a);
        for (z, (&v, &r)) in out.iter_mut().zip(self.values.iter().zip(grid.nodes())) {
            *z += v * (a_eff / (r * r));
        }
        ReducedField {
            grid: Arc::clone(&self.grid),
            values: out,
        }
    }

    /// Applies (1 + c - d^2/dr^2)^{-1} spectrally (Sobolev preconditioner).
    pub fn apply_smoother(&self, c: f64) -> ReducedField {
        let grid = &self.grid;
        let plan = grid.plan();
        let sums = plan.sine_sums(&self.values);
        let b: Vec<Complex64> = sums
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let k = i + 1;
                s * plan.mode_norm(k) / (1.0 + c + grid.eigenvalue(k))
            })
            .collect();
        ReducedField {
            grid: Arc::clone(&self.grid),
            values: plan.eval_sine(&b),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Sign;

    fn spec3() -> ProblemSpec {
        ProblemSpec::new(3, 0.0, 2.0, Sign::Focusing).unwrap()
    }

    fn gaussian_grid(n: usize) -> Arc<RadialGrid> {
        RadialGrid::new(3, n, 20.0).unwrap()
    }

    // Closed forms for u = exp(-r^2) in dimension d:
    //   int e^{-2r^2} dx = (pi/2)^{d/2}
    //   int |grad u|^2 dx = int 4 r^2 e^{-2r^2} dx = d * (pi/2)^{d/2}... (d=3: 3*(pi/2)^{3/2})
    //   int e^{-2r^2}/r^2 dx (d=3) = 4 pi int e^{-2r^2} dr = 2 pi sqrt(pi/2)

    #[test]
    fn gaussian_mass_matches_closed_form() {
        for &d in &[3u32, 4, 5] {
            let grid = RadialGrid::new(d, 2048, 20.0).unwrap();
            let u = RadialField::from_real_fn(grid, |r| (-r * r).exp());
            let exact = (PI / 2.0).powf(d as f64 / 2.0);
            assert!(
                (u.mass() - exact).abs() < 1e-8 * exact,
                "d={d}: {} vs {exact}",
                u.mass()
            );
        }
    }

    #[test]
    fn gaussian_quadrature_is_roundoff_accurate() {
        // For rapidly decaying profiles the midpoint rule on the offset grid
        // is superalgebraic: errors sit at roundoff already for modest N.
        let exact = (PI / 2.0).powf(1.5);
        for &n in &[128usize, 256, 512] {
            let grid = RadialGrid::new(3, n, 12.0).unwrap();
            let u = RadialField::from_real_fn(grid, |r| (-r * r).exp());
            let err = (u.mass() - exact).abs();
            assert!(err < 1e-13 * exact, "n={n}: error {err:.3e}");
        }
    }

    #[test]
    fn zero_field_has_zero_observables() {
        let grid = gaussian_grid(256);
        let u = RadialField::zeros(grid);
        let obs = u.energy(&spec3()).unwrap();
        assert_eq!(obs.mass, 0.0);
        assert_eq!(obs.energy, 0.0);
        assert_eq!(obs.kinetic_a, 0.0);
        assert_eq!(obs.lp, 0.0);
    }

    #[test]
    fn hardy_form_gaussian_oracles() {
        let grid = gaussian_grid(2048);
        let u = RadialField::from_real_fn(grid, |r| (-r * r).exp());
        let grad_exact = 3.0 * (PI / 2.0).powf(1.5);
        let k0 = u.hardy_form(0.0).unwrap();
        // Second-difference form: O(h^2) relative error, h ~ 1e-2 here.
        assert!((k0 - grad_exact).abs() < 2e-4 * grad_exact, "{k0} vs {grad_exact}");

        // a > 0 strictly increases the form.
        let kpos = u.hardy_form(0.5).unwrap();
        assert!(kpos > k0);

        // a = -0.2: subtract 0.2 * int |u|^2/r^2 = 0.2 * 2 pi sqrt(pi/2).
        let inv_sq = 2.0 * PI * (PI / 2.0).sqrt();
        let kneg = u.hardy_form(-0.2).unwrap();
        let expected = grad_exact - 0.2 * inv_sq;
        assert!((kneg - expected).abs() < 5e-4 * expected.abs(), "{kneg} vs {expected}");
    }

    #[test]
    fn hardy_form_affine_in_a() {
        let grid = gaussian_grid(512);
        let u = RadialField::from_real_fn(grid, |r| (-0.7 * r * r).exp() * (1.0 + r));
        let q0 = u.hardy_form(0.0).unwrap();
        let q1 = u.hardy_form(0.1).unwrap();
        let q2 = u.hardy_form(0.2).unwrap();
        // Affine: equal increments.
        assert!(((q2 - q1) - (q1 - q0)).abs() < 1e-10 * q0.abs());
    }

    #[test]
    fn lp_norm_p2_equals_sqrt_mass() {
        let grid = gaussian_grid(256);
        let u = RadialField::from_real_fn(grid, |r| (-r * r).exp() * (2.0 - r));
        assert!((u.lp_norm(2.0) - u.mass().sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lp4_gaussian_oracle() {
        // ||u||_{L^4}^4 = int e^{-4 r^2} dx = (pi/4)^{3/2} in d=3.
        let grid = gaussian_grid(1024);
        let u = RadialField::from_real_fn(grid, |r| (-r * r).exp());
        let exact = (PI / 4.0).powf(1.5);
        assert!((u.lp_pow(4.0) - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn reduction_round_trip() {
        for &d in &[3u32, 4, 5, 6] {
            let grid = RadialGrid::new(d, 128, 10.0).unwrap();
            let u = RadialField::from_fn(grid, |r| Complex64::new((-r).exp(), (0.3 * r).sin()));
            let back = u.to_reduced().from_reduced();
            let max_err = u
                .values()
                .iter()
                .zip(back.values())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            assert!(max_err < 1e-14, "d={d}: {max_err}");
        }
    }

    #[test]
    fn centrifugal_constants() {
        assert_eq!(RadialGrid::new(3, 16, 1.0).unwrap().centrifugal(), 0.0);
        assert_eq!(RadialGrid::new(5, 16, 1.0).unwrap().centrifugal(), 2.0);
    }

    #[test]
    fn laplacian_halfstep_is_unitary_and_composes() {
        let grid = gaussian_grid(256);
        let u = RadialField::from_fn(grid, |r| Complex64::new((-r * r).exp(), 0.1 * (-r).exp()));
        let v = u.to_reduced();
        let norm0 = v.l2_norm();

        // tau = 0 is the identity.
        let id = v.laplacian_halfstep(0.0);
        for (a, b) in id.values().iter().zip(v.values()) {
            assert!((a - b).norm() < 1e-12);
        }

        let w = v.laplacian_halfstep(0.37);
        assert!((w.l2_norm() - norm0).abs() < 1e-12 * norm0);

        // Composition: step(t1) then step(t2) equals step(t1+t2).
        let two = v.laplacian_halfstep(0.2).laplacian_halfstep(0.5);
        let one = v.laplacian_halfstep(0.7);
        let err: f64 = two
            .values()
            .iter()
            .zip(one.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-12 * norm0);
    }

    #[test]
    fn single_mode_gets_diagonal_phase() {
        let grid = gaussian_grid(64);
        let k = 5usize;
        let rm = grid.r_max();
        let v = RadialField::from_real_fn(Arc::clone(&grid), |r| (k as f64 * PI * r / rm).sin());
        // Interpret the samples directly as a reduced field.
        let red = ReducedField {
            grid: Arc::clone(&grid),
            values: v.values().to_vec(),
        };
        let tau = 0.13;
        let out = red.laplacian_halfstep(tau);
        let phase = Complex64::from_polar(1.0, -tau * grid.eigenvalue(k));
        for (a, b) in out.values().iter().zip(red.values()) {
            assert!((a - b * phase).norm() < 1e-12);
        }
    }

    #[test]
    fn scaling_identity_and_mass_ratio() {
        let grid = RadialGrid::new(3, 4096, 40.0).unwrap();
        let spec = spec3();
        let u = RadialField::from_real_fn(grid, |r| (-r * r).exp());

        let (same, leak) = u.apply_scaling(1.0, &spec);
        assert_eq!(leak, 0.0);
        assert!((same.mass() - u.mass()).abs() < 1e-9 * u.mass());

        // lambda = 2, s_c = 1/2: mass ratio 2^{-2 s_c} = 1/2.
        let (scaled, _) = u.apply_scaling(2.0, &spec);
        assert!(
            (scaled.mass() / u.mass() - 0.5).abs() < 1e-6,
            "ratio {}",
            scaled.mass() / u.mass()
        );

        // mass^{1-s_c} * kinetic^{s_c} is scale-invariant up to the O(h^2)
        // bias of the difference kinetic form.
        let inv0 = u.mass().powf(0.5) * u.hardy_form(0.0).unwrap().powf(0.5);
        let inv1 = scaled.mass().powf(0.5) * scaled.hardy_form(0.0).unwrap().powf(0.5);
        assert!((inv0 - inv1).abs() < 2e-4 * inv0, "{inv0} vs {inv1}");
    }

    #[test]
    fn scaling_down_reports_leak() {
        let grid = RadialGrid::new(3, 512, 10.0).unwrap();
        let spec = spec3();
        // Slowly decaying field: scaling with lambda < 1 pushes mass out.
        let u = RadialField::from_real_fn(grid, |r| 1.0 / (1.0 + r * r));
        let (_, leak) = u.apply_scaling(0.2, &spec);
        assert!(leak > 0.0);
    }

    #[test]
    fn radial_derivative_matches_analytic() {
        let grid = gaussian_grid(1024);
        let u = RadialField::from_real_fn(grid, |r| (-r * r).exp());
        let du = u.radial_derivative();
        let mut max_err = 0.0f64;
        for (j, &r) in u.grid().nodes().iter().enumerate() {
            if r > 8.0 {
                break;
            }
            let exact = -2.0 * r * (-r * r).exp();
            max_err = max_err.max((du[j].re - exact).abs());
        }
        assert!(max_err < 1e-6, "max derivative error {max_err}");
    }

    #[test]
    fn hardy_form_is_quadratic_form_of_hamiltonian() {
        let grid = RadialGrid::new(5, 384, 15.0).unwrap();
        let a = -0.3;
        let u = RadialField::from_fn(grid, |r| Complex64::new((-r * r).exp(), 0.2 * (-r).exp() * r));
        let v = u.to_reduced();
        let hv = v.apply_hamiltonian(a);
        let h = u.grid().h();
        let form: f64 = v
            .values()
            .iter()
            .zip(hv.values())
            .map(|(x, y)| (x.conj() * y).re * h)
            .sum();
        let direct = u.hardy_form(a).unwrap();
        assert!(
            (u.grid().omega() * form - direct).abs() < 1e-10 * direct.abs(),
            "{} vs {direct}",
            u.grid().omega() * form
        );
    }

    #[test]
    fn cayley_step_is_unitary_and_conserves_linear_energy() {
        let grid = gaussian_grid(512);
        let a = 0.5;
        let u = RadialField::from_fn(grid, |r| Complex64::new((-r * r).exp(), 0.1 * (-r).exp()));
        let mut v = u.to_reduced();
        let norm0 = v.l2_norm();
        let energy = |v: &ReducedField| -> f64 {
            let hv = v.apply_hamiltonian(a);
            v.values()
                .iter()
                .zip(hv.values())
                .map(|(x, y)| (x.conj() * y).re)
                .sum()
        };
        let e0 = energy(&v);
        // Deliberately stiff step: tau * a/r_0^2 >> 1.
        for _ in 0..50 {
            v = v.cayley_step(1e-2, a);
        }
        assert!((v.l2_norm() - norm0).abs() < 1e-12 * norm0);
        let e1 = energy(&v);
        assert!((e1 - e0).abs() < 1e-10 * e0.abs(), "{e0} vs {e1}");
    }

    #[test]
    fn cayley_step_is_time_reversible() {
        let grid = gaussian_grid(256);
        let u = RadialField::from_real_fn(grid, |r| (-0.5 * r * r).exp());
        let v = u.to_reduced();
        let back = v.cayley_step(0.02, -0.2).cayley_step(-0.02, -0.2);
        let err: f64 = back
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-12, "reversal error {err}");
    }

    #[test]
    fn cayley_step_matches_free_flow_for_smooth_data() {
        // With a_eff = 0 the exact flow is the spectral half step; CN agrees
        // to O(tau^3 + tau h^2) per step on smooth, well-resolved data.
        let grid = RadialGrid::new(3, 2048, 20.0).unwrap();
        let u = RadialField::from_real_fn(grid, |r| (-r * r).exp());
        let v = u.to_reduced();
        let tau = 1e-4;
        let cn = v.cayley_step(tau, 0.0);
        let exact = v.laplacian_halfstep(tau);
        let err: f64 = cn
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-5, "step discrepancy {err}");
    }

    #[test]
    fn origin_ill_conditioning_detected() {
        let grid = RadialGrid::new(3, 64, 10.0).unwrap();
        // Strongly singular profile concentrates the form at the first node.
        let u = RadialField::from_real_fn(grid, |r| r.powf(-0.95) * (-r * r).exp());
        match u.hardy_form(-0.24) {
            Err(GridError::OriginIllConditioned { fraction }) => assert!(fraction > 0.25),
            other => panic!("expected ill-conditioning, got {other:?}"),
        }
    }
}
