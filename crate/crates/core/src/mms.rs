//! Manufactured solution for the coupled problem, its forcing terms, error
//! norms and observed convergence rates.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fem::{quadrature::MAX_EXACTNESS, FeSpace};
use crate::params::PhysicalParams;

/// `X(s) = sin²(πs) sin(2πs)` and its derivatives up to order four.
fn profile(s: f64) -> [f64; 5] {
    let (s2, c2) = (2.0 * PI * s).sin_cos();
    let (s4, c4) = (4.0 * PI * s).sin_cos();
    let p2 = PI * PI;
    [
        0.5 * s2 - 0.25 * s4,
        PI * c2 - PI * c4,
        -2.0 * p2 * s2 + 4.0 * p2 * s4,
        -4.0 * p2 * PI * c2 + 16.0 * p2 * PI * c4,
        8.0 * p2 * p2 * s2 - 64.0 * p2 * p2 * s4,
    ]
}

/// Antiderivative of `X` vanishing at 0 and 1, with derivatives `[Y, Y', Y'']`.
fn profile_integral(s: f64) -> [f64; 3] {
    let x = profile(s);
    [
        -(2.0 * PI * s).cos() / (4.0 * PI) + (4.0 * PI * s).cos() / (16.0 * PI) + 3.0 / (16.0 * PI),
        x[0],
        x[1],
    ]
}

/// `(π/2) sin(π(z+1))` with derivatives `[v, v', v'']`.
fn depth_u1(z: f64) -> [f64; 3] {
    let (s, c) = (PI * (z + 1.0)).sin_cos();
    [0.5 * PI * s, 0.5 * PI * PI * c, -0.5 * PI * PI * PI * s]
}

/// `sin²(π(z+1)/2)` with derivatives `[v, v', v'']`.
fn depth_u3(z: f64) -> [f64; 3] {
    let (s, c) = (PI * (z + 1.0)).sin_cos();
    [0.5 * (1.0 - c), 0.5 * PI * s, 0.5 * PI * PI * c]
}

/// Divergence-free fluid velocity, zero pressure and a hinged plate mode,
/// all decaying like `e^{-t}` with amplitude `zeta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactSolution {
    pub zeta: f64,
}

impl Default for ExactSolution {
    fn default() -> Self {
        Self {
            zeta: 1.0 / (60.0 * PI.powi(4)),
        }
    }
}

impl ExactSolution {
    pub fn new(zeta: f64) -> Self {
        Self { zeta }
    }

    fn amplitude(&self, t: f64) -> f64 {
        self.zeta * (-t).exp()
    }

    pub fn velocity(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let a = self.amplitude(t);
        let (yx, xy) = (profile_integral(x[0]), profile(x[1]));
        let xx = profile(x[0]);
        [
            a * yx[0] * xy[0] * depth_u1(x[2])[0],
            0.0,
            -a * xx[0] * xy[0] * depth_u3(x[2])[0],
        ]
    }

    /// `g[i][j] = ∂u_i/∂x_j`
    pub fn velocity_gradient(&self, x: [f64; 3], t: f64) -> [[f64; 3]; 3] {
        let a = self.amplitude(t);
        let (yx, xx, xy) = (profile_integral(x[0]), profile(x[0]), profile(x[1]));
        let (z1, z3) = (depth_u1(x[2]), depth_u3(x[2]));
        [
            [
                a * yx[1] * xy[0] * z1[0],
                a * yx[0] * xy[1] * z1[0],
                a * yx[0] * xy[0] * z1[1],
            ],
            [0.0; 3],
            [
                -a * xx[1] * xy[0] * z3[0],
                -a * xx[0] * xy[1] * z3[0],
                -a * xx[0] * xy[0] * z3[1],
            ],
        ]
    }

    pub fn velocity_laplacian(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let a = self.amplitude(t);
        let (yx, xx, xy) = (profile_integral(x[0]), profile(x[0]), profile(x[1]));
        let (z1, z3) = (depth_u1(x[2]), depth_u3(x[2]));
        [
            a * (yx[2] * xy[0] * z1[0] + yx[0] * xy[2] * z1[0] + yx[0] * xy[0] * z1[2]),
            0.0,
            -a * (xx[2] * xy[0] * z3[0] + xx[0] * xy[2] * z3[0] + xx[0] * xy[0] * z3[2]),
        ]
    }

    pub fn velocity_dt(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        self.velocity(x, t).map(|v| -v)
    }

    pub fn pressure(&self, _x: [f64; 3], _t: f64) -> f64 {
        0.0
    }

    pub fn pressure_gradient(&self, _x: [f64; 3], _t: f64) -> [f64; 3] {
        [0.0; 3]
    }

    /// Plate displacement; the third coordinate of `x` is ignored.
    pub fn displacement(&self, x: [f64; 3], t: f64) -> f64 {
        self.amplitude(t) * profile(x[0])[0] * profile(x[1])[0]
    }

    pub fn displacement_gradient(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let a = self.amplitude(t);
        let (px, py) = (profile(x[0]), profile(x[1]));
        [a * px[1] * py[0], a * px[0] * py[1], 0.0]
    }

    pub fn displacement_dt(&self, x: [f64; 3], t: f64) -> f64 {
        -self.displacement(x, t)
    }

    pub fn displacement_dtt(&self, x: [f64; 3], t: f64) -> f64 {
        self.displacement(x, t)
    }

    /// `z = -Δw`
    pub fn z(&self, x: [f64; 3], t: f64) -> f64 {
        let (px, py) = (profile(x[0]), profile(x[1]));
        -self.amplitude(t) * (px[2] * py[0] + px[0] * py[2])
    }

    pub fn z_gradient(&self, x: [f64; 3], t: f64) -> [f64; 3] {
        let a = self.amplitude(t);
        let (px, py) = (profile(x[0]), profile(x[1]));
        [
            -a * (px[3] * py[0] + px[1] * py[2]),
            -a * (px[2] * py[1] + px[0] * py[3]),
            0.0,
        ]
    }

    pub fn z_dtt(&self, x: [f64; 3], t: f64) -> f64 {
        self.z(x, t)
    }

    pub fn z_laplacian(&self, x: [f64; 3], t: f64) -> f64 {
        let (px, py) = (profile(x[0]), profile(x[1]));
        -self.amplitude(t) * (px[4] * py[0] + 2.0 * px[2] * py[2] + px[0] * py[4])
    }

    pub fn divergence(&self, x: [f64; 3], t: f64) -> f64 {
        let g = self.velocity_gradient(x, t);
        g[0][0] + g[1][1] + g[2][2]
    }
}

/// `f = ρ_f ∂t u − ν_f Δu + ∇p`
pub fn fluid_forcing(exact: &ExactSolution, x: [f64; 3], t: f64, params: &PhysicalParams) -> [f64; 3] {
    let (ut, lap, gp) = (
        exact.velocity_dt(x, t),
        exact.velocity_laplacian(x, t),
        exact.pressure_gradient(x, t),
    );
    std::array::from_fn(|i| params.rho_f * ut[i] - params.nu_f * lap[i] + gp[i])
}

/// `f_p = ω(ρ_p ∂tt w + ρ ∂tt z) − D Δz − p|plate`, with `ω` taken from `params`.
pub fn plate_forcing(exact: &ExactSolution, x: [f64; 3], t: f64, params: &PhysicalParams) -> f64 {
    let x = [x[0], x[1], 0.0];
    params.omega * (params.rho_p * exact.displacement_dtt(x, t) + params.rho_rot * exact.z_dtt(x, t))
        - params.d * exact.z_laplacian(x, t)
        - exact.pressure(x, t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    L2,
    /// Full norm: `sqrt(‖e‖² + ‖∇e‖²)`.
    H1,
}

/// Error of a discrete field against an exact one, integrated with the
/// highest available quadrature. `value` returns up to three components;
/// `gradient(x)[i]` is the gradient of component `i` (only used for `H1`).
pub fn error_norm(
    space: &FeSpace,
    coeffs: &[f64],
    value: impl Fn([f64; 3]) -> [f64; 3],
    gradient: impl Fn([f64; 3]) -> [[f64; 3]; 3],
    norm: Norm,
) -> f64 {
    let table = space.shape_table(MAX_EXACTNESS).expect("error rule");
    let npc = space.nodes_per_cell();
    let nc = space.components();
    let mut sum = 0.0;
    for c in 0..space.cell_count() {
        let map = space.cell_map(c);
        let nodes = space.cell_nodes(c);
        for q in 0..table.rule.len() {
            let x = map.map(table.rule.points[q]);
            let w = table.rule.weights[q] * map.det;
            let ex = value(x);
            let eg = if norm == Norm::H1 { gradient(x) } else { [[0.0; 3]; 3] };
            for comp in 0..nc {
                let mut uh = 0.0;
                let mut gh = [0.0; 3];
                for i in 0..npc {
                    let coef = coeffs[space.dof(nodes[i], comp)];
                    uh += coef * table.values[q][i];
                    if norm == Norm::H1 {
                        let g = map.physical_gradient(&table.dbary[q][i]);
                        for k in 0..3 {
                            gh[k] += coef * g[k];
                        }
                    }
                }
                sum += w * (uh - ex[comp]).powi(2);
                if norm == Norm::H1 {
                    for k in 0..space.dim() {
                        sum += w * (gh[k] - eg[comp][k]).powi(2);
                    }
                }
            }
        }
    }
    sum.sqrt()
}

/// `rate_i = log(e_{i-1}/e_i) / log(step_{i-1}/step_i)` for consecutive pairs.
pub fn observed_rate(errors: &[f64], steps: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != steps.len() {
        return Err(Error::UndefinedRate(format!(
            "{} errors for {} steps",
            errors.len(),
            steps.len()
        )));
    }
    if errors.len() < 2 {
        return Err(Error::UndefinedRate("need at least two levels".into()));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::UndefinedRate(format!("non-positive error {e}")));
    }
    if steps.windows(2).any(|w| !(w[1] < w[0]) || !(w[1] > 0.0)) {
        return Err(Error::UndefinedRate("steps must be positive and strictly decreasing".into()));
    }
    Ok(errors
        .windows(2)
        .zip(steps.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect())
}
