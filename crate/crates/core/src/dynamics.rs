//! Plant models and fixed-step RK4 discretization.
//!
//! Models expose a continuous vector field `xdot = f_c(x, u)` with analytic
//! Jacobians; [`rk4_step`] turns it into the discrete map `x+ = f(x, u)` under
//! a zero-order hold on `u`, and [`rk4_step_with_jacobians`] also propagates
//! the Jacobians through the four stages.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait SystemModel {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn sample_time(&self) -> f64;

    fn vector_field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()>;

    /// `(df_c/dx, df_c/du)` at `(x, u)`.
    fn vector_field_jacobian(&self, x: &[f64], u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)>;

    /// Output map. Both shipped models output the leading `p` states (position).
    fn output(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&x[..self.output_dim()]);
    }

    /// Index of the state each output reads, when `h` is a coordinate selector.
    fn output_state_index(&self, k: usize) -> usize {
        k
    }

    /// Input that keeps the model at rest.
    fn equilibrium_input(&self) -> Vec<f64>;

    /// The rest state sharing the configuration part of `x` (velocities zeroed).
    fn rest_state(&self, x: &[f64]) -> Vec<f64>;

    /// True when the vector field is affine in `(x, u)`.
    fn is_linear(&self) -> bool {
        false
    }
}

/// `d^2 (w' x+) / d(x, u)^2` for one RK4 step, by forward differences of the
/// exact first derivatives. Returned as a dense symmetric `(n + m)` square.
pub fn rk4_weighted_curvature<M: SystemModel + ?Sized>(model: &M, x: &[f64], u: &[f64], w: &[f64]) -> Result<DMatrix<f64>> {
    let (n, m) = (x.len(), u.len());
    let mut hess = DMatrix::<f64>::zeros(n + m, n + m);
    if model.is_linear() || w.iter().all(|v| *v == 0.0) {
        return Ok(hess);
    }
    let wv = nalgebra::DVector::from_column_slice(w);
    let pulled = |x: &[f64], u: &[f64]| -> Result<nalgebra::DVector<f64>> {
        let (_, fx, fu) = rk4_step_with_jacobians(model, x, u)?;
        let mut g = nalgebra::DVector::zeros(n + m);
        g.rows_mut(0, n).copy_from(&fx.tr_mul(&wv));
        g.rows_mut(n, m).copy_from(&fu.tr_mul(&wv));
        Ok(g)
    };
    let base = pulled(x, u)?;
    let (mut xp, mut up) = (x.to_vec(), u.to_vec());
    for col in 0..n + m {
        let slot = if col < n { &mut xp[col] } else { &mut up[col - n] };
        let v = *slot;
        let h = 1e-7 * v.abs().max(1.0);
        *slot = v + h;
        let gp = pulled(&xp, &up)?;
        if col < n {
            xp[col] = v;
        } else {
            up[col - n] = v;
        }
        hess.set_column(col, &((gp - &base) / h));
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    Ok(sym)
}

/// One classical Runge-Kutta step of length `T_s` with `u` held constant.
pub fn rk4_step<M: SystemModel + ?Sized>(model: &M, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let n = model.state_dim();
    let h = model.sample_time();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    model.vector_field(x, u, &mut k1)?;
    axpy_into(&mut tmp, x, 0.5 * h, &k1);
    model.vector_field(&tmp, u, &mut k2)?;
    axpy_into(&mut tmp, x, 0.5 * h, &k2);
    model.vector_field(&tmp, u, &mut k3)?;
    axpy_into(&mut tmp, x, h, &k3);
    model.vector_field(&tmp, u, &mut k4)?;

    Ok((0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn axpy_into(out: &mut [f64], x: &[f64], a: f64, k: &[f64]) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + a * ki;
    }
}

/// RK4 step together with `(dx+/dx, dx+/du)`.
pub fn rk4_step_with_jacobians<M: SystemModel + ?Sized>(
    model: &M,
    x: &[f64],
    u: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = model.state_dim();
    let h = model.sample_time();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut tmp = x.to_vec();
    let mut kx: Vec<DMatrix<f64>> = Vec::with_capacity(4);
    let mut ku: Vec<DMatrix<f64>> = Vec::with_capacity(4);
    let stage_scale = [0.5 * h, 0.5 * h, h];

    for s in 0..4 {
        if s > 0 {
            axpy_into(&mut tmp, x, stage_scale[s - 1], &k[s - 1]);
        }
        model.vector_field(&tmp, u, &mut k[s])?;
        let (a, b) = model.vector_field_jacobian(&tmp, u)?;
        if s == 0 {
            kx.push(a);
            ku.push(b);
        } else {
            let c = stage_scale[s - 1];
            let sx = &a * (&eye + &kx[s - 1] * c);
            let su = &a * (&ku[s - 1] * c) + b;
            kx.push(sx);
            ku.push(su);
        }
    }

    let next = (0..n)
        .map(|i| x[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
        .collect();
    let fx = eye + (&kx[0] + &kx[1] * 2.0 + &kx[2] * 2.0 + &kx[3]) * (h / 6.0);
    let fu = (&ku[0] + &ku[1] * 2.0 + &ku[2] * 2.0 + &ku[3]) * (h / 6.0);
    Ok((next, fx, fu))
}

/// Physical parameters of the quadrotor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrotorParams {
    /// kg
    pub mass: f64,
    /// Distance from the center of mass to each rotor, m.
    pub arm: f64,
    /// m/s^2
    pub gravity: f64,
    /// Thrust coefficient, N s^2.
    pub thrust_coeff: f64,
    /// Rotor drag coefficient, N m s^2.
    pub drag_coeff: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 2.24,
            arm: 0.332,
            gravity: 9.81,
            thrust_coeff: 9.5e-6,
            drag_coeff: 1.7e-7,
            ixx: 0.0363,
            iyy: 0.0363,
            izz: 0.0615,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("arm", self.arm),
            ("gravity", self.gravity),
            ("thrust_coeff", self.thrust_coeff),
            ("drag_coeff", self.drag_coeff),
            ("ixx", self.ixx),
            ("iyy", self.iyy),
            ("izz", self.izz),
        ];
        for (key, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, format!("{v} must be positive")));
            }
        }
        Ok(())
    }

    /// Per-rotor force that balances gravity.
    pub fn hover_force(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }
}

/// Plus-configuration quadrotor with Euler-angle attitude.
///
/// State: `[x y z phi theta psi xdot ydot zdot phidot thetadot psidot]`,
/// input: rotor forces `[f1 f2 f3 f4]` in newtons. Rotors 1 and 3 sit on the
/// body x axis, 2 and 4 on the body y axis, so
/// `tau_phi = l (f2 - f4)`, `tau_theta = l (f3 - f1)` and
/// `tau_psi = (k_tau / b) (f1 - f2 + f3 - f4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrotor {
    pub params: QuadrotorParams,
    pub sample_time: f64,
}

const PITCH_LIMIT: f64 = std::f64::consts::FRAC_PI_2 - 1e-6;

impl Quadrotor {
    pub fn new(params: QuadrotorParams, sample_time: f64) -> Self {
        Self { params, sample_time }
    }

    fn check(x: &[f64]) -> Result<()> {
        if !(x[4].abs() < PITCH_LIMIT) {
            return Err(Error::Singularity { theta: x[4] });
        }
        Ok(())
    }

    fn yaw_ratio(&self) -> f64 {
        self.params.drag_coeff / self.params.thrust_coeff
    }
}

impl SystemModel for Quadrotor {
    fn state_dim(&self) -> usize {
        12
    }
    fn input_dim(&self) -> usize {
        4
    }
    fn output_dim(&self) -> usize {
        3
    }
    fn sample_time(&self) -> f64 {
        self.sample_time
    }

    fn vector_field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        Self::check(x)?;
        let QuadrotorParams {
            mass,
            arm,
            gravity,
            ixx,
            iyy,
            izz,
            ..
        } = self.params;
        let (sphi, cphi) = x[3].sin_cos();
        let (sth, cth) = x[4].sin_cos();
        let (spsi, cpsi) = x[5].sin_cos();
        let (p, q, r) = (x[9], x[10], x[11]);
        let thrust = u[0] + u[1] + u[2] + u[3];
        let tm = thrust / mass;

        dx[..6].copy_from_slice(&x[6..12]);
        dx[6] = (cphi * sth * cpsi + sphi * spsi) * tm;
        dx[7] = (cphi * sth * spsi - sphi * cpsi) * tm;
        dx[8] = cphi * cth * tm - gravity;
        dx[9] = (q * r * (iyy - izz) + arm * (u[1] - u[3])) / ixx;
        dx[10] = (p * r * (izz - ixx) + arm * (u[2] - u[0])) / iyy;
        dx[11] = (p * q * (ixx - iyy) + self.yaw_ratio() * (u[0] - u[1] + u[2] - u[3])) / izz;
        Ok(())
    }

    fn vector_field_jacobian(&self, x: &[f64], u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Self::check(x)?;
        let QuadrotorParams {
            mass,
            arm,
            ixx,
            iyy,
            izz,
            ..
        } = self.params;
        let (sphi, cphi) = x[3].sin_cos();
        let (sth, cth) = x[4].sin_cos();
        let (spsi, cpsi) = x[5].sin_cos();
        let (p, q, r) = (x[9], x[10], x[11]);
        let tm = (u[0] + u[1] + u[2] + u[3]) / mass;

        let mut a = DMatrix::zeros(12, 12);
        for i in 0..6 {
            a[(i, i + 6)] = 1.0;
        }
        a[(6, 3)] = (-sphi * sth * cpsi + cphi * spsi) * tm;
        a[(6, 4)] = cphi * cth * cpsi * tm;
        a[(6, 5)] = (-cphi * sth * spsi + sphi * cpsi) * tm;
        a[(7, 3)] = (-sphi * sth * spsi - cphi * cpsi) * tm;
        a[(7, 4)] = cphi * cth * spsi * tm;
        a[(7, 5)] = (cphi * sth * cpsi + sphi * spsi) * tm;
        a[(8, 3)] = -sphi * cth * tm;
        a[(8, 4)] = -cphi * sth * tm;
        a[(9, 10)] = r * (iyy - izz) / ixx;
        a[(9, 11)] = q * (iyy - izz) / ixx;
        a[(10, 9)] = r * (izz - ixx) / iyy;
        a[(10, 11)] = p * (izz - ixx) / iyy;
        a[(11, 9)] = q * (ixx - iyy) / izz;
        a[(11, 10)] = p * (ixx - iyy) / izz;

        let mut b = DMatrix::zeros(12, 4);
        let ax = (cphi * sth * cpsi + sphi * spsi) / mass;
        let ay = (cphi * sth * spsi - sphi * cpsi) / mass;
        let az = cphi * cth / mass;
        let yaw = self.yaw_ratio() / izz;
        for k in 0..4 {
            b[(6, k)] = ax;
            b[(7, k)] = ay;
            b[(8, k)] = az;
            b[(11, k)] = if k % 2 == 0 { yaw } else { -yaw };
        }
        b[(9, 1)] = arm / ixx;
        b[(9, 3)] = -arm / ixx;
        b[(10, 2)] = arm / iyy;
        b[(10, 0)] = -arm / iyy;
        Ok((a, b))
    }

    fn equilibrium_input(&self) -> Vec<f64> {
        vec![self.params.hover_force(); 4]
    }

    fn rest_state(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; 12];
        s[..3].copy_from_slice(&x[..3]);
        s[5] = x[5];
        s
    }
}

/// `dim` independent double integrators: state `[position, velocity]`,
/// input acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegrator {
    pub dim: usize,
    pub sample_time: f64,
}

pub fn double_integrator(dim: usize, sample_time: f64) -> Result<DoubleIntegrator> {
    if !(1..=3).contains(&dim) {
        return Err(Error::invalid("dim", format!("{dim} is not in 1..=3")));
    }
    if !(sample_time > 0.0) {
        return Err(Error::invalid("sample_time", "must be positive"));
    }
    Ok(DoubleIntegrator { dim, sample_time })
}

impl DoubleIntegrator {
    /// Exact zero-order-hold discretization.
    pub fn exact_step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let t = self.sample_time;
        let mut next = x.to_vec();
        for i in 0..d {
            next[i] = x[i] + x[d + i] * t + 0.5 * u[i] * t * t;
            next[d + i] = x[d + i] + u[i] * t;
        }
        next
    }
}

impl SystemModel for DoubleIntegrator {
    fn is_linear(&self) -> bool {
        true
    }
    fn state_dim(&self) -> usize {
        2 * self.dim
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn sample_time(&self) -> f64 {
        self.sample_time
    }

    fn vector_field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let d = self.dim;
        dx[..d].copy_from_slice(&x[d..]);
        dx[d..].copy_from_slice(u);
        Ok(())
    }

    fn vector_field_jacobian(&self, _x: &[f64], _u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.dim;
        let mut a = DMatrix::zeros(2 * d, 2 * d);
        let mut b = DMatrix::zeros(2 * d, d);
        for i in 0..d {
            a[(i, d + i)] = 1.0;
            b[(d + i, i)] = 1.0;
        }
        Ok((a, b))
    }

    fn equilibrium_input(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn rest_state(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; 2 * self.dim];
        s[..self.dim].copy_from_slice(&x[..self.dim]);
        s
    }
}

/// Either shipped plant, selected at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Quadrotor(Quadrotor),
    DoubleIntegrator(DoubleIntegrator),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Model::Quadrotor($m) => $e,
            Model::DoubleIntegrator($m) => $e,
        }
    };
}

impl SystemModel for Model {
    fn state_dim(&self) -> usize {
        dispatch!(self, m => m.state_dim())
    }
    fn input_dim(&self) -> usize {
        dispatch!(self, m => m.input_dim())
    }
    fn output_dim(&self) -> usize {
        dispatch!(self, m => m.output_dim())
    }
    fn sample_time(&self) -> f64 {
        dispatch!(self, m => m.sample_time())
    }
    fn vector_field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        dispatch!(self, m => m.vector_field(x, u, dx))
    }
    fn vector_field_jacobian(&self, x: &[f64], u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        dispatch!(self, m => m.vector_field_jacobian(x, u))
    }
    fn equilibrium_input(&self) -> Vec<f64> {
        dispatch!(self, m => m.equilibrium_input())
    }
    fn rest_state(&self, x: &[f64]) -> Vec<f64> {
        dispatch!(self, m => m.rest_state(x))
    }
    fn is_linear(&self) -> bool {
        dispatch!(self, m => m.is_linear())
    }
}

pub fn output<M: SystemModel + ?Sized>(model: &M, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; model.output_dim()];
    model.output(x, &mut y);
    y
}
