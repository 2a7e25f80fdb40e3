//! Discrete-time kinematic bicycle model.
//!
//! State is (x, y, psi, v) with front-steering + acceleration control. The
//! step is a forward-Euler discretization; `linearize_velocity_map` provides
//! the affine approximation of "action now -> planar velocity after one step"
//! that the safety projection needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Longitudinal acceleration + front steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionCmd {
    /// Longitudinal acceleration [m/s^2].
    pub accel: f64,
    /// Front steering angle [rad].
    pub steer: f64,
}

impl ActionCmd {
    pub const fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub fn as_vec(self) -> Vec2 {
        Vec2::new(self.accel, self.steer)
    }

    pub fn from_vec(v: Vec2) -> Self {
        Self { accel: v.x, steer: v.y }
    }
}

/// Convex action box: accel in [accel_min, accel_max], |steer| <= steer_max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionBox {
    pub accel_min: f64,
    pub accel_max: f64,
    pub steer_max: f64,
}

impl Default for ActionBox {
    fn default() -> Self {
        Self { accel_min: -1.0, accel_max: 1.0, steer_max: 0.6 }
    }
}

impl ActionBox {
    pub fn contains(&self, a: ActionCmd) -> bool {
        a.accel >= self.accel_min
            && a.accel <= self.accel_max
            && a.steer.abs() <= self.steer_max
    }

    pub fn clamp(&self, a: ActionCmd) -> ActionCmd {
        ActionCmd {
            accel: a.accel.clamp(self.accel_min, self.accel_max),
            steer: a.steer.clamp(-self.steer_max, self.steer_max),
        }
    }

    pub fn center(&self) -> ActionCmd {
        ActionCmd {
            accel: 0.5 * (self.accel_min + self.accel_max),
            steer: 0.0,
        }
    }

    /// Half-widths of the box along (accel, steer).
    pub fn half_width(&self) -> Vec2 {
        Vec2::new(0.5 * (self.accel_max - self.accel_min), self.steer_max)
    }
}

/// Speed box: v kept in [v_min, v_max] by the step (clamping is part of the
/// step contract; v_min = 0 means no reverse).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedBox {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for SpeedBox {
    fn default() -> Self {
        Self { v_min: 0.0, v_max: 2.0 }
    }
}

/// Action and speed bounds bundled; read from scenario config.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub action: ActionBox,
    pub speed: SpeedBox,
}

/// Axle geometry and bounding-disc radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleGeom {
    /// Centroid-to-front-axle distance [m].
    pub l_f: f64,
    /// Centroid-to-rear-axle distance [m].
    pub l_r: f64,
    /// Bounding-disc radius [m].
    pub radius: f64,
}

impl Default for VehicleGeom {
    fn default() -> Self {
        Self { l_f: 0.5, l_r: 0.5, radius: 0.5 }
    }
}

/// Full bicycle state plus the most recently applied action (needed for the
/// slip-angle part of the output map and as linearization reference).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    /// Position east [m].
    pub x: f64,
    /// Position north [m].
    pub y: f64,
    /// Inertial heading [rad], kept in (-pi, pi].
    pub psi: f64,
    /// Speed [m/s].
    pub v: f64,
    /// Most recently applied action; zero before the first step.
    pub last_action: ActionCmd,
}

impl AgentState {
    pub fn new(x: f64, y: f64, psi: f64, v: f64) -> Self {
        Self { x, y, psi, v, last_action: ActionCmd::default() }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// What other agents observe: position and planar velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputObs {
    pub pos: Vec2,
    pub vel: Vec2,
}

/// Affine approximation of action -> next-step planar velocity:
/// `v_next ~= a_v * action + b_v`, exact at the expansion point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityLinearization {
    /// Columns are d(vel)/d(accel) and d(vel)/d(steer).
    pub a_v: [[f64; 2]; 2],
    pub b_v: Vec2,
}

impl VelocityLinearization {
    /// Evaluate the affine map at `action`.
    pub fn predict(&self, action: ActionCmd) -> Vec2 {
        Vec2::new(
            self.a_v[0][0] * action.accel + self.a_v[0][1] * action.steer + self.b_v.x,
            self.a_v[1][0] * action.accel + self.a_v[1][1] * action.steer + self.b_v.y,
        )
    }

    /// `transpose(A_v) * n`, used when mapping velocity half-planes into
    /// action space.
    pub fn normal_to_action_space(&self, n: Vec2) -> Vec2 {
        Vec2::new(
            self.a_v[0][0] * n.x + self.a_v[1][0] * n.y,
            self.a_v[0][1] * n.x + self.a_v[1][1] * n.y,
        )
    }
}

/// Normalize an angle to (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Slip angle of the velocity relative to the longitudinal axis:
/// `beta = atan(l_r / (l_f + l_r) * tan(steer))`.
pub fn slip_angle(steer: f64, geom: &VehicleGeom) -> Result<f64> {
    if !steer.is_finite() {
        return Err(Error::NonFinite("steer"));
    }
    Ok((geom.l_r / (geom.l_f + geom.l_r) * steer.tan()).atan())
}

/// d(beta)/d(steer).
fn slip_angle_deriv(steer: f64, geom: &VehicleGeom) -> f64 {
    let c = geom.l_r / (geom.l_f + geom.l_r);
    let t = steer.tan();
    let sec2 = 1.0 + t * t;
    c * sec2 / (1.0 + c * c * t * t)
}

/// One forward-Euler step. The action must already lie inside the action
/// box: clamping actions is the caller's job, the step never does it
/// silently. Speed, in contrast, is clamped to the speed box here.
pub fn step(
    state: &AgentState,
    action: ActionCmd,
    geom: &VehicleGeom,
    limits: &Limits,
    dt: f64,
) -> Result<AgentState> {
    if !(action.accel.is_finite() && action.steer.is_finite()) {
        return Err(Error::NonFinite("action"));
    }
    if !limits.action.contains(action) {
        return Err(Error::ActionOutsideBox { accel: action.accel, steer: action.steer });
    }
    if !(dt > 0.0) {
        return Err(Error::Domain("dt must be positive"));
    }
    let beta = slip_angle(action.steer, geom)?;
    let (sb, cb) = (state.psi + beta).sin_cos();
    let heading = Vec2::new(cb, sb);
    Ok(AgentState {
        x: state.x + dt * state.v * heading.x,
        y: state.y + dt * state.v * heading.y,
        psi: normalize_angle(state.psi + dt * (state.v / geom.l_r) * beta.sin()),
        v: (state.v + dt * action.accel).clamp(limits.speed.v_min, limits.speed.v_max),
        last_action: action,
    })
}

/// Output map: position plus planar velocity. The velocity direction uses
/// the slip angle of the last applied action (zero before the first step).
pub fn output(state: &AgentState, geom: &VehicleGeom) -> OutputObs {
    let beta = slip_angle(state.last_action.steer, geom).unwrap_or(0.0);
    let (s, c) = (state.psi + beta).sin_cos();
    OutputObs {
        pos: Vec2::new(state.x, state.y),
        vel: Vec2::new(state.v * c, state.v * s),
    }
}

/// True next-step planar velocity as a function of the action applied now.
fn next_velocity(
    state: &AgentState,
    action: ActionCmd,
    geom: &VehicleGeom,
    limits: &Limits,
    dt: f64,
) -> Vec2 {
    let beta = slip_angle(action.steer, geom).unwrap_or(0.0);
    let psi_next = state.psi + dt * (state.v / geom.l_r) * beta.sin();
    let v_next = (state.v + dt * action.accel).clamp(limits.speed.v_min, limits.speed.v_max);
    let (s, c) = (psi_next + beta).sin_cos();
    Vec2::new(v_next * c, v_next * s)
}

/// Analytic Jacobian of the action -> next-velocity map around `ref_action`,
/// with the offset chosen so the affine map is exact at the expansion point.
///
/// The speed clamp makes the map piecewise; at a clamp the accel column is
/// zero (the subgradient on the saturated side).
pub fn linearize_velocity_map(
    state: &AgentState,
    ref_action: ActionCmd,
    geom: &VehicleGeom,
    limits: &Limits,
    dt: f64,
) -> VelocityLinearization {
    let beta = slip_angle(ref_action.steer, geom).unwrap_or(0.0);
    let psi_next = state.psi + dt * (state.v / geom.l_r) * beta.sin();
    let theta = psi_next + beta;
    let (s, c) = theta.sin_cos();

    let v_unclamped = state.v + dt * ref_action.accel;
    let clamped = v_unclamped <= limits.speed.v_min || v_unclamped >= limits.speed.v_max;
    let v_next = v_unclamped.clamp(limits.speed.v_min, limits.speed.v_max);

    let dv_daccel = if clamped { 0.0 } else { dt };
    // theta depends on steer both through beta directly and through the
    // heading update dt*(v/l_r)*sin(beta).
    let db = slip_angle_deriv(ref_action.steer, geom);
    let dtheta_dsteer = (dt * (state.v / geom.l_r) * beta.cos() + 1.0) * db;

    let col_accel = Vec2::new(c * dv_daccel, s * dv_daccel);
    let col_steer = Vec2::new(-v_next * s * dtheta_dsteer, v_next * c * dtheta_dsteer);

    let a_v = [[col_accel.x, col_steer.x], [col_accel.y, col_steer.y]];
    let vel_ref = Vec2::new(v_next * c, v_next * s);
    let b_v = vel_ref - Vec2::new(
        a_v[0][0] * ref_action.accel + a_v[0][1] * ref_action.steer,
        a_v[1][0] * ref_action.accel + a_v[1][1] * ref_action.steer,
    );
    VelocityLinearization { a_v, b_v }
}

/// Central-finite-difference fallback for the same Jacobian. Kept for
/// cross-checking the analytic derivative.
pub fn linearize_velocity_map_fd(
    state: &AgentState,
    ref_action: ActionCmd,
    geom: &VehicleGeom,
    limits: &Limits,
    dt: f64,
    h_fd: f64,
) -> VelocityLinearization {
    let f = |a: ActionCmd| next_velocity(state, a, geom, limits, dt);
    let da = {
        let p = f(ActionCmd::new(ref_action.accel + h_fd, ref_action.steer));
        let m = f(ActionCmd::new(ref_action.accel - h_fd, ref_action.steer));
        (p - m) / (2.0 * h_fd)
    };
    let ds = {
        let p = f(ActionCmd::new(ref_action.accel, ref_action.steer + h_fd));
        let m = f(ActionCmd::new(ref_action.accel, ref_action.steer - h_fd));
        (p - m) / (2.0 * h_fd)
    };
    let a_v = [[da.x, ds.x], [da.y, ds.y]];
    let vel_ref = f(ref_action);
    let b_v = vel_ref - Vec2::new(
        a_v[0][0] * ref_action.accel + a_v[0][1] * ref_action.steer,
        a_v[1][0] * ref_action.accel + a_v[1][1] * ref_action.steer,
    );
    VelocityLinearization { a_v, b_v }
}
