//! Discrete Dynamic Movement Primitives.
//!
//! Each dimension follows the critically damped transformation system
//!
//! ```text
//! tau^2 y'' = alpha_y (beta_y (g - y) - tau y') + f(x)
//! f(x)      = (sum_i psi_i(x) w_i / sum_i psi_i(x)) * x * (g_demo - y0_demo)
//! psi_i(x)  = exp(-h_i (x - c_i)^2)
//! x(t)      = exp(-alpha_x t / tau)
//! ```
//!
//! The forcing amplitude is frozen at the training values, so a goal that
//! moves during a rollout only enters through the spring term. The six
//! dimensions of a [`DmpParams`] are three position axes and three
//! rotation-vector axes of an [`OrientationChart`] anchored at the segment
//! start orientation.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::se3::{Pose, Quat};

/// Degrees of freedom of a Cartesian DMP: xyz + rotation vector.
pub const DOF: usize = 6;

/// Amplitudes `|g - y0|` below this are treated as zero-amplitude dimensions.
pub const AMPLITUDE_FLOOR: f64 = 1e-6;

/// Per-basis LWR denominators below this are singular.
pub const SINGULAR_DENOMINATOR: f64 = 1e-14;

/// Minimum activation sum a layout must keep over its phase range.
pub const ACTIVATION_FLOOR: f64 = 1e-10;

/// Rotations further than this from the chart origin are rejected.
pub const CHART_LIMIT: f64 = core::f64::consts::PI - 0.1;

pub type Vec6 = [f64; DOF];

#[derive(Debug, Clone, PartialEq)]
pub enum DmpError {
    InvalidConfig(&'static str),
    InvalidLayout(&'static str),
    /// Fewer than three samples.
    TooShort {
        len: usize,
    },
    DegenerateAmplitude {
        dim: usize,
    },
    /// A rotation left the axis-angle chart (angle in radians).
    OrientationChart {
        angle: f64,
    },
}

impl fmt::Display for DmpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DmpError::InvalidConfig(why) => write!(f, "invalid DMP config: {why}"),
            DmpError::InvalidLayout(why) => write!(f, "invalid basis layout: {why}"),
            DmpError::TooShort { len } => write!(f, "trajectory has {len} samples, need at least 3"),
            DmpError::DegenerateAmplitude { dim } => {
                write!(f, "dimension {dim} has |g - y0| below the amplitude floor")
            }
            DmpError::OrientationChart { angle } => {
                write!(f, "rotation of {angle:.4} rad from the segment start leaves the axis-angle chart")
            }
        }
    }
}

impl core::error::Error for DmpError {}

/// Shared hyperparameters of one DMP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmpConfig {
    pub alpha_y: f64,
    pub beta_y: f64,
    pub alpha_x: f64,
    pub n_bases: usize,
    /// Sample period in seconds.
    pub dt: f64,
    pub tau: f64,
}

impl Default for DmpConfig {
    /// 20 Hz control, critically damped spring.
    fn default() -> Self {
        DmpConfig { alpha_y: 10.0, beta_y: 2.5, alpha_x: 1.0, n_bases: 25, dt: 0.05, tau: 1.0 }
    }
}

impl DmpConfig {
    /// Critically damped config: `beta_y = alpha_y / 4`.
    pub fn new(alpha_y: f64, alpha_x: f64, n_bases: usize, dt: f64) -> Result<Self, DmpError> {
        let c = DmpConfig { alpha_y, beta_y: alpha_y / 4.0, alpha_x, n_bases, dt, tau: 1.0 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DmpError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.alpha_y) || !positive(self.beta_y) {
            return Err(DmpError::InvalidConfig("alpha_y and beta_y must be positive"));
        }
        if !positive(self.alpha_x) {
            return Err(DmpError::InvalidConfig("alpha_x must be positive"));
        }
        if self.n_bases < 2 {
            return Err(DmpError::InvalidConfig("need at least 2 basis functions"));
        }
        if !positive(self.dt) {
            return Err(DmpError::InvalidConfig("dt must be positive"));
        }
        if !positive(self.tau) {
            return Err(DmpError::InvalidConfig("tau must be positive"));
        }
        Ok(())
    }
}

/// Phase of the canonical system at time `t`.
pub fn canonical_value(config: &DmpConfig, t: f64) -> f64 {
    math::exp(-config.alpha_x * t / config.tau)
}

/// Gaussian basis centers and widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisLayout {
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl BasisLayout {
    pub fn new(centers: Vec<f64>, widths: Vec<f64>) -> Result<Self, DmpError> {
        if centers.is_empty() || centers.len() != widths.len() {
            return Err(DmpError::InvalidLayout("centers and widths must be non-empty and equal length"));
        }
        if centers.iter().any(|c| !(c.is_finite() && *c > 0.0 && *c <= 1.0)) {
            return Err(DmpError::InvalidLayout("centers must lie in (0, 1]"));
        }
        if widths.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(DmpError::InvalidLayout("widths must be positive"));
        }
        if centers.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DmpError::InvalidLayout("centers must be strictly decreasing"));
        }
        Ok(BasisLayout { centers, widths })
    }

    /// Centers at the phase of equally spaced instants over `duration`,
    /// widths `2 / (c_i - c_{i+1})^2` (the last basis reuses the previous gap),
    /// so neighbouring bases cross at `exp(-0.5)`.
    pub fn for_duration(config: &DmpConfig, duration: f64) -> Result<Self, DmpError> {
        config.validate()?;
        if !(duration.is_finite() && duration > 0.0) {
            return Err(DmpError::InvalidLayout("duration must be positive"));
        }
        let k = config.n_bases;
        let kf = k as f64;
        let centers: Vec<f64> = (0..k).map(|i| canonical_value(config, duration * i as f64 / (kf - 1.0))).collect();
        let widths = (0..k)
            .map(|i| {
                let gap = if i + 1 < k { centers[i] - centers[i + 1] } else { centers[i - 1] - centers[i] };
                2.0 / (gap * gap)
            })
            .collect();
        BasisLayout::new(centers, widths)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn activation(&self, i: usize, x: f64) -> f64 {
        let d = x - self.centers[i];
        math::exp(-self.widths[i] * d * d)
    }

    /// `psi_i(x)` for every basis.
    pub fn activations(&self, x: f64) -> Vec<f64> {
        (0..self.len()).map(|i| self.activation(i, x)).collect()
    }

    /// Minimum of `sum_i psi_i(x)` over `n` evenly spaced phases in `[x_min, 1]`.
    pub fn min_activation_sum(&self, x_min: f64, n: usize) -> f64 {
        let n = n.max(2);
        (0..n)
            .map(|j| {
                let x = x_min + (1.0 - x_min) * j as f64 / (n - 1) as f64;
                (0..self.len()).map(|i| self.activation(i, x)).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Normalized weighted average `sum psi_i w_i / sum psi_i`.
    pub fn weighted_average(&self, weights: impl Fn(usize) -> f64, x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.len() {
            let psi = self.activation(i, x);
            num += psi * weights(i);
            den += psi;
        }
        if den < ACTIVATION_FLOOR {
            0.0
        } else {
            num / den
        }
    }
}

/// Free function form of [`BasisLayout::activations`].
pub fn basis_activations(layout: &BasisLayout, x: f64) -> Vec<f64> {
    layout.activations(x)
}

/// Velocity and acceleration of a uniformly sampled signal, taken with the
/// stencils of the semi-implicit Euler rollout: backward velocity, second
/// difference acceleration. The signal is at rest before its first sample
/// and held after its last.
///
/// Inverting with these makes an exact forcing term reproduce the samples
/// exactly, rather than up to a discretization error.
pub fn finite_differences(y: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>), DmpError> {
    let n = y.len();
    if n < 3 {
        return Err(DmpError::TooShort { len: n });
    }
    let at = |k: usize| y[k.min(n - 1)];
    let mut vel = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for k in 0..n {
        let prev = if k == 0 { y[0] } else { y[k - 1] };
        vel[k] = (y[k] - prev) / dt;
        // Written on differences so constant signals give exact zeros.
        acc[k] = ((at(k + 1) - y[k]) - (y[k] - prev)) / (dt * dt);
    }
    Ok((vel, acc))
}

/// Forcing signal that makes the transformation system follow `demo`.
///
/// `y0` is part of the signature for symmetry with [`train_lwr`]; the
/// inversion itself only needs the goal.
pub fn invert_demo(demo: &[f64], config: &DmpConfig, g: f64, _y0: f64) -> Result<Vec<f64>, DmpError> {
    let (vel, acc) = finite_differences(demo, config.dt)?;
    let tau = config.tau;
    Ok(demo
        .iter()
        .zip(vel.iter().zip(&acc))
        .map(|(y, (v, a))| tau * tau * a - config.alpha_y * (config.beta_y * (g - y) - tau * v))
        .collect())
}

/// Result of a per-basis locally weighted regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LwrFit {
    pub weights: Vec<f64>,
    /// Bases whose weighted design term fell below [`SINGULAR_DENOMINATOR`];
    /// their weights are zero.
    pub singular: Vec<usize>,
}

/// Closed-form LWR: `w_i = sum_t psi_i xi_t f_d(t) / sum_t psi_i xi_t^2`,
/// `xi_t = x(t) (g - y0)`.
pub fn train_lwr(f_d: &[f64], phases: &[f64], layout: &BasisLayout, g: f64, y0: f64) -> LwrFit {
    debug_assert_eq!(f_d.len(), phases.len());
    let amplitude = g - y0;
    if amplitude.abs() < AMPLITUDE_FLOOR {
        return LwrFit { weights: vec![0.0; layout.len()], singular: Vec::new() };
    }
    let mut weights = Vec::with_capacity(layout.len());
    let mut singular = Vec::new();
    for i in 0..layout.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (f, x) in f_d.iter().zip(phases) {
            let psi = layout.activation(i, *x);
            let xi = x * amplitude;
            num += psi * xi * f;
            den += psi * xi * xi;
        }
        if den < SINGULAR_DENOMINATOR {
            singular.push(i);
            weights.push(0.0);
        } else {
            weights.push(num / den);
        }
    }
    LwrFit { weights, singular }
}

/// Axis-angle coordinates of orientations relative to a base orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationChart {
    base: Quat,
}

impl OrientationChart {
    pub fn new(base: Quat) -> Self {
        OrientationChart { base }
    }

    pub fn base(&self) -> Quat {
        self.base
    }

    /// Rotation vector of `base^-1 q`; fails beyond [`CHART_LIMIT`].
    pub fn to_chart(&self, q: &Quat) -> Result<[f64; 3], DmpError> {
        let rel = self.base.conjugate() * *q;
        let r = rel.to_rotation_vector();
        let angle = math::norm(r);
        if angle > CHART_LIMIT {
            return Err(DmpError::OrientationChart { angle });
        }
        Ok(r)
    }

    pub fn from_chart(&self, r: [f64; 3]) -> Quat {
        self.base * Quat::from_rotation_vector(r)
    }

    pub fn pose_to_vec(&self, p: &Pose) -> Result<Vec6, DmpError> {
        let r = self.to_chart(&p.orientation())?;
        let t = p.position();
        Ok([t[0], t[1], t[2], r[0], r[1], r[2]])
    }

    pub fn vec_to_pose(&self, y: &Vec6) -> Pose {
        Pose::new([y[0], y[1], y[2]], self.from_chart([y[3], y[4], y[5]]))
    }
}

/// One integration state of a 6-D rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutState {
    pub y: Vec6,
    pub y_dot: Vec6,
    /// Canonical phase, in `(0, 1]`.
    pub x: f64,
    pub step_index: usize,
}

impl RolloutState {
    /// At rest at `start`, phase 1.
    pub fn at_rest(start: Vec6) -> Self {
        RolloutState { y: start, y_dot: [0.0; DOF], x: 1.0, step_index: 0 }
    }
}

/// A basis that had no support during LWR.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularBasis {
    pub dim: usize,
    pub basis: usize,
}

/// A fitted segment plus the warnings produced while fitting it.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    pub params: DmpParams,
    pub singular: Vec<SingularBasis>,
}

/// Trained 6-D DMP for one subtask segment.
///
/// Field order is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpParams {
    pub config: DmpConfig,
    pub layout: BasisLayout,
    /// `K` rows of 6 weights.
    pub weights: Vec<Vec6>,
    pub y0: Vec6,
    pub g_demo: Vec6,
    pub duration: f64,
    pub n_steps: usize,
}

impl DmpParams {
    /// Forcing contribution of dimension `dim` for an explicit amplitude `g - y0`.
    pub fn forcing_term(&self, x: f64, g: f64, y0: f64, dim: usize) -> f64 {
        let amplitude = g - y0;
        if amplitude.abs() < AMPLITUDE_FLOOR {
            return 0.0;
        }
        self.layout.weighted_average(|i| self.weights[i][dim], x) * x * amplitude
    }

    /// Like [`forcing_term`](Self::forcing_term) but rejects degenerate amplitudes.
    pub fn forcing_term_strict(&self, x: f64, g: f64, y0: f64, dim: usize) -> Result<f64, DmpError> {
        if (g - y0).abs() < AMPLITUDE_FLOOR {
            return Err(DmpError::DegenerateAmplitude { dim });
        }
        Ok(self.forcing_term(x, g, y0, dim))
    }

    /// Forcing applied during rollout, amplitude frozen at training values.
    pub fn rollout_forcing(&self, x: f64) -> Vec6 {
        let mut f = [0.0; DOF];
        for (d, v) in f.iter_mut().enumerate() {
            *v = self.forcing_term(x, self.g_demo[d], self.y0[d], d);
        }
        f
    }

    pub fn phase_at_step(&self, k: usize) -> f64 {
        canonical_value(&self.config, k as f64 * self.config.dt)
    }

    /// Advances one control period toward the live goal `g_now`.
    pub fn rollout_step(&self, state: &RolloutState, g_now: &Vec6) -> RolloutState {
        debug_assert!(state.step_index + 1 < self.n_steps);
        let c = &self.config;
        let f = self.rollout_forcing(state.x);
        let mut next = *state;
        for d in 0..DOF {
            let spring = c.alpha_y * (c.beta_y * (g_now[d] - state.y[d]) - c.tau * state.y_dot[d]);
            let acc = (spring + f[d]) / (c.tau * c.tau);
            next.y_dot[d] = state.y_dot[d] + acc * c.dt;
            next.y[d] = state.y[d] + next.y_dot[d] * c.dt;
        }
        next.step_index = state.step_index + 1;
        next.x = self.phase_at_step(next.step_index);
        next
    }

    /// Full fixed-length rollout: exactly `n_steps` samples, the first being `start`.
    pub fn rollout(&self, start: Vec6, mut goal_provider: impl FnMut(usize) -> Vec6) -> Vec<Vec6> {
        let mut out = Vec::with_capacity(self.n_steps);
        let mut state = RolloutState::at_rest(start);
        out.push(state.y);
        for k in 0..self.n_steps.saturating_sub(1) {
            let g = goal_provider(k);
            state = self.rollout_step(&state, &g);
            out.push(state.y);
        }
        out
    }

    /// Pose rollout in the chart anchored at `start`'s orientation.
    pub fn rollout_poses(
        &self,
        start: &Pose,
        mut goal_provider: impl FnMut(usize) -> Pose,
    ) -> Result<Vec<Pose>, DmpError> {
        let chart = OrientationChart::new(start.orientation());
        let start_vec = chart.pose_to_vec(start)?;
        let mut chart_err = None;
        let traj = self.rollout(start_vec, |k| match chart.pose_to_vec(&goal_provider(k)) {
            Ok(v) => v,
            Err(e) => {
                chart_err.get_or_insert(e);
                start_vec
            }
        });
        if let Some(e) = chart_err {
            return Err(e);
        }
        Ok(traj.iter().map(|y| chart.vec_to_pose(y)).collect())
    }
}

/// Fits six scalar DMPs sharing one canonical system to a pose segment
/// sampled at `config.dt`.
pub fn fit_segment(segment: &[Pose], config: &DmpConfig) -> Result<SegmentFit, DmpError> {
    config.validate()?;
    let p = segment.len();
    if p < 3 {
        return Err(DmpError::TooShort { len: p });
    }
    let chart = OrientationChart::new(segment[0].orientation());
    let mut dims: [Vec<f64>; DOF] = Default::default();
    for pose in segment {
        let v = chart.pose_to_vec(pose)?;
        for d in 0..DOF {
            dims[d].push(v[d]);
        }
    }
    let duration = (p - 1) as f64 * config.dt;
    let layout = BasisLayout::for_duration(config, duration)?;
    let phases: Vec<f64> = (0..p).map(|k| canonical_value(config, k as f64 * config.dt)).collect();

    let mut weights = vec![[0.0; DOF]; layout.len()];
    let mut y0 = [0.0; DOF];
    let mut g_demo = [0.0; DOF];
    let mut singular = Vec::new();
    for d in 0..DOF {
        let traj = &dims[d];
        y0[d] = traj[0];
        g_demo[d] = traj[p - 1];
        let f_d = invert_demo(traj, config, g_demo[d], y0[d])?;
        let fit = train_lwr(&f_d, &phases, &layout, g_demo[d], y0[d]);
        for (row, w) in weights.iter_mut().zip(&fit.weights) {
            row[d] = *w;
        }
        singular.extend(fit.singular.into_iter().map(|basis| SingularBasis { dim: d, basis }));
    }
    Ok(SegmentFit {
        params: DmpParams { config: *config, layout, weights, y0, g_demo, duration, n_steps: p },
        singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::E;

    fn min_jerk(y0: f64, g: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                y0 + (g - y0) * (10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5))
            })
            .collect()
    }

    fn single_dim_params(demo: &[f64], config: DmpConfig) -> DmpParams {
        let poses: Vec<Pose> = demo.iter().map(|y| Pose::from_translation(*y, 0.0, 0.0)).collect();
        fit_segment(&poses, &config).unwrap().params
    }

    #[test]
    fn canonical_examples() {
        let c = DmpConfig { alpha_x: 1.0, tau: 1.0, ..DmpConfig::default() };
        assert_eq!(canonical_value(&c, 0.0), 1.0);
        assert!((canonical_value(&c, 1.0) - 1.0 / E).abs() < 1e-15);
        assert!(canonical_value(&c, 700.0) > 0.0);
        assert!(canonical_value(&c, 700.0) < 1e-300);
        let xs: Vec<f64> = (0..100).map(|k| canonical_value(&c, k as f64 * 0.05)).collect();
        assert!(xs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn basis_examples() {
        let layout = BasisLayout::new(vec![1.0, 0.5], vec![4.0, 4.0]).unwrap();
        assert_eq!(layout.activations(1.0)[0], 1.0);
        assert_eq!(layout.activations(0.5)[1], 1.0);
        let psi = layout.activations(0.75);
        assert!((psi[0] - libm::exp(-0.25)).abs() < 1e-15);
        assert!((psi[1] - libm::exp(-0.25)).abs() < 1e-15);
        let narrow = BasisLayout::new(vec![1.0], vec![1e12]).unwrap();
        assert!(narrow.activations(0.9)[0] < 1e-300);
    }

    #[test]
    fn layout_validation() {
        assert!(BasisLayout::new(vec![0.5, 1.0], vec![1.0, 1.0]).is_err());
        assert!(BasisLayout::new(vec![1.0, 0.5], vec![1.0, 0.0]).is_err());
        assert!(BasisLayout::new(vec![1.5], vec![1.0]).is_err());
        let c = DmpConfig::default();
        let l = BasisLayout::for_duration(&c, 4.95).unwrap();
        assert_eq!(l.len(), 25);
        assert_eq!(l.centers()[0], 1.0);
        assert!(l.min_activation_sum(canonical_value(&c, 4.95), 2000) > ACTIVATION_FLOOR);
    }

    #[test]
    fn config_validation() {
        assert!(DmpConfig::new(10.0, 1.0, 1, 0.05).is_err());
        assert!(DmpConfig::new(10.0, 1.0, 5, 0.0).is_err());
        assert!(DmpConfig::new(-1.0, 1.0, 5, 0.05).is_err());
        let c = DmpConfig::new(20.0, 1.0, 5, 0.05).unwrap();
        assert_eq!(c.beta_y, 5.0);
    }

    fn params_with(layout: BasisLayout, w: Vec<f64>) -> DmpParams {
        let weights = w.iter().map(|v| [*v, 0.0, 0.0, 0.0, 0.0, 0.0]).collect();
        DmpParams {
            config: DmpConfig::default(),
            layout,
            weights,
            y0: [0.0; DOF],
            g_demo: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            duration: 1.0,
            n_steps: 21,
        }
    }

    #[test]
    fn forcing_examples() {
        let layout = BasisLayout::new(vec![1.0, 0.5], vec![4.0, 4.0]).unwrap();
        let p = params_with(layout.clone(), vec![3.0, -2.0]);
        assert_eq!(p.forcing_term(0.7, 0.4, 0.4, 0), 0.0);
        assert_eq!(p.forcing_term_strict(0.7, 0.4, 0.4, 0), Err(DmpError::DegenerateAmplitude { dim: 0 }));
        let zero = params_with(layout, vec![0.0, 0.0]);
        assert_eq!(zero.forcing_term(0.7, 1.0, 0.0, 0), 0.0);
        // K = 1: the normalized average is the single weight.
        let single = params_with(BasisLayout::new(vec![1.0], vec![2.0]).unwrap(), vec![2.0]);
        assert!((single.forcing_term(0.5, 1.0, 0.0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invert_constant_and_linear() {
        let c = DmpConfig::default();
        let f = invert_demo(&[0.3; 10], &c, 0.3, 0.3).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));

        // y = 0.1 + 0.5 t starts from rest, so only the first and last
        // samples see an acceleration.
        let n = 20;
        let y: Vec<f64> = (0..n).map(|k| 0.1 + 0.5 * k as f64 * c.dt).collect();
        let g = y[n - 1];
        let f = invert_demo(&y, &c, g, y[0]).unwrap();
        let spring = |k: usize, v: f64| c.alpha_y * (c.beta_y * (g - y[k]) - c.tau * v);
        assert!((f[0] - (0.5 / c.dt - spring(0, 0.0))).abs() < 1e-9);
        for (k, fk) in f.iter().enumerate().take(n - 1).skip(1) {
            assert!((fk + spring(k, 0.5)).abs() < 1e-9, "{k}: {fk}");
        }
        assert!((f[n - 1] - (-0.5 / c.dt - spring(n - 1, 0.5))).abs() < 1e-9);
        assert_eq!(invert_demo(&[0.0, 1.0], &c, 1.0, 0.0), Err(DmpError::TooShort { len: 2 }));
    }

    #[test]
    fn exact_forcing_reproduces_samples() {
        // Driving the rollout integrator with the inverted signal itself
        // walks through the demo sample for sample.
        let c = DmpConfig { tau: 1.3, ..DmpConfig::default() };
        let y: Vec<f64> = (0..40).map(|k| (k as f64 * 0.2).sin() + 0.01 * (k * k) as f64).collect();
        let g = y[39];
        let f = invert_demo(&y, &c, g, y[0]).unwrap();
        let (mut yk, mut vk) = (y[0], 0.0);
        for k in 0..39 {
            let acc = (c.alpha_y * (c.beta_y * (g - yk) - c.tau * vk) + f[k]) / (c.tau * c.tau);
            vk += acc * c.dt;
            yk += vk * c.dt;
            assert!((yk - y[k + 1]).abs() < 1e-9, "step {k}: {yk} vs {}", y[k + 1]);
        }
    }

    #[test]
    fn lwr_zero_and_degenerate() {
        let c = DmpConfig::default();
        let layout = BasisLayout::for_duration(&c, 1.0).unwrap();
        let phases: Vec<f64> = (0..21).map(|k| canonical_value(&c, k as f64 * c.dt)).collect();
        let fit = train_lwr(&[0.0; 21], &phases, &layout, 1.0, 0.0);
        assert!(fit.weights.iter().all(|w| *w == 0.0));
        let fit = train_lwr(&[5.0; 21], &phases, &layout, 1.0, 1.0 + 1e-8);
        assert!(fit.weights.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn lwr_flags_singular_bases() {
        let c = DmpConfig::default();
        let layout = BasisLayout::new(vec![1.0, 0.01], vec![1e6, 1e6]).unwrap();
        // Only phases near 1 are sampled: the basis at 0.01 has no support.
        let phases = [1.0, 0.999, 0.998];
        let fit = train_lwr(&[1.0, 1.0, 1.0], &phases, &layout, 1.0, 0.0);
        assert_eq!(fit.singular, vec![1]);
        assert_eq!(fit.weights[1], 0.0);
        assert!(fit.weights[0] != 0.0);
        let _ = c;
    }

    #[test]
    fn lwr_recovers_synthesized_weights() {
        let c = DmpConfig::default();
        let n = 40;
        let phases: Vec<f64> = (0..n).map(|k| canonical_value(&c, k as f64 * c.dt)).collect();
        // One narrow basis per sample phase: the normalized mixture at each
        // sample is dominated by its own weight, so forcing synthesized from
        // known weights is exactly invertible.
        let centers: Vec<f64> = phases.iter().step_by(2).copied().collect();
        let layout = BasisLayout::new(centers.clone(), vec![1e9; centers.len()]).unwrap();
        let truth: Vec<f64> = (0..layout.len()).map(|i| 3.0 * libm::sin(i as f64 * 0.7) + 1.5).collect();
        let (g, y0) = (0.4, -0.1);
        let mut p = params_with(layout.clone(), truth.clone());
        p.g_demo[0] = g;
        p.y0[0] = y0;
        let f_d: Vec<f64> = phases.iter().map(|x| p.forcing_term(*x, g, y0, 0)).collect();
        let fit = train_lwr(&f_d, &phases, &layout, g, y0);
        assert!(fit.singular.is_empty());
        for (w, t) in fit.weights.iter().zip(&truth) {
            assert!((w - t).abs() <= 1e-6 * t.abs(), "{w} vs {t}");
        }
    }

    #[test]
    fn equilibrium_step() {
        let p = params_with(BasisLayout::new(vec![1.0, 0.5], vec![4.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        let g = [0.2, -0.1, 0.3, 0.0, 0.1, 0.0];
        let s0 = RolloutState::at_rest(g);
        let s1 = p.rollout_step(&s0, &g);
        assert_eq!(s1.y, g);
        assert_eq!(s1.y_dot, [0.0; DOF]);
        assert_eq!(s1.step_index, 1);
        assert!(s1.x < s0.x);
    }

    #[test]
    fn critically_damped_no_overshoot() {
        let mut p = params_with(BasisLayout::new(vec![1.0, 0.5], vec![4.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        p.n_steps = 400;
        let g = [1.0; DOF];
        let traj = p.rollout([0.0; DOF], |_| g);
        assert!(traj.iter().all(|y| y[0] <= 1.0));
        assert!((traj.last().unwrap()[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn constant_goal_equal_start() {
        let demo = min_jerk(0.0, 0.3, 60);
        let p = single_dim_params(&demo, DmpConfig::default());
        let start = [0.1, 0.2, 0.3, 0.0, 0.0, 0.0];
        // Non-zero forcing still perturbs the path, so use a zero-weight copy.
        let mut flat = p.clone();
        flat.weights.iter_mut().for_each(|r| *r = [0.0; DOF]);
        let traj = flat.rollout(start, |_| start);
        assert_eq!(traj.len(), p.n_steps);
        for y in &traj {
            for d in 0..DOF {
                assert!((y[d] - start[d]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn straight_line_endpoints() {
        let n = 80;
        let poses: Vec<Pose> = min_jerk(0.0, 1.0, n)
            .iter()
            .map(|s| Pose::from_translation(0.1 + 0.2 * s, -0.3 * s, 0.25 - 0.1 * s))
            .collect();
        let fit = fit_segment(&poses, &DmpConfig::default()).unwrap();
        assert!(fit.singular.is_empty());
        let p = &fit.params;
        let goal = *poses.last().unwrap();
        let out = p.rollout_poses(&poses[0], |_| goal).unwrap();
        assert_eq!(out.len(), n);
        let e = crate::se3::pose_error(out.last().unwrap(), &goal);
        assert!(e.translational < 1e-3, "{e:?}");
        // Orientation dims are degenerate: weights zero and output constant.
        for row in &p.weights {
            assert_eq!(&row[3..], &[0.0; 3]);
        }
        for q in &out {
            assert!(q.orientation().angle_to(&poses[0].orientation()) < 1e-6);
        }
    }

    #[test]
    fn orientation_chart_rejects_wrap() {
        let poses: Vec<Pose> = (0..30).map(|k| Pose::rotz(k as f64 * 0.12)).collect();
        assert!(matches!(fit_segment(&poses, &DmpConfig::default()), Err(DmpError::OrientationChart { .. })));
    }

    #[test]
    fn goal_shift_converges() {
        let n = 100;
        let demo = min_jerk(0.0, 0.3, n);
        let p = single_dim_params(&demo, DmpConfig::default());
        let start = p.y0;
        let g = p.g_demo;
        let mut shifted = g;
        shifted[0] += 0.1;
        let traj = p.rollout(start, |k| if k >= n / 2 { shifted } else { g });
        assert!((traj.last().unwrap()[0] - shifted[0]).abs() <= 5e-3);
    }

    #[test]
    fn late_goal_shift_fails() {
        let n = 100;
        let demo = min_jerk(0.0, 0.3, n);
        let p = single_dim_params(&demo, DmpConfig::default());
        let mut shifted = p.g_demo;
        shifted[0] += 0.1;
        let traj = p.rollout(p.y0, |k| if k >= n - 3 { shifted } else { p.g_demo });
        assert!((traj.last().unwrap()[0] - shifted[0]).abs() > 5e-3);
    }

    #[test]
    fn deterministic_fit() {
        let demo = min_jerk(0.2, -0.4, 50);
        let a = single_dim_params(&demo, DmpConfig::default());
        let b = single_dim_params(&demo, DmpConfig::default());
        let bits = |p: &DmpParams| p.weights.iter().flat_map(|r| r.map(f64::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
