//! Time-causal temporal smoothing, spatial Gaussian smoothing and
//! scale-normalized discrete derivatives.
//!
//! The temporal scale-space at variance `tau` is a cascade of `K` first-order
//! recursive filters. Intermediate variances are distributed geometrically,
//! `tau_k = c^(k-K) tau` (or `c^(2(k-K)) tau`, see [`TauDistribution`]), and each
//! stage adds the variance increment `tau_k - tau_(k-1)`. Processing is
//! strictly streaming: a frame is folded into the state and then discarded.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plane::{mirror_index, Plane};

/// How intermediate temporal variances are spread over the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauDistribution {
    /// `tau_k = c^(k-K) * tau_K`
    #[default]
    LinearInC,
    /// `tau_k = c^(2(k-K)) * tau_K`
    QuadraticInC,
}

impl TauDistribution {
    pub fn name(self) -> &'static str {
        match self {
            TauDistribution::LinearInC => "linear-in-c",
            TauDistribution::QuadraticInC => "quadratic-in-c",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear-in-c" => Ok(TauDistribution::LinearInC),
            "quadratic-in-c" => Ok(TauDistribution::QuadraticInC),
            other => Err(Error::BadParams(format!(
                "unknown tau distribution `{other}`"
            ))),
        }
    }
}

/// Composed time-causal kernel: `stages` truncated exponentials in cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    /// Variance of the composed kernel.
    pub tau: f64,
    pub c: f64,
    pub stages: usize,
    /// Time constants of the individual stages, `sum(mu^2) == tau`.
    pub mu: Vec<f64>,
    pub distribution: TauDistribution,
}

/// Builds the cascade for variance `tau` with the default distribution.
pub fn compute_time_constants(tau: f64, c: f64, stages: usize) -> Result<KernelSpec> {
    compute_time_constants_with(tau, c, stages, TauDistribution::LinearInC)
}

pub fn compute_time_constants_with(
    tau: f64,
    c: f64,
    stages: usize,
    distribution: TauDistribution,
) -> Result<KernelSpec> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::NonPositiveVariance(tau));
    }
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::BadRatio(c));
    }
    if stages == 0 {
        return Err(Error::NoStages);
    }
    let variances = level_variances(tau, c, stages, distribution);
    let mut prev = 0.0;
    let mu = variances
        .iter()
        .map(|&v| {
            let m = (v - prev).sqrt();
            prev = v;
            m
        })
        .collect();
    Ok(KernelSpec {
        tau,
        c,
        stages,
        mu,
        distribution,
    })
}

fn level_variances(tau: f64, c: f64, stages: usize, distribution: TauDistribution) -> Vec<f64> {
    let exponent_scale = match distribution {
        TauDistribution::LinearInC => 1.0,
        TauDistribution::QuadraticInC => 2.0,
    };
    (1..=stages)
        .map(|k| {
            if k == stages {
                tau
            } else {
                c.powf(exponent_scale * (k as f64 - stages as f64)) * tau
            }
        })
        .collect()
}

impl KernelSpec {
    /// Variances `tau_1..tau_K` of the intermediate kernels.
    pub fn level_variances(&self) -> Vec<f64> {
        level_variances(self.tau, self.c, self.stages, self.distribution)
    }

    /// Re-expresses the kernel in a different time unit; `unit_ratio` is the
    /// number of new units per old unit (e.g. frames per millisecond).
    pub fn rescaled(&self, unit_ratio: f64) -> KernelSpec {
        KernelSpec {
            tau: self.tau * unit_ratio * unit_ratio,
            c: self.c,
            stages: self.stages,
            mu: self.mu.iter().map(|m| m * unit_ratio).collect(),
            distribution: self.distribution,
        }
    }

    /// Converts a kernel specified in milliseconds to frame units.
    pub fn in_frames(&self, fps: f64) -> KernelSpec {
        self.rescaled(fps / 1000.0)
    }

    /// Time constants of the discrete first-order recursions: `mu_k` itself,
    /// in the kernel's time unit (frames once converted).
    ///
    /// A discrete stage with time constant `m` has mean delay `m` and
    /// variance `m^2 + m`. Using `mu_k` directly keeps the cascade's delay at
    /// `sum(mu_k)`, which scales exactly with the frame rate; the variance
    /// exceeds `tau` by `sum(mu_k)`.
    pub fn discrete_time_constants(&self) -> Vec<f64> {
        self.mu.clone()
    }

    pub fn standard_deviation(&self) -> f64 {
        self.tau.sqrt()
    }
}

/// Samples the continuous composed kernel on `t_grid` by numerically
/// convolving the truncated exponentials.
///
/// The first stage is evaluated in closed form; each further stage is applied
/// as the exact solution of `mu y' + y = g` for piecewise-linear `g` on a fine
/// internal grid, then the result is linearly interpolated onto `t_grid`.
pub fn temporal_kernel_explicit(spec: &KernelSpec, t_grid: &[f64]) -> Result<Vec<f64>> {
    if t_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if t_grid.iter().any(|&t| !(t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::BadParams(
            "time grid must be nonnegative and ascending".into(),
        ));
    }
    if spec.mu.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::BadParams("time constants must be positive".into()));
    }
    let first = spec.mu[0];
    if spec.stages == 1 {
        return Ok(t_grid.iter().map(|&t| (-t / first).exp() / first).collect());
    }

    let t_max = *t_grid.last().unwrap();
    if t_max == 0.0 {
        return Ok(vec![0.0; t_grid.len()]);
    }
    let min_mu = spec.mu.iter().cloned().fold(f64::INFINITY, f64::min);
    let steps = ((t_max / (min_mu / 64.0)).ceil() as usize).clamp(256, 4_000_000);
    let dt = t_max / steps as f64;

    let mut g: Vec<f64> = (0..=steps)
        .map(|i| (-(i as f64) * dt / first).exp() / first)
        .collect();
    let mut y = vec![0.0; steps + 1];
    for &m in &spec.mu[1..] {
        let a = (-dt / m).exp();
        let slope_gain = m * (1.0 - a) / dt;
        y[0] = 0.0;
        for i in 0..steps {
            let (g0, g1) = (g[i], g[i + 1]);
            y[i + 1] = a * y[i] + g1 - a * g0 - (g1 - g0) * slope_gain;
        }
        std::mem::swap(&mut g, &mut y);
    }

    Ok(t_grid
        .iter()
        .map(|&t| {
            let pos = t / dt;
            let i = (pos.floor() as usize).min(steps - 1);
            let frac = pos - i as f64;
            g[i] + (g[i + 1] - g[i]) * frac
        })
        .collect())
}

/// Streaming state of one temporal cascade over frames of fixed size.
#[derive(Debug, Clone)]
pub struct TemporalScaleState {
    width: usize,
    height: usize,
    /// Recursion gains `1 / (1 + m_k)`, one per stage.
    gains: Vec<f64>,
    /// Smoothed frames `L(.; tau_k)` for `k = 1..K`.
    levels: Vec<Plane>,
    /// Last three outputs of the final level, indexed by `head`.
    history: [Plane; 3],
    head: usize,
    frames_seen: u64,
    initialized: bool,
}

impl TemporalScaleState {
    /// Creates an uninitialized state; `spec` must be in frame units.
    pub fn new(width: usize, height: usize, spec: &KernelSpec) -> Self {
        let gains = spec
            .discrete_time_constants()
            .iter()
            .map(|m| 1.0 / (1.0 + m))
            .collect::<Vec<_>>();
        let levels = (0..spec.stages)
            .map(|_| Plane::new(width, height))
            .collect();
        TemporalScaleState {
            width,
            height,
            gains,
            levels,
            history: [
                Plane::new(width, height),
                Plane::new(width, height),
                Plane::new(width, height),
            ],
            head: 0,
            frames_seen: 0,
            initialized: false,
        }
    }

    /// Starts from an all-zero past, so outputs equal the causal convolution
    /// of the frames seen from now on.
    pub fn prime_zero(&mut self) {
        for p in self.levels.iter_mut().chain(self.history.iter_mut()) {
            p.data_mut().fill(0.0);
        }
        self.head = 0;
        self.frames_seen = 0;
        self.initialized = true;
    }

    /// Starts from the steady state of an infinitely long constant past equal
    /// to `frame`.
    pub fn prime_with(&mut self, frame: &Plane) -> Result<()> {
        frame.check_dims(self.width, self.height)?;
        for p in self.levels.iter_mut().chain(self.history.iter_mut()) {
            p.data_mut().copy_from_slice(frame.data());
        }
        self.head = 0;
        self.frames_seen = 0;
        self.initialized = true;
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn stages(&self) -> usize {
        self.levels.len()
    }

    /// Smoothed frame at cascade level `k` (1-based).
    pub fn level(&self, k: usize) -> &Plane {
        &self.levels[k - 1]
    }

    /// Current output of the final level, `L(.; tau_K)`.
    pub fn output(&self) -> &Plane {
        self.levels.last().expect("cascade has at least one stage")
    }

    /// Final-level output `lag` frames ago (`lag <= 2`).
    pub fn history(&self, lag: usize) -> &Plane {
        assert!(lag < 3, "history holds three frames");
        &self.history[(self.head + 3 - lag) % 3]
    }

    /// Bytes held in frame buffers; independent of stream length.
    pub fn buffer_bytes(&self) -> usize {
        (self.levels.len() + self.history.len()) * self.width * self.height * 8
    }

    /// Folds one frame into the cascade, updating levels `1..K` in order.
    pub fn step(&mut self, frame: &Plane) -> Result<()> {
        if !self.initialized {
            return Err(Error::UninitializedState);
        }
        frame.check_dims(self.width, self.height)?;
        let mut input: &[f64] = frame.data();
        for (level, &gain) in self.levels.iter_mut().zip(&self.gains) {
            let out = level.data_mut();
            for (o, &i) in out.iter_mut().zip(input) {
                *o += gain * (i - *o);
            }
            input = level.data();
        }
        self.head = (self.head + 1) % 3;
        let out = self.levels.last().unwrap().data();
        self.history[self.head].data_mut().copy_from_slice(out);
        self.frames_seen += 1;
        Ok(())
    }
}

/// Free-function form of [`TemporalScaleState::step`].
pub fn temporal_smooth_step(state: &mut TemporalScaleState, frame: &Plane) -> Result<()> {
    state.step(frame)
}

/// Sampled-Gaussian spatial smoothing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialScaleSpec {
    /// Standard deviation in pixels, `sqrt(s)`.
    pub sigma: f64,
    pub radius: usize,
}

impl SpatialScaleSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::NonPositiveScale(sigma));
        }
        Ok(SpatialScaleSpec {
            sigma,
            radius: (4.0 * sigma).ceil() as usize,
        })
    }

    /// Variance `s = sigma^2`.
    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Normalized sampled Gaussian of length `2 * radius + 1`.
    pub fn kernel(&self) -> Vec<f64> {
        let r = self.radius as isize;
        let denom = 2.0 * self.sigma * self.sigma;
        let mut k: Vec<f64> = (-r..=r)
            .map(|i| (-((i * i) as f64) / denom).exp())
            .collect();
        let sum: f64 = k.iter().sum();
        k.iter_mut().for_each(|v| *v /= sum);
        k
    }
}

/// Separable Gaussian smoothing with symmetric boundary extension.
pub fn spatial_smooth(frame: &Plane, spec: &SpatialScaleSpec) -> Result<Plane> {
    if !(spec.sigma > 0.0) {
        return Err(Error::NonPositiveScale(spec.sigma));
    }
    let kernel = spec.kernel();
    let r = spec.radius as isize;
    let (w, h) = frame.dims();
    if w == 0 || h == 0 {
        return Ok(frame.clone());
    }

    let mut rows = vec![0.0; w * h];
    rows.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let src = frame.row(y);
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let xi = mirror_index(x as isize + j as isize - r, w);
                acc += kv * src[xi];
            }
            *o = acc;
        }
    });

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        for (j, &kv) in kernel.iter().enumerate() {
            let yi = mirror_index(y as isize + j as isize - r, h);
            let src = &rows[yi * w..(yi + 1) * w];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    });
    Plane::from_vec(w, h, out)
}

/// Central-difference spatial derivative of order `(m1, m2)`, `m1 + m2 <= 2`.
pub fn spatial_derivative(plane: &Plane, m1: usize, m2: usize) -> Result<Plane> {
    if m1 + m2 > 2 {
        return Err(Error::UnsupportedOrder { m1, m2, n: 0 });
    }
    let (w, h) = plane.dims();
    let at = |x: isize, y: isize| plane.get(mirror_index(x, w), mirror_index(y, h));
    let f: Box<dyn Fn(isize, isize) -> f64 + Sync> = match (m1, m2) {
        (0, 0) => return Ok(plane.clone()),
        (1, 0) => Box::new(move |x, y| 0.5 * (at(x + 1, y) - at(x - 1, y))),
        (0, 1) => Box::new(move |x, y| 0.5 * (at(x, y + 1) - at(x, y - 1))),
        (2, 0) => Box::new(move |x, y| at(x + 1, y) - 2.0 * at(x, y) + at(x - 1, y)),
        (0, 2) => Box::new(move |x, y| at(x, y + 1) - 2.0 * at(x, y) + at(x, y - 1)),
        (1, 1) => Box::new(move |x, y| {
            0.25 * ((at(x + 1, y + 1) - at(x - 1, y + 1)) - (at(x + 1, y - 1) - at(x - 1, y - 1)))
        }),
        _ => unreachable!(),
    };
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                *o = f(x as isize, y as isize);
            }
        });
    Plane::from_vec(w, h, out)
}

/// Raw (unnormalized) derivative `L_{x^m1 y^m2 t^n}` of the state's output.
///
/// Spatial stencils are applied to each needed history frame first; backward
/// temporal differences (`[1, -1]`, `[1, -2, 1]`) are then taken over the
/// spatially differentiated frames, so only past frames are touched.
pub fn derivative_response(
    state: &TemporalScaleState,
    m1: usize,
    m2: usize,
    n: usize,
) -> Result<Plane> {
    if n > 2 || m1 + m2 > 2 {
        return Err(Error::UnsupportedOrder { m1, m2, n });
    }
    if !state.is_initialized() {
        return Err(Error::UninitializedState);
    }
    if state.frames_seen() < (n + 1) as u64 {
        return Err(Error::InsufficientHistory {
            order: n,
            needed: n + 1,
            seen: state.frames_seen(),
        });
    }
    let d0 = spatial_derivative(state.history(0), m1, m2)?;
    match n {
        0 => Ok(d0),
        1 => {
            let d1 = spatial_derivative(state.history(1), m1, m2)?;
            let (w, h) = d0.dims();
            let data = d0
                .data()
                .iter()
                .zip(d1.data())
                .map(|(a, b)| a - b)
                .collect();
            Plane::from_vec(w, h, data)
        }
        _ => {
            let d1 = spatial_derivative(state.history(1), m1, m2)?;
            let d2 = spatial_derivative(state.history(2), m1, m2)?;
            let (w, h) = d0.dims();
            let data = d0
                .data()
                .iter()
                .zip(d1.data())
                .zip(d2.data())
                .map(|((a, b), c)| a - 2.0 * b + c)
                .collect();
            Plane::from_vec(w, h, data)
        }
    }
}

/// Scale-normalization factor `s^((m1+m2) gamma_s / 2) * tau^(n gamma_tau / 2)`.
pub fn normalization_factor(
    s: f64,
    tau: f64,
    m1: usize,
    m2: usize,
    n: usize,
    gamma_s: f64,
    gamma_tau: f64,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::NonPositiveScale(s));
    }
    if !(tau > 0.0) {
        return Err(Error::NonPositiveScale(tau));
    }
    Ok(s.powf((m1 + m2) as f64 * gamma_s / 2.0) * tau.powf(n as f64 * gamma_tau / 2.0))
}

#[allow(clippy::too_many_arguments)]
pub fn scale_normalize(
    raw: &Plane,
    s: f64,
    tau: f64,
    m1: usize,
    m2: usize,
    n: usize,
    gamma_s: f64,
    gamma_tau: f64,
) -> Result<Plane> {
    let factor = normalization_factor(s, tau, m1, m2, n, gamma_s, gamma_tau)?;
    Ok(raw.scale(factor))
}

/// Frames to discard before a stream's responses settle: `ceil(5 sigma_tau)`.
pub fn warmup_frames(sigma_tau_frames: f64) -> usize {
    (5.0 * sigma_tau_frames).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_stage_takes_all_variance() {
        let spec = compute_time_constants(1.0, 2.0, 1).unwrap();
        assert_eq!(spec.mu, vec![1.0]);
    }

    #[test]
    fn two_stage_constants_follow_variance_increments() {
        let spec = compute_time_constants(1.0, 2.0, 2).unwrap();
        assert_eq!(spec.level_variances(), vec![0.5, 1.0]);
        // oracle: mu_k = sqrt(tau_k - tau_(k-1))
        let expected = [0.5f64.sqrt(), 0.5f64.sqrt()];
        for (m, e) in spec.mu.iter().zip(expected) {
            assert!(close(*m, e, 1e-12));
        }
        assert!(close(spec.mu[0] * spec.mu[0], 0.5, 1e-12));
    }

    #[test]
    fn preset_variance_is_preserved() {
        let spec = compute_time_constants(2500.0, 2.0, 7).unwrap();
        let sum: f64 = spec.mu.iter().map(|m| m * m).sum();
        assert!(close(sum, 2500.0, 1e-6));
        let q = compute_time_constants_with(2500.0, 2.0, 7, TauDistribution::QuadraticInC).unwrap();
        let sum: f64 = q.mu.iter().map(|m| m * m).sum();
        assert!(close(sum, 2500.0, 1e-6));
        assert!(close(q.level_variances()[5], 625.0, 1e-9));
    }

    #[test]
    fn rejects_bad_kernel_parameters() {
        assert!(matches!(
            compute_time_constants(0.0, 2.0, 3),
            Err(Error::NonPositiveVariance(_))
        ));
        assert!(matches!(
            compute_time_constants(1.0, 1.0, 3),
            Err(Error::BadRatio(_))
        ));
        assert!(matches!(
            compute_time_constants(1.0, 2.0, 0),
            Err(Error::NoStages)
        ));
    }

    #[test]
    fn explicit_kernel_closed_forms() {
        let one = KernelSpec {
            tau: 1.0,
            c: 2.0,
            stages: 1,
            mu: vec![1.0],
            distribution: TauDistribution::LinearInC,
        };
        assert_eq!(temporal_kernel_explicit(&one, &[0.0]).unwrap(), vec![1.0]);
        let two = KernelSpec {
            tau: 4.0,
            mu: vec![2.0],
            ..one.clone()
        };
        let v = temporal_kernel_explicit(&two, &[2.0]).unwrap()[0];
        assert!(close(v, 0.18394, 1e-5));

        // equal time constants: closed form t e^{-t}, mode at t = 1
        let eq = KernelSpec {
            tau: 2.0,
            stages: 2,
            mu: vec![1.0, 1.0],
            ..one
        };
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        let h = temporal_kernel_explicit(&eq, &grid).unwrap();
        for (t, v) in grid.iter().zip(&h) {
            assert!(close(*v, t * (-t).exp(), 1e-4), "t={t}");
        }
        let (imax, vmax) =
            h.iter().enumerate().fold(
                (0, f64::MIN),
                |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
            );
        assert!(close(grid[imax], 1.0, 0.011));
        assert!(close(vmax, (-1.0f64).exp(), 1e-4));
    }

    #[test]
    fn explicit_kernel_rejects_empty_grid() {
        let spec = compute_time_constants(1.0, 2.0, 2).unwrap();
        assert!(matches!(
            temporal_kernel_explicit(&spec, &[]),
            Err(Error::EmptyGrid)
        ));
        assert!(temporal_kernel_explicit(&spec, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn discrete_cascade_delay_scales_with_frame_rate() {
        // impulse-response moments of the streaming cascade: delay sum(mu),
        // variance sum(mu^2 + mu)
        let moments = |spec: &KernelSpec| {
            let mut st = TemporalScaleState::new(1, 1, spec);
            st.prime_zero();
            let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
            for t in 0..4000 {
                let x = if t == 0 { 1.0 } else { 0.0 };
                st.step(&Plane::filled(1, 1, x)).unwrap();
                let h = st.output().get(0, 0);
                m0 += h;
                m1 += h * t as f64;
                m2 += h * (t * t) as f64;
            }
            let mean = m1 / m0;
            (m0, mean, m2 / m0 - mean * mean)
        };
        let spec = compute_time_constants(6.25, 2.0, 7).unwrap();
        let mu_sum: f64 = spec.mu.iter().sum();
        let (mass, delay, var) = moments(&spec);
        assert!(close(mass, 1.0, 1e-9));
        assert!(close(delay, mu_sum, 1e-6));
        assert!(close(var, 6.25 + mu_sum, 1e-6));
        // twice the frame rate: the delay in seconds is unchanged
        let (_, delay2, _) = moments(&spec.rescaled(2.0));
        assert!(close(delay2, 2.0 * delay, 1e-6));
    }

    #[test]
    fn constant_input_is_a_fixed_point() {
        let spec = compute_time_constants(16.0, 2.0, 7).unwrap();
        let frame = Plane::filled(4, 3, 0.37);
        let mut st = TemporalScaleState::new(4, 3, &spec);
        st.prime_with(&frame).unwrap();
        for _ in 0..20 {
            st.step(&frame).unwrap();
        }
        for k in 1..=7 {
            assert!(st.level(k).data().iter().all(|&v| v == 0.37));
        }
    }

    #[test]
    fn step_response_is_monotone_towards_one() {
        let spec = compute_time_constants(9.0, 2.0, 7).unwrap();
        let mut st = TemporalScaleState::new(1, 1, &spec);
        st.prime_zero();
        let one = Plane::filled(1, 1, 1.0);
        let mut prev = 0.0;
        for _ in 0..200 {
            st.step(&one).unwrap();
            let v = st.output().get(0, 0);
            assert!(v >= prev && v <= 1.0 + 1e-12);
            prev = v;
        }
        assert!(close(prev, 1.0, 1e-6));
    }

    #[test]
    fn step_errors() {
        let spec = compute_time_constants(1.0, 2.0, 2).unwrap();
        let mut st = TemporalScaleState::new(2, 2, &spec);
        assert!(matches!(
            st.step(&Plane::new(2, 2)),
            Err(Error::UninitializedState)
        ));
        st.prime_zero();
        assert!(matches!(
            st.step(&Plane::new(3, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gaussian_kernel_is_normalized() {
        for sigma in [0.5, 1.0, 2.0, 7.3] {
            let k = SpatialScaleSpec::new(sigma).unwrap().kernel();
            assert!(k.iter().all(|&v| v >= 0.0));
            assert!(close(k.iter().sum::<f64>(), 1.0, 1e-9));
        }
        assert!(matches!(
            SpatialScaleSpec::new(0.0),
            Err(Error::NonPositiveScale(_))
        ));
    }

    #[test]
    fn smoothing_preserves_constants() {
        let p = Plane::filled(9, 7, 2.5);
        let out = spatial_smooth(&p, &SpatialScaleSpec::new(3.0).unwrap()).unwrap();
        assert!(out.data().iter().all(|&v| close(v, 2.5, 1e-12)));
    }

    #[test]
    fn impulse_gives_sampled_gaussian() {
        let n = 41;
        let mut p = Plane::new(n, n);
        p.set(20, 20, 1.0);
        let spec = SpatialScaleSpec::new(2.0).unwrap();
        let out = spatial_smooth(&p, &spec).unwrap();
        // oracle: direct evaluation of the normalized sampled Gaussian
        let r = spec.radius as i64;
        let z: f64 = (-r..=r).map(|i| (-(i * i) as f64 / 8.0).exp()).sum();
        let g = |i: i64| {
            if i.abs() <= r {
                (-(i * i) as f64 / 8.0).exp() / z
            } else {
                0.0
            }
        };
        for x in 0..n {
            let expect = g(x as i64 - 20) * g(0);
            assert!(close(out.get(x, 20), expect, 1e-6));
        }
    }

    #[test]
    fn smoothing_semigroup() {
        let n = 64;
        let p = Plane::from_fn(n, n, |x, y| ((x * 7 + y * 13) % 17) as f64 / 17.0);
        let a = spatial_smooth(
            &spatial_smooth(&p, &SpatialScaleSpec::new(3.0).unwrap()).unwrap(),
            &SpatialScaleSpec::new(4.0).unwrap(),
        )
        .unwrap();
        let b = spatial_smooth(&p, &SpatialScaleSpec::new(5.0).unwrap()).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!(close(*u, *v, 1e-3));
        }
    }

    #[test]
    fn stencils_exact_on_polynomials() {
        let ramp = Plane::from_fn(10, 8, |x, _| 3.0 * x as f64);
        let d = spatial_derivative(&ramp, 1, 0).unwrap();
        for y in 0..8 {
            for x in 1..9 {
                assert_eq!(d.get(x, y), 3.0);
            }
        }
        let quad = Plane::from_fn(10, 8, |x, _| (x * x) as f64);
        let d = spatial_derivative(&quad, 2, 0).unwrap();
        for y in 0..8 {
            for x in 1..9 {
                assert_eq!(d.get(x, y), 2.0);
            }
        }
        let bilinear = Plane::from_fn(10, 8, |x, y| (x * y) as f64);
        let d = spatial_derivative(&bilinear, 1, 1).unwrap();
        assert_eq!(d.get(4, 4), 1.0);
        assert!(spatial_derivative(&ramp, 2, 1).is_err());
    }

    #[test]
    fn temporal_derivative_of_linear_signal() {
        // sigma_tau = 1 frame, f(t) = 5t
        let spec = compute_time_constants(1.0, 2.0, 7).unwrap();
        let mut st = TemporalScaleState::new(1, 1, &spec);
        st.prime_zero();
        let mut outputs = Vec::new();
        for t in 0..60 {
            st.step(&Plane::filled(1, 1, 5.0 * t as f64)).unwrap();
            outputs.push(st.output().get(0, 0));
        }
        let lt = derivative_response(&st, 0, 0, 1).unwrap().get(0, 0);
        let oracle = outputs[59] - outputs[58];
        assert!((lt - oracle).abs() <= 0.02 * oracle.abs());
        assert!(close(lt, 5.0, 0.1));
        let ltt = derivative_response(&st, 0, 0, 2).unwrap().get(0, 0);
        assert!(ltt.abs() < 1e-6);
    }

    #[test]
    fn derivative_needs_history() {
        let spec = compute_time_constants(1.0, 2.0, 2).unwrap();
        let mut st = TemporalScaleState::new(2, 2, &spec);
        st.prime_zero();
        st.step(&Plane::new(2, 2)).unwrap();
        assert!(derivative_response(&st, 0, 0, 0).is_ok());
        assert!(matches!(
            derivative_response(&st, 0, 0, 1),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn normalization_examples() {
        let one = Plane::filled(1, 1, 1.0);
        let v = |s, tau, m1, m2, n| {
            scale_normalize(&one, s, tau, m1, m2, n, 1.0, 1.0)
                .unwrap()
                .get(0, 0)
        };
        assert_eq!(v(4.0, 9.0, 0, 0, 0), 1.0);
        assert_eq!(v(4.0, 1.0, 1, 0, 0), 2.0);
        assert!(close(v(4.0, 9.0, 1, 1, 2), 36.0, 1e-12));
        assert!(scale_normalize(&one, 0.0, 1.0, 1, 0, 0, 1.0, 1.0).is_err());
    }
}
