//! Noise schedules and renoising.
//!
//! A [`NoiseSchedule`] stores the cumulative signal retention `alpha_bar[t]`
//! for noise levels `t = 0..=T`, with `alpha_bar[0] = 1` (clean) and
//! `alpha_bar[T]` close to zero (pure noise).

use std::fmt::Write as _;

use thiserror::Error;

use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("schedule needs at least one step")]
    NoSteps,
    #[error("alpha_bar[0] must be exactly 1, got {0}")]
    NotClean(f64),
    #[error("alpha_bar[{index}] = {value} is outside (0, 1]")]
    Range { index: usize, value: f64 },
    #[error("alpha_bar is not strictly decreasing at index {index}")]
    NotDecreasing { index: usize },
    #[error("invalid beta range [{beta_min}, {beta_max}]: need 0 < beta_min <= beta_max < 1")]
    Beta { beta_min: f64, beta_max: f64 },
    #[error("step {t} out of range 0..={steps}")]
    Step { t: usize, steps: usize },
    #[error("cannot subsample {steps} steps from a {train_steps}-step schedule")]
    Subsample { steps: usize, train_steps: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Validates and wraps a caller-supplied retention sequence.
    pub fn from_alpha_bar(alpha_bar: Vec<f64>) -> Result<Self, ScheduleError> {
        if alpha_bar.len() < 2 {
            return Err(ScheduleError::NoSteps);
        }
        if alpha_bar[0] != 1.0 {
            return Err(ScheduleError::NotClean(alpha_bar[0]));
        }
        for (index, &value) in alpha_bar.iter().enumerate() {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ScheduleError::Range { index, value });
            }
            if index > 0 && value >= alpha_bar[index - 1] {
                return Err(ScheduleError::NotDecreasing { index });
            }
        }
        Ok(Self { alpha_bar })
    }

    /// DDPM schedule with `steps` linearly spaced betas.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self, ScheduleError> {
        if steps == 0 {
            return Err(ScheduleError::NoSteps);
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(ScheduleError::Beta { beta_min, beta_max });
        }
        let betas = (0..steps).map(|s| {
            if steps == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * s as f64 / (steps - 1) as f64
            }
        });
        Self::from_betas(betas)
    }

    /// Latent-diffusion training schedule (betas linear in sqrt space)
    /// evaluated at `steps` evenly spaced inference levels.
    pub fn scaled_linear_subsampled(
        steps: usize,
        train_steps: usize,
        beta_start: f64,
        beta_end: f64,
    ) -> Result<Self, ScheduleError> {
        if steps == 0 {
            return Err(ScheduleError::NoSteps);
        }
        if steps > train_steps {
            return Err(ScheduleError::Subsample { steps, train_steps });
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(ScheduleError::Beta {
                beta_min: beta_start,
                beta_max: beta_end,
            });
        }
        let (lo, hi) = (beta_start.sqrt(), beta_end.sqrt());
        let mut cumulative = Vec::with_capacity(train_steps);
        let mut acc = 1.0;
        for s in 0..train_steps {
            let b = lo + (hi - lo) * s as f64 / (train_steps - 1).max(1) as f64;
            acc *= 1.0 - b * b;
            cumulative.push(acc);
        }
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        for k in 1..=steps {
            let idx = ((k * train_steps) as f64 / steps as f64).round() as usize;
            alpha_bar.push(cumulative[idx - 1]);
        }
        Self::from_alpha_bar(alpha_bar)
    }

    /// 1000-step latent-diffusion schedule (0.00085..0.012) at `steps` levels.
    pub fn ldm(steps: usize) -> Result<Self, ScheduleError> {
        Self::scaled_linear_subsampled(steps, 1000, 0.000_85, 0.012)
    }

    fn from_betas(betas: impl Iterator<Item = f64>) -> Result<Self, ScheduleError> {
        let mut alpha_bar = vec![1.0];
        let mut acc = 1.0;
        for b in betas {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Self::from_alpha_bar(alpha_bar)
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64, ScheduleError> {
        self.alpha_bar.get(t).copied().ok_or(ScheduleError::Step {
            t,
            steps: self.steps(),
        })
    }

    /// Single-step retention `alpha_bar[t] / alpha_bar[t-1]`: the factor that
    /// takes a sample at level `t-1` back to level `t`. Equals 1 at `t = 0`.
    pub fn step_retention(&self, t: usize) -> Result<f64, ScheduleError> {
        let a = self.alpha_bar(t)?;
        if t == 0 {
            return Ok(1.0);
        }
        Ok(a / self.alpha_bar[t - 1])
    }

    /// One value per line, shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for v in &self.alpha_bar {
            writeln!(s, "{v}").unwrap();
        }
        s
    }

    /// Parses [`to_text`](Self::to_text) output; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self, ScheduleError> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = line.parse::<f64>().map_err(|e| ScheduleError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            values.push(v);
        }
        Self::from_alpha_bar(values)
    }
}

/// Plain DDPM schedule with `steps` betas linearly spaced in `[beta_min, beta_max]`.
pub fn make_linear_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule, ScheduleError> {
    NoiseSchedule::linear(steps, beta_min, beta_max)
}

/// `sqrt(alpha_bar[t])·x + sqrt(1 - alpha_bar[t])·ε` elementwise.
pub fn renoise<S: Scalar>(
    input: &[S],
    schedule: &NoiseSchedule,
    t: usize,
    rng: &mut SeededRng,
) -> Result<Vec<S>, ScheduleError> {
    let a = schedule.alpha_bar(t)?;
    let mut out = input.to_vec();
    renoise_with_retention(&mut out, a, rng);
    Ok(out)
}

/// In-place `sqrt(a)·x + sqrt(1 - a)·ε`. `a == 1` leaves `x` untouched and
/// draws nothing.
pub fn renoise_with_retention<S: Scalar>(values: &mut [S], retention: f64, rng: &mut SeededRng) {
    if retention >= 1.0 {
        return;
    }
    let keep = S::of(retention.sqrt());
    let add = S::of((1.0 - retention).sqrt());
    for v in values {
        let e: S = rng.normal();
        *v = keep * *v + add * e;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_product() {
        let s = NoiseSchedule::linear(1, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bars(), &[1.0, 0.5]);
        let s = NoiseSchedule::linear(2, 0.5, 0.5).unwrap();
        assert_eq!(s.alpha_bars(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn ddpm_thousand_steps() {
        let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
        // independent evaluation of the product in log space
        let log: f64 = (0..1000)
            .map(|i| (1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0)).ln())
            .sum();
        let last = s.alpha_bar(1000).unwrap();
        assert!((last - log.exp()).abs() < 1e-12);
        assert!(last < 5e-2);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert_eq!(NoiseSchedule::linear(0, 0.1, 0.2), Err(ScheduleError::NoSteps));
        assert!(matches!(NoiseSchedule::linear(3, 0.0, 0.2), Err(ScheduleError::Beta { .. })));
        assert!(matches!(NoiseSchedule::linear(3, 0.3, 0.2), Err(ScheduleError::Beta { .. })));
        assert!(matches!(NoiseSchedule::linear(3, 0.1, 1.0), Err(ScheduleError::Beta { .. })));
        assert!(matches!(
            NoiseSchedule::from_alpha_bar(vec![1.0, 0.5, 0.5]),
            Err(ScheduleError::NotDecreasing { index: 2 })
        ));
        assert!(matches!(
            NoiseSchedule::from_alpha_bar(vec![0.9, 0.5]),
            Err(ScheduleError::NotClean(_))
        ));
        assert!(matches!(
            NoiseSchedule::from_alpha_bar(vec![1.0, 0.0]),
            Err(ScheduleError::Range { index: 1, .. })
        ));
    }

    #[test]
    fn ldm_subsample_endpoints() {
        let s = NoiseSchedule::ldm(50).unwrap();
        assert_eq!(s.steps(), 50);
        assert!(s.alpha_bar(50).unwrap() < 0.01);
        assert!(s.alpha_bar(1).unwrap() > 0.97);
        let full = NoiseSchedule::ldm(1000).unwrap();
        assert_eq!(full.alpha_bar(1000).unwrap(), s.alpha_bar(50).unwrap());
        assert_eq!(full.alpha_bar(600).unwrap(), s.alpha_bar(30).unwrap());
    }

    #[test]
    fn text_roundtrip_exact() {
        let s = NoiseSchedule::ldm(37).unwrap();
        let back = NoiseSchedule::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
        assert!(matches!(
            NoiseSchedule::from_text("1\nnope\n"),
            Err(ScheduleError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn renoise_at_zero_is_identity() {
        let s = NoiseSchedule::linear(4, 0.1, 0.2).unwrap();
        let x: Vec<f32> = (0..100).map(|i| i as f32 * 0.1 - 3.0).collect();
        let y = renoise(&x, &s, 0, &mut SeededRng::new(1)).unwrap();
        assert_eq!(x, y);
        assert!(matches!(
            renoise(&x, &s, 5, &mut SeededRng::new(1)),
            Err(ScheduleError::Step { t: 5, steps: 4 })
        ));
    }

    #[test]
    fn renoise_is_reproducible() {
        let s = NoiseSchedule::ldm(10).unwrap();
        let x = vec![0.5f32; 1000];
        let a = renoise(&x, &s, 7, &mut SeededRng::new(9)).unwrap();
        let b = renoise(&x, &s, 7, &mut SeededRng::new(9)).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn pure_noise_limit_moments() {
        let n = 1_000_000;
        let mut v = vec![3.0f64; n];
        renoise_with_retention(&mut v, 0.0, &mut SeededRng::new(11));
        let (mean, var) = moments(&v);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn zero_input_variance_identity() {
        let s = NoiseSchedule::from_alpha_bar(vec![1.0, 0.25]).unwrap();
        let x = vec![0.0f64; 1_000_000];
        let y = renoise(&x, &s, 1, &mut SeededRng::new(12)).unwrap();
        let (_, var) = moments(&y);
        assert!((var - 0.75).abs() < 0.02, "var {var}");
    }

    #[test]
    fn variance_transfer_law() {
        // Var[renoise(x)] - a·Var[x] → 1 - a
        let n = 1_000_000;
        let mut src = SeededRng::new(13);
        let x: Vec<f64> = (0..n).map(|_| 2.0 * src.normal::<f64>()).collect();
        let (_, vx) = moments(&x);
        for a in [0.9, 0.5, 0.1] {
            let mut y = x.clone();
            renoise_with_retention(&mut y, a, &mut SeededRng::new(14));
            let (_, vy) = moments(&y);
            assert!((vy - a * vx - (1.0 - a)).abs() < 0.02, "a={a} vy={vy}");
        }
    }

    #[test]
    fn step_retention_chains_to_cumulative() {
        let s = NoiseSchedule::ldm(20).unwrap();
        let mut acc = 1.0;
        for t in 1..=20 {
            acc *= s.step_retention(t).unwrap();
            assert!((acc - s.alpha_bar(t).unwrap()).abs() < 1e-12);
        }
        assert_eq!(s.step_retention(0).unwrap(), 1.0);
    }
}
