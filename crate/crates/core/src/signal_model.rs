//! Rotating point-scatterer echo model.
//!
//! After de-chirping and translational motion compensation, a target made of
//! `K` point scatterers rotating at angular velocity `ω` returns the slow-time
//! baseband echo
//!
//! ```text
//! s(t_m) = Σ_k σ_k · exp(j · 4π r_k cos(ω t_m + φ_k) / λ)
//! ```
//!
//! Each scatterer's instantaneous Doppler frequency is the phase derivative
//! divided by `2π`, and the swing of that frequency over a rotation gives the
//! Doppler bandwidth `4 r ω / λ`. These relations are used for physics
//! cross-checks only; the imaging chain in [`crate::encoding`] treats the
//! scene as a static reflectivity map.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const WAVELENGTH_REL_TOL: f64 = 1e-9;

/// Radar parameters. Only the wavelength enters the echo model; the rest is
/// carried as metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarParams {
    pub wavelength_m: f64,
    pub center_frequency_hz: f64,
    pub prf_hz: f64,
    pub pulse_length_s: f64,
    pub hpbw_elevation_rad: f64,
    pub hpbw_azimuth_rad: f64,
}

impl RadarParams {
    /// Builds parameters whose wavelength is derived from the carrier as `c / f_c`.
    pub fn from_center_frequency(center_frequency_hz: f64, prf_hz: f64) -> Result<Self> {
        if !(center_frequency_hz > 0.0) || !center_frequency_hz.is_finite() {
            return Err(Error::arg("center frequency must be positive and finite"));
        }
        let params = Self {
            wavelength_m: SPEED_OF_LIGHT / center_frequency_hz,
            center_frequency_hz,
            prf_hz,
            pulse_length_s: 50e-6,
            hpbw_elevation_rad: 0.0,
            hpbw_azimuth_rad: 0.0,
        };
        params.validate()?;
        Ok(params)
    }

    /// X-band pulse radar: 10.2 GHz carrier, 200 Hz PRF, 50 µs pulses.
    pub fn x_band() -> Self {
        Self::from_center_frequency(10.2e9, 200.0).expect("constant parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_m > 0.0) || !self.wavelength_m.is_finite() {
            return Err(Error::arg("wavelength must be positive and finite"));
        }
        if !(self.prf_hz > 0.0) {
            return Err(Error::arg("PRF must be positive"));
        }
        let implied = SPEED_OF_LIGHT / self.center_frequency_hz;
        if ((implied - self.wavelength_m) / self.wavelength_m).abs() > WAVELENGTH_REL_TOL {
            return Err(Error::arg(format!(
                "wavelength {} m is inconsistent with center frequency {} Hz (expected {} m)",
                self.wavelength_m, self.center_frequency_hz, implied
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub reflectivity: Complex64,
    pub radius_m: f64,
    pub phase_rad: f64,
}

impl Scatterer {
    pub fn new(reflectivity: Complex64, radius_m: f64, phase_rad: f64) -> Self {
        Self {
            reflectivity,
            radius_m,
            phase_rad,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius_m >= 0.0) || !self.radius_m.is_finite() {
            return Err(Error::arg(
                "scatterer radius must be finite and nonnegative",
            ));
        }
        if !self.reflectivity.re.is_finite() || !self.reflectivity.im.is_finite() {
            return Err(Error::arg("scatterer reflectivity must be finite"));
        }
        Ok(())
    }

    /// Instantaneous phase `4π r cos(ω t + φ) / λ`.
    pub fn phase(&self, omega: f64, wavelength_m: f64, t: f64) -> f64 {
        4.0 * PI * self.radius_m * (omega * t + self.phase_rad).cos() / wavelength_m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotatingScene {
    pub scatterers: Vec<Scatterer>,
    pub angular_velocity_rad_s: f64,
}

impl RotatingScene {
    pub fn new(scatterers: Vec<Scatterer>, angular_velocity_rad_s: f64) -> Self {
        Self {
            scatterers,
            angular_velocity_rad_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.angular_velocity_rad_s.is_finite() {
            return Err(Error::arg("angular velocity must be finite"));
        }
        self.scatterers.iter().try_for_each(Scatterer::validate)
    }
}

/// Strictly increasing slow-time sample instants.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowTimeGrid {
    samples: Vec<f64>,
}

impl SlowTimeGrid {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::arg("slow-time grid must be non-empty"));
        }
        if samples.iter().any(|t| !t.is_finite()) {
            return Err(Error::arg("slow-time samples must be finite"));
        }
        if samples.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("slow-time samples must be strictly increasing"));
        }
        Ok(Self { samples })
    }

    /// `count` samples starting at `start` spaced by `step`.
    pub fn uniform(start: f64, step: f64, count: usize) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::arg("sample spacing must be positive"));
        }
        Self::new((0..count).map(|i| start + step * i as f64).collect())
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Slow-time baseband echo, one complex sample per grid instant. The sum runs
/// over every scatterer in the scene.
pub fn baseband_echo(
    scene: &RotatingScene,
    radar: &RadarParams,
    grid: &SlowTimeGrid,
) -> Result<Vec<Complex64>> {
    scene.validate()?;
    radar.validate()?;
    let omega = scene.angular_velocity_rad_s;
    let echo = grid
        .samples()
        .iter()
        .map(|&t| {
            scene
                .scatterers
                .iter()
                .map(|s| {
                    s.reflectivity
                        * Complex64::from_polar(1.0, s.phase(omega, radar.wavelength_m, t))
                })
                .sum()
        })
        .collect();
    Ok(echo)
}

/// Instantaneous Doppler frequency `-2 r ω sin(ω t + φ) / λ` in Hz.
pub fn doppler_frequency(s: &Scatterer, scene_omega: f64, radar: &RadarParams, t_m: f64) -> f64 {
    -2.0 * s.radius_m * scene_omega * (scene_omega * t_m + s.phase_rad).sin() / radar.wavelength_m
}

/// Doppler bandwidth `4 r |ω| / λ` in Hz.
pub fn doppler_bandwidth(r_k: f64, omega: f64, wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) || !wavelength.is_finite() {
        return Err(Error::arg("wavelength must be positive"));
    }
    if !(r_k >= 0.0) || !r_k.is_finite() {
        return Err(Error::arg("radius must be finite and nonnegative"));
    }
    if !omega.is_finite() {
        return Err(Error::arg("angular velocity must be finite"));
    }
    Ok(4.0 * r_k * omega.abs() / wavelength)
}

/// Width of the smallest zero-centred band holding `fraction` of the echo's
/// spectral energy, in Hz.
///
/// The grid must be uniform with `sample_rate_hz` spacing. For a rotating
/// scatterer sampled over exactly one rotation the echo is periodic and the
/// DFT has no leakage.
pub fn energy_bandwidth(echo: &[Complex64], sample_rate_hz: f64, fraction: f64) -> Result<f64> {
    if echo.is_empty() {
        return Err(Error::arg("echo must be non-empty"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::arg("energy fraction must lie in (0, 1]"));
    }
    let len = echo.len();
    let mut spectrum = echo.to_vec();
    FftPlanner::new()
        .plan_fft_forward(len)
        .process(&mut spectrum);
    let power: Vec<f64> = spectrum.iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }

    // Accumulate bins in order of |frequency|, pairing +k with -k.
    let mut acc = power[0];
    let mut k = 0usize;
    while acc < fraction * total && k < len / 2 {
        k += 1;
        acc += power[k];
        if len - k != k {
            acc += power[len - k];
        }
    }
    let bin_hz = sample_rate_hz / len as f64;
    Ok(2.0 * k as f64 * bin_hz)
}

/// Samples a single scatterer densely over one full rotation and returns its
/// 95%-energy bandwidth next to the closed-form Doppler bandwidth, both in Hz.
pub fn spectral_bandwidth_check(
    radius_m: f64,
    omega: f64,
    radar: &RadarParams,
    oversample: f64,
) -> Result<(f64, f64)> {
    if !(omega.abs() > 0.0) {
        return Err(Error::arg("spectral check needs a rotating scatterer"));
    }
    let predicted = doppler_bandwidth(radius_m, omega, radar.wavelength_m)?;
    let period = 2.0 * PI / omega.abs();
    // Enough samples to cover the full Doppler swing plus the rotation harmonics.
    let samples = ((oversample * (predicted + omega.abs() / PI) * period).ceil() as usize).max(64);
    let step = period / samples as f64;
    let grid = SlowTimeGrid::uniform(0.0, step, samples)?;
    let scene = RotatingScene::new(
        vec![Scatterer::new(Complex64::new(1.0, 0.0), radius_m, 0.0)],
        omega,
    );
    let echo = baseband_echo(&scene, radar, &grid)?;
    let measured = energy_bandwidth(&echo, 1.0 / step, 0.95)?;
    Ok((measured, predicted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radar_for_wavelength(lambda: f64) -> RadarParams {
        RadarParams::from_center_frequency(SPEED_OF_LIGHT / lambda, 200.0).unwrap()
    }

    #[test]
    fn zero_radius_echo_is_reflectivity() {
        let scene = RotatingScene::new(
            vec![Scatterer::new(Complex64::new(1.0, 0.0), 0.0, 0.3)],
            7.0,
        );
        let grid = SlowTimeGrid::uniform(0.0, 0.01, 16).unwrap();
        let echo = baseband_echo(&scene, &RadarParams::x_band(), &grid).unwrap();
        assert!(echo.iter().all(|&v| v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn empty_scene_is_silent() {
        let scene = RotatingScene::new(vec![], 1.0);
        let grid = SlowTimeGrid::uniform(0.0, 0.01, 8).unwrap();
        let echo = baseband_echo(&scene, &RadarParams::x_band(), &grid).unwrap();
        assert!(echo.iter().all(|&v| v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn two_scatterers_superpose() {
        let radar = RadarParams::x_band();
        let a = Scatterer::new(Complex64::new(0.7, -0.2), 1.3, 0.4);
        let b = Scatterer::new(Complex64::new(-0.1, 1.1), 0.6, 2.0);
        let grid = SlowTimeGrid::uniform(0.0, 1e-3, 500).unwrap();
        let both = baseband_echo(&RotatingScene::new(vec![a, b], 2.5), &radar, &grid).unwrap();
        // Oracle: evaluate each scatterer's term directly.
        for (i, &t) in grid.samples().iter().enumerate() {
            let term = |s: &Scatterer| {
                let phase =
                    4.0 * PI * s.radius_m * (2.5 * t + s.phase_rad).cos() / radar.wavelength_m;
                s.reflectivity * Complex64::new(phase.cos(), phase.sin())
            };
            let expected = term(&a) + term(&b);
            assert!((both[i] - expected).norm() <= 1e-12 * expected.norm().max(1.0));
        }
    }

    #[test]
    fn stationary_and_centred_scatterers_have_no_doppler() {
        let radar = RadarParams::x_band();
        let s = Scatterer::new(Complex64::new(1.0, 0.0), 2.0, 0.5);
        assert_eq!(doppler_frequency(&s, 0.0, &radar, 1.7), 0.0);
        let centred = Scatterer::new(Complex64::new(1.0, 0.0), 0.0, 0.5);
        assert_eq!(doppler_frequency(&centred, 3.0, &radar, 1.7), 0.0);
    }

    #[test]
    fn doppler_frequency_reference_value() {
        let radar = radar_for_wavelength(0.029412);
        let s = Scatterer::new(Complex64::new(1.0, 0.0), 1.0, 0.0);
        // sin(π t) = 1 at t = 0.5 s.
        let f = doppler_frequency(&s, PI, &radar, 0.5);
        assert!((f - -213.6).abs() < 0.05, "{f}");
        // Cross-check with a centred difference of the phase.
        let h = 1e-6;
        let fd = (s.phase(PI, radar.wavelength_m, 0.5 + h)
            - s.phase(PI, radar.wavelength_m, 0.5 - h))
            / (4.0 * PI * h);
        assert!(((fd - f) / f).abs() < 1e-6);
    }

    #[test]
    fn doppler_bandwidth_reference_values() {
        assert_eq!(doppler_bandwidth(1.0, 0.0, 0.03).unwrap(), 0.0);
        let bw = doppler_bandwidth(1.0, PI, 0.029412).unwrap();
        assert!((bw - 427.3).abs() < 0.05, "{bw}");
        let doubled = doppler_bandwidth(1.0, 2.0 * PI, 0.029412).unwrap();
        assert!((doubled - 2.0 * bw).abs() < 1e-9);
        assert!(doppler_bandwidth(1.0, 1.0, 0.0).is_err());
        assert!(doppler_bandwidth(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn bandwidth_is_peak_to_peak_doppler_swing() {
        let radar = radar_for_wavelength(0.029412);
        let s = Scatterer::new(Complex64::new(1.0, 0.0), 1.0, 0.0);
        let grid = SlowTimeGrid::uniform(0.0, 2.0 / 40_000.0, 40_000).unwrap();
        let (lo, hi) = grid
            .samples()
            .iter()
            .map(|&t| doppler_frequency(&s, PI, &radar, t))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                (lo.min(f), hi.max(f))
            });
        let bw = doppler_bandwidth(1.0, PI, radar.wavelength_m).unwrap();
        assert!(((hi - lo) - bw).abs() / bw < 1e-6);
    }

    #[test]
    fn radar_params_validation() {
        let mut radar = RadarParams::x_band();
        assert!((radar.wavelength_m - 0.029_391_417).abs() < 1e-8);
        radar.wavelength_m *= 1.0 + 1e-6;
        assert!(radar.validate().is_err());
        let mut radar = RadarParams::x_band();
        radar.prf_hz = 0.0;
        assert!(radar.validate().is_err());
    }

    #[test]
    fn slow_time_grid_must_increase() {
        assert!(SlowTimeGrid::new(vec![]).is_err());
        assert!(SlowTimeGrid::new(vec![0.0, 0.0]).is_err());
        assert!(SlowTimeGrid::new(vec![0.0, 1.0, 0.5]).is_err());
        assert!(SlowTimeGrid::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn negative_radius_rejected() {
        let scene = RotatingScene::new(
            vec![Scatterer::new(Complex64::new(1.0, 0.0), -1.0, 0.0)],
            1.0,
        );
        let grid = SlowTimeGrid::uniform(0.0, 0.1, 4).unwrap();
        assert!(baseband_echo(&scene, &RadarParams::x_band(), &grid).is_err());
    }

    #[test]
    fn spectral_bandwidth_near_closed_form() {
        let (measured, predicted) =
            spectral_bandwidth_check(1.0, PI, &RadarParams::x_band(), 4.0).unwrap();
        assert!(
            (measured - predicted).abs() / predicted < 0.15,
            "{measured} vs {predicted}"
        );
    }
}
