//! Uniform linear array algebra for single-RF-chain analog combining.
//!
//! Channels follow the narrowband geometric model: a sum of plane waves, each
//! with a complex gain and an azimuth angle of arrival measured from the array
//! axis (`pi/2` is broadside). Beams are unit-norm vectors whose entries all
//! have modulus `1/sqrt(M)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default upper bound on the number of beams [`exhaustive_best_quantized_beam`] may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// Thermal noise density at room temperature in dBm/Hz.
const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    /// Element spacing in meters.
    pub antenna_spacing: f64,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
}

impl ArrayConfig {
    pub fn new(num_antennas: usize, antenna_spacing: f64, carrier_frequency: f64) -> Result<Self> {
        let cfg = ArrayConfig {
            num_antennas,
            antenna_spacing,
            carrier_frequency,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Half-wavelength spaced array at `carrier_frequency`.
    pub fn half_wavelength(num_antennas: usize, carrier_frequency: f64) -> Result<Self> {
        Self::new(
            num_antennas,
            0.5 * SPEED_OF_LIGHT / carrier_frequency,
            carrier_frequency,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::invalid("array needs at least one antenna"));
        }
        if !(self.antenna_spacing > 0.0 && self.antenna_spacing.is_finite()) {
            return Err(Error::invalid("antenna spacing must be positive"));
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return Err(Error::invalid("carrier frequency must be positive"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength()
    }
}

/// The `2^r` phase values an `r`-bit phase shifter can apply.
///
/// Values are `-pi + i*2pi/2^r` for `i = 1..=2^r`: uniformly spaced over
/// `(-pi, pi]`, containing `pi` and excluding `-pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhaseSetRepr", into = "PhaseSetRepr")]
pub struct PhaseSet {
    bits: u32,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PhaseSetRepr {
    bits: u32,
    #[serde(default)]
    values: Vec<f64>,
}

impl TryFrom<PhaseSetRepr> for PhaseSet {
    type Error = Error;

    fn try_from(repr: PhaseSetRepr) -> Result<Self> {
        PhaseSet::new(repr.bits)
    }
}

impl From<PhaseSet> for PhaseSetRepr {
    fn from(ps: PhaseSet) -> Self {
        PhaseSetRepr {
            bits: ps.bits,
            values: ps.values,
        }
    }
}

impl PhaseSet {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::invalid(format!(
                "phase shifter resolution must be 1..=16 bits, got {bits}"
            )));
        }
        let n = 1usize << bits;
        let step = 2.0 * PI / n as f64;
        let values = (1..=n).map(|i| -PI + i as f64 * step).collect();
        Ok(PhaseSet { bits, values })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Phase values in strictly increasing order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the value nearest to `phase` by absolute difference; ties go to the larger value.
    pub fn nearest_index(&self, phase: f64) -> usize {
        let mut best = 0;
        let mut best_diff = f64::INFINITY;
        for (i, v) in self.values.iter().enumerate() {
            let diff = (v - phase).abs();
            // values ascend, so `<=` prefers the larger phase on ties
            if diff <= best_diff {
                best = i;
                best_diff = diff;
            }
        }
        best
    }

    pub fn nearest(&self, phase: f64) -> f64 {
        self.values[self.nearest_index(phase)]
    }

    pub fn contains(&self, phase: f64) -> bool {
        self.values.contains(&phase)
    }
}

/// Wraps a phase into `(-pi, pi]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let y = phase.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub gain: Complex64,
    /// Angle of arrival from the array axis, radians in `[0, pi]`.
    pub angle_of_arrival: f64,
    /// Number of reflections along the path; 0 is the direct path.
    pub interaction_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelVector {
    pub entries: Vec<Complex64>,
    pub path_count: usize,
    pub is_los: bool,
}

impl ChannelVector {
    pub fn zeros(num_antennas: usize) -> Self {
        ChannelVector {
            entries: vec![Complex64::new(0.0, 0.0); num_antennas],
            path_count: 0,
            is_los: false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// No propagation path reached the user.
    pub fn is_outage(&self) -> bool {
        self.path_count == 0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// A phase-shifter combining vector `w_m = exp(j*theta_m)/sqrt(M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    phases: Vec<f64>,
    weights: Vec<Complex64>,
}

impl Beam {
    pub fn from_phases(phases: Vec<f64>) -> Self {
        let scale = 1.0 / (phases.len() as f64).sqrt();
        let weights = phases
            .iter()
            .map(|&p| Complex64::from_polar(scale, p))
            .collect();
        Beam { phases, weights }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// True when every phase is a member of `ps`.
    pub fn is_quantized(&self, ps: &PhaseSet) -> bool {
        self.phases.iter().all(|&p| ps.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookEntry {
    pub label: String,
    pub beam: Beam,
    /// Set when the beam was learned from a cluster with no usable channel.
    pub zero_gain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub array: ArrayConfig,
    /// `None` for ideal (unquantized) codebooks such as the DFT baseline.
    pub phase_set: Option<PhaseSet>,
    pub entries: Vec<CodebookEntry>,
}

impl Codebook {
    pub fn new(
        array: ArrayConfig,
        phase_set: Option<PhaseSet>,
        entries: Vec<CodebookEntry>,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("codebook"));
        }
        for e in &entries {
            if e.beam.len() != array.num_antennas {
                return Err(Error::DimensionMismatch {
                    expected: array.num_antennas,
                    got: e.beam.len(),
                });
            }
            if let Some(ps) = &phase_set {
                if !e.beam.is_quantized(ps) {
                    return Err(Error::invalid(format!(
                        "beam '{}' has phases outside the {}-bit phase set",
                        e.label,
                        ps.bits()
                    )));
                }
            }
        }
        Ok(Codebook {
            array,
            phase_set,
            entries,
        })
    }

    /// Builds a codebook from bare beams labelled by their index.
    pub fn from_beams(
        array: ArrayConfig,
        phase_set: Option<PhaseSet>,
        beams: Vec<Beam>,
    ) -> Result<Self> {
        let entries = beams
            .into_iter()
            .enumerate()
            .map(|(i, beam)| CodebookEntry {
                label: i.to_string(),
                beam,
                zero_gain: false,
            })
            .collect();
        Self::new(array, phase_set, entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn beams(&self) -> impl Iterator<Item = &Beam> {
        self.entries.iter().map(|e| &e.beam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub eirp_dbm: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            eirp_dbm: 15.0,
            noise_figure_db: 5.0,
            bandwidth_hz: 100e6,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        if !self.eirp_dbm.is_finite() || !self.noise_figure_db.is_finite() {
            return Err(Error::invalid("link budget terms must be finite"));
        }
        Ok(())
    }

    /// Noise power over the band in dBm.
    pub fn noise_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_HZ + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    /// Linear transmit-power-to-noise ratio applied to the combining gain.
    pub fn rho(&self) -> f64 {
        10f64.powf((self.eirp_dbm - self.noise_dbm()) / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub linear: f64,
    /// `-inf` when the linear SNR is zero.
    pub db: f64,
}

impl Snr {
    pub fn from_linear(linear: f64) -> Self {
        let db = if linear > 0.0 {
            10.0 * linear.log10()
        } else {
            f64::NEG_INFINITY
        };
        Snr { linear, db }
    }
}

/// Steering vector `a(phi)_m = exp(j*k*d*m*cos(phi))`.
pub fn array_response(cfg: &ArrayConfig, angle: f64) -> Vec<Complex64> {
    let spatial = cfg.wavenumber() * cfg.antenna_spacing * angle.cos();
    (0..cfg.num_antennas)
        .map(|m| Complex64::from_polar(1.0, spatial * m as f64))
        .collect()
}

/// Sums the plane-wave contributions of `paths`.
pub fn synth_channel(cfg: &ArrayConfig, paths: &[PathComponent]) -> ChannelVector {
    let mut entries = vec![Complex64::new(0.0, 0.0); cfg.num_antennas];
    for path in paths {
        for (h, a) in entries
            .iter_mut()
            .zip(array_response(cfg, path.angle_of_arrival))
        {
            *h += path.gain * a;
        }
    }
    ChannelVector {
        entries,
        path_count: paths.len(),
        is_los: paths.iter().any(|p| p.interaction_count == 0),
    }
}

/// `|w^H h|^2` on raw slices. Callers guarantee equal lengths.
#[inline]
pub fn inner_gain(w: &[Complex64], h: &[Complex64]) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (wm, hm) in w.iter().zip(h) {
        acc += wm.conj() * hm;
    }
    acc.norm_sqr()
}

pub fn combining_gain(w: &Beam, h: &ChannelVector) -> Result<f64> {
    if w.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: h.len(),
        });
    }
    Ok(inner_gain(w.weights(), &h.entries))
}

pub fn snr(w: &Beam, h: &ChannelVector, lb: &LinkBudget) -> Result<Snr> {
    Ok(Snr::from_linear(combining_gain(w, h)? * lb.rho()))
}

/// Exhaustive codebook search; ties resolve to the smallest index.
pub fn best_beam(cb: &Codebook, h: &ChannelVector) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, beam) in cb.beams().enumerate() {
        let g = combining_gain(beam, h)?;
        if best.is_none_or(|(_, bg)| g > bg) {
            best = Some((i, g));
        }
    }
    best.ok_or(Error::Empty("codebook"))
}

/// Classical grid of `n` beams with linearly progressing, unquantized phases.
pub fn dft_codebook(cfg: &ArrayConfig, n: usize) -> Result<Codebook> {
    if n == 0 {
        return Err(Error::invalid("DFT codebook needs at least one beam"));
    }
    let beams = (0..n)
        .map(|beam| {
            let phases = (0..cfg.num_antennas)
                .map(|m| wrap_phase(-2.0 * PI * (m * beam) as f64 / n as f64))
                .collect();
            Beam::from_phases(phases)
        })
        .collect();
    Codebook::from_beams(*cfg, None, beams)
}

/// Largest `|w^H h|^2` over unit-modulus, unquantized beams: `(sum |h_m|)^2 / M`.
pub fn egc_gain(h: &ChannelVector) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    let s: f64 = h.entries.iter().map(|x| x.norm()).sum();
    s * s / h.len() as f64
}

/// Mean combining gain of `w` over `channels` on raw slices.
pub(crate) fn mean_gain(w: &[Complex64], channels: &[ChannelVector]) -> f64 {
    let total: f64 = channels.iter().map(|h| inner_gain(w, &h.entries)).sum();
    total / channels.len() as f64
}

/// Brute-force search over every quantized beam for the one with the highest
/// mean gain over `channels`. Intended as a test oracle for small arrays.
pub fn exhaustive_best_quantized_beam(
    cfg: &ArrayConfig,
    ps: &PhaseSet,
    channels: &[ChannelVector],
    cap: u128,
) -> Result<(Beam, f64)> {
    if channels.is_empty() {
        return Err(Error::Empty("channel set"));
    }
    let m = cfg.num_antennas;
    for h in channels {
        if h.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: h.len(),
            });
        }
    }
    let radix = ps.len();
    let combos = (radix as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if combos > cap {
        return Err(Error::EnumerationCap { combos, cap });
    }

    let values = ps.values();
    let mut digits = vec![0usize; m];
    let mut best_phases = vec![values[0]; m];
    let mut best_gain = f64::NEG_INFINITY;
    loop {
        let phases: Vec<f64> = digits.iter().map(|&d| values[d]).collect();
        let beam = Beam::from_phases(phases);
        let g = mean_gain(beam.weights(), channels);
        // relative margin keeps the first of several equal-gain beams regardless
        // of summation order
        if g > best_gain + 1e-12 * best_gain.abs() || best_gain == f64::NEG_INFINITY {
            best_gain = g;
            best_phases = beam.phases().to_vec();
        }
        // mixed-radix increment, most significant digit last
        let mut pos = 0;
        loop {
            if pos == m {
                let beam = Beam::from_phases(best_phases);
                return Ok((beam, best_gain));
            }
            digits[pos] += 1;
            if digits[pos] < radix {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}
