//! Generative multipath channel simulator.
//!
//! Each link carries a set of static multipath components (the cabin) plus a
//! few dynamic ones whose delays follow the occupant's breathing and, when
//! configured, a band-limited motion process. The received CSI on tone `f` is
//!
//! ```text
//! H(t, f) = sum_static a_m e^{-j 2 pi f tau_m} + sum_dynamic a_n(t) e^{-j 2 pi f tau_n(t)} + n(t, f)
//! ```
//!
//! with `n` circular complex Gaussian noise of power `noise_power`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::seed::{self, Purpose};

/// Shortest recording that still holds one analysis window.
pub const MIN_DURATION_S: f64 = 10.0;

/// Class labels in their canonical output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    Empty,
    Adult,
    Child,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Empty, Class::Adult, Class::Child];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Class> {
        Self::ALL.get(i).copied()
    }

    pub fn is_presence(self) -> bool {
        self != Class::Empty
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Class::Empty => "empty",
            Class::Adult => "adult",
            Class::Child => "child",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChildState {
    Awake,
    Sleeping,
    NotApplicable,
}

/// Antenna placement: C1 colocated, C2 distributed to the cabin corners, C3
/// hybrid (colocated receivers, distributed transmitters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AntennaConfig {
    C1,
    C2,
    C3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Cabin,
    /// Larger rooms used only for presence pretraining.
    Indoor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breathing {
    pub bpm: f64,
    /// Peak delay swing in seconds.
    pub displacement_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub bandwidth_hz: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathComponent {
    pub amplitude: Complex64,
    pub delay_s: f64,
    pub kind: PathKind,
    pub breathing: Option<Breathing>,
    pub motion: Option<Motion>,
}

impl MultipathComponent {
    pub fn validate(&self) -> Result<()> {
        if !(self.delay_s >= 0.0) {
            return Err(Error::InvalidConfig(format!("negative path delay {}", self.delay_s)));
        }
        if let Some(b) = self.breathing {
            if !(b.bpm > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "breathing rate {} must be positive",
                    b.bpm
                )));
            }
        }
        if let Some(m) = self.motion {
            if !(m.intensity >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "motion intensity {} is negative",
                    m.intensity
                )));
            }
        }
        if self.kind == PathKind::Static && (self.breathing.is_some() || self.motion.is_some()) {
            return Err(Error::InvalidConfig("static path carries a modulation".into()));
        }
        Ok(())
    }
}

/// Generative description of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub class_label: Class,
    pub child_state: ChildState,
    pub antenna_config: AntennaConfig,
    pub environment: Environment,
    pub num_links: usize,
    pub num_subcarriers_per_link: usize,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    /// Complex noise power per sample per subcarrier.
    pub noise_power: f64,
    /// Inclusive range of static path counts per link.
    pub static_paths: [usize; 2],
    /// Static path delays are drawn from `[0, static_delay_spread_s]`.
    pub static_delay_spread_s: f64,
    pub dynamic_paths: [usize; 2],
    /// Zero for empty scenes.
    pub breathing_bpm: f64,
    pub breathing_displacement_s: f64,
    pub motion_intensity: f64,
    pub motion_bandwidth_hz: f64,
    /// Fraction of time motion bursts are active; 1 means continuous.
    pub motion_duty_cycle: f64,
    /// Breathing rate of a child sharing the cabin with an adult.
    pub co_present_child_bpm: Option<f64>,
    pub per_link_sensitivity: Vec<f64>,
    pub rng_seed: u64,
}

impl ScenarioConfig {
    /// A sleeping-style scene with default geometry; callers adjust fields.
    pub fn new(class_label: Class, rng_seed: u64) -> Self {
        let (bpm, disp, dynamic) = match class_label {
            Class::Empty => (0.0, 0.0, [0, 0]),
            Class::Adult => (16.0, 0.12e-9, [1, 4]),
            Class::Child => (24.0, 0.05e-9, [1, 4]),
        };
        ScenarioConfig {
            class_label,
            child_state: if class_label == Class::Child {
                ChildState::Sleeping
            } else {
                ChildState::NotApplicable
            },
            antenna_config: AntennaConfig::C1,
            environment: Environment::Cabin,
            num_links: 4,
            num_subcarriers_per_link: 58,
            sample_rate_hz: 30.0,
            duration_s: 10.0,
            carrier_hz: 5.0e9,
            bandwidth_hz: 40.0e6,
            noise_power: 2e-3,
            static_paths: [8, 20],
            static_delay_spread_s: 100e-9,
            dynamic_paths: dynamic,
            breathing_bpm: bpm,
            breathing_displacement_s: disp,
            motion_intensity: 0.0,
            motion_bandwidth_hz: 0.0,
            motion_duty_cycle: 1.0,
            co_present_child_bpm: None,
            per_link_sensitivity: vec![1.0; 4],
            rng_seed,
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_subcarriers_per_link == 0 {
            return Err(Error::NoSubcarriers);
        }
        if self.num_links == 0 {
            return bad("at least one link is required".into());
        }
        if !(self.sample_rate_hz > 0.0) || !(self.bandwidth_hz > 0.0) || !(self.carrier_hz > 0.0) {
            return bad("sample rate, carrier and bandwidth must be positive".into());
        }
        if !(self.duration_s >= MIN_DURATION_S) {
            return Err(Error::DurationTooShort {
                duration_s: self.duration_s,
                window_s: MIN_DURATION_S,
            });
        }
        if !(self.noise_power >= 0.0) {
            return bad(format!("noise power {} is negative", self.noise_power));
        }
        if self.static_paths[0] > self.static_paths[1] || self.dynamic_paths[0] > self.dynamic_paths[1] {
            return bad("path count ranges must be ordered".into());
        }
        if !(self.static_delay_spread_s >= 0.0) {
            return bad("static delay spread is negative".into());
        }
        match self.class_label {
            Class::Empty => {
                if self.dynamic_paths != [0, 0] {
                    return bad("empty scenes have no dynamic paths".into());
                }
            }
            Class::Child => {
                if !(20.0..=30.0).contains(&self.breathing_bpm) {
                    return bad(format!("child breathing rate {} outside [20, 30]", self.breathing_bpm));
                }
            }
            Class::Adult => {
                if !(12.0..=20.0).contains(&self.breathing_bpm) {
                    return bad(format!("adult breathing rate {} outside [12, 20]", self.breathing_bpm));
                }
            }
        }
        if let Some(bpm) = self.co_present_child_bpm {
            if self.class_label != Class::Adult || !(20.0..=30.0).contains(&bpm) {
                return bad("a co-present child needs an adult scene and a rate in [20, 30]".into());
            }
        }
        if !(self.motion_intensity >= 0.0) || !(0.0..=1.0).contains(&self.motion_duty_cycle) {
            return bad("motion intensity must be non-negative and duty cycle in [0, 1]".into());
        }
        if self.motion_intensity > 0.0 && !(self.motion_bandwidth_hz > 0.0) {
            return bad("motion needs a positive bandwidth".into());
        }
        if self.per_link_sensitivity.len() != self.num_links {
            return bad(format!(
                "{} sensitivities for {} links",
                self.per_link_sensitivity.len(),
                self.num_links
            ));
        }
        if self.per_link_sensitivity.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return bad("link sensitivities must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Tone frequencies: evenly spaced bin centres across the band.
    pub fn subcarrier_frequencies(&self) -> Vec<f64> {
        let k = self.num_subcarriers_per_link;
        let spacing = self.bandwidth_hz / k as f64;
        (0..k)
            .map(|i| self.carrier_hz - self.bandwidth_hz / 2.0 + (i as f64 + 0.5) * spacing)
            .collect()
    }
}

/// Complex channel samples laid out `[time][link][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiRecording {
    pub samples: Vec<Complex64>,
    pub num_samples: usize,
    pub num_links: usize,
    pub num_subcarriers: usize,
    pub sample_rate_hz: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub scenario: ScenarioConfig,
}

impl CsiRecording {
    #[inline]
    pub fn index(&self, t: usize, link: usize, sc: usize) -> usize {
        (t * self.num_links + link) * self.num_subcarriers + sc
    }

    pub fn at(&self, t: usize, link: usize, sc: usize) -> Complex64 {
        self.samples[self.index(t, link, sc)]
    }

    pub fn duration_s(&self) -> f64 {
        self.num_samples as f64 / self.sample_rate_hz
    }

    /// Time series of one subcarrier over `[start, start + len)`.
    pub fn series(&self, link: usize, sc: usize, start: usize, len: usize) -> Vec<Complex64> {
        (start..start + len).map(|t| self.at(t, link, sc)).collect()
    }

    /// Reorders links so that output link `i` is input link `order[i]`.
    pub fn permute_links(&self, order: &[usize]) -> CsiRecording {
        assert_eq!(order.len(), self.num_links);
        let mut out = self.clone();
        for t in 0..self.num_samples {
            for (dst, &src) in order.iter().enumerate() {
                for sc in 0..self.num_subcarriers {
                    let v = self.at(t, src, sc);
                    let i = out.index(t, dst, sc);
                    out.samples[i] = v;
                }
            }
        }
        out.scenario.per_link_sensitivity = order.iter().map(|&s| self.scenario.per_link_sensitivity[s]).collect();
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = RecordingHeader {
            format: RECORDING_FORMAT.into(),
            num_samples: self.num_samples,
            num_links: self.num_links,
            num_subcarriers: self.num_subcarriers,
            sample_rate_hz: self.sample_rate_hz,
            carrier_hz: self.carrier_hz,
            bandwidth_hz: self.bandwidth_hz,
            scenario: self.scenario.clone(),
        };
        container::encode(&header, self.samples.iter().flat_map(|c| [c.re as f32, c.im as f32]))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (RecordingHeader, _) = container::decode(bytes)?;
        if h.format != RECORDING_FORMAT {
            return Err(Error::Format(format!("not a recording: {}", h.format)));
        }
        let expected = 2 * h.num_samples * h.num_links * h.num_subcarriers;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "recording payload holds {} values, header implies {expected}",
                payload.len()
            )));
        }
        let samples = payload
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0] as f64, c[1] as f64))
            .collect();
        Ok(CsiRecording {
            samples,
            num_samples: h.num_samples,
            num_links: h.num_links,
            num_subcarriers: h.num_subcarriers,
            sample_rate_hz: h.sample_rate_hz,
            carrier_hz: h.carrier_hz,
            bandwidth_hz: h.bandwidth_hz,
            scenario: h.scenario,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

const RECORDING_FORMAT: &str = "csi-recording/1";

#[derive(Serialize, Deserialize)]
struct RecordingHeader {
    format: String,
    num_samples: usize,
    num_links: usize,
    num_subcarriers: usize,
    sample_rate_hz: f64,
    carrier_hz: f64,
    bandwidth_hz: f64,
    scenario: ScenarioConfig,
}

/// Delay offset of a breathing-modulated path at time `t`.
pub fn breathing_waveform(bpm: f64, displacement_scale: f64, t: f64) -> f64 {
    displacement_scale * (2.0 * PI * (bpm / 60.0) * t).sin()
}

/// Unit-variance band-limited Gaussian-like process built from random tones
/// in `(0, bandwidth]`, optionally gated into on/off bursts.
struct MotionProcess {
    tones: Vec<(f64, f64)>,
    bursts: Vec<(f64, f64)>,
    continuous: bool,
}

const MOTION_TONES: usize = 16;
/// Delay jitter (s) per unit motion intensity.
const MOTION_DELAY_SCALE: f64 = 0.4e-9;
/// Relative amplitude jitter per unit motion intensity.
const MOTION_AMPLITUDE_SCALE: f64 = 0.3;

impl MotionProcess {
    fn draw(rng: &mut ChaCha8Rng, bandwidth_hz: f64, duty_cycle: f64, duration_s: f64) -> Self {
        let tones = (0..MOTION_TONES)
            .map(|_| {
                let f = bandwidth_hz * (1.0 - rng.random::<f64>());
                (f, 2.0 * PI * rng.random::<f64>())
            })
            .collect();
        let continuous = duty_cycle >= 1.0;
        let mut bursts = Vec::new();
        if !continuous && duty_cycle > 0.0 {
            const MEAN_BURST_S: f64 = 2.0;
            let mean_gap = MEAN_BURST_S * (1.0 - duty_cycle) / duty_cycle;
            let mut t = -mean_gap * rng.random::<f64>();
            while t < duration_s {
                let on = -MEAN_BURST_S * (1.0 - rng.random::<f64>()).ln();
                let off = -mean_gap * (1.0 - rng.random::<f64>()).ln();
                bursts.push((t, t + on));
                t += on + off;
            }
        }
        MotionProcess {
            tones,
            bursts,
            continuous,
        }
    }

    fn value(&self, t: f64) -> f64 {
        if !self.continuous && !self.bursts.iter().any(|&(a, b)| t >= a && t < b) {
            return 0.0;
        }
        let norm = (2.0 / self.tones.len() as f64).sqrt();
        norm * self
            .tones
            .iter()
            .map(|&(f, p)| (2.0 * PI * f * t + p).cos())
            .sum::<f64>()
    }
}

struct DynamicPath {
    component: MultipathComponent,
    breathing_phase_s: f64,
    delay_jitter: Option<MotionProcess>,
    amplitude_jitter: Option<MotionProcess>,
}

impl DynamicPath {
    fn state(&self, t: f64) -> (Complex64, f64) {
        let c = &self.component;
        let mut delay = c.delay_s;
        let mut amp = c.amplitude;
        if let Some(b) = c.breathing {
            delay += breathing_waveform(b.bpm, b.displacement_scale, t + self.breathing_phase_s);
        }
        if let (Some(m), Some(dj), Some(aj)) = (c.motion, &self.delay_jitter, &self.amplitude_jitter) {
            delay += m.intensity * MOTION_DELAY_SCALE * dj.value(t);
            amp *= 1.0 + m.intensity * MOTION_AMPLITUDE_SCALE * aj.value(t);
        }
        (amp, delay.max(0.0))
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

fn random_phase(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>())
}

/// Static components of one link.
pub fn draw_static_paths(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<MultipathComponent> {
    let n = rng.random_range(config.static_paths[0]..=config.static_paths[1]);
    (0..n)
        .map(|_| MultipathComponent {
            amplitude: log_uniform(rng, 0.1, 1.0) * random_phase(rng),
            delay_s: config.static_delay_spread_s * rng.random::<f64>(),
            kind: PathKind::Static,
            breathing: None,
            motion: None,
        })
        .collect()
}

fn draw_dynamic_paths(
    config: &ScenarioConfig,
    link: usize,
    geometry: &mut ChaCha8Rng,
    motion_rng: &mut ChaCha8Rng,
) -> Vec<DynamicPath> {
    let sensitivity = config.per_link_sensitivity[link];
    let max_delay = config.static_delay_spread_s.max(10e-9);
    let n = geometry.random_range(config.dynamic_paths[0]..=config.dynamic_paths[1]);
    let mut paths = Vec::with_capacity(n + 1);
    let body_phase = 60.0 * geometry.random::<f64>();
    for _ in 0..n {
        let amplitude = sensitivity * geometry.random_range(0.2..0.5) * random_phase(geometry);
        let delay = geometry.random_range(0.05..1.0) * max_delay;
        let breathing = Breathing {
            bpm: config.breathing_bpm,
            displacement_scale: config.breathing_displacement_s * geometry.random_range(0.6..1.0),
        };
        let motion = (config.motion_intensity > 0.0).then_some(Motion {
            bandwidth_hz: config.motion_bandwidth_hz,
            intensity: config.motion_intensity,
        });
        let (dj, aj) = match motion {
            Some(m) => (
                Some(MotionProcess::draw(
                    motion_rng,
                    m.bandwidth_hz,
                    config.motion_duty_cycle,
                    config.duration_s,
                )),
                Some(MotionProcess::draw(
                    motion_rng,
                    m.bandwidth_hz,
                    config.motion_duty_cycle,
                    config.duration_s,
                )),
            ),
            None => (None, None),
        };
        paths.push(DynamicPath {
            component: MultipathComponent {
                amplitude,
                delay_s: delay,
                kind: PathKind::Dynamic,
                breathing: Some(breathing),
                motion,
            },
            breathing_phase_s: body_phase,
            delay_jitter: dj,
            amplitude_jitter: aj,
        });
    }
    if let Some(bpm) = config.co_present_child_bpm {
        let amplitude = sensitivity * geometry.random_range(0.1..0.3) * random_phase(geometry);
        paths.push(DynamicPath {
            component: MultipathComponent {
                amplitude,
                delay_s: geometry.random_range(0.05..1.0) * max_delay,
                kind: PathKind::Dynamic,
                breathing: Some(Breathing {
                    bpm,
                    displacement_scale: 0.05e-9,
                }),
                motion: None,
            },
            breathing_phase_s: 60.0 * geometry.random::<f64>(),
            delay_jitter: None,
            amplitude_jitter: None,
        });
    }
    paths
}

/// Synthesizes one recording. Geometry, noise and motion draw from separate
/// seed streams, so changing the noise power leaves the path geometry intact.
pub fn synth_csi(config: &ScenarioConfig) -> Result<CsiRecording> {
    config.validate()?;
    let freqs = config.subcarrier_frequencies();
    let t_len = config.num_samples();
    let (links, k) = (config.num_links, config.num_subcarriers_per_link);

    let mut geometry = seed::rng(config.rng_seed, Purpose::Geometry, 0);
    let mut motion_rng = seed::rng(config.rng_seed, Purpose::Motion, 0);
    let mut noise_rng = seed::rng(config.rng_seed, Purpose::Noise, 0);

    let mut static_response = vec![Complex64::new(0.0, 0.0); links * k];
    let mut dynamic = Vec::with_capacity(links);
    for link in 0..links {
        for p in draw_static_paths(config, &mut geometry) {
            for (i, &f) in freqs.iter().enumerate() {
                static_response[link * k + i] += p.amplitude * Complex64::from_polar(1.0, -2.0 * PI * f * p.delay_s);
            }
        }
        dynamic.push(draw_dynamic_paths(config, link, &mut geometry, &mut motion_rng));
    }

    let sigma = (config.noise_power / 2.0).sqrt();
    let mut samples = Vec::with_capacity(t_len * links * k);
    let mut states = Vec::new();
    for t in 0..t_len {
        let time = t as f64 / config.sample_rate_hz;
        for (link, paths) in dynamic.iter().enumerate() {
            states.clear();
            states.extend(paths.iter().map(|p| p.state(time)));
            for (i, &f) in freqs.iter().enumerate() {
                let mut h = static_response[link * k + i];
                for &(amp, delay) in &states {
                    h += amp * Complex64::from_polar(1.0, -2.0 * PI * f * delay);
                }
                if sigma > 0.0 {
                    let re: f64 = StandardNormal.sample(&mut noise_rng);
                    let im: f64 = StandardNormal.sample(&mut noise_rng);
                    h += Complex64::new(sigma * re, sigma * im);
                }
                samples.push(h);
            }
        }
    }

    Ok(CsiRecording {
        samples,
        num_samples: t_len,
        num_links: links,
        num_subcarriers: k,
        sample_rate_hz: config.sample_rate_hz,
        carrier_hz: config.carrier_hz,
        bandwidth_hz: config.bandwidth_hz,
        scenario: config.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Presence/empty data for encoder pretraining, including indoor rooms.
    Pretrain,
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Pretrain, Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Pretrain => "pretrain",
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Ranges the static environment is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticRanges {
    pub paths: [usize; 2],
    pub delay_spread_s: [f64; 2],
}

/// Cabin geometry seen in training and validation. Test cabins come from
/// disjoint ranges so that evaluation runs on unseen environments.
pub fn static_ranges(split: Split, environment: Environment) -> StaticRanges {
    match (environment, split) {
        (Environment::Indoor, _) => StaticRanges {
            paths: [20, 60],
            delay_spread_s: [100e-9, 300e-9],
        },
        (Environment::Cabin, Split::Test) => StaticRanges {
            paths: [15, 20],
            delay_spread_s: [65e-9, 100e-9],
        },
        (Environment::Cabin, _) => StaticRanges {
            paths: [8, 14],
            delay_spread_s: [20e-9, 60e-9],
        },
    }
}

/// Dimensions shared by every scenario in a bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BankSettings {
    pub num_links: usize,
    pub num_subcarriers_per_link: usize,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    /// Log-uniform noise power range.
    pub noise_power: [f64; 2],
    /// Fraction of adult scenes that also hold a child.
    pub co_presence_fraction: f64,
}

impl Default for BankSettings {
    fn default() -> Self {
        BankSettings {
            num_links: 4,
            num_subcarriers_per_link: 58,
            sample_rate_hz: 30.0,
            duration_s: 10.0,
            noise_power: [1e-3, 1e-2],
            co_presence_fraction: 0.1,
        }
    }
}

fn link_sensitivity(rng: &mut ChaCha8Rng, antenna: AntennaConfig, links: usize) -> Vec<f64> {
    match antenna {
        AntennaConfig::C1 => {
            let base = rng.random_range(0.6..1.0);
            (0..links).map(|_| base * rng.random_range(0.85..1.0)).collect()
        }
        AntennaConfig::C2 => {
            let raw: Vec<f64> = (0..links).map(|_| rng.random_range(0.05..1.0)).collect();
            let max = raw.iter().cloned().fold(f64::MIN, f64::max);
            raw.iter().map(|v| v / max).collect()
        }
        AntennaConfig::C3 => (0..links).map(|_| rng.random_range(0.4..1.0)).collect(),
    }
}

/// Builds `count` scenarios with classes assigned round-robin in
/// `Class::ALL` order, so counts differ by at most one.
pub fn make_scenario_bank(
    split: Split,
    count: usize,
    seed: u64,
    settings: &BankSettings,
) -> Result<Vec<ScenarioConfig>> {
    if count == 0 {
        return Err(Error::InvalidConfig("scenario bank needs a positive count".into()));
    }
    let split_root = seed::derive(seed, Purpose::Scenario, split as u64);
    let mut bank = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = seed::rng(split_root, Purpose::Scenario, i as u64);
        let class = Class::ALL[i % 3];
        let environment = if split == Split::Pretrain && (i / 3) % 2 == 1 {
            Environment::Indoor
        } else {
            Environment::Cabin
        };
        let ranges = static_ranges(split, environment);
        let antenna = [AntennaConfig::C1, AntennaConfig::C2, AntennaConfig::C3][rng.random_range(0..3)];

        let mut s = ScenarioConfig::new(class, seed::derive(split_root, Purpose::Geometry, i as u64));
        s.antenna_config = antenna;
        s.environment = environment;
        s.num_links = settings.num_links;
        s.num_subcarriers_per_link = settings.num_subcarriers_per_link;
        s.sample_rate_hz = settings.sample_rate_hz;
        s.duration_s = settings.duration_s;
        s.noise_power = log_uniform(&mut rng, settings.noise_power[0], settings.noise_power[1]);
        s.static_paths = ranges.paths;
        s.static_delay_spread_s = rng.random_range(ranges.delay_spread_s[0]..=ranges.delay_spread_s[1]);
        s.per_link_sensitivity = link_sensitivity(&mut rng, antenna, settings.num_links);
        let indoor_boost = if environment == Environment::Indoor { 1.5 } else { 1.0 };
        match class {
            Class::Empty => {}
            Class::Adult => {
                s.breathing_bpm = rng.random_range(12.0..=20.0);
                s.breathing_displacement_s = rng.random_range(0.08e-9..0.2e-9);
                s.motion_intensity = indoor_boost * rng.random_range(0.0..0.3);
                s.motion_bandwidth_hz = rng.random_range(0.1..0.4);
                s.motion_duty_cycle = 1.0;
                if environment == Environment::Cabin && rng.random::<f64>() < settings.co_presence_fraction {
                    s.co_present_child_bpm = Some(rng.random_range(20.0..=30.0));
                }
            }
            Class::Child => {
                s.breathing_bpm = rng.random_range(20.0..=30.0);
                s.breathing_displacement_s = rng.random_range(0.03e-9..0.08e-9);
                if rng.random::<bool>() {
                    s.child_state = ChildState::Awake;
                    s.motion_intensity = indoor_boost * rng.random_range(0.5..1.0);
                    s.motion_bandwidth_hz = rng.random_range(1.0..2.0);
                    s.motion_duty_cycle = 0.4;
                } else {
                    s.child_state = ChildState::Sleeping;
                }
            }
        }
        s.validate()?;
        bank.push(s);
    }
    Ok(bank)
}
