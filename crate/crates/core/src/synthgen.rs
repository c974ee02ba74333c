//! Seeded synthetic telemetry with a known power decomposition.
//!
//! Node power is constructed as idle + workload watts + background watts +
//! gaussian noise, so isolation quality can be checked against exact ground
//! truth. Counters are emitted in the cumulative form the ingest path
//! expects; the noise series is stored, not re-sampled.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{
    write_csv_file, Producer, SeriesKey, SeriesUnit, TelemetryFrame, NODE_ENTITY,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadPattern {
    Constant,
    Ramp,
    Square,
    Bursty,
}

/// Square-wave period in seconds (50% duty cycle).
const SQUARE_PERIOD: u64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub container: String,
    pub pattern: WorkloadPattern,
    pub peak_usage: f64,
    pub watts_per_usage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surge {
    pub start: u64,
    pub end: u64,
    pub extra_usage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub container: String,
    pub base_usage: f64,
    pub surges: Vec<Surge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSpec {
    /// Multiplier on every workload's usage-to-watts slope; differs per
    /// platform to mimic frequency-governor effects.
    pub governor_gain: f64,
    /// Gaussian noise on node watts.
    pub noise_stddev: f64,
    /// Optional piecewise-linear compression of per-container watts above a
    /// knee, to exercise nonlinear learners.
    pub saturation: Option<Saturation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub knee_watts: f64,
    pub slope_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    /// Run length in seconds; the emitted frame has duration+1 cumulative
    /// samples, which convert to `duration` per-second rates.
    pub duration: u64,
    /// Idle leakage power with no processes running.
    pub idle_watts: f64,
    /// Idling background power: idle plus the background containers at base
    /// usage. The background usage-to-watts unit is derived from this, so
    /// the profile is consistent by construction.
    pub profile_background_watts: f64,
    pub platform: PlatformSpec,
    pub workloads: Vec<WorkloadSpec>,
    pub background: BackgroundSpec,
}

/// Exact per-second decomposition of the generated node power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub workload_watts: Vec<f64>,
    pub background_watts: Vec<f64>,
    pub noise: Vec<f64>,
    pub node_watts: Vec<f64>,
    pub workload_usage: Vec<f64>,
    pub p0: f64,
    pub p_profile: f64,
    pub background_ids: Vec<String>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Spec(msg));
        if self.duration < 10 {
            return err(format!("duration must be at least 10 s, got {}", self.duration));
        }
        if self.idle_watts.is_nan() || self.idle_watts < 0.0 {
            return err(format!("idle_watts must be non-negative, got {}", self.idle_watts));
        }
        if self.profile_background_watts < self.idle_watts {
            return err(format!(
                "profile_background_watts ({}) below idle_watts ({})",
                self.profile_background_watts, self.idle_watts
            ));
        }
        if self.workloads.is_empty() {
            return err("at least one workload container is required".into());
        }
        let mut ids = vec![self.background.container.clone()];
        for w in &self.workloads {
            if w.peak_usage < 0.0 || !w.peak_usage.is_finite() {
                return err(format!("bad peak_usage for {}", w.container));
            }
            if w.watts_per_usage <= 0.0 || !w.watts_per_usage.is_finite() {
                return err(format!("bad watts_per_usage for {}", w.container));
            }
            ids.push(w.container.clone());
        }
        ids.sort();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before || ids.iter().any(|id| id == NODE_ENTITY || id.is_empty()) {
            return err("container ids must be unique, non-empty and not \"node\"".into());
        }
        if self.platform.governor_gain <= 0.0 {
            return err(format!("governor_gain must be positive, got {}", self.platform.governor_gain));
        }
        if self.platform.noise_stddev < 0.0 {
            return err("noise_stddev must be non-negative".into());
        }
        if self.background.base_usage < 0.0 {
            return err("background base_usage must be non-negative".into());
        }
        if self.background.base_usage == 0.0 && self.profile_background_watts > self.idle_watts {
            return err("profile exceeds idle power but background base_usage is zero".into());
        }
        for s in &self.background.surges {
            if s.end <= s.start || s.end > self.duration {
                return err(format!("surge window [{}, {}) out of range", s.start, s.end));
            }
            if s.extra_usage < 0.0 {
                return err("surge extra_usage must be non-negative".into());
            }
        }
        Ok(())
    }

    /// Watts contributed by the background container per usage unit.
    fn background_unit_watts(&self) -> f64 {
        if self.background.base_usage > 0.0 {
            (self.profile_background_watts - self.idle_watts) / self.background.base_usage
        } else {
            self.platform.governor_gain
        }
    }
}

fn saturate(watts: f64, saturation: &Option<Saturation>) -> f64 {
    match saturation {
        Some(s) if watts > s.knee_watts => s.knee_watts + (watts - s.knee_watts) * s.slope_after,
        _ => watts,
    }
}

fn workload_usage(spec: &WorkloadSpec, duration: u64, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let n = duration as usize;
    match spec.pattern {
        WorkloadPattern::Constant => vec![spec.peak_usage; n],
        WorkloadPattern::Ramp => (0..n)
            .map(|t| spec.peak_usage * t as f64 / (n - 1).max(1) as f64)
            .collect(),
        WorkloadPattern::Square => (0..n as u64)
            .map(|t| {
                if t % SQUARE_PERIOD < SQUARE_PERIOD / 2 {
                    spec.peak_usage
                } else {
                    0.0
                }
            })
            .collect(),
        WorkloadPattern::Bursty => {
            let gap = Uniform::new_inclusive(10u64, 40).expect("static bounds");
            let level = Uniform::new_inclusive(0.5f64, 1.0).expect("static bounds");
            let mut usage = vec![0.0; n];
            let mut t = 0u64;
            let mut active = false;
            let mut current = 0.0;
            let mut remaining = gap.sample(rng);
            while (t as usize) < n {
                if remaining == 0 {
                    active = !active;
                    remaining = gap.sample(rng);
                    current = if active { spec.peak_usage * level.sample(rng) } else { 0.0 };
                }
                usage[t as usize] = current;
                t += 1;
                remaining -= 1;
            }
            usage
        }
    }
}

/// Generates one dataset: a cumulative-counter frame plus its ground truth.
pub fn generate(spec: &SynthSpec) -> Result<(TelemetryFrame, GroundTruth)> {
    spec.validate()?;
    let n = spec.duration as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    // Workload usage first, then noise: one seed drives both streams in a
    // fixed order.
    let usages: Vec<Vec<f64>> = spec
        .workloads
        .iter()
        .map(|w| workload_usage(w, spec.duration, &mut rng))
        .collect();

    let noise: Vec<f64> = if spec.platform.noise_stddev > 0.0 {
        let normal = Normal::new(0.0, spec.platform.noise_stddev)
            .map_err(|e| Error::Spec(format!("bad noise stddev: {e}")))?;
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    } else {
        vec![0.0; n]
    };

    let bg_unit = spec.background_unit_watts();
    let mut background_usage = vec![spec.background.base_usage; n];
    for surge in &spec.background.surges {
        for t in surge.start..surge.end {
            background_usage[t as usize] += surge.extra_usage;
        }
    }

    let mut workload_watts = vec![0.0; n];
    let mut workload_usage_total = vec![0.0; n];
    for (w, usage) in spec.workloads.iter().zip(&usages) {
        for t in 0..n {
            let watts = usage[t] * w.watts_per_usage * spec.platform.governor_gain;
            workload_watts[t] += saturate(watts, &spec.platform.saturation);
            workload_usage_total[t] += usage[t];
        }
    }
    let background_watts: Vec<f64> = background_usage.iter().map(|u| u * bg_unit).collect();
    let node_watts: Vec<f64> = (0..n)
        .map(|t| spec.idle_watts + workload_watts[t] + background_watts[t] + noise[t])
        .collect();
    if node_watts.iter().any(|w| *w < 0.0) {
        return Err(Error::Spec(
            "generated node power went negative; reduce noise_stddev".into(),
        ));
    }

    let mut series: BTreeMap<SeriesKey, Vec<f64>> = BTreeMap::new();
    let mut add_usage_series = |container: &str, usage: &[f64]| {
        let instructions: Vec<f64> = usage.iter().map(|u| 1500.0 * u).collect();
        series.insert(SeriesKey::new(container, Producer::Cgroups, "cpu_usage"), cumulative(usage));
        series.insert(
            SeriesKey::new(container, Producer::Bpf, "cpu_instructions"),
            cumulative(&instructions),
        );
    };
    for (w, usage) in spec.workloads.iter().zip(&usages) {
        add_usage_series(&w.container, usage);
    }
    add_usage_series(&spec.background.container, &background_usage);
    series.insert(
        SeriesKey::new(NODE_ENTITY, Producer::Power, "energy_joules"),
        cumulative(&node_watts),
    );

    let frame = TelemetryFrame::from_aligned(
        0,
        1,
        SeriesUnit::Cumulative,
        series,
        [spec.background.container.clone()],
    )?;
    let truth = GroundTruth {
        workload_watts,
        background_watts,
        noise,
        node_watts,
        workload_usage: workload_usage_total,
        p0: spec.idle_watts,
        p_profile: spec.profile_background_watts,
        background_ids: vec![spec.background.container.clone()],
    };
    Ok((frame, truth))
}

fn cumulative(rates: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rates.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for r in rates {
        acc += r;
        out.push(acc);
    }
    out
}

/// Platform/workload grid used by the dataset suite: 3 platforms x 3
/// patterns (ramp, square, bursty), each with mid-run background surges and
/// noise at 2% of the noiseless power range.
pub fn grid_specs(master_seed: u64) -> Vec<(String, SynthSpec)> {
    struct Platform {
        idle: f64,
        gain: f64,
    }
    let platforms = [
        Platform { idle: 40.0, gain: 1.0 },
        Platform { idle: 12.0, gain: 1.15 },
        Platform { idle: 50.0, gain: 0.85 },
    ];
    let patterns = [WorkloadPattern::Ramp, WorkloadPattern::Square, WorkloadPattern::Bursty];
    let duration = 600u64;
    let base_usage = 20.0;
    let watts_per_usage = 0.6;

    let mut out = Vec::new();
    for (pi, platform) in platforms.iter().enumerate() {
        for (wi, pattern) in patterns.iter().enumerate() {
            let tag = format!("p{}-w{}", pi + 1, wi + 1);
            let seed = master_seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((pi * 3 + wi) as u64 + 1);
            // The profile equals idle plus background base watts, using the
            // same usage-to-watts unit as the workloads on this platform.
            let profile = platform.idle + base_usage * watts_per_usage * platform.gain;
            let mut spec = SynthSpec {
                seed,
                duration,
                idle_watts: platform.idle,
                profile_background_watts: profile,
                platform: PlatformSpec {
                    governor_gain: platform.gain,
                    noise_stddev: 0.0,
                    saturation: None,
                },
                workloads: vec![WorkloadSpec {
                    container: "wl-1".into(),
                    pattern: *pattern,
                    peak_usage: 100.0,
                    watts_per_usage,
                }],
                background: BackgroundSpec {
                    container: "bg-0".into(),
                    base_usage,
                    surges: vec![
                        Surge { start: duration / 5, end: duration / 5 + duration / 10, extra_usage: 40.0 },
                        Surge { start: 3 * duration / 5, end: 3 * duration / 5 + duration / 6, extra_usage: 60.0 },
                    ],
                },
            };
            spec.platform.noise_stddev = 0.02 * noiseless_power_range(&spec);
            out.push((tag, spec));
        }
    }
    out
}

/// Power range of the spec with noise disabled, for sizing noise levels.
pub fn noiseless_power_range(spec: &SynthSpec) -> f64 {
    let mut quiet = spec.clone();
    quiet.platform.noise_stddev = 0.0;
    let (_, truth) = generate(&quiet).expect("spec validated by caller");
    let max = truth.node_watts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = truth.node_watts.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Single noisy dataset: a bursty workload with one long background surge
/// across t in [200, 800) of a 1000 s run.
pub fn noisy_scenario(seed: u64) -> SynthSpec {
    let duration = 1000u64;
    let base_usage = 20.0;
    let watts_per_usage = 0.6;
    let idle = 40.0;
    let mut spec = SynthSpec {
        seed,
        duration,
        idle_watts: idle,
        profile_background_watts: idle + base_usage * watts_per_usage,
        platform: PlatformSpec { governor_gain: 1.0, noise_stddev: 0.0, saturation: None },
        workloads: vec![WorkloadSpec {
            container: "wl-1".into(),
            pattern: WorkloadPattern::Bursty,
            peak_usage: 100.0,
            watts_per_usage,
        }],
        background: BackgroundSpec {
            container: "bg-0".into(),
            base_usage,
            surges: vec![Surge { start: 200, end: 800, extra_usage: 60.0 }],
        },
    };
    spec.platform.noise_stddev = 0.02 * noiseless_power_range(&spec);
    spec
}

pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Emits the dataset grid to `<out>/<tag>/{telemetry.csv,ground_truth.json}`.
/// Deterministic per seed: identical seeds give byte-identical files.
pub fn grid(master_seed: u64, out: &Path) -> Result<Vec<String>> {
    let mut tags = Vec::new();
    for (tag, spec) in grid_specs(master_seed) {
        write_dataset(&spec, &out.join(&tag))?;
        tags.push(tag);
    }
    Ok(tags)
}

/// Emits one dataset directory.
pub fn write_dataset(spec: &SynthSpec, dir: &Path) -> Result<()> {
    let (frame, truth) = generate(spec)?;
    fs::create_dir_all(dir)?;
    write_csv_file(&frame, &dir.join(TELEMETRY_FILE))?;
    let json = serde_json::to_vec_pretty(&truth)?;
    fs::write(dir.join(GROUND_TRUTH_FILE), json)?;
    Ok(())
}

/// Loads a ground-truth sidecar if present.
pub fn read_ground_truth(dir: &Path) -> Result<Option<GroundTruth>> {
    let path = dir.join(GROUND_TRUTH_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let truth = serde_json::from_slice(&fs::read(path)?)?;
    Ok(Some(truth))
}
