//! Analytical throughput and energy model of the accelerator.
//!
//! Operation counts are GPU-equivalent: the number of operations an
//! electronic processor would spend on the same convolutions, either through
//! FFTs or by direct 3×3 sliding windows. Optical power counts the camera and
//! both DMDs only.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CAMERA_POWER_W: f64 = 17.0;
pub const DMD_POWER_W: f64 = 6.3;
/// Camera plus two DMDs.
pub const SYSTEM_POWER_W: f64 = CAMERA_POWER_W + 2.0 * DMD_POWER_W;
/// Typical DRAM access energy used for the I/O estimate.
pub const DRAM_PJ_PER_BIT: f64 = 20.0;
/// Version of the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One operating point of the accelerator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfScenario {
    pub label: String,
    /// Image rows `M`.
    pub image_m: f64,
    /// Image columns `N`.
    pub image_n: f64,
    pub kernel_m: f64,
    pub kernel_n: f64,
    /// Images tiled on the input DMD, `i`.
    pub inputs: u32,
    /// Kernels processed in parallel, `k`.
    pub kernels: u32,
    pub frame_rate_hz: f64,
    pub power_w: f64,
}

impl PerfScenario {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("image_m", self.image_m),
            ("image_n", self.image_n),
            ("kernel_m", self.kernel_m),
            ("kernel_n", self.kernel_n),
            ("frame_rate_hz", self.frame_rate_hz),
            ("power_w", self.power_w),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.inputs == 0 || self.kernels == 0 {
            return Err(Error::InvalidArgument(
                "input and kernel parallelism must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn parallelism(&self) -> u64 {
        self.inputs as u64 * self.kernels as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMethod {
    /// Two FFTs and a pointwise product per convolution.
    Fft,
    /// Direct sliding-window convolution.
    Brute,
}

impl ConvMethod {
    pub fn name(self) -> &'static str {
        match self {
            ConvMethod::Fft => "fft",
            ConvMethod::Brute => "brute",
        }
    }
}

/// `[10·M·log₂((2i−1)·M)·N·log₂(N) + m·n]·i·k·f / P`.
pub fn ops_per_watt_fft(s: &PerfScenario) -> Result<f64> {
    s.validate()?;
    let i = s.inputs as f64;
    let per_conv = 10.0 * s.image_m * ((2.0 * i - 1.0) * s.image_m).log2() * s.image_n * s.image_n.log2()
        + s.kernel_m * s.kernel_n;
    Ok(per_conv * i * s.kernels as f64 * s.frame_rate_hz / s.power_w)
}

/// `(M·N·m·n)·i·f·k / P`.
pub fn ops_per_watt_brute(s: &PerfScenario) -> Result<f64> {
    s.validate()?;
    Ok(
        s.image_m * s.image_n * s.kernel_m * s.kernel_n * s.inputs as f64 * s.frame_rate_hz * s.kernels as f64
            / s.power_w,
    )
}

pub fn ops_per_watt(s: &PerfScenario, method: ConvMethod) -> Result<f64> {
    match method {
        ConvMethod::Fft => ops_per_watt_fft(s),
        ConvMethod::Brute => ops_per_watt_brute(s),
    }
}

/// Power spent moving one frame's binary inputs and 8-bit camera outputs
/// through DRAM at the frame rate.
pub fn memory_power_w(s: &PerfScenario, pj_per_bit: f64) -> Result<f64> {
    s.validate()?;
    let pixels = s.image_m * s.image_n * s.inputs as f64;
    let bits_per_frame = pixels + 8.0 * pixels * s.kernels as f64;
    Ok(bits_per_frame * s.frame_rate_hz * pj_per_bit * 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub rate_hz: f64,
}

impl Stage {
    pub fn new(name: &str, rate_hz: f64) -> Self {
        Stage {
            name: name.to_string(),
            rate_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Sum of per-stage latencies.
    pub latency_s: f64,
    /// Rate of the slowest stage.
    pub throughput_hz: f64,
    /// Slowest stage; the earliest one in the table on ties.
    pub bottleneck: String,
}

/// End-to-end latency of a stage table, in pipeline order.
pub fn latency(stages: &[Stage]) -> Result<LatencyReport> {
    let first = stages
        .first()
        .ok_or_else(|| Error::InvalidArgument("latency needs at least one stage".into()))?;
    if let Some(s) = stages.iter().find(|s| !(s.rate_hz.is_finite() && s.rate_hz > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "stage {} has rate {}",
            s.name, s.rate_hz
        )));
    }
    let slowest = stages
        .iter()
        .fold(first, |best, s| if s.rate_hz < best.rate_hz { s } else { best });
    Ok(LatencyReport {
        latency_s: stages.iter().map(|s| 1.0 / s.rate_hz).sum(),
        throughput_hz: slowest.rate_hz,
        bottleneck: slowest.name.clone(),
    })
}

/// Published development stages of the accelerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generation {
    Gen1_0,
    Gen1_1,
    Gen1_2,
    Gen1_3,
}

impl Generation {
    pub const ALL: [Generation; 4] = [
        Generation::Gen1_0,
        Generation::Gen1_1,
        Generation::Gen1_2,
        Generation::Gen1_3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generation::Gen1_0 => "Gen1.0",
            Generation::Gen1_1 => "Gen1.1",
            Generation::Gen1_2 => "Gen1.2",
            Generation::Gen1_3 => "Gen1.3",
        }
    }

    /// Pipeline stages in signal order.
    pub fn stages(self) -> Vec<Stage> {
        match self {
            // single-shot, software-driven acquisition loop
            Generation::Gen1_0 => vec![
                Stage::new("dmd", 15_000.0),
                Stage::new("control loop", 1.0),
                Stage::new("camera", 100.0),
                Stage::new("head", 1_000.0),
            ],
            Generation::Gen1_1 => vec![
                Stage::new("dmd", 15_000.0),
                Stage::new("hdmi interconnect", 60.0),
                Stage::new("camera", 100.0),
                Stage::new("head", 1_000.0),
            ],
            Generation::Gen1_2 => vec![
                Stage::new("dmd", 15_000.0),
                Stage::new("camera", 100.0),
                Stage::new("head", 1_000.0),
            ],
            Generation::Gen1_3 => vec![
                Stage::new("dmd", 15_000.0),
                Stage::new("pcie interconnect", 2_000.0),
                Stage::new("camera", 2_000.0),
                Stage::new("head", 10_000.0),
            ],
        }
    }

    pub fn scenario(self) -> PerfScenario {
        let (inputs, kernels, f) = match self {
            Generation::Gen1_0 => (1, 1, 1.0),
            Generation::Gen1_1 => (49, 1, 60.0),
            Generation::Gen1_2 => (49, 2, 100.0),
            Generation::Gen1_3 => (64, 24, 2_000.0),
        };
        PerfScenario {
            label: self.name().to_string(),
            image_m: 28.0,
            image_n: 28.0,
            kernel_m: 3.0,
            kernel_n: 3.0,
            inputs,
            kernels,
            frame_rate_hz: f,
            power_w: SYSTEM_POWER_W,
        }
    }
}

/// Preset by name: `Gen1.0` to `Gen1.3`, or `Gen1.3-fullframe` for
/// 1920×1080 images at the Gen1.3 operating point.
pub fn generation_preset(name: &str) -> Result<PerfScenario> {
    if name == "Gen1.3-fullframe" {
        return Ok(PerfScenario {
            label: name.to_string(),
            image_m: 1080.0,
            image_n: 1920.0,
            ..Generation::Gen1_3.scenario()
        });
    }
    Generation::ALL
        .iter()
        .find(|g| g.name() == name)
        .map(|g| g.scenario())
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Stage table of a preset name (the full-frame variant shares Gen1.3's).
pub fn preset_stages(name: &str) -> Result<Vec<Stage>> {
    let base = name.strip_suffix("-fullframe").unwrap_or(name);
    Generation::ALL
        .iter()
        .find(|g| g.name() == base)
        .map(|g| g.stages())
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Published nominal figures of electronic references, for context only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpuReference {
    pub name: &'static str,
    pub peak_ops: f64,
    pub board_power_w: f64,
    pub note: &'static str,
}

impl GpuReference {
    pub fn ops_per_watt(&self) -> f64 {
        self.peak_ops / self.board_power_w
    }
}

pub const GPU_REFERENCES: [GpuReference; 2] = [
    GpuReference {
        name: "Tesla V100",
        peak_ops: 125e12,
        board_power_w: 300.0,
        note: "datasheet nominal, tensor mixed precision",
    },
    GpuReference {
        name: "Tesla M40",
        peak_ops: 7e12,
        board_power_w: 250.0,
        note: "datasheet nominal, single precision",
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub generation: String,
    pub mode: ConvMethod,
    #[serde(rename = "M")]
    pub image_m: f64,
    #[serde(rename = "N")]
    pub image_n: f64,
    #[serde(rename = "m")]
    pub kernel_m: f64,
    #[serde(rename = "n")]
    pub kernel_n: f64,
    pub i: u32,
    pub k: u32,
    pub f_hz: f64,
    #[serde(rename = "P_w")]
    pub power_w: f64,
    pub ops_per_watt: f64,
    pub latency_s: f64,
    pub bottleneck: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub rows: Vec<ReportRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("generation,mode,M,N,m,n,i,k,f_hz,P_w,ops_per_watt,latency_s,bottleneck\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{:e},{:e},{}\n",
                r.generation,
                r.mode.name(),
                r.image_m,
                r.image_n,
                r.kernel_m,
                r.kernel_n,
                r.i,
                r.k,
                r.f_hz,
                r.power_w,
                r.ops_per_watt,
                r.latency_s,
                r.bottleneck
            ));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One row per (scenario, method), scenarios in the given order.
pub fn sweep_report(presets: &[(PerfScenario, Vec<Stage>)], modes: &[ConvMethod]) -> Result<SweepReport> {
    if presets.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one preset".into()));
    }
    let mut rows = Vec::with_capacity(presets.len() * modes.len());
    for (s, stages) in presets {
        let lat = latency(stages)?;
        for &mode in modes {
            rows.push(ReportRow {
                generation: s.label.clone(),
                mode,
                image_m: s.image_m,
                image_n: s.image_n,
                kernel_m: s.kernel_m,
                kernel_n: s.kernel_n,
                i: s.inputs,
                k: s.kernels,
                f_hz: s.frame_rate_hz,
                power_w: s.power_w,
                ops_per_watt: ops_per_watt(s, mode)?,
                latency_s: lat.latency_s,
                bottleneck: lat.bottleneck.clone(),
            });
        }
    }
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        rows,
    })
}

/// The four generation presets with their stage tables.
pub fn generation_presets() -> Vec<(PerfScenario, Vec<Stage>)> {
    Generation::ALL.iter().map(|g| (g.scenario(), g.stages())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PerfScenario {
        PerfScenario {
            label: "unit".into(),
            image_m: 1.0,
            image_n: 1.0,
            kernel_m: 1.0,
            kernel_n: 1.0,
            inputs: 1,
            kernels: 1,
            frame_rate_hz: 1.0,
            power_w: 1.0,
        }
    }

    #[test]
    fn unit_scenario() {
        assert_eq!(ops_per_watt_fft(&unit()).unwrap(), 1.0);
        assert_eq!(
            ops_per_watt_brute(&PerfScenario { power_w: 4.0, ..unit() }).unwrap(),
            0.25
        );
    }

    #[test]
    fn gen12_brute_value() {
        let s = Generation::Gen1_2.scenario();
        let v = ops_per_watt_brute(&s).unwrap();
        assert!((v - 7056.0 * 9800.0 / 29.6).abs() < 1e-6);
        assert!((v / 2.336e6 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn system_power() {
        assert!((SYSTEM_POWER_W - 29.6).abs() < 1e-12);
    }

    #[test]
    fn preset_parallelism() {
        let p: Vec<u64> = Generation::ALL.iter().map(|g| g.scenario().parallelism()).collect();
        assert_eq!(p, vec![1, 49, 98, 1536]);
        assert!(matches!(generation_preset("Gen2.0"), Err(Error::UnknownPreset(_))));
        assert_eq!(generation_preset("Gen1.3-fullframe").unwrap().image_n, 1920.0);
    }

    #[test]
    fn stage_tables_match_preset_rates() {
        for g in Generation::ALL {
            let lat = latency(&g.stages()).unwrap();
            assert_eq!(lat.throughput_hz, g.scenario().frame_rate_hz, "{}", g.name());
        }
        assert_eq!(latency(&Generation::Gen1_2.stages()).unwrap().bottleneck, "camera");
        assert_ne!(latency(&Generation::Gen1_3.stages()).unwrap().bottleneck, "camera");
    }

    #[test]
    fn latency_cases() {
        let l = latency(&[Stage::new("only", 250.0)]).unwrap();
        assert_eq!(l.latency_s, 1.0 / 250.0);
        let l = latency(&[
            Stage::new("camera", 100.0),
            Stage::new("dmd", 15e3),
            Stage::new("head", 1e3),
        ])
        .unwrap();
        assert_eq!(l.bottleneck, "camera");
        assert!(latency(&[]).is_err());
    }

    #[test]
    fn memory_energy_is_negligible() {
        let s = Generation::Gen1_2.scenario();
        assert!(memory_power_w(&s, DRAM_PJ_PER_BIT).unwrap() < 0.005 * s.power_w);
    }

    #[test]
    fn report_rows() {
        let r = sweep_report(&generation_presets(), &[ConvMethod::Fft, ConvMethod::Brute]).unwrap();
        assert_eq!(r.rows.len(), 8);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.starts_with("generation,mode,M,N,m,n,i,k,f_hz,P_w,ops_per_watt,latency_s,bottleneck\n"));
        let back: SweepReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn rejects_bad_scenarios() {
        assert!(ops_per_watt_fft(&PerfScenario { power_w: 0.0, ..unit() }).is_err());
        assert!(ops_per_watt_brute(&PerfScenario { inputs: 0, ..unit() }).is_err());
    }
}
