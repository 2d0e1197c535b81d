//! Analytical accelerator cost model: per-layer latency from tiling, loop
//! order and parallelism, buffer footprints, and an area model.
//!
//! The model is a deliberately small stand-in for a full dataflow simulator.
//! Each tensor tile is fetched once per iteration of every loop at or
//! outside its innermost relevant loop; loops nested inside that one reuse
//! the resident tile.

use serde::{Deserialize, Serialize};

use crate::design_space::{AccelSpace, AccelSpaceOptions, DesignConfig, Dim, Layer, LevelMapping, ParamValue, ParameterSpace, Workload};
use crate::error::{Error, Result};
use crate::objective::{EvalOutcome, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConstants {
    pub bytes_per_element: u64,
    pub bw_l2_bytes_per_cycle: u64,
    pub bw_dram_bytes_per_cycle: u64,
    pub area_per_pe_mm2: f64,
    pub area_per_byte_mm2: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        CostConstants {
            bytes_per_element: 2,
            bw_l2_bytes_per_cycle: 64,
            bw_dram_bytes_per_cycle: 16,
            area_per_pe_mm2: 4e-4,
            area_per_byte_mm2: 1e-6,
        }
    }
}

impl CostConstants {
    pub fn validate(&self) -> Result<()> {
        if self.bytes_per_element == 0 || self.bw_l2_bytes_per_cycle == 0 || self.bw_dram_bytes_per_cycle == 0 {
            return Err(Error::Config("costs: byte widths and bandwidths must be > 0".into()));
        }
        if !(self.area_per_pe_mm2 > 0.0 && self.area_per_byte_mm2 > 0.0) {
            return Err(Error::Config("costs: area rates must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub name: String,
    pub area_budget_mm2: f64,
}

impl Platform {
    pub fn edge() -> Self {
        Platform {
            name: "edge".into(),
            area_budget_mm2: 0.2,
        }
    }

    pub fn cloud() -> Self {
        Platform {
            name: "cloud".into(),
            area_budget_mm2: 7.0,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "edge" => Ok(Self::edge()),
            "cloud" => Ok(Self::cloud()),
            other => Err(Error::Config(format!("platform: unknown platform {other:?}, expected edge or cloud"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tensor {
    Weights,
    Inputs,
    Outputs,
}

impl Tensor {
    pub const ALL: [Tensor; 3] = [Tensor::Weights, Tensor::Inputs, Tensor::Outputs];

    pub fn relevant(self, d: Dim) -> bool {
        use Dim::*;
        match self {
            Tensor::Weights => matches!(d, K | C | R | S),
            Tensor::Inputs => matches!(d, C | X | Y),
            Tensor::Outputs => matches!(d, K | X | Y),
        }
    }
}

/// Elements of one tile of `tensor`. Output spatial extent is taken to be
/// the input tile's.
pub fn tensor_volume(tensor: Tensor, tiles: &[u64; 6]) -> u64 {
    Dim::ALL
        .iter()
        .filter(|&&d| tensor.relevant(d))
        .map(|d| tiles[d.index()])
        .product()
}

/// Bytes of `tensor` moved into a level, given the extent above it, the
/// tile it holds and the loop order (outermost first).
pub fn traffic(tensor: Tensor, outer: &[u64; 6], tiles: &[u64; 6], order: &[Dim; 6], consts: &CostConstants) -> u128 {
    let innermost = order.iter().rposition(|&d| tensor.relevant(d)).expect("every tensor has a relevant dim");
    let trips: u128 = order[..=innermost]
        .iter()
        .map(|d| {
            let i = d.index();
            debug_assert!(tiles[i] >= 1 && tiles[i] <= outer[i], "tile exceeds its outer extent");
            outer[i].div_ceil(tiles[i]) as u128
        })
        .product();
    consts.bytes_per_element as u128 * tensor_volume(tensor, tiles) as u128 * trips
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMetrics {
    pub latency_cycles: u64,
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub l1_footprint_bytes: u64,
    pub l2_footprint_bytes: u64,
    pub traffic_dram_bytes: u128,
    pub traffic_l2_bytes: u128,
}

fn footprint(level: &LevelMapping, consts: &CostConstants) -> u64 {
    Tensor::ALL
        .iter()
        .map(|&t| tensor_volume(t, &level.tiles))
        .sum::<u64>()
        .saturating_mul(consts.bytes_per_element)
}

fn level_traffic(outer: &[u64; 6], level: &LevelMapping, consts: &CostConstants) -> u128 {
    Tensor::ALL
        .iter()
        .map(|&t| traffic(t, outer, &level.tiles, &level.loop_order, consts))
        .sum()
}

/// Cost of one layer. `mapping.levels[0]` is L1, `[1]` is L2.
pub fn layer_latency(mapping: &crate::design_space::LayerMapping, layer: &Layer, n_pe: u64, consts: &CostConstants) -> LayerMetrics {
    let [l1, l2] = &mapping.levels;
    let macs = layer.macs();
    let speedup = l1.parallelism.saturating_mul(l2.parallelism).min(n_pe).max(1);
    let compute = macs.div_ceil(speedup);
    let dram = level_traffic(&layer.dims(), l2, consts);
    let onchip = level_traffic(&l2.tiles, l1, consts);
    let mem = onchip.div_ceil(consts.bw_l2_bytes_per_cycle as u128) + dram.div_ceil(consts.bw_dram_bytes_per_cycle as u128);
    let mem = u64::try_from(mem).unwrap_or(u64::MAX);
    LayerMetrics {
        latency_cycles: compute.max(mem),
        compute_cycles: compute,
        memory_cycles: mem,
        l1_footprint_bytes: footprint(l1, consts),
        l2_footprint_bytes: footprint(l2, consts),
        traffic_dram_bytes: dram,
        traffic_l2_bytes: onchip,
    }
}

pub fn area(n_pe: u64, l1_bytes: u64, l2_bytes: u64, consts: &CostConstants) -> f64 {
    n_pe as f64 * consts.area_per_pe_mm2 + (n_pe as f64 * l1_bytes as f64 + l2_bytes as f64) * consts.area_per_byte_mm2
}

/// Metric vector: mean layer latency in cycles, then area in µm².
pub fn simulate(config: &DesignConfig, workload: &Workload, platform: &Platform, consts: &CostConstants) -> EvalOutcome {
    let broken = config.check(workload);
    if !broken.is_empty() {
        return EvalOutcome::Anomalous {
            reason: format!("infeasible configuration: {broken:?}"),
        };
    }
    let mut latency_sum = 0.0;
    let (mut l1_worst, mut l2_worst) = (0u64, 0u64);
    for (m, layer) in config.layers.iter().zip(&workload.layers) {
        let lm = layer_latency(m, layer, config.n_pe, consts);
        latency_sum += lm.latency_cycles as f64;
        l1_worst = l1_worst.max(lm.l1_footprint_bytes);
        l2_worst = l2_worst.max(lm.l2_footprint_bytes);
    }
    let mean_latency = latency_sum / workload.layers.len() as f64;
    let area_mm2 = area(config.n_pe, config.l1_bytes, config.l2_bytes, consts);

    let residual = |value: f64, cap: f64| (value - cap) / cap;
    let mut violations = Vec::new();
    for (name, value, cap) in [
        ("area", area_mm2, platform.area_budget_mm2),
        ("l1_capacity", l1_worst as f64, config.l1_bytes as f64),
        ("l2_capacity", l2_worst as f64, config.l2_bytes as f64),
    ] {
        if value > cap {
            violations.push(Violation {
                constraint: name.into(),
                residual: residual(value, cap),
            });
        }
    }
    EvalOutcome::scored(vec![mean_latency, area_mm2 * 1e6], violations)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Latency,
    /// Latency in cycles plus area in µm².
    Las,
}

impl Objective {
    pub fn weights(self) -> Vec<f64> {
        match self {
            Objective::Latency => vec![-1.0, 0.0],
            Objective::Las => vec![-1.0, -1.0],
        }
    }

    /// Lower-is-better objective value for a metric vector.
    pub fn value(self, metrics: &[f64]) -> f64 {
        -self.weights().iter().zip(metrics).map(|(w, m)| w * m).sum::<f64>()
    }
}

/// The accelerator search problem: a design space over one workload plus
/// the cost model that scores it.
#[derive(Debug, Clone)]
pub struct AcceleratorProblem {
    accel: AccelSpace,
    pub platform: Platform,
    pub consts: CostConstants,
    pub objective: Objective,
}

impl AcceleratorProblem {
    pub fn new(workload: &Workload, options: &AccelSpaceOptions, platform: Platform, consts: CostConstants, objective: Objective) -> Result<Self> {
        consts.validate()?;
        if !(platform.area_budget_mm2 > 0.0) {
            return Err(Error::Config("platform.area_budget_mm2 must be > 0".into()));
        }
        Ok(AcceleratorProblem {
            accel: AccelSpace::new(workload, options)?,
            platform,
            consts,
            objective,
        })
    }

    pub fn accel(&self) -> &AccelSpace {
        &self.accel
    }
}

impl crate::trainer::DesignProblem for AcceleratorProblem {
    type Design = DesignConfig;

    fn space(&self) -> &ParameterSpace {
        self.accel.space()
    }

    fn build(&self, values: &[ParamValue]) -> Result<DesignConfig> {
        Ok(self.accel.build(values))
    }

    fn evaluate(&self, design: &DesignConfig) -> EvalOutcome {
        simulate(design, self.accel.workload(), &self.platform, &self.consts)
    }

    fn objective(&self, metrics: &[f64]) -> f64 {
        self.objective.value(metrics)
    }
}
