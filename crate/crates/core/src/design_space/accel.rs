//! Hardware/mapping co-design space for a 2-level spatial accelerator.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Decoded, ParamSpec, ParamValue, ParameterSpace};
use crate::action::CompoundAction;
use crate::error::{Error, Result};

/// Convolution loop dimension. Declaration order is the canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dim {
    S,
    R,
    K,
    C,
    X,
    Y,
}

impl Dim {
    pub const ALL: [Dim; 6] = [Dim::S, Dim::R, Dim::K, Dim::C, Dim::X, Dim::Y];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One convolution (or matmul with `R = S = 1`) layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub k: u64,
    pub c: u64,
    pub x: u64,
    pub y: u64,
    pub r: u64,
    pub s: u64,
}

impl Layer {
    pub fn new(k: u64, c: u64, x: u64, y: u64, r: u64, s: u64) -> Self {
        Layer { k, c, x, y, r, s }
    }

    /// Dimensions indexed by [`Dim::index`].
    pub fn dims(&self) -> [u64; 6] {
        [self.s, self.r, self.k, self.c, self.x, self.y]
    }

    pub fn macs(&self) -> u64 {
        self.dims().iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl Workload {
    pub fn new(name: impl Into<String>, layers: Vec<Layer>) -> Result<Self> {
        let w = Workload {
            name: name.into(),
            layers,
        };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config(format!("workload `{}` has no layers", self.name)));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.dims().contains(&0) {
                return Err(Error::Config(format!("layer {i}: dimensions must be >= 1")));
            }
            if l.r > l.x || l.s > l.y {
                return Err(Error::Config(format!("layer {i}: filter larger than input (need R <= X, S <= Y)")));
            }
        }
        Ok(())
    }

    /// Parses the text format: one `K C X Y R S` layer per line, `#`
    /// starts a comment.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let nums = line
                .split_whitespace()
                .map(|t| t.parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("workload line {}: {e}", n + 1)))?;
            let [k, c, x, y, r, s] = nums[..] else {
                return Err(Error::Config(format!(
                    "workload line {}: expected 6 integers `K C X Y R S`, got {}",
                    n + 1,
                    nums.len()
                )));
            };
            layers.push(Layer::new(k, c, x, y, r, s));
        }
        Workload::new(name, layers)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Workload::parse(name, &text)
    }
}

/// Mapping of one layer at one memory level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelMapping {
    /// Outermost first.
    pub loop_order: [Dim; 6],
    pub parallel_dim: Dim,
    pub parallelism: u64,
    /// Tile sizes indexed by [`Dim::index`].
    pub tiles: [u64; 6],
}

/// `levels[0]` is the PE-local L1 level, `levels[1]` the shared L2 level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMapping {
    pub levels: [LevelMapping; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub n_pe: u64,
    pub l1_bytes: u64,
    pub l2_bytes: u64,
    pub layers: Vec<LayerMapping>,
}

/// A broken dependency constraint in a decoded configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DependencyViolation {
    PeCount(u64),
    BufferSize { level: usize, bytes: u64 },
    LayerCount { expected: usize, actual: usize },
    TileBounds { layer: usize, level: usize, dim: Dim },
    Parallelism { layer: usize, level: usize },
    LoopOrder { layer: usize, level: usize },
}

pub const MAX_PE: u64 = 1024;
pub const MAX_BUFFER_BYTES: u64 = 1 << 32;

impl DesignConfig {
    /// Every dependency constraint the decoder is meant to guarantee.
    pub fn check(&self, workload: &Workload) -> Vec<DependencyViolation> {
        use DependencyViolation as V;
        let mut out = Vec::new();
        if self.n_pe < 2 || self.n_pe > MAX_PE || !self.n_pe.is_multiple_of(2) {
            out.push(V::PeCount(self.n_pe));
        }
        for (level, bytes) in [(1, self.l1_bytes), (2, self.l2_bytes)] {
            if !(1..=MAX_BUFFER_BYTES).contains(&bytes) {
                out.push(V::BufferSize { level, bytes });
            }
        }
        if self.layers.len() != workload.layers.len() {
            out.push(V::LayerCount {
                expected: workload.layers.len(),
                actual: self.layers.len(),
            });
            return out;
        }
        for (li, (m, layer)) in self.layers.iter().zip(&workload.layers).enumerate() {
            let dims = layer.dims();
            let [l1, l2] = &m.levels;
            for d in Dim::ALL {
                let i = d.index();
                if l2.tiles[i] < 1 || l2.tiles[i] > dims[i] {
                    out.push(V::TileBounds { layer: li, level: 2, dim: d });
                }
                if l1.tiles[i] < 1 || l1.tiles[i] > l2.tiles[i] {
                    out.push(V::TileBounds { layer: li, level: 1, dim: d });
                }
            }
            let p1_cap = self.n_pe.min(l2.tiles[l1.parallel_dim.index()]);
            if l1.parallelism < 1 || l1.parallelism > p1_cap {
                out.push(V::Parallelism { layer: li, level: 1 });
            }
            if l2.parallelism < 1 || l2.parallelism > l2.tiles[l2.parallel_dim.index()] {
                out.push(V::Parallelism { layer: li, level: 2 });
            }
            for (lv, level) in m.levels.iter().enumerate() {
                let mut seen = [false; 6];
                for d in level.loop_order {
                    seen[d.index()] = true;
                }
                if !seen.iter().all(|&s| s) {
                    out.push(V::LoopOrder { layer: li, level: lv + 1 });
                }
            }
        }
        out
    }

    pub fn is_feasible(&self, workload: &Workload) -> bool {
        self.check(workload).is_empty()
    }
}

/// Inclusive integer range with a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeOption {
    pub low: i64,
    pub up: i64,
    pub step: i64,
}

impl RangeOption {
    pub const fn new(low: i64, up: i64, step: i64) -> Self {
        RangeOption { low, up, step }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelSpaceOptions {
    pub n_pe: RangeOption,
    pub l1_bytes: RangeOption,
    pub l2_bytes: RangeOption,
    /// Step for every tile range `1..=dim`; `dim − 1` must be a multiple.
    pub tile_step: i64,
    /// Step for parallelism ranges `1, 1 + step, …`.
    pub parallelism_step: i64,
    /// When false, loop orders are fixed to canonical order and not searched.
    pub search_loop_order: bool,
    /// When false, every parameter decodes from its static range.
    pub scaling: bool,
}

impl Default for AccelSpaceOptions {
    fn default() -> Self {
        AccelSpaceOptions {
            n_pe: RangeOption::new(2, MAX_PE as i64, 2),
            l1_bytes: RangeOption::new(1, MAX_BUFFER_BYTES as i64, 1),
            l2_bytes: RangeOption::new(1, MAX_BUFFER_BYTES as i64, 1),
            tile_step: 1,
            parallelism_step: 1,
            search_loop_order: true,
            scaling: true,
        }
    }
}

#[derive(Debug, Clone)]
struct LevelHandles {
    order: Option<usize>,
    pdim: usize,
    par: usize,
    tiles: [usize; 6],
}

/// The accelerator design space for one workload, with the bookkeeping to
/// turn decoded parameter values into a [`DesignConfig`].
#[derive(Debug, Clone)]
pub struct AccelSpace {
    space: ParameterSpace,
    workload: Workload,
    options: AccelSpaceOptions,
    n_pe: usize,
    l1: usize,
    l2: usize,
    layers: Vec<[LevelHandles; 2]>,
}

impl AccelSpace {
    pub fn new(workload: &Workload, options: &AccelSpaceOptions) -> Result<Self> {
        workload.validate()?;
        let o = options;
        if o.n_pe.low < 2 || o.n_pe.up > MAX_PE as i64 || o.n_pe.low % 2 != 0 || o.n_pe.step % 2 != 0 {
            return Err(Error::Config(format!(
                "space.n_pe must stay even within 2..={MAX_PE}, got {:?}",
                o.n_pe
            )));
        }
        for (key, r) in [("space.l1_bytes", o.l1_bytes), ("space.l2_bytes", o.l2_bytes)] {
            if r.low < 1 || r.up > MAX_BUFFER_BYTES as i64 {
                return Err(Error::Config(format!("{key} must stay within 1..=2^32, got {r:?}")));
            }
        }
        if o.tile_step < 1 || o.parallelism_step < 1 {
            return Err(Error::Config("space.tile_step and space.parallelism_step must be >= 1".into()));
        }
        let ps = o.parallelism_step;
        let par_up = |max: i64| 1 + (max - 1) / ps * ps;

        let mut params = vec![
            ParamSpec::ranged("n_pe", o.n_pe.low, o.n_pe.up, o.n_pe.step),
            ParamSpec::ranged("l1_bytes", o.l1_bytes.low, o.l1_bytes.up, o.l1_bytes.step),
            ParamSpec::ranged("l2_bytes", o.l2_bytes.low, o.l2_bytes.up, o.l2_bytes.step),
        ];
        let mut layers = Vec::with_capacity(workload.layers.len());
        for (li, layer) in workload.layers.iter().enumerate() {
            let dims = layer.dims();
            let max_dim = *dims.iter().max().expect("six dims") as i64;
            let name = |lv: usize, what: &str| format!("L{li}.lvl{lv}.{what}");
            let tile_names = |lv: usize| Dim::ALL.map(|d| name(lv, &format!("tile.{d}")));
            let outer = tile_names(2);
            let inner = tile_names(1);
            for d in Dim::ALL {
                if (dims[d.index()] - 1) % o.tile_step as u64 != 0 {
                    return Err(Error::Config(format!(
                        "layer {li}: dimension {d} = {} is not 1 + a multiple of tile_step {}",
                        dims[d.index()],
                        o.tile_step
                    )));
                }
            }

            let mut handles: Vec<LevelHandles> = Vec::with_capacity(2);
            for lv in [2, 1] {
                let names = if lv == 2 { &outer } else { &inner };
                let mut tiles = [0; 6];
                for d in Dim::ALL {
                    tiles[d.index()] = params.len();
                    let mut p = ParamSpec::ranged(&names[d.index()], 1, dims[d.index()] as i64, o.tile_step);
                    if lv == 1 {
                        p = p.scaled_by(&outer[d.index()]);
                    }
                    params.push(p);
                }
                let pdim = params.len();
                params.push(ParamSpec::categorical(name(lv, "pdim"), 6));
                let par = params.len();
                let p = if lv == 1 {
                    ParamSpec::ranged(name(lv, "par"), 1, par_up(o.n_pe.up), ps)
                        .scaled_by("n_pe")
                        .scaled_by_selected(name(lv, "pdim"), outer.to_vec())
                } else {
                    ParamSpec::ranged(name(lv, "par"), 1, par_up(max_dim), ps).scaled_by_selected(name(lv, "pdim"), outer.to_vec())
                };
                params.push(p);
                let order = o.search_loop_order.then(|| {
                    params.push(ParamSpec::permutation(name(lv, "order"), 6));
                    params.len() - 1
                });
                handles.push(LevelHandles { order, pdim, par, tiles });
            }
            let l2h = handles.remove(0);
            let l1h = handles.remove(0);
            layers.push([l1h, l2h]);
        }

        let mut space = ParameterSpace::new(params)?;
        if !o.scaling {
            space = space.without_scaling();
        }
        Ok(AccelSpace {
            space,
            workload: workload.clone(),
            options: o.clone(),
            n_pe: 0,
            l1: 1,
            l2: 2,
            layers,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn workload(&self) -> &Workload {
        &self.workload
    }

    pub fn options(&self) -> &AccelSpaceOptions {
        &self.options
    }

    /// Assembles a configuration from decoded values (declaration order).
    pub fn build(&self, values: &[ParamValue]) -> DesignConfig {
        let int = |i: usize| values[i].as_int().expect("integer parameter") as u64;
        let level = |h: &LevelHandles| LevelMapping {
            loop_order: match h.order {
                Some(i) => {
                    let perm = values[i].as_order().expect("order parameter");
                    std::array::from_fn(|j| Dim::ALL[perm[j]])
                }
                None => Dim::ALL,
            },
            parallel_dim: Dim::ALL[values[h.pdim].as_category().expect("categorical parameter")],
            parallelism: int(h.par),
            tiles: h.tiles.map(int),
        };
        DesignConfig {
            n_pe: int(self.n_pe),
            l1_bytes: int(self.l1),
            l2_bytes: int(self.l2),
            layers: self
                .layers
                .iter()
                .map(|[a, b]| LayerMapping {
                    levels: [level(a), level(b)],
                })
                .collect(),
        }
    }

    /// Decodes an action through the scaling graph into a configuration.
    pub fn decode_config(&self, action: &CompoundAction) -> Result<(DesignConfig, Decoded)> {
        let decoded = self.space.decode(action)?;
        Ok((self.build(&decoded.values), decoded))
    }
}
