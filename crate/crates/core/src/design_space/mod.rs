//! Declarative design spaces and the scaling-graph decoder.
//!
//! A [`ParameterSpace`] is a list of [`ParamSpec`]s. Ranged parameters may
//! name *sources*: at decode time their upper bound becomes the smallest
//! decoded source value, so dependent parameters can never exceed the
//! parameters they depend on. Decoding walks the parameters in topological
//! order of the induced [`ScalingGraph`].

mod accel;
mod decode;
mod graph;

use std::collections::HashMap;

pub use accel::{
    AccelSpace, AccelSpaceOptions, DependencyViolation, DesignConfig, Dim, Layer, LayerMapping,
    LevelMapping, RangeOption, Workload,
};
pub use decode::{decode_order, decode_range, decode_scaled};
pub use graph::{topological_order, ScalingGraph};

use crate::action::{CompoundAction, HeadKind, HeadValue};
use crate::error::{Error, Result};
use decode::{argsort_desc, bucket, check_range, choice_count};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamKind {
    Categorical { k: usize },
    Ranged { low: i64, up: i64, step: i64 },
    /// A permutation of `len` items, sampled as `len` sort keys.
    Permutation { len: usize },
}

/// Where a scaled parameter takes a bound from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Param(String),
    /// The option picked by a categorical `selector`: `options[selector]`.
    Select { selector: String, options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub scaled_by: Vec<Source>,
}

impl ParamSpec {
    pub fn ranged(name: impl Into<String>, low: i64, up: i64, step: i64) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Ranged { low, up, step },
            scaled_by: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, k: usize) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Categorical { k },
            scaled_by: Vec::new(),
        }
    }

    pub fn permutation(name: impl Into<String>, len: usize) -> Self {
        ParamSpec {
            name: name.into(),
            kind: ParamKind::Permutation { len },
            scaled_by: Vec::new(),
        }
    }

    pub fn scaled_by(mut self, source: impl Into<String>) -> Self {
        self.scaled_by.push(Source::Param(source.into()));
        self
    }

    pub fn scaled_by_selected(mut self, selector: impl Into<String>, options: Vec<String>) -> Self {
        self.scaled_by.push(Source::Select {
            selector: selector.into(),
            options,
        });
        self
    }

    fn heads(&self) -> Vec<HeadKind> {
        match self.kind {
            ParamKind::Categorical { k } => vec![HeadKind::Categorical(k)],
            ParamKind::Ranged { .. } => vec![HeadKind::Beta],
            ParamKind::Permutation { len } => vec![HeadKind::Beta; len],
        }
    }
}

/// A decoded parameter value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParamValue {
    Int(i64),
    Category(usize),
    Order(Vec<usize>),
}

impl ParamValue {
    pub fn as_int(&self) -> Option<i64> {
        match *self {
            ParamValue::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_category(&self) -> Option<usize> {
        match *self {
            ParamValue::Category(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_order(&self) -> Option<&[usize]> {
        match self {
            ParamValue::Order(v) => Some(v),
            _ => None,
        }
    }
}

/// A scaled bound fell below the parameter's lower bound; the value was
/// clamped to `low`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeWarning {
    pub param: String,
    pub bound: i64,
    pub low: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// One value per parameter, in declaration order.
    pub values: Vec<ParamValue>,
    pub warnings: Vec<DecodeWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ResolvedSource {
    Param(usize),
    Select { selector: usize, first: usize },
}

/// Exact configuration count, or a marker that it passed the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cardinality {
    Exact(u128),
    ExceedsLimit,
}

#[derive(Debug, Clone)]
pub struct ParameterSpace {
    params: Vec<ParamSpec>,
    // Select sources store their options as a contiguous run in `option_ix`.
    sources: Vec<Vec<ResolvedSource>>,
    option_ix: Vec<usize>,
    graph: ScalingGraph,
    order: Vec<usize>,
    head_offsets: Vec<usize>,
    heads: Vec<HeadKind>,
}

impl ParameterSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let mut index = HashMap::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            if index.insert(p.name.as_str(), i).is_some() {
                return Err(Error::Config(format!("duplicate parameter `{}`", p.name)));
            }
            match p.kind {
                ParamKind::Ranged { low, up, step } => {
                    check_range(low, up, step).map_err(|e| Error::Config(format!("`{}`: {e}", p.name)))?
                }
                ParamKind::Categorical { k } if k < 2 => {
                    return Err(Error::Config(format!("`{}` needs at least 2 categories", p.name)))
                }
                ParamKind::Permutation { len: 0 } => {
                    return Err(Error::Config(format!("`{}` permutes nothing", p.name)))
                }
                _ => {}
            }
        }
        let lookup = |owner: &str, name: &str| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("`{owner}` is scaled by unknown parameter `{name}`")))
        };
        let ranged_source = |owner: &str, i: usize| -> Result<usize> {
            match params[i].kind {
                ParamKind::Ranged { .. } => Ok(i),
                _ => Err(Error::Config(format!(
                    "`{owner}` is scaled by `{}`, which is not an integer range",
                    params[i].name
                ))),
            }
        };

        let mut sources = Vec::with_capacity(params.len());
        let mut option_ix = Vec::new();
        let mut edges = Vec::new();
        for (t, p) in params.iter().enumerate() {
            if !p.scaled_by.is_empty() && !matches!(p.kind, ParamKind::Ranged { .. }) {
                return Err(Error::Config(format!("only ranged parameters can be scaled, not `{}`", p.name)));
            }
            let mut resolved = Vec::with_capacity(p.scaled_by.len());
            for src in &p.scaled_by {
                match src {
                    Source::Param(name) => {
                        let s = ranged_source(&p.name, lookup(&p.name, name)?)?;
                        edges.push((s, t));
                        resolved.push(ResolvedSource::Param(s));
                    }
                    Source::Select { selector, options } => {
                        let sel = lookup(&p.name, selector)?;
                        match params[sel].kind {
                            ParamKind::Categorical { k } if k == options.len() => {}
                            _ => {
                                return Err(Error::Config(format!(
                                    "`{}`: selector `{selector}` must be categorical over {} options",
                                    p.name,
                                    options.len()
                                )))
                            }
                        }
                        edges.push((sel, t));
                        let first = option_ix.len();
                        for o in options {
                            let s = ranged_source(&p.name, lookup(&p.name, o)?)?;
                            edges.push((s, t));
                            option_ix.push(s);
                        }
                        resolved.push(ResolvedSource::Select { selector: sel, first });
                    }
                }
            }
            sources.push(resolved);
        }

        let graph = ScalingGraph::from_indices(params.iter().map(|p| p.name.clone()).collect(), edges);
        let order = topological_order(&graph)?;
        let mut head_offsets = Vec::with_capacity(params.len() + 1);
        let mut heads = Vec::new();
        for p in &params {
            head_offsets.push(heads.len());
            heads.extend(p.heads());
        }
        head_offsets.push(heads.len());
        Ok(ParameterSpace {
            params,
            sources,
            option_ix,
            graph,
            order,
            head_offsets,
            heads,
        })
    }

    /// The same parameters with every scaling edge removed, so each decodes
    /// from its static range.
    pub fn without_scaling(&self) -> Self {
        let params = self
            .params
            .iter()
            .map(|p| ParamSpec {
                scaled_by: Vec::new(),
                ..p.clone()
            })
            .collect();
        ParameterSpace::new(params).expect("removing edges keeps a valid space")
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn graph(&self) -> &ScalingGraph {
        &self.graph
    }

    /// Topological decode order (parameter indices).
    pub fn decode_order(&self) -> &[usize] {
        &self.order
    }

    /// Policy heads, parameter by parameter.
    pub fn heads(&self) -> &[HeadKind] {
        &self.heads
    }

    pub fn head_range(&self, param: usize) -> std::ops::Range<usize> {
        self.head_offsets[param]..self.head_offsets[param + 1]
    }

    fn bound(&self, param: usize, values: &[Option<ParamValue>]) -> Option<i64> {
        let int = |i: usize| values[i].as_ref().and_then(ParamValue::as_int).expect("source decoded first");
        self.sources[param]
            .iter()
            .map(|src| match *src {
                ResolvedSource::Param(s) => int(s),
                ResolvedSource::Select { selector, first } => {
                    let c = values[selector]
                        .as_ref()
                        .and_then(ParamValue::as_category)
                        .expect("selector decoded first");
                    int(self.option_ix[first + c])
                }
            })
            .min()
    }

    /// Decodes one action into parameter values, walking the scaling graph
    /// in topological order.
    pub fn decode(&self, action: &CompoundAction) -> Result<Decoded> {
        if action.values.len() != self.heads.len() {
            return Err(Error::Shape {
                context: "decode",
                expected: self.heads.len(),
                actual: action.values.len(),
            });
        }
        let mut values: Vec<Option<ParamValue>> = vec![None; self.params.len()];
        let mut warnings = Vec::new();
        for &i in &self.order {
            let raw = &action.values[self.head_range(i)];
            let p = &self.params[i];
            let value = match p.kind {
                ParamKind::Categorical { k } => match raw[0] {
                    HeadValue::Category(c) if c < k => ParamValue::Category(c),
                    HeadValue::Category(c) => {
                        return Err(Error::Config(format!("`{}`: category {c} out of {k}", p.name)))
                    }
                    HeadValue::Unit(u) => ParamValue::Category(bucket(unit(u, "decode")?, k as u64) as usize),
                },
                ParamKind::Ranged { low, up, step } => {
                    let b = unit_of(raw[0])?;
                    let bound = match self.bound(i, &values) {
                        None => up,
                        Some(m) if m < low => {
                            warnings.push(DecodeWarning {
                                param: p.name.clone(),
                                bound: m,
                                low,
                            });
                            low
                        }
                        Some(m) => m,
                    };
                    ParamValue::Int(low + bucket(b, choice_count(low, bound, step)) as i64 * step)
                }
                ParamKind::Permutation { .. } => {
                    let keys = raw.iter().map(|&v| unit_of(v)).collect::<Result<Vec<_>>>()?;
                    ParamValue::Order(argsort_desc(&keys))
                }
            };
            values[i] = Some(value);
        }
        Ok(Decoded {
            values: values.into_iter().map(|v| v.expect("every parameter decoded")).collect(),
            warnings,
        })
    }

    fn choices(&self, i: usize, values: &[Option<ParamValue>]) -> u128 {
        match self.params[i].kind {
            ParamKind::Categorical { k } => k as u128,
            ParamKind::Ranged { low, up, step } => {
                let bound = self.bound(i, values).unwrap_or(up).max(low);
                u128::from(choice_count(low, bound, step))
            }
            ParamKind::Permutation { len } => (1..=len as u128).try_fold(1u128, |a, b| a.checked_mul(b)).unwrap_or(u128::MAX),
        }
    }

    /// Exact number of distinct decodable configurations, or
    /// [`Cardinality::ExceedsLimit`] once the count passes `limit`.
    ///
    /// Parameters nothing depends on contribute a multiplicative factor;
    /// only sources are branched on, so the work is bounded by `limit`.
    pub fn cardinality(&self, limit: u128) -> Cardinality {
        let branch: Vec<bool> = (0..self.params.len()).map(|i| self.graph.has_dependents(i)).collect();
        let mut values = vec![None; self.params.len()];
        match self.count_from(0, &branch, &mut values, limit) {
            Some(n) => Cardinality::Exact(n),
            None => Cardinality::ExceedsLimit,
        }
    }

    fn count_from(&self, pos: usize, branch: &[bool], values: &mut [Option<ParamValue>], limit: u128) -> Option<u128> {
        let Some(&i) = self.order.get(pos) else {
            return Some(1);
        };
        if !branch[i] {
            let here = self.choices(i, values);
            let rest = self.count_from(pos + 1, branch, values, limit)?;
            return here.checked_mul(rest).filter(|&n| n <= limit);
        }
        let mut total: u128 = 0;
        for v in self.values_of(i, values) {
            values[i] = Some(v);
            let sub = self.count_from(pos + 1, branch, values, limit);
            values[i] = None;
            total = total.checked_add(sub?).filter(|&n| n <= limit)?;
        }
        Some(total)
    }

    fn values_of(&self, i: usize, values: &[Option<ParamValue>]) -> Vec<ParamValue> {
        match self.params[i].kind {
            ParamKind::Categorical { k } => (0..k).map(ParamValue::Category).collect(),
            ParamKind::Ranged { low, up, step } => {
                let bound = self.bound(i, values).unwrap_or(up).max(low);
                (0..choice_count(low, bound, step))
                    .map(|j| ParamValue::Int(low + j as i64 * step))
                    .collect()
            }
            ParamKind::Permutation { len } => permutations(len).into_iter().map(ParamValue::Order).collect(),
        }
    }

    /// Visits every distinct decodable configuration once. Values are in
    /// declaration order.
    pub fn for_each_config(&self, mut f: impl FnMut(&[ParamValue])) {
        let mut values = vec![None; self.params.len()];
        let mut flat = Vec::with_capacity(self.params.len());
        self.enumerate_from(0, &mut values, &mut flat, &mut f);
    }

    fn enumerate_from(
        &self,
        pos: usize,
        values: &mut Vec<Option<ParamValue>>,
        flat: &mut Vec<ParamValue>,
        f: &mut dyn FnMut(&[ParamValue]),
    ) {
        let Some(&i) = self.order.get(pos) else {
            flat.clear();
            flat.extend(values.iter().map(|v| v.clone().expect("assigned")));
            f(flat);
            return;
        };
        for v in self.values_of(i, values) {
            values[i] = Some(v);
            self.enumerate_from(pos + 1, values, flat, f);
        }
        values[i] = None;
    }
}

fn unit(u: f64, context: &'static str) -> Result<f64> {
    if u.is_finite() {
        Ok(u)
    } else {
        Err(Error::Domain { context, value: u })
    }
}

fn unit_of(v: HeadValue) -> Result<f64> {
    match v {
        HeadValue::Unit(u) => unit(u, "decode"),
        HeadValue::Category(_) => Err(Error::Config("categorical sample given to a Beta head".into())),
    }
}

/// All permutations of `0..n` in lexicographic order.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut all = vec![p.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return all;
        };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
        p.swap(i - 1, j);
        p[i..].reverse();
        all.push(p.clone());
    }
}
