//! Search-space grammars and architecture candidates.
//!
//! A [`SearchSpaceDef`] is a declarative description of a Transformer search
//! space: named dimensions with allowed values (globally scoped, per-layer
//! scoped, or embedding-scoped) plus module templates that map chosen values
//! to concrete weight-matrix shapes. New spaces are config files, not code.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::rng::{seeded, uniform_index};

/// Functional block a weight matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockTag {
    Attention,
    Ffn,
    Other,
}

/// One weight matrix: `rows x cols` with a block tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub block: BlockTag,
}

/// A shape placed in the architecture's deterministic enumeration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacedShape {
    /// Layer the module belongs to; `None` for global modules (embeddings).
    pub layer: Option<usize>,
    /// Position in the enumeration order; keys the weight RNG stream.
    pub module_index: usize,
    pub shape: ModuleShape,
}

/// A dimension choice: numeric (feeds shapes) or categorical tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimValue {
    Int(u64),
    Tag(String),
}

impl fmt::Display for DimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimValue::Int(v) => write!(f, "{v}"),
            DimValue::Tag(s) => write!(f, "{s}"),
        }
    }
}

/// Number of layers: fixed, or itself a searchable choice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerCount {
    Fixed(usize),
    Choices(Vec<usize>),
}

impl LayerCount {
    pub fn options(&self) -> Vec<usize> {
        match self {
            LayerCount::Fixed(n) => vec![*n],
            LayerCount::Choices(c) => c.clone(),
        }
    }

    pub fn max(&self) -> usize {
        self.options().into_iter().max().unwrap_or(0)
    }

    pub fn allows(&self, n: usize) -> bool {
        match self {
            LayerCount::Fixed(f) => *f == n,
            LayerCount::Choices(c) => c.contains(&n),
        }
    }
}

/// One searchable hyperparameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionDef {
    pub name: String,
    /// Chosen independently per layer when true; once per architecture otherwise.
    #[serde(default)]
    pub layer_scoped: bool,
    /// Global choice stored in the architecture's embedding record.
    #[serde(default)]
    pub embedding: bool,
    /// Allowed values (shared across layers unless `per_layer_values` is set).
    #[serde(default)]
    pub values: Vec<DimValue>,
    /// Layer-specific allowed-value lists; requires a fixed layer count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer_values: Option<Vec<Vec<DimValue>>>,
}

impl DimensionDef {
    /// Allowed values at `layer` (ignored for globally scoped dimensions).
    pub fn values_at(&self, layer: usize) -> &[DimValue] {
        match &self.per_layer_values {
            Some(lists) => &lists[layer],
            None => &self.values,
        }
    }
}

/// A dimension reference or integer literal inside a module template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimExpr {
    Lit(u64),
    Ref(String),
}

/// Template for one weight matrix per layer (or once per architecture).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleTemplate {
    pub name: String,
    pub block: BlockTag,
    pub rows: DimExpr,
    pub cols: DimExpr,
    /// Dimension whose value repeats this template (e.g. stacked FFNs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<String>,
    /// Expanded once per layer when true (default); once per arch otherwise.
    #[serde(default = "default_true")]
    pub per_layer: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    /// Per-layer choices with possibly layer-specific value lists.
    HeterogeneousPerLayer,
    /// All layers share value lists; choices still made per layer.
    Homogeneous,
    /// Decoder grid: searchable depth over shared per-layer lists.
    DecoderGrid,
}

pub const SCHEMA_VERSION: u32 = 1;

/// Declarative search-space definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpaceDef {
    pub schema_version: u32,
    pub name: String,
    pub kind: SpaceKind,
    pub num_layers: LayerCount,
    /// Fixed named quantities referencable from module templates.
    #[serde(default)]
    pub constants: BTreeMap<String, u64>,
    pub dimensions: Vec<DimensionDef>,
    pub modules: Vec<ModuleTemplate>,
    /// Model width used by the attention-score term of the TFLOPs estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn_score_dim: Option<DimExpr>,
    /// Count one bias term per attention/FFN matrix row in `count_params`.
    #[serde(default)]
    pub count_bias: bool,
}

/// A concrete candidate drawn from (and validated against) a search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub id: String,
    /// Name of the owning search space.
    pub space: String,
    pub num_layers: usize,
    /// Globally scoped choices.
    #[serde(default)]
    pub globals: BTreeMap<String, DimValue>,
    /// Layer-scoped choices, one record per layer.
    pub layers: Vec<BTreeMap<String, DimValue>>,
    /// Embedding-scoped choices, when the space declares any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_config: Option<BTreeMap<String, DimValue>>,
}

impl ArchitectureSpec {
    /// Recompute the content-derived id from the current choices.
    pub fn recompute_id(&mut self) {
        self.id = content_id(self);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpaceError {
    InvalidSpace { reason: String },
    UnsupportedSchema { version: u32 },
    UnknownDimension { dim: String },
    NonNumericDimension { dim: String },
    MissingDimension { dim: String, layer: Option<usize> },
    InvalidValue { dim: String, layer: Option<usize>, value: String },
    UnexpectedDimension { dim: String, layer: Option<usize> },
    LayerCountMismatch { declared: usize, actual: usize },
    DisallowedLayerCount { num_layers: usize },
    SpaceMismatch { arch_space: String, space: String },
    InvalidSeqLen,
    Overflow { what: &'static str },
    TooLarge { size: String, cap: usize },
}

impl fmt::Display for SpaceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceError::InvalidSpace { reason } => write!(f, "invalid search space: {reason}"),
            SpaceError::UnsupportedSchema { version } => {
                write!(f, "unsupported schema_version {version} (supported: {SCHEMA_VERSION})")
            }
            SpaceError::UnknownDimension { dim } => {
                write!(f, "reference to unknown dimension or constant `{dim}`")
            }
            SpaceError::NonNumericDimension { dim } => {
                write!(f, "dimension `{dim}` holds a categorical value where a number is required")
            }
            SpaceError::MissingDimension { dim, layer } => match layer {
                Some(l) => write!(f, "layer {l} is missing dimension `{dim}`"),
                None => write!(f, "architecture is missing dimension `{dim}`"),
            },
            SpaceError::InvalidValue { dim, layer, value } => match layer {
                Some(l) => write!(f, "value {value} for dimension `{dim}` at layer {l} is not allowed"),
                None => write!(f, "value {value} for dimension `{dim}` is not allowed"),
            },
            SpaceError::UnexpectedDimension { dim, layer } => match layer {
                Some(l) => write!(f, "layer {l} carries undeclared dimension `{dim}`"),
                None => write!(f, "architecture carries undeclared dimension `{dim}`"),
            },
            SpaceError::LayerCountMismatch { declared, actual } => {
                write!(f, "num_layers is {declared} but {actual} layer records are present")
            }
            SpaceError::DisallowedLayerCount { num_layers } => {
                write!(f, "layer count {num_layers} is not allowed by the space")
            }
            SpaceError::SpaceMismatch { arch_space, space } => {
                write!(f, "architecture belongs to space `{arch_space}`, not `{space}`")
            }
            SpaceError::InvalidSeqLen => write!(f, "sequence length must be at least 1"),
            SpaceError::Overflow { what } => write!(f, "integer overflow while computing {what}"),
            SpaceError::TooLarge { size, cap } => {
                write!(f, "space holds {size} architectures, above the enumeration cap {cap}")
            }
        }
    }
}

impl core::error::Error for SpaceError {}

impl SearchSpaceDef {
    /// Structural validation; every other operation assumes this has passed.
    pub fn validate(&self) -> Result<(), SpaceError> {
        let fail = |reason: String| Err(SpaceError::InvalidSpace { reason });
        if self.schema_version != SCHEMA_VERSION {
            return Err(SpaceError::UnsupportedSchema {
                version: self.schema_version,
            });
        }
        if self.name.is_empty() {
            return fail("space name is empty".to_string());
        }
        match &self.num_layers {
            LayerCount::Fixed(_) => {}
            LayerCount::Choices(c) => {
                if c.is_empty() {
                    return fail("num_layers choices are empty".to_string());
                }
                if c.iter().any(|&n| n == 0) {
                    return fail("num_layers choices must be at least 1".to_string());
                }
                if has_duplicates(c) {
                    return fail("num_layers choices contain duplicates".to_string());
                }
            }
        }

        let mut names = alloc::collections::BTreeSet::new();
        for dim in &self.dimensions {
            if dim.name.is_empty() {
                return fail("dimension with empty name".to_string());
            }
            if !names.insert(dim.name.clone()) || self.constants.contains_key(&dim.name) {
                return fail(format!("duplicate dimension or constant name `{}`", dim.name));
            }
            if dim.embedding && dim.layer_scoped {
                return fail(format!("dimension `{}` cannot be both embedding and layer scoped", dim.name));
            }
            match &dim.per_layer_values {
                Some(lists) => {
                    if !dim.layer_scoped {
                        return fail(format!("dimension `{}` has per-layer values but is not layer scoped", dim.name));
                    }
                    let fixed = match self.num_layers {
                        LayerCount::Fixed(n) => n,
                        LayerCount::Choices(_) => {
                            return fail(format!(
                                "dimension `{}` has per-layer values but the layer count is searchable",
                                dim.name
                            ))
                        }
                    };
                    if lists.len() != fixed {
                        return fail(format!(
                            "dimension `{}` has {} per-layer value lists for {} layers",
                            dim.name,
                            lists.len(),
                            fixed
                        ));
                    }
                    for (l, list) in lists.iter().enumerate() {
                        check_value_list(&dim.name, Some(l), list)?;
                    }
                    if matches!(self.kind, SpaceKind::Homogeneous | SpaceKind::DecoderGrid) {
                        return fail(format!(
                            "kind {:?} requires shared value lists, but `{}` is layer specific",
                            self.kind, dim.name
                        ));
                    }
                }
                None => check_value_list(&dim.name, None, &dim.values)?,
            }
        }

        for tpl in &self.modules {
            if tpl.name.is_empty() {
                return fail("module template with empty name".to_string());
            }
            if !tpl.per_layer && tpl.block != BlockTag::Other {
                return fail(format!(
                    "global module `{}` must be tagged `other`; attention/FFN modules are per layer",
                    tpl.name
                ));
            }
            self.check_size_expr(&tpl.rows, tpl.per_layer)?;
            self.check_size_expr(&tpl.cols, tpl.per_layer)?;
            if let Some(rep) = &tpl.repeat {
                let dim = self
                    .dimensions
                    .iter()
                    .find(|d| &d.name == rep)
                    .ok_or_else(|| SpaceError::UnknownDimension { dim: rep.clone() })?;
                if !tpl.per_layer && dim.layer_scoped {
                    return fail(format!(
                        "global module `{}` repeats over layer-scoped dimension `{rep}`",
                        tpl.name
                    ));
                }
                if !all_int(dim) {
                    return Err(SpaceError::NonNumericDimension { dim: rep.clone() });
                }
            }
        }

        if let Some(expr) = &self.attn_score_dim {
            self.check_size_expr(expr, false)?;
        }
        Ok(())
    }

    /// Checks that a rows/cols expression resolves to a positive integer for
    /// every architecture the space can produce.
    fn check_size_expr(&self, expr: &DimExpr, layer_context: bool) -> Result<(), SpaceError> {
        match expr {
            DimExpr::Lit(v) => {
                if *v == 0 {
                    return Err(SpaceError::InvalidSpace {
                        reason: "module dimension literal must be at least 1".to_string(),
                    });
                }
            }
            DimExpr::Ref(name) => {
                if let Some(c) = self.constants.get(name) {
                    if *c == 0 {
                        return Err(SpaceError::InvalidSpace {
                            reason: format!("constant `{name}` must be at least 1"),
                        });
                    }
                    return Ok(());
                }
                let dim = self
                    .dimensions
                    .iter()
                    .find(|d| &d.name == name)
                    .ok_or_else(|| SpaceError::UnknownDimension { dim: name.clone() })?;
                if dim.layer_scoped && !layer_context {
                    return Err(SpaceError::InvalidSpace {
                        reason: format!("layer-scoped dimension `{name}` referenced outside a layer module"),
                    });
                }
                if !all_int(dim) {
                    return Err(SpaceError::NonNumericDimension { dim: name.clone() });
                }
                let zero = |vs: &[DimValue]| vs.iter().any(|v| matches!(v, DimValue::Int(0)));
                let has_zero = match &dim.per_layer_values {
                    Some(lists) => lists.iter().any(|l| zero(l)),
                    None => zero(&dim.values),
                };
                if has_zero {
                    return Err(SpaceError::InvalidSpace {
                        reason: format!("dimension `{name}` feeds a shape but allows value 0"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Validates an architecture against this space, naming the offending
    /// dimension on failure.
    pub fn validate_arch(&self, arch: &ArchitectureSpec) -> Result<(), SpaceError> {
        if arch.space != self.name {
            return Err(SpaceError::SpaceMismatch {
                arch_space: arch.space.clone(),
                space: self.name.clone(),
            });
        }
        if !self.num_layers.allows(arch.num_layers) {
            return Err(SpaceError::DisallowedLayerCount {
                num_layers: arch.num_layers,
            });
        }
        if arch.layers.len() != arch.num_layers {
            return Err(SpaceError::LayerCountMismatch {
                declared: arch.num_layers,
                actual: arch.layers.len(),
            });
        }

        let empty = BTreeMap::new();
        let embedding = arch.embedding_config.as_ref().unwrap_or(&empty);
        for dim in &self.dimensions {
            if dim.layer_scoped {
                for (l, layer) in arch.layers.iter().enumerate() {
                    let value = layer.get(&dim.name).ok_or(SpaceError::MissingDimension {
                        dim: dim.name.clone(),
                        layer: Some(l),
                    })?;
                    if !dim.values_at(l).contains(value) {
                        return Err(SpaceError::InvalidValue {
                            dim: dim.name.clone(),
                            layer: Some(l),
                            value: value.to_string(),
                        });
                    }
                }
            } else {
                let map = if dim.embedding { embedding } else { &arch.globals };
                let value = map.get(&dim.name).ok_or(SpaceError::MissingDimension {
                    dim: dim.name.clone(),
                    layer: None,
                })?;
                if !dim.values.contains(value) {
                    return Err(SpaceError::InvalidValue {
                        dim: dim.name.clone(),
                        layer: None,
                        value: value.to_string(),
                    });
                }
            }
        }

        // Reject undeclared keys so stray configuration cannot pass silently.
        let declared = |name: &String, layer_scoped: bool, embedding: bool| {
            self.dimensions
                .iter()
                .any(|d| &d.name == name && d.layer_scoped == layer_scoped && d.embedding == embedding)
        };
        for key in arch.globals.keys() {
            if !declared(key, false, false) {
                return Err(SpaceError::UnexpectedDimension {
                    dim: key.clone(),
                    layer: None,
                });
            }
        }
        for (l, layer) in arch.layers.iter().enumerate() {
            for key in layer.keys() {
                if !declared(key, true, false) {
                    return Err(SpaceError::UnexpectedDimension {
                        dim: key.clone(),
                        layer: Some(l),
                    });
                }
            }
        }
        for key in embedding.keys() {
            if !declared(key, false, true) {
                return Err(SpaceError::UnexpectedDimension {
                    dim: key.clone(),
                    layer: None,
                });
            }
        }
        Ok(())
    }

    /// Resolves a size expression for `arch`, in the context of `layer`.
    fn resolve(&self, arch: &ArchitectureSpec, expr: &DimExpr, layer: Option<usize>) -> Result<u64, SpaceError> {
        let name = match expr {
            DimExpr::Lit(v) => return Ok(*v),
            DimExpr::Ref(name) => name,
        };
        let lookup = layer
            .and_then(|l| arch.layers.get(l))
            .and_then(|m| m.get(name))
            .or_else(|| arch.globals.get(name))
            .or_else(|| arch.embedding_config.as_ref().and_then(|m| m.get(name)));
        if let Some(value) = lookup {
            return match value {
                DimValue::Int(v) => Ok(*v),
                DimValue::Tag(_) => Err(SpaceError::NonNumericDimension { dim: name.clone() }),
            };
        }
        self.constants
            .get(name)
            .copied()
            .ok_or_else(|| SpaceError::UnknownDimension { dim: name.clone() })
    }

    /// Shapes with layer and module-index placement, in the deterministic
    /// enumeration order: layer-major over per-layer templates (template
    /// declaration order, repeats expanded), then global templates.
    pub fn enumerate_placed(&self, arch: &ArchitectureSpec) -> Result<Vec<PlacedShape>, SpaceError> {
        self.validate_arch(arch)?;
        let mut placed = Vec::new();
        let mut index = 0usize;
        for layer in 0..arch.num_layers {
            for tpl in self.modules.iter().filter(|t| t.per_layer) {
                let repeat = match &tpl.repeat {
                    Some(dim) => self.resolve(arch, &DimExpr::Ref(dim.clone()), Some(layer))?,
                    None => 1,
                };
                for k in 0..repeat {
                    let rows = self.resolve(arch, &tpl.rows, Some(layer))? as usize;
                    let cols = self.resolve(arch, &tpl.cols, Some(layer))? as usize;
                    let name = if tpl.repeat.is_some() {
                        format!("{}.{}", tpl.name, k)
                    } else {
                        tpl.name.clone()
                    };
                    placed.push(PlacedShape {
                        layer: Some(layer),
                        module_index: index,
                        shape: ModuleShape {
                            name,
                            rows,
                            cols,
                            block: tpl.block,
                        },
                    });
                    index += 1;
                }
            }
        }
        for tpl in self.modules.iter().filter(|t| !t.per_layer) {
            let repeat = match &tpl.repeat {
                Some(dim) => self.resolve(arch, &DimExpr::Ref(dim.clone()), None)?,
                None => 1,
            };
            for k in 0..repeat {
                let rows = self.resolve(arch, &tpl.rows, None)? as usize;
                let cols = self.resolve(arch, &tpl.cols, None)? as usize;
                let name = if tpl.repeat.is_some() {
                    format!("{}.{}", tpl.name, k)
                } else {
                    tpl.name.clone()
                };
                placed.push(PlacedShape {
                    layer: None,
                    module_index: index,
                    shape: ModuleShape {
                        name,
                        rows,
                        cols,
                        block: tpl.block,
                    },
                });
                index += 1;
            }
        }
        Ok(placed)
    }

    /// One [`ModuleShape`] per weight matrix, in enumeration order.
    pub fn enumerate_shapes(&self, arch: &ArchitectureSpec) -> Result<Vec<ModuleShape>, SpaceError> {
        Ok(self.enumerate_placed(arch)?.into_iter().map(|p| p.shape).collect())
    }

    /// Total parameter count. `include_other` adds embedding/norm matrices.
    pub fn count_params(&self, arch: &ArchitectureSpec, include_other: bool) -> Result<u64, SpaceError> {
        let mut total: u64 = 0;
        for placed in self.enumerate_placed(arch)? {
            let shape = &placed.shape;
            let scored = shape.block != BlockTag::Other;
            if !scored && !include_other {
                continue;
            }
            let m = (shape.rows as u64)
                .checked_mul(shape.cols as u64)
                .ok_or(SpaceError::Overflow { what: "parameter count" })?;
            total = total
                .checked_add(m)
                .ok_or(SpaceError::Overflow { what: "parameter count" })?;
            if self.count_bias && scored {
                total = total
                    .checked_add(shape.rows as u64)
                    .ok_or(SpaceError::Overflow { what: "parameter count" })?;
            }
        }
        Ok(total)
    }

    /// Dense-matmul TFLOPs estimate for one forward pass of `seq_len` tokens:
    /// `2 * transformer_params * seq_len / 1e12` plus the attention-score term
    /// `2 * L * seq_len^2 * d_model / 1e12` when the space declares a model
    /// width. An ordering heuristic, monotone in every dimension; not a
    /// hardware measurement.
    pub fn estimate_tflops(&self, arch: &ArchitectureSpec, seq_len: usize) -> Result<f64, SpaceError> {
        if seq_len == 0 {
            return Err(SpaceError::InvalidSeqLen);
        }
        let params = self.count_params(arch, false)? as f64;
        let seq = seq_len as f64;
        let mut tflops = 2.0 * params * seq / 1e12;
        if let Some(expr) = &self.attn_score_dim {
            let d_model = self.resolve(arch, expr, None)? as f64;
            tflops += 2.0 * arch.num_layers as f64 * seq * seq * d_model / 1e12;
        }
        Ok(tflops)
    }

    /// Uniform independent sample; deterministic for a fixed seed.
    pub fn sample_architecture(&self, seed: u64) -> ArchitectureSpec {
        self.sample_with(&mut seeded(seed))
    }

    /// Uniform independent sample drawn from an existing generator.
    pub fn sample_with<R: RngCore>(&self, rng: &mut R) -> ArchitectureSpec {
        let options = self.num_layers.options();
        let num_layers = options[uniform_index(rng, options.len())];

        let mut globals = BTreeMap::new();
        let mut embedding = BTreeMap::new();
        for dim in self.dimensions.iter().filter(|d| !d.layer_scoped) {
            let value = dim.values[uniform_index(rng, dim.values.len())].clone();
            if dim.embedding {
                embedding.insert(dim.name.clone(), value);
            } else {
                globals.insert(dim.name.clone(), value);
            }
        }

        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let mut layer = BTreeMap::new();
            for dim in self.dimensions.iter().filter(|d| d.layer_scoped) {
                let values = dim.values_at(l);
                layer.insert(dim.name.clone(), values[uniform_index(rng, values.len())].clone());
            }
            layers.push(layer);
        }

        let mut arch = ArchitectureSpec {
            id: String::new(),
            space: self.name.clone(),
            num_layers,
            globals,
            layers,
            embedding_config: if embedding.is_empty() { None } else { Some(embedding) },
        };
        arch.recompute_id();
        arch
    }

    /// Exact number of architectures, without enumeration.
    pub fn space_size(&self) -> BigUint {
        let mut global_product = BigUint::from(1u32);
        for dim in self.dimensions.iter().filter(|d| !d.layer_scoped) {
            global_product *= BigUint::from(dim.values.len());
        }
        let mut total = BigUint::from(0u32);
        for num_layers in self.num_layers.options() {
            let mut term = global_product.clone();
            for dim in self.dimensions.iter().filter(|d| d.layer_scoped) {
                match &dim.per_layer_values {
                    Some(lists) => {
                        for list in lists.iter().take(num_layers) {
                            term *= BigUint::from(list.len());
                        }
                    }
                    None => term *= BigUint::from(dim.values.len()).pow(num_layers as u32),
                }
            }
            total += term;
        }
        total
    }

    /// Enumerates every architecture, refusing when the space exceeds `cap`.
    pub fn enumerate_archs(&self, cap: usize) -> Result<Vec<ArchitectureSpec>, SpaceError> {
        let size = self.space_size();
        if size > BigUint::from(cap) {
            return Err(SpaceError::TooLarge {
                size: size.to_string(),
                cap,
            });
        }

        let mut archs = Vec::new();
        for num_layers in self.num_layers.options() {
            // One odometer slot per (dimension, layer) choice.
            struct Slot<'a> {
                dim: &'a DimensionDef,
                layer: Option<usize>,
                values: &'a [DimValue],
            }
            let mut slots = Vec::new();
            for dim in &self.dimensions {
                if dim.layer_scoped {
                    for l in 0..num_layers {
                        slots.push(Slot {
                            dim,
                            layer: Some(l),
                            values: dim.values_at(l),
                        });
                    }
                } else {
                    slots.push(Slot {
                        dim,
                        layer: None,
                        values: &dim.values,
                    });
                }
            }

            let mut counters = vec![0usize; slots.len()];
            loop {
                let mut globals = BTreeMap::new();
                let mut embedding = BTreeMap::new();
                let mut layers = vec![BTreeMap::new(); num_layers];
                for (slot, &c) in slots.iter().zip(&counters) {
                    let value = slot.values[c].clone();
                    match slot.layer {
                        Some(l) => {
                            layers[l].insert(slot.dim.name.clone(), value);
                        }
                        None if slot.dim.embedding => {
                            embedding.insert(slot.dim.name.clone(), value);
                        }
                        None => {
                            globals.insert(slot.dim.name.clone(), value);
                        }
                    }
                }
                let mut arch = ArchitectureSpec {
                    id: String::new(),
                    space: self.name.clone(),
                    num_layers,
                    globals,
                    layers,
                    embedding_config: if embedding.is_empty() { None } else { Some(embedding) },
                };
                arch.recompute_id();
                archs.push(arch);

                // Advance the odometer; most-significant slot last.
                let mut pos = 0;
                loop {
                    if pos == counters.len() {
                        break;
                    }
                    counters[pos] += 1;
                    if counters[pos] < slots[pos].values.len() {
                        break;
                    }
                    counters[pos] = 0;
                    pos += 1;
                }
                if pos == counters.len() {
                    break;
                }
                if slots.is_empty() {
                    break;
                }
            }
        }
        Ok(archs)
    }

    /// Allowed values for `dim` at `layer`; used by search mutation.
    pub fn allowed_values<'a>(&self, dim: &'a DimensionDef, layer: Option<usize>) -> &'a [DimValue] {
        match layer {
            Some(l) if dim.layer_scoped => dim.values_at(l),
            _ => &dim.values,
        }
    }
}

fn check_value_list(name: &str, layer: Option<usize>, values: &[DimValue]) -> Result<(), SpaceError> {
    if values.is_empty() {
        return Err(SpaceError::InvalidSpace {
            reason: match layer {
                Some(l) => format!("dimension `{name}` has an empty value list at layer {l}"),
                None => format!("dimension `{name}` has an empty value list"),
            },
        });
    }
    if has_duplicates(values) {
        return Err(SpaceError::InvalidSpace {
            reason: match layer {
                Some(l) => format!("dimension `{name}` has duplicate values at layer {l}"),
                None => format!("dimension `{name}` has duplicate values"),
            },
        });
    }
    Ok(())
}

fn has_duplicates<T: Ord>(values: &[T]) -> bool {
    let mut seen = alloc::collections::BTreeSet::new();
    values.iter().any(|v| !seen.insert(v))
}

fn all_int(dim: &DimensionDef) -> bool {
    let ints = |vs: &[DimValue]| vs.iter().all(|v| matches!(v, DimValue::Int(_)));
    match &dim.per_layer_values {
        Some(lists) => lists.iter().all(|l| ints(l)),
        None => ints(&dim.values),
    }
}

/// Content-derived architecture id: `a` plus 16 hex digits of an FNV-1a hash
/// over the canonical encoding of all choices. Identical choices give
/// identical ids regardless of how the architecture was produced.
pub fn content_id(arch: &ArchitectureSpec) -> String {
    let mut h = Fnv1a::new();
    h.write(arch.space.as_bytes());
    h.write_u64(arch.num_layers as u64);
    h.write(&[0x1e]);
    let write_map = |h: &mut Fnv1a, map: &BTreeMap<String, DimValue>| {
        for (k, v) in map {
            h.write(k.as_bytes());
            h.write(&[0x1f]);
            match v {
                DimValue::Int(i) => {
                    h.write(&[0x00]);
                    h.write_u64(*i);
                }
                DimValue::Tag(s) => {
                    h.write(&[0x01]);
                    h.write(s.as_bytes());
                }
            }
            h.write(&[0x1f]);
        }
        h.write(&[0x1e]);
    };
    write_map(&mut h, &arch.globals);
    for layer in &arch.layers {
        write_map(&mut h, layer);
    }
    match &arch.embedding_config {
        Some(map) => write_map(&mut h, map),
        None => h.write(&[0x1d]),
    }
    format!("a{:016x}", h.finish())
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}
