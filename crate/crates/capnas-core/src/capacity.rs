//! The data-free capacity proxy.
//!
//! Each weight matrix is scored by the mean of its squared singular values,
//! computed in closed form as `||W||_F^2 / min(rows, cols)`. Scores are
//! aggregated per layer into attention and FFN block sums and combined with a
//! balance parameter alpha. An explicit-SVD path exists purely as a numerical
//! cross-check, and a lookup table removes redundant weight generation during
//! evolutionary search over homogeneous spaces.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::archspace::{
    ArchitectureSpec, BlockTag, DimExpr, ModuleShape, PlacedShape, SearchSpaceDef, SpaceError,
    SpaceKind,
};
use crate::rng::{keyed, NormalSampler};

/// Weight initialization distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitDistribution {
    /// i.i.d. Gaussian with a fixed standard deviation (default 0.02).
    GaussianConstStd,
    /// i.i.d. Gaussian with std `1/sqrt(cols)`.
    GaussianFanIn,
}

/// Deterministic weight initialization policy.
///
/// The stream for a module is derived from `(seed, module_index)`, so modules
/// are independent and reproducible regardless of evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightInitPolicy {
    pub distribution: InitDistribution,
    pub std: f64,
    pub seed: u64,
}

pub const DEFAULT_INIT_STD: f64 = 0.02;

impl WeightInitPolicy {
    pub fn gaussian(std: f64, seed: u64) -> Result<Self, CapacityError> {
        if !(std > 0.0) {
            return Err(CapacityError::NonPositiveStd { std });
        }
        Ok(Self {
            distribution: InitDistribution::GaussianConstStd,
            std,
            seed,
        })
    }

    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            distribution: InitDistribution::GaussianConstStd,
            std: DEFAULT_INIT_STD,
            seed,
        }
    }

    pub fn fan_in(seed: u64) -> Self {
        Self {
            distribution: InitDistribution::GaussianFanIn,
            std: 1.0,
            seed,
        }
    }

    /// Standard deviation applied to a matrix with `cols` input features.
    pub fn std_for(&self, cols: usize) -> f64 {
        match self.distribution {
            InitDistribution::GaussianConstStd => self.std,
            InitDistribution::GaussianFanIn => 1.0 / libm::sqrt(cols as f64),
        }
    }

    /// Human-readable descriptor embedded in reports and manifests.
    pub fn descriptor(&self) -> String {
        match self.distribution {
            InitDistribution::GaussianConstStd => {
                format!("gaussian_const_std(std={},seed={})", self.std, self.seed)
            }
            InitDistribution::GaussianFanIn => format!("gaussian_fan_in(seed={})", self.seed),
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Per-layer and total attention/FFN capacity sums for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockScores {
    pub per_layer_attn: Vec<f64>,
    pub per_layer_ffn: Vec<f64>,
    pub total_attn: f64,
    pub total_ffn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CapacityError {
    EmptyMatrix,
    NonPositiveStd { std: f64 },
    SvdNonConvergence { rows: usize, cols: usize },
    ZeroNormMatrix { name: String, module_index: usize },
    UnsupportedSpace { reason: String },
    MissingTableEntry { module_index: usize, rows: usize, cols: usize },
    TableSpaceMismatch { table_space: String, space: String },
    Space(SpaceError),
}

impl fmt::Display for CapacityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapacityError::EmptyMatrix => write!(f, "capacity of an empty matrix is undefined"),
            CapacityError::NonPositiveStd { std } => {
                write!(f, "init std must be positive, got {std}")
            }
            CapacityError::SvdNonConvergence { rows, cols } => {
                write!(f, "SVD did not converge for a {rows}x{cols} matrix")
            }
            CapacityError::ZeroNormMatrix { name, module_index } => {
                write!(f, "module `{name}` (index {module_index}) has zero Frobenius norm")
            }
            CapacityError::UnsupportedSpace { reason } => {
                write!(f, "lookup table unsupported for this space: {reason}")
            }
            CapacityError::MissingTableEntry { module_index, rows, cols } => {
                write!(f, "lookup table is missing entry ({module_index}, {rows}x{cols})")
            }
            CapacityError::TableSpaceMismatch { table_space, space } => {
                write!(f, "lookup table was built for space `{table_space}`, not `{space}`")
            }
            CapacityError::Space(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for CapacityError {}

impl From<SpaceError> for CapacityError {
    fn from(e: SpaceError) -> Self {
        CapacityError::Space(e)
    }
}

/// Counts every generated weight matrix; lets tests assert that table-backed
/// scoring performs no generation after the table is built.
pub mod instrument {
    use super::*;

    static GENERATIONS: AtomicU64 = AtomicU64::new(0);

    pub(super) fn record_generation() {
        GENERATIONS.fetch_add(1, Ordering::Relaxed);
    }

    /// Total weight matrices generated by this process so far.
    pub fn weight_generations() -> u64 {
        GENERATIONS.load(Ordering::Relaxed)
    }
}

/// Mean squared singular value via the Frobenius identity:
/// `(sum of squared entries) / min(rows, cols)`. Production scoring path.
pub fn module_capacity(matrix: &Matrix) -> Result<f64, CapacityError> {
    if matrix.rows == 0 || matrix.cols == 0 || matrix.data.is_empty() {
        return Err(CapacityError::EmptyMatrix);
    }
    let sumsq: f64 = matrix.data.iter().map(|v| v * v).sum();
    Ok(sumsq / matrix.rows.min(matrix.cols) as f64)
}

/// Mean squared singular value through an explicit spectral decomposition
/// (cyclic Jacobi on the Gram matrix). Cross-check oracle for
/// [`module_capacity`]; not used on any production path.
pub fn module_capacity_svd(matrix: &Matrix) -> Result<f64, CapacityError> {
    if matrix.rows == 0 || matrix.cols == 0 || matrix.data.is_empty() {
        return Err(CapacityError::EmptyMatrix);
    }
    let k = matrix.rows.min(matrix.cols);
    let mut gram = vec![0.0f64; k * k];
    if matrix.rows <= matrix.cols {
        for i in 0..k {
            for j in i..k {
                let mut dot = 0.0;
                for c in 0..matrix.cols {
                    dot += matrix.get(i, c) * matrix.get(j, c);
                }
                gram[i * k + j] = dot;
                gram[j * k + i] = dot;
            }
        }
    } else {
        for i in 0..k {
            for j in i..k {
                let mut dot = 0.0;
                for r in 0..matrix.rows {
                    dot += matrix.get(r, i) * matrix.get(r, j);
                }
                gram[i * k + j] = dot;
                gram[j * k + i] = dot;
            }
        }
    }
    let eigenvalues = jacobi_eigenvalues(&mut gram, k).ok_or(CapacityError::SvdNonConvergence {
        rows: matrix.rows,
        cols: matrix.cols,
    })?;
    // Eigenvalues of the Gram matrix are the squared singular values.
    Ok(eigenvalues.iter().map(|&l| l.max(0.0)).sum::<f64>() / k as f64)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `None` if the off-diagonal mass does not vanish within 60 sweeps.
fn jacobi_eigenvalues(g: &mut [f64], k: usize) -> Option<Vec<f64>> {
    if k == 1 {
        return Some(vec![g[0]]);
    }
    let frob: f64 = libm::sqrt(g.iter().map(|v| v * v).sum::<f64>());
    let tol = 1e-14 * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..k {
            for q in (p + 1)..k {
                off += g[p * k + q] * g[p * k + q];
            }
        }
        if libm::sqrt(2.0 * off) <= tol {
            return Some((0..k).map(|i| g[i * k + i]).collect());
        }
        for p in 0..k - 1 {
            for q in (p + 1)..k {
                let apq = g[p * k + q];
                if apq == 0.0 {
                    continue;
                }
                let app = g[p * k + p];
                let aqq = g[q * k + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    1.0 / (2.0 * theta)
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for i in 0..k {
                    if i == p || i == q {
                        continue;
                    }
                    let gip = g[i * k + p];
                    let giq = g[i * k + q];
                    g[i * k + p] = c * gip - s * giq;
                    g[p * k + i] = g[i * k + p];
                    g[i * k + q] = s * gip + c * giq;
                    g[q * k + i] = g[i * k + q];
                }
                g[p * k + p] = app - t * apq;
                g[q * k + q] = aqq + t * apq;
                g[p * k + q] = 0.0;
                g[q * k + p] = 0.0;
            }
        }
    }
    None
}

/// Generates the initialization weights for one module.
pub fn generate_weight(
    shape: &ModuleShape,
    policy: &WeightInitPolicy,
    module_index: usize,
) -> Matrix {
    let std = policy.std_for(shape.cols);
    let mut rng = keyed(policy.seed, module_index as u64);
    let mut sampler = NormalSampler::new();
    let mut data = Vec::with_capacity(shape.rows * shape.cols);
    for _ in 0..shape.rows * shape.cols {
        data.push(std * sampler.next(&mut rng));
    }
    instrument::record_generation();
    Matrix::new(shape.rows, shape.cols, data)
}

/// Source of module weights. The production source draws seeded Gaussians;
/// tests substitute deterministic constructions.
pub trait WeightSource {
    fn module_weight(&self, shape: &ModuleShape, module_index: usize) -> Matrix;
    fn descriptor(&self) -> String;
}

/// Seeded Gaussian weights per [`WeightInitPolicy`].
#[derive(Debug, Clone, Copy)]
pub struct GaussianSource(pub WeightInitPolicy);

impl WeightSource for GaussianSource {
    fn module_weight(&self, shape: &ModuleShape, module_index: usize) -> Matrix {
        generate_weight(shape, &self.0, module_index)
    }

    fn descriptor(&self) -> String {
        self.0.descriptor()
    }
}

fn blocks_over<F>(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    mut score: F,
) -> Result<BlockScores, CapacityError>
where
    F: FnMut(&PlacedShape) -> Result<f64, CapacityError>,
{
    let placed = space.enumerate_placed(arch)?;
    let mut per_layer_attn = vec![0.0; arch.num_layers];
    let mut per_layer_ffn = vec![0.0; arch.num_layers];
    for p in &placed {
        let bucket = match p.shape.block {
            BlockTag::Attention => &mut per_layer_attn,
            BlockTag::Ffn => &mut per_layer_ffn,
            BlockTag::Other => continue,
        };
        // Layered placement is guaranteed for scored blocks by space validation.
        let layer = p.layer.expect("scored module without a layer");
        bucket[layer] += score(p)?;
    }
    let total_attn = per_layer_attn.iter().sum();
    let total_ffn = per_layer_ffn.iter().sum();
    Ok(BlockScores {
        per_layer_attn,
        per_layer_ffn,
        total_attn,
        total_ffn,
    })
}

/// Scores every attention/FFN module of `arch` and aggregates block sums.
pub fn score_blocks(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    policy: &WeightInitPolicy,
) -> Result<BlockScores, CapacityError> {
    score_blocks_with_source(space, arch, &GaussianSource(*policy))
}

/// [`score_blocks`] with a caller-provided weight source.
pub fn score_blocks_with_source(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    source: &dyn WeightSource,
) -> Result<BlockScores, CapacityError> {
    blocks_over(space, arch, |p| {
        module_capacity(&source.module_weight(&p.shape, p.module_index))
    })
}

/// Analytic expected-score mode: replaces each sampled matrix with the
/// closed-form expectation `rows*cols*std^2/min(rows, cols)`. An extension
/// for fast screening, never the default.
pub fn score_blocks_expected(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    policy: &WeightInitPolicy,
) -> Result<BlockScores, CapacityError> {
    blocks_over(space, arch, |p| Ok(expected_capacity(&p.shape, policy)))
}

/// Closed-form `E[module_capacity]` under a Gaussian policy.
pub fn expected_capacity(shape: &ModuleShape, policy: &WeightInitPolicy) -> f64 {
    let std = policy.std_for(shape.cols);
    shape.rows as f64 * shape.cols as f64 * std * std / shape.rows.min(shape.cols) as f64
}

/// Combined proxy score `alpha * S_attn + (1 - alpha) * S_ffn`.
pub fn combine(blocks: &BlockScores, alpha: f64) -> f64 {
    alpha * blocks.total_attn + (1.0 - alpha) * blocks.total_ffn
}

/// Log-complexity baseline: sum of `ln ||W||_F` over attention/FFN matrices.
pub fn log_complexity(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    policy: &WeightInitPolicy,
) -> Result<f64, CapacityError> {
    log_complexity_with_source(space, arch, &GaussianSource(*policy))
}

/// [`log_complexity`] with a caller-provided weight source.
pub fn log_complexity_with_source(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    source: &dyn WeightSource,
) -> Result<f64, CapacityError> {
    let mut total = 0.0;
    for p in space.enumerate_placed(arch)? {
        if p.shape.block == BlockTag::Other {
            continue;
        }
        let w = source.module_weight(&p.shape, p.module_index);
        let sumsq: f64 = w.data.iter().map(|v| v * v).sum();
        if sumsq == 0.0 {
            return Err(CapacityError::ZeroNormMatrix {
                name: p.shape.name.clone(),
                module_index: p.module_index,
            });
        }
        total += 0.5 * libm::log(sumsq);
    }
    Ok(total)
}

/// Precomputed capacity scores keyed by `(module_index, rows, cols)`.
///
/// Valid because weight streams depend only on `(seed, module_index)`: any
/// two architectures of a homogeneous space that agree on a module's slot and
/// shape receive bitwise-identical weights, hence identical scores.
#[derive(Debug, Clone)]
pub struct LookupTable {
    space: String,
    policy: WeightInitPolicy,
    entries: BTreeMap<(usize, usize, usize), f64>,
}

impl LookupTable {
    pub fn space(&self) -> &str {
        &self.space
    }

    pub fn policy(&self) -> &WeightInitPolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score(&self, module_index: usize, rows: usize, cols: usize) -> Option<f64> {
        self.entries.get(&(module_index, rows, cols)).copied()
    }
}

/// Every `(module_index, rows, cols)` slot/shape combination the space can
/// produce for scored blocks, without generating any weights.
pub fn table_keys(space: &SearchSpaceDef) -> Result<Vec<(usize, usize, usize)>, CapacityError> {
    if !matches!(space.kind, SpaceKind::Homogeneous | SpaceKind::DecoderGrid) {
        return Err(CapacityError::UnsupportedSpace {
            reason: format!("kind {:?} has layer-specific shape sets", space.kind),
        });
    }

    // Per-layer templates must occupy fixed slots across the whole space, so
    // a repeated template may only repeat a constant number of times.
    let repeat_count = |tpl_repeat: &Option<String>| -> Result<u64, CapacityError> {
        match tpl_repeat {
            None => Ok(1),
            Some(name) => {
                let dim = space
                    .dimensions
                    .iter()
                    .find(|d| &d.name == name)
                    .ok_or_else(|| CapacityError::Space(SpaceError::UnknownDimension { dim: name.clone() }))?;
                let ints = int_values(&dim.values);
                if ints.len() != 1 {
                    return Err(CapacityError::UnsupportedSpace {
                        reason: format!("repeat dimension `{name}` is searchable, so module slots shift"),
                    });
                }
                Ok(ints[0])
            }
        }
    };

    let max_layers = space.num_layers.max();
    let mut slots_per_layer = 0u64;
    for tpl in space.modules.iter().filter(|t| t.per_layer) {
        slots_per_layer += repeat_count(&tpl.repeat)?;
    }

    let mut keys = Vec::new();
    for layer in 0..max_layers {
        let mut slot = 0u64;
        for tpl in space.modules.iter().filter(|t| t.per_layer) {
            let reps = repeat_count(&tpl.repeat)?;
            for _k in 0..reps {
                let module_index = (layer as u64 * slots_per_layer + slot) as usize;
                if tpl.block != BlockTag::Other {
                    let rows = expr_choices(space, &tpl.rows)?;
                    let cols = expr_choices(space, &tpl.cols)?;
                    if same_ref(&tpl.rows, &tpl.cols) {
                        for &v in &rows {
                            keys.push((module_index, v as usize, v as usize));
                        }
                    } else {
                        for &r in &rows {
                            for &c in &cols {
                                keys.push((module_index, r as usize, c as usize));
                            }
                        }
                    }
                }
                slot += 1;
            }
        }
    }
    Ok(keys)
}

fn same_ref(a: &DimExpr, b: &DimExpr) -> bool {
    matches!((a, b), (DimExpr::Ref(x), DimExpr::Ref(y)) if x == y)
}

fn int_values(values: &[crate::archspace::DimValue]) -> Vec<u64> {
    values
        .iter()
        .filter_map(|v| match v {
            crate::archspace::DimValue::Int(i) => Some(*i),
            crate::archspace::DimValue::Tag(_) => None,
        })
        .collect()
}

fn expr_choices(space: &SearchSpaceDef, expr: &DimExpr) -> Result<Vec<u64>, CapacityError> {
    match expr {
        DimExpr::Lit(v) => Ok(vec![*v]),
        DimExpr::Ref(name) => {
            if let Some(c) = space.constants.get(name) {
                return Ok(vec![*c]);
            }
            let dim = space
                .dimensions
                .iter()
                .find(|d| &d.name == name)
                .ok_or_else(|| CapacityError::Space(SpaceError::UnknownDimension { dim: name.clone() }))?;
            Ok(int_values(&dim.values))
        }
    }
}

/// Precomputes the capacity score of every distinct module configuration.
pub fn build_lookup_table(
    space: &SearchSpaceDef,
    policy: &WeightInitPolicy,
) -> Result<LookupTable, CapacityError> {
    let mut entries = BTreeMap::new();
    for (module_index, rows, cols) in table_keys(space)? {
        let shape = ModuleShape {
            name: format!("slot{module_index}"),
            rows,
            cols,
            block: BlockTag::Attention, // tag does not affect generation
        };
        let score = module_capacity(&generate_weight(&shape, policy, module_index))?;
        entries.insert((module_index, rows, cols), score);
    }
    Ok(LookupTable {
        space: space.name.clone(),
        policy: *policy,
        entries,
    })
}

/// Table-backed [`score_blocks`]; bitwise-equal to direct scoring and
/// performs zero weight generations.
pub fn score_blocks_with_table(
    space: &SearchSpaceDef,
    arch: &ArchitectureSpec,
    table: &LookupTable,
) -> Result<BlockScores, CapacityError> {
    if table.space != space.name {
        return Err(CapacityError::TableSpaceMismatch {
            table_space: table.space.clone(),
            space: space.name.clone(),
        });
    }
    blocks_over(space, arch, |p| {
        table
            .score(p.module_index, p.shape.rows, p.shape.cols)
            .ok_or(CapacityError::MissingTableEntry {
                module_index: p.module_index,
                rows: p.shape.rows,
                cols: p.shape.cols,
            })
    })
}
