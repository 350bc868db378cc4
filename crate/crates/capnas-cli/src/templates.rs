//! Canonical search-space definitions shipped with the tool.
//!
//! `flexibert` is a heterogeneous encoder space (10,621,440 architectures),
//! `gpt2` a decoder grid with searchable depth, `lonas-bert` and
//! `lonas-llama` homogeneous supernet-mask spaces with LoRA adapters, and
//! `toy` a small space for demos and fast oracle tests.

use std::collections::BTreeMap;

use capnas_core::archspace::{
    BlockTag, DimExpr, DimValue, DimensionDef, LayerCount, ModuleTemplate, SearchSpaceDef,
    SpaceKind, SCHEMA_VERSION,
};

pub const TEMPLATE_NAMES: [&str; 5] = ["flexibert", "gpt2", "lonas-bert", "lonas-llama", "toy"];

/// Returns the named template, or `None` for unknown names.
pub fn template(name: &str) -> Option<SearchSpaceDef> {
    let space = match name {
        "flexibert" => flexibert(),
        "gpt2" => gpt2(),
        "lonas-bert" => lonas_bert(),
        "lonas-llama" => lonas_llama(),
        "toy" => toy(),
        _ => return None,
    };
    debug_assert!(space.validate().is_ok());
    Some(space)
}

fn ints(values: &[u64]) -> Vec<DimValue> {
    values.iter().copied().map(DimValue::Int).collect()
}

fn tags(values: &[&str]) -> Vec<DimValue> {
    values.iter().map(|s| DimValue::Tag((*s).to_string())).collect()
}

fn dim(name: &str, layer_scoped: bool, values: Vec<DimValue>) -> DimensionDef {
    DimensionDef {
        name: name.to_string(),
        layer_scoped,
        embedding: false,
        values,
        per_layer_values: None,
    }
}

fn module(name: &str, block: BlockTag, rows: &str, cols: &str) -> ModuleTemplate {
    ModuleTemplate {
        name: name.to_string(),
        block,
        rows: DimExpr::Ref(rows.to_string()),
        cols: DimExpr::Ref(cols.to_string()),
        repeat: None,
        per_layer: true,
    }
}

/// Encoder space with fixed hidden width and depth per architecture; the
/// attention operator, head count, feed-forward width and stack count vary
/// per layer. Non-self-attention operators (linear transform, convolution)
/// map to attention-tagged matrices of the same width.
fn flexibert() -> SearchSpaceDef {
    let mut f1 = module("f1", BlockTag::Ffn, "ffn_dim", "hidden_dim");
    f1.repeat = Some("ffn_stacks".to_string());
    let mut f2 = module("f2", BlockTag::Ffn, "hidden_dim", "ffn_dim");
    f2.repeat = Some("ffn_stacks".to_string());
    SearchSpaceDef {
        schema_version: SCHEMA_VERSION,
        name: "flexibert".to_string(),
        kind: SpaceKind::HeterogeneousPerLayer,
        num_layers: LayerCount::Choices(vec![2, 4]),
        constants: BTreeMap::new(),
        dimensions: vec![
            dim("hidden_dim", false, ints(&[128, 256])),
            dim(
                "attn_op",
                true,
                tags(&["sa_sdp", "sa_mult", "lt_dft", "lt_dct", "conv_5", "conv_9"]),
            ),
            dim("num_heads", true, ints(&[2, 4])),
            dim("ffn_dim", true, ints(&[512, 1024])),
            dim("ffn_stacks", true, ints(&[1, 3])),
        ],
        modules: vec![
            module("q", BlockTag::Attention, "hidden_dim", "hidden_dim"),
            module("k", BlockTag::Attention, "hidden_dim", "hidden_dim"),
            module("v", BlockTag::Attention, "hidden_dim", "hidden_dim"),
            module("o", BlockTag::Attention, "hidden_dim", "hidden_dim"),
            f1,
            f2,
        ],
        attn_score_dim: Some(DimExpr::Ref("hidden_dim".to_string())),
        count_bias: false,
    }
}

/// Decoder grid: searchable depth, global model width, per-layer inner
/// width, plus adaptive-embedding settings that only affect the embedding
/// matrices (tagged `other`).
fn gpt2() -> SearchSpaceDef {
    let d_model: Vec<u64> = (0..15).map(|i| 128 + 64 * i).collect(); // 128..=1024
    let d_inner: Vec<u64> = (0..61).map(|i| 256 + 64 * i).collect(); // 256..=4096
    let mut d_embed = dim("d_embed", false, ints(&[128, 256, 512]));
    d_embed.embedding = true;
    let mut factor = dim("embed_factor", false, ints(&[1, 2, 4]));
    factor.embedding = true;
    SearchSpaceDef {
        schema_version: SCHEMA_VERSION,
        name: "gpt2".to_string(),
        kind: SpaceKind::DecoderGrid,
        num_layers: LayerCount::Choices((2..=16).collect()),
        constants: BTreeMap::from([("vocab".to_string(), 50257)]),
        dimensions: vec![
            dim("d_model", false, ints(&d_model)),
            dim("d_inner", true, ints(&d_inner)),
            dim("n_head", false, ints(&[2, 4, 8])),
            d_embed,
            factor,
        ],
        modules: vec![
            module("q", BlockTag::Attention, "d_model", "d_model"),
            module("k", BlockTag::Attention, "d_model", "d_model"),
            module("v", BlockTag::Attention, "d_model", "d_model"),
            module("o", BlockTag::Attention, "d_model", "d_model"),
            module("f1", BlockTag::Ffn, "d_inner", "d_model"),
            module("f2", BlockTag::Ffn, "d_model", "d_inner"),
            ModuleTemplate {
                name: "emb".to_string(),
                block: BlockTag::Other,
                rows: DimExpr::Ref("vocab".to_string()),
                cols: DimExpr::Ref("d_embed".to_string()),
                repeat: None,
                per_layer: false,
            },
            ModuleTemplate {
                name: "emb_proj".to_string(),
                block: BlockTag::Other,
                rows: DimExpr::Ref("d_model".to_string()),
                cols: DimExpr::Ref("d_embed".to_string()),
                repeat: None,
                per_layer: false,
            },
        ],
        attn_score_dim: Some(DimExpr::Ref("d_model".to_string())),
        count_bias: false,
    }
}

/// BERT-base supernet masks: per-layer attention output widths and FFN
/// intermediate widths (layer-specific value lists), LoRA adapters on Q and
/// V with a searchable shared rank per layer.
fn lonas_bert() -> SearchSpaceDef {
    let qkv: Vec<Vec<u64>> = vec![
        vec![768, 384],
        vec![768, 320],
        vec![768, 256],
        vec![768, 512],
        vec![768, 512],
        vec![768, 704],
        vec![768, 576],
        vec![768, 576],
        vec![768, 640],
        vec![768, 192],
        vec![768, 704, 192],
        vec![768, 320],
    ];
    let inter: Vec<Vec<u64>> = vec![
        vec![3072, 2634, 216],
        vec![3072, 2634, 181],
        vec![3072, 2627, 208],
        vec![3072, 2676, 226],
        vec![3072, 2628, 179],
        vec![3072, 2662, 175],
        vec![3072, 2706, 182],
        vec![3072, 2687, 169],
        vec![3072, 2616, 165],
        vec![3072, 2400, 160],
        vec![3072, 2198, 163],
        vec![3072, 1940, 150],
    ];
    let per_layer = |lists: Vec<Vec<u64>>| Some(lists.into_iter().map(|l| ints(&l)).collect());
    SearchSpaceDef {
        schema_version: SCHEMA_VERSION,
        name: "lonas-bert".to_string(),
        kind: SpaceKind::HeterogeneousPerLayer,
        num_layers: LayerCount::Fixed(12),
        constants: BTreeMap::from([("hidden".to_string(), 768)]),
        dimensions: vec![
            DimensionDef {
                name: "qkv_dim".to_string(),
                layer_scoped: true,
                embedding: false,
                values: vec![],
                per_layer_values: per_layer(qkv),
            },
            dim("lora_rank", true, ints(&[8, 4, 2])),
            DimensionDef {
                name: "inter_dim".to_string(),
                layer_scoped: true,
                embedding: false,
                values: vec![],
                per_layer_values: per_layer(inter),
            },
        ],
        modules: vec![
            module("q", BlockTag::Attention, "qkv_dim", "hidden"),
            module("k", BlockTag::Attention, "qkv_dim", "hidden"),
            module("v", BlockTag::Attention, "qkv_dim", "hidden"),
            module("o", BlockTag::Attention, "hidden", "qkv_dim"),
            module("q_lora_a", BlockTag::Attention, "lora_rank", "hidden"),
            module("q_lora_b", BlockTag::Attention, "qkv_dim", "lora_rank"),
            module("v_lora_a", BlockTag::Attention, "lora_rank", "hidden"),
            module("v_lora_b", BlockTag::Attention, "qkv_dim", "lora_rank"),
            module("f1", BlockTag::Ffn, "inter_dim", "hidden"),
            module("f2", BlockTag::Ffn, "hidden", "inter_dim"),
        ],
        attn_score_dim: Some(DimExpr::Ref("hidden".to_string())),
        count_bias: false,
    }
}

/// LLaMA-7B supernet masks: per-layer LoRA rank for Q/K/V, five Up/Gate
/// widths (Down follows), and a LoRA rank for Up/Gate. Base projections stay
/// at the full model width.
fn lonas_llama() -> SearchSpaceDef {
    SearchSpaceDef {
        schema_version: SCHEMA_VERSION,
        name: "lonas-llama".to_string(),
        kind: SpaceKind::Homogeneous,
        num_layers: LayerCount::Fixed(32),
        constants: BTreeMap::from([("hidden".to_string(), 4096)]),
        dimensions: vec![
            dim("lora_rank_qkv", true, ints(&[32, 28])),
            dim("up_gate_dim", true, ints(&[11008, 9632, 8256, 6880, 5504])),
            dim("lora_rank_ug", true, ints(&[32, 28])),
        ],
        modules: vec![
            module("q", BlockTag::Attention, "hidden", "hidden"),
            module("k", BlockTag::Attention, "hidden", "hidden"),
            module("v", BlockTag::Attention, "hidden", "hidden"),
            module("o", BlockTag::Attention, "hidden", "hidden"),
            module("q_lora_a", BlockTag::Attention, "lora_rank_qkv", "hidden"),
            module("q_lora_b", BlockTag::Attention, "hidden", "lora_rank_qkv"),
            module("k_lora_a", BlockTag::Attention, "lora_rank_qkv", "hidden"),
            module("k_lora_b", BlockTag::Attention, "hidden", "lora_rank_qkv"),
            module("v_lora_a", BlockTag::Attention, "lora_rank_qkv", "hidden"),
            module("v_lora_b", BlockTag::Attention, "hidden", "lora_rank_qkv"),
            module("up", BlockTag::Ffn, "up_gate_dim", "hidden"),
            module("gate", BlockTag::Ffn, "up_gate_dim", "hidden"),
            module("down", BlockTag::Ffn, "hidden", "up_gate_dim"),
            module("up_lora_a", BlockTag::Ffn, "lora_rank_ug", "hidden"),
            module("up_lora_b", BlockTag::Ffn, "up_gate_dim", "lora_rank_ug"),
            module("gate_lora_a", BlockTag::Ffn, "lora_rank_ug", "hidden"),
            module("gate_lora_b", BlockTag::Ffn, "up_gate_dim", "lora_rank_ug"),
        ],
        attn_score_dim: Some(DimExpr::Ref("hidden".to_string())),
        count_bias: false,
    }
}

/// Small homogeneous space (4096 architectures) for demos and fast tests.
fn toy() -> SearchSpaceDef {
    SearchSpaceDef {
        schema_version: SCHEMA_VERSION,
        name: "toy".to_string(),
        kind: SpaceKind::Homogeneous,
        num_layers: LayerCount::Fixed(3),
        constants: BTreeMap::new(),
        dimensions: vec![
            dim("attn_dim", true, ints(&[32, 48, 64, 96])),
            dim("ffn_dim", true, ints(&[64, 96, 128, 192])),
        ],
        modules: vec![
            module("q", BlockTag::Attention, "attn_dim", "attn_dim"),
            module("k", BlockTag::Attention, "attn_dim", "attn_dim"),
            module("v", BlockTag::Attention, "attn_dim", "attn_dim"),
            module("o", BlockTag::Attention, "attn_dim", "attn_dim"),
            module("f1", BlockTag::Ffn, "ffn_dim", "ffn_dim"),
            module("f2", BlockTag::Ffn, "ffn_dim", "ffn_dim"),
        ],
        attn_score_dim: None,
        count_bias: false,
    }
}
