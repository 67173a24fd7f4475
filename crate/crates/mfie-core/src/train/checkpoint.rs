//! Versioned binary checkpoint format.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "MFIE"
//! version u32      currently 1
//! meta    u32 length + JSON bytes (model kind, dims, vocabularies)
//! blocks  u32 count, then per block:
//!           u32 name length + UTF-8 name
//!           u32 ndim + u64 per dim
//!           f64 per element, row-major
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderStack, QueryBank};
use crate::error::{Error, Result};
use crate::pointer::PointerParams;
use crate::tensor::Matrix;
use crate::trigger::FusionParams;

use super::{DeeModel, Projection, SeeModel, ToyEncoder};

const MAGIC: &[u8; 4] = b"MFIE";
const VERSION: u32 = 1;

/// Which pipeline a checkpoint holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    See,
    Dee,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: ModelKind,
    dim: usize,
    vocab: Vec<String>,
    arg_types: Vec<String>,
    /// Event types (document-level) or trigger types (sentence-level).
    event_types: Vec<String>,
    use_projection: bool,
    #[serde(default)]
    use_trigger: bool,
    #[serde(default)]
    query_count: usize,
    #[serde(default)]
    layers: usize,
    #[serde(default)]
    heads: usize,
    #[serde(default = "default_threshold")]
    decode_threshold: f64,
}

fn default_threshold() -> f64 {
    0.5
}

struct Block {
    name: String,
    dims: Vec<u64>,
    data: Vec<f64>,
}

impl Block {
    fn matrix(name: &str, m: &Matrix) -> Block {
        Block {
            name: name.to_string(),
            dims: vec![m.rows() as u64, m.cols() as u64],
            data: m.data().to_vec(),
        }
    }

    fn vector(name: &str, v: &[f64]) -> Block {
        Block { name: name.to_string(), dims: vec![v.len() as u64], data: v.to_vec() }
    }

    fn to_matrix(&self) -> Result<Matrix> {
        if self.dims.len() != 2 {
            return Err(Error::data(format!("block {:?} is not a matrix", self.name)));
        }
        Matrix::from_vec(self.dims[0] as usize, self.dims[1] as usize, self.data.clone())
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_blocks(w: &mut impl Write, meta: &Meta, blocks: &[Block]) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    let meta_bytes =
        serde_json::to_vec(meta).map_err(|e| Error::data(format!("meta serialization: {e}")))?;
    write_u32(w, meta_bytes.len() as u32)?;
    w.write_all(&meta_bytes)?;
    write_u32(w, blocks.len() as u32)?;
    for block in blocks {
        write_u32(w, block.name.len() as u32)?;
        w.write_all(block.name.as_bytes())?;
        write_u32(w, block.dims.len() as u32)?;
        for d in &block.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        let expected: u64 = block.dims.iter().product();
        debug_assert_eq!(expected as usize, block.data.len());
        for v in &block.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<Meta> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::data("not a checkpoint file (bad magic)"));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(Error::data(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = read_u32(r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    serde_json::from_slice(&meta_bytes).map_err(|e| Error::data(format!("checkpoint meta: {e}")))
}

fn read_blocks(r: &mut impl Read) -> Result<Vec<Block>> {
    let count = read_u32(r)? as usize;
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::data("block name not UTF-8"))?;
        let ndim = read_u32(r)? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            dims.push(u64::from_le_bytes(buf));
        }
        let len: u64 = dims.iter().product();
        let mut data = Vec::with_capacity(len as usize);
        for _ in 0..len {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        blocks.push(Block { name, dims, data });
    }
    Ok(blocks)
}

fn take<'a>(blocks: &'a [Block], name: &str) -> Result<&'a Block> {
    blocks
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::data(format!("checkpoint missing block {name:?}")))
}

fn encoder_blocks(blocks: &mut Vec<Block>, encoder: &ToyEncoder) {
    blocks.push(Block::matrix("encoder.embedding", &encoder.embedding));
    if let Some(p) = &encoder.projection {
        blocks.push(Block::matrix("encoder.projection.weight", &p.weight));
        blocks.push(Block::vector("encoder.projection.bias", &p.bias));
    }
}

fn pointer_blocks(blocks: &mut Vec<Block>, prefix: &str, params: &PointerParams) {
    blocks.push(Block::matrix(&format!("{prefix}.start_weights"), &params.start_weights));
    blocks.push(Block::vector(&format!("{prefix}.start_bias"), &params.start_bias));
    blocks.push(Block::matrix(&format!("{prefix}.end_weights"), &params.end_weights));
    blocks.push(Block::vector(&format!("{prefix}.end_bias"), &params.end_bias));
}

fn read_encoder(blocks: &[Block], meta: &Meta) -> Result<ToyEncoder> {
    let embedding = take(blocks, "encoder.embedding")?.to_matrix()?;
    let projection = if meta.use_projection {
        Some(Projection {
            weight: take(blocks, "encoder.projection.weight")?.to_matrix()?,
            bias: take(blocks, "encoder.projection.bias")?.data.clone(),
        })
    } else {
        None
    };
    if embedding.rows() != meta.vocab.len() {
        return Err(Error::data(format!(
            "embedding rows {} do not match vocab size {}",
            embedding.rows(),
            meta.vocab.len()
        )));
    }
    Ok(ToyEncoder::from_parts(meta.vocab.clone(), embedding, projection))
}

fn read_pointer(blocks: &[Block], prefix: &str) -> Result<PointerParams> {
    Ok(PointerParams {
        start_weights: take(blocks, &format!("{prefix}.start_weights"))?.to_matrix()?,
        start_bias: take(blocks, &format!("{prefix}.start_bias"))?.data.clone(),
        end_weights: take(blocks, &format!("{prefix}.end_weights"))?.to_matrix()?,
        end_bias: take(blocks, &format!("{prefix}.end_bias"))?.data.clone(),
    })
}

/// Writes a sentence-level model checkpoint.
pub fn save_see_model(w: &mut impl Write, model: &SeeModel) -> Result<()> {
    let meta = Meta {
        kind: ModelKind::See,
        dim: model.encoder.dim(),
        vocab: model.encoder.vocab.clone(),
        arg_types: model.arg_types.clone(),
        event_types: model.trigger_types.clone(),
        use_projection: model.encoder.projection.is_some(),
        use_trigger: model.use_trigger,
        query_count: 0,
        layers: 0,
        heads: 0,
        decode_threshold: model.decode_threshold,
    };
    let mut blocks = Vec::new();
    encoder_blocks(&mut blocks, &model.encoder);
    blocks.push(Block::vector("fusion.v", &model.fusion.v));
    blocks.push(Block::matrix("fusion.w1", &model.fusion.w1));
    blocks.push(Block::matrix("fusion.w2", &model.fusion.w2));
    pointer_blocks(&mut blocks, "arg_head", &model.arg_head);
    pointer_blocks(&mut blocks, "trigger_head", &model.trigger_head);
    write_blocks(w, &meta, &blocks)
}

/// Reads a sentence-level model checkpoint.
pub fn load_see_model(r: &mut impl Read) -> Result<SeeModel> {
    let meta = read_header(r)?;
    if meta.kind != ModelKind::See {
        return Err(Error::data("checkpoint holds a document-level model"));
    }
    let blocks = read_blocks(r)?;
    Ok(SeeModel {
        encoder: read_encoder(&blocks, &meta)?,
        fusion: FusionParams {
            v: take(&blocks, "fusion.v")?.data.clone(),
            w1: take(&blocks, "fusion.w1")?.to_matrix()?,
            w2: take(&blocks, "fusion.w2")?.to_matrix()?,
        },
        arg_head: read_pointer(&blocks, "arg_head")?,
        trigger_head: read_pointer(&blocks, "trigger_head")?,
        arg_types: meta.arg_types,
        trigger_types: meta.event_types,
        use_trigger: meta.use_trigger,
        decode_threshold: meta.decode_threshold,
    })
}

/// Writes a document-level model checkpoint.
pub fn save_dee_model(w: &mut impl Write, model: &DeeModel) -> Result<()> {
    let meta = Meta {
        kind: ModelKind::Dee,
        dim: model.encoder.dim(),
        vocab: model.encoder.vocab.clone(),
        arg_types: model.arg_types.clone(),
        event_types: model.event_types.clone(),
        use_projection: model.encoder.projection.is_some(),
        use_trigger: false,
        query_count: model.queries.count(),
        layers: model.stack.layers.len(),
        heads: model.stack.heads,
        decode_threshold: model.decode_threshold,
    };
    let mut blocks = Vec::new();
    encoder_blocks(&mut blocks, &model.encoder);
    blocks.push(Block::matrix("queries", &model.queries.queries));
    for (i, layer) in model.stack.layers.iter().enumerate() {
        for (name, m) in [
            ("self_attn.wq", &layer.self_attn.wq),
            ("self_attn.wk", &layer.self_attn.wk),
            ("self_attn.wv", &layer.self_attn.wv),
            ("self_attn.wo", &layer.self_attn.wo),
            ("inter_attn.wq", &layer.inter_attn.wq),
            ("inter_attn.wk", &layer.inter_attn.wk),
            ("inter_attn.wv", &layer.inter_attn.wv),
            ("inter_attn.wo", &layer.inter_attn.wo),
            ("ffn.w1", &layer.ffn.w1),
            ("ffn.w2", &layer.ffn.w2),
        ] {
            blocks.push(Block::matrix(&format!("layer{i}.{name}"), m));
        }
        for (name, v) in [
            ("ffn.b1", &layer.ffn.b1),
            ("ffn.b2", &layer.ffn.b2),
            ("ln1.gamma", &layer.ln1.gamma),
            ("ln1.beta", &layer.ln1.beta),
            ("ln2.gamma", &layer.ln2.gamma),
            ("ln2.beta", &layer.ln2.beta),
            ("ln3.gamma", &layer.ln3.gamma),
            ("ln3.beta", &layer.ln3.beta),
        ] {
            blocks.push(Block::vector(&format!("layer{i}.{name}"), v));
        }
    }
    pointer_blocks(&mut blocks, "head", &model.head);
    write_blocks(w, &meta, &blocks)
}

/// Reads a document-level model checkpoint.
pub fn load_dee_model(r: &mut impl Read) -> Result<DeeModel> {
    let meta = read_header(r)?;
    if meta.kind != ModelKind::Dee {
        return Err(Error::data("checkpoint holds a sentence-level model"));
    }
    let blocks = read_blocks(r)?;
    let mut layers = Vec::with_capacity(meta.layers);
    for i in 0..meta.layers {
        layers.push(crate::decoder::DecoderLayer {
            self_attn: crate::tensor::AttnParams {
                wq: take(&blocks, &format!("layer{i}.self_attn.wq"))?.to_matrix()?,
                wk: take(&blocks, &format!("layer{i}.self_attn.wk"))?.to_matrix()?,
                wv: take(&blocks, &format!("layer{i}.self_attn.wv"))?.to_matrix()?,
                wo: take(&blocks, &format!("layer{i}.self_attn.wo"))?.to_matrix()?,
            },
            inter_attn: crate::tensor::AttnParams {
                wq: take(&blocks, &format!("layer{i}.inter_attn.wq"))?.to_matrix()?,
                wk: take(&blocks, &format!("layer{i}.inter_attn.wk"))?.to_matrix()?,
                wv: take(&blocks, &format!("layer{i}.inter_attn.wv"))?.to_matrix()?,
                wo: take(&blocks, &format!("layer{i}.inter_attn.wo"))?.to_matrix()?,
            },
            ffn: crate::decoder::FfnParams {
                w1: take(&blocks, &format!("layer{i}.ffn.w1"))?.to_matrix()?,
                b1: take(&blocks, &format!("layer{i}.ffn.b1"))?.data.clone(),
                w2: take(&blocks, &format!("layer{i}.ffn.w2"))?.to_matrix()?,
                b2: take(&blocks, &format!("layer{i}.ffn.b2"))?.data.clone(),
            },
            ln1: crate::decoder::LayerNormParams {
                gamma: take(&blocks, &format!("layer{i}.ln1.gamma"))?.data.clone(),
                beta: take(&blocks, &format!("layer{i}.ln1.beta"))?.data.clone(),
            },
            ln2: crate::decoder::LayerNormParams {
                gamma: take(&blocks, &format!("layer{i}.ln2.gamma"))?.data.clone(),
                beta: take(&blocks, &format!("layer{i}.ln2.beta"))?.data.clone(),
            },
            ln3: crate::decoder::LayerNormParams {
                gamma: take(&blocks, &format!("layer{i}.ln3.gamma"))?.data.clone(),
                beta: take(&blocks, &format!("layer{i}.ln3.beta"))?.data.clone(),
            },
        });
    }
    Ok(DeeModel {
        encoder: read_encoder(&blocks, &meta)?,
        queries: QueryBank { queries: take(&blocks, "queries")?.to_matrix()? },
        stack: DecoderStack { layers, heads: meta.heads },
        head: read_pointer(&blocks, "head")?,
        arg_types: meta.arg_types,
        event_types: meta.event_types,
        decode_threshold: meta.decode_threshold,
    })
}
