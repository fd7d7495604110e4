//! Named-tensor checkpoint archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "LTC1" | version u32 | num_heads u32
//! config_len u64 | config bytes (UTF-8 run-config text, may be empty)
//! tensor_count u64
//! per tensor: name_len u64 | name | ndim u64 | dims u64* | f32 data (row-major)
//! ```
//!
//! Everything else about the model shape is recovered from the tensor
//! shapes themselves. Externally published GPT-2 (124M) tensors map onto
//! this schema by name (see [`import_gpt2_names`]); the Conv1D `[in, out]`
//! layout used there matches ours, so the import is a pure rename.

use super::{ModelConfig, ModelError, ModelParams};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"LTC1";
const VERSION: u32 = 1;

pub fn save_checkpoint(
    params: &ModelParams<f32>,
    path: &Path,
    run_config: &str,
) -> Result<(), ModelError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.config.num_heads as u32).to_le_bytes())?;
    let cfg_bytes = run_config.as_bytes();
    w.write_all(&(cfg_bytes.len() as u64).to_le_bytes())?;
    w.write_all(cfg_bytes)?;
    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (name, shape, data) in tensors {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u64).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(shape.len() as u64).to_le_bytes())?;
        for dim in &shape {
            w.write_all(&(*dim as u64).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, ModelError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Raw archive entries, before reassembly into a parameter struct.
pub type TensorEntries = Vec<(String, Vec<usize>, Vec<f32>)>;

fn read_entries(path: &Path) -> Result<(u32, String, TensorEntries), ModelError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::CorruptCheckpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(ModelError::CorruptCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let num_heads = read_u32(&mut r)?;
    let cfg_len = read_u64(&mut r)? as usize;
    let mut cfg_bytes = vec![0u8; cfg_len];
    r.read_exact(&mut cfg_bytes)?;
    let run_config = String::from_utf8(cfg_bytes)
        .map_err(|e| ModelError::CorruptCheckpoint(format!("config not UTF-8: {e}")))?;
    let count = read_u64(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u64(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| ModelError::CorruptCheckpoint(format!("name not UTF-8: {e}")))?;
        let ndim = read_u64(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0f32; numel];
        let mut buf = [0u8; 4];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        entries.push((name, shape, data));
    }
    Ok((num_heads, run_config, entries))
}

/// Rebuilds parameters from named entries. The model shape is derived
/// from the tensors: layer count from `h.N` blocks, dims from `wte`/`wpe`.
pub fn params_from_entries(
    entries: &TensorEntries,
    num_heads: usize,
) -> Result<ModelParams<f32>, ModelError> {
    let find = |name: &str| -> Result<&(String, Vec<usize>, Vec<f32>), ModelError> {
        entries
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| ModelError::CorruptCheckpoint(format!("missing tensor {name}")))
    };
    let wte = find("wte")?;
    let wpe = find("wpe")?;
    if wte.1.len() != 2 || wpe.1.len() != 2 {
        return Err(ModelError::CorruptCheckpoint(
            "embedding tensors must be 2-D".into(),
        ));
    }
    let vocab_size = wte.1[0];
    let model_dim = wte.1[1];
    let max_positions = wpe.1[0];
    let num_layers = (0..)
        .take_while(|i| {
            entries
                .iter()
                .any(|(n, _, _)| n == &format!("h.{i}.ln_1.weight"))
        })
        .count();
    if num_layers == 0 {
        return Err(ModelError::CorruptCheckpoint(
            "no transformer blocks found".into(),
        ));
    }
    let tie_unembedding = !entries.iter().any(|(n, _, _)| n == "lm_head");
    let config = ModelConfig {
        num_layers,
        num_heads,
        model_dim,
        vocab_size,
        max_positions,
        tie_unembedding,
    };
    config.validate()?;

    let mut params = ModelParams::<f32>::zeros(config);
    for (name, dst) in params.tensors_mut() {
        let (_, shape, data) = find(&name)?;
        let expected: Vec<usize> = match name.as_str() {
            "wte" => vec![vocab_size, model_dim],
            _ => shape.clone(),
        };
        if *shape != expected || data.len() != dst.len() {
            return Err(ModelError::ShapeMismatch {
                name: name.clone(),
                expected: vec![dst.len()],
                got: vec![data.len()],
            });
        }
        dst.copy_from_slice(data);
    }
    Ok(params)
}

/// Loads an archive, deriving the model shape from its contents.
/// Returns the parameters and the embedded run-config text.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, String), ModelError> {
    let (num_heads, run_config, entries) = read_entries(path)?;
    let params = params_from_entries(&entries, num_heads as usize)?;
    Ok((params, run_config))
}

/// Loads and validates against a caller-supplied config.
pub fn load_checkpoint_expecting(
    path: &Path,
    expected: &ModelConfig,
) -> Result<(ModelParams<f32>, String), ModelError> {
    let (params, run_config) = load_checkpoint(path)?;
    if params.config != *expected {
        return Err(ModelError::ShapeMismatch {
            name: format!(
                "config (layers {} vs {}, dim {} vs {})",
                params.config.num_layers,
                expected.num_layers,
                params.config.model_dim,
                expected.model_dim
            ),
            expected: vec![expected.num_layers, expected.model_dim],
            got: vec![params.config.num_layers, params.config.model_dim],
        });
    }
    Ok((params, run_config))
}

/// Maps an externally published GPT-2 tensor name onto this schema.
/// Returns `None` for buffers that have no parameter here (attention
/// mask constants, the tied `lm_head.weight` duplicate).
pub fn import_gpt2_names(external: &str) -> Option<String> {
    let name = external.strip_prefix("transformer.").unwrap_or(external);
    match name {
        "wte.weight" => Some("wte".into()),
        "wpe.weight" => Some("wpe".into()),
        "ln_f.weight" | "ln_f.bias" => Some(name.into()),
        "lm_head.weight" => None,
        _ => {
            let rest = name.strip_prefix("h.")?;
            let (idx, field) = rest.split_once('.')?;
            idx.parse::<usize>().ok()?;
            match field {
                "ln_1.weight" | "ln_1.bias" | "ln_2.weight" | "ln_2.bias"
                | "attn.c_attn.weight" | "attn.c_attn.bias" | "attn.c_proj.weight"
                | "attn.c_proj.bias" | "mlp.c_fc.weight" | "mlp.c_fc.bias"
                | "mlp.c_proj.weight" | "mlp.c_proj.bias" => Some(format!("h.{idx}.{field}")),
                // attn.bias / attn.masked_bias are mask buffers, not weights
                _ => None,
            }
        }
    }
}

/// Appends latent-marker rows to the embedding table, each initialized
/// from `init_source`'s embedding. Returns the three new token ids
/// (start, latent, end) in order. This is the fine-tuning import path;
/// from-scratch vocabularies carry their markers from the start.
pub fn extend_vocab_with_markers(
    params: &ModelParams<f32>,
    init_source: u32,
) -> Result<(ModelParams<f32>, [u32; 3]), ModelError> {
    let config = params.config;
    if init_source as usize >= config.vocab_size {
        return Err(ModelError::TokenOutOfRange {
            id: init_source,
            vocab: config.vocab_size,
        });
    }
    let new_config = ModelConfig {
        vocab_size: config.vocab_size + 3,
        ..config
    };
    let mut out = ModelParams::<f32>::zeros(new_config);
    let src_row = params.wte.row(init_source as usize).to_owned();
    out.wte
        .slice_mut(ndarray::s![..config.vocab_size, ..])
        .assign(&params.wte);
    for i in 0..3 {
        out.wte.row_mut(config.vocab_size + i).assign(&src_row);
    }
    out.wpe.assign(&params.wpe);
    out.layers.clone_from(&params.layers);
    out.lnf_g.assign(&params.lnf_g);
    out.lnf_b.assign(&params.lnf_b);
    if let (Some(dst), Some(src)) = (&mut out.lm_head, &params.lm_head) {
        dst.slice_mut(ndarray::s![..config.vocab_size, ..])
            .assign(src);
        let head_row = src.row(init_source as usize).to_owned();
        for i in 0..3 {
            dst.row_mut(config.vocab_size + i).assign(&head_row);
        }
    }
    let base = config.vocab_size as u32;
    Ok((out, [base, base + 1, base + 2]))
}
