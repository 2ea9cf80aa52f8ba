//! Parameter persistence: a text manifest next to a blob of little-endian
//! `f64` values.
//!
//! ```text
//! corrkd-checkpoint 1
//! model student
//! input_dim 40
//! ...
//! tensor frontend.weight f64le 40x32 0 10240
//! ```
//!
//! Each `tensor` line gives name, dtype, shape, byte offset and byte length
//! into `<stem>.bin`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::encoder::EncoderConfig;
use super::student::{StudentModel, StudentParams};

const MAGIC: &str = "corrkd-checkpoint 1";
const DTYPE: &str = "f64le";

pub fn manifest_path(stem: &Path) -> PathBuf {
    stem.with_extension("manifest")
}

pub fn blob_path(stem: &Path) -> PathBuf {
    stem.with_extension("bin")
}

/// Concatenated little-endian bytes of every tensor, in order.
pub fn param_blob<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn format_shape(shape: &[usize]) -> String {
    shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn config_lines(c: &EncoderConfig) -> [(&'static str, String); 6] {
    [
        ("input_dim", c.input_dim.to_string()),
        ("model_dim", c.model_dim.to_string()),
        ("n_blocks", c.n_blocks.to_string()),
        ("n_heads", c.n_heads.to_string()),
        ("mlp_dim", c.mlp_dim.to_string()),
        ("seed", c.seed.to_string()),
    ]
}

/// Write `<stem>.manifest` and `<stem>.bin`.
pub fn save_student(model: &StudentModel, stem: &Path) -> Result<()> {
    if let Some(dir) = stem.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let named = model.params().named();
    let mut manifest = format!("{MAGIC}\nmodel student\n");
    for (k, v) in config_lines(model.config()) {
        manifest.push_str(&format!("{k} {v}\n"));
    }
    let mut offset = 0usize;
    for (name, t) in &named {
        let bytes = t.len() * 8;
        manifest.push_str(&format!(
            "tensor {name} {DTYPE} {} {offset} {bytes}\n",
            format_shape(t.shape())
        ));
        offset += bytes;
    }
    fs::write(manifest_path(stem), manifest)?;
    fs::write(blob_path(stem), param_blob(named.iter().map(|(_, t)| *t)))?;
    Ok(())
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    bytes: usize,
}

fn bad(stem: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: {msg}", manifest_path(stem).display()))
}

pub fn load_student(stem: &Path) -> Result<StudentModel> {
    let text = fs::read_to_string(manifest_path(stem))?;
    let blob = fs::read(blob_path(stem))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad(stem, "missing header line"));
    }
    let mut meta = std::collections::BTreeMap::new();
    let mut entries = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["tensor", name, dtype, shape, offset, bytes] => {
                if *dtype != DTYPE {
                    return Err(bad(stem, format!("{name}: unsupported dtype {dtype}")));
                }
                let shape = shape
                    .split('x')
                    .map(|d| d.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| bad(stem, format!("{name}: shape: {e}")))?;
                let parse = |s: &str| s.parse::<usize>().map_err(|e| bad(stem, format!("{name}: {e}")));
                entries.push(Entry {
                    name: name.to_string(),
                    shape,
                    offset: parse(offset)?,
                    bytes: parse(bytes)?,
                });
            }
            [key, value] => {
                meta.insert(key.to_string(), value.to_string());
            }
            _ => return Err(bad(stem, format!("malformed line {line:?}"))),
        }
    }
    if meta.get("model").map(String::as_str) != Some("student") {
        return Err(bad(stem, "not a student checkpoint"));
    }
    let field = |k: &str| -> Result<u64> {
        meta.get(k)
            .ok_or_else(|| bad(stem, format!("missing {k}")))?
            .parse::<u64>()
            .map_err(|e| bad(stem, format!("{k}: {e}")))
    };
    let config = EncoderConfig {
        input_dim: field("input_dim")? as usize,
        model_dim: field("model_dim")? as usize,
        n_blocks: field("n_blocks")? as usize,
        n_heads: field("n_heads")? as usize,
        mlp_dim: field("mlp_dim")? as usize,
        seed: field("seed")?,
    };

    // Build a template of the expected layout and fill it entry by entry.
    let template = StudentModel::new(config.clone(), Default::default())?;
    let mut params: StudentParams<Tensor> = template.params().clone();
    let expected: Vec<(String, Vec<usize>)> = params
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected.len() != entries.len() {
        return Err(bad(
            stem,
            format!("expected {} tensors, found {}", expected.len(), entries.len()),
        ));
    }
    for ((slot, (name, shape)), e) in params.iter_mut().into_iter().zip(&expected).zip(&entries) {
        if &e.name != name || &e.shape != shape {
            return Err(bad(
                stem,
                format!("expected {name} {shape:?}, found {} {:?}", e.name, e.shape),
            ));
        }
        let n: usize = shape.iter().product();
        if e.bytes != n * 8 || e.offset + e.bytes > blob.len() {
            return Err(bad(stem, format!("{name}: byte range out of bounds")));
        }
        let data = blob[e.offset..e.offset + e.bytes]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        *slot = Tensor::new(shape, data)?;
    }
    StudentModel::from_params(config, params)
}
