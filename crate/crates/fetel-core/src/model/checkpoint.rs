//! Checkpoint directory layout:
//!
//! ```text
//! <dir>/config.json   model configuration and k
//! <dir>/types.txt     type vocabulary, one canonical path per line
//! <dir>/mapping.tsv   KB type mapping
//! <dir>/words.txt     embedding vocabulary, one word per line
//! <dir>/params.bin    every tensor (parameters, batch-norm state, frozen
//!                     word embeddings) as little-endian f64 blobs
//! ```
//!
//! A checkpoint is self-contained: loading it reproduces bitwise-identical
//! evaluation-mode scores without any of the original input files.

use std::collections::BTreeMap;
use std::fs;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TypingModel};
use crate::types::{KbTypeMapping, TypeVocabulary};

const PARAMS_MAGIC: &[u8; 8] = b"FETELP01";
const CONFIG_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointConfig {
    format_version: u32,
    k: usize,
    model: ModelConfig,
}

/// Everything needed to run the model after loading a checkpoint.
pub struct LoadedCheckpoint {
    pub model: TypingModel,
    pub vocab: TypeVocabulary,
    pub mapping: KbTypeMapping,
    pub table: EmbeddingTable,
}

fn write_tensor<W: Write>(w: &mut W, name: &str, tensor: &Array2<f64>) -> std::io::Result<()> {
    let name_bytes = name.as_bytes();
    w.write_all(&(name_bytes.len() as u64).to_le_bytes())?;
    w.write_all(name_bytes)?;
    w.write_all(&(tensor.nrows() as u64).to_le_bytes())?;
    w.write_all(&(tensor.ncols() as u64).to_le_bytes())?;
    for &v in tensor.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_tensor<R: Read>(r: &mut R) -> std::io::Result<(String, Array2<f64>)> {
    let name_len = read_u64(r)? as usize;
    if name_len > 1 << 16 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "implausible tensor name length",
        ));
    }
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes)?;
    let name = String::from_utf8_lossy(&name_bytes).into_owned();
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let n = rows.checked_mul(cols).ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidData, "tensor shape overflow")
    })?;
    // Read in bounded chunks so a corrupt header cannot demand a giant
    // allocation before the truncation is noticed.
    let total = n.checked_mul(8).ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidData, "tensor shape overflow")
    })?;
    let mut bytes = Vec::new();
    let mut chunk = [0u8; 1 << 16];
    let mut remaining = total;
    while remaining > 0 {
        let take = remaining.min(chunk.len());
        r.read_exact(&mut chunk[..take])?;
        bytes.extend_from_slice(&chunk[..take]);
        remaining -= take;
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((
        name,
        Array2::from_shape_vec((rows, cols), data).expect("row-major tensor data"),
    ))
}

/// Saves the model together with the vocabulary, mapping, and embedding table
/// it was trained with.
pub fn save_checkpoint(
    dir: impl AsRef<Path>,
    model: &TypingModel,
    vocab: &TypeVocabulary,
    mapping: &KbTypeMapping,
    table: &EmbeddingTable,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let io = |name: &str| {
        let p = dir.join(name);
        move |e| Error::io(p.display().to_string(), e)
    };

    let config = CheckpointConfig {
        format_version: CONFIG_VERSION,
        k: model.k(),
        model: model.config().clone(),
    };
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&config).expect("config serializes"),
    )
    .map_err(io("config.json"))?;
    fs::write(dir.join("types.txt"), vocab.to_lines()).map_err(io("types.txt"))?;
    fs::write(dir.join("mapping.tsv"), mapping.to_lines()).map_err(io("mapping.tsv"))?;
    fs::write(dir.join("words.txt"), table.words().join("\n") + "\n").map_err(io("words.txt"))?;

    let params_path = dir.join("params.bin");
    let file =
        File::create(&params_path).map_err(|e| Error::io(params_path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(params_path.display().to_string(), e);

    let mut tensors: Vec<(String, &Array2<f64>)> = model.named_params();
    tensors.extend(model.named_state());
    let unk = table.unk_vector().to_owned().insert_axis(Axis(0));
    let mention = table.mention_token_vector().to_owned().insert_axis(Axis(0));
    let word_matrix = table.matrix();

    w.write_all(PARAMS_MAGIC).map_err(io_err)?;
    let total = tensors.len() + 3;
    w.write_all(&(total as u64).to_le_bytes()).map_err(io_err)?;
    for (name, tensor) in &tensors {
        write_tensor(&mut w, name, tensor).map_err(io_err)?;
    }
    write_tensor(&mut w, "word_embeddings", word_matrix).map_err(io_err)?;
    write_tensor(&mut w, "unk_vector", &unk).map_err(io_err)?;
    write_tensor(&mut w, "mention_token_init", &mention).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Loads a checkpoint directory written by [`save_checkpoint`].
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<LoadedCheckpoint> {
    let dir = dir.as_ref();
    let config_path = dir.join("config.json");
    let config_text = fs::read_to_string(&config_path)
        .map_err(|e| Error::io(config_path.display().to_string(), e))?;
    let config: CheckpointConfig =
        serde_json::from_str(&config_text).map_err(|e| Error::FormatVersionMismatch {
            path: config_path.display().to_string(),
            detail: e.to_string(),
        })?;
    if config.format_version != CONFIG_VERSION {
        return Err(Error::FormatVersionMismatch {
            path: config_path.display().to_string(),
            detail: format!(
                "unsupported checkpoint version {} (expected {})",
                config.format_version, CONFIG_VERSION
            ),
        });
    }

    let vocab = TypeVocabulary::load(dir.join("types.txt"))?;
    let mapping = KbTypeMapping::load(dir.join("mapping.tsv"), &vocab)?;
    if vocab.len() != config.k {
        return Err(Error::FormatVersionMismatch {
            path: dir.display().to_string(),
            detail: format!(
                "types.txt has {} types but config says k = {}",
                vocab.len(),
                config.k
            ),
        });
    }

    let words_path = dir.join("words.txt");
    let words_text = fs::read_to_string(&words_path)
        .map_err(|e| Error::io(words_path.display().to_string(), e))?;
    let words: Vec<String> = words_text.lines().map(String::from).collect();

    let params_path = dir.join("params.bin");
    let file =
        File::open(&params_path).map_err(|e| Error::io(params_path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let mismatch = |detail: String| Error::FormatVersionMismatch {
        path: params_path.display().to_string(),
        detail,
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::io(params_path.display().to_string(), e))?;
    if &magic != PARAMS_MAGIC {
        return Err(mismatch("bad parameter blob magic".to_string()));
    }
    let count = read_u64(&mut r).map_err(|e| Error::io(params_path.display().to_string(), e))?;
    let mut tensors: BTreeMap<String, Array2<f64>> = BTreeMap::new();
    for _ in 0..count {
        let (name, tensor) =
            read_tensor(&mut r).map_err(|_| mismatch("truncated parameter blob".to_string()))?;
        tensors.insert(name, tensor);
    }

    let mut take = |name: &str| {
        tensors
            .remove(name)
            .ok_or_else(|| mismatch(format!("missing tensor {:?}", name)))
    };

    let word_matrix = take("word_embeddings")?;
    if word_matrix.nrows() != words.len() {
        return Err(mismatch(format!(
            "words.txt has {} words but word_embeddings has {} rows",
            words.len(),
            word_matrix.nrows()
        )));
    }
    let unk = take("unk_vector")?.row(0).to_owned();
    let mention_init = take("mention_token_init")?.row(0).to_owned();
    let table = EmbeddingTable::from_saved(words, word_matrix, unk, mention_init);

    let mut model = TypingModel::new(config.model, config.k, &table, 0)?;
    for (name, param) in model.named_params_mut() {
        let tensor = tensors
            .remove(&name)
            .ok_or_else(|| mismatch(format!("missing tensor {:?}", name)))?;
        if tensor.raw_dim() != param.raw_dim() {
            return Err(mismatch(format!(
                "tensor {:?} has shape {:?}, expected {:?}",
                name,
                tensor.dim(),
                param.dim()
            )));
        }
        *param = tensor;
    }
    for (name, state) in model.named_state_mut() {
        let tensor = tensors
            .remove(&name)
            .ok_or_else(|| mismatch(format!("missing tensor {:?}", name)))?;
        *state = tensor;
    }

    Ok(LoadedCheckpoint {
        model,
        vocab,
        mapping,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{encode_mention_string, ModelConfig};
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn checkpoint_round_trip_reproduces_scores_bitwise() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let words: Vec<String> = (0..8).map(|i| format!("w{}", i)).collect();
        let matrix = Array2::from_shape_fn((8, 5), |_| rng.random_range(-0.5..0.5));
        let table = EmbeddingTable::from_parts(words, matrix);
        let vocab = TypeVocabulary::from_lines("/person\n/person/actor\n/location\n").unwrap();
        let mapping = KbTypeMapping::from_lines("kb.actor\t/person/actor\n", &vocab).unwrap();
        let config = ModelConfig {
            embed_dim: 5,
            recurrent_hidden: 4,
            mlp_hidden: 6,
            type_embed_dim: 7,
            ..ModelConfig::default()
        };
        let mut model = TypingModel::new(config, 3, &table, 9).unwrap();
        // Make batch-norm state nontrivial so it must survive the round trip.
        for (_, state) in model.named_state_mut() {
            state.mapv_inplace(|v| v + 0.25);
        }

        let tokens: Vec<String> = ["w0", "w1", "w2", "w3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let f_c = model.encode_context(&table, &tokens, (1, 3)).unwrap();
        let f_s = encode_mention_string(&table, &tokens, (1, 3)).unwrap();
        let before = model
            .score_types(&f_c, &f_s, &[1.0, 0.0, 0.0], 0.5)
            .unwrap();

        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("model");
        save_checkpoint(&ckpt, &model, &vocab, &mapping, &table).unwrap();
        let loaded = load_checkpoint(&ckpt).unwrap();

        let f_c2 = loaded
            .model
            .encode_context(&loaded.table, &tokens, (1, 3))
            .unwrap();
        let f_s2 = encode_mention_string(&loaded.table, &tokens, (1, 3)).unwrap();
        let after = loaded
            .model
            .score_types(&f_c2, &f_s2, &[1.0, 0.0, 0.0], 0.5)
            .unwrap();
        assert_eq!(before, after, "scores must be bitwise identical");
        assert_eq!(loaded.vocab.len(), 3);
        assert!(loaded.mapping.lookup("kb.actor").is_some());
    }

    #[test]
    fn load_rejects_corrupt_blob() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let table = EmbeddingTable::from_parts(
            vec!["a".to_string()],
            Array2::from_shape_fn((1, 4), |_| rng.random_range(-0.5..0.5)),
        );
        let vocab = TypeVocabulary::from_lines("/person\n").unwrap();
        let mapping = KbTypeMapping::new();
        let config = ModelConfig {
            embed_dim: 4,
            recurrent_hidden: 2,
            mlp_hidden: 3,
            type_embed_dim: 3,
            ..ModelConfig::default()
        };
        let model = TypingModel::new(config, 1, &table, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("model");
        save_checkpoint(&ckpt, &model, &vocab, &mapping, &table).unwrap();

        // Truncate the blob.
        let blob = ckpt.join("params.bin");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&ckpt),
            Err(Error::FormatVersionMismatch { .. })
        ));
    }
}
