//! Binary container for trained models and embedding tables.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic    8 bytes   "DIPMODEL"
//! version  u32
//! count    u32       number of blocks
//! block*   name_len u16, name (UTF-8), tag u8, payload
//!   tag 0  matrix:   rows u64, cols u64, rows·cols f64 (row-major, raw IEEE-754 bits)
//!   tag 1  text:     len u64, UTF-8 bytes
//! ```
//!
//! Every container has a `meta` text block holding JSON that describes the
//! structure; all floating-point state lives in matrix blocks so it survives
//! bit-exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingTable, Token};
use crate::encoders::{EncoderBody, EncoderConfig, EncoderKind, EncoderModel, EpochRecord, Rbm, TrainingHistory, VisibleKind};
use crate::error::{Error, Result};
use crate::neural::{Activation, DenseLayer, MlpNetwork};
use crate::numkit::Matrix;

pub const CONTAINER_MAGIC: &[u8; 8] = b"DIPMODEL";
pub const CONTAINER_VERSION: u32 = 1;

const TAG_MATRIX: u8 = 0;
const TAG_TEXT: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Matrix(Matrix),
    Text(String),
}

#[derive(Debug, Default)]
struct Blocks {
    order: Vec<String>,
    map: BTreeMap<String, Block>,
}

impl Blocks {
    fn put(&mut self, name: impl Into<String>, block: Block) {
        let name = name.into();
        if self.map.insert(name.clone(), block).is_none() {
            self.order.push(name);
        }
    }

    fn matrix(&self, name: &str) -> Result<&Matrix> {
        match self.map.get(name) {
            Some(Block::Matrix(m)) => Ok(m),
            _ => Err(Error::Format(format!("missing matrix block `{name}`"))),
        }
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.matrix(name)?.as_slice().to_vec())
    }

    fn text(&self, name: &str) -> Result<&str> {
        match self.map.get(name) {
            Some(Block::Text(t)) => Ok(t),
            _ => Err(Error::Format(format!("missing text block `{name}`"))),
        }
    }

    fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CONTAINER_MAGIC)?;
        w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
        w.write_all(&(self.order.len() as u32).to_le_bytes())?;
        for name in &self.order {
            let bytes = name.as_bytes();
            let len = u16::try_from(bytes.len()).map_err(|_| Error::Format(format!("block name too long: {name}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(bytes)?;
            match &self.map[name] {
                Block::Matrix(m) => {
                    w.write_all(&[TAG_MATRIX])?;
                    w.write_all(&(m.rows() as u64).to_le_bytes())?;
                    w.write_all(&(m.cols() as u64).to_le_bytes())?;
                    for v in m.as_slice() {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                Block::Text(t) => {
                    w.write_all(&[TAG_TEXT])?;
                    w.write_all(&(t.len() as u64).to_le_bytes())?;
                    w.write_all(t.as_bytes())?;
                }
            }
        }
        Ok(())
    }

    fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != CONTAINER_MAGIC {
            return Err(Error::Format("not a model container (bad magic)".into()));
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != CONTAINER_VERSION {
            return Err(Error::Format(format!(
                "container version {version} is not supported (expected {CONTAINER_VERSION})"
            )));
        }
        let count = u32::from_le_bytes(read_array(r)?);
        let mut blocks = Blocks::default();
        for _ in 0..count {
            let len = u16::from_le_bytes(read_array(r)?) as usize;
            let name = String::from_utf8(read_vec(r, len)?).map_err(|_| Error::Format("block name is not UTF-8".into()))?;
            let [tag] = read_array::<1>(r)?;
            let block = match tag {
                TAG_MATRIX => {
                    let rows = read_len(r)?;
                    let cols = read_len(r)?;
                    let n = rows
                        .checked_mul(cols)
                        .and_then(|n| n.checked_mul(8))
                        .ok_or_else(|| Error::Format(format!("block `{name}` is too large")))?;
                    let raw = read_vec(r, n)?;
                    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    Block::Matrix(Matrix::from_vec(rows, cols, data)?)
                }
                TAG_TEXT => {
                    let len = read_len(r)?;
                    let text = String::from_utf8(read_vec(r, len)?)
                        .map_err(|_| Error::Format(format!("block `{name}` is not UTF-8")))?;
                    Block::Text(text)
                }
                other => return Err(Error::Format(format!("block `{name}` has unknown tag {other}"))),
            };
            blocks.put(name, block);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after last block".into()));
        }
        Ok(blocks)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("container is truncated".into()),
        _ => Error::Io(e),
    })
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_len(r: &mut impl Read) -> Result<usize> {
    usize::try_from(u64::from_le_bytes(read_array(r)?)).map_err(|_| Error::Format("length overflows usize".into()))
}

/// Reads `len` bytes without trusting `len` for the up-front allocation.
fn read_vec(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(len.min(1 << 20));
    let got = r.take(len as u64).read_to_end(&mut buf)?;
    if got != len {
        return Err(Error::Format("container is truncated".into()));
    }
    Ok(buf)
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    content: String,
    kind: EncoderKind,
    input_dim: usize,
    latent_dim: usize,
    seed: u64,
    config: EncoderConfig,
    history_components: Vec<String>,
    networks: Vec<NetworkMeta>,
    rbms: Vec<VisibleKind>,
}

#[derive(Serialize, Deserialize)]
struct NetworkMeta {
    name: String,
    activations: Vec<Activation>,
}

fn put_network(blocks: &mut Blocks, metas: &mut Vec<NetworkMeta>, name: &str, net: &MlpNetwork) {
    for (l, layer) in net.layers().iter().enumerate() {
        blocks.put(format!("{name}.{l}.weights"), Block::Matrix(layer.weights.clone()));
        blocks.put(format!("{name}.{l}.bias"), Block::Matrix(row_vector(&layer.bias)));
    }
    metas.push(NetworkMeta {
        name: name.to_string(),
        activations: net.layers().iter().map(|l| l.activation).collect(),
    });
}

fn get_network(blocks: &Blocks, metas: &[NetworkMeta], name: &str) -> Result<MlpNetwork> {
    let meta = metas
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::Format(format!("missing network `{name}`")))?;
    let layers = meta
        .activations
        .iter()
        .enumerate()
        .map(|(l, &act)| {
            DenseLayer::new(
                blocks.matrix(&format!("{name}.{l}.weights"))?.clone(),
                blocks.vector(&format!("{name}.{l}.bias"))?,
                act,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    MlpNetwork::from_layers(layers)
}

fn row_vector(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("row vector")
}

/// Epoch table: train loss, validation loss (NaN when absent), components.
fn history_matrix(h: &TrainingHistory) -> Matrix {
    let cols = 2 + h.components.len();
    let mut data = Vec::with_capacity(h.epochs.len() * cols);
    for e in &h.epochs {
        data.push(e.train_loss);
        data.push(e.val_loss.unwrap_or(f64::NAN));
        data.extend_from_slice(&e.components);
    }
    Matrix::from_vec(h.epochs.len(), cols, data).expect("history shape")
}

fn history_from(m: &Matrix, components: Vec<String>) -> Result<TrainingHistory> {
    if m.rows() > 0 && m.cols() != 2 + components.len() {
        return Err(Error::Format("history block width does not match its components".into()));
    }
    let epochs = m
        .iter_rows()
        .map(|r| EpochRecord {
            train_loss: r[0],
            val_loss: (!r[1].is_nan()).then_some(r[1]),
            components: r[2..].to_vec(),
        })
        .collect();
    Ok(TrainingHistory { components, epochs })
}

fn model_blocks(model: &EncoderModel) -> Result<Blocks> {
    let mut blocks = Blocks::default();
    let mut networks = Vec::new();
    let mut rbms = Vec::new();
    match &model.body {
        EncoderBody::Autoencoder { encoder, decoder } | EncoderBody::Variational { encoder, decoder } => {
            put_network(&mut blocks, &mut networks, "encoder", encoder);
            put_network(&mut blocks, &mut networks, "decoder", decoder);
        }
        EncoderBody::Adversarial {
            encoder,
            decoder,
            discriminator,
        } => {
            put_network(&mut blocks, &mut networks, "encoder", encoder);
            put_network(&mut blocks, &mut networks, "decoder", decoder);
            put_network(&mut blocks, &mut networks, "discriminator", discriminator);
        }
        EncoderBody::BeliefNet { rbms: stack } => {
            for (l, rbm) in stack.iter().enumerate() {
                blocks.put(format!("rbm.{l}.weights"), Block::Matrix(rbm.weights.clone()));
                blocks.put(format!("rbm.{l}.visible_bias"), Block::Matrix(row_vector(&rbm.visible_bias)));
                blocks.put(format!("rbm.{l}.hidden_bias"), Block::Matrix(row_vector(&rbm.hidden_bias)));
                rbms.push(rbm.visible);
            }
        }
    }
    blocks.put("history", Block::Matrix(history_matrix(&model.history)));
    let meta = ModelMeta {
        content: "encoder_model".into(),
        kind: model.kind,
        input_dim: model.input_dim,
        latent_dim: model.latent_dim,
        seed: model.seed,
        config: model.config.clone(),
        history_components: model.history.components.clone(),
        networks,
        rbms,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Blocks::default();
    out.put("meta", Block::Text(json));
    for name in blocks.order {
        let b = blocks.map.remove(&name).expect("ordered block");
        out.put(name, b);
    }
    Ok(out)
}

fn model_from_blocks(blocks: &Blocks) -> Result<EncoderModel> {
    let meta: ModelMeta =
        serde_json::from_str(blocks.text("meta")?).map_err(|e| Error::Format(format!("bad meta block: {e}")))?;
    if meta.content != "encoder_model" {
        return Err(Error::Format(format!("container holds `{}`, not an encoder model", meta.content)));
    }
    let net = |name: &str| get_network(blocks, &meta.networks, name);
    let body = match meta.kind {
        EncoderKind::Ssae => EncoderBody::Autoencoder {
            encoder: net("encoder")?,
            decoder: net("decoder")?,
        },
        EncoderKind::Vae => EncoderBody::Variational {
            encoder: net("encoder")?,
            decoder: net("decoder")?,
        },
        EncoderKind::Aae => EncoderBody::Adversarial {
            encoder: net("encoder")?,
            decoder: net("decoder")?,
            discriminator: net("discriminator")?,
        },
        EncoderKind::Dbn => EncoderBody::BeliefNet {
            rbms: meta
                .rbms
                .iter()
                .enumerate()
                .map(|(l, &visible)| {
                    Ok(Rbm {
                        weights: blocks.matrix(&format!("rbm.{l}.weights"))?.clone(),
                        visible_bias: blocks.vector(&format!("rbm.{l}.visible_bias"))?,
                        hidden_bias: blocks.vector(&format!("rbm.{l}.hidden_bias"))?,
                        visible,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        },
    };
    Ok(EncoderModel {
        kind: meta.kind,
        body,
        input_dim: meta.input_dim,
        latent_dim: meta.latent_dim,
        history: history_from(blocks.matrix("history")?, meta.history_components)?,
        config: meta.config,
        seed: meta.seed,
    })
}

pub fn write_model(model: &EncoderModel, writer: impl Write) -> Result<()> {
    let mut w = BufWriter::new(writer);
    model_blocks(model)?.write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_model(reader: impl Read) -> Result<EncoderModel> {
    model_from_blocks(&Blocks::read(&mut BufReader::new(reader))?)
}

pub fn save_model(model: &EncoderModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, File::create(path)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EncoderModel> {
    read_model(File::open(path)?)
}

#[derive(Serialize, Deserialize)]
struct EmbeddingMeta {
    content: String,
    dim: usize,
    vocabulary: Vec<Token>,
}

pub fn write_embedding(table: &EmbeddingTable, writer: impl Write) -> Result<()> {
    let meta = EmbeddingMeta {
        content: "embedding_table".into(),
        dim: table.dim,
        vocabulary: table.vocabulary.clone(),
    };
    let mut blocks = Blocks::default();
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    blocks.put("meta", Block::Text(json));
    blocks.put("main", Block::Matrix(table.main.clone()));
    blocks.put("context", Block::Matrix(table.context.clone()));
    blocks.put("main_bias", Block::Matrix(row_vector(&table.main_bias)));
    blocks.put("context_bias", Block::Matrix(row_vector(&table.context_bias)));
    blocks.put("history", Block::Matrix(row_vector(&table.history)));
    let mut w = BufWriter::new(writer);
    blocks.write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_embedding(reader: impl Read) -> Result<EmbeddingTable> {
    let blocks = Blocks::read(&mut BufReader::new(reader))?;
    let meta: EmbeddingMeta =
        serde_json::from_str(blocks.text("meta")?).map_err(|e| Error::Format(format!("bad meta block: {e}")))?;
    if meta.content != "embedding_table" {
        return Err(Error::Format(format!("container holds `{}`, not an embedding table", meta.content)));
    }
    let table = EmbeddingTable {
        dim: meta.dim,
        vocabulary: meta.vocabulary,
        main: blocks.matrix("main")?.clone(),
        context: blocks.matrix("context")?.clone(),
        main_bias: blocks.vector("main_bias")?,
        context_bias: blocks.vector("context_bias")?,
        history: blocks.vector("history")?,
    };
    let v = table.vocabulary.len();
    if table.main.shape() != (v, table.dim) || table.context.shape() != (v, table.dim) {
        return Err(Error::Format("embedding blocks do not match the vocabulary".into()));
    }
    Ok(table)
}

pub fn save_embedding(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    write_embedding(table, File::create(path)?)
}

pub fn load_embedding(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    read_embedding(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{train, EncoderKind};
    use crate::numkit::{Distribution, RngStream};

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            hidden: Some(vec![5, 4]),
            latent_dim: 2,
            epochs: 3,
            pretrain_epochs: 2,
            batch_size: 8,
            discriminator_hidden: vec![4],
            seed: 9,
            ..EncoderConfig::default()
        }
    }

    fn bytes(model: &EncoderModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(model, &mut buf).unwrap();
        buf
    }

    #[test]
    fn every_kind_round_trips_bit_exactly() {
        let x = RngStream::new(1).sample(Distribution::Gaussian { mean: 0.0, sd: 1.0 }, 40, 6).unwrap();
        let v = RngStream::new(2).sample(Distribution::Gaussian { mean: 0.0, sd: 1.0 }, 10, 6).unwrap();
        for kind in EncoderKind::ALL {
            let model = train(kind, &x, Some(&v), &small_cfg()).unwrap();
            let back = read_model(bytes(&model).as_slice()).unwrap();
            assert_eq!(back, model, "{kind}");
            assert_eq!(back.encode(&x).unwrap(), model.encode(&x).unwrap());
        }
    }

    #[test]
    fn truncation_is_format_error_at_every_cut() {
        let x = RngStream::new(3).sample(Distribution::Gaussian { mean: 0.0, sd: 1.0 }, 20, 4).unwrap();
        let model = train(EncoderKind::Ssae, &x, None, &small_cfg()).unwrap();
        let buf = bytes(&model);
        for cut in (0..buf.len()).step_by(7) {
            assert!(matches!(read_model(&buf[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn version_mismatch_is_format_error() {
        let x = RngStream::new(4).sample(Distribution::Gaussian { mean: 0.0, sd: 1.0 }, 20, 4).unwrap();
        let mut buf = bytes(&train(EncoderKind::Dbn, &x, None, &small_cfg()).unwrap());
        buf[8] = 2;
        let err = read_model(buf.as_slice()).unwrap_err();
        assert!(matches!(&err, Error::Format(m) if m.contains("version 2")), "{err}");
        buf[0] = b'X';
        assert!(matches!(read_model(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn header_layout_is_documented_layout() {
        let x = RngStream::new(5).sample(Distribution::Gaussian { mean: 0.0, sd: 1.0 }, 20, 4).unwrap();
        let buf = bytes(&train(EncoderKind::Vae, &x, None, &small_cfg()).unwrap());
        assert_eq!(&buf[..8], b"DIPMODEL");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        // meta, encoder 3×(w,b), decoder 3×(w,b), history
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 14);
        assert_eq!(u16::from_le_bytes(buf[16..18].try_into().unwrap()), 4);
        assert_eq!(&buf[18..22], b"meta");
        assert_eq!(buf[22], TAG_TEXT);
    }
}
