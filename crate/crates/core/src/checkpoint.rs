//! Binary parameter checkpoints.
//!
//! Layout: magic `KGPC`, format version (u32 LE), header length (u64 LE),
//! a JSON header describing the model and matrix shapes, then every matrix
//! as raw little-endian f64 in header order. Values round-trip bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kge::{KgeKind, KgeParams};
use crate::policy::{PolicyDims, PolicyParams, PARAM_GROUPS};
use crate::tensor::Matrix;

const MAGIC: &[u8; 4] = b"KGPC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelHeader {
    Policy { dims: PolicyDims },
    Kge { kind: KgeKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    #[serde(flatten)]
    model: ModelHeader,
    /// Free-form record of how the parameters were produced.
    config: serde_json::Value,
    shapes: Vec<(String, usize, usize)>,
}

/// Parameters plus the configuration record stored alongside them.
#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Policy(PolicyParams, serde_json::Value),
    Kge(KgeParams, serde_json::Value),
}

pub fn write_checkpoint<W: Write>(out: &mut W, checkpoint: &Checkpoint) -> Result<()> {
    let (model, config, named): (ModelHeader, &serde_json::Value, Vec<(&str, &Matrix)>) = match checkpoint {
        Checkpoint::Policy(p, c) => (
            ModelHeader::Policy { dims: p.dims },
            c,
            PARAM_GROUPS.iter().copied().zip(p.groups()).collect(),
        ),
        Checkpoint::Kge(p, c) => (
            ModelHeader::Kge { kind: p.kind },
            c,
            vec![("entity", &p.entity), ("relation", &p.relation)],
        ),
    };
    let header = Header {
        model,
        config: config.clone(),
        shapes: named
            .iter()
            .map(|(n, m)| ((*n).to_owned(), m.rows(), m.cols()))
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, m) in named {
        for v in m.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;

    let mut matrices = Vec::with_capacity(header.shapes.len());
    for (_, rows, cols) in &header.shapes {
        let mut bytes = vec![0u8; rows * cols * 8];
        input.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        matrices.push(Matrix::from_vec(*rows, *cols, data));
    }

    match header.model {
        ModelHeader::Policy { dims } => {
            let mut params = PolicyParams::zeros(dims);
            let names: Vec<&str> = header.shapes.iter().map(|s| s.0.as_str()).collect();
            if names != PARAM_GROUPS {
                return Err(Error::Checkpoint("policy parameter groups do not match".into()));
            }
            for (slot, m) in params.groups_mut().into_iter().zip(matrices) {
                if (slot.rows(), slot.cols()) != (m.rows(), m.cols()) {
                    return Err(Error::Checkpoint("matrix shape disagrees with dims".into()));
                }
                *slot = m;
            }
            Ok(Checkpoint::Policy(params, header.config))
        }
        ModelHeader::Kge { kind } => {
            let [entity, relation]: [Matrix; 2] = matrices
                .try_into()
                .map_err(|_| Error::Checkpoint("embedding checkpoint needs 2 matrices".into()))?;
            Ok(Checkpoint::Kge(KgeParams { kind, entity, relation }, header.config))
        }
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut out, checkpoint)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
