//! Binary forest container.
//!
//! Layout (little endian): magic, `u32` format version, length-prefixed JSON
//! header, `u64` tree count, then per tree a `u64` node count followed by the
//! nodes. A leaf is tag `0` and its value bits; a split is tag `1`, feature
//! `u32`, threshold bits, left `u32`, right `u32`. Floats are stored as raw
//! bits so a round trip reproduces predictions exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::forest::{ForestEstimator, ForestKind};
use super::tree::{DecisionTree, Node};
use super::TreeConfig;
use crate::error::{Error, Result};

pub const FOREST_MAGIC: &[u8; 8] = b"AODFRST\0";
pub const FOREST_FORMAT_VERSION: u32 = 1;

const MAX_BLOCK: u64 = 1 << 32;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ForestKind,
    n_features: usize,
    bootstrap: bool,
    seed: u64,
    config: TreeConfig,
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

/// Length-prefixed byte block.
pub(crate) fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    write_u64(w, bytes.len() as u64)?;
    w.write_all(bytes)?;
    Ok(())
}

pub(crate) fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let len = read_u64(r)?;
    if len > MAX_BLOCK {
        return Err(Error::Format(format!("block length {len} exceeds limit")));
    }
    let mut buf = Vec::new();
    r.take(len).read_to_end(&mut buf)?;
    if buf.len() as u64 != len {
        return Err(Error::Format("truncated block".into()));
    }
    Ok(buf)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in 32 bits")))
}

pub fn write_forest<W: Write>(w: &mut W, forest: &ForestEstimator) -> Result<()> {
    w.write_all(FOREST_MAGIC)?;
    write_u32(w, FOREST_FORMAT_VERSION)?;
    let header = Header {
        kind: forest.kind,
        n_features: forest.n_features,
        bootstrap: forest.bootstrap,
        seed: forest.seed,
        config: forest.config,
    };
    write_bytes(w, &serde_json::to_vec(&header)?)?;
    write_u64(w, forest.trees.len() as u64)?;
    for tree in &forest.trees {
        let nodes = tree.nodes();
        write_u64(w, nodes.len() as u64)?;
        for node in nodes {
            match *node {
                Node::Leaf { value } => {
                    w.write_all(&[0])?;
                    write_u64(w, value.to_bits())?;
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    w.write_all(&[1])?;
                    write_u32(w, to_u32(feature, "feature index")?)?;
                    write_u64(w, threshold.to_bits())?;
                    write_u32(w, to_u32(left, "node index")?)?;
                    write_u32(w, to_u32(right, "node index")?)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_forest<R: Read>(r: &mut R) -> Result<ForestEstimator> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FOREST_MAGIC {
        return Err(Error::Format("not a forest container".into()));
    }
    let version = read_u32(r)?;
    if version != FOREST_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "forest format version {version} unsupported (expected {FOREST_FORMAT_VERSION})"
        )));
    }
    let header: Header = serde_json::from_slice(&read_bytes(r)?)?;
    header.config.validate()?;
    let n_trees = read_u64(r)?;
    if n_trees == 0 || n_trees > MAX_BLOCK {
        return Err(Error::Format(format!("implausible tree count {n_trees}")));
    }
    let mut trees = Vec::with_capacity(n_trees.min(1 << 16) as usize);
    for _ in 0..n_trees {
        let n_nodes = read_u64(r)?;
        if n_nodes == 0 || n_nodes > MAX_BLOCK {
            return Err(Error::Format(format!("implausible node count {n_nodes}")));
        }
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20) as usize);
        for _ in 0..n_nodes {
            let node = match read_u8(r)? {
                0 => Node::Leaf {
                    value: f64::from_bits(read_u64(r)?),
                },
                1 => Node::Split {
                    feature: read_u32(r)? as usize,
                    threshold: f64::from_bits(read_u64(r)?),
                    left: read_u32(r)? as usize,
                    right: read_u32(r)? as usize,
                },
                t => return Err(Error::Format(format!("unknown node tag {t}"))),
            };
            nodes.push(node);
        }
        trees.push(DecisionTree::from_nodes(nodes, header.n_features)?);
    }
    Ok(ForestEstimator {
        kind: header.kind,
        config: header.config,
        bootstrap: header.bootstrap,
        seed: header.seed,
        trees,
        n_features: header.n_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{fit_forest, MaxFeatures};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn forest(kind: ForestKind) -> (ForestEstimator, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((80, 3), |_| rng.random::<f64>());
        let y: Vec<f64> = x.rows().into_iter().map(|r| r[0].sin() / 3.0 + r[1] * r[2]).collect();
        let cfg = TreeConfig::default().with_max_features(MaxFeatures::Sqrt);
        (fit_forest(&x, &y, kind, 6, &cfg, 5).unwrap(), x)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let (f, x) = forest(kind);
            let mut buf = Vec::new();
            write_forest(&mut buf, &f).unwrap();
            let g = read_forest(&mut buf.as_slice()).unwrap();
            assert_eq!(f, g);
            let a = f.predict(&x).unwrap();
            let b = g.predict(&x).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn rejects_corruption() {
        let (f, _) = forest(ForestKind::RandomForest);
        let mut buf = Vec::new();
        write_forest(&mut buf, &f).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_forest(&mut bad_magic.as_slice()).is_err());

        let mut bad_version = buf.clone();
        bad_version[8] = 99;
        assert!(read_forest(&mut bad_version.as_slice()).is_err());

        let truncated = &buf[..buf.len() - 5];
        assert!(read_forest(&mut &truncated[..]).is_err());
    }
}
