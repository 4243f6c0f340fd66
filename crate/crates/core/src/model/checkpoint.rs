//! Checkpoint file format.
//!
//! Binary layout (little-endian throughout):
//!
//! ```text
//! magic "XVCK" | u32 version=1
//! arch:  u32 obs_dim | u32 trunk_len | trunk widths (u32 each)
//!        | u32 shared_depth | u32 main_head_len | widths
//!        | u32 wcvl_head_len | widths | u8 activation_id (0 = ReLU)
//! meta:  u8 stage (0 main, 1 wcvl) | u32 epoch | u64 seed
//!        | u32 loss_history_len | f64 × len
//! tensors, declaration order, each as u32 rows | u32 cols | f64 × rows·cols
//!        (biases are column vectors: rows × 1)
//! ```

use super::{ArchConfig, EncoderParams, Layer, ModelError};
use crate::numerics::Matrix;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"XVCK";
const VERSION: u32 = 1;
const ACTIVATION_RELU: u8 = 0;

/// Which stage produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Main,
    Wcvl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub stage: StageTag,
    pub epoch: u32,
    pub seed: u64,
    /// Mean total loss per completed epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchConfig,
    pub meta: CheckpointMeta,
    pub params: EncoderParams,
}

fn write_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_widths(w: &mut impl Write, widths: &[usize]) -> std::io::Result<()> {
    write_u32(w, widths.len() as u32)?;
    for &x in widths {
        write_u32(w, x as u32)?;
    }
    Ok(())
}

fn write_tensor(w: &mut impl Write, rows: usize, cols: usize, data: &[f64]) -> std::io::Result<()> {
    write_u32(w, rows as u32)?;
    write_u32(w, cols as u32)?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_layers(w: &mut impl Write, layers: &[Layer]) -> std::io::Result<()> {
    for l in layers {
        write_tensor(w, l.weight.rows(), l.weight.cols(), l.weight.data())?;
        write_tensor(w, l.bias.len(), 1, &l.bias)?;
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), ModelError> {
    ckpt.arch.validate()?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;

    write_u32(&mut w, ckpt.arch.obs_dim as u32)?;
    write_widths(&mut w, &ckpt.arch.trunk_layers)?;
    write_u32(&mut w, ckpt.arch.shared_depth as u32)?;
    write_widths(&mut w, &ckpt.arch.main_head_layers)?;
    write_widths(&mut w, &ckpt.arch.wcvl_head_layers)?;
    w.write_all(&[ACTIVATION_RELU])?;

    let stage = match ckpt.meta.stage {
        StageTag::Main => 0u8,
        StageTag::Wcvl => 1u8,
    };
    w.write_all(&[stage])?;
    write_u32(&mut w, ckpt.meta.epoch)?;
    w.write_all(&ckpt.meta.seed.to_le_bytes())?;
    write_u32(&mut w, ckpt.meta.loss_history.len() as u32)?;
    for v in &ckpt.meta.loss_history {
        w.write_all(&v.to_le_bytes())?;
    }

    write_layers(&mut w, &ckpt.params.trunk)?;
    write_layers(&mut w, &ckpt.params.wcvl_trunk_tail)?;
    write_layers(&mut w, &ckpt.params.main_head)?;
    write_layers(&mut w, std::slice::from_ref(&ckpt.params.classifier))?;
    write_layers(&mut w, &ckpt.params.wcvl_head)?;
    w.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, buf: &mut [u8], what: &str) -> Result<(), ModelError> {
        self.inner
            .read_exact(buf)
            .map_err(|_| ModelError::CorruptCheckpoint(format!("truncated while reading {what}")))
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelError> {
        let mut b = [0u8; 4];
        self.bytes(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ModelError> {
        let mut b = [0u8; 8];
        self.bytes(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn u8(&mut self, what: &str) -> Result<u8, ModelError> {
        let mut b = [0u8; 1];
        self.bytes(&mut b, what)?;
        Ok(b[0])
    }

    fn f64(&mut self, what: &str) -> Result<f64, ModelError> {
        let mut b = [0u8; 8];
        self.bytes(&mut b, what)?;
        let v = f64::from_le_bytes(b);
        if !v.is_finite() {
            return Err(ModelError::CorruptCheckpoint(format!(
                "non-finite value in {what}"
            )));
        }
        Ok(v)
    }

    fn widths(&mut self, what: &str) -> Result<Vec<usize>, ModelError> {
        let n = self.u32(what)? as usize;
        if n > 1 << 16 {
            return Err(ModelError::CorruptCheckpoint(format!(
                "implausible layer count {n} in {what}"
            )));
        }
        (0..n).map(|_| Ok(self.u32(what)? as usize)).collect()
    }

    fn tensor(&mut self, what: &str) -> Result<Matrix, ModelError> {
        let rows = self.u32(what)? as usize;
        let cols = self.u32(what)? as usize;
        if rows.saturating_mul(cols) > 1 << 28 {
            return Err(ModelError::CorruptCheckpoint(format!(
                "implausible tensor shape {rows}x{cols} in {what}"
            )));
        }
        let mut data = vec![0.0; rows * cols];
        for v in data.iter_mut() {
            *v = self.f64(what)?;
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn layers(&mut self, count: usize, what: &str) -> Result<Vec<Layer>, ModelError> {
        (0..count)
            .map(|i| {
                let w = self.tensor(&format!("{what} layer {i} weight"))?;
                let b = self.tensor(&format!("{what} layer {i} bias"))?;
                if b.cols() != 1 || b.rows() != w.rows() {
                    return Err(ModelError::CorruptCheckpoint(format!(
                        "bias shape {}x{} does not match weight rows {} in {what}",
                        b.rows(),
                        b.cols(),
                        w.rows()
                    )));
                }
                Ok(Layer {
                    bias: b.data().to_vec(),
                    weight: w,
                })
            })
            .collect()
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let mut r = Reader {
        inner: BufReader::new(std::fs::File::open(path)?),
    };
    let mut magic = [0u8; 4];
    r.bytes(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(ModelError::CorruptCheckpoint(format!(
            "bad magic {magic:?}, not a checkpoint file"
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(ModelError::FormatVersionMismatch {
            found: version,
            expected: VERSION,
        });
    }

    let obs_dim = r.u32("obs_dim")? as usize;
    let trunk_layers = r.widths("trunk widths")?;
    let shared_depth = r.u32("shared_depth")? as usize;
    let main_head_layers = r.widths("main head widths")?;
    let wcvl_head_layers = r.widths("cross-view head widths")?;
    let activation = r.u8("activation id")?;
    if activation != ACTIVATION_RELU {
        return Err(ModelError::CorruptCheckpoint(format!(
            "unknown activation id {activation}"
        )));
    }
    let arch = ArchConfig {
        obs_dim,
        trunk_layers,
        shared_depth,
        main_head_layers,
        wcvl_head_layers,
    };
    arch.validate().map_err(|e| {
        ModelError::CorruptCheckpoint(format!("stored architecture invalid: {e}"))
    })?;

    let stage = match r.u8("stage tag")? {
        0 => StageTag::Main,
        1 => StageTag::Wcvl,
        other => {
            return Err(ModelError::CorruptCheckpoint(format!(
                "unknown stage tag {other}"
            )))
        }
    };
    let epoch = r.u32("epoch")?;
    let seed = r.u64("seed")?;
    let hist_len = r.u32("loss history length")? as usize;
    if hist_len > 1 << 24 {
        return Err(ModelError::CorruptCheckpoint(
            "implausible loss history length".into(),
        ));
    }
    let loss_history = (0..hist_len)
        .map(|i| r.f64(&format!("loss history entry {i}")))
        .collect::<Result<Vec<_>, _>>()?;

    let trunk = r.layers(arch.trunk_layers.len(), "trunk")?;
    let wcvl_trunk_tail = r.layers(arch.trunk_layers.len() - arch.shared_depth, "cross-view tail")?;
    let main_head = r.layers(arch.main_head_layers.len(), "main head")?;
    let classifier = r.layers(1, "classifier")?.pop().expect("one layer");
    let wcvl_head = r.layers(arch.wcvl_head_layers.len(), "cross-view head")?;

    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(ModelError::CorruptCheckpoint(
            "trailing bytes after final tensor".into(),
        ));
    }

    let params = EncoderParams {
        trunk,
        wcvl_trunk_tail,
        main_head,
        classifier,
        wcvl_head,
    };
    let ckpt = Checkpoint {
        arch,
        meta: CheckpointMeta {
            stage,
            epoch,
            seed,
            loss_history,
        },
        params,
    };
    validate_shapes(&ckpt)?;
    Ok(ckpt)
}

fn validate_shapes(ckpt: &Checkpoint) -> Result<(), ModelError> {
    let arch = &ckpt.arch;
    let p = &ckpt.params;
    let widths: Vec<usize> = p.trunk.iter().map(Layer::out_dim).collect();
    if widths != arch.trunk_layers || p.obs_dim() != arch.obs_dim {
        return Err(ModelError::CorruptCheckpoint(
            "trunk tensors do not match declared architecture".into(),
        ));
    }
    let head_widths: Vec<usize> = p.main_head.iter().map(Layer::out_dim).collect();
    if head_widths != arch.main_head_layers {
        return Err(ModelError::CorruptCheckpoint(
            "main head tensors do not match declared architecture".into(),
        ));
    }
    let wcvl_widths: Vec<usize> = p.wcvl_head.iter().map(Layer::out_dim).collect();
    if wcvl_widths != arch.wcvl_head_layers {
        return Err(ModelError::CorruptCheckpoint(
            "cross-view head tensors do not match declared architecture".into(),
        ));
    }
    if p.classifier.in_dim() != arch.embedding_dim() {
        return Err(ModelError::CorruptCheckpoint(
            "classifier input does not match embedding dimension".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{init_params, ArchConfig};
    use super::*;
    use crate::numerics::SeededRng;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("xview-ckpt-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample_checkpoint() -> Checkpoint {
        let arch = ArchConfig {
            obs_dim: 5,
            trunk_layers: vec![6, 7],
            shared_depth: 1,
            main_head_layers: vec![6, 4],
            wcvl_head_layers: vec![6, 4],
        };
        let params = init_params(&arch, 9, &mut SeededRng::new(33)).unwrap();
        Checkpoint {
            arch,
            meta: CheckpointMeta {
                stage: StageTag::Main,
                epoch: 12,
                seed: 99,
                loss_history: vec![1.5, 1.2, 0.9],
            },
            params,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ckpt = sample_checkpoint();
        let path = tmpfile("roundtrip.xvck");
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt, back);
    }

    #[test]
    fn save_is_byte_stable() {
        let ckpt = sample_checkpoint();
        let a = tmpfile("stable-a.xvck");
        let b = tmpfile("stable-b.xvck");
        save_checkpoint(&ckpt, &a).unwrap();
        save_checkpoint(&ckpt, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let ckpt = sample_checkpoint();
        let path = tmpfile("version.xvck");
        save_checkpoint(&ckpt, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&3u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ModelError::FormatVersionMismatch { found: 3, expected: 1 })
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let ckpt = sample_checkpoint();
        let path = tmpfile("truncated.xvck");
        save_checkpoint(&ckpt, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(ModelError::CorruptCheckpoint(_))
        ));
    }
}
