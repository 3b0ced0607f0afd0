//! Checkpoint files: a `key = value` text header terminated by an `end` line, followed by a
//! little-endian `f64` blob holding every declared tensor in declaration order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::classifier::{CnnArch, CnnModel};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureStats, NUM_FEATURES};
use crate::fin::{FinModel, FinSet};
use crate::nn::{Module, Tensor};
use crate::scalar::Real;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "semg-fin checkpoint";
const END: &[u8] = b"\nend\n";

/// What a checkpoint holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    Fin(FeatureKind),
    /// Classifier trained on pooled subjects.
    CnnI,
    /// Classifier trained on the pre-training split, optionally tuned per subject.
    CnnII,
    /// Four imitation networks plus a classifier, fine-tuned together.
    Joint,
}

impl CheckpointKind {
    pub fn name(self) -> String {
        match self {
            CheckpointKind::Fin(k) => format!("fin-{k}"),
            CheckpointKind::CnnI => "cnn-I".into(),
            CheckpointKind::CnnII => "cnn-II".into(),
            CheckpointKind::Joint => "joint".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cnn-I" => Ok(CheckpointKind::CnnI),
            "cnn-II" => Ok(CheckpointKind::CnnII),
            "joint" => Ok(CheckpointKind::Joint),
            _ => match s.strip_prefix("fin-") {
                Some(f) => Ok(CheckpointKind::Fin(FeatureKind::parse(f)?)),
                None => Err(Error::Checkpoint(format!("unknown kind {s:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Format-level checkpoint: header fields plus named tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub arch: String,
    pub seed: u64,
    /// Training metadata and feature statistics; written in key order.
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(kind: CheckpointKind, arch: String, seed: u64) -> Self {
        Checkpoint {
            kind,
            arch,
            seed,
            meta: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = String::new();
        let _ = writeln!(h, "{MAGIC}");
        let _ = writeln!(h, "format_version = {FORMAT_VERSION}");
        let _ = writeln!(h, "kind = {}", self.kind.name());
        let _ = writeln!(h, "arch = {}", self.arch);
        let _ = writeln!(h, "seed = {}", self.seed);
        for (k, v) in &self.meta {
            let _ = writeln!(h, "meta.{k} = {v}");
        }
        let mut total = 0;
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(ToString::to_string).collect();
            let _ = writeln!(h, "tensor = {} {}", t.name, dims.join("x"));
            total += t.data.len();
        }
        let _ = write!(h, "values = {total}");
        let mut out = h.into_bytes();
        out.extend_from_slice(END);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .windows(END.len())
            .position(|w| w == END)
            .ok_or_else(|| bad("header terminator not found"))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8"))?;
        let blob = &bytes[split + END.len()..];
        let mut lines = header.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("not a checkpoint file"));
        }
        let mut version = None;
        let mut kind = None;
        let mut arch = None;
        let mut seed = None;
        let mut values = None;
        let mut meta = BTreeMap::new();
        let mut decls: Vec<(String, Vec<usize>)> = Vec::new();
        for line in lines {
            let (k, v) = line.split_once(" = ").ok_or_else(|| bad(format!("malformed header line {line:?}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("{k}: bad number {v:?}")));
            match k {
                "format_version" => version = Some(num(v)?),
                "kind" => kind = Some(v.to_string()),
                "arch" => arch = Some(v.to_string()),
                "seed" => seed = Some(num(v)?),
                "values" => values = Some(num(v)? as usize),
                "tensor" => {
                    let (name, dims) = v.split_once(' ').ok_or_else(|| bad(format!("malformed tensor line {v:?}")))?;
                    let shape = dims
                        .split('x')
                        .map(|d| d.parse::<usize>().map_err(|_| bad(format!("tensor {name}: bad shape {dims:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    decls.push((name.to_string(), shape));
                }
                _ => match k.strip_prefix("meta.") {
                    Some(m) => {
                        meta.insert(m.to_string(), v.to_string());
                    }
                    None => return Err(bad(format!("unknown header key {k:?}"))),
                },
            }
        }
        let version = version.ok_or_else(|| bad("missing format_version"))?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::CheckpointMismatch {
                what: "format_version",
                expected: FORMAT_VERSION.to_string(),
                found: version.to_string(),
            });
        }
        let kind = CheckpointKind::parse(&kind.ok_or_else(|| bad("missing kind"))?)?;
        let values = values.ok_or_else(|| bad("missing values count"))?;
        let declared: usize = decls.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if declared != values {
            return Err(bad(format!("tensor shapes hold {declared} values, header declares {values}")));
        }
        if blob.len() != values * 8 {
            return Err(bad(format!(
                "truncated blob: expected {} bytes for {values} values, found {}",
                values * 8,
                blob.len()
            )));
        }
        let mut at = 0;
        let tensors = decls
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = blob[at * 8..(at + n) * 8]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect();
                at += n;
                NamedTensor { name, shape, data }
            })
            .collect();
        Ok(Checkpoint {
            kind,
            arch: arch.ok_or_else(|| bad("missing arch"))?,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: CheckpointKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::CheckpointMismatch {
                what: "kind",
                expected: kind.name(),
                found: self.kind.name(),
            });
        }
        Ok(())
    }

    pub fn expect_arch(&self, arch: &str) -> Result<()> {
        if self.arch != arch {
            return Err(Error::CheckpointMismatch {
                what: "architecture",
                expected: arch.to_string(),
                found: self.arch.clone(),
            });
        }
        Ok(())
    }

    fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::CheckpointMismatch {
                what: "architecture",
                expected: format!("tensor {name}"),
                found: "nothing".into(),
            })
    }

    fn push<T: Real>(&mut self, name: String, t: &Tensor<T>) {
        self.tensors.push(NamedTensor {
            name,
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
        });
    }

    fn push_vec<T: Real>(&mut self, name: String, v: &[T]) {
        self.tensors.push(NamedTensor {
            name,
            shape: vec![v.len()],
            data: v.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect(),
        });
    }

    fn read_into<T: Real>(&self, name: &str, dst: &mut [T], shape: &[usize]) -> Result<()> {
        let t = self.tensor(name)?;
        if t.shape != shape {
            return Err(Error::CheckpointMismatch {
                what: "architecture",
                expected: format!("{name} {shape:?}"),
                found: format!("{name} {:?}", t.shape),
            });
        }
        for (d, s) in dst.iter_mut().zip(&t.data) {
            *d = T::lit(*s);
        }
        Ok(())
    }

    /// Append every parameter with its optimizer state under `prefix`.
    pub fn push_module<T: Real, M: Module<T> + ?Sized>(&mut self, prefix: &str, m: &M) {
        for (name, p) in m.params() {
            self.push(format!("{prefix}{name}"), &p.value);
            self.push(format!("{prefix}{name}#adam_m"), &p.adam_m);
            self.push(format!("{prefix}{name}#adam_v"), &p.adam_v);
            self.push_vec(format!("{prefix}{name}#adam_t"), &[T::lit(p.step_count as f64)]);
        }
    }

    /// Restore every parameter of `m`; shapes must match exactly.
    pub fn read_module<T: Real, M: Module<T> + ?Sized>(&self, prefix: &str, m: &mut M) -> Result<()> {
        for (name, p) in m.params_mut() {
            let shape = p.value.shape().to_vec();
            self.read_into(&format!("{prefix}{name}"), p.value.data_mut(), &shape)?;
            self.read_into(&format!("{prefix}{name}#adam_m"), p.adam_m.data_mut(), &shape)?;
            self.read_into(&format!("{prefix}{name}#adam_v"), p.adam_v.data_mut(), &shape)?;
            let mut t = [T::zero()];
            self.read_into(&format!("{prefix}{name}#adam_t"), &mut t, &[1])?;
            p.step_count = t[0].to_u64().ok_or_else(|| bad(format!("{name}: bad step count")))?;
            p.zero_grad();
        }
        Ok(())
    }

    pub fn set_stats(&mut self, stats: &FeatureStats) {
        let fmt = |v: &[f64; NUM_FEATURES]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        self.meta.insert("stats.mean".into(), fmt(&stats.mean));
        self.meta.insert("stats.std".into(), fmt(&stats.std));
    }

    pub fn stats(&self) -> Result<FeatureStats> {
        let get = |k: &str| -> Result<[f64; NUM_FEATURES]> {
            let v = self.meta.get(k).ok_or_else(|| bad(format!("missing meta.{k}")))?;
            let xs: Vec<f64> = v
                .split(',')
                .map(|x| x.parse::<f64>().map_err(|_| bad(format!("meta.{k}: bad value {x:?}"))))
                .collect::<Result<_>>()?;
            xs.try_into().map_err(|_| bad(format!("meta.{k}: expected {NUM_FEATURES} values")))
        };
        Ok(FeatureStats {
            mean: get("stats.mean")?,
            std: get("stats.std")?,
        })
    }
}

fn push_cnn<T: Real>(ck: &mut Checkpoint, prefix: &str, m: &CnnModel<T>) {
    ck.push_module(prefix, m);
    for (i, bn) in m.norms.iter().enumerate() {
        ck.push_vec(format!("{prefix}block{i}.bn.running_mean"), &bn.running_mean);
        ck.push_vec(format!("{prefix}block{i}.bn.running_var"), &bn.running_var);
        ck.push_vec(format!("{prefix}block{i}.bn.initialized"), &[T::lit(if bn.initialized { 1.0 } else { 0.0 })]);
    }
}

fn read_cnn<T: Real>(ck: &Checkpoint, prefix: &str, m: &mut CnnModel<T>) -> Result<()> {
    ck.read_module(prefix, m)?;
    for (i, bn) in m.norms.iter_mut().enumerate() {
        let c = bn.running_mean.len();
        ck.read_into(&format!("{prefix}block{i}.bn.running_mean"), &mut bn.running_mean, &[c])?;
        ck.read_into(&format!("{prefix}block{i}.bn.running_var"), &mut bn.running_var, &[c])?;
        let mut flag = [T::zero()];
        ck.read_into(&format!("{prefix}block{i}.bn.initialized"), &mut flag, &[1])?;
        bn.initialized = flag[0] != T::zero();
    }
    Ok(())
}

pub fn fin_checkpoint<T: Real>(m: &FinModel<T>, stats: &FeatureStats, seed: u64) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::Fin(m.feature), m.descriptor(), seed);
    ck.set_stats(stats);
    ck.push_module("", m);
    ck
}

/// Restore into `m`, whose architecture and feature must match the file.
pub fn restore_fin<T: Real>(ck: &Checkpoint, m: &mut FinModel<T>) -> Result<FeatureStats> {
    ck.expect_kind(CheckpointKind::Fin(m.feature))?;
    ck.expect_arch(&m.descriptor())?;
    ck.read_module("", m)?;
    ck.stats()
}

pub fn cnn_checkpoint<T: Real>(kind: CheckpointKind, m: &CnnModel<T>, stats: &FeatureStats, seed: u64) -> Checkpoint {
    let mut ck = Checkpoint::new(kind, m.arch.descriptor(), seed);
    ck.set_stats(stats);
    push_cnn(&mut ck, "", m);
    ck
}

pub fn restore_cnn<T: Real>(ck: &Checkpoint, kind: CheckpointKind, m: &mut CnnModel<T>) -> Result<FeatureStats> {
    ck.expect_kind(kind)?;
    ck.expect_arch(&m.arch.descriptor())?;
    read_cnn(ck, "", m)?;
    ck.stats()
}

fn joint_arch<T: Real>(fins: &FinSet<T>, cnn: &CnnModel<T>) -> String {
    format!("{}|{}", fins[0].descriptor(), cnn.arch.descriptor())
}

pub fn joint_checkpoint<T: Real>(fins: &FinSet<T>, cnn: &CnnModel<T>, stats: &FeatureStats, seed: u64) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::Joint, joint_arch(fins, cnn), seed);
    ck.set_stats(stats);
    for m in fins {
        ck.push_module(&format!("fin.{}.", m.feature), m);
    }
    push_cnn(&mut ck, "cnn.", cnn);
    ck
}

pub fn restore_joint<T: Real>(ck: &Checkpoint, fins: &mut FinSet<T>, cnn: &mut CnnModel<T>) -> Result<FeatureStats> {
    ck.expect_kind(CheckpointKind::Joint)?;
    ck.expect_arch(&joint_arch(fins, cnn))?;
    for m in fins.iter_mut() {
        let prefix = format!("fin.{}.", m.feature);
        ck.read_module(&prefix, m)?;
    }
    read_cnn(ck, "cnn.", cnn)?;
    ck.stats()
}

/// Standard-size networks loaded from `fin-<FEATURE>.ckpt` files in `dir`.
pub fn load_fin_set(dir: &Path) -> Result<(FinSet<f64>, FeatureStats)> {
    let mut stats = None;
    let mut load = |kind: FeatureKind| -> Result<FinModel<f64>> {
        let mut m = FinModel::zeros(kind);
        let ck = Checkpoint::load(&dir.join(fin_file_name(kind)))?;
        let s = restore_fin(&ck, &mut m)?;
        if stats.as_ref().is_some_and(|p: &FeatureStats| *p != s) {
            return Err(bad(format!("{} was trained with different feature statistics", fin_file_name(kind))));
        }
        stats = Some(s);
        Ok(m)
    };
    let set = [load(FeatureKind::Ent)?, load(FeatureKind::Rms)?, load(FeatureKind::Var)?, load(FeatureKind::Ssi)?];
    Ok((set, stats.expect("four networks loaded")))
}

pub fn fin_file_name(kind: FeatureKind) -> String {
    format!("fin-{kind}.ckpt")
}

/// A zero classifier of the given shape, ready to be restored into.
pub fn empty_cnn(arch: &CnnArch) -> Result<CnnModel<f64>> {
    use rand::SeedableRng;
    CnnModel::new(arch.clone(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stats() -> FeatureStats {
        FeatureStats {
            mean: [0.1, 1.0 / 3.0, 2.5e-7, 17.0],
            std: [1.0, 0.2, 3e-9, 1e12],
        }
    }

    #[test]
    fn fin_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = FinModel::<f64>::with_arch(FeatureKind::Var, 8, 3, 2, &mut rng);
        for (_, p) in m.params_mut() {
            p.step_count = 7;
            p.adam_m.fill(0.25);
        }
        let bytes = fin_checkpoint(&m, &stats(), 9).to_bytes();
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        let mut back = FinModel::<f64>::with_arch(FeatureKind::Var, 8, 3, 2, &mut ChaCha8Rng::seed_from_u64(4));
        let s = restore_fin(&ck, &mut back).unwrap();
        assert_eq!(s, stats());
        assert_eq!(back, m);
        assert_eq!(fin_checkpoint(&back, &s, 9).to_bytes(), bytes);
    }

    #[test]
    fn mismatches_are_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = FinModel::<f64>::with_arch(FeatureKind::Var, 8, 3, 2, &mut rng);
        let bytes = fin_checkpoint(&m, &stats(), 9).to_bytes();

        let mut other = FinModel::<f64>::with_arch(FeatureKind::Rms, 8, 3, 2, &mut rng);
        let ck = Checkpoint::from_bytes(&bytes).unwrap();
        assert!(matches!(restore_fin(&ck, &mut other), Err(Error::CheckpointMismatch { what: "kind", .. })));

        let mut bigger = FinModel::<f64>::with_arch(FeatureKind::Var, 8, 4, 2, &mut rng);
        assert!(matches!(
            restore_fin(&ck, &mut bigger),
            Err(Error::CheckpointMismatch { what: "architecture", .. })
        ));

        let truncated = &bytes[..bytes.len() - 3];
        let err = Checkpoint::from_bytes(truncated).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let text = String::from_utf8_lossy(&bytes).replacen("format_version = 1", "format_version = 2", 1);
        let mut v2 = text.as_bytes()[..text.find("\nend\n").unwrap() + 5].to_vec();
        v2.extend_from_slice(&bytes[bytes.windows(5).position(|w| w == END).unwrap() + 5..]);
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(Error::CheckpointMismatch { what: "format_version", .. })
        ));
        assert!(Checkpoint::from_bytes(b"garbage").is_err());
    }

    #[test]
    fn cnn_and_joint_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let arch = CnnArch {
            widths: [2, 3, 4],
            ..CnnArch::default()
        };
        let mut cnn = CnnModel::<f64>::new(arch.clone(), &mut rng).unwrap();
        cnn.norms[1].running_mean[2] = 0.5;
        cnn.norms[1].initialized = true;
        let ck = cnn_checkpoint(CheckpointKind::CnnII, &cnn, &stats(), 1);
        let bytes = ck.to_bytes();
        let mut back = empty_cnn(&arch).unwrap();
        restore_cnn(&Checkpoint::from_bytes(&bytes).unwrap(), CheckpointKind::CnnII, &mut back).unwrap();
        assert_eq!(back, cnn);
        assert!(restore_cnn(&ck, CheckpointKind::CnnI, &mut back).is_err());

        let fins: FinSet<f64> = FeatureKind::ALL.map(|k| FinModel::with_arch(k, 4, 2, 1, &mut rng));
        let jb = joint_checkpoint(&fins, &cnn, &stats(), 2).to_bytes();
        let mut fins2: FinSet<f64> = FeatureKind::ALL.map(|k| FinModel::with_arch(k, 4, 2, 1, &mut rng));
        let mut cnn2 = empty_cnn(&arch).unwrap();
        restore_joint(&Checkpoint::from_bytes(&jb).unwrap(), &mut fins2, &mut cnn2).unwrap();
        assert_eq!(fins2, fins);
        assert_eq!(cnn2, cnn);
        assert_eq!(joint_checkpoint(&fins2, &cnn2, &stats(), 2).to_bytes(), jb);
    }
}
