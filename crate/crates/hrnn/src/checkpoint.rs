//! Checkpoint directories.
//!
//! A trained model is saved as a directory holding one file per node plus
//! `manifest.json` (model tag, training spec, provenance and the SHA-256 of
//! every node file).
//!
//! Recurrent nodes use a little-endian binary file:
//!
//! ```text
//! magic      8 bytes   "HRNNGRU1"
//! hidden     u32
//! input_dim  u32
//! rho        u32
//! tag        u16 length + UTF-8
//! node id    u16 length + UTF-8
//! neighbors  u32 count, then u16 length + UTF-8 each
//! n_params   u64
//! params     n_params x f64
//! ```
//!
//! `params` is the flat GRU vector: for each gate (update, reset, candidate)
//! `U` (input_dim x hidden), `W` (hidden x hidden) and `b` (hidden), then the
//! readout weights (hidden) and the readout bias.
//!
//! Baseline nodes are stored as JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hrnn_core::baselines::{BaselineBundle, BaselineModel, BaselineSpec};
use hrnn_core::forecast::ModelTag;
use hrnn_core::gru::GruParams;
use hrnn_core::models::{ModelBundle, NodeModel, Provenance, SkippedNode, TrainSpec};
use hrnn_core::NodeId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, RunError};

const MAGIC: &[u8; 8] = b"HRNNGRU1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_gru(tag: ModelTag, rho: usize, node: &str, model: &NodeModel) -> Vec<u8> {
    let p = &model.params;
    let mut out = Vec::with_capacity(64 + 8 * p.flatten().len());
    out.extend_from_slice(MAGIC);
    for v in [p.hidden(), p.input_dim(), rho] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let put_str = |out: &mut Vec<u8>, s: &str| {
        out.extend_from_slice(&(s.len() as u16).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    };
    put_str(&mut out, tag.as_str());
    put_str(&mut out, node);
    out.extend_from_slice(&(model.neighbors.len() as u32).to_le_bytes());
    for n in &model.neighbors {
        put_str(&mut out, n.as_str());
    }
    out.extend_from_slice(&(p.flatten().len() as u64).to_le_bytes());
    for v in p.flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decoded node checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCheckpoint {
    pub tag: ModelTag,
    pub rho: usize,
    pub node: String,
    pub model: NodeModel,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        let s = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| RunError::Data("truncated checkpoint".into()))?;
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| RunError::Data("checkpoint string is not UTF-8".into()))
    }
}

pub fn decode_gru(bytes: &[u8]) -> Result<GruCheckpoint> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(8)? != MAGIC {
        return Err(RunError::Data("not a GRU checkpoint".into()));
    }
    let hidden = c.u32()? as usize;
    let input_dim = c.u32()? as usize;
    let rho = c.u32()? as usize;
    let tag: ModelTag = c.str()?.parse()?;
    let node = c.str()?;
    let n_neighbors = c.u32()? as usize;
    let neighbors = (0..n_neighbors)
        .map(|_| c.str().map(|s| NodeId::new(&s)))
        .collect::<Result<Vec<_>>>()?;
    let n = c.u64()? as usize;
    let data = (0..n)
        .map(|_| c.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))))
        .collect::<Result<Vec<_>>>()?;
    if c.at != bytes.len() {
        return Err(RunError::Data("trailing bytes in checkpoint".into()));
    }
    let params = GruParams::from_flat(hidden, input_dim, data)?;
    Ok(GruCheckpoint {
        tag,
        rho,
        node,
        model: NodeModel { params, neighbors },
    })
}

/// File name for the `i`-th node: an ordinal plus a filesystem-safe id.
fn node_file(i: usize, node: &str, ext: &str) -> String {
    let safe: String = node
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .take(60)
        .collect();
    format!("{i:05}-{safe}.{ext}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurrentManifest {
    pub tag: ModelTag,
    pub label: String,
    pub spec: TrainSpec,
    pub provenance: Provenance,
    pub files: BTreeMap<NodeId, FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineManifest {
    pub tag: ModelTag,
    pub label: String,
    pub spec: BaselineSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedNode>,
    pub files: BTreeMap<NodeId, FileEntry>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes).map_err(|e| RunError::io(path, e))?;
    Ok(sha256_hex(bytes))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| RunError::Data(format!("cannot serialize: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))
}

pub fn save_model_bundle(dir: &Path, bundle: &ModelBundle) -> Result<RecurrentManifest> {
    create_dir(dir)?;
    let mut files = BTreeMap::new();
    for (i, (id, model)) in bundle.nodes.iter().enumerate() {
        let name = node_file(i, id.as_str(), "gru");
        let bytes = encode_gru(bundle.tag, bundle.spec.rho, id.as_str(), model);
        let sha256 = write_file(&dir.join(&name), &bytes)?;
        files.insert(id.clone(), FileEntry { file: name, sha256 });
    }
    let manifest = RecurrentManifest {
        tag: bundle.tag,
        label: hrnn_core::forecast::Forecaster::label(bundle),
        spec: bundle.spec.clone(),
        provenance: bundle.provenance.clone(),
        files,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, to_json(&manifest)?).map_err(|e| RunError::io(&path, e))?;
    Ok(manifest)
}

fn read_manifest<T: for<'de> Deserialize<'de>>(dir: &Path) -> Result<T> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))
}

fn read_checked(dir: &Path, entry: &FileEntry) -> Result<Vec<u8>> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| RunError::io(&path, e))?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(RunError::Data(format!("{}: checksum mismatch", path.display())));
    }
    Ok(bytes)
}

pub fn load_model_bundle(dir: &Path) -> Result<ModelBundle> {
    let m: RecurrentManifest = read_manifest(dir)?;
    let mut nodes = BTreeMap::new();
    for (id, entry) in &m.files {
        let ck = decode_gru(&read_checked(dir, entry)?)?;
        if ck.node != id.as_str() || ck.tag != m.tag || ck.rho != m.spec.rho {
            return Err(RunError::Data(format!("{}: header disagrees with manifest", entry.file)));
        }
        nodes.insert(id.clone(), ck.model);
    }
    Ok(ModelBundle {
        tag: m.tag,
        spec: m.spec,
        nodes,
        provenance: m.provenance,
    })
}

pub fn save_baseline_bundle(dir: &Path, bundle: &BaselineBundle, spec: &BaselineSpec) -> Result<BaselineManifest> {
    create_dir(dir)?;
    let mut files = BTreeMap::new();
    for (i, (id, model)) in bundle.nodes.iter().enumerate() {
        let name = node_file(i, id.as_str(), "json");
        let sha256 = write_file(&dir.join(&name), to_json(model)?.as_bytes())?;
        files.insert(id.clone(), FileEntry { file: name, sha256 });
    }
    let manifest = BaselineManifest {
        tag: bundle.tag,
        label: hrnn_core::forecast::Forecaster::label(bundle),
        spec: spec.clone(),
        skipped: bundle.skipped.clone(),
        files,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, to_json(&manifest)?).map_err(|e| RunError::io(&path, e))?;
    Ok(manifest)
}

pub fn load_baseline_bundle(dir: &Path) -> Result<BaselineBundle> {
    let m: BaselineManifest = read_manifest(dir)?;
    let mut nodes = BTreeMap::new();
    for (id, entry) in &m.files {
        let bytes = read_checked(dir, entry)?;
        let model: BaselineModel = serde_json::from_slice(&bytes)
            .map_err(|e| RunError::Data(format!("{}: {e}", entry.file)))?;
        nodes.insert(id.clone(), model);
    }
    Ok(BaselineBundle {
        tag: m.tag,
        rho: m.spec.rho,
        nodes,
        skipped: m.skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrnn_core::baselines::fit_baseline;
    use hrnn_core::dataset::{synth_panel, SynthSpec};
    use hrnn_core::models::{train_knn_gru, TrainSpec};
    use hrnn_core::seed::rng_for;
    use proptest::prelude::*;

    #[test]
    fn gru_bytes_round_trip() {
        let params = GruParams::random(3, 2, 0.5, &mut rng_for(1));
        let model = NodeModel {
            params,
            neighbors: vec![NodeId::new("a"), NodeId::new("ü")],
        };
        let bytes = encode_gru(ModelTag::KnnGru, 4, "food/fresh", &model);
        let back = decode_gru(&bytes).unwrap();
        assert_eq!(back.model, model);
        assert_eq!((back.tag, back.rho, back.node.as_str()), (ModelTag::KnnGru, 4, "food/fresh"));
        assert!(decode_gru(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn bundles_round_trip_through_directories() {
        let (h, panel) = synth_panel(&SynthSpec::new(1, 2, 30, 0.2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let spec = TrainSpec { epochs: 3, k_neighbors: 1, ..TrainSpec::default() };
        let b = train_knn_gru(&panel, &h, &spec).unwrap();
        save_model_bundle(&dir.path().join("knn"), &b).unwrap();
        assert_eq!(load_model_bundle(&dir.path().join("knn")).unwrap(), b);

        let bspec = BaselineSpec { rho: 2, ..BaselineSpec::default() };
        let ar = fit_baseline(ModelTag::Ar, &panel, &h, &bspec).unwrap();
        save_baseline_bundle(&dir.path().join("ar"), &ar, &bspec).unwrap();
        assert_eq!(load_baseline_bundle(&dir.path().join("ar")).unwrap(), ar);
    }

    #[test]
    fn tampered_file_is_detected() {
        let (h, panel) = synth_panel(&SynthSpec::new(1, 1, 30, 0.2, 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bspec = BaselineSpec { rho: 1, ..BaselineSpec::default() };
        let ar = fit_baseline(ModelTag::Ar, &panel, &h, &bspec).unwrap();
        let m = save_baseline_bundle(dir.path(), &ar, &bspec).unwrap();
        let f = dir.path().join(&m.files[&NodeId::new("0")].file);
        fs::write(&f, b"{}").unwrap();
        assert!(load_baseline_bundle(dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn any_parameters_survive_encoding(
            h in 1usize..4,
            d in 1usize..3,
            seed in 0u64..1000,
            node in "[a-z0-9./ ]{1,12}",
        ) {
            let params = GruParams::random(h, d, 2.0, &mut rng_for(seed));
            let model = NodeModel::new(params);
            let back = decode_gru(&encode_gru(ModelTag::Hrnn, 3, &node, &model)).unwrap();
            prop_assert_eq!(back.model, model);
            prop_assert_eq!(back.node, node);
        }
    }
}
