//! Model files.
//!
//! Container layout, all integers little-endian:
//!
//! ```text
//! "HGSF" | u32 version | u32 n_arrays | u32 meta_len | meta JSON
//! directory: n_arrays × (u32 name_len | name | u32 ndim | ndim × u64 dim | u64 offset)
//! data: f64 values, row-major, each array at `offset` bytes into this section
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::expansions::ExpansionSpec;
use crate::gsfa::GsfaModel;
use crate::hierarchy::{
    build_network, GlobalReconstructionModel, NetworkNode, NetworkSpec, NodeModel, TrainedNetwork,
};
use crate::node::{GsfaNodeModel, IgsfaNodeModel, ScalingMode, SlowPartRule, SlowScaling};
use crate::pca::PcaModel;

pub const MODEL_MAGIC: &[u8; 4] = b"HGSF";
pub const FORMAT_VERSION: u32 = 1;

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Named arrays plus JSON metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: Value,
    pub arrays: BTreeMap<String, ArrayD<f64>>,
}

impl Container {
    pub fn insert(&mut self, name: impl Into<String>, a: ArrayD<f64>) {
        self.arrays.insert(name.into(), a);
    }

    pub fn insert1(&mut self, name: impl Into<String>, a: &Array1<f64>) {
        self.insert(name, a.clone().into_dyn());
    }

    pub fn insert2(&mut self, name: impl Into<String>, a: &Array2<f64>) {
        self.insert(name, a.clone().into_dyn());
    }

    fn get(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing array '{name}'")))
    }

    pub fn get1(&self, name: &str) -> Result<Array1<f64>> {
        self.get(name)?
            .clone()
            .into_dimensionality()
            .map_err(|_| Error::Format(format!("array '{name}' is not 1-D")))
    }

    pub fn get2(&self, name: &str) -> Result<Array2<f64>> {
        self.get(name)?
            .clone()
            .into_dimensionality()
            .map_err(|_| Error::Format(format!("array '{name}' is not 2-D")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let u32_of = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::Format(format!("{what} too large")));
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32_of(self.arrays.len(), "array count")?.to_le_bytes());
        out.extend_from_slice(&u32_of(meta.len(), "metadata")?.to_le_bytes());
        out.extend_from_slice(&meta);
        let mut offset = 0u64;
        for (name, a) in &self.arrays {
            out.extend_from_slice(&u32_of(name.len(), "array name")?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&u32_of(a.ndim(), "rank")?.to_le_bytes());
            for &d in a.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 8 * a.len() as u64;
        }
        for a in self.arrays.values() {
            for v in a.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let n_arrays = r.u32()? as usize;
        let meta_len = r.u32()? as usize;
        let meta: Value =
            serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Format(format!("model metadata: {e}")))?;
        let mut dir = Vec::with_capacity(n_arrays.min(1 << 16));
        for _ in 0..n_arrays {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Format("dimension overflow".into()))?);
            }
            let offset = r.u64()?;
            dir.push((name, shape, offset));
        }
        let data = &bytes[r.pos..];
        let mut arrays = BTreeMap::new();
        for (name, shape, offset) in dir {
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|v| v.checked_mul(8))
                .ok_or_else(|| Error::Format("array size overflow".into()))?;
            let start = usize::try_from(offset).map_err(|_| Error::Format("offset overflow".into()))?;
            let end = start
                .checked_add(len)
                .ok_or_else(|| Error::Format("offset overflow".into()))?;
            if end > data.len() {
                return Err(Error::Format(format!("truncated model file (array '{name}')")));
            }
            let values: Vec<f64> = data[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let a = ArrayD::from_shape_vec(IxDyn(&shape), values).map_err(|e| Error::Format(e.to_string()))?;
            arrays.insert(name, a);
        }
        Ok(Container { meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeMeta {
    Igsfa {
        input_dim: usize,
        output_dim: usize,
        expanded_dim: usize,
        slow_part: SlowPartRule,
        expansion: ExpansionSpec,
        j_prime: usize,
        n_slow: usize,
        scaling: ScalingMode,
        scale_floor: f64,
        gsfa_rank: usize,
        pre_pca: bool,
    },
    Gsfa {
        input_dim: usize,
        output_dim: usize,
        expansion: ExpansionSpec,
        gsfa_rank: usize,
        pre_pca: bool,
    },
}

#[derive(Serialize, Deserialize)]
struct NetworkMeta {
    format: String,
    spec: NetworkSpec,
    nodes: Vec<Vec<NodeMeta>>,
    has_reconstruction: bool,
    #[serde(default)]
    extra: Value,
}

/// A network with its optional global reconstruction model.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub network: TrainedNetwork,
    pub reconstruction: Option<GlobalReconstructionModel>,
    /// Free-form provenance stored with the model.
    pub extra: Value,
}

fn put_gsfa(c: &mut Container, p: &str, g: &GsfaModel) {
    c.insert2(format!("{p}gsfa/projection"), &g.projection);
    c.insert1(format!("{p}gsfa/offset"), &g.input_offset);
    c.insert1(format!("{p}gsfa/deltas"), &g.deltas);
}

fn get_gsfa(c: &Container, p: &str, input_dim: usize, rank: usize) -> Result<GsfaModel> {
    Ok(GsfaModel {
        input_dim,
        projection: c.get2(&format!("{p}gsfa/projection"))?,
        input_offset: c.get1(&format!("{p}gsfa/offset"))?,
        deltas: c.get1(&format!("{p}gsfa/deltas"))?,
        rank_used: rank,
    })
}

fn put_pca(c: &mut Container, p: &str, m: &PcaModel) {
    c.insert1(format!("{p}mean"), &m.mean);
    c.insert2(format!("{p}components"), &m.components);
    c.insert1(format!("{p}variances"), &m.variances);
}

fn get_pca(c: &Container, p: &str) -> Result<PcaModel> {
    Ok(PcaModel {
        mean: c.get1(&format!("{p}mean"))?,
        components: c.get2(&format!("{p}components"))?,
        variances: c.get1(&format!("{p}variances"))?,
    })
}

fn node_prefix(layer: usize, k: usize) -> String {
    format!("layer{layer}/node{k}/")
}

pub fn model_to_container(m: &SavedModel) -> Container {
    let mut c = Container::default();
    let mut nodes_meta = Vec::new();
    for (l, nodes) in m.network.layers.iter().enumerate() {
        let mut layer_meta = Vec::new();
        for (k, node) in nodes.iter().enumerate() {
            let p = node_prefix(l + 1, k);
            if let Some(pre) = &node.pre_pca {
                put_pca(&mut c, &format!("{p}pre_pca/"), pre);
            }
            let pre_pca = node.pre_pca.is_some();
            layer_meta.push(match &node.model {
                NodeModel::Igsfa(n) => {
                    c.insert1(format!("{p}x_mean"), &n.x_mean);
                    put_gsfa(&mut c, &p, &n.gsfa);
                    c.insert2(format!("{p}m"), &n.m);
                    c.insert1(format!("{p}b"), &n.b);
                    match &n.scaling {
                        SlowScaling::Qr { q, r } => {
                            c.insert2(format!("{p}q"), q);
                            c.insert2(format!("{p}r"), r);
                        }
                        SlowScaling::Sensitivity { lambda } => c.insert1(format!("{p}lambda"), lambda),
                    }
                    put_pca(&mut c, &format!("{p}pca/"), &n.pca);
                    NodeMeta::Igsfa {
                        input_dim: n.input_dim,
                        output_dim: n.output_dim,
                        expanded_dim: n.expanded_dim,
                        slow_part: n.slow_part,
                        expansion: n.expansion.clone(),
                        j_prime: n.j_prime,
                        n_slow: n.n_slow,
                        scaling: n.scaling_mode(),
                        scale_floor: n.scale_floor,
                        gsfa_rank: n.gsfa.rank_used,
                        pre_pca,
                    }
                }
                NodeModel::Gsfa(n) => {
                    c.insert1(format!("{p}x_mean"), &n.x_mean);
                    put_gsfa(&mut c, &p, &n.gsfa);
                    NodeMeta::Gsfa {
                        input_dim: n.input_dim,
                        output_dim: n.output_dim,
                        expansion: n.expansion.clone(),
                        gsfa_rank: n.gsfa.rank_used,
                        pre_pca,
                    }
                }
            });
        }
        nodes_meta.push(layer_meta);
    }
    if let Some(r) = &m.reconstruction {
        c.insert2("reconstruction/map", &r.map);
        c.insert1("reconstruction/offset", &r.offset);
    }
    let meta = NetworkMeta {
        format: "network".into(),
        spec: m.network.spec.clone(),
        nodes: nodes_meta,
        has_reconstruction: m.reconstruction.is_some(),
        extra: m.extra.clone(),
    };
    c.meta = serde_json::to_value(meta).expect("metadata serializes");
    c
}

pub fn model_from_container(c: &Container) -> Result<SavedModel> {
    let meta: NetworkMeta =
        serde_json::from_value(c.meta.clone()).map_err(|e| Error::Format(format!("model metadata: {e}")))?;
    if meta.format != "network" {
        return Err(Error::Format(format!("unexpected model kind '{}'", meta.format)));
    }
    let plan = build_network(&meta.spec)?;
    if plan.layers.len() != meta.nodes.len() {
        return Err(Error::Format("layer count does not match the network spec".into()));
    }
    let mut layers = Vec::new();
    for (l, (wiring, metas)) in plan.layers.iter().zip(meta.nodes).enumerate() {
        if metas.len() != wiring.n_nodes() {
            return Err(Error::Format(format!("layer {} has {} nodes, expected {}", l + 1, metas.len(), wiring.n_nodes())));
        }
        let mut nodes = Vec::new();
        for (k, nm) in metas.into_iter().enumerate() {
            let p = node_prefix(l + 1, k);
            let has_pre = match &nm {
                NodeMeta::Igsfa { pre_pca, .. } | NodeMeta::Gsfa { pre_pca, .. } => *pre_pca,
            };
            let pre_pca = if has_pre {
                Some(get_pca(c, &format!("{p}pre_pca/"))?)
            } else {
                None
            };
            let model = match nm {
                NodeMeta::Igsfa {
                    input_dim,
                    output_dim,
                    expanded_dim,
                    slow_part,
                    expansion,
                    j_prime,
                    n_slow,
                    scaling,
                    scale_floor,
                    gsfa_rank,
                    ..
                } => {
                    let scaling = match scaling {
                        ScalingMode::Qr => SlowScaling::Qr {
                            q: c.get2(&format!("{p}q"))?,
                            r: c.get2(&format!("{p}r"))?,
                        },
                        ScalingMode::Sensitivity => SlowScaling::Sensitivity {
                            lambda: c.get1(&format!("{p}lambda"))?,
                        },
                    };
                    let node = IgsfaNodeModel {
                        input_dim,
                        output_dim,
                        expanded_dim,
                        slow_part,
                        expansion,
                        x_mean: c.get1(&format!("{p}x_mean"))?,
                        gsfa: get_gsfa(c, &p, expanded_dim, gsfa_rank)?,
                        j_prime,
                        n_slow,
                        m: c.get2(&format!("{p}m"))?,
                        b: c.get1(&format!("{p}b"))?,
                        scaling,
                        pca: get_pca(c, &format!("{p}pca/"))?,
                        scale_floor,
                    };
                    check_igsfa(&node).map_err(|e| Error::Format(format!("layer {} node {k}: {e}", l + 1)))?;
                    NodeModel::Igsfa(node)
                }
                NodeMeta::Gsfa {
                    input_dim,
                    output_dim,
                    expansion,
                    gsfa_rank,
                    ..
                } => {
                    let expanded = expansion.expanded_dim(input_dim)?;
                    let gsfa = get_gsfa(c, &p, expanded, gsfa_rank)?;
                    if gsfa.projection.dim() != (output_dim, expanded) {
                        return Err(Error::Format(format!("layer {} node {k}: GSFA shape mismatch", l + 1)));
                    }
                    NodeModel::Gsfa(GsfaNodeModel {
                        input_dim,
                        output_dim,
                        expansion,
                        x_mean: c.get1(&format!("{p}x_mean"))?,
                        gsfa,
                    })
                }
            };
            let node = NetworkNode { pre_pca, model };
            if node.output_dim() != wiring.output_dim {
                return Err(Error::Format(format!("layer {} node {k}: output dimension mismatch", l + 1)));
            }
            nodes.push(node);
        }
        layers.push(nodes);
    }
    let reconstruction = if meta.has_reconstruction {
        Some(GlobalReconstructionModel {
            map: c.get2("reconstruction/map")?,
            offset: c.get1("reconstruction/offset")?,
        })
    } else {
        None
    };
    Ok(SavedModel {
        network: TrainedNetwork {
            spec: meta.spec,
            plan,
            layers,
        },
        reconstruction,
        extra: meta.extra,
    })
}

fn check_igsfa(n: &IgsfaNodeModel) -> std::result::Result<(), String> {
    let ok = n.x_mean.len() == n.input_dim
        && n.gsfa.projection.ncols() == n.expanded_dim
        && n.gsfa.projection.nrows() >= n.n_slow
        && n.m.dim() == (n.input_dim, n.n_slow)
        && n.b.len() == n.input_dim
        && n.pca.components.dim() == (n.output_dim - n.n_slow, n.input_dim);
    let scaling_ok = match &n.scaling {
        SlowScaling::Qr { q, r } => q.dim() == (n.input_dim, n.n_slow) && r.dim() == (n.n_slow, n.n_slow),
        SlowScaling::Sensitivity { lambda } => lambda.len() == n.n_slow,
    };
    if ok && scaling_ok && n.n_slow <= n.output_dim {
        Ok(())
    } else {
        Err("array shapes do not match node metadata".into())
    }
}

pub fn save_model(path: &Path, m: &SavedModel) -> Result<()> {
    model_to_container(m).save(path)
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    model_from_container(&Container::load(path)?)
}
