//! Binary model files.
//!
//! Layout (little endian):
//!
//! ```text
//! "RCMA"  u32 version  u64 metadata length  metadata (JSON)
//! u32 array count
//! per array: u32 name length, name, u32 rank, u64 × rank shape, f64 × product(shape)
//! ```
//!
//! Everything numeric that the online stage needs lives in the arrays, so a model
//! reloads bit for bit. Files are written to a temporary sibling and renamed into place.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ercm::ErcmModel;
use crate::error::{Error, Result};
use crate::estimator::EstimatorCache;
use crate::lsrcm::LsModel;
use crate::problem::{AffineProblem, ParameterPoint, ProblemSpec, StabilityTable};
use crate::reduced::{LogEntry, ReducedModel};

use super::config::{Method, StudyConfig};

pub const MAGIC: &[u8; 4] = b"RCMA";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        NamedArray {
            name: name.to_string(),
            shape,
            data,
        }
    }

    fn rows(name: &str, rows: &[Vec<f64>], width: usize) -> Self {
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        NamedArray::new(name, vec![rows.len(), width], data)
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        match self.shape.as_slice() {
            [_, w] if *w > 0 => self.data.chunks(*w).map(<[f64]>::to_vec).collect(),
            [n, _] => vec![Vec::new(); *n],
            _ => vec![self.data.clone()],
        }
    }
}

/// Write `metadata` and `arrays` atomically to `path`.
pub fn write_container(path: &Path, metadata: &serde_json::Value, arrays: &[NamedArray]) -> Result<()> {
    let meta = serde_json::to_vec(metadata).map_err(|e| Error::Artifact(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        if a.shape.iter().product::<usize>() != a.data.len() {
            return Err(Error::Artifact(format!("array `{}` does not match its shape", a.name)));
        }
        buf.extend_from_slice(&(a.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(a.name.as_bytes());
        buf.extend_from_slice(&(a.shape.len() as u32).to_le_bytes());
        for &s in &a.shape {
            buf.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for &v in &a.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Artifact(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.partial-{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Artifact("file is truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Artifact("length overflows".into()))
    }
}

pub fn read_container(path: &Path) -> Result<(serde_json::Value, Vec<NamedArray>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Artifact(format!("{} is not a model file", path.display())));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::ArtifactVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let meta_len = c.len()?;
    let metadata = serde_json::from_slice(c.take(meta_len)?).map_err(|e| Error::Artifact(e.to_string()))?;
    let count = c.u32()? as usize;
    let mut arrays = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::Artifact("array name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.len()).collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .ok_or_else(|| Error::Artifact("array shape overflows".into()))?;
        let bytes = c.take(len.checked_mul(8).ok_or_else(|| Error::Artifact("array too large".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        arrays.push(NamedArray { name, shape, data });
    }
    if c.pos != buf.len() {
        return Err(Error::Artifact("trailing bytes after the last array".into()));
    }
    Ok((metadata, arrays))
}

/// A trained model of either kind.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Lsrcm(LsModel),
    Ercm(ErcmModel),
}

impl AnyModel {
    pub fn reduced(&self) -> &dyn ReducedModel {
        match self {
            AnyModel::Lsrcm(m) => m,
            AnyModel::Ercm(m) => m,
        }
    }

    pub fn method(&self) -> Method {
        match self {
            AnyModel::Lsrcm(_) => Method::Lsrcm,
            AnyModel::Ercm(_) => Method::Ercm,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    format: String,
    method: Method,
    problem: ProblemSpec,
    config: StudyConfig,
    offline_seconds: f64,
    point_dofs: Option<Vec<Option<usize>>>,
}

/// A model together with the configuration and offline time that produced it.
#[derive(Clone, Debug)]
pub struct ModelArtifact {
    pub config: StudyConfig,
    pub offline_seconds: f64,
    pub model: AnyModel,
}

fn log_array(log: &[LogEntry], d: usize) -> NamedArray {
    let rows: Vec<Vec<f64>> = log
        .iter()
        .map(|e| {
            let mut r = vec![
                e.iteration as f64,
                e.index as f64,
                e.selected_delta.unwrap_or(f64::NAN),
                e.max_delta,
            ];
            r.extend_from_slice(e.mu.as_slice());
            r
        })
        .collect();
    NamedArray::rows("log", &rows, 4 + d)
}

fn log_from(a: &NamedArray) -> Vec<LogEntry> {
    a.to_rows()
        .into_iter()
        .map(|r| LogEntry {
            iteration: r[0] as usize,
            index: r[1] as usize,
            selected_delta: (!r[2].is_nan()).then_some(r[2]),
            max_delta: r[3],
            mu: ParameterPoint::new(r[4..].to_vec()),
        })
        .collect()
}

impl ModelArtifact {
    pub fn save(&self, path: &Path) -> Result<()> {
        let m = self.model.reduced();
        let p = m.problem();
        let d = p.domain().dim();
        let cache = m.cache();
        let n = m.size();
        let table = m.stability();
        let mut arrays = vec![
            NamedArray::rows(
                "selected",
                &m.selected().iter().map(|s| s.0.clone()).collect::<Vec<_>>(),
                d,
            ),
            NamedArray::rows("basis", m.basis(), p.dofs()),
            log_array(m.log(), d),
            NamedArray::rows(
                "stability.points",
                &table.points().iter().map(|s| s.0.clone()).collect::<Vec<_>>(),
                d,
            ),
            NamedArray::new("stability.values", vec![table.len()], table.values().to_vec()),
            NamedArray::new("cache.ff", vec![cache.qf(), cache.qf()], cache.ff_raw().to_vec()),
            NamedArray::new(
                "cache.ull",
                vec![cache.ull_rows().iter().map(Vec::len).sum()],
                cache.ull_rows().concat(),
            ),
            NamedArray::rows("cache.flu", cache.flu_rows(), cache.qf() * cache.qa()),
        ];
        let mut point_dofs = None;
        if let AnyModel::Ercm(e) = &self.model {
            let pts: Vec<Vec<f64>> = e.points.iter().map(|&(x, y)| vec![x, y]).collect();
            arrays.push(NamedArray::rows("points", &pts, 2));
            arrays.push(NamedArray::rows("op_rows", &e.op_rows, n * p.qa()));
            arrays.push(NamedArray::rows("rhs_rows", &e.rhs_rows, p.qf()));
            arrays.push(NamedArray::rows("b", &e.b, n));
            point_dofs = Some(e.point_dofs.clone());
        }
        let meta = Metadata {
            format: "rcm-model".into(),
            method: self.model.method(),
            problem: p.spec().clone(),
            config: self.config.clone(),
            offline_seconds: self.offline_seconds,
            point_dofs,
        };
        let meta = serde_json::to_value(&meta).map_err(|e| Error::Artifact(e.to_string()))?;
        write_container(path, &meta, &arrays)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (meta, arrays) = read_container(path)?;
        let meta: Metadata = serde_json::from_value(meta).map_err(|e| Error::Artifact(e.to_string()))?;
        if meta.format != "rcm-model" {
            return Err(Error::Artifact(format!("unexpected content `{}`", meta.format)));
        }
        let get = |name: &str| {
            arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| Error::Artifact(format!("missing array `{name}`")))
        };
        let problem = Arc::new(AffineProblem::from_spec(&meta.problem)?);
        let basis = get("basis")?.to_rows();
        if basis.iter().any(|b| b.len() != problem.dofs()) {
            return Err(Error::Artifact("basis does not match the problem grid".into()));
        }
        let selected: Vec<ParameterPoint> = get("selected")?.to_rows().into_iter().map(ParameterPoint::new).collect();
        let log = log_from(get("log")?);
        let points: Vec<ParameterPoint> = get("stability.points")?
            .to_rows()
            .into_iter()
            .map(ParameterPoint::new)
            .collect();
        let values = get("stability.values")?.data.clone();
        if points.len() != values.len() {
            return Err(Error::Artifact("stability table is inconsistent".into()));
        }
        let stability = Arc::new(StabilityTable::from_values(points, values));

        let (qa, qf) = (problem.qa(), problem.qf());
        let ull_flat = &get("cache.ull")?.data;
        let mut ull = Vec::with_capacity(basis.len());
        let mut at = 0;
        for j in 0..basis.len() {
            let len = (j + 1) * qa * qa;
            let row = ull_flat
                .get(at..at + len)
                .ok_or_else(|| Error::Artifact("estimator tensors are truncated".into()))?;
            ull.push(row.to_vec());
            at += len;
        }
        let cache = EstimatorCache::from_parts(qa, qf, get("cache.ff")?.data.clone(), ull, get("cache.flu")?.to_rows())?;

        let model = match meta.method {
            Method::Lsrcm => AnyModel::Lsrcm(LsModel::from_parts(problem, stability, selected, basis, cache, log)?),
            Method::Ercm => {
                let points = get("points")?.to_rows().into_iter().map(|r| (r[0], r[1])).collect();
                let dofs = meta
                    .point_dofs
                    .ok_or_else(|| Error::Artifact("missing point indices".into()))?;
                AnyModel::Ercm(ErcmModel::from_parts(
                    problem,
                    stability,
                    selected,
                    points,
                    dofs,
                    basis,
                    get("op_rows")?.to_rows(),
                    get("rhs_rows")?.to_rows(),
                    get("b")?.to_rows(),
                    cache,
                    log,
                )?)
            }
        };
        Ok(ModelArtifact {
            config: meta.config,
            offline_seconds: meta.offline_seconds,
            model,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::train;

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let arrays = vec![
            NamedArray::new("a", vec![2, 3], vec![1.0, -0.0, f64::INFINITY, 1e-300, f64::NAN, 0.1]),
            NamedArray::new("empty", vec![0, 4], vec![]),
        ];
        let meta = serde_json::json!({"k": 0.1 + 0.2});
        write_container(&path, &meta, &arrays).unwrap();
        let (m, back) = read_container(&path).unwrap();
        assert_eq!(m, meta);
        assert_eq!(back.len(), 2);
        let bits = |a: &NamedArray| a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back[0]), bits(&arrays[0]));
        assert_eq!(back[1].shape, vec![0, 4]);
        // no temporary left behind
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"hello world").unwrap();
        assert_eq!(read_container(&path).unwrap_err().kind(), "artifact");

        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&7u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_container(&path).unwrap_err(),
            Error::ArtifactVersion { found: 7, expected: 1 }
        ));

        write_container(&path, &serde_json::json!({}), &[NamedArray::new("a", vec![4], vec![0.0; 4])]).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 3]).unwrap();
        assert!(read_container(&path).is_err());
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("m.bin");
        assert!(write_container(&path, &serde_json::json!({}), &[]).is_err());
        assert!(!path.exists());
    }

    fn config(method: &str, problem: &str) -> StudyConfig {
        let mut c = StudyConfig::default();
        c.set("problem", problem).unwrap();
        c.set("method", method).unwrap();
        c.set("nx", "14").unwrap();
        c.set("train_grid", "7x6").unwrap();
        c.n_max = 6;
        c
    }

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn round_trip_is_bit_exact_for_both_methods() {
        let dir = tempfile::tempdir().unwrap();
        for (method, problem) in [("lsrcm", "diffusion"), ("ercm", "anisotropic")] {
            let art = train(&config(method, problem), None).unwrap();
            let path = dir.path().join(format!("{method}.rcm"));
            art.save(&path).unwrap();
            let back = ModelArtifact::load(&path).unwrap();
            let (a, b) = (art.model.reduced(), back.model.reduced());
            assert_eq!(back.config, art.config);
            assert_eq!(back.offline_seconds.to_bits(), art.offline_seconds.to_bits());
            assert_eq!(a.selected(), b.selected());
            assert_eq!(a.log(), b.log());
            assert_eq!(a.cache(), b.cache());
            assert_eq!(bits(a.stability().values()), bits(b.stability().values()));
            for (x, y) in a.basis().iter().zip(b.basis()) {
                assert_eq!(bits(x), bits(y));
            }
            if let (AnyModel::Ercm(x), AnyModel::Ercm(y)) = (&art.model, &back.model) {
                assert_eq!(x.points(), y.points());
                assert_eq!(x.point_dofs(), y.point_dofs());
                assert_eq!(x.op_rows(), y.op_rows());
                assert_eq!(x.rhs_rows(), y.rhs_rows());
            }
            let d = a.problem().domain();
            for mu in [d.center(), ParameterPoint::new(d.bounds.iter().map(|b| b.0).collect())] {
                for n in 1..=a.size() {
                    let (x, y) = (a.solve_n(&mu, n).unwrap(), b.solve_n(&mu, n).unwrap());
                    assert_eq!(bits(&x), bits(&y));
                    let (ex, ey) = (a.estimate(&mu, &x).unwrap(), b.estimate(&mu, &y).unwrap());
                    assert_eq!(ex.delta.to_bits(), ey.delta.to_bits());
                }
            }
        }
    }

    #[test]
    fn described_problems_survive_the_round_trip() {
        let mut cfg = StudyConfig::from_str_config(
            "problem = bumpy\nmethod = ercm\nnx = 10\ntrain_grid = 5x5\nnmax = 4\ndomain = 0.5:2, 0.1:1\n\
             op.1 = dxx | -1\nop.2 = dyy | -mu1\nop.3 = identity | -0.1 * mu2\n\
             rhs.1 = math::exp(x) * (1.0 - y * y) | mu2\n",
        )
        .unwrap();
        cfg.tol = 0.0;
        let art = train(&cfg, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.rcm");
        art.save(&path).unwrap();
        let back = ModelArtifact::load(&path).unwrap();
        assert_eq!(back.model.reduced().problem().name(), "bumpy");
        let mu = ParameterPoint::from([1.1, 0.3]);
        assert_eq!(
            bits(&art.model.reduced().solve(&mu).unwrap()),
            bits(&back.model.reduced().solve(&mu).unwrap())
        );
    }

    #[test]
    fn failed_training_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config("lsrcm", "anisotropic");
        cfg.set("train_grid", "2x1").unwrap();
        cfg.n_max = 5;
        cfg.tol = 0.0;
        let path = dir.path().join("m.rcm");
        let err = train(&cfg, None).and_then(|a| a.save(&path)).unwrap_err();
        assert_eq!(err.kind(), "training_exhausted");
        assert!(!path.exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
