//! `SUTK1` model container: a list of named, versioned sections.
//!
//! Layout (little-endian): magic `SUTK1`, u32 section count, then per section
//! a length-prefixed name, u32 version, u64 payload length and the payload.
//! Matrices are stored as u32 rows, u32 cols and row-major f64 values.

use std::collections::BTreeMap;
use std::path::Path;

use ivec_core::frontend::{DiagGmm, TvModel};
use ivec_core::fusion::FusionModel;
use ivec_core::plda::PldaModel;
use ivec_core::precondition::{CenterTransform, NapProjection, PrecondChain, RldaTransform};
use ivec_core::scorenorm::Cohort;
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};
use crate::recipe::SnormSettings;

pub const MAGIC: &[u8; 5] = b"SUTK1";

/// Current version of every section type.
pub const SECTION_VERSIONS: &[(&str, u32)] = &[
    ("ubm", 1),
    ("tv", 1),
    ("chain", 1),
    ("plda", 1),
    ("cohort", 1),
    ("snorm", 1),
    ("fusion", 1),
];

pub fn section_version(name: &str) -> u32 {
    SECTION_VERSIONS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .expect("known section")
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.u32(m.nrows() as u32);
        self.u32(m.ncols() as u32);
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.f64(m[(r, c)]);
            }
        }
    }

    fn vector(&mut self, v: &DVector<f64>) {
        self.u32(v.len() as u32);
        for x in v.iter() {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    what: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(what: &'a str, bytes: &'a [u8]) -> Self {
        Self { what, bytes, pos: 0 }
    }

    fn err(&self, msg: &str) -> CliError {
        CliError::Format {
            path: self.what.into(),
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| self.err("truncated section"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> CliResult<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| self.err("invalid UTF-8"))
    }

    fn matrix(&mut self) -> CliResult<DMatrix<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let raw = self.take(rows * cols * 8)?;
        let mut m = DMatrix::zeros(rows, cols);
        for (i, b) in raw.chunks_exact(8).enumerate() {
            m[(i / cols.max(1), i % cols.max(1))] = f64::from_le_bytes(b.try_into().unwrap());
        }
        Ok(m)
    }

    fn vector(&mut self) -> CliResult<DVector<f64>> {
        let n = self.u32()? as usize;
        let raw = self.take(n * 8)?;
        Ok(DVector::from_iterator(
            n,
            raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())),
        ))
    }

    fn done(&self) -> CliResult<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err("trailing bytes in section"));
        }
        Ok(())
    }
}

/// An in-memory container. Sections are kept sorted by name so that encoding
/// is independent of insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    sections: BTreeMap<String, (u32, Vec<u8>)>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn names(&self) -> impl Iterator<Item = (&str, u32)> {
        self.sections.iter().map(|(n, (v, _))| (n.as_str(), *v))
    }

    fn put(&mut self, name: &str, payload: Writer) {
        self.sections
            .insert(name.to_string(), (section_version(name), payload.0));
    }

    fn get(&self, name: &str) -> CliResult<Option<Reader<'_>>> {
        match self.sections.get_key_value(name) {
            None => Ok(None),
            Some((key, (version, payload))) => {
                let want = section_version(name);
                if *version != want {
                    return Err(CliError::Format {
                        path: name.into(),
                        msg: format!("section version {version}, this build reads {want}"),
                    });
                }
                Ok(Some(Reader::new(key, payload)))
            }
        }
    }

    fn require(&self, name: &str) -> CliResult<Reader<'_>> {
        self.get(name)?.ok_or_else(|| CliError::Format {
            path: name.into(),
            msg: "section missing from container".into(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.0.extend_from_slice(MAGIC);
        w.u32(self.sections.len() as u32);
        for (name, (version, payload)) in &self.sections {
            w.str(name);
            w.u32(*version);
            w.0.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            w.0.extend_from_slice(payload);
        }
        w.0
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> CliResult<Self> {
        let what = path.to_string_lossy().into_owned();
        let mut r = Reader::new(&what, bytes);
        if r.take(5).map_err(|_| CliError::format(path, "not a SUTK1 container"))? != MAGIC {
            return Err(CliError::format(path, "bad magic, expected SUTK1"));
        }
        let n = r.u32()?;
        let mut sections = BTreeMap::new();
        for _ in 0..n {
            let name = r.str()?;
            let version = r.u32()?;
            let len = r.u64()? as usize;
            let payload = r.take(len)?.to_vec();
            if sections.insert(name.clone(), (version, payload)).is_some() {
                return Err(CliError::format(path, format!("duplicate section '{name}'")));
            }
        }
        r.done()?;
        Ok(Self { sections })
    }

    pub fn read(path: &Path, producing_stage: &str) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::MissingArtifact {
                    path: path.to_path_buf(),
                    stage: producing_stage.to_string(),
                }
            } else {
                CliError::io(path, e)
            }
        })?;
        Self::decode(path, &bytes)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        crate::formats::write_bytes(path, &self.encode())
    }

    pub fn put_ubm(&mut self, gmm: &DiagGmm) {
        let mut w = Writer::default();
        w.vector(&gmm.weights);
        w.matrix(&gmm.means);
        w.matrix(&gmm.variances);
        self.put("ubm", w);
    }

    pub fn ubm(&self) -> CliResult<DiagGmm> {
        let mut r = self.require("ubm")?;
        let gmm = DiagGmm::new(r.vector()?, r.matrix()?, r.matrix()?)?;
        r.done()?;
        Ok(gmm)
    }

    /// The TV matrix; its UBM is stored in the `ubm` section.
    pub fn put_tv(&mut self, tv: &TvModel) {
        self.put_ubm(&tv.ubm);
        let mut w = Writer::default();
        w.matrix(&tv.t);
        self.put("tv", w);
    }

    pub fn tv(&self) -> CliResult<TvModel> {
        let mut r = self.require("tv")?;
        let t = r.matrix()?;
        r.done()?;
        Ok(TvModel::new(t, self.ubm()?)?)
    }

    pub fn put_chain(&mut self, chain: &PrecondChain) {
        let mut w = Writer::default();
        match &chain.nap {
            Some(nap) => {
                w.u8(1);
                w.matrix(&nap.basis);
                w.vector(&nap.eigenvalues);
            }
            None => w.u8(0),
        }
        w.vector(&chain.center.mean);
        w.matrix(&chain.rlda.projection);
        w.f64(chain.rlda.alpha);
        w.f64(chain.rlda.beta);
        w.vector(&chain.rlda.eigenvalues);
        w.u8(chain.final_length_norm as u8);
        self.put("chain", w);
    }

    pub fn chain(&self) -> CliResult<PrecondChain> {
        let mut r = self.require("chain")?;
        let nap = match r.u8()? {
            0 => None,
            1 => Some(NapProjection {
                basis: r.matrix()?,
                eigenvalues: r.vector()?,
            }),
            _ => return Err(r.err("invalid NAP flag")),
        };
        let center = CenterTransform { mean: r.vector()? };
        let rlda = RldaTransform {
            projection: r.matrix()?,
            alpha: r.f64()?,
            beta: r.f64()?,
            eigenvalues: r.vector()?,
        };
        let final_length_norm = r.u8()? != 0;
        r.done()?;
        Ok(PrecondChain {
            nap,
            center,
            rlda,
            final_length_norm,
        })
    }

    pub fn put_plda(&mut self, plda: &PldaModel) {
        let mut w = Writer::default();
        w.vector(&plda.mu);
        w.matrix(&plda.v);
        w.matrix(&plda.u);
        w.vector(&plda.sigma);
        self.put("plda", w);
    }

    pub fn plda(&self) -> CliResult<PldaModel> {
        let mut r = self.require("plda")?;
        let model = PldaModel {
            mu: r.vector()?,
            v: r.matrix()?,
            u: r.matrix()?,
            sigma: r.vector()?,
        };
        r.done()?;
        model.validate()?;
        Ok(model)
    }

    /// Preconditioned cohort vectors, one matrix row per vector.
    pub fn put_cohort(&mut self, cohort: &Cohort) {
        let mut w = Writer::default();
        w.u32(cohort.len() as u32);
        for id in cohort.ids() {
            w.str(id);
        }
        let d = cohort.vectors().first().map_or(0, |v| v.len());
        w.matrix(&DMatrix::from_fn(cohort.len(), d, |i, j| cohort.vectors()[i][j]));
        self.put("cohort", w);
    }

    pub fn cohort(&self) -> CliResult<Option<Cohort>> {
        let Some(mut r) = self.get("cohort")? else {
            return Ok(None);
        };
        let n = r.u32()? as usize;
        let ids = (0..n).map(|_| r.str()).collect::<CliResult<Vec<_>>>()?;
        let m = r.matrix()?;
        r.done()?;
        if m.nrows() != n {
            return Err(r.err("cohort ids and rows differ"));
        }
        let vectors = (0..n).map(|i| m.row(i).transpose()).collect();
        Ok(Some(Cohort::new(ids, vectors)?))
    }

    pub fn put_snorm(&mut self, settings: &SnormSettings) {
        let mut w = Writer::default();
        w.str(&serde_json::to_string(settings).expect("settings serialize"));
        self.put("snorm", w);
    }

    pub fn snorm(&self) -> CliResult<Option<SnormSettings>> {
        let Some(mut r) = self.get("snorm")? else {
            return Ok(None);
        };
        let text = r.str()?;
        r.done()?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| r.err(&format!("invalid s-norm settings: {e}")))
    }

    pub fn put_fusion(&mut self, model: &FusionModel) {
        let mut w = Writer::default();
        w.vector(&DVector::from_vec(model.weights.clone()));
        w.f64(model.offset);
        w.f64(model.prior);
        self.put("fusion", w);
    }

    pub fn fusion(&self) -> CliResult<FusionModel> {
        let mut r = self.require("fusion")?;
        let weights = r.vector()?.iter().copied().collect();
        let offset = r.f64()?;
        let prior = r.f64()?;
        r.done()?;
        Ok(FusionModel {
            weights,
            offset,
            prior,
        })
    }
}
