//! Text and binary file formats for i-vectors, enrollment lists, trials,
//! keys, scores and DET points.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ivec_core::metrics::DetPoint;
use ivec_core::synth::{LabeledIvector, Partition};
use ivec_core::{KeyEntry, ScoreSet, Trial, TrialKey};
use nalgebra::DVector;

use crate::error::{CliError, CliResult};

pub const SCORE_HEADER: &str = "model_id\ttest_utt_id\tscore";
pub const IVEC_MAGIC: &[u8; 5] = b"IVEC1";

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Fail with [`CliError::MissingArtifact`] naming `stage` when `path` is absent.
pub fn require_artifact(path: &Path, stage: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            stage: stage.to_string(),
        })
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn label(field: &str) -> Option<String> {
    (field != "-").then(|| field.to_string())
}

fn check_id(path: &Path, line: usize, id: &str) -> CliResult<()> {
    if id.is_empty() || id.contains(char::is_whitespace) {
        return Err(CliError::parse(path, line, format!("invalid id '{id}'")));
    }
    Ok(())
}

/// `utt_id<TAB>speaker|-<TAB>language|-<TAB>partition<TAB>v1 v2 ... vd`,
/// floats with 17 significant digits.
pub fn format_archive(vectors: &[LabeledIvector]) -> String {
    let mut out = String::new();
    for u in vectors {
        write!(
            out,
            "{}\t{}\t{}\t{}\t",
            u.utt_id,
            u.speaker_id.as_deref().unwrap_or("-"),
            u.language_id.as_deref().unwrap_or("-"),
            u.partition
        )
        .unwrap();
        for (i, x) in u.vector.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{x:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_archive(path: &Path, text: &str) -> CliResult<Vec<LabeledIvector>> {
    let mut out: Vec<LabeledIvector> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(CliError::parse(path, n, format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        check_id(path, n, fields[0])?;
        let partition: Partition = fields[3].parse().map_err(|e: ivec_core::Error| CliError::parse(path, n, e.to_string()))?;
        let values = fields[4]
            .split(' ')
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| CliError::parse(path, n, format!("invalid value '{s}'")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if let Some(first) = out.first() {
            if first.vector.len() != values.len() {
                return Err(CliError::parse(
                    path,
                    n,
                    format!("dimension {} differs from {}", values.len(), first.vector.len()),
                ));
            }
        }
        if !seen.insert(fields[0].to_string()) {
            return Err(CliError::parse(path, n, format!("duplicate utterance id '{}'", fields[0])));
        }
        out.push(LabeledIvector {
            utt_id: fields[0].to_string(),
            vector: DVector::from_vec(values),
            speaker_id: label(fields[1]),
            language_id: label(fields[2]),
            partition,
        });
    }
    Ok(out)
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Binary archive: magic, u32 count, u32 dim, then per record four
/// length-prefixed strings (utt, speaker or `-`, language or `-`, partition),
/// then `count × dim` f64 values, all little-endian.
pub fn encode_archive(vectors: &[LabeledIvector]) -> CliResult<Vec<u8>> {
    let dim = vectors.first().map_or(0, |u| u.vector.len());
    if vectors.iter().any(|u| u.vector.len() != dim) {
        return Err(ivec_core::Error::Shape("archive: vectors differ in dimension".into()).into());
    }
    let mut buf = Vec::with_capacity(13 + vectors.len() * (dim * 8 + 48));
    buf.extend_from_slice(IVEC_MAGIC);
    buf.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for u in vectors {
        put_str(&mut buf, &u.utt_id);
        put_str(&mut buf, u.speaker_id.as_deref().unwrap_or("-"));
        put_str(&mut buf, u.language_id.as_deref().unwrap_or("-"));
        put_str(&mut buf, u.partition.as_str());
    }
    for u in vectors {
        for x in u.vector.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::format(self.path, "truncated archive"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> CliResult<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CliError::format(self.path, "invalid UTF-8 id"))
    }
}

pub fn decode_archive(path: &Path, bytes: &[u8]) -> CliResult<Vec<LabeledIvector>> {
    let mut c = Cursor { path, bytes, pos: 0 };
    if c.take(5)? != IVEC_MAGIC {
        return Err(CliError::format(path, "bad magic, expected IVEC1"));
    }
    let count = c.u32()? as usize;
    let dim = c.u32()? as usize;
    let mut headers = Vec::with_capacity(count);
    for _ in 0..count {
        let utt = c.string()?;
        let spk = c.string()?;
        let lang = c.string()?;
        let partition: Partition = c.string()?.parse()?;
        headers.push((utt, spk, lang, partition));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    for (utt, spk, lang, partition) in headers {
        let raw = c.take(dim * 8)?;
        let vector = DVector::from_iterator(dim, raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())));
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(CliError::format(path, format!("non-finite value in {utt}")));
        }
        if !seen.insert(utt.clone()) {
            return Err(CliError::format(path, format!("duplicate utterance id '{utt}'")));
        }
        out.push(LabeledIvector {
            utt_id: utt,
            vector,
            speaker_id: label(&spk),
            language_id: label(&lang),
            partition,
        });
    }
    if c.pos != bytes.len() {
        return Err(CliError::format(path, "trailing bytes after payload"));
    }
    Ok(out)
}

/// Read either archive variant, detected by the binary magic.
pub fn read_archive(path: &Path) -> CliResult<Vec<LabeledIvector>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(IVEC_MAGIC) {
        decode_archive(path, &bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| CliError::format(path, "archive is not UTF-8"))?;
        parse_archive(path, &text)
    }
}

/// One `model_id<TAB>utt_id` line per enrollment segment.
pub fn format_enrollment(enrollment: &BTreeMap<String, Vec<String>>) -> String {
    let mut out = String::new();
    for (model, utts) in enrollment {
        for u in utts {
            writeln!(out, "{model}\t{u}").unwrap();
        }
    }
    out
}

pub fn parse_enrollment(path: &Path, text: &str) -> CliResult<BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CliError::parse(path, i + 1, "expected model_id<TAB>utt_id"));
        }
        check_id(path, i + 1, fields[0])?;
        check_id(path, i + 1, fields[1])?;
        out.entry(fields[0].to_string()).or_default().push(fields[1].to_string());
    }
    Ok(out)
}

pub fn format_trials<'a>(trials: impl IntoIterator<Item = &'a Trial>) -> String {
    let mut out = String::new();
    for t in trials {
        writeln!(out, "{}\t{}", t.model_id, t.test_id).unwrap();
    }
    out
}

pub fn parse_trials(path: &Path, text: &str) -> CliResult<Vec<Trial>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CliError::parse(path, i + 1, "expected model_id<TAB>test_utt_id"));
        }
        check_id(path, i + 1, fields[0])?;
        check_id(path, i + 1, fields[1])?;
        let t = Trial::new(fields[0], fields[1]);
        if !seen.insert(t.clone()) {
            return Err(CliError::parse(path, i + 1, "duplicate trial"));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn format_key(key: &TrialKey) -> String {
    let mut out = String::new();
    for e in key.entries() {
        let label = if e.is_target { "target" } else { "nontarget" };
        writeln!(out, "{}\t{}\t{label}", e.trial.model_id, e.trial.test_id).unwrap();
    }
    out
}

pub fn parse_key(path: &Path, text: &str) -> CliResult<TrialKey> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CliError::parse(path, i + 1, "expected model_id<TAB>test_utt_id<TAB>target|nontarget"));
        }
        check_id(path, i + 1, fields[0])?;
        check_id(path, i + 1, fields[1])?;
        let is_target = match fields[2] {
            "target" => true,
            "nontarget" => false,
            other => return Err(CliError::parse(path, i + 1, format!("invalid label '{other}'"))),
        };
        entries.push(KeyEntry {
            trial: Trial::new(fields[0], fields[1]),
            is_target,
        });
    }
    TrialKey::new(entries).map_err(|e| CliError::parse(path, 0, e.to_string()))
}

/// Header line, then one trial per line in sorted order with 6 decimals.
pub fn format_scores(scores: &ScoreSet) -> String {
    let mut out = String::with_capacity(32 * (scores.len() + 1));
    out.push_str(SCORE_HEADER);
    out.push('\n');
    for (t, s) in scores.iter() {
        writeln!(out, "{}\t{}\t{s:.6}", t.model_id, t.test_id).unwrap();
    }
    out
}

pub fn parse_scores(path: &Path, text: &str) -> CliResult<ScoreSet> {
    let mut out = ScoreSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line == SCORE_HEADER) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CliError::parse(path, i + 1, "expected model_id<TAB>test_utt_id<TAB>score"));
        }
        check_id(path, i + 1, fields[0])?;
        check_id(path, i + 1, fields[1])?;
        let s: f64 = fields[2]
            .parse()
            .map_err(|_| CliError::parse(path, i + 1, format!("invalid score '{}'", fields[2])))?;
        out.insert(Trial::new(fields[0], fields[1]), s)
            .map_err(|e| CliError::parse(path, i + 1, e.to_string()))?;
    }
    Ok(out)
}

pub fn format_det(points: &[DetPoint]) -> String {
    let mut out = String::from("threshold\tp_fa\tp_miss\n");
    for p in points {
        writeln!(out, "{:.6}\t{:.8}\t{:.8}", p.threshold, p.p_fa, p.p_miss).unwrap();
    }
    out
}
