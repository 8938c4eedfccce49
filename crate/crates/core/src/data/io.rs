//! Binary embedding/matrix files and the CSV manifests shared across commands.
//!
//! Embedding file layout (all little-endian):
//!
//! ```text
//! "VPE1" | version u32 | count u64 | dim u32 | count*dim f32
//!        | count x (subject len u32, subject utf-8, media len u32, media utf-8, kind u8)
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{Embedding, EmbeddingMatrix, EmbeddingSet, Score, SimilarityMatrix, SourceKind, Template};
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"VPE1";
pub const MATRIX_MAGIC: &[u8; 4] = b"VPW1";
pub const FORMAT_VERSION: u32 = 1;

const EMBEDDING_HEADER_LEN: usize = 4 + 4 + 8 + 4;
const MATRIX_HEADER_LEN: usize = 4 + 4 + 4 + 4;

/// Literal used for MISSING entries in similarity CSV files.
pub const MISSING_TOKEN: &str = "MISSING";

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], pos: usize) -> Self {
        Self { buf, pos }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(Error::TruncatedPayload { expected: self.pos.saturating_add(n), found: self.buf.len() })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::Parse(format!("label is not UTF-8: {e}")))
    }
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_embeddings(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMBEDDING_HEADER_LEN + set.len() * set.dim() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    for e in set.items() {
        for &v in &e.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for e in set.items() {
        put_string(&mut out, &e.subject_id);
        put_string(&mut out, &e.media_id);
        out.push(e.source_kind.to_byte());
    }
    out
}

pub fn decode_embeddings(buf: &[u8]) -> Result<EmbeddingSet> {
    if buf.len() < EMBEDDING_HEADER_LEN {
        return Err(Error::MalformedHeader(format!("need {EMBEDDING_HEADER_LEN} header bytes, found {}", buf.len())));
    }
    if &buf[0..4] != EMBEDDING_MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {:?}", &buf[0..4])));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(buf[16..20].try_into().unwrap()) as usize;
    let count =
        usize::try_from(count).map_err(|_| Error::MalformedHeader(format!("count {count} does not fit in memory")))?;
    let payload = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::MalformedHeader(format!("count {count} x dim {dim} overflows")))?;
    if buf.len() < EMBEDDING_HEADER_LEN + payload {
        return Err(Error::TruncatedPayload { expected: EMBEDDING_HEADER_LEN + payload, found: buf.len() });
    }
    let floats = &buf[EMBEDDING_HEADER_LEN..EMBEDDING_HEADER_LEN + payload];
    let mut cur = Cursor::new(buf, EMBEDDING_HEADER_LEN + payload);
    let mut items = Vec::with_capacity(count);
    for i in 0..count {
        let values = floats[i * dim * 4..(i + 1) * dim * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let subject_id = cur.string()?;
        let media_id = cur.string()?;
        let kind = SourceKind::from_byte(cur.take(1)?[0])?;
        items.push(Embedding::new(values, subject_id, media_id, kind));
    }
    if cur.pos != buf.len() {
        return Err(Error::Parse(format!("{} trailing bytes after label block", buf.len() - cur.pos)));
    }
    EmbeddingSet::new(dim, items)
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    fs::write(path, encode_embeddings(set)).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&buf)
}

/// Loads and checks the dimension against what the caller needs.
pub fn load_embeddings_with_dim(path: &Path, dim: usize) -> Result<EmbeddingSet> {
    let set = load_embeddings(path)?;
    if set.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: set.dim() });
    }
    Ok(set)
}

pub fn encode_matrix(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(MATRIX_HEADER_LEN + m.as_slice().len() * 4);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_matrix(buf: &[u8]) -> Result<EmbeddingMatrix> {
    if buf.len() < MATRIX_HEADER_LEN || &buf[0..4] != MATRIX_MAGIC {
        return Err(Error::MalformedHeader("not a VPW1 matrix file".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    let rows = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let expected = MATRIX_HEADER_LEN + rows * cols * 4;
    if buf.len() != expected {
        return Err(Error::TruncatedPayload { expected, found: buf.len() });
    }
    let data =
        buf[MATRIX_HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    EmbeddingMatrix::from_row_major(rows, cols, data)
}

pub fn write_matrix(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    fs::write(path, encode_matrix(m)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&buf)
}

/// One line of a template manifest. An empty `embedding_index` marks a template
/// that has no usable faces (it scores as MISSING).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ManifestRow {
    pub template_id: String,
    pub subject_id: String,
    pub media_id: String,
    pub embedding_index: Option<usize>,
}

/// Groups manifest rows into templates, in order of first appearance.
pub fn templates_from_rows(rows: &[ManifestRow]) -> Result<Vec<Template>> {
    let mut order: Vec<Template> = Vec::new();
    let mut pos: HashMap<&str, usize> = HashMap::new();
    for row in rows {
        let idx = *pos.entry(row.template_id.as_str()).or_insert_with(|| {
            order.push(Template::missing(row.template_id.clone(), row.subject_id.clone()));
            order.len() - 1
        });
        let t = &mut order[idx];
        if t.subject_id != row.subject_id {
            return Err(Error::Parse(format!(
                "template `{}` listed with subjects `{}` and `{}`",
                row.template_id, t.subject_id, row.subject_id
            )));
        }
        if let Some(i) = row.embedding_index {
            t.members.push(i);
            t.missing = false;
        }
    }
    Ok(order)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Manifest rows for a set of templates, one row per member.
pub fn manifest_rows(templates: &[Template], set: &EmbeddingSet) -> Vec<ManifestRow> {
    let mut rows = Vec::new();
    for t in templates {
        if t.members.is_empty() {
            rows.push(ManifestRow {
                template_id: t.template_id.clone(),
                subject_id: t.subject_id.clone(),
                media_id: String::new(),
                embedding_index: None,
            });
        }
        for &m in &t.members {
            rows.push(ManifestRow {
                template_id: t.template_id.clone(),
                subject_id: t.subject_id.clone(),
                media_id: set.get(m).map(|e| e.media_id.clone()).unwrap_or_default(),
                embedding_index: Some(m),
            });
        }
    }
    rows
}

pub fn format_score(s: Score) -> String {
    match s {
        Some(v) => format!("{v}"),
        None => MISSING_TOKEN.to_string(),
    }
}

pub fn parse_score(field: &str) -> Result<Score> {
    let field = field.trim();
    if field == MISSING_TOKEN {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| Error::Parse(format!("bad score `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("non-finite score `{field}`; use {MISSING_TOKEN}")));
    }
    Ok(Some(v))
}

/// Header cell is `gallery`, followed by probe ids; each row starts with a gallery id.
pub fn encode_similarity(m: &SimilarityMatrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["gallery".to_string()];
    header.extend(m.probe_ids().iter().cloned());
    w.write_record(&header)?;
    for (g, gid) in m.gallery_ids().iter().enumerate() {
        let mut rec = vec![gid.clone()];
        rec.extend((0..m.n_probe()).map(|p| format_score(m.get(g, p))));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

pub fn decode_similarity(buf: &[u8]) -> Result<SimilarityMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(buf);
    let mut records = rdr.records();
    let header = records.next().ok_or_else(|| Error::Parse("empty similarity file".into()))??;
    let probe_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut gallery_ids = Vec::new();
    let mut scores = Vec::new();
    for rec in records {
        let rec = rec?;
        if rec.len() != probe_ids.len() + 1 {
            return Err(Error::Parse(format!(
                "row for `{}` has {} fields, expected {}",
                rec.get(0).unwrap_or(""),
                rec.len(),
                probe_ids.len() + 1
            )));
        }
        gallery_ids.push(rec[0].to_string());
        for f in rec.iter().skip(1) {
            scores.push(parse_score(f)?);
        }
    }
    SimilarityMatrix::new(gallery_ids, probe_ids, scores)
}

pub fn write_similarity(path: &Path, m: &SimilarityMatrix) -> Result<()> {
    let bytes = encode_similarity(m)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_similarity(path: &Path) -> Result<SimilarityMatrix> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_similarity(&buf)
}
