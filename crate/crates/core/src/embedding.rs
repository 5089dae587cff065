//! Dense unit vectors keyed by document or keyword id, with exact
//! similarity scans.
//!
//! Vectors are L2-normalized on insertion so cosine similarity is a plain
//! dot product. Components are stored as `f32` and accumulated in `f64`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VECTOR_MAGIC: &[u8; 4] = b"RAIV";
pub const VECTOR_VERSION: u32 = 1;
const TEXT_HEADER: &str = "#vectors";

/// Norm tolerance applied to rows read from a vector file.
pub const LOAD_NORM_TOLERANCE: f64 = 1e-3;

/// Rows this close to unit norm are stored as given.
const UNIT_SLACK: f64 = 1e-7;

/// Cosine similarity in `[-1, 1]`; its distance is `1 - value`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn new(value: f64) -> Self {
        SimilarityScore(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn distance(self) -> f64 {
        1.0 - self.0
    }
}

fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum()
}

fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// `<u, v> / (|u| |v|)`.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<SimilarityScore> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok(SimilarityScore::new(dot(u, v) / (nu * nv)))
}

/// Orders candidates by descending score, then ascending key. Total, so a
/// parallel reduction picks the same winner in any scan order.
pub(crate) fn better(a: (&str, f64), b: (&str, f64)) -> bool {
    match a.1.total_cmp(&b.1) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.0 < b.0,
    }
}

/// Nearest-rank percentile: the `ceil(p/100 * N)`-th smallest score.
pub fn percentile_threshold(scores: &[f64], p: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("percentile of an empty multiset"));
    }
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::invalid(format!("percentile {p} outside (0, 100)")));
    }
    let n = scores.len();
    let idx = nearest_rank(n, p) - 1;
    let mut buf = scores.to_vec();
    let (_, v, _) = buf.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(*v)
}

/// 1-based nearest rank `ceil(p * n / 100)`, clamped to `[1, n]`.
pub fn nearest_rank(n: usize, p: f64) -> usize {
    let exact = p * n as f64 / 100.0;
    let rounded = exact.round();
    let rank = if (exact - rounded).abs() < 1e-9 {
        rounded
    } else {
        exact.ceil()
    };
    (rank as usize).clamp(1, n)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorLoadReport {
    pub rows: usize,
    /// `(key, reason)` for rejected rows.
    pub rejected: Vec<(String, String)>,
}

/// Fixed-dimension unit vectors keyed by string.
#[derive(Debug, Clone)]
pub struct VectorStore {
    dim: usize,
    model_id: String,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl VectorStore {
    pub fn new(dim: usize, model_id: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("vector dimension must be positive"));
        }
        Ok(VectorStore {
            dim,
            model_id: model_id.into(),
            keys: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    /// Inserts `vector` scaled to unit norm. Zero vectors, wrong dimensions
    /// and duplicate keys are rejected.
    pub fn insert(&mut self, key: impl Into<String>, vector: &[f32]) -> Result<()> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        let n = norm(vector);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid(format!("vector `{key}` has zero or non-finite norm")));
        }
        if self.index.contains_key(&key) {
            return Err(Error::DuplicateId(key));
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        if (n - 1.0).abs() <= UNIT_SLACK {
            // already unit length; rescaling would only jitter the last bit
            self.data.extend_from_slice(vector);
        } else {
            self.data.extend(vector.iter().map(|&x| (x as f64 / n) as f32));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index
            .get(key)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn require(&self, key: &str) -> Result<&[f32]> {
        self.get(key).ok_or_else(|| Error::MissingVector(key.to_owned()))
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<SimilarityScore> {
        Ok(SimilarityScore::new(dot(self.require(a)?, self.require(b)?)))
    }

    /// Best candidate for `query`; ties go to the lexicographically
    /// smallest key.
    pub fn top_match<S: AsRef<str> + Sync>(&self, query: &str, candidates: &[S]) -> Result<(String, SimilarityScore)> {
        let q = self.require(query)?;
        self.top_match_vector(q, candidates)
    }

    pub fn top_match_vector<S: AsRef<str> + Sync>(
        &self,
        query: &[f32],
        candidates: &[S],
    ) -> Result<(String, SimilarityScore)> {
        if candidates.is_empty() {
            return Err(Error::invalid("top_match over an empty candidate set"));
        }
        let scored: Vec<(&str, f64)> = candidates
            .par_iter()
            .map(|c| {
                let key = c.as_ref();
                self.require(key).map(|v| (key, dot(query, v)))
            })
            .collect::<Result<_>>()?;
        let best = scored
            .into_iter()
            .reduce(|a, b| if better(b, a) { b } else { a })
            .expect("non-empty");
        Ok((best.0.to_owned(), SimilarityScore::new(best.1)))
    }

    pub fn save_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(VECTOR_MAGIC)?;
        out.write_all(&VECTOR_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.keys.len() as u64).to_le_bytes())?;
        out.write_all(&(self.model_id.len() as u32).to_le_bytes())?;
        out.write_all(self.model_id.as_bytes())?;
        for (i, key) in self.keys.iter().enumerate() {
            out.write_all(&(key.len() as u32).to_le_bytes())?;
            out.write_all(key.as_bytes())?;
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TEXT_HEADER} dim={} count={} model={}", self.dim, self.len(), self.model_id)?;
        for (i, key) in self.keys.iter().enumerate() {
            write!(out, "{key}")?;
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(out, "\t{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.save_binary(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    /// Accepts a row read from a file: norm must be within the load
    /// tolerance of 1. Rejections are recorded, or abort when `strict`.
    fn accept_row(&mut self, key: String, v: Vec<f32>, strict: bool, report: &mut VectorLoadReport) -> Result<()> {
        report.rows += 1;
        let n = norm(&v);
        let reason = if !n.is_finite() || (n - 1.0).abs() > LOAD_NORM_TOLERANCE {
            Some(format!("norm {n} outside 1 ± {LOAD_NORM_TOLERANCE}"))
        } else if self.contains(&key) {
            Some("duplicate key".to_owned())
        } else {
            None
        };
        match reason {
            Some(r) if strict => Err(Error::invalid(format!("vector `{key}`: {r}"))),
            Some(r) => {
                report.rejected.push((key, r));
                Ok(())
            }
            None => self.insert(key, &v),
        }
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b).map_err(truncated)?;
    String::from_utf8(b).map_err(|e| Error::invalid(format!("non-UTF-8 string: {e}")))
}

fn truncated(e: std::io::Error) -> Error {
    Error::invalid(format!("truncated vector file: {e}"))
}

/// Reads the binary format. The magic must already be consumed.
fn load_binary_body<R: Read>(mut r: R, strict: bool) -> Result<(VectorStore, VectorLoadReport)> {
    let version = read_u32(&mut r).map_err(truncated)?;
    if version != VECTOR_VERSION {
        return Err(Error::invalid(format!("unsupported vector file version {version}")));
    }
    let dim = read_u32(&mut r).map_err(truncated)? as usize;
    let count = read_u64(&mut r).map_err(truncated)?;
    let mlen = read_u32(&mut r).map_err(truncated)? as usize;
    let model_id = read_string(&mut r, mlen)?;
    let mut store = VectorStore::new(dim, model_id)?;
    let mut report = VectorLoadReport::default();
    let mut buf = vec![0u8; dim * 4];
    for _ in 0..count {
        let klen = read_u32(&mut r).map_err(truncated)? as usize;
        let key = read_string(&mut r, klen)?;
        r.read_exact(&mut buf).map_err(truncated)?;
        let v: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.accept_row(key, v, strict, &mut report)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(truncated)? != 0 {
        return Err(Error::invalid("trailing bytes after declared row count"));
    }
    Ok((store, report))
}

fn parse_header_field<'a>(header: &'a str, name: &str) -> Result<&'a str> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(name).and_then(|t| t.strip_prefix('=')))
        .ok_or_else(|| Error::invalid(format!("vector text header lacks `{name}=`")))
}

/// Reads the line-delimited text format: a `#vectors dim=D count=N model=M`
/// header, then `key<TAB>x1<TAB>...<TAB>xD` rows.
pub fn load_text<R: BufRead>(reader: R, strict: bool) -> Result<(VectorStore, VectorLoadReport)> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty vector file"))?
        .map_err(|e| Error::invalid(e.to_string()))?;
    if !header.starts_with(TEXT_HEADER) {
        return Err(Error::invalid("missing `#vectors` header"));
    }
    let dim: usize = parse_header_field(&header, "dim")?
        .parse()
        .map_err(|_| Error::invalid("bad dim in header"))?;
    let count: usize = parse_header_field(&header, "count")?
        .parse()
        .map_err(|_| Error::invalid("bad count in header"))?;
    let model = parse_header_field(&header, "model")?;
    let mut store = VectorStore::new(dim, model)?;
    let mut report = VectorLoadReport::default();
    let mut seen = 0;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::Malformed {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        let mut parts = line.split('\t');
        let key = parts.next().unwrap_or_default().to_owned();
        let v: Vec<f32> = parts
            .map(|t| t.trim().parse::<f32>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Malformed {
                line: lineno,
                message: e.to_string(),
            })?;
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        store.accept_row(key, v, strict, &mut report)?;
    }
    if seen != count {
        return Err(Error::invalid(format!("header declares {count} rows, found {seen}")));
    }
    Ok((store, report))
}

pub fn load_binary<R: Read>(mut r: R, strict: bool) -> Result<(VectorStore, VectorLoadReport)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != VECTOR_MAGIC {
        return Err(Error::invalid("bad vector file magic"));
    }
    load_binary_body(r, strict)
}

/// Loads a vector file, detecting binary or text format from the first bytes.
pub fn load_vectors(path: &Path, strict: bool) -> Result<(VectorStore, VectorLoadReport)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let head = r.fill_buf().map_err(|e| Error::io(path, e))?;
    if head.starts_with(VECTOR_MAGIC) {
        load_binary(r, strict)
    } else {
        load_text(r, strict)
    }
}

/// Deterministic stand-in for a sentence encoder.
///
/// Text is lowercased and split into alphanumeric tokens. Each token (at a
/// low weight) and each boundary-padded character trigram is hashed (seeded
/// FNV-1a with a splitmix finalizer) to a signed coordinate, and the result
/// is normalized. Trigrams dominate so that a couple of typos move a title
/// only slightly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        MockEmbedder { dim: 256, seed: 0 }
    }
}

const WORD_WEIGHT: f64 = 0.25;
const TRIGRAM_WEIGHT: f64 = 1.0;

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        MockEmbedder { dim, seed }
    }

    pub fn model_id(&self) -> String {
        format!("mock-hash-v1-d{}-s{}", self.dim, self.seed)
    }

    fn hash(&self, kind: u8, feature: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.seed.to_le_bytes().iter().chain([kind].iter()).chain(feature.as_bytes()) {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // splitmix64 finalizer
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^ (h >> 31)
    }

    fn add(&self, acc: &mut [f64], kind: u8, feature: &str, weight: f64) {
        let h = self.hash(kind, feature);
        let idx = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[idx] += sign * weight;
    }

    /// Embeds `text`; text without any alphanumeric token is an error.
    pub fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            return Err(Error::invalid("cannot embed text without tokens"));
        }
        let mut acc = vec![0.0f64; self.dim];
        for t in &tokens {
            self.add(&mut acc, b'w', t, WORD_WEIGHT);
            let padded: Vec<char> = std::iter::once('#').chain(t.chars()).chain(std::iter::once('#')).collect();
            for w in padded.windows(3) {
                let tri: String = w.iter().collect();
                self.add(&mut acc, b'c', &tri, TRIGRAM_WEIGHT);
            }
        }
        let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            // every feature cancelled out; fall back to the first token alone
            self.add(&mut acc, b'w', tokens[0], WORD_WEIGHT);
            return Ok(acc.iter().map(|&x| x as f32).collect());
        }
        Ok(acc.iter().map(|&x| (x / n) as f32).collect())
    }

    /// Embeds each `(key, text)` pair into a new store.
    pub fn embed_all<'a>(&self, items: impl IntoIterator<Item = (String, &'a str)>) -> Result<VectorStore> {
        let items: Vec<(String, &str)> = items.into_iter().collect();
        let vectors: Vec<Vec<f32>> = items
            .par_iter()
            .map(|(k, t)| self.embed(t).map_err(|e| Error::invalid(format!("{k}: {e}"))))
            .collect::<Result<_>>()?;
        let mut store = VectorStore::new(self.dim, self.model_id())?;
        for ((k, _), v) in items.into_iter().zip(vectors) {
            store.insert(k, &v)?;
        }
        Ok(store)
    }

    /// Embeds into an existing store, skipping keys already present.
    pub fn extend_store<'a>(&self, store: &mut VectorStore, items: impl IntoIterator<Item = (String, &'a str)>) -> Result<()> {
        if store.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: store.dim(),
                found: self.dim,
            });
        }
        let items: Vec<(String, &str)> = items.into_iter().filter(|(k, _)| !store.contains(k)).collect();
        let vectors: Vec<Vec<f32>> = items
            .par_iter()
            .map(|(k, t)| self.embed(t).map_err(|e| Error::invalid(format!("{k}: {e}"))))
            .collect::<Result<_>>()?;
        for ((k, _), v) in items.into_iter().zip(vectors) {
            if !store.contains(&k) {
                store.insert(k, &v)?;
            }
        }
        Ok(())
    }
}


/// Store key conventions shared by the pipeline and external embedders.
pub mod keys {
    /// Text used for topic classification (abstract, or title + abstract).
    pub fn document(paper_id: &str) -> String {
        format!("doc:{paper_id}")
    }

    pub fn title(paper_id: &str) -> String {
        format!("title:{paper_id}")
    }

    /// Extracted title of the `index`-th NPL reference of a patent.
    pub fn reference(patent_id: &str, index: usize) -> String {
        format!("ref:{patent_id}:{index}")
    }

    pub fn keyword(variant: &str) -> String {
        format!("kw:{variant}")
    }
}
