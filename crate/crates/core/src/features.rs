//! Raw tabular ingestion: field declarations, vocabularies with infrequent
//! token collapsing, numeric discretization, instance encoding, and the
//! binary encoded-dataset format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;

pub const SCHEMA_VERSION: u32 = 1;
pub const ENCODED_MAGIC: &[u8; 4] = b"GDCN";
pub const ENCODED_VERSION: u32 = 1;

/// Token assigned to missing or non-finite numeric values.
pub const MISSING_TOKEN: &str = "<missing>";
/// Display name of the per-field dummy feature.
pub const UNKNOWN_TOKEN: &str = "<unknown>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub kind: FieldKind,
}

/// Parses a sidecar declaration: one `name,kind` pair per line. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_field_decls(text: &str) -> Result<Vec<FieldDecl>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, kind) = line
            .split_once(',')
            .ok_or_else(|| Error::Schema(format!("line {}: expected `name,kind`", lineno + 1)))?;
        let kind = match kind.trim() {
            "categorical" => FieldKind::Categorical,
            "numeric" => FieldKind::Numeric,
            other => {
                return Err(Error::Schema(format!(
                    "line {}: unknown field kind `{other}`",
                    lineno + 1
                )))
            }
        };
        out.push(FieldDecl {
            name: name.trim().to_string(),
            kind,
        });
    }
    if out.is_empty() {
        return Err(Error::Schema("field declaration lists no fields".into()));
    }
    Ok(out)
}

pub fn read_field_decls(path: impl AsRef<Path>) -> Result<Vec<FieldDecl>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field_decls(&text)
}

/// One raw input row: the label column and one raw value per field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub label: String,
    pub values: Vec<String>,
}

/// Reads a header-declared CSV whose first column is `label`.
pub fn read_raw_csv(path: impl AsRef<Path>, decls: &[FieldDecl]) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw_csv_from(file, decls)
}

pub fn read_raw_csv_from<R: Read>(reader: R, decls: &[FieldDecl]) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("label") {
        return Err(Error::Schema("first CSV column must be `label`".into()));
    }
    if headers.len() != decls.len() + 1 {
        return Err(Error::Schema(format!(
            "CSV header has {} field columns, declaration lists {}",
            headers.len() - 1,
            decls.len()
        )));
    }
    for (h, d) in headers.iter().skip(1).zip(decls) {
        if h.trim() != d.name {
            return Err(Error::Schema(format!(
                "CSV column `{h}` does not match declared field `{}`",
                d.name
            )));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut it = rec.iter();
        let label = it.next().unwrap_or("").trim().to_string();
        rows.push(RawRecord {
            label,
            values: it.map(|s| s.trim().to_string()).collect(),
        });
    }
    Ok(rows)
}

/// Writes records in the layout [`read_raw_csv`] expects.
pub fn write_raw_csv(path: impl AsRef<Path>, decls: &[FieldDecl], rows: &[RawRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(std::iter::once("label").chain(decls.iter().map(|d| d.name.as_str())))?;
    for r in rows {
        w.write_record(std::iter::once(r.label.as_str()).chain(r.values.iter().map(String::as_str)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Declarations in the `name,kind` line format.
pub fn format_field_decls(decls: &[FieldDecl]) -> String {
    decls
        .iter()
        .map(|d| {
            let kind = match d.kind {
                FieldKind::Categorical => "categorical",
                FieldKind::Numeric => "numeric",
            };
            format!("{},{kind}\n", d.name)
        })
        .collect()
}

/// Maps a numeric value to its token: `⌊log₂ z⌋` above 2, `⌊z⌋` otherwise.
/// Missing, NaN and infinite values share [`MISSING_TOKEN`].
pub fn discretize_numeric(z: Option<f64>) -> String {
    match z {
        Some(z) if z.is_finite() => {
            let bucket = if z > 2.0 { z.log2().floor() } else { z.floor() };
            format!("{}", bucket as i64)
        }
        _ => MISSING_TOKEN.to_string(),
    }
}

/// Raw numeric cell to token. Empty and unparseable cells count as missing.
pub fn numeric_token(raw: &str) -> String {
    let raw = raw.trim();
    if raw.is_empty() {
        return discretize_numeric(None);
    }
    discretize_numeric(raw.parse::<f64>().ok())
}

fn token_for(kind: FieldKind, raw: &str) -> std::borrow::Cow<'_, str> {
    match kind {
        FieldKind::Categorical => std::borrow::Cow::Borrowed(raw),
        FieldKind::Numeric => std::borrow::Cow::Owned(numeric_token(raw)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
    /// Kept tokens in index order; the unknown index follows them.
    pub vocabulary: Vec<String>,
    pub unknown_index: u32,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl FieldSchema {
    fn new(name: String, kind: FieldKind, vocabulary: Vec<String>) -> Self {
        let unknown_index = vocabulary.len() as u32;
        let mut f = FieldSchema {
            name,
            kind,
            vocabulary,
            unknown_index,
            lookup: HashMap::new(),
        };
        f.reindex();
        f
    }

    fn reindex(&mut self) {
        self.lookup = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    /// `|E_f|`: kept tokens plus the unknown slot.
    pub fn size(&self) -> usize {
        self.vocabulary.len() + 1
    }

    /// Index for an already-tokenized value.
    pub fn index_of_token(&self, token: &str) -> u32 {
        self.lookup.get(token).copied().unwrap_or(self.unknown_index)
    }

    /// Index for a raw cell, applying numeric discretization when needed.
    pub fn index_of(&self, raw: &str) -> u32 {
        self.index_of_token(&token_for(self.kind, raw))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub schema_version: u32,
    pub threshold: u64,
    pub fields: Vec<FieldSchema>,
    pub total_features: usize,
}

impl DatasetSchema {
    pub fn from_fields(threshold: u64, fields: Vec<FieldSchema>) -> Self {
        let total_features = fields.iter().map(FieldSchema::size).sum();
        DatasetSchema {
            schema_version: SCHEMA_VERSION,
            threshold,
            fields,
            total_features,
        }
    }

    /// A schema with anonymous categorical fields of the given sizes, used for
    /// synthetic data where tokens are just indices.
    pub fn synthetic(sizes: &[usize]) -> Self {
        let fields = sizes
            .iter()
            .enumerate()
            .map(|(f, &n)| {
                let vocab = (0..n.saturating_sub(1)).map(|i| i.to_string()).collect();
                FieldSchema::new(format!("f{f}"), FieldKind::Categorical, vocab)
            })
            .collect();
        DatasetSchema::from_fields(1, fields)
    }

    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn field_sizes(&self) -> Vec<usize> {
        self.fields.iter().map(FieldSchema::size).collect()
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut schema: DatasetSchema = serde_json::from_str(text)?;
        if schema.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {}",
                schema.schema_version
            )));
        }
        for f in &mut schema.fields {
            if f.unknown_index as usize != f.vocabulary.len() {
                return Err(Error::Format(format!(
                    "field `{}`: unknown_index must follow the vocabulary",
                    f.name
                )));
            }
            f.reindex();
        }
        let total: usize = schema.fields.iter().map(FieldSchema::size).sum();
        if total != schema.total_features {
            return Err(Error::Format("total_features disagrees with vocabularies".into()));
        }
        Ok(schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Token-count tables for schema construction. Shards can be counted
/// independently and merged before [`SchemaBuilder::finish`].
#[derive(Debug, Clone)]
pub struct SchemaBuilder {
    decls: Vec<FieldDecl>,
    counts: Vec<HashMap<String, u64>>,
    rows: usize,
}

impl SchemaBuilder {
    pub fn new(decls: &[FieldDecl]) -> Self {
        SchemaBuilder {
            decls: decls.to_vec(),
            counts: vec![HashMap::new(); decls.len()],
            rows: 0,
        }
    }

    pub fn observe(&mut self, record: &RawRecord) -> Result<()> {
        if record.values.len() != self.decls.len() {
            return Err(Error::Arity {
                position: self.rows,
                expected: self.decls.len(),
                found: record.values.len(),
            });
        }
        for ((decl, counts), raw) in self.decls.iter().zip(&mut self.counts).zip(&record.values) {
            *counts.entry(token_for(decl.kind, raw).into_owned()).or_insert(0) += 1;
        }
        self.rows += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: SchemaBuilder) -> Result<()> {
        if other.decls != self.decls {
            return Err(Error::Schema("cannot merge counts over different fields".into()));
        }
        for (mine, theirs) in self.counts.iter_mut().zip(other.counts) {
            for (tok, n) in theirs {
                *mine.entry(tok).or_insert(0) += n;
            }
        }
        self.rows += other.rows;
        Ok(())
    }

    /// Tokens seen fewer than `threshold` times collapse to the unknown index.
    /// Kept tokens are ordered lexicographically.
    pub fn finish(self, threshold: u64) -> Result<DatasetSchema> {
        if threshold == 0 {
            return Err(Error::config("threshold must be positive"));
        }
        if self.rows == 0 {
            return Err(Error::Schema("no rows to build a schema from".into()));
        }
        let fields = self
            .decls
            .into_iter()
            .zip(self.counts)
            .map(|(decl, counts)| {
                let mut kept: Vec<String> = counts
                    .into_iter()
                    .filter(|(_, n)| *n >= threshold)
                    .map(|(t, _)| t)
                    .collect();
                kept.sort();
                FieldSchema::new(decl.name, decl.kind, kept)
            })
            .collect();
        Ok(DatasetSchema::from_fields(threshold, fields))
    }
}

pub fn build_schema<'a, I>(decls: &[FieldDecl], rows: I, threshold: u64) -> Result<DatasetSchema>
where
    I: IntoIterator<Item = &'a RawRecord>,
{
    let mut builder = SchemaBuilder::new(decls);
    for r in rows {
        builder.observe(r)?;
    }
    builder.finish(threshold)
}

/// One instance: one feature index per field plus a binary label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInstance {
    pub indices: Vec<u32>,
    pub label: u8,
}

pub fn parse_label(raw: &str, row: usize) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Encode {
            row,
            message: format!("label `{other}` is not 0 or 1"),
        }),
    }
}

/// Encodes a raw record; `row` is only used for error context.
pub fn encode_instance(record: &RawRecord, schema: &DatasetSchema, row: usize) -> Result<EncodedInstance> {
    if record.values.len() != schema.num_fields() {
        return Err(Error::Arity {
            position: row,
            expected: schema.num_fields(),
            found: record.values.len(),
        });
    }
    let label = parse_label(&record.label, row)?;
    let indices = schema
        .fields
        .iter()
        .zip(&record.values)
        .map(|(f, raw)| f.index_of(raw))
        .collect();
    Ok(EncodedInstance { indices, label })
}

/// Column-packed storage for many encoded instances.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncodedDataset {
    pub num_fields: usize,
    pub labels: Vec<u8>,
    pub indices: Vec<u32>,
}

impl EncodedDataset {
    pub fn new(num_fields: usize) -> Self {
        EncodedDataset {
            num_fields,
            labels: Vec::new(),
            indices: Vec::new(),
        }
    }

    pub fn encode(records: &[RawRecord], schema: &DatasetSchema) -> Result<Self> {
        let mut ds = EncodedDataset::new(schema.num_fields());
        for (i, r) in records.iter().enumerate() {
            ds.push(&encode_instance(r, schema, i)?);
        }
        Ok(ds)
    }

    pub fn push(&mut self, inst: &EncodedInstance) {
        debug_assert_eq!(inst.indices.len(), self.num_fields);
        self.labels.push(inst.label);
        self.indices.extend_from_slice(&inst.indices);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[i * self.num_fields..(i + 1) * self.num_fields]
    }

    pub fn instance(&self, i: usize) -> EncodedInstance {
        EncodedInstance {
            indices: self.row(i).to_vec(),
            label: self.labels[i],
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut out = EncodedDataset::new(self.num_fields);
        out.labels.reserve(rows.len());
        out.indices.reserve(rows.len() * self.num_fields);
        for &r in rows {
            out.labels.push(self.labels[r]);
            out.indices.extend_from_slice(self.row(r));
        }
        out
    }

    pub fn positive_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / self.len() as f64
    }

    /// Checks every index against the schema's field sizes.
    pub fn validate(&self, sizes: &[usize]) -> Result<()> {
        if sizes.len() != self.num_fields {
            return Err(Error::Format(format!(
                "dataset has {} fields, expected {}",
                self.num_fields,
                sizes.len()
            )));
        }
        for i in 0..self.len() {
            for (f, (&idx, &size)) in self.row(i).iter().zip(sizes).enumerate() {
                if idx as usize >= size {
                    return Err(Error::Lookup { field: f, index: idx, size });
                }
            }
        }
        Ok(())
    }

    /// Layout: `GDCN`, version u32 LE, F u32 LE, then per row a u8 label and
    /// F u32 LE indices.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(ENCODED_MAGIC)?;
        w.write_all(&ENCODED_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_fields as u32).to_le_bytes())?;
        for i in 0..self.len() {
            w.write_all(&[self.labels[i]])?;
            for &idx in self.row(i) {
                w.write_all(&idx.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("reading encoded data: {e}")))?;
        if bytes.len() < 12 || &bytes[..4] != ENCODED_MAGIC {
            return Err(Error::Format("missing GDCN magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != ENCODED_VERSION {
            return Err(Error::Format(format!("unsupported encoded version {version}")));
        }
        let f = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let row_bytes = 1 + 4 * f;
        let body = &bytes[12..];
        if body.len() % row_bytes != 0 {
            return Err(Error::Format("truncated encoded row".into()));
        }
        let n = body.len() / row_bytes;
        let mut ds = EncodedDataset::new(f);
        ds.labels.reserve(n);
        ds.indices.reserve(n * f);
        for chunk in body.chunks_exact(row_bytes) {
            if chunk[0] > 1 {
                return Err(Error::Format(format!("label byte {} is not 0 or 1", chunk[0])));
            }
            ds.labels.push(chunk[0]);
            ds.indices.extend(
                chunk[1..]
                    .chunks_exact(4)
                    .map(|b| u32::from_le_bytes(b.try_into().unwrap())),
            );
        }
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

/// Partition ratios for train/validation/test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

/// Row ordinals of each partition, each list in ascending order.
///
/// Rows are ranked by a hash of `(seed, ordinal)` and the ranking is cut at
/// the rounded cumulative ratios, so sizes are exact to within one row.
pub fn split_indices(n: usize, ratios: SplitRatios, seed: u64) -> Result<[Vec<usize>; 3]> {
    let SplitRatios {
        train,
        validation,
        test,
    } = ratios;
    if [train, validation, test].iter().any(|r| !(0.0..=1.0).contains(r))
        || (train + validation + test - 1.0).abs() > 1e-9
    {
        return Err(Error::config(format!(
            "split ratios ({train}, {validation}, {test}) must be in [0,1] and sum to 1"
        )));
    }
    let mut order: Vec<(u64, usize)> = (0..n).map(|i| (seed::hash_ordinal(seed, i as u64), i)).collect();
    order.sort_unstable();
    let cut1 = ((n as f64) * train).round() as usize;
    let cut2 = (((n as f64) * (train + validation)).round() as usize).clamp(cut1, n);
    let mut parts = [
        order[..cut1].iter().map(|&(_, i)| i).collect::<Vec<_>>(),
        order[cut1..cut2].iter().map(|&(_, i)| i).collect::<Vec<_>>(),
        order[cut2..].iter().map(|&(_, i)| i).collect::<Vec<_>>(),
    ];
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

pub fn split_dataset<T: Clone>(rows: &[T], ratios: SplitRatios, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let [a, b, c] = split_indices(rows.len(), ratios, seed)?;
    let pick = |ids: Vec<usize>| ids.into_iter().map(|i| rows[i].clone()).collect::<Vec<T>>();
    Ok((pick(a), pick(b), pick(c)))
}
