//! Text formats: softmax dump files, ground-truth tables and reports.
//!
//! A dump file starts with a header line
//! `# m=<int> n=<int> source_id=<str> split=<train|val|test>` followed by
//! rows `p1,...,pm,label`. Output tables begin with `# schema=<name>/<ver>`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, SoftmaxSample};
use crate::error::{Error, Result};
use crate::quantize::SoftmaxVector;
use crate::ranking::{GroundTruth, SourceDumps};

/// Highest dump format version this reader understands.
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub m: usize,
    pub n: usize,
    pub source_id: String,
    pub split: Split,
}

impl DumpHeader {
    fn parse(line: &str) -> std::result::Result<Self, String> {
        let body = line
            .strip_prefix('#')
            .ok_or("missing `# m=.. n=.. source_id=.. split=..` header")?;
        let mut fields = BTreeMap::new();
        for tok in body.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| format!("malformed header field `{tok}`"))?;
            if fields.insert(k, v).is_some() {
                return Err(format!("duplicate header field `{k}`"));
            }
        }
        if let Some(v) = fields.remove("version") {
            match v.parse::<u32>() {
                Ok(DUMP_VERSION) => {}
                _ => return Err(format!("unsupported dump version `{v}`")),
            }
        }
        let mut take = |k: &str| {
            fields
                .remove(k)
                .ok_or_else(|| format!("header lacks `{k}`"))
        };
        let m = take("m")?
            .parse()
            .map_err(|_| "header field `m` is not an integer".to_string())?;
        let n = take("n")?
            .parse()
            .map_err(|_| "header field `n` is not an integer".to_string())?;
        let source_id = take("source_id")?.to_string();
        let split = take("split")?.parse()?;
        if let Some(k) = fields.keys().next() {
            return Err(format!("unknown header field `{k}`"));
        }
        if m < 2 || n < 2 {
            return Err(format!("header needs m >= 2 and n >= 2, got m={m} n={n}"));
        }
        Ok(DumpHeader {
            m,
            n,
            source_id,
            split,
        })
    }
}

impl fmt::Display for DumpHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# m={} n={} source_id={} split={}",
            self.m, self.n, self.source_id, self.split
        )
    }
}

/// A parsed dump file.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpFile {
    pub header: DumpHeader,
    pub data: LabeledDataset,
}

/// Formats `v` with 9 significant digits and no trailing zeros.
pub fn format_value(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Optional `p1,..,pm,label` line before the first row.
fn is_column_header(cells: &[&str], m: usize) -> bool {
    cells.len() == m + 1
        && cells[m] == "label"
        && cells[..m]
            .iter()
            .enumerate()
            .all(|(i, c)| *c == format!("p{}", i + 1))
}

/// Parses dump text; `path` only labels errors.
pub fn parse_dump_str(text: &str, path: &Path) -> Result<DumpFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let header = match lines.next() {
        Some((_, l)) => DumpHeader::parse(l).map_err(|e| parse_err(path, 1, e))?,
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let mut samples = Vec::new();
    for (no, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if samples.is_empty() && is_column_header(&cells, header.m) {
            continue;
        }
        if cells.len() != header.m + 1 {
            return Err(parse_err(
                path,
                no,
                format!("expected {} fields, got {}", header.m + 1, cells.len()),
            ));
        }
        let probs = cells[..header.m]
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(path, no, format!("`{c}` is not a finite number"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let label: usize = cells[header.m].parse().map_err(|_| {
            parse_err(
                path,
                no,
                format!("label `{}` is not an integer", cells[header.m]),
            )
        })?;
        if label == 0 || label > header.n {
            return Err(parse_err(
                path,
                no,
                format!("label {label} outside [1, {}]", header.n),
            ));
        }
        // Nine significant digits leave at most 5e-10 absolute error per entry.
        let probs = SoftmaxVector::from_rounded(probs, 5e-10 * header.m as f64)
            .map_err(|e| parse_err(path, no, e.to_string()))?;
        samples.push(SoftmaxSample { probs, label });
    }
    if samples.is_empty() {
        return Err(parse_err(path, 1, "dump has no rows"));
    }
    let data =
        LabeledDataset::new(header.n, samples).map_err(|e| parse_err(path, 1, e.to_string()))?;
    Ok(DumpFile { header, data })
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<DumpFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dump_str(&text, path)
}

/// Reads a dump and returns only its dataset.
pub fn parse_dump(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    Ok(read_dump(path)?.data)
}

pub fn format_dump(header: &DumpHeader, data: &LabeledDataset) -> Result<String> {
    if header.m != data.m() || header.n != data.n() {
        return Err(Error::ShapeMismatch(format!(
            "header says m={} n={}, dataset has m={} n={}",
            header.m,
            header.n,
            data.m(),
            data.n()
        )));
    }
    let mut out = format!("{header}\n");
    for s in data.samples() {
        for v in s.probs.as_slice() {
            out.push_str(&format_value(*v));
            out.push(',');
        }
        writeln!(out, "{}", s.label).expect("writing to a String");
    }
    Ok(out)
}

pub fn write_dump(
    path: impl AsRef<Path>,
    header: &DumpHeader,
    data: &LabeledDataset,
) -> Result<()> {
    write_text(path, &format_dump(header, data)?)
}

fn header_for(source_id: &str, split: Split, data: &LabeledDataset) -> DumpHeader {
    DumpHeader {
        m: data.m(),
        n: data.n(),
        source_id: source_id.to_string(),
        split,
    }
}

/// Writes `<id>_train.csv` and `<id>_val.csv` for each source into `dir`.
pub fn write_source_dir(dir: impl AsRef<Path>, sources: &[SourceDumps]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for s in sources {
        for (split, data) in [(Split::Train, &s.train), (Split::Val, &s.val)] {
            let path = dir.join(format!("{}_{split}.csv", s.source_id));
            write_dump(&path, &header_for(&s.source_id, split, data), data)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

fn looks_like_dump(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or("").trim_start();
    Ok(first.starts_with('#') && first.contains("source_id="))
}

/// Loads every dump in `dir`, pairing train and val splits by source id.
/// Non-dump CSV files (such as a truth table) are skipped; test splits are
/// ignored. Sources come back sorted by id.
pub fn read_source_dir(dir: impl AsRef<Path>) -> Result<Vec<SourceDumps>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "csv"));
    paths.sort();

    let mut found: BTreeMap<String, (Option<LabeledDataset>, Option<LabeledDataset>)> =
        BTreeMap::new();
    for path in paths {
        if !looks_like_dump(&path)? {
            continue;
        }
        let dump = read_dump(&path)?;
        let entry = found.entry(dump.header.source_id.clone()).or_default();
        let slot = match dump.header.split {
            Split::Train => &mut entry.0,
            Split::Val => &mut entry.1,
            Split::Test => continue,
        };
        if slot.is_some() {
            return Err(parse_err(
                &path,
                1,
                format!(
                    "second {} split for `{}`",
                    dump.header.split, dump.header.source_id
                ),
            ));
        }
        *slot = Some(dump.data);
    }
    if found.is_empty() {
        return Err(Error::config(format!("no dump files in {}", dir.display())));
    }
    found
        .into_iter()
        .map(|(id, pair)| match pair {
            (Some(train), Some(val)) => {
                train.check_compatible(&val)?;
                Ok(SourceDumps {
                    source_id: id,
                    train,
                    val,
                })
            }
            (None, _) => Err(Error::config(format!("source `{id}` has no train split"))),
            (_, None) => Err(Error::config(format!("source `{id}` has no val split"))),
        })
        .collect()
}

/// Parses a `source_id,accuracy` table; an optional `# schema=truth/1`
/// line may precede the column header.
pub fn parse_truth_str(text: &str, path: &Path) -> Result<GroundTruth> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            check_schema(meta.trim(), "truth", path, no)?;
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.replace(' ', "") == "source_id,accuracy" {
                continue;
            }
        }
        let (id, acc) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, no, "expected `source_id,accuracy`"))?;
        let acc: f64 = acc.trim().parse().map_err(|_| {
            parse_err(
                path,
                no,
                format!("accuracy `{}` is not a number", acc.trim()),
            )
        })?;
        if !(0.0..=1.0).contains(&acc) {
            return Err(parse_err(
                path,
                no,
                format!("accuracy {acc} outside [0, 1]"),
            ));
        }
        rows.push((id.trim().to_string(), acc));
    }
    GroundTruth::new(rows)
}

fn check_schema(meta: &str, name: &str, path: &Path, line: usize) -> Result<()> {
    if let Some(s) = meta.strip_prefix("schema=") {
        let expected = format!("{name}/1");
        if s.trim() != expected {
            return Err(parse_err(
                path,
                line,
                format!("unsupported schema `{s}`, expected `{expected}`"),
            ));
        }
    }
    Ok(())
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_truth_str(&text, path)
}

pub fn write_truth(path: impl AsRef<Path>, truth: &GroundTruth) -> Result<()> {
    let rows: Vec<Vec<String>> = truth
        .iter()
        .map(|(id, acc)| vec![id.to_string(), format!("{acc}")])
        .collect();
    write_csv(path, "truth", &["source_id", "accuracy"], &rows)
}

/// A versioned CSV table: schema line, column header, rows.
pub fn format_csv(schema: &str, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("# schema={schema}/1\n{}\n", columns.join(","));
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(
    path: impl AsRef<Path>,
    schema: &str,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    write_text(path, &format_csv(schema, columns, rows))
}

/// Reads a table written by [`write_csv`], checking its schema name and
/// version. Returns the column names and the rows.
pub fn read_csv(path: impl AsRef<Path>, schema: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.starts_with("# schema=") => {
            check_schema(l[1..].trim_start(), schema, path, 1)?
        }
        _ => return Err(parse_err(path, 1, "missing `# schema=` line")),
    }
    let columns: Vec<String> = match lines.next() {
        Some((_, l)) => l.split(',').map(str::to_string).collect(),
        None => return Err(parse_err(path, 2, "missing column header")),
    };
    let mut rows = Vec::new();
    for (i, l) in lines {
        let row: Vec<String> = l.split(',').map(str::to_string).collect();
        if row.len() != columns.len() {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {} fields, got {}", columns.len(), row.len()),
            ));
        }
        rows.push(row);
    }
    Ok((columns, rows))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("serialising report: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
