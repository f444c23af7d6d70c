//! File formats: trace CSV, catalog CSV, SPMF transaction files and the
//! planted-itemset ground truth.

use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use crate::domain::{AccessEvent, Catalog, ObjectId, Point, Transaction, UserId, VirtualObject};
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "time,user_id,object_id,x,y";
pub const CATALOG_HEADER: &str = "object_id,size_mb,x,y";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T> {
    let raw = record
        .get(idx)
        .ok_or_else(|| parse_err(path, line, format!("missing column `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad `{name}` value {raw:?}")))
}

fn check_header(path: &Path, reader: &mut csv::Reader<fs::File>, expected: &str) -> Result<()> {
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{expected}`, found `{header}`"),
        ));
    }
    Ok(())
}

pub fn trace_to_string(trace: &[AccessEvent]) -> String {
    let mut out = String::with_capacity(32 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for ev in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            ev.time, ev.user_id, ev.object_id, ev.user_position.x, ev.user_position.y
        );
    }
    out
}

pub fn write_trace(path: &Path, trace: &[AccessEvent]) -> Result<()> {
    fs::write(path, trace_to_string(trace))?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<AccessEvent>> {
    let mut reader = csv::Reader::from_path(path)?;
    check_header(path, &mut reader, TRACE_HEADER)?;
    let mut trace = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let ev = AccessEvent {
            time: field(path, line, &record, 0, "time")?,
            user_id: UserId(field(path, line, &record, 1, "user_id")?),
            object_id: ObjectId(field(path, line, &record, 2, "object_id")?),
            user_position: Point::new(field(path, line, &record, 3, "x")?, field(path, line, &record, 4, "y")?),
        };
        if !(ev.time >= 0.0) || ev.time < last_time {
            return Err(parse_err(
                path,
                line,
                "event times must be nonnegative and nondecreasing",
            ));
        }
        last_time = ev.time;
        trace.push(ev);
    }
    Ok(trace)
}

pub fn catalog_to_string(catalog: &Catalog) -> String {
    let mut out = String::new();
    out.push_str(CATALOG_HEADER);
    out.push('\n');
    for obj in catalog.iter() {
        let _ = writeln!(out, "{},{},{},{}", obj.id, obj.size_mb, obj.position.x, obj.position.y);
    }
    out
}

pub fn write_catalog(path: &Path, catalog: &Catalog) -> Result<()> {
    fs::write(path, catalog_to_string(catalog))?;
    Ok(())
}

pub fn read_catalog(path: &Path) -> Result<Catalog> {
    let mut reader = csv::Reader::from_path(path)?;
    check_header(path, &mut reader, CATALOG_HEADER)?;
    let mut objects = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        objects.push(VirtualObject {
            id: ObjectId(field(path, line, &record, 0, "object_id")?),
            size_mb: field(path, line, &record, 1, "size_mb")?,
            position: Point::new(field(path, line, &record, 2, "x")?, field(path, line, &record, 3, "y")?),
        });
    }
    Catalog::new(objects).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Parses SPMF transactions: one whitespace-separated list of item ids per
/// line. Blank lines are skipped and duplicate items within a line dropped.
pub fn parse_spmf(reader: impl BufRead, path: &Path) -> Result<Vec<Transaction>> {
    let mut txs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut items = Vec::new();
        for tok in line.split_whitespace() {
            let id: u32 = tok
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("non-integer item {tok:?}")))?;
            items.push(ObjectId(id));
        }
        txs.push(Transaction::new(txs.len() as u64, items)?);
    }
    Ok(txs)
}

pub fn load_spmf(path: &Path) -> Result<Vec<Transaction>> {
    let file = fs::File::open(path)?;
    parse_spmf(std::io::BufReader::new(file), path)
}

pub fn spmf_to_string(transactions: &[Transaction]) -> String {
    let mut out = String::new();
    for tx in transactions {
        out.push_str(&join_ids(tx.items(), " "));
        out.push('\n');
    }
    out
}

pub fn write_spmf(path: &Path, transactions: &[Transaction]) -> Result<()> {
    fs::write(path, spmf_to_string(transactions))?;
    Ok(())
}

pub fn join_ids(ids: &[ObjectId], sep: &str) -> String {
    let mut out = String::new();
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        let _ = write!(out, "{id}");
    }
    out
}

/// One `;`-joined itemset per line.
pub fn write_itemsets(path: &Path, itemsets: &[Vec<ObjectId>]) -> Result<()> {
    let mut out = String::new();
    for set in itemsets {
        out.push_str(&join_ids(set, ";"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes `contents` to `path` through a sibling temporary file so readers
/// never observe a partially written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| format!(".{}.tmp", n.to_string_lossy()))
        .unwrap_or_else(|| ".tmp".into());
    tmp.set_file_name(name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Transaction>> {
        parse_spmf(text.as_bytes(), Path::new("mem.txt"))
    }

    fn items(tx: &Transaction) -> Vec<u32> {
        tx.items().iter().map(|o| o.0).collect()
    }

    #[test]
    fn spmf_lines() {
        let txs = parse("1 2 3\n5 5 7\n\n   \n9\n").unwrap();
        assert_eq!(txs.len(), 3);
        assert_eq!(items(&txs[0]), vec![1, 2, 3]);
        assert_eq!(items(&txs[1]), vec![5, 7]);
        assert_eq!(items(&txs[2]), vec![9]);
    }

    #[test]
    fn spmf_reports_line_number() {
        let err = parse("1 2\n3 x\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = vec![
            AccessEvent {
                time: 0.5,
                user_id: UserId(3),
                object_id: ObjectId(7),
                user_position: Point::new(1.25, -2.0),
            },
            AccessEvent {
                time: 1.0 / 3.0,
                user_id: UserId(4),
                object_id: ObjectId(8),
                user_position: Point::new(0.1, 0.2),
            },
        ];
        // second event is out of order on purpose
        write_trace(&path, &trace).unwrap();
        assert!(read_trace(&path).is_err());

        let sorted = vec![trace[1], trace[0]];
        write_trace(&path, &sorted).unwrap();
        assert_eq!(read_trace(&path).unwrap(), sorted);
    }

    #[test]
    fn catalog_header_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.csv");
        fs::write(&path, "id,size,x,y\n1,10,0,0\n").unwrap();
        assert!(matches!(read_catalog(&path), Err(Error::Parse { .. })));
    }
}
