//! File-backed report store for the concrete pipeline.
//!
//! Append-only JSONL, one report per line, keyed by the hex report id:
//!
//! ```text
//! {"ciphertext":"…","ephemeral_pub":"04…","report_id":"53cf…","upload_time":1}
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::concrete::{decode_point, encode_point, ConcreteProvider};
use crate::protocol::{LocationReport, ProtocolError, ReportStore};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    report_id: String,
    upload_time: u64,
    ephemeral_pub: String,
    ciphertext: String,
}

type Report = LocationReport<ConcreteProvider>;

pub struct FileStore {
    path: PathBuf,
    file: File,
    index: BTreeMap<[u8; 32], Vec<Report>>,
    clock: u64,
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> ProtocolError {
    ProtocolError::Store(format!("{}: {e}", path.display()))
}

fn unhex<const N: usize>(s: &str) -> Result<[u8; N], String> {
    let v = hex::decode(s).map_err(|e| e.to_string())?;
    v.try_into()
        .map_err(|v: Vec<u8>| format!("expected {N} bytes, got {}", v.len()))
}

impl FileStore {
    /// Opens (creating if needed) the store at `path` and loads what it
    /// already holds. The clock resumes after the latest upload time.
    pub fn open(path: impl AsRef<Path>) -> Result<FileStore, ProtocolError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(&path)
            .map_err(|e| store_err(&path, e))?;
        let mut index: BTreeMap<[u8; 32], Vec<Report>> = BTreeMap::new();
        let mut clock = 0;
        let reader = BufReader::new(File::open(&path).map_err(|e| store_err(&path, e))?);
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| store_err(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |e: String| store_err(&path, format!("line {}: {e}", n + 1));
            let rec: Record = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let id = unhex::<32>(&rec.report_id).map_err(bad)?;
            let pub_bytes = hex::decode(&rec.ephemeral_pub).map_err(|e| bad(e.to_string()))?;
            let report = Report {
                ciphertext: hex::decode(&rec.ciphertext).map_err(|e| bad(e.to_string()))?,
                ephemeral_pub: decode_point(&pub_bytes).map_err(|e| bad(e.to_string()))?,
                report_id: id,
                upload_time: Some(rec.upload_time),
            };
            clock = clock.max(rec.upload_time);
            index.entry(id).or_default().push(report);
        }
        Ok(FileStore {
            path,
            file,
            index,
            clock,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Number of stored reports.
    pub fn len(&self) -> usize {
        self.index.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl ReportStore<ConcreteProvider> for FileStore {
    fn put(&mut self, mut report: Report) -> Result<u64, ProtocolError> {
        let t = self.clock + 1;
        let rec = Record {
            report_id: hex::encode(report.report_id),
            upload_time: t,
            ephemeral_pub: hex::encode(encode_point(&report.ephemeral_pub)),
            ciphertext: hex::encode(&report.ciphertext),
        };
        let mut line = serde_json::to_string(&rec).map_err(|e| store_err(&self.path, e))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| store_err(&self.path, e))?;
        self.clock = t;
        report.upload_time = Some(t);
        self.index.entry(report.report_id).or_default().push(report);
        Ok(t)
    }

    fn get(&self, report_id: &[u8; 32]) -> Result<Vec<Report>, ProtocolError> {
        Ok(self.index.get(report_id).cloned().unwrap_or_default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{finder_make_report, Beacon, Journal};
    use crate::provider::CryptoProvider;

    fn report(p: &mut ConcreteProvider) -> Report {
        let d = p.fresh_secret("d");
        let beacon = Beacon {
            p_i: p.pub_of(&d),
            metadata: Vec::new(),
        };
        let mut j = Journal::new();
        finder_make_report(&beacon, &b"loc".to_vec(), &b"t".to_vec(), p, &mut j).unwrap()
    }

    #[test]
    fn survives_reopen_and_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.jsonl");
        let mut p = ConcreteProvider::from_seed(3);
        let (a, b) = (report(&mut p), report(&mut p));
        {
            let mut s = FileStore::open(&path).unwrap();
            assert_eq!(s.put(a.clone()).unwrap(), 1);
            assert_eq!(s.put(a.clone()).unwrap(), 2);
        }
        let mut s = FileStore::open(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.put(b.clone()).unwrap(), 3);
        let got = s.get(&a.report_id).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].ciphertext, a.ciphertext);
        assert_eq!(got[1].upload_time, Some(2));
        assert!(s.get(&[0u8; 32]).unwrap().is_empty());
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.contains(&format!(
            "\"report_id\":\"{}",
            &hex::encode(a.report_id)[..8]
        )) || l.contains(&hex::encode(b.report_id))));
    }

    #[test]
    fn rejects_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"report_id\":\"zz\",\"upload_time\":1,\"ephemeral_pub\":\"\",\"ciphertext\":\"\"}\n",
        )
        .unwrap();
        assert!(matches!(
            FileStore::open(&path),
            Err(ProtocolError::Store(_))
        ));
    }
}
