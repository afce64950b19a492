//! Output file formats: tables (CSV or JSON), JSON reports, and trace files
//! (binary record file or CSV). See `docs/FORMATS.md`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rectdyne_core::protocols::{MemoryOutcome, PhotonTrace, Protocol, ProtocolConfig, TraceHeader};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Column {
    F64(Vec<f64>),
    U64(Vec<u64>),
    Text(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::F64(v) => v.len(),
            Column::U64(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    fn write_cell(&self, row: usize, out: &mut String) {
        match self {
            Column::F64(v) => write_f64(out, v[row]),
            Column::U64(v) => write!(out, "{}", v[row]).unwrap(),
            Column::Text(v) => out.push_str(&v[row]),
        }
    }
}

/// Shortest representation that round-trips exactly.
fn write_f64(out: &mut String, x: f64) {
    write!(out, "{x:?}").unwrap();
}

/// Column-oriented table with `key: value` metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<(String, Column)>,
}

#[derive(Serialize)]
struct JsonColumn<'a> {
    name: &'a str,
    values: &'a Column,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    meta: serde_json::Map<String, serde_json::Value>,
    columns: Vec<JsonColumn<'a>>,
}

impl Table {
    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_owned(), value.to_string()));
        self
    }

    pub fn column(mut self, name: &str, values: Column) -> Self {
        self.columns.push((name.to_owned(), values));
        self
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.1.len())
    }

    /// `# key: value` lines, a header row, then one line per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            writeln!(s, "# {k}: {v}").unwrap();
        }
        let names: Vec<&str> = self.columns.iter().map(|c| c.0.as_str()).collect();
        s.push_str(&names.join(","));
        s.push('\n');
        for r in 0..self.rows() {
            for (i, (_, c)) in self.columns.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                c.write_cell(r, &mut s);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let t = JsonTable {
            meta: self
                .meta
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
            columns: self
                .columns
                .iter()
                .map(|(name, values)| JsonColumn { name, values })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&t).expect("tables serialize infallibly");
        s.push('\n');
        s
    }

    pub fn render(&self, format: TableFormat) -> String {
        debug_assert!(self.columns.iter().all(|c| c.1.len() == self.rows()), "ragged table");
        match format {
            TableFormat::Csv => self.to_csv(),
            TableFormat::Json => self.to_json(),
        }
    }
}

/// Writes files under one directory and records their names in order.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn record(&mut self, name: &str) {
        self.written.push(name.to_owned());
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.record(name);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).expect("reports serialize infallibly");
        s.push('\n');
        self.write_text(name, &s)
    }

    /// Writes `table` as `<stem>.csv` or `<stem>.json`.
    pub fn write_table(&mut self, stem: &str, table: &Table, format: TableFormat) -> CliResult<()> {
        self.write_text(&format!("{stem}.{}", format.extension()), &table.render(format))
    }
}

pub const TRACE_MAGIC: [u8; 8] = *b"RDTRACE\0";
pub const TRACE_VERSION: u32 = 1;
const RECORD_PREFIX_BYTES: usize = 32;

/// JSON header of a binary trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceFileHeader {
    pub points_per_trace: usize,
    pub record_bytes: usize,
    pub config: ProtocolConfig,
}

/// Streaming writer of the binary trace format.
pub struct TraceFileWriter {
    out: BufWriter<File>,
    path: PathBuf,
    points: usize,
    buf: Vec<u8>,
}

impl TraceFileWriter {
    pub fn create(path: &Path, config: &ProtocolConfig) -> CliResult<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let points = config.geometry.points_per_trace;
        let header = TraceFileHeader {
            points_per_trace: points,
            record_bytes: RECORD_PREFIX_BYTES + 8 * points,
            config: config.clone(),
        };
        let json = serde_json::to_vec(&header).expect("headers serialize infallibly");
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_owned(),
            points,
            buf: Vec::with_capacity(header.record_bytes),
        };
        let mut pre = Vec::with_capacity(20 + json.len());
        pre.extend_from_slice(&TRACE_MAGIC);
        pre.extend_from_slice(&TRACE_VERSION.to_le_bytes());
        pre.extend_from_slice(&(json.len() as u64).to_le_bytes());
        pre.extend_from_slice(&json);
        w.put(&pre)?;
        Ok(w)
    }

    fn put(&mut self, bytes: &[u8]) -> CliResult<()> {
        self.out.write_all(bytes).map_err(|e| CliError::io(&self.path, e))
    }

    pub fn write(&mut self, header: &TraceHeader, counts: &[f64]) -> CliResult<()> {
        if counts.len() != self.points {
            return Err(CliError::Numerical(format!(
                "trace {} has {} points, file expects {}",
                header.index,
                counts.len(),
                self.points
            )));
        }
        let mut b = std::mem::take(&mut self.buf);
        b.clear();
        b.extend_from_slice(&header.index.to_le_bytes());
        let flags = header.kept as u8
            | (header.charge_ok as u8) << 1
            | ((header.memory_outcome == MemoryOutcome::One) as u8) << 2;
        b.push(flags);
        b.push(header.rectify_sign as u8);
        b.extend_from_slice(&[0u8; 6]);
        b.extend_from_slice(&header.alpha.to_le_bytes());
        b.extend_from_slice(&header.initial_phase.to_le_bytes());
        for c in counts {
            b.extend_from_slice(&c.to_le_bytes());
        }
        let r = self.put(&b);
        self.buf = b;
        r
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Reader of the binary trace format.
pub struct TraceFileReader {
    input: BufReader<File>,
    path: PathBuf,
    header: TraceFileHeader,
}

impl TraceFileReader {
    pub fn open(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut input = BufReader::new(file);
        let io = |e| CliError::io(path, e);
        let mut pre = [0u8; 20];
        input.read_exact(&mut pre).map_err(io)?;
        if pre[..8] != TRACE_MAGIC {
            return Err(CliError::config(format!("{}: not a trace file", path.display())));
        }
        let version = u32::from_le_bytes(pre[8..12].try_into().unwrap());
        if version != TRACE_VERSION {
            return Err(CliError::config(format!("{}: unsupported version {version}", path.display())));
        }
        let len = u64::from_le_bytes(pre[12..20].try_into().unwrap()) as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json).map_err(io)?;
        let header: TraceFileHeader =
            serde_json::from_slice(&json).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Ok(Self {
            input,
            path: path.to_owned(),
            header,
        })
    }

    pub fn header(&self) -> &TraceFileHeader {
        &self.header
    }

    /// Next record, or `None` at a clean end of file.
    pub fn next_trace(&mut self) -> CliResult<Option<PhotonTrace>> {
        let mut rec = vec![0u8; self.header.record_bytes];
        let mut filled = 0;
        while filled < rec.len() {
            match self.input.read(&mut rec[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => {
                    return Err(CliError::io(
                        &self.path,
                        std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated record"),
                    ))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(CliError::io(&self.path, e)),
            }
        }
        let f = |o: usize| f64::from_le_bytes(rec[o..o + 8].try_into().unwrap());
        let flags = rec[8];
        Ok(Some(PhotonTrace {
            index: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            protocol: self.header.config.protocol,
            kept: flags & 1 != 0,
            charge_ok: flags & 2 != 0,
            memory_outcome: if flags & 4 != 0 { MemoryOutcome::One } else { MemoryOutcome::Zero },
            rectify_sign: rec[9] as i8,
            alpha: f(16),
            initial_phase: f(24),
            counts: (0..self.header.points_per_trace)
                .map(|j| f(RECORD_PREFIX_BYTES + 8 * j))
                .collect(),
        }))
    }
}

/// Header row of the CSV trace format.
pub fn trace_csv_header(points: usize) -> String {
    let mut s = String::from("index,kept,charge_ok,memory_outcome,rectify_sign,alpha,initial_phase");
    for j in 0..points {
        write!(s, ",count_{j}").unwrap();
    }
    s.push('\n');
    s
}

pub fn trace_csv_row(out: &mut String, header: &TraceHeader, counts: &[f64]) {
    let mem = match header.memory_outcome {
        MemoryOutcome::Zero => "zero",
        MemoryOutcome::One => "one",
    };
    write!(
        out,
        "{},{},{},{},{},",
        header.index, header.kept as u8, header.charge_ok as u8, mem, header.rectify_sign
    )
    .unwrap();
    write_f64(out, header.alpha);
    out.push(',');
    write_f64(out, header.initial_phase);
    for &c in counts {
        out.push(',');
        write_f64(out, c);
    }
    out.push('\n');
}

/// Reads a two-column `(tau, signal)` CSV; `#` lines and a non-numeric
/// header row are skipped.
pub fn read_sweep_csv(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_sweep_csv(&text).map_err(|msg| CliError::config(format!("{}: {msg}", path.display())))
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',').map(str::trim);
        let (a, b) = (it.next().unwrap_or(""), it.next().unwrap_or(""));
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(t), Ok(s)) => rows.push((t, s)),
            _ if rows.is_empty() => continue,
            _ => return Err(format!("line {}: expected two numbers", n + 1)),
        }
    }
    if rows.len() < 5 {
        return Err(format!("need at least 5 rows, found {}", rows.len()));
    }
    Ok(rows)
}

/// Protocol name used in file metadata.
pub fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Qdyne => "qdyne",
        Protocol::ExSitu => "ex_situ",
        Protocol::InSitu => "in_situ",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rectdyne_core::protocols::TraceGenerator;

    #[test]
    fn csv_is_full_precision() {
        let t = Table::default()
            .meta("mode", "test")
            .column("x", Column::F64(vec![0.1, 1.0 / 3.0, 1e-300]))
            .column("k", Column::U64(vec![1, 2, 3]));
        let csv = t.to_csv();
        let body: Vec<&str> = csv.lines().skip(2).collect();
        assert_eq!(body[1].split(',').next().unwrap().parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(body[2].split(',').next().unwrap().parse::<f64>().unwrap(), 1e-300);
        assert!(csv.starts_with("# mode: test\nx,k\n"));
        let json: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(json["columns"][0]["values"][1].as_f64().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn binary_traces_round_trip() {
        let mut cfg = ProtocolConfig::reference(Protocol::ExSitu);
        cfg.geometry.points_per_trace = 40;
        cfg.n_traces = 12;
        let gen = TraceGenerator::new(cfg.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rdt");
        let mut w = TraceFileWriter::create(&path, &cfg).unwrap();
        let expected: Vec<PhotonTrace> = (0..12).map(|i| gen.trace(i)).collect();
        for t in &expected {
            w.write(&t.header(), &t.counts).unwrap();
        }
        w.finish().unwrap();
        let mut r = TraceFileReader::open(&path).unwrap();
        assert_eq!(r.header().config, cfg);
        let mut got = Vec::new();
        while let Some(t) = r.next_trace().unwrap() {
            got.push(t);
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn truncated_trace_file_is_an_io_error() {
        let mut cfg = ProtocolConfig::reference(Protocol::Qdyne);
        cfg.geometry.points_per_trace = 8;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rdt");
        let mut w = TraceFileWriter::create(&path, &cfg).unwrap();
        let gen = TraceGenerator::new(cfg.clone()).unwrap();
        let t = gen.trace(0);
        w.write(&t.header(), &t.counts).unwrap();
        w.finish().unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 3).unwrap();
        let mut r = TraceFileReader::open(&path).unwrap();
        assert_eq!(r.next_trace().unwrap_err().exit_code(), CliError::EXIT_IO);
        std::fs::write(&path, b"nonsense-bytes-here-xx").unwrap();
        assert!(matches!(TraceFileReader::open(&path), Err(CliError::Config(_))));
    }

    #[test]
    fn sweep_csv_parsing() {
        let rows = parse_sweep_csv("# comment\ntau,signal\n1,0.1\n2,0.2\n3,0.3\n4,0.4\n5,0.5\n").unwrap();
        assert_eq!(rows[4], (5.0, 0.5));
        assert!(parse_sweep_csv("1,2\n").is_err());
        assert!(parse_sweep_csv("1,2\n1,2\n1,2\n1,2\n1,x\n").is_err());
    }
}
