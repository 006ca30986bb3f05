//! Canonical JSON, CSV trajectories and atomic file writes.

use std::io::{self, Write};
use std::path::Path;

use chronograph::SolveReport;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

/// Every float is written with 17 significant digits, which round-trips
/// `f64` exactly.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON whose floats use [`format_f64`]; non-finite values become
/// `null`.
struct Canonical<'a>(PrettyFormatter<'a>);

impl Formatter for Canonical<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(format_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Canonical(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// `edge_id, t, re_0 … re_{D−1}, im_0 … im_{D−1}` with `D` the largest edge
/// dimension; cells beyond an edge's own dimension stay empty.
pub fn solution_csv(report: &SolveReport) -> String {
    let width = report.solutions.iter().map(|s| s.states[0].len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["edge_id".to_string(), "t".to_string()];
    header.extend((0..width).map(|k| format!("re_{k}")));
    header.extend((0..width).map(|k| format!("im_{k}")));
    w.write_record(&header).expect("in-memory write");
    for s in &report.solutions {
        for (t, psi) in s.times.iter().zip(&s.states) {
            let mut row = vec![s.edge.to_string(), format_f64(*t)];
            let cell = |k: usize, f: fn(&num_complex::Complex64) -> f64| {
                psi.get(k).map(|z| format_f64(f(z))).unwrap_or_default()
            };
            row.extend((0..width).map(|k| cell(k, |z| z.re)));
            row.extend((0..width).map(|k| cell(k, |z| z.im)));
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}
