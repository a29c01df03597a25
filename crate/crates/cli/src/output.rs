use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::CliError;

/// A CSV file under the output directory. Numbers are written with Rust's
/// shortest round-trip formatting, so files are byte-stable across runs.
pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl CsvFile {
    pub fn create(dir: &Path, name: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self { writer: csv::Writer::from_writer(file), path })
    }

    pub fn header(&mut self, cols: &[&str]) -> Result<(), CliError> {
        self.writer.write_record(cols).map_err(|e| self.err(e))
    }

    pub fn row<I, S>(&mut self, cells: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(cells).map_err(|e| self.err(e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }

    /// Square dump with a `c0..c{n-1}` header, one matrix row per line.
    pub fn write_matrix(dir: &Path, name: &str, m: &DMatrix<f64>) -> Result<(), CliError> {
        let mut f = Self::create(dir, name)?;
        let cols: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
        f.row(&cols)?;
        for i in 0..m.nrows() {
            f.row((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
        }
        f.finish()
    }

    fn err(&self, e: csv::Error) -> CliError {
        let source = match e.into_kind() {
            csv::ErrorKind::Io(io) => io,
            other => std::io::Error::other(format!("{other:?}")),
        };
        CliError::io(&self.path, source)
    }
}

/// File-name-safe version of an alpha label: `sigmoid1(0.5,0.25,2)` becomes `sigmoid1_0.5_0.25_2`.
pub fn label_slug(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_plain() {
        assert_eq!(label_slug("sigmoid1(0.5,0.25,2)"), "sigmoid1_0.5_0.25_2");
        assert_eq!(label_slug("1"), "1");
        assert_eq!(label_slug("table(0:1;100:2)"), "table_0_1_100_2");
    }

    #[test]
    fn labels_with_commas_survive_quoting() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = CsvFile::create(dir.path(), "x.csv").unwrap();
        f.header(&["a", "b"]).unwrap();
        f.row(["1", "x,y"]).unwrap();
        f.finish().unwrap();
        let text = fs::read_to_string(dir.path().join("x.csv")).unwrap();
        assert_eq!(text, "a,b\n1,\"x,y\"\n");
    }
}
