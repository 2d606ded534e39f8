use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::Graph;
use crate::error::{Gp2fError, Result};
use crate::numerics::DenseMatrix;

/// Paths of the three plain-text files describing one graph.
#[derive(Clone, Debug)]
pub struct GraphFiles {
    pub features: PathBuf,
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
}

impl GraphFiles {
    /// `<dir>/<prefix>_features.txt`, `_edges.txt`, `_labels.txt`.
    pub fn in_dir(dir: &Path, prefix: &str) -> Self {
        Self {
            features: dir.join(format!("{prefix}_features.txt")),
            edges: dir.join(format!("{prefix}_edges.txt")),
            labels: Some(dir.join(format!("{prefix}_labels.txt"))),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Gp2fError::io(path, e))
}

/// Non-empty lines with 1-based line numbers. Blank lines are only allowed
/// at the end of the file.
fn content_lines(path: &Path, text: &str) -> Result<Vec<(usize, String)>> {
    let lines: Vec<&str> = text.lines().collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |p| p + 1);
    lines[..last]
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if l.trim().is_empty() {
                Err(Gp2fError::Parse {
                    file: path.to_path_buf(),
                    line: i + 1,
                    message: "blank line".into(),
                })
            } else {
                Ok((i + 1, l.trim().to_string()))
            }
        })
        .collect()
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Gp2fError {
    Gp2fError::Parse {
        file: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_features(path: &Path) -> Result<DenseMatrix> {
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in content_lines(path, &text)? {
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, ln, format!("not a finite real: {tok:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    ln,
                    format!("expected {} values, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

fn parse_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    content_lines(path, &text)?
        .into_iter()
        .map(|(ln, line)| {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(parse_err(path, ln, format!("expected 2 node indices, found {}", toks.len())));
            }
            let idx = |t: &str| {
                t.parse::<usize>()
                    .map_err(|_| parse_err(path, ln, format!("not a node index: {t:?}")))
            };
            Ok((idx(toks[0])?, idx(toks[1])?))
        })
        .collect()
}

fn parse_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    content_lines(path, &text)?
        .into_iter()
        .map(|(ln, line)| {
            line.parse::<usize>()
                .map_err(|_| parse_err(path, ln, format!("not a class index: {line:?}")))
        })
        .collect()
}

/// Read a graph from its plain-text files. Row order of the features file
/// defines node indexing.
pub fn load_graph(features: &Path, edges: &Path, labels: Option<&Path>) -> Result<Graph> {
    let x = parse_features(features)?;
    let e = parse_edges(edges)?;
    let y = labels.map(parse_labels).transpose()?;
    Graph::new(x, e, y).map_err(|err| match err {
        Gp2fError::Validation(m) => Gp2fError::Validation(format!("{}: {m}", edges.display())),
        other => other,
    })
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Gp2fError::io(path, e))
}

/// Write a graph in the plain-text formats, reals with 17 significant digits.
pub fn write_graph(g: &Graph, files: &GraphFiles) -> Result<()> {
    let mut s = String::new();
    for i in 0..g.num_nodes() {
        let row = g.features().row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
    write(&files.features, &s)?;

    let mut s = String::new();
    for (a, b) in g.edges() {
        let _ = writeln!(s, "{a} {b}");
    }
    write(&files.edges, &s)?;

    if let (Some(path), Some(y)) = (&files.labels, g.labels()) {
        let mut s = String::new();
        for c in y {
            let _ = writeln!(s, "{c}");
        }
        write(path, &s)?;
    }
    Ok(())
}
