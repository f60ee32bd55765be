//! Reader for the three-file TSV dataset layout:
//!
//! * `edges.tsv`: `u<TAB>v`, one undirected edge per line
//! * `features.tsv`: `id<TAB>f_1 f_2 ... f_d`
//! * `labels.tsv`: `id<TAB>class_id`
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    load_dataset_with_classes(dir, None)
}

/// Like [`load_dataset`], but validates labels against a known class count
/// instead of inferring it as `max label + 1`.
pub fn load_dataset_with_classes(dir: impl AsRef<Path>, class_count: Option<usize>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let features = read_features(&dir.join("features.tsv"))?;
    let n = features.rows();
    let edges = read_edges(&dir.join("edges.tsv"), n)?;
    let labels = read_labels(&dir.join("labels.tsv"), n, class_count)?;
    let classes = class_count.unwrap_or_else(|| labels.iter().flatten().max().map_or(0, |m| m + 1));
    let name = dir.file_name().and_then(|s| s.to_str()).unwrap_or("dataset").to_ascii_lowercase();
    Dataset::new(name, &edges, features, labels, classes)
}

/// Writes `d` in the layout read by [`load_dataset`], creating `dir` if
/// needed. Unlabeled nodes are left out of `labels.tsv`.
pub fn save_dataset(dir: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::new();
    for (u, v) in d.edges() {
        let _ = writeln!(edges, "{u}\t{v}");
    }
    let mut feats = String::new();
    for (u, row) in d.features().rows_iter().enumerate() {
        let _ = write!(feats, "{u}\t");
        for (i, x) in row.iter().enumerate() {
            let _ = write!(feats, "{}{x:?}", if i == 0 { "" } else { " " });
        }
        feats.push('\n');
    }
    let mut labels = String::new();
    for (u, l) in d.labels().iter().enumerate() {
        if let Some(c) = l {
            let _ = writeln!(labels, "{u}\t{c}");
        }
    }
    for (name, body) in [("edges.tsv", edges), ("features.tsv", feats), ("labels.tsv", labels)] {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_id(path: &Path, line: usize, tok: Option<&str>) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, "missing node id"))?;
    tok.parse().map_err(|_| Error::parse(path, line, format!("`{tok}` is not a node id")))
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (line, l) in content_lines(&text) {
        let mut toks = l.split_whitespace();
        let u = parse_id(path, line, toks.next())?;
        let v = parse_id(path, line, toks.next())?;
        for w in [u, v] {
            if w >= n {
                return Err(Error::parse(path, line, format!("node {w} out of range (have {n} feature rows)")));
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_features(path: &Path) -> Result<Tensor2> {
    let text = read(path)?;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut dim = None;
    for (line, l) in content_lines(&text) {
        let (id_tok, rest) = match l.split_once('\t') {
            Some((a, b)) => (a.trim(), b),
            None => l.split_once(char::is_whitespace).unwrap_or((l, "")),
        };
        let id = parse_id(path, line, Some(id_tok))?;
        let values = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(path, line, format!("`{t}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::parse(path, line, format!("row has {} features, expected {d}", values.len())))
            }
            _ => {}
        }
        rows.push((id, values));
    }
    let n = rows.len();
    let d = dim.unwrap_or(0);
    let mut data = vec![0.0; n * d];
    let mut seen = vec![false; n];
    for (id, values) in rows {
        if id >= n || seen[id] {
            return Err(Error::InvalidDataset(format!(
                "{}: feature ids must be a permutation of 0..{n} (offending id {id})",
                path.display()
            )));
        }
        seen[id] = true;
        data[id * d..(id + 1) * d].copy_from_slice(&values);
    }
    Tensor2::from_vec(n, d, data)
}

fn read_labels(path: &Path, n: usize, class_count: Option<usize>) -> Result<Vec<Option<usize>>> {
    let text = read(path)?;
    let mut labels = vec![None; n];
    for (line, l) in content_lines(&text) {
        let mut toks = l.split_whitespace();
        let u = parse_id(path, line, toks.next())?;
        let tok = toks.next().ok_or_else(|| Error::parse(path, line, "missing class id"))?;
        let c: usize = tok.parse().map_err(|_| Error::parse(path, line, format!("`{tok}` is not a class id")))?;
        if u >= n {
            return Err(Error::parse(path, line, format!("node {u} out of range")));
        }
        if let Some(k) = class_count.filter(|&k| c >= k) {
            return Err(Error::parse(path, line, format!("class {c} >= class count {k}")));
        }
        labels[u] = Some(c);
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, edges: &str, feats: &str, labels: &str) {
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("features.tsv"), feats).unwrap();
        fs::write(dir.join("labels.tsv"), labels).unwrap();
    }

    #[test]
    fn empty_edge_file_gives_isolated_nodes() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "", "0\t1 0\n1\t0 1\n2\t1 1\n", "0\t0\n1\t1\n2\t0\n");
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!((d.node_count(), d.edge_count(), d.feature_dim(), d.class_count()), (3, 0, 2, 2));
    }

    #[test]
    fn repeated_and_reversed_edges_collapse() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "0\t1\n1\t0\n0\t1\n2\t2\n", "0\t1\n1\t2\n2\t3\n", "0\t0\n1\t0\n2\t0\n");
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d.edge_count(), 1);
    }

    #[test]
    fn feature_ids_may_be_unordered() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "", "1\t5 6\n0\t1 2\n", "0\t0\n1\t0\n");
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d.features().row(1), &[5.0, 6.0]);
    }

    #[test]
    fn save_then_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let feats = Tensor2::from_rows(&[vec![0.1, 2.0], vec![1.0 / 3.0, 0.0], vec![-5.5, 1e-300]]).unwrap();
        let d = Dataset::new("rt", &[(0, 2), (1, 2)], feats, vec![Some(1), None, Some(0)], 2).unwrap();
        let path = dir.path().join("rt");
        save_dataset(&path, &d).unwrap();
        let back = load_dataset_with_classes(&path, Some(2)).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn error_paths() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));

        write(dir.path(), "0\tx\n", "0\t1\n1\t1\n", "0\t0\n1\t0\n");
        assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { line: 1, .. })));

        write(dir.path(), "", "0\t1 2\n1\t1\n", "0\t0\n1\t0\n");
        assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { line: 2, .. })));

        write(dir.path(), "", "0\t1\n1\t1\n", "0\t0\n1\t4\n");
        assert!(load_dataset_with_classes(dir.path(), Some(3)).is_err());
        assert_eq!(load_dataset(dir.path()).unwrap().class_count(), 5);

        write(dir.path(), "0\t7\n", "0\t1\n1\t1\n", "0\t0\n1\t0\n");
        assert!(load_dataset(dir.path()).is_err());
    }
}
