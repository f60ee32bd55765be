//! Plain-text persistence for a trained estimator and its embeddings.
//!
//! ```text
//! lnl-estimator <se_dim> <node_count>
//! param <name> <rows> <cols>
//! <rows lines of <cols> space-separated values>
//! ...
//! embeddings <source> <rows> <cols>
//! <rows lines>
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a reload
//! reproduces every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EmbeddingSource, MiEstimator, SelfEmbeddings};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

const MAGIC: &str = "lnl-estimator";

pub fn save_estimator(path: impl AsRef<Path>, est: &MiEstimator, z: &SelfEmbeddings) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {} {}", est.se_dim(), z.node_count());
    for p in est.store().iter() {
        let _ = writeln!(out, "param {} {} {}", p.name, p.value.rows(), p.value.cols());
        write_rows(&mut out, &p.value);
    }
    let source = match z.source {
        EmbeddingSource::Raw => "raw",
        EmbeddingSource::Mean1hop => "mean1hop",
    };
    let _ = writeln!(out, "embeddings {source} {} {}", z.z.rows(), z.z.cols());
    write_rows(&mut out, &z.z);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_rows(out: &mut String, t: &Tensor2) {
    for row in t.rows_iter() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
}

struct Cursor<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::parse(self.path, self.line, msg.to_string())
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let (i, l) = self.lines.next().ok_or_else(|| self.err("unexpected end of file"))?;
        self.line = i + 1;
        Ok(l)
    }

    fn dim(&self, tok: &str) -> Result<usize> {
        tok.parse().map_err(|_| self.err("bad dimension"))
    }

    fn block(&mut self, rows: usize, cols: usize) -> Result<Tensor2> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next_line()?;
            let before = data.len();
            for tok in l.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| self.err("bad number"))?);
            }
            if data.len() - before != cols {
                return Err(self.err("wrong row length"));
            }
        }
        Tensor2::from_vec(rows, cols, data)
    }
}

pub fn load_estimator(path: impl AsRef<Path>) -> Result<(MiEstimator, SelfEmbeddings)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { path, lines: text.lines().enumerate(), line: 0 };

    let h: Vec<&str> = cur.next_line()?.split_whitespace().collect();
    if h.len() != 3 || h[0] != MAGIC {
        return Err(cur.err("not an estimator file"));
    }
    let node_count = cur.dim(h[2])?;

    let mut tensors = Vec::with_capacity(6);
    for name in MiEstimator::PARAM_NAMES {
        let t: Vec<&str> = cur.next_line()?.split_whitespace().collect();
        if t.len() != 4 || t[0] != "param" || t[1] != name {
            return Err(cur.err(&format!("expected block for `{name}`")));
        }
        let (rows, cols) = (cur.dim(t[2])?, cur.dim(t[3])?);
        tensors.push(cur.block(rows, cols)?);
    }

    let t: Vec<&str> = cur.next_line()?.split_whitespace().collect();
    if t.len() != 4 || t[0] != "embeddings" {
        return Err(cur.err("expected embeddings block"));
    }
    let source = match t[1] {
        "raw" => EmbeddingSource::Raw,
        "mean1hop" => EmbeddingSource::Mean1hop,
        _ => return Err(cur.err("unknown embedding source")),
    };
    let (rows, cols) = (cur.dim(t[2])?, cur.dim(t[3])?);
    if rows != node_count {
        return Err(cur.err("embedding rows differ from header node count"));
    }
    let z = cur.block(rows, cols)?;

    let arr: [Tensor2; 6] = tensors.try_into().expect("six parameter blocks");
    let est = MiEstimator::from_tensors(arr)?;
    if z.cols() != est.se_dim() {
        return Err(Error::Shape("embedding width differs from estimator output".into()));
    }
    Ok((est, SelfEmbeddings { z, source }))
}
