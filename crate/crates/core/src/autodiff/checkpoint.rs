//! Plain-text checkpoint of named tensors, string lists and metadata.
//!
//! ```text
//! actknow-checkpoint 1
//! meta <key> <value to end of line>
//! list <name> <count>
//! <one entry per line>
//! tensor <name> <rows> <cols>
//! <one row per line, space-separated values>
//! end
//! ```
//!
//! Values are written in Rust's shortest round-trip form, so a write/read
//! cycle is bit-exact. Names and keys must not contain whitespace.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "actknow-checkpoint 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub lists: Vec<(String, Vec<String>)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn list(&self, name: &str) -> Option<&[String]> {
        self.lists
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, l)| l.as_slice())
    }

    pub fn require_tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensor(name)
            .ok_or_else(|| Error::Invalid(format!("checkpoint is missing tensor {name}")))
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        for (k, v) in &self.meta {
            check_name(k)?;
            if v.contains('\n') {
                return Err(Error::Invalid(format!("meta value for {k} spans lines")));
            }
            writeln!(out, "meta {k} {v}").unwrap();
        }
        for (name, items) in &self.lists {
            check_name(name)?;
            writeln!(out, "list {name} {}", items.len()).unwrap();
            for item in items {
                if item.contains('\n') {
                    return Err(Error::Invalid(format!("list {name} entry spans lines")));
                }
                writeln!(out, "{item}").unwrap();
            }
        }
        for (name, t) in &self.tensors {
            check_name(name)?;
            writeln!(out, "tensor {name} {} {}", t.rows(), t.cols()).unwrap();
            for r in 0..t.rows() {
                let line: Vec<String> = t.row(r).iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        writeln!(out, "end").unwrap();
        Ok(out)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(err(1, format!("expected header {MAGIC:?}"))),
        }
        let mut ck = Checkpoint::default();
        loop {
            let Some((no, line)) = lines.next() else {
                return Err(err(0, "missing end marker".into()));
            };
            let mut fields = line.splitn(3, ' ');
            match fields.next() {
                Some("end") => return Ok(ck),
                Some("meta") => {
                    let key = fields.next().ok_or_else(|| err(no, "meta without key".into()))?;
                    ck.meta
                        .insert(key.to_string(), fields.next().unwrap_or("").to_string());
                }
                Some("list") => {
                    let name = fields.next().ok_or_else(|| err(no, "list without name".into()))?;
                    let count: usize = fields
                        .next()
                        .and_then(|c| c.parse().ok())
                        .ok_or_else(|| err(no, "list without count".into()))?;
                    let mut items = Vec::with_capacity(count);
                    for _ in 0..count {
                        let (_, item) = lines
                            .next()
                            .ok_or_else(|| err(no, format!("list {name} truncated")))?;
                        items.push(item.to_string());
                    }
                    ck.lists.push((name.to_string(), items));
                }
                Some("tensor") => {
                    let name = fields.next().ok_or_else(|| err(no, "tensor without name".into()))?;
                    let dims: Vec<usize> = fields
                        .next()
                        .unwrap_or("")
                        .split(' ')
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(no, "bad tensor shape".into()))?;
                    let [rows, cols] = dims[..] else {
                        return Err(err(no, "tensor shape needs rows and cols".into()));
                    };
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rno, row) = lines
                            .next()
                            .ok_or_else(|| err(no, format!("tensor {name} truncated")))?;
                        let before = data.len();
                        for tok in row.split(' ').filter(|t| !t.is_empty()) {
                            data.push(
                                tok.parse::<f64>()
                                    .map_err(|_| err(rno, format!("bad value {tok:?}")))?,
                            );
                        }
                        if data.len() - before != cols {
                            return Err(err(rno, format!("expected {cols} values")));
                        }
                    }
                    ck.tensors
                        .push((name.to_string(), Tensor::from_vec(rows, cols, data)?));
                }
                _ => return Err(err(no, format!("unexpected line {line:?}"))),
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(Error::Invalid(format!("checkpoint name {name:?} must be non-empty without whitespace")));
    }
    Ok(())
}
