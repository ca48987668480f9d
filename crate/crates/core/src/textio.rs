//! Small helpers for the line-oriented model files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub(crate) struct LineReader<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    path: PathBuf,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str, path: &Path) -> Self {
        LineReader {
            lines: text.lines().collect(),
            pos: 0,
            path: path.to_path_buf(),
        }
    }

    pub fn next_fields(&mut self) -> Result<Vec<&'a str>> {
        match self.lines.get(self.pos) {
            Some(l) => {
                self.pos += 1;
                Ok(l.split_whitespace().collect())
            }
            None => Err(Error::Truncated {
                path: self.path.clone(),
                last_good_line: self.pos,
                message: "unexpected end of file".into(),
            }),
        }
    }

    /// Next line, which must start with `tag`; returns the remaining fields.
    pub fn expect(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let f = self.next_fields()?;
        if f.first() != Some(&tag) {
            return Err(self.err(format!("expected `{tag}`, found `{}`", f.join(" "))));
        }
        Ok(f[1..].to_vec())
    }

    pub fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.pos,
            message: message.into(),
        }
    }

    pub fn parse<T: FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    pub fn parse_all<T: FromStr>(&self, fields: &[&str]) -> Result<Vec<T>> {
        fields.iter().map(|s| self.parse(s)).collect()
    }

}

pub(crate) fn join<T: std::fmt::Display>(values: &[T]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&v.to_string());
    }
    s
}
