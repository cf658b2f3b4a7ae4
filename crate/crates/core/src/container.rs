//! Self-describing binary container shared by encoders and models.
//!
//! Layout:
//!
//! ```text
//! ELPV-CONTAINER 1
//! kind = <kind>
//! <key> = <value>            (any number of metadata lines)
//! section <name> <f32|u32> <count>
//! end
//! <section payloads, little-endian, in declaration order>
//! ```
//!
//! Metadata keeps insertion order, so writing the same values always
//! produces the same bytes.

use std::fmt::Display;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

const MAGIC: &str = "ELPV-CONTAINER 1";

#[derive(Debug, Clone, PartialEq)]
pub enum SectionData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl SectionData {
    fn type_name(&self) -> &'static str {
        match self {
            SectionData::F32(_) => "f32",
            SectionData::U32(_) => "u32",
        }
    }

    fn len(&self) -> usize {
        match self {
            SectionData::F32(v) => v.len(),
            SectionData::U32(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    kind: String,
    meta: Vec<(String, String)>,
    sections: Vec<(String, SectionData)>,
}

fn check_token(token: &str, what: &str) -> Result<()> {
    if token.is_empty() || token.contains(['\n', '\r', '=']) || token.trim() != token {
        return Err(Error::Container(format!("illegal {what} {token:?}")));
    }
    Ok(())
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_owned(),
            meta: Vec::new(),
            sections: Vec::new(),
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        debug_assert!(check_token(key, "key").is_ok() && !value.contains('\n'));
        self.meta.push((key.to_owned(), value));
    }

    pub fn push_f32(&mut self, name: &str, data: Vec<f32>) {
        self.sections.push((name.to_owned(), SectionData::F32(data)));
    }

    pub fn push_u32(&mut self, name: &str, data: Vec<u32>) {
        self.sections.push((name.to_owned(), SectionData::U32(data)));
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Container(format!("missing metadata key `{key}`")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.meta.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Container(format!("cannot parse `{key}` = {raw:?}")))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Container(format!(
                "expected a `{kind}` container, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn f32_section(&self, name: &str) -> Result<&[f32]> {
        match self.section(name)? {
            SectionData::F32(v) => Ok(v),
            other => Err(Error::Container(format!(
                "section `{name}` has type {}, expected f32",
                other.type_name()
            ))),
        }
    }

    pub fn u32_section(&self, name: &str) -> Result<&[u32]> {
        match self.section(name)? {
            SectionData::U32(v) => Ok(v),
            other => Err(Error::Container(format!(
                "section `{name}` has type {}, expected u32",
                other.type_name()
            ))),
        }
    }

    fn section(&self, name: &str) -> Result<&SectionData> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d)
            .ok_or_else(|| Error::Container(format!("missing section `{name}`")))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = String::new();
        header.push_str(MAGIC);
        header.push('\n');
        header.push_str(&format!("kind = {}\n", self.kind));
        for (k, v) in &self.meta {
            header.push_str(&format!("{k} = {v}\n"));
        }
        for (name, data) in &self.sections {
            header.push_str(&format!(
                "section {name} {} {}\n",
                data.type_name(),
                data.len()
            ));
        }
        header.push_str("end\n");
        out.write_all(header.as_bytes())?;
        let mut buf = Vec::new();
        for (_, data) in &self.sections {
            buf.clear();
            match data {
                SectionData::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
                SectionData::U32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            }
            out.write_all(&buf)?;
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self> {
        let bad = |m: String| Error::Container(m);
        let mut line = String::new();
        let next_line = |input: &mut R, line: &mut String| -> Result<()> {
            line.clear();
            let n = input
                .read_line(line)
                .map_err(|e| bad(format!("read failed: {e}")))?;
            if n == 0 {
                return Err(bad("unexpected end of header".into()));
            }
            if line.ends_with('\n') {
                line.pop();
            }
            Ok(())
        };

        next_line(&mut input, &mut line)?;
        if line != MAGIC {
            return Err(bad(format!("bad magic line {line:?}")));
        }
        next_line(&mut input, &mut line)?;
        let kind = line
            .strip_prefix("kind = ")
            .ok_or_else(|| bad("missing kind line".into()))?
            .to_owned();

        let mut container = Container::new(&kind);
        let mut declared: Vec<(String, String, usize)> = Vec::new();
        loop {
            next_line(&mut input, &mut line)?;
            if line == "end" {
                break;
            }
            if let Some(rest) = line.strip_prefix("section ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 3 {
                    return Err(bad(format!("malformed section line {line:?}")));
                }
                let count: usize = parts[2]
                    .parse()
                    .map_err(|_| bad(format!("bad section length in {line:?}")))?;
                declared.push((parts[0].to_owned(), parts[1].to_owned(), count));
            } else if let Some((k, v)) = line.split_once(" = ") {
                container.meta.push((k.to_owned(), v.to_owned()));
            } else {
                return Err(bad(format!("malformed header line {line:?}")));
            }
        }

        for (name, ty, count) in declared {
            let mut raw = vec![0u8; count * 4];
            input
                .read_exact(&mut raw)
                .map_err(|_| bad(format!("section `{name}` truncated")))?;
            let words = raw.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]);
            let data = match ty.as_str() {
                "f32" => SectionData::F32(words.map(f32::from_le_bytes).collect()),
                "u32" => SectionData::U32(words.map(u32::from_le_bytes).collect()),
                other => return Err(bad(format!("unknown section type `{other}`"))),
            };
            container.sections.push((name, data));
        }
        let mut trailing = [0u8; 1];
        if input.read(&mut trailing).map_err(|e| bad(e.to_string()))? != 0 {
            return Err(bad("trailing bytes after last section".into()));
        }
        Ok(container)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
