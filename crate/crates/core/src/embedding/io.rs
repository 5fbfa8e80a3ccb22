//! Binary embedding files plus a text sidecar naming every row.
//!
//! Binary layout, little endian:
//!
//! ```text
//! magic "MTXEMBD\0" | version u32 | dim u32 | table count u32
//! per table: kind u8 | field u16 | rows u64
//! per table, in header order: rows * dim f64 values, row-major
//! ```
//!
//! Sidecar: one line per row, `table<TAB>row<TAB>json-string-name`, where
//! table is `word`, `context`, `doc`, `label`, `global:<field>` or `local:<field>`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::{Document, MetadataSchema, Vocabulary};
use crate::error::{Error, Result};

use super::{EmbeddingSpace, Matrix, Table};

const MAGIC: &[u8; 8] = b"MTXEMBD\0";
const VERSION: u32 = 1;

/// Row names for every table of an [`EmbeddingSpace`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TableNames {
    pub words: Vec<String>,
    pub docs: Vec<String>,
    pub labels: Vec<String>,
    pub global: Vec<(String, Vec<String>)>,
    pub local: Vec<(String, Vec<String>)>,
}

impl TableNames {
    pub fn new(vocab: &Vocabulary, docs: &[Document], schema: &MetadataSchema) -> Self {
        Self {
            words: vocab.words.names().to_vec(),
            docs: docs.iter().map(|d| d.id.clone()).collect(),
            labels: vocab.labels.names().to_vec(),
            global: schema
                .global_fields()
                .iter()
                .zip(&vocab.global)
                .map(|(f, ns)| (f.clone(), ns.names().to_vec()))
                .collect(),
            local: schema
                .local_fields()
                .iter()
                .zip(&vocab.local)
                .map(|(f, ns)| (f.clone(), ns.names().to_vec()))
                .collect(),
        }
    }

    fn table_label(&self, t: Table) -> String {
        match t {
            Table::Word => "word".into(),
            Table::Context => "context".into(),
            Table::Doc => "doc".into(),
            Table::Label => "label".into(),
            Table::Global(i) => format!("global:{}", self.global[i as usize].0),
            Table::Local(i) => format!("local:{}", self.local[i as usize].0),
        }
    }

    fn names(&self, t: Table) -> &[String] {
        match t {
            Table::Word | Table::Context => &self.words,
            Table::Doc => &self.docs,
            Table::Label => &self.labels,
            Table::Global(i) => &self.global[i as usize].1,
            Table::Local(i) => &self.local[i as usize].1,
        }
    }
}

fn kind_code(t: Table) -> (u8, u16) {
    match t {
        Table::Word => (0, 0),
        Table::Context => (1, 0),
        Table::Doc => (2, 0),
        Table::Label => (3, 0),
        Table::Global(i) => (4, i),
        Table::Local(i) => (5, i),
    }
}

fn table_from_code(kind: u8, field: u16) -> Result<Table> {
    Ok(match kind {
        0 => Table::Word,
        1 => Table::Context,
        2 => Table::Doc,
        3 => Table::Label,
        4 => Table::Global(field),
        5 => Table::Local(field),
        k => return Err(Error::Format(format!("unknown table kind {k}"))),
    })
}

pub fn save_space(space: &EmbeddingSpace, names: &TableNames, bin: &Path, index: &Path) -> Result<()> {
    let tables = space.tables();
    for &t in &tables {
        if names.names(t).len() != space.matrix(t).rows() {
            return Err(Error::Format(format!(
                "table {} has {} rows but {} names",
                names.table_label(t),
                space.matrix(t).rows(),
                names.names(t).len()
            )));
        }
    }

    let io_err = |e| Error::io(bin, e);
    let mut w = BufWriter::new(File::create(bin).map_err(io_err)?);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(space.dim() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(tables.len() as u32).to_le_bytes()).map_err(io_err)?;
    for &t in &tables {
        let (kind, field) = kind_code(t);
        w.write_all(&[kind]).map_err(io_err)?;
        w.write_all(&field.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(space.matrix(t).rows() as u64).to_le_bytes())
            .map_err(io_err)?;
    }
    for &t in &tables {
        for v in space.matrix(t).as_slice() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;

    let io_err = |e| Error::io(index, e);
    let mut w = BufWriter::new(File::create(index).map_err(io_err)?);
    for &t in &tables {
        let label = names.table_label(t);
        for (row, name) in names.names(t).iter().enumerate() {
            let quoted = serde_json::to_string(name).expect("string serializes");
            writeln!(w, "{label}\t{row}\t{quoted}").map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn read_array<const N: usize>(r: &mut impl Read, path: &Path) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub fn load_space(bin: &Path, index: &Path) -> Result<(EmbeddingSpace, TableNames)> {
    let mut r = BufReader::new(File::open(bin).map_err(|e| Error::io(bin, e))?);
    if &read_array::<8>(&mut r, bin)? != MAGIC {
        return Err(Error::Format("not an embedding file".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r, bin)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported embedding version {version}")));
    }
    let dim = u32::from_le_bytes(read_array(&mut r, bin)?) as usize;
    let count = u32::from_le_bytes(read_array(&mut r, bin)?) as usize;
    let mut header = Vec::with_capacity(count);
    for _ in 0..count {
        let [kind] = read_array::<1>(&mut r, bin)?;
        let field = u16::from_le_bytes(read_array(&mut r, bin)?);
        let rows = u64::from_le_bytes(read_array(&mut r, bin)?) as usize;
        header.push((table_from_code(kind, field)?, rows));
    }
    let mut space = EmbeddingSpace {
        dim,
        word: Matrix::zeros(0, dim),
        context: Matrix::zeros(0, dim),
        doc: Matrix::zeros(0, dim),
        label: Matrix::zeros(0, dim),
        global: Vec::new(),
        local: Vec::new(),
    };
    for &(t, rows) in &header {
        let mut data = Vec::with_capacity(rows * dim);
        for _ in 0..rows * dim {
            data.push(f64::from_le_bytes(read_array(&mut r, bin)?));
        }
        let m = Matrix::from_vec(rows, dim, data);
        match t {
            Table::Global(i) if i as usize == space.global.len() => space.global.push(m),
            Table::Local(i) if i as usize == space.local.len() => space.local.push(m),
            Table::Global(_) | Table::Local(_) => {
                return Err(Error::Format("metadata tables out of order".into()))
            }
            other => *space.matrix_mut(other) = m,
        }
    }
    if r.read(&mut [0u8; 1]).map_err(|e| Error::io(bin, e))? != 0 {
        return Err(Error::Format("trailing bytes after embedding data".into()));
    }

    let mut names = TableNames::default();
    let file = File::open(index).map_err(|e| Error::io(index, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(index, e))?;
        let bad = || Error::Format(format!("index line {}: malformed", i + 1));
        let mut parts = line.splitn(3, '\t');
        let (Some(table), Some(row), Some(name)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let row: usize = row.parse().map_err(|_| bad())?;
        let name: String = serde_json::from_str(name).map_err(|_| bad())?;
        let list = match table {
            "word" => &mut names.words,
            "context" => continue,
            "doc" => &mut names.docs,
            "label" => &mut names.labels,
            t => {
                let (kind, field) = t.split_once(':').ok_or_else(bad)?;
                let group = match kind {
                    "global" => &mut names.global,
                    "local" => &mut names.local,
                    _ => return Err(bad()),
                };
                if group.last().map(|(f, _)| f.as_str()) != Some(field) {
                    group.push((field.to_owned(), Vec::new()));
                }
                &mut group.last_mut().expect("pushed above").1
            }
        };
        if row != list.len() {
            return Err(bad());
        }
        list.push(name);
    }
    for t in space.tables() {
        let have = match t {
            Table::Global(i) => names.global.get(i as usize).map(|g| g.1.len()),
            Table::Local(i) => names.local.get(i as usize).map(|g| g.1.len()),
            _ => Some(names.names(t).len()),
        };
        if have != Some(space.matrix(t).rows()) {
            return Err(Error::Format(format!(
                "index does not match embedding table {t:?}"
            )));
        }
    }
    Ok((space, names))
}
