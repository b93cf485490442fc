//! Tab-separated triple files and dictionary dumps.
//!
//! A dataset directory holds `train.txt`, `valid.txt` and `test.txt`, one
//! `head<TAB>relation<TAB>tail` triple per line. Ids are assigned in
//! first-seen order over train, then valid, then test, so entities that only
//! occur in test still get an id and are ranked like any other.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use kgroup_core::store::{Dictionary, Split, TripleStore, TripleStoreBuilder};

use crate::error::{Error, Result};

pub fn split_file_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train.txt",
        Split::Valid => "valid.txt",
        Split::Test => "test.txt",
    }
}

pub fn split_paths(dir: &Path) -> [(Split, PathBuf); 3] {
    Split::ALL.map(|s| (s, dir.join(split_file_name(s))))
}

/// Reads one split file into the builder. Blank lines are skipped; returns
/// the number of duplicates dropped.
pub fn read_split(builder: &mut TripleStoreBuilder, split: Split, path: &Path) -> Result<usize> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dropped = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected head<TAB>relation<TAB>tail, found {} field(s)", fields.len()),
            });
        }
        if !builder.add(split, fields[0], fields[1], fields[2]) {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} duplicate triple(s)", path.display());
    }
    Ok(dropped)
}

/// Loads explicit split files; `None` leaves a split empty.
pub fn load_tsv(train: &Path, valid: Option<&Path>, test: Option<&Path>) -> Result<TripleStore> {
    let mut builder = TripleStoreBuilder::new();
    read_split(&mut builder, Split::Train, train)?;
    if let Some(p) = valid {
        read_split(&mut builder, Split::Valid, p)?;
    }
    if let Some(p) = test {
        read_split(&mut builder, Split::Test, p)?;
    }
    Ok(builder.build()?)
}

/// Loads a dataset directory. `train.txt` is required; missing valid or test
/// files yield empty splits.
pub fn load_dir(dir: &Path) -> Result<TripleStore> {
    let [(_, train), (_, valid), (_, test)] = split_paths(dir);
    let opt = |p: &PathBuf| p.is_file().then_some(p.clone());
    let (valid, test) = (opt(&valid), opt(&test));
    load_tsv(&train, valid.as_deref(), test.as_deref())
}

/// Writes one split with names resolved through the store's dictionaries.
pub fn write_split(store: &TripleStore, split: Split, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in store.split(split) {
        let h = store.entity_name(t.head).unwrap_or_default();
        let r = store.relation_name(t.relation).unwrap_or_default();
        let tl = store.entity_name(t.tail).unwrap_or_default();
        writeln!(w, "{h}\t{r}\t{tl}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes all three split files plus `entities.dict` and `relations.dict`.
pub fn write_dir(store: &TripleStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (split, path) in split_paths(dir) {
        write_split(store, split, &path)?;
    }
    write_dictionary(store.entities(), &dir.join("entities.dict"))?;
    write_dictionary(store.relations(), &dir.join("relations.dict"))
}

/// `id<TAB>name` per line, in id order.
pub fn write_dictionary(dict: &Dictionary, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, name) in dict.names().enumerate() {
        writeln!(w, "{id}\t{name}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
