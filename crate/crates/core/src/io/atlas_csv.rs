//! Atlas labels as `vertex_index,label_id` CSV with an optional
//! `label_id,name` table.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::mesh::{AtlasLabels, Hemisphere, UNKNOWN_LABEL};

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn line_of(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: [&str; 2], path: &Path) -> Result<()> {
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(path, line_of(&e), e.to_string()))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!("header is {:?}, expected {}", got, expected.join(",")),
        ));
    }
    Ok(())
}

/// Parses label rows for a mesh with `vertex_count` vertices. Vertices not
/// listed are unknown (0); a repeated vertex keeps its last label.
pub fn parse_atlas_csv(input: impl Read, vertex_count: usize, path: &Path) -> Result<Vec<u32>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut rdr, ["vertex_index", "label_id"], path)?;
    let mut labels = vec![UNKNOWN_LABEL; vertex_count];
    let mut seen = vec![false; vertex_count];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, line_of(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, what: &str| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| Error::parse(path, line, format!("missing {what}")))
        };
        let v: usize = field(0, "vertex_index")?
            .parse()
            .map_err(|e| Error::parse(path, line, format!("bad vertex_index: {e}")))?;
        let l: u32 = field(1, "label_id")?
            .parse()
            .map_err(|e| Error::parse(path, line, format!("bad label_id: {e}")))?;
        if v >= vertex_count {
            return Err(Error::parse(
                path,
                line,
                format!("vertex_index {v} out of range for {vertex_count} vertices"),
            ));
        }
        if seen[v] {
            warn!(
                "{}: line {line}: vertex {v} listed again, keeping label {l}",
                path.display()
            );
        }
        seen[v] = true;
        labels[v] = l;
    }
    Ok(labels)
}

pub fn parse_label_names(input: impl Read, path: &Path) -> Result<BTreeMap<u32, String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    check_header(&mut rdr, ["label_id", "name"], path)?;
    let mut names = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, line_of(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: u32 = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e| Error::parse(path, line, format!("bad label_id: {e}")))?;
        let name = rec.get(1).ok_or_else(|| Error::parse(path, line, "missing name"))?;
        names.insert(id, name.to_string());
    }
    Ok(names)
}

pub fn read_atlas_csv(
    path: impl AsRef<Path>,
    vertex_count: usize,
    names_path: Option<&Path>,
    hemisphere: Hemisphere,
) -> Result<AtlasLabels> {
    let path = path.as_ref();
    let labels = parse_atlas_csv(open(path)?, vertex_count, path)?;
    let names = match names_path {
        Some(p) => parse_label_names(open(p)?, p)?,
        None => BTreeMap::new(),
    };
    AtlasLabels::new(labels, names, hemisphere)
}

/// Writes every vertex label, then the name table if `names_out` is given.
pub fn write_atlas_csv(atlas: &AtlasLabels, out: impl Write, names_out: Option<&mut dyn Write>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vertex_index", "label_id"])?;
    for (v, l) in atlas.labels().iter().enumerate() {
        w.write_record([v.to_string(), l.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    if let Some(n) = names_out {
        let mut w = csv::Writer::from_writer(n);
        w.write_record(["label_id", "name"])?;
        for (id, name) in atlas.names() {
            w.write_record([id.to_string(), name.clone()])?;
        }
        w.flush().map_err(csv::Error::from)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("atlas.csv")
    }

    #[test]
    fn all_ones_is_single_roi() {
        let labels = parse_atlas_csv(&b"vertex_index,label_id\n0,1\n1,1\n2,1\n"[..], 3, p()).unwrap();
        let a = AtlasLabels::new(labels, BTreeMap::new(), Hemisphere::Left).unwrap();
        assert_eq!(a.roi_ids(), vec![1]);
        assert_eq!(a.name(1), "roi_1");
    }

    #[test]
    fn duplicate_row_last_wins_and_missing_is_unknown() {
        let labels = parse_atlas_csv(&b"vertex_index,label_id\n0,4\n0,6\n2,5\n"[..], 4, p()).unwrap();
        assert_eq!(labels, vec![6, 0, 5, 0]);
    }

    #[test]
    fn out_of_range_vertex_reports_line() {
        let err = parse_atlas_csv(&b"vertex_index,label_id\n0,1\n9,1\n"[..], 3, p()).unwrap_err();
        match err {
            Error::Parse { offset, message, .. } => {
                assert_eq!(offset, 3);
                assert!(message.contains("out of range"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bad_header_and_names_table() {
        assert!(parse_atlas_csv(&b"v,l\n0,1\n"[..], 1, p()).is_err());
        let names = parse_label_names(&b"label_id,name\n3,precuneus\n"[..], p()).unwrap();
        assert_eq!(names[&3], "precuneus");
    }

    #[test]
    fn write_then_read() {
        let mut names = BTreeMap::new();
        names.insert(2, "cuneus".to_string());
        let a = AtlasLabels::new(vec![0, 2, 2, 7], names, Hemisphere::Right).unwrap();
        let mut buf = Vec::new();
        let mut nbuf = Vec::new();
        write_atlas_csv(&a, &mut buf, Some(&mut nbuf)).unwrap();
        let labels = parse_atlas_csv(&buf[..], 4, p()).unwrap();
        let names = parse_label_names(&nbuf[..], p()).unwrap();
        assert_eq!(AtlasLabels::new(labels, names, Hemisphere::Right).unwrap(), a);
    }
}
