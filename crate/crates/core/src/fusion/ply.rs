//! Binary little-endian PLY with per-vertex
//! `float x, y, z; uchar red, green, blue; uchar semantic; uint instance`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::scene::SemanticId;

const PROPERTIES: [(&str, &str); 8] = [
    ("float", "x"),
    ("float", "y"),
    ("float", "z"),
    ("uchar", "red"),
    ("uchar", "green"),
    ("uchar", "blue"),
    ("uchar", "semantic"),
    ("uint", "instance"),
];
const RECORD: usize = 3 * 4 + 3 + 1 + 4;

/// Missing colors fall back to the semantic palette, missing labels to void
/// and instance 0.
pub fn write_ply(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    cloud.check()?;
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", cloud.len());
    for (ty, name) in PROPERTIES {
        header.push_str(&format!("property {ty} {name}\n"));
    }
    header.push_str("end_header\n");
    let mut bytes = header.into_bytes();
    bytes.reserve(cloud.len() * RECORD);
    for k in 0..cloud.len() {
        let p = cloud.positions[k];
        for a in 0..3 {
            bytes.extend_from_slice(&(p[a] as f32).to_le_bytes());
        }
        let sem = cloud.semantic.as_ref().map_or(SemanticId::VOID, |s| s[k]);
        let rgb = match &cloud.colors {
            Some(c) => c[k].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
            None => sem.color(),
        };
        bytes.extend_from_slice(&rgb);
        bytes.push(sem.id());
        let inst = cloud.instance.as_ref().map_or(0, |i| i[k]);
        bytes.extend_from_slice(&inst.to_le_bytes());
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a PLY written by [`write_ply`]; every attribute comes back present.
pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let parse = |m: String| Error::Parse(format!("{}: {m}", path.display()));
    let mut line = String::new();
    let mut read_line = |r: &mut BufReader<File>| -> Result<String> {
        line.clear();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        Ok(line.trim_end().to_string())
    };
    if read_line(&mut r)? != "ply" {
        return Err(parse("missing ply magic".into()));
    }
    if read_line(&mut r)? != "format binary_little_endian 1.0" {
        return Err(parse("only binary_little_endian 1.0 is supported".into()));
    }
    let count_line = read_line(&mut r)?;
    let count: usize = count_line
        .strip_prefix("element vertex ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| parse(format!("expected vertex count, got {count_line:?}")))?;
    for (ty, name) in PROPERTIES {
        let l = read_line(&mut r)?;
        if l != format!("property {ty} {name}") {
            return Err(parse(format!("unexpected property line {l:?}")));
        }
    }
    if read_line(&mut r)? != "end_header" {
        return Err(parse("missing end_header".into()));
    }
    let mut body = vec![0u8; count * RECORD];
    r.read_exact(&mut body).map_err(|e| Error::io(path, e))?;
    let mut cloud = PointCloud {
        positions: Vec::with_capacity(count),
        colors: Some(Vec::with_capacity(count)),
        semantic: Some(Vec::with_capacity(count)),
        instance: Some(Vec::with_capacity(count)),
    };
    for rec in body.chunks_exact(RECORD) {
        let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().expect("4 bytes")) as f64;
        cloud.positions.push(Vector3::new(f(0), f(4), f(8)));
        cloud.colors.as_mut().unwrap().push([rec[12], rec[13], rec[14]].map(|c| c as f64 / 255.0));
        let sem = SemanticId::new(rec[15]).ok_or_else(|| parse(format!("semantic id {} out of range", rec[15])))?;
        cloud.semantic.as_mut().unwrap().push(sem);
        cloud
            .instance
            .as_mut()
            .unwrap()
            .push(u32::from_le_bytes(rec[16..20].try_into().expect("4 bytes")));
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud {
            positions: vec![Vector3::new(0.5, -1.25, 2.0), Vector3::new(3.0, 0.0, -0.5)],
            colors: None,
            semantic: Some(vec![SemanticId::WALL, SemanticId::CHAIR]),
            instance: Some(vec![65533, 12]),
        };
        write_ply(&path, &cloud).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_end = bytes.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(bytes.len() - header_end, 2 * RECORD);
        let back = read_ply(&path).unwrap();
        assert_eq!(back.positions, cloud.positions);
        assert_eq!(back.semantic, cloud.semantic);
        assert_eq!(back.instance, cloud.instance);
        let c = SemanticId::CHAIR.color();
        assert_eq!(back.colors.unwrap()[1], c.map(|v| v as f64 / 255.0));
        let empty = dir.path().join("e.ply");
        write_ply(&empty, &PointCloud::default()).unwrap();
        assert_eq!(read_ply(&empty).unwrap().len(), 0);
    }
}
