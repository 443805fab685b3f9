//! Text encodings of ground truth: a KITTI-tracking-layout label file plus a `.meta`
//! side file carrying the continuous rates and the ignore flag.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{GtBox2D, Object3D};
use crate::geometry::Box2D;
use crate::{Error, Result};

/// `frame track_id Car truncated occluded alpha left top right bottom h w l x y z ry score`
pub fn write_gt(gt: &[GtBox2D]) -> String {
    let mut s = String::new();
    for g in gt {
        let o = &g.object;
        let b = &g.bbox;
        writeln!(
            s,
            "{} {} Car {:.6} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} -1",
            g.frame,
            g.track_id,
            g.truncation,
            g.occlusion_level(),
            o.alpha,
            b.left,
            b.top,
            b.right,
            b.bottom,
            o.dimensions[0],
            o.dimensions[1],
            o.dimensions[2],
            o.location[0],
            o.location[1],
            o.location[2],
            o.rotation_y
        )
        .unwrap();
    }
    s
}

/// `frame track_id occupancy visibility ignore`
pub fn write_meta(gt: &[GtBox2D]) -> String {
    let mut s = String::new();
    for g in gt {
        writeln!(s, "{} {} {:.6} {:.6} {}", g.frame, g.track_id, g.occupancy, g.visibility, g.ignore as u8).unwrap();
    }
    s
}

/// Writes `path` and its `.meta` sibling.
pub fn write_gt_files(gt: &[GtBox2D], path: &Path) -> Result<()> {
    std::fs::write(path, write_gt(gt)).map_err(|e| Error::io(path, e))?;
    let meta = path.with_extension("meta");
    std::fs::write(&meta, write_meta(gt)).map_err(|e| Error::io(&meta, e))
}

pub fn read_gt_files(path: &Path) -> Result<Vec<GtBox2D>> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let meta = path.with_extension("meta");
    read_gt(&read(path)?, &read(&meta)?, path, &meta)
}

struct Fields<'a> {
    path: &'a Path,
    line: usize,
    tokens: Vec<(usize, &'a str)>,
}

impl<'a> Fields<'a> {
    fn new(path: &'a Path, line: usize, text: &'a str) -> Self {
        let tokens = text.split_whitespace().map(|t| (t.as_ptr() as usize - text.as_ptr() as usize + 1, t)).collect();
        Self { path, line, tokens }
    }

    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line: self.line, column, message: message.into() }
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.tokens.len() != n {
            return Err(self.err(1, format!("expected {n} fields, found {}", self.tokens.len())));
        }
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        let (col, tok) = self.tokens[i];
        tok.parse().map_err(|_| self.err(col, format!("cannot parse field {} ({tok:?})", i + 1)))
    }
}

/// Parses a label file and its meta file back into annotations, sorted by `(frame, track_id)`.
pub fn read_gt(gt_text: &str, meta_text: &str, gt_path: &Path, meta_path: &Path) -> Result<Vec<GtBox2D>> {
    let mut meta = BTreeMap::new();
    for (i, line) in meta_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = Fields::new(meta_path, i + 1, line);
        f.expect_len(5)?;
        let key: (usize, u32) = (f.get(0)?, f.get(1)?);
        let ignore = match f.tokens[4].1 {
            "0" => false,
            "1" => true,
            _ => return Err(f.err(f.tokens[4].0, "ignore flag must be 0 or 1")),
        };
        if meta.insert(key, (f.get::<f64>(2)?, f.get::<f64>(3)?, ignore)).is_some() {
            return Err(f.err(1, format!("duplicate row for frame {} track {}", key.0, key.1)));
        }
    }

    let mut out = Vec::new();
    for (i, line) in gt_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f = Fields::new(gt_path, i + 1, line);
        f.expect_len(18)?;
        let (frame, track_id): (usize, u32) = (f.get(0)?, f.get(1)?);
        let n = |j| f.get::<f64>(j);
        let Some((occupancy, visibility, ignore)) = meta.remove(&(frame, track_id)) else {
            return Err(f.err(1, format!("no meta row for frame {frame} track {track_id}")));
        };
        out.push(GtBox2D {
            frame,
            track_id,
            bbox: Box2D::new(n(6)?, n(7)?, n(8)?, n(9)?),
            truncation: n(3)?,
            occupancy,
            visibility,
            ignore,
            object: Object3D {
                alpha: n(5)?,
                dimensions: [n(10)?, n(11)?, n(12)?],
                location: [n(13)?, n(14)?, n(15)?],
                rotation_y: n(16)?,
            },
        });
    }
    if let Some(((frame, track_id), _)) = meta.into_iter().next() {
        return Err(Error::Mismatch(format!(
            "{} has a row for frame {frame} track {track_id} missing from {}",
            meta_path.display(),
            gt_path.display()
        )));
    }
    out.sort_by_key(|g| (g.frame, g.track_id));
    Ok(out)
}
