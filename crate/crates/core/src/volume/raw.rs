use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Axis, OctVolume, VolumeGeometry};
use crate::error::{Error, Result};

/// Byte order of a raw 8-bit volume file: axes listed fastest-varying first,
/// plus optional per-axis flips.
///
/// Written as e.g. `zxy` (canonical) or `zxy:flip=z` / `xzy:flip=xy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub order: [Axis; 3],
    pub flip: [bool; 3],
}

impl Default for Layout {
    fn default() -> Self {
        Layout::canonical()
    }
}

impl Layout {
    pub fn canonical() -> Self {
        Layout {
            order: [Axis::Z, Axis::X, Axis::Y],
            flip: [false; 3],
        }
    }

    pub fn is_canonical(&self) -> bool {
        *self == Layout::canonical()
    }

    /// Byte offset in the file of canonical voxel (x, y, z).
    fn strides(&self, g: &VolumeGeometry) -> [usize; 3] {
        let mut strides = [0usize; 3];
        let mut step = 1;
        for axis in self.order {
            strides[axis.index()] = step;
            step *= g.count(axis);
        }
        strides
    }

    fn file_offsets(&self, g: &VolumeGeometry) -> impl Fn(usize, usize, usize) -> usize {
        let strides = self.strides(g);
        let flip = self.flip;
        let dims = [g.nx, g.ny, g.nz];
        move |x, y, z| {
            let c = [x, y, z];
            (0..3)
                .map(|a| {
                    let v = if flip[a] { dims[a] - 1 - c[a] } else { c[a] };
                    v * strides[a]
                })
                .sum()
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.order {
            write!(f, "{}", a.name())?;
        }
        if self.flip.iter().any(|&b| b) {
            write!(f, ":flip=")?;
            for a in Axis::ALL {
                if self.flip[a.index()] {
                    write!(f, "{}", a.name())?;
                }
            }
        }
        Ok(())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Layout(s.to_string());
        let (order_part, flip_part) = match s.split_once(':') {
            Some((o, f)) => (o, Some(f)),
            None => (s, None),
        };
        let parse_axis = |c: char| match c.to_ascii_lowercase() {
            'x' => Some(Axis::X),
            'y' => Some(Axis::Y),
            'z' => Some(Axis::Z),
            _ => None,
        };
        let axes: Vec<Axis> = order_part
            .trim()
            .chars()
            .map(parse_axis)
            .collect::<Option<_>>()
            .ok_or_else(bad)?;
        if axes.len() != 3 || Axis::ALL.iter().any(|a| !axes.contains(a)) {
            return Err(bad());
        }
        let mut flip = [false; 3];
        if let Some(f) = flip_part {
            let letters = f.trim().strip_prefix("flip=").ok_or_else(bad)?;
            for c in letters.chars() {
                flip[parse_axis(c).ok_or_else(bad)?.index()] = true;
            }
        }
        Ok(Layout {
            order: [axes[0], axes[1], axes[2]],
            flip,
        })
    }
}

/// Reads an 8-bit raw volume and reorders it into canonical layout.
pub fn read_raw_volume(
    path: impl AsRef<Path>,
    geometry: &VolumeGeometry,
    layout: &Layout,
) -> Result<OctVolume> {
    let path = path.as_ref();
    geometry.validate()?;
    let expected = geometry.len() as u64;
    let actual = fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    if actual != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    let mut bytes = Vec::with_capacity(expected as usize);
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    if layout.is_canonical() {
        return OctVolume::from_u8(*geometry, &bytes);
    }
    let offset = layout.file_offsets(geometry);
    OctVolume::from_fn(*geometry, |x, y, z| bytes[offset(x, y, z)] as f64 / 255.0)
}

/// Writes the volume as canonical-layout 8-bit raw bytes.
pub fn write_raw_volume(volume: &OctVolume, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &volume.to_u8())
}

/// Writes the volume in an arbitrary layout; `read_raw_volume` with the same
/// layout inverts it.
pub fn write_raw_volume_with_layout(
    volume: &OctVolume,
    path: impl AsRef<Path>,
    layout: &Layout,
) -> Result<()> {
    let g = volume.geometry();
    let canonical = volume.to_u8();
    if layout.is_canonical() {
        return write_bytes(path.as_ref(), &canonical);
    }
    let offset = layout.file_offsets(g);
    let mut out = vec![0u8; canonical.len()];
    for y in 0..g.ny {
        for x in 0..g.nx {
            for z in 0..g.nz {
                out[offset(x, y, z)] = canonical[volume.index(x, y, z)];
            }
        }
    }
    write_bytes(path.as_ref(), &out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> VolumeGeometry {
        VolumeGeometry::new(2, 2, 2, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn layout_parse_and_display() {
        let l: Layout = "zxy".parse().unwrap();
        assert!(l.is_canonical());
        let l: Layout = "xzy:flip=zx".parse().unwrap();
        assert_eq!(l.order, [Axis::X, Axis::Z, Axis::Y]);
        assert_eq!(l.flip, [true, false, true]);
        assert_eq!(l.to_string(), "xzy:flip=xz");
        assert!("zzy".parse::<Layout>().is_err());
        assert!("zx".parse::<Layout>().is_err());
        assert!("zxy:flop=z".parse::<Layout>().is_err());
    }

    #[test]
    fn canonical_bytes_are_index_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.img");
        let v = OctVolume::from_u8(tiny(), &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        write_raw_volume(&v, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), vec![0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn layouts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = VolumeGeometry::new(3, 4, 5, 1.0, 1.0, 1.0).unwrap();
        let bytes: Vec<u8> = (0..g.len() as u32).map(|i| (i * 7 % 251) as u8).collect();
        let v = OctVolume::from_u8(g, &bytes).unwrap();
        for spec in ["zxy", "xyz", "yzx:flip=z", "zxy:flip=xyz"] {
            let layout: Layout = spec.parse().unwrap();
            let path = dir.path().join(format!("{spec}.img"));
            write_raw_volume_with_layout(&v, &path, &layout).unwrap();
            let back = read_raw_volume(&path, &g, &layout).unwrap();
            assert_eq!(back, v, "layout {spec}");
        }
    }

    #[test]
    fn flipped_z_reverses_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.img");
        std::fs::write(&path, [0u8, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let layout: Layout = "zxy:flip=z".parse().unwrap();
        let v = read_raw_volume(&path, &tiny(), &layout).unwrap();
        assert_eq!(v.to_u8(), vec![1, 0, 3, 2, 5, 4, 7, 6]);
    }

    #[test]
    fn size_mismatch_reports_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.img");
        std::fs::write(&path, [0u8; 7]).unwrap();
        match read_raw_volume(&path, &tiny(), &Layout::canonical()) {
            Err(Error::SizeMismatch {
                expected, actual, ..
            }) => {
                assert_eq!((expected, actual), (8, 7));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let r = read_raw_volume("/nonexistent/v.img", &tiny(), &Layout::canonical());
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
