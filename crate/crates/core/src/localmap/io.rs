//! Map serialization: one 16-bit binary PGM per layer plus a YAML sidecar,
//! and a CSV dump for debugging.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayeredGridMap, MapError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub file: String,
    /// Value mapped to pixel 0.
    pub min: f64,
    /// Value mapped to pixel 65535.
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub resolution: f64,
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
    pub layers: Vec<LayerEntry>,
}

fn io_err(e: impl std::fmt::Display) -> MapError {
    MapError::Io(e.to_string())
}

/// Encodes a scalar layer as a P5 PGM with maxval 65535. Row 0 of the image
/// is the top (largest y) row of the map.
pub fn encode_pgm16(width: usize, height: usize, values: &[f64], min: f64, max: f64) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    let span = if max > min { max - min } else { 1.0 };
    for j in (0..height).rev() {
        for i in 0..width {
            let v = values[j * width + i];
            let q = (((v - min) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    out
}

pub fn decode_pgm16(bytes: &[u8], min: f64, max: f64) -> Result<(usize, usize, Vec<f64>), MapError> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(io_err("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(io_err(format!("unsupported PGM magic {}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(io_err);
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 65535 {
        return Err(io_err(format!("expected 16-bit PGM, maxval {maxval}")));
    }
    let data = &bytes[pos.min(bytes.len())..];
    if data.len() < 2 * w * h {
        return Err(io_err("truncated PGM raster"));
    }
    let span = if max > min { max - min } else { 1.0 };
    let mut values = vec![0.0; w * h];
    for (k, px) in data.chunks_exact(2).take(w * h).enumerate() {
        let q = u16::from_be_bytes([px[0], px[1]]) as f64;
        let (row, i) = (k / w, k % w);
        let j = h - 1 - row;
        values[j * w + i] = min + q / 65535.0 * span;
    }
    Ok((w, h, values))
}

fn bool_layer(v: &[bool]) -> Vec<f64> {
    v.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

/// Writes `<stem>.yaml` and `<stem>_<layer>.pgm` into `dir`.
pub fn save_map(map: &LayeredGridMap, dir: &Path, stem: &str) -> Result<(), MapError> {
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut layers: Vec<(&str, Vec<f64>)> = vec![("elevation", map.elevation.clone())];
    if let Some(s) = &map.slope {
        layers.push(("slope", s.clone()));
    }
    layers.push(("obstacle", bool_layer(&map.obstacle)));
    layers.push(("unknown", bool_layer(&map.unknown)));
    let mut entries = Vec::new();
    for (name, values) in layers {
        let (min, max) = if name == "obstacle" || name == "unknown" {
            (0.0, 1.0)
        } else {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let file = format!("{stem}_{name}.pgm");
        fs::write(dir.join(&file), encode_pgm16(map.width, map.height, &values, min, max)).map_err(io_err)?;
        entries.push(LayerEntry {
            name: name.to_string(),
            file,
            min,
            max,
        });
    }
    let sidecar = MapSidecar {
        resolution: map.resolution,
        origin: map.origin,
        width: map.width,
        height: map.height,
        layers: entries,
    };
    let yaml = serde_yaml::to_string(&sidecar).map_err(io_err)?;
    fs::write(dir.join(format!("{stem}.yaml")), yaml).map_err(io_err)
}

pub fn load_map(yaml_path: &Path) -> Result<LayeredGridMap, MapError> {
    let text = fs::read_to_string(yaml_path).map_err(io_err)?;
    let sidecar: MapSidecar = serde_yaml::from_str(&text).map_err(io_err)?;
    let dir = yaml_path.parent().unwrap_or(Path::new("."));
    let mut map = LayeredGridMap::new(sidecar.width, sidecar.height, sidecar.resolution, sidecar.origin)?;
    for entry in &sidecar.layers {
        let bytes = fs::read(dir.join(&entry.file)).map_err(io_err)?;
        let (w, h, values) = decode_pgm16(&bytes, entry.min, entry.max)?;
        if (w, h) != (map.width, map.height) {
            return Err(MapError::LayerShape(entry.name.clone(), w * h, map.len()));
        }
        match entry.name.as_str() {
            "elevation" => map.elevation = values,
            "slope" => map.slope = Some(values),
            "obstacle" => map.obstacle = values.iter().map(|v| *v > 0.5).collect(),
            "unknown" => map.unknown = values.iter().map(|v| *v > 0.5).collect(),
            other => log::warn!("ignoring unrecognised layer {other}"),
        }
    }
    map.validate()?;
    Ok(map)
}

/// One row per cell: `ix,iy,x,y,elevation,slope,obstacle,unknown`.
pub fn write_csv<W: Write>(map: &LayeredGridMap, mut out: W) -> std::io::Result<()> {
    writeln!(out, "ix,iy,x,y,elevation,slope,obstacle,unknown")?;
    for i in 0..map.len() {
        let c = map.cell_of_index(i);
        let p = map.cell_center(c);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.0,
            c.1,
            p[0],
            p[1],
            map.elevation[i],
            map.slope_at_index(i),
            map.obstacle[i] as u8,
            map.unknown[i] as u8
        )?;
    }
    Ok(())
}
