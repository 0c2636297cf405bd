//! Emission map grids, patch slicing, and the EMG v1 binary format.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::resample;

/// Upscale factor of the SR task. Fixed; HR patches are `SCALE` times the
/// LR patch side.
pub const SCALE: usize = 2;

/// Default patch side in cells.
pub const PATCH_SIZE: usize = 32;

/// EMG v1 magic bytes.
pub const EMG_MAGIC: [u8; 4] = *b"EMGR";
pub const EMG_VERSION: u32 = 1;

/// Data-domain provenance of a map or patch.
///
/// `Observed` carries a numeric instrument id so several observed
/// datasets can coexist in one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainTag {
    Simulated,
    SimulatedTimeLimited,
    Observed(u32),
}

impl DomainTag {
    /// Wire code used by the EMG header (`2 + id` for observed).
    pub fn code(self) -> u32 {
        match self {
            DomainTag::Simulated => 0,
            DomainTag::SimulatedTimeLimited => 1,
            DomainTag::Observed(id) => 2 + id,
        }
    }

    pub fn from_code(code: u32) -> Self {
        match code {
            0 => DomainTag::Simulated,
            1 => DomainTag::SimulatedTimeLimited,
            n => DomainTag::Observed(n - 2),
        }
    }

    /// Compact text label used in manifests and report CSVs.
    pub fn label(self) -> String {
        match self {
            DomainTag::Simulated => "S".to_string(),
            DomainTag::SimulatedTimeLimited => "ST".to_string(),
            DomainTag::Observed(id) => format!("O{id}"),
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        match s {
            "S" => Ok(DomainTag::Simulated),
            "ST" => Ok(DomainTag::SimulatedTimeLimited),
            _ => match s.strip_prefix('O').and_then(|id| id.parse::<u32>().ok()) {
                Some(id) => Ok(DomainTag::Observed(id)),
                None => Err(Error::Data(format!("unknown domain label `{s}`"))),
            },
        }
    }

    pub fn is_observed(self) -> bool {
        matches!(self, DomainTag::Observed(_))
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// A 2-D non-negative emission flux grid with georeferencing metadata.
///
/// Values are row-major f32. Every value is finite and `>= 0`; dimensions
/// are at least 1×1 and `resolution_deg > 0`. The species identifier is
/// carried in memory only — the EMG format is single-species and readers
/// restore the default.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionMap {
    values: Vec<f32>,
    height: usize,
    width: usize,
    pub resolution_deg: f64,
    pub domain: DomainTag,
    pub time_index: u32,
    pub species: String,
}

pub const DEFAULT_SPECIES: &str = "isoprene";

impl EmissionMap {
    pub fn new(
        values: Vec<f32>,
        height: usize,
        width: usize,
        resolution_deg: f64,
        domain: DomainTag,
        time_index: u32,
        species: impl Into<String>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "map dimensions must be at least 1x1, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "value count {} does not match {height}x{width}",
                values.len()
            )));
        }
        if !(resolution_deg > 0.0) {
            return Err(Error::Data(format!(
                "resolution_deg must be positive, got {resolution_deg}"
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Data(format!(
                "emission values must be finite and non-negative, found {v}"
            )));
        }
        Ok(EmissionMap {
            values,
            height,
            width,
            resolution_deg,
            domain,
            time_index,
            species: species.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    /// Bicubically coarsen the whole map by an integer factor, halving the
    /// grid and multiplying `resolution_deg` accordingly. Cells whose entire
    /// fine-grid block is zero stay exactly zero.
    pub fn coarsen(&self, factor: usize) -> Result<EmissionMap> {
        let values = resample::bicubic_downsample(&self.values, self.height, self.width, factor)?;
        let (h, w) = (self.height / factor, self.width / factor);
        let mut values = values;
        if factor > 1 {
            for cy in 0..h {
                for cx in 0..w {
                    let mut all_zero = true;
                    'block: for dy in 0..factor {
                        for dx in 0..factor {
                            if self.get(cy * factor + dy, cx * factor + dx) != 0.0 {
                                all_zero = false;
                                break 'block;
                            }
                        }
                    }
                    if all_zero {
                        values[cy * w + cx] = 0.0;
                    }
                }
            }
        }
        EmissionMap::new(
            values,
            h,
            w,
            self.resolution_deg * factor as f64,
            self.domain,
            self.time_index,
            self.species.clone(),
        )
    }

    /// Write the map in EMG v1: magic `EMGR`, u32 version, u32 height,
    /// u32 width, f64 resolution_deg, u32 domain code, u32 time_index,
    /// then height·width f32 values row-major. All fields little-endian.
    pub fn write_emg(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + self.values.len() * 4);
        buf.extend_from_slice(&EMG_MAGIC);
        buf.extend_from_slice(&EMG_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&self.resolution_deg.to_le_bytes());
        buf.extend_from_slice(&self.domain.code().to_le_bytes());
        buf.extend_from_slice(&self.time_index.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, &buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_emg(path: &Path) -> Result<EmissionMap> {
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        if buf.len() < 32 {
            return Err(Error::format(path, "truncated EMG header"));
        }
        if buf[0..4] != EMG_MAGIC {
            return Err(Error::format(path, "bad magic bytes (expected EMGR)"));
        }
        let u32_at = |off: usize| u32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != EMG_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported EMG version {version}"),
            ));
        }
        let height = u32_at(8) as usize;
        let width = u32_at(12) as usize;
        let resolution_deg = f64::from_le_bytes(buf[16..24].try_into().unwrap());
        let domain = DomainTag::from_code(u32_at(24));
        let time_index = u32_at(28);
        let expected = 32 + height * width * 4;
        if buf.len() != expected {
            return Err(Error::format(
                path,
                format!("expected {expected} bytes for {height}x{width}, got {}", buf.len()),
            ));
        }
        let values = buf[32..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        EmissionMap::new(
            values,
            height,
            width,
            resolution_deg,
            domain,
            time_index,
            DEFAULT_SPECIES,
        )
        .map_err(|e| Error::format(path, e.to_string()))
    }
}

/// One HR patch cut from a source map. `empty` flags all-zero patches;
/// they are retained so downstream stages can filter or keep them.
#[derive(Clone, Debug, PartialEq)]
pub struct HrPatch {
    pub values: Vec<f32>,
    pub size: usize,
    pub origin: (usize, usize),
    pub empty: bool,
}

/// Slice a map into non-overlapping `patch_size`-sided patches tiling the
/// top-left region; edge remainders are discarded. Patches come out in
/// row-major tiling order.
pub fn slice_into_patches(map: &EmissionMap, patch_size: usize) -> Result<Vec<HrPatch>> {
    if patch_size < 2 {
        return Err(Error::Dimension(format!(
            "patch_size must be at least 2, got {patch_size}"
        )));
    }
    if map.height() < patch_size || map.width() < patch_size {
        return Err(Error::Dimension(format!(
            "map {}x{} is smaller than patch_size {patch_size}",
            map.height(),
            map.width()
        )));
    }
    let rows = map.height() / patch_size;
    let cols = map.width() / patch_size;
    let mut patches = Vec::with_capacity(rows * cols);
    for pr in 0..rows {
        for pc in 0..cols {
            let origin = (pr * patch_size, pc * patch_size);
            let mut values = Vec::with_capacity(patch_size * patch_size);
            for dy in 0..patch_size {
                let row = map.row(origin.0 + dy);
                values.extend_from_slice(&row[origin.1..origin.1 + patch_size]);
            }
            let empty = values.iter().all(|v| *v == 0.0);
            patches.push(HrPatch {
                values,
                size: patch_size,
                origin,
                empty,
            });
        }
    }
    Ok(patches)
}

/// An HR/LR training pair: the HR patch and its bicubically downsampled
/// LR counterpart (LR side = HR side / `SCALE`).
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub hr: Vec<f32>,
    pub lr: Vec<f32>,
    pub hr_size: usize,
    pub source_map: String,
    pub origin: (usize, usize),
    pub domain: DomainTag,
    pub empty: bool,
}

impl PatchPair {
    /// Build a pair from an HR patch, deriving the LR side bicubically.
    pub fn derive(patch: &HrPatch, source_map: impl Into<String>, domain: DomainTag) -> Result<Self> {
        if patch.size % SCALE != 0 {
            return Err(Error::Dimension(format!(
                "patch size {} not divisible by scale {SCALE}",
                patch.size
            )));
        }
        if patch.origin.0 % patch.size != 0 || patch.origin.1 % patch.size != 0 {
            return Err(Error::Dimension(format!(
                "patch origin {:?} is not aligned to size {}",
                patch.origin, patch.size
            )));
        }
        let lr = resample::bicubic_downsample(&patch.values, patch.size, patch.size, SCALE)?;
        Ok(PatchPair {
            hr: patch.values.clone(),
            lr,
            hr_size: patch.size,
            source_map: source_map.into(),
            origin: patch.origin,
            domain,
            empty: patch.empty,
        })
    }

    pub fn lr_size(&self) -> usize {
        self.hr_size / SCALE
    }
}
