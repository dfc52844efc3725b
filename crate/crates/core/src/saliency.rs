//! Per-word attention maps, their binarization, and face-box overlap.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{json_error, Error, Result};
use crate::identity::BBox;

pub const MAGIC: &[u8; 4] = b"ATTN";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

/// Saliency grid for one caption word on one image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub image_id: String,
    pub word: String,
    height: usize,
    width: usize,
    cells: Vec<f32>,
}

impl AttentionMap {
    pub fn new(
        image_id: impl Into<String>,
        word: impl Into<String>,
        height: usize,
        width: usize,
        cells: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::AttentionMap(format!("empty {height}x{width} grid")));
        }
        if height.checked_mul(width) != Some(cells.len()) {
            return Err(Error::AttentionMap(format!(
                "{} cells for a {height}x{width} grid",
                cells.len()
            )));
        }
        if let Some(i) = cells.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::AttentionMap(format!(
                "cell ({}, {}) = {} is negative or non-finite",
                i / width,
                i % width,
                cells[i]
            )));
        }
        Ok(AttentionMap {
            image_id: image_id.into(),
            word: word.into(),
            height,
            width,
            cells,
        })
    }

    /// Build from nested rows, as used by the JSON fixture format.
    pub fn from_rows(image_id: impl Into<String>, word: impl Into<String>, rows: &[Vec<f32>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::AttentionMap("ragged rows".into()));
        }
        AttentionMap::new(image_id, word, rows.len(), width, rows.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[f32] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.cells[row * self.width + col]
    }

    /// (row, col) of the largest cell; the first one on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.cells.iter().enumerate() {
            if *v > self.cells[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.cells.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.cells {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(image_id: impl Into<String>, word: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::AttentionMap(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::AttentionMap("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::AttentionMap(format!("unsupported version {version}")));
        }
        let height = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let width = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN));
        if expected != Some(bytes.len()) {
            return Err(Error::AttentionMap(format!(
                "{height}x{width} grid but {} payload bytes",
                bytes.len() - HEADER_LEN
            )));
        }
        let cells = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        AttentionMap::new(image_id, word, height, width, cells)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Read a map file: `.json` files hold nested rows, anything else is the
    /// binary format.
    pub fn read_file(image_id: &str, word: &str, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            let rows: Vec<Vec<f32>> =
                serde_json::from_slice(&bytes).map_err(|e| json_error(&path.display().to_string(), e))?;
            AttentionMap::from_rows(image_id, word, &rows)
        } else {
            AttentionMap::from_bytes(image_id, word, &bytes)
                .map_err(|e| Error::AttentionMap(format!("{}: {e}", path.display())))
        }
    }

    /// Text dump for debugging: one row per line, `#` activated.
    pub fn debug_dump(mask: &ActivationMask) -> String {
        let mut s = String::with_capacity((mask.width + 1) * mask.height);
        for r in 0..mask.height {
            for c in 0..mask.width {
                s.push(if mask.get(r, c) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// Activated cells of an attention map.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMask {
    height: usize,
    width: usize,
    cells: Vec<bool>,
    alpha: f64,
}

impl ActivationMask {
    pub fn from_cells(height: usize, width: usize, cells: Vec<bool>, alpha: f64) -> Result<Self> {
        if height == 0 || width == 0 || height * width != cells.len() {
            return Err(Error::AttentionMap(format!(
                "{} cells for a {height}x{width} mask",
                cells.len()
            )));
        }
        Ok(ActivationMask {
            height,
            width,
            cells,
            alpha,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn activated_count(&self) -> u64 {
        self.cells.iter().filter(|&&c| c).count() as u64
    }

    /// Whole-grid rectangle.
    pub fn full_rect(&self) -> GridRect {
        GridRect {
            row0: 0,
            col0: 0,
            row1: self.height,
            col1: self.width,
        }
    }
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::parameter("alpha", format!("{alpha} outside (0, 1]")))
    }
}

/// Min-max normalize the grid and keep cells at or above `alpha`. A flat
/// map activates every cell.
pub fn binarize(map: &AttentionMap, alpha: f64) -> Result<ActivationMask> {
    validate_alpha(alpha)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &map.cells {
        if !v.is_finite() {
            return Err(Error::AttentionMap("non-finite cell".into()));
        }
        lo = lo.min(v as f64);
        hi = hi.max(v as f64);
    }
    let range = hi - lo;
    let cells = if range == 0.0 {
        vec![true; map.cells.len()]
    } else {
        map.cells
            .iter()
            .map(|&v| (v as f64 - lo) / range >= alpha)
            .collect()
    };
    Ok(ActivationMask {
        height: map.height,
        width: map.width,
        cells,
        alpha,
    })
}

/// Half-open rectangle of grid cells: rows `row0..row1`, cols `col0..col1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridRect {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl GridRect {
    pub fn area(&self) -> u64 {
        (self.row1.saturating_sub(self.row0) * self.col1.saturating_sub(self.col0)) as u64
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row1).contains(&row) && (self.col0..self.col1).contains(&col)
    }

    fn fits(&self, height: usize, width: usize) -> bool {
        self.row0 < self.row1 && self.col0 < self.col1 && self.row1 <= height && self.col1 <= width
    }
}

// Values this close to an integer are treated as that integer before
// floor/ceil, so exact grid lines survive float rounding.
const SNAP: f64 = 1e-9;

fn snapped(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// One axis of [`bbox_to_grid`]: returns a non-empty `lo..hi` within `0..cells`.
fn scale_axis(lo: f64, hi: f64, pixels: u32, cells: usize) -> (usize, usize) {
    let k = cells as f64 / pixels as f64;
    let a = (snapped(lo * k).floor().max(0.0) as usize).min(cells);
    let b = (snapped(hi * k).ceil().max(0.0) as usize).min(cells);
    if b > a {
        (a, b)
    } else if a < cells {
        (a, a + 1)
    } else {
        (cells - 1, cells)
    }
}

/// Project a pixel box onto an attention grid, rounding outward so every
/// face covers at least one cell.
pub fn bbox_to_grid(bbox: &BBox, image: (u32, u32), grid: (usize, usize)) -> Result<GridRect> {
    let (width, height) = image;
    let (grid_h, grid_w) = grid;
    if width == 0 || height == 0 || grid_h == 0 || grid_w == 0 {
        return Err(Error::Geometry("image and grid dimensions must be positive".into()));
    }
    if bbox.is_empty() {
        return Err(Error::Geometry(format!("empty bbox {:?}", <[f64; 4]>::from(*bbox))));
    }
    if !bbox.fits_within(width as f64, height as f64) {
        return Err(Error::Geometry(format!(
            "bbox {:?} outside the {width}x{height} image",
            <[f64; 4]>::from(*bbox)
        )));
    }
    let (col0, col1) = scale_axis(bbox.x, bbox.right(), width, grid_w);
    let (row0, row1) = scale_axis(bbox.y, bbox.bottom(), height, grid_h);
    Ok(GridRect { row0, col0, row1, col1 })
}

/// What the activated-cell count inside a face box is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapDenominator {
    /// Cells in the face box.
    #[default]
    BoxArea,
    /// All activated cells of the map.
    ActivatedArea,
    /// Union of the box and the activated area (IoU).
    Union,
}

/// Exact overlap counts; the ratio is formed once from integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overlap {
    pub activated_in_box: u64,
    pub denominator: u64,
}

impl Overlap {
    pub fn ratio(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.activated_in_box as f64 / self.denominator as f64
        }
    }
}

pub fn overlap_counts(mask: &ActivationMask, rect: &GridRect, denominator: OverlapDenominator) -> Result<Overlap> {
    if !rect.fits(mask.height, mask.width) {
        return Err(Error::Geometry(format!(
            "rect {rect:?} outside the {}x{} grid",
            mask.height, mask.width
        )));
    }
    let inside: u64 = (rect.row0..rect.row1)
        .map(|r| {
            let row = &mask.cells[r * mask.width + rect.col0..r * mask.width + rect.col1];
            row.iter().filter(|&&c| c).count() as u64
        })
        .sum();
    let denominator = match denominator {
        OverlapDenominator::BoxArea => rect.area(),
        OverlapDenominator::ActivatedArea => mask.activated_count(),
        OverlapDenominator::Union => rect.area() + mask.activated_count() - inside,
    };
    Ok(Overlap {
        activated_in_box: inside,
        denominator,
    })
}

/// Fraction of the box's cells that are activated.
pub fn overlap_ratio(mask: &ActivationMask, rect: &GridRect) -> Result<f64> {
    Ok(overlap_counts(mask, rect, OverlapDenominator::BoxArea)?.ratio())
}

/// One row of the attention index file. Exactly one of `path` / `grid`
/// is given; relative paths resolve against the index file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionIndexEntry {
    pub image_id: String,
    pub word: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Vec<f32>>>,
}

fn word_key(word: &str) -> String {
    crate::corpus::normalize_whitespace(word).to_lowercase()
}

/// `(image id, word) -> map source`. Words are matched case-insensitively.
#[derive(Debug, Clone, Default)]
pub struct AttentionIndex {
    entries: BTreeMap<String, BTreeMap<String, AttentionIndexEntry>>,
}

impl AttentionIndex {
    pub fn new(entries: Vec<AttentionIndexEntry>, base_dir: Option<&Path>) -> Result<Self> {
        let mut index = AttentionIndex::default();
        for (i, mut entry) in entries.into_iter().enumerate() {
            match (&entry.path, &entry.grid) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(Error::invalid(
                        &entry.image_id,
                        format!("attention[{i}]"),
                        "exactly one of `path` or `grid` is required",
                    ))
                }
            }
            if let (Some(p), Some(base)) = (&entry.path, base_dir) {
                if p.is_relative() {
                    entry.path = Some(base.join(p));
                }
            }
            let slot = index.entries.entry(entry.image_id.clone()).or_default();
            let key = word_key(&entry.word);
            if slot.contains_key(&key) {
                return Err(Error::invalid(
                    &entry.image_id,
                    format!("attention[{i}]"),
                    format!("duplicate map for word `{}`", entry.word),
                ));
            }
            slot.insert(key, entry);
        }
        Ok(index)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<AttentionIndexEntry> =
            serde_json::from_str(&text).map_err(|e| json_error(&path.display().to_string(), e))?;
        AttentionIndex::new(entries, path.parent())
    }

    pub fn has_image(&self, image_id: &str) -> bool {
        self.entries.contains_key(image_id)
    }

    pub fn words(&self, image_id: &str) -> impl Iterator<Item = &str> {
        self.entries
            .get(image_id)
            .into_iter()
            .flat_map(|m| m.values().map(|e| e.word.as_str()))
    }

    /// Read every map registered for an image.
    pub fn load_image(&self, image_id: &str) -> Result<ImageMaps> {
        let mut maps = ImageMaps::default();
        if let Some(words) = self.entries.get(image_id) {
            for (key, entry) in words {
                let map = match (&entry.path, &entry.grid) {
                    (Some(p), _) => AttentionMap::read_file(image_id, &entry.word, p)?,
                    (None, Some(rows)) => AttentionMap::from_rows(image_id, &entry.word, rows)?,
                    (None, None) => unreachable!("checked at construction"),
                };
                maps.maps.insert(key.clone(), map);
            }
        }
        Ok(maps)
    }
}

/// The attention maps of one image, keyed by lowercased word.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageMaps {
    maps: BTreeMap<String, AttentionMap>,
}

impl ImageMaps {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, map: AttentionMap) {
        self.maps.insert(word_key(&map.word), map);
    }

    pub fn with(mut self, map: AttentionMap) -> Self {
        self.insert(map);
        self
    }

    pub fn get(&self, word: &str) -> Option<&AttentionMap> {
        self.maps.get(&word_key(word))
    }

    /// Maps in lowercased-word order.
    pub fn iter(&self) -> impl Iterator<Item = &AttentionMap> {
        self.maps.values()
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, cells: Vec<f32>) -> AttentionMap {
        AttentionMap::new("img", "man", h, w, cells).unwrap()
    }

    #[test]
    fn constant_map_activates_everything() {
        let m = binarize(&map(2, 3, vec![0.7; 6]), 1.0).unwrap();
        assert_eq!(m.activated_count(), 6);
    }

    #[test]
    fn single_peak_at_alpha_one() {
        let mut cells = vec![0.1; 9];
        cells[5] = 3.0;
        let m = binarize(&map(3, 3, cells), 1.0).unwrap();
        assert_eq!(m.activated_count(), 1);
        assert!(m.get(1, 2));
    }

    #[test]
    fn invalid_maps_and_alpha() {
        assert!(AttentionMap::new("i", "w", 1, 2, vec![0.0, f32::NAN]).is_err());
        assert!(AttentionMap::new("i", "w", 1, 2, vec![0.0, -1.0]).is_err());
        assert!(AttentionMap::new("i", "w", 0, 2, vec![]).is_err());
        assert!(AttentionMap::new("i", "w", 2, 2, vec![0.0; 3]).is_err());
        let m = map(1, 1, vec![1.0]);
        assert!(binarize(&m, 0.0).is_err());
        assert!(binarize(&m, 1.5).is_err());
    }

    #[test]
    fn bbox_projection() {
        let b = BBox::new(10.0, 20.0, 30.0, 40.0);
        assert_eq!(
            bbox_to_grid(&b, (100, 100), (100, 100)).unwrap(),
            GridRect { row0: 20, col0: 10, row1: 60, col1: 40 }
        );
        let full = BBox::new(0.0, 0.0, 640.0, 480.0);
        assert_eq!(
            bbox_to_grid(&full, (640, 480), (24, 24)).unwrap(),
            GridRect { row0: 0, col0: 0, row1: 24, col1: 24 }
        );
        // floor/ceil by hand: 10*10/100 = 1, 30*10/100 = 3
        let b = BBox::new(10.0, 10.0, 20.0, 20.0);
        assert_eq!(
            bbox_to_grid(&b, (100, 100), (10, 10)).unwrap(),
            GridRect { row0: 1, col0: 1, row1: 3, col1: 3 }
        );
        // 11..12 px -> 1.1..1.2 cells -> 1..2
        let b = BBox::new(11.0, 11.0, 1.0, 1.0);
        assert_eq!(bbox_to_grid(&b, (100, 100), (10, 10)).unwrap().area(), 1);
        // tiny face on the far edge still covers a cell
        let b = BBox::new(99.99, 99.99, 0.01, 0.01);
        assert_eq!(
            bbox_to_grid(&b, (100, 100), (10, 10)).unwrap(),
            GridRect { row0: 9, col0: 9, row1: 10, col1: 10 }
        );
        assert!(bbox_to_grid(&BBox::new(0.0, 0.0, 0.0, 5.0), (10, 10), (2, 2)).is_err());
        assert!(bbox_to_grid(&BBox::new(5.0, 5.0, 6.0, 1.0), (10, 10), (2, 2)).is_err());
    }

    #[test]
    fn overlap_extremes_and_denominators() {
        let full = ActivationMask::from_cells(4, 4, vec![true; 16], 0.5).unwrap();
        let rect = GridRect { row0: 1, col0: 1, row1: 3, col1: 4 };
        assert_eq!(overlap_ratio(&full, &rect).unwrap(), 1.0);
        let none = ActivationMask::from_cells(4, 4, vec![false; 16], 0.5).unwrap();
        assert_eq!(overlap_ratio(&none, &rect).unwrap(), 0.0);

        let mut cells = vec![false; 16];
        cells[5] = true; // (1,1) inside
        cells[0] = true; // (0,0) outside
        let m = ActivationMask::from_cells(4, 4, cells, 0.5).unwrap();
        let o = overlap_counts(&m, &rect, OverlapDenominator::BoxArea).unwrap();
        assert_eq!((o.activated_in_box, o.denominator), (1, 6));
        let o = overlap_counts(&m, &rect, OverlapDenominator::ActivatedArea).unwrap();
        assert_eq!((o.activated_in_box, o.denominator), (1, 2));
        let o = overlap_counts(&m, &rect, OverlapDenominator::Union).unwrap();
        assert_eq!((o.activated_in_box, o.denominator), (1, 7));

        let outside = GridRect { row0: 2, col0: 2, row1: 5, col1: 3 };
        assert!(overlap_ratio(&m, &outside).is_err());
    }

    #[test]
    fn binary_format_layout() {
        let m = map(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 0.5]);
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"ATTN");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[3, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &0.0f32.to_le_bytes());
        assert_eq!(&bytes[18..22], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 14 + 6 * 4);
        assert_eq!(AttentionMap::from_bytes("img", "man", &bytes).unwrap(), m);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(AttentionMap::from_bytes("i", "w", &bad).is_err());
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(AttentionMap::from_bytes("i", "w", &bad).is_err());
        assert!(AttentionMap::from_bytes("i", "w", &bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn index_resolves_files_and_inline_grids() {
        let dir = tempfile::tempdir().unwrap();
        map(2, 2, vec![0.0, 1.0, 0.0, 0.0]).write_binary(&dir.path().join("a.attn")).unwrap();
        fs::write(dir.path().join("b.json"), "[[1, 0], [0, 0]]").unwrap();
        let index = r#"[
            {"image_id": "img", "word": "man", "path": "a.attn"},
            {"image_id": "img", "word": "Woman", "path": "b.json"},
            {"image_id": "other", "word": "person", "grid": [[0.5]]}
        ]"#;
        fs::write(dir.path().join("index.json"), index).unwrap();
        let idx = AttentionIndex::load(&dir.path().join("index.json")).unwrap();
        let maps = idx.load_image("img").unwrap();
        assert_eq!(maps.len(), 2);
        assert_eq!(maps.get("MAN").unwrap().get(0, 1), 1.0);
        assert_eq!(maps.get("woman").unwrap().get(0, 0), 1.0);
        assert_eq!(idx.load_image("other").unwrap().get("person").unwrap().width(), 1);
        assert!(idx.load_image("missing").unwrap().is_empty());
        assert!(!idx.has_image("missing"));

        let both = vec![AttentionIndexEntry {
            image_id: "x".into(),
            word: "man".into(),
            path: Some("p".into()),
            grid: Some(vec![vec![1.0]]),
        }];
        assert!(AttentionIndex::new(both, None).is_err());
    }

    #[test]
    fn debug_dump_marks_activated_cells() {
        let m = ActivationMask::from_cells(2, 2, vec![true, false, false, true], 0.5).unwrap();
        assert_eq!(AttentionMap::debug_dump(&m), "#.\n.#\n");
    }
}
