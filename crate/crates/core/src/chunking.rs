//! Turning report fields into chunk lists, and drawing redacted pictures.
//!
//! Every picture message starts with a scheme header chunk describing the
//! geometry, so the renderer can place the remaining chunks even when most of
//! them are redacted. The header is never meant to be redacted; cell or
//! region `i` lives at chunk index `i + 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Digest;
use crate::rss::{ChunkedMessage, FieldTag, RedactedMessage, RssError, Slot, MAX_CHUNKS};
use crate::wire::{DecodeError, Reader, Writer};

pub const COARSE_GRID: u16 = 4;
pub const FINE_GRID: u16 = 16;

/// Stand-in chunk for an empty description. `0xff` never occurs in UTF-8.
pub const EMPTY_TEXT_MARKER: &[u8] = &[0xff];

/// Chunk index of the picture scheme header.
pub const HEADER_CHUNK: usize = 0;

/// Chunk index of picture cell / region `i`.
pub fn cell_chunk(i: usize) -> usize {
    i + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkingError {
    #[error("{rows}x{cols} grid leaves empty cells on a {width}x{height} image")]
    GridTooFine { rows: u32, cols: u32, width: u32, height: u32 },
    #[error("region {0} lies outside the image or is empty")]
    RegionOutOfBounds(usize),
    #[error("regions {0} and {1} overlap")]
    OverlappingRegions(usize, usize),
    #[error("image data is {actual} bytes, expected {expected}")]
    InvalidImage { expected: usize, actual: usize },
    #[error("scheme mismatch: {0}")]
    SchemeMismatch(&'static str),
    #[error("malformed scheme header: {0}")]
    Header(#[from] DecodeError),
    #[error(transparent)]
    Message(#[from] RssError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChunkingMode {
    GridCoarse = 0,
    GridFine = 1,
    ObjectBased = 2,
    TextWords = 3,
    LocationAtomic = 4,
}

impl ChunkingMode {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Self::GridCoarse,
            1 => Self::GridFine,
            2 => Self::ObjectBased,
            3 => Self::TextWords,
            4 => Self::LocationAtomic,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        u64::from(self.x) < u64::from(o.x) + u64::from(o.w)
            && u64::from(o.x) < u64::from(self.x) + u64::from(self.w)
            && u64::from(self.y) < u64::from(o.y) + u64::from(o.h)
            && u64::from(o.y) < u64::from(self.y) + u64::from(self.h)
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x
            && py >= self.y
            && u64::from(px) < u64::from(self.x) + u64::from(self.w)
            && u64::from(py) < u64::from(self.y) + u64::from(self.h)
    }

    fn within(&self, width: u32, height: u32) -> bool {
        self.w > 0
            && self.h > 0
            && u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }

    fn encode(&self, w: &mut Writer) {
        w.u32(self.x).u32(self.y).u32(self.w).u32(self.h);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self { x: r.u32()?, y: r.u32()?, w: r.u32()?, h: r.u32()? })
    }
}

/// Raw RGB8 image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageDescriptor {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for ImageDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImageDescriptor({}x{} RGB8)", self.width, self.height)
    }
}

impl ImageDescriptor {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ChunkingError> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected || width == 0 || height == 0 {
            return Err(ChunkingError::InvalidImage { expected, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn black(width: u32, height: u32) -> Self {
        Self { width, height, data: vec![0; width as usize * height as usize * 3] }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    fn row_span(&self, rect: &Rect, row: u32) -> std::ops::Range<usize> {
        let start = ((rect.y + row) as usize * self.width as usize + rect.x as usize) * 3;
        start..start + rect.w as usize * 3
    }

    pub fn crop(&self, rect: &Rect) -> Vec<u8> {
        let mut out = Vec::with_capacity(rect.area() as usize * 3);
        for row in 0..rect.h {
            out.extend_from_slice(&self.data[self.row_span(rect, row)]);
        }
        out
    }

    fn blit(&mut self, rect: &Rect, pixels: &[u8]) {
        let stride = rect.w as usize * 3;
        for row in 0..rect.h {
            let span = self.row_span(rect, row);
            let src = row as usize * stride;
            self.data[span].copy_from_slice(&pixels[src..src + stride]);
        }
    }

    fn fill_black(&mut self, rect: &Rect) {
        for row in 0..rect.h {
            let span = self.row_span(rect, row);
            self.data[span].fill(0);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingScheme {
    pub mode: ChunkingMode,
    pub grid_rows: u16,
    pub grid_cols: u16,
    pub regions: Vec<Rect>,
}

impl ChunkingScheme {
    pub fn coarse() -> Self {
        Self::grid(COARSE_GRID, COARSE_GRID)
    }

    pub fn fine() -> Self {
        Self::grid(FINE_GRID, FINE_GRID)
    }

    /// Grids of at most 4×4 cells are labelled coarse, anything finer fine.
    pub fn grid(rows: u16, cols: u16) -> Self {
        let mode =
            if u32::from(rows) * u32::from(cols) <= 16 { ChunkingMode::GridCoarse } else { ChunkingMode::GridFine };
        Self { mode, grid_rows: rows, grid_cols: cols, regions: Vec::new() }
    }

    pub fn objects(regions: Vec<Rect>) -> Self {
        Self { mode: ChunkingMode::ObjectBased, grid_rows: 1, grid_cols: 1, regions }
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.mode, ChunkingMode::GridCoarse | ChunkingMode::GridFine)
    }

    /// `mode:u8 ‖ rows:u16 ‖ cols:u16 ‖ region_count:u16 ‖ (x:u32 ‖ y:u32 ‖ w:u32 ‖ h:u32)*`
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(7 + 16 * self.regions.len());
        w.u8(self.mode as u8)
            .u16(self.grid_rows)
            .u16(self.grid_cols)
            .u16(u16::try_from(self.regions.len()).expect("region count fits u16"));
        for r in &self.regions {
            r.encode(&mut w);
        }
        w.finish()
    }

    pub fn from_header(bytes: &[u8]) -> Result<Self, ChunkingError> {
        let mut r = Reader::new(bytes);
        let mode_byte = r.u8()?;
        let mode = ChunkingMode::from_u8(mode_byte)
            .ok_or(DecodeError::InvalidValue { field: "chunking mode", value: mode_byte.into() })?;
        let grid_rows = r.u16()?;
        let grid_cols = r.u16()?;
        let count = r.u16()?;
        let mut regions = Vec::with_capacity(count as usize);
        for _ in 0..count {
            regions.push(Rect::decode(&mut r)?);
        }
        r.finish()?;
        Ok(Self { mode, grid_rows, grid_cols, regions })
    }

    /// Rectangles of the non-header picture chunks, in chunk order.
    pub fn layout(&self, width: u32, height: u32) -> Result<Vec<Rect>, ChunkingError> {
        match self.mode {
            ChunkingMode::GridCoarse | ChunkingMode::GridFine => {
                grid_cells(width, height, self.grid_rows.into(), self.grid_cols.into())
            }
            ChunkingMode::ObjectBased => {
                validate_regions(width, height, &self.regions)?;
                let mut rects = self.regions.clone();
                rects.push(Rect::new(0, 0, width, height));
                Ok(rects)
            }
            ChunkingMode::TextWords | ChunkingMode::LocationAtomic => {
                Err(ChunkingError::SchemeMismatch("not a picture scheme"))
            }
        }
    }
}

/// Row-major cells; the last row and column absorb the remainder.
pub fn grid_cells(width: u32, height: u32, rows: u32, cols: u32) -> Result<Vec<Rect>, ChunkingError> {
    if rows == 0 || cols == 0 || rows > height || cols > width {
        return Err(ChunkingError::GridTooFine { rows, cols, width, height });
    }
    let (cw, ch) = (width / cols, height / rows);
    let mut cells = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            let w = if c + 1 == cols { width - c * cw } else { cw };
            let h = if r + 1 == rows { height - r * ch } else { ch };
            cells.push(Rect::new(c * cw, r * ch, w, h));
        }
    }
    Ok(cells)
}

pub fn validate_regions(width: u32, height: u32, regions: &[Rect]) -> Result<(), ChunkingError> {
    for (i, r) in regions.iter().enumerate() {
        if !r.within(width, height) {
            return Err(ChunkingError::RegionOutOfBounds(i));
        }
        for (j, other) in regions.iter().enumerate().take(i) {
            if r.intersects(other) {
                return Err(ChunkingError::OverlappingRegions(j, i));
            }
        }
    }
    Ok(())
}

fn rect_chunk(rect: &Rect, pixels: &[u8]) -> Vec<u8> {
    let mut w = Writer::with_capacity(16 + pixels.len());
    rect.encode(&mut w);
    w.raw(pixels);
    w.finish()
}

/// Header chunk followed by one chunk per cell or region.
pub fn picture_chunks(img: &ImageDescriptor, scheme: &ChunkingScheme) -> Result<Vec<Vec<u8>>, ChunkingError> {
    let rects = scheme.layout(img.width, img.height)?;
    if rects.len() + 1 > MAX_CHUNKS {
        return Err(RssError::TooManyChunks(rects.len() + 1).into());
    }
    let mut chunks = Vec::with_capacity(rects.len() + 1);
    chunks.push(scheme.header_bytes());
    if scheme.mode == ChunkingMode::ObjectBased {
        let (regions, background) = rects.split_at(rects.len() - 1);
        for r in regions {
            chunks.push(rect_chunk(r, &img.crop(r)));
        }
        let mut rest = img.clone();
        for r in regions {
            rest.fill_black(r);
        }
        chunks.push(rect_chunk(&background[0], rest.data()));
    } else {
        for r in &rects {
            chunks.push(rect_chunk(r, &img.crop(r)));
        }
    }
    Ok(chunks)
}

pub fn chunk_image_grid(
    img: &ImageDescriptor,
    rows: u16,
    cols: u16,
    context: Digest,
) -> Result<ChunkedMessage, ChunkingError> {
    let chunks = picture_chunks(img, &ChunkingScheme::grid(rows, cols))?;
    Ok(ChunkedMessage::new(FieldTag::Picture, chunks, context)?)
}

pub fn chunk_image_objects(
    img: &ImageDescriptor,
    regions: &[Rect],
    context: Digest,
) -> Result<ChunkedMessage, ChunkingError> {
    let chunks = picture_chunks(img, &ChunkingScheme::objects(regions.to_vec()))?;
    Ok(ChunkedMessage::new(FieldTag::Picture, chunks, context)?)
}

fn composite(
    width: u32,
    height: u32,
    scheme: &ChunkingScheme,
    slots: &[Option<&[u8]>],
) -> Result<ImageDescriptor, ChunkingError> {
    let rects = scheme.layout(width, height)?;
    if slots.len() != rects.len() + 1 {
        return Err(ChunkingError::SchemeMismatch("chunk count"));
    }
    let mut canvas = ImageDescriptor::black(width, height);
    let mut order: Vec<usize> = (0..rects.len()).collect();
    if scheme.mode == ChunkingMode::ObjectBased {
        // Background first, regions on top.
        order.rotate_right(1);
    }
    for i in order {
        let Some(chunk) = slots[i + 1] else {
            continue;
        };
        let mut r = Reader::new(chunk);
        let rect = Rect::decode(&mut r)?;
        if rect != rects[i] {
            return Err(ChunkingError::SchemeMismatch("chunk rectangle"));
        }
        let pixels = r.take(r.remaining())?;
        if pixels.len() as u64 != rect.area() * 3 {
            return Err(ChunkingError::SchemeMismatch("chunk pixel count"));
        }
        if scheme.mode == ChunkingMode::ObjectBased && i + 1 == rects.len() {
            // Background carries zeros under the regions; only copy around them.
            let regions = &rects[..i];
            for y in 0..height {
                for x in 0..width {
                    if regions.iter().any(|g| g.contains(x, y)) {
                        continue;
                    }
                    let o = (y as usize * width as usize + x as usize) * 3;
                    canvas.data[o..o + 3].copy_from_slice(&pixels[o..o + 3]);
                }
            }
        } else {
            canvas.blit(&rect, pixels);
        }
    }
    Ok(canvas)
}

/// Present chunks composited at their rectangles; redacted ones solid black.
pub fn render_redacted_image(
    width: u32,
    height: u32,
    scheme: &ChunkingScheme,
    redacted: &RedactedMessage,
) -> Result<ImageDescriptor, ChunkingError> {
    if redacted.field_tag != FieldTag::Picture {
        return Err(ChunkingError::SchemeMismatch("not a picture message"));
    }
    match redacted.slots.first() {
        Some(Slot::Present(h)) if *h == scheme.header_bytes() => {}
        Some(Slot::Present(_)) => return Err(ChunkingError::SchemeMismatch("header differs")),
        _ => return Err(ChunkingError::SchemeMismatch("header missing")),
    }
    let slots: Vec<Option<&[u8]>> = redacted.slots.iter().map(Slot::present).collect();
    composite(width, height, scheme, &slots)
}

/// Reassembles an unredacted picture message; the scheme comes from its header.
pub fn reassemble_image(width: u32, height: u32, chunks: &[Vec<u8>]) -> Result<ImageDescriptor, ChunkingError> {
    let header = chunks.first().ok_or(ChunkingError::SchemeMismatch("header missing"))?;
    let scheme = ChunkingScheme::from_header(header)?;
    let slots: Vec<Option<&[u8]>> = chunks.iter().map(|c| Some(c.as_slice())).collect();
    composite(width, height, &scheme, &slots)
}

/// Canvas size recoverable from a published picture alone. Grid cells outside
/// the last row and column share one base size, so any present cell gives it
/// away; the remainder absorbed by the last row or column is only known when
/// one of its cells is present. Object pictures are exact when the background
/// is present and otherwise span the declared regions.
pub fn published_canvas(scheme: &ChunkingScheme, redacted: &RedactedMessage) -> Result<(u32, u32), ChunkingError> {
    let mut rects = Vec::new();
    for (i, chunk) in redacted.present_chunks() {
        if i == HEADER_CHUNK {
            continue;
        }
        let mut r = Reader::new(chunk);
        rects.push((i - 1, Rect::decode(&mut r)?));
    }
    let extent =
        |rs: &mut dyn Iterator<Item = &Rect>| rs.fold((0u32, 0u32), |(w, h), r| (w.max(r.x + r.w), h.max(r.y + r.h)));
    if !scheme.is_grid() {
        let (w, h) = extent(&mut rects.iter().map(|(_, r)| r).chain(&scheme.regions));
        return if w == 0 { Err(ChunkingError::SchemeMismatch("no picture chunk present")) } else { Ok((w, h)) };
    }
    let (rows, cols) = (u32::from(scheme.grid_rows), u32::from(scheme.grid_cols));
    let Some((i, r)) = rects.first() else {
        return Err(ChunkingError::SchemeMismatch("no picture chunk present"));
    };
    let (row, col) = (*i as u32 / cols, *i as u32 % cols);
    let base_w = r.x.checked_div(col).unwrap_or(r.w);
    let base_h = r.y.checked_div(row).unwrap_or(r.h);
    let (w, h) = extent(&mut rects.iter().map(|(_, r)| r));
    Ok((w.max(base_w * cols), h.max(base_h * rows)))
}

/// Renders a published picture message without knowing the original size.
pub fn render_published_picture(redacted: &RedactedMessage) -> Result<ImageDescriptor, ChunkingError> {
    let header = match redacted.slots.first() {
        Some(Slot::Present(h)) => h,
        _ => return Err(ChunkingError::SchemeMismatch("header missing")),
    };
    let scheme = ChunkingScheme::from_header(header)?;
    let (w, h) = published_canvas(&scheme, redacted)?;
    render_redacted_image(w, h, &scheme, redacted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextGranularity {
    Words,
    Sentences,
}

/// Splits text so that concatenating the chunks reproduces it byte for byte.
pub fn text_chunks(text: &str, granularity: TextGranularity) -> Vec<Vec<u8>> {
    if text.is_empty() {
        return vec![EMPTY_TEXT_MARKER.to_vec()];
    }
    let mut chunks = Vec::new();
    let mut start = 0;
    // A boundary falls before the first "content" char that follows a
    // completed chunk (word + whitespace, or terminator run + whitespace).
    let mut closed = false;
    let mut has_content = false;
    for (i, ch) in text.char_indices() {
        let ws = ch.is_whitespace();
        let content = match granularity {
            TextGranularity::Words => !ws,
            TextGranularity::Sentences => !ws && !matches!(ch, '.' | '!' | '?'),
        };
        if content && closed {
            chunks.push(text.as_bytes()[start..i].to_vec());
            start = i;
            closed = false;
        }
        match granularity {
            TextGranularity::Words => {
                if ws && has_content {
                    closed = true;
                }
            }
            TextGranularity::Sentences => {
                if matches!(ch, '.' | '!' | '?') {
                    closed = true;
                }
            }
        }
        has_content |= content;
    }
    chunks.push(text.as_bytes()[start..].to_vec());
    chunks
}

pub fn chunk_text(text: &str, granularity: TextGranularity, context: Digest) -> ChunkedMessage {
    ChunkedMessage::new(FieldTag::Description, text_chunks(text, granularity), context)
        .expect("text chunks are never empty")
}

/// Inverse of [`text_chunks`].
pub fn text_from_chunks(chunks: &[Vec<u8>]) -> Option<String> {
    if chunks.len() == 1 && chunks[0] == EMPTY_TEXT_MARKER {
        return Some(String::new());
    }
    String::from_utf8(chunks.concat()).ok()
}

/// Public rendering of a redacted description; each removed chunk shows as
/// `placeholder`.
pub fn render_redacted_text(redacted: &RedactedMessage, placeholder: &str) -> String {
    let mut out = String::new();
    for slot in &redacted.slots {
        match slot {
            Slot::Present(c) if c.as_slice() == EMPTY_TEXT_MARKER => {}
            Slot::Present(c) => out.push_str(&String::from_utf8_lossy(c)),
            Slot::Redacted(_) => out.push_str(placeholder),
        }
    }
    out
}

/// Location is one atomic chunk: `lat:i32 ‖ lon:i32` in microdegrees.
pub fn location_chunk(lat_micro: i32, lon_micro: i32) -> Vec<u8> {
    let mut w = Writer::with_capacity(8);
    w.i32(lat_micro).i32(lon_micro);
    w.finish()
}

pub fn parse_location_chunk(chunk: &[u8]) -> Option<(i32, i32)> {
    let mut r = Reader::new(chunk);
    let lat = r.i32().ok()?;
    let lon = r.i32().ok()?;
    r.finish().ok()?;
    Some((lat, lon))
}

pub fn chunk_location(lat_micro: i32, lon_micro: i32, context: Digest) -> ChunkedMessage {
    ChunkedMessage::new(FieldTag::Location, vec![location_chunk(lat_micro, lon_micro)], context)
        .expect("location chunk is 8 bytes")
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;
    use crate::keys::keygen;
    use crate::rss::{redact, sign_redactable};

    fn gradient(width: u32, height: u32) -> ImageDescriptor {
        let mut data = Vec::new();
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&[(x % 251) as u8 | 1, (y % 251) as u8 | 1, ((x + y) % 7) as u8 + 1]);
            }
        }
        ImageDescriptor::new(width, height, data).unwrap()
    }

    // Independent compositor: decides each pixel from the rectangle list alone.
    fn expected_pixels(img: &ImageDescriptor, blacked: &[Rect], kept: &[Rect]) -> ImageDescriptor {
        let mut out = ImageDescriptor::black(img.width, img.height);
        for y in 0..img.height {
            for x in 0..img.width {
                let hidden = blacked.iter().any(|r| r.contains(x, y)) && !kept.iter().any(|r| r.contains(x, y));
                if !hidden {
                    let o = (y as usize * img.width as usize + x as usize) * 3;
                    out.data[o..o + 3].copy_from_slice(&img.data[o..o + 3]);
                }
            }
        }
        out
    }

    #[test]
    fn full_hd_coarse_cells() {
        let cells = grid_cells(1920, 1080, 4, 4).unwrap();
        assert_eq!(cells.len(), 16);
        assert!(cells.iter().all(|c| c.w == 480 && c.h == 270));
    }

    #[test]
    fn remainder_goes_to_last_row_and_column() {
        let cells = grid_cells(10, 10, 3, 3).unwrap();
        let widths: Vec<u32> = cells[..3].iter().map(|c| c.w).collect();
        let heights: Vec<u32> = cells.iter().step_by(3).map(|c| c.h).collect();
        assert_eq!(widths, vec![3, 3, 4]);
        assert_eq!(heights, vec![3, 3, 4]);
    }

    #[test]
    fn grid_too_fine() {
        assert!(matches!(grid_cells(3, 10, 2, 4), Err(ChunkingError::GridTooFine { .. })));
        let img = gradient(8, 8);
        assert!(chunk_image_grid(&img, 9, 1, [0; 32]).is_err());
    }

    #[test]
    fn degenerate_grid_is_whole_image() {
        let img = gradient(6, 5);
        let m = chunk_image_grid(&img, 1, 1, [0; 32]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(&m.chunks()[1][16..], img.data());

        let (sk, _) = keygen(Some(b"1x1"));
        let r = redact(&m, &sign_redactable(&sk, &m), &BTreeSet::from([1])).unwrap();
        let out = render_redacted_image(6, 5, &ChunkingScheme::grid(1, 1), &r).unwrap();
        assert_eq!(out, ImageDescriptor::black(6, 5));
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let s = ChunkingScheme::objects(vec![Rect::new(1, 2, 3, 4)]);
        assert_eq!(s.header_bytes(), vec![2, 1, 0, 1, 0, 1, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(ChunkingScheme::from_header(&s.header_bytes()).unwrap(), s);
        assert_eq!(ChunkingScheme::coarse().header_bytes(), vec![0, 4, 0, 4, 0, 0, 0]);
        assert_eq!(ChunkingScheme::fine().mode, ChunkingMode::GridFine);
    }

    #[test]
    fn objects_without_regions() {
        let img = gradient(7, 3);
        let m = chunk_image_objects(&img, &[], [0; 32]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(&m.chunks()[1][16..], img.data());
    }

    #[test]
    fn region_covering_everything() {
        let img = gradient(7, 3);
        let m = chunk_image_objects(&img, &[Rect::new(0, 0, 7, 3)], [0; 32]).unwrap();
        assert_eq!(&m.chunks()[1][16..], img.data());
        assert!(m.chunks()[2][16..].iter().all(|&b| b == 0));
        assert_eq!(reassemble_image(7, 3, m.chunks()).unwrap(), img);
    }

    #[test]
    fn region_validation() {
        let img = gradient(10, 10);
        assert_eq!(
            chunk_image_objects(&img, &[Rect::new(8, 8, 3, 1)], [0; 32]).unwrap_err(),
            ChunkingError::RegionOutOfBounds(0)
        );
        assert_eq!(
            chunk_image_objects(&img, &[Rect::new(0, 0, 0, 1)], [0; 32]).unwrap_err(),
            ChunkingError::RegionOutOfBounds(0)
        );
        assert_eq!(
            chunk_image_objects(&img, &[Rect::new(0, 0, 5, 5), Rect::new(4, 4, 2, 2)], [0; 32]).unwrap_err(),
            ChunkingError::OverlappingRegions(0, 1)
        );
        // Touching edges do not overlap.
        chunk_image_objects(&img, &[Rect::new(0, 0, 5, 5), Rect::new(5, 0, 2, 2)], [0; 32]).unwrap();
    }

    #[test]
    fn redacting_plate_blanks_only_the_plate() {
        let img = gradient(40, 30);
        let plate = Rect::new(2, 20, 12, 4);
        let face = Rect::new(25, 3, 8, 9);
        let m = chunk_image_objects(&img, &[plate, face], [1; 32]).unwrap();
        assert_eq!(m.len(), 4);
        let (sk, _) = keygen(Some(b"plate"));
        let r = redact(&m, &sign_redactable(&sk, &m), &BTreeSet::from([cell_chunk(0)])).unwrap();
        let scheme = ChunkingScheme::objects(vec![plate, face]);
        let out = render_redacted_image(40, 30, &scheme, &r).unwrap();
        assert_eq!(out, expected_pixels(&img, &[plate], &[]));

        // Background gone, regions kept.
        let r = redact(&m, &sign_redactable(&sk, &m), &BTreeSet::from([cell_chunk(2)])).unwrap();
        let out = render_redacted_image(40, 30, &scheme, &r).unwrap();
        assert_eq!(out, expected_pixels(&img, &[Rect::new(0, 0, 40, 30)], &[plate, face]));
    }

    #[test]
    fn grid_cell_five_is_row_one_col_one() {
        let img = gradient(64, 48);
        let m = chunk_image_grid(&img, 4, 4, [2; 32]).unwrap();
        let (sk, _) = keygen(Some(b"cell5"));
        let r = redact(&m, &sign_redactable(&sk, &m), &BTreeSet::from([cell_chunk(5)])).unwrap();
        let out = render_redacted_image(64, 48, &ChunkingScheme::coarse(), &r).unwrap();
        assert_eq!(out, expected_pixels(&img, &[Rect::new(16, 12, 16, 12)], &[]));
    }

    #[test]
    fn render_no_and_all_redactions() {
        let img = gradient(20, 20);
        let m = chunk_image_grid(&img, 4, 4, [2; 32]).unwrap();
        let (sk, _) = keygen(Some(b"all"));
        let sig = sign_redactable(&sk, &m);
        let s = ChunkingScheme::coarse();
        let none = redact(&m, &sig, &BTreeSet::new()).unwrap();
        assert_eq!(render_redacted_image(20, 20, &s, &none).unwrap(), img);
        let all = redact(&m, &sig, &(1..17).collect()).unwrap();
        assert_eq!(render_redacted_image(20, 20, &s, &all).unwrap(), ImageDescriptor::black(20, 20));
    }

    #[test]
    fn render_scheme_mismatch() {
        let img = gradient(20, 20);
        let m = chunk_image_grid(&img, 4, 4, [2; 32]).unwrap();
        let (sk, _) = keygen(Some(b"mm"));
        let r = redact(&m, &sign_redactable(&sk, &m), &BTreeSet::new()).unwrap();
        assert!(matches!(
            render_redacted_image(20, 20, &ChunkingScheme::fine(), &r),
            Err(ChunkingError::SchemeMismatch(_))
        ));
        assert!(render_redacted_image(21, 20, &ChunkingScheme::coarse(), &r).is_err());
        let hidden_header = r.redact(&BTreeSet::from([0])).unwrap();
        assert!(render_redacted_image(20, 20, &ChunkingScheme::coarse(), &hidden_header).is_err());
    }

    #[test]
    fn text_words() {
        let chunks = text_chunks("pothole on Main St.", TextGranularity::Words);
        let expected: Vec<Vec<u8>> =
            ["pothole ", "on ", "Main ", "St."].iter().map(|s| s.as_bytes().to_vec()).collect();
        assert_eq!(chunks, expected);
        assert_eq!(
            text_chunks("  lead  trail ", TextGranularity::Words),
            vec![b"  lead  ".to_vec(), b"trail ".to_vec()]
        );
    }

    #[test]
    fn text_empty_marker() {
        let chunks = text_chunks("", TextGranularity::Words);
        assert_eq!(chunks, vec![EMPTY_TEXT_MARKER.to_vec()]);
        assert_eq!(text_from_chunks(&chunks).unwrap(), "");
    }

    #[test]
    fn text_sentences() {
        assert_eq!(text_chunks("A. B!", TextGranularity::Sentences), vec![b"A. ".to_vec(), b"B!".to_vec()]);
        assert_eq!(
            text_chunks("Wait... what?! ok", TextGranularity::Sentences),
            vec![b"Wait... ".to_vec(), b"what?! ".to_vec(), b"ok".to_vec()]
        );
    }

    #[test]
    fn redacted_text_rendering() {
        let m = chunk_text("call 555 1234 now", TextGranularity::Words, [0; 32]);
        let (sk, _) = keygen(Some(b"t"));
        let r = redact(&m, &sign_redactable(&sk, &m), &BTreeSet::from([1, 2])).unwrap();
        assert_eq!(render_redacted_text(&r, "█ "), "call █ █ now");
    }

    #[test]
    fn location_chunk_round_trip() {
        let c = location_chunk(50_775_300, -6_083_900);
        assert_eq!(c.len(), 8);
        assert_eq!(parse_location_chunk(&c), Some((50_775_300, -6_083_900)));
        assert_eq!(parse_location_chunk(&c[..7]), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn text_concatenation_identity(s in "\\PC{0,60}", sentences in any::<bool>()) {
            let g = if sentences { TextGranularity::Sentences } else { TextGranularity::Words };
            let chunks = text_chunks(&s, g);
            prop_assert!(chunks.iter().all(|c| !c.is_empty()));
            prop_assert_eq!(text_from_chunks(&chunks).unwrap(), s);
        }

        #[test]
        fn grid_is_lossless_and_deterministic(w in 1u32..40, h in 1u32..40, rows in 1u16..8, cols in 1u16..8) {
            prop_assume!(u32::from(rows) <= h && u32::from(cols) <= w);
            let img = gradient(w, h);
            let s = ChunkingScheme::grid(rows, cols);
            let a = picture_chunks(&img, &s).unwrap();
            prop_assert_eq!(&a, &picture_chunks(&img, &s).unwrap());
            prop_assert_eq!(reassemble_image(w, h, &a).unwrap(), img);
        }

        #[test]
        fn redaction_is_local(w in 4u32..40, h in 4u32..40, cell in 0usize..16) {
            let img = gradient(w, h);
            let m = chunk_image_grid(&img, 4, 4, [0; 32]).unwrap();
            let (sk, _) = keygen(Some(b"local"));
            let r = redact(&m, &sign_redactable(&sk, &m), &BTreeSet::from([cell_chunk(cell)])).unwrap();
            let out = render_redacted_image(w, h, &ChunkingScheme::coarse(), &r).unwrap();
            let rect = grid_cells(w, h, 4, 4).unwrap()[cell];
            for y in 0..h {
                for x in 0..w {
                    if !rect.contains(x, y) {
                        prop_assert_eq!(out.pixel(x, y), img.pixel(x, y));
                    } else {
                        prop_assert_eq!(out.pixel(x, y), [0, 0, 0]);
                    }
                }
            }
        }

        #[test]
        fn fine_grid_blacks_out_no_more_than_coarse(
            k in 1u32..5, fx in 0.0f64..1.0, fy in 0.0f64..1.0, fw in 0.0f64..1.0, fh in 0.0f64..1.0
        ) {
            let (w, h) = (64 * k, 48 * k);
            let x = (fx * f64::from(w - 1)) as u32;
            let y = (fy * f64::from(h - 1)) as u32;
            let t = Rect::new(x, y, 1 + (fw * f64::from(w - x - 1)) as u32, 1 + (fh * f64::from(h - y - 1)) as u32);
            let cost = |rows, cols| -> u64 {
                grid_cells(w, h, rows, cols).unwrap().iter().filter(|c| c.intersects(&t)).map(Rect::area).sum()
            };
            prop_assert!(cost(16, 16) <= cost(4, 4));
        }

        #[test]
        fn published_render_agrees_with_sized_render(
            w in 4u32..40, h in 4u32..40, rows in 1u16..5, cols in 1u16..5,
            mask in prop::collection::vec(any::<bool>(), 16),
        ) {
            let img = gradient(w, h);
            let m = chunk_image_grid(&img, rows, cols, [3; 32]).unwrap();
            let cells = m.len() - 1;
            let redact_set: BTreeSet<usize> = (0..cells).filter(|&i| mask[i]).map(cell_chunk).collect();
            prop_assume!(redact_set.len() < cells);
            let (sk, _) = keygen(Some(b"canvas"));
            let r = redact(&m, &sign_redactable(&sk, &m), &redact_set).unwrap();
            let full = render_redacted_image(w, h, &ChunkingScheme::grid(rows, cols), &r).unwrap();
            let got = render_published_picture(&r).unwrap();
            prop_assert!(got.width <= w && got.height <= h);
            for y in 0..got.height {
                for x in 0..got.width {
                    prop_assert_eq!(got.pixel(x, y), full.pixel(x, y));
                }
            }
            if !redact_set.contains(&cells) {
                prop_assert_eq!((got.width, got.height), (w, h));
            }
        }
    }
}
