//! Storyboard export: contact sheet, manifest and a standalone HTML page.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use base64::Engine as _;
use image::{imageops, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use storyboard_core::{
    render_image_prompt, FramePrompt, FrameStatus, StoryboardProject, StyleParameters,
};

use super::{content_hash, write_atomic, ImageStore, StoreError};
use crate::raster::{self, GLYPH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Png,
    Html,
    Json,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 3] = [ExportFormat::Png, ExportFormat::Html, ExportFormat::Json];
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "png" => Ok(ExportFormat::Png),
            "html" => Ok(ExportFormat::Html),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!(
                "unknown export format {other:?} (expected png, html or json)"
            )),
        }
    }
}

/// Parses a comma-separated list such as `png,json`.
pub fn parse_formats(list: &str) -> Result<Vec<ExportFormat>, String> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let f: ExportFormat = part.parse()?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err("no export format given".into());
    }
    Ok(out)
}

pub const SHEET_COLUMNS: usize = 3;
pub const SHEET_PAD: u32 = 16;
pub const CAPTION_SCALE: u32 = 2;
pub const CAPTION_LINES: u32 = 3;
const LINE_GAP: u32 = 4;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const PLACEHOLDER: Rgb<u8> = Rgb([200, 200, 200]);
const INK: Rgb<u8> = Rgb([0, 0, 0]);

/// Geometry of a contact sheet: frames left to right, top to bottom, each
/// tile followed by its caption strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SheetLayout {
    pub columns: u32,
    pub rows: u32,
    pub tile_width: u32,
    pub tile_height: u32,
    pub caption_height: u32,
    pub pad: u32,
}

impl SheetLayout {
    pub fn new(frames: usize, max_columns: usize, tile_width: u32, tile_height: u32) -> Self {
        let frames = frames.max(1);
        let columns = frames.min(max_columns.max(1));
        let rows = frames.div_ceil(columns);
        SheetLayout {
            columns: columns as u32,
            rows: rows as u32,
            tile_width,
            tile_height,
            caption_height: CAPTION_LINES * (GLYPH * CAPTION_SCALE + LINE_GAP) + LINE_GAP,
            pad: SHEET_PAD,
        }
    }

    pub fn size(&self) -> (u32, u32) {
        (
            self.pad + self.columns * (self.tile_width + self.pad),
            self.pad + self.rows * (self.tile_height + self.caption_height + self.pad),
        )
    }

    /// Top-left pixel of tile `i`.
    pub fn cell_origin(&self, i: usize) -> (u32, u32) {
        let col = i as u32 % self.columns;
        let row = i as u32 / self.columns;
        (
            self.pad + col * (self.tile_width + self.pad),
            self.pad + row * (self.tile_height + self.caption_height + self.pad),
        )
    }

    /// Characters per caption line.
    pub fn caption_width(&self) -> usize {
        (self.tile_width / (GLYPH * CAPTION_SCALE)).max(1) as usize
    }
}

/// One tile of a contact sheet. `image` is PNG bytes; `None` draws a grey
/// placeholder.
pub struct Tile<'a> {
    pub image: Option<&'a [u8]>,
    pub caption: String,
}

/// Draws a sheet. Images of a different size are scaled to the tile.
pub fn contact_sheet(layout: &SheetLayout, tiles: &[Tile<'_>]) -> Result<RgbImage, StoreError> {
    let (w, h) = layout.size();
    let mut sheet = RgbImage::from_pixel(w, h, BACKGROUND);
    for (i, tile) in tiles.iter().enumerate() {
        let (x, y) = layout.cell_origin(i);
        match tile.image {
            Some(bytes) => {
                let img = image::load_from_memory(bytes)
                    .map_err(|e| StoreError::Corrupt(format!("stored image is unreadable: {e}")))?
                    .to_rgb8();
                let img = if img.dimensions() == (layout.tile_width, layout.tile_height) {
                    img
                } else {
                    imageops::resize(
                        &img,
                        layout.tile_width,
                        layout.tile_height,
                        imageops::FilterType::Triangle,
                    )
                };
                imageops::replace(&mut sheet, &img, x as i64, y as i64);
            }
            None => raster::fill_rect(
                &mut sheet,
                x,
                y,
                layout.tile_width,
                layout.tile_height,
                PLACEHOLDER,
            ),
        }
        let lines = raster::wrap(&tile.caption, layout.caption_width());
        for (li, line) in lines.iter().take(CAPTION_LINES as usize).enumerate() {
            let ly =
                y + layout.tile_height + LINE_GAP + li as u32 * (GLYPH * CAPTION_SCALE + LINE_GAP);
            raster::draw_text(&mut sheet, x, ly, line, CAPTION_SCALE, INK);
        }
    }
    Ok(sheet)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    /// 1-based, as shown on the sheet.
    pub number: usize,
    pub status: FrameStatus,
    pub parameters: FramePrompt,
    pub natural_language: String,
    /// The flat string sent to the image model.
    pub image_prompt: Option<String>,
    pub seed: i64,
    pub image_sha256: Option<String>,
    pub file: Option<String>,
}

/// Export manifest. Deliberately free of ids and timestamps so identical
/// boards export identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub narrative: String,
    pub style: Option<StyleParameters>,
    pub frames: Vec<ManifestFrame>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frames/frame_{:02}.png", index + 1)
}

pub fn build_manifest(project: &StoryboardProject) -> Manifest {
    let style = project.style.clone().unwrap_or_default();
    let frames = project
        .frames
        .iter()
        .map(|f| ManifestFrame {
            number: f.index + 1,
            status: f.status,
            parameters: f.prompt.clone(),
            natural_language: f.prompt.natural_language.clone(),
            image_prompt: render_image_prompt(&f.prompt, &style, &project.config),
            seed: f.seed,
            image_sha256: f.image_ref.as_ref().map(|r| r.0.clone()),
            file: f.image_ref.as_ref().map(|_| frame_file_name(f.index)),
        })
        .collect();
    Manifest {
        narrative: project.narrative.clone(),
        style: project.style.clone(),
        frames,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportBundle {
    pub contact_sheet: Option<Vec<u8>>,
    pub manifest: Option<Manifest>,
    pub html: Option<String>,
    /// `(relative path, PNG bytes)` for every frame with an image.
    pub frames: Vec<(String, Vec<u8>)>,
}

impl ExportBundle {
    /// Writes the bundle under `dir`: `contact_sheet.png`, `manifest.json`,
    /// `storyboard.html` and `frames/frame_NN.png`, as present.
    pub fn write_to(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(|source| StoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        if let Some(png) = &self.contact_sheet {
            write_atomic(&dir.join("contact_sheet.png"), png)?;
        }
        if let Some(m) = &self.manifest {
            let mut json = serde_json::to_vec_pretty(m).expect("manifest serializes");
            json.push(b'\n');
            write_atomic(&dir.join("manifest.json"), &json)?;
        }
        if let Some(html) = &self.html {
            write_atomic(&dir.join("storyboard.html"), html.as_bytes())?;
        }
        for (name, bytes) in &self.frames {
            write_atomic(&dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn render_html(manifest: &Manifest, images: &[Option<Vec<u8>>]) -> String {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Storyboard</title>\n<style>\
         body{font-family:sans-serif;margin:2em}\
         .grid{display:grid;grid-template-columns:repeat(3,1fr);gap:16px}\
         figure{margin:0}img{width:100%;display:block}.missing{background:#ccc;aspect-ratio:1}\
         </style></head><body>\n",
    );
    html.push_str(&format!(
        "<p class=\"story\">{}</p>\n",
        escape_html(&manifest.narrative)
    ));
    html.push_str("<div class=\"grid\">\n");
    for (f, img) in manifest.frames.iter().zip(images) {
        html.push_str("<figure>");
        match img {
            Some(bytes) => html.push_str(&format!(
                "<img alt=\"frame {}\" src=\"data:image/png;base64,{}\">",
                f.number,
                base64::engine::general_purpose::STANDARD.encode(bytes)
            )),
            None => html.push_str("<div class=\"missing\"></div>"),
        }
        html.push_str(&format!(
            "<figcaption><b>{}.</b> {}</figcaption></figure>\n",
            f.number,
            escape_html(&f.natural_language)
        ));
    }
    html.push_str("</div>\n</body></html>\n");
    html
}

/// Builds the requested parts of the bundle. Read-only with respect to the
/// project and the store.
pub fn export(
    project: &StoryboardProject,
    images: &dyn ImageStore,
    formats: &[ExportFormat],
) -> Result<ExportBundle, StoreError> {
    if project.frames.iter().all(|f| f.image_ref.is_none()) {
        return Err(StoreError::NothingRendered);
    }
    let mut loaded: Vec<Option<Vec<u8>>> = Vec::with_capacity(project.frames.len());
    for f in &project.frames {
        loaded.push(match &f.image_ref {
            Some(r) => {
                let bytes = images.get(r)?;
                if content_hash(&bytes) != r.0 {
                    return Err(StoreError::Corrupt(format!(
                        "image {r} does not match its hash"
                    )));
                }
                Some(bytes)
            }
            None => None,
        });
    }
    let manifest = build_manifest(project);
    let mut bundle = ExportBundle {
        frames: project
            .frames
            .iter()
            .zip(&loaded)
            .filter_map(|(f, b)| Some((frame_file_name(f.index), b.clone()?)))
            .collect(),
        ..ExportBundle::default()
    };
    if formats.contains(&ExportFormat::Png) {
        let layout = SheetLayout::new(
            project.frames.len(),
            SHEET_COLUMNS,
            project.config.image_width,
            project.config.image_height,
        );
        let tiles: Vec<Tile<'_>> = project
            .frames
            .iter()
            .zip(&loaded)
            .map(|(f, b)| Tile {
                image: b.as_deref(),
                caption: format!("{}. {}", f.index + 1, f.prompt.natural_language),
            })
            .collect();
        bundle.contact_sheet = Some(raster::encode_png(&contact_sheet(&layout, &tiles)?));
    }
    if formats.contains(&ExportFormat::Html) {
        bundle.html = Some(render_html(&manifest, &loaded));
    }
    if formats.contains(&ExportFormat::Json) {
        bundle.manifest = Some(manifest);
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_shapes() {
        let l = SheetLayout::new(6, 3, 64, 64);
        assert_eq!((l.columns, l.rows), (3, 2));
        let l = SheetLayout::new(1, 3, 64, 64);
        assert_eq!((l.columns, l.rows), (1, 1));
        let l = SheetLayout::new(7, 3, 64, 64);
        assert_eq!((l.columns, l.rows), (3, 3));
        assert_eq!(l.cell_origin(4), (16 + 80, 16 + 64 + l.caption_height + 16));
    }

    #[test]
    fn formats_parse() {
        assert_eq!(
            parse_formats("png, json,png").unwrap(),
            [ExportFormat::Png, ExportFormat::Json]
        );
        assert!(parse_formats("gif").is_err());
        assert!(parse_formats("").is_err());
    }

    #[test]
    fn html_escapes() {
        assert_eq!(escape_html("<a & 'b'>"), "&lt;a &amp; &#39;b&#39;&gt;");
    }
}
