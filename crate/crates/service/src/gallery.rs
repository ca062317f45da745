//! Bundled guidance images, served darkest first.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use cidn_core::{synth, ImageTensor};
use image::imageops::{self, FilterType};
use serde::Serialize;

/// Longest thumbnail side, in pixels.
pub const THUMBNAIL_SIDE: u32 = 128;

#[derive(Clone, Debug)]
pub struct GalleryEntry {
    pub id: String,
    pub image: ImageTensor,
    item: GalleryItem,
}

/// Listing record returned by `GET /api/gallery`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GalleryItem {
    pub id: String,
    /// Base-64 PNG, at most [`THUMBNAIL_SIDE`] on the long side.
    pub thumbnail: String,
    pub width: usize,
    pub height: usize,
    pub mean_luminance: f64,
}

impl GalleryEntry {
    pub fn new(id: String, image: ImageTensor) -> Self {
        let rgb = image.to_rgb8();
        let (w, h) = rgb.dimensions();
        let scale = (THUMBNAIL_SIDE as f64 / w.max(h) as f64).min(1.0);
        let tw = ((w as f64 * scale).round() as u32).max(1);
        let th = ((h as f64 * scale).round() as u32).max(1);
        let thumb = imageops::resize(&rgb, tw, th, FilterType::Triangle);
        let mut png = Vec::new();
        thumb
            .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .expect("in-memory PNG encoding");
        let item = GalleryItem {
            id: id.clone(),
            thumbnail: BASE64.encode(png),
            width: image.width(),
            height: image.height(),
            mean_luminance: image.mean_luminance(),
        };
        GalleryEntry { id, image, item }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Gallery {
    entries: Vec<GalleryEntry>,
}

impl Gallery {
    pub fn from_entries(mut entries: Vec<GalleryEntry>) -> Self {
        entries.sort_by(|a, b| {
            a.item
                .mean_luminance
                .total_cmp(&b.item.mean_luminance)
                .then_with(|| a.id.cmp(&b.id))
        });
        Gallery { entries }
    }

    /// Every PNG or JPEG in `dir`, keyed by file stem. Files that fail to
    /// decode are skipped with a warning.
    pub fn load_dir(dir: &Path) -> cidn_core::Result<Self> {
        let read = std::fs::read_dir(dir).map_err(|e| cidn_core::Error::io(dir, e))?;
        let mut entries = Vec::new();
        for path in read.filter_map(|e| e.ok()).map(|e| e.path()) {
            let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if !matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            match ImageTensor::load(&path) {
                Ok(img) => entries.push(GalleryEntry::new(id.to_string(), img)),
                Err(e) => log::warn!("skipping gallery file: {e}"),
            }
        }
        Ok(Self::from_entries(entries))
    }

    /// Procedural guidance set: two synthetic scenes, each at four
    /// exposures, so the list spans dim to bright.
    pub fn bundled() -> Self {
        let mut entries = Vec::new();
        for scene in 0..2u64 {
            let base = synth::scene(100 + scene, 192, 256);
            for gain in [0.3f32, 0.5, 0.7, 1.0] {
                let id = format!("scene{scene}-{:03}", (gain * 100.0).round() as u32);
                entries.push(GalleryEntry::new(id, base.scaled(gain)));
            }
        }
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> Vec<GalleryItem> {
        self.entries.iter().map(|e| e.item.clone()).collect()
    }

    pub fn image(&self, id: &str) -> Option<&ImageTensor> {
        self.entries.iter().find(|e| e.id == id).map(|e| &e.image)
    }
}
