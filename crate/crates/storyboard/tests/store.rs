mod common;

use std::sync::Arc;

use common::*;
use storyboard::core::{FrameStatus, ImageRef, ProjectId};
use storyboard::pipeline::Engine;
use storyboard::store::export::{SheetLayout, CAPTION_SCALE, SHEET_PAD};
use storyboard::store::{
    content_hash, export, ExportFormat, FsImageStore, ImageStore, ProjectStore, StoreError,
};

async fn rendered_on_disk(
    frames: usize,
) -> (
    tempfile::TempDir,
    ProjectStore,
    storyboard::pipeline::ProjectState,
) {
    let dir = tempfile::tempdir().unwrap();
    let store = ProjectStore::new(dir.path());
    let images = Arc::new(FsImageStore::new(dir.path().join("images")));
    let (mock, _) = mock_engine();
    let e = Engine::new(mock.chat.clone(), mock.images.clone(), images)
        .with_rng_seed(3)
        .with_clock(mock.clock.clone());
    let mut p = new_project(&e, STORY6, frames);
    e.resubmit(&mut p).await.unwrap();
    (dir, store, p)
}

#[tokio::test]
async fn save_load_round_trip() {
    let (_dir, store, p) = rendered_on_disk(6).await;
    let path = store.save(&p).unwrap();
    assert!(path.ends_with(format!("projects/{}.json", p.project.id)));
    let loaded = store.load(&p.project.id).unwrap();
    assert!(loaded.warnings.is_empty());
    assert_eq!(loaded.state, p);
    let first = std::fs::read(&path).unwrap();
    store.save(&p).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        first,
        "unchanged project saves identically"
    );
    assert_eq!(store.list().unwrap(), std::slice::from_ref(&p.project.id));
    let via_path = ProjectStore::load_path(&path).unwrap();
    assert_eq!(via_path.state, p);
}

#[tokio::test]
async fn images_are_stored_once() {
    let dir = tempfile::tempdir().unwrap();
    let s = FsImageStore::new(dir.path());
    let a = s.put(b"same bytes").unwrap();
    let b = s.put(b"same bytes").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.0, content_hash(b"same bytes"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    assert_eq!(s.get(&a).unwrap(), b"same bytes");
    assert!(!s.contains(&ImageRef("../../etc/passwd".into())));
}

#[tokio::test]
async fn invalid_project_is_not_saved() {
    let (_dir, store, mut p) = rendered_on_disk(2).await;
    p.project.frames[0].image_ref = None; // rendered without image
    match store.save(&p) {
        Err(StoreError::Invalid(v)) => {
            assert!(v.iter().any(|x| x.field == "frames[0].status/image_ref"))
        }
        other => panic!("expected Invalid, got {other:?}"),
    }
}

#[tokio::test]
async fn dangling_image_becomes_stale_with_warning() {
    let (dir, store, p) = rendered_on_disk(3).await;
    store.save(&p).unwrap();
    let gone = p.project.frames[1].image_ref.clone().unwrap();
    std::fs::remove_file(dir.path().join("images").join(format!("{gone}.png"))).unwrap();
    let loaded = store.load(&p.project.id).unwrap();
    assert_eq!(loaded.warnings.len(), 1);
    assert!(loaded.warnings[0].contains("frame 2"));
    let f = &loaded.state.project.frames[1];
    assert_eq!(f.status, FrameStatus::Stale);
    assert!(f.image_ref.is_none());
    assert_eq!(loaded.state.project.frames[0], p.project.frames[0]);
}

#[tokio::test]
async fn truncated_and_foreign_files_are_rejected() {
    let (_dir, store, p) = rendered_on_disk(1).await;
    let path = store.save(&p).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        store.load(&p.project.id),
        Err(StoreError::Corrupt(_))
    ));

    let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    v["schema_version"] = 99.into();
    std::fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    assert!(matches!(
        store.load(&p.project.id),
        Err(StoreError::UnsupportedSchema { found: 99 })
    ));
    assert!(matches!(
        store.load(&ProjectId("nope".into())),
        Err(StoreError::NotFound(_))
    ));
    assert!(matches!(
        store.load(&ProjectId("../x".into())),
        Err(StoreError::NotFound(_))
    ));
}

/// Independent geometry: tiles of w x h, a pad of 16 around and between
/// tiles, and a caption strip under each tile.
fn expected_origin(i: usize, cols: u32, w: u32, h: u32, caption: u32) -> (u32, u32) {
    let (c, r) = (i as u32 % cols, i as u32 / cols);
    (16 + c * (w + 16), 16 + r * (h + caption + 16))
}

#[tokio::test]
async fn contact_sheet_layout_matches_oracle() {
    let (_dir, store, p) = rendered_on_disk(6).await;
    let before = serde_json::to_vec(&p).unwrap();
    let bundle = export(&p.project, store.images(), &[ExportFormat::Png]).unwrap();
    assert_eq!(
        serde_json::to_vec(&p).unwrap(),
        before,
        "export is read-only"
    );

    let sheet = image::load_from_memory(bundle.contact_sheet.as_ref().unwrap())
        .unwrap()
        .to_rgb8();
    let layout = SheetLayout::new(6, 3, 512, 512);
    assert_eq!(SHEET_PAD, 16);
    let caption = layout.caption_height;
    assert!(caption >= 8 * CAPTION_SCALE);
    assert_eq!(
        sheet.dimensions(),
        (16 + 3 * (512 + 16), 16 + 2 * (512 + caption + 16))
    );
    for (i, f) in p.project.frames.iter().enumerate() {
        let (x, y) = expected_origin(i, 3, 512, 512, caption);
        assert_eq!(layout.cell_origin(i), (x, y));
        let tile =
            image::load_from_memory(&store.images().get(f.image_ref.as_ref().unwrap()).unwrap())
                .unwrap()
                .to_rgb8();
        // corners and centre of each tile land at the computed offset
        for (dx, dy) in [(0, 0), (511, 0), (0, 511), (511, 511), (256, 300)] {
            assert_eq!(
                sheet.get_pixel(x + dx, y + dy),
                tile.get_pixel(dx, dy),
                "frame {i} at +({dx},{dy})"
            );
        }
        // the gutter left of each tile is background
        assert_eq!(sheet.get_pixel(x - 1, y).0, [255, 255, 255]);
    }
}

#[tokio::test]
async fn single_frame_sheet_is_one_by_one() {
    let (_dir, store, p) = rendered_on_disk(1).await;
    let bundle = export(&p.project, store.images(), &[ExportFormat::Png]).unwrap();
    let sheet = image::load_from_memory(bundle.contact_sheet.as_ref().unwrap()).unwrap();
    let l = SheetLayout::new(1, 3, 512, 512);
    assert_eq!((l.columns, l.rows), (1, 1));
    assert_eq!((sheet.width(), sheet.height()), l.size());
}

#[tokio::test]
async fn manifest_hashes_match_written_files() {
    let (dir, store, p) = rendered_on_disk(6).await;
    let bundle = export(&p.project, store.images(), &ExportFormat::ALL).unwrap();
    let out = dir.path().join("bundle");
    bundle.write_to(&out).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let frames = manifest["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 6);
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f["number"], i + 1);
        assert_eq!(
            f["natural_language"],
            p.project.frames[i].prompt.natural_language.as_str()
        );
        let file = out.join(f["file"].as_str().unwrap());
        let bytes = std::fs::read(file).unwrap();
        assert_eq!(f["image_sha256"], content_hash(&bytes).as_str());
    }
    assert!(manifest.get("id").is_none());
    let html = std::fs::read_to_string(out.join("storyboard.html")).unwrap();
    assert_eq!(html.matches("data:image/png;base64,").count(), 6);
    assert!(!html.contains("src=\"http"));
}

#[tokio::test]
async fn nothing_rendered_is_an_error() {
    let (e, store) = mock_engine();
    let p = new_project(&e, STORY6, 6);
    assert!(matches!(
        export(&p.project, &*store, &ExportFormat::ALL),
        Err(StoreError::NothingRendered)
    ));
}
