#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use clstega::cover::{SiteCount, StegoKey};
use clstega::model::{ModelHandle, MODEL_DIR_ENV};
use clstega::trainer;

/// Model cache shared by every test binary of this crate.
pub fn model_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("models")
}

/// The default base model, pretrained once and cached on disk.
pub fn base() -> &'static ModelHandle {
    static BASE: OnceLock<ModelHandle> = OnceLock::new();
    BASE.get_or_init(|| {
        std::env::set_var(MODEL_DIR_ENV, model_dir());
        trainer::load_base(&StegoKey::default()).expect("default model loads")
    })
}

pub fn key(k: usize) -> StegoKey {
    StegoKey {
        k: SiteCount::Count(k),
        ..StegoKey::default()
    }
}

/// Three desk sentences, each with at least ten words.
pub fn toy_cover() -> String {
    clstega::corpus::desk_cover(3)
}
