//! Runtime configuration: backend endpoints, credentials, storage and port.
//!
//! Each setting is resolved from, in order: command-line flag, environment
//! variable, config file, built-in default.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use storyboard_core::GenerationConfig;
use thiserror::Error;

use crate::backends::{
    A1111Client, MockChat, MockImage, OpenAiChatClient, OpenAiImagesClient, SharedChat, SharedImage,
};

pub const ENV_CHAT_URL: &str = "STORYBOARD_CHAT_URL";
pub const ENV_IMAGE_URL: &str = "STORYBOARD_IMAGE_URL";
pub const ENV_IMAGE_BACKEND: &str = "STORYBOARD_IMAGE_BACKEND";
pub const ENV_STORAGE_ROOT: &str = "STORYBOARD_STORAGE_ROOT";
pub const ENV_PORT: &str = "STORYBOARD_PORT";
pub const ENV_CONFIG: &str = "STORYBOARD_CONFIG";
pub const ENV_API_KEY: &str = "OPENAI_API_KEY";

pub const DEFAULT_CHAT_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_IMAGE_URL: &str = "http://127.0.0.1:7860";
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid value {value:?} for {name}")]
    Invalid { name: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageBackendKind {
    #[default]
    A1111,
    OpenaiImages,
    Mock,
}

impl std::str::FromStr for ImageBackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a1111" | "sd" | "stable-diffusion" => Ok(ImageBackendKind::A1111),
            "openai-images" | "dalle" | "dall-e" => Ok(ImageBackendKind::OpenaiImages),
            "mock" => Ok(ImageBackendKind::Mock),
            other => Err(format!(
                "unknown image backend {other:?} (expected a1111, openai-images or mock)"
            )),
        }
    }
}

/// Contents of the TOML config file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub chat_url: Option<String>,
    pub image_url: Option<String>,
    pub image_backend: Option<ImageBackendKind>,
    pub openai_images_url: Option<String>,
    pub openai_images_model: Option<String>,
    pub api_key: Option<String>,
    pub storage_root: Option<PathBuf>,
    pub port: Option<u16>,
    pub image_concurrency: Option<usize>,
    pub generation: Option<GenerationConfig>,
}

/// Values supplied on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config_file: Option<PathBuf>,
    pub chat_url: Option<String>,
    pub image_url: Option<String>,
    pub image_backend: Option<ImageBackendKind>,
    pub storage_root: Option<PathBuf>,
    pub port: Option<u16>,
    pub mock: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub chat_url: String,
    pub image_url: String,
    pub image_backend: ImageBackendKind,
    pub openai_images_url: String,
    pub openai_images_model: String,
    pub api_key: Option<String>,
    pub storage_root: PathBuf,
    pub port: u16,
    pub image_concurrency: usize,
    /// Offline chat backend.
    pub mock: bool,
    /// Offline image backend; off when `--mock` is combined with an explicit
    /// image URL or backend flag.
    pub mock_images: bool,
    pub generation: GenerationConfig,
}

impl AppConfig {
    /// Resolves from the process environment.
    pub fn resolve(overrides: Overrides) -> Result<AppConfig, ConfigError> {
        Self::resolve_with(overrides, |k| std::env::var(k).ok())
    }

    /// Resolves with an injectable environment lookup.
    pub fn resolve_with(
        o: Overrides,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<AppConfig, ConfigError> {
        let env = |k: &str| env(k).filter(|v| !v.trim().is_empty());
        let path = o
            .config_file
            .clone()
            .or_else(|| env(ENV_CONFIG).map(PathBuf::from));
        let file = match &path {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let port = match (o.port, env(ENV_PORT)) {
            (Some(p), _) => p,
            (None, Some(v)) => v.trim().parse().map_err(|_| ConfigError::Invalid {
                name: ENV_PORT,
                value: v.clone(),
            })?,
            (None, None) => file.port.unwrap_or(DEFAULT_PORT),
        };
        let mock_images = o.mock && o.image_url.is_none() && o.image_backend.is_none();
        let image_backend = match (o.image_backend, env(ENV_IMAGE_BACKEND)) {
            (Some(k), _) => k,
            (None, Some(v)) => v.parse().map_err(|_| ConfigError::Invalid {
                name: ENV_IMAGE_BACKEND,
                value: v.clone(),
            })?,
            (None, None) => file.image_backend.unwrap_or_default(),
        };
        Ok(AppConfig {
            chat_url: o
                .chat_url
                .or_else(|| env(ENV_CHAT_URL))
                .or(file.chat_url)
                .unwrap_or_else(|| DEFAULT_CHAT_URL.into()),
            image_url: o
                .image_url
                .or_else(|| env(ENV_IMAGE_URL))
                .or(file.image_url)
                .unwrap_or_else(|| DEFAULT_IMAGE_URL.into()),
            image_backend,
            openai_images_url: file
                .openai_images_url
                .unwrap_or_else(|| DEFAULT_CHAT_URL.into()),
            openai_images_model: file
                .openai_images_model
                .unwrap_or_else(|| "dall-e-3".into()),
            api_key: env(ENV_API_KEY).or(file.api_key),
            storage_root: o
                .storage_root
                .or_else(|| env(ENV_STORAGE_ROOT).map(PathBuf::from))
                .or(file.storage_root)
                .unwrap_or_else(|| PathBuf::from("storyboard-data")),
            port,
            image_concurrency: file.image_concurrency.unwrap_or(4).max(1),
            mock: o.mock,
            mock_images,
            generation: file.generation.unwrap_or_default(),
        })
    }

    pub fn chat_backend(&self, mock_seed: u64) -> SharedChat {
        if self.mock {
            return Arc::new(MockChat::new(mock_seed));
        }
        Arc::new(OpenAiChatClient::new(&self.chat_url, self.api_key.clone()))
    }

    pub fn image_backend(&self) -> SharedImage {
        let kind = if self.mock_images {
            ImageBackendKind::Mock
        } else {
            self.image_backend
        };
        self.image_backend_of(kind)
    }

    pub fn image_backend_of(&self, kind: ImageBackendKind) -> SharedImage {
        match kind {
            ImageBackendKind::Mock => Arc::new(MockImage::new()),
            ImageBackendKind::A1111 => Arc::new(
                A1111Client::new(&self.image_url).with_max_concurrency(self.image_concurrency),
            ),
            ImageBackendKind::OpenaiImages => Arc::new(OpenAiImagesClient::new(
                &self.openai_images_url,
                self.api_key.clone(),
                &self.openai_images_model,
            )),
        }
    }
}

fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| m.get(k).cloned()
    }

    #[test]
    fn precedence_flag_env_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(
            &file,
            "port = 9000\nchat_url = \"http://file\"\nimage_url = \"http://file-img\"\n\n[generation]\nframe_count = 4\n",
        )
        .unwrap();
        let e = env(&[
            (ENV_CONFIG, file.to_str().unwrap()),
            (ENV_PORT, "9100"),
            (ENV_CHAT_URL, "http://env"),
        ]);
        let c = AppConfig::resolve_with(
            Overrides {
                chat_url: Some("http://flag".into()),
                ..Overrides::default()
            },
            &e,
        )
        .unwrap();
        assert_eq!(c.chat_url, "http://flag");
        assert_eq!(c.port, 9100);
        assert_eq!(c.image_url, "http://file-img");
        assert_eq!(c.generation.frame_count, 4);
        assert_eq!(c.generation.image_width, 512);
    }

    #[test]
    fn defaults_and_bad_values() {
        let c = AppConfig::resolve_with(Overrides::default(), env(&[])).unwrap();
        assert_eq!(c.port, DEFAULT_PORT);
        assert_eq!(c.image_backend, ImageBackendKind::A1111);
        assert!(AppConfig::resolve_with(Overrides::default(), env(&[(ENV_PORT, "x")])).is_err());
    }

    #[test]
    fn mock_with_explicit_image_url_keeps_live_images() {
        let mock = |image_url: Option<&str>| {
            let o = Overrides {
                mock: true,
                image_url: image_url.map(String::from),
                ..Overrides::default()
            };
            AppConfig::resolve_with(o, env(&[])).unwrap()
        };
        assert!(mock(None).mock_images);
        let c = mock(Some("http://127.0.0.1:7860"));
        assert!(c.mock && !c.mock_images);
        assert_eq!(c.image_backend().name(), "a1111");
        assert_eq!(c.chat_backend(0).name(), "mock");
    }
}
