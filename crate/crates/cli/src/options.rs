use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use serde::Deserialize;

use lodestar_agent::backend::ENV_BASE_URL;
use lodestar_agent::{ChatBackend, OpenAiBackend, ScriptedBackend};

/// Where reasoning replies come from. A transcript wins over a URL; with
/// neither (and no URL in the environment) the reasoning loop runs without
/// a model.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct BackendOptions {
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub scripted: Option<PathBuf>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

fn default_timeout_s() -> u64 {
    60
}

impl BackendOptions {
    pub fn new(url: Option<String>, scripted: Option<PathBuf>) -> Self {
        BackendOptions {
            url,
            scripted,
            timeout_s: default_timeout_s(),
        }
    }

    /// A fresh backend; scripted transcripts restart from the top.
    pub fn build(&self) -> anyhow::Result<Option<Box<dyn ChatBackend>>> {
        if let Some(path) = &self.scripted {
            let backend = ScriptedBackend::from_path(path).with_context(|| format!("loading transcript {}", path.display()))?;
            return Ok(Some(Box::new(backend)));
        }
        if self.url.is_some() || std::env::var(ENV_BASE_URL).is_ok() {
            let backend = OpenAiBackend::from_env(self.url.as_deref(), Duration::from_secs(self.timeout_s.max(1)))?;
            return Ok(Some(Box::new(backend)));
        }
        Ok(None)
    }
}

/// Parses `3`, `1,4,9` or the inclusive range `0..9`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range {text:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range {text:?}"))?;
        if b < a {
            return Err(format!("empty seed range {text:?}"));
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| format!("bad seed {s:?}")))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("at least one seed required".into());
    }
    Ok(seeds)
}
