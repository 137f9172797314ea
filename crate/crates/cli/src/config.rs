use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semfilter::codec::CodecTemplate;
use semfilter::prompt::{InstructionStripper, PromptPreprocessor, WordTables};
use semfilter::{Error, PipelineConfig, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    /// Neural when assets are configured, stub otherwise.
    #[default]
    Auto,
    Stub,
    Neural,
}

impl std::str::FromStr for BackendChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "stub" => Ok(Self::Stub),
            "neural" => Ok(Self::Neural),
            other => Err(Error::Config {
                field: "backend",
                reason: format!("expected stub, neural or auto, got {other:?}"),
            }),
        }
    }
}

/// Optional replacements for the embedded prompt tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTables {
    pub blacklist: Option<PathBuf>,
    pub stop_words: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

impl PromptTables {
    pub fn preprocessor(&self) -> Result<PromptPreprocessor> {
        let stripper = match &self.blacklist {
            Some(p) => InstructionStripper::from_path(p)?,
            None => InstructionStripper::default(),
        };
        let tables = WordTables::from_paths(self.stop_words.as_deref(), self.lemmas.as_deref(), self.lexicon.as_deref())?;
        Ok(PromptPreprocessor { stripper, tables })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchDefaults {
    pub codecs: Option<Vec<String>>,
    pub qualities: Option<String>,
    pub modes: Option<Vec<String>>,
    pub anchor: Option<String>,
    pub workers: Option<usize>,
    pub keep_bitstreams: bool,
    pub interpolation: Option<String>,
    pub accuracy: Option<PathBuf>,
}

/// Everything a run needs besides per-command inputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub backend: BackendChoice,
    pub model_dir: Option<PathBuf>,
    pub prompt: PromptTables,
    #[serde(rename = "codec")]
    pub codecs: Vec<CodecTemplate>,
    pub bench: BenchDefaults,
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative paths
    /// inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        })?;
        let parse_err = |reason: String| Error::Parse {
            what: path.display().to_string(),
            reason,
        };
        let mut rc: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        fix(&mut rc.model_dir);
        fix(&mut rc.prompt.blacklist);
        fix(&mut rc.prompt.stop_words);
        fix(&mut rc.prompt.lemmas);
        fix(&mut rc.prompt.lexicon);
        fix(&mut rc.bench.accuracy);
        Ok(rc)
    }
}
