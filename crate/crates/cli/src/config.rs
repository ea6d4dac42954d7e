//! Run configuration: flat dotted-key files layered under command-line flags.
//!
//! Precedence, lowest first: built-in defaults, `--config` file, `--params`
//! file (pipeline parameters), `--set key=value` overrides, dedicated flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use choroidseg::io::{from_flat_config, read_text, to_flat_config};
use choroidseg::pipeline::PipelineParams;
use choroidseg::volume::{Layout, PhantomSpec, VolumeGeometry};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// A preset name, a path to a geometry file, or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySource {
    Named(String),
    Explicit(VolumeGeometry),
}

impl Default for GeometrySource {
    fn default() -> Self {
        GeometrySource::Named("cirrus".into())
    }
}

impl GeometrySource {
    pub fn resolve(&self) -> Result<VolumeGeometry> {
        let g = match self {
            GeometrySource::Explicit(g) => *g,
            GeometrySource::Named(name) => match VolumeGeometry::preset(name) {
                Some(g) => g,
                None => {
                    let path = Path::new(name);
                    if !path.exists() {
                        return Err(UsageError(format!(
                            "geometry {name:?} is neither a preset (cirrus, spectralis) nor a file"
                        ))
                        .into());
                    }
                    from_flat_config(&read_text(path)?)
                        .with_context(|| format!("geometry file {}", path.display()))?
                }
            },
        };
        g.validate()?;
        Ok(g)
    }
}

fn default_layout() -> String {
    Layout::canonical().to_string()
}

pub fn parse_layout(s: &str) -> Result<Layout> {
    Ok(s.parse::<Layout>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub geometry: GeometrySource,
    #[serde(default = "default_layout")]
    pub layout: String,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_radius")]
    pub radius_mm: f64,
    #[serde(default)]
    pub params: PipelineParams,
}

fn default_radius() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    #[serde(default)]
    pub geometry: GeometrySource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_seed: Option<u64>,
    #[serde(default)]
    pub realistic: bool,
    /// Full phantom description; replaces geometry, seed and realistic when set.
    #[serde(default)]
    pub spec: Option<PhantomSpec>,
    #[serde(default = "default_layout")]
    pub layout: String,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub test_bm: Option<PathBuf>,
    pub test_csi: Option<PathBuf>,
    pub ref_bm: Option<PathBuf>,
    pub ref_csi: Option<PathBuf>,
    /// Second grader; averaged with the first into the reference standard.
    pub ref2_bm: Option<PathBuf>,
    pub ref2_csi: Option<PathBuf>,
    #[serde(default)]
    pub geometry: GeometrySource,
    /// 1-based B-scan indices; empty means every column.
    #[serde(default)]
    pub mask_bscans: Vec<usize>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproConfig {
    pub pairs: Option<PathBuf>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Accumulates config layers as a TOML table.
pub struct Layers {
    table: toml::Table,
}

impl Layers {
    pub fn new() -> Self {
        Layers {
            table: toml::Table::new(),
        }
    }

    pub fn file(&mut self, path: Option<&Path>) -> Result<&mut Self> {
        if let Some(path) = path {
            let text = read_text(path)?;
            let t: toml::Table = text
                .parse()
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            merge(&mut self.table, t);
        }
        Ok(self)
    }

    /// A file whose keys are nested under `key`.
    pub fn nested_file(&mut self, key: &str, path: Option<&Path>) -> Result<&mut Self> {
        if let Some(path) = path {
            let text = read_text(path)?;
            let t: toml::Table = text
                .parse()
                .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
            let mut outer = toml::Table::new();
            outer.insert(key.into(), toml::Value::Table(t));
            merge(&mut self.table, outer);
        }
        Ok(self)
    }

    /// `key=value` pairs; values are TOML literals, or strings otherwise.
    pub fn assignments(&mut self, pairs: &[String]) -> Result<&mut Self> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| UsageError(format!("--set {pair:?}: expected key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            let t: toml::Table = format!("{k} = {v}")
                .parse()
                .or_else(|_| format!("{k} = {}", toml::Value::String(v.into())).parse())
                .map_err(|e| UsageError(format!("--set {pair:?}: {e}")))?;
            merge(&mut self.table, t);
        }
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: Option<impl Into<toml::Value>>) -> &mut Self {
        if let Some(v) = value {
            self.table.insert(key.into(), v.into());
        }
        self
    }

    pub fn build<T: DeserializeOwned>(&self) -> Result<T> {
        let text = toml::to_string(&self.table).context("serializing config layers")?;
        Ok(from_flat_config(&text).map_err(|e| UsageError(e.to_string()))?)
    }
}

fn merge(dst: &mut toml::Table, src: toml::Table) {
    for (k, v) in src {
        match (dst.get_mut(&k), v) {
            (Some(toml::Value::Table(d)), toml::Value::Table(s)) => merge(d, s),
            (_, v) => {
                dst.insert(k, v);
            }
        }
    }
}

pub fn path_value(p: &Option<PathBuf>) -> Option<toml::Value> {
    p.as_ref().map(|p| toml::Value::String(p.display().to_string()))
}

/// Resolved config text written beside every output.
pub fn resolved_text<T: Serialize>(command: &str, config: &T) -> Result<String> {
    let body = to_flat_config(config)?;
    Ok(format!(
        "# choroidseg {command} {}\n# rerun with: choroidseg {command} --config <this file>\n{body}",
        env!("CARGO_PKG_VERSION")
    ))
}

pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    match value {
        Some(p) => Ok(p),
        None => bail!(UsageError(format!("missing {flag}"))),
    }
}
