//! Instance sources: generation descriptors and hand-written block files.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use pcrm::{from_descriptor, AffineSubspace, GenerationDescriptor, Point, ProblemInstance};
use serde::Deserialize;

/// Explicit instance, for toy problems that are easier to write than to generate.
///
/// ```json
/// { "blocks": [ { "a": [[0, 1]], "b": [0] }, { "a": [[1, -1]], "b": [0] } ],
///   "start": [2, 1] }
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksFile {
    pub blocks: Vec<BlockSpec>,
    /// Reference solution; enables the relative-error stop rule.
    #[serde(default)]
    pub solution: Option<Vec<f64>>,
    /// Starting point; the origin when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

pub struct Loaded {
    pub instance: ProblemInstance,
    pub start: Point,
}

pub fn load(inst: Option<&Path>, blocks: Option<&Path>) -> anyhow::Result<Loaded> {
    match (inst, blocks) {
        (Some(path), None) => {
            let text = read(path)?;
            let descriptor = GenerationDescriptor::from_json(&text)?;
            let instance = from_descriptor(&descriptor)?;
            let start = Point::zeros(instance.ambient_dim());
            Ok(Loaded { instance, start })
        }
        (None, Some(path)) => {
            let text = read(path)?;
            let file: BlocksFile = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            from_blocks(file)
        }
        _ => bail!("exactly one of --inst or --blocks is required"),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn from_blocks(file: BlocksFile) -> anyhow::Result<Loaded> {
    let mut subspaces = Vec::with_capacity(file.blocks.len());
    for (i, spec) in file.blocks.iter().enumerate() {
        let rows: Vec<&[f64]> = spec.a.iter().map(Vec::as_slice).collect();
        let block = AffineSubspace::from_rows(&rows, &spec.b)
            .with_context(|| format!("block {i}"))?
            .with_label(i);
        subspaces.push(block);
    }
    let mut instance = ProblemInstance::new(subspaces)?;
    if let Some(solution) = file.solution {
        instance = instance.with_known_solution(Point::from_vec(solution))?;
    }
    let n = instance.ambient_dim();
    let start = match file.start {
        Some(s) if s.len() != n => bail!("start has {} entries, instance has n={n}", s.len()),
        Some(s) => Point::from_vec(s),
        None => Point::zeros(n),
    };
    Ok(Loaded { instance, start })
}
