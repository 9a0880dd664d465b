mod eval;
mod export;
mod filter;
mod net;
mod synthesize;

use std::path::Path;

use funcgrasp::affordance::{discover_objects, load_object};
use funcgrasp::config::PipelineConfig;
use funcgrasp::hand::load_hand;
use funcgrasp::{AffordanceObject, HandModel};

use crate::{CliError, CliResult};

pub use eval::{eval, format_cm, summarize, CategorySummary};
pub use export::{export, hand_mesh, part_colors, ExportedFiles, FUNCTIONAL_COLOR, GRASPING_COLOR};
pub use filter::{filter, FilterSummary};
pub use net::{sample, train};
pub use synthesize::synthesize;

fn input_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub(crate) fn open_hand(path: &Path) -> CliResult<HandModel> {
    load_hand(path).map_err(|e| input_error(path, e))
}

pub(crate) fn open_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| input_error(p, e)),
        None => Ok(PipelineConfig::default()),
    }
}

/// Every annotated object in `dir`, sorted by file stem.
pub(crate) fn open_objects(dir: &Path) -> CliResult<Vec<AffordanceObject>> {
    let found = discover_objects(dir).map_err(|e| input_error(dir, e))?;
    if found.is_empty() {
        return Err(input_error(dir, "no annotated objects found"));
    }
    found
        .iter()
        .map(|(mesh, ann)| load_object(mesh, ann).map_err(|e| input_error(mesh, e)))
        .collect()
}

/// The object with `id` in `dir`.
pub(crate) fn find_object(dir: &Path, id: &str) -> CliResult<AffordanceObject> {
    open_objects(dir)?
        .into_iter()
        .find(|o| o.id == id)
        .ok_or_else(|| input_error(dir, format!("no object {id:?}")))
}
