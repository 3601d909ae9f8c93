//! Built-in example systems, stored as ordinary spec documents and
//! loaded through the same validation path as user files.

use crate::spec::{load_str, SpecError, SystemSpec};
use crate::tol::Tolerances;

pub const BUILTIN_NAMES: &[&str] = &[
    "canonical2",
    "canonical4",
    "lv4",
    "so3",
    "fastslow",
    "nonpoisson3",
];

pub fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "canonical2" => Some(include_str!("../builtins/canonical2.json")),
        "canonical4" => Some(include_str!("../builtins/canonical4.json")),
        "lv4" => Some(include_str!("../builtins/lv4.json")),
        "so3" => Some(include_str!("../builtins/so3.json")),
        "fastslow" => Some(include_str!("../builtins/fastslow.json")),
        "nonpoisson3" => Some(include_str!("../builtins/nonpoisson3.json")),
        _ => None,
    }
}

pub fn load_builtin(name: &str, tol: &Tolerances) -> Result<SystemSpec, SpecError> {
    let text = builtin_source(name).ok_or_else(|| SpecError::UnknownBuiltin(name.to_string()))?;
    load_str(text, tol)
}
