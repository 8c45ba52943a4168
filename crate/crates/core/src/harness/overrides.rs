use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::trainer::RunConfig;

/// Parses an override value: JSON when it parses as JSON, otherwise the raw
/// text as a string (so `filter=unique_states` needs no quoting).
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `root.a.b.c = value`, creating intermediate objects as needed.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(Error::InvalidConfig(format!("bad override path {path:?}")));
    }
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Map::new());
            } else {
                return Err(Error::InvalidConfig(format!(
                    "override {path:?}: {key:?} is inside a non-object value"
                )));
            }
        }
        let obj = node.as_object_mut().expect("object");
        if parts.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("non-empty path")
}

/// Applies one `path=value` assignment.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidConfig(format!("override {assignment:?} is not path=value"))
    })?;
    set_path(root, path.trim(), parse_value(raw.trim()))
}

/// Builds a validated config from a JSON document plus overrides.
pub fn config_with_overrides(mut doc: Value, overrides: &[String]) -> Result<RunConfig> {
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: RunConfig = serde_json::from_value(doc)?;
    cfg.validate()?;
    Ok(cfg)
}
