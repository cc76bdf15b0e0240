//! Dotted-key overrides applied to a JSON config document before it is
//! deserialized, so flags and config files share one code path.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Parses `key=value`. The value is read as JSON when possible, otherwise
/// as a bare string, so `variants=["plain"]` and `workload.task_tag=rag`
/// both work.
pub fn parse_assignment(s: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected key=value, got `{s}`")))?;
    if key.is_empty() {
        return Err(CliError::Usage(format!("empty key in `{s}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Sets `key` (dot-separated) in `doc`, creating objects along the way.
pub fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = doc;
    for (i, part) in key.split('.').enumerate() {
        let at = || key.split('.').take(i + 1).collect::<Vec<_>>().join(".");
        cur = match cur {
            Value::Object(obj) => obj.get_mut(part).ok_or_else(|| unknown(&at()))?,
            _ => {
                return Err(CliError::Config {
                    key: key.to_string(),
                    msg: format!(
                        "`{}` is not an object",
                        at().rsplit_once('.').map_or("", |p| p.0)
                    ),
                })
            }
        };
    }
    merge_at(cur, value, key)
}

fn unknown(key: &str) -> CliError {
    CliError::Config {
        key: key.to_string(),
        msg: "unknown key".into(),
    }
}

/// `T::default()` as JSON with the config file layered on top.
pub fn base<T: Serialize + Default>(file: Option<Value>) -> Result<Value, CliError> {
    let mut doc = serde_json::to_value(T::default())?;
    if let Some(f) = file {
        merge(&mut doc, f)?;
    }
    Ok(doc)
}

/// Applies each override in order and deserializes the result.
pub fn finish<T: DeserializeOwned>(
    mut doc: Value,
    overrides: &[(String, Value)],
) -> Result<T, CliError> {
    for (k, v) in overrides {
        set_path(&mut doc, k, v.clone())?;
    }
    serde_json::from_value(doc).map_err(|e| CliError::Config {
        key: "config".into(),
        msg: e.to_string(),
    })
}

/// Recursive object merge. Keys must already exist in `dst`; any other
/// value in `src` replaces the one in `dst`.
pub fn merge(dst: &mut Value, src: Value) -> Result<(), CliError> {
    merge_at(dst, src, "")
}

fn merge_at(dst: &mut Value, src: Value, path: &str) -> Result<(), CliError> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                let key = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                let slot = d.get_mut(&k).ok_or_else(|| unknown(&key))?;
                merge_at(slot, v, &key)?;
            }
            Ok(())
        }
        (d, s) => {
            *d = s;
            Ok(())
        }
    }
}
