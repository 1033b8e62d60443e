//! `key=value` overrides applied to the JSON configuration before it is
//! deserialized.

use serde_json::Value;

const SECTIONS: [&str; 3] = ["scenario", "sim", "optimizer"];

/// Applies each `key=value` to `config`. A key is either `section.field` or
/// a bare field name that exists in exactly one section. Values are parsed
/// as JSON when possible and taken as strings otherwise.
pub fn apply(config: &mut Value, overrides: &[String]) -> Result<(), String> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| format!("override `{item}` is not of the form key=value"))?;
        let (section, field) = resolve(config, key.trim())?;
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        config[section][field] = value;
    }
    Ok(())
}

fn resolve(config: &Value, key: &str) -> Result<(&'static str, String), String> {
    let has = |section: &str, field: &str| config.get(section).and_then(|s| s.get(field)).is_some();
    if let Some((section, field)) = key.split_once('.') {
        let section = SECTIONS
            .iter()
            .find(|s| **s == section)
            .ok_or_else(|| format!("unknown config section `{section}` in `{key}`"))?;
        if !has(section, field) {
            return Err(format!("unknown config key `{key}`"));
        }
        return Ok((section, field.to_string()));
    }
    let hits: Vec<&'static str> = SECTIONS.iter().copied().filter(|s| has(s, key)).collect();
    match hits.as_slice() {
        [one] => Ok((one, key.to_string())),
        [] => Err(format!("unknown config key `{key}`")),
        _ => Err(format!("config key `{key}` is ambiguous; qualify it as {}", hits.join(" or "))),
    }
}
