use std::collections::{BTreeSet, HashMap};

use super::config::Dictionary;
use super::{EtlError, RawRecord, Result};
use crate::fact_store::CountryCode;

/// Countries whose government ids this pipeline knows how to prefix.
pub const SUPPORTED_COUNTRIES: [&str; 3] = ["DE", "CZ", "PL"];

/// Store-wide region id: country code immediately followed by the
/// government-issued id, e.g. `("DE", "14162") -> "DE14162"`.
pub fn normalize_region_id(country: &str, intrinsic: &str) -> Result<String> {
    let code = CountryCode::new(country).map_err(|_| EtlError::UnsupportedCountry(country.to_string()))?;
    if !SUPPORTED_COUNTRIES.contains(&code.as_str()) {
        return Err(EtlError::UnsupportedCountry(country.to_string()));
    }
    let id: String = intrinsic.chars().filter(|c| !c.is_whitespace()).collect();
    if id.is_empty() {
        return Err(EtlError::EmptyRegionId);
    }
    Ok(format!("{code}{id}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedRecord {
    pub record: RawRecord,
    /// Dictionary intrinsic id the key matched.
    pub intrinsic_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolution {
    pub resolved: Vec<ResolvedRecord>,
    /// Records whose key did not match, with the reason.
    pub unresolved: Vec<(RawRecord, String)>,
}

fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

enum Lookup<'a> {
    Found(&'a str),
    Ambiguous,
    Missing,
}

fn lookup<'a>(index: &'a HashMap<String, BTreeSet<&'a str>>, key: &str) -> Lookup<'a> {
    match index.get(key) {
        Some(ids) if ids.len() == 1 => Lookup::Found(ids.iter().next().expect("one id")),
        Some(_) => Lookup::Ambiguous,
        None => Lookup::Missing,
    }
}

/// Matches each record's region key against the dictionary: by intrinsic id,
/// then canonical name, then any alternative name. Names compare
/// case-insensitively after collapsing whitespace; a name shared by several
/// ids is ambiguous and left unresolved.
pub fn resolve_regions(records: Vec<RawRecord>, dictionary: &Dictionary) -> Resolution {
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    let mut by_name: HashMap<String, BTreeSet<&str>> = HashMap::new();
    let mut by_alias: HashMap<String, BTreeSet<&str>> = HashMap::new();
    for entry in &dictionary.entries {
        let id = entry.intrinsic_id.trim();
        by_id.insert(id, id);
        if !entry.name.trim().is_empty() {
            by_name.entry(normalize_name(&entry.name)).or_default().insert(id);
        }
        for alias in &entry.aliases {
            by_alias.entry(normalize_name(alias)).or_default().insert(id);
        }
    }

    let mut out = Resolution::default();
    for record in records {
        let key = record.region_key.trim();
        if let Some(id) = by_id.get(key) {
            let intrinsic_id = id.to_string();
            out.resolved.push(ResolvedRecord { record, intrinsic_id });
            continue;
        }
        let name = normalize_name(key);
        let found = match lookup(&by_name, &name) {
            Lookup::Missing => lookup(&by_alias, &name),
            other => other,
        };
        match found {
            Lookup::Found(id) => {
                let intrinsic_id = id.to_string();
                out.resolved.push(ResolvedRecord { record, intrinsic_id });
            }
            Lookup::Ambiguous => out.unresolved.push((record, "ambiguous".into())),
            Lookup::Missing => out.unresolved.push((record, "unresolved region".into())),
        }
    }
    out
}
