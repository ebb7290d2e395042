use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::{BenchmarkId, ModelId};
use crate::error::{Error, Result};

/// Models of one family ordered from strongest (largest) to weakest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyHierarchy {
    name: String,
    members: Vec<ModelId>,
}

impl FamilyHierarchy {
    pub fn new(name: impl Into<String>, members: Vec<ModelId>) -> Result<Self> {
        let name = name.into();
        if members.len() < 2 {
            return Err(Error::Config(format!(
                "family `{name}` needs at least two members, got {}",
                members.len()
            )));
        }
        let distinct: BTreeSet<&ModelId> = members.iter().collect();
        if distinct.len() != members.len() {
            return Err(Error::Config(format!("family `{name}` lists a model twice")));
        }
        Ok(Self { name, members })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Strongest first.
    pub fn members(&self) -> &[ModelId] {
        &self.members
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainGroup {
    name: String,
    benchmarks: Vec<BenchmarkId>,
}

impl DomainGroup {
    pub fn new(name: impl Into<String>, benchmarks: Vec<BenchmarkId>) -> Result<Self> {
        let name = name.into();
        if benchmarks.len() < 2 {
            return Err(Error::Config(format!(
                "domain `{name}` needs at least two benchmarks, got {}",
                benchmarks.len()
            )));
        }
        let distinct: BTreeSet<&BenchmarkId> = benchmarks.iter().collect();
        if distinct.len() != benchmarks.len() {
            return Err(Error::Config(format!("domain `{name}` lists a benchmark twice")));
        }
        Ok(Self { name, benchmarks })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn benchmarks(&self) -> &[BenchmarkId] {
        &self.benchmarks
    }

    pub fn contains(&self, benchmark: &BenchmarkId) -> bool {
        self.benchmarks.contains(benchmark)
    }
}

/// Families, domains and held-out models.
///
/// The file format is TOML with three sections:
///
/// ```toml
/// [families]
/// Qwen3 = ["Qwen3-32B", "Qwen3-8B", "Qwen3-1.7B"]
///
/// [domains]
/// Mathematics = ["MATH-500", "AIME 2024"]
///
/// [heldout]
/// models = ["Qwen2.5-Base-7B"]
/// exclude = false
/// ```
///
/// A held-out model listed in a family is rejected unless `exclude = true`,
/// in which case it is removed from that family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfig {
    pub families: Vec<FamilyHierarchy>,
    pub domains: Vec<DomainGroup>,
    pub heldout: BTreeSet<ModelId>,
}

fn string_list(value: &Value, context: &str) -> Result<Vec<String>> {
    let arr = value
        .as_array()
        .ok_or_else(|| Error::Config(format!("{context} must be a list of names")))?;
    arr.iter()
        .map(|v| {
            v.as_str()
                .map(str::to_owned)
                .ok_or_else(|| Error::Config(format!("{context} must contain only strings")))
        })
        .collect()
}

fn section<'a>(table: &'a Table, key: &str) -> Result<Option<&'a Table>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Table(t)) => Ok(Some(t)),
        Some(_) => Err(Error::Config(format!("`{key}` must be a table"))),
    }
}

impl EvalConfig {
    pub fn new(families: Vec<FamilyHierarchy>, domains: Vec<DomainGroup>, heldout: BTreeSet<ModelId>) -> Result<Self> {
        let config = Self {
            families,
            domains,
            heldout,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let mut owner: BTreeMap<&ModelId, &str> = BTreeMap::new();
        for family in &self.families {
            for m in family.members() {
                if let Some(prev) = owner.insert(m, family.name()) {
                    return Err(Error::Config(format!(
                        "model `{m}` belongs to both `{prev}` and `{}`",
                        family.name()
                    )));
                }
                if self.heldout.contains(m) {
                    return Err(Error::Config(format!(
                        "held-out model `{m}` is listed in family `{}`",
                        family.name()
                    )));
                }
            }
        }
        let mut bench_owner: BTreeMap<&BenchmarkId, &str> = BTreeMap::new();
        for domain in &self.domains {
            for b in domain.benchmarks() {
                if let Some(prev) = bench_owner.insert(b, domain.name()) {
                    return Err(Error::Config(format!(
                        "benchmark `{b}` belongs to both `{prev}` and `{}`",
                        domain.name()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for key in table.keys() {
            if !matches!(key.as_str(), "families" | "domains" | "heldout") {
                return Err(Error::Config(format!("unknown section `{key}`")));
            }
        }

        let mut heldout = BTreeSet::new();
        let mut exclude = false;
        if let Some(h) = section(&table, "heldout")? {
            for (key, value) in h {
                match key.as_str() {
                    "models" => {
                        heldout = string_list(value, "heldout.models")?
                            .into_iter()
                            .map(ModelId::from)
                            .collect()
                    }
                    "exclude" => {
                        exclude = value
                            .as_bool()
                            .ok_or_else(|| Error::Config("heldout.exclude must be a boolean".into()))?
                    }
                    other => return Err(Error::Config(format!("unknown key heldout.{other}"))),
                }
            }
        }

        let mut families = Vec::new();
        if let Some(f) = section(&table, "families")? {
            for (name, value) in f {
                let mut members: Vec<ModelId> = string_list(value, &format!("family `{name}`"))?
                    .into_iter()
                    .map(ModelId::from)
                    .collect();
                if exclude {
                    members.retain(|m| !heldout.contains(m));
                }
                families.push(FamilyHierarchy::new(name.clone(), members)?);
            }
        }

        let mut domains = Vec::new();
        if let Some(d) = section(&table, "domains")? {
            for (name, value) in d {
                let benchmarks = string_list(value, &format!("domain `{name}`"))?
                    .into_iter()
                    .map(BenchmarkId::from)
                    .collect();
                domains.push(DomainGroup::new(name.clone(), benchmarks)?);
            }
        }

        Self::new(families, domains, heldout)
    }

    pub fn to_toml_string(&self) -> String {
        let mut families = Table::new();
        for f in &self.families {
            families.insert(
                f.name().to_owned(),
                Value::Array(f.members().iter().map(|m| Value::from(m.as_str())).collect()),
            );
        }
        let mut domains = Table::new();
        for d in &self.domains {
            domains.insert(
                d.name().to_owned(),
                Value::Array(d.benchmarks().iter().map(|b| Value::from(b.as_str())).collect()),
            );
        }
        let mut heldout = Table::new();
        heldout.insert(
            "models".into(),
            Value::Array(self.heldout.iter().map(|m| Value::from(m.as_str())).collect()),
        );
        let mut root = Table::new();
        root.insert("families".into(), Value::Table(families));
        root.insert("domains".into(), Value::Table(domains));
        root.insert("heldout".into(), Value::Table(heldout));
        toml::to_string(&root).expect("config tables serialize")
    }

    /// Models eligible for metric computation: `available` minus held-out.
    pub fn metric_models(&self, available: &[ModelId]) -> Vec<ModelId> {
        available
            .iter()
            .filter(|m| !self.heldout.contains(*m))
            .cloned()
            .collect()
    }

    pub fn domain_of(&self, benchmark: &BenchmarkId) -> Option<&DomainGroup> {
        self.domains.iter().find(|d| d.contains(benchmark))
    }

    pub fn family_of(&self, model: &ModelId) -> Option<&FamilyHierarchy> {
        self.families.iter().find(|f| f.members().contains(model))
    }

    /// Fails if any held-out model appears in a family.
    pub fn ensure_no_heldout_in_families(&self) -> Result<()> {
        for f in &self.families {
            if let Some(m) = f.members().iter().find(|m| self.heldout.contains(*m)) {
                return Err(Error::HeldoutLeak(m.to_string()));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<EvalConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvalConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_member_family_rejected() {
        let text = "[families]\nsolo = [\"a\"]\n[domains]\nd = [\"x\", \"y\"]\n";
        assert!(matches!(EvalConfig::parse(text), Err(Error::Config(_))));
    }

    #[test]
    fn model_in_two_families_rejected() {
        let text = "[families]\nf = [\"a\", \"b\"]\ng = [\"c\", \"a\"]\n";
        let err = EvalConfig::parse(text).unwrap_err();
        assert!(err.to_string().contains("`a`"));
    }

    #[test]
    fn single_benchmark_domain_rejected() {
        let text = "[domains]\nd = [\"x\"]\n";
        assert!(EvalConfig::parse(text).is_err());
    }

    #[test]
    fn heldout_in_family_needs_exclude_flag() {
        let text = "[families]\nf = [\"a\", \"b\", \"c\"]\n[heldout]\nmodels = [\"c\"]\n";
        assert!(EvalConfig::parse(text).is_err());
        let text = format!("{text}exclude = true\n");
        let cfg = EvalConfig::parse(&text).unwrap();
        assert_eq!(cfg.families[0].members().len(), 2);
        assert!(cfg.ensure_no_heldout_in_families().is_ok());
    }

    #[test]
    fn order_is_preserved_and_round_trips() {
        let text = "[families]\nz = [\"big\", \"small\"]\na = [\"x1\", \"x2\"]\n\
                    [domains]\nmath = [\"m2\", \"m1\"]\n[heldout]\nmodels = [\"h\"]\n";
        let cfg = EvalConfig::parse(text).unwrap();
        assert_eq!(cfg.families[0].name(), "z");
        assert_eq!(cfg.domains[0].benchmarks()[0].as_str(), "m2");
        let again = EvalConfig::parse(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_section_rejected() {
        assert!(EvalConfig::parse("[famlies]\nf = [\"a\", \"b\"]\n").is_err());
    }
}
