//! Flag spaces, configurations over them, and rendering to compiler arguments.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One toggleable compiler flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagDescriptor {
    /// Canonical name, e.g. `tree-loop-if-convert`.
    pub name: String,
    /// Argument text when the flag is enabled.
    pub on: String,
    /// Argument text when the flag is disabled.
    pub off: String,
    /// Base levels at which the compiler enables this flag by default.
    /// `None` means enabled at every level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled_at: Option<Vec<String>>,
}

impl FlagDescriptor {
    /// Convenience constructor using GCC's `-f<name>` / `-fno-<name>` spelling.
    pub fn gcc(name: &str) -> Self {
        Self {
            name: name.to_string(),
            on: format!("-f{name}"),
            off: format!("-fno-{name}"),
            enabled_at: None,
        }
    }

    pub fn enabled_by_default_at(&self, level: &str) -> bool {
        match &self.enabled_at {
            None => true,
            Some(levels) => levels.iter().any(|l| l == level),
        }
    }
}

/// The ordered universe of flags plus the allowed base optimization levels.
///
/// Flag order is authoritative: ties are resolved by lowest flag index
/// everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSpace {
    pub base_levels: Vec<String>,
    pub default_baseline: String,
    #[serde(default)]
    pub flags: Vec<FlagDescriptor>,
}

impl FlagSpace {
    pub fn new(
        base_levels: Vec<String>,
        default_baseline: impl Into<String>,
        flags: Vec<FlagDescriptor>,
    ) -> Result<Self> {
        let space = Self {
            base_levels,
            default_baseline: default_baseline.into(),
            flags,
        };
        space.validate()?;
        Ok(space)
    }

    fn validate(&self) -> Result<()> {
        if self.base_levels.is_empty() {
            return Err(Error::FlagSpace("base_levels must not be empty".into()));
        }
        let mut levels = HashSet::new();
        for level in &self.base_levels {
            if level.is_empty() || !levels.insert(level.as_str()) {
                return Err(Error::FlagSpace(format!("invalid or duplicate base level {level:?}")));
            }
        }
        if !levels.contains(self.default_baseline.as_str()) {
            return Err(Error::FlagSpace(format!(
                "default_baseline {:?} is not one of the base levels",
                self.default_baseline
            )));
        }
        let mut names = HashSet::new();
        for flag in &self.flags {
            if flag.name.is_empty() {
                return Err(Error::FlagSpace("flag with empty name".into()));
            }
            if !names.insert(flag.name.as_str()) {
                return Err(Error::FlagSpace(format!("duplicate flag {:?}", flag.name)));
            }
            if let Some(at) = &flag.enabled_at {
                if let Some(bad) = at.iter().find(|l| !levels.contains(l.as_str())) {
                    return Err(Error::FlagSpace(format!(
                        "flag {:?} names unknown base level {bad:?}",
                        flag.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses the TOML flag-space document.
    pub fn parse(document: &str) -> Result<Self> {
        let space: FlagSpace =
            toml::from_str(document).map_err(|e| Error::FlagSpace(format!("malformed document: {e}")))?;
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flag space is always serializable")
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn flag_index(&self, name: &str) -> Option<usize> {
        self.flags.iter().position(|f| f.name == name)
    }

    pub fn has_level(&self, level: &str) -> bool {
        self.base_levels.iter().any(|l| l == level)
    }

    /// Every flag enabled at the default baseline level.
    pub fn all_enabled(&self) -> Configuration {
        Configuration::new(self.default_baseline.clone(), vec![true; self.len()])
    }

    /// The configuration the compiler applies for `level` on its own.
    pub fn stock(&self, level: &str) -> Result<Configuration> {
        if !self.has_level(level) {
            return Err(Error::FlagSpace(format!("unknown base level {level:?}")));
        }
        let assignment = self.flags.iter().map(|f| f.enabled_by_default_at(level)).collect();
        Ok(Configuration::new(level, assignment))
    }

    /// Stock configuration of the default baseline level.
    pub fn stock_baseline(&self) -> Configuration {
        self.stock(&self.default_baseline)
            .expect("default baseline validated at construction")
    }

    /// Checks that `config` was built over this space.
    pub fn check(&self, config: &Configuration) -> Result<()> {
        if config.len() != self.len() {
            return Err(Error::Structural(format!(
                "configuration has {} flags but the space has {}",
                config.len(),
                self.len()
            )));
        }
        if !self.has_level(&config.base_level) {
            return Err(Error::Structural(format!(
                "base level {:?} not in flag space",
                config.base_level
            )));
        }
        Ok(())
    }

    /// Renders `config` as compiler arguments: the base level first, then every
    /// flag explicitly in its enabled or disabled form, in flag order.
    pub fn render_args(&self, config: &Configuration) -> Result<Vec<String>> {
        self.check(config)?;
        let mut args = Vec::with_capacity(self.len() + 1);
        args.push(format!("-{}", config.base_level));
        for (flag, &enabled) in self.flags.iter().zip(&config.assignment) {
            args.push(if enabled { flag.on.clone() } else { flag.off.clone() });
        }
        Ok(args)
    }

    /// Arguments that differ from the stock default baseline, in the style of
    /// a published optimization level (`-O3 -fno-common -fipa-pta ...`).
    pub fn render_delta(&self, config: &Configuration) -> Result<Vec<String>> {
        self.check(config)?;
        let stock = self.stock(&config.base_level)?;
        let mut args = vec![format!("-{}", config.base_level)];
        for (i, flag) in self.flags.iter().enumerate() {
            let enabled = config.assignment[i];
            if enabled != stock.assignment[i] {
                args.push(if enabled { flag.on.clone() } else { flag.off.clone() });
            }
        }
        Ok(args)
    }
}

/// A base level plus an explicit on/off assignment for every flag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub base_level: String,
    pub assignment: Vec<bool>,
}

impl Configuration {
    pub fn new(base_level: impl Into<String>, assignment: Vec<bool>) -> Self {
        Self {
            base_level: base_level.into(),
            assignment,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn is_enabled(&self, flag: usize) -> bool {
        self.assignment[flag]
    }

    /// Returns a copy with `flag` flipped.
    pub fn toggle(&self, flag: usize) -> Result<Configuration> {
        if flag >= self.len() {
            return Err(Error::Structural(format!(
                "flag index {flag} out of range for {} flags",
                self.len()
            )));
        }
        let mut next = self.clone();
        next.assignment[flag] = !next.assignment[flag];
        Ok(next)
    }

    /// `1` for enabled, `0` for disabled, one character per flag.
    pub fn bitstring(&self) -> String {
        self.assignment.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(base_level: impl Into<String>, bits: &str) -> Result<Self> {
        let assignment = bits
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::Structural(format!("invalid bit {other:?} in {bits:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(base_level, assignment))
    }

    /// Stable textual key `<base>:<bitstring>`.
    pub fn key(&self) -> String {
        format!("{}:{}", self.base_level, self.bitstring())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, bits) = s
            .split_once(':')
            .ok_or_else(|| Error::Structural(format!("expected <base>:<bits>, got {s:?}")))?;
        Configuration::from_bitstring(base, bits)
    }
}

/// Serialized form `{base_level, bitstring}`.
#[derive(Serialize, Deserialize)]
struct ConfigurationRepr {
    base_level: String,
    bitstring: String,
}

impl Serialize for Configuration {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ConfigurationRepr {
            base_level: self.base_level.clone(),
            bitstring: self.bitstring(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ConfigurationRepr::deserialize(deserializer)?;
        Configuration::from_bitstring(repr.base_level, &repr.bitstring).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn levels() -> Vec<String> {
        ["O1", "O2", "O3"].iter().map(|s| s.to_string()).collect()
    }

    fn two_flag_space() -> FlagSpace {
        FlagSpace::new(
            levels(),
            "O3",
            vec![FlagDescriptor::gcc("common"), FlagDescriptor::gcc("ipa-pta")],
        )
        .unwrap()
    }

    #[test]
    fn render_empty_space() {
        let space = FlagSpace::new(levels(), "O3", vec![]).unwrap();
        let args = space.render_args(&space.all_enabled()).unwrap();
        assert_eq!(args, vec!["-O3"]);
    }

    #[test]
    fn render_mixed_assignment() {
        let space = two_flag_space();
        let config = Configuration::new("O3", vec![false, true]);
        assert_eq!(
            space.render_args(&config).unwrap(),
            vec!["-O3", "-fno-common", "-fipa-pta"]
        );
        assert_eq!(
            space.render_args(&space.all_enabled()).unwrap(),
            vec!["-O3", "-fcommon", "-fipa-pta"]
        );
    }

    #[test]
    fn render_rejects_foreign_config() {
        let space = two_flag_space();
        assert!(matches!(
            space.render_args(&Configuration::new("O3", vec![true])),
            Err(Error::Structural(_))
        ));
        assert!(space.render_args(&Configuration::new("Os", vec![true, true])).is_err());
    }

    #[test]
    fn render_delta_lists_only_changes() {
        let mut space = two_flag_space();
        space.flags[1].enabled_at = Some(vec![]);
        let config = Configuration::new("O3", vec![false, true]);
        assert_eq!(
            space.render_delta(&config).unwrap(),
            vec!["-O3", "-fno-common", "-fipa-pta"]
        );
        assert_eq!(space.render_delta(&space.stock_baseline()).unwrap(), vec!["-O3"]);
    }

    #[test]
    fn toggle_examples() {
        let c = Configuration::new("O3", vec![true, true]);
        assert_eq!(c.toggle(0).unwrap().assignment, vec![false, true]);
        assert_eq!(c.toggle(0).unwrap().toggle(0).unwrap(), c);
        assert_eq!(
            Configuration::new("O3", vec![false]).toggle(0).unwrap().assignment,
            vec![true]
        );
        assert!(c.toggle(2).is_err());
    }

    #[test]
    fn parse_preserves_order() {
        let doc = r#"
base_levels = ["O1", "O2", "O3"]
default_baseline = "O3"

[[flags]]
name = "tree-ch"
on = "-ftree-ch"
off = "-fno-tree-ch"

[[flags]]
name = "common"
on = "-fcommon"
off = "-fno-common"

[[flags]]
name = "ipa-pta"
on = "-fipa-pta"
off = "-fno-ipa-pta"
enabled_at = []
"#;
        let space = FlagSpace::parse(doc).unwrap();
        assert_eq!(space.len(), 3);
        let names: Vec<_> = space.flags.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["tree-ch", "common", "ipa-pta"]);
        assert_eq!(space.stock_baseline().bitstring(), "110");
        assert_eq!(FlagSpace::parse(&space.to_toml()).unwrap(), space);
    }

    #[test]
    fn parse_errors() {
        let dup = r#"
base_levels = ["O3"]
default_baseline = "O3"
[[flags]]
name = "common"
on = "-fcommon"
off = "-fno-common"
[[flags]]
name = "common"
on = "-fcommon"
off = "-fno-common"
"#;
        assert!(FlagSpace::parse(dup).is_err());
        assert!(FlagSpace::parse("base_levels = [\"O2\"]\ndefault_baseline = \"O3\"\n").is_err());
        assert!(FlagSpace::parse("base_levels = []\ndefault_baseline = \"O3\"\n").is_err());
        assert!(FlagSpace::parse("this is not toml [").is_err());
        let bad_level = "base_levels = [\"O3\"]\ndefault_baseline = \"O3\"\n[[flags]]\nname = \"a\"\non = \"-fa\"\noff = \"-fno-a\"\nenabled_at = [\"O9\"]\n";
        assert!(FlagSpace::parse(bad_level).is_err());
    }

    #[test]
    fn configuration_text_forms() {
        let c = Configuration::new("O2", vec![true, false, true]);
        assert_eq!(c.bitstring(), "101");
        assert_eq!(c.key().parse::<Configuration>().unwrap(), c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"base_level":"O2","bitstring":"101"}"#);
        assert_eq!(serde_json::from_str::<Configuration>(&json).unwrap(), c);
        assert!(Configuration::from_bitstring("O2", "10x").is_err());
    }

    proptest! {
        #[test]
        fn render_is_injective(
            a in proptest::collection::vec(any::<bool>(), 6),
            b in proptest::collection::vec(any::<bool>(), 6),
            la in 0usize..3,
            lb in 0usize..3,
        ) {
            let flags = (0..6).map(|i| FlagDescriptor::gcc(&format!("f{i}"))).collect();
            let space = FlagSpace::new(levels(), "O3", flags).unwrap();
            let ca = Configuration::new(levels()[la].clone(), a);
            let cb = Configuration::new(levels()[lb].clone(), b);
            let ra = space.render_args(&ca).unwrap();
            let rb = space.render_args(&cb).unwrap();
            prop_assert_eq!(ca == cb, ra == rb);
        }

        #[test]
        fn toggle_is_involution(bits in proptest::collection::vec(any::<bool>(), 1..20), idx in 0usize..20) {
            let c = Configuration::new("O3", bits);
            let i = idx % c.len();
            let once = c.toggle(i).unwrap();
            for j in 0..c.len() {
                prop_assert_eq!(once.assignment[j] != c.assignment[j], j == i);
            }
            prop_assert_eq!(once.toggle(i).unwrap(), c);
        }
    }
}
