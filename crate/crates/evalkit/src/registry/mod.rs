//! Resolution of modules by name from an ordered list of roots.
//!
//! A root is the built-in table, a local directory or a git repository.
//! Earlier roots shadow later ones. Within a directory root a module lives at
//! `<root>/<id>/manifest.toml`, or in versioned form at
//! `<root>/<id>/<version>/manifest.toml`. A git root is fetched into the cache
//! (see [`git`]) and then searched like a directory root, except that a
//! manifest at the repository top level is also matched by its `id`.
//!
//! Names that look like paths (`./x`, `../x`, `/x`) load that directory
//! directly. `git+<url>[#<revision>]` loads a repository directly.

pub mod card;
pub mod git;
pub mod manifest;
pub mod scaffold;
pub mod validate;

use std::path::{Path, PathBuf};

use evalkit_core::{canonical, ModuleInfo, OutputSpec, Provenance};

use crate::accumulator::BufferConfig;
use crate::error::{Error, Result};
use crate::module::{CombinedModule, EvaluationModule, ExternalCommand, Implementation, ModuleDef};
pub use card::{Severity, Violation};
pub use manifest::{Manifest, Version, MANIFEST_FILE};
pub use scaffold::{create_scaffold, ScaffoldReport};
pub use validate::{validate, ValidationReport};

pub const ENV_REGISTRY_ROOTS: &str = "EVALKIT_REGISTRY_ROOTS";
pub const ENV_CACHE_DIR: &str = "EVALKIT_CACHE_DIR";

/// Card text of a built-in module.
pub fn builtin_card(id: &str) -> Option<&'static str> {
    Some(match id {
        "accuracy" => include_str!("../../cards/accuracy.md"),
        "precision" => include_str!("../../cards/precision.md"),
        "recall" => include_str!("../../cards/recall.md"),
        "f1" => include_str!("../../cards/f1.md"),
        "exact_match" => include_str!("../../cards/exact_match.md"),
        "bleu" => include_str!("../../cards/bleu.md"),
        "rouge" => include_str!("../../cards/rouge.md"),
        "perplexity" => include_str!("../../cards/perplexity.md"),
        "mcnemar" => include_str!("../../cards/mcnemar.md"),
        "paired_bootstrap" => include_str!("../../cards/paired_bootstrap.md"),
        "label_distribution" => include_str!("../../cards/label_distribution.md"),
        "duplicates" => include_str!("../../cards/duplicates.md"),
        "text_length" => include_str!("../../cards/text_length.md"),
        _ => return None,
    })
}

/// The manifest a built-in module would have on disk.
pub fn builtin_manifest(id: &str) -> Option<Manifest> {
    let info = canonical::lookup(id)?.info();
    Some(Manifest {
        id: info.id,
        version: info.version,
        kind: info.kind,
        card: "README.md".into(),
        features: info.features,
        outputs: info.outputs,
        parameters: info.parameters,
        implementation: manifest::ImplementationSpec { builtin: Some(id.to_string()), command: None },
        examples: Vec::new(),
    })
}

/// Validation report of a built-in module and its embedded card.
pub fn validate_builtin(id: &str) -> Option<ValidationReport> {
    let m = builtin_manifest(id)?;
    Some(ValidationReport {
        module: id.to_string(),
        path: PathBuf::from(format!("builtin:{id}")),
        violations: validate::check_module(&m, builtin_card(id), None),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryRoot {
    Builtin,
    Dir(PathBuf),
    Git { url: String, revision: Option<String> },
}

impl RegistryRoot {
    /// `builtin`, `git+<url>[#<revision>]`, or a directory path.
    pub fn parse(spec: &str) -> RegistryRoot {
        let spec = spec.trim();
        if spec == "builtin" {
            RegistryRoot::Builtin
        } else if let Some(rest) = spec.strip_prefix("git+") {
            let (url, revision) = split_revision(rest);
            RegistryRoot::Git { url, revision }
        } else {
            RegistryRoot::Dir(PathBuf::from(spec))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RegistryRoot::Builtin => "builtin".into(),
            RegistryRoot::Dir(p) => format!("dir:{}", p.display()),
            RegistryRoot::Git { url, revision: Some(r) } => format!("git:{url}#{r}"),
            RegistryRoot::Git { url, revision: None } => format!("git:{url}"),
        }
    }
}

fn split_revision(s: &str) -> (String, Option<String>) {
    match s.rsplit_once('#') {
        Some((url, rev)) if !rev.is_empty() => (url.to_string(), Some(rev.to_string())),
        _ => (s.trim_end_matches('#').to_string(), None),
    }
}

fn default_cache_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(ENV_CACHE_DIR).filter(|d| !d.is_empty()) {
        return PathBuf::from(d);
    }
    if let Some(d) = std::env::var_os("XDG_CACHE_HOME").filter(|d| !d.is_empty()) {
        return PathBuf::from(d).join("evalkit");
    }
    if let Some(h) = std::env::var_os("HOME").filter(|d| !d.is_empty()) {
        return PathBuf::from(h).join(".cache").join("evalkit");
    }
    std::env::temp_dir().join("evalkit-cache")
}

/// Immutable module resolver; safe to share across threads.
#[derive(Debug, Clone)]
pub struct Registry {
    roots: Vec<RegistryRoot>,
    cache_dir: PathBuf,
    buffer: BufferConfig,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::new(vec![RegistryRoot::Builtin])
    }
}

enum Found {
    Module(ModuleDef),
    /// The name exists here, but not at the requested version.
    OtherVersions(Vec<String>),
    Absent,
}

impl Registry {
    pub fn new(roots: Vec<RegistryRoot>) -> Self {
        Registry { roots, cache_dir: default_cache_dir(), buffer: BufferConfig::from_env() }
    }

    /// Roots from `EVALKIT_REGISTRY_ROOTS` (comma-separated, see [`RegistryRoot::parse`]).
    /// The built-in table is appended when not listed; unset means built-ins only.
    pub fn from_env() -> Self {
        let mut roots: Vec<RegistryRoot> = std::env::var(ENV_REGISTRY_ROOTS)
            .unwrap_or_default()
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(RegistryRoot::parse)
            .collect();
        if !roots.contains(&RegistryRoot::Builtin) {
            roots.push(RegistryRoot::Builtin);
        }
        Registry::new(roots)
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = dir.into();
        self
    }

    pub fn with_buffer_config(mut self, config: BufferConfig) -> Self {
        self.buffer = config;
        self
    }

    pub fn roots(&self) -> &[RegistryRoot] {
        &self.roots
    }

    pub fn buffer_config(&self) -> &BufferConfig {
        &self.buffer
    }

    /// Loads a module with an empty buffer.
    pub fn load(&self, name: &str, version: Option<&str>) -> Result<EvaluationModule> {
        Ok(EvaluationModule::new(self.resolve(name, version)?, self.buffer.clone()))
    }

    /// Loads several modules sharing one input schema behind a single buffer.
    pub fn combine(&self, names: &[&str]) -> Result<CombinedModule> {
        let defs = names.iter().map(|n| self.resolve(n, None)).collect::<Result<Vec<_>>>()?;
        CombinedModule::new(defs, self.buffer.clone())
    }

    pub fn info(&self, name: &str) -> Result<ModuleInfo> {
        Ok(self.resolve(name, None)?.info)
    }

    /// Finds the module definition for `name`, honouring root order.
    pub fn resolve(&self, name: &str, version: Option<&str>) -> Result<ModuleDef> {
        if is_path_like(name) {
            return load_dir(Path::new(name), version, None);
        }
        if let Some(rest) = name.strip_prefix("git+") {
            let (url, rev) = split_revision(rest);
            let checkout = git::fetch(&self.cache_dir, &url, rev.as_deref().or(version))?;
            return load_dir(&checkout.dir, None, Some(git_provenance(&url, checkout.commit)));
        }
        let mut versions_seen: Vec<String> = Vec::new();
        for root in &self.roots {
            match self.search(root, name, version)? {
                Found::Module(def) => return Ok(def),
                Found::OtherVersions(v) => versions_seen.extend(v),
                Found::Absent => {}
            }
        }
        if let Some(requested) = version.filter(|_| !versions_seen.is_empty()) {
            return Err(Error::VersionNotFound {
                name: name.to_string(),
                requested: requested.to_string(),
                available: versions_seen.join(", "),
            });
        }
        Err(Error::UnknownModule {
            name: name.to_string(),
            searched: self.roots.iter().map(RegistryRoot::describe).collect(),
        })
    }

    fn search(&self, root: &RegistryRoot, name: &str, version: Option<&str>) -> Result<Found> {
        match root {
            RegistryRoot::Builtin => {
                let Some(scorer) = canonical::lookup(name) else {
                    return Ok(Found::Absent);
                };
                let def = ModuleDef::builtin(scorer);
                match version {
                    Some(v) if v != def.info.version => Ok(Found::OtherVersions(vec![def.info.version])),
                    _ => Ok(Found::Module(def)),
                }
            }
            RegistryRoot::Dir(dir) => search_dir(dir, name, version, None),
            RegistryRoot::Git { url, revision } => {
                let checkout = git::fetch(&self.cache_dir, url, revision.as_deref())?;
                let prov = git_provenance(url, checkout.commit.clone());
                if let Ok(m) = Manifest::read_dir(&checkout.dir) {
                    if m.id == name {
                        return version_match(&checkout.dir, m, version, Some(prov));
                    }
                }
                search_dir(&checkout.dir, name, version, Some(prov))
            }
        }
    }

    /// Declaration of a scalar output named `key`, searching built-ins and directory roots.
    pub fn output_spec(&self, key: &str) -> Option<OutputSpec> {
        for root in &self.roots {
            let found = match root {
                RegistryRoot::Builtin => canonical::all()
                    .into_iter()
                    .find_map(|s| s.info().output(key).cloned()),
                RegistryRoot::Dir(dir) => manifests_in(dir).into_iter().find_map(|m| {
                    m.outputs.iter().find(|o| o.name == key).cloned()
                }),
                RegistryRoot::Git { .. } => None,
            };
            if found.is_some() {
                return found;
            }
        }
        None
    }
}

fn git_provenance(url: &str, commit: String) -> Provenance {
    Provenance { source: format!("git:{url}"), revision: Some(commit) }
}

fn is_path_like(name: &str) -> bool {
    name.starts_with("./") || name.starts_with("../") || name.starts_with('/') || name == "." || name == ".."
}

/// Manifests directly under `dir/<id>/` or `dir/<user>/<id>/`, for output lookups.
fn manifests_in(dir: &Path) -> Vec<Manifest> {
    let mut out = Vec::new();
    let Ok(entries) = std::fs::read_dir(dir) else {
        return out;
    };
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if let Ok(m) = Manifest::read_dir(&p) {
            out.push(m);
        }
    }
    out
}

fn search_dir(root: &Path, name: &str, version: Option<&str>, prov: Option<Provenance>) -> Result<Found> {
    let dir = root.join(name);
    if !dir.is_dir() {
        return Ok(Found::Absent);
    }
    if dir.join(MANIFEST_FILE).exists() {
        let m = Manifest::read_dir(&dir)?;
        return version_match(&dir, m, version, prov);
    }
    // Versioned layout: one subdirectory per version.
    let mut candidates: Vec<(Version, PathBuf)> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(format!("cannot read {}", dir.display()), e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(MANIFEST_FILE).exists())
        .filter_map(|e| Some((Version::parse(e.file_name().to_str()?)?, e.path())))
        .collect();
    candidates.sort_by(|a, b| a.0.cmp(&b.0));
    let chosen = match version {
        Some(v) => {
            let want = Version::parse(v);
            candidates.iter().find(|(cv, _)| Some(cv) == want.as_ref())
        }
        None => candidates.last(),
    };
    match chosen {
        Some((_, path)) => {
            let m = Manifest::read_dir(path)?;
            version_match(path, m, version, prov)
        }
        None if candidates.is_empty() => Ok(Found::Absent),
        None => Ok(Found::OtherVersions(
            candidates.iter().map(|(_, p)| p.file_name().unwrap().to_string_lossy().into_owned()).collect(),
        )),
    }
}

fn version_match(dir: &Path, m: Manifest, version: Option<&str>, prov: Option<Provenance>) -> Result<Found> {
    if let Some(v) = version {
        let same = match (Version::parse(v), Version::parse(&m.version)) {
            (Some(a), Some(b)) => a == b,
            _ => v == m.version,
        };
        if !same {
            return Ok(Found::OtherVersions(vec![m.version]));
        }
    }
    Ok(Found::Module(build_def(dir, m, prov)?))
}

/// Loads the module in `dir`, checking the requested version if any.
pub fn load_dir(dir: &Path, version: Option<&str>, prov: Option<Provenance>) -> Result<ModuleDef> {
    let m = Manifest::read_dir(dir)?;
    match version_match(dir, m, version, prov)? {
        Found::Module(def) => Ok(def),
        Found::OtherVersions(v) => Err(Error::VersionNotFound {
            name: dir.display().to_string(),
            requested: version.unwrap_or_default().to_string(),
            available: v.join(", "),
        }),
        Found::Absent => unreachable!(),
    }
}

fn build_def(dir: &Path, m: Manifest, prov: Option<Provenance>) -> Result<ModuleDef> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let card = std::fs::read_to_string(m.card_path(dir)).ok();
    let violations = validate::check_module(&m, card.as_deref(), Some(dir));
    let (card_errors, manifest_errors): (Vec<&Violation>, Vec<&Violation>) = violations
        .iter()
        .filter(|v| v.severity == Severity::Error)
        .partition(|v| v.code.starts_with("card."));
    if !manifest_errors.is_empty() {
        return Err(Error::InvalidManifest {
            path: manifest_path,
            reason: manifest_errors.iter().map(|v| v.message.clone()).collect::<Vec<_>>().join("; "),
        });
    }
    if !card_errors.is_empty() {
        return Err(Error::CardValidationFailure {
            module: m.id.clone(),
            violations: card_errors.iter().map(|v| v.message.clone()).collect(),
        });
    }
    let implementation = match (&m.implementation.builtin, &m.implementation.command) {
        (Some(sym), None) => Implementation::Builtin(canonical::lookup(sym).expect("checked by validation")),
        (None, Some(argv)) => Implementation::External(ExternalCommand {
            argv: argv.clone(),
            workdir: dir.to_path_buf(),
        }),
        _ => unreachable!("checked by validation"),
    };
    let abs = std::fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf());
    let provenance = prov.unwrap_or_else(|| Provenance {
        source: format!("dir:{}", abs.display()),
        revision: git::head_commit(dir),
    });
    Ok(ModuleDef { info: m.info(), implementation, provenance })
}
