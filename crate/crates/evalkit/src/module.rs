//! Stateful evaluation modules: buffered inputs plus a scoring implementation.
//!
//! A module accepts rows incrementally through [`Evaluate::add`] and
//! [`Evaluate::add_batch`], then [`Evaluate::compute`] scores everything
//! buffered so far (plus an optional final batch) and clears the buffer.
//! [`CombinedModule`] bundles modules sharing one input schema behind the
//! same interface.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use evalkit_core::module::check_combinable;
use evalkit_core::params::resolve;
use evalkit_core::{
    combine_scores, Batch, CoreError, FeatureSchema, ModuleInfo, ModuleResult, ParamValue, Params,
    Provenance, Scorer, Scores,
};
use serde_json::{json, Value};

use crate::accumulator::{BufferConfig, ColumnarBuffer};
use crate::error::{Error, Result};
use crate::jsonio;

/// Line protocol spoken with external module processes.
pub const MODULE_PROTOCOL: &str = "evalkit-module/1";

/// A module implemented by a child process.
///
/// The host writes a handshake line, one `{"row": {...}}` line per row and a
/// final `{"end": true}`, then closes stdin. The process answers with a single
/// `{"scores": {...}}` or `{"error": "..."}` line and exits 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCommand {
    pub argv: Vec<String>,
    pub workdir: PathBuf,
}

impl ExternalCommand {
    fn run(&self, info: &ModuleInfo, batch: &Batch, params: &Params) -> Result<Scores> {
        let fail = |reason: String| Error::ExternalModule { module: info.id.clone(), reason };
        let (program, args) = self.argv.split_first().ok_or_else(|| fail("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .current_dir(&self.workdir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| fail(format!("cannot start `{program}`: {e}")))?;

        let mut input = Vec::new();
        let handshake = json!({
            "protocol": MODULE_PROTOCOL,
            "module": info.id,
            "version": info.version,
            "parameters": params,
            "features": info.features,
            "rows": batch.num_rows(),
        });
        writeln!(input, "{handshake}").unwrap();
        for i in 0..batch.num_rows() {
            writeln!(input, "{}", json!({ "row": jsonio::row_object(batch, i) })).unwrap();
        }
        writeln!(input, "{}", json!({ "end": true })).unwrap();

        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&input));
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let mut lines = Vec::new();
        for line in BufReader::new(child.stdout.take().expect("piped stdout")).lines() {
            let line = line.map_err(|e| fail(format!("reading output: {e}")))?;
            if !line.trim().is_empty() {
                lines.push(line);
            }
        }
        let status = child.wait().map_err(|e| fail(e.to_string()))?;
        let _ = writer.join();
        let stderr = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(fail(format!("exited with {status}; stderr: {}", stderr.trim())));
        }
        let last = lines.last().ok_or_else(|| fail("produced no output".into()))?;
        let reply: Value =
            serde_json::from_str(last).map_err(|e| fail(format!("malformed reply `{last}`: {e}")))?;
        if let Some(msg) = reply.get("error") {
            return Err(fail(msg.as_str().map_or_else(|| msg.to_string(), str::to_string)));
        }
        let scores = reply.get("scores").cloned().ok_or_else(|| fail(format!("reply lacks `scores`: {last}")))?;
        jsonio::scores_from_json(scores).map_err(fail)
    }
}

pub enum Implementation {
    Builtin(Box<dyn Scorer>),
    External(ExternalCommand),
}

impl std::fmt::Debug for Implementation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Implementation::Builtin(s) => write!(f, "Builtin({})", s.info().id),
            Implementation::External(c) => write!(f, "External({:?})", c.argv),
        }
    }
}

/// Identity and implementation of a module, without any buffered state.
#[derive(Debug)]
pub struct ModuleDef {
    pub info: ModuleInfo,
    pub implementation: Implementation,
    pub provenance: Provenance,
}

impl ModuleDef {
    pub fn builtin(scorer: Box<dyn Scorer>) -> Self {
        ModuleDef {
            info: scorer.info(),
            implementation: Implementation::Builtin(scorer),
            provenance: Provenance { source: "builtin".into(), revision: None },
        }
    }

    /// Scores a conformed batch with resolved parameters and checks the output shape.
    pub fn score_resolved(&self, batch: &Batch, params: &Params) -> Result<Scores> {
        let scores = match &self.implementation {
            Implementation::Builtin(s) => s.score(batch, params)?,
            Implementation::External(cmd) => cmd.run(&self.info, batch, params)?,
        };
        self.info.check_scores(&scores)?;
        Ok(scores)
    }

    /// Scores `batch` without touching any buffer; `overrides` are resolved against defaults.
    pub fn score(&self, batch: Batch, overrides: &Params) -> Result<Scores> {
        let params = resolve(&self.info.parameters, overrides)?;
        let batch = batch.conform(&self.info.features)?;
        if batch.num_rows() == 0 {
            return Err(CoreError::EmptyInput.into());
        }
        self.score_resolved(&batch, &params)
    }

    fn result(&self, values: Scores, params: Params) -> ModuleResult {
        ModuleResult {
            module_id: self.info.id.clone(),
            module_version: self.info.version.clone(),
            values,
            seed: seed_of(&params),
            parameters_used: params,
            provenance: Some(self.provenance.clone()),
        }
    }
}

fn seed_of(params: &Params) -> Option<u64> {
    match params.get("seed") {
        Some(ParamValue::Int(s)) => u64::try_from(*s).ok(),
        _ => None,
    }
}

/// Options for [`Evaluate::compute`].
#[derive(Debug, Clone, Default)]
pub struct ComputeOptions {
    /// Rows appended before scoring.
    pub batch: Option<Batch>,
    /// Parameter overrides; unknown names are rejected.
    pub params: Params,
    /// Keep the buffered rows instead of clearing them after a successful compute.
    pub snapshot: bool,
}

impl ComputeOptions {
    pub fn new() -> Self {
        ComputeOptions::default()
    }

    pub fn batch(mut self, batch: Batch) -> Self {
        self.batch = Some(batch);
        self
    }

    pub fn param(mut self, name: &str, value: impl Into<ParamValue>) -> Self {
        self.params.insert(name.to_string(), value.into());
        self
    }

    pub fn snapshot(mut self) -> Self {
        self.snapshot = true;
        self
    }
}

/// The incremental evaluation interface shared by single and combined modules.
pub trait Evaluate {
    fn features(&self) -> &FeatureSchema;

    /// Rows buffered and not yet computed.
    fn pending_rows(&self) -> usize;

    fn add_batch(&mut self, batch: Batch) -> Result<()>;

    fn compute(&mut self, options: ComputeOptions) -> Result<ModuleResult>;

    /// Appends one row given as a JSON object keyed by column name.
    fn add(&mut self, row: &Value) -> Result<()> {
        let obj = row.as_object().ok_or_else(|| {
            CoreError::SchemaMismatch("a row must be a JSON object keyed by column name".into())
        })?;
        let batch = jsonio::batch_from_rows(self.features(), std::slice::from_ref(obj))
            .map_err(CoreError::SchemaMismatch)?;
        if obj.len() != self.features().len() {
            return Err(CoreError::SchemaMismatch(format!(
                "row has {} columns, expected {}",
                obj.len(),
                self.features()
            ))
            .into());
        }
        self.add_batch(batch)
    }
}

/// A single module with its input buffer.
#[derive(Debug)]
pub struct EvaluationModule {
    def: ModuleDef,
    buffer: ColumnarBuffer,
}

impl EvaluationModule {
    pub fn new(def: ModuleDef, config: BufferConfig) -> Self {
        let buffer = ColumnarBuffer::new(def.info.features.clone(), config);
        EvaluationModule { def, buffer }
    }

    pub fn info(&self) -> &ModuleInfo {
        &self.def.info
    }

    pub fn def(&self) -> &ModuleDef {
        &self.def
    }

    pub fn provenance(&self) -> &Provenance {
        &self.def.provenance
    }

    pub fn buffer(&self) -> &ColumnarBuffer {
        &self.buffer
    }

    pub fn into_def(self) -> ModuleDef {
        self.def
    }
}

impl Evaluate for EvaluationModule {
    fn features(&self) -> &FeatureSchema {
        &self.def.info.features
    }

    fn pending_rows(&self) -> usize {
        self.buffer.len()
    }

    fn add_batch(&mut self, batch: Batch) -> Result<()> {
        self.buffer.append(batch)
    }

    fn compute(&mut self, options: ComputeOptions) -> Result<ModuleResult> {
        let params = resolve(&self.def.info.parameters, &options.params)?;
        if let Some(b) = options.batch {
            self.add_batch(b)?;
        }
        if self.buffer.is_empty() {
            return Err(CoreError::EmptyInput.into());
        }
        let batch = self.buffer.materialize()?;
        let values = self.def.score_resolved(&batch, &params)?;
        if !options.snapshot {
            self.buffer.reset();
        }
        Ok(self.def.result(values, params))
    }
}

/// Several modules over one shared input buffer.
///
/// Scores are merged with colliding keys prefixed by `<module_id>_`.
/// Parameter overrides named `<module_id>.<param>` target one member; a bare
/// `<param>` applies to every member declaring it.
#[derive(Debug)]
pub struct CombinedModule {
    members: Vec<ModuleDef>,
    buffer: ColumnarBuffer,
}

impl CombinedModule {
    pub fn new(members: Vec<ModuleDef>, config: BufferConfig) -> Result<Self> {
        let infos: Vec<ModuleInfo> = members.iter().map(|m| m.info.clone()).collect();
        check_combinable(&infos)?;
        let buffer = ColumnarBuffer::new(infos[0].features.clone(), config);
        Ok(CombinedModule { members, buffer })
    }

    pub fn members(&self) -> impl Iterator<Item = &ModuleInfo> {
        self.members.iter().map(|m| &m.info)
    }

    pub fn id(&self) -> String {
        self.members.iter().map(|m| m.info.id.as_str()).collect::<Vec<_>>().join("+")
    }

    fn split_params(&self, overrides: &Params) -> Result<Vec<Params>> {
        let mut per: Vec<Params> = vec![Params::new(); self.members.len()];
        for (key, value) in overrides {
            let mut used = false;
            for (m, p) in self.members.iter().zip(per.iter_mut()) {
                let local = match key.split_once('.') {
                    Some((id, name)) if id == m.info.id => name,
                    Some(_) => continue,
                    None => key.as_str(),
                };
                if m.info.parameters.contains_key(local) || key.contains('.') {
                    p.insert(local.to_string(), value.clone());
                    used = true;
                }
            }
            if !used {
                return Err(CoreError::InvalidParameter {
                    name: key.clone(),
                    reason: format!("no member of `{}` declares this parameter", self.id()),
                }
                .into());
            }
        }
        Ok(per)
    }
}

impl Evaluate for CombinedModule {
    fn features(&self) -> &FeatureSchema {
        self.buffer.schema()
    }

    fn pending_rows(&self) -> usize {
        self.buffer.len()
    }

    fn add_batch(&mut self, batch: Batch) -> Result<()> {
        self.buffer.append(batch)
    }

    fn compute(&mut self, options: ComputeOptions) -> Result<ModuleResult> {
        let mut resolved = Vec::with_capacity(self.members.len());
        for (m, p) in self.members.iter().zip(self.split_params(&options.params)?) {
            resolved.push(resolve(&m.info.parameters, &p)?);
        }
        if let Some(b) = options.batch {
            self.add_batch(b)?;
        }
        if self.buffer.is_empty() {
            return Err(CoreError::EmptyInput.into());
        }
        let batch = self.buffer.materialize()?;
        let mut all = Vec::with_capacity(self.members.len());
        for (m, params) in self.members.iter().zip(&resolved) {
            all.push(m.score_resolved(&batch, params)?);
        }
        if !options.snapshot {
            self.buffer.reset();
        }
        let pairs: Vec<(&str, &Scores)> =
            self.members.iter().zip(&all).map(|(m, s)| (m.info.id.as_str(), s)).collect();
        let mut parameters_used = Params::new();
        for (m, params) in self.members.iter().zip(&resolved) {
            for (k, v) in params {
                parameters_used.insert(format!("{}.{k}", m.info.id), v.clone());
            }
        }
        Ok(ModuleResult {
            module_id: self.id(),
            module_version: self
                .members
                .iter()
                .map(|m| m.info.version.as_str())
                .collect::<Vec<_>>()
                .join("+"),
            values: combine_scores(&pairs),
            seed: resolved.iter().find_map(seed_of),
            parameters_used,
            provenance: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use evalkit_core::canonical;
    use evalkit_core::ScoreValue;

    fn module(id: &str) -> EvaluationModule {
        EvaluationModule::new(ModuleDef::builtin(canonical::lookup(id).unwrap()), BufferConfig::default())
    }

    fn pr(p: Vec<i64>, r: Vec<i64>) -> Batch {
        Batch::new().with("predictions", p).with("references", r)
    }

    #[test]
    fn incremental_matches_one_shot() {
        let mut m = module("accuracy");
        m.add_batch(pr(vec![1, 0], vec![1, 1])).unwrap();
        m.add(&json!({"predictions": 0, "references": 0})).unwrap();
        let inc = m.compute(ComputeOptions::new().batch(pr(vec![1], vec![0]))).unwrap();
        let one = module("accuracy")
            .compute(ComputeOptions::new().batch(pr(vec![1, 0, 0, 1], vec![1, 1, 0, 0])))
            .unwrap();
        assert_eq!(inc.values, one.values);
        assert_eq!(inc.scalar("accuracy"), Some(0.5));
    }

    #[test]
    fn compute_clears_unless_snapshot() {
        let mut m = module("accuracy");
        m.add_batch(pr(vec![1], vec![1])).unwrap();
        m.compute(ComputeOptions::new().snapshot()).unwrap();
        assert_eq!(m.pending_rows(), 1);
        m.compute(ComputeOptions::new()).unwrap();
        assert_eq!(m.pending_rows(), 0);
        assert!(matches!(m.compute(ComputeOptions::new()), Err(Error::Core(CoreError::EmptyInput))));
    }

    #[test]
    fn failed_compute_keeps_rows() {
        let mut m = module("f1");
        m.add_batch(pr(vec![1], vec![1])).unwrap();
        let err = m.compute(ComputeOptions::new().param("average", "harmonic"));
        assert!(err.is_err());
        assert_eq!(m.pending_rows(), 1);
        assert!(m.compute(ComputeOptions::new().param("bogus", 1i64)).is_err());
    }

    #[test]
    fn result_records_parameters_and_provenance() {
        let mut m = module("f1");
        let r = m
            .compute(ComputeOptions::new().batch(pr(vec![1, 2], vec![1, 2])).param("average", "macro"))
            .unwrap();
        assert_eq!(r.parameters_used["average"], ParamValue::Str("macro".into()));
        assert_eq!(r.provenance.unwrap().source, "builtin");
        assert_eq!(r.module_version, "1.0.0");
    }

    #[test]
    fn add_rejects_bad_rows() {
        let mut m = module("accuracy");
        assert!(m.add(&json!({"predictions": 1})).is_err());
        assert!(m.add(&json!({"predictions": 1, "references": 1, "x": 2})).is_err());
        assert!(m.add(&json!([1, 1])).is_err());
        assert_eq!(m.pending_rows(), 0);
    }

    #[test]
    fn combined_scores_and_prefixes() {
        let defs = vec![
            ModuleDef::builtin(canonical::lookup("accuracy").unwrap()),
            ModuleDef::builtin(canonical::lookup("f1").unwrap()),
        ];
        let mut c = CombinedModule::new(defs, BufferConfig::default()).unwrap();
        c.add_batch(pr(vec![1, 0, 1], vec![1, 1, 1])).unwrap();
        let r = c.compute(ComputeOptions::new().param("f1.average", "macro")).unwrap();
        assert_eq!(r.module_id, "accuracy+f1");
        assert_eq!(r.values["accuracy"], ScoreValue::Scalar(2.0 / 3.0));
        assert!(r.values.contains_key("f1"));
        assert_eq!(r.parameters_used["f1.average"], ParamValue::Str("macro".into()));
        assert!(c.compute(ComputeOptions::new().param("nope", 1i64)).is_err());
    }

    #[test]
    fn combine_rejects_mismatched_schemas() {
        let defs = vec![
            ModuleDef::builtin(canonical::lookup("accuracy").unwrap()),
            ModuleDef::builtin(canonical::lookup("bleu").unwrap()),
        ];
        assert!(matches!(
            CombinedModule::new(defs, BufferConfig::default()),
            Err(Error::Core(CoreError::IncompatibleSchemas(_)))
        ));
    }
}
