//! Loading runs from disk and writing them back.
//!
//! The canonical on-disk layout is a directory holding `meta.json`,
//! `space.json`, `configs.json` and `trials.jsonl`. Optimizers that are still
//! running append to `trials.jsonl`; [`RunSource::refresh`] tails those
//! appends instead of reparsing the whole log.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::run_model::{
    validate_run, Config, ConfigurationSpace, HpValue, Objective, Run, Trial, TrialStatus,
};

pub const META_FILE: &str = "meta.json";
pub const SPACE_FILE: &str = "space.json";
pub const CONFIGS_FILE: &str = "configs.json";
pub const TRIALS_FILE: &str = "trials.jsonl";

const TABULAR_FILES: [&str; 4] = [META_FILE, SPACE_FILE, CONFIGS_FILE, TRIALS_FILE];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Tabular,
    Unknown,
}

pub fn detect_format(path: &Path) -> Result<Format> {
    let mut present = Vec::new();
    for entry in fs::read_dir(path)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            present.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    if TABULAR_FILES.iter().all(|f| present.iter().any(|p| p == f)) {
        Ok(Format::Tabular)
    } else {
        Ok(Format::Unknown)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaFile {
    name: String,
    optimizer: String,
    objectives: Vec<Objective>,
    budgets: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, file: &str) -> Result<T> {
    let bytes = fs::read(dir.join(file))?;
    serde_json::from_slice(&bytes).map_err(|e| schema_error(file, e.line(), &e))
}

fn schema_error(file: &str, line: usize, err: &serde_json::Error) -> Error {
    let message = err.to_string();
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "-".to_string());
    Error::Schema {
        file: file.to_string(),
        line,
        field,
        message,
    }
}

const REQUIRED_TRIAL_FIELDS: [&str; 5] = ["config_id", "budget", "objectives", "status", "start"];

fn parse_trial_line(line: &str, line_no: usize) -> Result<Trial> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| schema_error(TRIALS_FILE, line_no, &e))?;
    let obj = value.as_object().ok_or_else(|| Error::Schema {
        file: TRIALS_FILE.into(),
        line: line_no,
        field: "-".into(),
        message: "expected a JSON object".into(),
    })?;
    for field in REQUIRED_TRIAL_FIELDS {
        if !obj.contains_key(field) {
            return Err(Error::Schema {
                file: TRIALS_FILE.into(),
                line: line_no,
                field: field.into(),
                message: format!("missing field `{field}`"),
            });
        }
    }
    let mut value = value;
    let obj = value.as_object_mut().expect("checked above");
    obj.entry("seed").or_insert(serde_json::Value::Null);
    obj.entry("end").or_insert(serde_json::Value::Null);
    serde_json::from_value(value).map_err(|e| schema_error(TRIALS_FILE, line_no, &e))
}

/// Parses the complete lines of a trials log chunk. Returns the trials and
/// the number of bytes and lines consumed. An unterminated final line that
/// is still being written is left for the next read.
fn parse_trial_chunk(chunk: &[u8], first_line: usize) -> Result<(Vec<Trial>, usize, usize)> {
    let text = std::str::from_utf8(chunk).map_err(|e| Error::Schema {
        file: TRIALS_FILE.into(),
        line: first_line,
        field: "-".into(),
        message: format!("invalid UTF-8: {e}"),
    })?;
    let mut trials = Vec::new();
    let mut consumed = 0;
    let mut lines = 0;
    let mut rest = text;
    while !rest.is_empty() {
        let line_no = first_line + lines;
        match rest.find('\n') {
            Some(pos) => {
                let line = rest[..pos].trim_end_matches('\r');
                if !line.trim().is_empty() {
                    trials.push(parse_trial_line(line, line_no)?);
                }
                consumed += pos + 1;
                lines += 1;
                rest = &rest[pos + 1..];
            }
            None => {
                if !rest.trim().is_empty() {
                    match serde_json::from_str::<serde_json::Value>(rest) {
                        Err(e) if e.is_eof() => break,
                        _ => trials.push(parse_trial_line(rest, line_no)?),
                    }
                }
                consumed += rest.len();
                lines += 1;
                break;
            }
        }
    }
    Ok((trials, consumed, lines))
}

fn coerce_space(mut space: ConfigurationSpace) -> ConfigurationSpace {
    let snapshot = space.clone();
    for hp in &mut space.hyperparameters {
        hp.default = hp.coerce(hp.default.clone());
        if let Some(cond) = &mut hp.condition {
            if let Some(parent) = snapshot.get(&cond.parent) {
                cond.values = cond.values.drain(..).map(|v| parent.coerce(v)).collect();
            }
        }
    }
    space
}

fn coerce_config(space: &ConfigurationSpace, config: Config) -> Config {
    config
        .into_iter()
        .map(|(k, v)| {
            let v = match space.get(&k) {
                Some(hp) => hp.coerce(v),
                None => v,
            };
            (k, v)
        })
        .collect()
}

struct Parts {
    name: String,
    objectives: Vec<Objective>,
    budgets: Vec<f64>,
    meta: BTreeMap<String, String>,
    space: ConfigurationSpace,
}

fn read_parts(dir: &Path) -> Result<Parts> {
    let meta: MetaFile = read_json(dir, META_FILE)?;
    let space: ConfigurationSpace = read_json(dir, SPACE_FILE)?;
    let mut extra = meta.meta;
    if !meta.optimizer.is_empty() {
        extra.insert("optimizer".into(), meta.optimizer);
    }
    Ok(Parts {
        name: meta.name,
        objectives: meta.objectives,
        budgets: meta.budgets,
        meta: extra,
        space: coerce_space(space),
    })
}

fn read_configs(dir: &Path, space: &ConfigurationSpace) -> Result<BTreeMap<String, Config>> {
    let raw: BTreeMap<String, Config> = read_json(dir, CONFIGS_FILE)?;
    Ok(raw
        .into_iter()
        .map(|(id, c)| (id, coerce_config(space, c)))
        .collect())
}

fn assemble(parts: Parts, configs: BTreeMap<String, Config>, trials: Vec<Trial>) -> Result<Run> {
    Run::validated(
        parts.name,
        parts.space,
        parts.objectives,
        parts.budgets,
        configs,
        trials,
        parts.meta,
    )
}

/// Loads a run in the canonical tabular format.
pub fn load_tabular(path: &Path) -> Result<Run> {
    load_with_offsets(path).map(|(run, _, _)| run)
}

fn load_with_offsets(path: &Path) -> Result<(Run, usize, usize)> {
    let parts = read_parts(path)?;
    let configs = read_configs(path, &parts.space)?;
    let bytes = fs::read(path.join(TRIALS_FILE))?;
    let (trials, consumed, lines) = parse_trial_chunk(&bytes, 1)?;
    Ok((assemble(parts, configs, trials)?, consumed, lines))
}

/// Writes `run` in the canonical tabular format, creating `path` if needed.
pub fn write_tabular(run: &Run, path: &Path) -> Result<()> {
    let violations = validate_run(run);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    fs::create_dir_all(path)?;
    let mut extra = run.meta().clone();
    let optimizer = extra.remove("optimizer").unwrap_or_default();
    let meta = MetaFile {
        name: run.name().to_string(),
        optimizer,
        objectives: run.objectives().to_vec(),
        budgets: run.budgets().to_vec(),
        meta: extra,
    };
    write_pretty(&path.join(META_FILE), &meta)?;
    write_pretty(&path.join(SPACE_FILE), run.space())?;
    write_pretty(&path.join(CONFIGS_FILE), run.configs())?;
    let mut lines = String::new();
    for t in run.trials() {
        lines.push_str(&serde_json::to_string(t).expect("trial serializes"));
        lines.push('\n');
    }
    fs::write(path.join(TRIALS_FILE), lines)?;
    Ok(())
}

fn write_pretty<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileStamp {
    pub size: u64,
    pub modified: Option<SystemTime>,
}

fn stamp(path: &Path) -> Result<FileStamp> {
    let md = fs::metadata(path)?;
    Ok(FileStamp {
        size: md.len(),
        modified: md.modified().ok(),
    })
}

/// A run directory being tracked for changes.
#[derive(Debug, Clone)]
pub struct RunSource {
    pub path: PathBuf,
    pub format: Format,
    /// Stamps of the files as of the last read.
    pub watermark: HashMap<String, FileStamp>,
    trials_offset: usize,
    trials_lines: usize,
}

impl RunSource {
    /// Opens a tabular run directory and performs the initial load.
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Run)> {
        let path = path.into();
        let format = detect_format(&path)?;
        if format != Format::Tabular {
            return Err(Error::InvalidInput(format!(
                "{} is not a run directory in a known format",
                path.display()
            )));
        }
        let mut source = Self {
            path,
            format,
            watermark: HashMap::new(),
            trials_offset: 0,
            trials_lines: 0,
        };
        let run = source.full_reload()?;
        Ok((source, run))
    }

    fn stamps(&self) -> Result<HashMap<String, FileStamp>> {
        TABULAR_FILES
            .iter()
            .map(|f| Ok((f.to_string(), stamp(&self.path.join(f))?)))
            .collect()
    }

    fn full_reload(&mut self) -> Result<Run> {
        let before = self.stamps()?;
        let (run, consumed, lines) = load_with_offsets(&self.path)?;
        self.watermark = before;
        self.watermark.insert(
            TRIALS_FILE.into(),
            FileStamp {
                size: consumed as u64,
                ..self.watermark[TRIALS_FILE]
            },
        );
        self.trials_offset = consumed;
        self.trials_lines = lines;
        Ok(run)
    }

    /// Picks up changes made on disk since the last read. Appended trial
    /// lines are parsed incrementally; any other change to the trial log, or
    /// a change to the meta or space files, triggers a full reload.
    pub fn refresh(&mut self, previous: &Arc<Run>) -> Result<(Arc<Run>, bool)> {
        let now = self.stamps()?;
        let unchanged = |f: &str| self.watermark.get(f) == now.get(f);
        let trials_now = now[TRIALS_FILE];
        let offset = self.trials_offset as u64;
        let trials_touched = self
            .watermark
            .get(TRIALS_FILE)
            .map_or(true, |t| t.modified != trials_now.modified);

        let run = if !unchanged(META_FILE) || !unchanged(SPACE_FILE) || trials_now.size < offset {
            self.full_reload()?
        } else if trials_now.size == offset && !unchanged(CONFIGS_FILE) {
            self.append(previous, now)?
        } else if trials_now.size == offset {
            if !trials_touched {
                return Ok((previous.clone(), false));
            }
            // same length but rewritten
            self.full_reload()?
        } else {
            self.append(previous, now)?
        };
        if run == **previous {
            Ok((previous.clone(), false))
        } else {
            Ok((Arc::new(run), true))
        }
    }

    fn append(&mut self, previous: &Run, now: HashMap<String, FileStamp>) -> Result<Run> {
        let mut file = fs::File::open(self.path.join(TRIALS_FILE))?;
        file.seek(SeekFrom::Start(self.trials_offset as u64))?;
        let mut chunk = Vec::new();
        file.read_to_end(&mut chunk)?;
        let (new_trials, consumed, lines) = parse_trial_chunk(&chunk, self.trials_lines + 1)?;

        let configs = if self.watermark.get(CONFIGS_FILE) != now.get(CONFIGS_FILE) {
            read_configs(&self.path, previous.space())?
        } else {
            previous.configs().clone()
        };
        let mut trials = previous.trials().to_vec();
        trials.extend(new_trials);
        let run = Run::new(
            previous.name(),
            previous.space().clone(),
            previous.objectives().to_vec(),
            previous.budgets().to_vec(),
            configs,
            trials,
            previous.meta().clone(),
        );
        if !validate_run(&run).is_empty() {
            // configs were rewritten non-additively, or the log is broken
            return self.full_reload();
        }
        self.trials_offset += consumed;
        self.trials_lines += lines;
        let trials_stamp = FileStamp {
            size: self.trials_offset as u64,
            ..now[TRIALS_FILE]
        };
        self.watermark = now;
        self.watermark.insert(TRIALS_FILE.into(), trials_stamp);
        Ok(run)
    }
}

/// A trial supplied through the programmatic interface, carrying its
/// configuration inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: Config,
    pub budget: f64,
    pub seed: Option<i64>,
    pub objectives: BTreeMap<String, Option<f64>>,
    pub status: TrialStatus,
    pub start: f64,
    pub end: Option<f64>,
}

/// Builds a run from in-memory records. Configurations are deduplicated by
/// value and named `c1`, `c2`, ... in first-seen order.
pub fn ingest_records(
    name: &str,
    space: ConfigurationSpace,
    objectives: Vec<Objective>,
    budgets: Vec<f64>,
    records: Vec<TrialRecord>,
) -> Result<Run> {
    let space = coerce_space(space);
    let mut ids: HashMap<String, String> = HashMap::new();
    let mut configs = BTreeMap::new();
    let mut trials = Vec::with_capacity(records.len());
    for (index, record) in records.into_iter().enumerate() {
        let config = coerce_config(&space, record.config);
        check_record_config(&space, &config)
            .map_err(|e| Error::InvalidInput(format!("record {index}: {e}")))?;
        let key = config_key(&config);
        let next = ids.len() + 1;
        let id = ids.entry(key).or_insert_with(|| format!("c{next}")).clone();
        configs.entry(id.clone()).or_insert(config);
        trials.push(Trial {
            config_id: id,
            budget: record.budget,
            seed: record.seed,
            objectives: record.objectives,
            status: record.status,
            start: record.start,
            end: record.end,
        });
    }
    Run::validated(name, space, objectives, budgets, configs, trials, BTreeMap::new())
}

fn config_key(config: &Config) -> String {
    config
        .iter()
        .map(|(k, v)| format!("{k}={}", v.canonical_key()))
        .collect::<Vec<_>>()
        .join("\u{1f}")
}

fn check_record_config(space: &ConfigurationSpace, config: &Config) -> std::result::Result<(), String> {
    for key in config.keys() {
        if space.get(key).is_none() {
            return Err(format!("unknown hyperparameter `{key}`"));
        }
    }
    for hp in space.iter() {
        let active = space.is_active(&hp.name, config);
        match (config.get(&hp.name), active) {
            (Some(v), true) => hp
                .check_value(v)
                .map_err(|e| format!("hyperparameter `{}`: {e}", hp.name))?,
            (Some(_), false) => {
                return Err(format!("hyperparameter `{}` is inactive", hp.name));
            }
            (None, true) => return Err(format!("hyperparameter `{}` is missing", hp.name)),
            (None, false) => {}
        }
    }
    Ok(())
}

/// Value of a hyperparameter in JSON-friendly form, used by payloads.
pub fn value_to_json(v: &HpValue) -> serde_json::Value {
    serde_json::to_value(v).expect("value serializes")
}
