//! File-backed run storage.
//!
//! Each run lives in `<data_dir>/runs/<run_id>/`:
//!
//! * `events.jsonl`: a header line, then one engine event per line, appended
//!   under the engine lock as events happen. This file is authoritative.
//! * `transcript.json`: a snapshot of the full transcript, rewritten at
//!   iteration boundaries and on completion.
//!
//! Header line:
//!
//! ```json
//! {"schema":"hybrid-opinion/log/v1","run_id":"...","idempotency_key":null,
//!  "config":{...},"question":"...","seed_layout":{...}}
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use opinion_core::engine::EventSink;
use opinion_core::{Event, RunConfig, RunState, SeedLayout, Transcript};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LOG_SCHEMA: &str = "hybrid-opinion/log/v1";
const EVENTS_FILE: &str = "events.jsonl";
const TRANSCRIPT_FILE: &str = "transcript.json";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported log schema {schema:?}")]
    Schema { path: PathBuf, schema: String },
    #[error("{path}: empty log")]
    Empty { path: PathBuf },
    #[error("{path}: replay failed: {source}")]
    Replay {
        path: PathBuf,
        #[source]
        source: opinion_core::EngineError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub run_id: String,
    #[serde(default)]
    pub idempotency_key: Option<String>,
    pub config: RunConfig,
    pub question: String,
    pub seed_layout: SeedLayout,
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        RunStore {
            root: data_dir.into().join("runs"),
        }
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id)
    }

    pub fn transcript_path(&self, run_id: &str) -> PathBuf {
        self.run_dir(run_id).join(TRANSCRIPT_FILE)
    }

    /// Creates the run directory and writes the log header plus any events
    /// already in `state`. Returns a sink for subsequent events.
    pub fn create(
        &self,
        run_id: &str,
        idempotency_key: Option<String>,
        state: &RunState,
    ) -> Result<FileSink, PersistError> {
        let dir = self.run_dir(run_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(EVENTS_FILE);
        let header = LogHeader {
            schema: LOG_SCHEMA.to_string(),
            run_id: run_id.to_string(),
            idempotency_key,
            config: state.config().clone(),
            question: state.question().to_string(),
            seed_layout: state.seed_layout().clone(),
        };
        let file = OpenOptions::new()
            .create_new(true)
            .write(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let mut sink = FileSink {
            out: BufWriter::new(file),
            path,
        };
        sink.write_line(&header)?;
        sink.append(state.events()).map_err(io_err(&sink.path.clone()))?;
        Ok(sink)
    }

    /// Every run directory that has an event log.
    pub fn list(&self) -> Result<Vec<String>, PersistError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            if entry.path().join(EVENTS_FILE).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Reads a run log and replays it. Returns the header, the rebuilt state
    /// and a sink positioned to append further events.
    pub fn open(&self, run_id: &str) -> Result<(LogHeader, RunState, FileSink), PersistError> {
        let path = self.run_dir(run_id).join(EVENTS_FILE);
        let (header, events) = read_log(&path)?;
        let state = RunState::replay(
            header.config.clone(),
            header.question.clone(),
            header.seed_layout.clone(),
            &events,
        )
        .map_err(|source| PersistError::Replay {
            path: path.clone(),
            source,
        })?;
        // drop any torn tail so appends start on a fresh line
        rewrite_if_torn(&path, &header, &events)?;
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok((
            header,
            state,
            FileSink {
                out: BufWriter::new(file),
                path,
            },
        ))
    }

    pub fn write_transcript(&self, transcript: &Transcript) -> Result<PathBuf, PersistError> {
        let path = self.transcript_path(&transcript.run_id);
        write_atomic(&path, transcript.to_json().as_bytes())?;
        Ok(path)
    }
}

/// Parses a log file. A final line that fails to parse is treated as a
/// write cut short by a crash and ignored; a bad line elsewhere is an error.
pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<Event>), PersistError> {
    let file = File::open(path).map_err(io_err(path))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err(path))?;
    let lines: Vec<(usize, &String)> = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();
    let Some(&(_, first)) = lines.first() else {
        return Err(PersistError::Empty {
            path: path.to_path_buf(),
        });
    };
    let header: LogHeader = serde_json::from_str(first).map_err(|source| PersistError::Parse {
        path: path.to_path_buf(),
        line: 1,
        source,
    })?;
    if header.schema != LOG_SCHEMA {
        return Err(PersistError::Schema {
            path: path.to_path_buf(),
            schema: header.schema,
        });
    }
    let mut events = Vec::with_capacity(lines.len());
    let last = lines.len() - 1;
    for (k, &(i, line)) in lines.iter().enumerate().skip(1) {
        match serde_json::from_str::<Event>(line) {
            Ok(e) => events.push(e),
            Err(_) if k == last => {
                tracing::warn!(path = %path.display(), line = i + 1, "ignoring torn final log line");
            }
            Err(source) => {
                return Err(PersistError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    source,
                })
            }
        }
    }
    Ok((header, events))
}

fn rewrite_if_torn(path: &Path, header: &LogHeader, events: &[Event]) -> Result<(), PersistError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let complete = text.ends_with('\n') && text.lines().filter(|l| !l.trim().is_empty()).count() == events.len() + 1;
    if complete {
        return Ok(());
    }
    let mut body = serde_json::to_string(header).expect("header serializes");
    body.push('\n');
    for e in events {
        body.push_str(&serde_json::to_string(e).expect("event serializes"));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PersistError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Appends events as JSON lines and flushes after every batch.
#[derive(Debug)]
pub struct FileSink {
    out: BufWriter<File>,
    path: PathBuf,
}

impl FileSink {
    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_line<T: Serialize>(&mut self, value: &T) -> Result<(), PersistError> {
        let path = self.path.clone();
        serde_json::to_writer(&mut self.out, value)
            .map_err(|e| PersistError::Io {
                path: path.clone(),
                source: e.into(),
            })?;
        self.out.write_all(b"\n").map_err(io_err(&path))?;
        self.out.flush().map_err(io_err(&path))
    }
}

impl EventSink for FileSink {
    fn append(&mut self, events: &[Event]) -> std::io::Result<()> {
        for e in events {
            serde_json::to_writer(&mut self.out, e)?;
            self.out.write_all(b"\n")?;
        }
        self.out.flush()?;
        self.out.get_ref().sync_data()
    }
}
