//! Artifact files. Every file starts with the tool version and the SHA-256
//! of the config text.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const TOOL: &str = "nvortex";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub command: &'static str,
}

pub struct Artifacts {
    dir: PathBuf,
    pub header: Header,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, config_sha256: &str, command: &'static str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: Header {
                tool: TOOL,
                version: VERSION,
                config_sha256: config_sha256.to_string(),
                command,
            },
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Io(path.clone(), e))?;
        self.written.push(path.clone());
        Ok((path, BufWriter::new(f)))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            header: &'a Header,
            report: &'a T,
        }
        let header = self.header.clone();
        let (path, mut w) = self.create(name)?;
        serde_json::to_writer_pretty(
            &mut w,
            &Doc {
                header: &header,
                report,
            },
        )
        .map_err(|e| CliError::Io(path.clone(), e.into()))?;
        writeln!(w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Io(path, e))
    }

    /// CSV file whose body is produced by `body` after the comment preamble.
    /// `extra` lines are written as further comments.
    pub fn csv<F>(&mut self, name: &str, extra: &[String], body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let h = self.header.clone();
        let (path, mut w) = self.create(name)?;
        let io = (|| {
            writeln!(w, "# {} {}", h.tool, h.version)?;
            writeln!(w, "# config_sha256 {}", h.config_sha256)?;
            writeln!(w, "# command {}", h.command)?;
            for line in extra {
                writeln!(w, "# {line}")?;
            }
            body(&mut w)?;
            w.flush()
        })();
        io.map_err(|e| CliError::Io(path, e))
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let (path, mut w) = self.create(name)?;
        w.write_all(contents.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Io(path, e))
    }
}
