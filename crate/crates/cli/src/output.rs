//! Output files, their manifests and element parsing.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nilflow_core::ExtensionSpec;
use serde::Serialize;
use serde_json::Value;

/// Sidecar record written next to every output file.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub spec_sha256: Option<String>,
    pub seed: Option<u64>,
    pub config: Value,
    pub tool_version: String,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Manifest {
            command: command.into(),
            args,
            spec_sha256: None,
            seed: None,
            config: Value::Null,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn spec(&mut self, spec: &ExtensionSpec) {
        self.spec_sha256 = Some(spec.hash_hex());
    }

    /// Flushes the output and, for file outputs, writes the manifest.
    pub fn finish(mut self, sink: Sink, start: Instant) -> Result<()> {
        let path = sink.close()?;
        let Some(path) = path else {
            return Ok(());
        };
        self.wall_time_seconds = start.elapsed().as_secs_f64();
        self.outputs = vec![path.display().to_string()];
        let target = manifest_path(&path);
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(&target, text).with_context(|| format!("writing {}", target.display()))
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Destination of a command's primary output: a file or stdout.
pub struct Sink {
    path: Option<PathBuf>,
    writer: Box<dyn Write>,
}

impl Sink {
    pub fn new(out: Option<&str>) -> Result<Self> {
        match out {
            Some(p) => {
                let path = PathBuf::from(p);
                let file = File::create(&path).with_context(|| format!("creating {p}"))?;
                Ok(Sink {
                    path: Some(path),
                    writer: Box::new(BufWriter::new(file)),
                })
            }
            None => Ok(Sink {
                path: None,
                writer: Box::new(BufWriter::new(io::stdout())),
            }),
        }
    }

    /// File name of the sidecar manifest, if there is one.
    pub fn manifest_label(&self) -> Option<String> {
        let path = self.path.as_ref()?;
        manifest_path(path)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
    }

    pub fn write_json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer_pretty(&mut self.writer, value)?;
        self.writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.writer, "{line}")?;
        Ok(())
    }

    /// Endpoint CSV: one provenance comment line, a header, then rows.
    pub fn csv(&mut self, spec: &ExtensionSpec, seed: u64) -> Result<EndpointCsv<'_>> {
        let manifest = self.manifest_label().unwrap_or_else(|| "-".into());
        writeln!(
            self.writer,
            "# nilflow spec_sha256={} seed={seed} manifest={manifest}",
            spec.hash_hex()
        )?;
        let mut writer = csv::Writer::from_writer(&mut self.writer);
        let header: Vec<String> = std::iter::once("trial".to_string())
            .chain((1..=spec.m()).map(|i| format!("w{i}")))
            .chain((1..=spec.n()).map(|i| format!("v{i}")))
            .collect();
        writer.write_record(&header)?;
        Ok(EndpointCsv { writer })
    }

    fn close(mut self) -> Result<Option<PathBuf>> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

pub struct EndpointCsv<'a> {
    writer: csv::Writer<&'a mut Box<dyn Write>>,
}

impl EndpointCsv<'_> {
    pub fn row(&mut self, trial: usize, coords: &[f64]) -> Result<()> {
        self.writer.write_field(trial.to_string())?;
        for x in coords {
            self.writer.write_field(format_float(*x))?;
        }
        self.writer.write_record(None::<&[u8]>)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

pub fn format_vector(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format_float(*x))
        .collect::<Vec<_>>()
        .join(",")
}

/// Comma-separated decimals, W part then v part.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for field in text.split(',') {
        let x: f64 = field
            .trim()
            .parse()
            .with_context(|| format!("`{}` is not a number", field.trim()))?;
        if !x.is_finite() {
            bail!("non-finite coordinate `{}`", field.trim());
        }
        out.push(x);
    }
    Ok(out)
}
