use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use l3_splitting::Error;

use super::Cli;

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostic {
    pub stage: String,
    pub name: String,
    pub value: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub version: String,
    pub wall_time_s: f64,
    pub status: String,
    pub error: Option<String>,
    pub diagnostics: Vec<Diagnostic>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(cli: &Cli) -> Self {
        Self {
            command: cli.command.name().to_string(),
            config: serde_json::to_value(cli).unwrap_or(serde_json::Value::Null),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            status: "running".into(),
            error: None,
            diagnostics: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn diag(&mut self, stage: &str, name: &str, value: impl Serialize) {
        self.diagnostics.push(Diagnostic {
            stage: stage.into(),
            name: name.into(),
            value: serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        });
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn finish(&mut self, elapsed: Duration, error: Option<&Error>) {
        self.wall_time_s = elapsed.as_secs_f64();
        match error {
            None => self.status = "ok".into(),
            Some(e) => {
                self.status = if e.is_validation() { "validation-error" } else { "numerical-failure" }.into();
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn write(&self, path: Option<&Path>) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        match path {
            Some(p) => std::fs::write(p, text),
            None => {
                eprint!("{text}");
                Ok(())
            }
        }
    }
}
