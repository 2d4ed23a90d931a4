use std::fs;
use std::path::Path;

use serde_json::Value;
use strata_core::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Output {
    pub pretty: bool,
}

impl Output {
    pub fn json(&self, v: &Value) {
        if self.pretty {
            println!("{}", serde_json::to_string_pretty(v).expect("json value serialises"));
        } else {
            println!("{v}");
        }
    }

    pub fn text(&self, s: &str) {
        print!("{s}");
        if !s.ends_with('\n') {
            println!();
        }
    }

    /// JSON lines normally, `table` under `--pretty`.
    pub fn report(&self, jsonl: &str, table: &str) {
        if self.pretty {
            self.text(table);
        } else {
            print!("{jsonl}");
        }
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Storage {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Storage {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes `<out>` as JSON lines and the table next to it with a `.txt`
/// extension.
pub fn write_report(out: &Path, jsonl: &str, table: &str) -> Result<()> {
    write_file(out, jsonl)?;
    write_file(&out.with_extension("txt"), table)
}
