//! `out/<suite>/<hash>/<table>.csv`, each file starting with a provenance comment.

use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;

use hypermix::tables::Table;

use crate::config::Config;
use crate::CliError;

pub struct Output {
    pub dir: PathBuf,
    comment: String,
    pub written: Vec<PathBuf>,
}

fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Resource(format!("{}: {e}", path.display()))
}

impl Output {
    pub fn create(cfg: &Config) -> Result<Self, CliError> {
        let hash = cfg.hash();
        let dir = PathBuf::from(cfg.string("out", "results")).join(&cfg.suite).join(&hash[..16]);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let cfg_path = dir.join("config.ini");
        fs::write(&cfg_path, cfg.canonical()).map_err(|e| io_err(&cfg_path, e))?;
        let comment = format!(
            "# hypermix {} config={} seed={}",
            env!("CARGO_PKG_VERSION"),
            hash,
            cfg.seed()?
        );
        Ok(Output { dir, comment, written: Vec::new() })
    }

    pub fn write(&mut self, table: &Table) -> Result<(), CliError> {
        let path = self.dir.join(format!("{}.csv", table.name));
        let mut file = File::create(&path).map_err(|e| io_err(&path, e))?;
        writeln!(file, "{}", self.comment).map_err(|e| io_err(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&table.columns).map_err(|e| io_err(&path, e))?;
        for row in &table.rows {
            w.write_record(row).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}
