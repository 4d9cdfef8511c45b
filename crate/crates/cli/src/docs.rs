use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use efx_core::{Allocation, Instance};
use serde::{Deserialize, Serialize};

use crate::args::Cli;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Envelope<'a, T> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a Cli,
    pub result: T,
}

#[derive(Deserialize)]
struct YDoc {
    y: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct XDoc {
    x: Vec<Vec<f64>>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    Instance::from_json(&read(path)?).with_context(|| format!("instance {}", path.display()))
}

pub fn read_allocation(path: &Path, inst: &Instance) -> Result<Allocation> {
    Allocation::from_json(&read(path)?, inst).with_context(|| format!("allocation {}", path.display()))
}

pub fn read_y(path: &Path) -> Result<Vec<Vec<f64>>> {
    let doc: YDoc = serde_json::from_str(&read(path)?).with_context(|| format!("dual point {}", path.display()))?;
    Ok(doc.y)
}

pub fn read_x(path: &Path) -> Result<Vec<Vec<f64>>> {
    let doc: XDoc =
        serde_json::from_str(&read(path)?).with_context(|| format!("fractional point {}", path.display()))?;
    Ok(doc.x)
}

/// Output sink: the `--output` file or stdout.
pub struct Sink {
    out: Box<dyn Write>,
}

impl Sink {
    pub fn open(path: Option<&Path>) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
            None => Box::new(std::io::stdout().lock()),
        };
        Ok(Sink { out })
    }

    pub fn document<T: Serialize>(&mut self, doc: &T) -> Result<()> {
        serde_json::to_writer_pretty(&mut self.out, doc)?;
        writeln!(self.out)?;
        self.out.flush()?;
        Ok(())
    }

    pub fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        writeln!(self.out)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
