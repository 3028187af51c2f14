//! Dataset manifest: UTF-8 text with `[source]`, `[target]` and `[input]`
//! sections, one path per line. Blank lines and `#` comments are ignored;
//! relative paths resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use dmt_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub source_paths: Vec<PathBuf>,
    pub target_paths: Vec<PathBuf>,
    pub input_path: PathBuf,
}

enum Section {
    Source,
    Target,
    Input,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut section = None;
        let (mut source, mut target, mut input) = (Vec::new(), Vec::new(), Vec::new());
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[source]" => section = Some(Section::Source),
                "[target]" => section = Some(Section::Target),
                "[input]" => section = Some(Section::Input),
                _ if line.starts_with('[') => {
                    return Err(Error::Format(format!("manifest line {}: unknown section {line}", n + 1)))
                }
                _ => {
                    let p = base.join(line);
                    match section {
                        Some(Section::Source) => source.push(p),
                        Some(Section::Target) => target.push(p),
                        Some(Section::Input) => input.push(p),
                        None => {
                            return Err(Error::Format(format!(
                                "manifest line {}: path outside any section",
                                n + 1
                            )))
                        }
                    }
                }
            }
        }
        if source.is_empty() {
            return Err(Error::InvalidInput("manifest has no [source] images".into()));
        }
        if target.is_empty() {
            return Err(Error::InvalidInput("manifest has no [target] images".into()));
        }
        if input.len() != 1 {
            return Err(Error::InvalidInput(format!(
                "manifest needs exactly one [input] image, found {}",
                input.len()
            )));
        }
        let input_path = input.remove(0);
        if source.iter().chain(&target).any(|p| *p == input_path) {
            return Err(Error::InvalidInput(format!(
                "input image {} also appears in the source or target list",
                input_path.display()
            )));
        }
        Ok(Self {
            source_paths: source,
            target_paths: target,
            input_path,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| e.context(path.display()))
    }

    /// Manifest text with paths written as given.
    pub fn to_text(&self) -> String {
        let mut s = String::from("[source]\n");
        for p in &self.source_paths {
            s += &format!("{}\n", p.display());
        }
        s += "[target]\n";
        for p in &self.target_paths {
            s += &format!("{}\n", p.display());
        }
        s + &format!("[input]\n{}\n", self.input_path.display())
    }
}
