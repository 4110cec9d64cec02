//! Output directory with atomic, overwrite-guarded writes.

use std::fs;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

pub struct OutDir {
    root: PathBuf,
    force: bool,
}

impl OutDir {
    pub fn new(root: &Path, force: bool) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            force,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Fails, naming every offender, if any target exists and `--force` is off.
    /// Called before computing so a refused run costs nothing.
    pub fn claim<S: AsRef<str>>(&self, names: &[S]) -> Result<()> {
        let mut taken = Vec::new();
        for name in names {
            let name = name.as_ref();
            check_relative(name)?;
            if !self.force && self.path(name).exists() {
                taken.push(name.to_string());
            }
        }
        if !taken.is_empty() {
            bail!(
                "refusing to overwrite existing output (use --force): {}",
                taken.join(", ")
            );
        }
        Ok(())
    }

    /// Writes via a temporary sibling and a rename, so readers never see a
    /// partial file.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        check_relative(name)?;
        let path = self.path(name);
        if !self.force && path.exists() {
            bail!("refusing to overwrite {} (use --force)", path.display());
        }
        let parent = path.parent().unwrap_or(&self.root);
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
        let tmp = parent.join(format!(".{file_name}.{}.tmp", std::process::id()));
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        if let Err(e) = fs::rename(&tmp, &path) {
            let _ = fs::remove_file(&tmp);
            return Err(e).with_context(|| format!("renaming into {}", path.display()));
        }
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_with(
        &self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> sssir::Result<()>,
    ) -> Result<PathBuf> {
        let mut buf = Vec::new();
        fill(&mut buf).with_context(|| format!("encoding {name}"))?;
        self.write(name, &buf)
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn check_relative(name: &str) -> Result<()> {
    let p = Path::new(name);
    ensure!(
        p.components().all(|c| matches!(c, Component::Normal(_))),
        "output name `{name}` must stay inside the output directory"
    );
    Ok(())
}
