//! Output directory written through a sibling temporary directory that is
//! moved into place only after every file has been written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tempfile::TempDir;

pub struct Staging {
    dir: TempDir,
    target: PathBuf,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        if target.exists() && !target.is_dir() {
            bail!(crate::UsageError(format!(
                "output path {} exists and is not a directory",
                target.display()
            )));
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)
            .with_context(|| format!("creating {}", parent.display()))?;
        let dir = tempfile::Builder::new()
            .prefix(".choroidseg-staging-")
            .tempdir_in(&parent)
            .with_context(|| format!("creating staging directory in {}", parent.display()))?;
        Ok(Staging {
            dir,
            target: target.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
        Ok(p)
    }

    /// Moves the staged tree to the target; existing entries of the same
    /// name are replaced, others are left alone.
    pub fn commit(self) -> Result<PathBuf> {
        let staged = self.dir.keep();
        let result = move_into(&staged, &self.target);
        if result.is_err() {
            let _ = fs::remove_dir_all(&staged);
        }
        result.map(|_| self.target)
    }
}

fn move_into(staged: &Path, target: &Path) -> Result<()> {
    if !target.exists() {
        return fs::rename(staged, target)
            .with_context(|| format!("moving outputs to {}", target.display()));
    }
    for entry in fs::read_dir(staged)? {
        let entry = entry?;
        let dst = target.join(entry.file_name());
        if dst.is_dir() {
            fs::remove_dir_all(&dst)?;
        }
        fs::rename(entry.path(), &dst)
            .with_context(|| format!("moving output to {}", dst.display()))?;
    }
    fs::remove_dir(staged)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dropped_staging_leaves_nothing() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        {
            let s = Staging::new(&target).unwrap();
            fs::write(s.path("a.txt"), "x").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_creates_or_merges() {
        let root = tempfile::tempdir().unwrap();
        let target = root.path().join("out");
        let s = Staging::new(&target).unwrap();
        fs::write(s.path("a.txt"), "1").unwrap();
        s.commit().unwrap();
        let s = Staging::new(&target).unwrap();
        fs::write(s.path("a.txt"), "2").unwrap();
        fs::write(s.subdir("sub").unwrap().join("b.txt"), "3").unwrap();
        s.commit().unwrap();
        assert_eq!(fs::read_to_string(target.join("a.txt")).unwrap(), "2");
        assert_eq!(fs::read_to_string(target.join("sub/b.txt")).unwrap(), "3");
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 1);
    }
}
