//! File formats: scene, codec and skill-list TOML; line-delimited JSON
//! for clips, samples and reports.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use skillmatrix_core::codec::CodecConfig;
use skillmatrix_core::planner::{default_skill_list, SkillList, SkillPromptEntry};
use skillmatrix_core::sim::SceneSpec;

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value)?;
    write_atomic(path, text.as_bytes())
}

/// Writes through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

pub fn load_scene(path: &Path) -> Result<SceneSpec> {
    read_toml(path)
}

pub fn load_codec(path: &Path) -> Result<CodecConfig> {
    let cfg: CodecConfig = read_toml(path)?;
    cfg.validate().with_context(|| format!("codec in {}", path.display()))?;
    Ok(cfg)
}

#[derive(Debug, Serialize, Deserialize)]
struct SkillFile {
    skills: Vec<SkillPromptEntry>,
}

pub fn load_skills(path: &Path) -> Result<SkillList> {
    let f: SkillFile = read_toml(path)?;
    Ok(SkillList::new(f.skills)?)
}

pub fn save_skills(path: &Path, skills: &SkillList) -> Result<()> {
    write_toml(
        path,
        &SkillFile {
            skills: skills.skills.clone(),
        },
    )
}

/// The skill list at `path`, or the built-in one if no path is given.
pub fn skills_or_default(path: Option<&Path>) -> Result<SkillList> {
    match path {
        Some(p) => load_skills(p),
        None => Ok(default_skill_list()),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(e) => bail!("{}:{}: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use skillmatrix_core::bench::{level_scene, suite_scene, Level, Suite};
    use skillmatrix_core::planner::HybridRoutine;

    #[test]
    fn scenes_survive_toml() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scene.toml");
        for spec in [
            level_scene(Level::IV, 3).spec,
            suite_scene(Suite::Ramp, 5, true),
            suite_scene(Suite::Drawer, 5, true),
        ] {
            write_toml(&p, &spec).unwrap();
            assert_eq!(load_scene(&p).unwrap(), spec);
        }
    }

    #[test]
    fn skill_list_survives_toml() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("skills.toml");
        let mut list = default_skill_list();
        list.register(SkillPromptEntry::hybrid("Spin around <object>", HybridRoutine::Search))
            .unwrap();
        save_skills(&p, &list).unwrap();
        assert_eq!(load_skills(&p).unwrap(), list);
    }

    #[test]
    fn codec_survives_toml() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("codec.toml");
        let cfg = CodecConfig::default();
        write_toml(&p, &cfg).unwrap();
        assert_eq!(load_codec(&p).unwrap(), cfg);
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "1\n2\nnope\n").unwrap();
        let err = read_jsonl::<u32>(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }
}
