//! Input discovery: corpus directories, single PNGs and synthetic scenes.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::warn;

use crate::image::SrgbImage;

use super::scene::SyntheticScene;
use super::spec::{check_name, BenchmarkSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceSource {
    Files(Vec<PathBuf>),
    Synthetic(SyntheticScene),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInput {
    pub name: String,
    pub source: SequenceSource,
}

impl SequenceInput {
    /// Human-readable origin recorded in the manifest.
    pub fn describe(&self) -> String {
        match &self.source {
            SequenceSource::Files(files) => match files.as_slice() {
                [one] => one.display().to_string(),
                _ => files
                    .first()
                    .and_then(|f| f.parent())
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            },
            SequenceSource::Synthetic(s) => format!(
                "synthetic {}x{} frames={} speed={} rotation={} seed={}",
                s.width, s.height, s.frames, s.speed, s.rotation, s.seed
            ),
        }
    }

    /// Loads every frame. Unreadable files are skipped with a warning; a
    /// frame whose shape differs from the first readable one is an error.
    pub fn load(&self) -> anyhow::Result<Vec<SrgbImage>> {
        match &self.source {
            SequenceSource::Synthetic(scene) => Ok(scene.render_all()),
            SequenceSource::Files(files) => {
                let mut frames: Vec<SrgbImage> = Vec::with_capacity(files.len());
                for f in files {
                    match SrgbImage::load_png(f) {
                        Ok(img) => {
                            if let Some(first) = frames.first() {
                                if !first.same_shape(&img) {
                                    bail!(
                                        "{}: {}x{}x{} differs from the sequence's first frame {}x{}x{}",
                                        f.display(),
                                        img.width(),
                                        img.height(),
                                        img.channels(),
                                        first.width(),
                                        first.height(),
                                        first.channels()
                                    );
                                }
                            }
                            frames.push(img);
                        }
                        Err(e) => warn!("skipping unreadable frame {}: {e}", f.display()),
                    }
                }
                Ok(frames)
            }
        }
    }
}

fn is_png(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if s.is_empty() || s == "." || s == ".." {
        "_".repeat(s.len().max(1))
    } else {
        s
    }
}

fn sorted_entries(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut entries = Vec::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        match e {
            Ok(e) => entries.push(e.path()),
            Err(err) => warn!("skipping unreadable entry in {}: {err}", dir.display()),
        }
    }
    entries.sort();
    Ok(entries)
}

fn discover_path(input: &Path) -> anyhow::Result<Vec<SequenceInput>> {
    let stem = |p: &Path| sanitize(&p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    if input.is_file() {
        return Ok(vec![SequenceInput {
            name: stem(input),
            source: SequenceSource::Files(vec![input.to_path_buf()]),
        }]);
    }
    if !input.is_dir() {
        bail!("input {} does not exist", input.display());
    }
    let mut out = Vec::new();
    for entry in sorted_entries(input)? {
        if entry.is_dir() {
            let frames: Vec<PathBuf> = sorted_entries(&entry)?.into_iter().filter(|p| p.is_file() && is_png(p)).collect();
            if frames.is_empty() {
                warn!("skipping {}: no PNG frames", entry.display());
                continue;
            }
            let name = sanitize(&entry.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            out.push(SequenceInput { name, source: SequenceSource::Files(frames) });
        } else if is_png(&entry) {
            out.push(SequenceInput { name: stem(&entry), source: SequenceSource::Files(vec![entry]) });
        }
    }
    Ok(out)
}

/// Lists the sequences named by `spec`, sorted by name.
pub fn discover(spec: &BenchmarkSpec) -> anyhow::Result<Vec<SequenceInput>> {
    if spec.input.is_none() && spec.synthetic.is_empty() {
        bail!("no input corpus and no synthetic scenes given");
    }
    let mut seqs = match &spec.input {
        Some(p) => discover_path(p)?,
        None => Vec::new(),
    };
    for s in &spec.synthetic {
        check_name("synthetic scene", &s.name)?;
        seqs.push(SequenceInput { name: s.name.clone(), source: SequenceSource::Synthetic(s.scene) });
    }
    seqs.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = seqs.windows(2).find(|w| w[0].name == w[1].name) {
        bail!("two inputs map to the sequence name {:?}", w[0].name);
    }
    if seqs.is_empty() {
        bail!("the corpus is empty");
    }
    Ok(seqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    #[test]
    fn layout_rules() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let img = Image::filled(4, 4, 3, 0.5);
        img.save_png16(root.join("still one.png")).unwrap();
        std::fs::create_dir(root.join("clip")).unwrap();
        img.save_png16(root.join("clip/001.png")).unwrap();
        img.save_png16(root.join("clip/000.png")).unwrap();
        std::fs::write(root.join("clip/notes.txt"), "x").unwrap();
        std::fs::create_dir(root.join("empty")).unwrap();
        std::fs::write(root.join("readme.md"), "x").unwrap();

        let spec = BenchmarkSpec { input: Some(root.to_path_buf()), ..BenchmarkSpec::default() };
        let seqs = discover(&spec).unwrap();
        let names: Vec<_> = seqs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["clip", "still_one"]);
        match &seqs[0].source {
            SequenceSource::Files(f) => {
                assert_eq!(f.len(), 2);
                assert!(f[0].ends_with("000.png"));
            }
            _ => panic!(),
        }
        assert_eq!(seqs[0].load().unwrap().len(), 2);
    }

    #[test]
    fn unreadable_frames_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("s")).unwrap();
        Image::filled(4, 4, 1, 0.5).save_png16(dir.path().join("s/0.png")).unwrap();
        std::fs::write(dir.path().join("s/1.png"), b"not a png").unwrap();
        let spec = BenchmarkSpec { input: Some(dir.path().to_path_buf()), ..BenchmarkSpec::default() };
        let seqs = discover(&spec).unwrap();
        assert_eq!(seqs[0].load().unwrap().len(), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let spec = BenchmarkSpec { input: Some(dir.path().to_path_buf()), ..BenchmarkSpec::default() };
        assert!(discover(&spec).is_err());
        let missing = BenchmarkSpec { input: Some(dir.path().join("nope")), ..BenchmarkSpec::default() };
        assert!(discover(&missing).is_err());
    }
}
