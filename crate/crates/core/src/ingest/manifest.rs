//! Dataset manifests.
//!
//! UTF-8 text, one video per line: `<path>\t<class>\t<instance>[\t[x,y,w,h]]`.
//! Blank lines and lines starting with `#` are ignored, except `#@ key=value`
//! directives: `name`, `fps` and `classes` (comma list of declared classes,
//! each of which must then have at least one entry). Relative paths resolve
//! against the manifest's directory.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub class: String,
    pub class_index: usize,
    pub instance: String,
    pub instance_index: usize,
    pub crop: Option<Crop>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub name: String,
    /// Declared frame rate; when absent each video's own rate is used.
    pub fps: Option<f64>,
    pub entries: Vec<ManifestEntry>,
    /// Class names in order of first appearance.
    pub classes: Vec<String>,
    /// Instance names in order of first appearance.
    pub instances: Vec<String>,
}

impl DatasetManifest {
    /// Entry indices grouped by instance, groups in first-appearance order.
    pub fn instance_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.instances.len()];
        for (i, e) in self.entries.iter().enumerate() {
            groups[e.instance_index].push(i);
        }
        groups
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for e in &self.entries {
            counts[e.class_index] += 1;
        }
        counts
    }

    /// Stable per-entry identifier derived from the path.
    pub fn video_stem(&self, index: usize) -> String {
        let e = &self.entries[index];
        let stem = e
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "video".into());
        format!("{index:05}_{stem}")
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut m = parse_manifest(&text, base, true)?;
    if m.name.is_empty() {
        m.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(m)
}

/// Parses manifest text; `check_files` verifies that every path exists.
pub fn parse_manifest(text: &str, base: &Path, check_files: bool) -> Result<DatasetManifest> {
    let mut m = DatasetManifest::default();
    let mut declared: Vec<String> = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut instance_ids: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<PathBuf> = HashSet::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(directive) = line.strip_prefix("#@") {
            let (key, value) =
                directive
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::ManifestSyntax {
                        line: line_no,
                        message: "directive must be key=value".into(),
                    })?;
            let value = value.trim();
            match key.trim() {
                "name" => m.name = value.to_string(),
                "fps" => {
                    let fps: f64 = value.parse().map_err(|_| Error::ManifestSyntax {
                        line: line_no,
                        message: format!("bad fps `{value}`"),
                    })?;
                    if !(fps > 0.0) {
                        return Err(Error::ManifestSyntax {
                            line: line_no,
                            message: "fps must be positive".into(),
                        });
                    }
                    m.fps = Some(fps);
                }
                "classes" => declared = value.split(',').map(|s| s.trim().to_string()).collect(),
                other => {
                    return Err(Error::ManifestSyntax {
                        line: line_no,
                        message: format!("unknown directive `{other}`"),
                    })
                }
            }
            continue;
        }
        if line.trim_start().starts_with('#') {
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::ManifestSyntax {
                line: line_no,
                message: format!("expected 3 or 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let rel = PathBuf::from(fields[0].trim());
        let path = if rel.is_absolute() {
            rel
        } else {
            base.join(rel)
        };
        if !seen.insert(path.clone()) {
            return Err(Error::DuplicatePath(path));
        }
        if check_files && !path.exists() {
            return Err(Error::MissingFile(path));
        }
        let class = fields[1].trim().to_string();
        let instance = fields[2].trim().to_string();
        if class.is_empty() || instance.is_empty() {
            return Err(Error::ManifestSyntax {
                line: line_no,
                message: "class and instance must be nonempty".into(),
            });
        }
        let crop = match fields.get(3) {
            Some(s) if !s.trim().is_empty() => Some(parse_crop(s, line_no)?),
            _ => None,
        };

        let next_class = class_ids.len();
        let class_index = *class_ids.entry(class.clone()).or_insert_with(|| {
            m.classes.push(class.clone());
            next_class
        });
        let next_instance = instance_ids.len();
        let instance_index = *instance_ids.entry(instance.clone()).or_insert_with(|| {
            m.instances.push(instance.clone());
            next_instance
        });
        m.entries.push(ManifestEntry {
            path,
            class,
            class_index,
            instance,
            instance_index,
            crop,
        });
    }

    for c in &declared {
        if !class_ids.contains_key(c) {
            return Err(Error::EmptyClass(c.clone()));
        }
    }
    Ok(m)
}

fn parse_crop(s: &str, line: usize) -> Result<Crop> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    let parts: Vec<usize> = inner
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::ManifestSyntax {
            line,
            message: format!("bad crop `{s}`"),
        })?;
    match parts.as_slice() {
        &[x, y, w, h] if w > 0 && h > 0 => Ok(Crop { x, y, w, h }),
        _ => Err(Error::ManifestSyntax {
            line,
            message: format!("crop must be [x,y,w,h] with positive size, got `{s}`"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<DatasetManifest> {
        parse_manifest(text, Path::new("/data"), false)
    }

    #[test]
    fn groups_instances_in_first_appearance_order() {
        let text = "# UCLA-style\n#@ fps=15\n\
                    a/1\tfire\tfire-a\nb/1\tsea\tsea-a\na/2\tfire\tfire-a\n\
                    a/3\tfire\tfire-a\na/4\tfire\tfire-a\n\n";
        let m = parse(text).unwrap();
        assert_eq!(m.fps, Some(15.0));
        assert_eq!(m.classes, vec!["fire", "sea"]);
        assert_eq!(m.instance_groups(), vec![vec![0, 2, 3, 4], vec![1]]);
        assert_eq!(m.entries[1].path, PathBuf::from("/data/b/1"));
        assert_eq!(m.class_counts(), vec![4, 1]);
    }

    #[test]
    fn crop_field_is_parsed() {
        let m = parse("v\tc\ti\t[1,2,30,40]\n").unwrap();
        assert_eq!(
            m.entries[0].crop,
            Some(Crop {
                x: 1,
                y: 2,
                w: 30,
                h: 40
            })
        );
        assert!(parse("v\tc\ti\t[1,2,0,40]\n").is_err());
    }

    #[test]
    fn single_class_loads() {
        let m = parse("v1\tonly\ti1\nv2\tonly\ti2\n").unwrap();
        assert_eq!(m.classes.len(), 1);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            parse("v\tc\ti\nv\tc\tj\n"),
            Err(Error::DuplicatePath(_))
        ));
        assert!(matches!(
            parse("#@ classes=a,b\nv\ta\ti\n"),
            Err(Error::EmptyClass(c)) if c == "b"
        ));
        assert!(matches!(
            parse("just-a-path\n"),
            Err(Error::ManifestSyntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_manifest("nope\tc\ti\n", Path::new("/definitely/not/here"), true),
            Err(Error::MissingFile(_))
        ));
    }
}
