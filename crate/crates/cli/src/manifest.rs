//! Corpus manifest: a CSV with header `path,label,speaker,gender[,duration_s]`.
//! Relative audio paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use paraling::eval::{Gender, Sample};

use crate::error::{CliError, Result};

const REQUIRED: [&str; 4] = ["path", "label", "speaker", "gender"];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// Path as written in the manifest; doubles as the source id.
    pub source_id: String,
    pub audio_path: PathBuf,
    pub label: String,
    pub speaker: String,
    pub gender: Gender,
    pub duration_s: Option<f64>,
    pub line: u64,
}

impl ManifestRow {
    pub fn sample(&self) -> Sample {
        Sample {
            source_id: self.source_id.clone(),
            speaker_id: self.speaker.clone(),
            label: self.label.clone(),
            gender: self.gender,
            duration_s: self.duration_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    pub fn parse(text: &str, path: &Path, base: &Path) -> Result<Self> {
        let err = |line: u64, message: String| CliError::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| err(1, e.to_string()))?
            .iter()
            .map(str::to_ascii_lowercase)
            .collect();
        let has_duration = match header.len() {
            4 => false,
            5 if header[4] == "duration_s" => true,
            _ => false,
        };
        if header.len() < 4 || header[..4] != REQUIRED || (header.len() == 5 && !has_duration) || header.len() > 5 {
            return Err(err(1, format!("header must be path,label,speaker,gender[,duration_s], found {}", header.join(","))));
        }
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for record in reader.records() {
            let record = record.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| record.get(i).unwrap_or("").to_string();
            let source_id = field(0);
            if source_id.is_empty() {
                return Err(err(line, "empty path".into()));
            }
            if !seen.insert(source_id.clone()) {
                return Err(err(line, format!("duplicate path {source_id:?}")));
            }
            let label = field(1);
            if label.is_empty() {
                return Err(err(line, "empty label".into()));
            }
            let speaker = field(2);
            if speaker.is_empty() {
                return Err(err(line, "empty speaker".into()));
            }
            let gender: Gender = field(3).parse().map_err(|e: paraling::Error| err(line, e.to_string()))?;
            let duration_s = match has_duration.then(|| field(4)).filter(|d| !d.is_empty()) {
                Some(d) => {
                    let v: f64 = d.parse().map_err(|_| err(line, format!("bad duration_s {d:?}")))?;
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(err(line, format!("bad duration_s {d:?}")));
                    }
                    Some(v)
                }
                None => None,
            };
            let raw = PathBuf::from(&source_id);
            let audio_path = if raw.is_absolute() { raw } else { base.join(raw) };
            rows.push(ManifestRow {
                source_id,
                audio_path,
                label,
                speaker,
                gender,
                duration_s,
                line,
            });
        }
        if rows.is_empty() {
            return Err(err(1, "manifest has no rows".into()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Manifest> {
        Manifest::parse(text, Path::new("m.csv"), Path::new("/data"))
    }

    #[test]
    fn reads_rows_and_resolves_paths() {
        let m = parse("path,label,speaker,gender,duration_s\na.wav,sat,s1,m,3.5\n/abs/b.wav,dis,s2,F,\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.rows[0].audio_path, PathBuf::from("/data/a.wav"));
        assert_eq!(m.rows[0].duration_s, Some(3.5));
        assert_eq!(m.rows[1].audio_path, PathBuf::from("/abs/b.wav"));
        assert_eq!(m.rows[1].gender, Gender::F);
        assert_eq!(m.rows[1].duration_s, None);
        assert_eq!(m.rows[1].line, 3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("path,label,speaker,gender\na.wav,x,s1,m\na.wav,y,s2,f\n").unwrap_err();
        assert!(e.to_string().starts_with("m.csv:3:"), "{e}");
        let e = parse("path,label,speaker,gender\na.wav,,s1,m\n").unwrap_err();
        assert!(e.to_string().contains(":2: empty label"), "{e}");
        let e = parse("path,label,speaker,gender\na.wav,x,s1,robot\n").unwrap_err();
        assert!(e.to_string().contains(":2:"), "{e}");
    }

    #[test]
    fn header_is_required() {
        assert!(parse("a.wav,x,s1,m\n").is_err());
        assert!(parse("path,label,speaker\na.wav,x,s1\n").is_err());
        assert!(parse("path,label,speaker,gender\n").is_err());
    }
}
