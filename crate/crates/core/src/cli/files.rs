//! Line-oriented text artifacts exchanged between stages.

use std::fmt::{Display, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::uncertainty::{Polarity, ScoreField, ScoreMethod};

use super::CliError;

fn read_text(path: &Path, op: &'static str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(op, format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io("write", format!("{}: {e}", path.display())))
}

/// One value per line.
pub fn lines_of<T: Display>(values: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for v in values {
        writeln!(s, "{v}").unwrap();
    }
    s
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_lines<T: FromStr>(path: &Path, op: &'static str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    let text = read_text(path, op)?;
    data_lines(&text)
        .map(|(line, s)| {
            s.parse::<T>()
                .map_err(|e| CliError::io(op, format!("{}:{line}: {s:?}: {e}", path.display())))
        })
        .collect()
}

pub fn encode_scores(field: &ScoreField<f64>) -> String {
    let mut s = format!("# method = {}\n# polarity = {}\n", field.method, field.polarity.as_str());
    for v in &field.scores {
        writeln!(s, "{v:?}").unwrap();
    }
    s
}

pub fn read_scores(path: &Path) -> Result<ScoreField<f64>, CliError> {
    const OP: &str = "read_scores";
    let text = read_text(path, OP)?;
    let err = |line: usize, m: String| CliError::io(OP, format!("{}:{line}: {m}", path.display()));
    let mut method = ScoreMethod::External;
    let mut polarity = None;
    let mut scores = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('#') {
            if let Some((k, v)) = header.split_once('=') {
                match k.trim() {
                    "method" => {
                        method = ScoreMethod::parse(v.trim())
                            .ok_or_else(|| err(i + 1, format!("unknown score method {:?}", v.trim())))?
                    }
                    "polarity" => {
                        polarity = Some(
                            Polarity::parse(v.trim())
                                .ok_or_else(|| err(i + 1, format!("unknown polarity {:?}", v.trim())))?,
                        )
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|e| err(i + 1, format!("{line:?}: {e}")))?;
        if !v.is_finite() {
            return Err(err(i + 1, "non-finite score".into()));
        }
        scores.push(v);
    }
    let polarity = polarity.ok_or_else(|| err(1, "missing `# polarity = ...` header".into()))?;
    Ok(ScoreField { scores, polarity, method })
}

/// Strictly increasing point indices, one per line.
pub fn read_indices(path: &Path) -> Result<Vec<usize>, CliError> {
    let v: Vec<usize> = parse_lines(path, "read_indices")?;
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::io(
            "read_indices",
            format!("{}: indices must be strictly increasing", path.display()),
        ));
    }
    Ok(v)
}

pub fn read_labels(path: &Path) -> Result<Vec<i32>, CliError> {
    parse_lines(path, "read_labels")
}

/// `0`/`1` per line.
pub fn read_mask(path: &Path) -> Result<Vec<bool>, CliError> {
    let v: Vec<u8> = parse_lines(path, "read_mask")?;
    v.into_iter()
        .enumerate()
        .map(|(i, b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(CliError::io("read_mask", format!("{}: entry {i} is {b}, expected 0 or 1", path.display()))),
        })
        .collect()
}

pub fn encode_mask(mask: &[bool]) -> String {
    lines_of(mask.iter().map(|&b| u8::from(b)))
}

/// Ordered `key = value` report.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn real(&mut self, key: impl Into<String>, value: f64) {
        self.push(key, format!("{value:?}"));
    }

    pub fn reals(&mut self, key: impl Into<String>, values: &[f64]) {
        self.push(key, values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", "));
    }

    pub fn list<T: Display>(&mut self, key: impl Into<String>, values: &[T]) {
        self.push(key, values.iter().map(T::to_string).collect::<Vec<_>>().join(", "));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}

/// `key = value` pairs of a report, skipping blanks and comments.
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    data_lines(text)
        .filter_map(|(_, l)| l.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        let field = ScoreField { scores: vec![0.1, 1.0 / 3.0, 2.5e-17], polarity: Polarity::LowMeansUnknown, method: ScoreMethod::Msp };
        write_text(&path, &encode_scores(&field)).unwrap();
        assert_eq!(read_scores(&path).unwrap(), field);
    }

    #[test]
    fn bad_lines_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.txt");
        write_text(&path, "1\n2\nx\n").unwrap();
        let e = read_labels(&path).unwrap_err().to_string();
        assert!(e.contains(":3:"), "{e}");
        write_text(&path, "0\n1\n2\n").unwrap();
        assert!(read_mask(&path).is_err());
        write_text(&path, "3\n1\n").unwrap();
        assert!(read_indices(&path).is_err());
    }

    #[test]
    fn report_renders_in_order() {
        let mut r = Report::default();
        r.push("b", 2);
        r.real("a", 0.5);
        r.list("c", &[1, 2]);
        assert_eq!(r.render(), "b = 2\na = 0.5\nc = 1, 2\n");
        assert_eq!(parse_report(&r.render())[2], ("c".into(), "1, 2".into()));
    }
}
