//! Pattern file reader.

use std::path::Path;

use hopfix::PatternSet;
use nalgebra::DMatrix;

use crate::CliError;

/// Parses a header line `d n` followed by `n` lines of `d` whitespace-separated reals.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_patterns(text: &str, normalize: bool) -> Result<PatternSet, CliError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| CliError::Config("pattern file is empty".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| CliError::Config(format!("bad header token {t:?}"))))
        .collect::<Result<_, _>>()?;
    let [d, n] = dims[..] else {
        return Err(CliError::Config(format!("header must be \"d n\", got {header:?}")));
    };
    let mut m = DMatrix::zeros(d, n);
    for j in 0..n {
        let line = lines.next().ok_or_else(|| CliError::Config(format!("expected {n} patterns, found {j}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| CliError::Config(format!("pattern {j}: bad number {t:?}"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != d {
            return Err(CliError::Config(format!("pattern {j} has {} entries, expected {d}", vals.len())));
        }
        m.set_column(j, &nalgebra::DVector::from_vec(vals));
    }
    if lines.next().is_some() {
        return Err(CliError::Config(format!("more than {n} patterns in file")));
    }
    let set = if normalize { PatternSet::normalized(m) } else { PatternSet::new(m) };
    set.map_err(CliError::from)
}

pub fn read_patterns(path: &Path, normalize: bool) -> Result<PatternSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_patterns(&text, normalize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_cross() {
        let w = parse_patterns("2 4\n1 0\n-1 0\n0 1\n0 -1\n", false).unwrap();
        assert_eq!(w, PatternSet::cross_2d());
    }

    #[test]
    fn normalizes_unless_told_not_to() {
        let text = "2 2\n# comment\n2 0\n0 3\n";
        let w = parse_patterns(text, true).unwrap();
        assert_eq!(w.column(1)[1], 1.0);
        assert!(matches!(parse_patterns(text, false), Err(CliError::Config(_))));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(parse_patterns("", true).is_err());
        assert!(parse_patterns("2\n1 0\n", true).is_err());
        assert!(parse_patterns("2 2\n1 0\n", true).is_err());
        assert!(parse_patterns("2 2\n1 0\n0 1 2\n", true).is_err());
        assert!(parse_patterns("2 2\n1 0\n0 1\n1 1\n", true).is_err());
        assert!(parse_patterns("2 2\n1 x\n0 1\n", true).is_err());
    }
}
