//! The 24-symbol primitive-feature alphabet, compound tokens, and the
//! canonical sequence grammar.
//!
//! Base symbols: `Vx+ Vx- Vy+ Vy- Vz+ Vz- Wx+ Wx- Wy+ Wy- Wz+ Wz-`
//! (direction-signed reach/rotate bells) and `Gl Gm Gh Rl Rm Rh Bl Bm Bh
//! El Em Eh` (level crossings of the composite force/bend signals).
//! Compound symbols are joined by `&` in ascending byte-wise lexicographic
//! order, e.g. `Vx-&Vz+`.

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Neg
        } else {
            Sign::Pos
        }
    }

    pub fn factor(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }
}

/// A motion axis with direction, e.g. `z-` for downward reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedAxis {
    pub axis: Axis,
    pub sign: Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Low,
    Mid,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Mid, Level::High];
}

/// Primitive family a symbol belongs to. Compounds only ever combine
/// symbols of the same motion family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Reach,
    Rotate,
    GraspRelease,
    BendExtend,
}

/// One of the 24 base primitive-feature symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Vel(Axis, Sign),
    Ang(Axis, Sign),
    Grasp(Level),
    Release(Level),
    Bend(Level),
    Extend(Level),
}

impl Symbol {
    pub fn name(self) -> &'static str {
        use Axis::*;
        use Level::*;
        use Sign::*;
        match self {
            Symbol::Vel(X, Pos) => "Vx+",
            Symbol::Vel(X, Neg) => "Vx-",
            Symbol::Vel(Y, Pos) => "Vy+",
            Symbol::Vel(Y, Neg) => "Vy-",
            Symbol::Vel(Z, Pos) => "Vz+",
            Symbol::Vel(Z, Neg) => "Vz-",
            Symbol::Ang(X, Pos) => "Wx+",
            Symbol::Ang(X, Neg) => "Wx-",
            Symbol::Ang(Y, Pos) => "Wy+",
            Symbol::Ang(Y, Neg) => "Wy-",
            Symbol::Ang(Z, Pos) => "Wz+",
            Symbol::Ang(Z, Neg) => "Wz-",
            Symbol::Grasp(Low) => "Gl",
            Symbol::Grasp(Mid) => "Gm",
            Symbol::Grasp(High) => "Gh",
            Symbol::Release(Low) => "Rl",
            Symbol::Release(Mid) => "Rm",
            Symbol::Release(High) => "Rh",
            Symbol::Bend(Low) => "Bl",
            Symbol::Bend(Mid) => "Bm",
            Symbol::Bend(High) => "Bh",
            Symbol::Extend(Low) => "El",
            Symbol::Extend(Mid) => "Em",
            Symbol::Extend(High) => "Eh",
        }
    }

    pub fn parse(s: &str) -> Option<Symbol> {
        Symbol::all().into_iter().find(|sym| sym.name() == s)
    }

    pub fn family(self) -> Family {
        match self {
            Symbol::Vel(..) => Family::Reach,
            Symbol::Ang(..) => Family::Rotate,
            Symbol::Grasp(_) | Symbol::Release(_) => Family::GraspRelease,
            Symbol::Bend(_) | Symbol::Extend(_) => Family::BendExtend,
        }
    }

    pub fn all() -> Vec<Symbol> {
        let mut out = Vec::with_capacity(24);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            for sign in [Sign::Pos, Sign::Neg] {
                out.push(Symbol::Vel(axis, sign));
                out.push(Symbol::Ang(axis, sign));
            }
        }
        for level in Level::ALL {
            out.push(Symbol::Grasp(level));
            out.push(Symbol::Release(level));
            out.push(Symbol::Bend(level));
            out.push(Symbol::Extend(level));
        }
        out
    }
}

// Symbols order by their canonical names so compound canonicalization and
// tie-breaking are byte-wise lexicographic.
impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> Ordering {
        self.name().cmp(other.name())
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A (possibly compound) primitive-feature event. Symbols are kept in
/// lexicographic order with no duplicates; crossing-derived tokens are
/// always singletons.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    symbols: Vec<Symbol>,
    pub t_s: f64,
}

impl Token {
    pub fn single(symbol: Symbol, t_s: f64) -> Token {
        Token {
            symbols: vec![symbol],
            t_s,
        }
    }

    pub fn compound(mut symbols: Vec<Symbol>, t_s: f64) -> Token {
        symbols.sort();
        symbols.dedup();
        assert!(
            !symbols.is_empty() && symbols.len() <= 3,
            "token must hold 1..=3 symbols"
        );
        Token { symbols, t_s }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn name(&self) -> String {
        self.symbols
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join("&")
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Ordered token list for one trial. Timestamps are retained for
/// inspection; the serialized grammar carries only the names.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn new(mut tokens: Vec<Token>) -> TokenSequence {
        tokens.sort_by(|a, b| {
            a.t_s
                .partial_cmp(&b.t_s)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.name().cmp(&b.name()))
        });
        TokenSequence { tokens }
    }

    pub fn names(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.name()).collect()
    }

    pub fn joined(&self) -> String {
        self.names().join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One line of a sequence file.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub trial_id: String,
    pub subject: String,
    pub action: Option<String>,
    pub tokens: Vec<String>,
}

impl SequenceRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{}\t{}",
            self.trial_id,
            self.subject,
            self.action.as_deref().unwrap_or(""),
            self.tokens.join(" ")
        )
    }

    pub fn parse_line(line: &str, row: usize) -> Result<SequenceRecord> {
        let (head, toks) = line.split_once('\t').ok_or_else(|| Error::Value {
            row,
            column: "<line>".into(),
            detail: "missing tab separator".into(),
        })?;
        let parts: Vec<&str> = head.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Value {
                row,
                column: "<line>".into(),
                detail: format!("expected `trial_id,subject,action`, got `{head}`"),
            });
        }
        let action = if parts[2].is_empty() {
            None
        } else {
            Some(parts[2].to_string())
        };
        Ok(SequenceRecord {
            trial_id: parts[0].to_string(),
            subject: parts[1].to_string(),
            action,
            tokens: toks.split_whitespace().map(String::from).collect(),
        })
    }
}

pub fn write_sequences(records: &[SequenceRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_sequences(path: &Path) -> Result<Vec<SequenceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| SequenceRecord::parse_line(l.trim_end_matches('\r'), i + 1))
        .collect()
}

/// 1 minus Levenshtein distance normalized by the longer length. Two
/// empty sequences are identical (similarity 1).
pub fn edit_similarity<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

fn levenshtein<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x.as_ref() != y.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_has_24_distinct_symbols() {
        let all = Symbol::all();
        assert_eq!(all.len(), 24);
        let mut names: Vec<&str> = all.iter().map(|s| s.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 24);
    }

    #[test]
    fn symbol_names_round_trip() {
        for s in Symbol::all() {
            assert_eq!(Symbol::parse(s.name()), Some(s));
        }
        assert_eq!(Symbol::parse("Xy+"), None);
    }

    #[test]
    fn compound_canonical_order() {
        let t = Token::compound(
            vec![
                Symbol::Vel(Axis::Z, Sign::Pos),
                Symbol::Vel(Axis::X, Sign::Neg),
            ],
            0.0,
        );
        assert_eq!(t.name(), "Vx-&Vz+");
        let t2 = Token::compound(
            vec![
                Symbol::Vel(Axis::X, Sign::Neg),
                Symbol::Vel(Axis::Z, Sign::Pos),
            ],
            0.0,
        );
        assert_eq!(t.name(), t2.name());
    }

    #[test]
    fn sequence_orders_by_time_then_name() {
        let seq = TokenSequence::new(vec![
            Token::single(Symbol::Grasp(Level::Low), 1.0),
            Token::single(Symbol::Vel(Axis::X, Sign::Neg), 0.5),
            Token::single(Symbol::Bend(Level::Low), 1.0),
        ]);
        assert_eq!(seq.names(), vec!["Vx-", "Bl", "Gl"]);
    }

    #[test]
    fn sequence_record_line_round_trip() {
        let rec = SequenceRecord {
            trial_id: "s01_OpenDrawer_01".into(),
            subject: "s01".into(),
            action: Some("OpenDrawer".into()),
            tokens: vec!["Vx-".into(), "Gl".into(), "Vx-&Vz+".into()],
        };
        let line = rec.to_line();
        assert_eq!(line, "s01_OpenDrawer_01,s01,OpenDrawer\tVx- Gl Vx-&Vz+");
        assert_eq!(SequenceRecord::parse_line(&line, 1).unwrap(), rec);
    }

    #[test]
    fn empty_token_list_serializes_to_empty_tail() {
        let rec = SequenceRecord {
            trial_id: "x".into(),
            subject: "s".into(),
            action: None,
            tokens: vec![],
        };
        let line = rec.to_line();
        assert_eq!(line, "x,s,\t");
        let back = SequenceRecord::parse_line(&line, 1).unwrap();
        assert!(back.tokens.is_empty());
        assert_eq!(back.action, None);
    }

    #[test]
    fn edit_similarity_examples() {
        let a = ["Gl", "Gm", "Gh"];
        assert!((edit_similarity(&a, &a) - 1.0).abs() < 1e-12);
        let b = ["Gl", "Gm"];
        assert!((edit_similarity(&a, &b) - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        let empty: [&str; 0] = [];
        assert!((edit_similarity(&empty, &empty) - 1.0).abs() < 1e-12);
        assert!((edit_similarity(&a, &empty) - 0.0).abs() < 1e-12);
    }
}
