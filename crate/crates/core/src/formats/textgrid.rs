//! Praat TextGrid, long ("ooTextFile") dialect, interval tiers only.
//!
//! Times are written in the shortest decimal form that parses back to the
//! same `f64`, so `parse(write(doc)) == doc` holds bit for bit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::align::Alignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub xmin: f64,
    pub xmax: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tier {
    pub name: String,
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextGridDoc {
    pub xmin: f64,
    pub xmax: f64,
    pub tiers: Vec<Tier>,
}

impl TextGridDoc {
    /// Builds a document from sparse tiers: intervals must be sorted,
    /// non-overlapping and inside `[xmin, xmax]`; gaps become empty
    /// intervals.
    pub fn from_sparse(xmin: f64, xmax: f64, tiers: Vec<Tier>) -> Result<TextGridDoc, FormatError> {
        if !(xmin.is_finite() && xmax.is_finite() && xmin < xmax) {
            return Err(FormatError::InvalidTiers(format!("bad time range [{xmin}, {xmax}]")));
        }
        let mut out = Vec::with_capacity(tiers.len());
        for tier in tiers {
            let mut filled = Vec::with_capacity(tier.intervals.len() * 2 + 1);
            let mut t = xmin;
            for iv in tier.intervals {
                if !(iv.xmin >= t && iv.xmin < iv.xmax && iv.xmax <= xmax) {
                    return Err(FormatError::InvalidTiers(format!(
                        "tier {:?}: interval [{}, {}] overlaps, is empty or leaves [{xmin}, {xmax}]",
                        tier.name, iv.xmin, iv.xmax
                    )));
                }
                if iv.xmin > t {
                    filled.push(Interval {
                        xmin: t,
                        xmax: iv.xmin,
                        text: String::new(),
                    });
                }
                t = iv.xmax;
                filled.push(iv);
            }
            if t < xmax {
                filled.push(Interval {
                    xmin: t,
                    xmax,
                    text: String::new(),
                });
            }
            out.push(Tier {
                name: tier.name,
                intervals: filled,
            });
        }
        Ok(TextGridDoc { xmin, xmax, tiers: out })
    }

    /// "words" and "phones" tiers over `[0, duration]`.
    pub fn from_alignment(a: &Alignment) -> Result<TextGridDoc, FormatError> {
        let tier = |name: &str, ivs: &[crate::align::AlignedInterval]| Tier {
            name: name.to_string(),
            intervals: ivs
                .iter()
                .map(|i| Interval {
                    xmin: i.start,
                    xmax: i.end,
                    text: i.label.clone(),
                })
                .collect(),
        };
        TextGridDoc::from_sparse(0.0, a.duration, vec![tier("words", &a.words), tier("phones", &a.phones)])
    }

    pub fn tier(&self, name: &str) -> Option<&Tier> {
        self.tiers.iter().find(|t| t.name == name)
    }

    /// Every tier tiles `[xmin, xmax]` exactly.
    pub fn validate(&self) -> Result<(), FormatError> {
        let bad = |m: String| Err(FormatError::InvariantViolation(m));
        if !(self.xmin.is_finite() && self.xmax.is_finite() && self.xmin < self.xmax) {
            return bad(format!("bad time range [{}, {}]", self.xmin, self.xmax));
        }
        for tier in &self.tiers {
            let mut t = self.xmin;
            if tier.intervals.is_empty() {
                return bad(format!("tier {:?} has no intervals", tier.name));
            }
            for (i, iv) in tier.intervals.iter().enumerate() {
                if iv.xmin != t || iv.xmax <= iv.xmin {
                    return bad(format!(
                        "tier {:?} interval {} [{}, {}] does not continue at {t}",
                        tier.name,
                        i + 1,
                        iv.xmin,
                        iv.xmax
                    ));
                }
                t = iv.xmax;
            }
            if t != self.xmax {
                return bad(format!("tier {:?} ends at {t}, not {}", tier.name, self.xmax));
            }
        }
        Ok(())
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn write_textgrid(doc: &TextGridDoc) -> Result<String, FormatError> {
    doc.validate().map_err(|e| FormatError::InvalidTiers(e.to_string()))?;
    let mut o = String::new();
    o.push_str("File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n");
    let _ = writeln!(o, "xmin = {} ", doc.xmin);
    let _ = writeln!(o, "xmax = {} ", doc.xmax);
    if doc.tiers.is_empty() {
        o.push_str("tiers? <absent> \n");
        return Ok(o);
    }
    o.push_str("tiers? <exists> \n");
    let _ = writeln!(o, "size = {} ", doc.tiers.len());
    o.push_str("item []: \n");
    for (i, tier) in doc.tiers.iter().enumerate() {
        let _ = writeln!(o, "    item [{}]:", i + 1);
        o.push_str("        class = \"IntervalTier\" \n");
        let _ = writeln!(o, "        name = {} ", quote(&tier.name));
        let _ = writeln!(o, "        xmin = {} ", doc.xmin);
        let _ = writeln!(o, "        xmax = {} ", doc.xmax);
        let _ = writeln!(o, "        intervals: size = {} ", tier.intervals.len());
        for (j, iv) in tier.intervals.iter().enumerate() {
            let _ = writeln!(o, "        intervals [{}]:", j + 1);
            let _ = writeln!(o, "            xmin = {} ", iv.xmin);
            let _ = writeln!(o, "            xmax = {} ", iv.xmax);
            let _ = writeln!(o, "            text = {} ", quote(&iv.text));
        }
    }
    Ok(o)
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, FormatError> {
        Err(FormatError::Parse {
            line: self.line,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.s[self.pos..].chars().next() {
            if !c.is_whitespace() && c != '\u{feff}' {
                break;
            }
            if c == '\n' {
                self.line += 1;
            }
            self.pos += c.len_utf8();
        }
    }

    /// Matches `word` after optional whitespace; inner single spaces of
    /// `word` match any run of spaces or tabs.
    fn expect(&mut self, word: &str) -> Result<(), FormatError> {
        self.skip_ws();
        for (k, part) in word.split(' ').enumerate() {
            if k > 0 {
                let before = self.pos;
                while self.s[self.pos..].starts_with([' ', '\t']) {
                    self.pos += 1;
                }
                if before == self.pos {
                    return self.err(format!("expected {word:?}"));
                }
            }
            if !self.s[self.pos..].starts_with(part) {
                return self.err(format!("expected {word:?}"));
            }
            self.pos += part.len();
        }
        Ok(())
    }

    fn token(&mut self) -> &'a str {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.s[self.pos..].chars().next() {
            if c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.s[start..self.pos]
    }

    fn number(&mut self) -> Result<f64, FormatError> {
        let line = self.line;
        let t = self.token();
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(FormatError::Parse {
                line,
                message: format!("expected a number, found {t:?}"),
            }),
        }
    }

    fn count(&mut self) -> Result<usize, FormatError> {
        let line = self.line;
        let t = self.token();
        t.parse::<usize>().map_err(|_| FormatError::Parse {
            line,
            message: format!("expected a count, found {t:?}"),
        })
    }

    fn string(&mut self) -> Result<String, FormatError> {
        self.skip_ws();
        if !self.s[self.pos..].starts_with('"') {
            return self.err("expected a quoted string");
        }
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.s[self.pos..].chars().next() else {
                return self.err("unterminated string");
            };
            self.pos += c.len_utf8();
            if c == '"' {
                if self.s[self.pos..].starts_with('"') {
                    self.pos += 1;
                    out.push('"');
                } else {
                    return Ok(out);
                }
            } else {
                if c == '\n' {
                    self.line += 1;
                }
                out.push(c);
            }
        }
    }

    fn field_number(&mut self, name: &str) -> Result<f64, FormatError> {
        self.expect(name)?;
        self.expect("=")?;
        self.number()
    }

    fn field_string(&mut self, name: &str) -> Result<String, FormatError> {
        self.expect(name)?;
        self.expect("=")?;
        self.string()
    }
}

/// Parses the long dialect. CRLF line ends and any indentation are
/// accepted; quoted text is kept verbatim.
pub fn parse_textgrid(text: &str) -> Result<TextGridDoc, FormatError> {
    let mut c = Cursor { s: text, pos: 0, line: 1 };
    if c.field_string("File type").ok().as_deref() != Some("ooTextFile") {
        return Err(FormatError::Parse {
            line: 1,
            message: "missing File type = \"ooTextFile\" header".into(),
        });
    }
    if c.field_string("Object class")? != "TextGrid" {
        return c.err("object class is not TextGrid");
    }
    let xmin = c.field_number("xmin")?;
    let xmax = c.field_number("xmax")?;
    c.expect("tiers?")?;
    let mut tiers = Vec::new();
    match c.token() {
        "<absent>" => {}
        "<exists>" => {
            c.expect("size")?;
            c.expect("=")?;
            let n = c.count()?;
            c.expect("item []:")?;
            for i in 1..=n {
                c.expect(&format!("item [{i}]:"))?;
                if c.field_string("class")? != "IntervalTier" {
                    return c.err("only IntervalTier is supported");
                }
                let name = c.field_string("name")?;
                let (txmin, txmax) = (c.field_number("xmin")?, c.field_number("xmax")?);
                if txmin != xmin || txmax != xmax {
                    return Err(FormatError::InvariantViolation(format!(
                        "tier {name:?} spans [{txmin}, {txmax}], not [{xmin}, {xmax}]"
                    )));
                }
                c.expect("intervals: size")?;
                c.expect("=")?;
                let m = c.count()?;
                let mut intervals = Vec::with_capacity(m);
                for j in 1..=m {
                    c.expect(&format!("intervals [{j}]:"))?;
                    let xmin = c.field_number("xmin")?;
                    let xmax = c.field_number("xmax")?;
                    let text = c.field_string("text")?;
                    intervals.push(Interval { xmin, xmax, text });
                }
                tiers.push(Tier { name, intervals });
            }
        }
        other => return c.err(format!("expected <exists> or <absent>, found {other:?}")),
    }
    c.skip_ws();
    if c.pos != text.len() {
        return c.err("trailing content");
    }
    let doc = TextGridDoc { xmin, xmax, tiers };
    doc.validate()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64, t: &str) -> Interval {
        Interval {
            xmin: a,
            xmax: b,
            text: t.into(),
        }
    }

    #[test]
    fn gap_filling() {
        let empty = TextGridDoc::from_sparse(
            0.0,
            1.0,
            vec![Tier {
                name: "w".into(),
                intervals: vec![],
            }],
        )
        .unwrap();
        assert_eq!(empty.tiers[0].intervals, vec![iv(0.0, 1.0, "")]);
        let one = TextGridDoc::from_sparse(
            0.0,
            1.0,
            vec![Tier {
                name: "w".into(),
                intervals: vec![iv(0.2, 0.5, "pan")],
            }],
        )
        .unwrap();
        assert_eq!(one.tiers[0].intervals, vec![iv(0.0, 0.2, ""), iv(0.2, 0.5, "pan"), iv(0.5, 1.0, "")]);
        let overlap = TextGridDoc::from_sparse(
            0.0,
            1.0,
            vec![Tier {
                name: "w".into(),
                intervals: vec![iv(0.2, 0.5, "a"), iv(0.4, 0.6, "b")],
            }],
        );
        assert!(matches!(overlap, Err(FormatError::InvalidTiers(_))));
    }

    #[test]
    fn written_form() {
        let doc = TextGridDoc::from_sparse(
            0.0,
            1.0,
            vec![Tier {
                name: "w".into(),
                intervals: vec![iv(0.25, 0.5, "say \"hi\"")],
            }],
        )
        .unwrap();
        let text = write_textgrid(&doc).unwrap();
        assert!(text.starts_with("File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\nxmin = 0 \nxmax = 1 \n"));
        assert!(text.contains("            text = \"say \"\"hi\"\"\" \n"));
        assert_eq!(parse_textgrid(&text).unwrap(), doc);
        assert_eq!(parse_textgrid(&text.replace('\n', "\r\n")).unwrap(), doc);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_textgrid("File type = \"x\"\n"), Err(FormatError::Parse { line: 1, .. })));
        let empty = "File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\nxmin = 0 \nxmax = 1 \ntiers? <absent> \n";
        assert_eq!(parse_textgrid(empty).unwrap().tiers.len(), 0);
        let doc = TextGridDoc::from_sparse(
            0.0,
            1.0,
            vec![Tier {
                name: "w".into(),
                intervals: vec![iv(0.2, 0.5, "a")],
            }],
        )
        .unwrap();
        let text = write_textgrid(&doc).unwrap().replace("xmax = 0.5 ", "xmax = 0.6 ");
        assert!(matches!(parse_textgrid(&text), Err(FormatError::InvariantViolation(_))));
        let text = write_textgrid(&doc).unwrap().replace("intervals [2]", "intervals [7]");
        assert!(matches!(parse_textgrid(&text), Err(FormatError::Parse { line: 19, .. })));
    }
}
