//! Text model format, version 1:
//!
//! ```text
//! speechtools-am 1
//! fingerprint <feature fingerprint>
//! dim <D>
//! var-floor <f>
//! units <N>
//! unit <label>                      repeated N times, each followed by
//! state <i> <self-loop> <K>         three state blocks, each followed by
//! mix <weight>                      K mixture blocks of three lines
//! mean <D values>
//! var <D values>
//! ```
//!
//! Numbers use the shortest decimal form that parses back to the same
//! `f64`, so a saved model scores bit-identically after loading.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{AcousticModel, AmError, Gmm, PhoneHmm, Unit, STATES};

const MAGIC: &str = "speechtools-am";
const VERSION: u32 = 1;

fn join(v: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{x}").unwrap();
    }
    s
}

impl AcousticModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC} {VERSION}").unwrap();
        writeln!(out, "fingerprint {}", self.fingerprint).unwrap();
        writeln!(out, "dim {}", self.dim).unwrap();
        writeln!(out, "var-floor {}", self.var_floor).unwrap();
        writeln!(out, "units {}", self.hmms.len()).unwrap();
        for h in self.hmms.values() {
            writeln!(out, "unit {}", h.unit).unwrap();
            for (i, g) in h.states.iter().enumerate() {
                writeln!(out, "state {i} {} {}", h.self_loop[i], g.components()).unwrap();
                for k in 0..g.components() {
                    writeln!(out, "mix {}", g.weights()[k]).unwrap();
                    writeln!(out, "mean {}", join(&g.means()[k])).unwrap();
                    writeln!(out, "var {}", join(&g.vars()[k])).unwrap();
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<AcousticModel, AmError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
        let mut last = 0;
        let mut next = |key: &str| -> Result<(usize, String), AmError> {
            let (n, l) = lines.next().ok_or(AmError::ModelFormat {
                line: last + 1,
                message: format!("unexpected end of file, expected `{key}`"),
            })?;
            last = n;
            let rest = l
                .strip_prefix(key)
                .and_then(|r| if r.is_empty() { Some("") } else { r.strip_prefix(' ') })
                .ok_or(AmError::ModelFormat {
                    line: n,
                    message: format!("expected `{key}`"),
                })?;
            Ok((n, rest.to_string()))
        };
        let bad = |line: usize, m: &str| AmError::ModelFormat { line, message: m.to_string() };
        let num = |line: usize, s: &str| -> Result<f64, AmError> { s.parse::<f64>().map_err(|_| bad(line, &format!("bad number {s:?}"))) };
        let count = |line: usize, s: &str| -> Result<usize, AmError> { s.parse::<usize>().map_err(|_| bad(line, &format!("bad count {s:?}"))) };

        let (n, v) = next(MAGIC)?;
        if v != VERSION.to_string() {
            return Err(bad(n, &format!("unsupported version {v:?}")));
        }
        let (_, fingerprint) = next("fingerprint")?;
        let (n, d) = next("dim")?;
        let dim = count(n, &d)?;
        let (n, f) = next("var-floor")?;
        let var_floor = num(n, &f)?;
        let (n, u) = next("units")?;
        let units = count(n, &u)?;

        let mut hmms = BTreeMap::new();
        for _ in 0..units {
            let (n, label) = next("unit")?;
            let unit: Unit = label.parse().map_err(|_| bad(n, &format!("unknown unit {label:?}")))?;
            let mut states = Vec::with_capacity(STATES);
            let mut self_loop = Vec::with_capacity(STATES);
            for s in 0..STATES {
                let (n, head) = next("state")?;
                let parts: Vec<&str> = head.split(' ').collect();
                if parts.len() != 3 || count(n, parts[0])? != s {
                    return Err(bad(n, "expected `state <index> <self-loop> <mixtures>`"));
                }
                let p = num(n, parts[1])?;
                if !(0.0..1.0).contains(&p) {
                    return Err(bad(n, "self-loop probability outside [0, 1)"));
                }
                let k = count(n, parts[2])?;
                if k == 0 {
                    return Err(bad(n, "state needs at least one mixture"));
                }
                let (mut w, mut m, mut v) = (Vec::new(), Vec::new(), Vec::new());
                for _ in 0..k {
                    let (n, x) = next("mix")?;
                    w.push(num(n, &x)?);
                    for (key, dst) in [("mean", &mut m), ("var", &mut v)] {
                        let (n, x) = next(key)?;
                        let vals = x.split(' ').map(|s| num(n, s)).collect::<Result<Vec<_>, _>>()?;
                        if vals.len() != dim {
                            return Err(bad(n, &format!("expected {dim} values")));
                        }
                        dst.push(vals);
                    }
                }
                if v.iter().flatten().any(|&x| x <= 0.0) {
                    return Err(bad(n, "non-positive variance"));
                }
                states.push(Gmm::new(w, m, v));
                self_loop.push(p);
            }
            if hmms.insert(unit, PhoneHmm { unit, states, self_loop }).is_some() {
                return Err(bad(n, &format!("duplicate unit {unit}")));
            }
        }
        AcousticModel::new(hmms, fingerprint, dim, var_floor)
    }
}
