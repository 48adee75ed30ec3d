//! Closed phone inventory: a lightly modified Polish SAMPA.
//!
//! Palatal consonants are written with a trailing `i` (`si`, `zi`, `tsi`,
//! `dzi`, `ni`) and the nasal vowels as `en` / `on`. `G` is the voiced
//! partner of `x`; it only surfaces through voicing assimilation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Voicing {
    Voiced,
    Voiceless,
    Sonorant,
    Vowel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhoneClass {
    Vowel,
    Plosive,
    Fricative,
    Affricate,
    Nasal,
    Approximant,
}

struct Entry {
    symbol: &'static str,
    voicing: Voicing,
    class: PhoneClass,
    pair: Option<&'static str>,
}

const fn e(symbol: &'static str, voicing: Voicing, class: PhoneClass, pair: Option<&'static str>) -> Entry {
    Entry { symbol, voicing, class, pair }
}

use PhoneClass as C;
use Voicing as V;

static TABLE: &[Entry] = &[
    e("a", V::Vowel, C::Vowel, None),
    e("e", V::Vowel, C::Vowel, None),
    e("i", V::Vowel, C::Vowel, None),
    e("I", V::Vowel, C::Vowel, None),
    e("o", V::Vowel, C::Vowel, None),
    e("u", V::Vowel, C::Vowel, None),
    e("en", V::Vowel, C::Vowel, None),
    e("on", V::Vowel, C::Vowel, None),
    e("p", V::Voiceless, C::Plosive, Some("b")),
    e("b", V::Voiced, C::Plosive, Some("p")),
    e("t", V::Voiceless, C::Plosive, Some("d")),
    e("d", V::Voiced, C::Plosive, Some("t")),
    e("k", V::Voiceless, C::Plosive, Some("g")),
    e("g", V::Voiced, C::Plosive, Some("k")),
    e("f", V::Voiceless, C::Fricative, Some("v")),
    e("v", V::Voiced, C::Fricative, Some("f")),
    e("s", V::Voiceless, C::Fricative, Some("z")),
    e("z", V::Voiced, C::Fricative, Some("s")),
    e("S", V::Voiceless, C::Fricative, Some("Z")),
    e("Z", V::Voiced, C::Fricative, Some("S")),
    e("si", V::Voiceless, C::Fricative, Some("zi")),
    e("zi", V::Voiced, C::Fricative, Some("si")),
    e("x", V::Voiceless, C::Fricative, Some("G")),
    e("G", V::Voiced, C::Fricative, Some("x")),
    e("ts", V::Voiceless, C::Affricate, Some("dz")),
    e("dz", V::Voiced, C::Affricate, Some("ts")),
    e("tS", V::Voiceless, C::Affricate, Some("dZ")),
    e("dZ", V::Voiced, C::Affricate, Some("tS")),
    e("tsi", V::Voiceless, C::Affricate, Some("dzi")),
    e("dzi", V::Voiced, C::Affricate, Some("tsi")),
    e("m", V::Sonorant, C::Nasal, None),
    e("n", V::Sonorant, C::Nasal, None),
    e("ni", V::Sonorant, C::Nasal, None),
    e("N", V::Sonorant, C::Nasal, None),
    e("l", V::Sonorant, C::Approximant, None),
    e("r", V::Sonorant, C::Approximant, None),
    e("w", V::Sonorant, C::Approximant, None),
    e("j", V::Sonorant, C::Approximant, None),
];

/// A member of the fixed inventory. Cheap to copy; compares by identity.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phone(u8);

impl Phone {
    pub fn all() -> impl Iterator<Item = Phone> {
        (0..TABLE.len() as u8).map(Phone)
    }

    pub fn count() -> usize {
        TABLE.len()
    }

    pub fn from_symbol(symbol: &str) -> Option<Phone> {
        TABLE.iter().position(|e| e.symbol == symbol).map(|i| Phone(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn symbol(self) -> &'static str {
        TABLE[self.index()].symbol
    }

    pub fn voicing(self) -> Voicing {
        TABLE[self.index()].voicing
    }

    pub fn class(self) -> PhoneClass {
        TABLE[self.index()].class
    }

    pub fn is_vowel(self) -> bool {
        self.voicing() == Voicing::Vowel
    }

    pub fn is_obstruent(self) -> bool {
        matches!(self.voicing(), Voicing::Voiced | Voicing::Voiceless)
    }

    /// Voicing partner of an obstruent.
    pub fn pair(self) -> Option<Phone> {
        TABLE[self.index()].pair.map(|s| Phone::from_symbol(s).expect("pair table is closed"))
    }

    pub fn devoiced(self) -> Phone {
        match self.voicing() {
            Voicing::Voiced => self.pair().unwrap_or(self),
            _ => self,
        }
    }

    pub fn voiced(self) -> Phone {
        match self.voicing() {
            Voicing::Voiceless => self.pair().unwrap_or(self),
            _ => self,
        }
    }

    /// Returns this obstruent with the voicing of `other`. Non-obstruents
    /// and non-obstruent targets are returned unchanged.
    pub fn with_voicing_of(self, other: Phone) -> Phone {
        match other.voicing() {
            Voicing::Voiced if self.is_obstruent() => self.voiced(),
            Voicing::Voiceless if self.is_obstruent() => self.devoiced(),
            _ => self,
        }
    }
}

impl fmt::Debug for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Phone({})", self.symbol())
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown phone symbol {0:?}")]
pub struct UnknownPhone(pub String);

impl FromStr for Phone {
    type Err = UnknownPhone;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phone::from_symbol(s).ok_or_else(|| UnknownPhone(s.to_string()))
    }
}

impl Serialize for Phone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Phone {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered phone sequence. Every element is an inventory member by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhoneSeq(pub Vec<Phone>);

impl PhoneSeq {
    pub fn new() -> Self {
        PhoneSeq(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Phone> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Phone] {
        &self.0
    }

    pub fn extend(&mut self, other: &PhoneSeq) {
        self.0.extend_from_slice(&other.0);
    }
}

impl From<Vec<Phone>> for PhoneSeq {
    fn from(v: Vec<Phone>) -> Self {
        PhoneSeq(v)
    }
}

impl FromStr for PhoneSeq {
    type Err = UnknownPhone;

    /// Whitespace-separated symbols.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split_whitespace().map(str::parse).collect::<Result<Vec<_>, _>>().map(PhoneSeq)
    }
}

impl fmt::Display for PhoneSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(p.symbol())?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a PhoneSeq {
    type Item = &'a Phone;
    type IntoIter = std::slice::Iter<'a, Phone>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

fn voicing_name(v: Voicing) -> &'static str {
    match v {
        Voicing::Voiced => "voiced",
        Voicing::Voiceless => "voiceless",
        Voicing::Sonorant => "sonorant",
        Voicing::Vowel => "vowel",
    }
}

fn class_name(c: PhoneClass) -> &'static str {
    match c {
        C::Vowel => "vowel",
        C::Plosive => "plosive",
        C::Fricative => "fricative",
        C::Affricate => "affricate",
        C::Nasal => "nasal",
        C::Approximant => "approximant",
    }
}

/// Machine-readable inventory table: `symbol\tvoicing\tclass\tpair` with a
/// header line; `-` marks phones without a voicing partner.
pub fn inventory_table() -> String {
    let mut out = String::from("symbol\tvoicing\tclass\tpair\n");
    for p in Phone::all() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.symbol(),
            voicing_name(p.voicing()),
            class_name(p.class()),
            p.pair().map(Phone::symbol).unwrap_or("-")
        ));
    }
    out
}
