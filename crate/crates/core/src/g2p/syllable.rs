//! Maximal-onset syllabification.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::inventory::{Phone, PhoneSeq, Voicing};
use super::G2pError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Syllable {
    pub onset: PhoneSeq,
    pub nucleus: Phone,
    pub coda: PhoneSeq,
}

impl Syllable {
    pub fn phones(&self) -> PhoneSeq {
        let mut out = self.onset.clone();
        out.0.push(self.nucleus);
        out.extend(&self.coda);
        out
    }
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.phones())
    }
}

/// An onset is legal when no sonorant precedes an obstruent inside it and it
/// holds at most four consonants. Polish tolerates long obstruent onsets
/// (`strz-`, `chrz-`, `pstr-`), so obstruent order is not constrained.
pub fn legal_onset(cluster: &[Phone]) -> bool {
    if cluster.len() > 4 {
        return false;
    }
    !cluster.windows(2).any(|w| w[0].voicing() == Voicing::Sonorant && w[1].is_obstruent())
}

/// One syllable per vowel. Consonants before the first vowel form the first
/// onset and consonants after the last vowel the last coda; each
/// intervocalic cluster gives its longest legal suffix to the right.
pub fn syllabify(p: &PhoneSeq) -> Result<Vec<Syllable>, G2pError> {
    let phones = p.as_slice();
    let nuclei: Vec<usize> = phones.iter().enumerate().filter(|(_, x)| x.is_vowel()).map(|(i, _)| i).collect();
    if nuclei.is_empty() {
        return Err(G2pError::NoNucleus(p.to_string()));
    }

    let mut out = Vec::with_capacity(nuclei.len());
    let mut onset_start = 0;
    for (k, &n) in nuclei.iter().enumerate() {
        let coda_end = match nuclei.get(k + 1) {
            Some(&next) => {
                let cluster = &phones[n + 1..next];
                let split = (0..=cluster.len()).find(|&s| legal_onset(&cluster[s..])).unwrap_or(cluster.len());
                n + 1 + split
            }
            None => phones.len(),
        };
        out.push(Syllable {
            onset: PhoneSeq(phones[onset_start..n].to_vec()),
            nucleus: phones[n],
            coda: PhoneSeq(phones[n + 1..coda_end].to_vec()),
        });
        onset_start = coda_end;
    }
    Ok(out)
}

pub fn join(syllables: &[Syllable]) -> PhoneSeq {
    let mut out = PhoneSeq::new();
    for s in syllables {
        out.extend(&s.phones());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> PhoneSeq {
        s.parse().unwrap()
    }

    fn shape(sy: &[Syllable]) -> Vec<(String, String, String)> {
        sy.iter().map(|s| (s.onset.to_string(), s.nucleus.to_string(), s.coda.to_string())).collect()
    }

    /// Independent oracle: enumerate every way of cutting each intervocalic
    /// cluster, keep the cuts whose onsets are legal, and pick the one with
    /// the longest onsets (compared left to right).
    fn brute_force(p: &PhoneSeq) -> Vec<(String, String, String)> {
        let ph = p.as_slice();
        let nuclei: Vec<usize> = (0..ph.len()).filter(|&i| ph[i].is_vowel()).collect();
        let gaps: Vec<(usize, usize)> = nuclei.windows(2).map(|w| (w[0] + 1, w[1])).collect();
        let mut best: Option<Vec<usize>> = None;
        let mut best_onsets: Vec<usize> = vec![];
        let total: usize = gaps.iter().map(|(a, b)| b - a + 1).product();
        for mut code in 0..total {
            let mut cuts = vec![];
            let mut ok = true;
            for &(a, b) in &gaps {
                let c = a + code % (b - a + 1);
                code /= b - a + 1;
                if !legal_onset(&ph[c..b]) {
                    ok = false;
                }
                cuts.push(c);
            }
            if !ok {
                continue;
            }
            let onsets: Vec<usize> = cuts.iter().zip(&gaps).map(|(c, (_, b))| b - c).collect();
            if best.is_none() || onsets > best_onsets {
                best_onsets = onsets;
                best = Some(cuts);
            }
        }
        let cuts = best.unwrap();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(ph.len());
        nuclei
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let on = PhoneSeq(ph[bounds[k]..n].to_vec()).to_string();
                let co = PhoneSeq(ph[n + 1..bounds[k + 1]].to_vec()).to_string();
                (on, ph[n].to_string(), co)
            })
            .collect()
    }

    #[test]
    fn examples() {
        let s = syllabify(&seq("p a n")).unwrap();
        assert_eq!(shape(&s), vec![("p".into(), "a".into(), "n".into())]);
        let s = syllabify(&seq("p I t a")).unwrap();
        assert_eq!(shape(&s), vec![("p".into(), "I".into(), "".into()), ("t".into(), "a".into(), "".into())]);
        assert_eq!(shape(&s), brute_force(&seq("p I t a")));
        let s = syllabify(&seq("v u w")).unwrap();
        assert_eq!(shape(&s), vec![("v".into(), "u".into(), "w".into())]);
    }

    #[test]
    fn sonorant_obstruent_splits() {
        let s = syllabify(&seq("m a r t a")).unwrap();
        assert_eq!(s[0].coda.to_string(), "r");
        assert_eq!(s[1].onset.to_string(), "t");
        let s = syllabify(&seq("S tS e b Z e S I n")).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[1].onset.to_string(), "b Z");
    }

    #[test]
    fn no_nucleus() {
        assert!(matches!(syllabify(&seq("p s t")), Err(G2pError::NoNucleus(_))));
        assert!(syllabify(&seq("")).is_err());
    }

    use proptest::prelude::*;

    fn phone_seq() -> impl Strategy<Value = PhoneSeq> {
        prop::collection::vec(0..Phone::count(), 1..14).prop_map(|ix| {
            let all: Vec<Phone> = Phone::all().collect();
            PhoneSeq(ix.into_iter().map(|i| all[i]).collect())
        })
    }

    proptest! {
        #[test]
        fn concatenation_identity(p in phone_seq()) {
            match syllabify(&p) {
                Ok(s) => {
                    prop_assert_eq!(join(&s), p.clone());
                    prop_assert_eq!(s.len(), p.iter().filter(|x| x.is_vowel()).count());
                    prop_assert_eq!(shape(&s), brute_force(&p));
                }
                Err(_) => prop_assert!(p.iter().all(|x| !x.is_vowel())),
            }
        }
    }
}
