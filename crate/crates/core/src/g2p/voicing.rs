//! Obstruent voicing inside words and across word boundaries.

use super::inventory::{Phone, PhoneSeq};

/// Regressive assimilation inside obstruent clusters plus final devoicing:
/// every obstruent takes the voicing of the obstruent that follows it, and
/// a word-final cluster is voiceless.
pub fn word_internal(seq: &mut PhoneSeq) {
    let p = &mut seq.0;
    if let Some(last) = p.last_mut() {
        *last = last.devoiced();
    }
    for i in (0..p.len().saturating_sub(1)).rev() {
        if p[i].is_obstruent() && p[i + 1].is_obstruent() {
            p[i] = p[i].with_voicing_of(p[i + 1]);
        }
    }
}

/// Length of the trailing obstruent cluster.
fn final_cluster_len(p: &[Phone]) -> usize {
    p.iter().rev().take_while(|x| x.is_obstruent()).count()
}

fn triggers_voicing(p: Phone) -> bool {
    // `v` follows the voicing of its neighbours but never spreads its own
    p.is_obstruent() && p.symbol() != "v"
}

/// Cross-word pass over one phrase (a run of words between punctuation).
///
/// Every word-final obstruent cluster is voiceless, except that a single
/// final obstruent takes the voicing of an obstruent that starts the next
/// word of the phrase. Processed right to left, so the result for each word
/// depends only on itself and its already-final right neighbour; applying
/// the pass twice gives the same result as applying it once.
pub fn sandhi_phrase(words: &mut [PhoneSeq]) {
    for i in (0..words.len()).rev() {
        let next_onset = words.get(i + 1).and_then(|w| w.0.first().copied());
        let w = &mut words[i].0;
        let n = final_cluster_len(w);
        if n == 0 {
            continue;
        }
        let len = w.len();
        for x in &mut w[len - n..] {
            *x = x.devoiced();
        }
        if n == 1 {
            if let Some(onset) = next_onset.filter(|&o| triggers_voicing(o)) {
                w[len - 1] = w[len - 1].with_voicing_of(onset);
            }
        }
    }
}

/// Attaches a one-consonant preposition to the following word: the
/// preposition phone takes the voicing of the word onset when that onset is
/// an obstruent, and stays voiced otherwise.
pub fn attach_preposition(prep: Phone, word: &PhoneSeq) -> PhoneSeq {
    let head = match word.0.first() {
        Some(&o) if o.is_obstruent() => prep.with_voicing_of(o),
        _ => prep.voiced(),
    };
    let mut out = vec![head];
    out.extend_from_slice(word.as_slice());
    PhoneSeq(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> PhoneSeq {
        s.parse().unwrap()
    }

    #[test]
    fn final_devoicing_and_clusters() {
        let mut s = seq("ts u Z");
        word_internal(&mut s);
        assert_eq!(s.to_string(), "ts u S");
        let mut s = seq("b a b k a");
        word_internal(&mut s);
        assert_eq!(s.to_string(), "b a p k a");
        let mut s = seq("v S I s t k o");
        word_internal(&mut s);
        assert_eq!(s.to_string(), "f S I s t k o");
        let mut s = seq("g v j a z d");
        word_internal(&mut s);
        assert_eq!(s.to_string(), "g v j a s t");
    }

    #[test]
    fn cross_word_single_obstruent_assimilates() {
        let mut w = vec![seq("t a k"), seq("b Z en tS I")];
        sandhi_phrase(&mut w);
        assert_eq!(w[0].to_string(), "t a g");
    }

    #[test]
    fn cross_word_cluster_stays_voiceless() {
        let mut w = vec![seq("x S on S tS"), seq("b Z m i")];
        sandhi_phrase(&mut w);
        assert_eq!(w[0].to_string(), "x S on S tS");
    }

    #[test]
    fn v_onset_does_not_trigger() {
        let mut w = vec![seq("t a k"), seq("v j e l e")];
        sandhi_phrase(&mut w);
        assert_eq!(w[0].to_string(), "t a k");
    }

    #[test]
    fn phrase_final_devoiced() {
        let mut w = vec![seq("v u z")];
        sandhi_phrase(&mut w);
        assert_eq!(w[0].to_string(), "v u s");
    }

    #[test]
    fn preposition_attachment() {
        let v = Phone::from_symbol("v").unwrap();
        let z = Phone::from_symbol("z").unwrap();
        assert_eq!(attach_preposition(v, &seq("S tS e")).to_string(), "f S tS e");
        assert_eq!(attach_preposition(v, &seq("g on S")).to_string(), "v g on S");
        assert_eq!(attach_preposition(z, &seq("t e g o")).to_string(), "s t e g o");
        assert_eq!(attach_preposition(z, &seq("o k a")).to_string(), "z o k a");
    }
}
