//! Devanagari → IAST romanization.
//!
//! A single left-to-right pass with one bit of state: whether the last
//! emitted consonant still owes its inherent `a`. A following vowel sign
//! replaces that `a`, a virāma cancels it, anything else settles it.
//!
//! Anusvāra is always `ṃ` (no nasal assimilation). Vedic accents and other
//! Devanagari codepoints without an IAST rendering are dropped, so the output
//! never contains Devanagari. Codepoints outside the block pass through.

use unicode_normalization::UnicodeNormalization;

const DEVANAGARI_BLOCK: std::ops::RangeInclusive<char> = '\u{0900}'..='\u{097F}';

/// How a single codepoint participates in the transduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    /// Consonant with its Latin base, carrying an inherent `a`.
    Consonant(&'static str),
    /// Independent vowel letter.
    Vowel(&'static str),
    /// Dependent vowel sign attached to the preceding consonant.
    VowelSign(&'static str),
    /// Suppresses the inherent vowel.
    Virama,
    /// Anusvāra, visarga, candrabindu, avagraha, digits, daṇḍa.
    Sign(&'static str),
    /// Modifies the preceding letter without settling its vowel (nukta,
    /// Vedic accents). Emits nothing.
    Transparent,
    /// Devanagari codepoint with no rendering. Emits nothing.
    Dropped,
    /// Outside the Devanagari block.
    Passthrough,
}

pub fn classify(c: char) -> Symbol {
    use Symbol::*;
    match c {
        'अ' => Vowel("a"),
        'आ' => Vowel("ā"),
        'इ' => Vowel("i"),
        'ई' => Vowel("ī"),
        'उ' => Vowel("u"),
        'ऊ' => Vowel("ū"),
        'ऋ' => Vowel("ṛ"),
        'ॠ' => Vowel("ṝ"),
        'ऌ' => Vowel("ḷ"),
        'ॡ' => Vowel("ḹ"),
        'ए' => Vowel("e"),
        'ऐ' => Vowel("ai"),
        'ओ' => Vowel("o"),
        'औ' => Vowel("au"),

        'क' => Consonant("k"),
        'ख' => Consonant("kh"),
        'ग' => Consonant("g"),
        'घ' => Consonant("gh"),
        'ङ' => Consonant("ṅ"),
        'च' => Consonant("c"),
        'छ' => Consonant("ch"),
        'ज' => Consonant("j"),
        'झ' => Consonant("jh"),
        'ञ' => Consonant("ñ"),
        'ट' => Consonant("ṭ"),
        'ठ' => Consonant("ṭh"),
        'ड' => Consonant("ḍ"),
        'ढ' => Consonant("ḍh"),
        'ण' => Consonant("ṇ"),
        'त' => Consonant("t"),
        'थ' => Consonant("th"),
        'द' => Consonant("d"),
        'ध' => Consonant("dh"),
        'न' => Consonant("n"),
        'प' => Consonant("p"),
        'फ' => Consonant("ph"),
        'ब' => Consonant("b"),
        'भ' => Consonant("bh"),
        'म' => Consonant("m"),
        'य' => Consonant("y"),
        'र' => Consonant("r"),
        'ल' => Consonant("l"),
        'ळ' => Consonant("ḷ"),
        'व' => Consonant("v"),
        'श' => Consonant("ś"),
        'ष' => Consonant("ṣ"),
        'स' => Consonant("s"),
        'ह' => Consonant("h"),

        'ा' => VowelSign("ā"),
        'ि' => VowelSign("i"),
        'ी' => VowelSign("ī"),
        'ु' => VowelSign("u"),
        'ू' => VowelSign("ū"),
        'ृ' => VowelSign("ṛ"),
        'ॄ' => VowelSign("ṝ"),
        'ॢ' => VowelSign("ḷ"),
        'ॣ' => VowelSign("ḹ"),
        'े' => VowelSign("e"),
        'ै' => VowelSign("ai"),
        'ो' => VowelSign("o"),
        'ौ' => VowelSign("au"),

        '्' => Virama,
        'ं' => Sign("ṃ"),
        'ः' => Sign("ḥ"),
        'ँ' => Sign("m\u{0310}"),
        'ऽ' => Sign("'"),
        'ॐ' => Sign("oṃ"),
        '।' | '॥' => Sign("."),
        '०' => Sign("0"),
        '१' => Sign("1"),
        '२' => Sign("2"),
        '३' => Sign("3"),
        '४' => Sign("4"),
        '५' => Sign("5"),
        '६' => Sign("6"),
        '७' => Sign("7"),
        '८' => Sign("8"),
        '९' => Sign("9"),

        '\u{093C}' | '\u{0951}'..='\u{0954}' => Transparent,
        c if DEVANAGARI_BLOCK.contains(&c) => Dropped,
        _ => Passthrough,
    }
}

pub fn transliterate(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + text.len() / 2);
    let mut owes_a = false;

    for c in text.chars() {
        match classify(c) {
            Symbol::Consonant(base) => {
                if owes_a {
                    out.push('a');
                }
                out.push_str(base);
                owes_a = true;
            }
            Symbol::VowelSign(vowel) => {
                out.push_str(vowel);
                owes_a = false;
            }
            Symbol::Virama => owes_a = false,
            Symbol::Transparent => {}
            other => {
                if owes_a {
                    out.push('a');
                    owes_a = false;
                }
                match other {
                    Symbol::Vowel(s) | Symbol::Sign(s) => out.push_str(s),
                    Symbol::Passthrough => out.push(c),
                    _ => {}
                }
            }
        }
    }
    if owes_a {
        out.push('a');
    }
    out.nfc().collect()
}

/// Share of non-whitespace codepoints that fall in U+0900–U+097F.
pub fn devanagari_ratio(text: &str) -> f64 {
    let (total, devanagari) = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .fold((0usize, 0usize), |(total, dev), c| {
            (total + 1, dev + usize::from(DEVANAGARI_BLOCK.contains(&c)))
        });
    if total == 0 {
        0.0
    } else {
        devanagari as f64 / total as f64
    }
}
