//! Text canonicalization shared by ingestion and every matcher.
//!
//! Record text is brought to NFKC once, when a record is built. NFKC folds
//! full-width Latin letters, digits and punctuation to their half-width
//! forms, so `ＣＮＮ` and `CNN` compare equal after this step. Case folding
//! happens at match time: a term matches a field when
//! `fold(term)` is a substring of `fold(field)`, with
//! `fold(s) = nfkc(s).to_lowercase()`.

use std::borrow::Cow;

use unicode_normalization::{IsNormalized, UnicodeNormalization, is_nfkc_quick};

/// Returns `s` in NFKC form, borrowing when it already is.
pub fn canonicalize(s: &str) -> Cow<'_, str> {
    if is_stable_fast(s.as_bytes()) {
        return Cow::Borrowed(s);
    }
    match is_nfkc_quick(s.chars()) {
        IsNormalized::Yes => Cow::Borrowed(s),
        _ => {
            let normalized: String = s.nfkc().collect();
            if normalized == s {
                Cow::Borrowed(s)
            } else {
                Cow::Owned(normalized)
            }
        }
    }
}

/// True when every character is ASCII, a CJK ideograph in U+4000..=U+9FFF
/// or common CJK punctuation. Such text is already NFKC: none of these
/// characters decompose, all are starters, and no two of them compose.
fn is_stable_fast(b: &[u8]) -> bool {
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let tail = |ok: fn(u8) -> bool| b.get(i + 1) == Some(&0x80) && b.get(i + 2).is_some_and(|&t| ok(t));
        if c < 0x80 {
            i += 1;
        } else if (0xE4..=0xE9).contains(&c)
            || (c == 0xE3 && tail(|t| matches!(t, 0x81 | 0x82 | 0x88..=0x91 | 0x94 | 0x95)))
            || (c == 0xE2 && tail(|t| matches!(t, 0x98 | 0x99 | 0x9C | 0x9D)))
        {
            i += 3;
        } else {
            return false;
        }
    }
    true
}

/// Owned variant of [`canonicalize`] that reuses the allocation when possible.
pub fn canonicalize_owned(s: String) -> String {
    match canonicalize(&s) {
        Cow::Borrowed(_) => s,
        Cow::Owned(n) => n,
    }
}

/// Full match folding: NFKC then Unicode lowercase.
pub fn fold(s: &str) -> String {
    canonicalize(s).to_lowercase()
}

/// Lowercases text that is already canonical.
///
/// Borrows when the only case differences are ASCII letters; matchers built
/// with ASCII case-insensitivity accept that borrowed form directly.
pub fn lowercase_for_match(s: &str) -> Cow<'_, str> {
    if is_stable_fast(s.as_bytes()) || !has_non_ascii_cased(s) {
        Cow::Borrowed(s)
    } else {
        Cow::Owned(s.to_lowercase())
    }
}

fn has_non_ascii_cased(s: &str) -> bool {
    s.chars().any(|c| {
        if c.is_ascii() {
            return false;
        }
        let mut lower = c.to_lowercase();
        !(lower.next() == Some(c) && lower.next().is_none())
    })
}
