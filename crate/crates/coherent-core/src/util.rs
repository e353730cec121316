//! Small shared helpers: stable hashing and token normalization.

/// 64-bit FNV-1a. Used for state digests and cache keys; stable across
/// platforms and runs, unlike the default `std` hasher.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Word-boundary substring test (ASCII alphanumerics delimit words).
pub fn contains_word(text: &str, word: &str) -> bool {
    if word.is_empty() {
        return false;
    }
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(pos) = text[start..].find(word) {
        let at = start + pos;
        let before_ok = at == 0 || !bytes[at - 1].is_ascii_alphanumeric();
        let end = at + word.len();
        let after_ok = end >= bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if before_ok && after_ok {
            return true;
        }
        start = at + word.len();
    }
    false
}

/// Normalize a free-text token for id matching: trims, strips one layer of
/// angle brackets, lowercases, and collapses whitespace runs to `_`.
///
/// `"<Kitchen  Floor>"` and `"kitchen_floor"` normalize to the same token.
pub fn normalize_token(raw: &str) -> String {
    let mut s = raw.trim();
    if let Some(stripped) = s.strip_prefix('<') {
        s = stripped;
    }
    if let Some(stripped) = s.strip_suffix('>') {
        s = stripped;
    }
    let mut out = String::with_capacity(s.len());
    let mut in_gap = false;
    for ch in s.trim().chars() {
        if ch.is_whitespace() {
            in_gap = true;
        } else {
            if in_gap && !out.is_empty() {
                out.push('_');
            }
            in_gap = false;
            for lc in ch.to_lowercase() {
                out.push(lc);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_strips_brackets_and_spaces() {
        assert_eq!(normalize_token("<Kitchen  Floor>"), "kitchen_floor");
        assert_eq!(normalize_token("  robotic dog "), "robotic_dog");
        assert_eq!(normalize_token("apple"), "apple");
        assert_eq!(normalize_token("<apple>"), "apple");
    }

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), fnv1a64(b"a"));
        assert_ne!(fnv1a64(b"a"), fnv1a64(b"b"));
    }
}
