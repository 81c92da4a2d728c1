//! Character classes used by preprocessing, the correction rules and vote
//! canonicalization.

/// Han ideographs, including the extension blocks and compatibility ideographs.
pub fn is_han(c: char) -> bool {
    matches!(c as u32,
        0x3007
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x2F800..=0x2FA1F
        | 0x30000..=0x3134F)
}

/// True if the string contains at least one Han ideograph.
pub fn contains_han(s: &str) -> bool {
    s.chars().any(is_han)
}

/// Codepoints that start or form an emoji on their own.
pub fn is_emoji_base(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1F02F      // mahjong
        | 0x1F0A0..=0x1F0FF    // playing cards
        | 0x1F170..=0x1F19A    // enclosed alphanumerics (squared letters)
        | 0x1F1E6..=0x1F1FF    // regional indicators
        | 0x1F201..=0x1F251    // enclosed ideographic supplement
        | 0x1F300..=0x1F5FF    // misc symbols and pictographs
        | 0x1F600..=0x1F64F    // emoticons
        | 0x1F680..=0x1F6FF    // transport and map
        | 0x1F700..=0x1F7FF    // alchemical, geometric shapes ext
        | 0x1F800..=0x1F8FF    // supplemental arrows c
        | 0x1F900..=0x1F9FF    // supplemental symbols and pictographs
        | 0x1FA00..=0x1FAFF    // chess, symbols and pictographs ext-a
        | 0x2600..=0x26FF      // misc symbols
        | 0x2700..=0x27BF      // dingbats
        | 0x231A..=0x231B
        | 0x2328
        | 0x23CF
        | 0x23E9..=0x23F3
        | 0x23F8..=0x23FA
        | 0x2B05..=0x2B07
        | 0x2B1B..=0x2B1C
        | 0x2B50
        | 0x2B55
        | 0x2934..=0x2935
        | 0x3030
        | 0x303D
        | 0x3297
        | 0x3299)
}

/// Codepoints that only modify or join emoji: variation selectors, ZWJ,
/// skin-tone modifiers, the keycap combiner and tag characters.
pub fn is_emoji_modifier(c: char) -> bool {
    matches!(c as u32,
        0xFE0E..=0xFE0F
        | 0x200D
        | 0x1F3FB..=0x1F3FF
        | 0x20E3
        | 0xE0020..=0xE007F)
}

/// Any codepoint that can take part in an emoji sequence.
pub fn is_emoji_codepoint(c: char) -> bool {
    is_emoji_base(c) || is_emoji_modifier(c)
}

/// ASCII, general, CJK and full-width punctuation and quotation marks.
pub fn is_punctuation(c: char) -> bool {
    if c.is_ascii_punctuation() {
        return true;
    }
    matches!(c as u32,
        0x00A1..=0x00BF
        | 0x2010..=0x205E
        | 0x2E00..=0x2E7F
        | 0x3001..=0x3003
        | 0x3008..=0x3011
        | 0x3014..=0x301F
        | 0x30FB
        | 0xFE10..=0xFE19
        | 0xFE30..=0xFE6F
        | 0xFF01..=0xFF0F
        | 0xFF1A..=0xFF20
        | 0xFF3B..=0xFF40
        | 0xFF5B..=0xFF65)
}

/// Maps full-width ASCII variants and the ideographic space onto ASCII.
pub fn fold_width(c: char) -> char {
    match c as u32 {
        0x3000 => ' ',
        cp @ 0xFF01..=0xFF5E => char::from_u32(cp - 0xFEE0).unwrap_or(c),
        _ => c,
    }
}

/// Characters that may appear in an @-mention handle.
pub fn is_handle_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | '·')
}
