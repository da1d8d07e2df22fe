//! Shared text primitives: canonical forms, word splitting, byte decoding.

use unicode_normalization::UnicodeNormalization;

/// Canonical form used for tags, thesaurus concepts, stopwords and keywords:
/// trimmed, NFC-normalized, lowercased. Accents are preserved.
pub fn canonical(s: &str) -> String {
    let lowered: String = s.trim().nfc().collect::<String>().to_lowercase();
    lowered.nfc().collect()
}

/// Words are maximal runs of non-whitespace characters.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Tokens fed to encoders: canonical text split on anything that is not
/// alphanumeric or an intra-word hyphen.
pub fn encoder_tokens(text: &str) -> Vec<String> {
    let canon = canonical(text);
    canon
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .map(|t| t.trim_matches('-'))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeError {
    /// NUL byte or a byte with no Windows-1252 mapping.
    Undecodable { offset: usize, byte: u8 },
}

// Windows-1252 code points for 0x80..=0x9F; 0 marks an undefined byte.
const CP1252_HIGH: [u32; 32] = [
    0x20AC, 0, 0x201A, 0x0192, 0x201E, 0x2026, 0x2020, 0x2021, 0x02C6, 0x2030, 0x0160, 0x2039,
    0x0152, 0, 0x017D, 0, 0, 0x2018, 0x2019, 0x201C, 0x201D, 0x2022, 0x2013, 0x2014, 0x02DC,
    0x2122, 0x0161, 0x203A, 0x0153, 0, 0x017E, 0x0178,
];

/// Decode file bytes as UTF-8 (BOM stripped), falling back to Latin-1 with the
/// Windows-1252 repertoire in the 0x80..=0x9F range.
pub fn decode_bytes(bytes: &[u8]) -> Result<String, DecodeError> {
    let body = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    if let Ok(s) = std::str::from_utf8(body) {
        if let Some(offset) = s.bytes().position(|b| b == 0) {
            return Err(DecodeError::Undecodable { offset, byte: 0 });
        }
        return Ok(s.to_owned());
    }
    let mut out = String::with_capacity(body.len());
    for (offset, &b) in body.iter().enumerate() {
        let ch = match b {
            0 => None,
            0x80..=0x9F => match CP1252_HIGH[(b - 0x80) as usize] {
                0 => None,
                cp => char::from_u32(cp),
            },
            _ => Some(b as char),
        };
        match ch {
            Some(c) => out.push(c),
            None => return Err(DecodeError::Undecodable { offset, byte: b }),
        }
    }
    Ok(out)
}

/// Normalize CRLF and lone CR line endings to LF.
pub fn normalize_newlines(s: &str) -> String {
    s.replace("\r\n", "\n").replace('\r', "\n")
}

/// Collapse every whitespace run to one space and trim.
pub fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 64-bit FNV-1a over the seed and the bytes, finished with a splitmix64 mix.
/// Stable across platforms and toolchains.
pub fn stable_hash(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(h)
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
