//! Domain-separated SHA-256.

use sha2::{Digest as _, Sha256};

pub type Digest = [u8; 32];

/// SHA-256 over `len(tag) as u32 LE || tag || payload`.
pub fn hash_digest(domain_tag: &[u8], payload: &[u8]) -> Digest {
    hash_parts(domain_tag, &[payload])
}

/// Same as [`hash_digest`] with the payload given in pieces.
pub fn hash_parts(domain_tag: &[u8], parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    h.update((domain_tag.len() as u32).to_le_bytes());
    h.update(domain_tag);
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(hash_digest(b"t", b"abc"), hash_digest(b"t", b"abc"));
    }

    #[test]
    fn tags_separate_domains() {
        assert_ne!(hash_digest(b"a", b"payload"), hash_digest(b"b", b"payload"));
        // the length prefix keeps tag/payload boundaries unambiguous
        assert_ne!(hash_digest(b"ab", b"c"), hash_digest(b"a", b"bc"));
    }

    #[test]
    fn empty_payload() {
        let d = hash_digest(b"tag", b"");
        assert_eq!(d.len(), 32);
        assert_ne!(d, hash_digest(b"", b""));
    }

    #[test]
    fn parts_concatenate() {
        assert_eq!(hash_parts(b"t", &[b"ab", b"cd"]), hash_digest(b"t", b"abcd"));
    }

    #[test]
    fn known_vector() {
        // SHA-256 of the 4 zero bytes that encode an empty tag.
        let d = hash_digest(b"", b"");
        assert_eq!(
            d[..4],
            [0xdf, 0x3f, 0x61, 0x98],
        );
    }
}
