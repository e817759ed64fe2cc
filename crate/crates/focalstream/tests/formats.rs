//! Round-trip properties of the token and weight file formats.

use focalstream::{tokenfile, weights};
use focalstream_core::quantizer::TokenIndex;
use focalstream_core::{Codec, CodecConfig, TokenStream};
use proptest::prelude::*;

fn stream() -> impl Strategy<Value = TokenStream> {
    (1u32..=24, 0usize..200, any::<u64>()).prop_map(|(bits, n, seed)| {
        let mask = ((1u64 << bits) - 1) as u32;
        let mut s = seed | 1;
        let tokens = (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                TokenIndex(s as u32 & mask)
            })
            .collect();
        TokenStream { frame_rate: 50.0, bits, tokens }
    })
}

proptest! {
    #[test]
    fn token_files_round_trip_byte_for_byte(s in stream()) {
        let bytes = tokenfile::to_bytes(&s).unwrap();
        prop_assert_eq!(bytes.len() as u64, tokenfile::HEADER_LEN as u64 + tokenfile::payload_len(s.tokens.len() as u64, s.bits));
        let back = tokenfile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(tokenfile::to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_token_files_are_rejected(s in stream(), cut in 1usize..8) {
        let bytes = tokenfile::to_bytes(&s).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assume!(keep < bytes.len());
        prop_assert!(tokenfile::from_bytes(&bytes[..keep]).is_err());
    }
}

#[test]
fn weight_files_round_trip_byte_for_byte() {
    let codec = Codec::new(CodecConfig::desk(), 12).unwrap();
    let blob = weights::to_bytes(codec.config(), &codec);
    let back = weights::from_bytes(&blob).unwrap().into_codec().unwrap();
    assert_eq!(weights::to_bytes(back.config(), &back), blob);
}
