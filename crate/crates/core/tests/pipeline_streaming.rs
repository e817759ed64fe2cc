use focalstream_core::codec::{AudioBuffer, Codec, CodecConfig};
use focalstream_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-0.8f32..0.8)).collect()
}

fn codec() -> Codec {
    Codec::new(CodecConfig::desk(), 11).unwrap()
}

#[test]
fn encode_streams_bit_identically_in_20ms_pieces() {
    let codec = codec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let audio = AudioBuffer::new(16_000, noise(&mut rng, 16_000 + 123));
    let offline = codec.encode_offline(&audio).unwrap();
    assert_eq!(offline.tokens.len(), 50);

    let mut session = codec.encode_session().unwrap();
    let mut streamed = Vec::new();
    for piece in audio.samples.chunks(320) {
        let out = session.push(piece).unwrap();
        assert!(out.len() % 4 == 0, "tokens arrive in whole chunks");
        streamed.extend(out);
    }
    streamed.extend(session.flush().unwrap());
    assert_eq!(streamed, offline.tokens);
    assert_eq!(session.push(&[0.0]), Err(Error::SessionClosed));
}

#[test]
fn encode_one_sample_at_a_time() {
    let codec = codec();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let audio = AudioBuffer::new(16_000, noise(&mut rng, 320 * 9 + 5));
    let offline = codec.encode_offline(&audio).unwrap();
    let mut session = codec.encode_session().unwrap();
    let mut streamed = Vec::new();
    for &s in &audio.samples {
        streamed.extend(session.push(&[s]).unwrap());
    }
    streamed.extend(session.flush().unwrap());
    assert_eq!(streamed, offline.tokens);
    assert_eq!(streamed.len(), 9);
}

#[test]
fn decode_streams_within_tolerance() {
    let codec = codec();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let audio = AudioBuffer::new(16_000, noise(&mut rng, 320 * 23));
    let tokens = codec.encode_offline(&audio).unwrap();
    let offline = codec.decode_offline(&tokens).unwrap();
    assert_eq!(offline.samples.len(), 23 * 480);
    assert_eq!(offline.sample_rate, 24_000);
    let mut session = codec.decode_session();
    let mut streamed = Vec::new();
    for piece in tokens.tokens.chunks(3) {
        streamed.extend(session.push(piece).unwrap());
    }
    streamed.extend(session.flush().unwrap());
    let diff = streamed.iter().zip(&offline.samples).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert_eq!(streamed.len(), offline.samples.len());
    assert!(diff <= 1e-5, "{diff}");
}
