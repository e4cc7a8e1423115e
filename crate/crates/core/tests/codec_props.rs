use daq_core::codec::{checksum, decode_frame, encode_frame, RawFrame, CHANNELS, FRAME_LEN};
use proptest::prelude::*;

fn arb_frame() -> impl Strategy<Value = RawFrame> {
    (any::<u8>(), prop::collection::vec(0u16..=1023, CHANNELS))
        .prop_map(|(seq, c)| RawFrame::from_raw(u32::from(seq), &c).unwrap())
}

/// Independent encoder: builds the line with `format!` and sums the body.
fn oracle_encode(f: &RawFrame) -> Vec<u8> {
    let mut body = format!("{:02X}", f.seq);
    for c in f.counts {
        body.push_str(&format!("{:04}", c.get()));
    }
    let sum: u32 = body.bytes().map(u32::from).sum();
    format!("${body}{:02X}\r\n", sum % 256).into_bytes()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn round_trip(f in arb_frame()) {
        let bytes = encode_frame(&f);
        prop_assert_eq!(decode_frame(&bytes).unwrap(), f);
    }

    #[test]
    fn encoding_matches_independent_oracle(f in arb_frame()) {
        prop_assert_eq!(encode_frame(&f).to_vec(), oracle_encode(&f));
        let b = oracle_encode(&f);
        let sum = u8::from_str_radix(std::str::from_utf8(&b[35..37]).unwrap(), 16).unwrap();
        prop_assert_eq!(checksum(&b[1..35]), sum);
    }

    #[test]
    fn every_single_byte_substitution_is_rejected(
        f in arb_frame(),
        pos in 0..FRAME_LEN,
        replacement in any::<u8>(),
    ) {
        let mut bytes = encode_frame(&f);
        prop_assume!(bytes[pos] != replacement);
        bytes[pos] = replacement;
        prop_assert!(decode_frame(&bytes).is_err());
    }

    #[test]
    fn arbitrary_input_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..4096)) {
        if let Ok(f) = decode_frame(&bytes) {
            prop_assert_eq!(encode_frame(&f).to_vec(), bytes);
        }
    }

    #[test]
    fn near_frames_never_panic(f in arb_frame(), cut in 0..FRAME_LEN, junk in prop::collection::vec(any::<u8>(), 0..8)) {
        let mut bytes = encode_frame(&f)[..cut].to_vec();
        bytes.extend(junk);
        let _ = decode_frame(&bytes);
    }
}
