use flowmatch::tensor_io::{decode_tensor, encode_tensor, read_tensor, write_tensor};
use flowmatch::{Error, Tensor};
use proptest::prelude::*;

fn tensor() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..=5, 1..=4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        let f = prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), n)
            .prop_map({
                let shape = shape.clone();
                move |v| Tensor::from_f32(shape.clone(), v).unwrap()
            });
        let u = prop::collection::vec(any::<u8>(), n).prop_map(move |v| Tensor::from_u8(shape.clone(), v).unwrap());
        prop_oneof![f, u]
    })
}

proptest! {
    #[test]
    fn encode_decode_round_trip(t in tensor()) {
        let bytes = encode_tensor(&t);
        prop_assert_eq!(&bytes[..4], b"CMT1");
        prop_assert_eq!(decode_tensor(&bytes).unwrap(), t);
    }

    #[test]
    fn truncation_is_detected(t in tensor(), cut in 1usize..8) {
        let bytes = encode_tensor(&t);
        let short = &bytes[..bytes.len().saturating_sub(cut)];
        prop_assert!(decode_tensor(short).is_err());
    }
}

#[test]
fn file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tensor::from_f32(vec![2, 3], vec![0.5, -1.0, 2.0, 3.5, 0.0, 1e-3]).unwrap();
    let path = dir.path().join("x.cmt");
    write_tensor(&t, &path).unwrap();
    assert_eq!(read_tensor(&path).unwrap(), t);

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    assert!(matches!(decode_tensor(&bytes), Err(Error::Format(_))));

    let missing = dir.path().join("missing.cmt");
    let err = read_tensor(&missing).unwrap_err();
    assert!(err.to_string().contains("missing.cmt"), "{err}");
}
