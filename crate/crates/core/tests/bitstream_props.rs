mod common;

use autopatch::bitstream::{apply, decode, diff, encode, DeltaOp, DeltaScript};
use autopatch::machine::{lucidac_spec, quantize_highres, Coefficient, HIGHRES_LSB};
use proptest::prelude::*;

fn changed_fields(a: &autopatch::machine::MachineConfig, b: &autopatch::machine::MachineConfig) -> usize {
    (0..a.spec.n_lanes)
        .map(|l| {
            (a.u_matrix[l] != b.u_matrix[l]) as usize
                + (a.coefficients[l] != b.coefficients[l]) as usize
                + (a.i_matrix[l] != b.i_matrix[l]) as usize
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn image_roundtrip(c in common::lucidac_config()) {
        prop_assert!(c.validate().is_empty());
        let img = encode(&c);
        prop_assert_eq!(img.len(), 197);
        prop_assert_eq!(decode(&img, &c.spec).unwrap(), c);
    }

    #[test]
    fn delta_is_sound_and_sparse(a in common::lucidac_config(), b in common::lucidac_config()) {
        let d = diff(&a, &b).unwrap();
        prop_assert_eq!(encode(&apply(&a, &d).unwrap()), encode(&b));
        prop_assert_eq!(d.len(), changed_fields(&a, &b));
        let bytes = d.to_bytes();
        prop_assert_eq!(bytes.len(), 9 + 5 * d.len());
        prop_assert_eq!(DeltaScript::from_bytes(&bytes).unwrap(), d);
        prop_assert!(diff(&a, &a).unwrap().is_empty());
    }

    #[test]
    fn single_coefficient_change(c in common::lucidac_config(), lane in 0usize..24, code in -2048i16..=2047) {
        let mut b = c.clone();
        b.coefficients[lane] = Coefficient::HighRes(code);
        let d = diff(&c, &b).unwrap();
        if c.coefficients[lane] == b.coefficients[lane] {
            prop_assert!(d.is_empty());
        } else {
            prop_assert_eq!(d.ops, vec![DeltaOp::SetCoeff { lane, code }]);
        }
    }

    #[test]
    fn quantize_monotonic(a in -12.0f64..12.0, b in -12.0f64..12.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize_highres(lo).code <= quantize_highres(hi).code);
    }

    #[test]
    fn quantize_error_bound(v in -10.0f64..9.99) {
        let q = quantize_highres(v);
        prop_assert!(!q.clamped);
        prop_assert!((Coefficient::HighRes(q.code).value() - v).abs() <= HIGHRES_LSB / 2.0);
    }
}

#[test]
fn spec_mismatch() {
    let a = autopatch::machine::MachineConfig::empty(&lucidac_spec());
    let b = autopatch::machine::MachineConfig::empty(&autopatch::machine::redac_tile_spec());
    assert!(diff(&a, &b).is_err());
}
