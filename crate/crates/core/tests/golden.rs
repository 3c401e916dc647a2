//! Frozen vectors computed by an independent long-division CRC and a
//! list-based shift-register encoder.

use serde_json::Value;
use tbcc::crc16::{CrcCode, CrcSpec};
use tbcc::trellis::Trellis;

fn fixture() -> Value {
    serde_json::from_str(include_str!("fixtures/golden_v1.json")).unwrap()
}

fn bits(v: &Value) -> Vec<u8> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|b| b.as_u64().unwrap() as u8)
        .collect()
}

fn trellis_of(v: &Value) -> Trellis {
    let polys: Vec<String> = v["polynomials"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_u64().unwrap().to_string())
        .collect();
    let polys: Vec<&str> = polys.iter().map(String::as_str).collect();
    Trellis::from_octal(v["memory"].as_u64().unwrap() as usize, &polys).unwrap()
}

#[test]
fn crc_unit_message_remainder() {
    let g = fixture();
    let want = bits(&g["crc"]["unit_message_remainder"]);
    // a single one followed by 12 zeros: detection bits are x^28 mod g
    let mut msg = vec![0u8; 13];
    msg[0] = 1;
    let word = CrcCode::lte(13).unwrap().encode(&msg).unwrap();
    assert_eq!(&word[13..], &want[..]);
}

#[test]
fn crc_vectors() {
    let g = fixture();
    let crc = CrcCode::lte(13).unwrap();
    for v in g["crc"]["vectors"].as_array().unwrap() {
        let word = crc.encode(&bits(&v["message"])).unwrap();
        assert_eq!(word, bits(&v["detection"]));
        assert_eq!(crc.syndrome(&word).unwrap(), 0);
    }
}

#[test]
fn crc_non_codeword() {
    let g = fixture();
    let crc = CrcCode::lte(13).unwrap();
    let w = bits(&g["crc"]["non_codeword"]);
    assert!(!crc.is_codeword(&w));
    assert_eq!(
        u64::from(crc.syndrome(&w).unwrap()),
        g["crc"]["non_codeword_syndrome_weight"].as_u64().unwrap()
    );
}

#[test]
fn crc_polynomial_matches() {
    let g = fixture();
    let hex = g["crc"]["polynomial_hex"].as_str().unwrap();
    let poly = u32::from_str_radix(hex.trim_start_matches("0x"), 16).unwrap();
    assert_eq!(CrcSpec::new(poly, 16).unwrap(), CrcSpec::LTE_CRC16);
}

#[test]
fn lte_codeword() {
    let g = fixture();
    let v = &g["tbcc"];
    let t = trellis_of(v);
    assert_eq!(t, Trellis::lte());
    let u = bits(&v["detection"]);
    assert_eq!(
        t.state_of(&u).unwrap() as u64,
        v["start_state"].as_u64().unwrap()
    );
    assert_eq!(t.encode(&u).unwrap(), bits(&v["codeword"]));
}

#[test]
fn toy_codeword() {
    let g = fixture();
    let v = &g["toy_tbcc"];
    let t = trellis_of(v);
    let u = bits(&v["detection"]);
    assert_eq!(
        t.state_of(&u).unwrap() as u64,
        v["start_state"].as_u64().unwrap()
    );
    assert_eq!(t.encode(&u).unwrap(), bits(&v["codeword"]));
}
