//! Known-answer tests for the cipher layer, against frozen vectors and
//! against the bit-vector simulator in `common`.

mod common;

use a5rt_core::cipher::{CipherSpec, FrameNumber, SessionKey};
use common::*;

fn lib_keystream_hex(spec: &CipherSpec, key: u64, frame: u64, n: usize) -> String {
    let st = spec.state_from_key(SessionKey(key), FrameNumber(frame));
    bits_to_hex_msb(&spec.keystream(&st, n))
}

/// 228 bits per key/frame pair, two bursts' worth, hex with the first
/// output bit in the top bit of the first digit.
#[test]
fn full_cipher_frozen_vectors() {
    let spec = CipherSpec::a5_1();
    let vectors: [(u64, u64, &str); 6] = [
        (
            0x0000000000000000,
            0x000000,
            "000000000000000000000000000000000000000000000000000000000",
        ),
        (
            0x0000000000000001,
            0x000000,
            "ea36ac11f8f23f48be6ab439a068c9a349eaf9adbf52787f0da11890a",
        ),
        (
            0xEFCDAB8967452312,
            0x000134,
            "534eaa582fe8151ab6e1855a728c093f4d68d757ed949b4cbe41b7c6b",
        ),
        (
            0xFFFFFFFFFFFFFFFF,
            0x3FFFFF,
            "9ecc0c773fe335b41c1282205df9de10dbf11610865bae850a75bf686",
        ),
        (
            0x123456789ABCDEF0,
            0x0003D2,
            "e1bb30595cf42195f27ad9cd263c814bbca2554fd6a7550265f29e472",
        ),
        (
            0x0F1E2D3C4B5A6978,
            0x2A5151,
            "c390136edda53a0730141ee1601c94edea37de0309532073f16666cd6",
        ),
    ];
    for (key, frame, want) in vectors {
        assert_eq!(
            lib_keystream_hex(&spec, key, frame, 228),
            want,
            "key {key:#018x} frame {frame:#08x}"
        );
    }
}

/// The widely circulated two-burst vector for key bytes
/// 12 23 45 67 89 AB CD EF and frame 0x134, in its original byte
/// layout: each 114-bit burst packed MSB-first into 15 bytes.
#[test]
fn full_cipher_classic_byte_order() {
    let spec = CipherSpec::a5_1();
    let st = spec.state_from_key(SessionKey(0xEFCDAB8967452312), FrameNumber(0x134));
    let ks = spec.keystream(&st, 228);
    assert_eq!(
        bits_to_bytes_msb(&ks[..114]),
        [
            0x53, 0x4E, 0xAA, 0x58, 0x2F, 0xE8, 0x15, 0x1A, 0xB6, 0xE1, 0x85, 0x5A, 0x72, 0x8C,
            0x00
        ]
    );
    assert_eq!(
        bits_to_bytes_msb(&ks[114..]),
        [
            0x24, 0xFD, 0x35, 0xA3, 0x5D, 0x5F, 0xB6, 0x52, 0x6D, 0x32, 0xF9, 0x06, 0xDF, 0x1A,
            0xC0
        ]
    );
}

#[test]
fn full_cipher_setup_states_pinned() {
    let spec = CipherSpec::a5_1();
    let s1 = spec.state_from_key(SessionKey(1), FrameNumber(0));
    assert_eq!(spec.pack(&s1), 0x879DDA8001FA2A35);
    assert_eq!(spec.keystream_word(&s1, 64), 0x12FC4F1F88356C57);
    let s2 = spec.state_from_key(SessionKey(0xEFCDAB8967452312), FrameNumber(0x134));
    assert_eq!(spec.pack(&s2), 0x117CBF6597C9DA4B);
}

#[test]
fn toy_pinned_values() {
    let micro = CipherSpec::toy(3, 3, 3).unwrap();
    assert_eq!(micro.state_width(), 9);
    assert_eq!(micro.forward_image(0b100), 0x000);
    assert_eq!(micro.forward_image(0b1), 0x000);
    assert_eq!(micro.forward_image(0x1FF), 0x1D3);
    let st = micro.state_from_key(SessionKey(5), FrameNumber(3));
    assert_eq!(micro.pack(&st), 0x1B6);

    let toy = CipherSpec::toy(7, 8, 9).unwrap();
    assert_eq!(toy.state_width(), 24);
    assert_eq!(toy.forward_image(1), 0x000000);
    assert_eq!(toy.forward_image(0x123456), 0xA6246D);
    let st = toy.state_from_key(SessionKey(0xABCD), FrameNumber(0x1234));
    assert_eq!(toy.pack(&st), 0xCD629F);
    assert_eq!(
        bits_to_hex_msb(&toy.keystream(&st, 114)),
        "134608b5f93e3e47f28ddcc827290"
    );
}

fn check_against_simulator(spec: &CipherSpec, sim: &SimSpec, key: u64, frame: u64) {
    let st = spec.state_from_key(SessionKey(key), FrameNumber(frame));
    let regs = sim_setup(sim, key, frame);
    assert_eq!(spec.pack(&st), sim_pack(sim, &regs), "setup state differs");
    assert_eq!(
        spec.keystream(&st, 228),
        sim_keystream(sim, &regs, 228),
        "keystream differs for key {key:#x} frame {frame:#x}"
    );
}

#[test]
fn library_matches_bit_simulator_full_width() {
    let spec = CipherSpec::a5_1();
    let sim = sim_a5_1();
    let mut next = stream(2024);
    for _ in 0..200 {
        let key = next();
        let frame = next() & 0x3F_FFFF;
        check_against_simulator(&spec, &sim, key, frame);
    }
}

#[test]
fn library_matches_bit_simulator_reduced_widths() {
    let shapes = [(3u32, 3u32, 3u32), (7, 8, 9), (5, 6, 7), (19, 22, 23)];
    let mut next = stream(77);
    for (l1, l2, l3) in shapes {
        let spec = CipherSpec::toy(l1, l2, l3).unwrap();
        let sim = sim_toy(l1 as usize, l2 as usize, l3 as usize);
        let key_mask = if spec.key_bits >= 64 {
            u64::MAX
        } else {
            (1u64 << spec.key_bits) - 1
        };
        for _ in 0..100 {
            let key = next() & key_mask;
            let frame = next() & 0xFFFF;
            check_against_simulator(&spec, &sim, key, frame);
        }
    }
}

#[test]
fn forward_image_matches_simulator() {
    let cases = [
        (CipherSpec::a5_1(), sim_a5_1()),
        (CipherSpec::toy(7, 8, 9).unwrap(), sim_toy(7, 8, 9)),
        (CipherSpec::toy(3, 3, 3).unwrap(), sim_toy(3, 3, 3)),
    ];
    let mut next = stream(31337);
    for (spec, sim) in &cases {
        for _ in 0..200 {
            let x = next() & spec.state_mask();
            assert_eq!(spec.forward_image(x), sim_forward_image(sim, x));
        }
    }
}

/// Advancing the state `k` clocks then reading keystream must equal
/// reading keystream and discarding the first `k` bits.
#[test]
fn advance_skips_keystream_prefix() {
    let spec = CipherSpec::toy(7, 8, 9).unwrap();
    let mut next = stream(9);
    for _ in 0..50 {
        let st = spec.unpack(next() & spec.state_mask()).unwrap();
        let k = (next() % 60) as usize;
        let full = spec.keystream(&st, k + 40);
        let skipped = spec.keystream(&spec.advance(&st, k), 40);
        assert_eq!(skipped, full[k..]);
    }
}
