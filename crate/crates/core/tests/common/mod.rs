//! A deliberately plain bit-vector simulator of the cipher family,
//! shared by the integration suites. Registers are little vectors of
//! 0/1 bytes and every operation is an explicit loop, so the library's
//! word-packed implementation gets checked against genuinely
//! independent code rather than against itself.

#![allow(dead_code)]

#[derive(Clone)]
pub struct SimSpec {
    pub lens: [usize; 3],
    pub taps: [Vec<usize>; 3],
    pub clock_bits: [usize; 3],
    pub key_bits: usize,
    pub frame_bits: usize,
    pub mix_clocks: usize,
}

pub fn sim_a5_1() -> SimSpec {
    SimSpec {
        lens: [19, 22, 23],
        taps: [vec![13, 16, 17, 18], vec![20, 21], vec![7, 20, 21, 22]],
        clock_bits: [8, 10, 10],
        key_bits: 64,
        frame_bits: 22,
        mix_clocks: 100,
    }
}

pub fn sim_toy(l1: usize, l2: usize, l3: usize) -> SimSpec {
    let lens = [l1, l2, l3];
    SimSpec {
        taps: [
            vec![l1 - 1, l1 - 2],
            vec![l2 - 1, l2 - 2],
            vec![l3 - 1, l3 - 2],
        ],
        clock_bits: [l1 / 2, l2 / 2, l3 / 2],
        key_bits: l1 + l2 + l3,
        frame_bits: 16,
        mix_clocks: 25,
        lens,
    }
}

/// Three registers as vectors of bits, index 0 holding the low bit.
pub type SimRegs = [Vec<u8>; 3];

pub fn sim_zero(spec: &SimSpec) -> SimRegs {
    [
        vec![0; spec.lens[0]],
        vec![0; spec.lens[1]],
        vec![0; spec.lens[2]],
    ]
}

fn sim_shift(reg: &mut [u8], taps: &[usize], inject: u8) {
    let mut fb = inject;
    for &t in taps {
        fb ^= reg[t];
    }
    for i in (1..reg.len()).rev() {
        reg[i] = reg[i - 1];
    }
    reg[0] = fb & 1;
}

pub fn sim_clock_all(spec: &SimSpec, regs: &mut SimRegs, inject: u8) {
    for j in 0..3 {
        sim_shift(&mut regs[j], &spec.taps[j], inject);
    }
}

pub fn sim_majority_clock(spec: &SimSpec, regs: &mut SimRegs) -> u8 {
    let c: Vec<u8> = (0..3).map(|j| regs[j][spec.clock_bits[j]]).collect();
    let m = if c[0] + c[1] + c[2] >= 2 { 1 } else { 0 };
    for j in 0..3 {
        if c[j] == m {
            sim_shift(&mut regs[j], &spec.taps[j], 0);
        }
    }
    let mut out = 0;
    for j in 0..3 {
        out ^= regs[j][spec.lens[j] - 1];
    }
    out
}

pub fn sim_setup(spec: &SimSpec, key: u64, frame: u64) -> SimRegs {
    let mut regs = sim_zero(spec);
    for i in 0..spec.key_bits {
        sim_clock_all(spec, &mut regs, ((key >> i) & 1) as u8);
    }
    for i in 0..spec.frame_bits {
        sim_clock_all(spec, &mut regs, ((frame >> i) & 1) as u8);
    }
    for _ in 0..spec.mix_clocks {
        sim_majority_clock(spec, &mut regs);
    }
    regs
}

pub fn sim_keystream(spec: &SimSpec, regs: &SimRegs, n: usize) -> Vec<u8> {
    let mut regs = regs.clone();
    (0..n).map(|_| sim_majority_clock(spec, &mut regs)).collect()
}

pub fn sim_pack(spec: &SimSpec, regs: &SimRegs) -> u64 {
    let mut w = 0u64;
    let mut off = 0;
    for j in 0..3 {
        for (i, &b) in regs[j].iter().enumerate() {
            w |= u64::from(b) << (off + i);
        }
        off += spec.lens[j];
    }
    w
}

pub fn sim_unpack(spec: &SimSpec, word: u64) -> SimRegs {
    let mut regs = sim_zero(spec);
    let mut off = 0;
    for j in 0..3 {
        for i in 0..spec.lens[j] {
            regs[j][i] = ((word >> (off + i)) & 1) as u8;
        }
        off += spec.lens[j];
    }
    regs
}

pub fn sim_forward_image(spec: &SimSpec, x: u64) -> u64 {
    let w = spec.lens.iter().sum::<usize>();
    bits_to_word_lsb(&sim_keystream(spec, &sim_unpack(spec, x), w))
}

pub fn bits_to_word_lsb(bits: &[u8]) -> u64 {
    let mut w = 0u64;
    for (i, &b) in bits.iter().enumerate() {
        w |= u64::from(b) << i;
    }
    w
}

/// Hex with the first keystream bit as the most significant bit of the
/// first digit, zero-padded at the tail to a digit boundary.
pub fn bits_to_hex_msb(bits: &[u8]) -> String {
    let mut out = String::new();
    let mut chunk = bits.chunks(4);
    for c in &mut chunk {
        let mut v = 0u8;
        for (i, &b) in c.iter().enumerate() {
            v |= b << (3 - i);
        }
        out.push(char::from_digit(u32::from(v), 16).unwrap());
    }
    out
}

/// Bytes with the first keystream bit as bit 7 of byte 0, zero-padded.
pub fn bits_to_bytes_msb(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= b << (7 - i % 8);
    }
    out
}

/// Deterministic pseudo-random u64 stream for test inputs.
pub fn stream(seed: u64) -> impl FnMut() -> u64 {
    let mut x = seed;
    move || {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut v = x;
        v = (v ^ (v >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        v = (v ^ (v >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        v ^ (v >> 31)
    }
}
