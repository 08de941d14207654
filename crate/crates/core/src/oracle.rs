//! Brute-force ground truth for small state spaces.
//!
//! Everything here exists to check the production modules against an
//! independent computation: an exhaustive image table stands in for the
//! cipher, chain walks restate the step recurrence from scratch rather
//! than calling into [`crate::tmto`], coverage is counted exactly, and
//! the success-rate experiment measures the attack's hit rate against
//! its closed-form prediction.

use crate::attack::{lookup_sample, predict_success_multi, LookupStats};
use crate::cipher::CipherSpec;
use crate::tmto::{build_table, ChainMode, ChainRecord, TableParams, TmtoError, ENUMERATION_GUARD_BITS};
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("state width {0} exceeds the {1}-bit enumeration guard")]
    WidthExceedsGuard(u32, u32),
    #[error("collision search budget exhausted after {0} chains")]
    SearchBudgetExhausted(u64),
    #[error("experiment wants {want} distinct sample offsets but the burst only offers {have}")]
    TooManyOffsets { want: u32, have: u32 },
    #[error(transparent)]
    Tmto(#[from] TmtoError),
    #[error(transparent)]
    Attack(#[from] crate::attack::AttackError),
}

/// The forward image of every state, tabulated. Feasible only below the
/// enumeration guard; entries fit in `u32` because the guard is far
/// below 32 bits.
#[derive(Debug)]
pub struct ImageTable {
    width: u32,
    entries: Vec<u32>,
}

pub fn build_image_table(spec: &CipherSpec) -> Result<ImageTable, OracleError> {
    let width = spec.state_width();
    if width > ENUMERATION_GUARD_BITS {
        return Err(OracleError::WidthExceedsGuard(width, ENUMERATION_GUARD_BITS));
    }
    let entries = (0..1usize << width)
        .into_par_iter()
        .map(|x| spec.forward_image(x as u64) as u32)
        .collect();
    Ok(ImageTable { width, entries })
}

impl ImageTable {
    pub fn get(&self, x: u64) -> u64 {
        self.entries[x as usize] as u64
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// The oracle's own restatement of the chain recurrence. It shares no
// stepping code with the engine it checks: the finalizer, the constant
// derivation, and the walk are all written out again here, against the
// image table instead of the cipher.

fn finalizer(v: u64) -> u64 {
    let v = (v ^ (v >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let v = (v ^ (v >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    v ^ (v >> 31)
}

fn color_const(params: &TableParams, color: u32) -> u64 {
    finalizer(params.reduction_seed ^ ((params.table_id << 32).wrapping_add(u64::from(color))))
}

fn width_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// One chain link, restated: image-table lookup, XOR with the color's
/// constant, mask to the state width.
pub fn oracle_step(img: &ImageTable, params: &TableParams, color: u32, x: u64) -> u64 {
    (img.get(x) ^ color_const(params, color)) & width_mask(params.state_width)
}

/// A fully expanded chain: every value that enters the image function,
/// its color, and the end value.
#[derive(Debug, Clone)]
pub struct OracleChain {
    pub entrants: Vec<u64>,
    pub colors: Vec<u32>,
    pub end: u64,
}

/// Walk one chain with the oracle's own stepping. `None` when a DP
/// segment overruns the cap (the chain the engine would reject).
pub fn oracle_chain(img: &ImageTable, params: &TableParams, start: u64) -> Option<OracleChain> {
    let mut entrants = Vec::new();
    let mut colors = Vec::new();
    let mut v = start;
    match params.mode {
        ChainMode::Fixed => {
            for color in 0..params.n_colors {
                for _ in 0..params.steps_per_color {
                    entrants.push(v);
                    colors.push(color);
                    v = oracle_step(img, params, color, v);
                }
            }
        }
        ChainMode::Dp => {
            let dp_mask = (1u64 << params.dp_bits) - 1;
            for color in 0..params.n_colors {
                let mut steps = 0;
                loop {
                    entrants.push(v);
                    colors.push(color);
                    v = oracle_step(img, params, color, v);
                    steps += 1;
                    if v & dp_mask == 0 {
                        break;
                    }
                    if steps >= params.max_segment_steps {
                        return None;
                    }
                }
            }
        }
    }
    Some(OracleChain {
        entrants,
        colors,
        end: v,
    })
}

/// Exact count of distinct states the table can recover, by independent
/// regeneration of every record: in FIXED mode the entrants at the final
/// step of each color segment, in DP mode every entrant.
pub fn exact_coverage(
    img: &ImageTable,
    params: &TableParams,
    records: &[ChainRecord],
) -> Result<u64, OracleError> {
    if params.state_width > ENUMERATION_GUARD_BITS {
        return Err(OracleError::WidthExceedsGuard(
            params.state_width,
            ENUMERATION_GUARD_BITS,
        ));
    }
    let mut words = vec![0u64; (1usize << params.state_width).div_ceil(64)];
    let mut mark = |x: u64| words[(x >> 6) as usize] |= 1 << (x & 63);
    for rec in records {
        let chain = oracle_chain(img, params, rec.start)
            .expect("persisted records regenerate without rejection");
        debug_assert_eq!(chain.end, rec.end);
        match params.mode {
            ChainMode::Fixed => {
                let s = params.steps_per_color as usize;
                for (i, &x) in chain.entrants.iter().enumerate() {
                    if i % s == s - 1 {
                        mark(x);
                    }
                }
            }
            ChainMode::Dp => {
                for &x in &chain.entrants {
                    mark(x);
                }
            }
        }
    }
    Ok(words.iter().map(|w| w.count_ones() as u64).sum())
}

/// What kind of chain coincidence to hunt for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionKind {
    /// A coincidence that forces a merge: same value at the same
    /// position (same color and, in FIXED mode, same step index), so
    /// both chains run identically ever after and share an end.
    SameColor,
    /// A coincidence across different colors, with no same-position
    /// coincidence anywhere, so the ends provably differ.
    CrossColor,
}

/// Two starts whose chains coincide, with the coordinates of the found
/// coincidence in each chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollisionPair {
    pub start_a: u64,
    pub start_b: u64,
    pub color_a: u32,
    pub step_a: u32,
    pub color_b: u32,
    pub step_b: u32,
}

/// Search seeded random chains for a coincidence of the requested kind.
pub fn find_collision_pair(
    img: &ImageTable,
    params: &TableParams,
    kind: CollisionKind,
    seed: u64,
    max_chains: u64,
) -> Result<CollisionPair, OracleError> {
    let mask = width_mask(params.state_width);
    let mut chains: Vec<(u64, OracleChain)> = Vec::new();
    // (position key, value) and bare value, each mapping to every
    // (chain, entrant index) where it occurred. The position key is the
    // linear index in FIXED mode (chains run in lockstep) and the color
    // in DP mode (segments are value-driven, so any same-color equality
    // merges).
    let mut by_pos: HashMap<(u32, u64), Vec<(usize, usize)>> = HashMap::new();
    let mut by_value: HashMap<u64, Vec<(usize, usize)>> = HashMap::new();
    let mut counter = 0u64;
    let mut drawn = std::collections::HashSet::new();

    for _ in 0..max_chains {
        if drawn.len() as u64 > mask {
            break;
        }
        let start = loop {
            let c = finalizer(seed ^ 0xC0_11_15_10 ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15))
                & mask;
            counter += 1;
            if drawn.insert(c) {
                break c;
            }
        };
        let chain = match oracle_chain(img, params, start) {
            Some(c) => c,
            None => continue,
        };
        for (i, (&v, &color)) in chain.entrants.iter().zip(&chain.colors).enumerate() {
            let pos_key = match params.mode {
                ChainMode::Fixed => (i as u32, v),
                ChainMode::Dp => (color, v),
            };
            let hits = match kind {
                CollisionKind::SameColor => by_pos.get(&pos_key),
                CollisionKind::CrossColor => by_value.get(&v),
            };
            for &(cidx, oi) in hits.into_iter().flatten() {
                let (ostart, ochain) = &chains[cidx];
                let ocolor = ochain.colors[oi];
                let found = match kind {
                    CollisionKind::SameColor => true,
                    CollisionKind::CrossColor => {
                        ocolor != color && !chains_touch_same_position(params, ochain, &chain)
                    }
                };
                if found {
                    return Ok(CollisionPair {
                        start_a: *ostart,
                        start_b: start,
                        color_a: ocolor,
                        step_a: step_within_color(ochain, oi),
                        color_b: color,
                        step_b: step_within_color(&chain, i),
                    });
                }
            }
        }
        let idx = chains.len();
        for (i, (&v, &color)) in chain.entrants.iter().zip(&chain.colors).enumerate() {
            let pos_key = match params.mode {
                ChainMode::Fixed => (i as u32, v),
                ChainMode::Dp => (color, v),
            };
            by_pos.entry(pos_key).or_default().push((idx, i));
            by_value.entry(v).or_default().push((idx, i));
        }
        chains.push((start, chain));
    }
    Err(OracleError::SearchBudgetExhausted(chains.len() as u64))
}

fn step_within_color(chain: &OracleChain, i: usize) -> u32 {
    let color = chain.colors[i];
    chain.colors[..i].iter().filter(|&&c| c == color).count() as u32
}

/// True when the two chains hold an equal value at the same position
/// (or equal ends), which is exactly the condition for their ends to
/// coincide.
fn chains_touch_same_position(params: &TableParams, a: &OracleChain, b: &OracleChain) -> bool {
    if a.end == b.end {
        return true;
    }
    match params.mode {
        ChainMode::Fixed => a.entrants.iter().zip(&b.entrants).any(|(&x, &y)| x == y),
        ChainMode::Dp => {
            let positions: std::collections::HashSet<(u64, u32)> = a
                .entrants
                .iter()
                .zip(&a.colors)
                .map(|(&x, &c)| (x, c))
                .collect();
            b.entrants
                .iter()
                .zip(&b.colors)
                .any(|(&y, &c)| positions.contains(&(y, c)))
        }
    }
}

/// The preimage sets of one majority clocking over the whole state
/// space: entry `y` lists every packed state whose clock yields `y`.
pub fn exhaustive_preimages(spec: &CipherSpec) -> Result<Vec<Vec<u64>>, OracleError> {
    let width = spec.state_width();
    if width > ENUMERATION_GUARD_BITS {
        return Err(OracleError::WidthExceedsGuard(width, ENUMERATION_GUARD_BITS));
    }
    let n = 1usize << width;
    let mut pre = vec![Vec::new(); n];
    for x in 0..n as u64 {
        let mut st = spec.unpack(x).expect("in range");
        spec.clock(&mut st);
        pre[spec.pack(&st) as usize].push(x);
    }
    Ok(pre)
}

/// Everything the success-rate experiment measured.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub empirical: f64,
    pub predicted: f64,
    pub std_err: f64,
    pub hits: u64,
    pub n_targets: u64,
    pub samples_per_target: u32,
    pub per_table_coverage: Vec<u64>,
    pub state_space: u64,
    pub stats: LookupStats,
}

/// Build tables, draw random target states, offer each target
/// `samples_per_target` keystream windows at distinct random burst
/// offsets, and count the targets whose true state the lookup recovers.
/// The prediction uses exact per-table coverage under the independence
/// approximation; success means the genuine state is among the verified
/// candidates, not merely some preimage of the window.
#[allow(clippy::too_many_arguments)]
pub fn success_rate_experiment(
    spec: &CipherSpec,
    base: &TableParams,
    n_tables: u32,
    chains_per_table: u64,
    n_targets: u64,
    samples_per_target: u32,
    seed: u64,
    workers: usize,
) -> Result<ExperimentReport, OracleError> {
    let img = build_image_table(spec)?;
    let width = spec.state_width();
    let max_offset = spec.burst_bits.saturating_sub(width);
    if samples_per_target > max_offset + 1 {
        return Err(OracleError::TooManyOffsets {
            want: samples_per_target,
            have: max_offset + 1,
        });
    }

    let mut tables = Vec::new();
    for i in 0..n_tables {
        let mut p = *base;
        p.table_id = base.table_id + u64::from(i);
        tables.push(build_table(spec, &p, chains_per_table, seed, workers)?);
    }
    let per_table_coverage = tables
        .iter()
        .map(|t| exact_coverage(&img, &t.params, &t.records))
        .collect::<Result<Vec<_>, _>>()?;
    let state_space = 1u64 << width;
    let predicted = predict_success_multi(&per_table_coverage, state_space, u64::from(samples_per_target));

    let mask = width_mask(width);
    let mut counter = 0u64;
    let mut draw = move || {
        counter += 1;
        finalizer(seed ^ 0x7A_46_E7 ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    };

    let mut hits = 0u64;
    let mut stats = LookupStats::default();
    for _ in 0..n_targets {
        let s0 = spec.unpack(draw() & mask).expect("in range");
        let mut offsets: Vec<u32> = Vec::with_capacity(samples_per_target as usize);
        while offsets.len() < samples_per_target as usize {
            let o = (draw() % u64::from(max_offset + 1)) as u32;
            if !offsets.contains(&o) {
                offsets.push(o);
            }
        }
        'target: for &o in &offsets {
            let x_true = spec.pack(&spec.advance(&s0, o as usize));
            let window = img.get(x_true);
            for table in &tables {
                if lookup_sample(spec, table, window, &mut stats)?.contains(&x_true) {
                    hits += 1;
                    break 'target;
                }
            }
        }
    }

    let empirical = hits as f64 / n_targets as f64;
    let std_err = (predicted * (1.0 - predicted) / n_targets as f64).sqrt();
    Ok(ExperimentReport {
        empirical,
        predicted,
        std_err,
        hits,
        n_targets,
        samples_per_target,
        per_table_coverage,
        state_space,
        stats,
    })
}
