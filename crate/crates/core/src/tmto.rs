//! Rainbow-chain engine: colored reductions, chain generation, and
//! parallel table construction.
//!
//! A chain alternates the cipher's one-way function with a reduction
//! that XORs a per-color constant and masks back into the state space.
//! Colors advance along the chain, in FIXED mode after a set number of
//! steps, in DP mode when the value hits a distinguished point (a zero
//! low-bit suffix), so equal values under different colors do not merge
//! chains. Only chain endpoints are kept; everything else is recomputed
//! on demand.

use crate::cipher::CipherSpec;
use rayon::prelude::*;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TmtoError {
    #[error("n_colors must be at least 1")]
    NoColors,
    #[error("FIXED mode requires steps_per_color >= 1")]
    NoSteps,
    #[error("DP mode requires 1 <= dp_bits < state width {width}, got {dp_bits}")]
    BadDpBits { dp_bits: u32, width: u32 },
    #[error("DP mode requires max_segment_steps >= 2^dp_bits ({min}), got {got}")]
    SegmentCapTooSmall { min: u64, got: u32 },
    #[error("table params need state width 1..=64, got {0}")]
    BadWidth(u32),
    #[error("state width {0} exceeds the {1}-bit enumeration guard")]
    WidthExceedsGuard(u32, u32),
    #[error("cannot draw {requested} distinct starts from a {width}-bit state space")]
    StateSpaceExhausted { requested: u64, width: u32 },
}

/// How a chain decides that one color's segment is over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainMode {
    /// Exactly `steps_per_color` steps per color.
    Fixed,
    /// Step until the value has `dp_bits` low zero bits, giving
    /// geometrically distributed segment lengths with mean `2^dp_bits`;
    /// segments that run past `max_segment_steps` reject the chain.
    Dp,
}

/// Everything that determines a table's chains apart from the starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableParams {
    pub table_id: u64,
    pub mode: ChainMode,
    pub n_colors: u32,
    pub steps_per_color: u32,
    pub dp_bits: u32,
    pub max_segment_steps: u32,
    pub state_width: u32,
    pub reduction_seed: u64,
}

/// The persisted remnant of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainRecord {
    pub start: u64,
    pub end: u64,
}

/// The 64-bit finalizer used to derive reduction constants and start
/// values: x ^= x>>30; x *= 0xBF58476D1CE4E5B9; x ^= x>>27;
/// x *= 0x94D049BB133111EB; x ^= x>>31.
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

impl TableParams {
    /// Fixed-length-segment parameters for a table of the given cipher.
    pub fn fixed(spec: &CipherSpec, table_id: u64, n_colors: u32, steps_per_color: u32, reduction_seed: u64) -> TableParams {
        TableParams {
            table_id,
            mode: ChainMode::Fixed,
            n_colors,
            steps_per_color,
            dp_bits: 0,
            max_segment_steps: 0,
            state_width: spec.state_width(),
            reduction_seed,
        }
    }

    /// Distinguished-point parameters; the segment cap defaults to
    /// 64 times the expected segment length.
    pub fn dp(spec: &CipherSpec, table_id: u64, n_colors: u32, dp_bits: u32, reduction_seed: u64) -> TableParams {
        TableParams {
            table_id,
            mode: ChainMode::Dp,
            n_colors,
            steps_per_color: 0,
            dp_bits,
            max_segment_steps: 64u32.saturating_mul(1u32.checked_shl(dp_bits).unwrap_or(u32::MAX)),
            state_width: spec.state_width(),
            reduction_seed,
        }
    }

    pub fn validate(&self) -> Result<(), TmtoError> {
        if self.state_width == 0 || self.state_width > 64 {
            return Err(TmtoError::BadWidth(self.state_width));
        }
        if self.n_colors == 0 {
            return Err(TmtoError::NoColors);
        }
        match self.mode {
            ChainMode::Fixed => {
                if self.steps_per_color == 0 {
                    return Err(TmtoError::NoSteps);
                }
            }
            ChainMode::Dp => {
                if self.dp_bits == 0 || self.dp_bits >= self.state_width {
                    return Err(TmtoError::BadDpBits {
                        dp_bits: self.dp_bits,
                        width: self.state_width,
                    });
                }
                if (self.max_segment_steps as u64) < 1u64 << self.dp_bits {
                    return Err(TmtoError::SegmentCapTooSmall {
                        min: 1u64 << self.dp_bits,
                        got: self.max_segment_steps,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn state_mask(&self) -> u64 {
        if self.state_width >= 64 {
            u64::MAX
        } else {
            (1u64 << self.state_width) - 1
        }
    }

    pub fn dp_mask(&self) -> u64 {
        (1u64 << self.dp_bits) - 1
    }

    /// The XOR constant for one color of this table's reduction family.
    pub fn reduction_const(&self, color: u32) -> u64 {
        let salt = (self.table_id << 32).wrapping_add(color as u64);
        mix64(self.reduction_seed ^ salt)
    }

    /// Map a cipher output back into the state space: XOR with the
    /// color's constant, masked to the state width. An involution in `x`
    /// for fixed color.
    pub fn reduction(&self, color: u32, x: u64) -> u64 {
        (x ^ self.reduction_const(color)) & self.state_mask()
    }

    /// One chain link: the cipher image of `x`, then the reduction.
    pub fn step(&self, spec: &CipherSpec, color: u32, x: u64) -> u64 {
        self.reduction(color, spec.forward_image(x))
    }
}

/// Why a chain produced no record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainOutcome {
    Complete(ChainRecord),
    /// A DP segment exceeded `max_segment_steps`; the start is abandoned.
    Rejected,
}

/// Run one chain from `start` to its end value.
pub fn generate_chain(spec: &CipherSpec, params: &TableParams, start: u64) -> ChainOutcome {
    let mut v = start;
    match params.mode {
        ChainMode::Fixed => {
            for color in 0..params.n_colors {
                for _ in 0..params.steps_per_color {
                    v = params.step(spec, color, v);
                }
            }
        }
        ChainMode::Dp => {
            for color in 0..params.n_colors {
                match complete_dp_segment(spec, params, color, v) {
                    Some((dp, _)) => v = dp,
                    None => return ChainOutcome::Rejected,
                }
            }
        }
    }
    ChainOutcome::Complete(ChainRecord { start, end: v })
}

/// Step with `color` from `v` until a distinguished point; every segment
/// takes at least one step. Returns the DP value and the number of steps
/// spent, or `None` if the cap is exceeded.
pub fn complete_dp_segment(
    spec: &CipherSpec,
    params: &TableParams,
    color: u32,
    mut v: u64,
) -> Option<(u64, u32)> {
    for n in 1..=params.max_segment_steps {
        v = params.step(spec, color, v);
        if v & params.dp_mask() == 0 {
            return Some((v, n));
        }
    }
    None
}

/// Build statistics, in chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildStats {
    pub requested: u64,
    pub generated: u64,
    /// DP chains abandoned for overrunning the segment cap (including
    /// abandoned retries).
    pub rejected: u64,
    /// Requested slots never filled because the retry budget ran out.
    pub lost: u64,
    /// Records dropped by end-value deduplication.
    pub merged: u64,
    pub final_count: u64,
}

/// An in-memory table: records sorted by end, ends unique.
#[derive(Debug, Clone)]
pub struct BuiltTable {
    pub params: TableParams,
    pub records: Vec<ChainRecord>,
    pub stats: BuildStats,
}

/// Replacement rounds drawn after DP rejections before a slot counts as
/// lost.
pub const RETRY_ROUNDS: u32 = 4;

/// Generate `n_chains` chains from seeded distinct starts, in parallel,
/// and assemble the sorted deduplicated table. Among records sharing an
/// end value the smallest start survives, so the result is independent
/// of generation order and worker count. `workers` = 0 uses all cores.
pub fn build_table(
    spec: &CipherSpec,
    params: &TableParams,
    n_chains: u64,
    sample_seed: u64,
    workers: usize,
) -> Result<BuiltTable, TmtoError> {
    params.validate()?;
    if params.state_width < 64 && n_chains > 1u64 << params.state_width {
        return Err(TmtoError::StateSpaceExhausted {
            requested: n_chains,
            width: params.state_width,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");

    let mut sampler = StartSampler::new(params, sample_seed);
    let mut stats = BuildStats {
        requested: n_chains,
        ..BuildStats::default()
    };
    let mut records = Vec::with_capacity(n_chains as usize);

    // Rejected DP chains are replaced with fresh starts in rounds; the
    // replacement draws depend only on how many chains failed, never on
    // scheduling, so any worker count produces the same table.
    let mut pending = sampler.draw(n_chains);
    let mut shortfall = 0u64;
    for round in 0..=RETRY_ROUNDS {
        let outcomes: Vec<ChainOutcome> = pool.install(|| {
            pending
                .par_iter()
                .map(|&s| generate_chain(spec, params, s))
                .collect()
        });
        stats.generated += pending.len() as u64;
        let mut failed = 0u64;
        for outcome in outcomes {
            match outcome {
                ChainOutcome::Complete(rec) => records.push(rec),
                ChainOutcome::Rejected => failed += 1,
            }
        }
        stats.rejected += failed;
        if failed == 0 {
            break;
        }
        if round == RETRY_ROUNDS {
            shortfall += failed;
            break;
        }
        let replacement = failed.min(sampler.remaining());
        shortfall += failed - replacement;
        pending = sampler.draw(replacement);
    }
    stats.lost = shortfall;

    let before = records.len() as u64;
    records.sort_by_key(|r| (r.end, r.start));
    records.dedup_by_key(|r| r.end);
    stats.merged = before - records.len() as u64;
    stats.final_count = records.len() as u64;
    Ok(BuiltTable {
        params: *params,
        records,
        stats,
    })
}

/// Deterministic distinct start values: a counter pushed through the
/// finalizer, with rejection of duplicates. The stream depends only on
/// (seed, table_id), so rebuilds and shard splits agree byte for byte.
struct StartSampler {
    base: u64,
    counter: u64,
    mask: u64,
    seen: HashSet<u64>,
    space: u64,
}

impl StartSampler {
    fn new(params: &TableParams, seed: u64) -> StartSampler {
        StartSampler {
            base: mix64(seed ^ mix64(params.table_id.wrapping_add(0xA5)) ),
            counter: 0,
            mask: params.state_mask(),
            seen: HashSet::new(),
            space: if params.state_width >= 64 { u64::MAX } else { 1u64 << params.state_width },
        }
    }

    fn remaining(&self) -> u64 {
        self.space - self.seen.len() as u64
    }

    fn draw(&mut self, n: u64) -> Vec<u64> {
        let mut out = Vec::with_capacity(n as usize);
        while (out.len() as u64) < n {
            let c = mix64(self.base.wrapping_add(self.counter.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            self.counter += 1;
            let v = c & self.mask;
            if self.seen.insert(v) {
                out.push(v);
            }
        }
        out
    }
}

/// Exact count of distinct states this table can recover, by chain
/// regeneration. In FIXED mode a lookup can only hypothesize that the
/// target sat at the final step of a color segment, so only those
/// entrants count; in DP mode every value entering the cipher image is
/// recoverable. Guarded to small widths.
pub fn coverage(spec: &CipherSpec, table: &BuiltTable) -> Result<u64, TmtoError> {
    let params = &table.params;
    if params.state_width > ENUMERATION_GUARD_BITS {
        return Err(TmtoError::WidthExceedsGuard(params.state_width, ENUMERATION_GUARD_BITS));
    }
    let mut seen = Bitmap::new(params.state_width);
    for rec in &table.records {
        let mut v = rec.start;
        match params.mode {
            ChainMode::Fixed => {
                for color in 0..params.n_colors {
                    for s in 0..params.steps_per_color {
                        if s == params.steps_per_color - 1 {
                            seen.set(v);
                        }
                        v = params.step(spec, color, v);
                    }
                }
            }
            ChainMode::Dp => {
                for color in 0..params.n_colors {
                    loop {
                        seen.set(v);
                        v = params.step(spec, color, v);
                        if v & params.dp_mask() == 0 {
                            break;
                        }
                    }
                }
            }
        }
        debug_assert_eq!(v, rec.end);
    }
    Ok(seen.count())
}

/// Width guard for anything that enumerates or bit-maps the state space.
pub const ENUMERATION_GUARD_BITS: u32 = 28;

/// A 2^width-bit membership map.
pub struct Bitmap {
    words: Vec<u64>,
}

impl Bitmap {
    pub fn new(width: u32) -> Bitmap {
        assert!(width <= ENUMERATION_GUARD_BITS);
        let bits = 1usize << width;
        Bitmap {
            words: vec![0; bits.div_ceil(64)],
        }
    }

    pub fn set(&mut self, x: u64) {
        self.words[(x >> 6) as usize] |= 1 << (x & 63);
    }

    pub fn get(&self, x: u64) -> bool {
        self.words[(x >> 6) as usize] >> (x & 63) & 1 == 1
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }
}
