//! The online phase: turn captured keystream into state-width windows,
//! look each window up in the rainbow tables, filter false alarms by
//! regeneration, and recover the post-setup state and session key.

use crate::cipher::{CipherSpec, FrameNumber, SessionKey};
use crate::table_store::{StoreError, TableReader};
use crate::tmto::{complete_dp_segment, BuiltTable, ChainMode, TableParams};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("burst of {got} bits is shorter than the {need}-bit state width")]
    BurstTooShort { got: usize, need: u32 },
    #[error("table state width {table} does not match the cipher's {cipher}")]
    WidthMismatch { table: u32, cipher: u32 },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One known-keystream observation: `window` holds `state_width`
/// consecutive keystream bits (bit `i` of the word = keystream bit
/// `clock_offset + i`), so the state clocked `clock_offset` times past
/// the post-setup state has this window as its forward image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeystreamSample {
    pub window: u64,
    pub clock_offset: u32,
    pub source_tag: u64,
}

/// All sliding state-width windows of one burst of keystream bits
/// (values 0/1 per element): a 114-bit burst yields
/// `114 - state_width + 1` samples.
pub fn derive_samples(spec: &CipherSpec, burst: &[u8]) -> Result<Vec<KeystreamSample>, AttackError> {
    let w = spec.state_width() as usize;
    if burst.len() < w {
        return Err(AttackError::BurstTooShort {
            got: burst.len(),
            need: spec.state_width(),
        });
    }
    Ok((0..=burst.len() - w)
        .map(|i| {
            let mut window = 0u64;
            for (b, &bit) in burst[i..i + w].iter().enumerate() {
                window |= (bit as u64 & 1) << b;
            }
            KeystreamSample {
                window,
                clock_offset: i as u32,
                source_tag: i as u64,
            }
        })
        .collect())
}

/// Where the attack reads tables from: in memory right after a build, or
/// from a validated file.
pub trait TableSource {
    fn params(&self) -> &TableParams;
    fn find_by_end(&self, end: u64) -> Result<Option<u64>, StoreError>;
    fn record_count(&self) -> u64;
}

impl TableSource for BuiltTable {
    fn params(&self) -> &TableParams {
        &self.params
    }

    fn find_by_end(&self, end: u64) -> Result<Option<u64>, StoreError> {
        Ok(self
            .records
            .binary_search_by_key(&end, |r| r.end)
            .ok()
            .map(|i| self.records[i].start))
    }

    fn record_count(&self) -> u64 {
        self.records.len() as u64
    }
}

impl TableSource for TableReader {
    fn params(&self) -> &TableParams {
        TableReader::params(self)
    }

    fn find_by_end(&self, end: u64) -> Result<Option<u64>, StoreError> {
        TableReader::find_by_end(self, end)
    }

    fn record_count(&self) -> u64 {
        TableReader::record_count(self)
    }
}

/// Work counters; the f-evaluation count is the cost measure every
/// trade-off claim is stated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LookupStats {
    /// All image evaluations, scan and regeneration together.
    pub f_evals: u64,
    /// The share of `f_evals` spent regenerating chains after an
    /// endpoint match. The hypothesis scan alone is `f_evals` minus
    /// this, bounded by steps x colors(colors+1)/2 per lookup.
    pub regen_evals: u64,
    pub table_probes: u64,
    pub false_alarms: u64,
}

/// Try every color hypothesis for one window against one table and
/// return all verified preimage candidates (normally none or one).
///
/// Hypotheses run from the last color backwards: assuming the window's
/// preimage sat at the final step of color `j`'s segment, reducing the
/// window with color `j` gives the chain value at the start of segment
/// `j+1`, and walking the remaining colors reaches the chain end. An
/// endpoint match regenerates the surviving chain from its start; the
/// candidate is kept only if its forward image reproduces the window,
/// which filters the false alarms merges cause. In DP mode the reduced
/// value lands somewhere inside segment `j` instead, so the walk first
/// completes that segment and the regeneration scans every entrant of
/// segment `j`.
pub fn lookup_sample<T: TableSource>(
    spec: &CipherSpec,
    table: &T,
    window: u64,
    stats: &mut LookupStats,
) -> Result<Vec<u64>, AttackError> {
    let params = *table.params();
    if params.state_width != spec.state_width() {
        return Err(AttackError::WidthMismatch {
            table: params.state_width,
            cipher: spec.state_width(),
        });
    }
    let mut candidates = Vec::new();
    for j in (0..params.n_colors).rev() {
        let y = params.reduction(j, window);
        let end = match walk_to_end(spec, &params, j, y, stats) {
            Some(end) => end,
            None => continue,
        };
        stats.table_probes += 1;
        let start = match table.find_by_end(end)? {
            Some(start) => start,
            None => continue,
        };
        let before = stats.f_evals;
        let found = regenerate(spec, &params, j, start, window, stats, &mut candidates);
        stats.regen_evals += stats.f_evals - before;
        if !found {
            stats.false_alarms += 1;
        }
    }
    candidates.sort_unstable();
    candidates.dedup();
    Ok(candidates)
}

/// From the reduced value of hypothesis color `j`, walk to the chain
/// end. `None` if a DP segment overruns its cap (dead hypothesis).
fn walk_to_end(
    spec: &CipherSpec,
    params: &TableParams,
    j: u32,
    y: u64,
    stats: &mut LookupStats,
) -> Option<u64> {
    let mut v = y;
    match params.mode {
        ChainMode::Fixed => {
            for color in j + 1..params.n_colors {
                for _ in 0..params.steps_per_color {
                    v = params.step(spec, color, v);
                    stats.f_evals += 1;
                }
            }
            Some(v)
        }
        ChainMode::Dp => {
            // The reduced value is a post-step value of segment j: if it
            // is already distinguished the segment ended right there,
            // otherwise finish the segment.
            if v & params.dp_mask() != 0 {
                match complete_dp_segment(spec, params, j, v) {
                    Some((dp, n)) => {
                        stats.f_evals += n as u64;
                        v = dp;
                    }
                    None => {
                        stats.f_evals += params.max_segment_steps as u64;
                        return None;
                    }
                }
            }
            for color in j + 1..params.n_colors {
                match complete_dp_segment(spec, params, color, v) {
                    Some((dp, n)) => {
                        stats.f_evals += n as u64;
                        v = dp;
                    }
                    None => {
                        stats.f_evals += params.max_segment_steps as u64;
                        return None;
                    }
                }
            }
            Some(v)
        }
    }
}

/// Regenerate the chain that owns `start` up to hypothesis color `j`,
/// pushing every value whose forward image equals the window. Returns
/// whether anything matched.
fn regenerate(
    spec: &CipherSpec,
    params: &TableParams,
    j: u32,
    start: u64,
    window: u64,
    stats: &mut LookupStats,
    candidates: &mut Vec<u64>,
) -> bool {
    let mut v = start;
    match params.mode {
        ChainMode::Fixed => {
            for color in 0..j {
                for _ in 0..params.steps_per_color {
                    v = params.step(spec, color, v);
                    stats.f_evals += 1;
                }
            }
            for _ in 0..params.steps_per_color.saturating_sub(1) {
                v = params.step(spec, j, v);
                stats.f_evals += 1;
            }
            stats.f_evals += 1;
            if spec.forward_image(v) == window {
                candidates.push(v);
                return true;
            }
            false
        }
        ChainMode::Dp => {
            for color in 0..j {
                match complete_dp_segment(spec, params, color, v) {
                    Some((dp, n)) => {
                        stats.f_evals += n as u64;
                        v = dp;
                    }
                    None => return false,
                }
            }
            // Scan segment j: each image evaluation both checks the
            // entrant and advances the walk.
            let mut found = false;
            loop {
                let img = spec.forward_image(v);
                stats.f_evals += 1;
                if img == window {
                    candidates.push(v);
                    found = true;
                }
                v = params.reduction(j, img);
                if v & params.dp_mask() == 0 {
                    return found;
                }
            }
        }
    }
}

/// The independence-approximation success estimate:
/// `1 - (1 - coverage/state_space)^n_samples`.
pub fn predict_success(coverage: u64, state_space: u64, n_samples: u64) -> f64 {
    let q = 1.0 - coverage as f64 / state_space as f64;
    1.0 - q.powf(n_samples as f64)
}

/// The multi-table form: tables differ in coverage, every sample is
/// tried against every table.
pub fn predict_success_multi(coverages: &[u64], state_space: u64, n_samples: u64) -> f64 {
    let mut miss = 1.0;
    for &c in coverages {
        miss *= (1.0 - c as f64 / state_space as f64).powf(n_samples as f64);
    }
    1.0 - miss
}

/// A successful attack: which (sample, table) pair hit, the verified
/// window preimages, the post-setup states they roll back to, and the
/// session keys those yield.
#[derive(Debug, Clone)]
pub struct AttackHit {
    pub sample_index: usize,
    pub table_index: usize,
    pub window_states: Vec<u64>,
    pub setup_states: Vec<u64>,
    pub keys: Vec<SessionKey>,
    pub keys_truncated: bool,
}

#[derive(Debug, Clone)]
pub struct AttackReport {
    pub stats: LookupStats,
    /// (sample, table) pairs examined before stopping.
    pub pairs_tried: u64,
    pub hit: Option<AttackHit>,
    pub wall: Duration,
}

/// Run samples against tables (samples outer, tables inner), stopping
/// at the first verified hit. Each verified window preimage is rolled
/// back `clock_offset` clocks by back-clocking search (replay-checked),
/// and key recovery runs on the rolled-back states when a frame number
/// is supplied. A report with `hit: None` is the no-hit outcome whose
/// frequency the success-rate experiment measures.
pub fn attack<T: TableSource>(
    spec: &CipherSpec,
    tables: &[T],
    samples: &[KeystreamSample],
    want_key: Option<FrameNumber>,
    max_key_candidates: usize,
) -> Result<AttackReport, AttackError> {
    let t0 = Instant::now();
    let mut stats = LookupStats::default();
    let mut pairs_tried = 0u64;
    for (sample_index, sample) in samples.iter().enumerate() {
        for (table_index, table) in tables.iter().enumerate() {
            pairs_tried += 1;
            let window_states = lookup_sample(spec, table, sample.window, &mut stats)?;
            if window_states.is_empty() {
                continue;
            }
            let mut setup_states = Vec::new();
            for &x in &window_states {
                for s in rollback_states(spec, x, sample.clock_offset) {
                    if !setup_states.contains(&s) {
                        setup_states.push(s);
                    }
                }
            }
            setup_states.sort_unstable();
            let mut keys = Vec::new();
            let mut keys_truncated = false;
            if let Some(frame) = want_key {
                for &s in &setup_states {
                    let st = spec.unpack(s).expect("rolled-back states are in range");
                    let rec = spec.recover_key(&st, frame, max_key_candidates);
                    keys_truncated |= rec.truncated;
                    for k in rec.keys {
                        if !keys.contains(&k) {
                            keys.push(k);
                        }
                    }
                }
                keys.sort();
            }
            return Ok(AttackReport {
                stats,
                pairs_tried,
                hit: Some(AttackHit {
                    sample_index,
                    table_index,
                    window_states,
                    setup_states,
                    keys,
                    keys_truncated,
                }),
                wall: t0.elapsed(),
            });
        }
    }
    Ok(AttackReport {
        stats,
        pairs_tried,
        hit: None,
        wall: t0.elapsed(),
    })
}

/// All packed states that reach `target` (packed) after exactly `back`
/// majority clockings, found by depth-first search over single-step
/// predecessors and confirmed by replaying the clockings forward.
pub fn rollback_states(spec: &CipherSpec, target: u64, back: u32) -> Vec<u64> {
    let target_state = match spec.unpack(target) {
        Ok(st) => st,
        Err(_) => return Vec::new(),
    };
    let mut out = Vec::new();
    let mut stack = vec![(target_state, 0u32)];
    while let Some((st, depth)) = stack.pop() {
        if depth == back {
            if spec.advance(&st, back as usize) == target_state {
                let w = spec.pack(&st);
                if !out.contains(&w) {
                    out.push(w);
                }
            }
            continue;
        }
        for prev in spec.backclock_candidates(&st) {
            stack.push((prev, depth + 1));
        }
    }
    out.sort_unstable();
    out
}
