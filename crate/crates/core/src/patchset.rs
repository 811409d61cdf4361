//! Binary diff and patch.
//!
//! `diff` trims the common prefix and suffix, then splits the remaining
//! middle of the target with a gear-hash content-defined chunker and looks
//! each chunk up among the chunks of the base. Matched chunks become COPY
//! ops and are then stretched byte-by-byte into the neighbouring unmatched
//! regions; everything left over is emitted as INSERT.
//!
//! Patch wire format (all integers big-endian):
//!
//! ```text
//! "EDGP1" ‖ base_len:u64 ‖ target_len:u64 ‖ op*
//! op := 0x01 ‖ offset:u64 ‖ len:u64        COPY
//!     | 0x02 ‖ len:u64 ‖ bytes[len]         INSERT
//! ```

use std::collections::HashMap;
use std::ops::Range;

use crate::wire::Reader;

const MAGIC: &[u8; 5] = b"EDGP1";
const TAG_COPY: u8 = 0x01;
const TAG_INSERT: u8 = 0x02;
pub const HEADER_LEN: usize = 5 + 8 + 8;
const COPY_OP_LEN: usize = 1 + 8 + 8;

/// Copies shorter than this are cheaper to ship as literal bytes.
const MIN_COPY: usize = 32;

pub const DEFAULT_MAX_INPUT: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("input of {len} bytes exceeds the {max}-byte limit")]
    InputTooLarge { len: u64, max: u64 },
    #[error("base is {actual} bytes but the patch expects {expected}")]
    BaseLengthMismatch { expected: u64, actual: u64 },
    #[error("malformed patch: {0}")]
    MalformedPatch(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatchOp {
    Copy { offset: u64, len: u64 },
    Insert(Vec<u8>),
}

impl PatchOp {
    pub fn output_len(&self) -> u64 {
        match self {
            PatchOp::Copy { len, .. } => *len,
            PatchOp::Insert(bytes) => bytes.len() as u64,
        }
    }
}

/// An edit script turning a `base_len`-byte input into `target_len` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchBlob {
    pub base_len: u64,
    pub target_len: u64,
    pub ops: Vec<PatchOp>,
}

impl PatchBlob {
    pub fn is_identity(&self) -> bool {
        match self.ops.as_slice() {
            [] => self.base_len == 0 && self.target_len == 0,
            [PatchOp::Copy { offset: 0, len }] => *len == self.base_len && *len == self.target_len,
            _ => false,
        }
    }

    /// Checks every structural invariant.
    pub fn validate(&self, max_target: u64) -> Result<()> {
        if self.target_len > max_target {
            return Err(Error::MalformedPatch("target length over limit"));
        }
        let mut total: u64 = 0;
        for op in &self.ops {
            match op {
                PatchOp::Copy { offset, len } => {
                    if *len == 0 {
                        return Err(Error::MalformedPatch("empty copy"));
                    }
                    let end = offset
                        .checked_add(*len)
                        .ok_or(Error::MalformedPatch("copy window overflows"))?;
                    if end > self.base_len {
                        return Err(Error::MalformedPatch("copy window outside base"));
                    }
                }
                PatchOp::Insert(bytes) if bytes.is_empty() => {
                    return Err(Error::MalformedPatch("empty insert"));
                }
                PatchOp::Insert(_) => {}
            }
            total = total
                .checked_add(op.output_len())
                .ok_or(Error::MalformedPatch("output length overflows"))?;
        }
        if total != self.target_len {
            return Err(Error::MalformedPatch("op lengths do not sum to target length"));
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .ops
                .iter()
                .map(|op| match op {
                    PatchOp::Copy { .. } => COPY_OP_LEN,
                    PatchOp::Insert(b) => 9 + b.len(),
                })
                .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.base_len.to_be_bytes());
        out.extend_from_slice(&self.target_len.to_be_bytes());
        for op in &self.ops {
            match op {
                PatchOp::Copy { offset, len } => {
                    out.push(TAG_COPY);
                    out.extend_from_slice(&offset.to_be_bytes());
                    out.extend_from_slice(&len.to_be_bytes());
                }
                PatchOp::Insert(bytes) => {
                    out.push(TAG_INSERT);
                    out.extend_from_slice(&(bytes.len() as u64).to_be_bytes());
                    out.extend_from_slice(bytes);
                }
            }
        }
        out
    }
}

/// Strictly parses and validates a serialized patch.
pub fn parse_patch(bytes: &[u8]) -> Result<PatchBlob> {
    let truncated = |_| Error::MalformedPatch("truncated");
    let mut r = Reader::new(bytes);
    if r.take(MAGIC.len()).map_err(truncated)? != MAGIC {
        return Err(Error::MalformedPatch("bad magic"));
    }
    let base_len = r.u64().map_err(truncated)?;
    let target_len = r.u64().map_err(truncated)?;
    let mut ops = Vec::new();
    while !r.is_empty() {
        match r.u8().map_err(truncated)? {
            TAG_COPY => {
                let offset = r.u64().map_err(truncated)?;
                let len = r.u64().map_err(truncated)?;
                ops.push(PatchOp::Copy { offset, len });
            }
            TAG_INSERT => {
                let len = r.u64().map_err(truncated)?;
                if len > r.remaining() as u64 {
                    return Err(Error::MalformedPatch("truncated"));
                }
                ops.push(PatchOp::Insert(r.take(len as usize).map_err(truncated)?.to_vec()));
            }
            _ => return Err(Error::MalformedPatch("unknown op tag")),
        }
    }
    let patch = PatchBlob {
        base_len,
        target_len,
        ops,
    };
    patch.validate(DEFAULT_MAX_INPUT)?;
    Ok(patch)
}

pub fn apply(base: &[u8], patch: &PatchBlob) -> Result<Vec<u8>> {
    if base.len() as u64 != patch.base_len {
        return Err(Error::BaseLengthMismatch {
            expected: patch.base_len,
            actual: base.len() as u64,
        });
    }
    patch.validate(DEFAULT_MAX_INPUT)?;
    let mut out = Vec::with_capacity(patch.target_len as usize);
    for op in &patch.ops {
        match op {
            PatchOp::Copy { offset, len } => {
                let start = *offset as usize;
                out.extend_from_slice(&base[start..start + *len as usize]);
            }
            PatchOp::Insert(bytes) => out.extend_from_slice(bytes),
        }
    }
    debug_assert_eq!(out.len() as u64, patch.target_len);
    Ok(out)
}

/// Tuning for [`diff_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffOptions {
    pub max_input: u64,
    pub min_chunk: usize,
    /// Mean chunk size is about `2^avg_chunk_bits` past `min_chunk`.
    pub avg_chunk_bits: u32,
    pub max_chunk: usize,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            max_input: DEFAULT_MAX_INPUT,
            min_chunk: 2 * 1024,
            avg_chunk_bits: 13,
            max_chunk: 64 * 1024,
        }
    }
}

pub fn diff(base: &[u8], target: &[u8]) -> Result<PatchBlob> {
    diff_with(base, target, &DiffOptions::default())
}

pub fn diff_with(base: &[u8], target: &[u8], opts: &DiffOptions) -> Result<PatchBlob> {
    for len in [base.len() as u64, target.len() as u64] {
        if len > opts.max_input {
            return Err(Error::InputTooLarge {
                len,
                max: opts.max_input,
            });
        }
    }
    let base_len = base.len() as u64;
    let target_len = target.len() as u64;
    if base == target {
        let ops = if base.is_empty() {
            Vec::new()
        } else {
            vec![PatchOp::Copy {
                offset: 0,
                len: base_len,
            }]
        };
        return Ok(PatchBlob {
            base_len,
            target_len,
            ops,
        });
    }

    let prefix = common_prefix(base, target);
    let suffix = common_suffix(&base[prefix..], &target[prefix..]);
    let mut segs = Vec::new();
    if prefix > 0 {
        segs.push(Seg::copy(0..prefix, 0));
    }
    let middle = prefix..target.len() - suffix;
    if !middle.is_empty() {
        match_chunks(base, target, middle, opts, &mut segs);
    }
    if suffix > 0 {
        segs.push(Seg::copy(target.len() - suffix..target.len(), base.len() - suffix));
    }

    let segs = refine(base, target, segs);
    let ops = segs
        .into_iter()
        .map(|s| match s.base {
            Some(b) => PatchOp::Copy {
                offset: b as u64,
                len: s.target.len() as u64,
            },
            None => PatchOp::Insert(target[s.target].to_vec()),
        })
        .collect();
    Ok(PatchBlob {
        base_len,
        target_len,
        ops,
    })
}

/// A run of target bytes, either copied from `base` at an offset or
/// inserted literally.
#[derive(Debug, Clone)]
struct Seg {
    target: Range<usize>,
    base: Option<usize>,
}

impl Seg {
    fn copy(target: Range<usize>, base: usize) -> Self {
        Seg {
            target,
            base: Some(base),
        }
    }

    fn insert(target: Range<usize>) -> Self {
        Seg { target, base: None }
    }

    fn base_end(&self) -> Option<usize> {
        self.base.map(|b| b + self.target.len())
    }
}

fn match_chunks(base: &[u8], target: &[u8], middle: Range<usize>, opts: &DiffOptions, segs: &mut Vec<Seg>) {
    if base.is_empty() {
        segs.push(Seg::insert(middle));
        return;
    }
    let mut index: HashMap<&[u8], usize> = HashMap::new();
    for chunk in chunks(base, opts) {
        index.entry(&base[chunk.clone()]).or_insert(chunk.start);
    }
    for chunk in chunks(&target[middle.clone()], opts) {
        let range = chunk.start + middle.start..chunk.end + middle.start;
        match index.get(&target[range.clone()]) {
            Some(&b) => segs.push(Seg::copy(range, b)),
            None => segs.push(Seg::insert(range)),
        }
    }
}

/// Merges neighbours, grows copies into adjacent inserts and demotes
/// copies too short to pay for themselves.
fn refine(base: &[u8], target: &[u8], segs: Vec<Seg>) -> Vec<Seg> {
    let mut segs = merge(segs);
    for i in 0..segs.len() {
        if segs[i].base.is_some() {
            continue;
        }
        if i > 0 {
            if let Some(mut b_end) = segs[i - 1].base_end() {
                let mut start = segs[i].target.start;
                while start < segs[i].target.end && b_end < base.len() && base[b_end] == target[start] {
                    start += 1;
                    b_end += 1;
                }
                segs[i - 1].target.end = start;
                segs[i].target.start = start;
            }
        }
        if i + 1 < segs.len() {
            if let Some(mut b) = segs[i + 1].base {
                let mut end = segs[i].target.end;
                while end > segs[i].target.start && b > 0 && base[b - 1] == target[end - 1] {
                    end -= 1;
                    b -= 1;
                }
                segs[i + 1].target.start = end;
                segs[i + 1].base = Some(b);
                segs[i].target.end = end;
            }
        }
    }
    let single = segs.len() == 1;
    for seg in &mut segs {
        if seg.base.is_some() && seg.target.len() < MIN_COPY && !single {
            seg.base = None;
        }
    }
    merge(segs)
}

fn merge(segs: Vec<Seg>) -> Vec<Seg> {
    let mut out: Vec<Seg> = Vec::with_capacity(segs.len());
    for seg in segs.into_iter().filter(|s| !s.target.is_empty()) {
        if let Some(last) = out.last_mut() {
            let joinable = match (last.base_end(), seg.base) {
                (None, None) => true,
                (Some(end), Some(b)) => end == b,
                _ => false,
            };
            if joinable && last.target.end == seg.target.start {
                last.target.end = seg.target.end;
                continue;
            }
        }
        out.push(seg);
    }
    out
}

fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

fn common_suffix(a: &[u8], b: &[u8]) -> usize {
    a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count()
}

const GEAR: [u64; 256] = gear_table();

const fn gear_table() -> [u64; 256] {
    // splitmix64
    let mut table = [0u64; 256];
    let mut state: u64 = 0x6564_6763_6861_696e;
    let mut i = 0;
    while i < 256 {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        table[i] = z ^ (z >> 31);
        i += 1;
    }
    table
}

/// Content-defined chunk boundaries of `data`.
pub(crate) fn chunks(data: &[u8], opts: &DiffOptions) -> Vec<Range<usize>> {
    // High bits of the gear hash depend on the last 64 input bytes.
    let mask: u64 = ((1u64 << opts.avg_chunk_bits) - 1) << (64 - opts.avg_chunk_bits);
    let mut out = Vec::with_capacity(data.len() / (opts.min_chunk + (1 << opts.avg_chunk_bits)) + 1);
    let mut start = 0;
    while start < data.len() {
        let rest = &data[start..];
        let len = if rest.len() <= opts.min_chunk {
            rest.len()
        } else {
            let limit = rest.len().min(opts.max_chunk);
            let mut hash: u64 = 0;
            let mut cut = limit;
            for (i, &byte) in rest.iter().enumerate().take(limit).skip(opts.min_chunk) {
                hash = (hash << 1).wrapping_add(GEAR[byte as usize]);
                if hash & mask == 0 {
                    cut = i + 1;
                    break;
                }
            }
            cut
        };
        out.push(start..start + len);
        start += len;
    }
    out
}
