//! Data-parallel batch helpers.
//!
//! Every function has a `_seq` form and a `_par` form (the latter only with
//! the `parallel` feature); the unsuffixed form picks `_par` when available.
//! Reductions split the input into fixed chunks and combine partial results
//! in chunk order, so both forms return bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::codec::{decode_frame, encode_frame, DecodeError, RawCounts, RawFrame, FRAME_LEN};
use crate::conversion::{convert_counts, LinearMap, QualityFlag};

/// Elements per partial sum in reductions.
pub const CHUNK: usize = 4096;

pub fn encode_frames_seq(frames: &[RawFrame]) -> Vec<[u8; FRAME_LEN]> {
    frames.iter().map(encode_frame).collect()
}

pub fn decode_frames_seq<B: AsRef<[u8]>>(lines: &[B]) -> Vec<Result<RawFrame, DecodeError>> {
    lines.iter().map(|l| decode_frame(l.as_ref())).collect()
}

pub fn convert_counts_seq(map: &LinearMap, counts: &[RawCounts]) -> Vec<(f64, QualityFlag)> {
    counts.iter().map(|&c| convert_counts(map, c)).collect()
}

#[cfg(feature = "parallel")]
pub fn encode_frames_par(frames: &[RawFrame]) -> Vec<[u8; FRAME_LEN]> {
    frames.par_iter().map(encode_frame).collect()
}

#[cfg(feature = "parallel")]
pub fn decode_frames_par<B: AsRef<[u8]> + Sync>(lines: &[B]) -> Vec<Result<RawFrame, DecodeError>> {
    lines.par_iter().map(|l| decode_frame(l.as_ref())).collect()
}

#[cfg(feature = "parallel")]
pub fn convert_counts_par(map: &LinearMap, counts: &[RawCounts]) -> Vec<(f64, QualityFlag)> {
    counts.par_iter().map(|&c| convert_counts(map, c)).collect()
}

/// Partial statistics of absolute differences.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiffAccum {
    pub n: usize,
    pub max_abs: f64,
    pub sum_abs: f64,
    pub sum_sq: f64,
}

impl DiffAccum {
    fn of(pairs: &[(f64, f64)]) -> Self {
        let mut acc = DiffAccum::default();
        for &(a, b) in pairs {
            let d = (a - b).abs();
            acc.n += 1;
            acc.max_abs = acc.max_abs.max(d);
            acc.sum_abs += d;
            acc.sum_sq += d * d;
        }
        acc
    }

    fn merge(self, o: Self) -> Self {
        DiffAccum {
            n: self.n + o.n,
            max_abs: self.max_abs.max(o.max_abs),
            sum_abs: self.sum_abs + o.sum_abs,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }
}

pub fn diff_accum_seq(pairs: &[(f64, f64)]) -> DiffAccum {
    pairs
        .chunks(CHUNK)
        .map(DiffAccum::of)
        .fold(DiffAccum::default(), DiffAccum::merge)
}

#[cfg(feature = "parallel")]
pub fn diff_accum_par(pairs: &[(f64, f64)]) -> DiffAccum {
    let parts: Vec<DiffAccum> = pairs.par_chunks(CHUNK).map(DiffAccum::of).collect();
    parts.into_iter().fold(DiffAccum::default(), DiffAccum::merge)
}

#[cfg(feature = "parallel")]
pub use self::{
    convert_counts_par as convert_counts_batch, decode_frames_par as decode_frames,
    diff_accum_par as diff_accum, encode_frames_par as encode_frames,
};

#[cfg(not(feature = "parallel"))]
pub use self::{
    convert_counts_seq as convert_counts_batch, decode_frames_seq as decode_frames,
    diff_accum_seq as diff_accum, encode_frames_seq as encode_frames,
};

/// Runs `f` over `0..n` and collects the results in index order.
pub fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize) -> Vec<RawFrame> {
        (0..n)
            .map(|i| {
                let c: Vec<u16> = (0..8).map(|k| ((i * 37 + k * 101) % 1024) as u16).collect();
                RawFrame::from_raw(i as u32 % 256, &c).unwrap()
            })
            .collect()
    }

    #[test]
    fn batch_round_trip() {
        let f = frames(1000);
        let enc = encode_frames(&f);
        let dec: Vec<_> = decode_frames(&enc).into_iter().map(Result::unwrap).collect();
        assert_eq!(dec, f);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn seq_and_par_agree_exactly() {
        let f = frames(5000);
        assert_eq!(encode_frames_seq(&f), encode_frames_par(&f));
        let enc = encode_frames_seq(&f);
        assert_eq!(decode_frames_seq(&enc), decode_frames_par(&enc));
        let counts: Vec<_> = (0..=1023).map(|c| RawCounts::new(c).unwrap()).collect();
        let m = LinearMap::humidity();
        assert_eq!(convert_counts_seq(&m, &counts), convert_counts_par(&m, &counts));
        let pairs: Vec<(f64, f64)> = (0..100_000)
            .map(|i| ((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        assert_eq!(diff_accum_seq(&pairs), diff_accum_par(&pairs));
    }

    #[test]
    fn accum_basics() {
        let a = diff_accum(&[(1.0, 3.0), (2.0, 2.0)]);
        assert_eq!((a.n, a.max_abs, a.sum_abs, a.sum_sq), (2, 2.0, 2.0, 4.0));
        assert_eq!(diff_accum(&[]), DiffAccum::default());
        assert_eq!(map_indices(4, |i| i * i), vec![0, 1, 4, 9]);
    }
}
