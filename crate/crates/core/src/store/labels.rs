use super::manifest::FrameRange;
use crate::error::{Error, Result};

/// Converts inclusive frame-level anomaly ranges to one binary label per
/// snippet. A snippet is abnormal if its frame span touches any range.
/// Trailing frames that do not fill a whole snippet are dropped.
pub fn snippet_labels(ranges: &[FrameRange], frame_count: u32, snippet_len: usize) -> Result<Vec<u8>> {
    if snippet_len == 0 {
        return Err(Error::validation("snippet_len must be at least 1"));
    }
    for r in ranges {
        r.validate(frame_count)?;
    }
    let count = frame_count as usize / snippet_len;
    let labels = (0..count)
        .map(|i| {
            let lo = (i * snippet_len) as u32;
            let hi = ((i + 1) * snippet_len - 1) as u32;
            ranges.iter().any(|r| r.start <= hi && lo <= r.end) as u8
        })
        .collect();
    Ok(labels)
}

/// Per-frame labels for the first `frames` frames.
pub fn frame_labels(ranges: &[FrameRange], frames: usize) -> Vec<u8> {
    (0..frames as u32)
        .map(|f| ranges.iter().any(|r| r.start <= f && f <= r.end) as u8)
        .collect()
}

/// Repeats each snippet score `snippet_len` times, truncated to `frame_count`.
pub fn broadcast_to_frames(scores: &[f64], snippet_len: usize, frame_count: usize) -> Vec<f64> {
    scores
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s, snippet_len))
        .take(frame_count)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: label a snippet by enumerating its frames.
    fn oracle(ranges: &[FrameRange], frame_count: u32, len: usize) -> Vec<u8> {
        let frames = frame_labels(ranges, frame_count as usize);
        frames
            .chunks_exact(len)
            .map(|c| c.iter().any(|&f| f == 1) as u8)
            .collect()
    }

    #[test]
    fn default_window_sets_snippets_12_to_18() {
        let ranges = [FrameRange::new(192, 288)];
        let labels = snippet_labels(&ranges, 384, 16).unwrap();
        assert_eq!(labels.len(), 24);
        let set: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| l == 1).map(|(i, _)| i).collect();
        assert_eq!(set, (12..=18).collect::<Vec<_>>());
        assert_eq!(labels, oracle(&ranges, 384, 16));
    }

    #[test]
    fn empty_and_full_ranges() {
        assert!(snippet_labels(&[], 384, 16).unwrap().iter().all(|&l| l == 0));
        assert!(snippet_labels(&[FrameRange::new(0, 383)], 384, 16)
            .unwrap()
            .iter()
            .all(|&l| l == 1));
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        assert!(snippet_labels(&[FrameRange::new(10, 384)], 384, 16).is_err());
        assert!(snippet_labels(&[], 384, 0).is_err());
    }

    #[test]
    fn matches_frame_enumeration_on_odd_geometry() {
        for (ranges, frames, len) in [
            (vec![FrameRange::new(15, 15)], 100u32, 16usize),
            (vec![FrameRange::new(16, 16), FrameRange::new(90, 95)], 100, 16),
            (vec![FrameRange::new(3, 7)], 17, 5),
        ] {
            assert_eq!(snippet_labels(&ranges, frames, len).unwrap(), oracle(&ranges, frames, len));
        }
    }

    #[test]
    fn broadcast_repeats_and_truncates() {
        let f = broadcast_to_frames(&[0.1, 0.7], 3, 5);
        assert_eq!(f, vec![0.1, 0.1, 0.1, 0.7, 0.7]);
        assert_eq!(broadcast_to_frames(&[0.2; 24], 16, 384).len(), 384);
    }
}
