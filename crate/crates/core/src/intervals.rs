//! Sets of half-open byte ranges.

use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("empty or inverted range {start}..{end}")]
pub struct EmptyRange {
    pub start: u64,
    pub end: u64,
}

/// Result of inserting one range: how many of its bytes were not yet covered
/// and how many already were. The two always sum to the range length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InsertOutcome {
    pub new_bytes: u64,
    pub overlap_bytes: u64,
}

/// Sorted, disjoint, non-adjacent half-open ranges.
///
/// Touching ranges are merged on insert, so `[0, 10)` and `[10, 20)` are
/// stored as `[0, 20)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalSet {
    ranges: Vec<(u64, u64)>,
    total: u64,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Number of stored (maximal) ranges.
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = Range<u64>> + '_ {
        self.ranges.iter().map(|&(s, e)| s..e)
    }

    pub fn first(&self) -> Option<Range<u64>> {
        self.ranges.first().map(|&(s, e)| s..e)
    }

    /// Length of the prefix `[0, n)` that is fully covered.
    pub fn contiguous_prefix(&self) -> u64 {
        match self.ranges.first() {
            Some(&(0, end)) => end,
            _ => 0,
        }
    }

    /// Index of the first stored range whose end is >= `pos`.
    fn lower(&self, pos: u64) -> usize {
        self.ranges.partition_point(|&(_, e)| e < pos)
    }

    pub fn insert(&mut self, range: Range<u64>) -> Result<InsertOutcome, EmptyRange> {
        let (start, end) = (range.start, range.end);
        if start >= end {
            return Err(EmptyRange { start, end });
        }
        let first = self.lower(start);
        let mut last = first;
        let mut overlap = 0;
        let mut merged_start = start;
        let mut merged_end = end;
        while last < self.ranges.len() && self.ranges[last].0 <= end {
            let (s, e) = self.ranges[last];
            overlap += e.min(end).saturating_sub(s.max(start));
            merged_start = merged_start.min(s);
            merged_end = merged_end.max(e);
            last += 1;
        }
        let absorbed: u64 = self.ranges[first..last].iter().map(|&(s, e)| e - s).sum();
        self.ranges
            .splice(first..last, core::iter::once((merged_start, merged_end)));
        self.total = self.total - absorbed + (merged_end - merged_start);
        let len = end - start;
        Ok(InsertOutcome {
            new_bytes: len - overlap,
            overlap_bytes: overlap,
        })
    }

    /// Removes `range` from the set, returning the number of bytes removed.
    /// Empty ranges remove nothing.
    pub fn remove(&mut self, range: Range<u64>) -> u64 {
        let (start, end) = (range.start, range.end);
        if start >= end {
            return 0;
        }
        let mut i = self.ranges.partition_point(|&(_, e)| e <= start);
        let mut removed = 0;
        while i < self.ranges.len() && self.ranges[i].0 < end {
            let (s, e) = self.ranges[i];
            let cut_start = s.max(start);
            let cut_end = e.min(end);
            removed += cut_end - cut_start;
            match (s < cut_start, cut_end < e) {
                (false, false) => {
                    self.ranges.remove(i);
                    continue;
                }
                (true, false) => self.ranges[i].1 = cut_start,
                (false, true) => self.ranges[i].0 = cut_end,
                (true, true) => {
                    self.ranges[i].1 = cut_start;
                    self.ranges.insert(i + 1, (cut_end, e));
                    i += 1;
                }
            }
            i += 1;
        }
        self.total -= removed;
        removed
    }

    pub fn contains(&self, pos: u64) -> bool {
        let i = self.ranges.partition_point(|&(_, e)| e <= pos);
        self.ranges.get(i).is_some_and(|&(s, _)| s <= pos)
    }

    /// True if every byte of `range` is covered. Empty ranges are covered.
    pub fn covers(&self, range: Range<u64>) -> bool {
        if range.start >= range.end {
            return true;
        }
        let i = self.ranges.partition_point(|&(_, e)| e <= range.start);
        self.ranges
            .get(i)
            .is_some_and(|&(s, e)| s <= range.start && range.end <= e)
    }

    /// Bytes of `range` already covered by the set.
    pub fn overlap(&self, range: Range<u64>) -> u64 {
        if range.start >= range.end {
            return 0;
        }
        let mut i = self.ranges.partition_point(|&(_, e)| e <= range.start);
        let mut n = 0;
        while let Some(&(s, e)) = self.ranges.get(i) {
            if s >= range.end {
                break;
            }
            n += e.min(range.end) - s.max(range.start);
            i += 1;
        }
        n
    }

    /// The stored range containing `pos`, if any.
    pub fn range_containing(&self, pos: u64) -> Option<Range<u64>> {
        let i = self.ranges.partition_point(|&(_, e)| e <= pos);
        match self.ranges.get(i) {
            Some(&(s, e)) if s <= pos => Some(s..e),
            _ => None,
        }
    }

    /// Removes and returns up to `max_len` bytes from the front of the lowest
    /// range.
    pub fn pop_front(&mut self, max_len: u64) -> Option<Range<u64>> {
        let &(s, e) = self.ranges.first()?;
        let end = e.min(s + max_len.max(1));
        self.remove(s..end);
        Some(s..end)
    }

    pub fn clear(&mut self) {
        self.ranges.clear();
        self.total = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ranges(set: &IntervalSet) -> Vec<Range<u64>> {
        set.iter().collect()
    }

    #[test]
    fn insert_into_empty() {
        let mut s = IntervalSet::new();
        assert_eq!(
            s.insert(0..1200).unwrap(),
            InsertOutcome {
                new_bytes: 1200,
                overlap_bytes: 0
            }
        );
        assert_eq!(
            s.insert(600..1800).unwrap(),
            InsertOutcome {
                new_bytes: 600,
                overlap_bytes: 600
            }
        );
        assert_eq!(ranges(&s), vec![0..1800]);
        assert_eq!(s.total_bytes(), 1800);
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn rejects_empty_and_inverted() {
        let mut s = IntervalSet::new();
        assert_eq!(s.insert(5..5), Err(EmptyRange { start: 5, end: 5 }));
        assert!(s.insert(7..3).is_err());
        assert!(s.is_empty());
    }

    #[test]
    fn adjacent_ranges_merge() {
        let mut s = IntervalSet::new();
        s.insert(10..20).unwrap();
        s.insert(30..40).unwrap();
        s.insert(20..30).unwrap();
        assert_eq!(ranges(&s), vec![10..40]);
        s.insert(0..10).unwrap();
        assert_eq!(s.contiguous_prefix(), 40);
    }

    #[test]
    fn insert_spanning_many() {
        let mut s = IntervalSet::new();
        for i in 0..5 {
            s.insert(i * 10..i * 10 + 5).unwrap();
        }
        let out = s.insert(3..43).unwrap();
        assert_eq!(out.overlap_bytes, 2 + 5 + 5 + 5 + 3);
        assert_eq!(out.new_bytes, 40 - 20);
        assert_eq!(ranges(&s), vec![0..45]);
    }

    #[test]
    fn remove_splits() {
        let mut s = IntervalSet::new();
        s.insert(0..100).unwrap();
        assert_eq!(s.remove(40..60), 20);
        assert_eq!(ranges(&s), vec![0..40, 60..100]);
        assert_eq!(s.remove(30..70), 20);
        assert_eq!(ranges(&s), vec![0..30, 70..100]);
        assert_eq!(s.total_bytes(), 60);
        assert_eq!(s.remove(200..300), 0);
    }

    #[test]
    fn covers_and_contains() {
        let mut s = IntervalSet::new();
        s.insert(10..20).unwrap();
        assert!(s.covers(10..20));
        assert!(!s.covers(9..20));
        assert!(s.contains(19));
        assert!(!s.contains(20));
        assert_eq!(s.overlap(0..15), 5);
        assert_eq!(s.range_containing(12), Some(10..20));
    }

    #[test]
    fn pop_front_chunks() {
        let mut s = IntervalSet::new();
        s.insert(0..3000).unwrap();
        assert_eq!(s.pop_front(1475), Some(0..1475));
        assert_eq!(s.pop_front(1475), Some(1475..2950));
        assert_eq!(s.pop_front(1475), Some(2950..3000));
        assert_eq!(s.pop_front(1475), None);
    }
}
