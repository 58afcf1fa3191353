use std::collections::{BTreeMap, BTreeSet};

use similar::{capture_diff_slices, Algorithm, DiffOp};

/// Line-level difference between two versions of a file. Line numbers are 1-based.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineDiff {
    pub deleted: BTreeSet<u32>,
    pub added: BTreeSet<u32>,
    /// Unchanged lines, before-line → after-line. Strictly increasing.
    pub line_map: BTreeMap<u32, u32>,
}

impl LineDiff {
    pub fn changed_loc(&self) -> usize {
        self.deleted.len() + self.added.len()
    }

    pub fn is_identity(&self) -> bool {
        self.deleted.is_empty() && self.added.is_empty()
    }

    pub fn inverted(&self) -> LineDiff {
        LineDiff {
            deleted: self.added.clone(),
            added: self.deleted.clone(),
            line_map: self.line_map.iter().map(|(&b, &a)| (a, b)).collect(),
        }
    }

    pub fn map_before(&self, line: u32) -> Option<u32> {
        self.line_map.get(&line).copied()
    }

    /// Number of unchanged before-lines strictly above `line`.
    ///
    /// Changed lines between the same pair of unchanged anchors share a gap
    /// index on both sides, which identifies the hunk they belong to.
    pub fn gap_before(&self, line: u32) -> usize {
        self.line_map.range(..line).count()
    }

    pub fn gap_after(&self, line: u32) -> usize {
        // line_map is monotone, so its values are sorted.
        let values: Vec<u32> = self.line_map.values().copied().collect();
        values.partition_point(|&a| a < line)
    }
}

/// Minimal line diff between two texts.
///
/// The result depends only on the unordered pair of texts: the diff is always
/// computed from the lexicographically smaller text to the larger one and
/// inverted when needed, so swapping the arguments yields exactly the
/// inverted diff even when several minimal edit scripts exist.
pub fn diff_lines(before: &str, after: &str) -> LineDiff {
    if before > after {
        return diff_oriented(after, before).inverted();
    }
    diff_oriented(before, after)
}

fn diff_oriented(before: &str, after: &str) -> LineDiff {
    let old: Vec<&str> = before.lines().collect();
    let new: Vec<&str> = after.lines().collect();
    let mut out = LineDiff::default();
    for op in capture_diff_slices(Algorithm::Myers, &old, &new) {
        match op {
            DiffOp::Equal { old_index, new_index, len } => {
                for k in 0..len {
                    out.line_map.insert((old_index + k + 1) as u32, (new_index + k + 1) as u32);
                }
            }
            DiffOp::Delete { old_index, old_len, .. } => {
                out.deleted.extend((old_index + 1..=old_index + old_len).map(|l| l as u32));
            }
            DiffOp::Insert { new_index, new_len, .. } => {
                out.added.extend((new_index + 1..=new_index + new_len).map(|l| l as u32));
            }
            DiffOp::Replace { old_index, old_len, new_index, new_len } => {
                out.deleted.extend((old_index + 1..=old_index + old_len).map(|l| l as u32));
                out.added.extend((new_index + 1..=new_index + new_len).map(|l| l as u32));
            }
        }
    }
    out
}
