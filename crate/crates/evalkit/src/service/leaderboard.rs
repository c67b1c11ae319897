//! Leaderboard ordering.

use std::cmp::Ordering;

use super::types::LeaderboardEntry;

/// Total order: better value first, then verified first, then earlier proposal id.
pub fn compare(a: &LeaderboardEntry, b: &LeaderboardEntry, higher_is_better: bool) -> Ordering {
    let by_value = if higher_is_better { b.value.total_cmp(&a.value) } else { a.value.total_cmp(&b.value) };
    by_value.then_with(|| b.verified.cmp(&a.verified)).then_with(|| a.proposal_id.cmp(&b.proposal_id))
}

/// Sorts entries and assigns ranks starting at 1.
pub fn rank(mut entries: Vec<LeaderboardEntry>, higher_is_better: bool) -> Vec<LeaderboardEntry> {
    entries.sort_by(|a, b| compare(a, b, higher_is_better));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    entries
}
