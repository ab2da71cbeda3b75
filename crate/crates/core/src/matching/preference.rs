//! Preference extraction and augmentation.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, ArrivalSeq, RequestId};

/// Ranked requests; rank 1 is most preferred and equal ranks are ties.
///
/// Entries are ordered by rank, then by arrival.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceList {
    pub entries: Vec<(RequestId, u32)>,
    /// Shared rank of the appended unlisted agents, if any were appended.
    pub augmented_tail_rank: Option<u32>,
}

impl PreferenceList {
    pub fn rank_of(&self, id: RequestId) -> Option<u32> {
        self.entries.iter().find(|(r, _)| *r == id).map(|(_, rank)| *rank)
    }

    pub fn contains(&self, id: RequestId) -> bool {
        self.rank_of(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.entries.iter().map(|(id, _)| *id)
    }
}

fn sorted_by_arrival(mut v: Vec<(RequestId, ArrivalSeq)>) -> Vec<(RequestId, ArrivalSeq)> {
    v.sort_by_key(|(_, a)| *a);
    v
}

/// Keeps the submitted order for listed agents that are eligible (dense
/// ranks 1, 2, ...), drops listed agents that are not, and appends every
/// other eligible request at one shared lowest rank in arrival order.
///
/// `original` names agents; every eligible request of a listed agent (all
/// meals of one donor, say) shares that agent's rank.
pub fn extract_augment(original: &[AgentId], eligible: &[(RequestId, ArrivalSeq)]) -> PreferenceList {
    let mut entries = Vec::with_capacity(eligible.len());
    let mut listed = BTreeSet::new();
    let mut rank = 0;
    for agent in original {
        if !listed.insert(*agent) {
            continue;
        }
        let members: Vec<_> = eligible.iter().copied().filter(|(id, _)| id.agent == *agent).collect();
        if members.is_empty() {
            continue;
        }
        rank += 1;
        entries.extend(sorted_by_arrival(members).into_iter().map(|(id, _)| (id, rank)));
    }
    let tail: Vec<_> =
        eligible.iter().copied().filter(|(id, _)| !listed.contains(&id.agent)).collect();
    let augmented_tail_rank = if tail.is_empty() {
        None
    } else {
        rank += 1;
        entries.extend(sorted_by_arrival(tail).into_iter().map(|(id, _)| (id, rank)));
        Some(rank)
    };
    PreferenceList { entries, augmented_tail_rank }
}

/// The submitted list taken as-is: listed agents keep their original
/// position as rank and unlisted agents are not considered. An empty list
/// means every eligible request at equal priority.
pub fn original_preference(
    original: &[AgentId],
    eligible: &[(RequestId, ArrivalSeq)],
) -> PreferenceList {
    if original.is_empty() {
        let entries =
            sorted_by_arrival(eligible.to_vec()).into_iter().map(|(id, _)| (id, 1)).collect();
        return PreferenceList { entries, augmented_tail_rank: None };
    }
    let mut entries = Vec::new();
    let mut listed = BTreeSet::new();
    for (pos, agent) in original.iter().enumerate() {
        if !listed.insert(*agent) {
            continue;
        }
        let members: Vec<_> = eligible.iter().copied().filter(|(id, _)| id.agent == *agent).collect();
        entries.extend(sorted_by_arrival(members).into_iter().map(|(id, _)| (id, pos as u32 + 1)));
    }
    PreferenceList { entries, augmented_tail_rank: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rid(agent: u64) -> RequestId {
        RequestId::new(agent, 1)
    }

    // D_p=1, D_q=2, D_r=3, D_s=4, D_t=5
    const P: u64 = 1;
    const Q: u64 = 2;
    const R: u64 = 3;
    const S: u64 = 4;
    const T: u64 = 5;

    #[test]
    fn table_four_extraction_and_augmentation() {
        let eligible = [
            (rid(P), ArrivalSeq(10)),
            (rid(Q), ArrivalSeq(11)),
            (rid(R), ArrivalSeq(12)),
            (rid(S), ArrivalSeq(13)),
        ];
        let pl = extract_augment(&[Q, T, P], &eligible);
        assert_eq!(
            pl.entries,
            vec![(rid(Q), 1), (rid(P), 2), (rid(R), 3), (rid(S), 3)]
        );
        assert_eq!(pl.augmented_tail_rank, Some(3));
        assert_eq!(pl.rank_of(rid(T)), None);
    }

    #[test]
    fn empty_original_ties_everyone_by_arrival() {
        let pl = extract_augment(&[], &[(rid(8), ArrivalSeq(5)), (rid(7), ArrivalSeq(2))]);
        assert_eq!(pl.entries, vec![(rid(7), 1), (rid(8), 1)]);
        assert_eq!(pl.augmented_tail_rank, Some(1));
    }

    #[test]
    fn nothing_eligible_gives_empty_list() {
        let pl = extract_augment(&[9], &[]);
        assert!(pl.is_empty());
        assert_eq!(pl.augmented_tail_rank, None);
    }

    #[test]
    fn meals_of_a_listed_agent_share_its_rank() {
        let eligible = [
            (rid(3).with_meal(2), ArrivalSeq(6)),
            (rid(3).with_meal(1), ArrivalSeq(5)),
            (rid(4), ArrivalSeq(1)),
        ];
        let pl = extract_augment(&[3], &eligible);
        assert_eq!(
            pl.entries,
            vec![(rid(3).with_meal(1), 1), (rid(3).with_meal(2), 1), (rid(4), 2)]
        );
    }

    #[test]
    fn original_preference_keeps_positions_and_drops_unlisted() {
        let eligible = [(rid(P), ArrivalSeq(1)), (rid(R), ArrivalSeq(2))];
        let pl = original_preference(&[Q, T, P], &eligible);
        assert_eq!(pl.entries, vec![(rid(P), 3)]);
        let all = original_preference(&[], &eligible);
        assert_eq!(all.entries, vec![(rid(P), 1), (rid(R), 1)]);
    }
}
