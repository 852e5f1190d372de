use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{CaseRecord, CaseType, Circuit, Dataset, EntityLabel};

/// Which keys to group by.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupKeys {
    pub judge: bool,
    pub decade: bool,
    pub circuit: bool,
    pub case_type: bool,
    pub entity_label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub judge: Option<String>,
    pub decade: Option<i32>,
    pub circuit: Option<Circuit>,
    pub case_type: Option<CaseType>,
    pub entity_label: Option<EntityLabel>,
}

#[derive(Debug, Clone)]
pub struct Grouping<'a> {
    /// Groups in key order; empty groups never appear.
    pub groups: Vec<(GroupKey, Vec<&'a CaseRecord>)>,
    /// Cases dropped because a requested key was missing (entity label).
    pub dropped: usize,
}

pub fn group_cases(dataset: &Dataset, keys: GroupKeys) -> Grouping<'_> {
    let mut map: BTreeMap<GroupKey, Vec<&CaseRecord>> = BTreeMap::new();
    let mut dropped = 0;
    for c in dataset.cases() {
        if keys.entity_label && c.entity_label.is_none() {
            dropped += 1;
            continue;
        }
        let key = GroupKey {
            judge: keys.judge.then(|| c.judge_id.clone()),
            decade: keys.decade.then(|| c.decade()),
            circuit: keys.circuit.then_some(c.circuit),
            case_type: keys.case_type.then_some(c.case_type),
            entity_label: if keys.entity_label { c.entity_label } else { None },
        };
        map.entry(key).or_default().push(c);
    }
    Grouping {
        groups: map.into_iter().collect(),
        dropped,
    }
}
