use super::{DecompError, Decomposition, Params, Subtask, TaskType, Violation};
use crate::modelclient::RegionRef;
use std::collections::{BTreeMap, BTreeSet};

type Key = (TaskType, Params, BTreeSet<u32>);

fn key(s: &Subtask) -> Key {
    (s.task_type, s.params.clone(), s.target_region_ids.iter().copied().collect())
}

/// Stage three: structural checks, duplicate removal (the earliest copy
/// survives and absorbs the others' dependants), a stable topological sort
/// and renumbering from 1. Applying it twice changes nothing.
pub fn verify(subtasks: &[Subtask]) -> Result<Vec<Subtask>, DecompError> {
    let mut violations = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for s in subtasks {
        if !seen_ids.insert(s.id) {
            violations.push(Violation::DuplicateId { subtask: s.id });
        }
        if s.instruction.trim().is_empty() {
            violations.push(Violation::EmptyInstruction { subtask: s.id });
        }
    }
    for s in subtasks {
        for d in &s.deps {
            if !seen_ids.contains(d) {
                violations.push(Violation::MissingDep { subtask: s.id, dep: *d });
            }
        }
    }
    if subtasks.is_empty() {
        violations.push(Violation::NoSubtasks);
    }
    if !violations.is_empty() {
        return Err(DecompError::DecompInvalid { reasons: violations });
    }

    let mut first: BTreeMap<Key, u32> = BTreeMap::new();
    let mut alias: BTreeMap<u32, u32> = BTreeMap::new();
    let mut kept: Vec<Subtask> = Vec::new();
    for s in subtasks {
        match first.get(&key(s)) {
            Some(&survivor) => {
                alias.insert(s.id, survivor);
            }
            None => {
                first.insert(key(s), s.id);
                alias.insert(s.id, s.id);
                kept.push(s.clone());
            }
        }
    }
    for s in &mut kept {
        let deps: BTreeSet<u32> = s.deps.iter().map(|d| alias[d]).collect();
        s.deps = deps.into_iter().collect();
    }

    // Kahn's algorithm, always taking the earliest ready subtask.
    let mut done: BTreeSet<u32> = BTreeSet::new();
    let mut order: Vec<usize> = Vec::with_capacity(kept.len());
    while order.len() < kept.len() {
        let next = kept
            .iter()
            .enumerate()
            .find(|(i, s)| !order.contains(i) && s.deps.iter().all(|d| done.contains(d)))
            .map(|(i, _)| i);
        match next {
            Some(i) => {
                done.insert(kept[i].id);
                order.push(i);
            }
            None => return Err(DecompError::invalid(Violation::Cycle)),
        }
    }
    let renumber: BTreeMap<u32, u32> = order.iter().enumerate().map(|(n, &i)| (kept[i].id, n as u32 + 1)).collect();
    Ok(order
        .iter()
        .map(|&i| {
            let mut s = kept[i].clone();
            s.id = renumber[&s.id];
            let mut deps: Vec<u32> = s.deps.iter().map(|d| renumber[d]).collect();
            deps.sort_unstable();
            s.deps = deps;
            s
        })
        .collect())
}

/// Checks every decomposition invariant against the regions it refers to.
pub fn check_decomposition(dec: &Decomposition, regions: &[RegionRef]) -> Vec<Violation> {
    let mut out = Vec::new();
    if dec.question.trim().is_empty() {
        out.push(Violation::EmptyQuestion);
    }
    if dec.subtasks.is_empty() {
        out.push(Violation::NoSubtasks);
    }
    let mut earlier = BTreeSet::new();
    let all: BTreeSet<u32> = dec.subtasks.iter().map(|s| s.id).collect();
    let mut keys = BTreeSet::new();
    for s in &dec.subtasks {
        if s.instruction.trim().is_empty() {
            out.push(Violation::EmptyInstruction { subtask: s.id });
        }
        for &d in &s.deps {
            if !all.contains(&d) {
                out.push(Violation::MissingDep { subtask: s.id, dep: d });
            } else if !earlier.contains(&d) && !out.contains(&Violation::Cycle) {
                out.push(Violation::Cycle);
            }
        }
        for &r in &s.target_region_ids {
            if !regions.iter().any(|x| x.id == r) {
                out.push(Violation::UnknownRegion { subtask: s.id, region: r });
            }
        }
        if !earlier.insert(s.id) {
            out.push(Violation::DuplicateId { subtask: s.id });
        }
        if !keys.insert(key(s)) {
            out.push(Violation::DuplicateSubtask { subtask: s.id });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(id: u32, t: TaskType, targets: &[u32], deps: &[u32]) -> Subtask {
        Subtask {
            id,
            task_type: t,
            instruction: format!("step {id}"),
            target_region_ids: targets.to_vec(),
            params: Params::new(),
            deps: deps.to_vec(),
        }
    }

    #[test]
    fn duplicate_retrieve_collapses() {
        let input = vec![
            st(1, TaskType::Filter, &[4], &[]),
            st(2, TaskType::RetrieveValue, &[4], &[1]),
            st(3, TaskType::RetrieveValue, &[4], &[1]),
            st(4, TaskType::ComputeDerivedValue, &[4], &[2, 3]),
        ];
        let out = verify(&input).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2].deps, vec![2]);
    }

    #[test]
    fn independent_steps_have_no_deps() {
        let out = verify(&[st(1, TaskType::Cluster, &[1], &[]), st(2, TaskType::Sort, &[1], &[])]).unwrap();
        assert!(out.iter().all(|s| s.deps.is_empty()));
    }

    #[test]
    fn cycles_are_rejected() {
        let err = verify(&[st(1, TaskType::Filter, &[1], &[2]), st(2, TaskType::Sort, &[1], &[1])]).unwrap_err();
        assert!(err.has("CYCLE"));
    }

    #[test]
    fn forward_deps_are_reordered() {
        let out = verify(&[st(7, TaskType::Sort, &[1], &[9]), st(9, TaskType::RetrieveValue, &[1], &[])]).unwrap();
        assert_eq!(out[0].task_type, TaskType::RetrieveValue);
        assert_eq!(out[1].deps, vec![1]);
    }

    fn arb_list() -> impl Strategy<Value = Vec<Subtask>> {
        (1usize..9).prop_flat_map(|n| {
            proptest::collection::vec(
                (0usize..10, proptest::collection::vec(1u32..4, 0..3), proptest::collection::vec(1u32..=n as u32, 0..3), 0u8..3),
                n,
            )
            .prop_map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (t, targets, deps, p))| {
                        let mut s = st(i as u32 + 1, TaskType::ALL[t], &targets, &deps);
                        if p > 0 {
                            s.params.insert("op".into(), if p == 1 { "max".into() } else { "min".into() });
                        }
                        s
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1200))]

        #[test]
        fn verify_is_idempotent(list in arb_list()) {
            if let Ok(once) = verify(&list) {
                let twice = verify(&once).unwrap();
                prop_assert_eq!(&twice, &once);
                for (i, s) in once.iter().enumerate() {
                    prop_assert_eq!(s.id, i as u32 + 1);
                    prop_assert!(s.deps.iter().all(|d| *d < s.id));
                }
            }
        }
    }
}
