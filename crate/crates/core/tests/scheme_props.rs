use proptest::prelude::*;
use rrw_core::scheme::*;

fn req(k: usize, d: &[&[usize]]) -> MessageRequirement {
    MessageRequirement { k, demanded: d.iter().map(|s| s.to_vec()).collect() }
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.contains(x))
}

fn demands() -> impl Strategy<Value = MessageRequirement> {
    (1usize..=5).prop_flat_map(|k| {
        proptest::collection::btree_set(1u32..(1 << k), 1..=4).prop_map(move |masks| MessageRequirement {
            k,
            demanded: masks.iter().map(|m| (0..k).filter(|i| m >> i & 1 == 1).map(|i| i + 1).collect()).collect(),
        })
    })
}

proptest! {
    #[test]
    fn auxiliaries_are_exactly_the_supersets_of_demands(r in demands()) {
        let s = synthesize(&r).unwrap();
        let all: Vec<Vec<usize>> = (1u32..(1 << r.k))
            .map(|m| (0..r.k).filter(|i| m >> i & 1 == 1).map(|i| i + 1).collect())
            .collect();
        for b in &all {
            let want = r.demanded.iter().any(|a| is_subset(a, b));
            prop_assert_eq!(s.aux_subsets.contains(b), want, "{:?}", b);
        }
        for b in &s.aux_subsets {
            for c in &all {
                if is_subset(b, c) {
                    prop_assert!(s.aux_subsets.contains(c));
                }
            }
        }
        for b in &s.indirect_subsets {
            prop_assert!(!r.demanded.contains(b));
        }
        prop_assert_eq!(s.aux_subsets.len(), s.indirect_subsets.len() + r.demanded.len());
    }

    #[test]
    fn receiver_plans_follow_the_minimality_rule(r in demands()) {
        let s = synthesize(&r).unwrap();
        for p in &s.receivers {
            let t: Vec<&Vec<usize>> = s.aux_subsets.iter().filter(|a| a.contains(&p.receiver)).collect();
            prop_assert_eq!(p.decodes.len(), t.len());
            for m in &p.minimal {
                prop_assert!(t.contains(&m));
                prop_assert!(!t.iter().any(|o| *o != m && is_subset(o, m)));
            }
            for a in &t {
                prop_assert!(p.minimal.iter().any(|m| is_subset(m, a)));
            }
            let needed = p.minimal.iter().any(|m| s.indirect_subsets.contains(m));
            prop_assert_eq!(p.indirect_needed, needed);
        }
    }

    #[test]
    fn levels_descend_in_size(r in demands()) {
        let s = synthesize(&r).unwrap();
        let sizes: Vec<usize> = s.levels.iter().map(|l| l.cardinality).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] > w[1]));
        let flat: Vec<Vec<usize>> = s.levels.iter().flat_map(|l| l.subsets.clone()).collect();
        prop_assert_eq!(flat, s.aux_subsets.clone());
        prop_assert_eq!(synthesize(&r).unwrap(), s);
    }
}

#[test]
fn running_example() {
    let s = synthesize(&req(3, &[&[1], &[1, 2], &[2, 3]])).unwrap();
    assert_eq!(s.aux_subsets, vec![vec![1, 2, 3], vec![1, 2], vec![1, 3], vec![2, 3], vec![1]]);
    assert_eq!(s.indirect_subsets, vec![vec![1, 2, 3], vec![1, 3]]);
    assert_eq!(s.receivers[2].minimal, vec![vec![1, 3], vec![2, 3]]);
    assert!(s.receivers[2].indirect_needed);
}

#[test]
fn two_private_messages() {
    let s = synthesize(&req(2, &[&[1], &[2]])).unwrap();
    assert_eq!(s.aux_subsets, vec![vec![1, 2], vec![1], vec![2]]);
    assert_eq!(s.indirect_subsets, vec![vec![1, 2]]);
    assert!(s.receivers.iter().all(|p| !p.indirect_needed));
    assert_eq!(s.receivers[0].minimal, vec![vec![1]]);
    assert_eq!(s.receivers[1].minimal, vec![vec![2]]);
}

#[test]
fn nested_two_message_sets() {
    for k in 2..=6 {
        let all: Vec<usize> = (1..=k).collect();
        let s = synthesize(&req(k, &[&all, &all[..k - 1]])).unwrap();
        assert_eq!(s.aux_subsets, vec![all.clone(), all[..k - 1].to_vec()]);
        assert!(s.indirect_subsets.is_empty());
        assert!(s.receivers.iter().all(|p| !p.indirect_needed));
    }
}
