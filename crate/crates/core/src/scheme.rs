//! Auxiliary-variable structure of superposition/indirect-decoding schemes
//! for k receivers and arbitrary message demands.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Subset enumeration is exponential in k.
pub const MAX_RECEIVERS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum SchemeError {
    #[error("no demanded subsets")]
    EmptyDemands,
    #[error("receiver count {0} outside 1..={MAX_RECEIVERS}")]
    ReceiverCount(usize),
    #[error("receiver {0} outside 1..={1}")]
    ReceiverIndex(usize, usize),
    #[error("empty demanded subset")]
    EmptySubset,
    #[error("duplicate demanded subset {0:?}")]
    Duplicate(Vec<usize>),
}

/// Receivers are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRequirement {
    pub k: usize,
    pub demanded: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Level {
    pub level: usize,
    pub cardinality: usize,
    pub subsets: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReceiverPlan {
    pub receiver: usize,
    /// Auxiliary subsets containing the receiver.
    pub decodes: Vec<Vec<usize>>,
    /// Inclusion-minimal members of `decodes`.
    pub minimal: Vec<Vec<usize>>,
    pub indirect_needed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemeStructure {
    pub k: usize,
    pub demanded: Vec<Vec<usize>>,
    pub aux_subsets: Vec<Vec<usize>>,
    /// Auxiliary subsets that carry no message of their own.
    pub indirect_subsets: Vec<Vec<usize>>,
    /// Level 0 holds the largest subsets.
    pub levels: Vec<Level>,
    pub receivers: Vec<ReceiverPlan>,
    /// Cover relations `U_B -> U_A` (B covers A): each auxiliary is
    /// superimposed on those of its immediate supersets.
    pub dag: Vec<String>,
}

fn to_list(m: u32) -> Vec<usize> {
    (0..32).filter(|i| m >> i & 1 == 1).map(|i| i as usize + 1).collect()
}

fn label(m: u32) -> String {
    let v: Vec<String> = to_list(m).iter().map(|i| i.to_string()).collect();
    format!("U{{{}}}", v.join(","))
}

/// Size descending, then lexicographic on the sorted member list.
fn sort_masks(v: &mut [u32]) {
    v.sort_by(|a, b| b.count_ones().cmp(&a.count_ones()).then_with(|| to_list(*a).cmp(&to_list(*b))));
}

fn subset(a: u32, b: u32) -> bool {
    a & !b == 0
}

pub fn synthesize(req: &MessageRequirement) -> Result<SchemeStructure, SchemeError> {
    let k = req.k;
    if k == 0 || k > MAX_RECEIVERS {
        return Err(SchemeError::ReceiverCount(k));
    }
    if req.demanded.is_empty() {
        return Err(SchemeError::EmptyDemands);
    }
    let mut demanded: Vec<u32> = Vec::new();
    for s in &req.demanded {
        if s.is_empty() {
            return Err(SchemeError::EmptySubset);
        }
        let mut m = 0u32;
        for &i in s {
            if i == 0 || i > k {
                return Err(SchemeError::ReceiverIndex(i, k));
            }
            m |= 1 << (i - 1);
        }
        if demanded.contains(&m) {
            return Err(SchemeError::Duplicate(to_list(m)));
        }
        demanded.push(m);
    }
    sort_masks(&mut demanded);

    let full = (1u32 << k) - 1;
    let mut aux: Vec<u32> = (1..=full).filter(|b| demanded.iter().any(|a| subset(*a, *b))).collect();
    sort_masks(&mut aux);
    let indirect: Vec<u32> = aux.iter().copied().filter(|b| !demanded.contains(b)).collect();

    let mut levels: Vec<Level> = Vec::new();
    for &m in &aux {
        let c = m.count_ones() as usize;
        match levels.last_mut() {
            Some(l) if l.cardinality == c => l.subsets.push(to_list(m)),
            _ => levels.push(Level { level: levels.len(), cardinality: c, subsets: vec![to_list(m)] }),
        }
    }

    let receivers = (0..k)
        .map(|i| {
            let t: Vec<u32> = aux.iter().copied().filter(|m| m >> i & 1 == 1).collect();
            let min: Vec<u32> = t.iter().copied().filter(|a| !t.iter().any(|b| b != a && subset(*b, *a))).collect();
            ReceiverPlan {
                receiver: i + 1,
                decodes: t.iter().map(|m| to_list(*m)).collect(),
                indirect_needed: min.iter().any(|m| indirect.contains(m)),
                minimal: min.iter().map(|m| to_list(*m)).collect(),
            }
        })
        .collect();

    let mut dag = Vec::new();
    for &a in &aux {
        for &b in &aux {
            let covers = b != a
                && subset(a, b)
                && !aux.iter().any(|&c| c != a && c != b && subset(a, c) && subset(c, b));
            if covers {
                dag.push(format!("{} -> {}", label(b), label(a)));
            }
        }
    }

    Ok(SchemeStructure {
        k,
        demanded: demanded.iter().map(|m| to_list(*m)).collect(),
        aux_subsets: aux.iter().map(|m| to_list(*m)).collect(),
        indirect_subsets: indirect.iter().map(|m| to_list(*m)).collect(),
        levels,
        receivers,
        dag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(k: usize, d: &[&[usize]]) -> MessageRequirement {
        MessageRequirement { k, demanded: d.iter().map(|s| s.to_vec()).collect() }
    }

    #[test]
    fn three_receiver_running_case() {
        let s = synthesize(&req(3, &[&[1], &[1, 2], &[2, 3]])).unwrap();
        assert_eq!(s.aux_subsets, vec![vec![1, 2, 3], vec![1, 2], vec![1, 3], vec![2, 3], vec![1]]);
        assert_eq!(s.indirect_subsets, vec![vec![1, 2, 3], vec![1, 3]]);
        assert_eq!(s.receivers[2].minimal, vec![vec![1, 3], vec![2, 3]]);
        assert!(s.receivers[2].indirect_needed);
        assert_eq!(s.levels.len(), 3);
        assert!(s.dag.contains(&"U{1,2,3} -> U{2,3}".to_string()));
        assert!(s.dag.contains(&"U{1,2} -> U{1}".to_string()));
        assert!(!s.dag.contains(&"U{1,2,3} -> U{1}".to_string()));
    }

    #[test]
    fn errors() {
        assert_eq!(synthesize(&req(3, &[])), Err(SchemeError::EmptyDemands));
        assert_eq!(synthesize(&req(3, &[&[4]])), Err(SchemeError::ReceiverIndex(4, 3)));
        assert_eq!(synthesize(&req(3, &[&[]])), Err(SchemeError::EmptySubset));
        assert_eq!(synthesize(&req(17, &[&[1]])), Err(SchemeError::ReceiverCount(17)));
        assert!(matches!(synthesize(&req(3, &[&[1, 2], &[2, 1]])), Err(SchemeError::Duplicate(_))));
    }
}
