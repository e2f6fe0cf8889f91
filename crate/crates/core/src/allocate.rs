//! Integer image budgets from a target distribution (largest-remainder
//! apportionment).

use serde::{Deserialize, Serialize};

use crate::scheme::AttributeScheme;
use crate::target::Distribution;

/// Per-category image counts that sum exactly to `total`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPlan {
    scheme: AttributeScheme,
    counts: Vec<usize>,
    total: usize,
}

/// One `{label, count}` row as it appears in audit logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocEntry {
    pub label: String,
    pub count: usize,
}

impl AllocationPlan {
    pub fn scheme(&self) -> &AttributeScheme {
        &self.scheme
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count(&self, label: &str) -> Option<usize> {
        self.scheme.index_of(label).map(|i| self.counts[i])
    }

    pub fn entries(&self) -> Vec<AllocEntry> {
        self.scheme
            .labels()
            .iter()
            .zip(&self.counts)
            .map(|(label, &count)| AllocEntry {
                label: label.clone(),
                count,
            })
            .collect()
    }

    /// Rebuilds a plan from logged rows, checking they match `scheme`.
    pub fn from_entries(scheme: AttributeScheme, entries: &[AllocEntry]) -> Option<Self> {
        if entries.len() != scheme.len()
            || entries
                .iter()
                .zip(scheme.labels())
                .any(|(e, l)| &e.label != l)
        {
            return None;
        }
        let counts: Vec<usize> = entries.iter().map(|e| e.count).collect();
        let total = counts.iter().sum();
        Some(Self {
            scheme,
            counts,
            total,
        })
    }

    /// Realized fractions `N_i / N`; `None` for an empty budget.
    pub fn fractions(&self) -> Option<Distribution> {
        if self.total == 0 {
            return None;
        }
        Distribution::from_counts(self.scheme.clone(), &self.counts).ok()
    }
}

/// Splits `total` images across the categories of `q`.
///
/// Each category first gets `floor(q_i·N)`; the remaining units go one at a
/// time to categories in descending order of fractional part, ties to the
/// lower index. Categories with zero probability never receive a unit.
pub fn allocate(q: &Distribution, total: usize) -> AllocationPlan {
    let n = total as f64;
    // Snap products that are integers up to rounding noise, e.g. 0.3·50.
    let snap = 1e-9 * n.max(1.0);
    let quotas: Vec<f64> = q
        .probs()
        .iter()
        .map(|&p| {
            let x = p * n;
            let r = x.round();
            if (x - r).abs() <= snap {
                r
            } else {
                x
            }
        })
        .collect();

    let mut counts: Vec<usize> = quotas.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();

    let mut order: Vec<usize> = (0..counts.len())
        .filter(|&i| q.probs()[i] > 0.0)
        .collect();
    let frac = |i: usize| quotas[i] - quotas[i].floor();
    // Stable sort: equal fractional parts stay in index order.
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)));

    if assigned < total {
        let remainder = total - assigned;
        for k in 0..remainder {
            counts[order[k % order.len()]] += 1;
        }
    } else if assigned > total {
        // Only reachable through the unit-sum tolerance; take back from the
        // smallest fractional parts.
        let mut excess = assigned - total;
        for &i in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }

    AllocationPlan {
        scheme: q.scheme().clone(),
        counts,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::uniform_target;
    use proptest::prelude::*;

    fn groups(n: usize) -> AttributeScheme {
        AttributeScheme::demographic("g", (1..=n).map(|i| format!("g{i}"))).unwrap()
    }

    /// Independent oracle: exact rational quotas q_i = w_i / W with integer
    /// weights, floors and remainders computed in integer arithmetic.
    fn hamilton_oracle(weights: &[u64], total: u64) -> Vec<u64> {
        let w: u64 = weights.iter().sum();
        let mut counts: Vec<u64> = weights.iter().map(|&x| x * total / w).collect();
        let rems: Vec<u64> = weights.iter().map(|&x| x * total % w).collect();
        let mut left = total - counts.iter().sum::<u64>();
        let mut idx: Vec<usize> = (0..weights.len()).collect();
        idx.sort_by(|&a, &b| rems[b].cmp(&rems[a]).then(a.cmp(&b)));
        for i in idx {
            if left == 0 {
                break;
            }
            if rems[i] > 0 {
                counts[i] += 1;
                left -= 1;
            }
        }
        counts
    }

    #[test]
    fn hand_cases() {
        let q = Distribution::new(groups(3), vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(allocate(&q, 50).counts(), &[25, 15, 10]);

        let u6 = uniform_target(&AttributeScheme::fitzpatrick());
        assert_eq!(allocate(&u6, 50).counts(), &[9, 9, 8, 8, 8, 8]);
        assert_eq!(hamilton_oracle(&[1; 6], 50), vec![9, 9, 8, 8, 8, 8]);

        let u3 = uniform_target(&groups(3));
        assert_eq!(allocate(&u3, 100).counts(), &[34, 33, 33]);
        assert_eq!(hamilton_oracle(&[1; 3], 100), vec![34, 33, 33]);
        assert_eq!(allocate(&u3, 50).counts(), &[17, 17, 16]);
    }

    #[test]
    fn zero_budget_and_one_hot() {
        let q = Distribution::new(groups(3), vec![0.5, 0.3, 0.2]).unwrap();
        let plan = allocate(&q, 0);
        assert_eq!(plan.counts(), &[0, 0, 0]);
        assert!(plan.fractions().is_none());

        let hot = Distribution::one_hot(groups(4), "g3").unwrap();
        assert_eq!(allocate(&hot, 7).counts(), &[0, 0, 7, 0]);
    }

    #[test]
    fn zero_probability_never_gets_remainder() {
        let q = Distribution::new(groups(4), vec![0.5, 0.0, 0.5, 0.0]).unwrap();
        assert_eq!(allocate(&q, 3).counts(), &[2, 0, 1, 0]);
    }

    #[test]
    fn entries_round_trip() {
        let q = uniform_target(&groups(3));
        let plan = allocate(&q, 10);
        let back = AllocationPlan::from_entries(groups(3), &plan.entries()).unwrap();
        assert_eq!(back, plan);
        assert!(AllocationPlan::from_entries(groups(2), &plan.entries()).is_none());
    }

    proptest! {
        #[test]
        fn matches_integer_oracle(weights in prop::collection::vec(0u64..50, 1..8), total in 0u64..2000) {
            prop_assume!(weights.iter().sum::<u64>() > 0);
            let w: u64 = weights.iter().sum();
            let q = Distribution::normalized(
                groups(weights.len()),
                weights.iter().map(|&x| x as f64).collect(),
            ).unwrap();
            let plan = allocate(&q, total as usize);
            let oracle = hamilton_oracle(&weights, total);
            // Float fractional parts can only disagree with the oracle when two
            // exact remainders are equal, so compare with exact ties excluded.
            let rems: Vec<u64> = weights.iter().map(|&x| x * total % w).collect();
            let mut sorted = rems.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() == rems.len() {
                prop_assert_eq!(plan.counts().iter().map(|&c| c as u64).collect::<Vec<_>>(), oracle);
            }
            prop_assert_eq!(plan.counts().iter().sum::<usize>(), total as usize);
        }

        #[test]
        fn uniform_monotone_in_budget(m in 1usize..10, steps in 0usize..50, extra in 0usize..10) {
            let q = uniform_target(&groups(m));
            let a = allocate(&q, steps * m + extra);
            let b = allocate(&q, (steps + 1) * m + extra);
            prop_assert!(a.counts().iter().zip(b.counts()).all(|(x, y)| x <= y));
        }
    }
}
