use serde::{Deserialize, Serialize};

use super::{AmplifiedBudget, DpError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: u64,
    pub label: String,
    pub epsilon: f64,
    pub delta: f64,
}

/// Global sequential-composition accountant. A charge that would push
/// `spent` past `global_cap` is refused and leaves the ledger untouched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    global_cap: f64,
    spent: f64,
    spent_delta: f64,
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new(global_cap: f64) -> Result<Self, DpError> {
        if !(global_cap > 0.0) {
            return Err(DpError::Parameter(format!(
                "global epsilon cap must be > 0, got {global_cap}"
            )));
        }
        Ok(Self {
            global_cap,
            spent: 0.0,
            spent_delta: 0.0,
            entries: Vec::new(),
        })
    }

    pub fn global_cap(&self) -> f64 {
        self.global_cap
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    pub fn spent_delta(&self) -> f64 {
        self.spent_delta
    }

    pub fn remaining(&self) -> f64 {
        self.global_cap - self.spent
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn can_afford(&self, epsilon: f64) -> bool {
        self.spent + epsilon <= self.global_cap
    }

    pub fn charge(
        &mut self,
        round: u64,
        label: impl Into<String>,
        epsilon: f64,
        delta: f64,
    ) -> Result<(), DpError> {
        if !(epsilon >= 0.0 && delta >= 0.0) {
            return Err(DpError::Parameter(format!(
                "charges must be non-negative, got ({epsilon}, {delta})"
            )));
        }
        if !self.can_afford(epsilon) {
            return Err(DpError::BudgetExhausted {
                requested: epsilon,
                remaining: self.remaining(),
            });
        }
        self.spent += epsilon;
        self.spent_delta += delta;
        self.entries.push(LedgerEntry {
            round,
            label: label.into(),
            epsilon,
            delta,
        });
        Ok(())
    }

    pub fn charge_amplified(
        &mut self,
        round: u64,
        label: impl Into<String>,
        budget: &AmplifiedBudget,
    ) -> Result<(), DpError> {
        self.charge(round, label, budget.epsilon_prime, budget.delta_prime)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn refuses_over_cap() {
        let mut l = BudgetLedger::new(1.0).unwrap();
        l.charge(0, "a", 0.5, 0.0).unwrap();
        let err = l.charge(0, "b", 0.6, 0.0).unwrap_err();
        assert!(matches!(err, DpError::BudgetExhausted { .. }));
        assert_eq!(l.spent(), 0.5);
        assert_eq!(l.entries().len(), 1);
        assert!(BudgetLedger::new(0.0).is_err());
    }

    proptest! {
        #[test]
        fn never_exceeds_cap(cap in 0.1f64..10.0, charges in proptest::collection::vec(0.0f64..2.0, 0..50)) {
            let mut l = BudgetLedger::new(cap).unwrap();
            for (i, c) in charges.iter().enumerate() {
                let before = l.spent();
                if l.charge(i as u64, "q", *c, 0.0).is_err() {
                    prop_assert_eq!(l.spent(), before);
                }
                prop_assert!(l.spent() <= cap);
            }
            let total: f64 = l.entries().iter().map(|e| e.epsilon).sum();
            prop_assert_eq!(total, l.spent());
        }
    }
}
