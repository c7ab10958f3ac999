use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::DpError;
use crate::TxId;

/// One transaction's contribution to an aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub txid: TxId,
    /// Contributed amount (non-negative, finite).
    pub value: f64,
    /// The transaction opted into the aggregate.
    pub opted_in: bool,
    /// The transaction satisfies the query's own filter (e.g. a protocol).
    pub matches_query: bool,
}

impl ContributionRecord {
    /// An opted-in record that matches the query.
    pub fn new(txid: TxId, value: f64) -> Self {
        Self {
            txid,
            value,
            opted_in: true,
            matches_query: true,
        }
    }

    pub fn opted_out(mut self) -> Self {
        self.opted_in = false;
        self
    }

    pub fn outside_query(mut self) -> Self {
        self.matches_query = false;
        self
    }
}

/// Ordered multiset of contributions with unique transaction ids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    entries: Vec<ContributionRecord>,
}

impl Dataset {
    pub fn new(entries: Vec<ContributionRecord>) -> Result<Self, DpError> {
        let mut ds = Self::default();
        for e in entries {
            ds.push(e)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, record: ContributionRecord) -> Result<(), DpError> {
        if !(record.value.is_finite() && record.value >= 0.0) {
            return Err(DpError::Data(format!(
                "{} contributes {}, values must be finite and non-negative",
                record.txid, record.value
            )));
        }
        if self.entries.iter().any(|e| e.txid == record.txid) {
            return Err(DpError::Data(format!("duplicate transaction id {}", record.txid)));
        }
        self.entries.push(record);
        Ok(())
    }

    pub fn entries(&self) -> &[ContributionRecord] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy of the dataset without `txid` (a neighbor when `txid` is present).
    pub fn without(&self, txid: TxId) -> Self {
        Self {
            entries: self.entries.iter().filter(|e| e.txid != txid).cloned().collect(),
        }
    }

    /// Entries picked by position, keeping their original order.
    pub(crate) fn select(&self, sorted_indices: &[usize]) -> Self {
        Self {
            entries: sorted_indices.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }

    /// True when one dataset holds exactly one additional entry and the rest
    /// coincide.
    pub fn is_neighbor_of(&self, other: &Dataset) -> bool {
        let (big, small) = if self.len() > other.len() {
            (self, other)
        } else {
            (other, self)
        };
        if big.len() != small.len() + 1 {
            return false;
        }
        let small_ids: BTreeSet<TxId> = small.entries.iter().map(|e| e.txid).collect();
        let extra: Vec<&ContributionRecord> = big
            .entries
            .iter()
            .filter(|e| !small_ids.contains(&e.txid))
            .collect();
        extra.len() == 1
            && small
                .entries
                .iter()
                .all(|e| big.entries.iter().any(|b| b == e))
    }
}
