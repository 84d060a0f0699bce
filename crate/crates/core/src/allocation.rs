//! Decision variables: sub-band partition, bandwidths, powers and weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Disjoint user groups, one per occupied sub-band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    groups: Vec<Vec<usize>>,
    band_of: Vec<Option<usize>>,
}

impl Schedule {
    /// Builds from explicit groups; empty groups are dropped and users are
    /// sorted inside each group.
    pub fn from_groups(groups: Vec<Vec<usize>>, num_users: usize) -> Result<Self> {
        let mut band_of = vec![None; num_users];
        let mut kept = Vec::new();
        for mut g in groups.into_iter().filter(|g| !g.is_empty()) {
            g.sort_unstable();
            for &k in &g {
                match band_of.get_mut(k) {
                    Some(slot @ None) => *slot = Some(kept.len()),
                    Some(Some(_)) => return Err(Error::Contract(format!("user {k} appears in two groups"))),
                    None => return Err(Error::Contract(format!("user {k} out of range"))),
                }
            }
            kept.push(g);
        }
        Ok(Self { groups: kept, band_of })
    }

    /// Groups users by color; colors are renumbered in increasing order and
    /// `None` marks an unscheduled user.
    pub fn from_colors(colors: &[Option<usize>]) -> Self {
        let max = colors.iter().flatten().copied().max().map_or(0, |c| c + 1);
        let mut groups = vec![Vec::new(); max];
        for (k, col) in colors.iter().enumerate() {
            if let Some(col) = col {
                groups[*col].push(k);
            }
        }
        Self::from_groups(groups, colors.len()).expect("a coloring is always a partition")
    }

    /// Everyone shares one band.
    pub fn single_band(num_users: usize) -> Self {
        Self::from_groups(vec![(0..num_users).collect()], num_users).expect("valid")
    }

    pub fn num_users(&self) -> usize {
        self.band_of.len()
    }

    pub fn num_bands(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, band: usize) -> &[usize] {
        &self.groups[band]
    }

    pub fn band_of(&self, k: usize) -> Option<usize> {
        self.band_of[k]
    }

    /// Users left out of every band.
    pub fn unscheduled(&self) -> Vec<usize> {
        (0..self.band_of.len()).filter(|&k| self.band_of[k].is_none()).collect()
    }

    /// Checks the structural constraints: every user served exactly once, at
    /// most `max_bands` bands, each holding between 1 and `capacity` users.
    pub fn validate(&self, max_bands: usize, capacity: usize) -> Result<()> {
        let missing = self.unscheduled();
        if !missing.is_empty() {
            return Err(Error::Contract(format!("users {missing:?} are not scheduled")));
        }
        if self.groups.len() > max_bands {
            return Err(Error::Contract(format!("{} bands exceed the limit of {max_bands}", self.groups.len())));
        }
        if let Some(g) = self.groups.iter().find(|g| g.is_empty() || g.len() > capacity) {
            return Err(Error::Contract(format!("band {g:?} violates capacity {capacity}")));
        }
        let total: usize = self.groups.iter().map(Vec::len).sum();
        if total != self.num_users() {
            return Err(Error::Contract("bands overlap".into()));
        }
        Ok(())
    }
}

/// Full resource allocation for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub schedule: Schedule,
    /// B_i per band of `schedule` (Hz).
    pub bandwidth: Vec<f64>,
    /// Data power per user (W).
    pub power: Vec<f64>,
    /// Combining weights per user, aligned with the user's serving set.
    pub weights: Vec<Vec<f64>>,
}

impl Allocation {
    /// Full power, equal weights 1/sqrt(|M_k|) and an equal bandwidth split.
    pub fn equal(scenario: &Scenario, schedule: Schedule) -> Self {
        let weights = (0..scenario.num_users())
            .map(|k| {
                let l = scenario.serving(k).len();
                vec![1.0 / (l as f64).sqrt(); l]
            })
            .collect();
        Self { bandwidth: Vec::new(), power: scenario.max_power.clone(), weights, schedule }
            .with_equal_bandwidth(scenario.config.total_bandwidth)
    }

    /// Bandwidth of the band serving `k`, if any.
    pub fn user_bandwidth(&self, k: usize) -> Option<f64> {
        self.schedule.band_of(k).map(|b| self.bandwidth[b])
    }

    /// Split `total` evenly over the occupied bands.
    pub fn with_equal_bandwidth(mut self, total: f64) -> Self {
        let n = self.schedule.num_bands();
        self.bandwidth = vec![total / n.max(1) as f64; n];
        self
    }

    /// Replace the schedule and split `total` evenly over its bands.
    pub fn reschedule(&self, schedule: Schedule, total: f64) -> Self {
        Self { schedule, ..self.clone() }.with_equal_bandwidth(total)
    }

    /// Rescale every user's weights to unit norm.
    pub fn normalize_weights(&mut self) {
        for w in &mut self.weights {
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                w.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
}
