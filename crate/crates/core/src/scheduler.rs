//! Sub-band scheduling: correlation-driven conflict graphs, capacity-aware
//! DSatur coloring, the iterative threshold/requirement scheduler and an
//! exhaustive search used as a reference.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::allocation::{Allocation, Schedule};
use crate::error::{Error, Result};
use crate::estimation::ChannelEstimate;
use crate::rate::RateModel;
use crate::scenario::Scenario;

/// Iteration cap of the threshold/requirement loop.
pub const MAX_SCHEDULER_ITERATIONS: usize = 100;

/// Users beyond this count make the exhaustive search impractical.
pub const EXHAUSTIVE_USER_LIMIT: usize = 10;

// ============================================================================
// Correlation and conflict graph
// ============================================================================

/// ρ_{k,k'} from channel estimates: the modulus of each user's normalized
/// alignment with the other, summed over both directions.
pub fn correlation_factor(scenario: &Scenario, est: &ChannelEstimate, k: usize, kp: usize) -> Result<f64> {
    let directed = |a: usize, b: usize| -> Result<f64> {
        let mut cross = nalgebra::Complex::new(0.0, 0.0);
        let mut norm = 0.0;
        for &m in scenario.serving(a) {
            cross += est.get(m, a).dotc(est.get(m, b));
            norm += est.get(m, a).norm_squared();
        }
        if !(norm > 0.0) {
            return Err(Error::Degenerate(format!("user {a} has an all-zero channel estimate")));
        }
        Ok(cross.norm() / norm)
    };
    Ok(directed(k, kp)? + directed(kp, k)?)
}

/// Symmetric ρ matrix with zero diagonal.
pub fn correlation_matrix(scenario: &Scenario, est: &ChannelEstimate) -> Result<DMatrix<f64>> {
    let k = scenario.num_users();
    let mut rho = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a + 1..k {
            let v = correlation_factor(scenario, est, a, b)?;
            rho[(a, b)] = v;
            rho[(b, a)] = v;
        }
    }
    Ok(rho)
}

/// Undirected simple graph over users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    adjacency: Vec<Vec<bool>>,
}

impl ConflictGraph {
    pub fn empty(n: usize) -> Self {
        Self { adjacency: vec![vec![false; n]; n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    /// Edge wherever ρ reaches the threshold. Pairs with ρ = 0 never
    /// conflict, so an all-zero matrix yields an empty graph.
    pub fn from_threshold(rho: &DMatrix<f64>, threshold: f64) -> Self {
        let n = rho.nrows();
        let mut g = Self::empty(n);
        for a in 0..n {
            for b in a + 1..n {
                let r = rho[(a, b)];
                if r > 0.0 && r >= threshold {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adjacency[a][b] = true;
            self.adjacency[b][a] = true;
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].iter().filter(|&&e| e).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_vertices()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().enumerate().filter(|(_, &e)| e).map(|(u, _)| u)
    }
}

// ============================================================================
// DSatur
// ============================================================================

/// Vertex colors and the number of colors used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub num_colors: usize,
}

/// DSatur with a per-color capacity. The next vertex has the highest
/// saturation, then the highest degree, then the lowest index; it takes the
/// lowest color that no neighbor uses and that still has room.
pub fn dsatur_color(graph: &ConflictGraph, capacity: usize) -> Coloring {
    let n = graph.num_vertices();
    let capacity = capacity.max(1);
    let mut colors: Vec<Option<usize>> = vec![None; n];
    let mut class_size: Vec<usize> = Vec::new();
    for _ in 0..n {
        let saturation = |v: usize| {
            let mut seen: Vec<usize> = graph.neighbors(v).filter_map(|u| colors[u]).collect();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        };
        let v = (0..n)
            .filter(|&v| colors[v].is_none())
            .max_by(|&a, &b| {
                (saturation(a), graph.degree(a)).cmp(&(saturation(b), graph.degree(b))).then(b.cmp(&a))
            })
            .expect("an uncolored vertex remains");
        let color = (0..class_size.len())
            .find(|&c| class_size[c] < capacity && graph.neighbors(v).all(|u| colors[u] != Some(c)))
            .unwrap_or(class_size.len());
        if color == class_size.len() {
            class_size.push(0);
        }
        class_size[color] += 1;
        colors[v] = Some(color);
    }
    Coloring { colors: colors.into_iter().map(|c| c.expect("colored")).collect(), num_colors: class_size.len() }
}

/// Checks that no edge joins equal colors and no class exceeds `capacity`.
pub fn is_valid_coloring(graph: &ConflictGraph, coloring: &Coloring, capacity: usize) -> bool {
    let n = graph.num_vertices();
    let proper = (0..n).all(|a| (a + 1..n).all(|b| !graph.adjacent(a, b) || coloring.colors[a] != coloring.colors[b]));
    let mut sizes = vec![0; coloring.num_colors];
    for &c in &coloring.colors {
        if c >= coloring.num_colors {
            return false;
        }
        sizes[c] += 1;
    }
    proper && sizes.iter().all(|&s| s > 0 && s <= capacity)
}

// ============================================================================
// Iterative scheduler
// ============================================================================

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleOutcome {
    pub schedule: Schedule,
    /// Every user scheduled within the band budget and meeting its requirement.
    pub feasible: bool,
    pub sum_rate: f64,
    pub iterations: usize,
    /// Conflict threshold in force when the result was found.
    pub threshold: f64,
}

/// Scores a schedule: bands share the total bandwidth evenly.
fn evaluate(model: &RateModel, base: &Allocation, schedule: &Schedule, requirement: &[f64], max_bands: usize) -> (bool, f64, Allocation) {
    let alloc = base.reschedule(schedule.clone(), model.total_bandwidth());
    let rates = model.user_rates(&alloc);
    let complete = schedule.unscheduled().is_empty() && schedule.num_bands() <= max_bands;
    let meets = rates.iter().zip(requirement).all(|(r, q)| *r >= q * (1.0 - 1e-9));
    (complete && meets, rates.iter().sum(), alloc)
}

fn better(candidate: (bool, f64), incumbent: (bool, f64)) -> bool {
    match (candidate.0, incumbent.0) {
        (true, false) => true,
        (false, true) => false,
        _ => candidate.1 > incumbent.1,
    }
}

/// Best-effort schedule from a coloring that needs more colors than bands:
/// classes beyond the budget are deferred to a later slot.
fn truncate_coloring(coloring: &Coloring, max_bands: usize) -> Schedule {
    let colors: Vec<Option<usize>> = coloring.colors.iter().map(|&c| (c < max_bands).then_some(c)).collect();
    Schedule::from_colors(&colors)
}

/// Threshold/requirement scheduling loop.
///
/// Starts from the mean correlation as threshold. Whenever the coloring needs
/// more than `max_bands` colors the threshold moves halfway to the largest
/// correlation (which also drops edges added earlier). Otherwise the weakest
/// user gets an extra edge to the co-band user that interferes with it most.
/// The best schedule seen is returned, feasible ones first, then by sum rate.
pub fn schedule_users(
    model: &RateModel,
    base: &Allocation,
    rho: &DMatrix<f64>,
    max_bands: usize,
    capacity: usize,
    requirement: &[f64],
) -> Result<ScheduleOutcome> {
    let k_count = rho.nrows();
    if max_bands * capacity < k_count {
        return Err(Error::Config(format!("{max_bands} bands of capacity {capacity} cannot hold {k_count} users")));
    }
    let off_diagonal: Vec<f64> =
        (0..k_count).flat_map(|a| (0..k_count).filter(move |&b| b != a).map(move |b| (a, b))).map(|(a, b)| rho[(a, b)]).collect();
    let max_rho = off_diagonal.iter().copied().fold(0.0, f64::max);
    let mut threshold = if off_diagonal.is_empty() { 0.0 } else { off_diagonal.iter().sum::<f64>() / off_diagonal.len() as f64 };
    let mut forced: Vec<(usize, usize)> = Vec::new();
    let mut best: Option<ScheduleOutcome> = None;

    for iteration in 1..=MAX_SCHEDULER_ITERATIONS {
        let mut graph = ConflictGraph::from_threshold(rho, threshold);
        forced.iter().for_each(|&(a, b)| graph.add_edge(a, b));
        let coloring = dsatur_color(&graph, capacity);

        if coloring.num_colors > max_bands {
            if best.is_none() {
                let schedule = truncate_coloring(&coloring, max_bands);
                let (_, sum_rate, _) = evaluate(model, base, &schedule, requirement, max_bands);
                best = Some(ScheduleOutcome { schedule, feasible: false, sum_rate, iterations: iteration, threshold });
            }
            threshold = (threshold + max_rho) / 2.0;
            forced.clear();
            continue;
        }

        let schedule = Schedule::from_colors(&coloring.colors.iter().map(|&c| Some(c)).collect::<Vec<_>>());
        let (feasible, sum_rate, alloc) = evaluate(model, base, &schedule, requirement, max_bands);
        let improves = best.as_ref().map_or(true, |b| better((feasible, sum_rate), (b.feasible, b.sum_rate)));
        if improves {
            best = Some(ScheduleOutcome { schedule: schedule.clone(), feasible, sum_rate, iterations: iteration, threshold });
        }

        // weakest user and its strongest co-band interferer
        let terms: Vec<_> = (0..k_count).map(|k| model.terms(&alloc, k)).collect::<Result<_>>()?;
        let weakest = (0..k_count)
            .min_by(|&a, &b| terms[a].sinr_lb.total_cmp(&terms[b].sinr_lb).then(a.cmp(&b)))
            .expect("at least one user");
        let band = schedule.band_of(weakest).expect("every user is colored");
        let t = &terms[weakest];
        let Some(culprit) = schedule
            .group(band)
            .iter()
            .copied()
            .filter(|&kp| kp != weakest)
            .max_by(|&a, &b| {
                let harm = |kp: usize| alloc.power[kp] * (t.i1[kp] + t.i2[kp] + t.i3[kp]);
                harm(a).total_cmp(&harm(b)).then(b.cmp(&a))
            })
        else {
            // the weakest user already has a band to itself
            break;
        };
        forced.push((weakest, culprit));
    }
    Ok(best.expect("the loop runs at least once"))
}

// ============================================================================
// Exhaustive reference
// ============================================================================

/// Visits every partition of `0..n` into at most `max_blocks` blocks of at
/// most `capacity` users, as restricted growth strings in lexicographic order.
pub fn for_each_partition(n: usize, max_blocks: usize, capacity: usize, mut visit: impl FnMut(&[usize])) {
    fn recurse(pos: usize, used: usize, labels: &mut Vec<usize>, sizes: &mut Vec<usize>, max_blocks: usize, capacity: usize, visit: &mut dyn FnMut(&[usize])) {
        if pos == labels.len() {
            visit(labels);
            return;
        }
        for block in 0..=used.min(max_blocks.saturating_sub(1)) {
            if block == used && used == max_blocks {
                break;
            }
            if sizes[block] == capacity {
                continue;
            }
            labels[pos] = block;
            sizes[block] += 1;
            recurse(pos + 1, used.max(block + 1), labels, sizes, max_blocks, capacity, visit);
            sizes[block] -= 1;
        }
    }
    if n == 0 {
        visit(&[]);
        return;
    }
    let mut labels = vec![0; n];
    let mut sizes = vec![0; max_blocks.max(1)];
    recurse(0, 0, &mut labels, &mut sizes, max_blocks, capacity, &mut visit);
}

pub fn count_partitions(n: usize, max_blocks: usize, capacity: usize) -> u64 {
    let mut count = 0;
    for_each_partition(n, max_blocks, capacity, |_| count += 1);
    count
}

/// Best schedule over all admissible partitions, bands sharing the bandwidth
/// evenly. Ties keep the earliest partition.
pub fn exhaustive_schedule(
    model: &RateModel,
    base: &Allocation,
    max_bands: usize,
    capacity: usize,
    requirement: &[f64],
) -> Result<ScheduleOutcome> {
    let k_count = model.num_users();
    if k_count > EXHAUSTIVE_USER_LIMIT {
        return Err(Error::Contract(format!(
            "exhaustive search is limited to {EXHAUSTIVE_USER_LIMIT} users, got {k_count}"
        )));
    }
    let mut best: Option<ScheduleOutcome> = None;
    let mut visited = 0;
    for_each_partition(k_count, max_bands, capacity, |labels| {
        visited += 1;
        let schedule = Schedule::from_colors(&labels.iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let (feasible, sum_rate, _) = evaluate(model, base, &schedule, requirement, max_bands);
        if best.as_ref().map_or(true, |b| better((feasible, sum_rate), (b.feasible, b.sum_rate))) {
            best = Some(ScheduleOutcome { schedule, feasible, sum_rate, iterations: visited, threshold: f64::NAN });
        }
    });
    best.ok_or_else(|| Error::Infeasible { stage: "exhaustive", detail: "no admissible partition".into() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn binomial(n: usize, k: usize) -> u64 {
        (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
    }

    /// Partitions into exactly `j` blocks of size at most `s`, by choosing the
    /// companions of the first element.
    fn exact_blocks(n: usize, j: usize, s: usize) -> u64 {
        match (n, j) {
            (0, 0) => 1,
            (0, _) | (_, 0) => 0,
            _ => (0..s.min(n)).map(|i| binomial(n - 1, i) * exact_blocks(n - 1 - i, j - 1, s)).sum(),
        }
    }

    #[test]
    fn partition_counts_match_recurrence() {
        assert_eq!(count_partitions(4, 2, 2), 3);
        for n in 0..=8 {
            for blocks in 1..=4 {
                for cap in 1..=n.max(1) {
                    let expected: u64 = (0..=blocks).map(|j| exact_blocks(n, j, cap)).sum();
                    assert_eq!(count_partitions(n, blocks, cap), expected, "n={n} I={blocks} cap={cap}");
                }
            }
        }
        // Bell number B_5 when nothing binds
        assert_eq!(count_partitions(5, 5, 5), 52);
    }

    #[test]
    fn partitions_come_in_lexicographic_order() {
        let mut seen = Vec::new();
        for_each_partition(4, 3, 2, |l| seen.push(l.to_vec()));
        let mut sorted = seen.clone();
        sorted.sort();
        assert_eq!(seen, sorted);
        assert!(seen.iter().all(|l| l[0] == 0));
    }

    #[test]
    fn dsatur_examples() {
        let path = ConflictGraph::from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(dsatur_color(&path, 3).num_colors, 2);
        let k4 = ConflictGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(dsatur_color(&k4, 4).num_colors, 4);
        let empty = ConflictGraph::empty(5);
        assert_eq!(dsatur_color(&empty, 5).num_colors, 1);
        assert_eq!(dsatur_color(&empty, 2).num_colors, 3);
    }

    #[test]
    fn dsatur_random_graphs_are_proper() {
        let mut rng = crate::rng::stream(17, crate::rng::Domain::Instance, 0);
        for _ in 0..300 {
            let n = rng.gen_range(1..=12);
            let mut g = ConflictGraph::empty(n);
            for a in 0..n {
                for b in a + 1..n {
                    if rng.gen_bool(0.4) {
                        g.add_edge(a, b);
                    }
                }
            }
            let free = dsatur_color(&g, n);
            assert!(is_valid_coloring(&g, &free, n));
            assert!(free.num_colors <= g.max_degree() + 1);
            let cap = rng.gen_range(1..=n);
            let capped = dsatur_color(&g, cap);
            assert!(is_valid_coloring(&g, &capped, cap));
        }
    }

    #[test]
    fn zero_correlation_means_no_conflict() {
        let rho = DMatrix::zeros(4, 4);
        let g = ConflictGraph::from_threshold(&rho, 0.0);
        assert_eq!(g.max_degree(), 0);
        assert_eq!(dsatur_color(&g, 4).num_colors, 1);
    }
}
