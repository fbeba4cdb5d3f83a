//! The knowledge chain.
//!
//! Under teleport mobility the knowledge state `K_t` is a Markov chain on the
//! subsets of the neighbour list. From `k` it moves to `l ⊇ k` with
//! probability `Σ_{m ⊆ k} mass[m ∪ (l ∖ k)]`: the report must carry exactly
//! the missing neighbours, plus anything already known. The kernel is upper
//! triangular under any order that extends `⊆`, its eigenvalues are the
//! diagonal `λ_k = Σ_{l ⊆ k} mass[l]`, and expected absorption times follow
//! by back-substitution from the absorbing states down.

use serde::ser::{Serialize, SerializeStruct, Serializer};
use thiserror::Error;

use crate::tessellation::{canonical_order, coverage_fraction, NeighborSet, TileMeasure};

/// Largest neighbour count for which a dense kernel may be materialised.
pub const DENSE_LIMIT: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("delta must lie in (0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid absorbing set: {0}")]
    InvalidAbsorbingSet(String),
    #[error("dense kernel for {n} neighbours exceeds the limit of {max}")]
    TooLarge { n: usize, max: usize },
}

/// `P(k, l)`, computed on demand from the tile measure.
pub fn transition_prob(measure: &TileMeasure, k: NeighborSet, l: NeighborSet) -> f64 {
    if !k.is_subset_of(l) {
        return 0.0;
    }
    let missing = l.difference(k);
    k.subsets().map(|m| measure.mass(m.union(missing))).sum()
}

/// Read-only view of the transition kernel.
#[derive(Clone, Copy, Debug)]
pub struct KernelView<'a> {
    measure: &'a TileMeasure,
}

impl<'a> KernelView<'a> {
    pub fn new(measure: &'a TileMeasure) -> Self {
        KernelView { measure }
    }

    pub fn measure(&self) -> &TileMeasure {
        self.measure
    }

    pub fn entry(&self, k: NeighborSet, l: NeighborSet) -> f64 {
        transition_prob(self.measure, k, l)
    }

    pub fn row_sum(&self, k: NeighborSet) -> f64 {
        k.complement(self.measure.n_neighbours())
            .subsets()
            .map(|d| self.entry(k, k.union(d)))
            .sum()
    }

    /// The kernel as dense rows in canonical state order (see [`canonical_order`]).
    pub fn dense(&self) -> Result<(Vec<NeighborSet>, Vec<Vec<f64>>), ChainError> {
        let n = self.measure.n_neighbours();
        if n > DENSE_LIMIT {
            return Err(ChainError::TooLarge { n, max: DENSE_LIMIT });
        }
        let order = canonical_order(n);
        let rows = order
            .iter()
            .map(|&k| order.iter().map(|&l| self.entry(k, l)).collect())
            .collect();
        Ok((order, rows))
    }
}

/// Upward-closed set of absorbing knowledge states.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsorbingSet {
    n_neighbours: usize,
    member: Vec<bool>,
}

impl AbsorbingSet {
    /// Only the full set: first time of full knowledge.
    pub fn full_knowledge(n_neighbours: usize) -> Self {
        let mut member = vec![false; 1 << n_neighbours];
        member[NeighborSet::full(n_neighbours).index()] = true;
        AbsorbingSet { n_neighbours, member }
    }

    /// States whose known tiles cover at least `delta` of the serving area.
    ///
    /// The full set is always included and the result is closed upward, so
    /// rounding in the subset sums cannot break either invariant.
    pub fn delta(measure: &TileMeasure, delta: f64) -> Result<Self, ChainError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(ChainError::InvalidDelta(delta));
        }
        let n = measure.n_neighbours();
        let mut member: Vec<bool> = (0..1u32 << n)
            .map(|k| coverage_fraction(measure, NeighborSet::from_bits(k)) >= delta)
            .collect();
        member[NeighborSet::full(n).index()] = true;
        for k in 0..member.len() {
            if member[k] {
                for b in 0..n {
                    member[k | (1 << b)] = true;
                }
            }
        }
        Ok(AbsorbingSet { n_neighbours: n, member })
    }

    /// Explicit set; must be non-empty and upward-closed.
    pub fn from_states<I>(n_neighbours: usize, states: I) -> Result<Self, ChainError>
    where
        I: IntoIterator<Item = NeighborSet>,
    {
        let mut member = vec![false; 1 << n_neighbours];
        for s in states {
            let idx = s.index();
            if idx >= member.len() {
                return Err(ChainError::InvalidAbsorbingSet(format!(
                    "state {s} is outside {n_neighbours} neighbours"
                )));
            }
            member[idx] = true;
        }
        if !member.iter().any(|&m| m) {
            return Err(ChainError::InvalidAbsorbingSet("empty".into()));
        }
        for k in 0..member.len() {
            for b in 0..n_neighbours {
                if member[k] && !member[k | (1 << b)] {
                    return Err(ChainError::InvalidAbsorbingSet(format!(
                        "{} is absorbing but its superset {} is not",
                        NeighborSet::from_bits(k as u32),
                        NeighborSet::from_bits((k | (1 << b)) as u32)
                    )));
                }
            }
        }
        Ok(AbsorbingSet { n_neighbours, member })
    }

    pub fn n_neighbours(&self) -> usize {
        self.n_neighbours
    }

    pub fn contains(&self, k: NeighborSet) -> bool {
        self.member[k.index()]
    }

    pub fn states(&self) -> impl Iterator<Item = NeighborSet> + '_ {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(k, _)| NeighborSet::from_bits(k as u32))
    }

    pub fn len(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A per-state expectation, or the marker that absorption cannot happen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Expectation {
    Steps(f64),
    Unreachable,
}

impl Expectation {
    pub fn value(self) -> Option<f64> {
        match self {
            Expectation::Steps(v) => Some(v),
            Expectation::Unreachable => None,
        }
    }

    pub fn is_unreachable(self) -> bool {
        matches!(self, Expectation::Unreachable)
    }
}

impl Serialize for Expectation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Expectation::Steps(v) => s.serialize_f64(*v),
            Expectation::Unreachable => s.serialize_str("unreachable"),
        }
    }
}

/// Number of reports after which full knowledge holds with probability at least `1 − ε`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReportBound {
    Reports(f64),
    Unbounded,
}

impl ReportBound {
    pub fn value(self) -> Option<f64> {
        match self {
            ReportBound::Reports(v) => Some(v),
            ReportBound::Unbounded => None,
        }
    }
}

impl Serialize for ReportBound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ReportBound::Reports(v) => s.serialize_f64(*v),
            ReportBound::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

/// Expected absorption times, their variances and the kernel spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSolution {
    n_neighbours: usize,
    start_state: NeighborSet,
    absorbing: AbsorbingSet,
    expected_steps: Vec<Expectation>,
    variance: Vec<Expectation>,
    eigenvalues: Vec<f64>,
    second_largest: f64,
}

impl ChainSolution {
    pub fn n_neighbours(&self) -> usize {
        self.n_neighbours
    }

    pub fn start_state(&self) -> NeighborSet {
        self.start_state
    }

    pub fn absorbing(&self) -> &AbsorbingSet {
        &self.absorbing
    }

    /// Expected number of reports to absorption from the start state.
    pub fn expected(&self) -> Expectation {
        self.expected_steps[self.start_state.index()]
    }

    pub fn expected_from(&self, k: NeighborSet) -> Expectation {
        self.expected_steps[k.index()]
    }

    pub fn expected_steps(&self) -> &[Expectation] {
        &self.expected_steps
    }

    pub fn variance(&self) -> Expectation {
        self.variance[self.start_state.index()]
    }

    pub fn variance_from(&self, k: NeighborSet) -> Expectation {
        self.variance[k.index()]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Largest eigenvalue among non-absorbing states (0 when there are none).
    ///
    /// With a single absorbing state this is the maximum over the states of
    /// order `N − 1`; for aggregated δ-problems it is the spectral radius of
    /// the transient block.
    pub fn second_largest(&self) -> f64 {
        self.second_largest
    }

    pub fn report_bound(&self, epsilon: f64) -> ReportBound {
        report_bound(self.second_largest, epsilon)
    }

    /// Serialisable summary with a bound row per requested `ε`.
    pub fn report(&self, epsilons: &[f64]) -> SolutionReport<'_> {
        SolutionReport {
            solution: self,
            epsilons: epsilons.to_vec(),
        }
    }
}

/// Structured-text view of a [`ChainSolution`].
#[derive(Debug)]
pub struct SolutionReport<'a> {
    solution: &'a ChainSolution,
    epsilons: Vec<f64>,
}

impl Serialize for SolutionReport<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(serde::Serialize)]
        struct StateRow {
            state: String,
            absorbing: bool,
            expected_steps: Expectation,
            variance: Expectation,
            eigenvalue: f64,
        }
        #[derive(serde::Serialize)]
        struct BoundRow {
            epsilon: f64,
            reports: ReportBound,
        }
        let sol = self.solution;
        let states: Vec<StateRow> = canonical_order(sol.n_neighbours)
            .into_iter()
            .map(|k| StateRow {
                state: k.to_string(),
                absorbing: sol.absorbing.contains(k),
                expected_steps: sol.expected_from(k),
                variance: sol.variance_from(k),
                eigenvalue: sol.eigenvalues[k.index()],
            })
            .collect();
        let bounds: Vec<BoundRow> = self
            .epsilons
            .iter()
            .map(|&e| BoundRow {
                epsilon: e,
                reports: sol.report_bound(e),
            })
            .collect();
        let mut st = s.serialize_struct("ChainSolution", 7)?;
        st.serialize_field("n_neighbours", &sol.n_neighbours)?;
        st.serialize_field("start_state", &sol.start_state.to_string())?;
        st.serialize_field("expected_steps", &sol.expected())?;
        st.serialize_field("variance", &sol.variance())?;
        st.serialize_field("second_largest_eigenvalue", &sol.second_largest)?;
        st.serialize_field("bounds", &bounds)?;
        st.serialize_field("states", &states)?;
        st.end()
    }
}

/// `λ_k = Σ_{l ⊆ k} mass[l]` for every state, equal to the kernel diagonal.
pub fn eigenvalues(measure: &TileMeasure) -> Vec<f64> {
    (0..measure.n_tiles() as u32)
        .map(|k| transition_prob(measure, NeighborSet::from_bits(k), NeighborSet::from_bits(k)))
        .collect()
}

/// `λ̃ = max_{|k| = N−1} λ_k`. Zero for `N = 0`.
pub fn second_largest_eigenvalue(measure: &TileMeasure) -> f64 {
    let n = measure.n_neighbours();
    if n == 0 {
        return 0.0;
    }
    let full = NeighborSet::full(n);
    (0..n)
        .map(|i| measure.subset_mass(full.difference(NeighborSet::singleton(i))))
        .fold(0.0, f64::max)
}

/// `S(1 − ε) = log ε / log λ̃`.
pub fn report_bound(second_largest: f64, epsilon: f64) -> ReportBound {
    assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    if second_largest <= 0.0 {
        ReportBound::Reports(0.0)
    } else if second_largest >= 1.0 {
        ReportBound::Unbounded
    } else {
        ReportBound::Reports(epsilon.ln() / second_largest.ln())
    }
}

/// The spectral tail bound `λ̃^t`.
pub fn tail_bound(second_largest: f64, t: u32) -> f64 {
    second_largest.powi(t as i32)
}

/// Neighbours that no report can ever reveal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reachability {
    /// 1-based neighbour indices.
    pub undiscoverable: Vec<usize>,
}

impl Reachability {
    pub fn is_reachable(&self) -> bool {
        self.undiscoverable.is_empty()
    }
}

/// Full knowledge is reachable iff every neighbour has positive total mass.
pub fn fk_reachable(measure: &TileMeasure) -> Reachability {
    let support = measure.support_union();
    Reachability {
        undiscoverable: (0..measure.n_neighbours())
            .filter(|&i| !support.contains(i))
            .map(|i| i + 1)
            .collect(),
    }
}

/// Expected reports until the chain, started at `∅`, enters `absorbing`.
pub fn expected_absorption_steps(
    measure: &TileMeasure,
    absorbing: &AbsorbingSet,
) -> Result<ChainSolution, ChainError> {
    let n = measure.n_neighbours();
    if absorbing.n_neighbours() != n {
        return Err(ChainError::InvalidAbsorbingSet(format!(
            "absorbing set is over {} neighbours, measure over {n}",
            absorbing.n_neighbours()
        )));
    }
    if absorbing.is_empty() {
        return Err(ChainError::InvalidAbsorbingSet("empty".into()));
    }

    let mut solver = BackSubstitution::new(measure, absorbing);
    solver.run();

    let eigenvalues = eigenvalues(measure);
    let second_largest = eigenvalues
        .iter()
        .enumerate()
        .filter(|(k, _)| !absorbing.member[*k])
        .map(|(_, &l)| l)
        .fold(0.0, f64::max);
    let to_exp = |v: Option<f64>| v.map_or(Expectation::Unreachable, Expectation::Steps);
    let expected_steps: Vec<Expectation> = solver.mean.iter().map(|&v| to_exp(v)).collect();
    let variance = solver
        .mean
        .iter()
        .zip(&solver.second_moment)
        .map(|(h, m2)| match (h, m2) {
            (Some(h), Some(m2)) => Expectation::Steps((m2 - h * h).max(0.0)),
            _ => Expectation::Unreachable,
        })
        .collect();

    Ok(ChainSolution {
        n_neighbours: n,
        start_state: NeighborSet::EMPTY,
        absorbing: absorbing.clone(),
        expected_steps,
        variance,
        eigenvalues,
        second_largest,
    })
}

/// Expected first time of full knowledge.
pub fn solve_fk(measure: &TileMeasure) -> ChainSolution {
    expected_absorption_steps(measure, &AbsorbingSet::full_knowledge(measure.n_neighbours()))
        .expect("full-knowledge absorbing set is always valid")
}

/// Expected first time of δ-knowledge.
pub fn solve_delta(measure: &TileMeasure, delta: f64) -> Result<ChainSolution, ChainError> {
    expected_absorption_steps(measure, &AbsorbingSet::delta(measure, delta)?)
}

/// Triangular solve over the subset tree.
///
/// For a state `k` with complement `c`, the row of the kernel restricted to
/// `l = k ∪ d` (`d ⊆ c`) is `V_k(d) = Σ_{m ⊆ k} mass[m ∪ d]`. `V_{k ∪ {b}}` is
/// `V_k` with bit `b` summed out, so a depth-first walk that adds bits in
/// increasing order builds every row from its parent's in `O(|V|)`: `O(3^N)`
/// in total with one buffer per depth. Visiting children in increasing bit
/// order and finishing a node after its children processes every proper
/// superset of `k` before `k` itself.
struct BackSubstitution<'a> {
    n: usize,
    absorbing: &'a AbsorbingSet,
    support: NeighborSet,
    mean: Vec<Option<f64>>,
    second_moment: Vec<Option<f64>>,
    root: Vec<f64>,
}

impl<'a> BackSubstitution<'a> {
    fn new(measure: &TileMeasure, absorbing: &'a AbsorbingSet) -> Self {
        let n = measure.n_neighbours();
        let init: Vec<Option<f64>> = absorbing
            .member
            .iter()
            .map(|&a| if a { Some(0.0) } else { None })
            .collect();
        BackSubstitution {
            n,
            absorbing,
            support: measure.support_union(),
            mean: init.clone(),
            second_moment: init,
            root: measure.masses().to_vec(),
        }
    }

    fn run(&mut self) {
        let mut buffers: Vec<Vec<f64>> = (1..=self.n).map(|d| vec![0.0; 1 << (self.n - d)]).collect();
        let root = std::mem::take(&mut self.root);
        self.visit(NeighborSet::EMPTY, 0, &root, &mut buffers);
    }

    fn visit(&mut self, k: NeighborSet, first_bit: usize, row: &[f64], buffers: &mut [Vec<f64>]) {
        if self.absorbing.contains(k) {
            // upward closure: the whole subtree is absorbing and already zero
            return;
        }
        if let Some((child_row, deeper)) = buffers.split_first_mut() {
            for b in first_bit..self.n {
                // every bit of k is below first_bit, so b sits at position b − |k| of the complement
                let pos = b - k.len();
                sum_out(row, pos, child_row);
                self.visit(k.union(NeighborSet::singleton(b)), b + 1, child_row, deeper);
            }
        }
        self.finish(k, row);
    }

    fn finish(&mut self, k: NeighborSet, row: &[f64]) {
        // absorption is possible iff everything reportable from k lands in the set
        if !self.absorbing.contains(k.union(self.support)) {
            return;
        }
        let complement = k.complement(self.n);
        let mut escape = 0.0;
        let mut mean_acc = 0.0;
        let mut m2_acc = 0.0;
        for (d, &p) in complement.subsets().zip(row).skip(1) {
            if p == 0.0 {
                continue;
            }
            let l = k.union(d).index();
            match (self.mean[l], self.second_moment[l]) {
                (Some(h), Some(m2)) => {
                    escape += p;
                    mean_acc += p * h;
                    m2_acc += p * m2;
                }
                _ => return,
            }
        }
        if escape <= 0.0 {
            return;
        }
        let h = (1.0 + mean_acc) / escape;
        self.mean[k.index()] = Some(h);
        self.second_moment[k.index()] = Some((2.0 * h - 1.0 + m2_acc) / escape);
    }
}

/// Sums out the bit at compressed position `pos`: `dst[i] = src[i₀] + src[i₁]`
/// where `i₀`, `i₁` insert a 0 and a 1 at `pos`.
fn sum_out(src: &[f64], pos: usize, dst: &mut Vec<f64>) {
    let half = src.len() / 2;
    dst.clear();
    let low = (1usize << pos) - 1;
    dst.extend((0..half).map(|i| {
        let i0 = ((i & !low) << 1) | (i & low);
        src[i0] + src[i0 | (1 << pos)]
    }));
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> TileMeasure {
        TileMeasure::new(2, vec![0.4, 0.2, 0.2, 0.2]).unwrap()
    }

    fn set(bits: u32) -> NeighborSet {
        NeighborSet::from_bits(bits)
    }

    #[test]
    fn example_transitions() {
        let m = example();
        assert!((transition_prob(&m, set(0), set(1)) - 0.2).abs() < 1e-15);
        assert!((transition_prob(&m, set(1), set(3)) - 0.4).abs() < 1e-15);
        assert_eq!(transition_prob(&m, set(1), set(2)), 0.0);
        assert_eq!(transition_prob(&m, set(3), set(3)), m.subset_mass(set(3)));
    }

    #[test]
    fn single_neighbour_is_geometric() {
        for p in [0.5, 0.1, 0.01] {
            let m = TileMeasure::new(1, vec![1.0 - p, p]).unwrap();
            let sol = solve_fk(&m);
            let e = sol.expected().value().unwrap();
            assert!((e - 1.0 / p).abs() <= 1e-12 * (1.0 / p), "p={p}: {e}");
            let var = sol.variance().value().unwrap();
            assert!((var - (1.0 - p) / (p * p)).abs() <= 1e-9 * var.max(1.0));
        }
    }

    #[test]
    fn example_expected_times() {
        let sol = solve_fk(&example());
        assert!((sol.expected().value().unwrap() - 10.0 / 3.0).abs() < 1e-12);
        assert!((sol.expected_from(set(1)).value().unwrap() - 2.5).abs() < 1e-12);
        assert!((sol.expected_from(set(2)).value().unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(sol.expected_from(set(3)), Expectation::Steps(0.0));
        assert!((sol.second_largest() - 0.6).abs() < 1e-12);
        assert!((second_largest_eigenvalue(&example()) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn undiscoverable_neighbour_is_unreachable() {
        let m = TileMeasure::new(2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let sol = solve_fk(&m);
        assert!(sol.expected_from(set(0)).is_unreachable());
        assert!(sol.expected_from(set(1)).is_unreachable());
        assert_eq!(sol.expected_from(set(2)), Expectation::Steps(1.0 / 0.5));
        assert_eq!(fk_reachable(&m).undiscoverable, vec![2]);
        assert_eq!(second_largest_eigenvalue(&m), 1.0);
        assert_eq!(sol.report_bound(0.1), ReportBound::Unbounded);
    }

    #[test]
    fn reachability_examples() {
        assert!(fk_reachable(&example()).is_reachable());
        let m = TileMeasure::new(3, vec![0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(fk_reachable(&m).undiscoverable, vec![3]);
    }

    #[test]
    fn full_tile_only() {
        let mut mass = vec![0.0; 8];
        mass[7] = 1.0;
        let m = TileMeasure::new(3, mass).unwrap();
        let sol = solve_fk(&m);
        assert_eq!(sol.expected(), Expectation::Steps(1.0));
        assert_eq!(sol.variance(), Expectation::Steps(0.0));
        assert_eq!(second_largest_eigenvalue(&m), 0.0);
        assert_eq!(report_bound(second_largest_eigenvalue(&m), 0.1), ReportBound::Reports(0.0));
    }

    #[test]
    fn eigenvalue_examples() {
        let ev = eigenvalues(&example());
        assert_eq!(ev[0], 0.4);
        assert!((ev[1] - 0.6).abs() < 1e-15 && (ev[2] - 0.6).abs() < 1e-15);
        assert!((ev[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bounds() {
        let s = report_bound(0.6, 0.1).value().unwrap();
        assert!((s - 0.1f64.ln() / 0.6f64.ln()).abs() < 1e-12);
        assert!((s - 4.507_575).abs() < 1e-5);
        assert_eq!(report_bound(0.0, 0.1), ReportBound::Reports(0.0));
        assert_eq!(report_bound(1.0, 0.1), ReportBound::Unbounded);
        assert_eq!(tail_bound(0.6, 0), 1.0);
        assert_eq!(tail_bound(0.0, 0), 1.0);
        assert!((tail_bound(0.6, 5) - 0.07776).abs() < 1e-15);
    }

    #[test]
    fn delta_examples() {
        let m = example();
        let sol = solve_delta(&m, 0.4).unwrap();
        assert_eq!(sol.expected(), Expectation::Steps(0.0));
        assert_eq!(sol.second_largest(), 0.0);
        let at_one = solve_delta(&m, 1.0).unwrap();
        assert_eq!(at_one.expected(), solve_fk(&m).expected());
        // δ = 0.6: {1} and {2} qualify; from ∅ any non-empty tile absorbs
        let mid = solve_delta(&m, 0.6).unwrap();
        assert!((mid.expected().value().unwrap() - 1.0 / 0.6).abs() < 1e-12);
        assert!((mid.second_largest() - 0.4).abs() < 1e-15);
        assert_eq!(solve_delta(&m, 0.0).unwrap_err(), ChainError::InvalidDelta(0.0));
        assert!(solve_delta(&m, 1.5).is_err());
    }

    #[test]
    fn absorbing_set_validation() {
        assert!(AbsorbingSet::from_states(2, []).is_err());
        assert!(AbsorbingSet::from_states(2, [set(1)]).is_err());
        assert!(AbsorbingSet::from_states(2, [set(1), set(3)]).is_ok());
        assert!(AbsorbingSet::from_states(2, [set(4)]).is_err());
        let d = AbsorbingSet::delta(&example(), 0.5).unwrap();
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn dense_kernel_is_limited() {
        let m = TileMeasure::from_weights(13, vec![1.0; 1 << 13]).unwrap();
        assert!(matches!(KernelView::new(&m).dense(), Err(ChainError::TooLarge { .. })));
        let (order, rows) = KernelView::new(&example()).dense().unwrap();
        assert_eq!(order.len(), 4);
        assert!((rows[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_out_matches_definition() {
        let src: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let mut dst = Vec::new();
        sum_out(&src, 2, &mut dst);
        // i = 0b101 -> i0 = 0b1001, i1 = 0b1101
        assert_eq!(dst[5], 9.0 + 13.0);
        assert_eq!(dst.len(), 8);
    }

    #[test]
    fn solution_report_serialises_markers() {
        let m = TileMeasure::new(2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let sol = solve_fk(&m);
        let text = serde_json::to_string(&sol.report(&[0.1, 0.01])).unwrap();
        assert!(text.contains("\"expected_steps\":\"unreachable\""));
        assert!(text.contains("\"unbounded\""));
    }

    fn measure_strategy(max_n: usize) -> impl Strategy<Value = TileMeasure> {
        (1..=max_n).prop_flat_map(|n| {
            prop::collection::vec(0.0f64..1.0, 1 << n)
                .prop_filter("positive total", |w| w.iter().sum::<f64>() > 1e-3)
                .prop_map(move |w| TileMeasure::from_weights(n, w).unwrap())
        })
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(m in measure_strategy(10)) {
            let kv = KernelView::new(&m);
            for k in 0..m.n_tiles() as u32 {
                prop_assert!((kv.row_sum(set(k)) - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn diagonal_equals_spectrum(m in measure_strategy(8)) {
            let ev = eigenvalues(&m);
            for k in 0..m.n_tiles() as u32 {
                prop_assert_eq!(ev[k as usize], transition_prob(&m, set(k), set(k)));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&ev[k as usize]));
            }
        }

        #[test]
        fn expected_steps_monotone_in_knowledge(m in measure_strategy(7)) {
            let sol = solve_fk(&m);
            let full = m.full_set();
            for k in full.subsets() {
                for b in 0..m.n_neighbours() {
                    let k2 = k.union(NeighborSet::singleton(b));
                    match (sol.expected_from(k).value(), sol.expected_from(k2).value()) {
                        (Some(a), Some(c)) => prop_assert!(a >= c - 1e-9 * a.max(1.0)),
                        (Some(_), None) => prop_assert!(false, "superset unreachable"),
                        _ => {}
                    }
                }
            }
            prop_assert_eq!(sol.expected_from(full), Expectation::Steps(0.0));
        }

        #[test]
        fn delta_monotone(m in measure_strategy(6), a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let e_lo = solve_delta(&m, lo).unwrap().expected().value();
            let e_hi = solve_delta(&m, hi).unwrap().expected().value();
            match (e_lo, e_hi) {
                (Some(x), Some(y)) => prop_assert!(x <= y + 1e-9 * y.max(1.0)),
                (None, Some(_)) => prop_assert!(false),
                _ => {}
            }
        }

        #[test]
        fn delta_sets_are_upward_closed(m in measure_strategy(6), delta in 0.01f64..=1.0) {
            let abs = AbsorbingSet::delta(&m, delta).unwrap();
            prop_assert!(abs.contains(m.full_set()));
            prop_assert!(AbsorbingSet::from_states(m.n_neighbours(), abs.states()).is_ok());
        }
    }
}
