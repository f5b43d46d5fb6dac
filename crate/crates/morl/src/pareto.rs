//! Pareto archive and set-level machinery: non-dominated filtering, crowd
//! distance, exact hypervolume, sparsity, expected utility, preference
//! grids, and set-max-policy assignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{dot, PreferenceVector, ReturnVector};

/// Where a solution came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Init,
    Buffer,
    Extension { step: usize, direction: usize },
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Init => write!(f, "init"),
            Provenance::Buffer => write!(f, "buffer"),
            Provenance::Extension { step, direction } => {
                write!(f, "extension(step={step};l={direction})")
            }
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "init" {
            return Ok(Provenance::Init);
        }
        if s == "buffer" {
            return Ok(Provenance::Buffer);
        }
        if let Some(body) = s.strip_prefix("extension(").and_then(|b| b.strip_suffix(')')) {
            let mut step = None;
            let mut direction = None;
            for part in body.split(';') {
                if let Some(v) = part.strip_prefix("step=") {
                    step = v.parse().ok();
                } else if let Some(v) = part.strip_prefix("l=") {
                    direction = v.parse().ok();
                }
            }
            if let (Some(step), Some(direction)) = (step, direction) {
                return Ok(Provenance::Extension { step, direction });
            }
        }
        Err(Error::Artifact(format!("unparseable provenance `{s}`")))
    }
}

/// A policy reference paired with its evaluated return vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub policy_id: String,
    pub returns: ReturnVector,
    pub provenance: Provenance,
}

impl Solution {
    pub fn new(policy_id: impl Into<String>, returns: ReturnVector, provenance: Provenance) -> Self {
        debug_assert!(returns.iter().all(|g| g.is_finite()));
        Self {
            policy_id: policy_id.into(),
            returns,
            provenance,
        }
    }
}

/// Append-only solution store with a maintained non-dominated cache.
#[derive(Clone, Debug, Default)]
pub struct Archive {
    solutions: Vec<Solution>,
    nondominated: Vec<usize>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a solution, keeping the cache equal to the non-dominated
    /// subset. Duplicate return vectors keep the first-inserted entry.
    pub fn push(&mut self, solution: Solution) {
        let idx = self.solutions.len();
        let dominated_or_dup = self.nondominated.iter().any(|&j| {
            dominates(&self.solutions[j].returns, &solution.returns)
                || self.solutions[j].returns == solution.returns
        });
        if !dominated_or_dup {
            self.nondominated
                .retain(|&j| !dominates(&solution.returns, &self.solutions[j].returns));
            self.nondominated.push(idx);
            self.nondominated.sort_unstable();
        }
        self.solutions.push(solution);
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn solutions(&self) -> &[Solution] {
        &self.solutions
    }

    /// Indices of the current non-dominated subset, in insertion order.
    pub fn front_indices(&self) -> &[usize] {
        &self.nondominated
    }

    /// Non-dominated solutions in insertion order.
    pub fn front(&self) -> Vec<Solution> {
        self.nondominated
            .iter()
            .map(|&i| self.solutions[i].clone())
            .collect()
    }
}

/// Non-dominated solutions together with the frozen reference point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParetoFront {
    pub solutions: Vec<Solution>,
    pub reference: ReturnVector,
}

impl ParetoFront {
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.solutions.iter().map(|s| s.returns.clone()).collect()
    }
}

/// True iff `a` is at least as good as `b` in every component and strictly
/// better in at least one. Equal vectors do not dominate each other.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    assert_eq!(a.len(), b.len(), "return vectors must have equal length");
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of points not dominated by any other, keeping the first of each
/// duplicate return vector, in input order.
pub fn nondominated_indices(points: &[Vec<f64>]) -> Vec<usize> {
    let mut keep = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            if dominates(q, p) || (j < i && q == p) {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    keep
}

/// Non-dominated subset of `solutions`, preserving insertion order.
pub fn nondominated_filter(solutions: &[Solution]) -> Vec<Solution> {
    let points: Vec<Vec<f64>> = solutions.iter().map(|s| s.returns.clone()).collect();
    nondominated_indices(&points)
        .into_iter()
        .map(|i| solutions[i].clone())
        .collect()
}

/// Crowd distance of each front member.
///
/// Per objective, members are ranked by a stable sort on (value, index); each
/// member accumulates (upper neighbor - lower neighbor) / (max - min). Sorted
/// extremes get +inf in that objective's term; an objective whose values all
/// coincide contributes 0.
pub fn crowd_distance(points: &[Vec<f64>]) -> Vec<f64> {
    let m = points.len();
    if m == 0 {
        return Vec::new();
    }
    let n = points[0].len();
    let mut dist = vec![0.0f64; m];
    for i in 0..n {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| points[a][i].total_cmp(&points[b][i]).then(a.cmp(&b)));
        let lo = points[order[0]][i];
        let hi = points[order[m - 1]][i];
        if hi == lo {
            continue; // degenerate objective
        }
        for (rank, &j) in order.iter().enumerate() {
            if rank == 0 || rank == m - 1 {
                dist[j] = f64::INFINITY;
            } else {
                let upper = points[order[rank + 1]][i];
                let lower = points[order[rank - 1]][i];
                dist[j] += (upper - lower) / (hi - lo);
            }
        }
    }
    if m <= 2 {
        // every member is a boundary member
        for d in &mut dist {
            *d = f64::INFINITY;
        }
    }
    dist
}

/// Selects up to `n` solutions for extension: filter to the non-dominated
/// subset, take per-objective extreme solutions first (in objective order),
/// then fill by descending crowd distance, ties broken by insertion order.
pub fn select_policies(solutions: &[Solution], n: usize) -> Vec<Solution> {
    let front = nondominated_filter(solutions);
    if front.is_empty() || n == 0 {
        return Vec::new();
    }
    let points: Vec<Vec<f64>> = front.iter().map(|s| s.returns.clone()).collect();
    let n_obj = points[0].len();
    let mut picked: Vec<usize> = Vec::new();
    for i in 0..n_obj {
        if picked.len() >= n {
            break;
        }
        let mut best = 0;
        for (j, p) in points.iter().enumerate() {
            if p[i] > points[best][i] {
                best = j;
            }
        }
        if !picked.contains(&best) {
            picked.push(best);
        }
    }
    if picked.len() < n {
        let dist = crowd_distance(&points);
        let mut rest: Vec<usize> = (0..front.len()).filter(|j| !picked.contains(j)).collect();
        rest.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
        for j in rest {
            if picked.len() >= n {
                break;
            }
            picked.push(j);
        }
    }
    picked.into_iter().map(|j| front[j].clone()).collect()
}

/// Exact hypervolume of the region dominated by `points` and bounded below
/// by `reference`.
///
/// Errors unless the reference point is component-wise <= every point.
/// Two-objective fronts use a sweep; higher dimensions use recursive slicing
/// on the last coordinate (supported up to 9 objectives).
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let dim = reference.len();
    if dim == 0 || dim > 9 {
        return Err(Error::Dimension {
            expected: 9,
            got: dim,
        });
    }
    for p in points {
        if p.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: p.len(),
            });
        }
        if p.iter().zip(reference).any(|(x, r)| x < r) {
            return Err(Error::BadReferencePoint);
        }
    }
    let nd: Vec<Vec<f64>> = nondominated_indices(points)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    Ok(hv_recursive(nd, reference))
}

fn hv_recursive(mut points: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let dim = reference.len();
    if dim == 1 {
        let best = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return (best - reference[0]).max(0.0);
    }
    if dim == 2 {
        // sweep: sorted by x descending, y strictly increases along a
        // non-dominated front
        points.sort_by(|a, b| b[0].total_cmp(&a[0]));
        let mut hv = 0.0;
        let mut y_prev = reference[1];
        for p in &points {
            if p[1] > y_prev {
                hv += (p[0] - reference[0]) * (p[1] - y_prev);
                y_prev = p[1];
            }
        }
        return hv;
    }
    // slice on the last coordinate, top-down
    let last = dim - 1;
    points.sort_by(|a, b| b[last].total_cmp(&a[last]));
    let sub_ref = &reference[..last];
    let mut hv = 0.0;
    let mut projected: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for k in 0..points.len() {
        projected.push(points[k][..last].to_vec());
        let z_top = points[k][last];
        let z_bottom = if k + 1 < points.len() {
            points[k + 1][last]
        } else {
            reference[last]
        };
        let thickness = z_top - z_bottom;
        if thickness <= 0.0 {
            continue;
        }
        let nd: Vec<Vec<f64>> = nondominated_indices(&projected)
            .into_iter()
            .map(|i| projected[i].clone())
            .collect();
        hv += thickness * hv_recursive(nd, sub_ref);
    }
    hv
}

/// Mean squared gap between consecutive sorted front values, summed over
/// objectives. Defined as 0 for fronts with fewer than two members.
pub fn sparsity(points: &[Vec<f64>]) -> f64 {
    let m = points.len();
    if m < 2 {
        return 0.0;
    }
    let n = points[0].len();
    let mut total = 0.0;
    for i in 0..n {
        let mut vals: Vec<f64> = points.iter().map(|p| p[i]).collect();
        vals.sort_by(f64::total_cmp);
        for k in 0..m - 1 {
            let gap = vals[k] - vals[k + 1];
            total += gap * gap;
        }
    }
    total / (m - 1) as f64
}

/// Mean over the preference set of the best scalarized return on the front.
pub fn expected_utility(points: &[Vec<f64>], preferences: &[PreferenceVector]) -> f64 {
    if preferences.is_empty() || points.is_empty() {
        return 0.0;
    }
    let total: f64 = preferences
        .iter()
        .map(|w| {
            points
                .iter()
                .map(|p| w.dot(p))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / preferences.len() as f64
}

/// The front member maximizing `omega . G`; ties keep the first inserted.
pub fn smp_assign<'a>(front: &'a [Solution], omega: &PreferenceVector) -> Option<&'a Solution> {
    let mut best: Option<(&Solution, f64)> = None;
    for s in front {
        let u = omega.dot(&s.returns);
        match best {
            Some((_, ub)) if u <= ub => {}
            _ => best = Some((s, u)),
        }
    }
    best.map(|(s, _)| s)
}

/// All simplex lattice points with coordinates in multiples of `delta`.
///
/// `delta` must divide 1 within 1e-9. Vectors are emitted in lexicographic
/// order of their integer compositions.
pub fn preference_grid(n: usize, delta: f64) -> Result<Vec<PreferenceVector>> {
    if n == 0 {
        return Err(Error::Config("grid needs at least one objective".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("grid interval must be positive, got {delta}")));
    }
    let m = (1.0 / delta).round();
    if (m * delta - 1.0).abs() > 1e-9 || m < 1.0 {
        return Err(Error::Config(format!(
            "grid interval {delta} does not divide 1"
        )));
    }
    let m = m as usize;
    let mut out = Vec::new();
    let mut counts = vec![0usize; n];
    fn rec(counts: &mut Vec<usize>, pos: usize, left: usize, m: usize, out: &mut Vec<PreferenceVector>) {
        if pos == counts.len() - 1 {
            counts[pos] = left;
            let w: Vec<f64> = counts.iter().map(|&k| k as f64 / m as f64).collect();
            out.push(PreferenceVector::new(w).expect("lattice point is on the simplex"));
            return;
        }
        for k in 0..=left {
            counts[pos] = k;
            rec(counts, pos + 1, left - k, m, out);
        }
    }
    rec(&mut counts, 0, m, m, &mut out);
    Ok(out)
}

/// Constraint thresholds that guarantee the constrained optimum stays
/// non-dominated: for each objective `i != l`, the front value immediately
/// below the initial solution's in the per-objective sorted list, or the
/// reference floor when the initial solution is the minimum.
pub fn proposition_thresholds(
    front: &[Solution],
    initial_policy_id: &str,
    l: usize,
    floor: &[f64],
) -> Result<Vec<f64>> {
    let pos = front
        .iter()
        .position(|s| s.policy_id == initial_policy_id)
        .ok_or_else(|| Error::MissingSolution(initial_policy_id.to_string()))?;
    let n = front[pos].returns.len();
    let mut d = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        if i == l {
            continue;
        }
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| {
            front[a].returns[i]
                .total_cmp(&front[b].returns[i])
                .then(a.cmp(&b))
        });
        let rank = order.iter().position(|&j| j == pos).unwrap();
        d[i] = if rank == 0 {
            floor[i]
        } else {
            front[order[rank - 1]].returns[i]
        };
    }
    Ok(d)
}

/// Reference point convention: component-wise minimum over all return
/// vectors, padded down by 5% of the per-component range.
pub fn reference_point(returns: &[Vec<f64>]) -> Vec<f64> {
    assert!(!returns.is_empty());
    let n = returns[0].len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for g in returns {
        for i in 0..n {
            lo[i] = lo[i].min(g[i]);
            hi[i] = hi[i].max(g[i]);
        }
    }
    lo.iter()
        .zip(&hi)
        .map(|(l, h)| {
            let range = h - l;
            let pad = if range > 0.0 {
                0.05 * range
            } else {
                (0.05 * l.abs()).max(1e-6)
            };
            l - pad
        })
        .collect()
}
