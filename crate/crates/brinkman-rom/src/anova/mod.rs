//! Anchored ANOVA over a black-box parametric evaluator: direction lattice,
//! tensor Gauss-Legendre collocation, term recursion, moment estimation, and
//! adaptive direction selection.
//!
//! Directions are index subsets (0-based internally, 1-based in reports).
//! Collocation points place per-index quadrature nodes on the direction and
//! anchor coordinates elsewhere; deduplication works on exact node indices,
//! never on floating coordinates, so the shared mid node of odd rules
//! collapses onto the anchor exactly.

use crate::linalg::{CsrMatrix, DVec};
use crate::param::ParameterBox;
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

/// A sorted, duplicate-free set of stochastic indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Direction {
    indices: Vec<usize>,
}

impl Direction {
    pub fn empty() -> Self {
        Self { indices: vec![] }
    }

    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidConfig(format!(
                    "direction has duplicate index {}",
                    w[0]
                )));
            }
        }
        Ok(Self { indices })
    }

    pub fn order(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &Direction) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    /// All proper subsets, including the empty direction.
    pub fn proper_subsets(&self) -> Vec<Direction> {
        let k = self.order();
        let mut out = Vec::with_capacity((1usize << k) - 1);
        for mask in 0..(1u32 << k) {
            if mask == (1u32 << k) - 1 {
                continue;
            }
            let indices = (0..k)
                .filter(|&b| mask & (1 << b) != 0)
                .map(|b| self.indices[b])
                .collect();
            out.push(Direction { indices });
        }
        out
    }

    /// Subsets of order exactly `m` (including the direction itself when
    /// m equals its order).
    pub fn subsets_of_order(&self, m: usize) -> Vec<Direction> {
        self.proper_subsets()
            .into_iter()
            .chain(std::iter::once(self.clone()))
            .filter(|d| d.order() == m)
            .collect()
    }

    pub fn union(&self, other: &Direction) -> Direction {
        let mut v = self.indices.clone();
        v.extend(other.indices.iter().copied());
        v.sort_unstable();
        v.dedup();
        Direction { indices: v }
    }

    pub fn intersection(&self, other: &Direction) -> Direction {
        Direction {
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|&i| other.contains(i))
                .collect(),
        }
    }

    pub fn difference(&self, other: &Direction) -> Direction {
        Direction {
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|&i| !other.contains(i))
                .collect(),
        }
    }

    /// Human-readable 1-based rendering, e.g. `{1,5}`.
    pub fn display_one_based(&self) -> String {
        let inner: Vec<String> = self.indices.iter().map(|i| (i + 1).to_string()).collect();
        format!("{{{}}}", inner.join(","))
    }
}

/// Per-index Gauss-Legendre rules on the parameter box. Raw weights sum to
/// the interval length; probabilistic weights (divided by the measure) are
/// what the moment estimators use, making the estimate a mean under the
/// uniform law.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub p: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub probabilistic_weights: Vec<Vec<f64>>,
}

impl QuadratureRule {
    pub fn tensor(parameter_box: &ParameterBox, p: usize) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut probabilistic = Vec::new();
        for &(a, b) in &parameter_box.intervals {
            let (x, w) = gauss_legendre(p, a, b);
            let measure = b - a;
            probabilistic.push(w.iter().map(|wi| wi / measure).collect());
            nodes.push(x);
            weights.push(w);
        }
        Self {
            p,
            nodes,
            weights,
            probabilistic_weights: probabilistic,
        }
    }

    pub fn dimension(&self) -> usize {
        self.nodes.len()
    }

    /// Node index that coincides with the interval midpoint (odd rules).
    fn center_node(&self) -> Option<u16> {
        if self.p % 2 == 1 {
            Some((self.p / 2) as u16)
        } else {
            None
        }
    }
}

/// Canonical collocation-point key: (index, node) pairs with anchor-valued
/// entries removed. Exact by construction, no floating comparisons.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointKey(Vec<(u16, u16)>);

/// Field pair carried through the decomposition (velocity-like and
/// pressure-like components; either may be empty for scalar toys).
#[derive(Debug, Clone)]
pub struct Fields {
    pub u: DVec,
    pub p: DVec,
}

impl Fields {
    pub fn zeros_like(other: &Fields) -> Fields {
        Fields {
            u: DVec::zeros(other.u.len()),
            p: DVec::zeros(other.p.len()),
        }
    }

    pub fn scalar(value: f64) -> Fields {
        Fields {
            u: DVec::from_vec(vec![value]),
            p: DVec::zeros(0),
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &Fields) {
        self.u.axpy(alpha, &other.u, 1.0);
        self.p.axpy(alpha, &other.p, 1.0);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.u *= alpha;
        self.p *= alpha;
    }

    fn mul_elementwise_accumulate(acc: &mut Fields, a: &Fields, b: &Fields, scale: f64) {
        for i in 0..acc.u.len() {
            acc.u[i] += scale * a.u[i] * b.u[i];
        }
        for i in 0..acc.p.len() {
            acc.p[i] += scale * a.p[i] * b.p[i];
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mu = if self.u.len() > 0 {
            self.u.abs().max()
        } else {
            0.0
        };
        let mp = if self.p.len() > 0 {
            self.p.abs().max()
        } else {
            0.0
        };
        mu.max(mp)
    }
}

/// Black-box parametric solution evaluator.
pub trait SolutionEvaluator: Sync {
    fn evaluate(&self, xi: &[f64]) -> Result<Fields>;
}

impl<F> SolutionEvaluator for F
where
    F: Fn(&[f64]) -> Result<Fields> + Sync,
{
    fn evaluate(&self, xi: &[f64]) -> Result<Fields> {
        self(xi)
    }
}

/// Gram matrices for the indicator norms; `None` falls back to the Euclidean
/// norm (scalar toys).
#[derive(Clone, Copy, Default)]
pub struct NormPair<'a> {
    pub gram_u: Option<&'a CsrMatrix>,
    pub gram_p: Option<&'a CsrMatrix>,
}

impl NormPair<'_> {
    pub fn norms(&self, f: &Fields) -> (f64, f64) {
        let nu = match self.gram_u {
            Some(g) => g.bilinear(&f.u, &f.u).max(0.0).sqrt(),
            None => f.u.norm(),
        };
        let np = match self.gram_p {
            Some(g) => g.bilinear(&f.p, &f.p).max(0.0).sqrt(),
            None => f.p.norm(),
        };
        (nu, np)
    }
}

/// Anchored-ANOVA working state: active/effective direction sets per order,
/// per-direction term values on their tensor grids, the deduplicated solution
/// cache, and the moment accumulators derived from them.
pub struct AnovaState {
    pub anchor: Vec<f64>,
    pub rule: QuadratureRule,
    /// active directions, grouped by order (index 0 holds the empty
    /// direction)
    pub active: Vec<Vec<Direction>>,
    /// effective directions by order (filled by `select_next_level`)
    pub effective: Vec<Vec<Direction>>,
    terms: HashMap<Direction, HashMap<Vec<u16>, Fields>>,
    term_means: HashMap<Direction, Fields>,
    cache: HashMap<PointKey, Fields>,
    pub evaluations: usize,
}

impl AnovaState {
    pub fn new(anchor: Vec<f64>, rule: QuadratureRule) -> Self {
        assert_eq!(anchor.len(), rule.dimension());
        Self {
            anchor,
            rule,
            active: vec![vec![Direction::empty()]],
            effective: vec![vec![Direction::empty()]],
            terms: HashMap::new(),
            term_means: HashMap::new(),
            cache: HashMap::new(),
            evaluations: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.anchor.len()
    }

    /// Canonical key of the anchor itself (the empty direction's only grid
    /// point).
    pub fn anchor_key(&self) -> PointKey {
        self.point_key(&Direction::empty(), &[])
    }

    /// Activate all directions of each order up to `level`.
    pub fn activate_up_to(&mut self, level: usize) {
        for l in 1..=level {
            let dirs = enumerate_directions(self.dimension(), l);
            self.set_active(l, dirs);
        }
    }

    pub fn set_active(&mut self, order: usize, dirs: Vec<Direction>) {
        while self.active.len() <= order {
            self.active.push(Vec::new());
        }
        self.active[order] = dirs;
    }

    /// All currently active directions of every order, empty direction first.
    pub fn active_directions(&self) -> Vec<Direction> {
        self.active.iter().flatten().cloned().collect()
    }

    /// The canonical key of a grid point of `direction` with per-component
    /// node indices `multi`.
    fn point_key(&self, direction: &Direction, multi: &[u16]) -> PointKey {
        let center = self.rule.center_node();
        let pairs = direction
            .indices()
            .iter()
            .zip(multi)
            .filter(|&(_, &j)| Some(j) != center)
            .map(|(&m, &j)| (m as u16, j))
            .collect();
        PointKey(pairs)
    }

    /// Full parameter vector of a grid point.
    fn point_coordinates(&self, direction: &Direction, multi: &[u16]) -> Vec<f64> {
        let mut xi = self.anchor.clone();
        for (&m, &j) in direction.indices().iter().zip(multi) {
            xi[m] = self.rule.nodes[m][j as usize];
        }
        xi
    }

    /// Probabilistic weight of a grid point.
    fn point_weight(&self, direction: &Direction, multi: &[u16]) -> f64 {
        direction
            .indices()
            .iter()
            .zip(multi)
            .map(|(&m, &j)| self.rule.probabilistic_weights[m][j as usize])
            .product()
    }

    /// All multi-indices of the tensor grid of a direction.
    fn grid_multi_indices(&self, direction: &Direction) -> Vec<Vec<u16>> {
        let k = direction.order();
        let p = self.rule.p as u16;
        let mut out = Vec::with_capacity((p as usize).pow(k as u32));
        let mut multi = vec![0u16; k];
        loop {
            out.push(multi.clone());
            let mut pos = k;
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                multi[pos] += 1;
                if multi[pos] < p {
                    break;
                }
                multi[pos] = 0;
            }
        }
    }

    /// Unique collocation points required by the active directions that are
    /// not yet in the solution cache.
    pub fn missing_points(&self) -> Vec<(PointKey, Vec<f64>)> {
        let mut seen: HashMap<PointKey, Vec<f64>> = HashMap::new();
        for direction in self.active_directions() {
            for multi in self.grid_multi_indices(&direction) {
                let key = self.point_key(&direction, &multi);
                if !self.cache.contains_key(&key) {
                    seen.entry(key)
                        .or_insert_with(|| self.point_coordinates(&direction, &multi));
                }
            }
        }
        let mut out: Vec<(PointKey, Vec<f64>)> = seen.into_iter().collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Unique collocation points of the active lattice (cached or not).
    pub fn lattice_points(&self) -> Vec<(PointKey, Vec<f64>)> {
        let mut seen: HashMap<PointKey, Vec<f64>> = HashMap::new();
        for direction in self.active_directions() {
            for multi in self.grid_multi_indices(&direction) {
                let key = self.point_key(&direction, &multi);
                seen.entry(key)
                    .or_insert_with(|| self.point_coordinates(&direction, &multi));
            }
        }
        let mut out: Vec<(PointKey, Vec<f64>)> = seen.into_iter().collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn unique_point_count(&self) -> usize {
        self.lattice_points().len()
    }

    /// Evaluate the black box at every missing collocation point (parallel,
    /// deterministic insertion order). Returns the number of new evaluations.
    pub fn evaluate_missing(&mut self, evaluator: &dyn SolutionEvaluator) -> Result<usize> {
        let missing = self.missing_points();
        let results: Vec<(PointKey, Fields)> = missing
            .par_iter()
            .map(|(key, xi)| Ok((key.clone(), evaluator.evaluate(xi)?)))
            .collect::<Result<Vec<_>>>()?;
        let count = results.len();
        for (key, fields) in results {
            self.cache.insert(key, fields);
        }
        self.evaluations += count;
        Ok(count)
    }

    /// Drop all cached solutions and derived terms (the evaluator changed,
    /// e.g. the reduced basis was extended).
    pub fn invalidate_solutions(&mut self) {
        self.cache.clear();
        self.terms.clear();
        self.term_means.clear();
    }

    /// Recompute term values and means for every active direction, in order
    /// of increasing direction order (the recursion needs subterms first).
    pub fn recompute_terms(&mut self) -> Result<()> {
        self.terms.clear();
        self.term_means.clear();
        let mut directions = self.active_directions();
        directions.sort_by_key(|d| (d.order(), d.clone()));
        for direction in directions {
            self.compute_term(&direction)?;
        }
        Ok(())
    }

    fn compute_term(&mut self, direction: &Direction) -> Result<()> {
        let subsets = direction.proper_subsets();
        let mut grid = HashMap::new();
        for multi in self.grid_multi_indices(direction) {
            let key = self.point_key(direction, &multi);
            let base = self
                .cache
                .get(&key)
                .ok_or_else(|| Error::MissingSubterm(direction.indices().to_vec()))?;
            let mut value = base.clone();
            for s in &subsets {
                // positions of s's indices within this direction
                let restricted: Vec<u16> = s
                    .indices()
                    .iter()
                    .map(|&m| {
                        let pos = direction.indices().iter().position(|&d| d == m).unwrap();
                        multi[pos]
                    })
                    .collect();
                let sub = self
                    .terms
                    .get(s)
                    .and_then(|g| g.get(&restricted))
                    .ok_or_else(|| Error::MissingSubterm(s.indices().to_vec()))?;
                value.axpy(-1.0, sub);
            }
            grid.insert(multi, value);
        }
        // collocation mean with probabilistic weights, summed in a fixed
        // order for reproducibility
        let mut multis: Vec<&Vec<u16>> = grid.keys().collect();
        multis.sort();
        let mut mean: Option<Fields> = None;
        for multi in multis {
            let value = &grid[multi];
            let w = self.point_weight(direction, multi);
            match &mut mean {
                None => {
                    let mut m = value.clone();
                    m.scale(w);
                    mean = Some(m);
                }
                Some(m) => m.axpy(w, value),
            }
        }
        let mean = mean.expect("grid is never empty");
        self.terms.insert(direction.clone(), grid);
        self.term_means.insert(direction.clone(), mean);
        Ok(())
    }

    /// Term values at the grid points (available after `recompute_terms`).
    pub fn term_grid(&self, direction: &Direction) -> Option<&HashMap<Vec<u16>, Fields>> {
        self.terms.get(direction)
    }

    /// Collocation mean of one term.
    pub fn term_mean(&self, direction: &Direction) -> Option<&Fields> {
        self.term_means.get(direction)
    }

    /// Mean estimate: sum of the term means over all active directions.
    pub fn mean(&self) -> Result<Fields> {
        let mut acc: Option<Fields> = None;
        for direction in self.active_directions() {
            let mean = self
                .term_means
                .get(&direction)
                .ok_or_else(|| Error::MissingSubterm(direction.indices().to_vec()))?;
            match &mut acc {
                None => acc = Some(mean.clone()),
                Some(a) => a.axpy(1.0, mean),
            }
        }
        Ok(acc.expect("the empty direction is always active"))
    }

    /// Covariance of two (centered) terms via the intersection partition:
    /// the outer sum runs over the grid of the shared indices, each factor is
    /// the weighted partial sum over its private indices.
    pub fn covariance(&self, s: &Direction, t: &Direction) -> Result<Fields> {
        let zs = self.centered_partial_sums(s, &s.intersection(t))?;
        let zt = self.centered_partial_sums(t, &t.intersection(s))?;
        let common = s.intersection(t);
        let mut acc: Option<Fields> = None;
        for multi in self.grid_multi_indices(&common) {
            let w = self.point_weight(&common, &multi);
            let a = &zs[&multi];
            let b = &zt[&multi];
            let scale = 1.0 / w;
            match &mut acc {
                None => {
                    let mut z = Fields::zeros_like(a);
                    Fields::mul_elementwise_accumulate(&mut z, a, b, scale);
                    acc = Some(z);
                }
                Some(z) => Fields::mul_elementwise_accumulate(z, a, b, scale),
            }
        }
        Ok(acc.expect("intersection grid is never empty"))
    }

    /// Z_{d \ common}: for each grid point of `common`, the weighted sum of
    /// the centered term over the grid points of `d` that restrict to it.
    fn centered_partial_sums(
        &self,
        d: &Direction,
        common: &Direction,
    ) -> Result<HashMap<Vec<u16>, Fields>> {
        let grid = self
            .terms
            .get(d)
            .ok_or_else(|| Error::MissingSubterm(d.indices().to_vec()))?;
        let mean = &self.term_means[d];
        let positions: Vec<usize> = common
            .indices()
            .iter()
            .map(|&m| d.indices().iter().position(|&k| k == m).unwrap())
            .collect();
        let mut out: HashMap<Vec<u16>, Fields> = HashMap::new();
        let mut multis: Vec<&Vec<u16>> = grid.keys().collect();
        multis.sort();
        for multi in multis {
            let value = &grid[multi];
            let w = self.point_weight(d, multi);
            let restricted: Vec<u16> = positions.iter().map(|&p| multi[p]).collect();
            let mut centered = value.clone();
            centered.axpy(-1.0, mean);
            match out.get_mut(&restricted) {
                Some(acc) => acc.axpy(w, &centered),
                None => {
                    let mut acc = Fields::zeros_like(&centered);
                    acc.axpy(w, &centered);
                    out.insert(restricted, acc);
                }
            }
        }
        Ok(out)
    }

    /// Variance estimate: sum of covariances over all pairs of nonempty
    /// active directions. Disjoint pairs contribute exactly zero (each factor
    /// is a full centered sum) and are skipped.
    pub fn variance(&self) -> Result<Fields> {
        let directions: Vec<Direction> = self
            .active_directions()
            .into_iter()
            .filter(|d| d.order() > 0)
            .collect();
        let template = self
            .term_means
            .get(&Direction::empty())
            .ok_or_else(|| Error::MissingSubterm(vec![]))?;
        let mut acc = Fields::zeros_like(template);
        for (i, s) in directions.iter().enumerate() {
            for t in directions.iter().skip(i) {
                if s != t && s.intersection(t).order() == 0 {
                    continue;
                }
                let cov = self.covariance(s, t)?;
                let factor = if s == t { 1.0 } else { 2.0 };
                acc.axpy(factor, &cov);
            }
        }
        Ok(acc)
    }

    /// Mean-contribution indicator of a direction: the norm of its term mean
    /// relative to the norm of the summed lower-order term means. Returns
    /// infinity on a degenerate zero denominator (direction kept active).
    pub fn indicator(&self, direction: &Direction, norms: &NormPair) -> Result<f64> {
        let mean = self
            .term_means
            .get(direction)
            .ok_or_else(|| Error::MissingSubterm(direction.indices().to_vec()))?;
        let (nu, np) = norms.norms(mean);
        let mut lower: Option<Fields> = None;
        for d in self.active_directions() {
            if d.order() >= direction.order() {
                continue;
            }
            let m = self
                .term_means
                .get(&d)
                .ok_or_else(|| Error::MissingSubterm(d.indices().to_vec()))?;
            match &mut lower {
                None => lower = Some(m.clone()),
                Some(acc) => acc.axpy(1.0, m),
            }
        }
        let denom = match lower {
            Some(acc) => {
                let (du, dp) = norms.norms(&acc);
                du + dp
            }
            None => 0.0,
        };
        if denom == 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok((nu + np) / denom)
    }

    /// Apply the effectiveness filter at order `level` and build the
    /// next-level active set: directions of order level+1 all of whose
    /// order-`level` subsets are effective.
    pub fn select_next_level(
        &mut self,
        level: usize,
        eps: f64,
        norms: &NormPair,
    ) -> Result<Vec<Direction>> {
        let current: Vec<Direction> = self.active.get(level).cloned().unwrap_or_default();
        let mut effective = Vec::new();
        for d in &current {
            if self.indicator(d, norms)? > eps {
                effective.push(d.clone());
            }
        }
        while self.effective.len() <= level {
            self.effective.push(Vec::new());
        }
        self.effective[level] = effective.clone();
        Ok(next_level_from_effective(
            &effective,
            self.dimension(),
            level,
        ))
    }
}

/// All directions of a given order over `dim` indices.
pub fn enumerate_directions(dim: usize, order: usize) -> Vec<Direction> {
    if order == 0 {
        return vec![Direction::empty()];
    }
    let mut out = Vec::new();
    if order > dim {
        return out;
    }
    let mut combo: Vec<usize> = (0..order).collect();
    loop {
        out.push(Direction {
            indices: combo.clone(),
        });
        let mut i = order;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] < dim - (order - i) {
                combo[i] += 1;
                for j in (i + 1)..order {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Next-level candidates: every order-(level+1) direction whose order-level
/// subsets are all effective.
pub fn next_level_from_effective(
    effective: &[Direction],
    dim: usize,
    level: usize,
) -> Vec<Direction> {
    let mut candidates: Vec<Direction> = Vec::new();
    for d in effective {
        for m in 0..dim {
            if !d.contains(m) {
                let mut idx = d.indices().to_vec();
                idx.push(m);
                idx.sort_unstable();
                let cand = Direction { indices: idx };
                if !candidates.contains(&cand) {
                    candidates.push(cand);
                }
            }
        }
    }
    candidates.retain(|cand| {
        cand.subsets_of_order(level)
            .iter()
            .all(|s| effective.contains(s))
    });
    candidates.sort();
    candidates
}

/// One row of the per-level collocation report.
#[derive(Debug, Clone)]
pub struct AnovaReportRow {
    pub level: usize,
    pub direction: String,
    pub indicator: f64,
    pub points: usize,
    pub cumulative_points: usize,
}

/// Per-level report CSV: direction, indicator, point counts.
pub fn write_anova_report(path: &Path, rows: &[AnovaReportRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    writeln!(out, "level,direction,indicator,points,cumulative_points").map_err(io_err)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.level,
            r.direction,
            crate::fem::fmt17(r.indicator),
            r.points,
            r.cumulative_points
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests;
