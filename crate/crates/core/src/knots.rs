//! Knot placement from calling output.
//!
//! Method I puts each knot halfway between the largest segmented value of a
//! state and the smallest value of the next state. Method II maximises the
//! summed membership probability of the side each sample falls on.

use std::fmt;
use std::str::FromStr;

use crate::error::{PlrsError, Result};
use crate::spline::{check_contiguous, state_column, states_present, GeneRecord, KnotSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnotMethod {
    /// Midpoints between hard-called states.
    #[default]
    Midpoint,
    /// Maximum summed membership probability.
    Probability,
}

impl FromStr for KnotMethod {
    type Err = PlrsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "I" | "midpoint" => Ok(KnotMethod::Midpoint),
            "2" | "II" | "probability" => Ok(KnotMethod::Probability),
            other => Err(PlrsError::InvalidInput(format!("unknown knot method {other:?} (expected 1 or 2)"))),
        }
    }
}

impl fmt::Display for KnotMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnotMethod::Midpoint => "1",
            KnotMethod::Probability => "2",
        })
    }
}

pub fn knots_method1(x: &[f64], s: &[i8]) -> Result<KnotSet> {
    if x.len() != s.len() {
        return Err(PlrsError::DimensionMismatch { what: "states", expected: x.len(), found: s.len() });
    }
    let present = states_present(s);
    if present.is_empty() {
        return Err(PlrsError::InvalidInput("no observations".into()));
    }
    check_contiguous(&present)?;
    let mut knots = Vec::with_capacity(present.len() - 1);
    for pair in present.windows(2) {
        let (lo, up) = (pair[0], pair[1]);
        let (imax, xmax) = extreme(x, s, lo, |a, b| a > b);
        let (imin, xmin) = extreme(x, s, up, |a, b| a < b);
        if xmax >= xmin {
            return Err(PlrsError::OrderingViolation {
                lower_index: imax,
                upper_index: imin,
                lower_x: xmax,
                upper_x: xmin,
                lower_state: lo,
                upper_state: up,
            });
        }
        knots.push(0.5 * (xmax + xmin));
    }
    KnotSet::new(knots, present)
}

fn extreme(x: &[f64], s: &[i8], state: i8, better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&xi, &si)) in x.iter().zip(s).enumerate() {
        if si == state && best.is_none_or(|(_, b)| better(xi, b)) {
            best = Some((i, xi));
        }
    }
    best.expect("state is present")
}

pub fn knots_method2(x: &[f64], callprobs: &[[f64; 4]], states_present: &[i8]) -> Result<KnotSet> {
    let groups: Vec<Vec<i8>> = states_present.iter().map(|s| vec![*s]).collect();
    let labels = states_present.to_vec();
    knots_method2_grouped(x, callprobs, &groups, labels)
}

/// Method II where each segment may pool several merged states; a segment's
/// probability is the sum over its member states.
pub(crate) fn knots_method2_grouped(
    x: &[f64],
    callprobs: &[[f64; 4]],
    groups: &[Vec<i8>],
    labels: Vec<i8>,
) -> Result<KnotSet> {
    if callprobs.len() != x.len() {
        return Err(PlrsError::DimensionMismatch { what: "callprobs", expected: x.len(), found: callprobs.len() });
    }
    if groups.is_empty() {
        return Err(PlrsError::InvalidInput("no states".into()));
    }
    let flat: Vec<i8> = groups.iter().flatten().copied().collect();
    check_contiguous(&flat)?;
    let cols: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| g.iter().map(|s| state_column(*s).expect("valid state code")).collect())
        .collect();
    let group_prob = |i: usize, g: usize| -> f64 { cols[g].iter().map(|&c| callprobs[i][c]).sum() };
    let hard: Vec<usize> = (0..x.len())
        .map(|i| {
            (0..groups.len())
                .fold((0, f64::NEG_INFINITY), |best, g| {
                    let p = group_prob(i, g);
                    if p > best.1 {
                        (g, p)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect();

    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut values: Vec<f64> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        if values.last() == Some(&x[i]) {
            members.last_mut().unwrap().push(i);
        } else {
            values.push(x[i]);
            members.push(vec![i]);
        }
    }

    let mut knots = Vec::with_capacity(groups.len() - 1);
    for b in 0..groups.len() - 1 {
        let lower: Vec<f64> = members.iter().map(|m| m.iter().map(|&i| group_prob(i, b)).sum()).collect();
        let upper: Vec<f64> = members.iter().map(|m| m.iter().map(|&i| group_prob(i, b + 1)).sum()).collect();
        let reference = hard_call_midpoint(x, &hard, b, &values);
        knots.push(best_cut(&values, &lower, &upper, reference));
    }
    KnotSet::new(knots, labels)
}

fn hard_call_midpoint(x: &[f64], hard: &[usize], b: usize, values: &[f64]) -> f64 {
    let lo = x.iter().zip(hard).filter(|(_, h)| **h == b).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let up = x.iter().zip(hard).filter(|(_, h)| **h == b + 1).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    if lo.is_finite() && up.is_finite() {
        0.5 * (lo + up)
    } else {
        0.5 * (values[0] + values[values.len() - 1])
    }
}

/// Exhaustive scan over the `m + 1` cut positions between distinct sorted
/// covariate values; returns the midpoint of the maximising interval.
fn best_cut(values: &[f64], lower: &[f64], upper: &[f64], reference: f64) -> f64 {
    let m = values.len();
    let mut objective = Vec::with_capacity(m + 1);
    let mut acc: f64 = upper.iter().sum();
    objective.push(acc);
    for t in 0..m {
        acc += lower[t] - upper[t];
        objective.push(acc);
    }
    let best = objective.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + best.abs());

    // Maximal runs of consecutive optimal cuts.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (t, &v) in objective.iter().enumerate() {
        if v >= best - tol {
            match runs.last_mut() {
                Some(run) if run.1 + 1 == t => run.1 = t,
                _ => runs.push((t, t)),
            }
        }
    }
    let midpoint = |(a, b): (usize, usize)| {
        let left = values[a.max(1) - 1];
        let right = values[(b + 1).min(m) - 1];
        0.5 * (left + right)
    };
    runs.into_iter()
        .map(midpoint)
        .fold(None, |best: Option<f64>, mid| match best {
            Some(b) if (b - reference).abs() <= (mid - reference).abs() => Some(b),
            _ => Some(mid),
        })
        .expect("at least one cut is optimal")
}

/// Result of pooling sparsely populated states into their neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMerge {
    /// Relabelled states, one per observation.
    pub s: Vec<i8>,
    /// Member state codes of each resulting segment, in order.
    pub groups: Vec<Vec<i8>>,
    /// Label of each resulting segment.
    pub labels: Vec<i8>,
    pub merged: bool,
}

/// Merges states with fewer than `min_obs` observations into the adjacent
/// state with the smaller covariate gap, which removes the separating knot.
/// A segment containing the normal state keeps the normal label.
pub fn merge_sparse_states(x: &[f64], s: &[i8], min_obs: usize) -> Result<StateMerge> {
    let present = states_present(s);
    check_contiguous(&present)?;
    struct Group {
        label: i8,
        codes: Vec<i8>,
        lo: f64,
        hi: f64,
        count: usize,
    }
    let mut groups: Vec<Group> = present
        .iter()
        .map(|&st| {
            let xs = x.iter().zip(s).filter(|(_, si)| **si == st).map(|(v, _)| *v);
            let (lo, hi, count) =
                xs.fold((f64::INFINITY, f64::NEG_INFINITY, 0), |(lo, hi, c), v| (lo.min(v), hi.max(v), c + 1));
            Group { label: st, codes: vec![st], lo, hi, count }
        })
        .collect();
    let mut merged = false;
    while groups.len() > 1 {
        let Some(g) = (0..groups.len())
            .filter(|&i| groups[i].count < min_obs)
            .min_by_key(|&i| groups[i].count)
        else {
            break;
        };
        let target = if g == 0 {
            1
        } else if g + 1 == groups.len() {
            g - 1
        } else {
            let left_gap = groups[g].lo - groups[g - 1].hi;
            let right_gap = groups[g + 1].lo - groups[g].hi;
            if left_gap < right_gap
                || (left_gap == right_gap && groups[g - 1].label.unsigned_abs() <= groups[g + 1].label.unsigned_abs())
            {
                g - 1
            } else {
                g + 1
            }
        };
        let small = groups.remove(g);
        let t = if target > g { target - 1 } else { target };
        let dst = &mut groups[t];
        if small.label == 0 {
            dst.label = 0;
        }
        dst.lo = dst.lo.min(small.lo);
        dst.hi = dst.hi.max(small.hi);
        dst.count += small.count;
        dst.codes.extend(small.codes);
        dst.codes.sort_unstable();
        merged = true;
    }
    let relabel = |st: i8| groups.iter().find(|g| g.codes.contains(&st)).map(|g| g.label).expect("state present");
    Ok(StateMerge {
        s: s.iter().map(|&st| relabel(st)).collect(),
        groups: groups.iter().map(|g| g.codes.clone()).collect(),
        labels: groups.iter().map(|g| g.label).collect(),
        merged,
    })
}

/// Knots for a gene after merging sparse states.
pub fn estimate_knots(record: &GeneRecord, method: KnotMethod, min_obs: usize) -> Result<(KnotSet, StateMerge)> {
    let merge = merge_sparse_states(&record.x, &record.s, min_obs)?;
    let knots = match method {
        KnotMethod::Midpoint => knots_method1(&record.x, &merge.s)?,
        KnotMethod::Probability => {
            let probs = record.callprobs.as_ref().ok_or(PlrsError::MissingProbabilities)?;
            knots_method2_grouped(&record.x, probs, &merge.groups, merge.labels.clone())?
        }
    };
    Ok((knots, merge))
}
