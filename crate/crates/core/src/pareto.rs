//! Two-objective Pareto tools: non-dominated filtering, selection of a fixed
//! number of optimal points, and the 2-D hypervolume.
//!
//! Both objectives are minimized.

use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub objectives: [f64; 2],
    /// Index of the originating item (trace step, sample, ...).
    pub payload: usize,
}

impl FrontPoint {
    pub fn new(objectives: [f64; 2], payload: usize) -> Self {
        Self {
            objectives,
            payload,
        }
    }

    /// `self` is no worse on both objectives and differs somewhere.
    pub fn dominates(&self, other: &Self) -> bool {
        let [a1, a2] = self.objectives;
        let [b1, b2] = other.objectives;
        a1 <= b1 && a2 <= b2 && (a1 != b1 || a2 != b2)
    }
}

fn total_order(a: &FrontPoint, b: &FrontPoint) -> Ordering {
    a.objectives[0]
        .total_cmp(&b.objectives[0])
        .then(a.objectives[1].total_cmp(&b.objectives[1]))
        .then(a.payload.cmp(&b.payload))
}

/// Non-dominated subset, sorted by the first objective. Exact duplicates
/// collapse to the one with the lowest payload.
pub fn pareto_front(points: &[FrontPoint]) -> Vec<FrontPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(total_order);
    let mut front = Vec::new();
    let mut best_second = f64::INFINITY;
    for p in sorted {
        if p.objectives[1] < best_second {
            best_second = p.objectives[1];
            front.push(p);
        }
    }
    front
}

/// Partitions points into successive non-dominated fronts.
pub fn peel_fronts(points: &[FrontPoint]) -> Vec<Vec<FrontPoint>> {
    let mut remaining = points.to_vec();
    remaining.sort_by(total_order);
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front = pareto_front(&remaining);
        // Duplicates of a front member are not part of the front; they belong
        // to a later one.
        let mut taken = alloc::vec![false; remaining.len()];
        let mut fi = 0;
        for (i, p) in remaining.iter().enumerate() {
            if fi < front.len() && total_order(p, &front[fi]) == Ordering::Equal {
                taken[i] = true;
                fi += 1;
            }
        }
        remaining = remaining
            .into_iter()
            .zip(taken)
            .filter(|(_, t)| !t)
            .map(|(p, _)| p)
            .collect();
        fronts.push(front);
    }
    fronts
}

/// Picks `k` points spread evenly by rank along a front sorted by the first
/// objective: indices `round(i·(n−1)/(k−1))`, deduplicated, then backfilled
/// with the lowest unused indices.
fn spread_pick(front: &[FrontPoint], k: usize) -> Vec<FrontPoint> {
    let n = front.len();
    if k >= n {
        return front.to_vec();
    }
    let mut used = alloc::vec![false; n];
    let mut order = Vec::with_capacity(k);
    for i in 0..k {
        let idx = if k == 1 {
            0
        } else {
            math::round(i as f64 * (n - 1) as f64 / (k - 1) as f64) as usize
        };
        if !used[idx] {
            used[idx] = true;
            order.push(idx);
        }
    }
    let mut fill = 0;
    while order.len() < k {
        if !used[fill] {
            used[fill] = true;
            order.push(fill);
        }
        fill += 1;
    }
    order.sort_unstable();
    order.into_iter().map(|i| front[i]).collect()
}

/// Exactly `k` points: spread along the first front, or the whole first front
/// topped up from successive fronts when it is too small.
pub fn select_k(points: &[FrontPoint], k: usize) -> Result<Vec<FrontPoint>> {
    if points.len() < k {
        return Err(Error::InsufficientPoints {
            needed: k,
            available: points.len(),
        });
    }
    let mut out = Vec::with_capacity(k);
    for front in peel_fronts(points) {
        let need = k - out.len();
        if need == 0 {
            break;
        }
        out.extend(spread_pick(&front, need));
    }
    Ok(out)
}

/// Area dominated by the points and bounded by `reference`. Points that do
/// not strictly dominate the reference are ignored.
pub fn hypervolume_2d(points: &[FrontPoint], reference: [f64; 2]) -> f64 {
    let inside: Vec<FrontPoint> = points
        .iter()
        .filter(|p| {
            let ok = p.objectives[0] < reference[0] && p.objectives[1] < reference[1];
            if !ok {
                log::warn!(
                    "point {:?} does not dominate the reference {:?}; dropped",
                    p.objectives,
                    reference
                );
            }
            ok
        })
        .copied()
        .collect();
    let front = pareto_front(&inside);
    let mut area = 0.0;
    for (i, p) in front.iter().enumerate() {
        let right = front.get(i + 1).map_or(reference[0], |q| q.objectives[0]);
        area += (right - p.objectives[0]) * (reference[1] - p.objectives[1]);
    }
    area
}

/// Shared reference point for comparing several sets: the componentwise
/// maximum over all of them, pushed outward by 10 % of its magnitude (by 0.1
/// on an axis whose maximum is exactly zero).
pub fn common_reference_point(sets: &[&[FrontPoint]]) -> Result<[f64; 2]> {
    common_reference_point_with_margin(sets, 1.1)
}

pub fn common_reference_point_with_margin(sets: &[&[FrontPoint]], factor: f64) -> Result<[f64; 2]> {
    let mut max = [f64::NEG_INFINITY; 2];
    for p in sets.iter().flat_map(|s| s.iter()) {
        for axis in 0..2 {
            max[axis] = max[axis].max(p.objectives[axis]);
        }
    }
    if max[0] == f64::NEG_INFINITY {
        return Err(Error::InsufficientPoints {
            needed: 1,
            available: 0,
        });
    }
    Ok(max.map(|m| {
        if m == 0.0 {
            factor - 1.0
        } else {
            m + m.abs() * (factor - 1.0)
        }
    }))
}
