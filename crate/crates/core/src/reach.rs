//! Data-driven reach tubes.
//!
//! A per-axis discrepancy bound is learned from how far a training subset
//! strays from the center trajectory, then used to inflate the center into
//! a sequence of boxes. The boxes are checked against held-out trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Aabb, NormalizationBox};

/// Minimum number of training trajectories accepted by [`learn_discrepancy`].
pub const MIN_TRAINING: usize = 5;
/// Seconds per discrepancy segment.
pub const SEGMENT_SECONDS: f64 = 10.0;
/// Additive slack in log space so floating-point rounding never lets the
/// bound dip below a training deviation.
const LOG_SLACK: f64 = 1e-9;

/// One piece of the bound: `r0 * k * exp(gamma * (t - start))` for
/// `t` from `start` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancySegment {
    pub start: f64,
    pub k: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyModel {
    pub axes: [Vec<DiscrepancySegment>; 3],
    /// `r0` per axis, normalized units.
    pub initial_radius: [f64; 3],
    pub floor: [f64; 3],
    pub duration: f64,
}

impl DiscrepancyModel {
    /// Deviation bound on `axis` at time `t` seconds after the horizon start.
    pub fn bound(&self, axis: usize, t: f64) -> f64 {
        let segs = &self.axes[axis];
        let i = segs.partition_point(|s| s.start <= t).saturating_sub(1);
        let s = &segs[i];
        self.initial_radius[axis] * s.k * (s.gamma * (t - s.start)).exp()
    }

    pub fn bounds(&self, t: f64) -> [f64; 3] {
        [self.bound(0, t), self.bound(1, t), self.bound(2, t)]
    }

    /// Copy with every bound multiplied by `factor` (at least 1).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut m = self.clone();
        for a in 0..3 {
            m.initial_radius[a] *= factor.max(1.0);
        }
        m
    }
}

/// Maximum absolute deviation of the training set from the center, per axis
/// and per sample.
pub fn max_deviations(center: &[[f64; 3]], training: &[Vec<[f64; 3]>]) -> Vec<[f64; 3]> {
    (0..center.len())
        .map(|k| {
            let mut d = [0.0f64; 3];
            for tr in training {
                for a in 0..3 {
                    d[a] = d[a].max((tr[k][a] - center[k][a]).abs());
                }
            }
            d
        })
        .collect()
}

fn least_squares(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mt, slope)
}

/// Fits a continuous piecewise-exponential envelope per axis.
///
/// Samples are at whole seconds `0..=duration`. In log space each segment
/// gets a least-squares line that is then lifted until it dominates the
/// segment's data; adjacent segments are joined at the higher of the two
/// lines, which keeps the envelope continuous and still dominating.
pub fn learn_discrepancy(
    center: &[[f64; 3]],
    training: &[Vec<[f64; 3]>],
    initial_radius: [f64; 3],
    floor: [f64; 3],
) -> Result<DiscrepancyModel> {
    if training.len() < MIN_TRAINING {
        return Err(Error::InsufficientData(format!(
            "{} training trajectories, need at least {MIN_TRAINING}",
            training.len()
        )));
    }
    if center.len() < 2 {
        return Err(Error::InsufficientData("center trajectory needs two samples".into()));
    }
    if let Some(i) = training.iter().position(|t| t.len() != center.len()) {
        return Err(Error::Alignment(format!("training trajectory {i} length differs from center")));
    }
    if floor.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::Config("deviation floor must be positive".into()));
    }
    let duration = (center.len() - 1) as f64;
    let n_seg = (duration / SEGMENT_SECONDS).ceil().max(1.0) as usize;
    let seg_len = duration / n_seg as f64;
    let dev = max_deviations(center, training);
    let r0: [f64; 3] = std::array::from_fn(|a| initial_radius[a].max(floor[a]));

    let axes = std::array::from_fn(|a| {
        let y: Vec<f64> = dev.iter().map(|d| (d[a].max(floor[a]) / r0[a]).ln()).collect();
        fit_axis(&y, n_seg, seg_len)
    });
    let mut model = DiscrepancyModel { axes, initial_radius: r0, floor, duration };

    // The construction already dominates; this guards the postcondition
    // against accumulated rounding.
    for a in 0..3 {
        let worst = dev
            .iter()
            .enumerate()
            .map(|(k, d)| (d[a] / model.bound(a, k as f64)).ln())
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > 0.0 {
            for s in &mut model.axes[a] {
                s.k *= (worst + LOG_SLACK).exp();
            }
        }
    }
    Ok(model)
}

fn fit_axis(y: &[f64], n_seg: usize, seg_len: f64) -> Vec<DiscrepancySegment> {
    // (left value, right value) of each lifted line.
    let ends: Vec<(f64, f64)> = (0..n_seg)
        .map(|i| {
            let s = i as f64 * seg_len;
            let e = if i + 1 == n_seg { (y.len() - 1) as f64 } else { (i + 1) as f64 * seg_len };
            let ks = s.ceil() as usize..=(e.floor() as usize);
            let ts: Vec<f64> = ks.clone().map(|k| k as f64 - s).collect();
            let ys: Vec<f64> = ks.map(|k| y[k]).collect();
            let (b, m) = least_squares(&ts, &ys);
            let lift = ts.iter().zip(&ys).map(|(t, v)| v - (b + m * t)).fold(0.0f64, f64::max);
            let b = b + lift + LOG_SLACK;
            (b, b + m * (e - s))
        })
        .collect();
    let mut knots = Vec::with_capacity(n_seg + 1);
    knots.push(ends[0].0);
    for i in 1..n_seg {
        knots.push(ends[i - 1].1.max(ends[i].0));
    }
    knots.push(ends[n_seg - 1].1);
    for v in &mut knots {
        *v = v.max(LOG_SLACK);
    }
    (0..n_seg)
        .map(|i| {
            let start = i as f64 * seg_len;
            let end = if i + 1 == n_seg { (y.len() - 1) as f64 } else { (i + 1) as f64 * seg_len };
            DiscrepancySegment {
                start,
                k: knots[i].exp(),
                gamma: (knots[i + 1] - knots[i]) / (end - start),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachTube {
    /// One box per interval `[t0 + i, t0 + i + 1]`, meters in the local frame.
    pub segments: Vec<Aabb>,
    pub t0: f64,
    pub duration: usize,
}

impl ReachTube {
    /// Box index for a sample `k` seconds after `t0`; the final sample shares
    /// the last interval.
    pub fn segment_index(&self, k: usize) -> usize {
        k.min(self.duration.saturating_sub(1))
    }

    pub fn contains(&self, k: usize, p: &[f64; 3]) -> bool {
        self.segments[self.segment_index(k)].contains(p)
    }
}

/// Inflates consecutive center points by the learned bound and maps the
/// boxes back to meters. `center` is in normalized coordinates.
pub fn compute_reach_tube(
    center: &[[f64; 3]],
    model: &DiscrepancyModel,
    norm_box: &NormalizationBox,
    t0: f64,
) -> Result<ReachTube> {
    let duration = center.len().saturating_sub(1);
    if duration == 0 {
        return Err(Error::InsufficientData("center trajectory needs two samples".into()));
    }
    if model.duration + 1e-9 < duration as f64 {
        return Err(Error::Config(format!(
            "model horizon {} shorter than trajectory duration {duration}",
            model.duration
        )));
    }
    if (0..3).any(|a| norm_box.is_degenerate(a)) {
        return Err(Error::Config("reach tubes need a normalization box with extent on every axis".into()));
    }
    let segments = (0..duration)
        .map(|i| {
            let b0 = model.bounds(i as f64);
            let b1 = model.bounds((i + 1) as f64);
            let r: [f64; 3] = std::array::from_fn(|a| b0[a].max(b1[a]));
            let bx = Aabb::spanning(&center[i], &center[i + 1]).inflated(&r);
            Aabb::new(norm_box.denormalize_point(&bx.min), norm_box.denormalize_point(&bx.max))
        })
        .collect();
    Ok(ReachTube { segments, t0, duration })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub total_points: usize,
    pub included_points: usize,
    pub inclusion_ratio: f64,
    pub pass: bool,
}

/// Counts held-out samples (meters, aligned with the tube) that fall in the
/// box of their interval.
pub fn verify_tube(tube: &ReachTube, holdout: &[Vec<[f64; 3]>], threshold: f64) -> Result<VerificationReport> {
    if holdout.is_empty() {
        return Err(Error::Config("verification needs at least one held-out trajectory".into()));
    }
    let mut total = 0;
    let mut included = 0;
    for tr in holdout {
        if tr.len() != tube.duration + 1 {
            return Err(Error::Alignment(format!(
                "held-out trajectory has {} samples, tube spans {}",
                tr.len(),
                tube.duration + 1
            )));
        }
        for (k, p) in tr.iter().enumerate() {
            total += 1;
            if tube.contains(k, p) {
                included += 1;
            }
        }
    }
    let ratio = included as f64 / total as f64;
    Ok(VerificationReport { total_points: total, included_points: included, inclusion_ratio: ratio, pass: ratio >= threshold })
}

/// Greedy farthest-point selection of `k` rows (excluding `exclude`),
/// after scaling each feature column to unit spread.
pub fn select_spread<const F: usize>(features: &[[f64; F]], k: usize, exclude: usize) -> Vec<usize> {
    let n = features.len();
    let mut scale = [1.0; F];
    for (f, s) in scale.iter_mut().enumerate() {
        let mean = features.iter().map(|r| r[f]).sum::<f64>() / n as f64;
        let sd = (features.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        *s = if sd > 0.0 { 1.0 / sd } else { 0.0 };
    }
    let dist = |i: usize, j: usize| -> f64 {
        (0..F).map(|f| ((features[i][f] - features[j][f]) * scale[f]).powi(2)).sum()
    };
    let candidates: Vec<usize> = (0..n).filter(|&i| i != exclude).collect();
    let k = k.min(candidates.len());
    if k == 0 {
        return Vec::new();
    }
    // Seed with the row farthest from the excluded (center) row.
    let anchor = exclude.min(n - 1);
    let mut best = vec![f64::INFINITY; n];
    let first = *candidates
        .iter()
        .max_by(|&&a, &&b| dist(a, anchor).total_cmp(&dist(b, anchor)).then(b.cmp(&a)))
        .expect("non-empty");
    let mut chosen = vec![first];
    while chosen.len() < k {
        let last = *chosen.last().expect("non-empty");
        for &c in &candidates {
            best[c] = best[c].min(dist(c, last));
        }
        let next = candidates
            .iter()
            .copied()
            .filter(|c| !chosen.contains(c))
            .max_by(|&a, &b| best[a].total_cmp(&best[b]).then(b.cmp(&a)))
            .expect("enough candidates");
        chosen.push(next);
    }
    chosen.sort_unstable();
    chosen
}
