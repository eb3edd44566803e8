//! Comparison algorithms driven by a bandwidth estimate `w_p` (Mbit/s).
//!
//! All functions here are pure: they map the estimate, the buffer and the
//! view probabilities of one chunk to a [`DecisionVector`].

use serde::{Deserialize, Serialize};

use crate::bola::DecisionVector;
use crate::media::BitrateLadder;

/// Exact enumeration is used while `(M + 1)^D` stays below this.
pub const DP_ON_ENUMERATION_CAP: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpOnParams {
    pub gamma: f64,
    /// Per-tile penalty weight, scaled by the tile's probability. Zero by default.
    #[serde(default)]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbDashParams {
    /// Target buffered video, seconds.
    pub target: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl Default for ProbDashParams {
    fn default() -> Self {
        ProbDashParams {
            target: 10.0,
            min_ratio: 0.25,
            max_ratio: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalientParams {
    /// Buffered seconds kept in reserve; defaults to one chunk duration.
    pub reserve: f64,
}

fn tile_value(gamma: f64, beta: f64, chunk_duration: f64, utility: f64, p: f64) -> f64 {
    gamma * chunk_duration + utility * p - p * beta
}

/// Estimated QoE rate of downloading `decision` at `w_p`; `None` for an
/// empty decision.
pub fn dp_on_reward(
    decision: &DecisionVector,
    w_p: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    chunk_duration: f64,
    params: &DpOnParams,
) -> Option<f64> {
    let mut value = 0.0;
    let mut size = 0.0;
    for (c, &p) in decision.tiles().iter().zip(probs) {
        if let Some(m) = *c {
            let l = ladder.level(m);
            value += tile_value(params.gamma, params.beta, chunk_duration, l.utility, p);
            size += l.size;
        }
    }
    (size > 0.0).then(|| value * w_p / size)
}

/// Greedy one-step QoE maximiser. Enumerates every decision vector when
/// `(M + 1)^D` is under [`DP_ON_ENUMERATION_CAP`]; otherwise solves the same
/// ratio maximisation by Dinkelbach iteration, which is exact because the
/// parametric subproblem separates per tile.
pub fn dp_on_decide(
    w_p: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    chunk_duration: f64,
    params: &DpOnParams,
) -> DecisionVector {
    let options = ladder.len() as u64 + 1;
    let within_cap = options
        .checked_pow(probs.len() as u32)
        .is_some_and(|n| n <= DP_ON_ENUMERATION_CAP);
    if within_cap {
        dp_on_enumerate(w_p, probs, ladder, chunk_duration, params)
    } else {
        dp_on_fractional(probs, ladder, chunk_duration, params)
    }
}

pub(crate) fn dp_on_enumerate(
    w_p: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    chunk_duration: f64,
    params: &DpOnParams,
) -> DecisionVector {
    let d = probs.len();
    let m = ladder.len();
    let mut idx = vec![0usize; d];
    let mut best: Option<(f64, DecisionVector)> = None;
    loop {
        // Odometer increment, last tile fastest.
        let mut pos = d;
        loop {
            if pos == 0 {
                return best.map(|(_, v)| v).unwrap_or_else(|| DecisionVector::uniform(d, 1));
            }
            pos -= 1;
            if idx[pos] < m {
                idx[pos] += 1;
                break;
            }
            idx[pos] = 0;
        }
        let cand = DecisionVector(idx.iter().map(|&i| (i > 0).then_some(i)).collect());
        if let Some(r) = dp_on_reward(&cand, w_p, probs, ladder, chunk_duration, params) {
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, cand));
            }
        }
    }
}

pub(crate) fn dp_on_fractional(
    probs: &[f64],
    ladder: &BitrateLadder,
    chunk_duration: f64,
    params: &DpOnParams,
) -> DecisionVector {
    let value = |m: usize, p: f64| {
        tile_value(params.gamma, params.beta, chunk_duration, ladder.level(m).utility, p)
    };
    // Start from the best single segment, a feasible lower bound on the optimum.
    let mut single = (0usize, 1usize, f64::NEG_INFINITY);
    for (d, &p) in probs.iter().enumerate() {
        for l in ladder.levels() {
            let r = value(l.index, p) / l.size;
            if r > single.2 {
                single = (d, l.index, r);
            }
        }
    }
    let mut lambda = single.2;
    let mut best = DecisionVector::empty(probs.len());
    best.0[single.0] = Some(single.1);

    for _ in 0..100 {
        let mut cand = DecisionVector::empty(probs.len());
        let mut num = 0.0;
        let mut den = 0.0;
        for (d, &p) in probs.iter().enumerate() {
            let mut pick: Option<(usize, f64)> = None;
            for l in ladder.levels() {
                let g = value(l.index, p) - lambda * l.size;
                if g > 0.0 && pick.is_none_or(|(_, b)| g > b) {
                    pick = Some((l.index, g));
                }
            }
            if let Some((m, _)) = pick {
                cand.0[d] = Some(m);
                num += value(m, p);
                den += ladder.level(m).size;
            }
        }
        if den == 0.0 {
            break;
        }
        let ratio = num / den;
        if ratio <= lambda * (1.0 + 1e-14) {
            break;
        }
        lambda = ratio;
        best = cand;
    }
    best
}

/// Tile indices sorted by descending probability, ties by index.
fn by_probability(probs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order
}

/// Same level for the `x` most likely tiles: the largest level whose `x`
/// segments fit in one chunk duration at `w_p`, or level 1 if none fits.
pub fn top_x_decide(
    w_p: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    chunk_duration: f64,
    x: usize,
) -> DecisionVector {
    let x = x.clamp(1, probs.len());
    let budget = chunk_duration * w_p;
    let level = ladder
        .levels()
        .iter()
        .rev()
        .find(|l| x as f64 * l.size <= budget)
        .map_or(1, |l| l.index);
    let mut out = DecisionVector::empty(probs.len());
    for &d in by_probability(probs).iter().take(x) {
        out.0[d] = Some(level);
    }
    out
}

/// Level whose bitrate is closest to `target`; ties go to the lower level.
fn nearest_level(ladder: &BitrateLadder, target: f64) -> usize {
    let mut best = (1usize, f64::INFINITY);
    for l in ladder.levels() {
        let dist = (l.bitrate - target).abs();
        if dist < best.1 {
            best = (l.index, dist);
        }
    }
    best.0
}

/// Each tile targets `w_p * p` Mbit/s, rounded to the nearest ladder bitrate.
pub fn va360_decide(w_p: f64, probs: &[f64], ladder: &BitrateLadder) -> DecisionVector {
    DecisionVector(probs.iter().map(|&p| Some(nearest_level(ladder, w_p * p))).collect())
}

/// Buffer-targeting aggregate budget, spread by greedy marginal utility.
pub fn probdash_decide(
    w_p: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    chunk_duration: f64,
    buffered_seconds: f64,
    params: &ProbDashParams,
) -> DecisionVector {
    let ratio = (buffered_seconds / params.target).clamp(params.min_ratio, params.max_ratio);
    let budget = w_p * ratio * chunk_duration;
    water_fill(budget, probs, ladder)
}

/// Starts every tile at level 1 and repeatedly applies the single-level
/// upgrade with the best expected-utility gain per Mbit that still fits.
pub(crate) fn water_fill(budget: f64, probs: &[f64], ladder: &BitrateLadder) -> DecisionVector {
    let mut levels = vec![1usize; probs.len()];
    let mut used = ladder.level(1).size * probs.len() as f64;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (d, &p) in probs.iter().enumerate() {
            let m = levels[d];
            if m >= ladder.len() {
                continue;
            }
            let (cur, next) = (ladder.level(m), ladder.level(m + 1));
            let extra = next.size - cur.size;
            if used + extra > budget {
                continue;
            }
            let gain = p * (next.utility - cur.utility);
            if gain <= 0.0 {
                continue;
            }
            let rate = if extra > 0.0 { gain / extra } else { f64::INFINITY };
            if best.is_none_or(|(_, b)| rate > b) {
                best = Some((d, rate));
            }
        }
        match best {
            Some((d, _)) => {
                let m = levels[d];
                used += ladder.level(m + 1).size - ladder.level(m).size;
                levels[d] = m + 1;
            }
            None => break,
        }
    }
    DecisionVector(levels.into_iter().map(Some).collect())
}

/// Aggregate bitrate `w_p (Q_avl - reserve) / delta`, split by probability;
/// every tile gets at least level 1.
pub fn salient_vr_decide(
    w_p: f64,
    probs: &[f64],
    ladder: &BitrateLadder,
    chunk_duration: f64,
    buffered_seconds: f64,
    params: &SalientParams,
) -> DecisionVector {
    let aggregate = (w_p * (buffered_seconds - params.reserve) / chunk_duration).max(0.0);
    DecisionVector(
        probs
            .iter()
            .map(|&p| {
                let budget = p * aggregate * chunk_duration;
                let m = ladder
                    .levels()
                    .iter()
                    .rev()
                    .find(|l| l.size <= budget)
                    .map_or(1, |l| l.index);
                Some(m)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{comparison_ladder, small_ladder};

    fn two_level() -> BitrateLadder {
        BitrateLadder::from_sizes(&[1.0, 2.0], 5.0).unwrap()
    }

    #[test]
    fn dp_on_single_tile_closed_form() {
        let ladder = two_level();
        let params = DpOnParams { gamma: 0.1, beta: 0.0 };
        let w = 3.0;
        let closed = |m: usize| (0.1 * 5.0 + ladder.level(m).utility) * w / ladder.level(m).size;
        let want = if closed(2) > closed(1) { 2 } else { 1 };
        assert_eq!(dp_on_decide(w, &[1.0], &ladder, 5.0, &params).get(0), Some(want));
        // 0.5 / 1 vs (0.5 + ln 2) / 2 ≈ 0.597: the larger segment wins.
        assert_eq!(want, 2);
    }

    #[test]
    fn dp_on_zero_probability_tile_only_adds_smoothness() {
        let ladder = two_level();
        let params = DpOnParams { gamma: 0.1, beta: 0.0 };
        let a = DecisionVector(vec![Some(2), Some(1)]);
        let b = DecisionVector(vec![Some(2), None]);
        let ra = dp_on_reward(&a, 10.0, &[1.0, 0.0], &ladder, 5.0, &params).unwrap();
        let rb = dp_on_reward(&b, 10.0, &[1.0, 0.0], &ladder, 5.0, &params).unwrap();
        assert!((ra - (0.5 + 0.5 + 2f64.ln()) * 10.0 / 3.0).abs() < 1e-12);
        assert!((rb - (0.5 + 2f64.ln()) * 10.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn dp_on_nine_case_oracle() {
        // Exhaustive over {none,1,2}^2 minus the empty vector, p = [0.5, 0.5],
        // w_p = 10, gamma = 0.1, sizes 1 and 2 Mbit:
        //   (1,-) 5.0   (2,-) 4.233   (1,1) 5.0   (1,2) 4.489   (2,2) 4.233
        // The first maximiser in enumeration order is (none, 1).
        let ladder = BitrateLadder::from_sizes(&[1.0, 2.0], 5.0).unwrap();
        let d = dp_on_decide(10.0, &[0.5, 0.5], &ladder, 5.0, &DpOnParams { gamma: 0.1, beta: 0.0 });
        assert_eq!(d, DecisionVector(vec![None, Some(1)]));
    }

    #[test]
    fn dp_on_fractional_matches_enumeration_at_scale() {
        let ladder = comparison_ladder();
        let params = DpOnParams { gamma: 0.3, beta: 0.0 };
        let probs = [0.3, 0.2, 0.15, 0.1, 0.1, 0.1, 0.05];
        let e = dp_on_enumerate(8.0, &probs, &ladder, 5.0, &params);
        let f = dp_on_fractional(&probs, &ladder, 5.0, &params);
        let re = dp_on_reward(&e, 8.0, &probs, &ladder, 5.0, &params).unwrap();
        let rf = dp_on_reward(&f, 8.0, &probs, &ladder, 5.0, &params).unwrap();
        assert!((re - rf).abs() <= 1e-9 * re.abs(), "{re} vs {rf}");
    }

    #[test]
    fn top_x_examples() {
        let ladder = comparison_ladder();
        let probs = [0.125; 8];
        let d = top_x_decide(16.0, &probs, &ladder, 5.0, 8);
        assert_eq!(d, DecisionVector::uniform(8, 3));
        assert!((ladder.level(3).bitrate - 1.35).abs() < 1e-12);

        let probs = [0.1, 0.6, 0.3];
        let d = top_x_decide(82.5 / 5.0, &probs, &ladder, 5.0, 1);
        assert_eq!(d, DecisionVector(vec![None, Some(7), None]));

        let d = top_x_decide(1e-9, &probs, &ladder, 5.0, 2);
        assert_eq!(d, DecisionVector(vec![None, Some(1), Some(1)]));
    }

    #[test]
    fn top_x_breaks_probability_ties_by_index() {
        let d = top_x_decide(100.0, &[0.25; 4], &small_ladder(), 5.0, 2);
        assert_eq!(d.count(), 2);
        assert!(d.get(0).is_some() && d.get(1).is_some());
    }

    #[test]
    fn va360_examples() {
        let ladder = comparison_ladder();
        assert_eq!(va360_decide(10.0, &[0.317], &ladder).get(0), Some(5));
        assert_eq!(va360_decide(10.0, &[0.0], &ladder).get(0), Some(1));
        // Target 1.0 is equidistant from 0.5 and 1.5.
        let l = BitrateLadder::from_bitrates(&[0.5, 1.5], 1.0).unwrap();
        assert_eq!(va360_decide(1.0, &[1.0], &l).get(0), Some(1));
    }

    #[test]
    fn probdash_examples() {
        let ladder = small_ladder();
        let params = ProbDashParams::default();
        // Q_avl = target keeps the full estimate: 2 Mbit/s * 5 s = 10 Mbit.
        let a = probdash_decide(2.0, &[0.7, 0.3], &ladder, 5.0, 10.0, &params);
        let b = water_fill(10.0, &[0.7, 0.3], &ladder);
        assert_eq!(a, b);
        // Budget below D * S_1 keeps level 1 everywhere.
        let d = probdash_decide(0.01, &[0.5, 0.5], &ladder, 5.0, 0.0, &params);
        assert_eq!(d, DecisionVector::uniform(2, 1));
    }

    #[test]
    fn water_fill_matches_exhaustive_on_fixture() {
        // Sizes 1, 2, 3 with ln utilities, budget 5, p = [0.7, 0.3]. Of the
        // nine vectors, (3, 2) has the best expected utility within budget.
        let ladder = BitrateLadder::from_sizes(&[1.0, 2.0, 3.0], 5.0).unwrap();
        let d = water_fill(5.0, &[0.7, 0.3], &ladder);
        assert_eq!(d, DecisionVector(vec![Some(3), Some(2)]));
    }

    #[test]
    fn salient_examples() {
        let ladder = comparison_ladder();
        let params = SalientParams { reserve: 5.0 };
        let d = salient_vr_decide(20.0, &[0.5, 0.5], &ladder, 5.0, 5.0, &params);
        assert_eq!(d, DecisionVector::uniform(2, 1));
        let d = salient_vr_decide(20.0, &[0.5, 0.5, 0.0], &ladder, 5.0, 10.0, &params);
        assert_eq!(d, DecisionVector(vec![Some(6), Some(6), Some(1)]));
    }
}
