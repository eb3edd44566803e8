//! Head-position probabilities: synthetic profiles, external matrices and
//! realisation of the viewed tile.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-9;
const RENORMALIZE_TOLERANCE: f64 = 1e-3;

/// Parameters of a synthetic view distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    /// Number of tiles with positive probability.
    pub positive_tiles: usize,
    /// Heterogeneity: 0 is uniform over the positive tiles, 1 is the linear ramp.
    pub alpha: f64,
    /// Ratio of the smallest to the largest positive probability on the ramp.
    pub min_ratio: f64,
}

impl ProfileSpec {
    pub fn new(positive_tiles: usize, alpha: f64) -> Self {
        ProfileSpec {
            positive_tiles,
            alpha,
            min_ratio: 0.05,
        }
    }

    pub fn check(&self, num_tiles: usize) -> Result<()> {
        if self.positive_tiles == 0 {
            return Err(Error::validation("positive_tiles must be ≥ 1"));
        }
        if self.positive_tiles > num_tiles {
            return Err(Error::validation(format!(
                "positive_tiles {} exceeds tile count {num_tiles}",
                self.positive_tiles
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::validation("alpha must be in [0, 1]"));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio <= 1.0) {
            return Err(Error::validation("min_ratio must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Descending arithmetic sequence of `n` probabilities summing to one whose
/// last/first ratio is `min_ratio`.
pub fn linear_base(n: usize, min_ratio: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0];
    }
    let p_max = 2.0 / (n as f64 * (1.0 + min_ratio));
    let p_min = min_ratio * p_max;
    let step = (p_max - p_min) / (n - 1) as f64;
    (0..n).map(|i| p_max - step * i as f64).collect()
}

/// Probabilities for `num_tiles` tiles: the first `positive_tiles` entries
/// descending, the rest zero.
pub fn profile_probs(spec: &ProfileSpec, num_tiles: usize) -> Result<Vec<f64>> {
    spec.check(num_tiles)?;
    let n = spec.positive_tiles;
    let uniform = 1.0 / n as f64;
    let mut out: Vec<f64> = linear_base(n, spec.min_ratio)
        .into_iter()
        .map(|l| (1.0 - spec.alpha) * uniform + spec.alpha * l)
        .collect();
    out.resize(num_tiles, 0.0);
    Ok(out)
}

/// The twelve reference profiles, in order.
pub fn table3_profiles() -> Vec<ProfileSpec> {
    const POSITIVE: [usize; 12] = [8, 8, 8, 8, 8, 4, 4, 4, 4, 4, 2, 2];
    const ALPHA: [f64; 12] = [0.0, 0.25, 0.5, 0.75, 1.0, 0.0, 0.25, 0.5, 0.75, 1.0, 0.0, 0.5];
    POSITIVE
        .iter()
        .zip(ALPHA)
        .map(|(&n, a)| ProfileSpec::new(n, a))
        .collect()
}

/// Reference profile by 1-based id.
pub fn reference_profile(id: usize) -> Result<ProfileSpec> {
    table3_profiles()
        .get(id.wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::validation(format!("profile id {id} not in 1..=12")))
}

fn uniform_blend(base: &[f64], error: f64) -> Vec<f64> {
    let u = 1.0 / base.len() as f64;
    if error >= 1.0 {
        return vec![u; base.len()];
    }
    base.iter().map(|p| (1.0 - error) * p + error * u).collect()
}

/// K x D view probabilities plus an optional fixed sequence of viewed tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    probs: Vec<Vec<f64>>,
    viewed: Option<Vec<usize>>,
}

impl HeadModel {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::validation("head model has no chunks"));
        }
        let d = probs[0].len();
        for (k, row) in probs.iter().enumerate() {
            if row.len() != d || d == 0 {
                return Err(Error::validation(format!("chunk {k}: expected {d} tiles")));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::validation(format!("chunk {k}: probability outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::validation(format!("chunk {k}: probabilities sum to {sum}")));
            }
        }
        Ok(HeadModel { probs, viewed: None })
    }

    /// Same row for every chunk.
    pub fn repeated(row: Vec<f64>, num_chunks: usize) -> Result<Self> {
        Self::new(vec![row; num_chunks])
    }

    pub fn uniform(num_chunks: usize, num_tiles: usize) -> Self {
        HeadModel {
            probs: vec![vec![1.0 / num_tiles as f64; num_tiles]; num_chunks],
            viewed: None,
        }
    }

    /// Profile rows, optionally rotated per chunk by a seeded offset so the
    /// most likely tile moves around the sphere.
    pub fn from_profile(
        spec: &ProfileSpec,
        num_chunks: usize,
        num_tiles: usize,
        rotation_seed: Option<u64>,
    ) -> Result<Self> {
        let row = profile_probs(spec, num_tiles)?;
        let probs = match rotation_seed {
            None => vec![row; num_chunks],
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..num_chunks)
                    .map(|_| {
                        let mut r = row.clone();
                        r.rotate_right(rng.gen_range(0..num_tiles));
                        r
                    })
                    .collect()
            }
        };
        Ok(HeadModel { probs, viewed: None })
    }

    pub fn with_viewed(mut self, viewed: Vec<usize>) -> Result<Self> {
        if viewed.len() != self.probs.len() {
            return Err(Error::validation(format!(
                "viewed trace has {} chunks, head model {}",
                viewed.len(),
                self.probs.len()
            )));
        }
        if viewed.iter().any(|&d| d >= self.num_tiles()) {
            return Err(Error::validation("viewed tile index out of range"));
        }
        self.viewed = Some(viewed);
        Ok(self)
    }

    pub fn num_chunks(&self) -> usize {
        self.probs.len()
    }

    pub fn num_tiles(&self) -> usize {
        self.probs[0].len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.probs[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn viewed(&self) -> Option<&[usize]> {
        self.viewed.as_deref()
    }

    /// Viewed tile per chunk: the fixed sequence if present, otherwise one
    /// sample per chunk from a generator seeded with `seed`.
    pub fn realize(&self, seed: u64) -> Vec<usize> {
        if let Some(v) = &self.viewed {
            return v.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.num_chunks())
            .map(|k| realize_fov(self, k, &mut rng))
            .collect()
    }

    /// Reads a headerless CSV with one row of D probabilities per chunk.
    /// Rows within 1e-3 of summing to one are renormalised.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut probs: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 1;
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::ProbFormat { line, msg: e.to_string() }))
                .collect::<Result<Vec<f64>>>()?;
            if row.iter().any(|p| !(*p >= 0.0) || *p > 1.0 + RENORMALIZE_TOLERANCE) {
                return Err(Error::ProbFormat { line, msg: "probability outside [0, 1]".into() });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                return Err(Error::ProbFormat { line, msg: format!("row sums to {sum}") });
            }
            if let Some(first) = probs.first() {
                if first.len() != row.len() {
                    return Err(Error::ProbFormat {
                        line,
                        msg: format!("expected {} columns, got {}", first.len(), row.len()),
                    });
                }
            }
            probs.push(row.iter().map(|p| (p / sum).min(1.0)).collect());
        }
        if probs.is_empty() {
            return Err(Error::ProbFormat { line: 1, msg: "no rows".into() });
        }
        HeadModel::new(probs)
    }
}

pub fn load_prob_matrix(path: &Path) -> Result<HeadModel> {
    HeadModel::from_csv_reader(std::fs::File::open(path)?)
}

/// Reads `chunk_index,tile_index` rows (both 1-based) into 0-based tile
/// indices ordered by chunk.
pub fn viewed_from_csv_reader<R: Read>(reader: R) -> Result<Vec<usize>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["chunk_index", "tile_index"] {
        return Err(Error::ProbFormat { line: 1, msg: "expected header `chunk_index,tile_index`".into() });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let parse = |idx: usize| -> Result<usize> {
            rec.get(idx)
                .unwrap_or("")
                .parse::<usize>()
                .map_err(|e| Error::ProbFormat { line, msg: e.to_string() })
        };
        let (k, d) = (parse(0)?, parse(1)?);
        if k != out.len() + 1 || d == 0 {
            return Err(Error::ProbFormat { line, msg: format!("unexpected row ({k}, {d})") });
        }
        out.push(d - 1);
    }
    Ok(out)
}

pub fn load_viewed(path: &Path) -> Result<Vec<usize>> {
    viewed_from_csv_reader(std::fs::File::open(path)?)
}

/// Samples the viewed tile of chunk `k`.
pub fn realize_fov<R: Rng + ?Sized>(head: &HeadModel, k: usize, rng: &mut R) -> usize {
    let row = head.row(k);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (d, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return d;
        }
    }
    // Rounding left u above the cumulative sum: take the last positive tile.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Prediction for chunk `k` made while chunk `current` plays: the true row
/// blended toward uniform by `noise_rate` per chunk of look-ahead; uniform
/// once the error reaches 100%.
pub fn noisy_probs(base: &HeadModel, current: usize, k: usize, noise_rate: f64) -> Vec<f64> {
    let error = noise_rate * k.saturating_sub(current) as f64;
    uniform_blend(base.row(k), error)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn linear_base_examples() {
        let l = linear_base(6, 0.017 / 0.317);
        assert!((l[0] - 0.317).abs() < 1e-3, "{l:?}");
        assert!((l[5] - 0.017).abs() < 1e-3, "{l:?}");
        assert_eq!(linear_base(1, 0.05), vec![1.0]);
        assert!(close(&linear_base(2, 0.05), &[0.95238, 0.04762], 1e-5));
        for n in 1..20 {
            let s: f64 = linear_base(n, 0.05).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_examples() {
        let u = profile_probs(&ProfileSpec::new(8, 0.0), 8).unwrap();
        assert!(u.iter().all(|&p| p == 0.125));
        let l = profile_probs(&ProfileSpec::new(8, 1.0), 8).unwrap();
        assert_eq!(l, linear_base(8, 0.05));
        assert!((l[0] - 2.0 / 8.4).abs() < 1e-12);
        assert!((l[7] - 0.05 * 2.0 / 8.4).abs() < 1e-12);
        let h = profile_probs(&ProfileSpec::new(2, 0.5), 2).unwrap();
        assert!(close(&h, &[0.72619, 0.27381], 1e-5), "{h:?}");
        let padded = profile_probs(&ProfileSpec::new(4, 0.25), 8).unwrap();
        assert_eq!(&padded[4..], &[0.0; 4]);
        assert!(profile_probs(&ProfileSpec::new(9, 0.5), 8).is_err());
    }

    #[test]
    fn reference_profiles() {
        let t = table3_profiles();
        assert_eq!(t.len(), 12);
        assert_eq!((t[0].positive_tiles, t[0].alpha), (8, 0.0));
        assert_eq!((t[4].positive_tiles, t[4].alpha), (8, 1.0));
        assert_eq!((t[10].positive_tiles, t[10].alpha), (2, 0.0));
        assert!(t.iter().all(|p| p.min_ratio == 0.05));
        assert!(reference_profile(0).is_err());
        assert!(reference_profile(13).is_err());
    }

    #[test]
    fn noise_examples() {
        let head = HeadModel::repeated(vec![1.0, 0.0], 20).unwrap();
        assert_eq!(noisy_probs(&head, 3, 3, 0.1), vec![1.0, 0.0]);
        assert!(close(&noisy_probs(&head, 0, 5, 0.1), &[0.75, 0.25], 1e-12));
        assert_eq!(noisy_probs(&head, 0, 10, 0.1), vec![0.5, 0.5]);
        assert_eq!(noisy_probs(&head, 2, 15, 0.1), vec![0.5, 0.5]);
    }

    #[test]
    fn fov_sampling() {
        let head = HeadModel::repeated(vec![1.0, 0.0, 0.0], 50).unwrap();
        assert!(head.realize(7).iter().all(|&d| d == 0));

        let head = HeadModel::uniform(1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[realize_fov(&head, 0, &mut rng)] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn fov_golden_sequence() {
        let head = HeadModel::from_profile(&reference_profile(2).unwrap(), 20, 8, None).unwrap();
        let seq = head.realize(42);
        assert_eq!(seq, head.realize(42));
        assert_eq!(seq, GOLDEN_SEED42_PROFILE2);
    }

    // Produced by this sampler (ChaCha8, seed 42) and frozen.
    const GOLDEN_SEED42_PROFILE2: [usize; 20] = [4, 7, 2, 4, 1, 0, 2, 6, 5, 1, 3, 6, 7, 4, 5, 1, 4, 1, 3, 0];

    #[test]
    fn matrix_csv() {
        let h = HeadModel::from_csv_reader("0.5,0.5\n0.2,0.8\n".as_bytes()).unwrap();
        assert_eq!(h.num_chunks(), 2);
        let h = HeadModel::from_csv_reader("0.5,0.5004\n".as_bytes()).unwrap();
        assert!((h.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            HeadModel::from_csv_reader("0.5,0.6\n".as_bytes()),
            Err(Error::ProbFormat { line: 1, .. })
        ));
        assert!(HeadModel::from_csv_reader("0.5,0.5\n1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn viewed_csv() {
        let v = viewed_from_csv_reader("chunk_index,tile_index\n1,2\n2,1\n".as_bytes()).unwrap();
        assert_eq!(v, vec![1, 0]);
        assert!(viewed_from_csv_reader("chunk_index,tile_index\n2,1\n".as_bytes()).is_err());
        let head = HeadModel::uniform(2, 2).with_viewed(v).unwrap();
        assert_eq!(head.realize(0), vec![1, 0]);
        assert!(HeadModel::uniform(2, 2).with_viewed(vec![0, 5]).is_err());
    }
}
