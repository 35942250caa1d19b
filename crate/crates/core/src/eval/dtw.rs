use std::f64::consts::LN_10;

use ndarray::ArrayView1;

use crate::features::{F0Track, McepSequence};
use crate::{Error, Result};

/// Monotonic unit-step alignment between two frame sequences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentPath {
    pairs: Vec<(usize, usize)>,
}

impl AlignmentPath {
    /// Validates the boundary and step constraints.
    pub fn new(pairs: Vec<(usize, usize)>, len_a: usize, len_b: usize) -> Result<Self> {
        let ok_ends = pairs.first() == Some(&(0, 0))
            && pairs.last() == Some(&(len_a.wrapping_sub(1), len_b.wrapping_sub(1)));
        let ok_steps = pairs.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
        });
        if !(ok_ends && ok_steps) {
            return Err(Error::Shape("alignment path violates boundary or step constraints".into()));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Steps that advance only one of the two sequences.
    pub fn non_diagonal_steps(&self) -> usize {
        self.pairs
            .windows(2)
            .filter(|w| w[1].0 == w[0].0 || w[1].1 == w[0].1)
            .count()
    }
}

/// `10 / ln 10 * sqrt(2)`: converts a cepstral Euclidean distance to dB.
pub const MCD_SCALE: f64 = 10.0 / LN_10 * std::f64::consts::SQRT_2;

/// Euclidean distance over `c1..` (the energy term `c0` is excluded).
pub fn cepstral_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .skip(1)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check(a: &McepSequence, b: &McepSequence) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooShort {
            what: "mel-cepstral sequence",
            len: 0,
            min: 1,
        });
    }
    if a.order() != b.order() {
        return Err(Error::Shape(format!(
            "cepstral orders differ: {} vs {}",
            a.order(),
            b.order()
        )));
    }
    Ok(())
}

/// Minimum-cost alignment under the symmetric unit-step pattern
/// `(1,0), (0,1), (1,1)` with per-cell cost. Ties prefer the diagonal, then
/// the step that advances `a`.
pub fn dtw_align(a: &McepSequence, b: &McepSequence) -> Result<AlignmentPath> {
    check(a, b)?;
    let (n, m) = (a.n_frames(), b.n_frames());
    let ca = a.coeffs();
    let cb = b.coeffs();
    let mut acc = vec![f64::INFINITY; n * m];
    let idx = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let cost = cepstral_distance(ca.row(i), cb.row(j));
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[idx(i - 1, j - 1)] } else { f64::INFINITY };
                let up = if i > 0 { acc[idx(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { acc[idx(i, j - 1)] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[idx(i, j)] = cost + best;
        }
    }
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 { acc[idx(i - 1, j - 1)] } else { f64::INFINITY };
        let up = if i > 0 { acc[idx(i - 1, j)] } else { f64::INFINITY };
        let left = if j > 0 { acc[idx(i, j - 1)] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    AlignmentPath::new(pairs, n, m)
}

/// Sum of local cepstral distances along `path`.
pub fn path_cost(a: &McepSequence, b: &McepSequence, path: &AlignmentPath) -> f64 {
    path.pairs()
        .iter()
        .map(|&(i, j)| cepstral_distance(a.coeffs().row(i), b.coeffs().row(j)))
        .sum()
}

/// Mel-cepstral distortion in dB averaged over the pairs of `path`.
pub fn mcd_along(a: &McepSequence, b: &McepSequence, path: &AlignmentPath) -> f64 {
    MCD_SCALE * path_cost(a, b, path) / path.len() as f64
}

/// DTW-aligned mel-cepstral distortion in dB.
pub fn dtw_mcd(a: &McepSequence, b: &McepSequence) -> Result<f64> {
    let path = dtw_align(a, b)?;
    Ok(mcd_along(a, b, &path))
}

/// Mean absolute F0 difference over aligned pairs where both frames are voiced.
pub fn f0_mae(a: &F0Track, b: &F0Track, path: &AlignmentPath) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for &(i, j) in path.pairs() {
        if i >= a.len() || j >= b.len() {
            return Err(Error::Shape(format!(
                "path pair ({i}, {j}) outside F0 tracks of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.voiced()[i] && b.voiced()[j] {
            sum += (a.f0_hz()[i] - b.f0_hz()[j]).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Undefined("no mutually voiced aligned frames".into()));
    }
    Ok(sum / count as f64)
}
