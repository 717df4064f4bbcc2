//! Synthetic datasets with known structure: overlapping binary classes drawn
//! from a logistic class-probability function with Lipschitz constant `k/4`,
//! and margin-separated clusters.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{NwcError, Result};
use crate::rng::{substream, Stream};
use crate::scalar::{distance, Scalar};

/// Axis-aligned sampling region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(NwcError::param("box", "bounds must be non-empty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
            return Err(NwcError::param("box", "every upper bound must exceed its lower bound"));
        }
        Ok(InputBox { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }
}

/// `p₁(y) = 1 / (1 + exp(−k(w·y + b)))` with unit-norm `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticGroundTruth {
    pub w: Vec<f64>,
    pub b: f64,
    pub k: f64,
}

impl LogisticGroundTruth {
    /// Normalises `w`; rejects a zero direction or non-positive steepness.
    pub fn new(w: Vec<f64>, b: f64, k: f64) -> Result<Self> {
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(NwcError::param("w", "direction must be non-zero and finite"));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(NwcError::param("k", "steepness must be positive"));
        }
        Ok(LogisticGroundTruth {
            w: w.into_iter().map(|v| v / norm).collect(),
            b,
            k,
        })
    }

    /// Steepness giving Lipschitz constant `l`, hyperplane through the centre
    /// of `bx` along the diagonal direction.
    pub fn with_lipschitz(l: f64, bx: &InputBox) -> Result<Self> {
        let d = bx.dim();
        let w = vec![1.0; d];
        let c = bx.center();
        let b = -c.iter().sum::<f64>() / (d as f64).sqrt();
        Self::new(w, b, 4.0 * l)
    }

    pub fn lipschitz(&self) -> f64 {
        self.k / 4.0
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Signed distance to the hyperplane.
    pub fn margin_of(&self, y: &[f64]) -> f64 {
        self.w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    /// Probability of class 1.
    pub fn p1(&self, y: &[f64]) -> f64 {
        let z = self.k * self.margin_of(y);
        // Split on sign to avoid overflow of exp for large |z|.
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }

    /// `[p₀(y), p₁(y)]`.
    pub fn probabilities(&self, y: &[f64]) -> [f64; 2] {
        let p = self.p1(y);
        [1.0 - p, p]
    }
}

/// Uniform draws from `bx` labelled by Bernoulli(`p₁`). The returned truth is
/// the probability oracle for coverage checks.
pub fn generate_overlapping<T: Scalar>(
    truth: &LogisticGroundTruth,
    n: usize,
    bx: &InputBox,
    seed: u64,
) -> Result<(LabeledDataset<T>, LogisticGroundTruth)> {
    if n == 0 {
        return Err(NwcError::param("n", "must be at least 1"));
    }
    if bx.dim() != truth.dim() {
        return Err(NwcError::DimensionMismatch {
            expected: truth.dim(),
            actual: bx.dim(),
        });
    }
    let mut points = substream(seed, Stream::Generation);
    let mut coins = substream(seed, Stream::Labels);
    let mut features = Vec::with_capacity(n * bx.dim());
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = bx.sample(&mut points);
        let u: f64 = coins.random();
        labels.push(usize::from(u < truth.p1(&y)));
        features.extend(y.into_iter().map(T::lit));
    }
    Ok((LabeledDataset::new(features, labels, bx.dim(), 2)?, truth.clone()))
}

/// Largest observed `|p₁(y) − p₁(y')| / ‖y − y'‖` over all sample pairs;
/// coincident pairs are skipped.
pub fn max_gradient_check(truth: &LogisticGroundTruth, samples: &[Vec<f64>]) -> f64 {
    let p: Vec<f64> = samples.iter().map(|y| truth.p1(y)).collect();
    let mut best = 0.0f64;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            let d = distance(&samples[i], &samples[j]);
            if d > 0.0 {
                best = best.max((p[i] - p[j]).abs() / d);
            }
        }
    }
    best
}

/// Margin-separated clusters: `num_classes` centres at least `γ + 2r` apart,
/// each with `points_per_class` samples uniform in a ball of radius `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginClusterConfig {
    pub margin: f64,
    pub num_classes: usize,
    pub radius: f64,
    pub points_per_class: usize,
    pub bounds: InputBox,
}

/// Generated cluster layout, kept for metadata sidecars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginLayout {
    pub centers: Vec<Vec<f64>>,
    pub radius: f64,
    pub margin: f64,
}

const CENTER_ATTEMPTS: usize = 10_000;
const LAYOUT_RESTARTS: usize = 50;

impl MarginClusterConfig {
    fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(NwcError::param("margin", "must be positive"));
        }
        if !(self.radius >= 0.0) {
            return Err(NwcError::param("radius", "must be non-negative"));
        }
        if self.num_classes == 0 || self.points_per_class == 0 {
            return Err(NwcError::param("num_classes", "classes and points per class must be positive"));
        }
        if self
            .bounds
            .lower
            .iter()
            .zip(&self.bounds.upper)
            .any(|(l, u)| u - l < 2.0 * self.radius)
        {
            return Err(NwcError::Infeasible("box is narrower than one cluster".into()));
        }
        Ok(())
    }
}

/// Draws the clusters. Centre placement is rejection-sampled with bounded
/// retries; every sample is checked to lie within `r` of its centre, which
/// with the centre spacing certifies the margin.
pub fn generate_margin<T: Scalar>(cfg: &MarginClusterConfig, seed: u64) -> Result<(LabeledDataset<T>, MarginLayout)> {
    cfg.validate()?;
    let mut rng = substream(seed, Stream::Generation);
    let d = cfg.bounds.dim();
    // Slack keeps the certificate valid after rounding.
    let spacing = (cfg.margin + 2.0 * cfg.radius) * (1.0 + 1e-9);
    let inner = InputBox {
        lower: cfg.bounds.lower.iter().map(|l| l + cfg.radius).collect(),
        upper: cfg.bounds.upper.iter().map(|u| u - cfg.radius).collect(),
    };
    let mut centers = None;
    for _ in 0..LAYOUT_RESTARTS {
        if let Some(c) = place_centers(&inner, cfg.num_classes, spacing, &mut rng) {
            centers = Some(c);
            break;
        }
    }
    let centers = centers.ok_or_else(|| {
        NwcError::Infeasible(format!(
            "could not place {} centres {spacing:.4} apart inside the box",
            cfg.num_classes
        ))
    })?;
    let mut features = Vec::with_capacity(cfg.num_classes * cfg.points_per_class * d);
    let mut labels = Vec::with_capacity(cfg.num_classes * cfg.points_per_class);
    for (c, center) in centers.iter().enumerate() {
        let mut placed = 0;
        while placed < cfg.points_per_class {
            let y = sample_ball(center, cfg.radius, &mut rng);
            if distance(&y, center) > cfg.radius {
                continue;
            }
            features.extend(y.iter().map(|&v| T::lit(v)));
            labels.push(c);
            placed += 1;
        }
    }
    let ds = LabeledDataset::new(features, labels, d, cfg.num_classes)?;
    Ok((
        ds,
        MarginLayout {
            centers,
            radius: cfg.radius,
            margin: cfg.margin,
        },
    ))
}

fn place_centers<R: Rng>(bx: &InputBox, count: usize, spacing: f64, rng: &mut R) -> Option<Vec<Vec<f64>>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut attempts = 0;
    while centers.len() < count {
        attempts += 1;
        if attempts > CENTER_ATTEMPTS {
            return None;
        }
        let cand = if bx.lower.iter().zip(&bx.upper).all(|(l, u)| u > l) {
            bx.sample(rng)
        } else {
            bx.lower
                .iter()
                .zip(&bx.upper)
                .map(|(&l, &u)| l + (u - l).max(0.0) * rng.random::<f64>())
                .collect()
        };
        if centers.iter().all(|c| distance(c, &cand) >= spacing) {
            centers.push(cand);
        }
    }
    Some(centers)
}

fn sample_ball<R: Rng>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    if radius == 0.0 {
        return center.to_vec();
    }
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return center.to_vec();
    }
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    center.iter().zip(&dir).map(|(c, v)| c + r * v / norm).collect()
}

/// Smallest distance between samples of different classes (brute force).
/// `None` for single-class data.
pub fn min_interclass_distance<T: Scalar>(ds: &LabeledDataset<T>) -> Option<T> {
    let mut best: Option<T> = None;
    for i in 0..ds.len() {
        for j in i + 1..ds.len() {
            if ds.label(i) != ds.label(j) {
                let dist = distance(ds.row(i), ds.row(j));
                best = Some(best.map_or(dist, |b| b.min(dist)));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(k: f64) -> LogisticGroundTruth {
        LogisticGroundTruth::new(vec![1.0, 1.0], -1.0, k).unwrap()
    }

    #[test]
    fn logistic_values() {
        let t = truth(0.6);
        assert!((t.lipschitz() - 0.15).abs() < 1e-15);
        let on_plane = [2f64.sqrt(), 0.0];
        assert!((t.margin_of(&on_plane)).abs() < 1e-15);
        assert!((t.p1(&on_plane) - 0.5).abs() < 1e-15);
        // w·y + b = 10 → 1/(1+e^-6)
        let y = [11.0 * 2f64.sqrt(), 0.0];
        let expected = 1.0 / (1.0 + (-6.0f64).exp());
        assert!((t.p1(&y) - expected).abs() < 1e-12);
        assert!((t.p1(&y) - 0.9975).abs() < 1e-4);
        let w: f64 = t.w.iter().map(|v| v * v).sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert!(t.p1(&[1e6, 1e6]) <= 1.0 && t.p1(&[-1e6, -1e6]) >= 0.0);
    }

    #[test]
    fn gradient_matches_quarter_k() {
        let t = truth(0.6);
        // Central finite difference along w at the hyperplane.
        let h = 1e-5;
        let base = [2f64.sqrt(), 0.0];
        let step: Vec<f64> = t.w.iter().map(|w| w * h).collect();
        let plus: Vec<f64> = base.iter().zip(&step).map(|(a, s)| a + s).collect();
        let minus: Vec<f64> = base.iter().zip(&step).map(|(a, s)| a - s).collect();
        let grad = (t.p1(&plus) - t.p1(&minus)) / (2.0 * h);
        assert!((grad - 0.15).abs() < 1e-9);
    }

    #[test]
    fn empirical_gradient_bounded() {
        let t = truth(0.6);
        let bx = InputBox::cube(2, -5.0, 5.0).unwrap();
        let (ds, _) = generate_overlapping::<f64>(&t, 300, &bx, 3).unwrap();
        let mut samples: Vec<Vec<f64>> = ds.rows().map(<[f64]>::to_vec).collect();
        samples.push(samples[0].clone());
        let g = max_gradient_check(&t, &samples);
        assert!(g <= 0.15 + 1e-12 && g > 0.1);
        let flat = truth(1e-9);
        assert!(max_gradient_check(&flat, &samples) < 1e-9);
    }

    #[test]
    fn overlapping_determinism_and_single_sample() {
        let bx = InputBox::cube(2, 0.0, 10.0).unwrap();
        let t = LogisticGroundTruth::with_lipschitz(0.15, &bx).unwrap();
        assert!((t.k - 0.6).abs() < 1e-15);
        assert!(t.margin_of(&[5.0, 5.0]).abs() < 1e-12);
        let (a, _) = generate_overlapping::<f64>(&t, 100, &bx, 42).unwrap();
        let (b, _) = generate_overlapping::<f64>(&t, 100, &bx, 42).unwrap();
        assert_eq!(a, b);
        let (one, _) = generate_overlapping::<f64>(&t, 1, &bx, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.label(0) <= 1);
        assert!(generate_overlapping::<f64>(&t, 0, &bx, 1).is_err());
    }

    #[test]
    fn slab_frequencies_follow_truth() {
        let bx = InputBox::cube(2, 0.0, 10.0).unwrap();
        let t = LogisticGroundTruth::with_lipschitz(0.15, &bx).unwrap();
        let (ds, _) = generate_overlapping::<f64>(&t, 60_000, &bx, 5).unwrap();
        for &s in &[-4.0, -1.0, 0.0, 2.0, 5.0] {
            let (mut hits, mut ones) = (0usize, 0usize);
            for (row, &c) in ds.rows().zip(ds.labels()) {
                if (t.margin_of(row) - s).abs() < 0.1 {
                    hits += 1;
                    ones += c;
                }
            }
            let p = 1.0 / (1.0 + (-t.k * s).exp());
            let freq = ones as f64 / hits as f64;
            let sd = (p * (1.0 - p) / hits as f64).sqrt();
            // Slab width adds at most k/4 · 0.1 of within-slab drift.
            assert!((freq - p).abs() <= 3.0 * sd + 0.015, "slab {s}: {freq} vs {p}");
        }
    }

    fn margin_cfg(gamma: f64, classes: usize, r: f64) -> MarginClusterConfig {
        MarginClusterConfig {
            margin: gamma,
            num_classes: classes,
            radius: r,
            points_per_class: 60,
            bounds: InputBox::cube(2, 0.0, 30.0).unwrap(),
        }
    }

    #[test]
    fn margin_holds_exhaustively() {
        for seed in 0..5 {
            let (ds, layout) = generate_margin::<f64>(&margin_cfg(6.67, 5, 1.0), seed).unwrap();
            assert_eq!(ds.len(), 300);
            assert!(min_interclass_distance(&ds).unwrap() >= 6.67);
            assert_eq!(layout.centers.len(), 5);
        }
    }

    #[test]
    fn margin_edge_cases() {
        let (ds, _) = generate_margin::<f64>(&margin_cfg(6.67, 1, 1.0), 0).unwrap();
        assert_eq!(min_interclass_distance(&ds), None);
        let (ds, layout) = generate_margin::<f64>(&margin_cfg(3.0, 4, 0.0), 0).unwrap();
        let d = min_interclass_distance(&ds).unwrap();
        let mut center_min = f64::INFINITY;
        for i in 0..4 {
            for j in i + 1..4 {
                center_min = center_min.min(distance(&layout.centers[i], &layout.centers[j]));
            }
        }
        assert_eq!(d, center_min);
        let crowded = MarginClusterConfig {
            bounds: InputBox::cube(2, 0.0, 5.0).unwrap(),
            ..margin_cfg(6.67, 5, 1.0)
        };
        assert!(matches!(generate_margin::<f64>(&crowded, 0), Err(NwcError::Infeasible(_))));
    }
}
