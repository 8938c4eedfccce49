//! Per-level z-score standardisation of feature pyramids.

/// Floor applied to standard deviations so constant channels map to zero.
pub const STDDEV_FLOOR: f64 = 1e-8;

/// One pyramid level: feature vectors at each spatial position `(j, k)`,
/// flattened, plus the statistics used to standardise them.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub level_index: usize,
    /// `features[position][channel]`.
    pub features: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl PyramidLevel {
    pub fn new(level_index: usize, features: Vec<Vec<f64>>) -> Self {
        let channels = features.first().map_or(0, Vec::len);
        Self { level_index, features, mean: vec![0.0; channels], stddev: vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// `x <- (x - mu_i) / sigma_i` per level and channel, using population statistics.
/// Each level is standardised independently; `mean`/`stddev` record the raw statistics.
pub fn normalize_pyramid(levels: &[PyramidLevel]) -> Vec<PyramidLevel> {
    levels.iter().map(normalize_level).collect()
}

fn normalize_level(level: &PyramidLevel) -> PyramidLevel {
    let c = level.channels();
    let n = level.features.len() as f64;
    if level.features.is_empty() {
        return level.clone();
    }
    let mut mean = vec![0.0; c];
    for x in &level.features {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for x in &level.features {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let stddev: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    let features = level
        .features
        .iter()
        .map(|x| x.iter().zip(&mean).zip(&stddev).map(|((v, m), s)| (v - m) / s.max(STDDEV_FLOOR)).collect())
        .collect();
    PyramidLevel { level_index: level.level_index, features, mean, stddev }
}
