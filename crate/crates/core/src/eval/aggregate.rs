/// Mean and sample standard deviation (n-1 denominator; 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub splits: usize,
}

/// Aggregates named per-split metrics. Metric order follows first appearance;
/// a metric absent from some splits is aggregated over the splits reporting it.
pub fn aggregate_splits(per_split: &[Vec<(String, f64)>]) -> Vec<MetricSummary> {
    let mut names: Vec<&str> = Vec::new();
    for split in per_split {
        for (name, _) in split {
            if !names.contains(&name.as_str()) {
                names.push(name);
            }
        }
    }
    names
        .into_iter()
        .map(|name| {
            let values: Vec<f64> =
                per_split.iter().flat_map(|s| s.iter().filter(|(n, _)| n == name).map(|(_, v)| *v)).collect();
            let (mean, std) = mean_std(&values);
            MetricSummary { metric: name.to_string(), mean, std, splits: values.len() }
        })
        .collect()
}
