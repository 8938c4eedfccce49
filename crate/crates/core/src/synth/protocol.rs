use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::data::{seeded_rng, Template};
use crate::error::{Error, Result};
use crate::eval::{Protocol, Split};

/// Subject-disjoint splits. Each split shuffles subjects, sends
/// `train_fraction` of them to training and the rest to test; test subjects
/// enroll their first template in the gallery and probe with the others.
/// With `impostor_fraction > 0`, that share of test subjects is kept out of
/// the gallery so their probes act as open-set impostors.
pub fn gen_protocol(
    templates: &[Template],
    splits: usize,
    train_fraction: f64,
    impostor_fraction: f64,
    seed: u64,
) -> Result<Protocol> {
    if splits == 0 || !(0.0..1.0).contains(&train_fraction) || !(0.0..1.0).contains(&impostor_fraction) {
        return Err(Error::Config("need splits > 0 and fractions in [0, 1)".into()));
    }
    let mut by_subject: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in templates {
        by_subject.entry(t.subject_id.as_str()).or_default().push(t.template_id.as_str());
    }
    let subjects: Vec<&str> = by_subject.keys().copied().collect();
    let n_train = (subjects.len() as f64 * train_fraction).round() as usize;
    let n_test = subjects.len() - n_train;
    let n_impostor = (n_test as f64 * impostor_fraction).round() as usize;
    if n_test < 2 || n_impostor >= n_test {
        return Err(Error::Config(format!("{} subjects leave too few for testing", subjects.len())));
    }
    let mut rng = seeded_rng(seed);
    let mut out = Vec::with_capacity(splits);
    for index in 0..splits {
        let mut order = subjects.clone();
        order.shuffle(&mut rng);
        let mut split = Split { index, ..Default::default() };
        for (k, s) in order.iter().enumerate() {
            let ids = &by_subject[s];
            if k < n_train {
                split.train.extend(ids.iter().map(|i| i.to_string()));
            } else if k < n_train + n_impostor {
                split.probe.extend(ids.iter().map(|i| i.to_string()));
            } else {
                split.gallery.push(ids[0].to_string());
                split.probe.extend(ids[1..].iter().map(|i| i.to_string()));
            }
        }
        out.push(split);
    }
    Ok(Protocol { splits: out })
}
