use rand::Rng;

use crate::data::{seeded_rng, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::eval::SubjectLabels;

/// Two score matrices over the same gallery/probe layout whose errors hit
/// disjoint probes.
#[derive(Debug, Clone)]
pub struct ComplementaryScores {
    pub first: SimilarityMatrix,
    pub second: SimilarityMatrix,
    pub labels: SubjectLabels,
    /// Probes whose genuine score is corrupted in `first` and in `second`.
    pub first_errors: Vec<usize>,
    pub second_errors: Vec<usize>,
}

/// One gallery and one probe template per subject. Genuine scores sit near
/// 0.8 and impostor scores near 0.2 (uniform jitter of `jitter`). The first
/// third of probes has its genuine score dropped to 0.1 in `first`, the
/// second third in `second`.
pub fn gen_complementary_scores(subjects: usize, jitter: f64, seed: u64) -> Result<ComplementaryScores> {
    if subjects < 3 {
        return Err(Error::Config("complementary scenario needs >= 3 subjects".into()));
    }
    if !(0.0..0.3).contains(&jitter) {
        return Err(Error::Config("jitter must be in [0, 0.3)".into()));
    }
    let mut rng = seeded_rng(seed);
    let third = subjects / 3;
    let first_errors: Vec<usize> = (0..third).collect();
    let second_errors: Vec<usize> = (third..2 * third).collect();
    let draw = |errors: &[usize], rng: &mut _| -> Vec<Option<f64>> {
        let mut scores = Vec::with_capacity(subjects * subjects);
        for g in 0..subjects {
            for p in 0..subjects {
                let j = jitter_draw(rng, jitter);
                scores.push(Some(match (g == p, errors.contains(&p)) {
                    (true, true) => 0.1,
                    (true, false) => 0.8 + j,
                    (false, _) => 0.2 + j,
                }));
            }
        }
        scores
    };
    let a = draw(&first_errors, &mut rng);
    let b = draw(&second_errors, &mut rng);
    let gallery: Vec<String> = (0..subjects).map(|s| format!("g{s:03}")).collect();
    let probe: Vec<String> = (0..subjects).map(|s| format!("p{s:03}")).collect();
    let subjects_ids: Vec<String> = (0..subjects).map(super::subject_label).collect();
    Ok(ComplementaryScores {
        first: SimilarityMatrix::new(gallery.clone(), probe.clone(), a)?,
        second: SimilarityMatrix::new(gallery, probe, b)?,
        labels: SubjectLabels { gallery: subjects_ids.clone(), probe: subjects_ids },
        first_errors,
        second_errors,
    })
}

fn jitter_draw(rng: &mut crate::data::SeededRng, jitter: f64) -> f64 {
    if jitter == 0.0 {
        0.0
    } else {
        rng.random_range(-jitter..jitter)
    }
}
