//! Seeded generators for embeddings, protocols, score matrices, tracking
//! scenarios and landmark corpora.

mod clusters;
mod protocol;
mod scenario;
mod scores;
mod shapes;

pub use clusters::{gen_clusters, subject_label, ClusterData, ClusterSpec, MediaLayout};
pub use protocol::gen_protocol;
pub use scenario::{gen_tracking_scenario, Scenario, ScenarioScript, ScriptedSubject};
pub use scores::{gen_complementary_scores, ComplementaryScores};
pub use shapes::{gen_shape_corpus, mean_face, render_blobs, unit_face, ShapeCorpusSpec};
