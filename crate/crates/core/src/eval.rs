//! Inference-time feature fusion, retrieval ranking, CMC/mAP scoring, the
//! scatter-matrix class-separability criterion and report assembly.
//!
//! Retrieval is image-to-image: each query is ranked against the gallery
//! and gallery entries sharing the query's sample id are skipped, so a
//! dataset can be evaluated against itself without trivial self-matches.
//! For the separability criterion only the scatter traces are ever
//! materialized; the full d×d matrices never exist.

use crate::data::Dataset;
use crate::losses::LossError;
use crate::model::{forward_full, Checkpoint, ModelError};
use crate::numerics::{dot, euclidean, l2_normalize, Matrix, NumericsError, NORM_EPSILON};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("query label {label} absent from gallery")]
    LabelAbsentFromGallery { label: u32 },
    #[error("separability needs at least two classes")]
    SingleClass,
    #[error("within-class scatter trace {trace:e} is at or below the degeneracy guard")]
    DegenerateWithinScatter { trace: f64 },
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Order of normalization (n) and averaging (a) when combining the global
/// and cross-view features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    /// Normalize each feature, then average. The default: both inputs get
    /// equal say regardless of their norms.
    Na,
    /// Average raw features, then normalize; biased toward the
    /// larger-norm feature.
    An,
    /// Normalize, average, normalize again: the `na` direction pushed back
    /// onto the unit sphere.
    Nan,
}

impl std::fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionVariant::Na => "na",
            FusionVariant::An => "an",
            FusionVariant::Nan => "nan",
        })
    }
}

impl std::str::FromStr for FusionVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "na" => Ok(FusionVariant::Na),
            "an" => Ok(FusionVariant::An),
            "nan" => Ok(FusionVariant::Nan),
            other => Err(format!("unknown fusion variant {other:?}")),
        }
    }
}

/// Distance convention for ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Ascending Euclidean distance.
    Euclidean,
    /// Descending dot-product similarity.
    Dot,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Dot => "dot",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "dot" => Ok(Metric::Dot),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

/// Which feature population an embedding set holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Baseline,
    CrossView,
    Fused,
}

impl std::fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureSource::Baseline => "baseline",
            FeatureSource::CrossView => "cross_view",
            FeatureSource::Fused => "fused",
        })
    }
}

/// Feature vectors with aligned labels and sample ids; the unit of all
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub features: Matrix,
    pub labels: Vec<u32>,
    pub sample_ids: Vec<u64>,
    pub source: FeatureSource,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Scatter decomposition: between-class and within-class traces and their
/// ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterStats {
    pub trace_sb: f64,
    pub trace_sw: f64,
    pub csc: f64,
    pub class_means: Vec<(u32, Vec<f64>)>,
    pub global_mean: Vec<f64>,
    pub class_probs: Vec<(u32, f64)>,
}

/// Fuses a global and a cross-view feature.
pub fn fuse(x_g: &[f64], x_cv: &[f64], variant: FusionVariant) -> Result<Vec<f64>, NumericsError> {
    if x_g.len() != x_cv.len() {
        return Err(NumericsError::DimMismatch {
            left: x_g.len(),
            right: x_cv.len(),
        });
    }
    match variant {
        FusionVariant::Na => {
            let a = l2_normalize(x_g)?;
            let b = l2_normalize(x_cv)?;
            Ok(a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect())
        }
        FusionVariant::An => {
            let avg: Vec<f64> = x_g.iter().zip(x_cv).map(|(x, y)| 0.5 * (x + y)).collect();
            l2_normalize(&avg)
        }
        FusionVariant::Nan => {
            let na = fuse(x_g, x_cv, FusionVariant::Na)?;
            l2_normalize(&na)
        }
    }
}

/// Gallery indices ranked best-first for one query; ties break toward the
/// lower gallery index. `exclude_sample_id` drops colliding gallery rows.
fn rank_filtered(
    query: &[f64],
    gallery: &EmbeddingSet,
    metric: Metric,
    exclude_sample_id: Option<u64>,
) -> Result<Vec<usize>, EvalError> {
    if query.len() != gallery.features.cols() {
        return Err(NumericsError::DimMismatch {
            left: query.len(),
            right: gallery.features.cols(),
        }
        .into());
    }
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(gallery.len());
    for j in 0..gallery.len() {
        if exclude_sample_id == Some(gallery.sample_ids[j]) {
            continue;
        }
        let row = gallery.features.row(j);
        let key = match metric {
            Metric::Euclidean => euclidean(query, row),
            Metric::Dot => -dot(query, row),
        };
        keyed.push((key, j));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().map(|(_, j)| j).collect())
}

/// Ranks the whole gallery against one query vector.
pub fn rank_gallery(
    query: &[f64],
    gallery: &EmbeddingSet,
    metric: Metric,
) -> Result<Vec<usize>, EvalError> {
    rank_filtered(query, gallery, metric, None)
}

fn rankings(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    metric: Metric,
) -> Result<Vec<Vec<usize>>, EvalError> {
    (0..queries.len())
        .map(|i| {
            let ranked = rank_filtered(
                queries.features.row(i),
                gallery,
                metric,
                Some(queries.sample_ids[i]),
            )?;
            if !ranked.iter().any(|&j| gallery.labels[j] == queries.labels[i]) {
                return Err(EvalError::LabelAbsentFromGallery {
                    label: queries.labels[i],
                });
            }
            Ok(ranked)
        })
        .collect()
}

/// Cumulative match curve at the requested ranks: entry r is the fraction
/// of queries whose first correct match appears within the top `ranks[r]`.
pub fn cmc(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    ranks: &[usize],
    metric: Metric,
) -> Result<Vec<f64>, EvalError> {
    let ranked = rankings(queries, gallery, metric)?;
    let mut hits = vec![0usize; ranks.len()];
    for (i, order) in ranked.iter().enumerate() {
        let first_correct = order
            .iter()
            .position(|&j| gallery.labels[j] == queries.labels[i])
            .expect("validated by rankings");
        for (slot, &r) in ranks.iter().enumerate() {
            if first_correct < r {
                hits[slot] += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|h| h as f64 / queries.len() as f64)
        .collect())
}

/// Mean average precision: per query, the mean of precision measured at
/// each relevant item's rank, averaged over queries.
pub fn mean_ap(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    metric: Metric,
) -> Result<f64, EvalError> {
    let ranked = rankings(queries, gallery, metric)?;
    let mut ap_sum = 0.0;
    for (i, order) in ranked.iter().enumerate() {
        let mut relevant_seen = 0usize;
        let mut precision_sum = 0.0;
        for (pos, &j) in order.iter().enumerate() {
            if gallery.labels[j] == queries.labels[i] {
                relevant_seen += 1;
                precision_sum += relevant_seen as f64 / (pos + 1) as f64;
            }
        }
        ap_sum += precision_sum / relevant_seen as f64;
    }
    Ok(ap_sum / queries.len() as f64)
}

/// Class-separability criterion: trace of the between-class scatter over
/// trace of the within-class scatter, with empirical class frequencies as
/// the class probabilities.
pub fn csc(e: &EmbeddingSet) -> Result<ScatterStats, EvalError> {
    let n = e.len();
    let d = e.features.cols();
    let mut by_class: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &l) in e.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(EvalError::SingleClass);
    }

    let mut global_mean = vec![0.0; d];
    for i in 0..n {
        for (g, v) in global_mean.iter_mut().zip(e.features.row(i)) {
            *g += v;
        }
    }
    for g in global_mean.iter_mut() {
        *g /= n as f64;
    }

    let mut trace_sb = 0.0;
    let mut trace_sw = 0.0;
    let mut class_means = Vec::with_capacity(by_class.len());
    let mut class_probs = Vec::with_capacity(by_class.len());
    for (&label, members) in &by_class {
        let prob = members.len() as f64 / n as f64;
        let mut mean = vec![0.0; d];
        for &i in members {
            for (m, v) in mean.iter_mut().zip(e.features.row(i)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= members.len() as f64;
        }
        trace_sb += prob
            * mean
                .iter()
                .zip(&global_mean)
                .map(|(m, g)| (m - g) * (m - g))
                .sum::<f64>();
        let within: f64 = members
            .iter()
            .map(|&i| {
                e.features
                    .row(i)
                    .iter()
                    .zip(&mean)
                    .map(|(v, m)| (v - m) * (v - m))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / members.len() as f64;
        trace_sw += prob * within;
        class_means.push((label, mean));
        class_probs.push((label, prob));
    }

    if trace_sw <= NORM_EPSILON {
        return Err(EvalError::DegenerateWithinScatter { trace: trace_sw });
    }
    Ok(ScatterStats {
        trace_sb,
        trace_sw,
        csc: trace_sb / trace_sw,
        class_means,
        global_mean,
        class_probs,
    })
}

/// One evaluation run: CMC at 1/5/10, mAP, scatter stats and the
/// configuration fingerprint.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub cmc1: f64,
    pub cmc5: f64,
    pub cmc10: f64,
    pub map: f64,
    pub csc: CscReport,
    /// `"baseline"` or the fusion variant that produced the ranked features.
    pub variant: String,
    pub metric: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CscReport {
    pub trace_sb: f64,
    pub trace_sw: f64,
    pub value: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub const CSV_HEADER: &'static str =
        "cmc1,cmc5,cmc10,map,trace_sb,trace_sw,csc,variant,metric,fingerprint";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.cmc1,
            self.cmc5,
            self.cmc10,
            self.map,
            self.csc.trace_sb,
            self.csc.trace_sw,
            self.csc.value,
            self.variant,
            self.metric,
            self.fingerprint
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        std::fs::write(path, format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row()))?;
        Ok(())
    }
}

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn fingerprint(ckpt: &Checkpoint, variant: &str, metric: Metric, dims: (usize, usize)) -> String {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for (_, t) in ckpt.params.tensors() {
        for v in t {
            h = fnv1a(&v.to_le_bytes(), h);
        }
    }
    h = fnv1a(variant.as_bytes(), h);
    h = fnv1a(metric.to_string().as_bytes(), h);
    h = fnv1a(&(dims.0 as u64).to_le_bytes(), h);
    h = fnv1a(&(dims.1 as u64).to_le_bytes(), h);
    format!("{h:016x}")
}

/// Computes the requested feature population for a dataset. Baseline
/// features are the L2-normalized global features (normalization belongs
/// to inference); cross-view features are raw; fused features combine the
/// two parts per the variant.
pub fn embed_dataset(
    ckpt: &Checkpoint,
    ds: &Dataset,
    source: FeatureSource,
    variant: FusionVariant,
) -> Result<EmbeddingSet, EvalError> {
    if ds.obs_dim != ckpt.arch.obs_dim {
        return Err(EvalError::ArchMismatch(format!(
            "dataset obs_dim {} but checkpoint expects {}",
            ds.obs_dim, ckpt.arch.obs_dim
        )));
    }
    let obs = ds.observation_matrix();
    let want_wcvl = !matches!(source, FeatureSource::Baseline);
    let (out, _) = forward_full(&ckpt.params, &obs, false, want_wcvl)?;
    let n = ds.records.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let x_g = out.x_g.row(i);
        let row = match source {
            FeatureSource::Baseline => l2_normalize(x_g)?,
            FeatureSource::CrossView => out.x_cv.as_ref().expect("requested").row(i).to_vec(),
            FeatureSource::Fused => {
                let x_cv = out.x_cv.as_ref().expect("requested").row(i);
                fuse(x_g, x_cv, variant)?
            }
        };
        rows.push(row);
    }
    Ok(EmbeddingSet {
        features: Matrix::from_rows(&rows),
        labels: ds.labels(),
        sample_ids: ds.records.iter().map(|r| r.sample_id).collect(),
        source,
    })
}

/// Full evaluation: embeds queries and gallery, ranks, and assembles the
/// report. Without a cross-view checkpoint the baseline features are
/// scored; with one, the fused features are. The scatter criterion is
/// computed over the query+gallery population actually ranked.
pub fn evaluate(
    main_ckpt: &Checkpoint,
    wcvl_ckpt: Option<&Checkpoint>,
    query_ds: &Dataset,
    gallery_ds: &Dataset,
    variant: FusionVariant,
    metric: Metric,
) -> Result<EvalReport, EvalError> {
    if query_ds.obs_dim != gallery_ds.obs_dim {
        return Err(EvalError::ArchMismatch(format!(
            "query obs_dim {} but gallery obs_dim {}",
            query_ds.obs_dim, gallery_ds.obs_dim
        )));
    }
    let (ckpt, source, variant_name) = match wcvl_ckpt {
        // The cross-view checkpoint carries the whole encoder (its main
        // module equals the baseline bit-for-bit after pluggable training),
        // so fused evaluation reads every feature from it.
        Some(w) => {
            if w.arch.obs_dim != main_ckpt.arch.obs_dim
                || w.arch.main_head_layers.last() != main_ckpt.arch.main_head_layers.last()
            {
                return Err(EvalError::ArchMismatch(
                    "cross-view checkpoint does not match the main checkpoint".into(),
                ));
            }
            (w, FeatureSource::Fused, variant.to_string())
        }
        None => (main_ckpt, FeatureSource::Baseline, "baseline".to_string()),
    };

    let queries = embed_dataset(ckpt, query_ds, source, variant)?;
    let gallery = embed_dataset(ckpt, gallery_ds, source, variant)?;

    let cmc_vals = cmc(&queries, &gallery, &[1, 5, 10], metric)?;
    let map = mean_ap(&queries, &gallery, metric)?;

    // Separability over the whole evaluated population.
    let mut all_rows: Vec<Vec<f64>> = Vec::with_capacity(queries.len() + gallery.len());
    let mut all_labels = Vec::with_capacity(queries.len() + gallery.len());
    for i in 0..queries.len() {
        all_rows.push(queries.features.row(i).to_vec());
        all_labels.push(queries.labels[i]);
    }
    for i in 0..gallery.len() {
        all_rows.push(gallery.features.row(i).to_vec());
        all_labels.push(gallery.labels[i]);
    }
    let population = EmbeddingSet {
        features: Matrix::from_rows(&all_rows),
        labels: all_labels,
        sample_ids: (0..).take(queries.len() + gallery.len()).collect(),
        source,
    };
    let scatter = csc(&population)?;

    Ok(EvalReport {
        cmc1: cmc_vals[0],
        cmc5: cmc_vals[1],
        cmc10: cmc_vals[2],
        map,
        csc: CscReport {
            trace_sb: scatter.trace_sb,
            trace_sw: scatter.trace_sw,
            value: scatter.csc,
        },
        variant: variant_name.clone(),
        metric: metric.to_string(),
        fingerprint: fingerprint(
            ckpt,
            &variant_name,
            metric,
            (query_ds.records.len(), gallery_ds.records.len()),
        ),
    })
}

/// Writes raw embeddings as CSV: `sample_id,identity,source,f_0..f_{d-1}`.
pub fn dump_embeddings(sets: &[EmbeddingSet], path: &Path) -> Result<(), EvalError> {
    let dim = sets.first().map_or(0, |s| s.features.cols());
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "sample_id,identity,source")?;
    for d in 0..dim {
        write!(w, ",f_{d}")?;
    }
    writeln!(w)?;
    for set in sets {
        for i in 0..set.len() {
            write!(w, "{},{},{}", set.sample_ids[i], set.labels[i], set.source)?;
            for v in set.features.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    use std::sync::atomic::{AtomicU64, Ordering};

    static NEXT_SAMPLE_ID: AtomicU64 = AtomicU64::new(1000);

    /// Builds a set with globally unique sample ids, so queries and
    /// galleries from separate calls never collide.
    fn set_from(rows: &[Vec<f64>], labels: &[u32], source: FeatureSource) -> EmbeddingSet {
        let base = NEXT_SAMPLE_ID.fetch_add(labels.len() as u64, Ordering::Relaxed);
        EmbeddingSet {
            features: Matrix::from_rows(rows),
            labels: labels.to_vec(),
            sample_ids: (0..labels.len() as u64).map(|i| base + i).collect(),
            source,
        }
    }

    #[test]
    fn fuse_na_orthogonal_axes() {
        let out = fuse(&[3.0, 0.0], &[0.0, 4.0], FusionVariant::Na).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-12);
        assert!((out[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fuse_an_leans_toward_larger_norm() {
        let out = fuse(&[3.0, 0.0], &[0.0, 4.0], FusionVariant::An).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-12);
        assert!((out[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn fuse_nan_is_unit_diagonal() {
        let out = fuse(&[3.0, 0.0], &[0.0, 4.0], FusionVariant::Nan).unwrap();
        let e = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out[0] - e).abs() < 1e-12);
        assert!((out[1] - e).abs() < 1e-12);
    }

    #[test]
    fn fuse_na_is_scale_invariant_an_is_not() {
        let mut rng = SeededRng::new(3);
        let mut an_differs = false;
        for _ in 0..200 {
            let a: Vec<f64> = (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect();
            if crate::numerics::l2_norm(&a) < 0.1 || crate::numerics::l2_norm(&b) < 0.1 {
                continue;
            }
            let (sa, sb) = (rng.uniform(0.1, 5.0), rng.uniform(0.1, 5.0));
            let a2: Vec<f64> = a.iter().map(|v| v * sa).collect();
            let b2: Vec<f64> = b.iter().map(|v| v * sb).collect();
            let na = fuse(&a, &b, FusionVariant::Na).unwrap();
            let na_scaled = fuse(&a2, &b2, FusionVariant::Na).unwrap();
            for (x, y) in na.iter().zip(&na_scaled) {
                assert!((x - y).abs() <= 1e-12);
            }
            let an = fuse(&a, &b, FusionVariant::An).unwrap();
            let an_scaled = fuse(&a2, &b2, FusionVariant::An).unwrap();
            if an.iter().zip(&an_scaled).any(|(x, y)| (x - y).abs() > 1e-6) {
                an_differs = true;
            }
        }
        assert!(an_differs, "an fusion never noticed input rescaling");
    }

    #[test]
    fn fuse_na_norm_bounded_by_one() {
        let mut rng = SeededRng::new(5);
        for _ in 0..500 {
            let a: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
            if crate::numerics::l2_norm(&a) < 0.1 || crate::numerics::l2_norm(&b) < 0.1 {
                continue;
            }
            let na = fuse(&a, &b, FusionVariant::Na).unwrap();
            assert!(crate::numerics::l2_norm(&na) <= 1.0 + 1e-12);
        }
        // Equality exactly when the inputs are positively parallel.
        let na = fuse(&[2.0, 0.0], &[5.0, 0.0], FusionVariant::Na).unwrap();
        assert!((crate::numerics::l2_norm(&na) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fuse_rejects_degenerate_inputs() {
        assert!(fuse(&[0.0, 0.0], &[1.0, 0.0], FusionVariant::Na).is_err());
        assert!(fuse(&[1.0], &[1.0, 2.0], FusionVariant::Na).is_err());
    }

    #[test]
    fn rank_places_exact_match_first() {
        let gallery = set_from(
            &[vec![5.0, 5.0], vec![1.0, 2.0], vec![0.0, 0.0]],
            &[0, 1, 2],
            FeatureSource::Baseline,
        );
        let ranked = rank_gallery(&[1.0, 2.0], &gallery, Metric::Euclidean).unwrap();
        assert_eq!(ranked[0], 1);
    }

    #[test]
    fn rank_three_item_hand_case() {
        let gallery = set_from(
            &[vec![3.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]],
            &[0, 1, 2],
            FeatureSource::Baseline,
        );
        let ranked = rank_gallery(&[0.0, 0.0], &gallery, Metric::Euclidean).unwrap();
        assert_eq!(ranked, vec![1, 2, 0]);
        // Descending dot product reverses this line's order.
        let by_dot = rank_gallery(&[1.0, 0.0], &gallery, Metric::Dot).unwrap();
        assert_eq!(by_dot, vec![0, 2, 1]);
    }

    #[test]
    fn unit_norm_gallery_rankings_agree_across_metrics() {
        let mut rng = SeededRng::new(7);
        for _ in 0..100 {
            let rows: Vec<Vec<f64>> = (0..8)
                .map(|_| {
                    let v: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
                    l2_normalize(&v).unwrap()
                })
                .collect();
            let gallery = set_from(&rows, &[0, 0, 1, 1, 2, 2, 3, 3], FeatureSource::Baseline);
            let q: Vec<f64> = {
                let v: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
                l2_normalize(&v).unwrap()
            };
            let a = rank_gallery(&q, &gallery, Metric::Euclidean).unwrap();
            let b = rank_gallery(&q, &gallery, Metric::Dot).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cmc_perfect_retrieval_is_one() {
        let queries = set_from(
            &[vec![0.0, 0.0], vec![10.0, 0.0]],
            &[0, 1],
            FeatureSource::Baseline,
        );
        let gallery = set_from(
            &[vec![0.1, 0.0], vec![9.9, 0.0], vec![5.0, 5.0]],
            &[0, 1, 2],
            FeatureSource::Baseline,
        );
        let c = cmc(&queries, &gallery, &[1, 5], Metric::Euclidean).unwrap();
        assert_eq!(c, vec![1.0, 1.0]);
    }

    #[test]
    fn cmc_hand_case_first_correct_at_ranks_one_and_three() {
        // Query 0 hits at rank 1; query 1's correct item lands at rank 3.
        let queries = set_from(&[vec![0.0], vec![10.0]], &[0, 1], FeatureSource::Baseline);
        let gallery = set_from(
            &[vec![0.1], vec![10.2], vec![10.1], vec![10.4]],
            &[0, 2, 3, 1],
            FeatureSource::Baseline,
        );
        let c = cmc(&queries, &gallery, &[1, 5], Metric::Euclidean).unwrap();
        assert_eq!(c, vec![0.5, 1.0]);
    }

    #[test]
    fn cmc_is_non_decreasing_in_rank() {
        let mut rng = SeededRng::new(9);
        for _ in 0..50 {
            let qrows: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.normal(), rng.normal()]).collect();
            let grows: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.normal(), rng.normal()]).collect();
            let queries = set_from(&qrows, &[0, 1, 2, 0, 1, 2], FeatureSource::Baseline);
            let gallery = set_from(
                &grows,
                &[0, 0, 1, 1, 2, 2, 0, 1, 2, 0, 1, 2],
                FeatureSource::Baseline,
            );
            let c = cmc(&queries, &gallery, &[1, 2, 3, 5, 8, 12], Metric::Euclidean).unwrap();
            for w in c.windows(2) {
                assert!(w[0] <= w[1] + 1e-15);
            }
        }
    }

    #[test]
    fn cmc_rejects_absent_label() {
        let queries = set_from(&[vec![0.0]], &[9], FeatureSource::Baseline);
        let gallery = set_from(&[vec![0.0], vec![1.0]], &[0, 1], FeatureSource::Baseline);
        assert!(matches!(
            cmc(&queries, &gallery, &[1], Metric::Euclidean),
            Err(EvalError::LabelAbsentFromGallery { label: 9 })
        ));
    }

    #[test]
    fn mean_ap_hand_case() {
        // Single query; relevant items end up at ranks 1 and 3.
        let queries = set_from(&[vec![0.0]], &[0], FeatureSource::Baseline);
        let gallery = set_from(
            &[vec![0.1], vec![0.2], vec![0.3]],
            &[0, 1, 0],
            FeatureSource::Baseline,
        );
        let ap = mean_ap(&queries, &gallery, Metric::Euclidean).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn mean_ap_perfect_ranking_is_one() {
        let queries = set_from(&[vec![0.0]], &[0], FeatureSource::Baseline);
        let gallery = set_from(
            &[vec![0.1], vec![0.2], vec![5.0], vec![6.0]],
            &[0, 0, 1, 1],
            FeatureSource::Baseline,
        );
        assert!((mean_ap(&queries, &gallery, Metric::Euclidean).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_ap_single_relevant_ranked_last() {
        let queries = set_from(&[vec![0.0]], &[0], FeatureSource::Baseline);
        let gallery = set_from(
            &[vec![1.0], vec![2.0], vec![3.0], vec![9.0]],
            &[1, 1, 1, 0],
            FeatureSource::Baseline,
        );
        let ap = mean_ap(&queries, &gallery, Metric::Euclidean).unwrap();
        assert!((ap - 0.25).abs() < 1e-12);
    }

    #[test]
    fn self_matches_are_excluded_by_sample_id() {
        let mut queries = set_from(&[vec![0.0, 0.0]], &[0], FeatureSource::Baseline);
        let gallery = set_from(
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]],
            &[0, 0, 1],
            FeatureSource::Baseline,
        );
        queries.sample_ids[0] = gallery.sample_ids[0];
        let c = cmc(&queries, &gallery, &[1], Metric::Euclidean).unwrap();
        // The coincident row is skipped; the correct match is row 1.
        assert_eq!(c, vec![1.0]);
        let ap = mean_ap(&queries, &gallery, Metric::Euclidean).unwrap();
        assert!((ap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csc_hand_scatter_case() {
        let e = set_from(
            &[vec![0.5], vec![1.5], vec![-0.5], vec![-1.5]],
            &[0, 0, 1, 1],
            FeatureSource::Baseline,
        );
        let s = csc(&e).unwrap();
        assert!((s.trace_sb - 1.0).abs() < 1e-12);
        assert!((s.trace_sw - 0.25).abs() < 1e-12);
        assert!((s.csc - 4.0).abs() < 1e-12);
    }

    #[test]
    fn csc_zero_between_scatter_when_means_coincide() {
        let e = set_from(
            &[vec![1.0], vec![-1.0], vec![2.0], vec![-2.0]],
            &[0, 0, 1, 1],
            FeatureSource::Baseline,
        );
        let s = csc(&e).unwrap();
        assert_eq!(s.trace_sb, 0.0);
        assert_eq!(s.csc, 0.0);
    }

    #[test]
    fn csc_errors() {
        let single = set_from(&[vec![0.0], vec![1.0]], &[0, 0], FeatureSource::Baseline);
        assert!(matches!(csc(&single), Err(EvalError::SingleClass)));
        let degenerate = set_from(
            &[vec![1.0], vec![1.0], vec![2.0], vec![2.0]],
            &[0, 0, 1, 1],
            FeatureSource::Baseline,
        );
        assert!(matches!(
            csc(&degenerate),
            Err(EvalError::DegenerateWithinScatter { .. })
        ));
    }

    #[test]
    fn embed_rejects_mismatched_observation_dim() {
        let arch = crate::model::ArchConfig {
            obs_dim: 6,
            trunk_layers: vec![8],
            shared_depth: 1,
            main_head_layers: vec![6, 4],
            wcvl_head_layers: vec![6, 4],
        };
        let params = crate::model::init_params(&arch, 3, &mut SeededRng::new(9)).unwrap();
        let ckpt = crate::model::Checkpoint {
            arch,
            meta: crate::model::CheckpointMeta {
                stage: crate::model::StageTag::Main,
                epoch: 0,
                seed: 0,
                loss_history: vec![],
            },
            params,
        };
        let ds = crate::data::generate_synthetic(
            &crate::data::GenConfig {
                num_identities: 4,
                views_per_id: 2,
                obs_dim: 5,
                id_scale: 1.0,
                view_scale: 4.0,
                noise_scale: 0.1,
                seed: 2,
            },
            7,
        )
        .unwrap();
        assert!(matches!(
            embed_dataset(&ckpt, &ds, FeatureSource::Baseline, FusionVariant::Na),
            Err(EvalError::ArchMismatch(_))
        ));
    }

    #[test]
    fn csc_traces_satisfy_total_variance_law() {
        let mut rng = SeededRng::new(11);
        for _ in 0..50 {
            let n = 20;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect())
                .collect();
            let labels: Vec<u32> = (0..n).map(|i| (i % 4) as u32).collect();
            let e = set_from(&rows, &labels, FeatureSource::Baseline);
            let s = csc(&e).unwrap();
            let total: f64 = (0..n)
                .map(|i| {
                    e.features
                        .row(i)
                        .iter()
                        .zip(&s.global_mean)
                        .map(|(v, g)| (v - g) * (v - g))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / n as f64;
            assert!((s.trace_sb + s.trace_sw - total).abs() < 1e-9);
        }
    }
}
