#pragma once

#include <unordered_map>

#include "recdemand/estimation.hpp"
#include "recdemand/parameters.hpp"

namespace recdemand {

// Fixed pre-consumption good representations, possibly covering goods that
// are not (yet) in the catalog.
struct ExogenousEmbeddingTable {
    std::unordered_map<GoodId, Vec> raw;
    int raw_dim = 0;

    const Vec& at(GoodId id) const;
    bool has(GoodId id) const { return raw.count(id) != 0; }
    void insert(GoodId id, Vec v);
    void validate() const;  // uniform dimension, finite entries
};

// Two-layer map from the raw representation to the model's embedding space,
// trained jointly with the rest of the demand model.
struct ProjectionWeights {
    Mat p1;  // hidden x raw_dim
    Vec q1;  // hidden
    Mat p2;  // d x hidden
    Vec q2;  // d

    int raw_dim() const { return static_cast<int>(p1.cols()); }
    int hidden() const { return static_cast<int>(p1.rows()); }
    int dim() const { return static_cast<int>(p2.rows()); }

    static ProjectionWeights shaped(int raw_dim, int hidden, int dim);
    Vec to_vector() const;
    void from_vector(const Vec& flat);
    long long parameter_count() const;
};

Vec project(const Vec& raw, const ProjectionWeights& proj);

// d/dproj of sum(dout . project(raw)); returns d objective/d raw is not
// needed (raw embeddings are fixed by construction).
void project_backward(const Vec& raw, const ProjectionWeights& proj, const Vec& dout,
                      ProjectionWeights& grad);

// Embedding matrix for the catalog rows selected by `mask` (1 = projected);
// other rows are copied from `fallback`.
RowMat project_catalog(const Catalog& catalog, const ExogenousEmbeddingTable& table,
                       const ProjectionWeights& proj, const std::vector<char>& mask,
                       const RowMat& fallback);

struct ExogenousFitResult {
    ModelParameters params;  // embeddings = projected raw table
    ProjectionWeights projection;
    FitReport report;
};

// Demand fit with fixed raw embeddings: the projection, slot bonuses and
// sequence weights train jointly; embedding rows are recomputed from the
// projection each step and never free parameters. `projected_mask` selects
// which catalog rows are tied to the table (all rows when empty); unmasked
// rows train endogenously as in fit().
ExogenousFitResult fit_exogenous(const InteractionLog& log, const Catalog& catalog,
                                 const ExogenousEmbeddingTable& table,
                                 const TrainingConfig& config, int projection_hidden,
                                 const std::vector<char>& projected_mask = {});

struct SplitGoodsResult {
    ExogenousFitResult fit;          // trained split model, embeddings as trained
    ModelParameters swapped_params;  // all embeddings replaced by projections
    std::vector<char> out_of_sample;  // catalog rows whose embeddings were swapped
    double in_sample_share_r2 = 0.0;   // log-share R^2 over in-sample goods
    double out_sample_share_r2 = 0.0;  // same over swapped goods
    double baseline_share_r2 = 0.0;    // constant (mean log-share) predictor
    HoldoutMetrics metrics;            // full-log metrics of the swapped model
};

// Randomly splits goods: a fraction learns endogenous embeddings during
// training, the rest tie theirs to the projected table. At evaluation all
// embeddings are replaced by projections; the endogenous group is then out
// of sample. Fraction 0 ties every good to the table, so the evaluation
// model is the trained model itself.
SplitGoodsResult split_goods_crossvalidation(const InteractionLog& log, const Catalog& catalog,
                                             const ExogenousEmbeddingTable& table,
                                             const TrainingConfig& config, int projection_hidden,
                                             double out_of_sample_fraction, Rng& rng);

// Synthetic raw table for testing and demos: the reference embeddings padded
// with noise dimensions and rotated by a random orthogonal map, so a learned
// projection can recover them.
ExogenousEmbeddingTable synthetic_embedding_table(const Catalog& catalog,
                                                  const RowMat& reference_embeddings, int raw_dim,
                                                  double noise_scale, Rng& rng);

}  // namespace recdemand
