#pragma once

#include "recdemand/demand.hpp"
#include "recdemand/estimation.hpp"
#include "recdemand/log.hpp"
#include "recdemand/parameters.hpp"

namespace recdemand {

// Predictor of which goods the recommender will show a user: per-good
// Bernoulli probability sigmoid(state . embedding + bias), with its own
// copy of the sequence architecture to form the state from watch history.
struct RecModel {
    RowMat embeddings;  // J x d
    Vec bias;           // J
    SequenceWeights seq;
    Vec default_state;

    int n_goods() const { return static_cast<int>(embeddings.rows()); }
    int dim() const { return static_cast<int>(embeddings.cols()); }
    int max_len() const { return seq.max_len(); }

    static RecModel shaped(int n_goods, int dim, int max_len, int hidden1, int hidden2);

    Vec to_vector() const;
    void from_vector(const Vec& flat);
    long long parameter_count() const;

    // State for a history window of catalog rows.
    Vec state(std::span<const int> history_rows) const;
    // Recommendation probabilities for all goods given a state.
    Vec scores(const Vec& state) const;
};

// Sum over user-days and goods of the Bernoulli log-likelihood of page
// membership, minus l2 * ||theta||^2.
double rec_objective(std::span<const TrainingEvent> batch, const RecModel& model, double l2);

// Exact gradient of rec_objective (flattened, same layout as to_vector).
Vec rec_gradient(std::span<const TrainingEvent> batch, const RecModel& model, double l2);

struct RecFitResult {
    RecModel model;
    std::vector<double> train_loss;  // mean negative log-likelihood per user-day
};

// Mini-batch gradient ascent with the same optimizer options as fit().
RecFitResult fit_rec_model(const InteractionLog& log, const Catalog& catalog,
                           const TrainingConfig& config);

}  // namespace recdemand
