#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "recdemand/demand.hpp"
#include "recdemand/log.hpp"
#include "recdemand/parameters.hpp"
#include "recdemand/rng.hpp"

namespace recdemand {

struct TrainingConfig {
    int embedding_dim = 8;
    double learning_rate = 0.05;
    double lr_decay = 1.0;  // multiplicative per-epoch step decay
    int batch_size = 256;
    int epochs = 20;
    double l2_penalty = 1e-6;  // quadratic penalty coefficient per event
    std::uint64_t seed = 0;
    int max_len = 10;
    int slot_count = 3;
    double init_scale = 0.1;
    int mlp1_hidden = 16;
    int mlp2_hidden = 16;
    std::string optimizer = "sgd";  // sgd | momentum | adam
    double momentum = 0.9;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

// One event prepared for training: catalog rows only, history resolved.
struct TrainingEvent {
    int choice_row = -1;                         // -1 = outside option
    std::vector<int> history;                    // oldest..newest, <= max_len rows
    std::vector<std::pair<int, int>> page_rows;  // (good row, slot)
};

// Resolves histories (capped at max_len) in canonical event order.
std::vector<TrainingEvent> make_training_events(const PanelIndex& index, const Catalog& catalog,
                                                int max_len);
std::vector<TrainingEvent> make_training_events(const InteractionLog& log, const Catalog& catalog,
                                                int max_len);

// Batch log-likelihood minus l2 * ||params||^2. `l2` is the total quadratic
// coefficient applied to this batch (fit scales the per-event penalty by the
// batch size).
double batch_objective(std::span<const TrainingEvent> batch, const ModelParameters& params,
                       double l2);

// Exact gradient of batch_objective, reverse-mode through utilities, softmax
// and the sequence model. Throws NumericalError (with the offending event)
// on non-finite intermediates. When log_likelihood_out is given, the batch
// log-likelihood of the same forward pass is written there.
Gradient batch_gradient(std::span<const TrainingEvent> batch, const ModelParameters& params,
                        double l2, double* log_likelihood_out = nullptr);

struct EpochStats {
    int epoch = 0;
    double train_log_loss = 0.0;    // mean negative log-likelihood per event
    double holdout_log_loss = 0.0;  // same, on the holdout slice
    double learning_rate = 0.0;
    double wall_clock_sec = 0.0;  // informational; excluded from deterministic outputs
};

// Per-good share fit of a model against a log, holding realized pages fixed.
struct HoldoutMetrics {
    double log_loss = 0.0;  // mean negative log-likelihood per event
    double share_r2_log = 0.0;  // R^2 of model vs observed per-good shares, log space
    int zero_share_goods = 0;   // goods observed zero times, excluded from the R^2
    double implied_engagement = 0.0;  // mean inside mass
    long n_events = 0;
    Vec observed_share;  // J+1, last entry outside
    Vec implied_share;   // J+1, mean model probabilities
};

struct FitReport {
    std::vector<EpochStats> epochs;
    std::vector<double> smoothed_train_loss;  // running best train loss
    HoldoutMetrics holdout;
    long n_train_events = 0;
    long n_holdout_events = 0;
};

struct FitResult {
    ModelParameters params;
    FitReport report;
};

ModelParameters init_parameters(const Catalog& catalog, const TrainingConfig& config, Rng& rng);

// Mini-batch stochastic-gradient maximum likelihood. Holdout = each user's
// last event. Deterministic given config.seed: events are put in canonical
// order and batch assignment is drawn from the seed, so fitting is invariant
// to reordering of the input events. `init` overrides the random
// initialization (shapes then come from it).
FitResult fit(const InteractionLog& log, const Catalog& catalog, const TrainingConfig& config,
              const ModelParameters* init = nullptr);

HoldoutMetrics holdout_metrics(const ModelParameters& params, const InteractionLog& log,
                               const Catalog& catalog);
HoldoutMetrics holdout_metrics(const ModelParameters& params, const PanelIndex& index,
                               const Catalog& catalog);

struct FiniteDifferenceReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    int coords_checked = 0;
};

// Central-difference check of batch_gradient on a random coordinate subset.
// Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator.
FiniteDifferenceReport finite_difference_check(const ModelParameters& params,
                                               std::span<const TrainingEvent> batch, double step,
                                               double l2, int n_coords, Rng& rng);

// Generic central-difference check against an arbitrary smooth objective;
// shared by the demand, recommendation and projection models.
FiniteDifferenceReport finite_difference_check_generic(
    const std::function<double(const Vec&)>& objective, const Vec& analytic_gradient, const Vec& at,
    double step, int n_coords, Rng& rng);

}  // namespace recdemand
