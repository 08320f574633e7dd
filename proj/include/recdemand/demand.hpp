#pragma once

#include <span>

#include "recdemand/log.hpp"
#include "recdemand/parameters.hpp"

namespace recdemand {

// Saved intermediates of one state computation; buffers are sized once and
// reused, the active column count is `len`.
struct StateForward {
    int len = 0;  // history items used (<= max_len)
    Mat x;        // d x max_len, embedding + recency encoding per item
    Mat h;        // h1 x max_len, mlp1 hidden activations
    Vec logits;   // max_len attention logits
    Mat v;        // d x max_len, transformed vectors
    Vec weights;  // max_len attention weights (softmax of logits)
    Vec pooled;   // d
    Vec q;        // h2, mlp2 hidden activation
    Vec state;    // d

    void resize(int dim, int max_len, int hidden1, int hidden2);
};

// Forward pass of the user-state network over a history window of catalog
// rows (oldest first, length <= seq.max_len()). Empty window yields the
// default state. The explicit-reference form lets the recommendation model
// share the architecture with its own containers.
void seq_forward(std::span<const int> history_rows, const RowMat& embeddings,
                 const SequenceWeights& seq, const Vec& default_state, StateForward& fwd);
void seq_forward(std::span<const int> history_rows, const ModelParameters& params,
                 StateForward& fwd);

// Accumulates parameter gradients of `dstate . state` into the gradient
// containers, given the forward intermediates.
void seq_backward(std::span<const int> history_rows, const SequenceWeights& seq,
                  const StateForward& fwd, const Vec& dstate, RowMat& grad_embeddings,
                  SequenceWeights& grad_seq, Vec& grad_default_state);
void seq_backward(std::span<const int> history_rows, const ModelParameters& params,
                  const StateForward& fwd, const Vec& dstate, Gradient& grad);

// User state A for an explicit history (good ids); convenience wrapper that
// resolves catalog rows and truncates to params.max_len().
Vec compute_user_state(const UserHistory& history, const ModelParameters& params,
                       const Catalog& catalog);

// Deterministic utility of one good: state . embedding + slot bonuses of the
// locations where the page shows it. The outside option has utility 0.
double deterministic_utility(const Vec& state, GoodId good, const RecommendationPage& page,
                             const ModelParameters& params, const Catalog& catalog);

// Utilities of every catalog good at once (same quantity as above).
Vec deterministic_utilities(const Vec& state, const Catalog& catalog,
                            const RecommendationPage& page, const ModelParameters& params);

// Softmax over inside utilities plus an outside alternative. Entries 0..J-1
// are goods in catalog order, entry J the outside option. Max-subtraction
// keeps the computation stable and exactly translation invariant whenever
// the shifted utilities are themselves exact.
Vec choice_probabilities_from_utilities(const Vec& utilities, double outside_utility);

// log of the above, returned as log-probabilities (same layout).
Vec log_choice_probabilities_from_utilities(const Vec& utilities, double outside_utility);

Vec choice_probabilities(const Vec& state, const Catalog& catalog,
                         const RecommendationPage& page, const ModelParameters& params);

// Probability of consuming anything: the inside mass of a probability vector
// in the layout above.
double engagement(const Vec& probs);

// Sum over events of log P(observed choice), states recomputed from each
// user's history up to the event.
double log_likelihood(const InteractionLog& log, const ModelParameters& params,
                      const Catalog& catalog);
double log_likelihood(const PanelIndex& index, const ModelParameters& params,
                      const Catalog& catalog);

}  // namespace recdemand
