#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "recdemand/demand.hpp"
#include "recdemand/log.hpp"
#include "recdemand/parameters.hpp"
#include "recdemand/rng.hpp"

namespace recdemand {

enum class PolicyKind {
    CurrentOracle,        // utility targeting with exploration
    Random,               // uniform without replacement
    Popularity,           // fixed top goods by market share
    MatrixFactorization,  // per-user SVD scores
    ImputedUtility,       // softmax sampling on predicted utility
    ImputedRecModel,      // softmax sampling on recommendation-model scores
};

std::string policy_kind_name(PolicyKind kind);
PolicyKind policy_kind_from_name(const std::string& name);

// Everything a policy may condition on for one user-day.
struct PolicyContext {
    UserId user = 0;
    int period = 0;
    const Vec& state;                  // demand-model user state
    std::span<const int> history_rows; // recent watch window, oldest first
    const std::vector<char>& watched;  // by catalog row, 1 = already watched
    const Catalog& catalog;
    const std::vector<int>& capacities;
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyKind kind() const = 0;
    // Fills a page obeying capacities, watched-set exclusion and cross-slot
    // uniqueness. Per-good selection weights may be boosted multiplicatively.
    virtual RecommendationPage page(const PolicyContext& ctx, Rng& rng,
                                    const Vec* boost = nullptr) const = 0;
};

using PolicyPtr = std::shared_ptr<const Policy>;

// Truncated SVD factors of the binary user x good consumption matrix.
struct MFFactors {
    Mat user_factors;  // I x k, left singular vectors scaled by singular values
    Mat good_factors;  // J x k, right singular vectors
    Vec singular_values;
    std::vector<UserId> users;  // row order of user_factors
    int rank = 0;

    int user_row(UserId user) const;  // -1 for users unseen at fit time
};

MFFactors fit_mf(const InteractionLog& log, const Catalog& catalog, int rank);

// Softmax sampling without replacement over predicted utilities: each draw
// picks good j with probability exp(u_j) / sum over remaining goods, the
// exclusion set growing as slots fill.
std::vector<GoodId> impute_recs_utility(const ModelParameters& params, const Vec& state,
                                        const std::vector<char>& excluded, int n_slots,
                                        const Catalog& catalog, Rng& rng);

struct RecModel;  // recmodel.hpp

// Policy factory. Popularity and MatrixFactorization require a log;
// CurrentOracle and ImputedUtility require params; ImputedRecModel requires
// a fitted recommendation model.
PolicyPtr make_policy(PolicyKind kind, const InteractionLog* log, const Catalog& catalog,
                      std::shared_ptr<const ModelParameters> params, double exploration_rate,
                      int mf_rank, std::shared_ptr<const RecModel> rec_model);

// Internal building block shared by the weighted policies: fills capacities
// without replacement given per-good selection weights (0 = ineligible).
// Draw order maps to slots first-to-last.
RecommendationPage fill_page_weighted(const Vec& weights, const Catalog& catalog,
                                      const std::vector<int>& capacities, Rng& rng);

}  // namespace recdemand
