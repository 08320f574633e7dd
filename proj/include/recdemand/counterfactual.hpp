#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "recdemand/log.hpp"
#include "recdemand/parameters.hpp"
#include "recdemand/policy.hpp"
#include "recdemand/recmodel.hpp"

namespace recdemand {

// Wald diversion ratios for one intervention: the share change of each
// non-focal destination (and the outside option) relative to the total share
// the focal set gained or lost.
struct DiversionTable {
    std::string arm_id;
    std::vector<GoodId> destinations;  // non-focal goods, catalog order
    Vec diversion;                     // one entry per destination
    double outside_diversion = 0.0;
    double denominator_mass = 0.0;  // -(focal share change)
    bool flagged = false;           // focal shift too small to normalize reliably

    double total() const { return diversion.sum() + outside_diversion; }
};

// D_{g->k} = (P_k(g) - P_k(0)) / -(sum over focal of P_j(g) - P_j(0)) with
// P the per-user-day choice shares of each log. Throws when the denominator
// is exactly zero; flags it when its magnitude is below flag_tolerance.
DiversionTable wald_diversion(const InteractionLog& treated, const InteractionLog& control,
                              const std::vector<GoodId>& focal, const Catalog& catalog,
                              double flag_tolerance = 1e-3);

// How displaced recommendations are re-imputed when emulating an
// intervention on the control arm.
enum class ImputationKind { Identity, Utility, RecModel };

ImputationKind imputation_from_name(const std::string& name);
std::string imputation_name(ImputationKind kind);

// Model-based diversion: every control user-day's page is rebuilt with the
// focal boost applied to the imputation weights, choice probabilities are
// averaged under the demand model on both the realized and rebuilt pages,
// and the Wald formula is applied to the two model-implied share vectors.
DiversionTable model_diversion(const ModelParameters& params, const InteractionLog& control,
                               const Catalog& catalog, const std::vector<GoodId>& focal,
                               double boost_factor, ImputationKind imputation,
                               const RecModel* rec_model, std::uint64_t seed,
                               double flag_tolerance = 1e-3, const std::string& arm_id = "");

struct DiversityMetrics {
    double hhi = 0.0;
    double gini = 0.0;
    int n = 0;  // number of shares
};

// Concentration (HHI) and inequality (Gini) of a consumption-share vector.
// Shares are renormalized to sum one; all-zero input is an error.
DiversityMetrics diversity_metrics(const Vec& shares);

struct CounterfactualOutcome {
    double engagement = 0.0;  // mean inside probability per user-day
    Vec mean_probs;           // J+1 mean model probabilities, last = outside
    Vec consumption_share;    // J inside shares renormalized to sum 1
    DiversityMetrics diversity;
    long n_user_days = 0;
};

// Replays the base panel's user-day structure under a policy: pages are
// re-derived (capacities unchanged, watched goods excluded), engagement and
// shares accumulate model probabilities, and histories evolve by
// re-simulated choices. A null policy replays the realized pages and
// histories unchanged.
CounterfactualOutcome simulate_counterfactual(const ModelParameters& params, const Policy* policy,
                                              const InteractionLog& base, const Catalog& catalog,
                                              const std::vector<int>& capacities,
                                              std::uint64_t seed);

// Potential-outcome decomposition of one good's recommendation lift into
// selection, exposure and targeting.
struct DecompositionRecord {
    GoodId good = 0;
    double y0_all = 0.0;       // mean consumption probability, not recommended
    double y1_all = 0.0;       // mean consumption probability, recommended
    double y0_targeted = 0.0;  // same means over user-days that showed the good
    double y1_targeted = 0.0;
    double selection = 0.0;  // y0_targeted - y0_all
    double exposure = 0.0;   // average treatment effect
    double targeting = 0.0;  // treated-minus-average treatment effect
    double ate = 0.0;
    double att = 0.0;
    long n_targeted = 0;
    long n_user_days = 0;
    bool att_defined = true;  // false when the good was never recommended
};

// Forcing the good on and off the realized pages with states held at their
// realized values. When the good is absent, the forced-on outcome averages
// over n_placebo random draws of which page slot it inherits; only the
// good's own recommendation status is toggled.
DecompositionRecord decompose_good(const ModelParameters& params, const InteractionLog& log,
                                   const Catalog& catalog, GoodId good, int n_placebo,
                                   std::uint64_t seed);
std::vector<DecompositionRecord> decompose_goods(const ModelParameters& params,
                                                 const InteractionLog& log, const Catalog& catalog,
                                                 std::span<const GoodId> goods, int n_placebo,
                                                 std::uint64_t seed);

enum class AggregationWeighting { Median, Mean, ObservationWeighted };

AggregationWeighting weighting_from_name(const std::string& name);
std::string weighting_name(AggregationWeighting w);

struct DecompositionShares {
    double selection = 0.0;
    double exposure = 0.0;
    double targeting = 0.0;  // the three sum to 1
};

DecompositionShares aggregate_decomposition(std::span<const DecompositionRecord> records,
                                            AggregationWeighting weighting);

struct TargetingBin {
    std::string label;
    int count = 0;
    double mean_targeting = 0.0;
    double median_targeting = 0.0;
    double mean_popularity = 0.0;
};

struct TargetingHeterogeneity {
    std::vector<TargetingBin> popularity_terciles;
    std::vector<TargetingBin> category_bins;
    // Per-good export rows (kernel-density-ready).
    std::vector<GoodId> goods;
    Vec popularity;  // baseline consumption probability
    Vec targeting;
    std::vector<int> tercile;   // 0..2 by popularity
    std::vector<int> category;  // caller-supplied labels
};

// Bins targeting effects by baseline-popularity tercile and category label
// (one label per catalog row).
TargetingHeterogeneity targeting_heterogeneity(std::span<const DecompositionRecord> records,
                                               const Catalog& catalog,
                                               const std::vector<int>& category_labels);

enum class IncrementalityMode { Existing, New };

struct IncrementalityResult {
    double delta_total = 0.0;  // summed over user-days
    double delta_per_user_day = 0.0;
    double engagement_with = 0.0;     // mean with the targets available
    double engagement_without = 0.0;  // mean with the targets removed
    Vec mean_probs_with;              // J+1, catalog order of the full catalog
    long n_user_days = 0;
};

// Engagement difference between the catalog with and without the target set,
// both sides re-simulated with utility-imputed pages and common random
// numbers. For New mode the caller passes the already-extended catalog and
// parameters (targets present in both, absent from the base log).
IncrementalityResult incrementality(const ModelParameters& params,
                                    const std::vector<GoodId>& targets, IncrementalityMode mode,
                                    const InteractionLog& base, const Catalog& catalog,
                                    const std::vector<int>& capacities, std::uint64_t seed);

}  // namespace recdemand
