#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "recdemand/log.hpp"
#include "recdemand/parameters.hpp"
#include "recdemand/policy.hpp"
#include "recdemand/rng.hpp"

namespace recdemand {

// Synthetic world: population size, catalog, ground-truth scales, and the
// exploration rate of the targeting recommender.
struct WorldConfig {
    int n_users = 500;
    int n_goods = 100;
    int embedding_dim = 8;
    int horizon = 30;
    std::vector<int> slot_capacities = {1, 5, 10};
    double exploration_rate = 0.2;
    int n_categories = 4;
    int max_len = 10;
    std::uint64_t seed = 1;

    // Ground-truth parameter scales.
    double popularity_sigma = 1.0;      // stddev of per-good intercepts (log-scale skew)
    double popularity_mean = -1.0;      // mean per-good intercept
    double base_utility = -4.0;         // intercept pinning overall engagement
    double category_scale = 1.4;        // taste centroid magnitude
    double idiosyncratic_scale = 0.6;   // within-category embedding noise
    std::vector<double> bonus_base = {1.6, 0.9, 0.4};
    double bonus_jitter = 0.15;
    double state_dependence = 0.9;      // weight of watch history in the state
    double seq_noise = 0.03;            // perturbation of the sequence weights

    int category_of(int good_index) const { return good_index % n_categories; }
    Catalog make_catalog() const;  // good ids 1..n_goods
    void validate() const;
};

// One salience-boost treatment arm: goods of the focal category get their
// recommender selection weight multiplied by boost_factor.
struct ExperimentArm {
    std::string id;
    int focal_category = 0;
    double boost_factor = 1.0;
    double user_share = 0.0;
};

std::vector<GoodId> focal_goods(const ExperimentArm& arm, const WorldConfig& config);

// Draws a ground-truth parameter set: per-good intercepts are normal on the
// utility scale (log-normal share skew), taste directions cluster by
// category, slot bonuses strictly decrease billboard > top25 > top100, and
// the sequence model passes an attention-weighted history average through
// near-linear MLPs scaled by state_dependence.
ModelParameters generate_ground_truth(const WorldConfig& config, Rng& rng);

// Targeting recommender with epsilon-exploration: per slot position, with
// probability 1-epsilon takes the highest-weighted unpicked good, otherwise
// samples by weight. Weights are exp(utility) times the optional boost;
// watched goods are never recommended.
RecommendationPage oracle_recommender(const Vec& state, const ModelParameters& params,
                                      const Catalog& catalog, const std::vector<int>& capacities,
                                      double exploration_rate, const std::vector<char>& watched,
                                      Rng& rng, const Vec* boost = nullptr);

// Oracle recommender wrapped as a Policy.
PolicyPtr make_oracle_policy(std::shared_ptr<const ModelParameters> params,
                             double exploration_rate);

// Simulates the panel: one choice per user-day, pages from the policy,
// choices from the model, history growing only on inside choices. Per-user
// RNG substreams derive from (config.seed, user), so the result does not
// depend on scheduling.
InteractionLog simulate_panel(const ModelParameters& truth, const WorldConfig& config,
                              const Policy& policy, const std::vector<UserId>* users = nullptr,
                              const Vec* boost = nullptr);

// Randomizes users into control plus treatment arms and simulates each arm
// under its boosted recommender. Map key "control" holds the control log.
std::map<std::string, InteractionLog> run_salience_experiment(
    const ModelParameters& truth, const WorldConfig& config,
    const std::vector<ExperimentArm>& arms);

// Per-good boost weight vector for an arm (1 outside the focal set).
Vec arm_boost_vector(const ExperimentArm& arm, const WorldConfig& config);

}  // namespace recdemand
