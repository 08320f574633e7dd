#include "recdemand/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace recdemand {

Catalog WorldConfig::make_catalog() const {
    std::vector<GoodId> ids(n_goods);
    std::iota(ids.begin(), ids.end(), 1);
    return Catalog(ids, embedding_dim);
}

void WorldConfig::validate() const {
    if (n_users <= 0 || n_goods <= 0 || horizon < 0) throw ValidationError("world sizes must be positive");
    if (embedding_dim < 2) throw ValidationError("embedding_dim must be at least 2");
    if (exploration_rate < 0.0 || exploration_rate > 1.0)
        throw ValidationError("exploration_rate must lie in [0, 1]");
    if (n_categories <= 0 || n_categories > n_goods)
        throw ValidationError("n_categories must lie in [1, n_goods]");
    if (max_len <= 0) throw ValidationError("max_len must be positive");
    if (slot_capacities.empty()) throw ValidationError("at least one slot is required");
    int total = 0;
    for (int c : slot_capacities) {
        if (c < 1) throw ValidationError("slot capacities must be >= 1");
        total += c;
    }
    if (total > n_goods) throw ValidationError("slot capacities exceed catalog size");
    if (bonus_base.size() != slot_capacities.size())
        throw ValidationError("bonus_base must have one entry per slot");
    for (std::size_t r = 0; r + 1 < bonus_base.size(); ++r)
        if (bonus_base[r] <= bonus_base[r + 1] + bonus_jitter)
            throw ValidationError("bonus_base must decrease by more than bonus_jitter per slot");
    if (bonus_jitter < 0 || popularity_sigma < 0 || category_scale < 0 || idiosyncratic_scale < 0 ||
        seq_noise < 0)
        throw ValidationError("scale parameters must be >= 0");
}

std::vector<GoodId> focal_goods(const ExperimentArm& arm, const WorldConfig& config) {
    std::vector<GoodId> out;
    for (int g = 0; g < config.n_goods; ++g)
        if (config.category_of(g) == arm.focal_category) out.push_back(g + 1);
    return out;
}

Vec arm_boost_vector(const ExperimentArm& arm, const WorldConfig& config) {
    Vec boost = Vec::Ones(config.n_goods);
    for (int g = 0; g < config.n_goods; ++g)
        if (config.category_of(g) == arm.focal_category) boost(g) = arm.boost_factor;
    return boost;
}

ModelParameters generate_ground_truth(const WorldConfig& config, Rng& rng) {
    config.validate();
    const int d = config.embedding_dim;
    const int j = config.n_goods;
    const int s = static_cast<int>(config.slot_capacities.size());
    ModelParameters p = ModelParameters::shaped(j, d, s, config.max_len, d, d);

    // Taste centroids per category, orthogonalized where dimensions allow so
    // categories pull states in distinct directions.
    Mat centroids = Mat::Zero(d - 1, config.n_categories);
    for (int c = 0; c < config.n_categories; ++c) {
        for (int i = 0; i < d - 1; ++i) centroids(i, c) = standard_normal(rng);
        for (int prev = 0; prev < c && prev < d - 1; ++prev)
            centroids.col(c) -= centroids.col(prev).dot(centroids.col(c)) * centroids.col(prev);
        double norm = centroids.col(c).norm();
        if (norm > 1e-12) centroids.col(c) /= norm;
    }

    // Column 0 carries the per-good intercept: normal on the utility scale,
    // centered so that the expected inside mass is about exp(base_utility).
    double mu = config.base_utility - std::log(static_cast<double>(j)) -
                0.5 * config.popularity_sigma * config.popularity_sigma;
    for (int g = 0; g < j; ++g) {
        p.embeddings(g, 0) = mu + config.popularity_sigma * standard_normal(rng);
        for (int i = 1; i < d; ++i)
            p.embeddings(g, i) = config.category_scale * centroids(i - 1, config.category_of(g)) +
                                 config.idiosyncratic_scale * standard_normal(rng);
    }

    // Slot bonuses: strictly ordered billboard > top25 > top100 for every
    // good; jitter is smaller than the base gaps by construction.
    for (int g = 0; g < j; ++g)
        for (int r = 0; r < s; ++r)
            p.slot_bonus(g, r) = config.bonus_base[r] + config.bonus_jitter * uniform01(rng);

    // Sequence model: near-linear MLPs around a pass-through, so the state is
    // roughly base + state_dependence * (attention average of watched
    // embeddings) on the taste dimensions, with the intercept dimension
    // pinned at 1.
    const double slope = 0.5;
    auto noisy_identity = [&](Mat& m, double diag) {
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c)
                m(r, c) = (r == c ? diag : 0.0) + config.seq_noise * standard_normal(rng);
    };
    noisy_identity(p.seq.w1, slope);
    p.seq.b1.setZero();
    for (int c = 0; c < p.seq.w2.cols(); ++c)
        p.seq.w2(0, c) = 0.5 * standard_normal(rng);  // attention logit row
    for (int r = 1; r < p.seq.w2.rows(); ++r)
        for (int c = 0; c < p.seq.w2.cols(); ++c)
            p.seq.w2(r, c) = (r - 1 == c ? 1.0 / slope : 0.0) + config.seq_noise * standard_normal(rng);
    p.seq.b2.setZero();
    noisy_identity(p.seq.v1, slope);
    p.seq.c1.setZero();
    noisy_identity(p.seq.v2, config.state_dependence / slope);
    p.seq.v2.row(0).setZero();  // keep the intercept dimension history-free
    p.seq.c2.setZero();
    p.seq.c2(0) = 1.0;
    for (int r = 0; r < p.seq.pos_embed.rows(); ++r)
        for (int c = 0; c < p.seq.pos_embed.cols(); ++c)
            p.seq.pos_embed(r, c) = config.seq_noise * standard_normal(rng);

    p.default_state.setZero();
    p.default_state(0) = 1.0;
    return p;
}

RecommendationPage oracle_recommender(const Vec& state, const ModelParameters& params,
                                      const Catalog& catalog, const std::vector<int>& capacities,
                                      double exploration_rate, const std::vector<char>& watched,
                                      Rng& rng, const Vec* boost) {
    int total = std::accumulate(capacities.begin(), capacities.end(), 0);
    if (total > catalog.size()) throw ValidationError("page capacities exceed catalog size");

    Vec u = params.embeddings * state;
    const int j = catalog.size();
    std::vector<char> taken(j, 0);
    std::vector<int> picks;
    picks.reserve(total);
    for (int pick = 0; pick < total; ++pick) {
        bool explore = uniform01(rng) < exploration_rate;
        int chosen = -1;
        if (explore) {
            double mass = 0.0;
            for (int g = 0; g < j; ++g)
                if (!taken[g] && !(g < static_cast<int>(watched.size()) && watched[g]))
                    mass += boost ? (*boost)(g) : 1.0;
            if (mass <= 0.0) break;
            double r = uniform01(rng) * mass;
            for (int g = 0; g < j; ++g) {
                if (taken[g] || (g < static_cast<int>(watched.size()) && watched[g])) continue;
                r -= boost ? (*boost)(g) : 1.0;
                if (r <= 0.0) {
                    chosen = g;
                    break;
                }
            }
            if (chosen < 0) {  // numerical edge: take the last eligible good
                for (int g = j - 1; g >= 0; --g)
                    if (!taken[g] && !(g < static_cast<int>(watched.size()) && watched[g])) {
                        chosen = g;
                        break;
                    }
            }
        } else {
            double best = -std::numeric_limits<double>::infinity();
            for (int g = 0; g < j; ++g) {
                if (taken[g] || (g < static_cast<int>(watched.size()) && watched[g])) continue;
                double score = u(g) + (boost ? std::log((*boost)(g)) : 0.0);
                if (score > best) {
                    best = score;
                    chosen = g;
                }
            }
        }
        if (chosen < 0) break;
        taken[chosen] = 1;
        picks.push_back(chosen);
    }

    RecommendationPage page = RecommendationPage::empty(capacities);
    std::size_t at = 0;
    for (std::size_t r = 0; r < capacities.size(); ++r)
        for (int c = 0; c < capacities[r] && at < picks.size(); ++c)
            page.slots[r].push_back(catalog.id_at(picks[at++]));
    return page;
}

namespace {

class OraclePolicy final : public Policy {
public:
    OraclePolicy(std::shared_ptr<const ModelParameters> params, double exploration_rate)
        : params_(std::move(params)), epsilon_(exploration_rate) {}
    PolicyKind kind() const override { return PolicyKind::CurrentOracle; }
    RecommendationPage page(const PolicyContext& ctx, Rng& rng, const Vec* boost) const override {
        return oracle_recommender(ctx.state, *params_, ctx.catalog, ctx.capacities, epsilon_,
                                  ctx.watched, rng, boost);
    }

private:
    std::shared_ptr<const ModelParameters> params_;
    double epsilon_;
};

}  // namespace

PolicyPtr make_oracle_policy(std::shared_ptr<const ModelParameters> params,
                             double exploration_rate) {
    if (exploration_rate < 0.0 || exploration_rate > 1.0)
        throw ValidationError("exploration rate must lie in [0, 1]");
    return std::make_shared<OraclePolicy>(std::move(params), exploration_rate);
}

InteractionLog simulate_panel(const ModelParameters& truth, const WorldConfig& config,
                              const Policy& policy, const std::vector<UserId>* users,
                              const Vec* boost) {
    config.validate();
    Catalog catalog = config.make_catalog();
    truth.validate(catalog);

    std::vector<UserId> default_users;
    if (!users) {
        default_users.resize(config.n_users);
        std::iota(default_users.begin(), default_users.end(), 1);
        users = &default_users;
    }

    InteractionLog log;
    log.events.reserve(users->size() * static_cast<std::size_t>(config.horizon));
    StateForward fwd;
    const int max_len = truth.max_len();
    for (UserId user : *users) {
        Rng rng = substream(config.seed, static_cast<std::uint64_t>(user));
        std::vector<char> watched(catalog.size(), 0);
        std::vector<int> watch_rows;
        for (int t = 0; t < config.horizon; ++t) {
            int take = std::min<int>(static_cast<int>(watch_rows.size()), max_len);
            std::span<const int> window(watch_rows.data() + watch_rows.size() - take,
                                        static_cast<std::size_t>(take));
            seq_forward(window, truth, fwd);

            PolicyContext ctx{user, t, fwd.state, window, watched, catalog,
                              config.slot_capacities};
            ChoiceEvent ev;
            ev.user = user;
            ev.period = t;
            ev.page = policy.page(ctx, rng, boost);

            Vec probs = choice_probabilities(fwd.state, catalog, ev.page, truth);
            double r = uniform01(rng);
            double acc = 0.0;
            int pick = catalog.size();
            for (int a = 0; a <= catalog.size(); ++a) {
                acc += probs(a);
                if (r <= acc) {
                    pick = a;
                    break;
                }
            }
            if (pick < catalog.size()) {
                ev.choice = catalog.id_at(pick);
                watch_rows.push_back(pick);
                watched[pick] = 1;
            } else {
                ev.choice = kOutsideGood;
            }
            log.events.push_back(std::move(ev));
        }
    }
    return log;
}

std::map<std::string, InteractionLog> run_salience_experiment(
    const ModelParameters& truth, const WorldConfig& config,
    const std::vector<ExperimentArm>& arms) {
    config.validate();
    double share_sum = 0.0;
    for (const auto& arm : arms) {
        if (arm.user_share < 0.0) throw ValidationError("arm user_share must be >= 0");
        if (arm.boost_factor <= 0.0) throw ValidationError("arm boost_factor must be positive");
        if (arm.id.empty() || arm.id == "control") throw ValidationError("invalid arm id");
        if (focal_goods(arm, config).empty())
            throw ValidationError("arm " + arm.id + " has an empty focal set");
        share_sum += arm.user_share;
    }
    if (share_sum >= 1.0)
        throw ValidationError("arm user shares must leave room for a control arm");

    // User-level randomization from a per-user substream, so assignment is
    // reproducible and independent of arm order in memory.
    std::map<std::string, std::vector<UserId>> assignment;
    for (UserId user = 1; user <= config.n_users; ++user) {
        Rng arm_rng = substream(config.seed ^ 0xa5a5a5a5ULL, static_cast<std::uint64_t>(user));
        double r = uniform01(arm_rng);
        double acc = 0.0;
        std::string chosen = "control";
        for (const auto& arm : arms) {
            acc += arm.user_share;
            if (r < acc) {
                chosen = arm.id;
                break;
            }
        }
        assignment[chosen].push_back(user);
    }

    PolicyPtr oracle =
        make_oracle_policy(std::make_shared<ModelParameters>(truth), config.exploration_rate);

    std::map<std::string, InteractionLog> result;
    {
        InteractionLog control =
            simulate_panel(truth, config, *oracle, &assignment["control"], nullptr);
        control.arm_id = "control";
        result.emplace("control", std::move(control));
    }
    for (const auto& arm : arms) {
        Vec boost = arm_boost_vector(arm, config);
        InteractionLog log = simulate_panel(truth, config, *oracle, &assignment[arm.id], &boost);
        log.arm_id = arm.id;
        result.emplace(arm.id, std::move(log));
    }
    return result;
}

}  // namespace recdemand
