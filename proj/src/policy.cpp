#include "recdemand/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <Eigen/SVD>

#include "recdemand/recmodel.hpp"
#include "recdemand/simulator.hpp"

namespace recdemand {

std::string policy_kind_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::CurrentOracle: return "current";
        case PolicyKind::Random: return "random";
        case PolicyKind::Popularity: return "popularity";
        case PolicyKind::MatrixFactorization: return "mf";
        case PolicyKind::ImputedUtility: return "imputed-utility";
        case PolicyKind::ImputedRecModel: return "imputed-recmodel";
    }
    throw ValidationError("unknown policy kind");
}

PolicyKind policy_kind_from_name(const std::string& name) {
    if (name == "current" || name == "oracle") return PolicyKind::CurrentOracle;
    if (name == "random") return PolicyKind::Random;
    if (name == "popularity") return PolicyKind::Popularity;
    if (name == "mf" || name == "matrix-factorization") return PolicyKind::MatrixFactorization;
    if (name == "imputed-utility") return PolicyKind::ImputedUtility;
    if (name == "imputed-recmodel") return PolicyKind::ImputedRecModel;
    throw ValidationError("unknown policy name: " + name);
}

namespace {

// Draw order for softmax sampling without replacement: descending
// log-weight + Gumbel keys reproduce sequential renormalized draws. One key
// is drawn per catalog good, ineligible ones discarded, so paired
// counterfactual runs that differ in the eligible set stay on a common
// random-number stream.
std::vector<int> gumbel_top_m(const Vec& weights, int m, Rng& rng) {
    std::vector<std::pair<double, int>> keys;
    keys.reserve(weights.size());
    for (Eigen::Index g = 0; g < weights.size(); ++g) {
        double noise = gumbel(rng);
        if (weights(g) <= 0.0) continue;
        keys.emplace_back(std::log(weights(g)) + noise, static_cast<int>(g));
    }
    int take = std::min<int>(m, static_cast<int>(keys.size()));
    std::partial_sort(keys.begin(), keys.begin() + take, keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<int> out(take);
    for (int i = 0; i < take; ++i) out[i] = keys[i].second;
    return out;
}

RecommendationPage rows_to_page(const std::vector<int>& rows_in_draw_order,
                                const Catalog& catalog, const std::vector<int>& capacities) {
    RecommendationPage page = RecommendationPage::empty(capacities);
    std::size_t at = 0;
    for (std::size_t r = 0; r < capacities.size(); ++r)
        for (int c = 0; c < capacities[r] && at < rows_in_draw_order.size(); ++c)
            page.slots[r].push_back(catalog.id_at(rows_in_draw_order[at++]));
    return page;
}

int total_capacity(const std::vector<int>& capacities) {
    return std::accumulate(capacities.begin(), capacities.end(), 0);
}

Vec eligible_weights(const Vec& base, const std::vector<char>& watched, const Vec* boost) {
    Vec w = base;
    for (Eigen::Index g = 0; g < w.size(); ++g) {
        if (g < static_cast<Eigen::Index>(watched.size()) && watched[g]) w(g) = 0.0;
        else if (boost) w(g) *= (*boost)(g);
    }
    return w;
}

}  // namespace

RecommendationPage fill_page_weighted(const Vec& weights, const Catalog& catalog,
                                      const std::vector<int>& capacities, Rng& rng) {
    if (total_capacity(capacities) > catalog.size())
        throw ValidationError("page capacities exceed catalog size");
    auto rows = gumbel_top_m(weights, total_capacity(capacities), rng);
    return rows_to_page(rows, catalog, capacities);
}

std::vector<GoodId> impute_recs_utility(const ModelParameters& params, const Vec& state,
                                        const std::vector<char>& excluded, int n_slots,
                                        const Catalog& catalog, Rng& rng) {
    Vec u = params.embeddings * state;
    int eligible = 0;
    Vec w(catalog.size());
    for (int g = 0; g < catalog.size(); ++g) {
        bool out = g < static_cast<int>(excluded.size()) && excluded[g];
        w(g) = out ? 0.0 : std::exp(u(g));
        eligible += out ? 0 : 1;
    }
    if (eligible < n_slots)
        throw ValidationError("not enough goods left to impute " + std::to_string(n_slots) +
                              " recommendations");
    auto rows = gumbel_top_m(w, n_slots, rng);
    std::vector<GoodId> out;
    out.reserve(rows.size());
    for (int row : rows) out.push_back(catalog.id_at(row));
    return out;
}

int MFFactors::user_row(UserId user) const {
    auto it = std::lower_bound(users.begin(), users.end(), user);
    if (it == users.end() || *it != user) return -1;
    return static_cast<int>(it - users.begin());
}

MFFactors fit_mf(const InteractionLog& log, const Catalog& catalog, int rank) {
    if (rank < 1) throw ValidationError("matrix factorization rank must be >= 1");
    if (log.empty()) throw ValidationError("matrix factorization needs a nonempty log");

    std::set<UserId> user_set;
    for (const auto& ev : log.events) user_set.insert(ev.user);
    std::vector<UserId> users(user_set.begin(), user_set.end());
    const int n_users = static_cast<int>(users.size());
    if (rank > std::min(n_users, catalog.size()))
        throw ValidationError("matrix factorization rank exceeds min(users, goods)");

    Mat consumption = Mat::Zero(n_users, catalog.size());
    for (const auto& ev : log.events) {
        if (!ev.chose_inside()) continue;
        int u = static_cast<int>(std::lower_bound(users.begin(), users.end(), ev.user) -
                                 users.begin());
        consumption(u, catalog.index_of(ev.choice)) = 1.0;
    }

    Eigen::BDCSVD<Mat> svd(consumption, Eigen::ComputeThinU | Eigen::ComputeThinV);
    MFFactors f;
    f.rank = rank;
    f.users = std::move(users);
    f.singular_values = svd.singularValues().head(rank);
    f.user_factors = svd.matrixU().leftCols(rank) * f.singular_values.asDiagonal();
    f.good_factors = svd.matrixV().leftCols(rank);
    // Sign convention: leading direction positive on average over users, so
    // the cold-user fallback ranks along it like a popularity score.
    if (f.user_factors.col(0).sum() < 0.0) {
        f.user_factors.col(0) = -f.user_factors.col(0);
        f.good_factors.col(0) = -f.good_factors.col(0);
    }
    return f;
}

namespace {

class RandomPolicy final : public Policy {
public:
    PolicyKind kind() const override { return PolicyKind::Random; }
    RecommendationPage page(const PolicyContext& ctx, Rng& rng, const Vec* boost) const override {
        Vec w = eligible_weights(Vec::Ones(ctx.catalog.size()), ctx.watched, boost);
        return fill_page_weighted(w, ctx.catalog, ctx.capacities, rng);
    }
};

class PopularityPolicy final : public Policy {
public:
    explicit PopularityPolicy(std::vector<int> ranking) : ranking_(std::move(ranking)) {}
    PolicyKind kind() const override { return PolicyKind::Popularity; }
    RecommendationPage page(const PolicyContext& ctx, Rng&, const Vec*) const override {
        std::vector<int> rows;
        int want = total_capacity(ctx.capacities);
        for (int row : ranking_) {
            if (static_cast<int>(rows.size()) >= want) break;
            if (row < static_cast<int>(ctx.watched.size()) && ctx.watched[row]) continue;
            rows.push_back(row);
        }
        return rows_to_page(rows, ctx.catalog, ctx.capacities);
    }

private:
    std::vector<int> ranking_;  // all goods, most popular first
};

class MFPolicy final : public Policy {
public:
    explicit MFPolicy(MFFactors factors) : factors_(std::move(factors)) {}
    PolicyKind kind() const override { return PolicyKind::MatrixFactorization; }
    RecommendationPage page(const PolicyContext& ctx, Rng&, const Vec*) const override {
        int urow = factors_.user_row(ctx.user);
        Vec scores = urow >= 0 ? Vec(factors_.good_factors * factors_.user_factors.row(urow).transpose())
                               : Vec(factors_.good_factors.col(0));
        std::vector<int> order(ctx.catalog.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores(a) != scores(b)) return scores(a) > scores(b);
            return a < b;
        });
        std::vector<int> rows;
        int want = total_capacity(ctx.capacities);
        for (int row : order) {
            if (static_cast<int>(rows.size()) >= want) break;
            if (row < static_cast<int>(ctx.watched.size()) && ctx.watched[row]) continue;
            rows.push_back(row);
        }
        return rows_to_page(rows, ctx.catalog, ctx.capacities);
    }

private:
    MFFactors factors_;
};

class UtilityImputationPolicy final : public Policy {
public:
    explicit UtilityImputationPolicy(std::shared_ptr<const ModelParameters> params)
        : params_(std::move(params)) {}
    PolicyKind kind() const override { return PolicyKind::ImputedUtility; }
    RecommendationPage page(const PolicyContext& ctx, Rng& rng, const Vec* boost) const override {
        Vec w = eligible_weights((params_->embeddings * ctx.state).array().exp().matrix(),
                                 ctx.watched, boost);
        return fill_page_weighted(w, ctx.catalog, ctx.capacities, rng);
    }

private:
    std::shared_ptr<const ModelParameters> params_;
};

class RecModelPolicy final : public Policy {
public:
    explicit RecModelPolicy(std::shared_ptr<const RecModel> model) : model_(std::move(model)) {}
    PolicyKind kind() const override { return PolicyKind::ImputedRecModel; }
    RecommendationPage page(const PolicyContext& ctx, Rng& rng, const Vec* boost) const override {
        Vec s = model_->state(ctx.history_rows);
        Vec w = eligible_weights(model_->scores(s), ctx.watched, boost);
        return fill_page_weighted(w, ctx.catalog, ctx.capacities, rng);
    }

private:
    std::shared_ptr<const RecModel> model_;
};

std::vector<int> popularity_ranking(const InteractionLog& log, const Catalog& catalog) {
    std::vector<long> counts(catalog.size(), 0);
    for (const auto& ev : log.events)
        if (ev.chose_inside()) ++counts[catalog.index_of(ev.choice)];
    std::vector<int> order(catalog.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (counts[a] != counts[b]) return counts[a] > counts[b];
        return a < b;
    });
    return order;
}

}  // namespace

PolicyPtr make_policy(PolicyKind kind, const InteractionLog* log, const Catalog& catalog,
                      std::shared_ptr<const ModelParameters> params, double exploration_rate,
                      int mf_rank, std::shared_ptr<const RecModel> rec_model) {
    switch (kind) {
        case PolicyKind::Random:
            return std::make_shared<RandomPolicy>();
        case PolicyKind::Popularity:
            if (!log) throw ValidationError("popularity policy requires a training log");
            return std::make_shared<PopularityPolicy>(popularity_ranking(*log, catalog));
        case PolicyKind::MatrixFactorization:
            if (!log || log->empty())
                throw ValidationError("matrix factorization policy requires a training log");
            return std::make_shared<MFPolicy>(fit_mf(*log, catalog, mf_rank));
        case PolicyKind::ImputedUtility:
            if (!params) throw ValidationError("utility imputation requires model parameters");
            return std::make_shared<UtilityImputationPolicy>(std::move(params));
        case PolicyKind::ImputedRecModel:
            if (!rec_model) throw ValidationError("rec-model imputation requires a fitted model");
            return std::make_shared<RecModelPolicy>(std::move(rec_model));
        case PolicyKind::CurrentOracle: {
            if (!params) throw ValidationError("oracle policy requires model parameters");
            return make_oracle_policy(std::move(params), exploration_rate);
        }
    }
    throw ValidationError("unknown policy kind");
}

}  // namespace recdemand
