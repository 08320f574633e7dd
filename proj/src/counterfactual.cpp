#include "recdemand/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "recdemand/demand.hpp"

namespace recdemand {

namespace {

Vec empirical_shares(const InteractionLog& log, const Catalog& catalog) {
    if (log.empty()) throw ValidationError("empirical shares of an empty log");
    Vec shares = Vec::Zero(catalog.size() + 1);
    for (const auto& ev : log.events)
        shares(ev.chose_inside() ? catalog.index_of(ev.choice) : catalog.size()) += 1.0;
    return shares / static_cast<double>(log.events.size());
}

DiversionTable diversion_from_shares(const Vec& treated, const Vec& control,
                                     const std::vector<GoodId>& focal, const Catalog& catalog,
                                     double flag_tolerance, const std::string& arm_id) {
    if (focal.empty()) throw ValidationError("focal set is empty");
    std::vector<char> is_focal(catalog.size(), 0);
    for (GoodId g : focal) is_focal[catalog.index_of(g)] = 1;

    double focal_change = 0.0;
    for (int g = 0; g < catalog.size(); ++g)
        if (is_focal[g]) focal_change += treated(g) - control(g);
    double denominator = -focal_change;
    if (denominator == 0.0)
        throw ValidationError("diversion undefined: the intervention left the focal share unchanged");

    DiversionTable table;
    table.arm_id = arm_id;
    table.denominator_mass = denominator;
    table.flagged = std::abs(denominator) < flag_tolerance;
    for (int g = 0; g < catalog.size(); ++g)
        if (!is_focal[g]) table.destinations.push_back(catalog.id_at(g));
    table.diversion.resize(static_cast<Eigen::Index>(table.destinations.size()));
    Eigen::Index at = 0;
    for (int g = 0; g < catalog.size(); ++g)
        if (!is_focal[g]) table.diversion(at++) = (treated(g) - control(g)) / denominator;
    table.outside_diversion =
        (treated(catalog.size()) - control(catalog.size())) / denominator;
    return table;
}

}  // namespace

DiversionTable wald_diversion(const InteractionLog& treated, const InteractionLog& control,
                              const std::vector<GoodId>& focal, const Catalog& catalog,
                              double flag_tolerance) {
    if (treated.empty() || control.empty())
        throw ValidationError("diversion requires nonempty treated and control logs");
    return diversion_from_shares(empirical_shares(treated, catalog),
                                 empirical_shares(control, catalog), focal, catalog,
                                 flag_tolerance, treated.arm_id);
}

ImputationKind imputation_from_name(const std::string& name) {
    if (name == "identity") return ImputationKind::Identity;
    if (name == "utility") return ImputationKind::Utility;
    if (name == "recmodel" || name == "rec-model") return ImputationKind::RecModel;
    throw ValidationError("unknown imputation kind: " + name);
}

std::string imputation_name(ImputationKind kind) {
    switch (kind) {
        case ImputationKind::Identity: return "identity";
        case ImputationKind::Utility: return "utility";
        case ImputationKind::RecModel: return "recmodel";
    }
    throw ValidationError("unknown imputation kind");
}

DiversionTable model_diversion(const ModelParameters& params, const InteractionLog& control,
                               const Catalog& catalog, const std::vector<GoodId>& focal,
                               double boost_factor, ImputationKind imputation,
                               const RecModel* rec_model, std::uint64_t seed,
                               double flag_tolerance, const std::string& arm_id) {
    if (control.empty()) throw ValidationError("model diversion requires a control log");
    if (focal.empty()) throw ValidationError("focal set is empty");
    if (imputation == ImputationKind::RecModel && !rec_model)
        throw ValidationError("rec-model imputation requires a fitted recommendation model");

    Vec boost = Vec::Ones(catalog.size());
    for (GoodId g : focal) boost(catalog.index_of(g)) = boost_factor;

    PanelIndex index(control, catalog);
    StateForward fwd;
    Vec control_probs = Vec::Zero(catalog.size() + 1);
    Vec treated_probs = Vec::Zero(catalog.size() + 1);
    std::vector<char> watched(catalog.size(), 0);
    UserId current_user = 0;
    bool have_user = false;
    Rng rng;
    long n = 0;
    const int max_len = params.max_len();
    for (const EventRef& ref : index.refs()) {
        const ChoiceEvent& ev = index.event(ref);
        if (!have_user || ev.user != current_user) {
            current_user = ev.user;
            have_user = true;
            rng = substream(seed, static_cast<std::uint64_t>(ev.user));
        }
        seq_forward(index.history(ref, max_len), params, fwd);
        control_probs += choice_probabilities(fwd.state, catalog, ev.page, params);

        RecommendationPage rebuilt;
        if (imputation == ImputationKind::Identity) {
            rebuilt = ev.page;
        } else {
            std::fill(watched.begin(), watched.end(), 0);
            for (int row : index.full_history(ref)) watched[row] = 1;
            Vec weights;
            if (imputation == ImputationKind::Utility) {
                weights = (params.embeddings * fwd.state).array().exp().matrix();
            } else {
                Vec rec_state = rec_model->state(index.history(ref, rec_model->max_len()));
                weights = rec_model->scores(rec_state);
            }
            for (int g = 0; g < catalog.size(); ++g)
                weights(g) = watched[g] ? 0.0 : weights(g) * boost(g);
            rebuilt = fill_page_weighted(weights, catalog, ev.page.capacities, rng);
        }
        treated_probs += choice_probabilities(fwd.state, catalog, rebuilt, params);
        ++n;
    }
    control_probs /= static_cast<double>(n);
    treated_probs /= static_cast<double>(n);
    return diversion_from_shares(treated_probs, control_probs, focal, catalog, flag_tolerance,
                                 arm_id);
}

DiversityMetrics diversity_metrics(const Vec& shares) {
    const Eigen::Index n = shares.size();
    if (n == 0) throw ValidationError("diversity of an empty share vector");
    if ((shares.array() < 0.0).any()) throw ValidationError("negative consumption share");
    double total = shares.sum();
    if (total <= 0.0) throw ValidationError("diversity of an all-zero share vector");
    Vec s = shares / total;

    DiversityMetrics m;
    m.n = static_cast<int>(n);
    m.hhi = s.squaredNorm();
    // Sorted Gini: G = (2 sum_i i*s_(i))/n - (n+1)/n for shares summing to 1,
    // equal to the pairwise-difference form.
    std::vector<double> sorted(s.data(), s.data() + n);
    std::sort(sorted.begin(), sorted.end());
    double weighted = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) weighted += static_cast<double>(i + 1) * sorted[i];
    m.gini = 2.0 * weighted / static_cast<double>(n) -
             (static_cast<double>(n) + 1.0) / static_cast<double>(n);
    return m;
}

CounterfactualOutcome simulate_counterfactual(const ModelParameters& params, const Policy* policy,
                                              const InteractionLog& base, const Catalog& catalog,
                                              const std::vector<int>& capacities,
                                              std::uint64_t seed) {
    if (base.empty()) throw ValidationError("counterfactual needs a base panel");
    PanelIndex index(base, catalog);
    const int max_len = params.max_len();

    CounterfactualOutcome out;
    out.mean_probs = Vec::Zero(catalog.size() + 1);
    StateForward fwd;

    if (!policy) {
        // Identity: realized pages, realized histories.
        for (const EventRef& ref : index.refs()) {
            const ChoiceEvent& ev = index.event(ref);
            seq_forward(index.history(ref, max_len), params, fwd);
            out.mean_probs += choice_probabilities(fwd.state, catalog, ev.page, params);
            ++out.n_user_days;
        }
    } else {
        // Full re-simulation: per-user day counts from the base panel.
        UserId current_user = 0;
        bool have_user = false;
        Rng rng;
        std::vector<char> watched(catalog.size(), 0);
        std::vector<int> watch_rows;
        for (const EventRef& ref : index.refs()) {
            const ChoiceEvent& ev = index.event(ref);
            if (!have_user || ev.user != current_user) {
                current_user = ev.user;
                have_user = true;
                rng = substream(seed, static_cast<std::uint64_t>(ev.user));
                std::fill(watched.begin(), watched.end(), 0);
                watch_rows.clear();
            }
            int take = std::min<int>(static_cast<int>(watch_rows.size()), max_len);
            std::span<const int> window(watch_rows.data() + watch_rows.size() - take,
                                        static_cast<std::size_t>(take));
            seq_forward(window, params, fwd);
            PolicyContext ctx{ev.user, ev.period, fwd.state, window, watched, catalog, capacities};
            RecommendationPage page = policy->page(ctx, rng, nullptr);
            Vec probs = choice_probabilities(fwd.state, catalog, page, params);
            out.mean_probs += probs;
            ++out.n_user_days;
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
                watch_rows.push_back(pick);
                watched[pick] = 1;
            }
        }
    }
    out.mean_probs /= static_cast<double>(out.n_user_days);
    out.engagement = out.mean_probs.head(catalog.size()).sum();
    out.consumption_share = out.mean_probs.head(catalog.size()) / out.engagement;
    out.diversity = diversity_metrics(out.consumption_share);
    return out;
}

std::vector<DecompositionRecord> decompose_goods(const ModelParameters& params,
                                                 const InteractionLog& log, const Catalog& catalog,
                                                 std::span<const GoodId> goods, int n_placebo,
                                                 std::uint64_t seed) {
    if (log.empty()) throw ValidationError("decomposition needs a nonempty log");
    if (n_placebo < 1) throw ValidationError("n_placebo must be >= 1");
    std::vector<int> rows;
    for (GoodId g : goods) rows.push_back(catalog.index_of(g));

    struct Acc {
        double y0_all = 0, y1_all = 0, y0_t = 0, y1_t = 0;
        long n_t = 0;
    };
    std::vector<Acc> acc(rows.size());
    PanelIndex index(log, catalog);
    StateForward fwd;
    const int max_len = params.max_len();
    long n = 0;

    // Flattened realized page: (row, slot) pairs shared across goods.
    std::vector<std::pair<int, int>> page_entries;
    UserId current_user = 0;
    bool have_user = false;
    Rng rng;
    for (const EventRef& ref : index.refs()) {
        const ChoiceEvent& ev = index.event(ref);
        if (!have_user || ev.user != current_user) {
            current_user = ev.user;
            have_user = true;
            rng = substream(seed ^ 0xdec0deULL, static_cast<std::uint64_t>(ev.user));
        }
        seq_forward(index.history(ref, max_len), params, fwd);
        Vec exp_base = (params.embeddings * fwd.state).array().exp().matrix();

        page_entries.clear();
        double z = exp_base.sum() + 1.0;  // all goods off-page plus outside
        for (int r = 0; r < ev.page.slot_count(); ++r)
            for (GoodId g : ev.page.slots[r]) {
                int row = catalog.index_of(g);
                page_entries.emplace_back(row, r);
                z += exp_base(row) * (std::exp(params.slot_bonus(row, r)) - 1.0);
            }
        ++n;

        for (std::size_t gi = 0; gi < rows.size(); ++gi) {
            int row = rows[gi];
            int on_slot = -1;
            for (auto [prow, pslot] : page_entries)
                if (prow == row) {
                    on_slot = pslot;
                    break;
                }
            double y1, y0;
            if (on_slot >= 0) {
                double exp_on = exp_base(row) * std::exp(params.slot_bonus(row, on_slot));
                y1 = exp_on / z;
                double z0 = z - exp_on + exp_base(row);
                y0 = exp_base(row) / z0;
                acc[gi].y1_t += y1;
                acc[gi].y0_t += y0;
                ++acc[gi].n_t;
            } else {
                y0 = exp_base(row) / z;
                // Average over n_placebo random draws of which page slot the
                // forced good inherits; the intervention toggles only the
                // good's own recommendation status, so a bonus-free good has
                // exactly zero exposure effect.
                double sum_y1 = 0.0;
                for (int p = 0; p < n_placebo; ++p) {
                    int pos = static_cast<int>(rng() % page_entries.size());
                    int dslot = page_entries[pos].second;
                    double exp_forced = exp_base(row) * std::exp(params.slot_bonus(row, dslot));
                    double z1 = z - exp_base(row) + exp_forced;
                    sum_y1 += exp_forced / z1;
                }
                y1 = sum_y1 / n_placebo;
            }
            acc[gi].y0_all += y0;
            acc[gi].y1_all += y1;
        }
    }

    std::vector<DecompositionRecord> records(rows.size());
    for (std::size_t gi = 0; gi < rows.size(); ++gi) {
        DecompositionRecord& rec = records[gi];
        rec.good = goods[gi];
        rec.n_user_days = n;
        rec.n_targeted = acc[gi].n_t;
        rec.y0_all = acc[gi].y0_all / n;
        rec.y1_all = acc[gi].y1_all / n;
        rec.ate = rec.y1_all - rec.y0_all;
        rec.exposure = rec.ate;
        if (acc[gi].n_t > 0) {
            rec.y0_targeted = acc[gi].y0_t / acc[gi].n_t;
            rec.y1_targeted = acc[gi].y1_t / acc[gi].n_t;
            rec.att = rec.y1_targeted - rec.y0_targeted;
            rec.att_defined = true;
        } else {
            rec.y0_targeted = rec.y1_targeted = rec.att = 0.0;
            rec.att_defined = false;
        }
        rec.selection = rec.att_defined ? rec.y0_targeted - rec.y0_all : 0.0;
        rec.targeting = rec.att_defined ? rec.att - rec.ate : 0.0;
    }
    return records;
}

DecompositionRecord decompose_good(const ModelParameters& params, const InteractionLog& log,
                                   const Catalog& catalog, GoodId good, int n_placebo,
                                   std::uint64_t seed) {
    GoodId goods[1] = {good};
    return decompose_goods(params, log, catalog, goods, n_placebo, seed)[0];
}

AggregationWeighting weighting_from_name(const std::string& name) {
    if (name == "median") return AggregationWeighting::Median;
    if (name == "mean") return AggregationWeighting::Mean;
    if (name == "observation" || name == "observation-weighted")
        return AggregationWeighting::ObservationWeighted;
    throw ValidationError("unknown aggregation weighting: " + name);
}

std::string weighting_name(AggregationWeighting w) {
    switch (w) {
        case AggregationWeighting::Median: return "median";
        case AggregationWeighting::Mean: return "mean";
        case AggregationWeighting::ObservationWeighted: return "observation";
    }
    throw ValidationError("unknown aggregation weighting");
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

DecompositionShares aggregate_decomposition(std::span<const DecompositionRecord> records,
                                            AggregationWeighting weighting) {
    if (records.empty()) throw ValidationError("no decomposition records to aggregate");
    double b = 0.0, e = 0.0, r = 0.0;
    if (weighting == AggregationWeighting::Median) {
        std::vector<double> bs, es, rs;
        for (const auto& rec : records) {
            bs.push_back(rec.selection);
            es.push_back(rec.exposure);
            rs.push_back(rec.targeting);
        }
        b = median_of(bs);
        e = median_of(es);
        r = median_of(rs);
    } else {
        for (const auto& rec : records) {
            double w = weighting == AggregationWeighting::Mean
                           ? 1.0
                           : static_cast<double>(rec.n_targeted);
            b += w * rec.selection;
            e += w * rec.exposure;
            r += w * rec.targeting;
        }
    }
    double total = b + e + r;
    if (total == 0.0) throw ValidationError("decomposition total is zero; shares undefined");
    return {b / total, e / total, r / total};
}

TargetingHeterogeneity targeting_heterogeneity(std::span<const DecompositionRecord> records,
                                               const Catalog& catalog,
                                               const std::vector<int>& category_labels) {
    if (records.empty()) throw ValidationError("no decomposition records");
    if (static_cast<int>(category_labels.size()) != catalog.size())
        throw ValidationError("category labels must cover the catalog");

    TargetingHeterogeneity out;
    const int n = static_cast<int>(records.size());
    out.popularity = Vec(n);
    out.targeting = Vec(n);
    out.tercile.resize(n);
    out.category.resize(n);
    for (int i = 0; i < n; ++i) {
        out.goods.push_back(records[i].good);
        out.popularity(i) = records[i].y0_all;
        out.targeting(i) = records[i].targeting;
        out.category[i] = category_labels[catalog.index_of(records[i].good)];
    }

    // Terciles by baseline popularity rank.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return out.popularity(a) < out.popularity(b); });
    for (int pos = 0; pos < n; ++pos) out.tercile[order[pos]] = std::min(2, pos * 3 / n);

    auto make_bin = [&](const std::string& label, const std::vector<int>& members) {
        TargetingBin bin;
        bin.label = label;
        bin.count = static_cast<int>(members.size());
        if (members.empty()) return bin;
        std::vector<double> ts;
        for (int i : members) {
            bin.mean_targeting += out.targeting(i);
            bin.mean_popularity += out.popularity(i);
            ts.push_back(out.targeting(i));
        }
        bin.mean_targeting /= bin.count;
        bin.mean_popularity /= bin.count;
        bin.median_targeting = median_of(ts);
        return bin;
    };

    const char* tercile_names[3] = {"low", "mid", "high"};
    for (int t = 0; t < 3; ++t) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (out.tercile[i] == t) members.push_back(i);
        out.popularity_terciles.push_back(make_bin(tercile_names[t], members));
    }
    std::set<int> cats(out.category.begin(), out.category.end());
    for (int c : cats) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i)
            if (out.category[i] == c) members.push_back(i);
        out.category_bins.push_back(make_bin("category-" + std::to_string(c), members));
    }
    return out;
}

namespace {

// Restricted-catalog engagement run with utility-imputed pages. Choice set
// and pages are limited to allowed rows; per-user streams come from `seed`.
struct RestrictedRun {
    double engagement_sum = 0.0;
    Vec mean_probs;  // full catalog layout, disallowed rows stay zero
    long n_user_days = 0;
};

RestrictedRun restricted_engagement_run(const ModelParameters& params, const InteractionLog& base,
                                        const Catalog& catalog, const std::vector<char>& allowed,
                                        const std::vector<int>& capacities, std::uint64_t seed) {
    PanelIndex index(base, catalog);
    const int max_len = params.max_len();
    const int j = catalog.size();
    std::vector<int> allowed_rows;
    for (int g = 0; g < j; ++g)
        if (allowed[g]) allowed_rows.push_back(g);

    RestrictedRun run;
    run.mean_probs = Vec::Zero(j + 1);
    StateForward fwd;
    UserId current_user = 0;
    bool have_user = false;
    Rng rng;
    std::vector<char> watched(j, 0);
    std::vector<int> watch_rows;
    Vec weights(j);
    for (const EventRef& ref : index.refs()) {
        const ChoiceEvent& ev = index.event(ref);
        if (!have_user || ev.user != current_user) {
            current_user = ev.user;
            have_user = true;
            rng = substream(seed, static_cast<std::uint64_t>(ev.user));
            std::fill(watched.begin(), watched.end(), 0);
            watch_rows.clear();
        }
        int take = std::min<int>(static_cast<int>(watch_rows.size()), max_len);
        std::span<const int> window(watch_rows.data() + watch_rows.size() - take,
                                    static_cast<std::size_t>(take));
        seq_forward(window, params, fwd);

        Vec u = params.embeddings * fwd.state;
        for (int g = 0; g < j; ++g)
            weights(g) = (allowed[g] && !watched[g]) ? std::exp(u(g)) : 0.0;
        // Pages may come up short when few eligible goods remain.
        RecommendationPage page = fill_page_weighted(weights, catalog, capacities, rng);

        // Choice probabilities restricted to the allowed goods.
        for (int r = 0; r < page.slot_count(); ++r)
            for (GoodId g : page.slots[r]) {
                int row = catalog.index_of(g);
                u(row) += params.slot_bonus(row, r);
            }
        double m = 0.0;
        for (int g : allowed_rows) m = std::max(m, u(g));
        double z = std::exp(0.0 - m);
        for (int g : allowed_rows) z += std::exp(u(g) - m);
        double inside = 0.0;
        for (int g : allowed_rows) {
            double p = std::exp(u(g) - m) / z;
            run.mean_probs(g) += p;
            inside += p;
        }
        double outside_p = std::exp(0.0 - m) / z;
        run.mean_probs(j) += outside_p;
        run.engagement_sum += inside;
        ++run.n_user_days;

        // Re-simulated choice to evolve the history.
        double r01 = uniform01(rng) * (inside + outside_p);
        double acc2 = 0.0;
        int pick = -1;
        for (int g : allowed_rows) {
            acc2 += std::exp(u(g) - m) / z;
            if (r01 <= acc2) {
                pick = g;
                break;
            }
        }
        if (pick >= 0) {
            watch_rows.push_back(pick);
            watched[pick] = 1;
        }
    }
    run.mean_probs /= static_cast<double>(run.n_user_days);
    return run;
}

}  // namespace

IncrementalityResult incrementality(const ModelParameters& params,
                                    const std::vector<GoodId>& targets, IncrementalityMode mode,
                                    const InteractionLog& base, const Catalog& catalog,
                                    const std::vector<int>& capacities, std::uint64_t seed) {
    std::vector<char> allowed_with(catalog.size(), 1);
    std::vector<char> allowed_without(catalog.size(), 1);
    std::set<GoodId> seen_in_log;
    for (const auto& ev : base.events)
        if (ev.chose_inside()) seen_in_log.insert(ev.choice);
    for (GoodId g : targets) {
        int row = catalog.index_of(g);
        allowed_without[row] = 0;
        if (mode == IncrementalityMode::New && seen_in_log.count(g))
            throw ValidationError("new-good target " + std::to_string(g) +
                                  " already appears in the base log");
    }
    if (static_cast<int>(targets.size()) >= catalog.size())
        throw ValidationError("cannot remove the entire catalog");

    IncrementalityResult res;
    if (targets.empty()) {
        RestrictedRun run =
            restricted_engagement_run(params, base, catalog, allowed_with, capacities, seed);
        res.engagement_with = res.engagement_without =
            run.engagement_sum / static_cast<double>(run.n_user_days);
        res.mean_probs_with = run.mean_probs;
        res.n_user_days = run.n_user_days;
        return res;  // delta is exactly zero
    }

    RestrictedRun with_run =
        restricted_engagement_run(params, base, catalog, allowed_with, capacities, seed);
    RestrictedRun without_run =
        restricted_engagement_run(params, base, catalog, allowed_without, capacities, seed);
    res.n_user_days = with_run.n_user_days;
    res.engagement_with = with_run.engagement_sum / static_cast<double>(with_run.n_user_days);
    res.engagement_without =
        without_run.engagement_sum / static_cast<double>(without_run.n_user_days);
    res.delta_total = with_run.engagement_sum - without_run.engagement_sum;
    res.delta_per_user_day = res.delta_total / static_cast<double>(res.n_user_days);
    res.mean_probs_with = with_run.mean_probs;
    return res;
}

}  // namespace recdemand
