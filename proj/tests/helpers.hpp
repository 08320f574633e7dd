#pragma once

// Shared builders for desk-sized test fixtures.

#include <algorithm>
#include <vector>

#include "recdemand/demand.hpp"
#include "recdemand/estimation.hpp"
#include "recdemand/parameters.hpp"
#include "recdemand/rng.hpp"
#include "recdemand/types.hpp"

namespace recdemand::testutil {

inline Catalog small_catalog(int n_goods, int dim) {
    std::vector<GoodId> ids(n_goods);
    for (int i = 0; i < n_goods; ++i) ids[i] = i + 1;
    return Catalog(ids, dim);
}

inline ModelParameters random_params(const Catalog& catalog, int slot_count, int max_len,
                                     int h1, int h2, double scale, Rng& rng) {
    ModelParameters p = ModelParameters::shaped(catalog.size(), catalog.embedding_dim(),
                                                slot_count, max_len, h1, h2);
    Vec flat(p.parameter_count());
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = scale * standard_normal(rng);
    p.from_vector(flat);
    return p;
}

inline RecommendationPage page_of(const std::vector<std::vector<GoodId>>& slots,
                                  const std::vector<int>& capacities) {
    RecommendationPage page;
    page.slots = slots;
    page.capacities = capacities;
    return page;
}

// A random page respecting capacities, goods drawn without replacement.
inline RecommendationPage random_page(const Catalog& catalog, const std::vector<int>& capacities,
                                      Rng& rng) {
    std::vector<int> rows(catalog.size());
    for (int i = 0; i < catalog.size(); ++i) rows[i] = i;
    std::shuffle(rows.begin(), rows.end(), rng);
    RecommendationPage page = RecommendationPage::empty(capacities);
    int at = 0;
    for (std::size_t r = 0; r < capacities.size(); ++r)
        for (int c = 0; c < capacities[r] && at < catalog.size(); ++c)
            page.slots[r].push_back(catalog.id_at(rows[at++]));
    return page;
}

// A small synthetic log with random pages and choices drawn from the model.
inline InteractionLog random_log(const Catalog& catalog, const ModelParameters& params,
                                 int n_users, int horizon, const std::vector<int>& capacities,
                                 Rng& rng) {
    InteractionLog log;
    for (int u = 1; u <= n_users; ++u) {
        UserHistory hist(params.max_len());
        for (int t = 0; t < horizon; ++t) {
            ChoiceEvent ev;
            ev.user = u;
            ev.period = t;
            ev.page = random_page(catalog, capacities, rng);
            Vec state = compute_user_state(hist, params, catalog);
            Vec probs = choice_probabilities(state, catalog, ev.page, params);
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
            ev.choice = pick == catalog.size() ? kOutsideGood : catalog.id_at(pick);
            if (ev.chose_inside()) hist.push(t, ev.choice);
            log.events.push_back(ev);
        }
    }
    return log;
}

}  // namespace recdemand::testutil
