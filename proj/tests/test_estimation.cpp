#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "recdemand/estimation.hpp"

using namespace recdemand;
using testutil::random_log;
using testutil::random_params;
using testutil::small_catalog;

TEST_SUITE_BEGIN("estimation");

namespace {

TrainingConfig small_config(int d, int max_len) {
    TrainingConfig cfg;
    cfg.embedding_dim = d;
    cfg.max_len = max_len;
    cfg.mlp1_hidden = 4;
    cfg.mlp2_hidden = 4;
    cfg.batch_size = 32;
    cfg.epochs = 3;
    cfg.learning_rate = 0.05;
    cfg.seed = 99;
    return cfg;
}

}  // namespace

TEST_CASE("init_parameters is seed-deterministic and scale-controlled") {
    Catalog cat = small_catalog(5, 3);
    TrainingConfig cfg = small_config(3, 4);

    SUBCASE("same seed gives identical draws") {
        Rng a = make_rng(7), b = make_rng(7);
        ModelParameters pa = init_parameters(cat, cfg, a);
        ModelParameters pb = init_parameters(cat, cfg, b);
        CHECK(pa.to_vector() == pb.to_vector());
    }
    SUBCASE("zero scale gives zero parameters") {
        cfg.init_scale = 0.0;
        Rng rng = make_rng(8);
        ModelParameters p = init_parameters(cat, cfg, rng);
        CHECK(p.squared_norm() == 0.0);
    }
    SUBCASE("entry mean is within 3 standard errors of zero") {
        cfg.init_scale = 0.5;
        Rng rng = make_rng(9);
        double sum = 0.0;
        long n = 0;
        while (n < 100'000) {
            ModelParameters p = init_parameters(cat, cfg, rng);
            Vec flat = p.to_vector();
            sum += flat.sum();
            n += flat.size();
        }
        double se = cfg.init_scale / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(sum / n) < 3.0 * se);
    }
}

TEST_CASE("batch gradient structure on a zeroed model") {
    // Page empty, outside chosen, B = beta = 0: the embedding gradient of a
    // good outside the history is -P_j * state with P_j uniform.
    Catalog cat = small_catalog(4, 3);
    Rng rng = make_rng(20);
    ModelParameters p = random_params(cat, 3, 4, 4, 4, 0.4, rng);
    p.embeddings.setZero();
    p.slot_bonus.setZero();

    TrainingEvent ev;
    ev.choice_row = -1;
    ev.history = {0, 2};  // goods 1 and 3
    std::vector<TrainingEvent> batch = {ev};

    StateForward fwd;
    seq_forward(ev.history, p, fwd);
    Gradient g = batch_gradient(batch, p, 0.0);
    double uniform = 1.0 / 5.0;
    for (int row : {1, 3}) {  // not in history: no sequence-path contribution
        for (int i = 0; i < 3; ++i)
            CHECK(g.embeddings(row, i) ==
                  doctest::Approx(-uniform * fwd.state(i)).epsilon(1e-12));
    }
}

TEST_CASE("duplicated event doubles the gradient") {
    Catalog cat = small_catalog(5, 3);
    Rng rng = make_rng(21);
    ModelParameters p = random_params(cat, 3, 4, 4, 4, 0.5, rng);
    InteractionLog log = random_log(cat, p, 1, 1, {1, 2, 1}, rng);
    auto events = make_training_events(log, cat, 4);
    std::vector<TrainingEvent> once = {events[0]};
    std::vector<TrainingEvent> twice = {events[0], events[0]};
    Vec g1 = batch_gradient(once, p, 0.0).to_vector();
    Vec g2 = batch_gradient(twice, p, 0.0).to_vector();
    CHECK((g2 - 2.0 * g1).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("slot bonus gradient is structurally sparse") {
    Catalog cat = small_catalog(6, 3);
    Rng rng = make_rng(22);
    ModelParameters p = random_params(cat, 3, 4, 4, 4, 0.5, rng);
    InteractionLog log = random_log(cat, p, 3, 2, {1, 1, 1}, rng);
    auto events = make_training_events(log, cat, 4);
    Gradient g = batch_gradient(events, p, 0.0);
    // (row, slot) pairs never shown in the batch carry zero bonus gradient.
    std::vector<std::vector<bool>> shown(6, std::vector<bool>(3, false));
    for (const auto& ev : events)
        for (auto [row, s] : ev.page_rows) shown[row][s] = true;
    for (int row = 0; row < 6; ++row)
        for (int s = 0; s < 3; ++s)
            if (!shown[row][s]) CHECK(g.slot_bonus(row, s) == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences") {
    Rng rng = make_rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        int j = 5 + static_cast<int>(rng() % 5);
        int d = 2 + static_cast<int>(rng() % 3);
        Catalog cat = small_catalog(j, d);
        ModelParameters p = random_params(cat, 3, 5, 4, 3, 0.5, rng);
        InteractionLog log = random_log(cat, p, 4, 4, {1, 2, 2}, rng);
        auto events = make_training_events(log, cat, 5);
        FiniteDifferenceReport rep = finite_difference_check(p, events, 1e-5, 1e-4, 60, rng);
        CHECK(rep.max_rel_error < 1e-4);
    }
}

TEST_CASE("finite-difference check on the pure quadratic term is near-exact") {
    // Central differences are exact on a quadratic; the step is chosen large
    // enough that cancellation roundoff stays below the tolerance.
    Catalog cat = small_catalog(4, 2);
    Rng rng = make_rng(24);
    ModelParameters p = random_params(cat, 3, 3, 3, 3, 0.4, rng);
    std::vector<TrainingEvent> empty;
    FiniteDifferenceReport rep = finite_difference_check(p, empty, 1e-2, 0.5, 0, rng);
    CHECK(rep.max_rel_error < 1e-10);
}

TEST_CASE("finite-difference truncation error shrinks like step squared") {
    Catalog cat = small_catalog(5, 3);
    Rng rng = make_rng(25);
    ModelParameters p = random_params(cat, 3, 4, 4, 4, 0.9, rng);
    InteractionLog log = random_log(cat, p, 3, 3, {1, 1, 1}, rng);
    auto events = make_training_events(log, cat, 4);

    // Use one coordinate, large steps so truncation dominates roundoff.
    Gradient analytic = batch_gradient(events, p, 0.0);
    ModelParameters scratch = p;
    auto objective = [&](const Vec& x) {
        scratch.from_vector(x);
        return batch_objective(events, scratch, 0.0);
    };
    Vec at = p.to_vector();
    Vec ga = analytic.to_vector();
    int coord = 3;
    auto fd_error = [&](double step) {
        Vec x = at;
        x(coord) = at(coord) + step;
        double up = objective(x);
        x(coord) = at(coord) - step;
        double down = objective(x);
        return std::abs((up - down) / (2 * step) - ga(coord));
    };
    double e1 = fd_error(0.2);
    double e2 = fd_error(0.1);
    double e4 = fd_error(0.05);
    // Richardson behavior: halving the step divides the error by about 4.
    CHECK(e1 / e2 > 2.5);
    CHECK(e2 / e4 > 2.5);
}

TEST_CASE("a tiny ascent step increases the batch objective") {
    Rng rng = make_rng(26);
    Catalog cat = small_catalog(6, 3);
    for (int trial = 0; trial < 10; ++trial) {
        ModelParameters p = random_params(cat, 3, 4, 4, 4, 0.5, rng);
        InteractionLog log = random_log(cat, p, 4, 3, {1, 2, 1}, rng);
        auto events = make_training_events(log, cat, 4);
        Gradient g = batch_gradient(events, p, 1e-6);
        double before = batch_objective(events, p, 1e-6);
        ModelParameters stepped = p;
        stepped.add_scaled(g, 1e-6 / std::max(1.0, g.to_vector().norm()));
        CHECK(batch_objective(events, stepped, 1e-6) > before);
    }
}

TEST_CASE("fit: learning rate zero leaves parameters unchanged") {
    Catalog cat = small_catalog(4, 2);
    Rng rng = make_rng(27);
    ModelParameters truth = random_params(cat, 3, 3, 3, 3, 0.4, rng);
    InteractionLog log = random_log(cat, truth, 5, 4, {1, 1, 1}, rng);
    TrainingConfig cfg = small_config(2, 3);
    cfg.learning_rate = 0.0;
    cfg.mlp1_hidden = 3;
    cfg.mlp2_hidden = 3;
    Rng init_rng = substream(cfg.seed, 0x7261696eULL);
    ModelParameters expected = init_parameters(cat, cfg, init_rng);
    FitResult res = fit(log, cat, cfg);
    CHECK(res.params.to_vector() == expected.to_vector());
}

TEST_CASE("fit is deterministic given the seed") {
    Catalog cat = small_catalog(5, 3);
    Rng rng = make_rng(28);
    ModelParameters truth = random_params(cat, 3, 4, 4, 4, 0.5, rng);
    InteractionLog log = random_log(cat, truth, 8, 5, {1, 2, 1}, rng);
    TrainingConfig cfg = small_config(3, 4);
    FitResult a = fit(log, cat, cfg);
    FitResult b = fit(log, cat, cfg);
    CHECK(a.params.to_vector() == b.params.to_vector());
    REQUIRE(a.report.epochs.size() == b.report.epochs.size());
    for (std::size_t e = 0; e < a.report.epochs.size(); ++e) {
        CHECK(a.report.epochs[e].train_log_loss == b.report.epochs[e].train_log_loss);
        CHECK(a.report.epochs[e].holdout_log_loss == b.report.epochs[e].holdout_log_loss);
    }
}

TEST_CASE("fit is invariant to event reordering") {
    Catalog cat = small_catalog(5, 3);
    Rng rng = make_rng(29);
    ModelParameters truth = random_params(cat, 3, 4, 4, 4, 0.5, rng);
    InteractionLog log = random_log(cat, truth, 6, 4, {1, 2, 1}, rng);
    InteractionLog shuffled = log;
    std::shuffle(shuffled.events.begin(), shuffled.events.end(), rng);
    TrainingConfig cfg = small_config(3, 4);
    FitResult a = fit(log, cat, cfg);
    FitResult b = fit(shuffled, cat, cfg);
    CHECK(a.params.to_vector() == b.params.to_vector());
}

TEST_CASE("fit started at the truth stays near the truth's holdout loss") {
    Catalog cat = small_catalog(8, 3);
    Rng rng = make_rng(30);
    ModelParameters truth = random_params(cat, 3, 4, 4, 4, 0.4, rng);
    InteractionLog log = random_log(cat, truth, 60, 8, {1, 2, 2}, rng);

    TrainingConfig cfg = small_config(3, 4);
    cfg.epochs = 1;
    cfg.learning_rate = 0.01;
    FitResult res = fit(log, cat, cfg, &truth);

    // Oracle: evaluate the truth on the same holdout slice (each user's
    // last event).
    InteractionLog holdout;
    for (int u = 1; u <= 60; ++u) {
        const ChoiceEvent* last = nullptr;
        for (const auto& ev : log.events)
            if (ev.user == u && (!last || ev.period > last->period)) last = &ev;
        holdout.events.push_back(*last);
    }
    // Histories must be reconstructible: carry each user's prior events too,
    // evaluating via the full log and keeping only last-event terms is
    // equivalent; here we recompute the truth loss via fit's own metric.
    double truth_holdout = 0.0;
    {
        PanelIndex index(log, cat);
        StateForward fwd;
        long n = 0;
        for (std::size_t i = 0; i < index.refs().size(); ++i) {
            bool last_of_user = (i + 1 == index.refs().size()) ||
                                (index.event(index.refs()[i + 1]).user !=
                                 index.event(index.refs()[i]).user);
            if (!last_of_user) continue;
            const ChoiceEvent& ev = index.event(index.refs()[i]);
            seq_forward(index.history(index.refs()[i], truth.max_len()), truth, fwd);
            Vec u = deterministic_utilities(fwd.state, cat, ev.page, truth);
            Vec logp = log_choice_probabilities_from_utilities(u, 0.0);
            truth_holdout -= logp(ev.chose_inside() ? cat.index_of(ev.choice) : cat.size());
            ++n;
        }
        truth_holdout /= static_cast<double>(n);
    }
    CHECK(res.report.holdout.log_loss < truth_holdout * 1.01 + 0.02);
}

TEST_CASE("large l2 penalty shrinks fitted parameters toward zero") {
    Catalog cat = small_catalog(4, 2);
    Rng rng = make_rng(31);
    ModelParameters truth = random_params(cat, 3, 3, 3, 3, 0.5, rng);
    InteractionLog log = random_log(cat, truth, 10, 5, {1, 1, 1}, rng);
    TrainingConfig cfg = small_config(2, 3);
    cfg.mlp1_hidden = 3;
    cfg.mlp2_hidden = 3;
    cfg.epochs = 40;
    cfg.learning_rate = 0.02;
    cfg.l2_penalty = 0.0;
    double loose = fit(log, cat, cfg).params.squared_norm();
    cfg.l2_penalty = 0.1;
    double tight = fit(log, cat, cfg).params.squared_norm();
    CHECK(tight < 0.05 * loose);
}

TEST_CASE("holdout metrics: share identities and degenerate baseline") {
    Catalog cat = small_catalog(6, 3);
    Rng rng = make_rng(32);
    ModelParameters p = random_params(cat, 3, 4, 4, 4, 0.6, rng);
    InteractionLog log = random_log(cat, p, 30, 6, {1, 2, 2}, rng);
    HoldoutMetrics m = holdout_metrics(p, log, cat);

    SUBCASE("implied shares sum to one including outside") {
        CHECK(m.implied_share.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m.observed_share.sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant-utility model yields uniform implied shares and no fit") {
        ModelParameters flat = ModelParameters::zeros_like(p);
        HoldoutMetrics mf = holdout_metrics(flat, log, cat);
        for (int g = 0; g < 6; ++g)
            CHECK(mf.implied_share(g) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
        CHECK(mf.share_r2_log < 0.15);
    }
}

TEST_CASE("holdout metrics: truth model recovers shares on a large panel") {
    Catalog cat = small_catalog(30, 4);
    Rng rng = make_rng(33);
    ModelParameters truth = random_params(cat, 3, 5, 4, 4, 0.5, rng);
    truth.embeddings *= 1.5;  // spread shares out
    InteractionLog log = random_log(cat, truth, 1500, 12, {1, 2, 3}, rng);
    HoldoutMetrics m = holdout_metrics(truth, log, cat);
    CHECK(m.n_events == 18000);
    CHECK(m.share_r2_log > 0.9);
}

TEST_SUITE_END();
