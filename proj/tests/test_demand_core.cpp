#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "recdemand/demand.hpp"

using namespace recdemand;
using testutil::page_of;
using testutil::random_params;
using testutil::small_catalog;

TEST_SUITE_BEGIN("demand-core");

TEST_CASE("empty history returns the default state exactly") {
    Catalog cat = small_catalog(4, 3);
    Rng rng = make_rng(1);
    ModelParameters p = random_params(cat, 3, 5, 4, 4, 0.5, rng);
    UserHistory hist(5);
    Vec state = compute_user_state(hist, p, cat);
    CHECK(state == p.default_state);
}

TEST_CASE("zero mlp weights collapse the state to the mlp2 bias") {
    Catalog cat = small_catalog(4, 3);
    Rng rng = make_rng(2);
    ModelParameters p = random_params(cat, 3, 5, 4, 4, 0.5, rng);
    p.seq.w1.setZero();
    p.seq.w2.setZero();
    p.seq.v1.setZero();
    p.seq.v2.setZero();
    // With all weight matrices zero the attention is uniform, v_k is the
    // constant b2 tail, and the state is exactly c2.
    UserHistory hist(5);
    hist.push(0, 1);
    hist.push(1, 3);
    hist.push(4, 2);
    Vec state = compute_user_state(hist, p, cat);
    for (int i = 0; i < 3; ++i) CHECK(state(i) == doctest::Approx(p.seq.c2(i)).epsilon(1e-15));
}

TEST_CASE("state matches the straight-line oracle on random inputs") {
    Rng rng = make_rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Catalog cat = small_catalog(6, 4);
        ModelParameters p = random_params(cat, 3, 5, 5, 3, 0.7, rng);
        std::vector<int> rows = {2, 0, 5};
        StateForward fwd;
        seq_forward(rows, p, fwd);
        auto expect = oracle::user_state(rows, p);
        for (int i = 0; i < 4; ++i) CHECK(fwd.state(i) == doctest::Approx(expect[i]).epsilon(1e-12));
    }
}

TEST_CASE("history windows truncate to the most recent max_len entries") {
    Catalog cat = small_catalog(8, 3);
    Rng rng = make_rng(4);
    ModelParameters p = random_params(cat, 3, 3, 4, 4, 0.4, rng);  // max_len 3
    UserHistory long_hist(10);
    for (int t = 0; t < 7; ++t) long_hist.push(t, (t % 8) + 1);
    UserHistory short_hist(10);
    for (int t = 4; t < 7; ++t) short_hist.push(t, (t % 8) + 1);
    Vec a = compute_user_state(long_hist, p, cat);
    Vec b = compute_user_state(short_hist, p, cat);
    CHECK(a == b);
}

TEST_CASE("zero recency encodings make the state permutation invariant") {
    Catalog cat = small_catalog(6, 3);
    Rng rng = make_rng(5);
    ModelParameters p = random_params(cat, 3, 5, 4, 4, 0.5, rng);

    std::vector<int> rows = {1, 4, 2};
    std::vector<int> permuted = {2, 1, 4};
    StateForward fwd;

    SUBCASE("with nonzero encodings order can matter") {
        seq_forward(rows, p, fwd);
        Vec a = fwd.state;
        seq_forward(permuted, p, fwd);
        Vec b = fwd.state;
        CHECK((a - b).norm() > 1e-12);
    }
    SUBCASE("with zero encodings it cannot") {
        p.seq.pos_embed.setZero();
        seq_forward(rows, p, fwd);
        Vec a = fwd.state;
        seq_forward(permuted, p, fwd);
        Vec b = fwd.state;
        CHECK((a - b).norm() < 1e-13);
    }
}

TEST_CASE("deterministic utility follows embedding dot product plus slot bonus") {
    Catalog cat = small_catalog(3, 2);
    ModelParameters p = ModelParameters::shaped(3, 2, 3, 4, 3, 3);

    SUBCASE("zero state, good absent from the page") {
        auto page = RecommendationPage::empty({1, 2, 3});
        Vec state = Vec::Zero(2);
        CHECK(deterministic_utility(state, 1, page, p, cat) == 0.0);
    }
    SUBCASE("basis state with a billboard bonus") {
        p.embeddings(0, 0) = 2.0;
        p.slot_bonus(0, slot::kBillboard) = 0.5;
        auto page = page_of({{1}, {}, {}}, {1, 2, 3});
        Vec state(2);
        state << 1.0, 0.0;
        CHECK(deterministic_utility(state, 1, page, p, cat) == doctest::Approx(2.5));
    }
    SUBCASE("presence in a slot shifts utility by exactly the bonus") {
        Rng rng = make_rng(6);
        ModelParameters q = random_params(cat, 3, 4, 3, 3, 0.8, rng);
        Vec state(2);
        state << 0.3, -1.2;
        auto off_page = RecommendationPage::empty({1, 2, 3});
        auto on_page = page_of({{}, {2}, {}}, {1, 2, 3});
        double diff = deterministic_utility(state, 2, on_page, q, cat) -
                      deterministic_utility(state, 2, off_page, q, cat);
        CHECK(diff == doctest::Approx(q.slot_bonus(1, slot::kTop25)).epsilon(1e-14));
    }
    SUBCASE("unknown good is a lookup error") {
        auto page = RecommendationPage::empty({1, 2, 3});
        Vec state = Vec::Zero(2);
        CHECK_THROWS_AS(deterministic_utility(state, 99, page, p, cat), ValidationError);
    }
}

TEST_CASE("choice probabilities: closed forms") {
    Catalog cat = small_catalog(2, 2);
    ModelParameters p = ModelParameters::shaped(2, 2, 3, 4, 3, 3);
    auto page = RecommendationPage::empty({1, 2, 3});
    Vec state = Vec::Zero(2);

    SUBCASE("all utilities zero is uniform over goods and outside") {
        Vec probs = choice_probabilities(state, cat, page, p);
        REQUIRE(probs.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(probs(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
    SUBCASE("utilities (ln 2, 0) give (1/2, 1/4, 1/4)") {
        Vec u(2);
        u << std::log(2.0), 0.0;
        Vec probs = choice_probabilities_from_utilities(u, 0.0);
        CHECK(probs(0) == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(probs(1) == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(probs(2) == doctest::Approx(0.25).epsilon(1e-14));
    }
    SUBCASE("NaN utility raises a numerical error") {
        Vec u(2);
        u << std::nan(""), 0.0;
        CHECK_THROWS_AS(choice_probabilities_from_utilities(u, 0.0), NumericalError);
    }
}

TEST_CASE("choice probabilities match a Gumbel argmax simulation") {
    // Random-utility oracle: P(j) is the chance u_j + gumbel wins.
    Vec u(2);
    u << 0.8, -0.4;
    Vec probs = choice_probabilities_from_utilities(u, 0.0);
    const int n = 1'000'000;
    Rng rng = make_rng(7);
    Eigen::Vector3i counts = Eigen::Vector3i::Zero();
    for (int i = 0; i < n; ++i) {
        double best = gumbel(rng);  // outside, utility 0
        int arg = 2;
        for (int j = 0; j < 2; ++j) {
            double val = u(j) + gumbel(rng);
            if (val > best) {
                best = val;
                arg = j;
            }
        }
        ++counts(arg);
    }
    for (int a = 0; a < 3; ++a) {
        double phat = counts(a) / static_cast<double>(n);
        double se = std::sqrt(probs(a) * (1 - probs(a)) / n);
        CHECK(std::abs(phat - probs(a)) < 3.0 * se);
    }
}

TEST_CASE("probability simplex holds on random inputs") {
    Rng rng = make_rng(8);
    Catalog cat = small_catalog(7, 3);
    for (int trial = 0; trial < 200; ++trial) {
        ModelParameters p = random_params(cat, 3, 4, 4, 4, 1.0, rng);
        auto page = testutil::random_page(cat, {1, 2, 3}, rng);
        Vec state(3);
        for (int i = 0; i < 3; ++i) state(i) = 2.0 * standard_normal(rng);
        Vec probs = choice_probabilities(state, cat, page, p);
        CHECK(std::abs(probs.sum() - 1.0) < 1e-10);
        CHECK(probs.minCoeff() > 0.0);
    }
}

TEST_CASE("adding a positive slot bonus reallocates probability toward that good") {
    Rng rng = make_rng(9);
    Catalog cat = small_catalog(5, 3);
    for (int trial = 0; trial < 50; ++trial) {
        ModelParameters p = random_params(cat, 3, 4, 4, 4, 0.6, rng);
        p.slot_bonus = p.slot_bonus.array().abs() + 0.05;
        Vec state(3);
        for (int i = 0; i < 3; ++i) state(i) = standard_normal(rng);
        auto base = RecommendationPage::empty({1, 2, 3});
        auto boosted = page_of({{3}, {}, {}}, {1, 2, 3});
        Vec p0 = choice_probabilities(state, cat, base, p);
        Vec p1 = choice_probabilities(state, cat, boosted, p);
        int row = cat.index_of(3);
        CHECK(p1(row) > p0(row));
        for (int a = 0; a < p0.size(); ++a)
            if (a != row) CHECK(p1(a) < p0(a));
    }
}

TEST_CASE("translation invariance is bit-stable for exactly representable shifts") {
    // Utilities on a 0.25 grid and power-of-two shifts keep every
    // intermediate exact, so max-subtraction must give identical bits.
    Rng rng = make_rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        int j = 1 + static_cast<int>(rng() % 6);
        Vec u(j);
        for (int i = 0; i < j; ++i)
            u(i) = 0.25 * static_cast<double>(static_cast<int>(rng() % 65) - 32);
        double outside = 0.25 * static_cast<double>(static_cast<int>(rng() % 65) - 32);
        double shift = std::ldexp(1.0, static_cast<int>(rng() % 7) - 3);  // 2^-3 .. 2^3
        if (rng() % 2) shift = -shift;
        Vec a = choice_probabilities_from_utilities(u, outside);
        Vec b = choice_probabilities_from_utilities((u.array() + shift).matrix(), outside + shift);
        for (int i = 0; i <= j; ++i) CHECK(a(i) == b(i));
    }
}

TEST_CASE("engagement is the inside probability mass") {
    SUBCASE("worked values") {
        Vec probs(3);
        probs << 0.5, 0.25, 0.25;
        CHECK(engagement(probs) == doctest::Approx(0.75));
        Vec uniform = Vec::Constant(10, 0.1);
        CHECK(engagement(uniform) == doctest::Approx(0.9));
    }
    SUBCASE("identity against the inside sum on random vectors") {
        Rng rng = make_rng(11);
        for (int trial = 0; trial < 100; ++trial) {
            Vec u(5);
            for (int i = 0; i < 5; ++i) u(i) = 2.0 * standard_normal(rng);
            Vec probs = choice_probabilities_from_utilities(u, 0.0);
            double inside = 0.0;
            for (int i = 0; i < 5; ++i) inside += probs(i);
            CHECK(engagement(probs) == doctest::Approx(inside).epsilon(1e-12));
        }
    }
}

TEST_CASE("log likelihood: single-event closed form and additivity") {
    Catalog cat = small_catalog(2, 2);
    ModelParameters p = ModelParameters::shaped(2, 2, 3, 4, 3, 3);

    SUBCASE("outside choice under zero utilities") {
        InteractionLog log;
        ChoiceEvent ev;
        ev.user = 1;
        ev.period = 0;
        ev.page = RecommendationPage::empty({1, 2, 3});
        ev.choice = kOutsideGood;
        log.events.push_back(ev);
        CHECK(log_likelihood(log, p, cat) == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));
    }
    SUBCASE("unknown good in an event is an error") {
        InteractionLog log;
        ChoiceEvent ev;
        ev.user = 1;
        ev.period = 0;
        ev.page = RecommendationPage::empty({1, 2, 3});
        ev.choice = 42;
        log.events.push_back(ev);
        CHECK_THROWS_AS(log_likelihood(log, p, cat), ValidationError);
    }
}

TEST_CASE("log likelihood matches a per-event brute-force computation") {
    Rng rng = make_rng(12);
    Catalog cat = small_catalog(6, 3);
    ModelParameters p = random_params(cat, 3, 4, 4, 4, 0.5, rng);
    InteractionLog log = testutil::random_log(cat, p, 5, 3, {1, 2, 2}, rng);

    // Oracle: recompute each event's history, state, softmax by hand.
    double expect = 0.0;
    for (int u = 1; u <= 5; ++u) {
        std::vector<int> hist;
        for (const ChoiceEvent& ev : log.events) {
            if (ev.user != u) continue;
            std::vector<int> window = hist;
            if (static_cast<int>(window.size()) > 4)
                window.erase(window.begin(), window.end() - 4);
            auto state = oracle::user_state(window, p);
            std::vector<double> utilities(6);
            for (int g = 0; g < 6; ++g) {
                double v = 0.0;
                for (int i = 0; i < 3; ++i) v += state[i] * p.embeddings(g, i);
                for (int r = 0; r < ev.page.slot_count(); ++r)
                    for (GoodId id : ev.page.slots[r])
                        if (cat.index_of(id) == g) v += p.slot_bonus(g, r);
                utilities[g] = v;
            }
            auto probs = oracle::softmax_with_outside(utilities);
            int alt = ev.chose_inside() ? cat.index_of(ev.choice) : 6;
            expect += std::log(probs[alt]);
            if (ev.chose_inside()) hist.push_back(cat.index_of(ev.choice));
        }
    }
    CHECK(log_likelihood(log, p, cat) == doctest::Approx(expect).epsilon(1e-10));

    SUBCASE("order independence") {
        InteractionLog shuffled = log;
        std::shuffle(shuffled.events.begin(), shuffled.events.end(), rng);
        CHECK(log_likelihood(shuffled, p, cat) ==
              doctest::Approx(log_likelihood(log, p, cat)).epsilon(1e-12));
    }
}

TEST_SUITE_END();
