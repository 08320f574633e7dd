#include "recdemand/estimation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace recdemand {

void TrainingConfig::validate() const {
    if (embedding_dim <= 0) throw ValidationError("embedding_dim must be positive");
    if (learning_rate < 0) throw ValidationError("learning_rate must be >= 0");
    if (lr_decay <= 0) throw ValidationError("lr_decay must be positive");
    if (batch_size <= 0) throw ValidationError("batch_size must be positive");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (l2_penalty < 0) throw ValidationError("l2_penalty must be >= 0");
    if (max_len <= 0) throw ValidationError("max_len must be positive");
    if (slot_count <= 0) throw ValidationError("slot_count must be positive");
    if (init_scale < 0) throw ValidationError("init_scale must be >= 0");
    if (mlp1_hidden <= 0 || mlp2_hidden <= 0) throw ValidationError("mlp hidden sizes must be positive");
    if (optimizer != "sgd" && optimizer != "momentum" && optimizer != "adam")
        throw ValidationError("unknown optimizer: " + optimizer);
}

std::vector<TrainingEvent> make_training_events(const PanelIndex& index, const Catalog& catalog,
                                                int max_len) {
    std::vector<TrainingEvent> out;
    out.reserve(index.refs().size());
    for (const EventRef& ref : index.refs()) {
        const ChoiceEvent& ev = index.event(ref);
        TrainingEvent te;
        te.choice_row = ev.chose_inside() ? catalog.index_of(ev.choice) : -1;
        auto window = index.history(ref, max_len);
        te.history.assign(window.begin(), window.end());
        for (int r = 0; r < ev.page.slot_count(); ++r)
            for (GoodId g : ev.page.slots[r]) te.page_rows.emplace_back(catalog.index_of(g), r);
        out.push_back(std::move(te));
    }
    return out;
}

std::vector<TrainingEvent> make_training_events(const InteractionLog& log, const Catalog& catalog,
                                                int max_len) {
    return make_training_events(PanelIndex(log, catalog), catalog, max_len);
}

namespace {

// Utilities for one training event; page bonuses applied on top of B . state.
Vec event_utilities(const TrainingEvent& ev, const ModelParameters& params, const Vec& state) {
    Vec u = params.embeddings * state;
    for (auto [row, slot] : ev.page_rows)
        if (slot < params.slot_count()) u(row) += params.slot_bonus(row, slot);
    return u;
}

}  // namespace

double batch_objective(std::span<const TrainingEvent> batch, const ModelParameters& params,
                       double l2) {
    StateForward fwd;
    double ll = 0.0;
    for (const TrainingEvent& ev : batch) {
        seq_forward(ev.history, params, fwd);
        Vec u = event_utilities(ev, params, fwd.state);
        Vec logp = log_choice_probabilities_from_utilities(u, 0.0);
        ll += logp(ev.choice_row >= 0 ? ev.choice_row : params.n_goods());
    }
    return ll - l2 * params.squared_norm();
}

Gradient batch_gradient(std::span<const TrainingEvent> batch, const ModelParameters& params,
                        double l2, double* log_likelihood_out) {
    Gradient grad = ModelParameters::zeros_like(params);
    StateForward fwd;
    const int j = params.n_goods();
    Vec err(j), dstate(params.dim());
    double ll = 0.0;
    for (std::size_t e = 0; e < batch.size(); ++e) {
        const TrainingEvent& ev = batch[e];
        seq_forward(ev.history, params, fwd);
        Vec u = event_utilities(ev, params, fwd.state);
        Vec probs = choice_probabilities_from_utilities(u, 0.0);
        if (!probs.allFinite())
            throw NumericalError("non-finite probabilities at batch event " + std::to_string(e));
        ll += std::log(probs(ev.choice_row >= 0 ? ev.choice_row : j));
        // d log P(choice) / d u_k = 1[k = choice] - P_k for inside goods.
        err = -probs.head(j);
        if (ev.choice_row >= 0) err(ev.choice_row) += 1.0;
        grad.embeddings.noalias() += err * fwd.state.transpose();
        for (auto [row, slot] : ev.page_rows)
            if (slot < params.slot_count()) grad.slot_bonus(row, slot) += err(row);
        dstate.noalias() = params.embeddings.transpose() * err;
        seq_backward(ev.history, params, fwd, dstate, grad);
    }
    if (l2 != 0.0) grad.add_scaled(params, -2.0 * l2);
    if (!grad.all_finite()) throw NumericalError("non-finite gradient in batch");
    if (log_likelihood_out) *log_likelihood_out = ll;
    return grad;
}

ModelParameters init_parameters(const Catalog& catalog, const TrainingConfig& config, Rng& rng) {
    config.validate();
    ModelParameters p = ModelParameters::shaped(catalog.size(), config.embedding_dim,
                                                config.slot_count, config.max_len,
                                                config.mlp1_hidden, config.mlp2_hidden);
    Vec flat(p.parameter_count());
    for (Eigen::Index i = 0; i < flat.size(); ++i)
        flat(i) = config.init_scale * standard_normal(rng);
    p.from_vector(flat);
    return p;
}

namespace {

struct Optimizer {
    const TrainingConfig& config;
    Vec momentum_buf;
    Vec adam_m, adam_v;
    long step_count = 0;

    explicit Optimizer(const TrainingConfig& cfg, Eigen::Index n) : config(cfg) {
        if (cfg.optimizer == "momentum") momentum_buf = Vec::Zero(n);
        if (cfg.optimizer == "adam") {
            adam_m = Vec::Zero(n);
            adam_v = Vec::Zero(n);
        }
    }

    // Ascent step on the objective.
    void apply(Vec& theta, const Vec& grad, double lr) {
        ++step_count;
        if (config.optimizer == "sgd") {
            theta += lr * grad;
        } else if (config.optimizer == "momentum") {
            momentum_buf = config.momentum * momentum_buf + grad;
            theta += lr * momentum_buf;
        } else {
            adam_m = config.adam_beta1 * adam_m + (1.0 - config.adam_beta1) * grad;
            adam_v = config.adam_beta2 * adam_v + (1.0 - config.adam_beta2) * grad.cwiseProduct(grad);
            double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step_count));
            double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step_count));
            theta += (lr / bc1) * adam_m.cwiseQuotient(
                                      ((adam_v / bc2).cwiseSqrt().array() + config.adam_eps).matrix());
        }
    }
};

double mean_log_loss(std::span<const TrainingEvent> events, const ModelParameters& params) {
    if (events.empty()) return 0.0;
    return -batch_objective(events, params, 0.0) / static_cast<double>(events.size());
}

}  // namespace

FitResult fit(const InteractionLog& log, const Catalog& catalog, const TrainingConfig& config,
              const ModelParameters* init) {
    config.validate();
    if (log.empty()) throw ValidationError("cannot fit on an empty log");

    PanelIndex index(log, catalog);
    const int max_len = init ? init->max_len() : config.max_len;
    std::vector<TrainingEvent> all = make_training_events(index, catalog, max_len);

    // Holdout: each user's last event (canonical order puts it last per user).
    std::vector<char> is_holdout(all.size(), 0);
    for (std::size_t i = 0; i < index.refs().size(); ++i) {
        bool last_of_user = (i + 1 == index.refs().size()) ||
                            (index.event(index.refs()[i + 1]).user != index.event(index.refs()[i]).user);
        is_holdout[i] = last_of_user ? 1 : 0;
    }
    std::vector<TrainingEvent> train, holdout;
    for (std::size_t i = 0; i < all.size(); ++i)
        (is_holdout[i] ? holdout : train).push_back(all[i]);
    if (train.empty()) throw ValidationError("no training events after holdout split");

    Rng rng = substream(config.seed, 0x7261696eULL);
    ModelParameters params = init ? *init : init_parameters(catalog, config, rng);
    params.validate(catalog);

    Vec theta = params.to_vector();
    Optimizer opt(config, theta.size());
    Rng shuffle_rng = substream(config.seed, 0x73687566ULL);
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    FitResult result;
    result.report.n_train_events = static_cast<long>(train.size());
    result.report.n_holdout_events = static_cast<long>(holdout.size());

    std::vector<TrainingEvent> batch;
    double lr = config.learning_rate;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_ll = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
            double l2_total = config.l2_penalty * static_cast<double>(batch.size());
            double batch_ll = 0.0;
            Gradient g = batch_gradient(batch, params, l2_total, &batch_ll);
            epoch_ll += batch_ll;
            opt.apply(theta, g.to_vector(), lr);
            params.from_vector(theta);
            if (!params.all_finite())
                throw NumericalError("parameters diverged at epoch " + std::to_string(epoch));
        }
        double train_loss = -epoch_ll / static_cast<double>(train.size());
        if (!std::isfinite(train_loss))
            throw NumericalError("training loss diverged at epoch " + std::to_string(epoch));
        EpochStats es;
        es.epoch = epoch;
        es.train_log_loss = train_loss;
        es.holdout_log_loss = mean_log_loss(holdout, params);
        es.learning_rate = lr;
        es.wall_clock_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.report.epochs.push_back(es);
        double best = result.report.smoothed_train_loss.empty()
                          ? train_loss
                          : std::min(result.report.smoothed_train_loss.back(), train_loss);
        result.report.smoothed_train_loss.push_back(best);
        lr *= config.lr_decay;
    }

    result.params = std::move(params);
    result.report.holdout = holdout_metrics(result.params, index, catalog);
    // Replace full-log metrics' loss with the holdout slice's loss.
    result.report.holdout.log_loss = mean_log_loss(holdout, result.params);
    result.report.holdout.n_events = static_cast<long>(holdout.size());
    return result;
}

HoldoutMetrics holdout_metrics(const ModelParameters& params, const PanelIndex& index,
                               const Catalog& catalog) {
    const int j = catalog.size();
    HoldoutMetrics m;
    m.observed_share = Vec::Zero(j + 1);
    m.implied_share = Vec::Zero(j + 1);
    StateForward fwd;
    double ll = 0.0;
    long n = 0;
    for (const EventRef& ref : index.refs()) {
        const ChoiceEvent& ev = index.event(ref);
        seq_forward(index.history(ref, params.max_len()), params, fwd);
        Vec u = deterministic_utilities(fwd.state, catalog, ev.page, params);
        Vec logp = log_choice_probabilities_from_utilities(u, 0.0);
        int alt = ev.chose_inside() ? catalog.index_of(ev.choice) : j;
        ll += logp(alt);
        m.implied_share += logp.array().exp().matrix();
        m.observed_share(alt) += 1.0;
        ++n;
    }
    if (n == 0) throw ValidationError("holdout metrics on an empty log");
    m.n_events = n;
    m.observed_share /= static_cast<double>(n);
    m.implied_share /= static_cast<double>(n);
    m.log_loss = -ll / static_cast<double>(n);
    m.implied_engagement = m.implied_share.head(j).sum();

    // R^2 of log model share against log observed share over goods observed
    // at least once.
    double sum_obs = 0.0;
    int n_pos = 0;
    for (int g = 0; g < j; ++g) {
        if (m.observed_share(g) > 0.0) {
            sum_obs += std::log(m.observed_share(g));
            ++n_pos;
        } else {
            ++m.zero_share_goods;
        }
    }
    if (n_pos >= 2) {
        double mean_obs = sum_obs / n_pos;
        double ss_res = 0.0, ss_tot = 0.0;
        for (int g = 0; g < j; ++g) {
            if (m.observed_share(g) <= 0.0) continue;
            double lo = std::log(m.observed_share(g));
            double lm = std::log(std::max(m.implied_share(g), 1e-300));
            ss_res += (lo - lm) * (lo - lm);
            ss_tot += (lo - mean_obs) * (lo - mean_obs);
        }
        m.share_r2_log = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
    }
    return m;
}

HoldoutMetrics holdout_metrics(const ModelParameters& params, const InteractionLog& log,
                               const Catalog& catalog) {
    return holdout_metrics(params, PanelIndex(log, catalog), catalog);
}

FiniteDifferenceReport finite_difference_check_generic(
    const std::function<double(const Vec&)>& objective, const Vec& analytic_gradient, const Vec& at,
    double step, int n_coords, Rng& rng) {
    if (step <= 0) throw ValidationError("finite-difference step must be positive");
    FiniteDifferenceReport rep;
    const Eigen::Index n = at.size();
    std::vector<Eigen::Index> coords;
    if (n_coords <= 0 || n_coords >= n) {
        coords.resize(n);
        std::iota(coords.begin(), coords.end(), 0);
    } else {
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        for (int i = 0; i < n_coords; ++i) coords.push_back(pick(rng));
    }
    Vec x = at;
    for (Eigen::Index c : coords) {
        double saved = x(c);
        x(c) = saved + step;
        double up = objective(x);
        x(c) = saved - step;
        double down = objective(x);
        x(c) = saved;
        double numeric = (up - down) / (2.0 * step);
        double analytic = analytic_gradient(c);
        double abs_err = std::abs(numeric - analytic);
        double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
        rep.max_rel_error = std::max(rep.max_rel_error, abs_err / denom);
        ++rep.coords_checked;
    }
    return rep;
}

FiniteDifferenceReport finite_difference_check(const ModelParameters& params,
                                               std::span<const TrainingEvent> batch, double step,
                                               double l2, int n_coords, Rng& rng) {
    Gradient analytic = batch_gradient(batch, params, l2);
    ModelParameters scratch = params;
    auto objective = [&](const Vec& x) {
        scratch.from_vector(x);
        return batch_objective(batch, scratch, l2);
    };
    return finite_difference_check_generic(objective, analytic.to_vector(), params.to_vector(),
                                           step, n_coords, rng);
}

}  // namespace recdemand
