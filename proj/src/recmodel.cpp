#include "recdemand/recmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace recdemand {

RecModel RecModel::shaped(int n_goods, int dim, int max_len, int hidden1, int hidden2) {
    ModelParameters p = ModelParameters::shaped(n_goods, dim, 1, max_len, hidden1, hidden2);
    RecModel m;
    m.embeddings = p.embeddings;
    m.bias = Vec::Zero(n_goods);
    m.seq = p.seq;
    m.default_state = p.default_state;
    return m;
}

long long RecModel::parameter_count() const {
    long long n = embeddings.size() + bias.size() + default_state.size();
    n += seq.pos_embed.size() + seq.w1.size() + seq.b1.size() + seq.w2.size() + seq.b2.size();
    n += seq.v1.size() + seq.c1.size() + seq.v2.size() + seq.c2.size();
    return n;
}

namespace {

template <typename M, typename F>
void rec_blocks(M& m, F&& f) {
    f(m.embeddings);
    f(m.bias);
    f(m.seq.pos_embed);
    f(m.seq.w1);
    f(m.seq.b1);
    f(m.seq.w2);
    f(m.seq.b2);
    f(m.seq.v1);
    f(m.seq.c1);
    f(m.seq.v2);
    f(m.seq.c2);
    f(m.default_state);
}

}  // namespace

Vec RecModel::to_vector() const {
    Vec flat(parameter_count());
    Eigen::Index at = 0;
    rec_blocks(*this, [&](const auto& m) {
        flat.segment(at, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
        at += m.size();
    });
    return flat;
}

void RecModel::from_vector(const Vec& flat) {
    if (flat.size() != parameter_count()) throw ValidationError("rec model size mismatch");
    Eigen::Index at = 0;
    rec_blocks(*this, [&](auto& m) {
        Eigen::Map<Vec>(m.data(), m.size()) = flat.segment(at, m.size());
        at += m.size();
    });
}

Vec RecModel::state(std::span<const int> history_rows) const {
    StateForward fwd;
    seq_forward(history_rows, embeddings, seq, default_state, fwd);
    return fwd.state;
}

Vec RecModel::scores(const Vec& s) const {
    Vec z = embeddings * s + bias;
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

namespace {

double squared_norm(const RecModel& m) {
    double s = 0.0;
    rec_blocks(m, [&s](const auto& b) { s += b.squaredNorm(); });
    return s;
}

// Bernoulli log-likelihood of page membership for one user-day, stable in
// the logit: log sigma(z) = -log1p(exp(-z)), log(1-sigma(z)) = -log1p(exp(z)).
double event_ll(const TrainingEvent& ev, const RecModel& model, const Vec& state,
                std::vector<char>& on_page) {
    Vec z = model.embeddings * state + model.bias;
    std::fill(on_page.begin(), on_page.end(), 0);
    for (auto [row, slot] : ev.page_rows) {
        (void)slot;
        on_page[row] = 1;
    }
    double ll = 0.0;
    for (int g = 0; g < model.n_goods(); ++g) {
        double zg = z(g);
        ll += on_page[g] ? -std::log1p(std::exp(-zg)) : -std::log1p(std::exp(zg));
    }
    return ll;
}

}  // namespace

double rec_objective(std::span<const TrainingEvent> batch, const RecModel& model, double l2) {
    StateForward fwd;
    std::vector<char> on_page(model.n_goods(), 0);
    double ll = 0.0;
    for (const TrainingEvent& ev : batch) {
        seq_forward(ev.history, model.embeddings, model.seq, model.default_state, fwd);
        ll += event_ll(ev, model, fwd.state, on_page);
    }
    return ll - l2 * squared_norm(model);
}

Vec rec_gradient(std::span<const TrainingEvent> batch, const RecModel& model, double l2) {
    RecModel grad = RecModel::shaped(model.n_goods(), model.dim(), model.max_len(),
                                     model.seq.hidden1(), model.seq.hidden2());
    StateForward fwd;
    std::vector<char> on_page(model.n_goods(), 0);
    Vec err(model.n_goods()), dstate(model.dim());
    for (const TrainingEvent& ev : batch) {
        seq_forward(ev.history, model.embeddings, model.seq, model.default_state, fwd);
        Vec z = model.embeddings * fwd.state + model.bias;
        Vec sigma = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        std::fill(on_page.begin(), on_page.end(), 0);
        for (auto [row, slot] : ev.page_rows) {
            (void)slot;
            on_page[row] = 1;
        }
        for (int g = 0; g < model.n_goods(); ++g) err(g) = (on_page[g] ? 1.0 : 0.0) - sigma(g);
        grad.embeddings.noalias() += err * fwd.state.transpose();
        grad.bias += err;
        dstate.noalias() = model.embeddings.transpose() * err;
        seq_backward(ev.history, model.seq, fwd, dstate, grad.embeddings, grad.seq,
                     grad.default_state);
    }
    Vec flat = grad.to_vector();
    if (l2 != 0.0) flat -= 2.0 * l2 * model.to_vector();
    if (!flat.allFinite()) throw NumericalError("non-finite recommendation-model gradient");
    return flat;
}

RecFitResult fit_rec_model(const InteractionLog& log, const Catalog& catalog,
                           const TrainingConfig& config) {
    config.validate();
    if (log.empty()) throw ValidationError("cannot fit a recommendation model on an empty log");
    std::vector<TrainingEvent> events = make_training_events(log, catalog, config.max_len);

    RecModel model = RecModel::shaped(catalog.size(), config.embedding_dim, config.max_len,
                                      config.mlp1_hidden, config.mlp2_hidden);
    Rng init_rng = substream(config.seed, 0x7265636dULL);
    {
        Vec flat(model.parameter_count());
        for (Eigen::Index i = 0; i < flat.size(); ++i)
            flat(i) = config.init_scale * standard_normal(init_rng);
        model.from_vector(flat);
    }

    Vec theta = model.to_vector();
    Vec adam_m = Vec::Zero(theta.size()), adam_v = Vec::Zero(theta.size());
    Vec momentum_buf = Vec::Zero(theta.size());
    long step_count = 0;

    Rng shuffle_rng = substream(config.seed, 0x72656373ULL);
    std::vector<int> order(events.size());
    std::iota(order.begin(), order.end(), 0);

    RecFitResult result;
    std::vector<TrainingEvent> batch;
    double lr = config.learning_rate;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_ll = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(events[order[i]]);
            double l2_total = config.l2_penalty * static_cast<double>(batch.size());
            epoch_ll += rec_objective(batch, model, 0.0);
            Vec g = rec_gradient(batch, model, l2_total);
            ++step_count;
            if (config.optimizer == "sgd") {
                theta += lr * g;
            } else if (config.optimizer == "momentum") {
                momentum_buf = config.momentum * momentum_buf + g;
                theta += lr * momentum_buf;
            } else {
                adam_m = config.adam_beta1 * adam_m + (1.0 - config.adam_beta1) * g;
                adam_v = config.adam_beta2 * adam_v + (1.0 - config.adam_beta2) * g.cwiseProduct(g);
                double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step_count));
                double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step_count));
                theta += (lr / bc1) *
                         adam_m.cwiseQuotient(((adam_v / bc2).cwiseSqrt().array() + config.adam_eps).matrix());
            }
            model.from_vector(theta);
        }
        double loss = -epoch_ll / static_cast<double>(events.size());
        if (!std::isfinite(loss))
            throw NumericalError("recommendation model diverged at epoch " + std::to_string(epoch));
        result.train_loss.push_back(loss);
        lr *= config.lr_decay;
    }
    result.model = std::move(model);
    return result;
}

}  // namespace recdemand
