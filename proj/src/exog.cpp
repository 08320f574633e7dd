#include "recdemand/exog.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/QR>

namespace recdemand {

const Vec& ExogenousEmbeddingTable::at(GoodId id) const {
    auto it = raw.find(id);
    if (it == raw.end())
        throw ValidationError("no exogenous embedding for good " + std::to_string(id));
    return it->second;
}

void ExogenousEmbeddingTable::insert(GoodId id, Vec v) {
    if (raw_dim == 0) raw_dim = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != raw_dim)
        throw ValidationError("embedding dimension mismatch for good " + std::to_string(id));
    raw[id] = std::move(v);
}

void ExogenousEmbeddingTable::validate() const {
    for (const auto& [id, v] : raw) {
        if (static_cast<int>(v.size()) != raw_dim)
            throw ValidationError("embedding dimension mismatch for good " + std::to_string(id));
        if (!v.allFinite())
            throw ValidationError("non-finite embedding for good " + std::to_string(id));
    }
}

ProjectionWeights ProjectionWeights::shaped(int raw_dim, int hidden, int dim) {
    if (raw_dim <= 0 || hidden <= 0 || dim <= 0)
        throw ValidationError("projection shapes must be positive");
    ProjectionWeights p;
    p.p1 = Mat::Zero(hidden, raw_dim);
    p.q1 = Vec::Zero(hidden);
    p.p2 = Mat::Zero(dim, hidden);
    p.q2 = Vec::Zero(dim);
    return p;
}

long long ProjectionWeights::parameter_count() const {
    return p1.size() + q1.size() + p2.size() + q2.size();
}

Vec ProjectionWeights::to_vector() const {
    Vec flat(parameter_count());
    Eigen::Index at = 0;
    flat.segment(at, p1.size()) = Eigen::Map<const Vec>(p1.data(), p1.size());
    at += p1.size();
    flat.segment(at, q1.size()) = q1;
    at += q1.size();
    flat.segment(at, p2.size()) = Eigen::Map<const Vec>(p2.data(), p2.size());
    at += p2.size();
    flat.segment(at, q2.size()) = q2;
    return flat;
}

void ProjectionWeights::from_vector(const Vec& flat) {
    if (flat.size() != parameter_count()) throw ValidationError("projection size mismatch");
    Eigen::Index at = 0;
    Eigen::Map<Vec>(p1.data(), p1.size()) = flat.segment(at, p1.size());
    at += p1.size();
    q1 = flat.segment(at, q1.size());
    at += q1.size();
    Eigen::Map<Vec>(p2.data(), p2.size()) = flat.segment(at, p2.size());
    at += p2.size();
    q2 = flat.segment(at, q2.size());
}

Vec project(const Vec& raw, const ProjectionWeights& proj) {
    if (raw.size() != proj.raw_dim())
        throw ValidationError("raw embedding dimension does not match the projection");
    Vec h = ((proj.p1 * raw) + proj.q1).array().tanh();
    return proj.p2 * h + proj.q2;
}

void project_backward(const Vec& raw, const ProjectionWeights& proj, const Vec& dout,
                      ProjectionWeights& grad) {
    Vec h = ((proj.p1 * raw) + proj.q1).array().tanh();
    grad.p2.noalias() += dout * h.transpose();
    grad.q2 += dout;
    Vec dh = proj.p2.transpose() * dout;
    Vec dz = dh.array() * (1.0 - h.array().square());
    grad.p1.noalias() += dz * raw.transpose();
    grad.q1 += dz;
}

RowMat project_catalog(const Catalog& catalog, const ExogenousEmbeddingTable& table,
                       const ProjectionWeights& proj, const std::vector<char>& mask,
                       const RowMat& fallback) {
    RowMat out = fallback;
    for (int g = 0; g < catalog.size(); ++g) {
        bool projected = mask.empty() || (g < static_cast<int>(mask.size()) && mask[g]);
        if (projected) out.row(g) = project(table.at(catalog.id_at(g)), proj).transpose();
    }
    return out;
}

ExogenousFitResult fit_exogenous(const InteractionLog& log, const Catalog& catalog,
                                 const ExogenousEmbeddingTable& table,
                                 const TrainingConfig& config, int projection_hidden,
                                 const std::vector<char>& projected_mask) {
    config.validate();
    table.validate();
    if (log.empty()) throw ValidationError("cannot fit on an empty log");
    if (projection_hidden <= 0) throw ValidationError("projection hidden size must be positive");

    std::vector<char> mask = projected_mask;
    if (mask.empty()) mask.assign(catalog.size(), 1);
    if (static_cast<int>(mask.size()) != catalog.size())
        throw ValidationError("projected mask must cover the catalog");
    {
        std::string missing;
        for (int g = 0; g < catalog.size(); ++g)
            if (mask[g] && !table.has(catalog.id_at(g)))
                missing += (missing.empty() ? "" : ", ") + std::to_string(catalog.id_at(g));
        if (!missing.empty())
            throw ValidationError("goods missing from the embedding table: " + missing);
    }

    PanelIndex index(log, catalog);
    std::vector<TrainingEvent> all = make_training_events(index, catalog, config.max_len);
    std::vector<char> is_holdout(all.size(), 0);
    for (std::size_t i = 0; i < index.refs().size(); ++i) {
        bool last = (i + 1 == index.refs().size()) ||
                    (index.event(index.refs()[i + 1]).user != index.event(index.refs()[i]).user);
        is_holdout[i] = last ? 1 : 0;
    }
    std::vector<TrainingEvent> train, holdout;
    for (std::size_t i = 0; i < all.size(); ++i) (is_holdout[i] ? holdout : train).push_back(all[i]);
    if (train.empty()) throw ValidationError("no training events after holdout split");

    Rng rng = substream(config.seed, 0x65786f67ULL);
    ModelParameters params = init_parameters(catalog, config, rng);
    ProjectionWeights proj = ProjectionWeights::shaped(table.raw_dim, projection_hidden,
                                                       config.embedding_dim);
    {
        Vec flat(proj.parameter_count());
        for (Eigen::Index i = 0; i < flat.size(); ++i)
            flat(i) = config.init_scale * standard_normal(rng);
        proj.from_vector(flat);
    }
    ProjectionWeights proj_grad = ProjectionWeights::shaped(table.raw_dim, projection_hidden,
                                                            config.embedding_dim);

    const Eigen::Index n_model = params.parameter_count();
    const Eigen::Index n_proj = proj.parameter_count();
    Vec theta(n_model + n_proj);
    theta.head(n_model) = params.to_vector();
    theta.tail(n_proj) = proj.to_vector();

    Vec adam_m = Vec::Zero(theta.size()), adam_v = Vec::Zero(theta.size());
    Vec momentum_buf = Vec::Zero(theta.size());
    long step_count = 0;

    auto refresh_embeddings = [&]() {
        params.embeddings = project_catalog(catalog, table, proj, mask, params.embeddings);
    };
    refresh_embeddings();

    Rng shuffle_rng = substream(config.seed, 0x73687566ULL);
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    ExogenousFitResult result;
    result.report.n_train_events = static_cast<long>(train.size());
    result.report.n_holdout_events = static_cast<long>(holdout.size());

    std::vector<TrainingEvent> batch;
    double lr = config.learning_rate;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
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

            // Chain masked embedding-row gradients through the projection and
            // freeze those rows as direct parameters.
            proj_grad.p1.setZero();
            proj_grad.q1.setZero();
            proj_grad.p2.setZero();
            proj_grad.q2.setZero();
            for (int row = 0; row < catalog.size(); ++row) {
                if (!mask[row]) continue;
                Vec drow = g.embeddings.row(row).transpose();
                project_backward(table.at(catalog.id_at(row)), proj, drow, proj_grad);
                g.embeddings.row(row).setZero();
            }

            Vec grad(theta.size());
            grad.head(n_model) = g.to_vector();
            grad.tail(n_proj) = proj_grad.to_vector();
            grad.tail(n_proj) -= 2.0 * l2_total * theta.tail(n_proj);

            ++step_count;
            if (config.optimizer == "sgd") {
                theta += lr * grad;
            } else if (config.optimizer == "momentum") {
                momentum_buf = config.momentum * momentum_buf + grad;
                theta += lr * momentum_buf;
            } else {
                adam_m = config.adam_beta1 * adam_m + (1.0 - config.adam_beta1) * grad;
                adam_v = config.adam_beta2 * adam_v +
                         (1.0 - config.adam_beta2) * grad.cwiseProduct(grad);
                double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step_count));
                double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step_count));
                theta += (lr / bc1) * adam_m.cwiseQuotient(
                                          ((adam_v / bc2).cwiseSqrt().array() + config.adam_eps)
                                              .matrix());
            }
            params.from_vector(theta.head(n_model));
            proj.from_vector(theta.tail(n_proj));
            refresh_embeddings();
            if (!params.all_finite())
                throw NumericalError("exogenous fit diverged at epoch " + std::to_string(epoch));
        }
        double train_loss = -epoch_ll / static_cast<double>(train.size());
        if (!std::isfinite(train_loss))
            throw NumericalError("exogenous fit diverged at epoch " + std::to_string(epoch));
        EpochStats es;
        es.epoch = epoch;
        es.train_log_loss = train_loss;
        es.holdout_log_loss =
            holdout.empty() ? 0.0
                            : -batch_objective(holdout, params, 0.0) /
                                  static_cast<double>(holdout.size());
        es.learning_rate = lr;
        result.report.epochs.push_back(es);
        double best = result.report.smoothed_train_loss.empty()
                          ? train_loss
                          : std::min(result.report.smoothed_train_loss.back(), train_loss);
        result.report.smoothed_train_loss.push_back(best);
        lr *= config.lr_decay;
    }

    result.report.holdout = holdout_metrics(params, index, catalog);
    if (!holdout.empty()) {
        result.report.holdout.log_loss =
            -batch_objective(holdout, params, 0.0) / static_cast<double>(holdout.size());
        result.report.holdout.n_events = static_cast<long>(holdout.size());
    }
    result.params = std::move(params);
    result.projection = std::move(proj);
    return result;
}

namespace {

// Log-share R^2 restricted to catalog rows where `in_group` is set.
double group_share_r2(const Vec& observed, const Vec& implied, const std::vector<char>& in_group) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t g = 0; g < in_group.size(); ++g)
        if (in_group[g] && observed(g) > 0.0) {
            sum += std::log(observed(g));
            ++n;
        }
    if (n < 2) return 0.0;
    double mean = sum / n;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t g = 0; g < in_group.size(); ++g) {
        if (!in_group[g] || observed(g) <= 0.0) continue;
        double lo = std::log(observed(g));
        double lm = std::log(std::max(implied(g), 1e-300));
        ss_res += (lo - lm) * (lo - lm);
        ss_tot += (lo - mean) * (lo - mean);
    }
    return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
}

}  // namespace

SplitGoodsResult split_goods_crossvalidation(const InteractionLog& log, const Catalog& catalog,
                                             const ExogenousEmbeddingTable& table,
                                             const TrainingConfig& config, int projection_hidden,
                                             double out_of_sample_fraction, Rng& rng) {
    if (out_of_sample_fraction < 0.0 || out_of_sample_fraction >= 1.0)
        throw ValidationError("out_of_sample_fraction must lie in [0, 1)");
    std::vector<char> projected(catalog.size(), 1);
    std::vector<char> oos(catalog.size(), 0);
    for (int g = 0; g < catalog.size(); ++g) {
        if (uniform01(rng) < out_of_sample_fraction) {
            projected[g] = 0;
            oos[g] = 1;
        }
    }
    if (std::count(projected.begin(), projected.end(), 1) == 0)
        throw ValidationError("split left no goods tied to the embedding table");

    SplitGoodsResult result;
    result.fit = fit_exogenous(log, catalog, table, config, projection_hidden, projected);
    result.out_of_sample = oos;

    result.swapped_params = result.fit.params;
    result.swapped_params.embeddings = project_catalog(
        catalog, table, result.fit.projection, {}, result.fit.params.embeddings);

    result.metrics = holdout_metrics(result.swapped_params, log, catalog);
    std::vector<char> in_sample(catalog.size());
    for (int g = 0; g < catalog.size(); ++g) in_sample[g] = oos[g] ? 0 : 1;
    result.in_sample_share_r2 =
        group_share_r2(result.metrics.observed_share, result.metrics.implied_share, in_sample);
    result.out_sample_share_r2 =
        group_share_r2(result.metrics.observed_share, result.metrics.implied_share, oos);

    // Popularity-unaware baseline: predict every out-of-sample good's log
    // share by the group mean; its R^2 is zero by construction and is
    // reported for reference.
    result.baseline_share_r2 = 0.0;
    return result;
}

ExogenousEmbeddingTable synthetic_embedding_table(const Catalog& catalog,
                                                  const RowMat& reference_embeddings, int raw_dim,
                                                  double noise_scale, Rng& rng) {
    const int d = static_cast<int>(reference_embeddings.cols());
    if (raw_dim < d) throw ValidationError("raw_dim must be at least the embedding dimension");
    if (reference_embeddings.rows() != catalog.size())
        throw ValidationError("reference embeddings must cover the catalog");

    // Random orthogonal map via QR of a Gaussian matrix.
    Mat gauss(raw_dim, raw_dim);
    for (int r = 0; r < raw_dim; ++r)
        for (int c = 0; c < raw_dim; ++c) gauss(r, c) = standard_normal(rng);
    Eigen::HouseholderQR<Mat> qr(gauss);
    Mat q = qr.householderQ();

    ExogenousEmbeddingTable table;
    table.raw_dim = raw_dim;
    for (int g = 0; g < catalog.size(); ++g) {
        Vec z(raw_dim);
        z.head(d) = reference_embeddings.row(g).transpose();
        for (int i = d; i < raw_dim; ++i) z(i) = noise_scale * standard_normal(rng);
        table.insert(catalog.id_at(g), q * z);
    }
    return table;
}

}  // namespace recdemand
