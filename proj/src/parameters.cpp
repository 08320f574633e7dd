#include "recdemand/parameters.hpp"

namespace recdemand {

ModelParameters ModelParameters::shaped(int n_goods, int dim, int slot_count, int max_len,
                                        int hidden1, int hidden2) {
    if (n_goods <= 0 || dim <= 0 || slot_count <= 0 || max_len <= 0 || hidden1 <= 0 ||
        hidden2 <= 0)
        throw ValidationError("parameter shapes must be positive");
    ModelParameters p;
    p.embeddings = RowMat::Zero(n_goods, dim);
    p.slot_bonus = RowMat::Zero(n_goods, slot_count);
    p.seq.pos_embed = RowMat::Zero(max_len, dim);
    p.seq.w1 = Mat::Zero(hidden1, dim);
    p.seq.b1 = Vec::Zero(hidden1);
    p.seq.w2 = Mat::Zero(1 + dim, hidden1);
    p.seq.b2 = Vec::Zero(1 + dim);
    p.seq.v1 = Mat::Zero(hidden2, dim);
    p.seq.c1 = Vec::Zero(hidden2);
    p.seq.v2 = Mat::Zero(dim, hidden2);
    p.seq.c2 = Vec::Zero(dim);
    p.default_state = Vec::Zero(dim);
    return p;
}

ModelParameters ModelParameters::zeros_like(const ModelParameters& other) {
    return shaped(other.n_goods(), other.dim(), other.slot_count(), other.max_len(),
                  other.seq.hidden1(), other.seq.hidden2());
}

namespace {

template <typename F>
void for_each_block(ModelParameters& p, F&& f) {
    f(p.embeddings);
    f(p.slot_bonus);
    f(p.seq.pos_embed);
    f(p.seq.w1);
    f(p.seq.b1);
    f(p.seq.w2);
    f(p.seq.b2);
    f(p.seq.v1);
    f(p.seq.c1);
    f(p.seq.v2);
    f(p.seq.c2);
    f(p.default_state);
}

template <typename F>
void for_each_block(const ModelParameters& p, F&& f) {
    f(p.embeddings);
    f(p.slot_bonus);
    f(p.seq.pos_embed);
    f(p.seq.w1);
    f(p.seq.b1);
    f(p.seq.w2);
    f(p.seq.b2);
    f(p.seq.v1);
    f(p.seq.c1);
    f(p.seq.v2);
    f(p.seq.c2);
    f(p.default_state);
}

template <typename F>
void for_each_block_pair(ModelParameters& a, const ModelParameters& b, F&& f) {
    f(a.embeddings, b.embeddings);
    f(a.slot_bonus, b.slot_bonus);
    f(a.seq.pos_embed, b.seq.pos_embed);
    f(a.seq.w1, b.seq.w1);
    f(a.seq.b1, b.seq.b1);
    f(a.seq.w2, b.seq.w2);
    f(a.seq.b2, b.seq.b2);
    f(a.seq.v1, b.seq.v1);
    f(a.seq.c1, b.seq.c1);
    f(a.seq.v2, b.seq.v2);
    f(a.seq.c2, b.seq.c2);
    f(a.default_state, b.default_state);
}

}  // namespace

void ModelParameters::set_zero() {
    for_each_block(*this, [](auto& m) { m.setZero(); });
}

void ModelParameters::add_scaled(const ModelParameters& other, double scale) {
    for_each_block_pair(*this, other, [scale](auto& a, const auto& b) { a += scale * b; });
}

double ModelParameters::squared_norm() const {
    double s = 0.0;
    for_each_block(*this, [&s](const auto& m) { s += m.squaredNorm(); });
    return s;
}

long long ModelParameters::parameter_count() const {
    long long n = 0;
    for_each_block(*this, [&n](const auto& m) { n += static_cast<long long>(m.size()); });
    return n;
}

Vec ModelParameters::to_vector() const {
    Vec flat(parameter_count());
    Eigen::Index at = 0;
    for_each_block(*this, [&](const auto& m) {
        flat.segment(at, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
        at += m.size();
    });
    return flat;
}

void ModelParameters::from_vector(const Vec& flat) {
    if (flat.size() != parameter_count())
        throw ValidationError("flattened parameter size mismatch");
    Eigen::Index at = 0;
    for_each_block(*this, [&](auto& m) {
        Eigen::Map<Vec>(m.data(), m.size()) = flat.segment(at, m.size());
        at += m.size();
    });
}

bool ModelParameters::all_finite() const {
    bool ok = true;
    for_each_block(*this, [&ok](const auto& m) { ok = ok && m.allFinite(); });
    return ok;
}

void ModelParameters::validate(const Catalog& catalog) const {
    int d = dim();
    if (n_goods() != catalog.size())
        throw ValidationError("embedding rows do not match catalog size");
    if (d != catalog.embedding_dim())
        throw ValidationError("embedding dim does not match catalog");
    if (slot_bonus.rows() != n_goods()) throw ValidationError("slot bonus rows mismatch");
    if (seq.pos_embed.cols() != d || seq.w1.cols() != d ||
        seq.w2.rows() != 1 + d || seq.v1.cols() != d || seq.v2.rows() != d ||
        seq.b1.size() != seq.w1.rows() || seq.b2.size() != seq.w2.rows() ||
        seq.c1.size() != seq.v1.rows() || seq.c2.size() != d ||
        seq.w2.cols() != seq.w1.rows() || seq.v2.cols() != seq.v1.rows() ||
        default_state.size() != d)
        throw ValidationError("sequence weight shapes are inconsistent");
    if (!all_finite()) throw ValidationError("parameters contain non-finite entries");
}

}  // namespace recdemand
