#include "recdemand/demand.hpp"

#include <cmath>

namespace recdemand {

void StateForward::resize(int dim, int max_len, int hidden1, int hidden2) {
    if (x.rows() != dim || x.cols() != max_len) x.resize(dim, max_len);
    if (h.rows() != hidden1 || h.cols() != max_len) h.resize(hidden1, max_len);
    if (logits.size() != max_len) logits.resize(max_len);
    if (v.rows() != dim || v.cols() != max_len) v.resize(dim, max_len);
    if (weights.size() != max_len) weights.resize(max_len);
    if (pooled.size() != dim) pooled.resize(dim);
    if (q.size() != hidden2) q.resize(hidden2);
    if (state.size() != dim) state.resize(dim);
}

void seq_forward(std::span<const int> history_rows, const RowMat& embeddings,
                 const SequenceWeights& seq, const Vec& default_state, StateForward& fwd) {
    const int d = seq.dim();
    const int max_len = seq.max_len();
    const int len = static_cast<int>(history_rows.size());
    if (len > max_len) throw ValidationError("history window exceeds max_len");
    fwd.resize(d, max_len, seq.hidden1(), seq.hidden2());
    fwd.len = len;
    if (len == 0) {
        fwd.state = default_state;
        return;
    }
    for (int k = 0; k < len; ++k) {
        int recency = len - 1 - k;  // 0 = most recent item
        fwd.x.col(k) = embeddings.row(history_rows[k]).transpose() +
                       seq.pos_embed.row(recency).transpose();
        fwd.h.col(k) = ((seq.w1 * fwd.x.col(k)) + seq.b1).array().tanh();
        Vec out = seq.w2 * fwd.h.col(k) + seq.b2;
        fwd.logits(k) = out(0);
        fwd.v.col(k) = out.tail(d);
    }
    double max_logit = fwd.logits.head(len).maxCoeff();
    fwd.weights.head(len) = (fwd.logits.head(len).array() - max_logit).exp();
    fwd.weights.head(len) /= fwd.weights.head(len).sum();
    fwd.pooled.noalias() = fwd.v.leftCols(len) * fwd.weights.head(len);
    fwd.q = ((seq.v1 * fwd.pooled) + seq.c1).array().tanh();
    fwd.state.noalias() = seq.v2 * fwd.q;
    fwd.state += seq.c2;
}

void seq_forward(std::span<const int> history_rows, const ModelParameters& params,
                 StateForward& fwd) {
    seq_forward(history_rows, params.embeddings, params.seq, params.default_state, fwd);
}

void seq_backward(std::span<const int> history_rows, const SequenceWeights& seq,
                  const StateForward& fwd, const Vec& dstate, RowMat& grad_embeddings,
                  SequenceWeights& grad_seq, Vec& grad_default_state) {
    const int d = seq.dim();
    const int len = fwd.len;
    if (len == 0) {
        grad_default_state += dstate;
        return;
    }
    // mlp2
    grad_seq.v2.noalias() += dstate * fwd.q.transpose();
    grad_seq.c2 += dstate;
    Vec dq = seq.v2.transpose() * dstate;
    Vec dz2 = dq.array() * (1.0 - fwd.q.array().square());
    grad_seq.v1.noalias() += dz2 * fwd.pooled.transpose();
    grad_seq.c1 += dz2;
    Vec dpooled = seq.v1.transpose() * dz2;

    // attention pooling
    Vec dweights = fwd.v.leftCols(len).transpose() * dpooled;
    double wdot = fwd.weights.head(len).dot(dweights);
    Vec dlogits = fwd.weights.head(len).array() * (dweights.array() - wdot);

    // mlp1 per item
    Vec dout(1 + d), dh(seq.hidden1()), dz1(seq.hidden1()), dx(d);
    for (int k = 0; k < len; ++k) {
        dout(0) = dlogits(k);
        dout.tail(d) = fwd.weights(k) * dpooled;
        grad_seq.w2.noalias() += dout * fwd.h.col(k).transpose();
        grad_seq.b2 += dout;
        dh.noalias() = seq.w2.transpose() * dout;
        dz1 = dh.array() * (1.0 - fwd.h.col(k).array().square());
        grad_seq.w1.noalias() += dz1 * fwd.x.col(k).transpose();
        grad_seq.b1 += dz1;
        dx.noalias() = seq.w1.transpose() * dz1;
        grad_embeddings.row(history_rows[k]) += dx.transpose();
        grad_seq.pos_embed.row(len - 1 - k) += dx.transpose();
    }
}

void seq_backward(std::span<const int> history_rows, const ModelParameters& params,
                  const StateForward& fwd, const Vec& dstate, Gradient& grad) {
    seq_backward(history_rows, params.seq, fwd, dstate, grad.embeddings, grad.seq,
                 grad.default_state);
}

Vec compute_user_state(const UserHistory& history, const ModelParameters& params,
                       const Catalog& catalog) {
    const int max_len = params.max_len();
    int len = history.size();
    int take = len < max_len ? len : max_len;
    std::vector<int> rows(take);
    for (int k = 0; k < take; ++k)
        rows[k] = catalog.index_of(history.entries[len - take + k].good);
    StateForward fwd;
    seq_forward(rows, params, fwd);
    return fwd.state;
}

namespace {

double bonus_on_page(int row, const RecommendationPage& page, const ModelParameters& params,
                     const Catalog& catalog) {
    double b = 0.0;
    GoodId id = catalog.id_at(row);
    for (int r = 0; r < page.slot_count(); ++r) {
        if (r >= params.slot_count()) break;
        for (GoodId g : page.slots[r])
            if (g == id) b += params.slot_bonus(row, r);
    }
    return b;
}

}  // namespace

double deterministic_utility(const Vec& state, GoodId good, const RecommendationPage& page,
                             const ModelParameters& params, const Catalog& catalog) {
    int row = catalog.index_of(good);
    return state.dot(params.embeddings.row(row)) + bonus_on_page(row, page, params, catalog);
}

Vec deterministic_utilities(const Vec& state, const Catalog& catalog,
                            const RecommendationPage& page, const ModelParameters& params) {
    Vec u = params.embeddings * state;
    for (int r = 0; r < page.slot_count() && r < params.slot_count(); ++r)
        for (GoodId g : page.slots[r]) {
            int row = catalog.index_of(g);
            u(row) += params.slot_bonus(row, r);
        }
    return u;
}

Vec choice_probabilities_from_utilities(const Vec& utilities, double outside_utility) {
    const Eigen::Index j = utilities.size();
    if (!utilities.allFinite() || !std::isfinite(outside_utility))
        throw NumericalError("non-finite utility in choice probabilities");
    double m = outside_utility;
    if (j > 0) m = std::max(m, utilities.maxCoeff());
    Vec probs(j + 1);
    probs.head(j) = (utilities.array() - m).exp();
    probs(j) = std::exp(outside_utility - m);
    probs /= probs.sum();
    return probs;
}

Vec log_choice_probabilities_from_utilities(const Vec& utilities, double outside_utility) {
    const Eigen::Index j = utilities.size();
    if (!utilities.allFinite() || !std::isfinite(outside_utility))
        throw NumericalError("non-finite utility in choice probabilities");
    double m = outside_utility;
    if (j > 0) m = std::max(m, utilities.maxCoeff());
    Vec shifted(j + 1);
    shifted.head(j) = utilities.array() - m;
    shifted(j) = outside_utility - m;
    double log_z = std::log(shifted.array().exp().sum());
    return shifted.array() - log_z;
}

Vec choice_probabilities(const Vec& state, const Catalog& catalog,
                         const RecommendationPage& page, const ModelParameters& params) {
    return choice_probabilities_from_utilities(
        deterministic_utilities(state, catalog, page, params), 0.0);
}

double engagement(const Vec& probs) {
    if (probs.size() < 1) throw ValidationError("empty probability vector");
    return probs.head(probs.size() - 1).sum();
}

double log_likelihood(const PanelIndex& index, const ModelParameters& params,
                      const Catalog& catalog) {
    StateForward fwd;
    double ll = 0.0;
    const int max_len = params.max_len();
    for (const EventRef& ref : index.refs()) {
        const ChoiceEvent& ev = index.event(ref);
        seq_forward(index.history(ref, max_len), params, fwd);
        Vec u = deterministic_utilities(fwd.state, catalog, ev.page, params);
        Vec logp = log_choice_probabilities_from_utilities(u, 0.0);
        int alt = ev.chose_inside() ? catalog.index_of(ev.choice) : catalog.size();
        ll += logp(alt);
    }
    return ll;
}

double log_likelihood(const InteractionLog& log, const ModelParameters& params,
                      const Catalog& catalog) {
    return log_likelihood(PanelIndex(log, catalog), params, catalog);
}

}  // namespace recdemand
