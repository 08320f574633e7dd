#pragma once

#include <Eigen/Dense>

#include "recdemand/types.hpp"

namespace recdemand {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// Row-major storage for per-good matrices: rows are touched one good at a time.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Weights of the user-state network. Per history item the input is
// embedding + recency encoding; mlp1 maps it to an attention logit and a
// transformed vector, mlp2 maps the attention-weighted sum to the state.
struct SequenceWeights {
    RowMat pos_embed;  // max_len x d, row r encodes "r items back"
    Mat w1;            // h1 x d
    Vec b1;            // h1
    Mat w2;            // (1+d) x h1, row 0 is the attention logit
    Vec b2;            // 1+d
    Mat v1;            // h2 x d
    Vec c1;            // h2
    Mat v2;            // d x h2
    Vec c2;            // d

    int dim() const { return static_cast<int>(pos_embed.cols()); }
    int max_len() const { return static_cast<int>(pos_embed.rows()); }
    int hidden1() const { return static_cast<int>(w1.rows()); }
    int hidden2() const { return static_cast<int>(v1.rows()); }
};

// All learnable quantities of the demand model. Also reused as the gradient
// container, which is shaped identically.
struct ModelParameters {
    RowMat embeddings;  // J x d
    RowMat slot_bonus;  // J x S, slot bonuses by location
    SequenceWeights seq;
    Vec default_state;  // state of a user with no history

    int n_goods() const { return static_cast<int>(embeddings.rows()); }
    int dim() const { return static_cast<int>(embeddings.cols()); }
    int slot_count() const { return static_cast<int>(slot_bonus.cols()); }
    int max_len() const { return seq.max_len(); }

    // Allocates a zero-initialized parameter set with the given shapes.
    static ModelParameters shaped(int n_goods, int dim, int slot_count, int max_len,
                                  int hidden1, int hidden2);
    static ModelParameters zeros_like(const ModelParameters& other);

    void set_zero();
    void add_scaled(const ModelParameters& other, double scale);  // *this += scale * other
    double squared_norm() const;
    long long parameter_count() const;

    // Flattened views, used by the optimizer and finite-difference checks.
    Vec to_vector() const;
    void from_vector(const Vec& flat);

    bool all_finite() const;
    // Shape consistency with a catalog; throws ValidationError.
    void validate(const Catalog& catalog) const;
};

using Gradient = ModelParameters;

}  // namespace recdemand
