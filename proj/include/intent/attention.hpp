#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "intent/random.hpp"
#include "intent/types.hpp"

namespace intent {

enum class AttentionMode {
    per_dim,        ///< softmax over the d embedding dimensions of each utterance
    per_utterance,  ///< one scalar per utterance, softmax over the n utterances
    off,            ///< identity
};

std::string to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(const std::string& name);

/// Learnable attention weights plus the linear reconstruction head.
///
/// Shapes: w1 is h x d; w2 is d x h (per_dim) or 1 x h (per_utterance);
/// decoder is d x d. In `off` mode w1/w2 are kept but unused.
template <typename Scalar>
struct AttentionParams {
    RowMatrix<Scalar> w1;
    RowMatrix<Scalar> w2;
    RowMatrix<Scalar> decoder;
    AttentionMode mode = AttentionMode::per_dim;
    /// Multiply by the softmax length (d or n) after weighting.
    bool rescale = true;

    Index hidden() const { return w1.rows(); }
    Index dim() const { return decoder.rows(); }

    /// W1 ~ N(0, 1/d), W2 ~ N(0, 0.01/h) so the initial attention is close to
    /// uniform; decoder = I.
    static AttentionParams init(Index d, Index h, AttentionMode mode, std::uint64_t seed) {
        if (d < 1 || h < 1) throw ConfigError("attention dimensions must be >= 1");
        AttentionParams p;
        p.mode = mode;
        Rng rng = make_rng(seed, seed_offset::attention);
        const Index w2_rows = mode == AttentionMode::per_utterance ? 1 : d;
        p.w1.resize(h, d);
        p.w2.resize(w2_rows, h);
        const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
        const double s2 = 0.1 / std::sqrt(static_cast<double>(h));
        for (Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = static_cast<Scalar>(s1 * standard_normal(rng));
        for (Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = static_cast<Scalar>(s2 * standard_normal(rng));
        p.decoder = RowMatrix<Scalar>::Identity(d, d);
        return p;
    }

    void validate() const {
        if (hidden() < 1) throw ConfigError("attention dim h must be >= 1");
        if (w1.cols() != dim() || decoder.cols() != dim()) throw ConfigError("attention parameter shapes disagree");
        const Index expected = mode == AttentionMode::per_utterance ? 1 : dim();
        if (mode != AttentionMode::off && (w2.rows() != expected || w2.cols() != hidden())) {
            throw ConfigError("W2 shape does not match attention mode");
        }
        if (!w1.allFinite() || !w2.allFinite() || !decoder.allFinite()) {
            throw NumericError("attention parameters contain non-finite values");
        }
    }

    template <typename To>
    AttentionParams<To> cast() const {
        return {w1.template cast<To>(), w2.template cast<To>(), decoder.template cast<To>(), mode, rescale};
    }

    /// Rounds every parameter to the nearest float32.
    void round_to_float() {
        for (auto* m : {&w1, &w2, &decoder}) {
            *m = m->template cast<float>().template cast<Scalar>();
        }
    }

    friend bool operator==(const AttentionParams& a, const AttentionParams& b) {
        return a.mode == b.mode && a.rescale == b.rescale && a.w1 == b.w1 && a.w2 == b.w2 &&
               a.decoder == b.decoder;
    }
};

template <typename Scalar>
struct EnhancedEmbeddings {
    RowMatrix<Scalar> values;   ///< E', n x d
    RowMatrix<Scalar> weights;  ///< A, n x d (per_dim/off) or n x 1 (per_utterance)
    RowMatrix<Scalar> hidden;   ///< tanh(E W1^T), kept for backpropagation
};

namespace detail {

template <typename Scalar>
void softmax_rows(RowMatrix<Scalar>& s) {
    for (Index i = 0; i < s.rows(); ++i) {
        auto row = s.row(i);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
}

template <typename Scalar>
void check_finite(const RowMatrix<Scalar>& m, const char* what) {
    if (!m.allFinite()) {
        throw NumericError(std::string("non-finite values in ") + what +
                           "; reduce the attention dim or normalize the embeddings");
    }
}

}  // namespace detail

/// A = softmax(W2 tanh(W1 e)) and E' = c * (A .* E), c the softmax length when
/// rescaling is on.
template <typename Derived, typename Scalar>
EnhancedEmbeddings<Scalar> attention_forward(const Eigen::MatrixBase<Derived>& E,
                                             const AttentionParams<Scalar>& params) {
    const Index n = E.rows();
    const Index d = E.cols();
    if (d != params.dim()) throw ConfigError("embedding dimension does not match attention parameters");
    EnhancedEmbeddings<Scalar> out;
    if (params.mode == AttentionMode::off) {
        out.values = E.template cast<Scalar>();
        out.weights = RowMatrix<Scalar>::Constant(n, d, Scalar(1) / static_cast<Scalar>(d));
        return out;
    }
    const RowMatrix<Scalar> e = E.template cast<Scalar>();
    out.hidden = (e * params.w1.transpose()).array().tanh().matrix();
    RowMatrix<Scalar> scores = out.hidden * params.w2.transpose();
    if (params.mode == AttentionMode::per_dim) {
        detail::softmax_rows(scores);
        out.weights = std::move(scores);
        const Scalar c = params.rescale ? static_cast<Scalar>(d) : Scalar(1);
        out.values = c * out.weights.cwiseProduct(e);
    } else {
        RowMatrix<Scalar> t = scores.transpose();  // 1 x n: softmax over utterances
        detail::softmax_rows(t);
        out.weights = t.transpose();
        const Scalar c = params.rescale ? static_cast<Scalar>(n) : Scalar(1);
        out.values = c * (e.array().colwise() * out.weights.col(0).array()).matrix();
    }
    detail::check_finite(out.values, "attention output");
    return out;
}

template <typename Scalar>
struct AttentionGradient {
    RowMatrix<Scalar> w1;
    RowMatrix<Scalar> w2;
    RowMatrix<Scalar> decoder;
    Scalar loss = 0;
};

/// Backpropagates dL/dE' through the attention weights into dL/dW1, dL/dW2.
template <typename Derived, typename Scalar>
void attention_backward(const Eigen::MatrixBase<Derived>& E, const AttentionParams<Scalar>& params,
                        const EnhancedEmbeddings<Scalar>& fwd, const RowMatrix<Scalar>& grad_values,
                        AttentionGradient<Scalar>& grad) {
    grad.w1 = RowMatrix<Scalar>::Zero(params.w1.rows(), params.w1.cols());
    grad.w2 = RowMatrix<Scalar>::Zero(params.w2.rows(), params.w2.cols());
    if (params.mode == AttentionMode::off) return;
    const RowMatrix<Scalar> e = E.template cast<Scalar>();
    const Index n = e.rows();
    const Index d = e.cols();

    RowMatrix<Scalar> grad_scores;
    if (params.mode == AttentionMode::per_dim) {
        const Scalar c = params.rescale ? static_cast<Scalar>(d) : Scalar(1);
        const RowMatrix<Scalar> ga = c * grad_values.cwiseProduct(e);
        const ColVector<Scalar> dot = fwd.weights.cwiseProduct(ga).rowwise().sum();
        grad_scores = fwd.weights.cwiseProduct((ga.colwise() - dot));
    } else {
        const Scalar c = params.rescale ? static_cast<Scalar>(n) : Scalar(1);
        const ColVector<Scalar> ga = c * grad_values.cwiseProduct(e).rowwise().sum();
        const Scalar dot = fwd.weights.col(0).dot(ga);
        grad_scores = fwd.weights.col(0).cwiseProduct((ga.array() - dot).matrix());
    }
    grad.w2 = grad_scores.transpose() * fwd.hidden;
    const RowMatrix<Scalar> grad_hidden =
        (grad_scores * params.w2).cwiseProduct((Scalar(1) - fwd.hidden.array().square()).matrix());
    grad.w1 = grad_hidden.transpose() * e;
}

/// L = (1/n) sum_i |decoder e'_i - e_i|^2.
template <typename Derived, typename Scalar>
Scalar reconstruction_loss(const Eigen::MatrixBase<Derived>& E, const AttentionParams<Scalar>& params) {
    const auto fwd = attention_forward(E, params);
    const RowMatrix<Scalar> residual = fwd.values * params.decoder.transpose() - E.template cast<Scalar>();
    return residual.squaredNorm() / static_cast<Scalar>(E.rows());
}

template <typename Derived, typename Scalar>
AttentionGradient<Scalar> reconstruction_gradient(const Eigen::MatrixBase<Derived>& E,
                                                  const AttentionParams<Scalar>& params) {
    const auto fwd = attention_forward(E, params);
    const Scalar n = static_cast<Scalar>(E.rows());
    const RowMatrix<Scalar> residual = fwd.values * params.decoder.transpose() - E.template cast<Scalar>();
    AttentionGradient<Scalar> grad;
    grad.loss = residual.squaredNorm() / n;
    grad.decoder = (Scalar(2) / n) * residual.transpose() * fwd.values;
    const RowMatrix<Scalar> grad_values = (Scalar(2) / n) * residual * params.decoder;
    attention_backward(E, params, fwd, grad_values, grad);
    return grad;
}

// ---------------------------------------------------------------------------
// Deep-embedded-clustering objective

/// Squared Euclidean distances between rows of X (n x d) and C (k x d).
template <typename DX, typename DC>
auto pairwise_sq_dist(const Eigen::MatrixBase<DX>& X, const Eigen::MatrixBase<DC>& C) {
    using Scalar = typename DX::Scalar;
    RowMatrix<Scalar> out = (-Scalar(2) * X * C.transpose()).eval();
    out.colwise() += X.rowwise().squaredNorm();
    out.rowwise() += C.rowwise().squaredNorm().transpose();
    return out.cwiseMax(Scalar(0)).eval();
}

/// Student-t (one degree of freedom) soft assignment, rows sum to 1.
template <typename DX, typename DC>
auto dec_soft_assign(const Eigen::MatrixBase<DX>& E_prime, const Eigen::MatrixBase<DC>& centroids) {
    using Scalar = typename DX::Scalar;
    if (centroids.rows() < 2) throw ConfigError("soft assignment needs k >= 2");
    RowMatrix<Scalar> q = (Scalar(1) + pairwise_sq_dist(E_prime, centroids).array()).inverse().matrix();
    q.array().colwise() /= q.rowwise().sum().array();
    return q;
}

/// Sharpened target p_ij proportional to q_ij^2 / f_j with f_j = sum_i q_ij.
template <typename Derived>
auto dec_target(const Eigen::MatrixBase<Derived>& q) {
    using Scalar = typename Derived::Scalar;
    const ColVector<Scalar> f = q.colwise().sum().transpose();
    RowMatrix<Scalar> p = q.array().square().matrix();
    p.array().rowwise() /= f.transpose().array();
    p.array().colwise() /= p.rowwise().sum().array();
    return p;
}

/// sum_ij p_ij log(p_ij / q_ij), zero-probability targets contribute nothing.
template <typename DP, typename DQ>
typename DP::Scalar kl_divergence(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DQ>& q) {
    using Scalar = typename DP::Scalar;
    Scalar total = 0;
    for (Index i = 0; i < p.rows(); ++i) {
        for (Index j = 0; j < p.cols(); ++j) {
            if (p(i, j) > Scalar(0)) total += p(i, j) * std::log(p(i, j) / q(i, j));
        }
    }
    return total;
}

template <typename Scalar>
struct DecGradient {
    AttentionGradient<Scalar> attention;  ///< decoder gradient unused (zero)
    RowMatrix<Scalar> centroids;
    Scalar loss = 0;
};

/// Mean per-utterance KL(p || q) as a function of the attention weights and
/// the centroids, with the target p held fixed.
template <typename Derived, typename Scalar>
Scalar dec_loss(const Eigen::MatrixBase<Derived>& E, const AttentionParams<Scalar>& params,
                const RowMatrix<Scalar>& centroids, const RowMatrix<Scalar>& p) {
    const auto fwd = attention_forward(E, params);
    const RowMatrix<Scalar> q = dec_soft_assign(fwd.values, centroids);
    return kl_divergence(p, q) / static_cast<Scalar>(E.rows());
}

template <typename Derived, typename Scalar>
DecGradient<Scalar> dec_gradient(const Eigen::MatrixBase<Derived>& E, const AttentionParams<Scalar>& params,
                                 const RowMatrix<Scalar>& centroids, const RowMatrix<Scalar>& p) {
    const auto fwd = attention_forward(E, params);
    const Scalar n = static_cast<Scalar>(E.rows());
    const RowMatrix<Scalar> kernel = (Scalar(1) + pairwise_sq_dist(fwd.values, centroids).array()).inverse().matrix();
    RowMatrix<Scalar> q = kernel;
    q.array().colwise() /= q.rowwise().sum().array();

    DecGradient<Scalar> grad;
    grad.loss = kl_divergence(p, q) / n;
    // coeff_ij = (2/n) w_ij (p_ij - q_ij); dL/dz_i = sum_j coeff_ij (z_i - mu_j).
    const RowMatrix<Scalar> coeff = (Scalar(2) / n) * kernel.cwiseProduct(p - q);
    const ColVector<Scalar> row_sum = coeff.rowwise().sum();
    const ColVector<Scalar> col_sum = coeff.colwise().sum().transpose();
    const RowMatrix<Scalar> grad_values =
        (fwd.values.array().colwise() * row_sum.array()).matrix() - coeff * centroids;
    grad.centroids = coeff.transpose() * fwd.values;
    grad.centroids = (centroids.array().colwise() * col_sum.array()).matrix() - grad.centroids;
    attention_backward(E, params, fwd, grad_values, grad.attention);
    grad.attention.decoder = RowMatrix<Scalar>::Zero(params.decoder.rows(), params.decoder.cols());
    grad.attention.loss = grad.loss;
    return grad;
}

// ---------------------------------------------------------------------------
// Training (double precision, full batch)

struct TrainReport {
    double initial_loss = 0;
    double final_loss = 0;
    std::vector<double> accepted_losses;  ///< loss after every accepted step
    int accepted_epochs = 0;
    int rejected_steps = 0;
    int refreshes = 0;  ///< DEC target refreshes applied
    bool aborted = false;
    std::vector<std::string> warnings;
};

struct PretrainResult {
    AttentionParams<double> params;
    TrainReport report;
};

/// Full-batch gradient descent on the reconstruction loss. A step that raises
/// the loss is rejected and the rate halved; five consecutive rejections abort
/// with the last accepted parameters.
PretrainResult pretrain_reconstruction(const Matrix& E, AttentionParams<double> params, int epochs, double lr);

struct DecState {
    Matrix centroids;  ///< k x d in enhanced space
    Matrix q;
    Matrix p;
    double kl_loss = 0;  ///< mean per-utterance KL(p || q)
};

struct FinetuneResult {
    AttentionParams<double> params;
    DecState state;
    TrainReport report;
};

/// DEC fine-tuning: centroids from k-means on the current E', target refreshed
/// every `refresh_period` epochs, gradient descent on KL(p || q) over W1, W2 and
/// the centroids. Same rejection rule as pretraining; a refresh that would raise
/// the loss is skipped, so accepted losses never increase.
FinetuneResult finetune_dec(const Matrix& E, AttentionParams<double> params, Index k, int epochs, double lr,
                            std::uint64_t seed, int refresh_period = 5);

}  // namespace intent
