#include <doctest.h>

#include "intent/ann.hpp"
#include "intent/attention.hpp"
#include "intent/metrics.hpp"
#include "support.hpp"

using namespace intent;

using fixture::Ld;

TEST_CASE("zero W1 gives uniform attention and the identity") {
    const Matrix E = fixture::gaussian(5, 4, 1);
    auto p = AttentionParams<double>::init(4, 3, AttentionMode::per_dim, 0);
    p.w1.setZero();
    const auto out = attention_forward(E, p);
    CHECK((out.weights.array() - 0.25).abs().maxCoeff() < 1e-15);
    CHECK((out.values - E).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mode off is exactly the identity") {
    const Matrix E = fixture::gaussian(6, 5, 2);
    const auto p = AttentionParams<double>::init(5, 3, AttentionMode::off, 0);
    CHECK(attention_forward(E, p).values == E);
    CHECK(attention_forward(Matrix(3.0 * E), p).values == 3.0 * E);
}

TEST_CASE("per-dim forward matches a scalar evaluation") {
    const Index d = 4, h = 2;
    const auto p = fixture::random_params(d, h, AttentionMode::per_dim, 7);
    const Matrix E = fixture::gaussian(1, d, 8);
    std::vector<double> hidden(h), score(d), a(d);
    for (Index k = 0; k < h; ++k) {
        double s = 0;
        for (Index j = 0; j < d; ++j) s += p.w1(k, j) * E(0, j);
        hidden[static_cast<std::size_t>(k)] = std::tanh(s);
    }
    double z = 0;
    for (Index j = 0; j < d; ++j) {
        double s = 0;
        for (Index k = 0; k < h; ++k) s += p.w2(j, k) * hidden[static_cast<std::size_t>(k)];
        score[static_cast<std::size_t>(j)] = std::exp(s);
        z += score[static_cast<std::size_t>(j)];
    }
    const auto out = attention_forward(E, p);
    double total = 0;
    for (Index j = 0; j < d; ++j) {
        a[static_cast<std::size_t>(j)] = score[static_cast<std::size_t>(j)] / z;
        CHECK(out.weights(0, j) == doctest::Approx(a[static_cast<std::size_t>(j)]).epsilon(1e-14));
        CHECK(out.values(0, j) == doctest::Approx(d * a[static_cast<std::size_t>(j)] * E(0, j)).epsilon(1e-14));
        total += out.weights(0, j);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("attention weights are probability vectors") {
    for (auto mode : {AttentionMode::per_dim, AttentionMode::per_utterance}) {
        const auto p = fixture::random_params(6, 4, mode, 3, 2.0);
        const auto out = attention_forward(fixture::gaussian(20, 6, 4, 3.0), p);
        CHECK(out.weights.minCoeff() >= 0.0);
        if (mode == AttentionMode::per_dim) {
            CHECK((out.weights.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
        } else {
            CHECK(out.weights.cols() == 1);
            CHECK(std::abs(out.weights.sum() - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("overflow is reported") {
    auto p = AttentionParams<double>::init(2, 1, AttentionMode::per_dim, 0);
    p.w1 << 1.0, 1.0;
    p.w2 << 50.0, -50.0;  // nearly all weight on the first dim, rescaled by d = 2
    Matrix E(1, 2);
    E << 1.5e308, 1.0;
    CHECK_THROWS_AS(attention_forward(E, p), NumericError);
}

TEST_CASE("mode off with identity decoder has zero reconstruction loss") {
    const auto p = AttentionParams<double>::init(5, 3, AttentionMode::off, 0);
    CHECK(reconstruction_loss(fixture::gaussian(10, 5, 1), p) == 0.0);
}

TEST_CASE("reconstruction gradient matches central differences") {
    for (auto mode : {AttentionMode::per_dim, AttentionMode::per_utterance}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const Matrix E = fixture::gaussian(12, 5, seed + 10);
            const auto p = fixture::random_params(5, 3, mode, seed);
            const auto grad = reconstruction_gradient(E, p);
            CHECK(grad.loss == doctest::Approx(reconstruction_loss(E, p)));
            const auto El = E.cast<Ld>();
            const double err = fixture::fd_check(p, grad, [&](const AttentionParams<Ld>& q) { return reconstruction_loss(El, q); },
                                        20, seed, true);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("pretraining reduces the loss monotonically") {
    const auto synth = generate_synthetic({.levels = 2, .branching = {3}, .d = 8, .points_per_leaf = 20, .separation = 6, .seed = 3});
    const Matrix& E = synth.corpus.embeddings();
    const auto init = AttentionParams<double>::init(8, 16, AttentionMode::per_dim, 3);
    const auto res = pretrain_reconstruction(E, init, 50, 1e-2);
    CHECK(res.report.final_loss < res.report.initial_loss);
    double last = res.report.initial_loss;
    for (double l : res.report.accepted_losses) {
        CHECK(l <= last);
        last = l;
    }
    CHECK(res.report.final_loss == doctest::Approx(reconstruction_loss(E, res.params)));
}

TEST_CASE("divergence aborts with the last good parameters") {
    const Matrix E = fixture::gaussian(30, 4, 1, 5.0);
    const auto init = fixture::random_params(4, 3, AttentionMode::per_dim, 1);
    const auto res = pretrain_reconstruction(E, init, 50, 1e6);
    CHECK(res.report.aborted);
    CHECK_FALSE(res.report.warnings.empty());
    CHECK(res.report.final_loss <= res.report.initial_loss);
    CHECK(res.report.final_loss == doctest::Approx(reconstruction_loss(E, res.params)));
}

TEST_CASE("training rejects invalid schedules") {
    const Matrix E = fixture::gaussian(4, 3, 1);
    const auto p = AttentionParams<double>::init(3, 2, AttentionMode::per_dim, 0);
    CHECK_THROWS_AS(pretrain_reconstruction(E, p, 0, 0.1), ConfigError);
    CHECK_THROWS_AS(pretrain_reconstruction(E, p, 5, 0.0), ConfigError);
    CHECK_THROWS_AS(finetune_dec(E, p, 1, 5, 0.1, 0), ConfigError);
}

TEST_CASE("DEC soft assignment") {
    SUBCASE("equidistant point") {
        Matrix x(1, 2), c(2, 2);
        x << 0, 0;
        c << 1, 0, -1, 0;
        const Matrix q = dec_soft_assign(x, c);
        CHECK(q(0, 0) == doctest::Approx(0.5));
        CHECK(q(0, 1) == doctest::Approx(0.5));
    }
    SUBCASE("point at a centroid") {
        Matrix x(1, 2), c(2, 2);
        x << 0, 0;
        c << 0, 0, 1, 0;
        const Matrix q = dec_soft_assign(x, c);
        CHECK(q(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(q(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("direct formula") {
        const Matrix x = fixture::gaussian(10, 3, 1);
        const Matrix c = fixture::gaussian(3, 3, 2);
        const Matrix q = dec_soft_assign(x, c);
        for (Index i = 0; i < 10; ++i) {
            double z = 0;
            for (Index j = 0; j < 3; ++j) z += 1.0 / (1.0 + (x.row(i) - c.row(j)).squaredNorm());
            for (Index j = 0; j < 3; ++j) {
                CHECK(q(i, j) == doctest::Approx(1.0 / (1.0 + (x.row(i) - c.row(j)).squaredNorm()) / z).epsilon(1e-12));
                CHECK(q(i, j) > 0.0);
                CHECK(q(i, j) < 1.0);
            }
            CHECK(std::abs(q.row(i).sum() - 1.0) < 1e-12);
        }
    }
    CHECK_THROWS_AS(dec_soft_assign(Matrix(Matrix::Zero(2, 2)), Matrix(Matrix::Zero(1, 2))), ConfigError);
}

TEST_CASE("DEC target distribution") {
    SUBCASE("single sample") {
        Matrix q(1, 3);
        q << 0.2, 0.3, 0.5;
        CHECK((dec_target(q) - q).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("symmetric rows") {
        const Matrix q = Matrix::Constant(4, 2, 0.5);
        CHECK((dec_target(q).array() - 0.5).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("direct formula") {
        Rng rng(5);
        Matrix q(5, 3);
        for (Index i = 0; i < q.size(); ++i) q.data()[i] = 0.1 + uniform01(rng);
        q.array().colwise() /= q.rowwise().sum().array();
        const Matrix p = dec_target(q);
        for (Index i = 0; i < 5; ++i) {
            double z = 0;
            std::vector<double> num(3);
            for (Index j = 0; j < 3; ++j) {
                double f = 0;
                for (Index r = 0; r < 5; ++r) f += q(r, j);
                num[static_cast<std::size_t>(j)] = q(i, j) * q(i, j) / f;
                z += num[static_cast<std::size_t>(j)];
            }
            for (Index j = 0; j < 3; ++j) CHECK(p(i, j) == doctest::Approx(num[static_cast<std::size_t>(j)] / z).epsilon(1e-14));
            CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("KL of a distribution with itself is zero") {
    Matrix q(2, 2);
    q << 0.3, 0.7, 0.6, 0.4;
    CHECK(kl_divergence(q, q) == 0.0);
}

TEST_CASE("DEC gradient matches central differences") {
    for (auto mode : {AttentionMode::per_dim, AttentionMode::per_utterance}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const Matrix E = fixture::gaussian(15, 4, seed + 30);
            const auto p = fixture::random_params(4, 3, mode, seed);
            const Matrix C = fixture::gaussian(3, 4, seed + 40);
            const Matrix target = dec_target(dec_soft_assign(attention_forward(E, p).values, C));
            const auto grad = dec_gradient(E, p, C, target);
            CHECK(grad.loss == doctest::Approx(dec_loss(E, p, C, target)));
            const auto El = E.cast<Ld>();
            const RowMatrix<Ld> Cl = C.cast<Ld>();
            const RowMatrix<Ld> Pl = target.cast<Ld>();
            CHECK(fixture::fd_check(p, grad.attention, [&](const AttentionParams<Ld>& q) { return dec_loss(El, q, Cl, Pl); }, 20,
                           seed, false) < 1e-4);
            CHECK(fixture::fd_check_centroids(E, p, C, target, grad.centroids, 20, seed + 7) < 1e-4);
        }
    }
}

TEST_CASE("DEC fine-tuning does not lose ground-truth agreement") {
    const auto synth = generate_synthetic({.levels = 1, .branching = {4}, .d = 8, .points_per_leaf = 40, .separation = 6, .seed = 12});
    const Matrix& E = synth.corpus.embeddings();
    auto params = pretrain_reconstruction(E, AttentionParams<double>::init(8, 16, AttentionMode::per_dim, 1), 30, 1e-2).params;
    const Matrix before_values = attention_forward(E, params).values;
    const auto before = ann_kmeans(before_values, 4, seed_offset::dec);
    const auto res = finetune_dec(E, params, 4, 30, 1e-3, 0);
    CHECK(res.report.final_loss <= res.report.initial_loss);
    CHECK(res.state.kl_loss >= 0.0);
    CHECK((res.state.q.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((res.state.p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    double last = res.report.initial_loss;
    for (double l : res.report.accepted_losses) {
        CHECK(l <= last + 1e-15);
        last = l;
    }
    // Hard assignments before fine-tuning come from the initial soft assignment.
    const Matrix q0 = dec_soft_assign(before_values, before.centroids);
    std::vector<Index> pre, post;
    for (Index i = 0; i < E.rows(); ++i) {
        Index a = 0, b = 0;
        q0.row(i).maxCoeff(&a);
        res.state.q.row(i).maxCoeff(&b);
        pre.push_back(a);
        post.push_back(b);
    }
    const Partition truth(synth.truth.leaf_of);
    CHECK(nmi(Partition(post), truth) >= nmi(Partition(pre), truth));
}

TEST_CASE("parameters round to float exactly") {
    auto p = fixture::random_params(4, 3, AttentionMode::per_dim, 2);
    p.round_to_float();
    const auto again = p;
    p.round_to_float();
    CHECK(p == again);
    CHECK(p.cast<float>().cast<double>() == p);
}
