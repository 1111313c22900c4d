#include "intent/attention.hpp"

#include "intent/ann.hpp"

namespace intent {

std::string to_string(AttentionMode mode) {
    switch (mode) {
        case AttentionMode::per_dim: return "per-dim";
        case AttentionMode::per_utterance: return "per-utterance";
        case AttentionMode::off: return "off";
    }
    return "per-dim";
}

AttentionMode attention_mode_from_string(const std::string& name) {
    if (name == "per-dim" || name == "per_dim") return AttentionMode::per_dim;
    if (name == "per-utterance" || name == "per_utterance") return AttentionMode::per_utterance;
    if (name == "off") return AttentionMode::off;
    throw ConfigError("unknown attention mode '" + name + "'");
}

namespace {

constexpr int max_consecutive_rejections = 5;

void check_schedule(int epochs, double lr) {
    if (epochs < 1) throw ConfigError("training needs epochs >= 1");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
}

void step(AttentionParams<double>& p, const AttentionGradient<double>& g, double lr, bool with_decoder) {
    p.w1 -= lr * g.w1;
    p.w2 -= lr * g.w2;
    if (with_decoder) p.decoder -= lr * g.decoder;
}

}  // namespace

PretrainResult pretrain_reconstruction(const Matrix& E, AttentionParams<double> params, int epochs, double lr) {
    check_schedule(epochs, lr);
    params.validate();
    PretrainResult out;
    auto& rep = out.report;
    double loss = reconstruction_loss(E, params);
    rep.initial_loss = loss;
    int rejections = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const auto grad = reconstruction_gradient(E, params);
        AttentionParams<double> proposal = params;
        step(proposal, grad, lr, true);
        double next = std::numeric_limits<double>::infinity();
        try {
            next = reconstruction_loss(E, proposal);
        } catch (const NumericError&) {
        }
        if (next <= loss) {
            params = std::move(proposal);
            loss = next;
            rep.accepted_losses.push_back(loss);
            ++rep.accepted_epochs;
            rejections = 0;
            continue;
        }
        ++rep.rejected_steps;
        lr *= 0.5;
        if (++rejections >= max_consecutive_rejections) {
            rep.aborted = true;
            rep.warnings.push_back("reconstruction pretraining stopped after " + std::to_string(rejections) +
                                   " consecutive loss increases at epoch " + std::to_string(epoch));
            break;
        }
    }
    rep.final_loss = loss;
    out.params = std::move(params);
    return out;
}

FinetuneResult finetune_dec(const Matrix& E, AttentionParams<double> params, Index k, int epochs, double lr,
                            std::uint64_t seed, int refresh_period) {
    check_schedule(epochs, lr);
    if (k < 2) throw ConfigError("DEC fine-tuning needs k >= 2");
    if (k > E.rows()) throw ConfigError("DEC fine-tuning: k exceeds the number of utterances");
    if (refresh_period < 1) throw ConfigError("target refresh period must be >= 1");
    params.validate();

    FinetuneResult out;
    auto& rep = out.report;
    Matrix centroids = ann_kmeans(attention_forward(E, params).values, k, seed + seed_offset::dec).centroids;
    Matrix p = dec_target(dec_soft_assign(attention_forward(E, params).values, centroids));
    double loss = dec_loss(E, params, centroids, p);
    rep.initial_loss = loss;
    int rejections = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        if (epoch > 0 && epoch % refresh_period == 0) {
            // A refreshed target is kept only if it does not raise the objective.
            Matrix fresh = dec_target(dec_soft_assign(attention_forward(E, params).values, centroids));
            const double fresh_loss = dec_loss(E, params, centroids, fresh);
            if (fresh_loss <= loss) {
                p = std::move(fresh);
                loss = fresh_loss;
                ++rep.refreshes;
            }
        }
        const auto grad = dec_gradient(E, params, centroids, p);
        AttentionParams<double> proposal = params;
        step(proposal, grad.attention, lr, false);
        Matrix next_centroids = centroids - lr * grad.centroids;
        double next = std::numeric_limits<double>::infinity();
        try {
            next = dec_loss(E, proposal, next_centroids, p);
        } catch (const NumericError&) {
        }
        if (next <= loss) {
            params = std::move(proposal);
            centroids = std::move(next_centroids);
            loss = next;
            rep.accepted_losses.push_back(loss);
            ++rep.accepted_epochs;
            rejections = 0;
            continue;
        }
        ++rep.rejected_steps;
        lr *= 0.5;
        if (++rejections >= max_consecutive_rejections) {
            rep.aborted = true;
            rep.warnings.push_back("DEC fine-tuning stopped after " + std::to_string(rejections) +
                                   " consecutive loss increases at epoch " + std::to_string(epoch));
            break;
        }
    }
    rep.final_loss = loss;
    out.state.centroids = std::move(centroids);
    out.state.q = dec_soft_assign(attention_forward(E, params).values, out.state.centroids);
    out.state.p = std::move(p);
    out.state.kl_loss = loss;
    out.params = std::move(params);
    return out;
}

}  // namespace intent
