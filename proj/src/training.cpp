#include "minnsa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "minnsa/evaluation.hpp"

namespace minnsa {

void TrainConfig::validate() const {
    if (epochs < 1) throw Error("TrainConfig: epochs must be >= 1");
    if (batch_size < 2) throw Error("TrainConfig: batch_size must be >= 2 (batch norm)");
    if (!(learning_rate >= 0.0)) throw Error("TrainConfig: learning_rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw Error("TrainConfig: betas must lie in [0,1)");
    }
    if (!(eps > 0.0)) throw Error("TrainConfig: eps must be positive");
}

void TrainHistory::write_csv(std::ostream& sink) const {
    sink << "epoch,train_loss,metric\n";
    for (std::size_t e = 0; e < train_loss.size(); ++e) {
        sink << e << ',' << format_g9(train_loss[e]) << ',' << format_g9(metric[e]) << '\n';
    }
}

std::pair<double, Vec> bce_loss(const Vec& logits, const std::vector<int>& labels) {
    if (logits.size() != labels.size()) throw Error("bce_loss: size mismatch");
    if (logits.empty()) throw Error("bce_loss: empty batch");
    const double inv_n = 1.0 / static_cast<double>(logits.size());
    double loss = 0.0;
    Vec grad(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double l = logits[i];
        const double y = static_cast<double>(labels[i]);
        // -[y log s + (1-y) log(1-s)] = max(l,0) - l*y + log(1 + exp(-|l|))
        loss += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
        grad[i] = (sigmoid(l) - y) * inv_n;
    }
    return {loss * inv_n, grad};
}

AdamState make_adam_state(const ModelConfig& cfg) {
    AdamState state;
    state.m.assign(param_count(cfg), 0.0);
    state.v.assign(param_count(cfg), 0.0);
    state.step = 0;
    return state;
}

void optimizer_step(Model& model, Gradients& grads, AdamState& state, const TrainConfig& cfg) {
    auto params = param_views(model);
    auto gviews = grad_views(grads);
    if (params.size() != gviews.size()) throw Error("optimizer_step: view mismatch");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    std::size_t offset = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].len != gviews[t].len) throw Error("optimizer_step: shape mismatch");
        for (std::size_t i = 0; i < params[t].len; ++i) {
            const double g = gviews[t].data[i];
            if (!std::isfinite(g)) {
                throw Error("optimizer_step: non-finite gradient in parameter '" +
                            params[t].name + "'");
            }
            double& m = state.m[offset + i];
            double& v = state.v[offset + i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            params[t].data[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
        offset += params[t].len;
    }
    model.version += 1;
}

TrainResult train(const Model& init, const Dataset& train_ds, const Dataset* val,
                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_ds.size() < 2) throw Error("train: need at least 2 training bags");
    if (train_ds.p != init.cfg.p) throw Error("train: dataset dimension does not match model");
    if (cfg.selection == SelectionMetric::kValAuc && (val == nullptr || val->size() == 0)) {
        throw Error("train: selection metric val_auc requires a validation set");
    }

    Model model = init;
    AdamState adam = make_adam_state(model.cfg);
    const BagBatch full = pad_and_mask(train_ds, model.cfg.m_star);
    Rng rng = make_rng(cfg.seed, "train");

    TrainHistory history;
    history.selection = cfg.selection;

    Model best = model;
    double best_metric = 0.0;
    bool have_best = false;

    std::vector<std::size_t> order(train_ds.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);

        // Contiguous chunks of the shuffled order; a trailing singleton is
        // merged into the previous batch (batch norm needs >= 2 samples).
        std::vector<std::pair<std::size_t, std::size_t>> chunks;
        std::size_t start = 0;
        while (start < order.size()) {
            std::size_t end = std::min(start + cfg.batch_size, order.size());
            if (order.size() - end == 1) end = order.size();
            chunks.emplace_back(start, end);
            start = end;
        }

        double epoch_loss = 0.0;
        for (const auto& [lo, hi] : chunks) {
            const BagBatch batch =
                gather(full, std::span<const std::size_t>(order.data() + lo, hi - lo));
            ForwardTrace trace = forward(model, batch, Mode::kTrain, rng);
            auto [loss, logit_grad] = bce_loss(trace.logits, batch.labels);
            Gradients grads = backward(model, batch, trace, logit_grad);
            optimizer_step(model, grads, adam, cfg);
            epoch_loss += loss * static_cast<double>(hi - lo);
        }
        epoch_loss /= static_cast<double>(train_ds.size());
        history.train_loss.push_back(epoch_loss);

        double metric = 0.0;
        if (cfg.selection == SelectionMetric::kValAuc) {
            const Prediction pred = predict(model, *val);
            metric = auc(pred.probs, val->labels());
        } else {
            metric = epoch_loss;
        }
        history.metric.push_back(metric);

        const bool better = !have_best || (cfg.selection == SelectionMetric::kValAuc
                                               ? metric > best_metric
                                               : metric < best_metric);
        if (better) {
            best = model;
            best_metric = metric;
            history.best_epoch = epoch;
            have_best = true;
        }
    }

    return {std::move(best), std::move(history)};
}

Prediction predict(const Model& model, const Dataset& ds) {
    if (ds.p != model.cfg.p) throw Error("predict: dataset dimension does not match model");
    if (ds.size() == 0) throw Error("predict: empty dataset");

    constexpr std::size_t kChunk = 256;
    Prediction out;
    out.probs.reserve(ds.size());
    out.logits.reserve(ds.size());
    out.attention = Matrix(ds.size(), model.cfg.m_star);
    out.features = Matrix(ds.size(), model.cfg.p);

    const BagBatch full = pad_and_mask(ds, model.cfg.m_star);
    std::vector<std::size_t> rows;
    for (std::size_t lo = 0; lo < ds.size(); lo += kChunk) {
        const std::size_t hi = std::min(lo + kChunk, ds.size());
        rows.resize(hi - lo);
        std::iota(rows.begin(), rows.end(), lo);
        const BagBatch batch = gather(full, rows);
        const ForwardTrace trace = forward_eval(model, batch);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.logits.push_back(trace.logits[i]);
            out.probs.push_back(sigmoid(trace.logits[i]));
            std::copy(trace.attention.row(i).begin(), trace.attention.row(i).end(),
                      out.attention.row(lo + i).begin());
            std::copy(trace.features.row(i).begin(), trace.features.row(i).end(),
                      out.features.row(lo + i).begin());
        }
    }
    return out;
}

}  // namespace minnsa
