#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "minnsa/network.hpp"

namespace minnsa {

enum class SelectionMetric { kValAuc, kTrainLoss };

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    SelectionMetric selection = SelectionMetric::kValAuc;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainHistory {
    Vec train_loss;       // per epoch
    Vec metric;           // per epoch, selection metric value
    std::size_t best_epoch = 0;
    SelectionMetric selection = SelectionMetric::kValAuc;

    void write_csv(std::ostream& sink) const;
};

/// Numerically stable mean binary cross-entropy over logits, plus its
/// gradient with respect to the logits ((sigmoid(l) - y) / batch).
std::pair<double, Vec> bce_loss(const Vec& logits, const std::vector<int>& labels);

struct AdamState {
    Vec m, v;
    std::uint64_t step = 0;
};

AdamState make_adam_state(const ModelConfig& cfg);

/// Bias-corrected adaptive-moment update over all trainable parameters.
/// Throws if any gradient entry is non-finite, naming the parameter.
void optimizer_step(Model& model, Gradients& grads, AdamState& state, const TrainConfig& cfg);

struct TrainResult {
    Model best;
    TrainHistory history;
};

/// Runs the epoch loop with per-epoch metric evaluation and returns the
/// parameter snapshot from the best epoch (ties resolved to the earliest).
/// val is required when the selection metric is validation AUC.
TrainResult train(const Model& init, const Dataset& train_ds, const Dataset* val,
                  const TrainConfig& cfg);

struct Prediction {
    Vec probs;         // per bag, sigmoid of the logit
    Vec logits;
    Matrix attention;  // n x m_star
    Matrix features;   // n x p, classifier input (post batch-norm)
};

/// Deterministic eval-mode scoring of a whole dataset.
Prediction predict(const Model& model, const Dataset& ds);

}  // namespace minnsa
