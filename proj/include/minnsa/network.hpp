#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minnsa/bagdata.hpp"
#include "minnsa/rng.hpp"
#include "minnsa/tensor.hpp"

namespace minnsa {

enum class Mode { kTrain, kEval };

struct ModelConfig {
    std::size_t p = 30;           // instance feature dimension
    std::size_t m_star = 100;     // instance capacity
    std::size_t n_blocks = 2;     // residual blocks
    std::size_t attn_hidden = 64; // attention head hidden width
    double dropout_rate = 0.3;    // in [0, 1)
    bool use_skip = true;         // identity bypass around each block
    bool use_sparse = true;       // sparsemax attention (softmax otherwise)
    std::uint64_t seed = 0;

    void validate() const;
};

/// Batch-norm parameters and running state over the pooled p-vector.
struct BatchNorm {
    Vec gamma, beta;
    Vec run_mean, run_var;
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

struct Model {
    ModelConfig cfg;
    std::vector<Matrix> block_w;  // n_blocks of p x p
    std::vector<Vec> block_b;     // n_blocks of p
    Matrix attn_v;                // attn_hidden x p
    Vec attn_w;                   // attn_hidden
    BatchNorm bn;                 // over p features
    Vec clf_w;                    // p
    double clf_b = 0.0;

    /// Bumped whenever parameters change; traces record it so that backward
    /// can reject a trace taken against older parameters.
    std::uint64_t version = 0;
};

/// Gradients of the loss with respect to every trainable parameter.
struct Gradients {
    std::vector<Matrix> block_w;
    std::vector<Vec> block_b;
    Matrix attn_v;
    Vec attn_w;
    Vec bn_gamma, bn_beta;
    Vec clf_w;
    double clf_b = 0.0;
};

Gradients zero_gradients(const ModelConfig& cfg);

/// Named view over one parameter tensor; the order of views is the canonical
/// parameter order shared by the optimizer and the gradient checks.
struct ParamView {
    std::string name;
    double* data;
    std::size_t len;
};

std::vector<ParamView> param_views(Model& model);
std::vector<ParamView> grad_views(Gradients& grads);
std::size_t param_count(const ModelConfig& cfg);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, gamma 1, beta 0,
/// running mean 0 / variance 1. Deterministic given cfg.seed.
Model init_model(const ModelConfig& cfg);

// ---- layer operations (exposed for tests; forward() composes them) ---------

/// Y[b,j,:] = W * X[b,j,:] + bias on unmasked rows; masked rows are zero.
/// Weights are shared across instances.
Tensor3 locally_fc(const Tensor3& x, const BoolMatrix& mask, const Matrix& w, const Vec& bias);

/// Inverted dropout: eval is the identity; train zeroes each element with
/// probability rate and scales survivors by 1/(1-rate). If scale_out is given
/// it receives the per-element multiplier (for the backward pass).
Tensor3 dropout(const Tensor3& x, double rate, Mode mode, Rng& rng, Tensor3* scale_out = nullptr);

/// Parameters of one residual block.
struct BlockParams {
    const Matrix& w;
    const Vec& bias;
};

/// dropout(relu(locally_fc(X))) plus the identity bypass when use_skip.
/// Random draws are consumed for unmasked rows only, so outputs do not depend
/// on the amount of padding.
Tensor3 residual_block(const Tensor3& x, const BoolMatrix& mask, const BlockParams& params,
                       double dropout_rate, bool use_skip, Mode mode, Rng& rng);

/// e[b,j] = w^T tanh(V * Z[b,j,:]) on unmasked entries; masked entries are
/// set to 0 and ignored downstream via the mask.
Matrix attention_scores(const Tensor3& z, const BoolMatrix& mask, const Matrix& v, const Vec& w,
                        Tensor3* tanh_out = nullptr);

/// pooled[b,:] = sum_j alpha[b,j] * Z[b,j,:].
Matrix attention_pool(const Tensor3& z, const Matrix& alpha, const BoolMatrix& mask);

struct BatchNormTrace {
    Vec mean, inv_std;  // per feature
    Matrix xhat;        // batch x p
};

/// Train: normalize by batch statistics (biased variance, eps 1e-5), update
/// running stats with momentum 0.1 (unbiased variance, torch convention).
/// Eval: normalize by running statistics. Train requires batch >= 2.
Matrix batch_norm(const Matrix& f, BatchNorm& state, Mode mode, BatchNormTrace* trace = nullptr);

// ---- full graph -------------------------------------------------------------

struct ForwardTrace {
    Vec logits;            // batch
    Matrix attention;      // batch x m_star, rows on the simplex
    Matrix pooled;         // batch x p, pre batch-norm
    Matrix features;       // batch x p, post batch-norm (classifier input)

    // intermediates recorded in train mode only
    std::vector<Tensor3> block_in;     // n_blocks + 1 entries; last one is Z
    std::vector<Tensor3> block_preact; // pre-ReLU activations
    std::vector<Tensor3> drop_scale;   // dropout multipliers
    Tensor3 attn_tanh;                 // batch x m_star x attn_hidden
    Matrix scores;                     // batch x m_star
    BatchNormTrace bn;

    Mode mode = Mode::kEval;
    std::uint64_t model_version = 0;
};

/// Chains n_blocks residual blocks, the attention head, sparsemax/softmax,
/// masked pooling, batch norm and the sigmoid classifier head.
ForwardTrace forward(Model& model, const BagBatch& batch, Mode mode, Rng& rng);

/// Eval-mode forward that leaves batch-norm running state untouched.
ForwardTrace forward_eval(const Model& model, const BagBatch& batch);

/// Exact reverse-mode gradients for a train-mode trace. logit_grad is the
/// gradient of the loss with respect to each logit.
Gradients backward(const Model& model, const BagBatch& batch, const ForwardTrace& trace,
                   const Vec& logit_grad);

double sigmoid(double x);

}  // namespace minnsa
