#include "minnsa/network.hpp"

#include <algorithm>
#include <cmath>

#include "minnsa/kernels.hpp"

namespace minnsa {

void ModelConfig::validate() const {
    if (p == 0) throw Error("ModelConfig: p must be positive");
    if (m_star == 0) throw Error("ModelConfig: m_star must be positive");
    if (n_blocks < 1) throw Error("ModelConfig: n_blocks must be >= 1");
    if (attn_hidden < 1) throw Error("ModelConfig: attn_hidden must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw Error("ModelConfig: dropout_rate must lie in [0,1)");
    }
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

void fill_uniform(Rng& rng, double bound, std::span<double> out) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : out) x = dist(rng);
}

}  // namespace

Model init_model(const ModelConfig& cfg) {
    cfg.validate();
    Model model;
    model.cfg = cfg;
    Rng rng = make_rng(cfg.seed, "init");

    const double fc_bound = 1.0 / std::sqrt(static_cast<double>(cfg.p));
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        Matrix w(cfg.p, cfg.p);
        fill_uniform(rng, fc_bound, w.v);
        model.block_w.push_back(std::move(w));
        model.block_b.emplace_back(cfg.p, 0.0);
    }

    model.attn_v = Matrix(cfg.attn_hidden, cfg.p);
    fill_uniform(rng, fc_bound, model.attn_v.v);
    model.attn_w.resize(cfg.attn_hidden);
    fill_uniform(rng, 1.0 / std::sqrt(static_cast<double>(cfg.attn_hidden)), model.attn_w);

    model.bn.gamma.assign(cfg.p, 1.0);
    model.bn.beta.assign(cfg.p, 0.0);
    model.bn.run_mean.assign(cfg.p, 0.0);
    model.bn.run_var.assign(cfg.p, 1.0);

    model.clf_w.resize(cfg.p);
    fill_uniform(rng, fc_bound, model.clf_w);
    model.clf_b = 0.0;
    return model;
}

Gradients zero_gradients(const ModelConfig& cfg) {
    Gradients g;
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        g.block_w.emplace_back(cfg.p, cfg.p);
        g.block_b.emplace_back(cfg.p, 0.0);
    }
    g.attn_v = Matrix(cfg.attn_hidden, cfg.p);
    g.attn_w.assign(cfg.attn_hidden, 0.0);
    g.bn_gamma.assign(cfg.p, 0.0);
    g.bn_beta.assign(cfg.p, 0.0);
    g.clf_w.assign(cfg.p, 0.0);
    g.clf_b = 0.0;
    return g;
}

std::vector<ParamView> param_views(Model& model) {
    std::vector<ParamView> views;
    for (std::size_t l = 0; l < model.block_w.size(); ++l) {
        views.push_back({"block" + std::to_string(l) + ".w", model.block_w[l].v.data(),
                         model.block_w[l].v.size()});
        views.push_back({"block" + std::to_string(l) + ".b", model.block_b[l].data(),
                         model.block_b[l].size()});
    }
    views.push_back({"attn.v", model.attn_v.v.data(), model.attn_v.v.size()});
    views.push_back({"attn.w", model.attn_w.data(), model.attn_w.size()});
    views.push_back({"bn.gamma", model.bn.gamma.data(), model.bn.gamma.size()});
    views.push_back({"bn.beta", model.bn.beta.data(), model.bn.beta.size()});
    views.push_back({"clf.w", model.clf_w.data(), model.clf_w.size()});
    views.push_back({"clf.b", &model.clf_b, 1});
    return views;
}

std::vector<ParamView> grad_views(Gradients& grads) {
    std::vector<ParamView> views;
    for (std::size_t l = 0; l < grads.block_w.size(); ++l) {
        views.push_back({"block" + std::to_string(l) + ".w", grads.block_w[l].v.data(),
                         grads.block_w[l].v.size()});
        views.push_back({"block" + std::to_string(l) + ".b", grads.block_b[l].data(),
                         grads.block_b[l].size()});
    }
    views.push_back({"attn.v", grads.attn_v.v.data(), grads.attn_v.v.size()});
    views.push_back({"attn.w", grads.attn_w.data(), grads.attn_w.size()});
    views.push_back({"bn.gamma", grads.bn_gamma.data(), grads.bn_gamma.size()});
    views.push_back({"bn.beta", grads.bn_beta.data(), grads.bn_beta.size()});
    views.push_back({"clf.w", grads.clf_w.data(), grads.clf_w.size()});
    views.push_back({"clf.b", &grads.clf_b, 1});
    return views;
}

std::size_t param_count(const ModelConfig& cfg) {
    return cfg.n_blocks * (cfg.p * cfg.p + cfg.p) + cfg.attn_hidden * cfg.p + cfg.attn_hidden +
           4 * cfg.p + 1;
}

// ---- layer operations -------------------------------------------------------

Tensor3 locally_fc(const Tensor3& x, const BoolMatrix& mask, const Matrix& w, const Vec& bias) {
    if (w.rows != x.p || w.cols != x.p || bias.size() != x.p || mask.rows != x.b ||
        mask.cols != x.m) {
        throw Error("locally_fc: shape mismatch");
    }
    Tensor3 y(x.b, x.m, x.p);
    for (std::size_t b = 0; b < x.b; ++b) {
        for (std::size_t j = 0; j < x.m; ++j) {
            if (!mask.at(b, j)) continue;  // padding rows stay exactly zero
            const auto in = x.row(b, j);
            auto out = y.row(b, j);
            for (std::size_t k = 0; k < x.p; ++k) {
                double acc = bias[k];
                const auto wr = w.row(k);
                for (std::size_t r = 0; r < x.p; ++r) acc += wr[r] * in[r];
                out[k] = acc;
            }
        }
    }
    return y;
}

Tensor3 dropout(const Tensor3& x, double rate, Mode mode, Rng& rng, Tensor3* scale_out) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout: rate must lie in [0,1)");
    if (mode == Mode::kEval || rate == 0.0) {
        if (scale_out) *scale_out = Tensor3(x.b, x.m, x.p, 1.0);
        return x;
    }
    std::bernoulli_distribution drop(rate);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor3 y(x.b, x.m, x.p);
    if (scale_out) *scale_out = Tensor3(x.b, x.m, x.p);
    for (std::size_t i = 0; i < x.v.size(); ++i) {
        const double s = drop(rng) ? 0.0 : keep_scale;
        y.v[i] = x.v[i] * s;
        if (scale_out) scale_out->v[i] = s;
    }
    return y;
}

namespace {

/// Masked inverted dropout; consumes random draws only for unmasked rows so
/// results do not depend on padding.
Tensor3 dropout_masked(const Tensor3& x, const BoolMatrix& mask, double rate, Mode mode, Rng& rng,
                       Tensor3* scale_out) {
    if (mode == Mode::kEval || rate == 0.0) {
        if (scale_out) *scale_out = Tensor3(x.b, x.m, x.p, 1.0);
        return x;
    }
    std::bernoulli_distribution drop(rate);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor3 y(x.b, x.m, x.p);
    if (scale_out) *scale_out = Tensor3(x.b, x.m, x.p);
    for (std::size_t b = 0; b < x.b; ++b) {
        for (std::size_t j = 0; j < x.m; ++j) {
            if (!mask.at(b, j)) continue;
            const auto in = x.row(b, j);
            auto out = y.row(b, j);
            for (std::size_t k = 0; k < x.p; ++k) {
                const double s = drop(rng) ? 0.0 : keep_scale;
                out[k] = in[k] * s;
                if (scale_out) scale_out->at(b, j, k) = s;
            }
        }
    }
    return y;
}

Tensor3 relu(const Tensor3& x) {
    Tensor3 y = x;
    for (double& v : y.v) v = std::max(v, 0.0);
    return y;
}

}  // namespace

Tensor3 residual_block(const Tensor3& x, const BoolMatrix& mask, const BlockParams& params,
                       double dropout_rate, bool use_skip, Mode mode, Rng& rng) {
    Tensor3 a = locally_fc(x, mask, params.w, params.bias);
    Tensor3 inner = dropout_masked(relu(a), mask, dropout_rate, mode, rng, nullptr);
    if (use_skip) {
        for (std::size_t i = 0; i < inner.v.size(); ++i) inner.v[i] += x.v[i];
    }
    return inner;
}

Matrix attention_scores(const Tensor3& z, const BoolMatrix& mask, const Matrix& v, const Vec& w,
                        Tensor3* tanh_out) {
    if (v.cols != z.p || w.size() != v.rows) throw Error("attention_scores: shape mismatch");
    const std::size_t h = v.rows;
    Matrix scores(z.b, z.m);
    if (tanh_out) *tanh_out = Tensor3(z.b, z.m, h);
    for (std::size_t b = 0; b < z.b; ++b) {
        for (std::size_t j = 0; j < z.m; ++j) {
            if (!mask.at(b, j)) continue;  // masked entries stay 0, consumed via the mask
            const auto row = z.row(b, j);
            double e = 0.0;
            for (std::size_t q = 0; q < h; ++q) {
                double t = 0.0;
                const auto vr = v.row(q);
                for (std::size_t k = 0; k < z.p; ++k) t += vr[k] * row[k];
                const double th = std::tanh(t);
                if (tanh_out) tanh_out->at(b, j, q) = th;
                e += w[q] * th;
            }
            scores.at(b, j) = e;
        }
    }
    return scores;
}

Matrix attention_pool(const Tensor3& z, const Matrix& alpha, const BoolMatrix& mask) {
    if (alpha.rows != z.b || alpha.cols != z.m) throw Error("attention_pool: shape mismatch");
    Matrix pooled(z.b, z.p);
    for (std::size_t b = 0; b < z.b; ++b) {
        auto out = pooled.row(b);
        for (std::size_t j = 0; j < z.m; ++j) {
            const double a = alpha.at(b, j);
            if (!mask.at(b, j) || a == 0.0) continue;
            const auto row = z.row(b, j);
            for (std::size_t k = 0; k < z.p; ++k) out[k] += a * row[k];
        }
    }
    return pooled;
}

Matrix batch_norm(const Matrix& f, BatchNorm& state, Mode mode, BatchNormTrace* trace) {
    const std::size_t n = f.rows;
    const std::size_t p = f.cols;
    if (state.gamma.size() != p) throw Error("batch_norm: shape mismatch");

    Matrix out(n, p);
    if (mode == Mode::kTrain) {
        if (n < 2) throw Error("batch_norm: train mode requires batch size >= 2");
        Vec mean(p, 0.0), var(p, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < p; ++k) mean[k] += f.at(i, k);
        }
        for (double& m : mean) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < p; ++k) {
                const double d = f.at(i, k) - mean[k];
                var[k] += d * d;
            }
        }
        for (double& v : var) v /= static_cast<double>(n);  // biased batch variance

        if (trace) {
            trace->mean = mean;
            trace->inv_std.assign(p, 0.0);
            trace->xhat = Matrix(n, p);
        }
        for (std::size_t k = 0; k < p; ++k) {
            const double inv_std = 1.0 / std::sqrt(var[k] + kBnEps);
            if (trace) trace->inv_std[k] = inv_std;
            for (std::size_t i = 0; i < n; ++i) {
                const double xhat = (f.at(i, k) - mean[k]) * inv_std;
                if (trace) trace->xhat.at(i, k) = xhat;
                out.at(i, k) = state.gamma[k] * xhat + state.beta[k];
            }
            // Running stats track the unbiased variance (torch convention).
            const double unbiased = var[k] * static_cast<double>(n) / static_cast<double>(n - 1);
            state.run_mean[k] = (1.0 - kBnMomentum) * state.run_mean[k] + kBnMomentum * mean[k];
            state.run_var[k] = (1.0 - kBnMomentum) * state.run_var[k] + kBnMomentum * unbiased;
        }
    } else {
        for (std::size_t k = 0; k < p; ++k) {
            const double inv_std = 1.0 / std::sqrt(state.run_var[k] + kBnEps);
            for (std::size_t i = 0; i < n; ++i) {
                out.at(i, k) =
                    state.gamma[k] * (f.at(i, k) - state.run_mean[k]) * inv_std + state.beta[k];
            }
        }
    }
    return out;
}

// ---- full graph --------------------------------------------------------------

namespace {

ForwardTrace forward_impl(const Model& model, BatchNorm& bn_state, const BagBatch& batch,
                          Mode mode, Rng& rng) {
    const ModelConfig& cfg = model.cfg;
    if (batch.p() != cfg.p) throw Error("forward: batch dimension does not match model");
    const bool record = mode == Mode::kTrain;

    ForwardTrace trace;
    trace.mode = mode;
    trace.model_version = model.version;

    Tensor3 x = batch.data;
    if (record) trace.block_in.push_back(x);
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        Tensor3 a = locally_fc(x, batch.mask, model.block_w[l], model.block_b[l]);
        Tensor3 scale;
        Tensor3 inner = dropout_masked(relu(a), batch.mask, cfg.dropout_rate, mode, rng,
                                       record ? &scale : nullptr);
        if (cfg.use_skip) {
            for (std::size_t i = 0; i < inner.v.size(); ++i) inner.v[i] += x.v[i];
        }
        if (record) {
            trace.block_preact.push_back(std::move(a));
            trace.drop_scale.push_back(std::move(scale));
            trace.block_in.push_back(inner);
        }
        x = std::move(inner);
    }

    Matrix scores = attention_scores(x, batch.mask, model.attn_v, model.attn_w,
                                     record ? &trace.attn_tanh : nullptr);

    trace.attention = Matrix(batch.batch_size(), batch.m_star());
    for (std::size_t b = 0; b < batch.batch_size(); ++b) {
        ScoreVector sv{scores.row(b), batch.mask.row(b)};
        const Vec alpha = cfg.use_sparse ? sparsemax(sv) : softmax(sv);
        std::copy(alpha.begin(), alpha.end(), trace.attention.row(b).begin());
    }

    trace.pooled = attention_pool(x, trace.attention, batch.mask);
    trace.features = batch_norm(trace.pooled, bn_state, mode, record ? &trace.bn : nullptr);

    trace.logits.assign(batch.batch_size(), 0.0);
    for (std::size_t b = 0; b < batch.batch_size(); ++b) {
        double logit = model.clf_b;
        const auto feat = trace.features.row(b);
        for (std::size_t k = 0; k < cfg.p; ++k) logit += model.clf_w[k] * feat[k];
        trace.logits[b] = logit;
    }

    if (record) trace.scores = std::move(scores);
    return trace;
}

}  // namespace

ForwardTrace forward(Model& model, const BagBatch& batch, Mode mode, Rng& rng) {
    return forward_impl(model, model.bn, batch, mode, rng);
}

ForwardTrace forward_eval(const Model& model, const BagBatch& batch) {
    Rng rng(0);  // eval consumes no randomness
    BatchNorm bn_copy = model.bn;
    return forward_impl(model, bn_copy, batch, Mode::kEval, rng);
}

Gradients backward(const Model& model, const BagBatch& batch, const ForwardTrace& trace,
                   const Vec& logit_grad) {
    const ModelConfig& cfg = model.cfg;
    if (trace.mode != Mode::kTrain) throw Error("backward: trace was not produced in train mode");
    if (trace.model_version != model.version) {
        throw Error("backward: stale trace (model parameters changed since forward)");
    }
    const std::size_t n = batch.batch_size();
    const std::size_t m = batch.m_star();
    const std::size_t p = cfg.p;
    const std::size_t h = cfg.attn_hidden;
    if (logit_grad.size() != n) throw Error("backward: logit_grad size mismatch");

    Gradients g = zero_gradients(cfg);

    // classifier head: logit = clf_w . feat + clf_b
    Matrix dfeat(n, p);
    for (std::size_t b = 0; b < n; ++b) {
        const double dl = logit_grad[b];
        g.clf_b += dl;
        const auto feat = trace.features.row(b);
        auto df = dfeat.row(b);
        for (std::size_t k = 0; k < p; ++k) {
            g.clf_w[k] += dl * feat[k];
            df[k] = dl * model.clf_w[k];
        }
    }

    // batch norm (through the batch statistics)
    Matrix dpooled(n, p);
    {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < p; ++k) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double dy = dfeat.at(i, k);
                sum_dy += dy;
                sum_dy_xhat += dy * trace.bn.xhat.at(i, k);
                g.bn_gamma[k] += dy * trace.bn.xhat.at(i, k);
                g.bn_beta[k] += dy;
            }
            const double scale = model.bn.gamma[k] * trace.bn.inv_std[k];
            for (std::size_t i = 0; i < n; ++i) {
                const double dy = dfeat.at(i, k);
                dpooled.at(i, k) = scale * (dy - inv_n * sum_dy -
                                            trace.bn.xhat.at(i, k) * inv_n * sum_dy_xhat);
            }
        }
    }

    const Tensor3& z = trace.block_in.back();

    // pooling: pooled = sum_j alpha_j z_j. dZ gets the direct path now and the
    // attention-score path below.
    Tensor3 dz(n, m, p);
    Matrix dalpha(n, m);
    for (std::size_t b = 0; b < n; ++b) {
        const auto dp = dpooled.row(b);
        for (std::size_t j = 0; j < m; ++j) {
            if (!batch.mask.at(b, j)) continue;
            const auto zr = z.row(b, j);
            auto dzr = dz.row(b, j);
            double da = 0.0;
            const double a = trace.attention.at(b, j);
            for (std::size_t k = 0; k < p; ++k) {
                da += dp[k] * zr[k];
                dzr[k] = a * dp[k];
            }
            dalpha.at(b, j) = da;
        }
    }

    // attention kernel and score head
    for (std::size_t b = 0; b < n; ++b) {
        const Vec de = cfg.use_sparse
                           ? sparsemax_vjp_from_output(trace.attention.row(b),
                                                       batch.mask.row(b), dalpha.row(b))
                           : softmax_vjp_from_output(trace.attention.row(b), batch.mask.row(b),
                                                     dalpha.row(b));
        for (std::size_t j = 0; j < m; ++j) {
            if (!batch.mask.at(b, j) || de[j] == 0.0) continue;
            const auto zr = z.row(b, j);
            auto dzr = dz.row(b, j);
            for (std::size_t q = 0; q < h; ++q) {
                const double th = trace.attn_tanh.at(b, j, q);
                g.attn_w[q] += de[j] * th;
                const double dt = de[j] * model.attn_w[q] * (1.0 - th * th);
                const auto vr = model.attn_v.row(q);
                auto gv = g.attn_v.row(q);
                for (std::size_t k = 0; k < p; ++k) {
                    gv[k] += dt * zr[k];
                    dzr[k] += dt * vr[k];
                }
            }
        }
    }

    // residual blocks, reversed
    Tensor3 dx = std::move(dz);
    for (std::size_t l = cfg.n_blocks; l-- > 0;) {
        const Tensor3& x_in = trace.block_in[l];
        const Tensor3& preact = trace.block_preact[l];
        const Tensor3& scale = trace.drop_scale[l];
        Tensor3 dx_prev(n, m, p);
        auto& gw = g.block_w[l];
        auto& gb = g.block_b[l];
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t j = 0; j < m; ++j) {
                if (!batch.mask.at(b, j)) continue;
                const auto dout = dx.row(b, j);
                const auto pre = preact.row(b, j);
                const auto sc = scale.row(b, j);
                const auto xin = x_in.row(b, j);
                auto dprev = dx_prev.row(b, j);
                if (cfg.use_skip) {
                    for (std::size_t k = 0; k < p; ++k) dprev[k] = dout[k];
                }
                for (std::size_t k = 0; k < p; ++k) {
                    double da = dout[k] * sc[k];
                    if (pre[k] <= 0.0) da = 0.0;  // relu gate
                    if (da == 0.0) continue;
                    gb[k] += da;
                    const auto wr = model.block_w[l].row(k);
                    auto gwr = gw.row(k);
                    for (std::size_t r = 0; r < p; ++r) {
                        gwr[r] += da * xin[r];
                        dprev[r] += da * wr[r];
                    }
                }
            }
        }
        dx = std::move(dx_prev);
    }

    return g;
}

}  // namespace minnsa
