#include "minnsa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace minnsa {

namespace {

std::vector<std::size_t> unmasked_indices(const ScoreVector& v) {
    std::vector<std::size_t> idx;
    idx.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v.valid(i)) idx.push_back(i);
    }
    if (idx.empty()) throw Error("kernel input has no unmasked entries");
    return idx;
}

}  // namespace

Vec sparsemax(const ScoreVector& v) {
    const auto idx = unmasked_indices(v);
    const std::size_t k_total = idx.size();

    // Stable sort keeps the support set deterministic under ties; the
    // threshold itself depends only on the sorted values.
    std::vector<std::size_t> order(idx);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return v.scores[a] > v.scores[b];
    });

    double cumsum = 0.0;
    double support_sum = 0.0;
    std::size_t support = 0;
    for (std::size_t j = 1; j <= k_total; ++j) {
        const double z_j = v.scores[order[j - 1]];
        cumsum += z_j;
        if (1.0 + static_cast<double>(j) * z_j > cumsum) {
            support = j;
            support_sum = cumsum;
        }
    }
    const double tau = (support_sum - 1.0) / static_cast<double>(support);

    Vec out(v.size(), 0.0);
    for (std::size_t i : idx) out[i] = std::max(v.scores[i] - tau, 0.0);
    return out;
}

Vec sparsemax_backward(const ScoreVector& v, std::span<const double> out_grad) {
    const Vec weights = sparsemax(v);
    std::vector<std::uint8_t> mask(v.mask.begin(), v.mask.end());
    return sparsemax_vjp_from_output(weights, mask, out_grad);
}

Vec sparsemax_vjp_from_output(std::span<const double> weights,
                              std::span<const std::uint8_t> mask,
                              std::span<const double> out_grad) {
    const std::size_t n = weights.size();
    double grad_sum = 0.0;
    std::size_t support = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool valid = mask.empty() || mask[i] != 0;
        if (valid && weights[i] > 0.0) {
            grad_sum += out_grad[i];
            ++support;
        }
    }
    Vec g(n, 0.0);
    if (support == 0) return g;
    const double mean = grad_sum / static_cast<double>(support);
    for (std::size_t i = 0; i < n; ++i) {
        const bool valid = mask.empty() || mask[i] != 0;
        if (valid && weights[i] > 0.0) g[i] = out_grad[i] - mean;
    }
    return g;
}

Vec softmax(const ScoreVector& v) {
    const auto idx = unmasked_indices(v);
    double max_z = v.scores[idx[0]];
    for (std::size_t i : idx) max_z = std::max(max_z, v.scores[i]);

    Vec out(v.size(), 0.0);
    double denom = 0.0;
    for (std::size_t i : idx) {
        out[i] = std::exp(v.scores[i] - max_z);
        denom += out[i];
    }
    for (std::size_t i : idx) out[i] /= denom;
    return out;
}

Vec softmax_backward(const ScoreVector& v, std::span<const double> out_grad) {
    const Vec weights = softmax(v);
    std::vector<std::uint8_t> mask(v.mask.begin(), v.mask.end());
    return softmax_vjp_from_output(weights, mask, out_grad);
}

Vec softmax_vjp_from_output(std::span<const double> weights,
                            std::span<const std::uint8_t> mask,
                            std::span<const double> out_grad) {
    const std::size_t n = weights.size();
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool valid = mask.empty() || mask[i] != 0;
        if (valid) dot += weights[i] * out_grad[i];
    }
    Vec g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const bool valid = mask.empty() || mask[i] != 0;
        if (valid) g[i] = weights[i] * (out_grad[i] - dot);
    }
    return g;
}

}  // namespace minnsa
