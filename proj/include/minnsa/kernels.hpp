#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "minnsa/common.hpp"

namespace minnsa {

/// A score vector with its validity mask. Entries where mask is 0 are
/// excluded from the normalization domain entirely: they receive weight 0
/// and never absorb probability mass. At least one entry must be unmasked.
struct ScoreVector {
    std::span<const double> scores;
    std::span<const std::uint8_t> mask;  // empty mask means "all valid"

    std::size_t size() const { return scores.size(); }
    bool valid(std::size_t i) const { return mask.empty() || mask[i] != 0; }
};

/// Euclidean projection of the unmasked scores onto the probability simplex
/// (sort-and-threshold algorithm): sort unmasked scores descending as
/// z(1) >= ... >= z(K), take k = max{ j : 1 + j*z(j) > sum_{r<=j} z(r) },
/// tau = (sum_{r<=k} z(r) - 1) / k, and output max(z_i - tau, 0).
/// Produces exact zeros; masked positions are exactly 0.
Vec sparsemax(const ScoreVector& v);

/// Jacobian-vector product of sparsemax at v, given the upstream gradient.
/// With support S = {i : p_i > 0}: g_i = [i in S] * (g_out_i - mean_{j in S} g_out_j).
/// At points where the support set is ambiguous (z_i - tau == 0) the Jacobian
/// of the computed support is used.
Vec sparsemax_backward(const ScoreVector& v, std::span<const double> out_grad);

/// Max-shifted softmax over the unmasked entries; masked positions are 0 and
/// every unmasked weight is strictly positive.
Vec softmax(const ScoreVector& v);

/// Jacobian-vector product of softmax: g_i = p_i * (g_out_i - sum_j p_j g_out_j).
Vec softmax_backward(const ScoreVector& v, std::span<const double> out_grad);

/// Backward rules given the already-computed forward output; the network uses
/// these to avoid re-running the kernels on traced attention rows.
Vec sparsemax_vjp_from_output(std::span<const double> weights,
                              std::span<const std::uint8_t> mask,
                              std::span<const double> out_grad);
Vec softmax_vjp_from_output(std::span<const double> weights,
                            std::span<const std::uint8_t> mask,
                            std::span<const double> out_grad);

}  // namespace minnsa
