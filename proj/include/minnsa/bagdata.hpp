#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "minnsa/common.hpp"
#include "minnsa/tensor.hpp"

namespace minnsa {

/// One labeled sample: a non-empty, variable-length list of p-dim instances.
struct Bag {
    std::string bag_id;
    int label = 0;  // 0 = normal, 1 = tumor
    std::vector<Vec> instances;

    std::size_t size() const { return instances.size(); }
};

struct Dataset {
    std::vector<Bag> bags;
    std::size_t p = 0;

    std::size_t size() const { return bags.size(); }
    std::size_t max_bag_size() const;
    std::vector<int> labels() const;
};

/// Padded view of a dataset: data[b,j,:] is zero wherever mask[b,j] is false,
/// every row has at least one valid instance, and valid entries form a prefix.
struct BagBatch {
    Tensor3 data;      // batch x m_star x p
    BoolMatrix mask;   // batch x m_star
    std::vector<int> labels;

    std::size_t batch_size() const { return data.b; }
    std::size_t m_star() const { return data.m; }
    std::size_t p() const { return data.p; }

    /// Validates the padding/mask invariants; throws Error on violation.
    void check_invariants() const;
};

/// Generative parameters for synthetic primary-instance bags.
struct SynthConfig {
    std::size_t n_bags = 400;
    double positive_fraction = 0.5;   // in (0,1)
    std::size_t p = 30;
    double bag_size_mean = 4.0;       // >= 1
    std::size_t bag_size_max = 100;   // >= 1
    double witness_rate = 0.5;        // in (0,1]
    double signal_shift = 2.0;        // mean offset of primary instances along u
    std::uint64_t seed = 0;

    void validate() const;
};

// ---- file format -----------------------------------------------------------
// CSV, UTF-8. Header: bag_id,label,f0,...,f{p-1}. One row per instance, all
// rows of a bag contiguous, label constant within a bag. Floats are written
// with 9 significant digits.

Dataset parse_bag_file(std::istream& source, const std::string& source_name = "<stream>");
Dataset read_bag_file(const std::string& path);
void write_bag_file(const Dataset& ds, std::ostream& sink);
void write_bag_file(const Dataset& ds, const std::string& path);

// ---- shaping ---------------------------------------------------------------

/// Pads every bag to m_star rows (zeros + false mask); bags longer than
/// m_star keep exactly their first m_star instances.
BagBatch pad_and_mask(const Dataset& ds, std::size_t m_star);

/// Row-gather of a padded batch (used for mini-batching).
BagBatch gather(const BagBatch& batch, std::span<const std::size_t> rows);

// ---- sampling / splitting --------------------------------------------------

enum class Scenario { kBalanced, kImbalanced };

/// Subsamples without replacement to target_n bags: balanced keeps
/// floor(target_n/2) positives, imbalanced keeps round(0.1*target_n)
/// (half-up) positives. Deterministic given seed.
Dataset subsample_scenario(const Dataset& ds, Scenario scenario, std::size_t target_n,
                           std::uint64_t seed);

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified k-fold partition; per-fold class counts differ by at most one.
std::vector<FoldSplit> stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed);

/// Stratified holdout: moves ceil(frac * class count) bags of each class into
/// the second return slot. Used for the in-fold validation split.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const std::vector<int>& labels, double frac, std::uint64_t seed);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

// ---- synthetic generator ---------------------------------------------------

/// Unit direction u along which primary instances are shifted.
Vec synth_signal_direction(std::size_t p);

/// Bag sizes ~ geometric (mean bag_size_mean) clamped to bag_size_max.
/// Negative bags: background instances ~ N(0, I). Positive bags: each
/// instance is primary with probability witness_rate (at least one forced),
/// primary ~ N(signal_shift * u, I). Bit-reproducible given seed.
Dataset synth_generate(const SynthConfig& cfg);

}  // namespace minnsa
