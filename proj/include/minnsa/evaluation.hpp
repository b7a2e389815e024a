#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "minnsa/training.hpp"

namespace minnsa {

/// Area under the ROC curve via the rank-sum (Mann-Whitney) statistic; tied
/// pairs count one half. Throws unless both classes are present.
double auc(const Vec& scores, const std::vector<int>& labels);

struct RocPoint {
    double fpr;
    double tpr;
};

/// Monotone staircase from (0,0) to (1,1), one step per distinct threshold.
/// Its trapezoidal area equals auc() to floating-point accuracy.
std::vector<RocPoint> roc_curve(const Vec& scores, const std::vector<int>& labels);

double trapezoid_area(const std::vector<RocPoint>& curve);

struct WilcoxonResult {
    double statistic;   // W+: rank sum of positive differences
    double p_value;     // two-sided
    std::size_t n_used; // pairs left after dropping zero differences
    bool exact;         // exact distribution (n_used <= 25) vs normal approx
};

/// Paired two-sided Wilcoxon signed-rank test: zero differences dropped,
/// midranks for ties, exact null distribution for n <= 25 and the
/// tie-corrected normal approximation beyond that.
WilcoxonResult wilcoxon_signed_rank(const Vec& a, const Vec& b);

// ---- cross-validation harness ----------------------------------------------

struct CvReport {
    Vec fold_aucs;
    double mean_auc = 0.0;
    std::vector<std::vector<RocPoint>> fold_rocs;
    // Out-of-fold predictions, indexed like ds.bags (every bag is scored
    // exactly once, by the model of the fold holding it out).
    Vec oof_probs;
    Matrix oof_attention;  // n x m_star
    Matrix oof_features;   // n x p
    std::vector<int> labels;
};

/// 10% of each fold's training split is reserved (stratified) as the
/// validation set driving best-model selection.
CvReport cross_validate(const Dataset& ds, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, std::size_t k, std::uint64_t seed,
                        std::size_t jobs = 1);

// ---- ablation grid and capacity sweep ---------------------------------------

struct AblationRow {
    std::string variant;  // FC | Skip | Sparse | Proposed
    bool use_skip;
    bool use_sparse;
    double mean_auc;
    Vec seed_means;               // one mean AUC per seed
    std::vector<Vec> fold_aucs;   // per seed, the k fold AUCs
};

struct AblationResult {
    std::vector<AblationRow> rows;  // always 4, in FC/Skip/Sparse/Proposed order
    std::vector<std::uint64_t> seeds;

    const AblationRow& row(bool use_skip, bool use_sparse) const;
    void write_csv(std::ostream& sink) const;
};

/// Runs cross_validate for the four (skip, sparse) combinations with fold
/// splits and seeds shared across variants.
AblationResult ablation_run(const Dataset& ds, const ModelConfig& base_cfg,
                            const TrainConfig& train_cfg, const std::vector<std::uint64_t>& seeds,
                            std::size_t k = 10, std::size_t jobs = 1);

struct SweepRow {
    std::size_t m_star;
    double mean_auc;
    Vec fold_aucs;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    void write_csv(std::ostream& sink) const;
};

SweepResult bagsize_sweep(const Dataset& ds, const ModelConfig& base_cfg,
                          const TrainConfig& train_cfg, const std::vector<std::size_t>& m_stars,
                          std::size_t k = 10, std::uint64_t seed = 0, std::size_t jobs = 1);

// ---- exports -----------------------------------------------------------------

/// Writes the n x m_star attention matrix as CSV (rows ordered by descending
/// instance count; masked cells emitted as "NA") plus a parallel 0/1 mask CSV.
void export_attention(const Model& model, const Dataset& ds, std::ostream& attention_sink,
                      std::ostream& mask_sink);
void export_attention(const Model& model, const Dataset& ds, const std::string& attention_path,
                      const std::string& mask_path);

struct FeatureExportOptions {
    bool normalize = false;  // per-column min-max then log(1 + u*(K-1))
    double log_k = 100.0;
};

/// Writes the n x p pooled-feature matrix (classifier input). Constant
/// columns min-max normalize to all zeros.
void export_features(const Model& model, const Dataset& ds, std::ostream& sink,
                     const FeatureExportOptions& opts = {});
void export_features(const Model& model, const Dataset& ds, const std::string& path,
                     const FeatureExportOptions& opts = {});

}  // namespace minnsa
