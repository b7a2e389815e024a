#include "minnsa/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "minnsa/rng.hpp"

namespace minnsa {

namespace {

void check_two_classes(const std::vector<int>& labels) {
    const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (!has_pos || !has_neg) throw Error("need at least one positive and one negative label");
}

}  // namespace

double auc(const Vec& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw Error("auc: size mismatch");
    if (scores.empty()) throw Error("auc: empty input");
    check_two_classes(labels);

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based average
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1) {
                rank_sum_pos += midrank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(const Vec& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw Error("roc_curve: size mismatch");
    if (scores.empty()) throw Error("roc_curve: empty input");
    check_two_classes(labels);

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const double n_neg = static_cast<double>(n) - n_pos;

    std::vector<RocPoint> curve;
    curve.push_back({0.0, 0.0});
    double tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1) tp += 1.0; else fp += 1.0;
        }
        curve.push_back({fp / n_neg, tp / n_pos});
        i = j;
    }
    return curve;
}

double trapezoid_area(const std::vector<RocPoint>& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
    }
    return area;
}

WilcoxonResult wilcoxon_signed_rank(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw Error("wilcoxon_signed_rank: size mismatch");
    std::vector<double> diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    const std::size_t n = diff.size();
    if (n == 0) throw Error("wilcoxon_signed_rank: all differences are zero");

    // midranks of |d|
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return std::abs(diff[x]) < std::abs(diff[y]);
    });
    Vec rank(n, 0.0);
    double tie_term = 0.0;  // sum over tie groups of t^3 - t
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && std::abs(diff[order[j]]) == std::abs(diff[order[i]])) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        for (std::size_t q = i; q < j; ++q) rank[order[q]] = midrank;
        i = j;
    }

    double w_plus = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        if (diff[q] > 0.0) w_plus += rank[q];
    }

    WilcoxonResult res;
    res.statistic = w_plus;
    res.n_used = n;

    if (n <= 25) {
        // Exact conditional null distribution over all 2^n sign assignments,
        // tabulated by dynamic programming on doubled (integer) ranks.
        res.exact = true;
        const std::size_t max_sum = n * (n + 1);  // doubled total
        Vec counts(max_sum + 1, 0.0);
        counts[0] = 1.0;
        for (std::size_t q = 0; q < n; ++q) {
            const auto r2 = static_cast<std::size_t>(std::llround(2.0 * rank[q]));
            for (std::size_t s = max_sum + 1; s-- > r2;) {
                if (counts[s - r2] != 0.0) counts[s] += counts[s - r2];
            }
        }
        const auto w2 = static_cast<std::size_t>(std::llround(2.0 * w_plus));
        const double total = std::pow(2.0, static_cast<double>(n));
        double le = 0.0, ge = 0.0;
        for (std::size_t s = 0; s <= max_sum; ++s) {
            if (s <= w2) le += counts[s];
            if (s >= w2) ge += counts[s];
        }
        res.p_value = std::min(1.0, 2.0 * std::min(le, ge) / total);
    } else {
        res.exact = false;
        const double dn = static_cast<double>(n);
        const double mean = dn * (dn + 1.0) / 4.0;
        const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
        const double z = (w_plus - mean) / std::sqrt(var);
        res.p_value = std::erfc(std::abs(z) / std::sqrt(2.0));
    }
    return res;
}

// ---- cross-validation harness -------------------------------------------------

namespace {

void run_parallel(std::size_t jobs, std::size_t n_tasks, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n_tasks <= 1) {
        for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= n_tasks) return;
            try {
                fn(t);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(jobs, n_tasks); ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

CvReport cross_validate(const Dataset& ds, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, std::size_t k, std::uint64_t seed,
                        std::size_t jobs) {
    const auto folds = stratified_kfold(ds, k, derive_seed(seed, "cv-folds"));

    CvReport report;
    report.fold_aucs.assign(k, 0.0);
    report.fold_rocs.resize(k);
    report.oof_probs.assign(ds.size(), 0.0);
    report.oof_attention = Matrix(ds.size(), model_cfg.m_star);
    report.oof_features = Matrix(ds.size(), model_cfg.p);
    report.labels = ds.labels();

    run_parallel(jobs, k, [&](std::size_t f) {
        const FoldSplit& fold = folds[f];
        const Dataset train_pool = subset(ds, fold.train);
        const auto [train_idx, val_idx] =
            stratified_holdout(train_pool.labels(), 0.1, derive_seed(seed, "cv-val", f));
        const Dataset tr = subset(train_pool, train_idx);
        const Dataset va = subset(train_pool, val_idx);
        const Dataset te = subset(ds, fold.test);

        ModelConfig mcfg = model_cfg;
        mcfg.seed = derive_seed(seed, "cv-init", f);
        TrainConfig tcfg = train_cfg;
        tcfg.seed = derive_seed(seed, "cv-train", f);

        const TrainResult result = train(init_model(mcfg), tr, &va, tcfg);
        const Prediction pred = predict(result.best, te);

        report.fold_aucs[f] = auc(pred.probs, te.labels());
        report.fold_rocs[f] = roc_curve(pred.probs, te.labels());
        for (std::size_t i = 0; i < fold.test.size(); ++i) {
            const std::size_t dst = fold.test[i];
            report.oof_probs[dst] = pred.probs[i];
            std::copy(pred.attention.row(i).begin(), pred.attention.row(i).end(),
                      report.oof_attention.row(dst).begin());
            std::copy(pred.features.row(i).begin(), pred.features.row(i).end(),
                      report.oof_features.row(dst).begin());
        }
    });

    report.mean_auc =
        std::accumulate(report.fold_aucs.begin(), report.fold_aucs.end(), 0.0) /
        static_cast<double>(k);
    return report;
}

// ---- ablation grid and capacity sweep -------------------------------------------

namespace {

struct Variant {
    const char* name;
    bool use_skip;
    bool use_sparse;
};

constexpr Variant kVariants[] = {
    {"FC", false, false},
    {"Skip", true, false},
    {"Sparse", false, true},
    {"Proposed", true, true},
};

}  // namespace

const AblationRow& AblationResult::row(bool use_skip, bool use_sparse) const {
    for (const auto& r : rows) {
        if (r.use_skip == use_skip && r.use_sparse == use_sparse) return r;
    }
    throw Error("AblationResult: variant not found");
}

void AblationResult::write_csv(std::ostream& sink) const {
    sink << "variant,use_skip,use_sparse,mean_auc\n";
    for (const auto& r : rows) {
        sink << r.variant << ',' << (r.use_skip ? 1 : 0) << ',' << (r.use_sparse ? 1 : 0) << ','
             << format_g9(r.mean_auc) << '\n';
    }
}

AblationResult ablation_run(const Dataset& ds, const ModelConfig& base_cfg,
                            const TrainConfig& train_cfg, const std::vector<std::uint64_t>& seeds,
                            std::size_t k, std::size_t jobs) {
    if (seeds.empty()) throw Error("ablation_run: need at least one seed");
    AblationResult result;
    result.seeds = seeds;
    for (const auto& variant : kVariants) {
        AblationRow row;
        row.variant = variant.name;
        row.use_skip = variant.use_skip;
        row.use_sparse = variant.use_sparse;
        row.seed_means.assign(seeds.size(), 0.0);
        row.fold_aucs.resize(seeds.size());
        result.rows.push_back(std::move(row));
    }

    // Cells (variant x seed) share fold splits per seed: cross_validate derives
    // its folds from the seed alone.
    const std::size_t n_cells = 4 * seeds.size();
    run_parallel(jobs, n_cells, [&](std::size_t cell) {
        const std::size_t vi = cell % 4;
        const std::size_t si = cell / 4;
        ModelConfig cfg = base_cfg;
        cfg.use_skip = kVariants[vi].use_skip;
        cfg.use_sparse = kVariants[vi].use_sparse;
        const CvReport rep = cross_validate(ds, cfg, train_cfg, k, seeds[si], 1);
        result.rows[vi].seed_means[si] = rep.mean_auc;
        result.rows[vi].fold_aucs[si] = rep.fold_aucs;
    });

    for (auto& row : result.rows) {
        row.mean_auc = std::accumulate(row.seed_means.begin(), row.seed_means.end(), 0.0) /
                       static_cast<double>(seeds.size());
    }
    return result;
}

void SweepResult::write_csv(std::ostream& sink) const {
    sink << "m_star,mean_auc\n";
    for (const auto& r : rows) {
        sink << r.m_star << ',' << format_g9(r.mean_auc) << '\n';
    }
}

SweepResult bagsize_sweep(const Dataset& ds, const ModelConfig& base_cfg,
                          const TrainConfig& train_cfg, const std::vector<std::size_t>& m_stars,
                          std::size_t k, std::uint64_t seed, std::size_t jobs) {
    if (m_stars.empty()) throw Error("bagsize_sweep: need at least one m_star value");
    SweepResult result;
    result.rows.resize(m_stars.size());
    run_parallel(jobs, m_stars.size(), [&](std::size_t t) {
        ModelConfig cfg = base_cfg;
        cfg.m_star = m_stars[t];
        const CvReport rep = cross_validate(ds, cfg, train_cfg, k, seed, 1);
        result.rows[t] = SweepRow{m_stars[t], rep.mean_auc, rep.fold_aucs};
    });
    return result;
}

// ---- exports ---------------------------------------------------------------------

void export_attention(const Model& model, const Dataset& ds, std::ostream& attention_sink,
                      std::ostream& mask_sink) {
    const Prediction pred = predict(model, ds);
    const std::size_t m_star = model.cfg.m_star;

    // Fig. 4 style ordering: descending instance count, original order on ties.
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ds.bags[a].size() > ds.bags[b].size();
    });

    attention_sink << "bag_id,label,n_instances";
    for (std::size_t j = 0; j < m_star; ++j) attention_sink << ",a" << j;
    attention_sink << '\n';
    mask_sink << "bag_id,label,n_instances";
    for (std::size_t j = 0; j < m_star; ++j) mask_sink << ",m" << j;
    mask_sink << '\n';

    for (std::size_t i : order) {
        const Bag& bag = ds.bags[i];
        const std::size_t kept = std::min(bag.size(), m_star);
        attention_sink << bag.bag_id << ',' << bag.label << ',' << bag.size();
        mask_sink << bag.bag_id << ',' << bag.label << ',' << bag.size();
        for (std::size_t j = 0; j < m_star; ++j) {
            if (j < kept) {
                attention_sink << ',' << format_g9(pred.attention.at(i, j));
                mask_sink << ",1";
            } else {
                attention_sink << ",NA";  // sentinel: padding, not a zero weight
                mask_sink << ",0";
            }
        }
        attention_sink << '\n';
        mask_sink << '\n';
    }
    if (!attention_sink || !mask_sink) throw Error("export_attention: write failed");
}

void export_attention(const Model& model, const Dataset& ds, const std::string& attention_path,
                      const std::string& mask_path) {
    std::ofstream att(attention_path, std::ios::binary);
    if (!att) throw Error("cannot open '" + attention_path + "' for writing");
    std::ofstream msk(mask_path, std::ios::binary);
    if (!msk) throw Error("cannot open '" + mask_path + "' for writing");
    export_attention(model, ds, att, msk);
}

void export_features(const Model& model, const Dataset& ds, std::ostream& sink,
                     const FeatureExportOptions& opts) {
    const Prediction pred = predict(model, ds);
    const std::size_t p = model.cfg.p;

    Matrix values = pred.features;
    if (opts.normalize) {
        if (!(opts.log_k > 1.0)) throw Error("export_features: log_k must be > 1");
        for (std::size_t k = 0; k < p; ++k) {
            double lo = values.at(0, k), hi = values.at(0, k);
            for (std::size_t i = 1; i < values.rows; ++i) {
                lo = std::min(lo, values.at(i, k));
                hi = std::max(hi, values.at(i, k));
            }
            const double range = hi - lo;
            for (std::size_t i = 0; i < values.rows; ++i) {
                // Degenerate-range rule: constant columns map to all zeros.
                const double u = range > 0.0 ? (values.at(i, k) - lo) / range : 0.0;
                values.at(i, k) = std::log(1.0 + u * (opts.log_k - 1.0));
            }
        }
        sink << "# transform: minmax per column, then log(1 + u*(K-1)) with K="
             << format_g9(opts.log_k) << '\n';
    } else {
        sink << "# transform: none\n";
    }

    sink << "bag_id,label";
    for (std::size_t k = 0; k < p; ++k) sink << ",g" << k;
    sink << '\n';
    for (std::size_t i = 0; i < values.rows; ++i) {
        sink << ds.bags[i].bag_id << ',' << ds.bags[i].label;
        for (std::size_t k = 0; k < p; ++k) sink << ',' << format_g9(values.at(i, k));
        sink << '\n';
    }
    if (!sink) throw Error("export_features: write failed");
}

void export_features(const Model& model, const Dataset& ds, const std::string& path,
                     const FeatureExportOptions& opts) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    export_features(model, ds, out, opts);
}

}  // namespace minnsa
