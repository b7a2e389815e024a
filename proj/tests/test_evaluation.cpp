#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "minnsa/evaluation.hpp"
#include "test_helpers.hpp"

using namespace minnsa;
namespace fs = std::filesystem;

TEST_CASE("auc known values") {
    CHECK(auc({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}) == 1.0);
    CHECK(auc({0.9, 0.3, 0.8, 0.2}, {1, 1, 0, 0}) == 0.75);
    CHECK(auc({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0}) == 0.5);  // all ties
    CHECK(auc({0.2, 0.3, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
    CHECK_THROWS_AS(auc({0.1, 0.2}, {1, 1}), Error);
    CHECK_THROWS_AS(auc({0.1, 0.2}, {0, 0}), Error);
}

TEST_CASE("auc equals brute-force pair counting exactly") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> n_dist(2, 50);
    std::uniform_int_distribution<int> grid(0, 9);
    for (int t = 0; t < 500; ++t) {
        const std::size_t n = n_dist(rng);
        Vec scores(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = grid(rng) / 10.0;  // coarse grid forces ties
            labels[i] = i % 2 == 0 ? 1 : 0;
        }
        CHECK(auc(scores, labels) == testutil::auc_pair_counting(scores, labels));
    }
}

TEST_CASE("auc invariances") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        Vec scores(20);
        std::vector<int> labels(20);
        for (std::size_t i = 0; i < 20; ++i) {
            scores[i] = g(rng);
            labels[i] = i < 8 ? 1 : 0;
        }
        const double base = auc(scores, labels);

        // strictly increasing transform leaves auc unchanged
        Vec warped(20);
        for (std::size_t i = 0; i < 20; ++i) warped[i] = std::exp(0.7 * scores[i]) + 3.0;
        CHECK(auc(warped, labels) == doctest::Approx(base).epsilon(1e-15));

        // negation flips it (tie-free with probability 1)
        Vec neg(20);
        for (std::size_t i = 0; i < 20; ++i) neg[i] = -scores[i];
        CHECK(auc(neg, labels) == doctest::Approx(1.0 - base).epsilon(1e-12));
    }
}

TEST_CASE("roc_curve staircase and trapezoid identity") {
    const std::vector<RocPoint> perfect = roc_curve({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0});
    bool hits_corner = false;
    for (const auto& pt : perfect) {
        hits_corner = hits_corner || (pt.fpr == 0.0 && pt.tpr == 1.0);
    }
    CHECK(hits_corner);
    CHECK(perfect.front().fpr == 0.0);
    CHECK(perfect.front().tpr == 0.0);
    CHECK(perfect.back().fpr == 1.0);
    CHECK(perfect.back().tpr == 1.0);

    const std::vector<RocPoint> reversed = roc_curve({0.2, 0.3, 0.8, 0.9}, {1, 1, 0, 0});
    CHECK(trapezoid_area(reversed) == 0.0);

    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> grid(0, 6);
    for (int t = 0; t < 300; ++t) {
        Vec scores(24);
        std::vector<int> labels(24);
        for (std::size_t i = 0; i < 24; ++i) {
            scores[i] = grid(rng) / 6.0;
            labels[i] = i % 3 == 0 ? 1 : 0;
        }
        const auto curve = roc_curve(scores, labels);
        // monotone staircase
        for (std::size_t i = 1; i < curve.size(); ++i) {
            CHECK(curve[i].fpr >= curve[i - 1].fpr);
            CHECK(curve[i].tpr >= curve[i - 1].tpr);
        }
        CHECK(std::abs(trapezoid_area(curve) - auc(scores, labels)) < 1e-12);
    }
}

TEST_CASE("wilcoxon known cases") {
    SUBCASE("all-positive differences, n=10") {
        Vec a(10), b(10);
        for (std::size_t i = 0; i < 10; ++i) {
            b[i] = static_cast<double>(i);
            a[i] = b[i] + 1.0;
        }
        const auto res = wilcoxon_signed_rank(a, b);
        CHECK(res.exact);
        CHECK(res.statistic == 55.0);
        CHECK(res.p_value == doctest::Approx(2.0 / 1024.0).epsilon(1e-12));
    }
    SUBCASE("symmetric +d/-d differences sit at the distribution center") {
        Vec a{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
        Vec b{0.0, 3.0, 2.0, 5.0, 4.0, 7.0};  // diffs +1,-1,+1,-1,+1,-1
        const auto res = wilcoxon_signed_rank(a, b);
        CHECK(res.p_value > 0.9);
    }
    SUBCASE("all differences zero is an error") {
        const Vec a{1.0, 2.0, 3.0};
        CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), Error);
    }
    SUBCASE("zero differences are dropped") {
        const Vec a{1.0, 5.0, 2.0, 9.0};
        const Vec b{1.0, 4.0, 2.0, 7.0};
        const auto res = wilcoxon_signed_rank(a, b);
        CHECK(res.n_used == 2);
    }
}

TEST_CASE("wilcoxon matches exhaustive enumeration (tie-free and tied)") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g(0.2, 1.0);
    std::uniform_int_distribution<std::size_t> n_dist(3, 10);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = n_dist(rng);
        Vec a(n), b(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) a[i] = g(rng);
        const auto got = wilcoxon_signed_rank(a, b);
        const auto want = testutil::wilcoxon_enumerate(a, b);
        CHECK(got.statistic == doctest::Approx(want.statistic).epsilon(1e-12));
        CHECK(got.p_value == doctest::Approx(want.p_value).epsilon(1e-12));
    }
    // tied magnitudes exercise the midrank path
    std::uniform_int_distribution<int> coarse(-3, 3);
    int done = 0;
    while (done < 50) {
        Vec a(8), b(8, 0.0);
        bool any = false;
        for (std::size_t i = 0; i < 8; ++i) {
            a[i] = static_cast<double>(coarse(rng));
            any = any || a[i] != 0.0;
        }
        if (!any) continue;
        ++done;
        const auto got = wilcoxon_signed_rank(a, b);
        const auto want = testutil::wilcoxon_enumerate(a, b);
        CHECK(got.statistic == doctest::Approx(want.statistic).epsilon(1e-12));
        CHECK(got.p_value == doctest::Approx(want.p_value).epsilon(1e-12));
    }
}

TEST_CASE("wilcoxon normal approximation is sane for large n") {
    Vec a(40), b(40);
    std::mt19937_64 rng(29);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < 40; ++i) {
        b[i] = g(rng);
        a[i] = b[i] + 0.02 * g(rng);
    }
    const auto res = wilcoxon_signed_rank(a, b);
    CHECK_FALSE(res.exact);
    CHECK(res.p_value > 0.0);
    CHECK(res.p_value <= 1.0);

    // a strong one-sided shift drives the p-value down
    for (std::size_t i = 0; i < 40; ++i) a[i] = b[i] + 1.0;
    const auto shifted = wilcoxon_signed_rank(a, b);
    CHECK(shifted.p_value < 1e-6);
}

namespace {

Dataset quick_synth(std::uint64_t seed, double signal_shift, std::size_t n = 80,
                    double witness = 1.0) {
    SynthConfig cfg;
    cfg.n_bags = n;
    cfg.positive_fraction = 0.5;
    cfg.p = 5;
    cfg.witness_rate = witness;
    cfg.signal_shift = signal_shift;
    cfg.bag_size_mean = 3.0;
    cfg.bag_size_max = 8;
    cfg.seed = seed;
    return synth_generate(cfg);
}

ModelConfig quick_model(const Dataset& ds) {
    ModelConfig cfg;
    cfg.p = ds.p;
    cfg.m_star = ds.max_bag_size();
    cfg.n_blocks = 1;
    cfg.attn_hidden = 8;
    return cfg;
}

TrainConfig quick_train() {
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 16;
    return cfg;
}

}  // namespace

TEST_CASE("cross_validate contract: fold count, ranges, reproducibility") {
    const Dataset ds = quick_synth(41, 5.0);
    const CvReport a = cross_validate(ds, quick_model(ds), quick_train(), 5, 9);
    REQUIRE(a.fold_aucs.size() == 5);
    for (double v : a.fold_aucs) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(a.mean_auc == doctest::Approx((a.fold_aucs[0] + a.fold_aucs[1] + a.fold_aucs[2] +
                                         a.fold_aucs[3] + a.fold_aucs[4]) / 5.0)
                            .epsilon(1e-12));

    const CvReport b = cross_validate(ds, quick_model(ds), quick_train(), 5, 9);
    CHECK(a.fold_aucs == b.fold_aucs);
    CHECK(a.oof_probs == b.oof_probs);

    // parallel execution gives the same result
    const CvReport c = cross_validate(ds, quick_model(ds), quick_train(), 5, 9, 4);
    CHECK(a.fold_aucs == c.fold_aucs);
    CHECK(a.oof_probs == c.oof_probs);
}

TEST_CASE("cross_validate learns separable data and stays at chance on null data") {
    const Dataset separable = quick_synth(43, 5.0, 120);
    const CvReport good = cross_validate(separable, quick_model(separable), quick_train(), 5, 2);
    CHECK(good.mean_auc > 0.9);

    const Dataset null_ds = quick_synth(44, 0.0, 120);
    const CvReport chance = cross_validate(null_ds, quick_model(null_ds), quick_train(), 5, 2);
    CHECK(chance.mean_auc > 0.3);
    CHECK(chance.mean_auc < 0.7);
}

TEST_CASE("ablation_run emits the four-variant grid with shared folds") {
    const Dataset ds = quick_synth(47, 2.0, 80, 0.3);
    const AblationResult result = ablation_run(ds, quick_model(ds), quick_train(), {1, 2}, 4, 2);
    REQUIRE(result.rows.size() == 4);
    CHECK(result.rows[0].variant == "FC");
    CHECK_FALSE(result.rows[0].use_skip);
    CHECK_FALSE(result.rows[0].use_sparse);
    CHECK(result.rows[1].variant == "Skip");
    CHECK(result.rows[1].use_skip);
    CHECK_FALSE(result.rows[1].use_sparse);
    CHECK(result.rows[2].variant == "Sparse");
    CHECK_FALSE(result.rows[2].use_skip);
    CHECK(result.rows[2].use_sparse);
    CHECK(result.rows[3].variant == "Proposed");
    CHECK(result.rows[3].use_skip);
    CHECK(result.rows[3].use_sparse);
    for (const auto& row : result.rows) {
        CHECK(row.seed_means.size() == 2);
        CHECK(row.fold_aucs[0].size() == 4);
        CHECK(row.mean_auc ==
              doctest::Approx(0.5 * (row.seed_means[0] + row.seed_means[1])).epsilon(1e-12));
    }

    std::ostringstream csv;
    result.write_csv(csv);
    CHECK(csv.str().find("variant,use_skip,use_sparse,mean_auc") == 0);
    CHECK(csv.str().find("Proposed,1,1,") != std::string::npos);
}

TEST_CASE("bagsize_sweep emits one row per capacity and tolerates truncation") {
    const Dataset ds = quick_synth(53, 5.0, 60);
    const SweepResult result =
        bagsize_sweep(ds, quick_model(ds), quick_train(), {1, 4, 8}, 4, 3, 3);
    REQUIRE(result.rows.size() == 3);
    CHECK(result.rows[0].m_star == 1);  // smaller than every bag still runs
    CHECK(result.rows[1].m_star == 4);
    CHECK(result.rows[2].m_star == 8);
    for (const auto& row : result.rows) {
        CHECK(row.fold_aucs.size() == 4);
        CHECK(row.mean_auc >= 0.0);
        CHECK(row.mean_auc <= 1.0);
    }
}

TEST_CASE("export_attention: simplex rows, NA sentinels, ordering, sparsity contrast") {
    const Dataset ds = quick_synth(59, 4.0, 50);
    ModelConfig sparse_cfg = quick_model(ds);
    sparse_cfg.seed = 5;
    ModelConfig dense_cfg = sparse_cfg;
    dense_cfg.use_sparse = false;

    TrainConfig tcfg = quick_train();
    tcfg.selection = SelectionMetric::kTrainLoss;
    const Model sparse_model = train(init_model(sparse_cfg), ds, nullptr, tcfg).best;
    const Model dense_model = train(init_model(dense_cfg), ds, nullptr, tcfg).best;

    const fs::path dir = fs::temp_directory_path() / "minnsa_test_attention";
    fs::create_directories(dir);
    export_attention(sparse_model, ds, (dir / "att_sparse.csv").string(),
                     (dir / "mask_sparse.csv").string());
    export_attention(dense_model, ds, (dir / "att_dense.csv").string(),
                     (dir / "mask_dense.csv").string());

    const auto rows = testutil::read_csv((dir / "att_sparse.csv").string());
    const auto mask_rows = testutil::read_csv((dir / "mask_sparse.csv").string());
    REQUIRE(rows.size() == ds.size() + 1);  // header + bags
    REQUIRE(mask_rows.size() == rows.size());

    std::size_t prev_count = std::numeric_limits<std::size_t>::max();
    std::size_t sparse_zeros = 0, sentinel_cells = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::size_t count = std::stoul(row[2]);
        CHECK(count <= prev_count);  // descending instance count
        prev_count = count;
        double sum = 0.0;
        for (std::size_t c = 3; c < row.size(); ++c) {
            if (row[c] == "NA") {
                ++sentinel_cells;
                CHECK(mask_rows[r][c] == "0");
            } else {
                const double w = std::stod(row[c]);
                sum += w;
                sparse_zeros += w == 0.0 ? 1 : 0;
                CHECK(mask_rows[r][c] == "1");
            }
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(sentinel_cells > 0);

    std::size_t dense_zeros = 0;
    const auto dense_rows = testutil::read_csv((dir / "att_dense.csv").string());
    for (std::size_t r = 1; r < dense_rows.size(); ++r) {
        for (std::size_t c = 3; c < dense_rows[r].size(); ++c) {
            if (dense_rows[r][c] != "NA" && std::stod(dense_rows[r][c]) == 0.0) ++dense_zeros;
        }
    }
    CHECK(sparse_zeros > dense_zeros);  // operationalized Fig. 4 contrast
    CHECK(dense_zeros == 0);
}

TEST_CASE("export_features: raw round trip, normalization range, degenerate columns") {
    const Dataset ds = quick_synth(61, 3.0, 30);
    ModelConfig mcfg = quick_model(ds);
    const Model model = init_model(mcfg);

    const fs::path dir = fs::temp_directory_path() / "minnsa_test_features";
    fs::create_directories(dir);

    export_features(model, ds, (dir / "raw.csv").string());
    const Prediction pred = predict(model, ds);
    const auto raw_rows = testutil::read_csv((dir / "raw.csv").string());
    REQUIRE(raw_rows.size() == ds.size() + 1);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t k = 0; k < ds.p; ++k) {
            const double written = std::stod(raw_rows[i + 1][k + 2]);
            // 9 significant digits survive the round trip
            CHECK(written == doctest::Approx(pred.features.at(i, k)).epsilon(1e-8));
            CHECK(format_g9(written) == format_g9(std::stod(format_g9(written))));
        }
    }

    FeatureExportOptions opts;
    opts.normalize = true;
    opts.log_k = 100.0;
    export_features(model, ds, (dir / "norm.csv").string(), opts);
    const auto norm_rows = testutil::read_csv((dir / "norm.csv").string());
    const double cap = std::log(100.0);
    for (std::size_t i = 1; i < norm_rows.size(); ++i) {
        for (std::size_t k = 2; k < norm_rows[i].size(); ++k) {
            const double v = std::stod(norm_rows[i][k]);
            CHECK(v >= 0.0);
            CHECK(v <= cap + 1e-6);  // slack for the 9-digit text round trip
        }
    }
    // the transform comment is part of the header
    CHECK(testutil::slurp((dir / "norm.csv").string()).find("# transform: minmax") == 0);

    // constant column maps to zeros under the degenerate-range rule
    Model constant_model = model;
    constant_model.bn.gamma.assign(ds.p, 0.0);  // features collapse to beta
    export_features(constant_model, ds, (dir / "const.csv").string(), opts);
    const auto const_rows = testutil::read_csv((dir / "const.csv").string());
    for (std::size_t i = 1; i < const_rows.size(); ++i) {
        for (std::size_t k = 2; k < const_rows[i].size(); ++k) {
            CHECK(std::stod(const_rows[i][k]) == 0.0);
        }
    }
}
