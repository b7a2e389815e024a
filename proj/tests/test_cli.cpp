#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "minnsa/common.hpp"
#include "test_helpers.hpp"

// End-to-end checks of the command-line tool. The binary path arrives via the
// MINNSA_CLI environment variable (set by ctest).

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* env = std::getenv("MINNSA_CLI");
    REQUIRE_MESSAGE(env != nullptr, "MINNSA_CLI must point at the minnsa binary");
    return env;
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "minnsa_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("cli: synth is deterministic and validates flags") {
    const fs::path dir = fresh_dir("synth");
    const std::string base =
        " synth --n 60 --pos-frac 0.5 --p 4 --seed 11 --out-dir ";
    REQUIRE(run(base + (dir / "a").string()) == 0);
    REQUIRE(run(base + (dir / "b").string()) == 0);
    CHECK(testutil::slurp((dir / "a/synthetic.csv").string()) ==
          testutil::slurp((dir / "b/synthetic.csv").string()));

    CHECK(run(" synth --pos-frac 1.5 --out-dir " + (dir / "bad").string()) == 2);
    CHECK(run(" definitely-not-a-subcommand") == 2);
    CHECK(run(" train --out-dir " + (dir / "missing").string()) == 2);  // no --data
}

TEST_CASE("cli: train then predict reproduces the recorded best metric") {
    const fs::path dir = fresh_dir("train");
    REQUIRE(run(" synth --n 120 --pos-frac 0.5 --p 6 --signal-shift 5 --witness-rate 1 "
                "--seed 5 --out-dir " + dir.string()) == 0);

    const std::string data = (dir / "synthetic.csv").string();
    REQUIRE(run(" train --data " + data + " --epochs 12 --seed 3 --out-dir " +
                (dir / "fit").string()) == 0);
    REQUIRE(fs::exists(dir / "fit/model.ckpt"));
    REQUIRE(fs::exists(dir / "fit/history.csv"));
    REQUIRE(fs::exists(dir / "fit/train_manifest.json"));

    // best val metric, recomputed by predict on the persisted val split
    const auto history = testutil::read_csv((dir / "fit/history.csv").string());
    double best = 0.0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        best = std::max(best, std::stod(history[i][2]));
    }
    REQUIRE(run(" predict --model " + (dir / "fit/model.ckpt").string() + " --data " +
                (dir / "fit/val_split.csv").string() + " --out-dir " +
                (dir / "pred").string()) == 0);
    const auto preds = testutil::read_csv((dir / "pred/predictions.csv").string());

    minnsa::Vec scores;
    std::vector<int> labels;
    for (std::size_t i = 1; i < preds.size(); ++i) {
        labels.push_back(std::stoi(preds[i][1]));
        scores.push_back(std::stod(preds[i][2]));
    }
    // recompute the AUC from the written file; must equal the recorded best
    CHECK(testutil::auc_pair_counting(scores, labels) == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("cli: ablation flag mapping and manifest replay") {
    const fs::path dir = fresh_dir("replay");
    REQUIRE(run(" synth --n 50 --pos-frac 0.5 --p 4 --signal-shift 4 --seed 9 --out-dir " +
                dir.string()) == 0);
    const std::string data = (dir / "synthetic.csv").string();

    // FC variant via --no-skip --dense-attention
    REQUIRE(run(" train --data " + data +
                " --epochs 3 --no-skip --dense-attention --seed 2 --out-dir " +
                (dir / "fc").string()) == 0);
    const std::string manifest = testutil::slurp((dir / "fc/train_manifest.json").string());
    CHECK(manifest.find("\"skip\": \"0\"") != std::string::npos);
    CHECK(manifest.find("\"sparse_attention\": \"0\"") != std::string::npos);

    // replay from the manifest into a new directory: byte-identical outputs
    REQUIRE(run(" train --from-manifest " + (dir / "fc/train_manifest.json").string() +
                " --out-dir " + (dir / "fc2").string()) == 0);
    CHECK(testutil::slurp((dir / "fc/history.csv").string()) ==
          testutil::slurp((dir / "fc2/history.csv").string()));
    CHECK(testutil::slurp((dir / "fc/model.ckpt").string()) ==
          testutil::slurp((dir / "fc2/model.ckpt").string()));
}

TEST_CASE("cli: cv emits fold table and summary") {
    const fs::path dir = fresh_dir("cv");
    REQUIRE(run(" synth --n 60 --pos-frac 0.5 --p 4 --signal-shift 5 --witness-rate 1 "
                "--seed 13 --out-dir " + dir.string()) == 0);
    REQUIRE(run(" cv --data " + (dir / "synthetic.csv").string() +
                " --k 5 --epochs 5 --seed 1 --jobs 2 --out-dir " + (dir / "cv").string()) == 0);

    const auto folds = testutil::read_csv((dir / "cv/folds.csv").string());
    REQUIRE(folds.size() == 6);  // header + 5 folds
    CHECK(folds[0][0] == "fold");
    for (std::size_t i = 1; i < folds.size(); ++i) {
        const double v = std::stod(folds[i][1]);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(fs::exists(dir / "cv/roc.csv"));
    CHECK(fs::exists(dir / "cv/cv_summary.json"));
    CHECK(fs::exists(dir / "cv/cv_manifest.json"));
}
