// minnsa: multiple-instance learning with sparse attention pooling.
// Subcommands: synth, train, predict, cv, ablation, sweep, export-attention,
// export-features. Every run writes a manifest with all flags materialized;
// re-running with --from-manifest reproduces the outputs byte for byte.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "minnsa/checkpoint.hpp"
#include "minnsa/evaluation.hpp"
#include "minnsa/manifest.hpp"
#include "minnsa/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace minnsa;

namespace {

/// Missing/conflicting flags detected after manifest resolution; exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_value(const std::string& value, const std::string& flag) {
    if (value.empty()) throw UsageError("missing required option " + flag);
}

// ---- option/manifest binding -------------------------------------------------

std::string to_text(const std::string& v) { return v; }
std::string to_text(bool v) { return v ? "1" : "0"; }
std::string to_text(double v) { return format_g9(v); }
std::string to_text(std::uint64_t v) { return std::to_string(v); }
template <typename T>
std::string to_text(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += to_text(v[i]);
    }
    return out;
}

void from_text(const std::string& s, std::string& v) { v = s; }
void from_text(const std::string& s, bool& v) { v = (s == "1" || s == "true"); }
void from_text(const std::string& s, double& v) { v = std::stod(s); }
void from_text(const std::string& s, std::uint64_t& v) { v = std::stoull(s); }
template <typename T>
void from_text(const std::string& s, std::vector<T>& v) {
    v.clear();
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        T x;
        from_text(tok, x);
        v.push_back(x);
    }
}

/// Ties CLI options to manifest keys so that resolved configs can be saved and
/// replayed. Precedence: explicit flag > manifest/config file > default.
class ArgBinder {
public:
    explicit ArgBinder(CLI::App* app) : app_(app) {
        app_->add_option("--from-manifest,--config", manifest_path_,
                         "Load flag defaults from a run manifest or config JSON");
    }

    template <typename T>
    CLI::Option* bind(const std::string& flag, T& value, const std::string& desc) {
        auto* opt = app_->add_option(flag, value, desc)->capture_default_str();
        entries_.push_back({key_of(flag), opt, [&value] { return to_text(value); },
                            [&value](const std::string& s) { from_text(s, value); }});
        return opt;
    }

    CLI::Option* bind_flag(const std::string& flag, bool& value, const std::string& desc) {
        auto* opt = app_->add_flag(flag, value, desc);
        entries_.push_back({key_of(flag), opt, [&value] { return to_text(value); },
                            [&value](const std::string& s) { from_text(s, value); }});
        return opt;
    }

    /// Applies manifest values to options not given on the command line.
    void resolve() {
        if (manifest_path_.empty()) return;
        std::map<std::string, std::string> cfg;
        std::ifstream in(manifest_path_, std::ios::binary);
        if (!in) throw Error("cannot open '" + manifest_path_ + "' for reading");
        std::stringstream buf;
        buf << in.rdbuf();
        json j = json::parse(buf.str());
        if (j.contains("config") && j.contains("subcommand")) {
            const auto sub = j.at("subcommand").get<std::string>();
            if (sub != app_->get_name()) {
                throw Error("manifest subcommand '" + sub + "' does not match '" +
                            app_->get_name() + "'");
            }
            cfg = j.at("config").get<std::map<std::string, std::string>>();
        } else {
            cfg = j.get<std::map<std::string, std::string>>();
        }
        for (auto& e : entries_) {
            if (e.opt->count() == 0) {
                auto it = cfg.find(e.key);
                if (it != cfg.end()) e.set(it->second);
            }
        }
    }

    std::map<std::string, std::string> snapshot() const {
        std::map<std::string, std::string> out;
        for (const auto& e : entries_) out[e.key] = e.get();
        return out;
    }

private:
    struct Entry {
        std::string key;
        CLI::Option* opt;
        std::function<std::string()> get;
        std::function<void(const std::string&)> set;
    };

    static std::string key_of(const std::string& flag) {
        // first long name, dashes to underscores: "--batch-size" -> "batch_size"
        std::string name = flag.substr(0, flag.find(','));
        while (!name.empty() && name.front() == '-') name.erase(name.begin());
        for (char& c : name) {
            if (c == '-') c = '_';
        }
        return name;
    }

    CLI::App* app_;
    std::string manifest_path_;
    std::vector<Entry> entries_;
};

std::string default_out_dir() {
    if (const char* env = std::getenv("MINNSA_OUT_DIR")) return env;
    return ".";
}

fs::path ensure_out_dir(const std::string& dir) {
    fs::path p(dir);
    fs::create_directories(p);
    return p;
}

void write_manifest(const std::string& subcommand, std::uint64_t seed, const ArgBinder& binder,
                    const std::map<std::string, std::string>& inputs,
                    const std::map<std::string, std::string>& outputs, const fs::path& out_dir) {
    RunManifest m;
    m.tool_version = kVersionDescribe;
    m.subcommand = subcommand;
    m.seed = seed;
    m.config = binder.snapshot();
    m.inputs = inputs;
    m.outputs = outputs;
    m.save((out_dir / (subcommand + "_manifest.json")).string());
}

void write_summary(const fs::path& path, const json& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << body.dump(2) << '\n';
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// ---- shared flag groups --------------------------------------------------------

struct ModelFlags {
    std::size_t m_star = 0;  // 0 = auto: largest bag size in the data
    std::size_t n_blocks = 2;
    std::size_t attn_hidden = 64;
    double dropout = 0.3;
    bool use_skip = true;
    bool use_sparse = true;

    void bind(ArgBinder& b) {
        b.bind("--m-star", m_star, "Instance capacity m* (0 = largest bag size in the data)");
        b.bind("--blocks", n_blocks, "Number of residual blocks")->check(CLI::PositiveNumber);
        b.bind("--attn-hidden", attn_hidden, "Attention head hidden width")
            ->check(CLI::PositiveNumber);
        b.bind("--dropout", dropout, "Dropout rate")->check(CLI::Range(0.0, 0.999));
        b.bind_flag("--skip,!--no-skip", use_skip, "Residual skip connections (default on)");
        b.bind_flag("--sparse-attention,!--dense-attention", use_sparse,
                    "Sparsemax attention; --dense-attention selects softmax");
    }

    ModelConfig resolve(const Dataset& ds, std::uint64_t seed) const {
        ModelConfig cfg;
        cfg.p = ds.p;
        cfg.m_star = m_star == 0 ? ds.max_bag_size() : m_star;
        cfg.n_blocks = n_blocks;
        cfg.attn_hidden = attn_hidden;
        cfg.dropout_rate = dropout;
        cfg.use_skip = use_skip;
        cfg.use_sparse = use_sparse;
        cfg.seed = derive_seed(seed, "model-init");
        cfg.validate();
        return cfg;
    }
};

struct TrainFlags {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::string selection = "val_auc";

    void bind(ArgBinder& b) {
        b.bind("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
        b.bind("--batch-size", batch_size, "Mini-batch size")->check(CLI::Range(2, 1 << 20));
        b.bind("--lr", lr, "Learning rate")->check(CLI::NonNegativeNumber);
        b.bind("--beta1", beta1, "First-moment decay");
        b.bind("--beta2", beta2, "Second-moment decay");
        b.bind("--eps", eps, "Optimizer epsilon");
        b.bind("--selection", selection, "Best-model criterion: val_auc or train_loss")
            ->check(CLI::IsMember({"val_auc", "train_loss"}));
    }

    TrainConfig resolve(std::uint64_t seed) const {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.learning_rate = lr;
        cfg.beta1 = beta1;
        cfg.beta2 = beta2;
        cfg.eps = eps;
        cfg.selection =
            selection == "val_auc" ? SelectionMetric::kValAuc : SelectionMetric::kTrainLoss;
        cfg.seed = derive_seed(seed, "train");
        cfg.validate();
        if (lr == 0.0) {
            std::cerr << "warning: learning rate is 0; parameters will not change\n";
        }
        return cfg;
    }
};

// ---- subcommands -----------------------------------------------------------------

struct SynthCmd {
    std::uint64_t seed = 0;
    std::string out_dir = default_out_dir();
    std::string out_name = "synthetic.csv";
    SynthConfig cfg;

    void run(const ArgBinder& binder) const {
        SynthConfig c = cfg;
        c.seed = derive_seed(seed, "synth");
        const Dataset ds = synth_generate(c);
        const fs::path dir = ensure_out_dir(out_dir);
        const fs::path out_path = dir / out_name;
        write_bag_file(ds, out_path.string());

        std::size_t n_pos = 0;
        std::vector<std::size_t> sizes;
        for (const auto& bag : ds.bags) {
            n_pos += bag.label;
            sizes.push_back(bag.size());
        }
        std::sort(sizes.begin(), sizes.end());
        const double mean = std::accumulate(sizes.begin(), sizes.end(), 0.0) /
                            static_cast<double>(sizes.size());
        std::cout << "wrote " << out_path.string() << ": " << ds.size() << " bags (" << n_pos
                  << " tumor / " << ds.size() - n_pos << " normal), p=" << ds.p << "\n";
        std::cout << "bag sizes: min=" << sizes.front() << " median=" << sizes[sizes.size() / 2]
                  << " mean=" << format_g9(mean) << " max=" << sizes.back() << "\n";
        std::size_t small = 0;
        for (std::size_t s : sizes) small += s < 5 ? 1 : 0;
        std::cout << "  " << small << " bags with fewer than 5 instances, " << sizes.size() - small
                  << " with 5 or more\n";

        write_manifest("synth", seed, binder, {}, {{"dataset", out_path.string()}}, dir);
    }
};

struct TrainCmd {
    std::string data_path;
    std::uint64_t seed = 0;
    std::string out_dir = default_out_dir();
    double val_frac = 0.1;
    ModelFlags model;
    TrainFlags trainer;

    void run(const ArgBinder& binder) {
        require_value(data_path, "--data");
        const Dataset ds = read_bag_file(data_path);
        const ModelConfig mcfg = model.resolve(ds, seed);
        model.m_star = mcfg.m_star;  // materialize the auto value in the manifest
        const TrainConfig tcfg = trainer.resolve(seed);

        Dataset tr = ds;
        Dataset va;
        const fs::path dir = ensure_out_dir(out_dir);
        std::map<std::string, std::string> outputs;

        if (tcfg.selection == SelectionMetric::kValAuc) {
            const auto [train_idx, val_idx] =
                stratified_holdout(ds.labels(), val_frac, derive_seed(seed, "val-split"));
            tr = subset(ds, train_idx);
            va = subset(ds, val_idx);
            write_bag_file(tr, (dir / "train_split.csv").string());
            write_bag_file(va, (dir / "val_split.csv").string());
            outputs["train_split"] = (dir / "train_split.csv").string();
            outputs["val_split"] = (dir / "val_split.csv").string();
        }

        const TrainResult result =
            train(init_model(mcfg), tr, va.size() ? &va : nullptr, tcfg);

        const fs::path ckpt = dir / "model.ckpt";
        save_model(result.best, ckpt.string());
        outputs["checkpoint"] = ckpt.string();

        const fs::path hist = dir / "history.csv";
        std::ofstream hout(hist, std::ios::binary);
        result.history.write_csv(hout);
        outputs["history"] = hist.string();

        std::cout << "best epoch " << result.history.best_epoch << " with "
                  << (tcfg.selection == SelectionMetric::kValAuc ? "val_auc" : "train_loss")
                  << " = " << format_g9(result.history.metric[result.history.best_epoch])
                  << "\n";
        write_manifest("train", seed, binder, {{"dataset", data_path}}, outputs, dir);
    }
};

struct PredictCmd {
    std::string model_path;
    std::string data_path;
    std::string out_dir = default_out_dir();

    void run(const ArgBinder& binder) const {
        require_value(model_path, "--model");
        require_value(data_path, "--data");
        const Model model = load_model(model_path);
        const Dataset ds = read_bag_file(data_path);
        const Prediction pred = predict(model, ds);

        const fs::path dir = ensure_out_dir(out_dir);
        const fs::path out_path = dir / "predictions.csv";
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw Error("cannot open '" + out_path.string() + "' for writing");
        out << "bag_id,label,prob\n";
        for (std::size_t i = 0; i < ds.size(); ++i) {
            out << ds.bags[i].bag_id << ',' << ds.bags[i].label << ','
                << format_g9(pred.probs[i]) << '\n';
        }

        const auto labels = ds.labels();
        const bool two_classes =
            std::count(labels.begin(), labels.end(), 1) > 0 &&
            std::count(labels.begin(), labels.end(), 0) > 0;
        if (two_classes) {
            std::cout << "auc = " << format_g9(auc(pred.probs, labels)) << "\n";
        } else {
            std::cout << "auc = n/a (single-class labels)\n";
        }
        write_manifest("predict", 0, binder, {{"model", model_path}, {"dataset", data_path}},
                       {{"predictions", out_path.string()}}, dir);
    }
};

struct CvCmd {
    std::string data_path;
    std::size_t k = 10;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string out_dir = default_out_dir();
    ModelFlags model;
    TrainFlags trainer;

    void run(const ArgBinder& binder) {
        Timer timer;
        require_value(data_path, "--data");
        const Dataset ds = read_bag_file(data_path);
        const ModelConfig mcfg = model.resolve(ds, seed);
        model.m_star = mcfg.m_star;
        const TrainConfig tcfg = trainer.resolve(seed);
        const CvReport report = cross_validate(ds, mcfg, tcfg, k, seed, jobs);

        const fs::path dir = ensure_out_dir(out_dir);
        {
            std::ofstream out(dir / "folds.csv", std::ios::binary);
            out << "fold,auc\n";
            for (std::size_t f = 0; f < report.fold_aucs.size(); ++f) {
                out << f << ',' << format_g9(report.fold_aucs[f]) << '\n';
            }
        }
        {
            std::ofstream out(dir / "roc.csv", std::ios::binary);
            out << "fold,fpr,tpr\n";
            for (std::size_t f = 0; f < report.fold_rocs.size(); ++f) {
                for (const auto& pt : report.fold_rocs[f]) {
                    out << f << ',' << format_g9(pt.fpr) << ',' << format_g9(pt.tpr) << '\n';
                }
            }
        }

        for (std::size_t f = 0; f < report.fold_aucs.size(); ++f) {
            std::cout << "fold " << f << ": auc = " << format_g9(report.fold_aucs[f]) << "\n";
        }
        std::cout << "mean auc = " << format_g9(report.mean_auc) << "\n";

        std::map<std::string, std::string> outputs = {
            {"folds", (dir / "folds.csv").string()}, {"roc", (dir / "roc.csv").string()}};
        write_manifest("cv", seed, binder, {{"dataset", data_path}}, outputs, dir);

        RunManifest m;
        m.subcommand = "cv";
        m.seed = seed;
        m.config = binder.snapshot();
        json summary;
        summary["config_hash"] = m.config_hash();
        summary["seed"] = seed;
        summary["fold_aucs"] = report.fold_aucs;
        summary["mean_auc"] = report.mean_auc;
        summary["wall_clock_seconds"] = timer.seconds();
        write_summary(dir / "cv_summary.json", summary);
    }
};

struct AblationCmd {
    std::string data_path;
    std::size_t k = 10;
    std::vector<std::uint64_t> seeds = {0};
    std::size_t jobs = 1;
    std::string out_dir = default_out_dir();
    ModelFlags model;
    TrainFlags trainer;

    void run(const ArgBinder& binder) {
        Timer timer;
        require_value(data_path, "--data");
        if (seeds.empty()) throw UsageError("--seeds needs at least one value");
        const Dataset ds = read_bag_file(data_path);
        const ModelConfig mcfg = model.resolve(ds, seeds.front());
        model.m_star = mcfg.m_star;
        const TrainConfig tcfg = trainer.resolve(seeds.front());
        const AblationResult result = ablation_run(ds, mcfg, tcfg, seeds, k, jobs);

        const fs::path dir = ensure_out_dir(out_dir);
        {
            std::ofstream out(dir / "ablation.csv", std::ios::binary);
            result.write_csv(out);
        }
        for (const auto& row : result.rows) {
            std::cout << row.variant << ": mean auc = " << format_g9(row.mean_auc) << "\n";
        }

        // Proposed vs FC under both pairings (per fold and per seed).
        json wilcoxon = json::object();
        const auto& fc = result.row(false, false);
        const auto& proposed = result.row(true, true);
        auto flatten = [](const std::vector<Vec>& per_seed) {
            Vec out;
            for (const auto& v : per_seed) out.insert(out.end(), v.begin(), v.end());
            return out;
        };
        try {
            const auto w = wilcoxon_signed_rank(flatten(proposed.fold_aucs),
                                                flatten(fc.fold_aucs));
            wilcoxon["per_fold"] = {{"statistic", w.statistic},
                                    {"p_value", w.p_value},
                                    {"n", w.n_used},
                                    {"exact", w.exact}};
        } catch (const Error& e) {
            wilcoxon["per_fold"] = {{"error", e.what()}};
        }
        try {
            const auto w = wilcoxon_signed_rank(proposed.seed_means, fc.seed_means);
            wilcoxon["per_seed"] = {{"statistic", w.statistic},
                                    {"p_value", w.p_value},
                                    {"n", w.n_used},
                                    {"exact", w.exact}};
        } catch (const Error& e) {
            wilcoxon["per_seed"] = {{"error", e.what()}};
        }

        write_manifest("ablation", seeds.front(), binder, {{"dataset", data_path}},
                       {{"table", (dir / "ablation.csv").string()}}, dir);

        RunManifest m;
        m.subcommand = "ablation";
        m.seed = seeds.front();
        m.config = binder.snapshot();
        json summary;
        summary["config_hash"] = m.config_hash();
        summary["seeds"] = seeds;
        for (const auto& row : result.rows) {
            summary["variants"][row.variant] = {{"mean_auc", row.mean_auc},
                                                {"seed_means", row.seed_means}};
        }
        summary["wilcoxon_proposed_vs_fc"] = wilcoxon;
        summary["wall_clock_seconds"] = timer.seconds();
        write_summary(dir / "ablation_summary.json", summary);
    }
};

struct SweepCmd {
    std::string data_path;
    std::vector<std::size_t> m_stars = {30, 60, 90, 120, 150};
    std::size_t k = 10;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string out_dir = default_out_dir();
    ModelFlags model;
    TrainFlags trainer;

    void run(const ArgBinder& binder) {
        Timer timer;
        require_value(data_path, "--data");
        if (m_stars.empty()) throw UsageError("--mstar needs at least one value");
        const Dataset ds = read_bag_file(data_path);
        const ModelConfig mcfg = model.resolve(ds, seed);
        const TrainConfig tcfg = trainer.resolve(seed);
        const SweepResult result = bagsize_sweep(ds, mcfg, tcfg, m_stars, k, seed, jobs);

        const fs::path dir = ensure_out_dir(out_dir);
        {
            std::ofstream out(dir / "sweep.csv", std::ios::binary);
            result.write_csv(out);
        }
        for (const auto& row : result.rows) {
            std::cout << "m*=" << row.m_star << ": mean auc = " << format_g9(row.mean_auc)
                      << "\n";
        }

        write_manifest("sweep", seed, binder, {{"dataset", data_path}},
                       {{"table", (dir / "sweep.csv").string()}}, dir);

        RunManifest m;
        m.subcommand = "sweep";
        m.seed = seed;
        m.config = binder.snapshot();
        json summary;
        summary["config_hash"] = m.config_hash();
        summary["seed"] = seed;
        for (const auto& row : result.rows) {
            summary["rows"].push_back(
                {{"m_star", row.m_star}, {"mean_auc", row.mean_auc}, {"fold_aucs", row.fold_aucs}});
        }
        summary["wall_clock_seconds"] = timer.seconds();
        write_summary(dir / "sweep_summary.json", summary);
    }
};

struct ExportAttentionCmd {
    std::string model_path;
    std::string data_path;
    std::string out_dir = default_out_dir();

    void run(const ArgBinder& binder) const {
        require_value(model_path, "--model");
        require_value(data_path, "--data");
        const Model model = load_model(model_path);
        const Dataset ds = read_bag_file(data_path);
        const fs::path dir = ensure_out_dir(out_dir);
        const fs::path att = dir / "attention.csv";
        const fs::path msk = dir / "attention_mask.csv";
        export_attention(model, ds, att.string(), msk.string());
        std::cout << "wrote " << att.string() << " and " << msk.string() << "\n";
        write_manifest("export-attention", 0, binder,
                       {{"model", model_path}, {"dataset", data_path}},
                       {{"attention", att.string()}, {"mask", msk.string()}}, dir);
    }
};

struct ExportFeaturesCmd {
    std::string model_path;
    std::string data_path;
    std::string out_dir = default_out_dir();
    bool normalize = false;
    double log_k = 100.0;

    void run(const ArgBinder& binder) const {
        require_value(model_path, "--model");
        require_value(data_path, "--data");
        const Model model = load_model(model_path);
        const Dataset ds = read_bag_file(data_path);
        const fs::path dir = ensure_out_dir(out_dir);
        const fs::path path = dir / "features.csv";
        FeatureExportOptions opts;
        opts.normalize = normalize;
        opts.log_k = log_k;
        export_features(model, ds, path.string(), opts);
        std::cout << "wrote " << path.string() << "\n";
        write_manifest("export-features", 0, binder,
                       {{"model", model_path}, {"dataset", data_path}},
                       {{"features", path.string()}}, dir);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiple-instance learning with sparse attention pooling"};
    app.set_version_flag("--version", std::string(kVersionDescribe));
    app.require_subcommand(1);

    // synth
    auto* synth_app = app.add_subcommand("synth", "Generate a synthetic bag dataset");
    ArgBinder synth_bind(synth_app);
    SynthCmd synth_cmd;
    synth_bind.bind("--n", synth_cmd.cfg.n_bags, "Number of bags")->check(CLI::Range(2, 1 << 24));
    synth_bind.bind("--pos-frac", synth_cmd.cfg.positive_fraction, "Positive bag fraction")
        ->check(CLI::Range(1e-9, 1.0 - 1e-9));
    synth_bind.bind("--p", synth_cmd.cfg.p, "Instance feature dimension")
        ->check(CLI::PositiveNumber);
    synth_bind.bind("--bag-size-mean", synth_cmd.cfg.bag_size_mean, "Mean bag size")
        ->check(CLI::Range(1.0, 1e9));
    synth_bind.bind("--bag-size-max", synth_cmd.cfg.bag_size_max, "Bag size cap")
        ->check(CLI::PositiveNumber);
    synth_bind.bind("--witness-rate", synth_cmd.cfg.witness_rate,
                    "Primary-instance probability in positive bags")
        ->check(CLI::Range(1e-9, 1.0));
    synth_bind.bind("--signal-shift", synth_cmd.cfg.signal_shift,
                    "Mean offset of primary instances");
    synth_bind.bind("--seed", synth_cmd.seed, "Master seed");
    synth_bind.bind("--out-dir", synth_cmd.out_dir, "Output directory");
    synth_bind.bind("--out-name", synth_cmd.out_name, "Output file name");

    // train
    auto* train_app = app.add_subcommand("train", "Train a model on a bag dataset");
    ArgBinder train_bind(train_app);
    TrainCmd train_cmd;
    train_bind.bind("--data", train_cmd.data_path, "Bag dataset CSV");
    train_bind.bind("--val-frac", train_cmd.val_frac, "Validation holdout fraction")
        ->check(CLI::Range(0.01, 0.9));
    train_bind.bind("--seed", train_cmd.seed, "Master seed");
    train_bind.bind("--out-dir", train_cmd.out_dir, "Output directory");
    train_cmd.model.bind(train_bind);
    train_cmd.trainer.bind(train_bind);

    // predict
    auto* predict_app = app.add_subcommand("predict", "Score a dataset with a trained model");
    ArgBinder predict_bind(predict_app);
    PredictCmd predict_cmd;
    predict_bind.bind("--model", predict_cmd.model_path, "Model checkpoint");
    predict_bind.bind("--data", predict_cmd.data_path, "Bag dataset CSV");
    predict_bind.bind("--out-dir", predict_cmd.out_dir, "Output directory");

    // cv
    auto* cv_app = app.add_subcommand("cv", "Stratified k-fold cross-validation");
    ArgBinder cv_bind(cv_app);
    CvCmd cv_cmd;
    cv_bind.bind("--data", cv_cmd.data_path, "Bag dataset CSV");
    cv_bind.bind("--k", cv_cmd.k, "Number of folds")->check(CLI::Range(2, 1000));
    cv_bind.bind("--seed", cv_cmd.seed, "Master seed");
    cv_bind.bind("--jobs", cv_cmd.jobs, "Parallel fold workers")->check(CLI::PositiveNumber);
    cv_bind.bind("--out-dir", cv_cmd.out_dir, "Output directory");
    cv_cmd.model.bind(cv_bind);
    cv_cmd.trainer.bind(cv_bind);

    // ablation
    auto* ablation_app =
        app.add_subcommand("ablation", "FC/Skip/Sparse/Proposed ablation grid");
    ArgBinder ablation_bind(ablation_app);
    AblationCmd ablation_cmd;
    ablation_bind.bind("--data", ablation_cmd.data_path, "Bag dataset CSV");
    ablation_bind.bind("--k", ablation_cmd.k, "Number of folds")->check(CLI::Range(2, 1000));
    ablation_bind.bind("--seeds", ablation_cmd.seeds, "Comma-separated seeds")
        ->delimiter(',');
    ablation_bind.bind("--jobs", ablation_cmd.jobs, "Parallel cell workers")
        ->check(CLI::PositiveNumber);
    ablation_bind.bind("--out-dir", ablation_cmd.out_dir, "Output directory");
    ablation_cmd.model.bind(ablation_bind);
    ablation_cmd.trainer.bind(ablation_bind);

    // sweep
    auto* sweep_app = app.add_subcommand("sweep", "Instance-capacity (m*) sweep");
    ArgBinder sweep_bind(sweep_app);
    SweepCmd sweep_cmd;
    sweep_bind.bind("--data", sweep_cmd.data_path, "Bag dataset CSV");
    sweep_bind.bind("--mstar", sweep_cmd.m_stars, "Comma-separated m* grid")->delimiter(',');
    sweep_bind.bind("--k", sweep_cmd.k, "Number of folds")->check(CLI::Range(2, 1000));
    sweep_bind.bind("--seed", sweep_cmd.seed, "Master seed");
    sweep_bind.bind("--jobs", sweep_cmd.jobs, "Parallel sweep workers")
        ->check(CLI::PositiveNumber);
    sweep_bind.bind("--out-dir", sweep_cmd.out_dir, "Output directory");
    sweep_cmd.model.bind(sweep_bind);
    sweep_cmd.trainer.bind(sweep_bind);

    // export-attention
    auto* eatt_app = app.add_subcommand("export-attention", "Export attention weight heatmap data");
    ArgBinder eatt_bind(eatt_app);
    ExportAttentionCmd eatt_cmd;
    eatt_bind.bind("--model", eatt_cmd.model_path, "Model checkpoint");
    eatt_bind.bind("--data", eatt_cmd.data_path, "Bag dataset CSV");
    eatt_bind.bind("--out-dir", eatt_cmd.out_dir, "Output directory");

    // export-features
    auto* efeat_app = app.add_subcommand("export-features", "Export pooled feature matrix");
    ArgBinder efeat_bind(efeat_app);
    ExportFeaturesCmd efeat_cmd;
    efeat_bind.bind("--model", efeat_cmd.model_path, "Model checkpoint");
    efeat_bind.bind("--data", efeat_cmd.data_path, "Bag dataset CSV");
    efeat_bind.bind("--out-dir", efeat_cmd.out_dir, "Output directory");
    efeat_bind.bind_flag("--normalize,!--raw", efeat_cmd.normalize,
                         "Min-max normalize then log-transform");
    efeat_bind.bind("--log-k", efeat_cmd.log_k, "Log transform constant K")
        ->check(CLI::Range(1.000001, 1e12));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth_app->parsed()) {
            synth_bind.resolve();
            synth_cmd.run(synth_bind);
        } else if (train_app->parsed()) {
            train_bind.resolve();
            train_cmd.run(train_bind);
        } else if (predict_app->parsed()) {
            predict_bind.resolve();
            predict_cmd.run(predict_bind);
        } else if (cv_app->parsed()) {
            cv_bind.resolve();
            cv_cmd.run(cv_bind);
        } else if (ablation_app->parsed()) {
            ablation_bind.resolve();
            ablation_cmd.run(ablation_bind);
        } else if (sweep_app->parsed()) {
            sweep_bind.resolve();
            sweep_cmd.run(sweep_bind);
        } else if (eatt_app->parsed()) {
            eatt_bind.resolve();
            eatt_cmd.run(eatt_bind);
        } else if (efeat_app->parsed()) {
            efeat_bind.resolve();
            efeat_cmd.run(efeat_bind);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
