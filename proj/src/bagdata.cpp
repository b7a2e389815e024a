#include "minnsa/bagdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "minnsa/rng.hpp"

namespace minnsa {

std::size_t Dataset::max_bag_size() const {
    std::size_t m = 0;
    for (const auto& bag : bags) m = std::max(m, bag.size());
    return m;
}

std::vector<int> Dataset::labels() const {
    std::vector<int> out;
    out.reserve(bags.size());
    for (const auto& bag : bags) out.push_back(bag.label);
    return out;
}

void BagBatch::check_invariants() const {
    if (mask.rows != data.b || mask.cols != data.m || labels.size() != data.b) {
        throw Error("BagBatch: inconsistent shapes");
    }
    for (std::size_t b = 0; b < data.b; ++b) {
        bool seen_false = false;
        bool any_true = false;
        for (std::size_t j = 0; j < data.m; ++j) {
            if (mask.at(b, j)) {
                any_true = true;
                if (seen_false) throw Error("BagBatch: mask is not a prefix");
            } else {
                seen_false = true;
                for (std::size_t k = 0; k < data.p; ++k) {
                    if (data.at(b, j, k) != 0.0) throw Error("BagBatch: nonzero padding");
                }
            }
        }
        if (!any_true) throw Error("BagBatch: empty mask row");
    }
}

void SynthConfig::validate() const {
    if (n_bags < 2) throw Error("SynthConfig: n_bags must be >= 2");
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
        throw Error("SynthConfig: positive_fraction must lie in (0,1)");
    }
    if (p == 0) throw Error("SynthConfig: p must be positive");
    if (!(bag_size_mean >= 1.0)) throw Error("SynthConfig: bag_size_mean must be >= 1");
    if (bag_size_max < 1) throw Error("SynthConfig: bag_size_max must be >= 1");
    if (!(witness_rate > 0.0 && witness_rate <= 1.0)) {
        throw Error("SynthConfig: witness_rate must lie in (0,1]");
    }
    if (!std::isfinite(signal_shift)) throw Error("SynthConfig: signal_shift must be finite");
}

// ---- bag file format --------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

[[noreturn]] void parse_fail(const std::string& source, std::size_t line_no,
                             const std::string& what) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& token, const std::string& source, std::size_t line_no) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        parse_fail(source, line_no, "not a number: '" + token + "'");
    }
    if (!std::isfinite(value)) {
        parse_fail(source, line_no, "non-finite value: '" + token + "'");
    }
    return value;
}

}  // namespace

Dataset parse_bag_file(std::istream& source, const std::string& source_name) {
    std::string line;
    std::size_t line_no = 0;

    if (!std::getline(source, line)) {
        throw ParseError(source_name + ": empty file");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "bag_id" || header[1] != "label") {
        parse_fail(source_name, line_no, "expected header 'bag_id,label,f0,...'");
    }
    const std::size_t p = header.size() - 2;
    for (std::size_t k = 0; k < p; ++k) {
        if (header[k + 2] != "f" + std::to_string(k)) {
            parse_fail(source_name, line_no, "bad feature column name '" + header[k + 2] + "'");
        }
    }

    Dataset ds;
    ds.p = p;
    std::unordered_set<std::string> closed_ids;

    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        const auto fields = split_csv_line(line);
        if (fields.size() != p + 2) {
            parse_fail(source_name, line_no,
                       "expected " + std::to_string(p + 2) + " fields, got " +
                           std::to_string(fields.size()));
        }
        const std::string& id = fields[0];
        if (id.empty()) parse_fail(source_name, line_no, "empty bag_id");

        int label = 0;
        if (fields[1] == "0") {
            label = 0;
        } else if (fields[1] == "1") {
            label = 1;
        } else {
            parse_fail(source_name, line_no, "label must be 0 or 1, got '" + fields[1] + "'");
        }

        Vec instance(p);
        for (std::size_t k = 0; k < p; ++k) {
            instance[k] = parse_double(fields[k + 2], source_name, line_no);
        }

        if (!ds.bags.empty() && ds.bags.back().bag_id == id) {
            if (ds.bags.back().label != label) {
                parse_fail(source_name, line_no, "label changes within bag '" + id + "'");
            }
            ds.bags.back().instances.push_back(std::move(instance));
        } else {
            if (closed_ids.count(id)) {
                parse_fail(source_name, line_no,
                           "rows of bag '" + id + "' are not contiguous (duplicate bag_id)");
            }
            if (!ds.bags.empty()) closed_ids.insert(ds.bags.back().bag_id);
            Bag bag;
            bag.bag_id = id;
            bag.label = label;
            bag.instances.push_back(std::move(instance));
            ds.bags.push_back(std::move(bag));
        }
    }

    if (ds.bags.empty()) {
        throw ParseError(source_name + ": no instance rows");
    }
    return ds;
}

Dataset read_bag_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    return parse_bag_file(in, path);
}

void write_bag_file(const Dataset& ds, std::ostream& sink) {
    if (ds.p == 0) throw Error("write_bag_file: dataset has p=0");
    sink << "bag_id,label";
    for (std::size_t k = 0; k < ds.p; ++k) sink << ",f" << k;
    sink << '\n';
    for (const auto& bag : ds.bags) {
        if (bag.instances.empty()) throw Error("write_bag_file: bag '" + bag.bag_id + "' is empty");
        for (const auto& inst : bag.instances) {
            if (inst.size() != ds.p) {
                throw Error("write_bag_file: bag '" + bag.bag_id + "' has wrong dimension");
            }
            sink << bag.bag_id << ',' << bag.label;
            for (double x : inst) {
                if (!std::isfinite(x)) {
                    throw Error("write_bag_file: non-finite value in bag '" + bag.bag_id + "'");
                }
                sink << ',' << format_g9(x);
            }
            sink << '\n';
        }
    }
    if (!sink) throw Error("write_bag_file: write failed");
}

void write_bag_file(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_bag_file(ds, out);
}

// ---- shaping ---------------------------------------------------------------

BagBatch pad_and_mask(const Dataset& ds, std::size_t m_star) {
    if (m_star < 1) throw Error("pad_and_mask: m_star must be >= 1");
    BagBatch out;
    out.data = Tensor3(ds.size(), m_star, ds.p);
    out.mask = BoolMatrix(ds.size(), m_star);
    out.labels.reserve(ds.size());
    for (std::size_t b = 0; b < ds.size(); ++b) {
        const Bag& bag = ds.bags[b];
        if (bag.instances.empty()) throw Error("pad_and_mask: bag '" + bag.bag_id + "' is empty");
        const std::size_t keep = std::min(bag.size(), m_star);  // first m_star instances
        for (std::size_t j = 0; j < keep; ++j) {
            if (bag.instances[j].size() != ds.p) {
                throw Error("pad_and_mask: bag '" + bag.bag_id + "' has wrong dimension");
            }
            std::copy(bag.instances[j].begin(), bag.instances[j].end(), out.data.row(b, j).begin());
            out.mask.at(b, j) = 1;
        }
        out.labels.push_back(bag.label);
    }
    return out;
}

BagBatch gather(const BagBatch& batch, std::span<const std::size_t> rows) {
    BagBatch out;
    out.data = Tensor3(rows.size(), batch.m_star(), batch.p());
    out.mask = BoolMatrix(rows.size(), batch.m_star());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t src = rows[i];
        std::copy(batch.data.v.begin() + src * batch.m_star() * batch.p(),
                  batch.data.v.begin() + (src + 1) * batch.m_star() * batch.p(),
                  out.data.v.begin() + i * batch.m_star() * batch.p());
        std::copy(batch.mask.v.begin() + src * batch.m_star(),
                  batch.mask.v.begin() + (src + 1) * batch.m_star(),
                  out.mask.v.begin() + i * batch.m_star());
        out.labels.push_back(batch.labels[src]);
    }
    return out;
}

// ---- sampling / splitting ---------------------------------------------------

namespace {

std::vector<std::size_t> class_indices(const std::vector<int>& labels, int cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == cls) idx.push_back(i);
    }
    return idx;
}

}  // namespace

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
    Dataset out;
    out.p = ds.p;
    out.bags.reserve(indices.size());
    for (std::size_t i : indices) out.bags.push_back(ds.bags[i]);
    return out;
}

Dataset subsample_scenario(const Dataset& ds, Scenario scenario, std::size_t target_n,
                           std::uint64_t seed) {
    if (target_n < 1) throw Error("subsample_scenario: target_n must be positive");
    std::size_t want_pos = 0;
    if (scenario == Scenario::kBalanced) {
        want_pos = target_n / 2;
    } else {
        // "about a tenth": round(0.1 * n) with half-up rounding.
        want_pos = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(target_n) + 0.5));
    }
    const std::size_t want_neg = target_n - want_pos;

    const auto labels = ds.labels();
    auto pos = class_indices(labels, 1);
    auto neg = class_indices(labels, 0);
    if (pos.size() < want_pos) {
        throw Error("subsample_scenario: need " + std::to_string(want_pos) +
                    " positive bags, dataset has " + std::to_string(pos.size()));
    }
    if (neg.size() < want_neg) {
        throw Error("subsample_scenario: need " + std::to_string(want_neg) +
                    " negative bags, dataset has " + std::to_string(neg.size()));
    }

    Rng rng = make_rng(seed, "subsample");
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);

    std::vector<std::size_t> keep(pos.begin(), pos.begin() + want_pos);
    keep.insert(keep.end(), neg.begin(), neg.begin() + want_neg);
    std::sort(keep.begin(), keep.end());
    return subset(ds, keep);
}

std::vector<FoldSplit> stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw Error("stratified_kfold: k must be >= 2");
    const auto labels = ds.labels();
    Rng rng = make_rng(seed, "kfold");

    std::vector<std::vector<std::size_t>> test_folds(k);
    for (int cls : {1, 0}) {
        auto idx = class_indices(labels, cls);
        if (idx.size() < k) {
            throw Error("stratified_kfold: class " + std::to_string(cls) + " has " +
                        std::to_string(idx.size()) + " bags, fewer than k=" + std::to_string(k));
        }
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < idx.size(); ++i) test_folds[i % k].push_back(idx[i]);
    }

    std::vector<FoldSplit> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(test_folds[f].begin(), test_folds[f].end());
        folds[f].test = test_folds[f];
        for (std::size_t g = 0; g < k; ++g) {
            if (g == f) continue;
            folds[f].train.insert(folds[f].train.end(), test_folds[g].begin(),
                                  test_folds[g].end());
        }
        std::sort(folds[f].train.begin(), folds[f].train.end());
    }
    return folds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_holdout(
    const std::vector<int>& labels, double frac, std::uint64_t seed) {
    if (!(frac > 0.0 && frac < 1.0)) throw Error("stratified_holdout: frac must lie in (0,1)");
    Rng rng = make_rng(seed, "holdout");
    std::vector<std::size_t> rest, held;
    for (int cls : {1, 0}) {
        auto idx = class_indices(labels, cls);
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t take =
            idx.empty() ? 0
                        : static_cast<std::size_t>(
                              std::ceil(frac * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < take ? held : rest).push_back(idx[i]);
        }
    }
    std::sort(rest.begin(), rest.end());
    std::sort(held.begin(), held.end());
    return {rest, held};
}

// ---- synthetic generator ----------------------------------------------------

Vec synth_signal_direction(std::size_t p) {
    Vec u(p, 1.0 / std::sqrt(static_cast<double>(p)));
    return u;
}

Dataset synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng = make_rng(cfg.seed, "synth");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution witness(cfg.witness_rate);

    const std::size_t n_pos = static_cast<std::size_t>(
        std::floor(cfg.positive_fraction * static_cast<double>(cfg.n_bags) + 0.5));
    const Vec u = synth_signal_direction(cfg.p);

    // Bag size = 1 + geometric, clamped to bag_size_max. Mean of the
    // untruncated law equals bag_size_mean.
    const bool unit_sizes = cfg.bag_size_mean <= 1.0;
    std::geometric_distribution<std::size_t> geo(
        unit_sizes ? 0.5 : 1.0 / cfg.bag_size_mean);

    Dataset ds;
    ds.p = cfg.p;
    ds.bags.reserve(cfg.n_bags);

    int width = 1;
    for (std::size_t v = cfg.n_bags; v >= 10; v /= 10) ++width;

    for (std::size_t i = 0; i < cfg.n_bags; ++i) {
        Bag bag;
        std::string num = std::to_string(i);
        bag.bag_id = "bag_" + std::string(width > static_cast<int>(num.size())
                                              ? width - num.size()
                                              : 0, '0') + num;
        bag.label = i < n_pos ? 1 : 0;

        std::size_t size = unit_sizes ? 1 : 1 + geo(rng);
        size = std::min(size, cfg.bag_size_max);

        std::vector<bool> primary(size, false);
        bool any_primary = false;
        if (bag.label == 1) {
            for (std::size_t j = 0; j < size; ++j) {
                primary[j] = witness(rng);
                any_primary = any_primary || primary[j];
            }
            if (!any_primary) {
                std::uniform_int_distribution<std::size_t> pick(0, size - 1);
                primary[pick(rng)] = true;
            }
        }

        bag.instances.reserve(size);
        for (std::size_t j = 0; j < size; ++j) {
            Vec x(cfg.p);
            for (std::size_t kdim = 0; kdim < cfg.p; ++kdim) x[kdim] = gauss(rng);
            if (primary[j]) {
                for (std::size_t kdim = 0; kdim < cfg.p; ++kdim) {
                    x[kdim] += cfg.signal_shift * u[kdim];
                }
            }
            bag.instances.push_back(std::move(x));
        }
        ds.bags.push_back(std::move(bag));
    }
    return ds;
}

}  // namespace minnsa
