#include "minnsa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace minnsa {

namespace {

constexpr char kMagic[8] = {'M', 'N', 'S', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kEndianSentinel = 0x01020304;

using json = nlohmann::json;

struct Section {
    std::string name;
    std::vector<std::size_t> shape;
    const double* data;

    std::size_t count() const {
        std::size_t c = 1;
        for (std::size_t d : shape) c *= d;
        return c;
    }
};

std::vector<Section> sections_of(const Model& model) {
    std::vector<Section> out;
    const auto& cfg = model.cfg;
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        out.push_back({"block" + std::to_string(l) + ".w", {cfg.p, cfg.p},
                       model.block_w[l].v.data()});
        out.push_back({"block" + std::to_string(l) + ".b", {cfg.p}, model.block_b[l].data()});
    }
    out.push_back({"attn.v", {cfg.attn_hidden, cfg.p}, model.attn_v.v.data()});
    out.push_back({"attn.w", {cfg.attn_hidden}, model.attn_w.data()});
    out.push_back({"bn.gamma", {cfg.p}, model.bn.gamma.data()});
    out.push_back({"bn.beta", {cfg.p}, model.bn.beta.data()});
    out.push_back({"bn.run_mean", {cfg.p}, model.bn.run_mean.data()});
    out.push_back({"bn.run_var", {cfg.p}, model.bn.run_var.data()});
    out.push_back({"clf.w", {cfg.p}, model.clf_w.data()});
    out.push_back({"clf.b", {1}, &model.clf_b});
    return out;
}

std::vector<std::pair<std::string, std::pair<double*, std::size_t>>> mutable_sections(
    Model& model) {
    std::vector<std::pair<std::string, std::pair<double*, std::size_t>>> out;
    const auto& cfg = model.cfg;
    for (std::size_t l = 0; l < cfg.n_blocks; ++l) {
        out.push_back({"block" + std::to_string(l) + ".w",
                       {model.block_w[l].v.data(), cfg.p * cfg.p}});
        out.push_back({"block" + std::to_string(l) + ".b", {model.block_b[l].data(), cfg.p}});
    }
    out.push_back({"attn.v", {model.attn_v.v.data(), cfg.attn_hidden * cfg.p}});
    out.push_back({"attn.w", {model.attn_w.data(), cfg.attn_hidden}});
    out.push_back({"bn.gamma", {model.bn.gamma.data(), cfg.p}});
    out.push_back({"bn.beta", {model.bn.beta.data(), cfg.p}});
    out.push_back({"bn.run_mean", {model.bn.run_mean.data(), cfg.p}});
    out.push_back({"bn.run_var", {model.bn.run_var.data(), cfg.p}});
    out.push_back({"clf.w", {model.clf_w.data(), cfg.p}});
    out.push_back({"clf.b", {&model.clf_b, 1}});
    return out;
}

json config_to_json(const ModelConfig& cfg) {
    return json{{"p", cfg.p},
                {"m_star", cfg.m_star},
                {"n_blocks", cfg.n_blocks},
                {"attn_hidden", cfg.attn_hidden},
                {"dropout_rate", cfg.dropout_rate},
                {"use_skip", cfg.use_skip},
                {"use_sparse", cfg.use_sparse},
                {"seed", cfg.seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.p = j.at("p").get<std::size_t>();
    cfg.m_star = j.at("m_star").get<std::size_t>();
    cfg.n_blocks = j.at("n_blocks").get<std::size_t>();
    cfg.attn_hidden = j.at("attn_hidden").get<std::size_t>();
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.use_skip = j.at("use_skip").get<bool>();
    cfg.use_sparse = j.at("use_sparse").get<bool>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.validate();
    return cfg;
}

template <typename T>
void write_raw(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw Error("checkpoint: truncated file");
}

}  // namespace

void save_model(const Model& model, std::ostream& sink) {
    json header;
    header["config"] = config_to_json(model.cfg);
    json sections = json::array();
    for (const auto& s : sections_of(model)) {
        sections.push_back(json{{"name", s.name}, {"shape", s.shape}});
    }
    header["sections"] = sections;
    const std::string header_text = header.dump();

    sink.write(kMagic, sizeof(kMagic));
    write_raw(sink, kFormatVersion);
    write_raw(sink, kEndianSentinel);
    write_raw(sink, static_cast<std::uint64_t>(header_text.size()));
    sink.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& s : sections_of(model)) {
        sink.write(reinterpret_cast<const char*>(s.data),
                   static_cast<std::streamsize>(s.count() * sizeof(double)));
    }
    if (!sink) throw Error("checkpoint: write failed");
}

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    save_model(model, out);
}

Model load_model(std::istream& source) {
    char magic[8];
    source.read(magic, sizeof(magic));
    if (!source || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error("checkpoint: bad magic (not a model checkpoint)");
    }
    std::uint32_t version = 0;
    read_raw(source, version);
    if (version != kFormatVersion) {
        throw Error("checkpoint: unsupported format version " + std::to_string(version));
    }
    std::uint32_t endian = 0;
    read_raw(source, endian);
    if (endian != kEndianSentinel) {
        throw Error("checkpoint: endianness mismatch");
    }
    std::uint64_t header_len = 0;
    read_raw(source, header_len);
    std::string header_text(header_len, '\0');
    source.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!source) throw Error("checkpoint: truncated header");

    json header = json::parse(header_text);
    const ModelConfig cfg = config_from_json(header.at("config"));

    Model model = init_model(cfg);  // right shapes; the values are overwritten below

    auto expected = mutable_sections(model);
    const json& sections = header.at("sections");
    if (sections.size() != expected.size()) {
        throw Error("checkpoint: section count does not match config");
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const json& sec = sections[i];
        if (sec.at("name").get<std::string>() != expected[i].first) {
            throw Error("checkpoint: unexpected section '" +
                        sec.at("name").get<std::string>() + "' (wanted '" + expected[i].first +
                        "')");
        }
        std::size_t count = 1;
        for (const auto& d : sec.at("shape")) count *= d.get<std::size_t>();
        if (count != expected[i].second.second) {
            throw Error("checkpoint: section '" + expected[i].first +
                        "' shape does not match config");
        }
        source.read(reinterpret_cast<char*>(expected[i].second.first),
                    static_cast<std::streamsize>(count * sizeof(double)));
        if (!source) throw Error("checkpoint: truncated section '" + expected[i].first + "'");
    }
    for (double v : model.bn.run_var) {
        if (v < 0.0) throw Error("checkpoint: negative running variance");
    }
    model.version = 0;
    return model;
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    return load_model(in);
}

}  // namespace minnsa
