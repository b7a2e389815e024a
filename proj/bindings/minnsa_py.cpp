// Python bindings for the minnsa core: dataset handling, the attention
// kernels, model training/prediction and the evaluation harness.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>
#include <sstream>

#include "minnsa/checkpoint.hpp"
#include "minnsa/evaluation.hpp"
#include "minnsa/kernels.hpp"
#include "minnsa/version.hpp"

namespace py = pybind11;
using namespace minnsa;

namespace {

py::array_t<double> matrix_to_numpy(const Matrix& m) {
    py::array_t<double> out({m.rows, m.cols});
    std::memcpy(out.mutable_data(), m.v.data(), m.v.size() * sizeof(double));
    return out;
}

py::array_t<double> vec_to_numpy(const Vec& v) {
    py::array_t<double> out(v.size());
    std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(double));
    return out;
}

Vec numpy_to_vec(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw Error("expected a 1-D array");
    return Vec(a.data(), a.data() + a.shape(0));
}

std::vector<std::uint8_t> mask_from_object(const py::object& mask, std::size_t n) {
    if (mask.is_none()) return {};
    const auto arr =
        py::array_t<bool, py::array::c_style | py::array::forcecast>::ensure(mask);
    if (!arr || arr.ndim() != 1 || static_cast<std::size_t>(arr.shape(0)) != n) {
        throw Error("mask must be a 1-D boolean array matching the scores");
    }
    std::vector<std::uint8_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = arr.data()[i] ? 1 : 0;
    return out;
}

template <typename Fn>
py::array_t<double> kernel_forward(Fn fn, const py::array_t<double>& scores,
                                   const py::object& mask) {
    const Vec z = numpy_to_vec(scores);
    const auto m = mask_from_object(mask, z.size());
    return vec_to_numpy(fn(ScoreVector{z, m}));
}

template <typename Fn>
py::array_t<double> kernel_backward(Fn fn, const py::array_t<double>& scores,
                                    const py::array_t<double>& out_grad,
                                    const py::object& mask) {
    const Vec z = numpy_to_vec(scores);
    const Vec g = numpy_to_vec(out_grad);
    if (g.size() != z.size()) throw Error("out_grad must match scores");
    const auto m = mask_from_object(mask, z.size());
    return vec_to_numpy(fn(ScoreVector{z, m}, g));
}

SynthConfig make_synth_config(std::size_t n_bags, double positive_fraction, std::size_t p,
                              double bag_size_mean, std::size_t bag_size_max,
                              double witness_rate, double signal_shift, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_bags = n_bags;
    cfg.positive_fraction = positive_fraction;
    cfg.p = p;
    cfg.bag_size_mean = bag_size_mean;
    cfg.bag_size_max = bag_size_max;
    cfg.witness_rate = witness_rate;
    cfg.signal_shift = signal_shift;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_minnsa, m) {
    m.doc() = "Multiple-instance learning with sparse attention pooling";
    m.attr("__version__") = kVersion;

    py::register_exception<Error>(m, "MinnsaError", PyExc_RuntimeError);

    // ---- data ------------------------------------------------------------
    py::class_<Bag>(m, "Bag")
        .def_readonly("bag_id", &Bag::bag_id)
        .def_readonly("label", &Bag::label)
        .def("__len__", [](const Bag& b) { return b.size(); })
        .def("instances", [](const Bag& b) {
            Matrix out(b.size(), b.instances.empty() ? 0 : b.instances[0].size());
            for (std::size_t j = 0; j < b.size(); ++j) {
                std::copy(b.instances[j].begin(), b.instances[j].end(), out.row(j).begin());
            }
            return matrix_to_numpy(out);
        });

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("p", [](const Dataset& ds) { return ds.p; })
        .def("__len__", [](const Dataset& ds) { return ds.size(); })
        .def("__getitem__",
             [](const Dataset& ds, std::size_t i) {
                 if (i >= ds.size()) throw py::index_error();
                 return ds.bags[i];
             })
        .def("labels", [](const Dataset& ds) { return ds.labels(); })
        .def("max_bag_size", &Dataset::max_bag_size)
        .def("save", [](const Dataset& ds, const std::string& path) {
            write_bag_file(ds, path);
        });

    m.def("read_bag_file", &read_bag_file, py::arg("path"),
          "Parse a bag dataset CSV (header bag_id,label,f0,...)");
    m.def("parse_bag_text", [](const std::string& text) {
        std::istringstream in(text);
        return parse_bag_file(in, "<string>");
    });
    m.def("write_bag_file",
          [](const Dataset& ds, const std::string& path) { write_bag_file(ds, path); },
          py::arg("dataset"), py::arg("path"));

    m.def("synth_generate", [](std::size_t n_bags, double positive_fraction, std::size_t p,
                               double bag_size_mean, std::size_t bag_size_max,
                               double witness_rate, double signal_shift, std::uint64_t seed) {
              return synth_generate(make_synth_config(n_bags, positive_fraction, p,
                                                      bag_size_mean, bag_size_max, witness_rate,
                                                      signal_shift, seed));
          },
          py::arg("n_bags") = 400, py::arg("positive_fraction") = 0.5, py::arg("p") = 30,
          py::arg("bag_size_mean") = 4.0, py::arg("bag_size_max") = 100,
          py::arg("witness_rate") = 0.5, py::arg("signal_shift") = 2.0, py::arg("seed") = 0,
          "Generate synthetic primary-instance bags");

    m.def("pad_and_mask", [](const Dataset& ds, std::size_t m_star) {
              const BagBatch batch = pad_and_mask(ds, m_star);
              py::array_t<double> data({batch.batch_size(), batch.m_star(), batch.p()});
              std::memcpy(data.mutable_data(), batch.data.v.data(),
                          batch.data.v.size() * sizeof(double));
              py::array_t<bool> mask({batch.batch_size(), batch.m_star()});
              for (std::size_t i = 0; i < batch.mask.v.size(); ++i) {
                  mask.mutable_data()[i] = batch.mask.v[i] != 0;
              }
              return py::make_tuple(data, mask, batch.labels);
          },
          py::arg("dataset"), py::arg("m_star"),
          "Pad/truncate to (n, m_star, p) plus mask and labels");

    // ---- kernels ----------------------------------------------------------
    m.def("sparsemax",
          [](const py::array_t<double>& z, const py::object& mask) {
              return kernel_forward([](const ScoreVector& v) { return sparsemax(v); }, z, mask);
          },
          py::arg("scores"), py::arg("mask") = py::none(),
          "Euclidean projection of the scores onto the probability simplex");
    m.def("softmax",
          [](const py::array_t<double>& z, const py::object& mask) {
              return kernel_forward([](const ScoreVector& v) { return softmax(v); }, z, mask);
          },
          py::arg("scores"), py::arg("mask") = py::none());
    m.def("sparsemax_backward",
          [](const py::array_t<double>& z, const py::array_t<double>& g,
             const py::object& mask) {
              return kernel_backward(
                  [](const ScoreVector& v, const Vec& og) { return sparsemax_backward(v, og); },
                  z, g, mask);
          },
          py::arg("scores"), py::arg("out_grad"), py::arg("mask") = py::none());
    m.def("softmax_backward",
          [](const py::array_t<double>& z, const py::array_t<double>& g,
             const py::object& mask) {
              return kernel_backward(
                  [](const ScoreVector& v, const Vec& og) { return softmax_backward(v, og); },
                  z, g, mask);
          },
          py::arg("scores"), py::arg("out_grad"), py::arg("mask") = py::none());

    // ---- model / training ---------------------------------------------------
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](std::size_t p, std::size_t m_star, std::size_t n_blocks,
                         std::size_t attn_hidden, double dropout_rate, bool use_skip,
                         bool use_sparse, std::uint64_t seed) {
                 ModelConfig cfg;
                 cfg.p = p;
                 cfg.m_star = m_star;
                 cfg.n_blocks = n_blocks;
                 cfg.attn_hidden = attn_hidden;
                 cfg.dropout_rate = dropout_rate;
                 cfg.use_skip = use_skip;
                 cfg.use_sparse = use_sparse;
                 cfg.seed = seed;
                 cfg.validate();
                 return cfg;
             }),
             py::arg("p"), py::arg("m_star"), py::arg("n_blocks") = 2,
             py::arg("attn_hidden") = 64, py::arg("dropout_rate") = 0.3,
             py::arg("use_skip") = true, py::arg("use_sparse") = true, py::arg("seed") = 0)
        .def_readonly("p", &ModelConfig::p)
        .def_readonly("m_star", &ModelConfig::m_star)
        .def_readonly("use_skip", &ModelConfig::use_skip)
        .def_readonly("use_sparse", &ModelConfig::use_sparse);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init([](std::size_t epochs, std::size_t batch_size, double learning_rate,
                         double beta1, double beta2, double eps, const std::string& selection,
                         std::uint64_t seed) {
                 TrainConfig cfg;
                 cfg.epochs = epochs;
                 cfg.batch_size = batch_size;
                 cfg.learning_rate = learning_rate;
                 cfg.beta1 = beta1;
                 cfg.beta2 = beta2;
                 cfg.eps = eps;
                 if (selection == "val_auc") {
                     cfg.selection = SelectionMetric::kValAuc;
                 } else if (selection == "train_loss") {
                     cfg.selection = SelectionMetric::kTrainLoss;
                 } else {
                     throw Error("selection must be 'val_auc' or 'train_loss'");
                 }
                 cfg.seed = seed;
                 cfg.validate();
                 return cfg;
             }),
             py::arg("epochs") = 100, py::arg("batch_size") = 32,
             py::arg("learning_rate") = 1e-3, py::arg("beta1") = 0.9, py::arg("beta2") = 0.999,
             py::arg("eps") = 1e-8, py::arg("selection") = "val_auc", py::arg("seed") = 0)
        .def_readonly("epochs", &TrainConfig::epochs);

    py::class_<Model>(m, "Model")
        .def_property_readonly("config", [](const Model& model) { return model.cfg; })
        .def("save", [](const Model& model, const std::string& path) {
            save_model(model, path);
        });
    m.def("load_model", [](const std::string& path) { return load_model(path); },
          py::arg("path"));

    m.def("init_model", &init_model, py::arg("config"));

    m.def("train",
          [](const Model& init, const Dataset& train_ds, const py::object& val,
             const TrainConfig& cfg) {
              const Dataset* val_ptr = nullptr;
              Dataset val_ds;
              if (!val.is_none()) {
                  val_ds = val.cast<Dataset>();
                  val_ptr = &val_ds;
              }
              TrainResult result = train(init, train_ds, val_ptr, cfg);
              py::dict history;
              history["train_loss"] = vec_to_numpy(result.history.train_loss);
              history["metric"] = vec_to_numpy(result.history.metric);
              history["best_epoch"] = result.history.best_epoch;
              return py::make_tuple(std::move(result.best), history);
          },
          py::arg("model"), py::arg("train_ds"), py::arg("val_ds") = py::none(),
          py::arg("config"), "Returns (best_model, history dict)");

    m.def("predict",
          [](const Model& model, const Dataset& ds) {
              const Prediction pred = predict(model, ds);
              return py::make_tuple(vec_to_numpy(pred.probs), matrix_to_numpy(pred.attention),
                                    matrix_to_numpy(pred.features));
          },
          py::arg("model"), py::arg("dataset"),
          "Returns (probs, attention n x m*, features n x p)");

    // ---- evaluation ------------------------------------------------------------
    m.def("auc",
          [](const py::array_t<double>& scores, const std::vector<int>& labels) {
              return auc(numpy_to_vec(scores), labels);
          },
          py::arg("scores"), py::arg("labels"));
    m.def("roc_curve",
          [](const py::array_t<double>& scores, const std::vector<int>& labels) {
              const auto curve = roc_curve(numpy_to_vec(scores), labels);
              Matrix out(curve.size(), 2);
              for (std::size_t i = 0; i < curve.size(); ++i) {
                  out.at(i, 0) = curve[i].fpr;
                  out.at(i, 1) = curve[i].tpr;
              }
              return matrix_to_numpy(out);
          },
          py::arg("scores"), py::arg("labels"), "Returns an (n_points, 2) array of (fpr, tpr)");
    m.def("wilcoxon_signed_rank",
          [](const py::array_t<double>& a, const py::array_t<double>& b) {
              const auto res = wilcoxon_signed_rank(numpy_to_vec(a), numpy_to_vec(b));
              return py::make_tuple(res.statistic, res.p_value);
          },
          py::arg("a"), py::arg("b"), "Returns (W+ statistic, two-sided p value)");

    m.def("cross_validate",
          [](const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg, std::size_t k,
             std::uint64_t seed, std::size_t jobs) {
              const CvReport rep = cross_validate(ds, mcfg, tcfg, k, seed, jobs);
              py::dict out;
              out["fold_aucs"] = vec_to_numpy(rep.fold_aucs);
              out["mean_auc"] = rep.mean_auc;
              out["oof_probs"] = vec_to_numpy(rep.oof_probs);
              out["oof_attention"] = matrix_to_numpy(rep.oof_attention);
              out["oof_features"] = matrix_to_numpy(rep.oof_features);
              return out;
          },
          py::arg("dataset"), py::arg("model_config"), py::arg("train_config"),
          py::arg("k") = 10, py::arg("seed") = 0, py::arg("jobs") = 1);

    m.def("ablation_run",
          [](const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
             const std::vector<std::uint64_t>& seeds, std::size_t k, std::size_t jobs) {
              const AblationResult res = ablation_run(ds, mcfg, tcfg, seeds, k, jobs);
              py::list rows;
              for (const auto& row : res.rows) {
                  py::dict r;
                  r["variant"] = row.variant;
                  r["use_skip"] = row.use_skip;
                  r["use_sparse"] = row.use_sparse;
                  r["mean_auc"] = row.mean_auc;
                  r["seed_means"] = vec_to_numpy(row.seed_means);
                  rows.append(std::move(r));
              }
              return rows;
          },
          py::arg("dataset"), py::arg("model_config"), py::arg("train_config"), py::arg("seeds"),
          py::arg("k") = 10, py::arg("jobs") = 1);

    m.def("bagsize_sweep",
          [](const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
             const std::vector<std::size_t>& m_stars, std::size_t k, std::uint64_t seed,
             std::size_t jobs) {
              const SweepResult res = bagsize_sweep(ds, mcfg, tcfg, m_stars, k, seed, jobs);
              py::list rows;
              for (const auto& row : res.rows) {
                  py::dict r;
                  r["m_star"] = row.m_star;
                  r["mean_auc"] = row.mean_auc;
                  r["fold_aucs"] = vec_to_numpy(row.fold_aucs);
                  rows.append(std::move(r));
              }
              return rows;
          },
          py::arg("dataset"), py::arg("model_config"), py::arg("train_config"),
          py::arg("m_stars"), py::arg("k") = 10, py::arg("seed") = 0, py::arg("jobs") = 1);

    m.def("export_attention",
          [](const Model& model, const Dataset& ds, const std::string& attention_path,
             const std::string& mask_path) {
              export_attention(model, ds, attention_path, mask_path);
          },
          py::arg("model"), py::arg("dataset"), py::arg("attention_path"),
          py::arg("mask_path"));
    m.def("export_features",
          [](const Model& model, const Dataset& ds, const std::string& path, bool normalize,
             double log_k) {
              FeatureExportOptions opts;
              opts.normalize = normalize;
              opts.log_k = log_k;
              export_features(model, ds, path, opts);
          },
          py::arg("model"), py::arg("dataset"), py::arg("path"), py::arg("normalize") = false,
          py::arg("log_k") = 100.0);
}
