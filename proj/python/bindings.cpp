#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ovid/error.hpp"
#include "ovid/evaluation.hpp"
#include "ovid/features.hpp"
#include "ovid/ingest.hpp"
#include "ovid/miner.hpp"
#include "ovid/model.hpp"
#include "ovid/store.hpp"
#include "ovid/version.hpp"

namespace py = pybind11;
using namespace ovid;

namespace {

PyObject* g_error = nullptr;

py::dict example_dict(const LabeledExample& ex) {
    py::dict d;
    d["changeset"] = ex.changeset;
    d["user"] = ex.user;
    d["label"] = ex.label == Label::Vandalism ? 1 : 0;
    switch (ex.provenance.kind) {
    case ProvenanceKind::ExplicitMention: d["provenance"] = "explicit"; break;
    case ProvenanceKind::DeletionAttribution: d["provenance"] = "deletion"; break;
    case ProvenanceKind::NegativeSample: d["provenance"] = "negative"; break;
    case ProvenanceKind::Imported: d["provenance"] = "imported"; break;
    }
    return d;
}

py::dict metrics_dict(const ConfusionCounts& c) {
    const auto m = metrics(c);
    py::dict d;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    d["f1"] = m.f1;
    d["accuracy"] = m.accuracy;
    d["tp"] = c.tp;
    d["fp"] = c.fp;
    d["tn"] = c.tn;
    d["fn"] = c.fn;
    return d;
}

SplitPart part_from(const std::string& name) {
    const auto p = parse_split_part(name);
    if (!p) {
        throw Error(ErrorCode::InvalidArgument, "unknown split '" + name + "'");
    }
    return *p;
}

OvidConfig config_from(const py::dict& overrides) {
    OvidConfig c;
    for (const auto& [k, v] : overrides) {
        apply_config_entry(c, py::str(k).cast<std::string>(), py::str(v).cast<std::string>());
    }
    c.validate();
    return c;
}

std::vector<Label> labels_from(const std::vector<int>& v) {
    std::vector<Label> out;
    out.reserve(v.size());
    for (int x : v) {
        out.push_back(x != 0 ? Label::Vandalism : Label::Regular);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Changeset vandalism detection: ingest, mining, features, model and evaluation";
    m.attr("__version__") = std::string(kVersion);

    g_error = PyErr_NewException("ovid._core.OvidError", PyExc_RuntimeError, nullptr);
    m.attr("OvidError") = py::handle(g_error);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object inst = py::reinterpret_steal<py::object>(PyObject_CallFunction(g_error, "s", e.what()));
            inst.attr("code") = std::string(to_string(e.code()));
            PyErr_SetObject(g_error, inst.ptr());
        }
    });

    py::class_<ChangesetStore>(m, "Store")
        .def_static(
            "ingest",
            [](const std::filesystem::path& changesets, const std::vector<std::filesystem::path>& osc) {
                ChangesetStore store;
                ingest_files(changesets, osc, store);
                return store;
            },
            py::arg("changesets"), py::arg("osc") = std::vector<std::filesystem::path>{})
        .def_static("load", py::overload_cast<const std::filesystem::path&>(&load_store))
        .def("save", [](const ChangesetStore& s, const std::filesystem::path& p) { save_store(s, p); })
        .def("__len__", &ChangesetStore::size)
        .def("__contains__", &ChangesetStore::contains)
        .def("__eq__", [](const ChangesetStore& a, const ChangesetStore& b) { return a == b; })
        .def("parked", [](const ChangesetStore& s) { return s.parked().size(); })
        .def("changeset_ids",
             [](const ChangesetStore& s) {
                 std::vector<ChangesetId> ids;
                 for (const auto& c : s.changesets()) {
                     ids.push_back(c.id);
                 }
                 return ids;
             })
        .def("changeset", [](const ChangesetStore& s, ChangesetId id) {
            const auto* c = s.find(id);
            if (c == nullptr) {
                throw Error(ErrorCode::UnknownChangeset, "changeset " + std::to_string(id) + " is not in the store");
            }
            py::dict d;
            d["id"] = c->id;
            d["user"] = c->user;
            d["username"] = c->username;
            d["created_at"] = format_timestamp(c->t);
            d["comment"] = c->comment;
            d["created_by"] = c->created_by;
            const auto n = count_edits(*c);
            d["creates"] = n.creates;
            d["modifications"] = n.modifications;
            d["deletes"] = n.deletes;
            return d;
        });

    m.def(
        "mine",
        [](const ChangesetStore& store, std::uint64_t seed) {
            const auto r = mine(store, seed);
            py::list examples;
            for (const auto& ex : r.examples) {
                examples.append(example_dict(ex));
            }
            py::dict d;
            d["examples"] = examples;
            d["reverts"] = r.reverts;
            d["explicit_positives"] = r.explicit_positives;
            d["deletion_positives"] = r.deletion_positives;
            return d;
        },
        py::arg("store"), py::arg("seed"));

    m.def("extract_changeset_ids", &extract_changeset_ids, py::arg("comment"));

    py::class_<FeatureFile>(m, "FeatureFile")
        .def_static(
            "build",
            [](const ChangesetStore& store, std::uint64_t mine_seed, std::uint64_t split_seed) {
                const auto r = mine(store, mine_seed);
                const auto split = split_user_disjoint(r.examples, SplitRatios{}, split_seed);
                return build_feature_file(store, split, FeatureConfig{});
            },
            py::arg("store"), py::arg("mine_seed") = 0, py::arg("split_seed") = 0)
        .def_static("load", py::overload_cast<const std::filesystem::path&>(&load_features))
        .def("save", [](const FeatureFile& f, const std::filesystem::path& p) { save_features(f, p); })
        .def_readonly("d_c", &FeatureFile::d_c)
        .def_readonly("d_u", &FeatureFile::d_u)
        .def_readonly("d_e", &FeatureFile::d_e)
        .def_readonly("editors", &FeatureFile::editors)
        .def("__len__", [](const FeatureFile& f) { return f.bundles.size(); })
        .def("count", [](const FeatureFile& f, const std::string& part) { return f.select(part_from(part)).size(); })
        .def("labels", [](const FeatureFile& f, const std::string& part) {
            std::vector<int> out;
            for (const auto& b : f.select(part_from(part))) {
                out.push_back(b.label == Label::Vandalism ? 1 : 0);
            }
            return out;
        });

    py::class_<ModelCheckpoint>(m, "Checkpoint")
        .def_static("load", &load_checkpoint)
        .def("save", [](const ModelCheckpoint& c, const std::filesystem::path& p) { save_checkpoint(c, p); })
        .def_property_readonly("config", [](const ModelCheckpoint& c) { return format_config(c.model.config()); })
        .def_property_readonly("best_epoch", [](const ModelCheckpoint& c) { return c.log.best_epoch; })
        .def(
            "predict",
            [](const ModelCheckpoint& c, const FeatureFile& f, const std::string& part) {
                check_compatible(c, f);
                return c.model.predict(f.normalized(part_from(part)));
            },
            py::arg("features"), py::arg("split") = "test")
        .def(
            "evaluate",
            [](const ModelCheckpoint& c, const FeatureFile& f, const std::string& part) {
                check_compatible(c, f);
                return metrics_dict(evaluate_model(c.model, f.normalized(part_from(part))));
            },
            py::arg("features"), py::arg("split") = "test");

    m.def(
        "train",
        [](const FeatureFile& f, const py::dict& overrides) {
            const auto cfg = config_from(overrides);
            const auto train_set = f.normalized(SplitPart::Train);
            const auto val_set = f.normalized(SplitPart::Validation);
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(train_set, val_set, ModelDims{f.d_c, f.d_u, f.d_e}, cfg);
            }
            return make_checkpoint(std::move(r.model), f, f.select(SplitPart::Train), 8, r.log);
        },
        py::arg("features"), py::arg("config") = py::dict());

    m.def("parse_config", [](const std::string& text) { return format_config(parse_config(text)); });

    m.def(
        "metrics",
        [](const std::vector<int>& predicted, const std::vector<int>& actual) {
            return metrics_dict(confusion(labels_from(predicted), labels_from(actual)));
        },
        py::arg("predicted"), py::arg("actual"));

    m.def(
        "pr_sweep",
        [](const std::vector<double>& scores, const std::vector<int>& labels, std::size_t points) {
            if (scores.size() != labels.size()) {
                throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
            }
            std::vector<ScoredExample> s;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                s.push_back({scores[i], labels[i] != 0 ? Label::Vandalism : Label::Regular});
            }
            std::vector<std::tuple<double, double, double>> out;
            for (const auto& p : pr_sweep(s, points)) {
                out.emplace_back(p.threshold, p.precision, p.recall);
            }
            return out;
        },
        py::arg("scores"), py::arg("labels"), py::arg("points") = 100);
}
