#include <bgnmf/classify.hpp>
#include <bgnmf/errors.hpp>
#include <bgnmf/inference.hpp>
#include <bgnmf/io.hpp>
#include <bgnmf/model.hpp>
#include <bgnmf/special_functions.hpp>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace bgnmf;

namespace {

Hyperparams hyper(int K, int J, double a, double b, const std::optional<std::vector<double>>& c) {
    Hyperparams h;
    h.K = K;
    h.J = J;
    h.a = a;
    h.b = b;
    if (!c) {
        h.c.assign(static_cast<std::size_t>(std::max(K, 0)), 0.1);
    } else if (c->size() == 1) {
        h.c.assign(static_cast<std::size_t>(std::max(K, 0)), c->front());
    } else {
        h.c = *c;
    }
    h.validate();
    return h;
}

FitOptions options(int max_iters, std::optional<int> min_iters, double rel_tol, std::uint64_t seed,
                   int threads) {
    FitOptions o;
    o.max_iters = max_iters;
    o.min_iters = min_iters ? *min_iters : std::min(10, max_iters);
    o.rel_tol = rel_tol;
    o.seed = seed;
    o.threads = threads;
    o.validate();
    return o;
}

GroupedDataset dataset(const std::vector<Matrix>& xs, const std::optional<std::vector<LabelVector>>& labels) {
    GroupedDataset d;
    for (std::size_t l = 0; l < xs.size(); ++l) {
        d.subjects.push_back({"subject" + std::to_string(l + 1), xs[l], std::nullopt});
    }
    if (labels) {
        if (labels->size() != xs.size()) {
            throw DataError(std::to_string(labels->size()) + " label vectors for " + std::to_string(xs.size()) +
                            " subjects");
        }
        for (std::size_t l = 0; l < xs.size(); ++l) {
            if (static_cast<Eigen::Index>((*labels)[l].size()) != xs[l].cols()) {
                throw DataError("subject " + std::to_string(l + 1) + " has " + std::to_string(xs[l].cols()) +
                                " frames but " + std::to_string((*labels)[l].size()) + " labels");
            }
            d.subjects[l].labels = (*labels)[l];
        }
    }
    d.validate();
    return d;
}

py::dict report_dict(const EvalReport& r) {
    py::dict out;
    out["pooled_accuracy"] = r.pooled_accuracy;
    out["subject_accuracy"] = r.subject_accuracy;
    out["subject_frames"] = r.subject_frames;
    out["confusion"] = Eigen::MatrixXd(r.confusion.cast<double>());
    return out;
}

std::vector<Matrix> means(const std::vector<GigMatrix>& factors) {
    std::vector<Matrix> out;
    for (const auto& f : factors) out.push_back(f.mean());
    return out;
}

} // namespace

PYBIND11_MODULE(_bgnmf, m) {
    m.doc() = "Variational group NMF with class-tied common bases and per-subject individual bases.";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const NumericalError& e) {
            PyErr_SetString(PyExc_ArithmeticError, e.what());
        } catch (const ConfigError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const DataError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.def("log_bessel_k", &log_bessel_k, py::arg("nu"), py::arg("x"),
          "log K_nu(x), the modified Bessel function of the second kind, computed in log space.");

    m.def(
        "gig_moments",
        [](double gamma, double rho, double tau, bool allow_divergent) {
            const GigMoments g = gig_moments({gamma, rho, tau}, allow_divergent ? DivergentMoment::kInfinity
                                                                                : DivergentMoment::kThrow);
            return py::make_tuple(g.e_x, g.e_inv_x, g.e_log_x);
        },
        py::arg("gamma"), py::arg("rho"), py::arg("tau"), py::arg("allow_divergent") = false,
        "(E[x], E[1/x], E[log x]) of the density proportional to x^(gamma-1) exp(-rho x - tau/x).");

    py::class_<Posterior>(m, "Posterior")
        .def_property_readonly("common_mean", [](const Posterior& p) { return Matrix(p.common.mean()); })
        .def_property_readonly("individual_means", [](const Posterior& p) { return means(p.individual); })
        .def_property_readonly("activation_means", [](const Posterior& p) { return means(p.activations); })
        .def_property_readonly("features", &Posterior::features)
        .def_property_readonly("classes", &Posterior::classes)
        .def("save", [](const Posterior& p, const std::filesystem::path& path) { write_posterior(path, p); })
        .def_static("load", [](const std::filesystem::path& path) { return read_posterior(path); });

    py::class_<FitResult>(m, "FitResult")
        .def_readonly("posterior", &FitResult::posterior)
        .def_readonly("iterations", &FitResult::iterations)
        .def_readonly("converged", &FitResult::converged)
        .def_readonly("warnings", &FitResult::warnings)
        .def_property_readonly("elbo", [](const FitResult& r) {
            std::vector<double> v;
            for (const auto& t : r.trace) v.push_back(t.elbo);
            return v;
        });

    m.def(
        "sample_dataset",
        [](int subjects, int features, std::vector<int> frames, int K, int J, double a, double b,
           std::optional<std::vector<double>> c, int run_length, std::uint64_t seed) {
            const Hyperparams h = hyper(K, J, a, b, c);
            if (frames.size() == 1) frames.assign(static_cast<std::size_t>(std::max(subjects, 0)), frames.front());
            std::vector<LabelVector> labels;
            for (int n : frames) labels.push_back(cyclic_labels(n, K, run_length));
            const SampledData s = sample_dataset(h, {subjects, features, frames}, labels, seed);
            std::vector<Matrix> xs;
            for (const auto& subj : s.data.subjects) xs.push_back(subj.x);
            py::dict out;
            out["X"] = xs;
            out["labels"] = labels;
            out["common"] = s.latent.common;
            out["individual"] = s.latent.individual;
            out["activations"] = s.latent.activations;
            return out;
        },
        py::arg("subjects") = 3, py::arg("features") = 24, py::arg("frames") = std::vector<int>{60},
        py::arg("K") = 3, py::arg("J") = 1, py::arg("a") = 0.1, py::arg("b") = 0.1, py::arg("c") = py::none(),
        py::arg("run_length") = 5, py::arg("seed") = 0,
        "Draw subjects from the generative model. X[l] is features x frames.");

    m.def(
        "fit",
        [](const std::vector<Matrix>& X, const std::vector<LabelVector>& labels, int K, int J, double a, double b,
           std::optional<std::vector<double>> c, int max_iters, std::optional<int> min_iters, double rel_tol,
           std::uint64_t seed, int threads) {
            const GroupedDataset d = dataset(X, labels);
            const Hyperparams h = hyper(K, J, a, b, c);
            const FitOptions o = options(max_iters, min_iters, rel_tol, seed, threads);
            py::gil_scoped_release release;
            return fit(d, h, o);
        },
        py::arg("X"), py::arg("labels"), py::arg("K") = 3, py::arg("J") = 1, py::arg("a") = 0.1,
        py::arg("b") = 0.1, py::arg("c") = py::none(), py::arg("max_iters") = 500, py::arg("min_iters") = py::none(),
        py::arg("rel_tol") = 1e-6, py::arg("seed") = 0, py::arg("threads") = 1);

    m.def(
        "predict",
        [](const Posterior& post, const std::vector<Matrix>& X, const std::string& rule) {
            const Prediction p = predict(dataset(X, std::nullopt), post, parse_rule(rule));
            return py::make_tuple(p.labels, p.scores);
        },
        py::arg("posterior"), py::arg("X"), py::arg("rule") = "argmin",
        "Per-subject class labels (1-based) and K x N squared distances.");

    m.def(
        "evaluate",
        [](const std::vector<LabelVector>& predicted, const std::vector<LabelVector>& truth, int K) {
            Prediction p;
            p.labels = predicted;
            return report_dict(evaluate(p, truth, K));
        },
        py::arg("predicted"), py::arg("truth"), py::arg("K") = 3);

    m.def(
        "learning_curve",
        [](const std::vector<Matrix>& X, const std::vector<LabelVector>& labels, std::vector<double> fractions,
           double holdout, const std::string& rule, int K, int J, double a, double b,
           std::optional<std::vector<double>> c, int max_iters, std::uint64_t seed) {
            const GroupedDataset d = dataset(X, labels);
            const Hyperparams h = hyper(K, J, a, b, c);
            const FitOptions o = options(max_iters, std::nullopt, 1e-6, seed, 1);
            std::vector<LearningCurvePoint> curve;
            {
                py::gil_scoped_release release;
                curve = learning_curve(d, h, o, fractions, holdout, parse_rule(rule));
            }
            py::list out;
            for (const auto& point : curve) {
                py::dict row = report_dict(point.report);
                row["fraction"] = point.fraction;
                out.append(row);
            }
            return out;
        },
        py::arg("X"), py::arg("labels"), py::arg("fractions") = std::vector<double>{0.25, 0.5, 0.75, 1.0},
        py::arg("holdout") = 0.3, py::arg("rule") = "argmin", py::arg("K") = 3, py::arg("J") = 1,
        py::arg("a") = 0.1, py::arg("b") = 0.1, py::arg("c") = py::none(), py::arg("max_iters") = 500,
        py::arg("seed") = 0);
}
