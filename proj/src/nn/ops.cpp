#include "ovid/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "ovid/error.hpp"

namespace ovid::nn {
namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(op) + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

thread_local std::vector<double>* relu_probe = nullptr;

Tape& tape_of(Var a, Var b) {
    if (a.tape != b.tape) {
        throw Error(ErrorCode::InvalidArgument, "variables recorded on different tapes");
    }
    return *a.tape;
}

} // namespace

Var matmul(Var a, Var b) {
    Tape& tape = tape_of(a, b);
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    if (av.cols() != bv.rows()) {
        shape_error("matmul", av, bv);
    }
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    Tensor out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av(i, p);
            for (std::size_t j = 0; j < m; ++j) {
                out(i, j) += x * bv(p, j);
            }
        }
    }
    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.record(std::move(out), rg, [a = a.id, b = b.id, n, k, m](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        if (t.requires_grad(Var{&t, a})) {
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) {
                        acc += g(i, j) * bv(p, j);
                    }
                    ga(i, p) += acc;
                }
            }
        }
        if (t.requires_grad(Var{&t, b})) {
            Tensor& gb = t.grad(b);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double x = av(i, p);
                    for (std::size_t j = 0; j < m; ++j) {
                        gb(p, j) += x * g(i, j);
                    }
                }
            }
        }
    });
}

Var transpose(Var a) {
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    Tensor out(av.cols(), av.rows());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        for (std::size_t j = 0; j < av.cols(); ++j) {
            out(j, i) = av(i, j);
        }
    }
    return tape.record(std::move(out), tape.requires_grad(a), [a = a.id](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            for (std::size_t j = 0; j < ga.cols(); ++j) {
                ga(i, j) += g(j, i);
            }
        }
    });
}

Var add(Var a, Var b) {
    Tape& tape = tape_of(a, b);
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    if (!av.same_shape(bv)) {
        shape_error("add", av, bv);
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i];
    }
    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    return tape.record(std::move(out), rg, [a = a.id, b = b.id](Tape& t, std::size_t self) {
        for (auto id : {a, b}) {
            if (!t.requires_grad(Var{&t, id})) {
                continue;
            }
            const Tensor& g = t.grad(self);
            Tensor& gi = t.grad(id);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gi[i] += g[i];
            }
        }
    });
}

Var add_row(Var a, Var row) {
    Tape& tape = tape_of(a, row);
    const Tensor& av = tape.value(a);
    const Tensor& rv = tape.value(row);
    if (rv.rows() != 1 || rv.cols() != av.cols()) {
        shape_error("add_row", av, rv);
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) += rv[j];
        }
    }
    const bool rg = tape.requires_grad(a) || tape.requires_grad(row);
    return tape.record(std::move(out), rg, [a = a.id, r = row.id](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(Var{&t, a})) {
            Tensor& ga = t.grad(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
            }
        }
        if (t.requires_grad(Var{&t, r})) {
            Tensor& gr = t.grad(r);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    gr[j] += g(i, j);
                }
            }
        }
    });
}

Var scale(Var a, double factor) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    for (auto& x : out.values()) {
        x *= factor;
    }
    return tape.record(std::move(out), tape.requires_grad(a), [a = a.id, factor](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += factor * g[i];
        }
    });
}

void set_relu_probe(std::vector<double>* sink) {
    relu_probe = sink;
}

Var relu(Var a) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    if (relu_probe != nullptr) {
        relu_probe->insert(relu_probe->end(), out.values().begin(), out.values().end());
    }
    for (auto& x : out.values()) {
        x = x > 0.0 ? x : 0.0;
    }
    return tape.record(std::move(out), tape.requires_grad(a), [a = a.id](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& in = t.value(a);
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += in[i] > 0.0 ? g[i] : 0.0;
        }
    });
}

Var sigmoid(Var a) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    for (auto& x : out.values()) {
        x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return tape.record(std::move(out), tape.requires_grad(a), [a = a.id](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * y[i] * (1.0 - y[i]);
        }
    });
}

Var softmax_rows(Var a) {
    Tape& tape = *a.tape;
    const Tensor& av = tape.value(a);
    Tensor out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
        double peak = av(i, 0);
        for (std::size_t j = 1; j < av.cols(); ++j) {
            peak = std::max(peak, av(i, j));
        }
        double total = 0.0;
        for (std::size_t j = 0; j < av.cols(); ++j) {
            out(i, j) = std::exp(av(i, j) - peak);
            total += out(i, j);
        }
        for (std::size_t j = 0; j < av.cols(); ++j) {
            out(i, j) /= total;
        }
    }
    return tape.record(std::move(out), tape.requires_grad(a), [a = a.id](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& s = t.value(self);
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < s.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < s.cols(); ++j) {
                dot += g(i, j) * s(i, j);
            }
            for (std::size_t j = 0; j < s.cols(); ++j) {
                ga(i, j) += s(i, j) * (g(i, j) - dot);
            }
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias, double epsilon) {
    Tape& tape = tape_of(x, gain);
    tape_of(x, bias);
    const Tensor& xv = tape.value(x);
    const Tensor& gv = tape.value(gain);
    const Tensor& bv = tape.value(bias);
    const std::size_t n = xv.rows(), d = xv.cols();
    if (gv.rows() != 1 || gv.cols() != d) {
        shape_error("layer_norm gain", xv, gv);
    }
    if (bv.rows() != 1 || bv.cols() != d) {
        shape_error("layer_norm bias", xv, bv);
    }
    Tensor normalized(n, d);
    std::vector<double> inv_std(n);
    Tensor out(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            mu += xv(i, j);
        }
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xv(i, j) - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + epsilon);
        for (std::size_t j = 0; j < d; ++j) {
            normalized(i, j) = (xv(i, j) - mu) * inv_std[i];
            out(i, j) = gv[j] * normalized(i, j) + bv[j];
        }
    }
    const bool rg = tape.requires_grad(x) || tape.requires_grad(gain) || tape.requires_grad(bias);
    return tape.record(
        std::move(out), rg,
        [x = x.id, g_id = gain.id, b_id = bias.id, normalized = std::move(normalized),
         inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
            const Tensor& g = t.grad(self);
            const Tensor& gv = t.value(g_id);
            const std::size_t n = g.rows(), d = g.cols();
            if (t.requires_grad(Var{&t, g_id})) {
                Tensor& gg = t.grad(g_id);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                        gg[j] += g(i, j) * normalized(i, j);
                    }
                }
            }
            if (t.requires_grad(Var{&t, b_id})) {
                Tensor& gb = t.grad(b_id);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < d; ++j) {
                        gb[j] += g(i, j);
                    }
                }
            }
            if (t.requires_grad(Var{&t, x})) {
                Tensor& gx = t.grad(x);
                const double dd = static_cast<double>(d);
                for (std::size_t i = 0; i < n; ++i) {
                    double sum_dxhat = 0.0;
                    double sum_dxhat_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxhat = g(i, j) * gv[j];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * normalized(i, j);
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxhat = g(i, j) * gv[j];
                        gx(i, j) += inv_std[i] / dd *
                                    (dd * dxhat - sum_dxhat - normalized(i, j) * sum_dxhat_xhat);
                    }
                }
            }
        });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "concat_cols: nothing to concatenate");
    }
    Tape& tape = *parts.front().tape;
    const std::size_t rows = tape.value(parts.front()).rows();
    std::size_t cols = 0;
    bool rg = false;
    for (const auto& p : parts) {
        tape_of(parts.front(), p);
        const Tensor& v = tape.value(p);
        if (v.rows() != rows) {
            shape_error("concat_cols", tape.value(parts.front()), v);
        }
        cols += v.cols();
        rg = rg || tape.requires_grad(p);
    }
    Tensor out(rows, cols);
    std::vector<std::size_t> ids;
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const Tensor& v = tape.value(p);
        for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < v.cols(); ++j) {
                out(i, offset + j) = v(i, j);
            }
        }
        offset += v.cols();
        ids.push_back(p.id);
    }
    return tape.record(std::move(out), rg, [ids = std::move(ids)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (auto id : ids) {
            const std::size_t w = t.value(id).cols();
            if (t.requires_grad(Var{&t, id})) {
                Tensor& gi = t.grad(id);
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        gi(i, j) += g(i, offset + j);
                    }
                }
            }
            offset += w;
        }
    });
}

Var dropout(Var x, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw Error(ErrorCode::InvalidRate, "dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (mode == Mode::Eval || rate == 0.0) {
        return x;
    }
    Tape& tape = *x.tape;
    const Tensor& xv = tape.value(x);
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(xv.rows(), xv.cols());
    Tensor out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = uniform_unit(rng) >= rate ? keep_scale : 0.0;
        out[i] = xv[i] * mask[i];
    }
    return tape.record(std::move(out), tape.requires_grad(x),
                       [x = x.id, mask = std::move(mask)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           Tensor& gx = t.grad(x);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                               gx[i] += g[i] * mask[i];
                           }
                       });
}

Var bce_loss(Var predictions, std::span<const double> targets) {
    Tape& tape = *predictions.tape;
    const Tensor& p = tape.value(predictions);
    if (p.cols() != 1 || p.rows() != targets.size() || p.rows() == 0) {
        throw Error(ErrorCode::ShapeMismatch, "bce_loss: predictions " + p.shape_string() + " against " +
                                                  std::to_string(targets.size()) + " targets");
    }
    const double n = static_cast<double>(p.rows());
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const double q = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
        total -= targets[i] * std::log(q) + (1.0 - targets[i]) * std::log(1.0 - q);
    }
    std::vector<double> y(targets.begin(), targets.end());
    return tape.record(Tensor(1, 1, total / n), tape.requires_grad(predictions),
                       [pid = predictions.id, y = std::move(y), n](Tape& t, std::size_t self) {
                           const double g = t.grad(self)[0];
                           const Tensor& p = t.value(pid);
                           Tensor& gp = t.grad(pid);
                           for (std::size_t i = 0; i < p.rows(); ++i) {
                               if (p[i] < kProbabilityClamp || p[i] > 1.0 - kProbabilityClamp) {
                                   continue;
                               }
                               gp[i] += g * (-(y[i] / p[i]) + (1.0 - y[i]) / (1.0 - p[i])) / n;
                           }
                       });
}

Var sum_squares(Var a) {
    Tape& tape = *a.tape;
    double total = 0.0;
    for (double x : tape.value(a).values()) {
        total += x * x;
    }
    return tape.record(Tensor(1, 1, total), tape.requires_grad(a), [a = a.id](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        const Tensor& av = t.value(a);
        Tensor& ga = t.grad(a);
        for (std::size_t i = 0; i < av.size(); ++i) {
            ga[i] += 2.0 * av[i] * g;
        }
    });
}

Var mean(std::span<const Var> scalars) {
    if (scalars.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "mean of no values");
    }
    Tape& tape = *scalars.front().tape;
    double total = 0.0;
    bool rg = false;
    std::vector<std::size_t> ids;
    for (const auto& s : scalars) {
        const Tensor& v = tape.value(s);
        if (v.size() != 1) {
            throw Error(ErrorCode::ShapeMismatch, "mean expects 1x1 values, got " + v.shape_string());
        }
        total += v[0];
        rg = rg || tape.requires_grad(s);
        ids.push_back(s.id);
    }
    const double n = static_cast<double>(scalars.size());
    return tape.record(Tensor(1, 1, total / n), rg, [ids = std::move(ids), n](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] / n;
        for (auto id : ids) {
            if (t.requires_grad(Var{&t, id})) {
                t.grad(id)[0] += g;
            }
        }
    });
}

Var stack_rows(std::span<const Var> rows) {
    if (rows.empty()) {
        throw Error(ErrorCode::ShapeMismatch, "stack_rows: nothing to stack");
    }
    Tape& tape = *rows.front().tape;
    const std::size_t cols = tape.value(rows.front()).cols();
    Tensor out(rows.size(), cols);
    bool rg = false;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor& v = tape.value(rows[i]);
        if (v.rows() != 1 || v.cols() != cols) {
            shape_error("stack_rows", tape.value(rows.front()), v);
        }
        for (std::size_t j = 0; j < cols; ++j) {
            out(i, j) = v[j];
        }
        rg = rg || tape.requires_grad(rows[i]);
        ids.push_back(rows[i].id);
    }
    return tape.record(std::move(out), rg, [ids = std::move(ids)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!t.requires_grad(Var{&t, ids[i]})) {
                continue;
            }
            Tensor& gi = t.grad(ids[i]);
            for (std::size_t j = 0; j < g.cols(); ++j) {
                gi[j] += g(i, j);
            }
        }
    });
}

} // namespace ovid::nn
