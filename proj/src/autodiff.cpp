#include "fipgraph/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "fipgraph/error.hpp"
#include "fipgraph/io.hpp"

namespace fipgraph {

std::string shape_string(const Tensor& t) { return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]"; }

// ---------------------------------------------------------------- ParamStore

Parameter& ParamStore::add_xavier(const std::string& name, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
    return add(name, std::move(t));
}

Parameter& ParamStore::add(const std::string& name, Tensor value) {
    if (params_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    Parameter p;
    p.grad = Tensor::Zero(value.rows(), value.cols());
    p.m = Tensor::Zero(value.rows(), value.cols());
    p.v = Tensor::Zero(value.rows(), value.cols());
    p.value = std::move(value);
    return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [name, p] : params_) p.grad.setZero();
}

void adam_step(ParamStore& store, const AdamOptions& o) {
    for (auto& [name, p] : store.entries()) {
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
            throw ShapeError("gradient " + shape_string(p.grad) + " does not match parameter '" + name + "' " +
                             shape_string(p.value));
        ++p.step;
        p.m = o.beta1 * p.m + (1.0 - o.beta1) * p.grad;
        p.v = o.beta2 * p.v + (1.0 - o.beta2) * p.grad.cwiseProduct(p.grad);
        const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(p.step));
        const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(p.step));
        p.value.array() -= o.lr * (p.m.array() / c1) / ((p.v.array() / c2).sqrt() + o.eps);
    }
}

// ---------------------------------------------------------------- Tape

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, {}, &p, true});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, Backward backward) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backward), nullptr, true});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record_with_inputs(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (auto v : inputs) needs = needs || nodes_[v.id].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record_with_inputs(Tensor value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (auto v : inputs) needs = needs || nodes_[v.id].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, nullptr, needs});
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_ref(std::uint32_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw Error("loss belongs to a different tape");
    const auto& v = nodes_[loss.id].value;
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_string(v));
    grad_ref(loss.id).setConstant(1.0);
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
        auto& n = nodes_[id];
        if (n.grad.size() == 0) continue;
        if (n.param) n.param->grad += n.grad;
        if (n.backward) n.backward(*this, id);
    }
}

// ---------------------------------------------------------------- ops

namespace {

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void check_index(const Index& idx, Eigen::Index rows, const char* op) {
    for (auto i : idx)
        if (static_cast<Eigen::Index>(i) >= rows)
            throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " out of range for " +
                             std::to_string(rows) + " rows");
}

}  // namespace

Var matmul(Var a, Var b) {
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.cols() != B.rows()) mismatch("matmul", A, B);
    Tensor out = A * B;
    return a.tape->record_with_inputs(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        if (t.needs_grad(a.id)) t.grad_ref(a.id).noalias() += G * t.value(b).transpose();
        if (t.needs_grad(b.id)) t.grad_ref(b.id).noalias() += t.value(a).transpose() * G;
    });
}

Var add(Var a, Var b) {
    const auto& A = a.value();
    const auto& B = b.value();
    const bool same = A.rows() == B.rows() && A.cols() == B.cols();
    const bool row = B.rows() == 1 && B.cols() == A.cols();
    if (!same && !row) mismatch("add", A, B);
    Tensor out = same ? Tensor(A + B) : Tensor(A.rowwise() + B.row(0));
    return a.tape->record_with_inputs(std::move(out), {a, b}, [a, b, same](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        if (t.needs_grad(a.id)) t.grad_ref(a.id) += G;
        if (t.needs_grad(b.id)) {
            if (same)
                t.grad_ref(b.id) += G;
            else
                t.grad_ref(b.id) += G.colwise().sum();
        }
    });
}

Var hadamard(Var a, Var b) {
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.rows() != B.rows() || A.cols() != B.cols()) mismatch("hadamard", A, B);
    Tensor out = A.cwiseProduct(B);
    return a.tape->record_with_inputs(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        if (t.needs_grad(a.id)) t.grad_ref(a.id) += G.cwiseProduct(t.value(b));
        if (t.needs_grad(b.id)) t.grad_ref(b.id) += G.cwiseProduct(t.value(a));
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const auto rows = parts[0].rows();
    Eigen::Index cols = 0;
    for (auto p : parts) {
        if (p.rows() != rows) mismatch("concat", parts[0].value(), p.value());
        cols += p.cols();
    }
    Tensor out(rows, cols);
    Eigen::Index at = 0;
    for (auto p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    return parts[0].tape->record_with_inputs(std::move(out), parts, [parts](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        Eigen::Index at = 0;
        for (auto p : parts) {
            const auto c = t.value(p).cols();
            if (t.needs_grad(p.id)) t.grad_ref(p.id) += G.middleCols(at, c);
            at += c;
        }
    });
}

Var sigmoid(Var a) {
    Tensor out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return a.tape->record_with_inputs(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
        const Var y{&t, self};
        const auto& Y = t.value(y);
        t.grad_ref(a.id).array() += t.grad(y).array() * Y.array() * (1.0 - Y.array());
    });
}

Var relu(Var a) {
    Tensor out = a.value().cwiseMax(0.0);
    return a.tape->record_with_inputs(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
        const auto& X = t.value(a);
        t.grad_ref(a.id).array() += (X.array() > 0.0).select(t.grad(Var{&t, self}).array(), 0.0);
    });
}

Var row_softmax(Var a) {
    const auto& A = a.value();
    Tensor out(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
        const double mx = A.row(r).maxCoeff();
        out.row(r) = (A.row(r).array() - mx).exp();
        out.row(r) /= out.row(r).sum();
    }
    return a.tape->record_with_inputs(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
        const Var y{&t, self};
        const auto& Y = t.value(y);
        const auto& G = t.grad(y);
        Eigen::VectorXd dot = G.cwiseProduct(Y).rowwise().sum();
        t.grad_ref(a.id).array() += Y.array() * (G.colwise() - dot).array();
    });
}

Var layer_norm(Var x, Var gamma, Var beta) {
    constexpr double kEps = 1e-5;
    const auto& X = x.value();
    if (gamma.rows() != 1 || gamma.cols() != X.cols()) mismatch("layer_norm", X, gamma.value());
    if (beta.rows() != 1 || beta.cols() != X.cols()) mismatch("layer_norm", X, beta.value());
    const auto n = static_cast<double>(X.cols());
    Tensor xhat(X.rows(), X.cols());
    Eigen::VectorXd inv(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const double mu = X.row(r).mean();
        const double var = (X.row(r).array() - mu).square().sum() / n;
        inv[r] = 1.0 / std::sqrt(var + kEps);
        xhat.row(r) = (X.row(r).array() - mu) * inv[r];
    }
    Tensor out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
    return x.tape->record_with_inputs(
        std::move(out), {x, gamma, beta},
        [x, gamma, beta, xhat = std::move(xhat), inv = std::move(inv), n](Tape& t, std::uint32_t self) {
            const auto& G = t.grad(Var{&t, self});
            if (t.needs_grad(gamma.id)) t.grad_ref(gamma.id) += G.cwiseProduct(xhat).colwise().sum();
            if (t.needs_grad(beta.id)) t.grad_ref(beta.id) += G.colwise().sum();
            if (t.needs_grad(x.id)) {
                Tensor dxhat = G.array().rowwise() * t.value(gamma).row(0).array();
                auto& gx = t.grad_ref(x.id);
                for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
                    const double m1 = dxhat.row(r).sum() / n;
                    const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                    gx.row(r).array() += inv[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                }
            }
        });
}

Var scale(Var a, double factor) {
    Tensor out = a.value() * factor;
    return a.tape->record_with_inputs(std::move(out), {a}, [a, factor](Tape& t, std::uint32_t self) {
        t.grad_ref(a.id) += factor * t.grad(Var{&t, self});
    });
}

Var sum(Var a) {
    Tensor out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape->record_with_inputs(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
        t.grad_ref(a.id).array() += t.grad(Var{&t, self})(0, 0);
    });
}

Var mse(Var pred, const Tensor& target, const std::vector<std::uint8_t>& mask) {
    const auto& P = pred.value();
    if (P.rows() != target.rows() || P.cols() != target.cols()) mismatch("mse", P, target);
    if (!mask.empty() && mask.size() != static_cast<std::size_t>(P.rows()))
        throw ShapeError("mse: mask has " + std::to_string(mask.size()) + " rows, prediction " + shape_string(P));
    Tensor diff = P - target;
    std::size_t kept = 0;
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
        if (!mask.empty() && !mask[static_cast<std::size_t>(r)])
            diff.row(r).setZero();
        else
            ++kept;
    }
    const double count = static_cast<double>(kept) * static_cast<double>(P.cols());
    if (count == 0) throw ShapeError("mse: every row is masked");
    Tensor out(1, 1);
    out(0, 0) = diff.squaredNorm() / count;
    return pred.tape->record_with_inputs(std::move(out), {pred},
                                         [pred, diff = std::move(diff), count](Tape& t, std::uint32_t self) {
                                             t.grad_ref(pred.id) += (2.0 * t.grad(Var{&t, self})(0, 0) / count) * diff;
                                         });
}

Var gather_rows(Var a, const Index& idx) {
    const auto& A = a.value();
    check_index(idx, A.rows(), "gather_rows");
    Tensor out(static_cast<Eigen::Index>(idx.size()), A.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = A.row(idx[i]);
    return a.tape->record_with_inputs(std::move(out), {a}, [a, idx](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        auto& gA = t.grad_ref(a.id);
        for (std::size_t i = 0; i < idx.size(); ++i) gA.row(idx[i]) += G.row(static_cast<Eigen::Index>(i));
    });
}

Var scatter_add_rows(Var a, const Index& idx, std::size_t rows) {
    const auto& A = a.value();
    if (idx.size() != static_cast<std::size_t>(A.rows()))
        throw ShapeError("scatter_add_rows: " + std::to_string(idx.size()) + " indices for " + shape_string(A));
    check_index(idx, static_cast<Eigen::Index>(rows), "scatter_add_rows");
    Tensor out = Tensor::Zero(static_cast<Eigen::Index>(rows), A.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) += A.row(static_cast<Eigen::Index>(i));
    return a.tape->record_with_inputs(std::move(out), {a}, [a, idx](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        auto& gA = t.grad_ref(a.id);
        for (std::size_t i = 0; i < idx.size(); ++i) gA.row(static_cast<Eigen::Index>(i)) += G.row(idx[i]);
    });
}

Var segment_softmax(Var scores, const Index& segment, std::size_t segments) {
    const auto& S = scores.value();
    if (segment.size() != static_cast<std::size_t>(S.rows()))
        throw ShapeError("segment_softmax: " + std::to_string(segment.size()) + " segment ids for " + shape_string(S));
    check_index(segment, static_cast<Eigen::Index>(segments), "segment_softmax");
    const auto cols = S.cols();
    Tensor mx = Tensor::Constant(static_cast<Eigen::Index>(segments), cols, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < segment.size(); ++i)
        mx.row(segment[i]) = mx.row(segment[i]).cwiseMax(S.row(static_cast<Eigen::Index>(i)));
    Tensor out(S.rows(), cols);
    Tensor total = Tensor::Zero(static_cast<Eigen::Index>(segments), cols);
    for (std::size_t i = 0; i < segment.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out.row(r) = (S.row(r) - mx.row(segment[i])).array().exp();
        total.row(segment[i]) += out.row(r);
    }
    for (std::size_t i = 0; i < segment.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)).array() /= total.row(segment[i]).array();
    return scores.tape->record_with_inputs(
        std::move(out), {scores}, [scores, segment, segments](Tape& t, std::uint32_t self) {
            const Var y{&t, self};
            const auto& Y = t.value(y);
            const auto& G = t.grad(y);
            Tensor dot = Tensor::Zero(static_cast<Eigen::Index>(segments), Y.cols());
            for (std::size_t i = 0; i < segment.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                dot.row(segment[i]) += G.row(r).cwiseProduct(Y.row(r));
            }
            auto& gS = t.grad_ref(scores.id);
            for (std::size_t i = 0; i < segment.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                gS.row(r).array() += Y.row(r).array() * (G.row(r) - dot.row(segment[i])).array();
            }
        });
}

Var rowdot_heads(Var a, Var b, std::size_t heads) {
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.rows() != B.rows() || A.cols() != B.cols()) mismatch("rowdot_heads", A, B);
    if (heads == 0 || A.cols() % static_cast<Eigen::Index>(heads) != 0)
        throw ShapeError("rowdot_heads: " + std::to_string(A.cols()) + " columns not divisible into " +
                         std::to_string(heads) + " heads");
    const auto k = A.cols() / static_cast<Eigen::Index>(heads);
    const auto h = static_cast<Eigen::Index>(heads);
    Tensor out(A.rows(), h);
    for (Eigen::Index j = 0; j < h; ++j)
        out.col(j) = A.middleCols(j * k, k).cwiseProduct(B.middleCols(j * k, k)).rowwise().sum();
    return a.tape->record_with_inputs(std::move(out), {a, b}, [a, b, k, h](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        for (Eigen::Index j = 0; j < h; ++j) {
            if (t.needs_grad(a.id))
                t.grad_ref(a.id).middleCols(j * k, k).array() +=
                    t.value(b).middleCols(j * k, k).array().colwise() * G.col(j).array();
            if (t.needs_grad(b.id))
                t.grad_ref(b.id).middleCols(j * k, k).array() +=
                    t.value(a).middleCols(j * k, k).array().colwise() * G.col(j).array();
        }
    });
}

Var head_mul(Var alpha, Var v) {
    const auto& A = alpha.value();
    const auto& V = v.value();
    if (A.rows() != V.rows() || A.cols() == 0 || V.cols() % A.cols() != 0) mismatch("head_mul", A, V);
    const auto h = A.cols();
    const auto k = V.cols() / h;
    Tensor out(V.rows(), V.cols());
    for (Eigen::Index j = 0; j < h; ++j) out.middleCols(j * k, k) = V.middleCols(j * k, k).array().colwise() * A.col(j).array();
    return alpha.tape->record_with_inputs(std::move(out), {alpha, v}, [alpha, v, k, h](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        for (Eigen::Index j = 0; j < h; ++j) {
            if (t.needs_grad(alpha.id))
                t.grad_ref(alpha.id).col(j) +=
                    G.middleCols(j * k, k).cwiseProduct(t.value(v).middleCols(j * k, k)).rowwise().sum();
            if (t.needs_grad(v.id))
                t.grad_ref(v.id).middleCols(j * k, k).array() +=
                    G.middleCols(j * k, k).array().colwise() * t.value(alpha).col(j).array();
        }
    });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
    const auto& A = a.value();
    if (start + count > static_cast<std::size_t>(A.cols()))
        throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_string(A));
    const auto s = static_cast<Eigen::Index>(start);
    const auto c = static_cast<Eigen::Index>(count);
    Tensor out = A.middleCols(s, c);
    return a.tape->record_with_inputs(std::move(out), {a}, [a, s, c](Tape& t, std::uint32_t self) {
        t.grad_ref(a.id).middleCols(s, c) += t.grad(Var{&t, self});
    });
}

Var mean_of(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("mean_of: no inputs");
    Tensor out = parts[0].value();
    for (std::size_t i = 1; i < parts.size(); ++i) {
        if (parts[i].rows() != out.rows() || parts[i].cols() != out.cols()) mismatch("mean_of", out, parts[i].value());
        out += parts[i].value();
    }
    const double f = 1.0 / static_cast<double>(parts.size());
    out *= f;
    return parts[0].tape->record_with_inputs(std::move(out), parts, [parts, f](Tape& t, std::uint32_t self) {
        const auto& G = t.grad(Var{&t, self});
        for (auto p : parts)
            if (t.needs_grad(p.id)) t.grad_ref(p.id) += f * G;
    });
}

// ---------------------------------------------------------------- grad check

GradCheckResult grad_check(const LossFn& loss, ParamStore& store, const GradCheckOptions& options) {
    if (!(options.eps > 0)) throw ConfigError("step must be positive");
    store.zero_grad();
    {
        Tape tape;
        tape.backward(loss(tape));
    }
    auto evaluate = [&]() {
        Tape tape;
        return loss(tape).value()(0, 0);
    };

    GradCheckResult result;
    std::mt19937_64 rng(options.seed);
    for (auto& [name, p] : store.entries()) {
        const auto size = static_cast<std::size_t>(p.value.size());
        std::vector<std::size_t> probes(size);
        std::iota(probes.begin(), probes.end(), std::size_t{0});
        if (size > options.probes_per_tensor) {
            std::shuffle(probes.begin(), probes.end(), rng);
            probes.resize(options.probes_per_tensor);
            std::sort(probes.begin(), probes.end());
        }
        const Tensor analytic = p.grad;
        for (auto i : probes) {
            double& x = p.value.data()[i];
            const double saved = x;
            x = saved + options.eps;
            const double up = evaluate();
            x = saved - options.eps;
            const double down = evaluate();
            x = saved;
            const double numeric = (up - down) / (2.0 * options.eps);
            const double a = analytic.data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor});
            ++result.probes;
            if (rel > result.max_rel_error || result.worst_param.empty()) {
                result.max_rel_error = rel;
                result.worst_param = name;
                result.worst_index = i;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
    }
    store.zero_grad();
    return result;
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'F', 'I', 'P', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

}  // namespace

std::string config_hash(const nlohmann::json& config) { return sha256_hex(config.dump()); }

std::string checkpoint_bytes(const ParamStore& store, const nlohmann::json& config, const nlohmann::json& meta) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, p] : store.entries()) params.push_back({{"name", name}, {"shape", {p.value.rows(), p.value.cols()}}});
    nlohmann::json header = {{"params", params}, {"config", config}, {"config_hash", config_hash(config)}};
    if (!meta.is_null()) header["meta"] = meta;
    const auto text = header.dump();
    std::string out(kMagic, sizeof kMagic);
    put_u64(out, text.size());
    out += text;
    for (const auto& [name, p] : store.entries())
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, p.value.data() + i, sizeof bits);
            put_u64(out, bits);
        }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store, const nlohmann::json& config,
                     const nlohmann::json& meta) {
    write_file_atomic(path, checkpoint_bytes(store, config, meta));
}

nlohmann::json parse_checkpoint(const std::string& bytes, ParamStore& store, const std::string& expected_hash,
                                nlohmann::json* meta) {
    if (bytes.size() < 16 || bytes.compare(0, 8, std::string(kMagic, 8)) != 0)
        throw SchemaError("checkpoint: bad magic");
    const auto header_len = get_u64(bytes, 8);
    if (16 + header_len > bytes.size()) throw SchemaError("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("checkpoint header: ") + e.what());
    }
    const auto stored_hash = header.at("config_hash").get<std::string>();
    if (stored_hash != config_hash(header.at("config"))) throw SchemaError("checkpoint: config hash does not match config");
    if (!expected_hash.empty() && stored_hash != expected_hash)
        throw ConfigError("checkpoint config hash " + stored_hash + " does not match expected " + expected_hash);
    std::size_t at = 16 + header_len;
    ParamStore loaded;
    for (const auto& entry : header.at("params")) {
        const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
        const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
        Tensor t(rows, cols);
        if (at + static_cast<std::size_t>(t.size()) * 8 > bytes.size()) throw SchemaError("checkpoint: truncated payload");
        for (Eigen::Index i = 0; i < t.size(); ++i, at += 8) {
            const auto bits = get_u64(bytes, at);
            std::memcpy(t.data() + i, &bits, sizeof bits);
        }
        loaded.add(entry.at("name").get<std::string>(), std::move(t));
    }
    if (at != bytes.size()) throw SchemaError("checkpoint: trailing bytes after payload");
    store = std::move(loaded);
    if (meta) *meta = header.value("meta", nlohmann::json());
    return header.at("config");
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, ParamStore& store, const std::string& expected_hash,
                               nlohmann::json* meta) {
    return parse_checkpoint(read_file(path), store, expected_hash, meta);
}

}  // namespace fipgraph
