#include "rdm/autodiff.hpp"

#include <cmath>

namespace rdm {

namespace {

void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string(op) + ": produced non-finite values");
}

// matrix view with the matmul convention: rank-1 lhs -> 1 x n row
ConstMatrixMap as_row(const Tensor& t) { return ConstMatrixMap(t.data(), t.rows(), t.cols()); }

// rank-1 rhs -> n x 1 column
ConstMatrixMap as_col(const Tensor& t) {
    if (t.rank() == 1) return ConstMatrixMap(t.data(), t.cols(), 1);
    return ConstMatrixMap(t.data(), t.rows(), t.cols());
}

}  // namespace

const std::vector<std::string>& registered_ops() {
    static const std::vector<std::string> ops = {
        "add", "sub", "mul", "scale", "matmul", "transpose", "add_rows",
        "softmax_rows", "layer_norm_rows", "silu", "log", "concat", "slice",
        "sum", "mean"};
    return ops;
}

const Tape::Node& Tape::node(int id) const {
    require(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(), "Tape: bad node id");
    return nodes_[static_cast<std::size_t>(id)];
}

Tape::Node& Tape::node(int id) {
    require(id >= 0 && static_cast<std::size_t>(id) < nodes_.size(), "Tape: bad node id");
    return nodes_[static_cast<std::size_t>(id)];
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.op = "constant";
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.op = "leaf";
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make_node(const char* op, Tensor value, std::vector<int> parents, Pull pull) {
    check_finite(value, op);
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.parents = std::move(parents);
    n.pull = std::move(pull);
    for (int p : n.parents) {
        if (node(p).requires_grad) {
            n.requires_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Tensor& delta, const char* op) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    if (!delta.all_finite()) throw NumericError(std::string(op) + ": non-finite gradient");
    if (!n.grad_live) {
        n.grad = Tensor::zeros(n.value.shape());
        n.grad_live = true;
    }
    require(n.grad.same_shape(delta), "Tape::accumulate: gradient shape mismatch");
    n.grad.array() += delta.array();
}

void Tape::backward(Var loss) {
    require(loss.tape == this, "backward: loss from another tape");
    Node& ln = node(loss.id);
    require(ln.value.is_scalar(), "backward: loss must be a scalar");
    for (Node& n : nodes_) {
        n.grad = Tensor();
        n.grad_live = false;
    }
    ln.grad = Tensor::scalar(1.0);
    ln.grad_live = true;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.grad_live || !n.requires_grad || !n.pull) continue;
        n.pull(*this, i);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = node(v.id);
    if (n.grad_live) return n.grad;
    return Tensor::zeros(n.value.shape());
}

void Tape::reset() { nodes_.clear(); }

// ---- op helpers ----

namespace {

const Tensor& val(Tape& t, int id) {
    return t.value(Var{&t, id});
}

Tape& same_tape(Var a, Var b, const char* op) {
    require(a.valid() && b.valid(), std::string(op) + ": invalid var");
    require(a.tape == b.tape, std::string(op) + ": vars from different tapes");
    return *a.tape;
}

}  // namespace

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b, "add");
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.same_shape(bv), "add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out(av.shape(), av.array() + bv.array());
    return t.make_node("add", std::move(out), {a.id, b.id}, [pa = a.id, pb = b.id](Tape& tp, int self) {
        const Tensor& g = tp.live_grad(self);
        tp.accumulate(pa, g, "add");
        tp.accumulate(pb, g, "add");
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b, "sub");
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.same_shape(bv), "sub: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out(av.shape(), av.array() - bv.array());
    return t.make_node("sub", std::move(out), {a.id, b.id}, [pa = a.id, pb = b.id](Tape& tp, int self) {
        const Tensor& g = tp.live_grad(self);
        tp.accumulate(pa, g, "sub");
        Tensor neg(g.shape(), -g.array());
        tp.accumulate(pb, neg, "sub");
    });
}

Var mul(Var a, Var b) {
    Tape& t = same_tape(a, b, "mul");
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.same_shape(bv), "mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    Tensor out(av.shape(), av.array() * bv.array());
    return t.make_node("mul", std::move(out), {a.id, b.id}, [pa = a.id, pb = b.id](Tape& tp, int self) {
        const Tensor& g = tp.live_grad(self);
        Tensor da(g.shape(), g.array() * val(tp, pb).array());
        Tensor db(g.shape(), g.array() * val(tp, pa).array());
        tp.accumulate(pa, da, "mul");
        tp.accumulate(pb, db, "mul");
    });
}

Var scale(Var a, double c) {
    require(a.valid(), "scale: invalid var");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    Tensor out(av.shape(), av.array() * c);
    return t.make_node("scale", std::move(out), {a.id}, [pa = a.id, c](Tape& tp, int self) {
        const Tensor& g = tp.live_grad(self);
        Tensor da(g.shape(), g.array() * c);
        tp.accumulate(pa, da, "scale");
    });
}

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul");
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.rank() >= 1 && av.rank() <= 2 && bv.rank() >= 1 && bv.rank() <= 2,
            "matmul: rank must be 1 or 2");
    auto am = as_row(av);
    auto bm = as_col(bv);
    require(am.cols() == bm.rows(), "matmul: inner dimensions " + av.shape_str() + " x " + bv.shape_str());

    RowMatrix prod = am * bm;
    std::vector<int> out_shape;
    if (av.rank() == 2 && bv.rank() == 2)
        out_shape = {static_cast<int>(prod.rows()), static_cast<int>(prod.cols())};
    else if (av.rank() == 2)
        out_shape = {static_cast<int>(prod.rows())};
    else if (bv.rank() == 2)
        out_shape = {static_cast<int>(prod.cols())};
    // both rank 1 -> scalar, empty shape
    Tensor out(out_shape, ConstArrayMap(prod.data(), prod.size()));

    return t.make_node("matmul", std::move(out), {a.id, b.id}, [pa = a.id, pb = b.id](Tape& tp, int self) {
        const Tensor& av2 = val(tp, pa);
        const Tensor& bv2 = val(tp, pb);
        auto am2 = as_row(av2);
        auto bm2 = as_col(bv2);
        const Tensor& g = tp.live_grad(self);
        ConstMatrixMap gm(g.data(), am2.rows(), bm2.cols());

        RowMatrix da = gm * bm2.transpose();
        RowMatrix db = am2.transpose() * gm;
        tp.accumulate(pa, Tensor(av2.shape(), ConstArrayMap(da.data(), da.size())), "matmul");
        tp.accumulate(pb, Tensor(bv2.shape(), ConstArrayMap(db.data(), db.size())), "matmul");
    });
}

Var transpose(Var a) {
    require(a.valid(), "transpose: invalid var");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    require(av.rank() == 2, "transpose: rank-2 tensor required");
    RowMatrix tr = av.matrix().transpose();
    Tensor out({static_cast<int>(tr.rows()), static_cast<int>(tr.cols())}, ConstArrayMap(tr.data(), tr.size()));
    return t.make_node("transpose", std::move(out), {a.id}, [pa = a.id](Tape& tp, int self) {
        const Tensor& g = tp.live_grad(self);
        RowMatrix gt = g.matrix().transpose();
        tp.accumulate(pa, Tensor(val(tp, pa).shape(), ConstArrayMap(gt.data(), gt.size())), "transpose");
    });
}

Var add_rows(Var a, Var v) {
    Tape& t = same_tape(a, v, "add_rows");
    const Tensor& av = t.value(a);
    const Tensor& vv = t.value(v);
    require(av.rank() == 2 && vv.rank() == 1, "add_rows: (m,n) and (n,) required");
    require(av.dim(1) == vv.dim(0), "add_rows: width mismatch");
    Tensor out = av;
    out.matrix().rowwise() += vv.matrix().row(0);
    check_finite(out, "add_rows");
    return t.make_node("add_rows", std::move(out), {a.id, v.id}, [pa = a.id, pv = v.id](Tape& tp, int self) {
        const Tensor& g = tp.live_grad(self);
        tp.accumulate(pa, g, "add_rows");
        Eigen::RowVectorXd col_sum = g.matrix().colwise().sum();
        tp.accumulate(pv, Tensor(val(tp, pv).shape(), ConstArrayMap(col_sum.data(), col_sum.size())), "add_rows");
    });
}

Var softmax_rows(Var a) {
    require(a.valid(), "softmax_rows: invalid var");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    require(av.rank() == 1 || av.rank() == 2, "softmax_rows: rank 1 or 2 required");
    Tensor out = av;
    auto m = out.matrix();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double mx = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - mx).exp();
        m.row(r) /= m.row(r).sum();
    }
    check_finite(out, "softmax_rows");
    return t.make_node("softmax_rows", std::move(out), {a.id}, [pa = a.id](Tape& tp, int self) {
        const Tensor& y = tp.value(Var{&tp, self});
        const Tensor& g = tp.live_grad(self);
        Tensor da = Tensor::zeros(y.shape());
        auto ym = y.matrix();
        auto gm = g.matrix();
        auto dm = da.matrix();
        for (Eigen::Index r = 0; r < ym.rows(); ++r) {
            const double dot = gm.row(r).dot(ym.row(r));
            dm.row(r) = ym.row(r).array() * (gm.row(r).array() - dot);
        }
        tp.accumulate(pa, da, "softmax_rows");
    });
}

Var layer_norm_rows(Var a, double eps) {
    require(a.valid(), "layer_norm_rows: invalid var");
    require(eps > 0.0, "layer_norm_rows: eps must be positive");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    require(av.rank() == 1 || av.rank() == 2, "layer_norm_rows: rank 1 or 2 required");
    require(av.cols() >= 1, "layer_norm_rows: empty rows");

    Tensor out = av;
    auto m = out.matrix();
    std::vector<double> inv_sigma(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double mu = m.row(r).mean();
        const double var = (m.row(r).array() - mu).square().mean();
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<std::size_t>(r)] = is;
        m.row(r) = (m.row(r).array() - mu) * is;
    }
    check_finite(out, "layer_norm_rows");
    return t.make_node("layer_norm_rows", std::move(out), {a.id},
                       [pa = a.id, inv_sigma](Tape& tp, int self) {
                           const Tensor& y = tp.value(Var{&tp, self});
                           const Tensor& g = tp.live_grad(self);
                           Tensor da = Tensor::zeros(y.shape());
                           auto ym = y.matrix();
                           auto gm = g.matrix();
                           auto dm = da.matrix();
                           for (Eigen::Index r = 0; r < ym.rows(); ++r) {
                               const double gmean = gm.row(r).mean();
                               const double gymean = (gm.row(r).array() * ym.row(r).array()).mean();
                               dm.row(r) = inv_sigma[static_cast<std::size_t>(r)] *
                                           (gm.row(r).array() - gmean - ym.row(r).array() * gymean);
                           }
                           tp.accumulate(pa, da, "layer_norm_rows");
                       });
}

Var silu(Var a) {
    require(a.valid(), "silu: invalid var");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    Tensor out(av.shape(), av.array() * (1.0 / (1.0 + (-av.array()).exp())));
    return t.make_node("silu", std::move(out), {a.id}, [pa = a.id](Tape& tp, int self) {
        const Tensor& x = val(tp, pa);
        const Tensor& g = tp.live_grad(self);
        Eigen::ArrayXd sig = 1.0 / (1.0 + (-x.array()).exp());
        Tensor da(x.shape(), g.array() * sig * (1.0 + x.array() * (1.0 - sig)));
        tp.accumulate(pa, da, "silu");
    });
}

Var log(Var a) {
    require(a.valid(), "log: invalid var");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    Tensor out(av.shape(), av.array().log());
    return t.make_node("log", std::move(out), {a.id}, [pa = a.id](Tape& tp, int self) {
        const Tensor& x = val(tp, pa);
        const Tensor& g = tp.live_grad(self);
        Tensor da(x.shape(), g.array() / x.array());
        tp.accumulate(pa, da, "log");
    });
}

Var concat(Var a, Var b) {
    Tape& t = same_tape(a, b, "concat");
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    require(av.rank() == bv.rank() && (av.rank() == 1 || av.rank() == 2),
            "concat: matching rank 1 or 2 required");
    Tensor out;
    if (av.rank() == 1) {
        out = Tensor({av.dim(0) + bv.dim(0)});
        out.array().head(av.size()) = av.array();
        out.array().tail(bv.size()) = bv.array();
    } else {
        require(av.dim(0) == bv.dim(0), "concat: row count mismatch");
        out = Tensor({av.dim(0), av.dim(1) + bv.dim(1)});
        out.matrix().leftCols(av.dim(1)) = av.matrix();
        out.matrix().rightCols(bv.dim(1)) = bv.matrix();
    }
    const int a_cols = static_cast<int>(av.cols());
    const int b_cols = static_cast<int>(bv.cols());
    return t.make_node("concat", std::move(out), {a.id, b.id},
                       [pa = a.id, pb = b.id, a_cols, b_cols](Tape& tp, int self) {
                           const Tensor& g = tp.live_grad(self);
                           const Tensor& av2 = val(tp, pa);
                           const Tensor& bv2 = val(tp, pb);
                           Tensor da = Tensor::zeros(av2.shape());
                           Tensor db = Tensor::zeros(bv2.shape());
                           da.matrix() = g.matrix().leftCols(a_cols);
                           db.matrix() = g.matrix().rightCols(b_cols);
                           tp.accumulate(pa, da, "concat");
                           tp.accumulate(pb, db, "concat");
                       });
}

Var slice(Var a, int start, int len) {
    require(a.valid(), "slice: invalid var");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    require(av.rank() == 1 || av.rank() == 2, "slice: rank 1 or 2 required");
    require(start >= 0 && len >= 1 && start + len <= av.cols(), "slice: range out of bounds");
    Tensor out;
    if (av.rank() == 1) {
        out = Tensor({len});
        out.array() = av.array().segment(start, len);
    } else {
        out = Tensor({av.dim(0), len});
        out.matrix() = av.matrix().middleCols(start, len);
    }
    return t.make_node("slice", std::move(out), {a.id}, [pa = a.id, start, len](Tape& tp, int self) {
        const Tensor& g = tp.live_grad(self);
        Tensor da = Tensor::zeros(val(tp, pa).shape());
        da.matrix().middleCols(start, len) = g.matrix();
        tp.accumulate(pa, da, "slice");
    });
}

Var sum(Var a) {
    require(a.valid(), "sum: invalid var");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    Tensor out = Tensor::scalar(av.array().sum());
    return t.make_node("sum", std::move(out), {a.id}, [pa = a.id](Tape& tp, int self) {
        const double g = tp.live_grad(self).value();
        tp.accumulate(pa, Tensor::full(val(tp, pa).shape(), g), "sum");
    });
}

Var mean(Var a) {
    require(a.valid(), "mean: invalid var");
    Tape& t = *a.tape;
    const Tensor& av = t.value(a);
    const double n = static_cast<double>(av.size());
    Tensor out = Tensor::scalar(av.array().sum() / n);
    return t.make_node("mean", std::move(out), {a.id}, [pa = a.id, n](Tape& tp, int self) {
        const double g = tp.live_grad(self).value();
        tp.accumulate(pa, Tensor::full(val(tp, pa).shape(), g / n), "mean");
    });
}

Var attention(Var queries, Var keys, Var values) {
    Tape& t = same_tape(queries, keys, "attention");
    same_tape(keys, values, "attention");
    const Tensor& qv = t.value(queries);
    const Tensor& kv = t.value(keys);
    const Tensor& vv = t.value(values);
    require(kv.rank() == 2 && vv.rank() == 2, "attention: keys/values must be rank 2");
    require(kv.dim(0) == vv.dim(0), "attention: key/value sequence lengths differ");
    require(qv.cols() == kv.dim(1), "attention: query/key width mismatch");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(kv.dim(1)));
    Var scores = scale(matmul(queries, transpose(keys)), inv_sqrt_d);
    Var weights = softmax_rows(scores);
    return matmul(weights, values);
}

Var mse(Var prediction, Var target) {
    Var diff = sub(prediction, target);
    return mean(mul(diff, diff));
}

// ---- ParamStore ----

void ParamStore::insert(const std::string& name, Tensor value) {
    require(!name.empty(), "ParamStore: empty name");
    require(values_.count(name) == 0, "ParamStore: duplicate parameter '" + name + "'");
    values_.emplace(name, std::move(value));
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = values_.find(name);
    require(it != values_.end(), "ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = values_.find(name);
    require(it != values_.end(), "ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : values_) n += static_cast<std::size_t>(t.size());
    return n;
}

bool ParamStore::same_layout(const ParamStore& other) const {
    if (values_.size() != other.values_.size()) return false;
    auto it = other.values_.begin();
    for (const auto& [name, t] : values_) {
        if (it->first != name || !it->second.same_shape(t)) return false;
        ++it;
    }
    return true;
}

Var ParamVars::at(const std::string& name) const {
    auto it = vars.find(name);
    require(it != vars.end(), "ParamVars: unknown parameter '" + name + "'");
    return it->second;
}

ParamVars register_params(Tape& tape, const ParamStore& params) {
    ParamVars out;
    for (const auto& [name, t] : params) out.vars.emplace(name, tape.leaf(t));
    return out;
}

GradMap backward_params(Tape& tape, Var loss, const ParamVars& params) {
    tape.backward(loss);
    GradMap grads;
    for (const auto& [name, v] : params.vars) grads.emplace(name, tape.grad(v));
    return grads;
}

}  // namespace rdm
