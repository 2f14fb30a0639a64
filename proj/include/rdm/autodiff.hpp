#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rdm/tensor.hpp"

namespace rdm {

class Tape;

// Lightweight handle into a Tape. Copies are cheap; the tape owns all state.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction, so backward() is a single reverse sweep.
//
// The differentiable op set is closed: add, sub, mul, scale, matmul,
// transpose, add_rows, softmax_rows, layer_norm_rows, silu, log, concat,
// slice, sum, mean. Everything else is composed from these. Every op checks
// its output for non-finite values and raises NumericError naming itself.
class Tape {
public:
    using Pull = std::function<void(Tape&, int self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // non-differentiable input (no gradient is ever produced for it)
    Var constant(Tensor value);

    // differentiable leaf (parameters, or inputs whose gradient is wanted)
    Var leaf(Tensor value);

    // Reverse sweep from a scalar loss. Gradients of all differentiable
    // nodes reachable from the loss are accumulated on the tape.
    void backward(Var loss);

    const Tensor& value(Var v) const { return node(v.id).value; }

    // Gradient after backward(); zero tensor if the node was not reached.
    Tensor grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }
    void reset();

    // --- used by the op implementations ---
    Var make_node(const char* op, Tensor value, std::vector<int> parents, Pull pull);
    void accumulate(int id, const Tensor& delta, const char* op);
    bool requires_grad(int id) const { return node(id).requires_grad; }
    const Tensor& live_grad(int id) const { return node(id).grad; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_live = false;
        const char* op = "";
        std::vector<int> parents;
        Pull pull;
    };

    const Node& node(int id) const;
    Node& node(int id);

    std::vector<Node> nodes_;
};

// Names of the registered primitive ops; the gradient-check suite walks this
// list so a new primitive cannot land without a finite-difference case.
const std::vector<std::string>& registered_ops();

// ---- primitive ops ----
Var add(Var a, Var b);                 // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // elementwise
Var scale(Var a, double c);
Var matmul(Var a, Var b);              // rank-1 lhs is a row, rank-1 rhs a column
Var transpose(Var a);                  // rank 2
Var add_rows(Var a, Var v);            // (m,n) + (n,) broadcast over rows
Var softmax_rows(Var a);               // stable, max-subtracted, rowwise
Var layer_norm_rows(Var a, double eps = 1e-5);
Var silu(Var a);
Var log(Var a);
Var concat(Var a, Var b);              // along last axis
Var slice(Var a, int start, int len);  // along last axis
Var sum(Var a);                        // -> scalar
Var mean(Var a);                       // -> scalar

// ---- composites ----
// softmax(q k^T / sqrt(d)) v; rank-1 q gives a rank-1 result.
Var attention(Var queries, Var keys, Var values);

// mean squared error over all elements
Var mse(Var prediction, Var target);

// ---- parameter bookkeeping ----

// Named parameter tensors with deterministic iteration order.
class ParamStore {
public:
    void insert(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return values_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    std::size_t size() const { return values_.size(); }
    std::size_t scalar_count() const;

    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }
    auto begin() { return values_.begin(); }
    auto end() { return values_.end(); }

    bool same_layout(const ParamStore& other) const;

private:
    std::map<std::string, Tensor> values_;
};

using GradMap = std::map<std::string, Tensor>;

// Parameters registered on a tape for one forward/backward pass.
struct ParamVars {
    std::map<std::string, Var> vars;
    Var at(const std::string& name) const;
};

ParamVars register_params(Tape& tape, const ParamStore& params);

// backward() + gradient collection for every registered parameter.
GradMap backward_params(Tape& tape, Var loss, const ParamVars& params);

}  // namespace rdm
