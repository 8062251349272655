#include "iclab/tape.hpp"

#include <string>

#include "iclab/errors.hpp"

namespace iclab {

const Tensor& Var::val() const {
    if (!valid()) {
        throw UsageError("Var::val on an invalid handle");
    }
    return tape->value(id);
}

Var Tape::push(const char* op, bool needs_grad, Tensor value, BackFn back) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) {
        n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) {
    bool rg = value.requires_grad;
    return push("leaf", rg, std::move(value), BackFn());
}

Var Tape::constant(Tensor value) {
    value.requires_grad = false;
    return push("const", false, std::move(value), BackFn());
}

Var Tape::param(const std::string& name, const Tensor& value) {
    Tensor v = value;
    v.requires_grad = true;
    Var var = push("param", true, std::move(v), BackFn());
    params_.emplace_back(name, var.id);
    return var;
}

std::map<std::string, Var> Tape::attach(const ParamMap& params) {
    std::map<std::string, Var> out;
    for (const auto& [name, tensor] : params) {
        out.emplace(name, param(name, tensor));
    }
    return out;
}

GradMap Tape::backward(Var loss) {
    check_ownership(loss);
    if (backward_done_) {
        throw UsageError("Tape::backward called twice without reset()");
    }
    backward_done_ = true;
    const Tensor& lv = nodes_[static_cast<size_t>(loss.id)].value;
    if (lv.numel() != 1) {
        throw UsageError("Tape::backward: loss must be scalar, got shape " + lv.shape_str());
    }
    if (nodes_[static_cast<size_t>(loss.id)].needs_grad) {
        Tensor seed = Tensor::full(lv.shape, 1.0);
        accum_grad(loss.id, seed);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.grad_touched && n.back) {
                n.back(*this, i);
            }
        }
    }
    GradMap grads;
    for (const auto& [name, id] : params_) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        grads[name] = n.grad_touched ? n.grad : Tensor::zeros(n.value.shape);
    }
    return grads;
}

Tensor Tape::grad_of(Var v) const {
    check_ownership(v);
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    return n.grad_touched ? n.grad : Tensor::zeros(n.value.shape);
}

void Tape::reset() {
    nodes_.clear();
    params_.clear();
    backward_done_ = false;
}

Var Tape::record(const char* op, std::initializer_list<Var> inputs, Tensor value, BackFn back) {
    bool ng = false;
    for (const Var& in : inputs) {
        check_ownership(in);
        if (nodes_[static_cast<size_t>(in.id)].needs_grad) {
            ng = true;
        }
    }
    if (!value.all_finite()) {
        throw NumericError(std::string("non-finite output from op '") + op + "'");
    }
    return push(op, ng, std::move(value), std::move(back));
}

Var Tape::record(const char* op, const std::vector<Var>& inputs, Tensor value, BackFn back) {
    bool ng = false;
    for (const Var& in : inputs) {
        check_ownership(in);
        if (nodes_[static_cast<size_t>(in.id)].needs_grad) {
            ng = true;
        }
    }
    if (!value.all_finite()) {
        throw NumericError(std::string("non-finite output from op '") + op + "'");
    }
    return push(op, ng, std::move(value), std::move(back));
}

bool Tape::needs_grad(Var v) const {
    check_ownership(v);
    return nodes_[static_cast<size_t>(v.id)].needs_grad;
}

Tensor& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_touched) {
        n.grad = Tensor::zeros(n.value.shape);
        n.grad_touched = true;
    }
    return n.grad;
}

const Tensor& Tape::grad_ref(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_touched) {
        throw UsageError(std::string("grad_ref before any accumulation at op '") + n.op + "'");
    }
    return n.grad;
}

void Tape::accum_grad(int id, const Tensor& delta) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad) {
        return;
    }
    Tensor& g = grad_buffer(id);
    if (delta.data.size() != g.data.size()) {
        throw UsageError(std::string("gradient shape mismatch at op '") + n.op + "'");
    }
    double* gd = g.data.data();
    const double* dd = delta.data.data();
    for (size_t i = 0; i < g.data.size(); ++i) {
        gd[i] += dd[i];
    }
}

void Tape::check_ownership(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw UsageError("Var does not belong to this tape (or tape was reset)");
    }
}

}  // namespace iclab
