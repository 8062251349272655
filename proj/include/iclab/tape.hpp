#pragma once

#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "iclab/tensor.hpp"

namespace iclab {

class Tape;

// Handle to a tape node. Cheap to copy; invalidated by Tape::reset().
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& val() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

using GradMap = std::map<std::string, Tensor>;
using ParamMap = std::map<std::string, Tensor>;

// Wengert list: nodes appended in forward order, so the reverse of creation
// order is a valid reverse-topological order and backward visits each node
// exactly once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);
    Var constant(Tensor value);
    Var param(const std::string& name, const Tensor& value);

    // Registers every entry of `params` as a named leaf.
    std::map<std::string, Var> attach(const ParamMap& params);

    // Seeds d(loss)/d(loss) = 1 and pulls gradients back through the list.
    // Returns a gradient per registered parameter; parameters the loss does
    // not reach get zeros. Calling twice without reset() is a usage error.
    GradMap backward(Var loss);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    // Copy of the accumulated gradient; zeros if untouched.
    Tensor grad_of(Var v) const;

    void reset();
    size_t size() const { return nodes_.size(); }

    // --- op plumbing ---
    // Called with (tape, id of the node being differentiated); reads
    // grad_ref(id) and accumulates into the input nodes' buffers.
    using BackFn = std::function<void(Tape&, int)>;

    // Records a node. Throws NumericError if `value` is non-finite. The
    // backward fn is dropped when no input needs a gradient.
    Var record(const char* op, std::initializer_list<Var> inputs, Tensor value, BackFn back);
    Var record(const char* op, const std::vector<Var>& inputs, Tensor value, BackFn back);

    bool id_needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }
    bool needs_grad(Var v) const;
    // Gradient buffer of a node, zero-initialized on first touch. Only call
    // for nodes that need a gradient.
    Tensor& grad_buffer(int id);
    // Read-only access; the buffer must have been touched already.
    const Tensor& grad_ref(int id) const;
    void accum_grad(int id, const Tensor& delta);

private:
    struct Node {
        const char* op = "";
        Tensor value;
        Tensor grad;  // allocated on first accumulation
        BackFn back;
        bool needs_grad = false;
        bool grad_touched = false;
    };

    void check_ownership(Var v) const;
    Var push(const char* op, bool needs_grad, Tensor value, BackFn back);

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, int>> params_;
    bool backward_done_ = false;
};

}  // namespace iclab
