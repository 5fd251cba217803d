#pragma once

// Minimal reverse-mode differentiation over (channels, height, width) tensors
// of doubles. A Tape records every operation in creation order; backward()
// walks it in reverse. Tapes are single-use and single-threaded; build a fresh
// one per forward pass.

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace tracediff::ad {

struct Shape {
    int channels = 1;
    int height = 1;
    int width = 1;

    std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, double fill = 0.0) : shape(s), data(s.size(), fill) {}
    Tensor(Shape s, std::vector<double> values);
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, int)>;

    Var constant(Shape shape, std::vector<double> value);
    Var constant(const Tensor& t) { return constant(t.shape, t.data); }
    Var variable(Shape shape, std::vector<double> value);
    Var variable(const Tensor& t) { return variable(t.shape, t.data); }
    // Registered leaf whose gradient is reported by parameter_grads().
    Var parameter(const std::string& name, const Tensor& t);

    const Shape& shape(Var v) const { return nodes_.at(v.id).shape; }
    const std::vector<double>& value(Var v) const { return nodes_.at(v.id).value; }
    std::vector<double>& grad(Var v) { return grad(v.id); }
    std::vector<double>& grad(int id);
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    double scalar(Var v) const;
    Tensor tensor(Var v) const { return Tensor(shape(v), value(v)); }

    Var push(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs,
             Backward backward);

    void backward(Var scalar_output);

    const std::map<std::string, Var>& parameters() const { return params_; }
    std::map<std::string, std::vector<double>> parameter_grads();

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
        Backward backward;
    };

    std::vector<Node> nodes_;
    std::map<std::string, Var> params_;
};

// Elementwise.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var add_scalar(Tape& t, Var a, double s);
// Multiplies every element of a by the single-element tensor s.
Var mul_scalar(Tape& t, Var a, Var s);
Var exp(Tape& t, Var a);
Var silu(Tape& t, Var a);
Var stop_gradient(Tape& t, Var a);

// Reductions to a single element.
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var mean_abs_diff(Tape& t, Var a, Var b);
Var mean_square_diff(Tape& t, Var a, Var b);
// Mean logistic loss of logits against 0/1 targets (targets not differentiated).
Var bce_with_logits(Tape& t, Var logits, Var targets);

// Layout.
Var concat(Tape& t, Var a, Var b);
Var slice_channels(Tape& t, Var a, int first, int count);
Var avg_pool2(Tape& t, Var a);
Var upsample2(Tape& t, Var a);

// Learned layers. conv weight shape is {cout, cin, k*k}; bias {cout, 1, 1} or invalid.
Var conv2d(Tape& t, Var x, Var weight, Var bias);
Var group_norm(Tape& t, Var x, int groups, Var gamma, Var beta, double eps = 1e-5);
Var add_channel_bias(Tape& t, Var x, Var bias);
// y = W x + b with x {n,1,1}, W {m,n,1}, b {m,1,1}.
Var linear(Tape& t, Var x, Var weight, Var bias);

// out[c](p) = src[c](p + disp(p)) with bilinear, border-replicated sampling.
Var resample(Tape& t, Var src, Var disp);

}  // namespace tracediff::ad
