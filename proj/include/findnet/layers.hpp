#pragma once

#include <string>
#include <vector>

#include "findnet/ops.hpp"
#include "findnet/rng.hpp"
#include "findnet/tape.hpp"

namespace findnet {

// Visitor over every named tensor of a parameter bundle, learnable or buffer.
// Used by checkpointing; enumeration order is construction order and stable.
using TensorVisitor = std::function<void(const std::string&, Tensor&)>;

// 3x3 or 1x1 convolution layer with per-output-channel bias.
struct ConvLayer {
    Parameter weight;  // [Cout,Cin,k,k]
    Parameter bias;    // [Cout]
    int64_t padding = 0;

    ConvLayer() = default;

    // He-style init: N(0, sqrt(2/fan_in)) weights, zero bias.
    ConvLayer(const std::string& name, int64_t cout, int64_t cin, int64_t k, Rng& rng,
              double weight_scale = 1.0)
        : weight(name + ".weight",
                 rng.normal_tensor({cout, cin, k, k},
                                   weight_scale * std::sqrt(2.0 / static_cast<double>(cin * k * k)))),
          bias(name + ".bias", Tensor::zeros({cout})),
          padding(k / 2) {}

    static ConvLayer zeros(const std::string& name, int64_t cout, int64_t cin, int64_t k) {
        ConvLayer l;
        l.weight = Parameter(name + ".weight", Tensor::zeros({cout, cin, k, k}));
        l.bias = Parameter(name + ".bias", Tensor::zeros({cout}));
        l.padding = k / 2;
        return l;
    }

    int64_t out_channels() const { return weight.value.extent(0); }
    int64_t in_channels() const { return weight.value.extent(1); }

    NodeId apply(Tape& t, NodeId x) {
        return add_bias(t, conv2d(t, x, t.param(weight), padding), t.param(bias));
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }
    void visit(const TensorVisitor& v) {
        v(weight.name, weight.value);
        v(bias.name, bias.value);
    }
};

inline void collect_bn(BatchNormState& bn, std::vector<Parameter*>& out) {
    out.push_back(&bn.gamma);
    out.push_back(&bn.beta);
}

inline void visit_bn(BatchNormState& bn, const TensorVisitor& v) {
    v(bn.gamma.name, bn.gamma.value);
    v(bn.beta.name, bn.beta.value);
    v(bn.name + ".running_mean", bn.running_mean);
    v(bn.name + ".running_var", bn.running_var);
}

}  // namespace findnet
