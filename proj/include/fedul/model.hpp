#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedul/errors.hpp"

namespace fedul {

// Flat view of all model parameters in a fixed canonical layer order. The
// unit everything downstream (ledger, aggregation, dampening) operates on.
using ParamVector = std::vector<double>;

enum class Arch { LogisticRegression, Mlp2Hidden, SmallCnn };

Arch arch_from_string(const std::string& s);
std::string arch_to_string(Arch a);

struct ModelSpec {
    Arch arch = Arch::Mlp2Hidden;
    int input_h = 1;
    int input_w = 1;
    int input_c = 1;
    int classes = 2;
    // mlp-2-hidden: two dense widths (default 32,32).
    // small-cnn: two conv channel counts (default 8,16).
    std::vector<int> hidden;
    std::uint64_t init_seed = 0;

    int feature_count() const { return input_h * input_w * input_c; }
    void validate() const; // throws ConfigError
};

struct Batch {
    std::vector<double> x; // n * features, sample-major
    std::vector<int> y;    // class ids
    int n = 0;
    int features = 0;
};

struct ForwardResult {
    double loss = 0.0;
    std::vector<double> per_sample_loss;
    std::vector<int> predictions;
};

std::size_t param_count(const ModelSpec& spec);

// Glorot-uniform init, layer by layer in canonical order; bit-reproducible
// per (spec, seed).
ParamVector init_model(const ModelSpec& spec);

// Mean cross-entropy over the batch plus per-sample losses and argmax
// predictions.
ForwardResult forward_loss(const ParamVector& params, const ModelSpec& spec,
                           const Batch& batch);

// Gradient of the mean cross-entropy w.r.t. every parameter, same layout as
// params.
ParamVector backward(const ParamVector& params, const ModelSpec& spec,
                     const Batch& batch);

// params - lr * grad
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr);
void sgd_step_inplace(ParamVector& params, const ParamVector& grad, double lr);

std::vector<int> predict(const ParamVector& params, const ModelSpec& spec,
                         const Batch& batch);

// Throws DataError if any value is NaN/Inf.
void check_finite(const ParamVector& v, const char* what);

} // namespace fedul
