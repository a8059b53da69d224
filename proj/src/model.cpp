#include "fedul/model.hpp"

#include <cmath>
#include <cstring>

#include "fedul/kernels.hpp"
#include "fedul/rng.hpp"

namespace fedul {

Arch arch_from_string(const std::string& s) {
    if (s == "logistic-regression") return Arch::LogisticRegression;
    if (s == "mlp-2-hidden") return Arch::Mlp2Hidden;
    if (s == "small-cnn") return Arch::SmallCnn;
    throw ConfigError("unknown architecture id: " + s);
}

std::string arch_to_string(Arch a) {
    switch (a) {
        case Arch::LogisticRegression: return "logistic-regression";
        case Arch::Mlp2Hidden: return "mlp-2-hidden";
        case Arch::SmallCnn: return "small-cnn";
    }
    throw ContractError("arch_to_string: bad enum value");
}

void ModelSpec::validate() const {
    if (classes < 2) throw ConfigError("model: classes must be >= 2");
    if (input_h < 1 || input_w < 1 || input_c < 1)
        throw ConfigError("model: input shape entries must be positive");
    switch (arch) {
        case Arch::LogisticRegression:
            break;
        case Arch::Mlp2Hidden: {
            std::vector<int> widths = hidden.empty() ? std::vector<int>{32, 32} : hidden;
            if (widths.size() != 2 || widths[0] < 1 || widths[1] < 1)
                throw ConfigError("model: mlp-2-hidden needs two positive hidden widths");
            break;
        }
        case Arch::SmallCnn: {
            std::vector<int> ch = hidden.empty() ? std::vector<int>{8, 16} : hidden;
            if (ch.size() != 2 || ch[0] < 1 || ch[1] < 1)
                throw ConfigError("model: small-cnn needs two positive channel counts");
            // conv3 -> pool2 -> conv3 -> pool2, valid padding
            const int h1 = input_h - 2, w1 = input_w - 2;
            if (h1 < 2 || w1 < 2)
                throw ConfigError("model: small-cnn input too small for first conv+pool");
            const int h2 = h1 / 2 - 2, w2 = w1 / 2 - 2;
            if (h2 < 1 || w2 < 1)
                throw ConfigError("model: small-cnn input too small for second conv");
            break;
        }
    }
}

namespace {

struct LayerDesc {
    enum class Kind { Dense, Tanh, Conv, Pool } kind;
    // geometry (conv/pool use channel,h,w; dense uses in,out)
    int in = 0, out = 0;
    int c = 0, h = 0, w = 0;    // input plane geometry
    int oc = 0, oh = 0, ow = 0; // output plane geometry
    std::size_t w_off = 0, b_off = 0;
    std::size_t in_size = 0, out_size = 0; // per-sample activation sizes
    int fan_in = 0, fan_out = 0;
    std::size_t w_len = 0, b_len = 0;
};

struct Plan {
    std::vector<LayerDesc> layers;
    std::size_t dim = 0;
    int features = 0;
    int classes = 0;
};

Plan build_plan(const ModelSpec& spec) {
    spec.validate();
    Plan plan;
    plan.features = spec.feature_count();
    plan.classes = spec.classes;

    std::size_t off = 0;
    auto add_dense = [&](int in, int out) {
        LayerDesc d;
        d.kind = LayerDesc::Kind::Dense;
        d.in = in;
        d.out = out;
        d.in_size = static_cast<std::size_t>(in);
        d.out_size = static_cast<std::size_t>(out);
        d.w_off = off;
        d.w_len = static_cast<std::size_t>(in) * out;
        off += d.w_len;
        d.b_off = off;
        d.b_len = static_cast<std::size_t>(out);
        off += d.b_len;
        d.fan_in = in;
        d.fan_out = out;
        plan.layers.push_back(d);
    };
    auto add_tanh = [&](std::size_t size) {
        LayerDesc d;
        d.kind = LayerDesc::Kind::Tanh;
        d.in_size = d.out_size = size;
        plan.layers.push_back(d);
    };
    auto add_conv = [&](int c, int h, int w, int oc) {
        LayerDesc d;
        d.kind = LayerDesc::Kind::Conv;
        d.c = c;
        d.h = h;
        d.w = w;
        d.oc = oc;
        d.oh = h - 2;
        d.ow = w - 2;
        d.in_size = static_cast<std::size_t>(c) * h * w;
        d.out_size = static_cast<std::size_t>(oc) * d.oh * d.ow;
        d.w_off = off;
        d.w_len = static_cast<std::size_t>(oc) * c * 9;
        off += d.w_len;
        d.b_off = off;
        d.b_len = static_cast<std::size_t>(oc);
        off += d.b_len;
        d.fan_in = c * 9;
        d.fan_out = oc * 9;
        plan.layers.push_back(d);
    };
    auto add_pool = [&](int c, int h, int w) {
        LayerDesc d;
        d.kind = LayerDesc::Kind::Pool;
        d.c = c;
        d.h = h;
        d.w = w;
        d.oc = c;
        d.oh = h / 2;
        d.ow = w / 2;
        d.in_size = static_cast<std::size_t>(c) * h * w;
        d.out_size = static_cast<std::size_t>(c) * d.oh * d.ow;
        plan.layers.push_back(d);
    };

    switch (spec.arch) {
        case Arch::LogisticRegression:
            add_dense(plan.features, spec.classes);
            break;
        case Arch::Mlp2Hidden: {
            const std::vector<int> widths =
                spec.hidden.empty() ? std::vector<int>{32, 32} : spec.hidden;
            add_dense(plan.features, widths[0]);
            add_tanh(static_cast<std::size_t>(widths[0]));
            add_dense(widths[0], widths[1]);
            add_tanh(static_cast<std::size_t>(widths[1]));
            add_dense(widths[1], spec.classes);
            break;
        }
        case Arch::SmallCnn: {
            const std::vector<int> ch =
                spec.hidden.empty() ? std::vector<int>{8, 16} : spec.hidden;
            int c = spec.input_c, h = spec.input_h, w = spec.input_w;
            add_conv(c, h, w, ch[0]);
            add_tanh(plan.layers.back().out_size);
            c = ch[0];
            h -= 2;
            w -= 2;
            add_pool(c, h, w);
            h /= 2;
            w /= 2;
            add_conv(c, h, w, ch[1]);
            add_tanh(plan.layers.back().out_size);
            c = ch[1];
            h -= 2;
            w -= 2;
            add_pool(c, h, w);
            h /= 2;
            w /= 2;
            add_dense(c * h * w, spec.classes);
            break;
        }
    }
    plan.dim = off;
    return plan;
}

void require_dim(const ParamVector& params, const Plan& plan, const char* op) {
    if (params.size() != plan.dim)
        throw ContractError(std::string(op) + ": parameter vector has dimension " +
                            std::to_string(params.size()) + ", model needs " +
                            std::to_string(plan.dim));
}

void require_batch(const Batch& batch, const Plan& plan, const char* op) {
    if (batch.n <= 0) throw ContractError(std::string(op) + ": empty batch");
    if (batch.features != plan.features)
        throw ContractError(std::string(op) + ": batch feature count " +
                            std::to_string(batch.features) + " does not match model input " +
                            std::to_string(plan.features));
    if (batch.x.size() != static_cast<std::size_t>(batch.n) * batch.features ||
        batch.y.size() != static_cast<std::size_t>(batch.n))
        throw ContractError(std::string(op) + ": inconsistent batch storage");
}

// Runs the forward pass, keeping every activation for the backward pass.
struct ForwardPass {
    std::vector<std::vector<double>> acts; // acts[0] = input, acts[L] = logits
    std::vector<double> probs;
    std::vector<double> per_loss;
    std::vector<int> preds;
    double mean_loss = 0.0;
};

ForwardPass run_forward(const ParamVector& params, const Plan& plan, const Batch& batch) {
    ForwardPass fp;
    const int n = batch.n;
    fp.acts.resize(plan.layers.size() + 1);
    fp.acts[0] = batch.x;
    for (std::size_t li = 0; li < plan.layers.size(); ++li) {
        const LayerDesc& d = plan.layers[li];
        fp.acts[li + 1].resize(static_cast<std::size_t>(n) * d.out_size);
        const double* in = fp.acts[li].data();
        double* out = fp.acts[li + 1].data();
        switch (d.kind) {
            case LayerDesc::Kind::Dense:
                kernels::dense_forward(n, d.in, d.out, in, params.data() + d.w_off,
                                       params.data() + d.b_off, out);
                break;
            case LayerDesc::Kind::Tanh:
                kernels::tanh_forward(static_cast<std::size_t>(n) * d.out_size, in, out);
                break;
            case LayerDesc::Kind::Conv:
                kernels::conv2d_forward(n, d.c, d.h, d.w, d.oc, 3, 3, in,
                                        params.data() + d.w_off, params.data() + d.b_off, out);
                break;
            case LayerDesc::Kind::Pool:
                kernels::avgpool2_forward(n, d.c, d.h, d.w, in, out);
                break;
        }
    }
    fp.probs.resize(static_cast<std::size_t>(n) * plan.classes);
    fp.per_loss.resize(static_cast<std::size_t>(n));
    fp.preds.resize(static_cast<std::size_t>(n));
    kernels::softmax_xent(n, plan.classes, fp.acts.back().data(), batch.y.data(),
                          fp.probs.data(), fp.per_loss.data(), fp.preds.data());
    double total = 0.0;
    for (int s = 0; s < n; ++s) total += fp.per_loss[s];
    fp.mean_loss = total / n;
    return fp;
}

} // namespace

std::size_t param_count(const ModelSpec& spec) { return build_plan(spec).dim; }

ParamVector init_model(const ModelSpec& spec) {
    const Plan plan = build_plan(spec);
    ParamVector params(plan.dim, 0.0);
    Rng rng(mix_seed(spec.init_seed, seed_tag::init));
    for (const LayerDesc& d : plan.layers) {
        if (d.kind != LayerDesc::Kind::Dense && d.kind != LayerDesc::Kind::Conv) continue;
        const double bound = std::sqrt(6.0 / (d.fan_in + d.fan_out));
        for (std::size_t i = 0; i < d.w_len; ++i)
            params[d.w_off + i] = rng.uniform(-bound, bound);
        for (std::size_t i = 0; i < d.b_len; ++i)
            params[d.b_off + i] = rng.uniform(-bound, bound);
    }
    return params;
}

ForwardResult forward_loss(const ParamVector& params, const ModelSpec& spec,
                           const Batch& batch) {
    const Plan plan = build_plan(spec);
    require_dim(params, plan, "forward_loss");
    require_batch(batch, plan, "forward_loss");
    ForwardPass fp = run_forward(params, plan, batch);
    ForwardResult out;
    out.loss = fp.mean_loss;
    out.per_sample_loss = std::move(fp.per_loss);
    out.predictions = std::move(fp.preds);
    return out;
}

ParamVector backward(const ParamVector& params, const ModelSpec& spec, const Batch& batch) {
    const Plan plan = build_plan(spec);
    require_dim(params, plan, "backward");
    require_batch(batch, plan, "backward");
    ForwardPass fp = run_forward(params, plan, batch);

    const int n = batch.n;
    ParamVector grad(plan.dim, 0.0);

    // d(mean loss)/d(logits) = (softmax - onehot) / n
    std::vector<double> delta(static_cast<std::size_t>(n) * plan.classes);
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < plan.classes; ++j) {
            const std::size_t idx = static_cast<std::size_t>(s) * plan.classes + j;
            delta[idx] = (fp.probs[idx] - (batch.y[s] == j ? 1.0 : 0.0)) / n;
        }

    std::vector<double> delta_prev;
    for (std::size_t li = plan.layers.size(); li-- > 0;) {
        const LayerDesc& d = plan.layers[li];
        const double* in = fp.acts[li].data();
        const double* out = fp.acts[li + 1].data();
        delta_prev.assign(static_cast<std::size_t>(n) * d.in_size, 0.0);
        switch (d.kind) {
            case LayerDesc::Kind::Dense:
                kernels::dense_backward_params(n, d.in, d.out, in, delta.data(),
                                               grad.data() + d.w_off, grad.data() + d.b_off);
                kernels::dense_backward_data(n, d.in, d.out, delta.data(),
                                             params.data() + d.w_off, delta_prev.data());
                break;
            case LayerDesc::Kind::Tanh:
                kernels::tanh_backward(static_cast<std::size_t>(n) * d.out_size, out,
                                       delta.data(), delta_prev.data());
                break;
            case LayerDesc::Kind::Conv:
                kernels::conv2d_backward_params(n, d.c, d.h, d.w, d.oc, 3, 3, in, delta.data(),
                                                grad.data() + d.w_off, grad.data() + d.b_off);
                kernels::conv2d_backward_data(n, d.c, d.h, d.w, d.oc, 3, 3, delta.data(),
                                              params.data() + d.w_off, delta_prev.data());
                break;
            case LayerDesc::Kind::Pool:
                kernels::avgpool2_backward(n, d.c, d.h, d.w, delta.data(), delta_prev.data());
                break;
        }
        delta.swap(delta_prev);
    }
    return grad;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
    if (params.size() != grad.size())
        throw ContractError("sgd_step: dimension mismatch");
    if (!(lr >= 0.0)) throw ContractError("sgd_step: lr must be >= 0");
    ParamVector next = params;
    kernels::axpy(next.size(), -lr, grad.data(), next.data());
    return next;
}

void sgd_step_inplace(ParamVector& params, const ParamVector& grad, double lr) {
    if (params.size() != grad.size())
        throw ContractError("sgd_step: dimension mismatch");
    kernels::axpy(params.size(), -lr, grad.data(), params.data());
}

std::vector<int> predict(const ParamVector& params, const ModelSpec& spec, const Batch& batch) {
    return forward_loss(params, spec, batch).predictions;
}

void check_finite(const ParamVector& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x))
            throw DataError(std::string(what) + ": non-finite value encountered");
}

} // namespace fedul
