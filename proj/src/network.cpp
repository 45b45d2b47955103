#include "drnet/network.hpp"

#include <cmath>

namespace drnet {

std::string to_string(ConvType t) { return t == ConvType::regular ? "regular" : "deformable"; }

std::string to_string(PoolType t) {
    switch (t) {
        case PoolType::vanilla: return "vanilla";
        case PoolType::stacked: return "stacked";
        case PoolType::residual: return "residual";
    }
    return "?";
}

ConvType parse_conv_type(const std::string& s) {
    if (s == "regular") return ConvType::regular;
    if (s == "deformable") return ConvType::deformable;
    throw ConfigError("unknown conv type '" + s + "' (expected regular|deformable)");
}

PoolType parse_pool_type(const std::string& s) {
    if (s == "vanilla") return PoolType::vanilla;
    if (s == "stacked") return PoolType::stacked;
    if (s == "residual") return PoolType::residual;
    throw ConfigError("unknown pool type '" + s + "' (expected vanilla|stacked|residual)");
}

void NetworkConfig::validate() const {
    if (patch_size < 5 || patch_size % 2 == 0)
        throw ConfigError("patch_size must be odd and >= 5, got " + std::to_string(patch_size));
    if (c1 == 0 || c2 == 0 || fc_width == 0) throw ConfigError("channel and fc widths must be positive");
    if (classes != 2) throw ConfigError("only binary classification (classes = 2) is supported");
    if (pool_type == PoolType::residual) {
        if (s == 0) throw ConfigError("s must be >= 1");
        for (std::size_t c : {c1, c2})
            if (c % s != 0) throw ConfigError(std::to_string(c) + " not divisible by " + std::to_string(s));
    }
}

std::size_t NetworkConfig::pooled_extent() const {
    const std::size_t after_first = (patch_size + 1) / 2;
    return (after_first + 1) / 2;
}

NetworkConfig ablation_variant(int row, NetworkConfig base) {
    static constexpr struct {
        ConvType conv;
        PoolType pool;
    } rows[kAblationRows] = {
        {ConvType::regular, PoolType::vanilla},    {ConvType::deformable, PoolType::vanilla},
        {ConvType::deformable, PoolType::stacked}, {ConvType::deformable, PoolType::residual},
        {ConvType::regular, PoolType::stacked},    {ConvType::regular, PoolType::residual},
    };
    if (row < 1 || row > kAblationRows) throw ConfigError("ablation row must be in 1..6");
    base.conv_type = rows[row - 1].conv;
    base.pool_type = rows[row - 1].pool;
    return base;
}

std::string ablation_label(int row) {
    const NetworkConfig c = ablation_variant(row);
    return to_string(c.conv_type) + "+" + to_string(c.pool_type);
}

Network Network::build(const NetworkConfig& config, Rng& rng) {
    config.validate();
    Network net;
    net.config_ = config;
    auto he = [&rng](TensorF& w, std::size_t fan_in) {
        w = rng_normal<float>(rng, w.shape(), 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    };
    const bool deformable = config.conv_type == ConvType::deformable;
    net.conv1_ = {nn::DeformableConvLayer<float>::make(config.c1, 2, 3), deformable};
    net.conv2_ = {nn::DeformableConvLayer<float>::make(config.c2, config.c1, 3), deformable};
    net.fc1_ = nn::FcLayer<float>::make(config.fc_width, config.flatten_width());
    net.fc2_ = nn::FcLayer<float>::make(config.classes, config.fc_width);
    // Draw order is fixed so regular and deformable twins share main weights.
    he(net.conv1_.layer.main.weight, 2 * 9);
    he(net.conv2_.layer.main.weight, config.c1 * 9);
    he(net.fc1_.weight, config.flatten_width());
    he(net.fc2_.weight, config.fc_width);
    if (config.pool_type == PoolType::residual) net.residual_.emplace(config.s);
    for (const auto& p : net.parameters()) net.velocity_.emplace_back(p.value->shape());
    return net;
}

std::vector<ParamRef> Network::parameters() {
    std::vector<ParamRef> out;
    for (auto* stage : {&conv1_, &conv2_}) {
        const std::string prefix = stage == &conv1_ ? "conv1" : "conv2";
        out.push_back({prefix + ".weight", &stage->layer.main.weight});
        out.push_back({prefix + ".bias", &stage->layer.main.bias});
        if (stage->deformable) {
            out.push_back({prefix + ".offset.weight", &stage->layer.offset_branch.weight});
            out.push_back({prefix + ".offset.bias", &stage->layer.offset_branch.bias});
        }
    }
    out.push_back({"fc1.weight", &fc1_.weight});
    out.push_back({"fc1.bias", &fc1_.bias});
    out.push_back({"fc2.weight", &fc2_.weight});
    out.push_back({"fc2.bias", &fc2_.bias});
    return out;
}

std::vector<ConstParamRef> Network::parameters() const {
    std::vector<ConstParamRef> out;
    for (auto& p : const_cast<Network*>(this)->parameters()) out.push_back({p.name, p.value});
    return out;
}

struct Network::Tape {
    TensorF input;
    TensorF a1, p1, a2, p2, h, hr;
    PoolCache pool1, pool2;
};

TensorF Network::conv(const ConvStage& stage, const TensorF& x) const {
    return stage.deformable ? nn::deformable_conv_forward(stage.layer, x) : nn::conv2d_forward(stage.layer.main, x);
}

TensorF Network::pool(const TensorF& x, PoolCache* cache) const {
    switch (config_.pool_type) {
        case PoolType::vanilla: {
            nn::PoolResult<float> r = nn::maxpool_forward(x, 2, 2);
            TensorF out = r.out;
            if (cache) cache->vanilla = std::move(r);
            return out;
        }
        case PoolType::stacked: return nn::stacked_pool_forward(x, cache ? &cache->stacked : nullptr);
        case PoolType::residual: return nn::residual_pool_forward(*residual_, x, cache ? &cache->residual : nullptr);
    }
    throw ConfigError("unknown pool type");
}

TensorF Network::pool_backward(const PoolCache& cache, const TensorF& grad) const {
    switch (config_.pool_type) {
        case PoolType::vanilla: return nn::maxpool_backward(cache.vanilla.argmax, cache.vanilla.input_shape, grad);
        case PoolType::stacked: return nn::stacked_pool_backward(cache.stacked, grad);
        case PoolType::residual: return nn::residual_pool_backward(*residual_, cache.residual, grad);
    }
    throw ConfigError("unknown pool type");
}

TensorF Network::run(const TensorF& batch, Tape* tape) const {
    const Shape& s = batch.shape();
    if (s.c != 2 || s.h != config_.patch_size || s.w != config_.patch_size)
        throw ShapeError("network expects (B, 2, " + std::to_string(config_.patch_size) + ", " +
                         std::to_string(config_.patch_size) + ") input, got " + s.str());
    TensorF a1 = conv(conv1_, batch);
    TensorF p1 = pool(nn::relu_forward(a1), tape ? &tape->pool1 : nullptr);
    TensorF a2 = conv(conv2_, p1);
    TensorF p2 = pool(nn::relu_forward(a2), tape ? &tape->pool2 : nullptr);
    TensorF h = nn::fc_forward(fc1_, p2);
    TensorF hr = nn::relu_forward(h);
    TensorF logits = nn::fc_forward(fc2_, hr);
    if (tape) {
        tape->input = batch;
        tape->a1 = std::move(a1);
        tape->p1 = std::move(p1);
        tape->a2 = std::move(a2);
        tape->p2 = std::move(p2);
        tape->h = std::move(h);
        tape->hr = std::move(hr);
    }
    return logits;
}

TensorF Network::forward(const TensorF& batch) const { return run(batch, nullptr); }

std::vector<TensorF> Network::gradients(const TensorF& batch, std::span<const int> labels, double* loss) const {
    Tape tape;
    const TensorF logits = run(batch, &tape);
    const nn::XentResult<float> xent = nn::softmax_xent(logits, labels);
    if (loss) *loss = xent.loss;
    if (!std::isfinite(xent.loss)) return {};

    std::vector<TensorF> grads;
    const nn::FcGrads<float> g_fc2 = nn::fc_backward(fc2_, tape.hr, xent.grad_logits);
    const nn::FcGrads<float> g_fc1 = nn::fc_backward(fc1_, tape.p2, nn::relu_backward(tape.h, g_fc2.x));
    const TensorF g_a2 = nn::relu_backward(tape.a2, pool_backward(tape.pool2, g_fc1.x));

    auto conv_grads = [&](const ConvStage& stage, const TensorF& x, const TensorF& g, std::vector<TensorF>& out) {
        if (stage.deformable) {
            nn::DeformableConvGrads<float> d = nn::deformable_conv_backward(stage.layer, x, g);
            out = {std::move(d.weight), std::move(d.bias), std::move(d.offset_weight), std::move(d.offset_bias)};
            return std::move(d.x);
        }
        nn::ConvGrads<float> c = nn::conv2d_backward(stage.layer.main, x, g);
        out = {std::move(c.weight), std::move(c.bias)};
        return std::move(c.x);
    };
    std::vector<TensorF> conv2_grads, conv1_grads;
    const TensorF g_p1 = conv_grads(conv2_, tape.p1, g_a2, conv2_grads);
    const TensorF g_a1 = nn::relu_backward(tape.a1, pool_backward(tape.pool1, g_p1));
    conv_grads(conv1_, tape.input, g_a1, conv1_grads);

    for (auto& g : conv1_grads) grads.push_back(std::move(g));
    for (auto& g : conv2_grads) grads.push_back(std::move(g));
    grads.push_back(g_fc1.weight);
    grads.push_back(g_fc1.bias);
    grads.push_back(g_fc2.weight);
    grads.push_back(g_fc2.bias);
    return grads;
}

double Network::train_step(const TensorF& batch, std::span<const int> labels, const SgdMomentum& opt) {
    double loss = 0;
    const std::vector<TensorF> grads = gradients(batch, labels, &loss);
    if (!std::isfinite(loss))
        throw TrainingDivergence("non-finite loss at step " + std::to_string(steps_ + 1), steps_ + 1);
    const float lr = static_cast<float>(opt.lr);
    const float mu = static_cast<float>(opt.momentum);
    auto params = parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        TensorF& theta = *params[k].value;
        TensorF& v = velocity_[k];
        const TensorF& g = grads[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = mu * v[i] - lr * g[i];
            theta[i] += v[i];
        }
    }
    ++steps_;
    return loss;
}

}  // namespace drnet
