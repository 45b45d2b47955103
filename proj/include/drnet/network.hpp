#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drnet/nn/conv.hpp"
#include "drnet/nn/dense.hpp"
#include "drnet/nn/pool.hpp"
#include "drnet/rng.hpp"
#include "drnet/tensor.hpp"

namespace drnet {

enum class ConvType { regular, deformable };
enum class PoolType { vanilla, stacked, residual };

std::string to_string(ConvType t);
std::string to_string(PoolType t);
ConvType parse_conv_type(const std::string& s);
PoolType parse_pool_type(const std::string& s);

struct NetworkConfig {
    std::size_t patch_size = 9;
    ConvType conv_type = ConvType::deformable;
    PoolType pool_type = PoolType::residual;
    std::size_t s = 4;
    std::size_t c1 = 16;
    std::size_t c2 = 32;
    std::size_t fc_width = 64;
    std::size_t classes = 2;

    // Throws ConfigError on any violation.
    void validate() const;
    // Spatial extent after both pooling stages.
    std::size_t pooled_extent() const;
    std::size_t flatten_width() const { return c2 * pooled_extent() * pooled_extent(); }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// The six ablation variants, rows 1..6:
//   1 regular + vanilla (basic network)   4 deformable + residual (full model)
//   2 deformable + vanilla                5 regular + stacked
//   3 deformable + stacked                6 regular + residual
constexpr int kAblationRows = 6;
NetworkConfig ablation_variant(int row, NetworkConfig base = {});
std::string ablation_label(int row);

struct SgdMomentum {
    double lr = 1e-2;
    double momentum = 0.9;
};

struct ParamRef {
    std::string name;
    TensorF* value;
};
struct ConstParamRef {
    std::string name;
    const TensorF* value;
};

class Network {
public:
    // He-normal main kernels, zero biases, zero offset branches.
    static Network build(const NetworkConfig& config, Rng& rng);

    const NetworkConfig& config() const { return config_; }

    // batch: (B, 2, patch, patch) -> logits (B, 2, 1, 1)
    TensorF forward(const TensorF& batch) const;

    // Mean cross-entropy, full backward pass, one momentum-SGD update.
    // Returns the pre-update loss; throws TrainingDivergence on a non-finite loss.
    double train_step(const TensorF& batch, std::span<const int> labels, const SgdMomentum& opt);

    std::vector<ParamRef> parameters();
    std::vector<ConstParamRef> parameters() const;

    // Gradients of the mean loss, in parameters() order. Does not update.
    std::vector<TensorF> gradients(const TensorF& batch, std::span<const int> labels, double* loss = nullptr) const;

    std::size_t steps_taken() const { return steps_; }

    // Direct access for tests and forced-head fixtures.
    nn::FcLayer<float>& head() { return fc2_; }

private:
    struct ConvStage {
        nn::DeformableConvLayer<float> layer;
        bool deformable = false;
    };
    struct PoolCache {
        nn::PoolResult<float> vanilla;
        nn::StackedPoolCache<float> stacked;
        nn::ResidualPoolCache<float> residual;
    };
    struct Tape;

    TensorF conv(const ConvStage& stage, const TensorF& x) const;
    TensorF pool(const TensorF& x, PoolCache* cache) const;
    TensorF pool_backward(const PoolCache& cache, const TensorF& grad) const;
    TensorF run(const TensorF& batch, Tape* tape) const;

    NetworkConfig config_;
    ConvStage conv1_, conv2_;
    nn::FcLayer<float> fc1_, fc2_;
    std::optional<nn::ResidualPoolLayer> residual_;
    std::vector<TensorF> velocity_;
    std::size_t steps_ = 0;
};

// Checkpoint: "DRN1", u16 version, config block, then per-parameter records
// (u32 name length, name, 4 x u32 shape, f32 values), all little-endian.
constexpr std::uint16_t kCheckpointVersion = 1;

void save(const Network& net, const std::filesystem::path& path);
Network load(const std::filesystem::path& path);
// Loads into a network built from `expected`; records must match its layers.
Network load(const std::filesystem::path& path, const NetworkConfig& expected);

}  // namespace drnet
