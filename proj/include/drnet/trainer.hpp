#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "drnet/image.hpp"
#include "drnet/metrics.hpp"
#include "drnet/network.hpp"
#include "drnet/preclass.hpp"
#include "drnet/synth.hpp"

namespace drnet {

struct TrainOptions {
    std::size_t epochs = 50;
    std::size_t batch = 128;
    SgdMomentum sgd;
    std::uint64_t seed = 1;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

// Per-epoch seeded shuffle, then momentum SGD over minibatches.
// Requires a non-empty patch set containing both classes.
TrainResult train(Network& net, const PatchSet& set, const TrainOptions& opts);

// Classifies every pixel of the pair.
ChangeMask predict_map(const Network& net, const ImagePair& pair, std::size_t batch = 512);

std::string loss_trace_csv(const TrainResult& r);

// Full pipeline on one pair: DI -> labels (FCM or truth) -> sample -> patches ->
// train -> predict -> evaluate.
struct ExperimentConfig {
    NetworkConfig net;
    DiOperator di = DiOperator::log_ratio;
    bool labels_from_truth = false;
    bool balance = false;
    double fraction = 0.06;
    TrainOptions train;
    std::uint64_t seed = 1;
};

struct ExperimentResult {
    ChangeMask map;
    MetricsReport metrics;
    TrainResult trace;
    std::size_t samples = 0;
    std::size_t changed_samples = 0;
};

// Training samples drawn for a pair; depends only on the seed, DI and label mode.
std::vector<Sample> experiment_samples(const ImagePair& pair, const ChangeMask* truth, const ExperimentConfig& cfg);

ExperimentResult run_experiment(const ImagePair& pair, const ChangeMask& truth, const ExperimentConfig& cfg);

// Same, with a pre-drawn sample list and an optional checkpoint destination.
ExperimentResult run_experiment(const ImagePair& pair, const ChangeMask& truth, const ExperimentConfig& cfg,
                                const std::vector<Sample>& samples, Network* trained = nullptr);

}  // namespace drnet
