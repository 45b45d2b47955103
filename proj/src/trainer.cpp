#include "drnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace drnet {

TrainResult train(Network& net, const PatchSet& set, const TrainOptions& opts) {
    if (set.size() == 0) throw ArgumentError("train: empty patch set");
    if (set.labels.size() != set.size()) throw ShapeError("train: labels do not match patches");
    const auto changed = std::count(set.labels.begin(), set.labels.end(), 1);
    if (changed == 0 || static_cast<std::size_t>(changed) == set.size())
        throw ArgumentError("train: patch set must contain both classes");
    if (opts.batch == 0) throw ArgumentError("train: batch size must be positive");

    TrainResult result;
    Rng rng(opts.seed, Stream::shuffle);
    const Shape ps = set.patches.shape();
    const std::size_t per_patch = ps.c * ps.h * ps.w;
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        double sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch, ++batches) {
            const std::size_t count = std::min(opts.batch, order.size() - start);
            TensorF batch({count, ps.c, ps.h, ps.w});
            std::vector<int> labels(count);
            for (std::size_t k = 0; k < count; ++k) {
                const std::size_t src = order[start + k];
                std::copy_n(set.patches.data() + src * per_patch, per_patch, batch.data() + k * per_patch);
                labels[k] = set.labels[src];
            }
            try {
                sum += net.train_step(batch, labels, opts.sgd);
            } catch (const TrainingDivergence& e) {
                throw TrainingDivergence("training diverged in epoch " + std::to_string(epoch + 1) + ", step " +
                                             std::to_string(e.step()),
                                         e.step());
            }
        }
        result.epoch_loss.push_back(sum / static_cast<double>(batches));
    }
    return result;
}

ChangeMask predict_map(const Network& net, const ImagePair& pair, std::size_t batch) {
    const std::size_t p = net.config().patch_size;
    if (pair.height() < p || pair.width() < p)
        throw ArgumentError("predict_map: image " + std::to_string(pair.height()) + "x" +
                            std::to_string(pair.width()) + " is smaller than the " + std::to_string(p) + "px patch");
    if (batch == 0) throw ArgumentError("predict_map: batch size must be positive");
    const PatchExtractor ex(pair, p);
    ChangeMask map(pair.height(), pair.width());
    const std::size_t total = map.size();
    std::vector<Coord> coords;
    for (std::size_t start = 0; start < total; start += batch) {
        const std::size_t count = std::min(batch, total - start);
        coords.resize(count);
        for (std::size_t k = 0; k < count; ++k) coords[k] = {(start + k) / map.width, (start + k) % map.width};
        TensorF patches({count, 2, p, p});
        ex.extract(coords, patches);
        const TensorF logits = net.forward(patches);
        require_finite(logits, "predict_map logits");
        const std::vector<int> cls = argmax_channel(logits);
        for (std::size_t k = 0; k < count; ++k) map.values[start + k] = static_cast<std::uint8_t>(cls[k]);
    }
    return map;
}

std::string loss_trace_csv(const TrainResult& r) {
    std::ostringstream out;
    out << "epoch,loss\n";
    out.precision(9);
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) out << e + 1 << "," << r.epoch_loss[e] << "\n";
    return out.str();
}

std::vector<Sample> experiment_samples(const ImagePair& pair, const ChangeMask* truth, const ExperimentConfig& cfg) {
    LabelField labels;
    if (cfg.labels_from_truth) {
        if (!truth) throw ArgumentError("truth-label mode needs a ground-truth mask");
        require_same_extents(truth->height, truth->width, pair.height(), pair.width(), "truth mask");
        labels = labels_from_truth(*truth);
    } else {
        Rng cluster_rng(cfg.seed, Stream::clustering);
        labels = fcm_preclassify(difference_image(pair, cfg.di), FcmOptions{}, cluster_rng);
    }
    Rng sampling(cfg.seed, Stream::sampling);
    return select_samples(labels, cfg.fraction, sampling, cfg.balance);
}

ExperimentResult run_experiment(const ImagePair& pair, const ChangeMask& truth, const ExperimentConfig& cfg) {
    return run_experiment(pair, truth, cfg, experiment_samples(pair, &truth, cfg));
}

ExperimentResult run_experiment(const ImagePair& pair, const ChangeMask& truth, const ExperimentConfig& cfg,
                                const std::vector<Sample>& samples, Network* trained) {
    pair.validate();
    std::vector<Coord> coords;
    coords.reserve(samples.size());
    for (const Sample& s : samples) coords.push_back(s.coord);
    PatchSet set = extract_patches(pair, coords, cfg.net.patch_size);
    for (const Sample& s : samples) set.labels.push_back(s.label);

    Rng weights(cfg.seed, Stream::weights);
    Network net = Network::build(cfg.net, weights);
    TrainOptions topts = cfg.train;
    topts.seed = cfg.seed;

    ExperimentResult r;
    r.trace = train(net, set, topts);
    r.map = predict_map(net, pair);
    r.metrics = evaluate(r.map, truth);
    r.samples = samples.size();
    r.changed_samples = static_cast<std::size_t>(std::count(set.labels.begin(), set.labels.end(), 1));
    if (trained) *trained = std::move(net);
    return r;
}

}  // namespace drnet
