#include <algorithm>
#include <vector>

#include "doctest.h"
#include "drnet/trainer.hpp"

using namespace drnet;

namespace {

SynthResult small_pair(std::uint64_t seed, std::size_t size = 48) {
    SynthParams p;
    p.height = p.width = size;
    p.change_fraction = 0.2;
    Rng rng(seed, Stream::data);
    return generate_pair(p, rng);
}

PatchSet labelled_patches(const SynthResult& r, std::size_t count, std::uint64_t seed) {
    Rng rng(seed, Stream::sampling);
    const auto samples = select_samples(labels_from_truth(r.truth), static_cast<double>(count) / r.truth.size(), rng, true);
    std::vector<Coord> coords;
    for (const Sample& s : samples) coords.push_back(s.coord);
    PatchSet set = extract_patches(r.pair, coords, 9);
    for (const Sample& s : samples) set.labels.push_back(s.label);
    return set;
}

void force_head_bias(Network& net, float b0, float b1) {
    for (auto& p : net.parameters()) {
        if (p.name == "fc2.weight")
            for (float& v : p.value->values()) v = 0.0f;
        if (p.name == "fc2.bias") {
            (*p.value)[0] = b0;
            (*p.value)[1] = b1;
        }
    }
}

}  // namespace

TEST_CASE("zero epochs leaves the network unchanged") {
    const SynthResult r = small_pair(1);
    const PatchSet set = labelled_patches(r, 64, 1);
    Rng rng(1, Stream::weights);
    Network net = Network::build(NetworkConfig{}, rng);
    std::vector<TensorF> before;
    for (const auto& p : std::as_const(net).parameters()) before.push_back(*p.value);
    TrainOptions o;
    o.epochs = 0;
    CHECK(train(net, set, o).epoch_loss.empty());
    const auto after = std::as_const(net).parameters();
    for (std::size_t k = 0; k < before.size(); ++k) CHECK(*after[k].value == before[k]);
}

TEST_CASE("training needs both classes") {
    const SynthResult r = small_pair(2);
    PatchSet set = labelled_patches(r, 32, 2);
    std::fill(set.labels.begin(), set.labels.end(), 0);
    Rng rng(1, Stream::weights);
    Network net = Network::build(NetworkConfig{}, rng);
    CHECK_THROWS_AS(train(net, set, TrainOptions{}), ArgumentError);
    CHECK_THROWS_AS(train(net, PatchSet{}, TrainOptions{}), ArgumentError);
}

TEST_CASE("a dominant head bias forces a uniform map") {
    const SynthResult r = small_pair(3, 32);
    Rng rng(1, Stream::weights);
    Network net = Network::build(NetworkConfig{}, rng);
    force_head_bias(net, 10.0f, -10.0f);
    CHECK(predict_map(net, r.pair).count_changed() == 0);
    force_head_bias(net, -10.0f, 10.0f);
    CHECK(predict_map(net, r.pair).count_changed() == r.truth.size());
}

TEST_CASE("prediction is deterministic and independent of batch size") {
    const SynthResult r = small_pair(4, 32);
    Rng rng(4, Stream::weights);
    const Network net = Network::build(ablation_variant(4), rng);
    const ChangeMask a = predict_map(net, r.pair, 512);
    CHECK(a == predict_map(net, r.pair, 512));
    CHECK(a == predict_map(net, r.pair, 37));
    CHECK_THROWS_AS(predict_map(net, r.pair, 0), ArgumentError);
    ImagePair tiny;
    tiny.i1 = Image(5, 5);
    tiny.i2 = Image(5, 5);
    CHECK_THROWS_AS(predict_map(net, tiny), ArgumentError);
}

TEST_CASE("loss decreases over ten epochs") {
    std::vector<double> ratios;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const SynthResult r = small_pair(seed);
        const PatchSet set = labelled_patches(r, 256, seed);
        Rng rng(seed, Stream::weights);
        Network net = Network::build(ablation_variant(4), rng);
        TrainOptions o;
        o.epochs = 10;
        o.batch = 32;
        o.seed = seed;
        const TrainResult t = train(net, set, o);
        REQUIRE(t.epoch_loss.size() == 10);
        ratios.push_back(t.epoch_loss.back() / t.epoch_loss.front());
    }
    std::sort(ratios.begin(), ratios.end());
    CHECK(ratios[1] < 1.0);
}

TEST_CASE("loss trace CSV") {
    TrainResult r;
    r.epoch_loss = {0.5, 0.25};
    CHECK(loss_trace_csv(r) == "epoch,loss\n1,0.5\n2,0.25\n");
}

TEST_CASE("experiment sampling depends only on seed and label mode") {
    const SynthResult r = small_pair(5);
    ExperimentConfig cfg;
    cfg.labels_from_truth = true;
    const auto a = experiment_samples(r.pair, &r.truth, cfg);
    CHECK(a.size() == static_cast<std::size_t>(0.06 * 48 * 48));
    cfg.net = ablation_variant(1);
    const auto b = experiment_samples(r.pair, &r.truth, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].coord == b[k].coord);
    CHECK_THROWS_AS(experiment_samples(r.pair, nullptr, cfg), ArgumentError);
}

TEST_CASE("an end-to-end experiment reports consistent metrics") {
    const SynthResult r = small_pair(6, 32);
    ExperimentConfig cfg;
    cfg.labels_from_truth = true;
    cfg.fraction = 0.25;
    cfg.train.epochs = 2;
    cfg.train.batch = 64;
    Rng rng(1, Stream::weights);
    Network trained = Network::build(NetworkConfig{}, rng);
    const ExperimentResult res = run_experiment(r.pair, r.truth, cfg, experiment_samples(r.pair, &r.truth, cfg), &trained);
    CHECK(res.metrics.nt == 32 * 32);
    CHECK_NOTHROW(res.metrics.check());
    CHECK(res.trace.epoch_loss.size() == 2);
    CHECK(res.samples == 256);
    CHECK(predict_map(trained, r.pair) == res.map);
}
