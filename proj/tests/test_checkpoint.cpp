#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "drnet/network.hpp"

using namespace drnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "drnet_checkpoint_test";
    fs::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

Network trained_net(const NetworkConfig& cfg) {
    Rng rng(3, Stream::weights);
    Network net = Network::build(cfg, rng);
    Rng data(3, Stream::data);
    const TensorF batch = rng_uniform<float>(data, {4, 2, 9, 9}, 0, 1);
    const std::vector<int> labels{0, 1, 0, 1};
    for (int k = 0; k < 3; ++k) net.train_step(batch, labels, SgdMomentum{});
    return net;
}

}  // namespace

TEST_CASE("save then load reproduces parameters, config and logits bitwise") {
    for (int row = 1; row <= kAblationRows; ++row) {
        const Network net = trained_net(ablation_variant(row));
        const fs::path p = temp_path("row" + std::to_string(row) + ".drn");
        save(net, p);
        const Network back = load(p);
        CHECK(back.config() == net.config());
        const auto a = net.parameters();
        const auto b = back.parameters();
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k].name == b[k].name);
            CHECK(*a[k].value == *b[k].value);
        }
        Rng data(9, Stream::data);
        const TensorF batch = rng_uniform<float>(data, {3, 2, 9, 9}, 0, 1);
        CHECK(back.forward(batch) == net.forward(batch));
    }
}

TEST_CASE("checkpoint header layout") {
    const fs::path p = temp_path("header.drn");
    save(trained_net(NetworkConfig{}), p);
    const std::string bytes = read_bytes(p);
    REQUIRE(bytes.size() > 6);
    CHECK(bytes.substr(0, 4) == "DRN1");
    CHECK(static_cast<unsigned char>(bytes[4]) == kCheckpointVersion);
    CHECK(static_cast<unsigned char>(bytes[5]) == 0);
    CHECK_FALSE(fs::exists(p.string() + ".tmp"));
}

TEST_CASE("load errors are distinct") {
    const fs::path good = temp_path("good.drn");
    save(trained_net(NetworkConfig{}), good);
    const std::string bytes = read_bytes(good);

    const fs::path bad = temp_path("bad.drn");
    write_bytes(bad, "XXXX" + bytes.substr(4));
    CHECK_THROWS_AS(load(bad), BadMagic);

    std::string version = bytes;
    version[4] = 9;
    write_bytes(bad, version);
    CHECK_THROWS_AS(load(bad), VersionMismatch);

    for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
        write_bytes(bad, bytes.substr(0, cut));
        CHECK_THROWS_AS(load(bad), TruncatedFile);
    }

    write_bytes(bad, bytes + "x");
    CHECK_THROWS_AS(load(bad), LoadError);

    CHECK_THROWS_AS(load(temp_path("missing.drn")), IoError);
}

TEST_CASE("loading against a different config names the first offending layer") {
    const fs::path p = temp_path("cfg.drn");
    save(trained_net(NetworkConfig{}), p);
    NetworkConfig other;
    other.c1 = 8;
    try {
        load(p, other);
        FAIL("expected ParamShapeMismatch");
    } catch (const ParamShapeMismatch& e) {
        CHECK(e.layer() == "conv1.weight");
    }
    NetworkConfig regular;
    regular.conv_type = ConvType::regular;
    CHECK_THROWS_AS(load(p, regular), ParamShapeMismatch);
    CHECK_NOTHROW(load(p, NetworkConfig{}));
}
