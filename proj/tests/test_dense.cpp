#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"

using namespace drnet;

TEST_CASE("relu forward and backward") {
    const TensorD x({1, 1, 1, 3}, {-3, 0, 3});
    CHECK(nn::relu_forward(x) == TensorD({1, 1, 1, 3}, {0, 0, 3}));
    CHECK(nn::relu_backward(x, TensorD({1, 1, 1, 3}, {5, 5, 5})) == TensorD({1, 1, 1, 3}, {0, 0, 5}));
}

TEST_CASE("fc flattens the input and applies an affine map") {
    auto layer = nn::FcLayer<double>::make(2, 4);
    layer.weight = TensorD({2, 4, 1, 1}, {1, 0, 0, 1, 0, 2, 0, 0});
    layer.bias = TensorD({2, 1, 1, 1}, {0.5, -1});
    const TensorD x({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(nn::fc_forward(layer, x) == TensorD({1, 2, 1, 1}, {5.5, 3}));
    CHECK_THROWS_AS(nn::fc_forward(layer, TensorD({1, 1, 1, 3})), ShapeError);
}

TEST_CASE("softmax cross-entropy of symmetric logits is ln 2") {
    const TensorD logits({1, 2, 1, 1}, {0, 0});
    const std::vector<int> label{0};
    const auto r = nn::softmax_xent(logits, label);
    CHECK(r.loss == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(r.grad_logits[0] == doctest::Approx(-0.5));
    CHECK(r.grad_logits[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax cross-entropy is stable for large logits and averages over the batch") {
    const TensorD logits({2, 2, 1, 1}, {1000, 0, 0, 1000});
    const std::vector<int> labels{0, 0};
    const auto r = nn::softmax_xent(logits, labels);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(500.0));
    CHECK(r.grad_logits[2] == doctest::Approx(-0.5));
}

TEST_CASE("softmax cross-entropy rejects labels outside {0,1}") {
    const TensorD logits({1, 2, 1, 1});
    const std::vector<int> bad{2};
    CHECK_THROWS_AS(nn::softmax_xent(logits, bad), ArgumentError);
    const std::vector<int> missing;
    CHECK_THROWS_AS(nn::softmax_xent(logits, missing), ShapeError);
}

TEST_CASE("fc and softmax cross-entropy backward match central differences") {
    const auto fc = gradcheck::fc_suite(1, 300);
    INFO("fc worst: " << fc.worst);
    CHECK(fc.failed == 0);
    CHECK(fc.max_rel < 1e-6);
    const auto xe = gradcheck::xent_suite(1, 300);
    INFO("xent worst: " << xe.worst);
    CHECK(xe.failed == 0);
}
