#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "drnet/preclass.hpp"

using namespace drnet;

namespace {

Image filled(std::size_t h, std::size_t w, std::vector<double> px) {
    Image img(h, w);
    img.pixels = std::move(px);
    return img;
}

LabelField field_of(std::size_t h, std::size_t w, const std::vector<Label>& labels, std::vector<double> conf = {}) {
    if (conf.empty()) conf.assign(labels.size(), 1.0);
    return LabelField{h, w, labels, conf};
}

}  // namespace

TEST_CASE("log-ratio of a single changed pixel normalizes to 1") {
    const double e = std::exp(1.0);
    const Image i1(3, 3, 0.0);
    Image i2(3, 3, 0.0);
    i2.pixels[4] = e - 1.0;
    const DifferenceImage di = log_ratio(i1, i2);
    CHECK(di.values.pixels[4] == doctest::Approx(1.0));
    for (std::size_t i = 0; i < 9; ++i)
        if (i != 4) CHECK(di.values.pixels[i] == 0.0);
}

TEST_CASE("log-ratio is symmetric and zero for identical images") {
    const Image a = filled(2, 2, {1, 5, 9, 0});
    const Image b = filled(2, 2, {3, 5, 2, 7});
    CHECK(log_ratio(a, b).values.pixels == log_ratio(b, a).values.pixels);
    for (double v : log_ratio(a, a).values.pixels) CHECK(v == 0.0);
}

TEST_CASE("mean-ratio example and symmetry") {
    const Image a(3, 3, 1.0);
    const Image b(3, 3, 3.0);
    Image a2 = a;
    a2.pixels[0] = 3.0;  // makes the DI non-constant so normalization is visible
    const DifferenceImage raw = mean_ratio(a2, b);
    // Far corner window mean is 1 vs 3 -> 2/3 before normalization, which is the maximum.
    CHECK(raw.values.pixels[8] == doctest::Approx(1.0));
    CHECK(mean_ratio(a2, b).values.pixels == mean_ratio(b, a2).values.pixels);
    for (double v : mean_ratio(a, a).values.pixels) CHECK(v == 0.0);
    CHECK_THROWS_AS(mean_ratio(a, b, 2), ArgumentError);
}

TEST_CASE("difference image input checks") {
    CHECK_THROWS_AS(log_ratio(Image(2, 2), Image(2, 3)), ShapeError);
    CHECK_THROWS_AS(log_ratio(filled(1, 1, {-1}), filled(1, 1, {0})), ArgumentError);
    CHECK(parse_di_operator("mean_ratio") == DiOperator::mean_ratio);
    CHECK_THROWS_AS(parse_di_operator("ratio"), ConfigError);
}

TEST_CASE("fuzzy c-means separates well-separated groups") {
    std::vector<double> x;
    for (double c : {0.1, 0.5, 0.9})
        for (int k = 0; k < 20; ++k) x.push_back(c + 0.001 * (k - 10));
    Rng rng(1, Stream::clustering);
    FcmOptions o;
    o.verify = true;
    const FcmResult r = fuzzy_cmeans(x, o, rng);
    REQUIRE(r.centers.size() == 3);
    CHECK(r.centers[0] == doctest::Approx(0.1).epsilon(0.01));
    CHECK(r.centers[1] == doctest::Approx(0.5).epsilon(0.01));
    CHECK(r.centers[2] == doctest::Approx(0.9).epsilon(0.01));
    const std::size_t n = x.size();
    for (std::size_t p = 0; p < n; ++p) {
        const double s = r.memberships[p] + r.memberships[n + p] + r.memberships[2 * n + p];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(r.memberships[(p / 20) * n + p] > 0.9);
    }
    for (std::size_t k = 1; k < r.objective.size(); ++k) CHECK(r.objective[k] <= r.objective[k - 1] + 1e-12);
}

TEST_CASE("fuzzy c-means argument checks") {
    Rng rng(1, Stream::clustering);
    CHECK_THROWS_AS(fuzzy_cmeans({}, FcmOptions{}, rng), ArgumentError);
    FcmOptions o;
    o.fuzziness = 1.0;
    CHECK_THROWS_AS(fuzzy_cmeans({1, 2}, o, rng), ArgumentError);
    o = {};
    o.clusters = 1;
    CHECK_THROWS_AS(fuzzy_cmeans({1, 2}, o, rng), ArgumentError);
}

TEST_CASE("pre-classification maps the lowest cluster to unchanged and the highest to changed") {
    Image v(4, 4, 0.0);
    for (std::size_t i = 0; i < 16; ++i) v.pixels[i] = i < 8 ? 0.0 : i < 12 ? 0.5 : 1.0;
    Rng rng(2, Stream::clustering);
    const LabelField f = fcm_preclassify(DifferenceImage{v, DiOperator::log_ratio}, FcmOptions{}, rng);
    CHECK(f.count(Label::unchanged) == 8);
    CHECK(f.count(Label::uncertain) == 4);
    CHECK(f.count(Label::changed) == 4);
    for (double c : f.confidence) CHECK(c == doctest::Approx(1.0));
}

TEST_CASE("a constant difference image is all uncertain") {
    Rng rng(2, Stream::clustering);
    const LabelField f = fcm_preclassify(DifferenceImage{Image(5, 5, 0.0), DiOperator::log_ratio}, FcmOptions{}, rng);
    CHECK(f.count(Label::uncertain) == 25);
}

TEST_CASE("truth labels carry full confidence") {
    ChangeMask m(1, 3);
    m.values = {0, 1, 0};
    const LabelField f = labels_from_truth(m);
    CHECK(f.labels == std::vector<Label>{Label::unchanged, Label::changed, Label::unchanged});
    CHECK(f.confidence == std::vector<double>{1, 1, 1});
}

TEST_CASE("sample count is floor(fraction * Nt)") {
    std::vector<Label> labels(256 * 256, Label::unchanged);
    for (std::size_t i = 0; i < labels.size(); i += 7) labels[i] = Label::changed;
    const LabelField f = field_of(256, 256, labels);
    Rng rng(1, Stream::sampling);
    CHECK(select_samples(f, 0.06, rng, false).size() == 3932);
    CHECK(select_samples(f, 1.0, rng, false).size() == labels.size());
}

TEST_CASE("samples are distinct, never uncertain, and deterministic") {
    std::vector<Label> labels(40 * 40);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Label>(i % 3);
    const LabelField f = field_of(40, 40, labels);
    for (bool balance : {false, true}) {
        Rng r1(5, Stream::sampling), r2(5, Stream::sampling);
        const auto a = select_samples(f, 0.5, r1, balance);
        const auto b = select_samples(f, 0.5, r2, balance);
        REQUIRE(a.size() == b.size());
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k].coord == b[k].coord);
            const std::size_t idx = a[k].coord.row * 40 + a[k].coord.col;
            CHECK(labels[idx] != Label::uncertain);
            CHECK(a[k].label == (labels[idx] == Label::changed ? 1 : 0));
            seen.insert({a[k].coord.row, a[k].coord.col});
        }
        CHECK(seen.size() == a.size());
    }
}

TEST_CASE("balanced sampling takes half per class, highest confidence first") {
    std::vector<Label> labels(100, Label::unchanged);
    std::vector<double> conf(100);
    for (std::size_t i = 0; i < 100; ++i) {
        if (i >= 80) labels[i] = Label::changed;
        conf[i] = static_cast<double>(i % 10) / 10.0;
    }
    const LabelField f = field_of(10, 10, labels, conf);
    Rng rng(3, Stream::sampling);
    const auto s = select_samples(f, 0.2, rng, true);
    REQUIRE(s.size() == 20);
    std::size_t changed = 0;
    for (const Sample& x : s) {
        changed += x.label;
        CHECK(conf[x.coord.row * 10 + x.coord.col] >= (x.label ? 0.5 : 0.8));
    }
    CHECK(changed == 10);
}

TEST_CASE("selection errors") {
    const LabelField f = field_of(2, 2, std::vector<Label>(4, Label::unchanged));
    Rng rng(1, Stream::sampling);
    CHECK_THROWS_AS(select_samples(f, 0.5, rng, true), SelectionError);
    CHECK_THROWS_AS(select_samples(f, 0.0, rng, false), ArgumentError);
    CHECK_THROWS_AS(select_samples(f, 1.5, rng, false), ArgumentError);
}
