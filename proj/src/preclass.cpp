#include "drnet/preclass.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace drnet {

std::string to_string(DiOperator op) { return op == DiOperator::log_ratio ? "log_ratio" : "mean_ratio"; }

DiOperator parse_di_operator(const std::string& s) {
    if (s == "log_ratio" || s == "log-ratio") return DiOperator::log_ratio;
    if (s == "mean_ratio" || s == "mean-ratio") return DiOperator::mean_ratio;
    throw ConfigError("unknown DI operator '" + s + "' (expected log_ratio|mean_ratio)");
}

void normalize_unit(Image& image) {
    if (image.pixels.empty()) return;
    const auto [lo, hi] = std::minmax_element(image.pixels.begin(), image.pixels.end());
    const double lo_v = *lo, span = *hi - *lo;
    for (auto& v : image.pixels) v = span > 0 ? (v - lo_v) / span : 0.0;
}

namespace {

void check_pair(const Image& i1, const Image& i2) {
    require_same_extents(i1.height, i1.width, i2.height, i2.width, "difference image");
    for (const Image* img : {&i1, &i2})
        for (double v : img->pixels)
            if (!(v >= 0.0)) throw ArgumentError("difference image: intensities must be >= 0");
}

Image window_means(const Image& img, std::size_t window) {
    const long half = static_cast<long>(window / 2);
    const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
    Image out(img.height, img.width);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            double sum = 0;
            int n = 0;
            for (long yy = std::max(0L, y - half); yy <= std::min(h - 1, y + half); ++yy)
                for (long xx = std::max(0L, x - half); xx <= std::min(w - 1, x + half); ++xx, ++n)
                    sum += img.pixels[static_cast<std::size_t>(yy * w + xx)];
            out.pixels[static_cast<std::size_t>(y * w + x)] = sum / n;
        }
    return out;
}

}  // namespace

DifferenceImage log_ratio(const Image& i1, const Image& i2) {
    check_pair(i1, i2);
    DifferenceImage di{Image(i1.height, i1.width), DiOperator::log_ratio};
    for (std::size_t i = 0; i < i1.size(); ++i)
        di.values.pixels[i] = std::abs(std::log(i2.pixels[i] + 1.0) - std::log(i1.pixels[i] + 1.0));
    normalize_unit(di.values);
    return di;
}

DifferenceImage mean_ratio(const Image& i1, const Image& i2, std::size_t window) {
    check_pair(i1, i2);
    if (window == 0 || window % 2 == 0) throw ArgumentError("mean_ratio window must be odd");
    const Image m1 = window_means(i1, window), m2 = window_means(i2, window);
    DifferenceImage di{Image(i1.height, i1.width), DiOperator::mean_ratio};
    for (std::size_t i = 0; i < i1.size(); ++i) {
        const double lo = std::min(m1.pixels[i], m2.pixels[i]);
        const double hi = std::max(m1.pixels[i], m2.pixels[i]);
        di.values.pixels[i] = hi > 0 ? 1.0 - lo / hi : 0.0;
    }
    normalize_unit(di.values);
    return di;
}

DifferenceImage difference_image(const ImagePair& pair, DiOperator op) {
    return op == DiOperator::log_ratio ? log_ratio(pair.i1, pair.i2) : mean_ratio(pair.i1, pair.i2);
}

std::size_t LabelField::count(Label l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

double fcm_objective(const std::vector<double>& values, const std::vector<double>& centers,
                     const std::vector<double>& memberships, double fuzziness) {
    const std::size_t n = values.size();
    double j = 0;
    for (std::size_t k = 0; k < centers.size(); ++k)
        for (std::size_t p = 0; p < n; ++p) {
            const double d = values[p] - centers[k];
            j += std::pow(memberships[k * n + p], fuzziness) * d * d;
        }
    return j;
}

namespace {

void update_centers(const std::vector<double>& x, const std::vector<double>& u, double m, std::vector<double>& v) {
    const std::size_t n = x.size();
    for (std::size_t k = 0; k < v.size(); ++k) {
        double num = 0, den = 0;
        for (std::size_t p = 0; p < n; ++p) {
            const double w = std::pow(u[k * n + p], m);
            num += w * x[p];
            den += w;
        }
        if (den > 0) v[k] = num / den;  // otherwise the cluster is empty; keep its center
    }
}

void update_memberships(const std::vector<double>& x, const std::vector<double>& v, double m,
                        std::vector<double>& u) {
    const std::size_t n = x.size(), c = v.size();
    const double power = 2.0 / (m - 1.0);
    std::vector<double> d(c);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t nearest = 0;
        for (std::size_t k = 0; k < c; ++k) {
            d[k] = std::abs(x[p] - v[k]);
            if (d[k] < d[nearest]) nearest = k;
        }
        if (d[nearest] == 0.0) {
            for (std::size_t k = 0; k < c; ++k) u[k * n + p] = k == nearest ? 1.0 : 0.0;
            continue;
        }
        // Ratios against the nearest distance keep the powers bounded by 1.
        double sum = 0;
        for (std::size_t k = 0; k < c; ++k) sum += std::pow(d[nearest] / d[k], power);
        for (std::size_t k = 0; k < c; ++k) u[k * n + p] = std::pow(d[nearest] / d[k], power) / sum;
    }
}

}  // namespace

FcmResult fuzzy_cmeans(const std::vector<double>& values, const FcmOptions& opts, Rng& rng) {
    if (values.empty()) throw ArgumentError("fuzzy c-means: empty input");
    if (opts.clusters < 2) throw ArgumentError("fuzzy c-means needs at least 2 clusters");
    if (!(opts.fuzziness > 1.0)) throw ArgumentError("fuzzy c-means needs fuzziness m > 1");
    const std::size_t n = values.size(), c = opts.clusters;
    const double m = opts.fuzziness;

    FcmResult r;
    r.memberships.resize(c * n);
    for (std::size_t p = 0; p < n; ++p) {
        double sum = 0;
        for (std::size_t k = 0; k < c; ++k) sum += (r.memberships[k * n + p] = 0.05 + rng.uniform());
        for (std::size_t k = 0; k < c; ++k) r.memberships[k * n + p] /= sum;
    }
    r.centers.assign(c, 0.0);

    auto record = [&](double j) {
        if (opts.verify && !r.objective.empty()) {
            const double prev = r.objective.back();
            if (j > prev + 1e-12 * std::max(1.0, std::abs(prev)))
                throw NumericError("fuzzy c-means objective increased from " + std::to_string(prev) + " to " +
                                   std::to_string(j));
        }
        r.objective.push_back(j);
    };

    std::vector<double> previous;
    for (std::size_t it = 0; it < std::max<std::size_t>(opts.max_iter, 1); ++it) {
        previous = r.centers;
        update_centers(values, r.memberships, m, r.centers);
        record(fcm_objective(values, r.centers, r.memberships, m));
        update_memberships(values, r.centers, m, r.memberships);
        record(fcm_objective(values, r.centers, r.memberships, m));
        r.iterations = it + 1;
        if (it > 0) {
            double move = 0;
            for (std::size_t k = 0; k < c; ++k) move = std::max(move, std::abs(r.centers[k] - previous[k]));
            if (move < opts.eps) break;
        }
    }

    // Ascending centers, memberships permuted to match.
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return r.centers[a] < r.centers[b]; });
    std::vector<double> centers(c), memberships(c * n);
    for (std::size_t k = 0; k < c; ++k) {
        centers[k] = r.centers[order[k]];
        std::copy_n(r.memberships.begin() + static_cast<long>(order[k] * n), n,
                    memberships.begin() + static_cast<long>(k * n));
    }
    r.centers = std::move(centers);
    r.memberships = std::move(memberships);
    return r;
}

LabelField fcm_preclassify(const DifferenceImage& di, const FcmOptions& opts, Rng& rng) {
    const std::vector<double>& x = di.values.pixels;
    if (x.empty()) throw ArgumentError("fcm_preclassify: empty difference image");
    if (opts.clusters != 3) throw ArgumentError("fcm_preclassify uses exactly 3 clusters");

    const std::size_t n = x.size();
    LabelField field{di.values.height, di.values.width, std::vector<Label>(n, Label::uncertain),
                     std::vector<double>(n, 1.0 / 3.0)};
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (*lo == *hi) return field;  // all centers coincide

    const FcmResult fcm = fuzzy_cmeans(x, opts, rng);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < 3; ++k)
            if (fcm.memberships[k * n + p] > fcm.memberships[best * n + p]) best = k;
        field.labels[p] = best == 0 ? Label::unchanged : best == 2 ? Label::changed : Label::uncertain;
        field.confidence[p] = fcm.memberships[best * n + p];
    }
    return field;
}

LabelField labels_from_truth(const ChangeMask& truth) {
    LabelField field{truth.height, truth.width, std::vector<Label>(truth.size()), std::vector<double>(truth.size(), 1.0)};
    for (std::size_t i = 0; i < truth.size(); ++i) field.labels[i] = truth.values[i] ? Label::changed : Label::unchanged;
    return field;
}

namespace {

template <typename V>
void shuffle(V& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

std::vector<Sample> select_samples(const LabelField& labels, double fraction, Rng& rng, bool balance) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ArgumentError("sample fraction must be in (0, 1], got " + std::to_string(fraction));
    const std::size_t total = labels.size();
    const auto wanted = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total)));

    auto to_sample = [&](std::size_t idx) {
        return Sample{{idx / labels.width, idx % labels.width}, labels.labels[idx] == Label::changed ? 1 : 0};
    };
    std::vector<Sample> out;

    if (!balance) {
        std::vector<std::size_t> eligible;
        for (std::size_t i = 0; i < total; ++i)
            if (labels.labels[i] != Label::uncertain) eligible.push_back(i);
        shuffle(eligible, rng);
        eligible.resize(std::min(wanted, eligible.size()));
        for (std::size_t idx : eligible) out.push_back(to_sample(idx));
        return out;
    }

    const std::size_t quota[2] = {wanted / 2, wanted - wanted / 2};
    for (Label cls : {Label::unchanged, Label::changed}) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < total; ++i)
            if (labels.labels[i] == cls) pool.push_back(i);
        if (pool.empty())
            throw SelectionError(std::string("no eligible pixels of class '") +
                                 (cls == Label::changed ? "changed" : "unchanged") + "' for balanced sampling");
        shuffle(pool, rng);  // random order among equal confidences
        std::stable_sort(pool.begin(), pool.end(),
                         [&](auto a, auto b) { return labels.confidence[a] > labels.confidence[b]; });
        pool.resize(std::min(quota[cls == Label::changed], pool.size()));
        for (std::size_t idx : pool) out.push_back(to_sample(idx));
    }
    return out;
}

}  // namespace drnet
