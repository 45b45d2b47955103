#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "drnet/image.hpp"
#include "drnet/rng.hpp"
#include "drnet/synth.hpp"

namespace drnet {

enum class DiOperator { log_ratio, mean_ratio };

std::string to_string(DiOperator op);
DiOperator parse_di_operator(const std::string& s);

struct DifferenceImage {
    Image values;  // min-max normalized to [0, 1]
    DiOperator op = DiOperator::log_ratio;
};

// Min-max normalization; a constant image maps to all zeros.
void normalize_unit(Image& image);

// |ln(i2 + 1) - ln(i1 + 1)|, normalized.
DifferenceImage log_ratio(const Image& i1, const Image& i2);
// 1 - min(mu1, mu2) / max(mu1, mu2) over clipped window means (0 where both are 0), normalized.
DifferenceImage mean_ratio(const Image& i1, const Image& i2, std::size_t window = 3);
DifferenceImage difference_image(const ImagePair& pair, DiOperator op);

enum class Label : std::uint8_t { unchanged = 0, changed = 1, uncertain = 2 };

struct LabelField {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<Label> labels;
    std::vector<double> confidence;  // in [0, 1]

    std::size_t size() const { return labels.size(); }
    std::size_t count(Label l) const;
};

struct FcmOptions {
    std::size_t clusters = 3;
    double fuzziness = 2.0;
    std::size_t max_iter = 100;
    double eps = 1e-5;
    // Check that the objective never increases; throws NumericError otherwise.
    bool verify = false;
};

struct FcmResult {
    std::vector<double> centers;      // ascending
    std::vector<double> memberships;  // clusters x points, row per cluster
    std::vector<double> objective;    // after each membership and center update
    std::size_t iterations = 0;
};

// Scalar fuzzy c-means. Memberships are initialized randomly from `rng` and
// normalized, then memberships and centers alternate until the largest center
// move is below eps. Centers are returned in ascending order. A point that
// coincides with one or more centers gets membership 1 to the first of them.
FcmResult fuzzy_cmeans(const std::vector<double>& values, const FcmOptions& opts, Rng& rng);

double fcm_objective(const std::vector<double>& values, const std::vector<double>& centers,
                     const std::vector<double>& memberships, double fuzziness);

// Three-cluster FCM on the DI; lowest center -> unchanged, middle -> uncertain,
// highest -> changed; confidence is the winning membership. A constant DI
// yields all-uncertain labels.
LabelField fcm_preclassify(const DifferenceImage& di, const FcmOptions& opts, Rng& rng);

// Labels taken from a ground-truth mask with confidence 1.
LabelField labels_from_truth(const ChangeMask& truth);

struct Sample {
    Coord coord;
    int label = 0;
};

// Draws floor(fraction * Nt) pixels among the non-uncertain ones. Without
// balance the draw is uniform; with balance each class contributes half,
// highest confidence first, truncated to what is available.
std::vector<Sample> select_samples(const LabelField& labels, double fraction, Rng& rng, bool balance);

}  // namespace drnet
