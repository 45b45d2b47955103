#include "drnet/tensor.hpp"

namespace drnet {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
}

std::size_t element_count(const Shape& s) {
    std::size_t total = 1;
    for (std::size_t e : {s.n, s.c, s.h, s.w}) {
        if (e != 0 && total > std::numeric_limits<std::size_t>::max() / e)
            throw ShapeError("tensor extent product overflows: " + s.str());
        total *= e;
    }
    // Vector storage cannot exceed max_size either.
    if (total > std::vector<double>().max_size()) throw ShapeError("tensor too large: " + s.str());
    return total;
}

}  // namespace drnet
