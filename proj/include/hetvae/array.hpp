#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hetvae/errors.hpp"

namespace hetvae {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

// Dense row-major float64 tensor. All model state (embeddings, latents,
// means, variances) lives in these.
struct Array {
    Shape shape;
    std::vector<double> data;

    Array() = default;
    Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != data.size())
            throw dim_error("array data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
    }

    static Array zeros(Shape s) {
        std::vector<double> d(shape_numel(s), 0.0);
        return Array(std::move(s), std::move(d));
    }
    static Array full(Shape s, double v) {
        std::vector<double> d(shape_numel(s), v);
        return Array(std::move(s), std::move(d));
    }
    static Array scalar(double v) { return Array({}, {v}); }
    static Array vec(std::vector<double> d) {
        Shape s{d.size()};
        return Array(std::move(s), std::move(d));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? 1 : 0); }
    std::size_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Array& o) const { return shape == o.shape; }
};

inline bool all_finite(const Array& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace hetvae
