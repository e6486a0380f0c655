#include "vpkl/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "vpkl/common.hpp"

namespace vpkl {

namespace {
#ifdef NDEBUG
std::atomic<bool> g_debug_checks{false};
#else
std::atomic<bool> g_debug_checks{true};
#endif
}  // namespace

bool debug_checks_enabled() { return g_debug_checks.load(std::memory_order_relaxed); }
void set_debug_checks(bool enabled) { g_debug_checks.store(enabled, std::memory_order_relaxed); }

int64_t shape_size(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw DimensionError("tensor extent must be positive, got " + std::to_string(e));
        n *= e;
    }
    return n;
}

Tensor Tensor::uninitialized(std::vector<int> shape) {
    Tensor t;
    const int64_t n = shape_size(shape);
    t.shape_ = std::move(shape);
    t.values_.resize(static_cast<size_t>(n));
    return t;
}

Tensor Tensor::zeros(std::vector<int> shape) { return uninitialized(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t = uninitialized(std::move(shape));
    for (double& x : t.values_) x = v;
    return t;
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.values_.assign(1, v);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    const int64_t n = shape_size(shape);
    if (n != static_cast<int64_t>(values.size())) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.values_ = std::move(values);
    if (!t.all_finite()) throw DimensionError("non-finite value in tensor literal");
    return t;
}

int Tensor::extent(int axis) const {
    if (axis < 0 || axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str());
    }
    return shape_[static_cast<size_t>(axis)];
}

double Tensor::item() const {
    if (size() != 1) throw DimensionError("item() requires a scalar, got shape " + shape_str());
    return values_[0];
}

bool Tensor::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

}  // namespace vpkl
