#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vpkl {

// Dense real array in row-major order. Values are doubles throughout; the
// models are small enough that precision beats footprint.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor scalar(double v);
    // Validates extents, size and finiteness.
    static Tensor from(std::vector<int> shape, std::vector<double> values);

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    int extent(int axis) const;
    int size() const { return static_cast<int>(values_.size()); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](int i) { return values_[static_cast<size_t>(i)]; }
    double operator[](int i) const { return values_[static_cast<size_t>(i)]; }

    // Rank-2 / rank-3 accessors used by the hot loops.
    double& at(int i, int j) { return values_[static_cast<size_t>(i * shape_[1] + j)]; }
    double at(int i, int j) const { return values_[static_cast<size_t>(i * shape_[1] + j)]; }
    double& at(int i, int j, int k) {
        return values_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double at(int i, int j, int k) const {
        return values_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    double item() const;  // requires size() == 1

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;
    static std::string shape_str(const std::vector<int>& shape);

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && values_ == other.values_;
    }

    // Unchecked constructor for op outputs; debug mode re-screens after each op.
    static Tensor uninitialized(std::vector<int> shape);

private:
    std::vector<int> shape_;
    std::vector<double> values_;
};

int64_t shape_size(const std::vector<int>& shape);

}  // namespace vpkl
