#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace fvita {

// Dense row-major double tensor, up to 4 dimensions. Plain value type; all
// neural-net math in this artifact runs in double precision.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(size_t(numel(shape_)), 0.0);
    }
    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        assert(int64_t(data_.size()) == numel(shape_));
    }

    static int64_t numel(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[size_t(i)]; }
    int ndim() const { return int(shape_.size()); }
    int64_t size() const { return int64_t(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[size_t(i)]; }
    double operator[](int64_t i) const { return data_[size_t(i)]; }

    // 2-D access (row-major).
    double& at(int r, int c) { return data_[size_t(r) * shape_[1] + c]; }
    double at(int r, int c) const { return data_[size_t(r) * shape_[1] + c]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

  private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

}  // namespace fvita
