#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <string>
#include <vector>

#include "rdm/errors.hpp"
#include "rdm/rng.hpp"

namespace rdm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

// Dense row-major f64 tensor. Rank 0 (scalar), 1 (vector) and 2 (matrix) are
// the ranks the op set works with; storage supports any rank. Values are
// immutable once handed to another component; mutation is limited to the
// construction site.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.setZero(static_cast<Eigen::Index>(check_shape(shape_)));
    }

    Tensor(std::vector<int> shape, const Eigen::ArrayXd& data) : shape_(std::move(shape)), data_(data) {
        if (static_cast<std::size_t>(data_.size()) != check_shape(shape_))
            throw ContractError("Tensor: data length does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        t.data_.setConstant(v);
        return t;
    }

    static Tensor scalar(double v) {
        Tensor t;
        t.data_.resize(1);
        t.data_[0] = v;
        return t;
    }

    static Tensor vector(std::initializer_list<double> vals) {
        return vector(std::vector<double>(vals));
    }

    static Tensor vector(const std::vector<double>& vals) {
        Tensor t({static_cast<int>(vals.size())});
        for (std::size_t i = 0; i < vals.size(); ++i) t.data_[static_cast<Eigen::Index>(i)] = vals[i];
        return t;
    }

    static Tensor from_matrix(const Eigen::Ref<const RowMatrix>& m) {
        Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
        MatrixMap(t.data(), m.rows(), m.cols()) = m;
        return t;
    }

    static Tensor gaussian(std::vector<int> shape, Rng& rng, double sigma = 1.0) {
        Tensor t(std::move(shape));
        for (Eigen::Index i = 0; i < t.data_.size(); ++i) t.data_[i] = sigma * rng.gaussian();
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    Eigen::Index size() const { return data_.size(); }
    bool is_scalar() const { return shape_.empty(); }

    int dim(int axis) const {
        require(axis >= 0 && axis < rank(), "Tensor::dim: axis out of range");
        return shape_[static_cast<std::size_t>(axis)];
    }

    // rows/cols under the matrix view: rank 0 -> 1x1, rank 1 -> 1xN, rank 2 -> RxC
    Eigen::Index rows() const { return rank() == 2 ? shape_[0] : 1; }
    Eigen::Index cols() const {
        if (rank() == 2) return shape_[1];
        if (rank() == 1) return shape_[0];
        return 1;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double value() const {
        require(data_.size() == 1, "Tensor::value: not a single-element tensor");
        return data_[0];
    }

    double operator[](Eigen::Index i) const { return data_[i]; }
    double& operator[](Eigen::Index i) { return data_[i]; }
    double operator()(Eigen::Index r, Eigen::Index c) const { return data_[r * cols() + c]; }
    double& operator()(Eigen::Index r, Eigen::Index c) { return data_[r * cols() + c]; }

    ArrayMap array() { return ArrayMap(data_.data(), data_.size()); }
    ConstArrayMap array() const { return ConstArrayMap(data_.data(), data_.size()); }

    MatrixMap matrix() {
        require(rank() <= 2, "Tensor::matrix: rank > 2");
        return MatrixMap(data_.data(), rows(), cols());
    }
    ConstMatrixMap matrix() const {
        require(rank() <= 2, "Tensor::matrix: rank > 2");
        return ConstMatrixMap(data_.data(), rows(), cols());
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const { return data_.isFinite().all(); }

    // f32 quantization used when values enter persistence-bound structures
    Tensor quantized_f32() const {
        Tensor t = *this;
        for (Eigen::Index i = 0; i < t.data_.size(); ++i)
            t.data_[i] = static_cast<double>(static_cast<float>(t.data_[i]));
        return t;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

private:
    static std::size_t check_shape(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ContractError("Tensor: shape dims must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::vector<int> shape_;       // empty = scalar
    Eigen::ArrayXd data_ = Eigen::ArrayXd::Zero(1);
};

}  // namespace rdm
