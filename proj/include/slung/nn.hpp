#pragma once

// Fully connected tanh networks with hand-written reverse mode. Batches are
// stored column-wise: an input batch is (in_dim x B).

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "slung/random.hpp"

namespace slung {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Orthogonal matrix scaled by gain: rows orthonormal when rows <= cols,
// columns orthonormal otherwise.
inline RowMatrix<double> orthogonal_init(int rows, int cols, double gain,
                                         Rng& rng) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("orthogonal_init: empty shape");
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  ColMatrix<double> a(big, small);
  for (int c = 0; c < small; ++c)
    for (int r = 0; r < big; ++r) a(r, c) = rng.normal();
  Eigen::HouseholderQR<ColMatrix<double>> qr(a);
  ColMatrix<double> q =
      qr.householderQ() * ColMatrix<double>::Identity(big, small);
  const ColMatrix<double> r = qr.matrixQR().topRows(small);
  for (int k = 0; k < small; ++k)
    if (r(k, k) < 0.0) q.col(k) *= -1.0;
  RowMatrix<double> w(rows, cols);
  if (rows <= cols)
    w = q.transpose();
  else
    w = q;
  return gain * w;
}

template <typename T>
struct DenseLayer {
  RowMatrix<T> weight;  // out x in
  ColVector<T> bias;    // out
};

template <typename T>
class Mlp {
 public:
  using Matrix = ColMatrix<T>;

  // Cached forward activations: inputs, then each hidden tanh output.
  struct Cache {
    std::vector<Matrix> activations;
  };

  Mlp() = default;

  Mlp(int in_dim, const std::vector<int>& hidden, int out_dim) {
    int prev = in_dim;
    for (int width : hidden) {
      layers_.push_back(zero_layer(width, prev));
      prev = width;
    }
    layers_.push_back(zero_layer(out_dim, prev));
  }

  // Orthogonal weights with `hidden_gain` on hidden layers and `head_gain`
  // on the output layer; biases zero.
  void init_orthogonal(double hidden_gain, double head_gain, Rng& rng) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      auto& l = layers_[k];
      const double gain = k + 1 == layers_.size() ? head_gain : hidden_gain;
      l.weight = orthogonal_init(static_cast<int>(l.weight.rows()),
                                 static_cast<int>(l.weight.cols()), gain, rng)
                     .template cast<T>();
      l.bias.setZero();
    }
  }

  int in_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  int out_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
  std::vector<DenseLayer<T>>& layers() { return layers_; }
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix a = x;
    for (std::size_t k = 0; k + 1 < layers_.size(); ++k)
      a = ((layers_[k].weight * a).colwise() + layers_[k].bias)
              .array()
              .tanh()
              .matrix();
    const auto& head = layers_.back();
    return (head.weight * a).colwise() + head.bias;
  }

  Matrix forward(const Matrix& x, Cache& cache) const {
    check_input(x);
    cache.activations.resize(layers_.size());
    cache.activations[0] = x;
    for (std::size_t k = 0; k + 1 < layers_.size(); ++k)
      cache.activations[k + 1] =
          ((layers_[k].weight * cache.activations[k]).colwise() +
           layers_[k].bias)
              .array()
              .tanh()
              .matrix();
    const auto& head = layers_.back();
    return (head.weight * cache.activations.back()).colwise() + head.bias;
  }

  // Accumulates parameter gradients of a scalar loss into `grads`, given
  // d loss / d output for the batch held in `cache`.
  void backward(const Cache& cache, const Matrix& d_out, Mlp& grads) const {
    Matrix dz = d_out;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const Matrix& a_prev = cache.activations[k];
      grads.layers_[k].weight.noalias() += dz * a_prev.transpose();
      grads.layers_[k].bias.noalias() += dz.rowwise().sum();
      if (k == 0) break;
      Matrix da = layers_[k].weight.transpose() * dz;
      dz = (da.array() * (T(1) - a_prev.array().square())).matrix();
    }
  }

  void set_zero() {
    for (auto& l : layers_) {
      l.weight.setZero();
      l.bias.setZero();
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

 private:
  static DenseLayer<T> zero_layer(int out, int in) {
    if (out < 1 || in < 1) throw std::invalid_argument("Mlp: empty layer");
    return {RowMatrix<T>::Zero(out, in), ColVector<T>::Zero(out)};
  }

  void check_input(const Matrix& x) const {
    if (layers_.empty()) throw std::logic_error("Mlp: no layers");
    if (x.rows() != in_dim())
      throw std::invalid_argument("Mlp: input has " + std::to_string(x.rows()) +
                                  " rows, expected " + std::to_string(in_dim()));
  }

  std::vector<DenseLayer<T>> layers_;
};

}  // namespace slung
