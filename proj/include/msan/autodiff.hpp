#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace msan::ad {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Row-major dimensions; rank 1 for vectors, rank 2 for matrices, {1} scalars.
struct Shape {
  std::vector<int> dims;

  int numel() const {
    int n = 1;
    for (int d : dims) n *= d;
    return n;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Lightweight handle into the active tape.
struct Tensor {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape. One tape per rollout; nodes are recorded in
// topological (append) order and backward() visits them exactly once in
// reverse.
class Tape {
 public:
  Tensor leaf(std::vector<double> values, Shape shape);
  Tensor constant(std::vector<double> values, Shape shape);
  Tensor scalar(double v) { return constant({v}, Shape{{1}}); }

  const Shape& shape(Tensor t) const { return shapes_.at(t.id); }
  const std::vector<double>& values(Tensor t) const { return values_.at(t.id); }
  const std::vector<double>& grad(Tensor t) const;

  // Elementwise (same shape).
  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  Tensor scale(Tensor a, double c);
  Tensor tanh(Tensor a);
  Tensor sigmoid(Tensor a);
  Tensor exp(Tensor a);
  Tensor log(Tensor a);

  // matmul: (m,k)x(k,n)->(m,n) or (m,k)x(k)->(m).
  Tensor matmul(Tensor a, Tensor b);
  // A^T x for A (m,n), x (m) -> (n); avoids materializing the transpose.
  Tensor matvec_t(Tensor a, Tensor x);

  // 1-D concatenation / slicing.
  Tensor concat(Tensor a, Tensor b);
  Tensor slice(Tensor a, int start, int len);

  // Builds an (r, c) matrix from c column vectors of length r.
  Tensor stack_cols(const std::vector<Tensor>& cols);

  Tensor sum(Tensor a);
  Tensor mean(Tensor a);

  // Softmax over a vector with positions where blocked[i] != 0 receiving
  // probability exactly 0 and gradient exactly 0. blocked may be empty.
  Tensor masked_softmax(Tensor logits, const std::vector<uint8_t>& blocked);
  Tensor softmax(Tensor logits) { return masked_softmax(logits, {}); }

  // Populates grads of every node reachable from a scalar loss. A tape can
  // be walked backward only once.
  void backward(Tensor loss);

  int size() const { return static_cast<int>(values_.size()); }

 private:
  using BackFn = std::function<void(Tape&)>;

  Tensor emplace(std::vector<double> values, Shape shape, BackFn back);
  std::vector<double>& grad_mut(int id);
  void check_same_shape(Tensor a, Tensor b, const char* op) const;

  std::vector<std::vector<double>> values_;
  std::vector<std::vector<double>> grads_;
  std::vector<Shape> shapes_;
  std::vector<BackFn> back_;
  bool backward_done_ = false;
};

}  // namespace msan::ad
