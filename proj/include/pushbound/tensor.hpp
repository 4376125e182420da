#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pushbound/neighbor_table.hpp"

namespace pushbound {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Handle to a node recorded on a Tape. Copying the handle is cheap; the
// values and gradient live in the tape. For cross-thread transfer use
// to_vector(), which detaches a plain value copy.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rows() const { return shape().at(0); }
  std::size_t cols() const { return shape().at(1); }
  bool requires_grad() const;
  int node_id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  std::span<const double> values() const;
  double value_at(std::size_t i) const { return values()[i]; }
  double scalar_value() const;
  std::vector<double> to_vector() const;

  Tape& tape() const { return *tape_; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Ops record a backward rule as they execute
// (define-by-run); backward() replays them once in reverse order.
// Single-threaded per tape; independent tapes may run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // -- node creation ---------------------------------------------------
  Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);
  Tensor constant(Shape shape, std::vector<double> values);
  Tensor scalar(double value);

  // Constant copy of x; gradients do not flow past it.
  Tensor detach(const Tensor& x);

  // -- elementwise -----------------------------------------------------
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);
  Tensor add_scalar(const Tensor& a, double c);
  Tensor mul_scalar(const Tensor& a, double c);
  Tensor relu(const Tensor& x);           // subgradient 0 at x == 0
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);            // argument clamped to >= 1e-12

  // -- linear algebra / structure ---------------------------------------
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add_bias(const Tensor& m, const Tensor& bias);   // bias shape {1,F}
  Tensor softmax(const Tensor& x);                        // rows of [N x C]
  Tensor concat(const Tensor& a, const Tensor& b);        // column-wise
  Tensor gather_rows(const Tensor& x, const std::vector<std::uint32_t>& rows);
  Tensor select_per_row(const Tensor& x, const std::vector<std::uint32_t>& cols);
  Tensor column(const Tensor& x, std::size_t col);        // [N x C] -> [N x 1]

  // Per-group, per-channel maximum. Gradient routes to the argmax element;
  // ties go to the lowest flat index.
  Tensor grouped_max_pool(const Tensor& features, const NeighborTable& groups);

  // out[i] = sum_j weights[i,j] * features[idx[i,j]]
  Tensor neighbor_weighted_sum(const Tensor& features, const NeighborTable& idx,
                               const Tensor& weights);

  // -- row-wise helpers --------------------------------------------------
  Tensor row_sum(const Tensor& x);                        // [N x F] -> [N x 1]
  Tensor rowwise_scale(const Tensor& m, const Tensor& s); // s: [N x 1]
  Tensor rowwise_div(const Tensor& m, const Tensor& s);
  // Rows normalized to unit length; rows with norm <= eps are divided by eps.
  Tensor row_unit(const Tensor& x, double eps);

  // -- reductions --------------------------------------------------------
  Tensor sum(const Tensor& x);   // -> {1}
  Tensor mean(const Tensor& x);  // -> {1}

  // -- autodiff ----------------------------------------------------------
  // Seeds d(loss)/d(loss) = 1 and runs all recorded backward rules in
  // reverse order. Gradients accumulate across calls until zero_grad().
  void backward(const Tensor& loss);
  void zero_grad();
  std::span<const double> grad(const Tensor& t);

  std::size_t size() const { return nodes_.size(); }
  void clear();

  const Shape& shape_of(int id) const { return nodes_[id].shape; }
  std::span<const double> values_of(int id) const { return nodes_[id].values; }
  bool requires_grad_of(int id) const { return nodes_[id].requires_grad; }

 private:
  using BackwardFn = std::function<void(Tape&)>;

  struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily
    bool requires_grad = false;
    BackwardFn backward;       // empty when requires_grad is false
  };

  Tensor make_node(Shape shape, std::vector<double> values, bool requires_grad,
                   BackwardFn backward);
  std::vector<double>& grad_buffer(int id);
  Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                            double (*fwd)(double, double),
                            void (*bwd)(double a, double b, double g, double& da, double& db));

  std::vector<Node> nodes_;
};

}  // namespace pushbound
