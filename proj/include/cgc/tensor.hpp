#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <vector>

namespace cgc {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Axis-aligned rectangle on the last two dims of a tensor,
/// in source-pixel coordinates.
struct CropRect {
  int64_t x = 0, y = 0, w = 0, h = 0;
};

enum class OpKind : uint8_t {
  kLeaf,
  kAdd, kSub, kMul, kDiv, kNeg,
  kExp, kLog, kSqrt, kRelu,
  kSum, kBroadcastAxes, kReduceMax,
  kReshape, kTranspose,
  kMatmul,
  kConv2d, kConv2dGradInput, kConv2dGradKernel,
  kPoolAvg, kAvgUnpool, kPoolMax,
  kGather, kScatter,
  kResize, kResizeAdjoint,
  kCrop, kUncrop, kHflip,
  kBiasAdd, kAddRowvec,
};

const char* op_name(OpKind kind);

/// Saved forward data a node needs to compute its vector-Jacobian products.
struct NodeAttrs {
  int64_t stride = 1, pad = 0;   // conv family
  int64_t window = 0, wstride = 0;
  int64_t out_h = 0, out_w = 0;  // resize family
  std::vector<int64_t> axes;     // reductions / broadcast
  Shape aux_shape;               // adjoint target shape (input dims)
  CropRect rect;
  std::shared_ptr<const std::vector<int64_t>> index_map;  // gather/scatter/max routing
};

struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<int32_t> parents;
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  NodeAttrs attrs;
};

class Tensor;

/// Append-only computation graph. Nodes are topological by construction:
/// every parent id precedes its child. A whole graph is freed at once when
/// the last Tensor handle to it goes away.
class Graph : public std::enable_shared_from_this<Graph> {
 public:
  /// Controls whether ops executed against this graph append nodes.
  /// Normal records when any input requires grad; Off never records
  /// (plain value evaluation); Force records unconditionally, which is
  /// how backward(create_graph=true) makes its results differentiable
  /// even along paths that are constant.
  enum class RecordMode : uint8_t { kNormal, kOff, kForce };

  Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false);

  const Node& node(int32_t id) const { return nodes_[id]; }
  int32_t size() const { return static_cast<int32_t>(nodes_.size()); }

  RecordMode mode() const { return mode_; }

  int32_t append(Node node);

 private:
  friend class RecordModeGuard;
  std::deque<Node> nodes_;  // deque: stable references across appends
  RecordMode mode_ = RecordMode::kNormal;
};

class RecordModeGuard {
 public:
  RecordModeGuard(Graph& graph, Graph::RecordMode mode) : graph_(graph), prev_(graph.mode_) {
    graph_.mode_ = mode;
  }
  ~RecordModeGuard() { graph_.mode_ = prev_; }
  RecordModeGuard(const RecordModeGuard&) = delete;
  RecordModeGuard& operator=(const RecordModeGuard&) = delete;

 private:
  Graph& graph_;
  Graph::RecordMode prev_;
};

/// Immutable n-dimensional value array, either free-standing or a handle
/// into a Graph node. A scalar has an empty shape and one element.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double v);

  bool defined() const { return graph_ != nullptr || data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return numel_of(shape_); }
  const std::vector<double>& values() const;
  double scalar_value() const;

  bool requires_grad() const { return requires_grad_; }
  bool on_graph() const { return graph_ != nullptr; }
  const std::shared_ptr<Graph>& graph() const { return graph_; }
  int32_t node() const { return node_; }

 private:
  friend class Graph;
  friend Tensor graph_tensor(std::shared_ptr<Graph>, int32_t);

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;  // free tensors only
  std::shared_ptr<Graph> graph_;
  int32_t node_ = -1;
  bool requires_grad_ = false;
};

Tensor graph_tensor(std::shared_ptr<Graph> graph, int32_t node);

// --- elementwise -----------------------------------------------------------
// Binary ops take equal shapes, or one operand may be a single-element
// tensor which broadcasts against the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, double b);
Tensor div(double a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// Gradient convention: sqrt'(0) is taken as 0 rather than +inf, so that
// epsilon-guarded norms of all-zero maps stay finite.
Tensor sqrt(const Tensor& a);
// relu'(0) = 0; the activation mask is constant under differentiation.
Tensor relu(const Tensor& a);

// --- shape & reduction ------------------------------------------------------
// axes empty means "all axes"; result drops the reduced axes.
Tensor reduce_sum(const Tensor& a, std::vector<int64_t> axes = {});
Tensor reduce_mean(const Tensor& a, std::vector<int64_t> axes = {});
// Ties route the gradient to the first maximal element in raster order.
Tensor reduce_max(const Tensor& a, std::vector<int64_t> axes = {});
// Inverse of reduce_sum's shape change: replicate along `axes` to `target`.
Tensor broadcast_axes(const Tensor& a, const Shape& target, std::vector<int64_t> axes);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);  // rank 2

// --- linear algebra / conv ---------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& k, int64_t stride, int64_t pad);
// Adjoints of conv2d, exposed as first-class differentiable ops so the
// backward pass of a backward pass stays inside the op set.
Tensor conv2d_grad_input(const Tensor& g, const Tensor& k, const Shape& input_shape,
                         int64_t stride, int64_t pad);
Tensor conv2d_grad_kernel(const Tensor& x, const Tensor& g, const Shape& kernel_shape,
                          int64_t stride, int64_t pad);

// --- pooling -----------------------------------------------------------------
Tensor pool2d_avg(const Tensor& x, int64_t window, int64_t stride);
Tensor pool2d_max(const Tensor& x, int64_t window, int64_t stride);
Tensor avg_unpool(const Tensor& g, int64_t window, int64_t stride, const Shape& input_shape);

// --- spatial -----------------------------------------------------------------
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);
Tensor bilinear_resize_adjoint(const Tensor& g, int64_t in_h, int64_t in_w);
Tensor crop(const Tensor& x, const CropRect& rect);
Tensor uncrop(const Tensor& g, const CropRect& rect, int64_t src_h, int64_t src_w);
Tensor hflip(const Tensor& x);

// --- broadcast adds ----------------------------------------------------------
Tensor bias_add(const Tensor& x, const Tensor& b);     // [N,C,H,W] + [C]
Tensor add_rowvec(const Tensor& a, const Tensor& b);   // [N,K] + [K]

// --- indexing ----------------------------------------------------------------
// out[i] = x[map[i]]; map addresses the flat value array.
Tensor gather(const Tensor& x, std::shared_ptr<const std::vector<int64_t>> map,
              Shape out_shape);
// out[map[i]] += x[i] into a zero tensor of out_shape.
Tensor scatter(const Tensor& x, std::shared_ptr<const std::vector<int64_t>> map,
               Shape out_shape);

/// Value copy with no graph attachment.
Tensor detach(const Tensor& a);

/// Reverse-mode gradients of a one-element tensor with respect to `wrt`.
/// With create_graph the returned tensors are graph nodes and can be
/// differentiated again; without it they are plain values. Either way the
/// numbers are identical and the forward values are untouched. A wrt tensor
/// unreachable from `output` yields a zero gradient.
std::vector<Tensor> backward(const Tensor& output, const std::vector<Tensor>& wrt,
                             bool create_graph = false);

}  // namespace cgc
