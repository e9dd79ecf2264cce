#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hanme/random.hpp"
#include "hanme/tensor.hpp"

namespace hanme {

// Fixed-topology reverse-mode tape. The model architecture never changes
// shape across epochs, so the graph is built once and replayed: forward()
// recomputes every node in construction order, backward() accumulates
// gradients in reverse. Execution is sequential with a fixed reduction
// order, so repeated runs are bit-identical.
class Tape {
 public:
  enum class Op {
    kParam,
    kInput,
    kConst,
    kMatMul,
    kConcatCols,
    kGatherRows,
    kSegmentSum,
    kSegmentSoftmax,
    kColScale,
    kAdd,
    kAddRowVec,
    kMul,
    kScale,
    kSigmoid,
    kTanh,
    kLeakyRelu,
    kElu,
    kExp,
    kSoftmax,
    kRowSum,
    kMaskedMean,
    kDropout,
    kStackScalars,
    kLinComb,
    kMultihopChain,
    kDirectChain,
    kBceWithLogits,
  };

  struct Node {
    Op op;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::string name;                     // params and inputs
    double attr0 = 0.0;                   // slope / p / scale constant / gamma
    double attr1 = 0.0;
    int axis = 0;                         // softmax axis
    std::vector<std::int64_t> indices;    // gather indices / segment offsets
    Tensor aux;                           // op scratch persisting to backward
    Tensor targets;                       // bce labels
    std::unique_ptr<RandomStream> rng;    // dropout mask stream
  };

  explicit Tape(std::uint64_t seed = 0) : seed_(seed) {}

  // Leaves.
  int param(const std::string& name, std::vector<std::size_t> shape);
  int input(const std::string& name, std::vector<std::size_t> shape);
  int constant(Tensor value);

  // Primitives; every builder validates shapes and registers the backward
  // rule implied by its op kind.
  int matmul(int a, int b);
  int concat_cols(const std::vector<int>& parts);
  int gather_rows(int src, std::vector<std::int64_t> idx);
  int segment_sum(int src, std::vector<std::int64_t> offsets);
  int segment_softmax(int scores, std::vector<std::int64_t> offsets);
  int col_scale(int mat, int scale_col);
  int add(int a, int b);
  int add_row_vec(int mat, int vec);
  int mul(int a, int b);
  int scale(int a, double c);
  int sigmoid(int a);
  int tanh(int a);
  int leaky_relu(int a, double slope);
  int elu(int a);
  int exp(int a);
  int softmax(int a, int axis);
  int row_sum(int a);
  int masked_mean(int col, int mask);
  int dropout(int a, double p);
  int stack_scalars(const std::vector<int>& xs);
  int lin_comb(int coeffs, const std::vector<int>& mats);
  int multihop_chain(const std::vector<int>& feats, int w_h, int w_t, int v_a,
                     double gamma, double slope);
  int direct_chain(const std::vector<int>& feats, int w_t, int w_h);
  int bce_with_logits(int logits, Tensor targets, int mask);

  void forward(bool training);
  void backward(int loss_node);  // zeroes grads, seeds d(loss)=1

  Tensor& value(int id) { return nodes_[id].value; }
  const Tensor& value(int id) const { return nodes_[id].value; }
  Tensor& grad(int id) { return nodes_[id].grad; }
  const Node& node(int id) const { return nodes_[id]; }
  std::size_t num_nodes() const { return nodes_.size(); }

  const std::vector<int>& params() const { return params_; }
  int find(const std::string& name) const;  // -1 when absent

  // Per-row losses of the last bce_with_logits forward (all rows, unmasked).
  const std::vector<double>& row_losses(int bce_node) const;

  // Reseeds every dropout stream; lets a caller replay identical masks.
  void reset_rng(std::uint64_t seed);

 private:
  int push(Node n);
  void forward_node(int id, bool training);
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::vector<int> params_;
  std::vector<std::vector<double>> row_loss_store_;
  std::vector<int> row_loss_slot_;  // node id -> store index (-1 otherwise)
  std::uint64_t seed_;
};

}  // namespace hanme
