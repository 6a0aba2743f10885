#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "icumort/autodiff/tape.hpp"
#include "icumort/autodiff/tensor.hpp"

namespace icumort::gcn {

/// Undirected concept graph over N named nodes.
struct GraphSpec {
  std::vector<std::string> node_names;
  ad::Tensor adjacency;  // N x N, symmetric, entries in {0, 1}

  std::size_t size() const noexcept { return node_names.size(); }
};

/// A_hat = D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.
ad::Tensor normalize_adjacency(const ad::Tensor& adjacency);

/// Bank of N one-dimensional filters of width k that slide over token
/// positions; every embedding dimension shares the same filter.
struct ConvKernel {
  ad::Tensor weights;  // N x k
  ad::Tensor bias;     // 1 x N
  std::size_t width() const noexcept { return weights.cols(); }
  std::size_t channels() const noexcept { return weights.rows(); }
};

/// H0 (N x d): valid 1-D convolution along the token axis of an m x d token
/// matrix, mean-pooled over the m - k + 1 positions.
ad::Tensor init_nodes(const ad::Tensor& tokens, const ConvKernel& kernel);

struct GcnParams {
  ad::Tensor w0;  // d0 x h
  ad::Tensor b0;  // 1 x h
  ad::Tensor w1;  // h x c
  ad::Tensor b1;  // 1 x c
  ConvKernel conv;
};

inline constexpr std::size_t kDefaultKernelWidth = 3;
inline constexpr std::size_t kDefaultHidden = 16;

/// Glorot-uniform weights, zero biases.
GcnParams init_params(std::size_t nodes, std::size_t input_dim, std::size_t hidden, std::size_t classes,
                      std::size_t kernel_width, std::uint64_t seed);

struct GcnOutput {
  ad::Tensor hidden;  // H1 = ReLU(A_hat H0 W0 + b0), N x h
  ad::Tensor z;       // row-softmax(A_hat H1 W1 + b1), N x c
};

/// Node ids of a two-layer GCN appended to a tape. Inputs are "<prefix>a_hat",
/// "<prefix>h0" and the trainable "<prefix>w0", "<prefix>b0", "<prefix>w1",
/// "<prefix>b1".
struct GcnNodes {
  ad::NodeId hidden;
  ad::NodeId logits;
  ad::NodeId z;
};
GcnNodes build_gcn(ad::Tape& tape, const std::string& prefix = "gcn.");

GcnOutput gcn_forward(const ad::Tensor& a_hat, const ad::Tensor& h0, const GcnParams& params);

/// Row-major flattening of H1 for the given report's token matrix.
std::vector<double> gcn_features(const ad::Tensor& a_hat, const ad::Tensor& tokens, const GcnParams& params);

/// Edge-list graph file: first non-comment line "<N> name_1 ... name_N", then
/// one "name_a name_b" pair per line. '#' starts a comment.
GraphSpec read_graph(std::istream& in);
GraphSpec load_graph(const std::string& path);
void write_graph(std::ostream& out, const GraphSpec& graph);

}  // namespace icumort::gcn
