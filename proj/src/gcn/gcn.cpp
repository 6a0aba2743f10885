#include "icumort/gcn/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "icumort/autodiff/init.hpp"
#include "icumort/error.hpp"
#include "icumort/rng.hpp"

namespace icumort::gcn {

ad::Tensor normalize_adjacency(const ad::Tensor& a) {
  const std::size_t n = a.rows();
  if (a.rank() != 2 || a.cols() != n) throw InputError("adjacency matrix must be square");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = a(i, j);
      if (v < 0.0) throw InputError("adjacency matrix has a negative entry");
      if (v != 0.0 && v != 1.0) throw InputError("adjacency entries must be 0 or 1");
      if (v != a(j, i)) throw InputError("adjacency matrix is not symmetric");
    }

  std::vector<double> inv_sqrt_degree(n);
  for (std::size_t i = 0; i < n; ++i) {
    double degree = 1.0;  // self-loop
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) degree += a(i, j);
    // a self-loop already present in A still counts once more in A + I
    degree += a(i, i);
    inv_sqrt_degree[i] = 1.0 / std::sqrt(degree);
  }
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double tilde = a(i, j) + (i == j ? 1.0 : 0.0);
      out[i * n + j] = inv_sqrt_degree[i] * tilde * inv_sqrt_degree[j];
    }
  return ad::Tensor::matrix(n, n, std::move(out));
}

ad::Tensor init_nodes(const ad::Tensor& tokens, const ConvKernel& kernel) {
  const std::size_t m = tokens.rows();
  const std::size_t d = tokens.cols();
  const std::size_t k = kernel.width();
  const std::size_t channels = kernel.channels();
  if (k == 0 || channels == 0) throw InputError("convolution kernel is empty");
  if (kernel.bias.size() != channels) throw DimensionError("convolution bias needs one entry per channel");
  if (m < k)
    throw InputError("report has " + std::to_string(m) + " tokens, fewer than the kernel width " +
                     std::to_string(k));

  const std::size_t positions = m - k + 1;
  // pooled[q][e] = mean over positions p of tokens[p + q][e]; the mean of the
  // convolution is the convolution of these window means
  std::vector<double> pooled(k * d, 0.0);
  for (std::size_t q = 0; q < k; ++q)
    for (std::size_t p = 0; p < positions; ++p)
      for (std::size_t e = 0; e < d; ++e) pooled[q * d + e] += tokens(p + q, e);
  for (double& v : pooled) v /= static_cast<double>(positions);

  std::vector<double> h0(channels * d);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t e = 0; e < d; ++e) {
      double s = kernel.bias[c];
      for (std::size_t q = 0; q < k; ++q) s += kernel.weights(c, q) * pooled[q * d + e];
      h0[c * d + e] = s;
    }
  return ad::Tensor::matrix(channels, d, std::move(h0));
}

GcnParams init_params(std::size_t nodes, std::size_t input_dim, std::size_t hidden, std::size_t classes,
                      std::size_t kernel_width, std::uint64_t seed) {
  Rng rng(seed);
  GcnParams p;
  p.conv.weights = ad::glorot_uniform(nodes, kernel_width, rng);
  p.conv.bias = ad::Tensor::zeros({1, nodes});
  p.w0 = ad::glorot_uniform(input_dim, hidden, rng);
  p.b0 = ad::Tensor::zeros({1, hidden});
  p.w1 = ad::glorot_uniform(hidden, classes, rng);
  p.b1 = ad::Tensor::zeros({1, classes});
  return p;
}

GcnNodes build_gcn(ad::Tape& tape, const std::string& prefix) {
  const auto a_hat = tape.input(prefix + "a_hat");
  const auto h0 = tape.input(prefix + "h0");
  const auto w0 = tape.input(prefix + "w0", true);
  const auto b0 = tape.input(prefix + "b0", true);
  const auto w1 = tape.input(prefix + "w1", true);
  const auto b1 = tape.input(prefix + "b1", true);

  GcnNodes nodes;
  nodes.hidden = tape.relu(tape.add(tape.matmul(tape.matmul(a_hat, h0), w0), b0));
  nodes.logits = tape.add(tape.matmul(tape.matmul(a_hat, nodes.hidden), w1), b1);
  nodes.z = tape.softmax_rows(nodes.logits);
  return nodes;
}

GcnOutput gcn_forward(const ad::Tensor& a_hat, const ad::Tensor& h0, const GcnParams& params) {
  const std::size_t n = a_hat.rows();
  if (a_hat.cols() != n || h0.rows() != n)
    throw DimensionError("gcn_forward: A_hat is " + ad::shape_string(a_hat.shape()) + " but H0 is " +
                         ad::shape_string(h0.shape()));
  if (params.w0.rows() != h0.cols() || params.b0.size() != params.w0.cols() ||
      params.w1.rows() != params.w0.cols() || params.b1.size() != params.w1.cols())
    throw DimensionError("gcn_forward: parameter shapes are inconsistent with H0");

  ad::Tape tape;
  const GcnNodes nodes = build_gcn(tape, "");
  tape.set_output("hidden", nodes.hidden);
  tape.set_output("z", nodes.z);
  const ad::Bindings in{{"a_hat", a_hat}, {"h0", h0}, {"w0", params.w0},
                        {"b0", params.b0}, {"w1", params.w1}, {"b1", params.b1}};
  const auto ev = tape.forward(in);
  return {ev.output("hidden"), ev.output("z")};
}

std::vector<double> gcn_features(const ad::Tensor& a_hat, const ad::Tensor& tokens, const GcnParams& params) {
  if (params.conv.channels() != a_hat.rows())
    throw DimensionError("convolution must have one output channel per graph node");
  const ad::Tensor h0 = init_nodes(tokens, params.conv);
  const GcnOutput out = gcn_forward(a_hat, h0, params);
  auto v = out.hidden.values();
  return {v.begin(), v.end()};
}

GraphSpec read_graph(std::istream& in) {
  auto strip = [](std::string line) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    return line;
  };

  std::string line;
  std::size_t line_no = 0;
  GraphSpec g;
  std::map<std::string, std::size_t> index;
  bool header = false;
  std::vector<double> adj;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(strip(line));
    std::vector<std::string> words;
    for (std::string w; ls >> w;) words.push_back(w);
    if (words.empty()) continue;
    if (!header) {
      std::size_t n = 0;
      try {
        n = std::stoul(words[0]);
      } catch (const std::exception&) {
        throw FormatError("graph line " + std::to_string(line_no) + ": header must start with the node count");
      }
      if (n == 0 || words.size() != n + 1)
        throw FormatError("graph line " + std::to_string(line_no) + ": header declares " +
                          std::to_string(n) + " nodes but names " + std::to_string(words.size() - 1));
      for (std::size_t i = 0; i < n; ++i) {
        if (!index.emplace(words[i + 1], i).second)
          throw FormatError("graph header repeats node name '" + words[i + 1] + "'");
        g.node_names.push_back(words[i + 1]);
      }
      adj.assign(n * n, 0.0);
      header = true;
      continue;
    }
    if (words.size() != 2)
      throw FormatError("graph line " + std::to_string(line_no) + ": expected 'name_a name_b'");
    std::size_t ij[2];
    for (int k = 0; k < 2; ++k) {
      auto it = index.find(words[static_cast<std::size_t>(k)]);
      if (it == index.end())
        throw FormatError("graph line " + std::to_string(line_no) + ": unknown node '" +
                          words[static_cast<std::size_t>(k)] + "'");
      ij[k] = it->second;
    }
    if (ij[0] == ij[1])
      throw FormatError("graph line " + std::to_string(line_no) + ": self-loops are added implicitly");
    const std::size_t n = g.node_names.size();
    adj[ij[0] * n + ij[1]] = 1.0;
    adj[ij[1] * n + ij[0]] = 1.0;
  }
  if (!header) throw FormatError("graph file has no header line");
  const std::size_t n = g.node_names.size();
  g.adjacency = ad::Tensor::matrix(n, n, std::move(adj));
  return g;
}

GraphSpec load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open graph file '" + path + "'");
  return read_graph(in);
}

void write_graph(std::ostream& out, const GraphSpec& graph) {
  const std::size_t n = graph.size();
  out << n;
  for (const auto& name : graph.node_names) out << ' ' << name;
  out << '\n';
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (graph.adjacency(i, j) != 0.0) out << graph.node_names[i] << ' ' << graph.node_names[j] << '\n';
}

}  // namespace icumort::gcn
