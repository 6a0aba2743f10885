#include "icumort/eval/cindex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "icumort/error.hpp"

namespace icumort::eval {

namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  // number of inserted ranks < i
  std::uint64_t prefix(std::size_t i) const {
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<std::uint64_t> tree_;
};

}  // namespace

CIndexResult c_index(std::span<const surv::SurvivalRecord> records, std::span<const double> risks) {
  const std::size_t n = records.size();
  if (risks.size() != n)
    throw DimensionError("c_index: " + std::to_string(risks.size()) + " risks for " + std::to_string(n) +
                         " patients");
  for (double r : risks)
    if (!std::isfinite(r)) throw InputError("c_index: risks must be finite");

  std::vector<double> sorted(risks.begin(), risks.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i)
    rank[i] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), risks[i]) - sorted.begin());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].observed_time > records[b].observed_time; });

  // walk time groups from the latest; the tree holds everyone strictly later
  CIndexResult res;
  Fenwick tree(sorted.size());
  std::uint64_t inserted = 0;
  for (std::size_t g = 0; g < n;) {
    std::size_t end = g;
    while (end < n && records[order[end]].observed_time == records[order[g]].observed_time) ++end;
    for (std::size_t k = g; k < end; ++k) {
      const std::size_t i = order[k];
      if (!records[i].event) continue;
      const std::uint64_t below = tree.prefix(rank[i]);
      const std::uint64_t tied = tree.prefix(rank[i] + 1) - below;
      res.concordant += below;
      res.tied_risk += tied;
      res.discordant += inserted - below - tied;
      res.comparable_pairs += inserted;
    }
    for (std::size_t k = g; k < end; ++k) tree.add(rank[order[k]]);
    inserted += end - g;
    g = end;
  }
  if (res.comparable_pairs == 0) throw MetricError("c_index is undefined: no comparable pairs");
  res.value = (static_cast<double>(res.concordant) + 0.5 * static_cast<double>(res.tied_risk)) /
              static_cast<double>(res.comparable_pairs);
  return res;
}

}  // namespace icumort::eval
