#include "gradcode/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace gradcode {

namespace {

void check_batch_sizes(const std::vector<int>& b, int n, int k) {
  if (k < 1 || n < 1) throw std::invalid_argument("need k >= 1 and n >= 1");
  if (static_cast<int>(b.size()) != k) throw std::invalid_argument("b needs one entry per worker");
  int sum = 0;
  for (int i = 0; i < k; ++i) {
    if (b[static_cast<std::size_t>(i)] < 1) throw std::invalid_argument("batch sizes must be >= 1");
    if (i > 0 && b[static_cast<std::size_t>(i)] > b[static_cast<std::size_t>(i - 1)]) {
      throw std::invalid_argument("batch sizes must be non-increasing");
    }
    sum += b[static_cast<std::size_t>(i)];
  }
  if (sum != n + k - 1) throw std::invalid_argument("batch sizes must sum to n + k - 1");
  if (k >= 2 && b.back() != 1) throw std::invalid_argument("last worker must have b_k = 1");
  if (b.front() > n - k + 2) throw std::invalid_argument("largest batch may not exceed n - k + 2");
}

std::vector<int> run(int first, int len) {
  std::vector<int> out(static_cast<std::size_t>(len));
  std::iota(out.begin(), out.end(), first);
  return out;
}

// Northwest-corner staircase for a subgroup whose worker count exceeds its
// column count: pour each row target into unit-capacity columns left to
// right. Row sums come out to y_i, column sums to 1, and the support is a
// connected chain of at most rows + cols - 1 cells.
void staircase_fill(const Eigen::VectorXd& y, const std::vector<int>& workers,
                    const std::vector<int>& cols, Eigen::MatrixXd& entries,
                    std::vector<std::vector<int>>& support) {
  const int rows = static_cast<int>(workers.size());
  const int ncols = static_cast<int>(cols.size());
  int j = 0;
  int cells = 0;
  double capacity = 1.0;
  for (int r = 0; r < rows; ++r) {
    double remaining = y(workers[static_cast<std::size_t>(r)]);
    while (true) {
      if (++cells > rows + ncols) throw std::logic_error("staircase fill exceeded its cell budget");
      const bool last_cell = (r == rows - 1) && (j == ncols - 1);
      double take = last_cell ? capacity : std::min(remaining, capacity);
      entries(workers[static_cast<std::size_t>(r)], cols[static_cast<std::size_t>(j)]) = take;
      support[static_cast<std::size_t>(workers[static_cast<std::size_t>(r)])].push_back(
          cols[static_cast<std::size_t>(j)]);
      remaining -= take;
      capacity -= take;
      if (capacity <= kSupportTol && j < ncols - 1) {
        ++j;
        capacity = 1.0;
      }
      if (remaining <= kSupportTol || last_cell) break;
    }
  }
}

struct SplitCandidate {
  std::vector<int> small_side;  // representative: fewer elements, lex ties
  std::uint64_t mask = 0;
};

// Integer within tolerance and at least 1.
bool positive_integer(double x) {
  double r = std::round(x);
  return r >= 1.0 && std::abs(x - r) <= kStructureTol;
}

}  // namespace

std::vector<int> default_batch_sizes(const RowTargets& targets, int k, int n) {
  if (targets.y.size() != k || targets.n != n) {
    throw std::invalid_argument("row targets disagree with k, n");
  }
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (k > n) throw std::invalid_argument("need k <= n");
  if (k == 1) return {n};

  // Budget n + k - 2 over workers 1..k-1, proportional to y.
  const int budget = n + k - 2;
  const int m = k - 1;
  double y_head = targets.y.head(m).sum();
  std::vector<int> b(static_cast<std::size_t>(k), 0);
  b[static_cast<std::size_t>(k - 1)] = 1;

  std::vector<double> share(static_cast<std::size_t>(m));
  int assigned = 0;
  for (int i = 0; i < m; ++i) {
    share[static_cast<std::size_t>(i)] = budget * targets.y(i) / y_head;
    b[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(share[static_cast<std::size_t>(i)]));
    assigned += b[static_cast<std::size_t>(i)];
  }
  // Largest remainders get the leftover units, ties to the lower index.
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
    double ra = share[static_cast<std::size_t>(a)] - std::floor(share[static_cast<std::size_t>(a)]);
    double rc = share[static_cast<std::size_t>(c)] - std::floor(share[static_cast<std::size_t>(c)]);
    return ra > rc;
  });
  for (int u = 0; u < budget - assigned; ++u) {
    b[static_cast<std::size_t>(order[static_cast<std::size_t>(u % m)])] += 1;
  }

  // Unit transfers from the largest entries until every middle worker has at
  // least 2 (worker 1 at least 1). Feasible because n >= k. The donor is the
  // highest-indexed maximum so the vector stays non-increasing.
  for (int i = 1; i < m; ++i) {
    while (b[static_cast<std::size_t>(i)] < 2) {
      int donor = -1;
      for (int d = 0; d < m; ++d) {
        int need = d == 0 ? 1 : 2;
        if (d != i && b[static_cast<std::size_t>(d)] > need &&
            (donor < 0 || b[static_cast<std::size_t>(d)] >= b[static_cast<std::size_t>(donor)])) {
          donor = d;
        }
      }
      if (donor < 0) throw std::logic_error("batch size repair ran out of donors");
      b[static_cast<std::size_t>(donor)] -= 1;
      b[static_cast<std::size_t>(i)] += 1;
    }
  }
  check_batch_sizes(b, n, k);
  return b;
}

BatchAllocation scheme1_allocate(const std::vector<int>& b, int n, int k) {
  check_batch_sizes(b, n, k);
  BatchAllocation out;
  out.b = b;
  out.kind = SchemeKind::scheme1;
  out.batches.resize(static_cast<std::size_t>(k));
  out.batches[0] = run(0, b[0]);
  int next_exclusive = b[0];  // first uncovered partition
  for (int i = 1; i < k; ++i) {
    std::vector<int> batch{0};
    for (int t = 0; t < b[static_cast<std::size_t>(i)] - 1; ++t) batch.push_back(next_exclusive++);
    out.batches[static_cast<std::size_t>(i)] = std::move(batch);
  }
  if (next_exclusive != n) throw std::logic_error("scheme 1 coverage mismatch");
  return out;
}

AlphaMatrix scheme1_alpha(const BatchAllocation& allocation, const RowTargets& targets) {
  const int k = static_cast<int>(allocation.b.size());
  if (targets.y.size() != k) throw std::invalid_argument("row targets disagree with allocation");
  Eigen::MatrixXd entries = Eigen::MatrixXd::Zero(k, targets.n);
  for (int i = 0; i < k; ++i) {
    const auto& batch = allocation.batches[static_cast<std::size_t>(i)];
    // Weight on the shared partition tops the row sum up to y_i; exclusive
    // partitions carry weight 1.
    entries(i, batch[0]) = targets.y(i) - (static_cast<double>(allocation.b[static_cast<std::size_t>(i)]) - 1.0);
    for (std::size_t t = 1; t < batch.size(); ++t) entries(i, batch[t]) = 1.0;
  }
  return AlphaMatrix::with_support(std::move(entries), allocation.batches);
}

BatchAllocation scheme2_allocate(const std::vector<int>& b, int n, int k) {
  check_batch_sizes(b, n, k);
  for (int i = 1; i + 1 < k; ++i) {
    if (b[static_cast<std::size_t>(i)] < 2) {
      throw std::invalid_argument("scheme 2 needs b_i >= 2 for middle workers");
    }
  }
  BatchAllocation out;
  out.b = b;
  out.kind = SchemeKind::scheme2;
  out.batches.resize(static_cast<std::size_t>(k));
  int start = 0;
  for (int i = 0; i < k; ++i) {
    out.batches[static_cast<std::size_t>(i)] = run(start, b[static_cast<std::size_t>(i)]);
    start += b[static_cast<std::size_t>(i)] - 1;  // overlap one partition with the next worker
  }
  if (start + 1 != n) throw std::logic_error("scheme 2 coverage mismatch");
  return out;
}

AlphaMatrix scheme2_alpha(const BatchAllocation& allocation, const RowTargets& targets) {
  const int k = static_cast<int>(allocation.b.size());
  if (targets.y.size() != k) throw std::invalid_argument("row targets disagree with allocation");
  Eigen::MatrixXd entries = Eigen::MatrixXd::Zero(k, targets.n);

  // Row 1: ones on all but the last partition of the batch, remainder there.
  {
    const auto& batch = allocation.batches[0];
    for (std::size_t t = 0; t + 1 < batch.size(); ++t) entries(0, batch[t]) = 1.0;
    entries(0, batch.back()) = targets.y(0) - (static_cast<double>(batch.size()) - 1.0);
    if (batch.size() == 1) entries(0, batch[0]) = targets.y(0);
  }
  // Middle rows: complement the shared entry above, ones inside, and close
  // the row sum on the last entry (shared with the next worker).
  for (int i = 1; i < k - 1; ++i) {
    const auto& batch = allocation.batches[static_cast<std::size_t>(i)];
    double first = 1.0 - entries(i - 1, batch[0]);
    entries(i, batch[0]) = first;
    double interior = 0.0;
    for (std::size_t t = 1; t + 1 < batch.size(); ++t) {
      entries(i, batch[t]) = 1.0;
      interior += 1.0;
    }
    entries(i, batch.back()) = targets.y(i) - first - interior;
  }
  if (k >= 2) entries(k - 1, targets.n - 1) = targets.y(k - 1);
  return AlphaMatrix::with_support(std::move(entries), allocation.batches);
}

int support_size(const AlphaMatrix& alpha) {
  int total = 0;
  for (const auto& row : alpha.support) total += static_cast<int>(row.size());
  return total;
}

double computation_load(const AlphaMatrix& alpha) {
  return static_cast<double>(support_size(alpha)) / static_cast<double>(alpha.n());
}

SparsePartition partition_row_targets(const RowTargets& targets) {
  const int k = static_cast<int>(targets.y.size());
  if (k > 20) throw std::invalid_argument("sparse partition search is limited to k <= 20");

  // Depth-first refinement: split any group into two sides with
  // positive-integer target sums while a valid split exists. Among valid
  // splits prefer the one whose smaller side is lexicographically least.
  std::vector<std::vector<int>> done;
  std::vector<std::vector<int>> pending{run(0, k)};
  while (!pending.empty()) {
    std::vector<int> group = std::move(pending.back());
    pending.pop_back();
    const int g = static_cast<int>(group.size());
    bool split_found = false;
    SplitCandidate best;
    if (g >= 2) {
      for (std::uint64_t mask = 1; mask + 1 < (1ULL << g); ++mask) {
        double sum_a = 0.0, sum_b = 0.0;
        std::vector<int> side_a, side_b;
        for (int t = 0; t < g; ++t) {
          if (mask & (1ULL << t)) {
            sum_a += targets.y(group[static_cast<std::size_t>(t)]);
            side_a.push_back(group[static_cast<std::size_t>(t)]);
          } else {
            sum_b += targets.y(group[static_cast<std::size_t>(t)]);
            side_b.push_back(group[static_cast<std::size_t>(t)]);
          }
        }
        if (!positive_integer(sum_a) || !positive_integer(sum_b)) continue;
        std::vector<int>& small =
            side_a.size() < side_b.size() || (side_a.size() == side_b.size() && side_a < side_b)
                ? side_a
                : side_b;
        if (!split_found || small < best.small_side) {
          best.small_side = small;
          best.mask = mask;
          split_found = true;
        }
      }
    }
    if (!split_found) {
      done.push_back(std::move(group));
      continue;
    }
    std::vector<int> side_a, side_b;
    for (int t = 0; t < g; ++t) {
      (best.mask & (1ULL << t) ? side_a : side_b).push_back(group[static_cast<std::size_t>(t)]);
    }
    pending.push_back(std::move(side_a));
    pending.push_back(std::move(side_b));
  }

  std::sort(done.begin(), done.end(),
            [](const std::vector<int>& a, const std::vector<int>& b) { return a.front() < b.front(); });

  SparsePartition out;
  int col = 0;
  for (auto& group : done) {
    double sum = 0.0;
    for (int i : group) sum += targets.y(i);
    const int width = static_cast<int>(std::llround(sum));
    if (std::abs(sum - width) > 10 * kStructureTol || width < 1) {
      throw std::logic_error("subgroup target sum drifted from an integer");
    }
    out.column_groups.push_back(run(col, width));
    col += width;
    out.worker_groups.push_back(std::move(group));
  }
  if (col != targets.n) throw std::logic_error("sparse partition does not cover all columns");
  return out;
}

AlphaMatrix sparse_construct(const RowTargets& targets, const SparsePartition& partition,
                             SchemeKind inner) {
  const int k = static_cast<int>(targets.y.size());
  Eigen::MatrixXd entries = Eigen::MatrixXd::Zero(k, targets.n);
  std::vector<std::vector<int>> support(static_cast<std::size_t>(k));

  for (std::size_t l = 0; l < partition.worker_groups.size(); ++l) {
    const auto& workers = partition.worker_groups[l];
    const auto& cols = partition.column_groups[l];
    const int kl = static_cast<int>(workers.size());
    const int nl = static_cast<int>(cols.size());

    if (kl > nl) {
      staircase_fill(targets.y, workers, cols, entries, support);
      continue;
    }

    RowTargets sub;
    sub.n = nl;
    sub.s = targets.s;
    sub.y.resize(kl);
    for (int r = 0; r < kl; ++r) sub.y(r) = targets.y(workers[static_cast<std::size_t>(r)]);

    std::vector<int> b = default_batch_sizes(sub, kl, nl);
    BatchAllocation alloc = inner == SchemeKind::scheme2 ? scheme2_allocate(b, nl, kl)
                                                         : scheme1_allocate(b, nl, kl);
    AlphaMatrix sub_alpha =
        inner == SchemeKind::scheme2 ? scheme2_alpha(alloc, sub) : scheme1_alpha(alloc, sub);

    for (int r = 0; r < kl; ++r) {
      const int worker = workers[static_cast<std::size_t>(r)];
      for (int j : sub_alpha.support[static_cast<std::size_t>(r)]) {
        const int col = cols[static_cast<std::size_t>(j)];
        entries(worker, col) = sub_alpha.entries(r, j);
        support[static_cast<std::size_t>(worker)].push_back(col);
      }
    }
  }
  return AlphaMatrix::with_support(std::move(entries), std::move(support));
}

nlohmann::json allocation_to_json(const BatchAllocation& allocation) {
  nlohmann::json j;
  j["scheme"] = allocation.kind == SchemeKind::scheme1 ? "I" : "II";
  j["b"] = allocation.b;
  j["batches"] = allocation.batches;
  return j;
}

nlohmann::json sparse_partition_to_json(const SparsePartition& partition) {
  nlohmann::json j;
  j["scheme"] = "sparse";
  j["subgroups"] = partition.worker_groups;
  j["column_groups"] = partition.column_groups;
  return j;
}

}  // namespace gradcode
