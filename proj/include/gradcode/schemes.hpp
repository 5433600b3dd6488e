#pragma once

#include <vector>

#include <json.hpp>

#include "gradcode/codebook.hpp"

namespace gradcode {

enum class SchemeKind { scheme1, scheme2 };

// Batch sizes b and the partition batches they induce. Invariants:
// sum b_i = n + k - 1, non-increasing, b_k = 1 for k >= 2, every partition
// covered, max b_i <= n - k + 2.
struct BatchAllocation {
  std::vector<int> b;
  std::vector<std::vector<int>> batches;  // ascending 0-based partition ids
  SchemeKind kind = SchemeKind::scheme1;
};

// Largest-remainder apportionment of the budget n + k - 2 across workers
// 1..k-1 proportionally to y_i (worker k always gets b_k = 1), followed by
// minimal unit transfers so that middle workers get at least 2. Ties go to
// the lower index. Requires k <= n.
std::vector<int> default_batch_sizes(const RowTargets& targets, int k, int n);

// Scheme 1: worker 1 holds partitions 1..b_1, later workers hold partition 1
// plus a run of exclusive partitions, worker k holds partition 1 only.
BatchAllocation scheme1_allocate(const std::vector<int>& b, int n, int k);
AlphaMatrix scheme1_alpha(const BatchAllocation& allocation, const RowTargets& targets);

// Scheme 2: consecutive runs overlapping by one partition between worker i
// and worker i+1. Middle workers need b_i >= 2 so the chain stays connected.
BatchAllocation scheme2_allocate(const std::vector<int>& b, int n, int k);
AlphaMatrix scheme2_alpha(const BatchAllocation& allocation, const RowTargets& targets);

int support_size(const AlphaMatrix& alpha);
// Average number of workers processing each partition, support_size / n.
double computation_load(const AlphaMatrix& alpha);

// Recursive split of workers into subgroups whose row-target sums are
// positive integers (within kStructureTol); each subgroup settles an
// exclusive block of consecutive columns. worker_groups[l] and
// column_groups[l] are aligned and ascending; groups are ordered by their
// smallest worker index.
struct SparsePartition {
  std::vector<std::vector<int>> worker_groups;
  std::vector<std::vector<int>> column_groups;
};

SparsePartition partition_row_targets(const RowTargets& targets);

// Block-diagonal construction: inner scheme per subgroup (scheme 2 by
// default). Subgroups with more workers than columns fall back to a
// northwest-corner staircase with the same structural guarantees.
AlphaMatrix sparse_construct(const RowTargets& targets, const SparsePartition& partition,
                             SchemeKind inner = SchemeKind::scheme2);

nlohmann::json allocation_to_json(const BatchAllocation& allocation);
nlohmann::json sparse_partition_to_json(const SparsePartition& partition);

}  // namespace gradcode
