#pragma once

// Exact solvers for the 0/1 matching models used for label assignment and for
// temporal propagation:
//
//   GI / SUM  maximise sum M[i][j] f[i][j] subject to
//             - every row (ground-truth or neighbour-frame instance) takes at
//               most one column (instance candidate);
//             - for every region r, at most one flow enters the candidates
//               containing r.
//   SSM       the same objective with plain one-to-one constraints between
//             two instance sets.
//
// Both reduce to packing pairs (row, column) where a column consumes a set of
// resources (its regions, or itself for SSM). Problems are split into
// independent components over rows and resources and each component is solved
// by depth-first branch-and-bound over rows in ascending order.
//
// Among optima (objective equal within `tie_tolerance`) the flow set that is
// lexicographically smallest as a sorted (row, column) list wins. Objectives
// are always summed in ascending row order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/grid.hpp"
#include "ceb/region_graph.hpp"

namespace ceb {

struct score_entry {
  std::size_t row = 0;
  std::size_t col = 0;
  double score = 0.0;
};

// Sparse IoU matrix; absent entries are zero and never matched.
class score_matrix {
 public:
  score_matrix() = default;
  score_matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  void set(std::size_t row, std::size_t col, double score) {
    if (row >= rows_ || col >= cols_) throw precondition_error("score_matrix: index out of range");
    if (!(score >= 0.0 && score <= 1.0)) throw range_error("score_matrix: score outside [0,1]");
    entries_[{row, col}] = score;
  }

  [[nodiscard]] double get(std::size_t row, std::size_t col) const {
    auto it = entries_.find({row, col});
    return it == entries_.end() ? 0.0 : it->second;
  }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }

  // Entries in (row, col) order.
  [[nodiscard]] std::vector<score_entry> entries() const {
    std::vector<score_entry> out;
    out.reserve(entries_.size());
    for (const auto& [rc, s] : entries_) out.push_back({rc.first, rc.second, s});
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::map<std::pair<std::size_t, std::size_t>, double> entries_;
};

struct flow {
  std::size_t row = 0;
  std::size_t col = 0;
  friend auto operator<=>(const flow&, const flow&) = default;
  friend bool operator==(const flow&, const flow&) = default;
};

struct matching_result {
  std::vector<flow> flows;  // sorted
  double objective = 0.0;
};

struct solver_options {
  double min_score = 1e-6;            // pairs below this are left out of the model
  double tie_tolerance = 1e-9;
  std::uint64_t node_budget = 20'000'000;
};

// Column j consumes resources col_resources[j]; two flows conflict when they
// share a row or any resource.
struct packing_problem {
  std::size_t rows = 0;
  std::vector<std::vector<std::size_t>> col_resources;
  std::size_t resource_count = 0;
  score_matrix scores;
};

namespace detail {

class packing_search {
 public:
  packing_search(const packing_problem& pb, const std::vector<score_entry>& pairs,
                 const std::vector<std::size_t>& rows, std::size_t words, std::vector<std::uint64_t> masks,
                 const solver_options& opt, std::uint64_t& nodes)
      : pairs_(pairs), words_(words), masks_(std::move(masks)), opt_(opt), nodes_(nodes) {
    (void)pb;
    std::map<std::size_t, std::size_t> row_pos;
    for (std::size_t i = 0; i < rows.size(); ++i) row_pos[rows[i]] = i;
    options_.resize(rows.size());
    for (std::size_t k = 0; k < pairs_.size(); ++k) options_[row_pos.at(pairs_[k].row)].push_back(k);
    for (auto& o : options_)
      std::sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
        if (pairs_[a].score != pairs_[b].score) return pairs_[a].score > pairs_[b].score;
        return pairs_[a].col < pairs_[b].col;
      });
    suffix_max_.assign(rows.size() + 1, 0.0);
    for (std::size_t i = rows.size(); i-- > 0;)
      suffix_max_[i] = suffix_max_[i + 1] + (options_[i].empty() ? 0.0 : pairs_[options_[i].front()].score);
    used_.assign(words_, 0);
  }

  std::vector<std::size_t> run() {
    dfs(0, 0.0);
    return best_;
  }

 private:
  bool compatible(std::size_t pair) const {
    const std::uint64_t* m = &masks_[pair * words_];
    for (std::size_t w = 0; w < words_; ++w)
      if (m[w] & used_[w]) return false;
    return true;
  }
  void toggle(std::size_t pair) {
    const std::uint64_t* m = &masks_[pair * words_];
    for (std::size_t w = 0; w < words_; ++w) used_[w] ^= m[w];
  }

  double dynamic_bound(std::size_t from) const {
    double b = 0.0;
    for (std::size_t i = from; i < options_.size(); ++i)
      for (std::size_t k : options_[i])
        if (compatible(k)) {
          b += pairs_[k].score;
          break;
        }
    return b;
  }

  bool lex_less(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const {
    std::vector<flow> fa, fb;
    for (std::size_t k : a) fa.push_back({pairs_[k].row, pairs_[k].col});
    for (std::size_t k : b) fb.push_back({pairs_[k].row, pairs_[k].col});
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    return fa < fb;
  }

  void dfs(std::size_t row, double cur) {
    if (++nodes_ > opt_.node_budget) throw capacity_error("matching: branch-and-bound node budget exhausted");
    if (row == options_.size()) {
      if (!have_best_ || cur > best_obj_ + opt_.tie_tolerance ||
          (std::abs(cur - best_obj_) <= opt_.tie_tolerance && lex_less(chosen_, best_))) {
        best_ = chosen_;
        best_obj_ = cur;
        have_best_ = true;
      }
      return;
    }
    if (have_best_ && cur + dynamic_bound(row) < best_obj_ - opt_.tie_tolerance) return;
    for (std::size_t k : options_[row]) {
      if (have_best_ && cur + pairs_[k].score + suffix_max_[row + 1] < best_obj_ - opt_.tie_tolerance) break;
      if (!compatible(k)) continue;
      toggle(k);
      chosen_.push_back(k);
      dfs(row + 1, cur + pairs_[k].score);
      chosen_.pop_back();
      toggle(k);
    }
    dfs(row + 1, cur);
  }

  const std::vector<score_entry>& pairs_;
  std::size_t words_;
  std::vector<std::uint64_t> masks_;
  const solver_options& opt_;
  std::uint64_t& nodes_;
  std::vector<std::vector<std::size_t>> options_;
  std::vector<double> suffix_max_;
  std::vector<std::uint64_t> used_;
  std::vector<std::size_t> chosen_;
  std::vector<std::size_t> best_;
  double best_obj_ = 0.0;
  bool have_best_ = false;
};

}  // namespace detail

inline matching_result solve_packing(const packing_problem& pb, const solver_options& opt = {}) {
  std::vector<score_entry> pairs;
  for (const auto& e : pb.scores.entries())
    if (e.score >= opt.min_score) pairs.push_back(e);

  // Components over rows [0, rows) and resources [rows, rows + resource_count).
  disjoint_set ds(pb.rows + pb.resource_count);
  for (const auto& e : pairs)
    for (std::size_t r : pb.col_resources.at(e.col)) ds.unite(e.row, pb.rows + r);
  std::map<std::size_t, std::vector<std::size_t>> groups;  // root -> pair indices
  for (std::size_t k = 0; k < pairs.size(); ++k) groups[ds.find(pairs[k].row)].push_back(k);

  std::vector<flow> flows;
  std::uint64_t nodes = 0;
  for (const auto& [root, members] : groups) {
    std::vector<score_entry> local;
    std::vector<std::size_t> rows;
    std::map<std::size_t, std::size_t> res_local;
    for (std::size_t k : members) {
      local.push_back(pairs[k]);
      rows.push_back(pairs[k].row);
      for (std::size_t r : pb.col_resources[pairs[k].col]) res_local.try_emplace(r, res_local.size());
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    const std::size_t words = (res_local.size() + 63) / 64;
    std::vector<std::uint64_t> masks(local.size() * words, 0);
    for (std::size_t k = 0; k < local.size(); ++k)
      for (std::size_t r : pb.col_resources[local[k].col]) {
        const std::size_t b = res_local.at(r);
        masks[k * words + b / 64] |= std::uint64_t{1} << (b % 64);
      }
    detail::packing_search search(pb, local, rows, words, std::move(masks), opt, nodes);
    for (std::size_t k : search.run()) flows.push_back({local[k].row, local[k].col});
  }
  std::sort(flows.begin(), flows.end());
  matching_result out;
  out.flows = std::move(flows);
  for (const auto& f : out.flows) out.objective += pb.scores.get(f.row, f.col);
  return out;
}

namespace detail {

inline packing_problem region_packing(std::size_t left_count, const std::vector<instance_candidate>& cands,
                                      const region_candidate_index& k_index, const score_matrix& m) {
  if (m.rows() != left_count || m.cols() != cands.size())
    throw precondition_error("matching: score matrix shape does not match inputs");
  packing_problem pb;
  pb.rows = left_count;
  pb.col_resources.resize(cands.size());
  std::map<region_id, std::size_t> dense;
  for (const auto& [r, idx] : k_index) dense.emplace(r, dense.size());
  for (std::size_t j = 0; j < cands.size(); ++j)
    for (region_id r : cands[j].regions) {
      auto it = k_index.find(r);
      if (it == k_index.end() || !std::binary_search(it->second.begin(), it->second.end(), j))
        throw precondition_error("matching: region index does not cover region " + std::to_string(r) +
                                 " of candidate " + std::to_string(j));
      pb.col_resources[j].push_back(dense.at(r));
    }
  pb.resource_count = dense.size();
  pb.scores = m;
  return pb;
}

}  // namespace detail

// Ground-truth instances (rows) against instance candidates (columns).
inline matching_result solve_gi(std::size_t gt_count, const std::vector<instance_candidate>& cands,
                                const region_candidate_index& k_index, const score_matrix& m,
                                const solver_options& opt = {}) {
  return solve_packing(detail::region_packing(gt_count, cands, k_index, m), opt);
}

// Unmatched selected instances of a neighbouring frame (rows) against the
// not-yet-selected candidates of the current frame (columns).
inline matching_result solve_sum(std::size_t left_count, const std::vector<instance_candidate>& cands,
                                 const region_candidate_index& k_index, const score_matrix& m,
                                 const solver_options& opt = {}) {
  return solve_packing(detail::region_packing(left_count, cands, k_index, m), opt);
}

// One-to-one matching between two selected-instance sets.
inline matching_result solve_ssm(const score_matrix& m, const solver_options& opt = {}) {
  packing_problem pb;
  pb.rows = m.rows();
  pb.col_resources.resize(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) pb.col_resources[j] = {j};
  pb.resource_count = m.cols();
  pb.scores = m;
  return solve_packing(pb, opt);
}

// Rows that received no flow.
inline std::vector<std::size_t> unmatched_left(std::size_t left_count, const matching_result& r) {
  std::vector<char> hit(left_count, 0);
  for (const auto& f : r.flows)
    if (f.row < left_count) hit[f.row] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < left_count; ++i)
    if (!hit[i]) out.push_back(i);
  return out;
}

// CPLEX-LP listing of a packing model, readable by GLPK (glpsol --lp).
inline void dump_model(std::ostream& os, const packing_problem& pb, const std::string& title,
                       const solver_options& opt = {}) {
  std::vector<score_entry> pairs;
  for (const auto& e : pb.scores.entries())
    if (e.score >= opt.min_score) pairs.push_back(e);
  auto var = [](const score_entry& e) { return "f_" + std::to_string(e.row) + "_" + std::to_string(e.col); };
  os << "\\ " << title << "\n";
  os << "Maximize\n obj:";
  if (pairs.empty()) os << " 0 dummy";
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    os << (k ? " + " : " ") << pairs[k].score << " " << var(pairs[k]);
  }
  os << "\nSubject To\n";
  std::map<std::size_t, std::vector<std::size_t>> by_row, by_res;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    by_row[pairs[k].row].push_back(k);
    for (std::size_t r : pb.col_resources[pairs[k].col]) by_res[r].push_back(k);
  }
  auto emit = [&](const std::string& name, const std::vector<std::size_t>& ks) {
    os << " " << name << ":";
    for (std::size_t i = 0; i < ks.size(); ++i) os << (i ? " + " : " ") << var(pairs[ks[i]]);
    os << " <= 1\n";
  };
  for (const auto& [r, ks] : by_row) emit("row_" + std::to_string(r), ks);
  for (const auto& [r, ks] : by_res) emit("res_" + std::to_string(r), ks);
  os << "Binary\n";
  for (const auto& e : pairs) os << " " << var(e) << "\n";
  if (pairs.empty()) os << " dummy\n";
  os << "End\n";
}

}  // namespace ceb
