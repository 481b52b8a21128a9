#pragma once

// Instance segmentation scores: F1 and AP from IoU >= 0.5 matches, and the
// aggregated Jaccard index (AJI).

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "ceb/error.hpp"
#include "ceb/matching.hpp"
#include "ceb/raster_io.hpp"

namespace ceb {

inline constexpr double true_positive_iou = 0.5;

enum class f1_matching { greedy, optimal };

struct metrics_report {
  double f1 = 0.0;
  double aji = 0.0;
  double ap = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  // Union-weighted IoU over the one-to-one pairs used by AJI (sum I / sum U).
  double matched_iou = 0.0;
  // Raw AJI terms, kept so several images can be pooled.
  std::size_t aji_intersection = 0;
  std::size_t aji_union = 0;
};

namespace detail {

struct overlap_pair {
  std::uint32_t gt = 0;
  std::uint32_t pred = 0;
  std::size_t inter = 0;
  std::size_t uni = 0;
  std::size_t gt_first = 0;  // first pixel in scan order; label-independent tie-break
  std::size_t pred_first = 0;
  [[nodiscard]] double iou() const { return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni); }
};

// Descending IoU; ties by larger intersection, smaller union, then the
// instances' first pixels so that renaming ids cannot change the outcome.
inline bool stronger(const overlap_pair& a, const overlap_pair& b) {
  const auto lhs = static_cast<unsigned __int128>(a.inter) * b.uni;
  const auto rhs = static_cast<unsigned __int128>(b.inter) * a.uni;
  if (lhs != rhs) return lhs > rhs;
  if (a.inter != b.inter) return a.inter > b.inter;
  if (a.uni != b.uni) return a.uni < b.uni;
  return std::tie(a.gt_first, a.pred_first) < std::tie(b.gt_first, b.pred_first);
}

// One-to-one greedy selection over `pairs` (already in priority order).
inline std::vector<overlap_pair> greedy_one_to_one(const std::vector<overlap_pair>& pairs) {
  std::map<std::uint32_t, bool> used_gt, used_pred;
  std::vector<overlap_pair> out;
  for (const auto& p : pairs) {
    if (used_gt[p.gt] || used_pred[p.pred]) continue;
    used_gt[p.gt] = used_pred[p.pred] = true;
    out.push_back(p);
  }
  return out;
}

}  // namespace detail

inline metrics_report evaluate(const label_map& pred, const label_map& gt, f1_matching protocol = f1_matching::greedy) {
  if (!(pred.shape() == gt.shape()))
    throw precondition_error("evaluate: prediction is " + std::to_string(pred.width()) + "x" +
                             std::to_string(pred.height()) + " but ground truth is " + std::to_string(gt.width()) +
                             "x" + std::to_string(gt.height()));
  std::map<std::uint32_t, std::size_t> gt_area, pred_area, gt_first, pred_first;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> inter;
  for (std::size_t i = 0; i < gt.labels().size(); ++i) {
    const auto g = gt.labels()[i];
    const auto p = pred.labels()[i];
    if (g && !gt_area[g]++) gt_first[g] = i;
    if (p && !pred_area[p]++) pred_first[p] = i;
    if (g && p) ++inter[{g, p}];
  }
  std::vector<detail::overlap_pair> pairs;
  for (const auto& [gp, n] : inter)
    pairs.push_back({gp.first, gp.second, n, gt_area[gp.first] + pred_area[gp.second] - n, gt_first[gp.first],
                     pred_first[gp.second]});
  std::sort(pairs.begin(), pairs.end(), detail::stronger);

  metrics_report r;
  std::vector<detail::overlap_pair> tp_candidates;
  for (const auto& p : pairs)
    if (p.iou() >= true_positive_iou) tp_candidates.push_back(p);
  if (protocol == f1_matching::greedy) {
    r.tp = detail::greedy_one_to_one(tp_candidates).size();
  } else {
    // Maximum-cardinality matching over the qualifying pairs.
    std::map<std::uint32_t, std::size_t> row, col;
    for (const auto& p : tp_candidates) {
      row.emplace(p.gt, row.size());
      col.emplace(p.pred, col.size());
    }
    score_matrix m(row.size(), col.size());
    for (const auto& p : tp_candidates) m.set(row.at(p.gt), col.at(p.pred), 1.0);
    r.tp = solve_ssm(m).flows.size();
  }
  r.fn = gt_area.size() - r.tp;
  r.fp = pred_area.size() - r.tp;
  const std::size_t denom_f1 = 2 * r.tp + r.fp + r.fn;
  const std::size_t denom_ap = r.tp + r.fp + r.fn;
  r.f1 = denom_f1 == 0 ? 1.0 : static_cast<double>(2 * r.tp) / static_cast<double>(denom_f1);
  r.ap = denom_ap == 0 ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(denom_ap);

  // AJI: one-to-one pairs (each prediction used once); unmatched areas count in the union.
  const auto matched = detail::greedy_one_to_one(pairs);
  std::map<std::uint32_t, bool> gt_hit, pred_hit;
  std::size_t pair_union = 0;
  for (const auto& p : matched) {
    r.aji_intersection += p.inter;
    pair_union += p.uni;
    gt_hit[p.gt] = pred_hit[p.pred] = true;
  }
  r.aji_union = pair_union;
  for (const auto& [id, a] : gt_area)
    if (!gt_hit[id]) r.aji_union += a;
  for (const auto& [id, a] : pred_area)
    if (!pred_hit[id]) r.aji_union += a;
  r.aji = r.aji_union == 0 ? 1.0 : static_cast<double>(r.aji_intersection) / static_cast<double>(r.aji_union);
  if (gt_area.empty() && pred_area.empty())
    r.matched_iou = 1.0;
  else
    r.matched_iou = pair_union == 0 ? 0.0 : static_cast<double>(r.aji_intersection) / static_cast<double>(pair_union);
  return r;
}

// Per-frame reports plus a pooled total (counts and AJI terms summed).
struct sequence_report {
  std::vector<metrics_report> frames;
  metrics_report total;
};

inline sequence_report evaluate_sequence(const std::vector<label_map>& preds, const std::vector<label_map>& gts,
                                         f1_matching protocol = f1_matching::greedy) {
  if (preds.size() != gts.size()) throw precondition_error("evaluate: prediction and ground-truth counts differ");
  sequence_report s;
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    s.frames.push_back(evaluate(preds[i], gts[i], protocol));
    const auto& f = s.frames.back();
    s.total.tp += f.tp;
    s.total.fp += f.fp;
    s.total.fn += f.fn;
    inter += f.aji_intersection;
    uni += f.aji_union;
  }
  auto& t = s.total;
  const std::size_t d1 = 2 * t.tp + t.fp + t.fn;
  const std::size_t d2 = t.tp + t.fp + t.fn;
  t.f1 = d1 == 0 ? 1.0 : static_cast<double>(2 * t.tp) / static_cast<double>(d1);
  t.ap = d2 == 0 ? 1.0 : static_cast<double>(t.tp) / static_cast<double>(d2);
  t.aji_intersection = inter;
  t.aji_union = uni;
  t.aji = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  double iou_num = 0.0;
  for (const auto& f : s.frames) iou_num += f.matched_iou;
  t.matched_iou = s.frames.empty() ? 0.0 : iou_num / static_cast<double>(s.frames.size());
  return s;
}

inline void write_metrics_csv(std::ostream& os, const sequence_report& s) {
  os << "frame,tp,fp,fn,f1,ap,aji\n";
  auto row = [&](const std::string& name, const metrics_report& r) {
    os << name << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << std::setprecision(10) << r.f1 << ',' << r.ap
       << ',' << r.aji << '\n';
  };
  for (std::size_t i = 0; i < s.frames.size(); ++i) row(std::to_string(i), s.frames[i]);
  row("all", s.total);
}

inline std::string format_metrics_table(const sequence_report& s) {
  std::ostringstream os;
  os << std::left << std::setw(7) << "frame" << std::right << std::setw(6) << "TP" << std::setw(6) << "FP"
     << std::setw(6) << "FN" << std::setw(9) << "F1" << std::setw(9) << "AP" << std::setw(9) << "AJI" << '\n';
  auto row = [&](const std::string& name, const metrics_report& r) {
    os << std::left << std::setw(7) << name << std::right << std::setw(6) << r.tp << std::setw(6) << r.fp
       << std::setw(6) << r.fn << std::fixed << std::setprecision(4) << std::setw(9) << r.f1 << std::setw(9) << r.ap
       << std::setw(9) << r.aji << '\n';
    os.unsetf(std::ios::fixed);
  };
  for (std::size_t i = 0; i < s.frames.size(); ++i) row(std::to_string(i), s.frames[i]);
  row("all", s.total);
  return os.str();
}

}  // namespace ceb
