#include "drew/roc.hpp"

#include <algorithm>
#include <limits>
#include <utility>

#include "drew/error.hpp"

namespace drew {

RocResult roc_curve(std::span<const double> positives, std::span<const double> negatives, double max_fpr) {
  require(!positives.empty() && !negatives.empty(), "ROC needs at least one score per class");

  std::vector<std::pair<double, bool>> scored;
  scored.reserve(positives.size() + negatives.size());
  for (double s : positives) scored.emplace_back(s, true);
  for (double s : negatives) scored.emplace_back(s, false);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const auto n_pos = static_cast<double>(positives.size());
  const auto n_neg = static_cast<double>(negatives.size());
  RocResult out;
  out.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < scored.size();) {
    const double t = scored[i].first;
    for (; i < scored.size() && scored[i].first == t; ++i) {
      if (scored[i].second) ++tp; else ++fp;
    }
    out.curve.push_back({t, static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos});
  }

  for (std::size_t i = 1; i < out.curve.size(); ++i) {
    const RocPoint& a = out.curve[i - 1];
    const RocPoint& b = out.curve[i];
    out.auroc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  for (const RocPoint& p : out.curve) {
    if (p.fpr <= max_fpr) out.tpr_at_fpr = std::max(out.tpr_at_fpr, p.tpr);
  }
  return out;
}

}  // namespace drew
