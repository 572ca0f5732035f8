#pragma once

#include <span>
#include <vector>

namespace drew {

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  double auroc = 0.0;
  double tpr_at_fpr = 0.0;  // best TPR among operating points with FPR <= max_fpr
  std::vector<RocPoint> curve;  // from (0, 0) to (1, 1)
};

/// Sweeps a "score >= threshold means in-dataset" rule over every distinct
/// score. AUROC is the trapezoid area under the resulting curve, so tied
/// scores across the classes count one half.
RocResult roc_curve(std::span<const double> positives, std::span<const double> negatives,
                    double max_fpr = 0.1);

}  // namespace drew
