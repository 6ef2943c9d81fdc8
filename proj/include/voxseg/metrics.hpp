// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "voxseg/volio.hpp"

namespace voxseg {

/// Overlap of one class in percent; 100 when the class is absent from both.
double dsc(const LabelVolume& truth, const LabelVolume& pred, int class_id);

/// Symmetric Hausdorff distance of one class in voxel units. 0 when the
/// class is absent from both volumes, +infinity when absent from one.
double hausdorff(const LabelVolume& truth, const LabelVolume& pred, int class_id);

struct ClassMetrics {
  int class_id = 0;
  double dsc = 0.0;
  double hd = 0.0;
  bool missing_in_truth = false;
  bool missing_in_pred = false;
};

struct MetricReport {
  std::vector<ClassMetrics> per_class;
  double mean_dsc = 0.0;
  double std_dsc = 0.0;
  /// Over finite distances only; NaN when none are finite.
  double mean_hd = 0.0;
  double std_hd = 0.0;
  /// Classes whose distance is infinite and left out of the HD statistics.
  int infinite_hd = 0;

  /// Per-class lines `class_id dsc hd`, then
  /// `mean_dsc std_dsc mean_hd std_hd missing_classes`.
  std::string format() const;
};

/// Metrics for classes 1..num_classes-1. Standard deviations are population
/// (divide by count).
MetricReport evaluate(const LabelVolume& truth, const LabelVolume& pred, int num_classes);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
};

/// Two-tailed paired t-test on a - b.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

namespace detail {
/// Hausdorff distance through exact squared distance transforms, the path
/// `hausdorff` takes for large voxel sets. Same contract as `hausdorff`.
double hausdorff_transform(const LabelVolume& truth, const LabelVolume& pred, int class_id);
}  // namespace detail

}  // namespace voxseg
