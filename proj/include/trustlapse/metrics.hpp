#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trustlapse/error.hpp"

namespace trustlapse {

struct ScoredSample {
  double score = 0.0;     // higher = more mistrust
  bool positive = false;  // ground truth: should be flagged
  std::string group;
};

struct MetricReport {
  double auroc = 0.0;
  double aupr = 0.0;
  double fpr80 = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

// P(score_pos > score_neg) + 0.5 P(tie), via midranks. Throws OneClassOnly.
double auroc(std::span<const ScoredSample> samples);

// Step-wise area under precision-recall with ties grouped per threshold.
// Throws NoPositives.
double aupr(std::span<const ScoredSample> samples);

// Minimum FPR over thresholds (score >= t) whose TPR >= tpr_target.
double fpr_at_tpr(std::span<const ScoredSample> samples, double tpr_target = 0.8);

MetricReport metric_report(std::span<const ScoredSample> samples);

// split name -> group -> positive?
using SplitSpec = std::map<std::string, std::map<std::string, bool>>;

struct SplitResult {
  std::optional<MetricReport> report;
  std::optional<ErrorCode> error;
  std::string message;
};

// One report per split; a split whose relabelled samples lack a class
// carries the error instead. Throws UnmappedGroup if any sample's group is
// absent from a split.
std::map<std::string, SplitResult> split_report(std::span<const ScoredSample> samples,
                                                const SplitSpec& spec);

}  // namespace trustlapse
