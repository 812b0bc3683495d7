#include "trustlapse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trustlapse {

namespace {

struct Counts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

Counts count(std::span<const ScoredSample> samples) {
  Counts c;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) fail(ErrorCode::NonFiniteInput, "sample score is not finite");
    (s.positive ? c.pos : c.neg)++;
  }
  return c;
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const ScoredSample> samples) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score > samples[b].score; });
  return order;
}

// (TP, FP) after each distinct threshold, highest threshold first.
std::vector<Counts> threshold_sweep(std::span<const ScoredSample> samples) {
  const auto order = descending(samples);
  std::vector<Counts> out;
  Counts running;
  for (std::size_t i = 0; i < order.size();) {
    const double t = samples[order[i]].score;
    while (i < order.size() && samples[order[i]].score == t) {
      (samples[order[i]].positive ? running.pos : running.neg)++;
      ++i;
    }
    out.push_back(running);
  }
  return out;
}

}  // namespace

double auroc(std::span<const ScoredSample> samples) {
  const auto c = count(samples);
  if (c.pos == 0 || c.neg == 0) fail(ErrorCode::OneClassOnly, "AUROC needs positives and negatives");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (samples[order[k]].positive) rank_sum_pos += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(c.pos);
  const double nn = static_cast<double>(c.neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double aupr(std::span<const ScoredSample> samples) {
  const auto c = count(samples);
  if (c.pos == 0) fail(ErrorCode::NoPositives, "AUPR needs at least one positive");
  double area = 0.0;
  double prev_recall = 0.0;
  for (const auto& tp_fp : threshold_sweep(samples)) {
    const double recall = static_cast<double>(tp_fp.pos) / static_cast<double>(c.pos);
    const double precision =
        static_cast<double>(tp_fp.pos) / static_cast<double>(tp_fp.pos + tp_fp.neg);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

double fpr_at_tpr(std::span<const ScoredSample> samples, double tpr_target) {
  const auto c = count(samples);
  if (c.pos == 0 || c.neg == 0) fail(ErrorCode::OneClassOnly, "FPR@TPR needs positives and negatives");
  double best = 1.0;
  for (const auto& tp_fp : threshold_sweep(samples)) {
    const double tpr = static_cast<double>(tp_fp.pos) / static_cast<double>(c.pos);
    if (tpr + 1e-12 >= tpr_target) {
      best = std::min(best, static_cast<double>(tp_fp.neg) / static_cast<double>(c.neg));
    }
  }
  return best;
}

MetricReport metric_report(std::span<const ScoredSample> samples) {
  const auto c = count(samples);
  MetricReport r;
  r.auroc = auroc(samples);
  r.aupr = aupr(samples);
  r.fpr80 = fpr_at_tpr(samples, 0.8);
  r.n_pos = c.pos;
  r.n_neg = c.neg;
  return r;
}

std::map<std::string, SplitResult> split_report(std::span<const ScoredSample> samples,
                                                const SplitSpec& spec) {
  std::map<std::string, SplitResult> out;
  for (const auto& [name, polarity] : spec) {
    std::vector<ScoredSample> relabelled;
    relabelled.reserve(samples.size());
    for (const auto& s : samples) {
      const auto it = polarity.find(s.group);
      if (it == polarity.end()) {
        fail(ErrorCode::UnmappedGroup, "group '" + s.group + "' not mapped in split '" + name + "'");
      }
      relabelled.push_back({s.score, it->second, s.group});
    }
    SplitResult result;
    try {
      result.report = metric_report(relabelled);
    } catch (const Error& e) {
      result.error = e.code();
      result.message = e.what();
    }
    out.emplace(name, std::move(result));
  }
  return out;
}

}  // namespace trustlapse
