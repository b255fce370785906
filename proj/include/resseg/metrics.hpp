#pragma once

#include <cstdint>
#include <string>

#include "resseg/tensor.hpp"

namespace resseg {

/// Pixel-level confusion counts for a binary mask pair.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// The five overlap scores. A score whose denominator counts are all zero is
/// defined as 1 (e.g. sensitivity on a mask pair with no positives).
struct MetricsReport {
  double dsc = 0;
  double jsi = 0;
  double se = 0;
  double sp = 0;
  double pr = 0;
  ConfusionCounts counts;

  static MetricsReport from_counts(const ConfusionCounts& c);

  /// `key=value` lines, six decimals for scores; `prefix` is prepended to
  /// every key.
  std::string to_text(const std::string& prefix = "") const;
};

/// Throws DataError if either mask holds a value other than 0 or 1.
template <typename Scalar>
ConfusionCounts count_confusion(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt);

template <typename Scalar>
MetricsReport compute_metrics(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt) {
  return MetricsReport::from_counts(count_confusion(pred, gt));
}

}  // namespace resseg
