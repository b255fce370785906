#include "resseg/metrics.hpp"

#include <cstdio>

namespace resseg {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport MetricsReport::from_counts(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  r.dsc = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  r.jsi = ratio(c.tp, c.tp + c.fp + c.fn);
  r.se = ratio(c.tp, c.tp + c.fn);
  r.sp = ratio(c.tn, c.tn + c.fp);
  r.pr = ratio(c.tp, c.tp + c.fp);
  return r;
}

std::string MetricsReport::to_text(const std::string& prefix) const {
  std::string out;
  char line[128];
  const auto score = [&](const char* key, double v) {
    std::snprintf(line, sizeof line, "%s%s=%.6f\n", prefix.c_str(), key, v);
    out += line;
  };
  const auto count = [&](const char* key, std::uint64_t v) {
    std::snprintf(line, sizeof line, "%s%s=%llu\n", prefix.c_str(), key,
                  static_cast<unsigned long long>(v));
    out += line;
  };
  score("dsc", dsc);
  score("jsi", jsi);
  score("se", se);
  score("sp", sp);
  score("pr", pr);
  count("tp", counts.tp);
  count("fp", counts.fp);
  count("tn", counts.tn);
  count("fn", counts.fn);
  return out;
}

template <typename Scalar>
ConfusionCounts count_confusion(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("compute_metrics: prediction " + pred.shape().str() + " vs ground truth " +
                     gt.shape().str());
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Scalar p = pred[i];
    const Scalar g = gt[i];
    if ((p != Scalar(0) && p != Scalar(1)) || (g != Scalar(0) && g != Scalar(1))) {
      throw DataError("compute_metrics: non-binary value at index " + std::to_string(i));
    }
    const bool pp = p == Scalar(1);
    const bool gg = g == Scalar(1);
    if (pp && gg) ++c.tp;
    else if (pp) ++c.fp;
    else if (gg) ++c.fn;
    else ++c.tn;
  }
  return c;
}

template ConfusionCounts count_confusion(const Tensor<float>&, const Tensor<float>&);
template ConfusionCounts count_confusion(const Tensor<double>&, const Tensor<double>&);

}  // namespace resseg
