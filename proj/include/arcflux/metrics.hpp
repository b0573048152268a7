#pragma once

// Binary confusion matrix (normal = negative, arc = positive) and macro metrics.

#include "arcflux/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace arcflux::metrics {

struct ConfusionMatrix {
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tp = 0;

  std::uint64_t total() const { return tn + fp + fn + tp; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw ShapeError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (predictions[i] != 0 && predictions[i] != 1))
      throw std::invalid_argument("confusion: labels and predictions must be 0 or 1");
    if (labels[i] == 1)
      (predictions[i] == 1 ? cm.tp : cm.fn) += 1;
    else
      (predictions[i] == 1 ? cm.fp : cm.tn) += 1;
  }
  return cm;
}

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  bool precision_undefined = false;  // 0/0, reported as 0
  bool recall_undefined = false;
};

struct EvalReport {
  ConfusionMatrix cm;
  double accuracy = 0;
  double precision = 0;  // macro over both classes
  double recall = 0;
  double f1 = 0;         // harmonic mean of macro precision and macro recall
  ClassMetrics normal, arc;
  std::vector<std::string> warnings;
};

namespace detail {

inline double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

inline EvalReport report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("report: empty confusion matrix");
  EvalReport r;
  r.cm = cm;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.arc.precision = detail::ratio(cm.tp, cm.tp + cm.fp, r.arc.precision_undefined);
  r.arc.recall = detail::ratio(cm.tp, cm.tp + cm.fn, r.arc.recall_undefined);
  r.normal.precision = detail::ratio(cm.tn, cm.tn + cm.fn, r.normal.precision_undefined);
  r.normal.recall = detail::ratio(cm.tn, cm.tn + cm.fp, r.normal.recall_undefined);
  if (r.arc.precision_undefined) r.warnings.emplace_back("no arc predictions: arc precision set to 0");
  if (r.arc.recall_undefined) r.warnings.emplace_back("no arc samples: arc recall set to 0");
  if (r.normal.precision_undefined) r.warnings.emplace_back("no normal predictions: normal precision set to 0");
  if (r.normal.recall_undefined) r.warnings.emplace_back("no normal samples: normal recall set to 0");
  r.precision = 0.5 * (r.arc.precision + r.normal.precision);
  r.recall = 0.5 * (r.arc.recall + r.normal.recall);
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["confusion"] = {{"tn", r.cm.tn}, {"fp", r.cm.fp}, {"fn", r.cm.fn}, {"tp", r.cm.tp}};
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["per_class"] = {{"normal", {{"precision", r.normal.precision}, {"recall", r.normal.recall}}},
                    {"arc", {{"precision", r.arc.precision}, {"recall", r.arc.recall}}}};
  j["warnings"] = r.warnings;
  return j;
}

/// Rows are the true class, columns the predicted class.
inline std::string confusion_table(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "                 pred Normal  pred Arc Fault\n";
  os << "true Normal     " << std::string(12 - std::to_string(cm.tn).size(), ' ') << cm.tn
     << std::string(16 - std::to_string(cm.fp).size(), ' ') << cm.fp << '\n';
  os << "true Arc Fault  " << std::string(12 - std::to_string(cm.fn).size(), ' ') << cm.fn
     << std::string(16 - std::to_string(cm.tp).size(), ' ') << cm.tp << '\n';
  return os.str();
}

inline constexpr const char* kTsvHeader = "precision\trecall\tf1\taccuracy\ttn\tfp\tfn\ttp";

inline std::string tsv_row(const EvalReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.precision << '\t' << r.recall << '\t' << r.f1 << '\t' << r.accuracy << '\t' << r.cm.tn << '\t' << r.cm.fp
     << '\t' << r.cm.fn << '\t' << r.cm.tp;
  return os.str();
}

}  // namespace arcflux::metrics
