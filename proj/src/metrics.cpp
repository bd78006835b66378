#include "hsc/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace hsc {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw MetricsError("confusion matrix is empty");
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1) throw MetricsError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

std::int64_t ConfusionMatrix::at(int ref, int pred) const {
  if (ref < 1 || ref > classes_ || pred < 1 || pred > classes_)
    throw MetricsError("label (" + std::to_string(ref) + "," + std::to_string(pred) +
                       ") outside 1.." + std::to_string(classes_));
  return counts_[static_cast<std::size_t>(ref - 1) * classes_ + (pred - 1)];
}

void ConfusionMatrix::add(int ref, int pred, std::int64_t n) {
  if (ref < 1 || ref > classes_ || pred < 1 || pred > classes_)
    throw MetricsError("label (" + std::to_string(ref) + "," + std::to_string(pred) +
                       ") outside 1.." + std::to_string(classes_));
  if (n < 0) throw MetricsError("confusion counts must be nonnegative");
  counts_[static_cast<std::size_t>(ref - 1) * classes_ + (pred - 1)] += n;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (std::int64_t c : counts_) t += c;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int k = 0; k < classes_; ++k)
    t += counts_[static_cast<std::size_t>(k) * classes_ + k];
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int ref) const {
  std::int64_t t = 0;
  for (int p = 1; p <= classes_; ++p) t += at(ref, p);
  return t;
}

std::int64_t ConfusionMatrix::col_sum(int pred) const {
  std::int64_t t = 0;
  for (int r = 1; r <= classes_; ++r) t += at(r, pred);
  return t;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_)
    throw MetricsError("cannot merge confusion matrices of " + std::to_string(classes_) +
                       " and " + std::to_string(other.classes_) + " classes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

void confusion_update(ConfusionMatrix& cm, const std::vector<int>& reference,
                      const std::vector<int>& predicted) {
  if (reference.size() != predicted.size())
    throw MetricsError("reference and predicted label lists differ in length: " +
                       std::to_string(reference.size()) + " vs " +
                       std::to_string(predicted.size()));
  for (std::size_t i = 0; i < reference.size(); ++i) cm.add(reference[i], predicted[i]);
}

Accuracies accuracies(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  Accuracies acc;
  acc.oa = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  double pa_sum = 0.0;
  int defined = 0;
  for (int c = 1; c <= cm.classes(); ++c) {
    std::int64_t row = cm.row_sum(c);
    if (row == 0) {
      acc.pa.emplace_back();
      continue;
    }
    double pa = static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
    acc.pa.emplace_back(pa);
    pa_sum += pa;
    ++defined;
  }
  acc.aa = pa_sum / defined;
  return acc;
}

double cohens_kappa(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  double total = static_cast<double>(cm.total());
  double p_o = static_cast<double>(cm.trace()) / total;
  double p_e = 0.0;
  for (int c = 1; c <= cm.classes(); ++c)
    p_e += static_cast<double>(cm.row_sum(c)) * static_cast<double>(cm.col_sum(c)) /
           (total * total);
  if (p_e == 1.0) return p_o == 1.0 ? 1.0 : 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

McnemarResult mcnemar_z(std::int64_t f12, std::int64_t f21) {
  if (f12 < 0 || f21 < 0) throw MetricsError("disagreement counts must be nonnegative");
  if (f12 == 0 && f21 == 0)
    throw MetricsError("mcnemar z undefined: both disagreement counts are zero");
  McnemarResult res;
  res.z = std::fabs(static_cast<double>(f12) - static_cast<double>(f21)) /
          std::sqrt(static_cast<double>(f12 + f21));
  res.significant = res.z > 1.96;
  return res;
}

std::pair<std::int64_t, std::int64_t> paired_disagreement(const std::vector<int>& reference,
                                                          const std::vector<int>& pred_a,
                                                          const std::vector<int>& pred_b) {
  if (reference.size() != pred_a.size() || reference.size() != pred_b.size())
    throw MetricsError("paired disagreement needs equal-length label lists");
  std::int64_t f12 = 0, f21 = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    bool a_ok = pred_a[i] == reference[i], b_ok = pred_b[i] == reference[i];
    f12 += (a_ok && !b_ok);
    f21 += (b_ok && !a_ok);
  }
  return {f12, f21};
}

std::string metrics_text(const ConfusionMatrix& cm) {
  Accuracies acc = accuracies(cm);
  std::string out;
  out += "oa=" + fmt_double(acc.oa) + "\n";
  out += "aa=" + fmt_double(acc.aa) + "\n";
  out += "kappa=" + fmt_double(cohens_kappa(cm)) + "\n";
  for (int c = 1; c <= cm.classes(); ++c)
    if (acc.pa[static_cast<std::size_t>(c - 1)])
      out += "pa_" + std::to_string(c) + "=" +
             fmt_double(*acc.pa[static_cast<std::size_t>(c - 1)]) + "\n";
  return out;
}

void save_pa_csv(const ConfusionMatrix& cm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MetricsError("cannot write " + path);
  Accuracies acc = accuracies(cm);
  out << "class,pa\n";
  for (int c = 1; c <= cm.classes(); ++c)
    if (acc.pa[static_cast<std::size_t>(c - 1)])
      out << c << "," << fmt_double(*acc.pa[static_cast<std::size_t>(c - 1)]) << "\n";
}

}  // namespace hsc
