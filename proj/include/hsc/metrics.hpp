#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsc {

struct MetricsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Rows index the reference class, columns the predicted class; class labels
// are 1..C everywhere in this interface.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  int classes() const { return classes_; }
  std::int64_t at(int ref, int pred) const;
  void add(int ref, int pred, std::int64_t n = 1);
  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(int ref) const;
  std::int64_t col_sum(int pred) const;
  // Shard-and-merge evaluation: counts add elementwise.
  void merge(const ConfusionMatrix& other);

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

void confusion_update(ConfusionMatrix& cm, const std::vector<int>& reference,
                      const std::vector<int>& predicted);

// pa[c-1] is empty when reference class c never occurs; such classes are
// excluded from the average accuracy.
struct Accuracies {
  double oa = 0.0;
  double aa = 0.0;
  std::vector<std::optional<double>> pa;
};

Accuracies accuracies(const ConfusionMatrix& cm);

// (p_o - p_e) / (1 - p_e); when p_e = 1 returns 1 if p_o = 1 else 0.
double cohens_kappa(const ConfusionMatrix& cm);

struct McnemarResult {
  double z = 0.0;
  bool significant = false;  // strictly z > 1.96
};

McnemarResult mcnemar_z(std::int64_t f12, std::int64_t f21);

// f12 = A correct and B wrong, f21 = B correct and A wrong.
std::pair<std::int64_t, std::int64_t> paired_disagreement(const std::vector<int>& reference,
                                                          const std::vector<int>& pred_a,
                                                          const std::vector<int>& pred_b);

// Line-oriented "key=value" block: oa, aa, kappa, then pa_<c> per defined class.
std::string metrics_text(const ConfusionMatrix& cm);

// CSV table "class,pa" over defined classes.
void save_pa_csv(const ConfusionMatrix& cm, const std::string& path);

}  // namespace hsc
