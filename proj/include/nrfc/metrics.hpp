#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

namespace nrfc {

/// Confusion matrix, rows = truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes) : counts_(Eigen::MatrixXi::Zero(classes, classes)) {}

  void add(int truth, int predicted);
  int classes() const { return static_cast<int>(counts_.rows()); }
  const Eigen::MatrixXi& counts() const { return counts_; }
  long total() const { return counts_.sum(); }

  /// 2 TP / (2 TP + FP + FN); 0 for a class with no true and no predicted items.
  double f1(int k) const;
  Eigen::VectorXd per_class_f1() const;
  /// Unweighted mean of per-class F1 over all classes.
  double macro_f1() const;

 private:
  Eigen::MatrixXi counts_;
};

struct EvalReport {
  Eigen::VectorXd per_class_f1;
  double macro_f1 = 0.0;
  Eigen::MatrixXi confusion;
  std::optional<double> eta;
};

EvalReport make_report(const ConfusionMatrix& cm, std::optional<double> eta);

}  // namespace nrfc
