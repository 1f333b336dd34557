#include "nrfc/metrics.hpp"

#include "nrfc/error.hpp"

namespace nrfc {

void ConfusionMatrix::add(int truth, int predicted) {
  require(truth >= 0 && truth < classes() && predicted >= 0 && predicted < classes(),
          ErrorCode::kInvalidArgument, "label outside confusion matrix");
  ++counts_(truth, predicted);
}

double ConfusionMatrix::f1(int k) const {
  const long tp = counts_(k, k);
  const long denom = counts_.row(k).sum() + counts_.col(k).sum();  // = 2TP + FN + FP
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

Eigen::VectorXd ConfusionMatrix::per_class_f1() const {
  Eigen::VectorXd out(classes());
  for (int k = 0; k < classes(); ++k) out[k] = f1(k);
  return out;
}

double ConfusionMatrix::macro_f1() const {
  double sum = 0.0;
  for (int k = 0; k < classes(); ++k) sum += f1(k);
  return sum / classes();
}

EvalReport make_report(const ConfusionMatrix& cm, std::optional<double> eta) {
  return {cm.per_class_f1(), cm.macro_f1(), cm.counts(), eta};
}

}  // namespace nrfc
